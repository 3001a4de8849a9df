import numpy as np
import pytest

from smcmix import (
    ComponentParams,
    GammaParams,
    MixtureModel,
    Panel,
    StateSpace,
    Trajectory,
)


@pytest.fixture
def two_state_space():
    return StateSpace(labels=("A", "B"))


@pytest.fixture
def absorbing_space():
    return StateSpace(labels=("A", "B", "STOP"), absorbing=2)


def make_component(alpha, trans, gammas, absorbing=None):
    sojourn = tuple(
        None if g is None else GammaParams(shape=g[0], rate=g[1]) for g in gammas
    )
    return ComponentParams(
        alpha=np.asarray(alpha, dtype=float),
        trans=np.asarray(trans, dtype=float),
        sojourn=sojourn,
        absorbing=absorbing,
    )


@pytest.fixture
def simple_component(two_state_space):
    return make_component(
        alpha=[0.6, 0.4],
        trans=[[0.0, 1.0], [1.0, 0.0]],
        gammas=[(2.0, 1.0), (1.5, 0.5)],
    )


@pytest.fixture
def simple_model(two_state_space, simple_component):
    other = make_component(
        alpha=[0.2, 0.8],
        trans=[[0.0, 1.0], [1.0, 0.0]],
        gammas=[(1.0, 0.25), (3.0, 2.0)],
    )
    return MixtureModel(
        space=two_state_space,
        weights=np.array([0.5, 0.5]),
        components=(simple_component, other),
    )


def traj(states, sojourns):
    return Trajectory(states=np.asarray(states), sojourns=np.asarray(sojourns, dtype=float))


@pytest.fixture
def tiny_panel(two_state_space):
    """Three subjects, two replications, two states; durations chosen dyadic."""
    subjects = (
        (traj([0, 1, 0], [1.0, 2.0, 0.5]), traj([1, 0], [1.5, 2.5])),
        (traj([0, 1], [3.0, 0.25]), traj([0, 1, 0], [2.0, 1.0, 1.0])),
        (traj([1, 0, 1], [0.5, 0.5, 4.0]), traj([0, 1], [1.25, 2.0])),
    )
    return Panel(space=two_state_space, subjects=subjects)
