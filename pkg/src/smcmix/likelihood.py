"""Log-likelihood evaluation for components, subjects and mixtures.

All computation stays in natural log; probability-space products are never
formed.  A structural zero (a trajectory hitting a zero initial or
transition probability) yields ``-inf`` rather than an error, so the
E-step can assign zero responsibility naturally.

:class:`PanelStats` caches the sufficient statistics of a panel (first-state
counts, transition counts, per-state sojourn sums) so that subject
log-likelihoods under any parameter set reduce to a few small matrix
products.  The per-trajectory operations below are the reference
implementations; the vectorized path must and does agree with them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .core import ComponentParams, MixtureModel, Panel, Trajectory
from .sojourn import gamma_log_density


@dataclass(frozen=True, eq=False)
class PanelStats:
    """Sufficient statistics of a panel, aggregated per subject over
    replications.

    ``soj_*`` arrays cover only states that contribute a sojourn factor
    (the absorbing state, if any, is excluded); ``total_states`` counts
    every visited state of every trajectory, absorbing included, which is
    the normalizer of the shape penalty.
    """

    first_counts: np.ndarray  # (n, D) first-state indicator counts
    trans_counts: np.ndarray  # (n, D, D) transition counts
    soj_counts: np.ndarray  # (n, D) number of sojourns observed per state
    soj_sum: np.ndarray  # (n, D) sum of durations per state
    soj_logsum: np.ndarray  # (n, D) sum of log durations per state
    total_states: int
    n_replications: int
    absorbing: int | None

    @classmethod
    def from_panel(cls, panel: Panel) -> "PanelStats":
        n, d = panel.n_subjects, panel.space.n_states
        absorbing = panel.space.absorbing
        first = np.zeros((n, d))
        trans = np.zeros((n, d, d))
        counts = np.zeros((n, d))
        sums = np.zeros((n, d))
        logsums = np.zeros((n, d))
        total = 0
        for i, reps in enumerate(panel.subjects):
            for traj in reps:
                states = traj.states
                total += len(states)
                first[i, states[0]] += 1.0
                np.add.at(trans[i], (states[:-1], states[1:]), 1.0)
                soj_states = states
                soj_values = traj.sojourns
                if absorbing is not None and states[-1] == absorbing:
                    soj_states = states[:-1]
                    soj_values = soj_values[:-1]
                np.add.at(counts[i], soj_states, 1.0)
                np.add.at(sums[i], soj_states, soj_values)
                np.add.at(logsums[i], soj_states, np.log(soj_values))
        return cls(
            first_counts=first,
            trans_counts=trans,
            soj_counts=counts,
            soj_sum=sums,
            soj_logsum=logsums,
            total_states=total,
            n_replications=panel.n_replications,
            absorbing=absorbing,
        )

    @property
    def n_subjects(self) -> int:
        return self.first_counts.shape[0]

    @property
    def n_states(self) -> int:
        return self.first_counts.shape[1]


def component_loglik(traj: Trajectory, comp: ComponentParams) -> float:
    """Log-likelihood of one trajectory under one renewal process.

    Returns ``-inf`` when the trajectory crosses a structural zero of the
    initial or transition probabilities.
    """
    states = traj.states
    if int(states.max()) >= comp.n_states:
        raise ValueError("trajectory references a state outside the component")
    a0 = comp.alpha[states[0]]
    if a0 == 0.0:
        return -np.inf
    total = float(np.log(a0))
    for k in range(1, len(states)):
        p = comp.trans[states[k - 1], states[k]]
        if p == 0.0:
            return -np.inf
        total += float(np.log(p))
    for k in range(len(states)):
        j = int(states[k])
        if comp.absorbing is not None and j == comp.absorbing:
            continue
        total += gamma_log_density(float(traj.sojourns[k]), comp.sojourn[j])
    return total


def subject_loglik(trajs, comp: ComponentParams) -> float:
    """Joint log-likelihood of a subject's replications (independent)."""
    return float(sum(component_loglik(t, comp) for t in trajs))


def _component_loglik_vector(stats: PanelStats, comp: ComponentParams) -> np.ndarray:
    """Per-subject log-likelihood under one component, length n."""
    alpha, trans = comp.alpha, comp.trans
    shape, rate = comp.sojourn_arrays()
    d = stats.n_states
    live = np.ones(d, dtype=bool)
    if stats.absorbing is not None:
        live[stats.absorbing] = False
        shape = np.where(live, shape, 1.0)
        rate = np.where(live, rate, 1.0)

    log_alpha = np.where(alpha > 0.0, np.log(np.where(alpha > 0.0, alpha, 1.0)), 0.0)
    log_trans = np.where(trans > 0.0, np.log(np.where(trans > 0.0, trans, 1.0)), 0.0)
    tcounts = stats.trans_counts.reshape(stats.n_subjects, d * d)

    ll = stats.first_counts @ log_alpha
    ll += tcounts @ log_trans.reshape(d * d)
    # Gamma terms via per-state sufficient statistics.
    ll += stats.soj_logsum @ (shape - 1.0)
    ll += stats.soj_counts @ (shape * np.log(rate) - gammaln(shape))
    ll -= stats.soj_sum @ rate

    impossible = (stats.first_counts @ (alpha == 0.0)) > 0
    impossible |= (tcounts @ (trans == 0.0).reshape(d * d)) > 0
    ll[impossible] = -np.inf
    return ll


def subject_loglik_matrix(stats: PanelStats, model: MixtureModel) -> np.ndarray:
    """n x G matrix of per-subject log-likelihoods under each component."""
    return np.column_stack(
        [_component_loglik_vector(stats, comp) for comp in model.components]
    )


def mixture_loglik(panel: Panel, model: MixtureModel, stats: PanelStats | None = None) -> float:
    """Observed-data log-likelihood of the panel under the mixture.

    Computed with a log-sum-exp reduction per subject; ``-inf`` only when
    some subject is impossible under every component.
    """
    if stats is None:
        stats = PanelStats.from_panel(panel)
    ll = subject_loglik_matrix(stats, model)
    with np.errstate(invalid="ignore"):
        per_subject = logsumexp(ll + np.log(model.weights)[None, :], axis=1)
    return float(per_subject.sum())


def penalty_weight(panel: Panel, stats: PanelStats | None = None) -> float:
    """Penalty normalizer: one over the square root of the total number of
    visited states across all trajectories."""
    if stats is None:
        stats = PanelStats.from_panel(panel)
    return 1.0 / np.sqrt(stats.total_states)


def penalty_term(model: MixtureModel, c: float) -> float:
    """Shape penalty ``-c * sum over components and states of (a + ln a)``."""
    total = 0.0
    for comp in model.components:
        for j, p in enumerate(comp.sojourn):
            if p is None:
                continue
            total += p.shape + np.log(p.shape)
    return -c * total


def penalized_objective(
    panel: Panel, model: MixtureModel, stats: PanelStats | None = None
) -> float:
    """Mixture log-likelihood plus the shape penalty (the EM objective)."""
    if stats is None:
        stats = PanelStats.from_panel(panel)
    c = penalty_weight(panel, stats)
    return mixture_loglik(panel, model, stats) + penalty_term(model, c)
