"""Starting points for the EM: k-means on mean sojourn profiles, then
method-of-moments estimates within each cluster.

Subjects separate well on their mean sojourn time per state, so a cheap
k-means on those D-dimensional profiles gives hard labels from which all
model parameters are estimated by empirical frequencies and moments.  The
k-means here is Lloyd's algorithm with k-means++ seeding and restarts; any
local minimizer of the within-cluster squared error serves as an
initializer.
"""

from __future__ import annotations

import numpy as np

from .core import (
    ComponentParams,
    GammaParams,
    MixtureModel,
    Panel,
    renormalize_rows,
    renormalize_vector,
)
from .errors import DegenerateSample
from .likelihood import PanelStats
from .sojourn import WeightedSample, fit_gamma_mom

# Mass added to every structurally-allowed probability cell of the initial
# model so no subject starts at -inf under any component.
_SMOOTHING = 1e-6


def mean_sojourn_features(panel: Panel) -> np.ndarray:
    """n x D matrix of each subject's mean sojourn time per state, pooled
    over replications; states the subject never visited give 0."""
    stats = PanelStats.from_panel(panel)
    with np.errstate(invalid="ignore"):
        feats = np.where(stats.soj_counts > 0, stats.soj_sum / stats.soj_counts, 0.0)
    return feats


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator, sse_trace=None):
    n = points.shape[0]
    # k-means++ seeding
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[int(rng.integers(n))]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[c] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[c]) ** 2, axis=1))

    labels = np.full(n, -1)
    for _ in range(300):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        # Re-seed empty clusters from the point farthest from its center.
        for c in range(k):
            if not np.any(new_labels == c):
                far = int(np.argmax(d2[np.arange(n), new_labels]))
                centers[c] = points[far]
                new_labels[far] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        if sse_trace is not None:
            sse_trace.append(float(d2[np.arange(n), labels].sum()))
        for c in range(k):
            centers[c] = points[labels == c].mean(axis=0)
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    sse = float(d2[np.arange(n), labels].sum())
    if sse_trace is not None:
        sse_trace.append(sse)
    return labels, sse


def kmeans(points: np.ndarray, k: int, seed: int, restarts: int = 10) -> np.ndarray:
    """Cluster rows of ``points`` into ``k`` non-empty groups, minimizing
    within-cluster squared Euclidean distance over the restarts performed.

    Deterministic given ``seed``; the winner among restarts is the lowest
    (SSE, restart index) pair.
    """
    points = np.asarray(points, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be at least 1")
    n = points.shape[0]
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")
    best = None
    for ss in np.random.SeedSequence(seed).spawn(restarts):
        labels, sse = _kmeans_once(points, k, np.random.Generator(np.random.PCG64(ss)))
        if best is None or sse < best[0]:
            best = (sse, labels)
    return best[1]


def _sojourns_by_state(panel: Panel, members: np.ndarray) -> list[np.ndarray]:
    """All sojourn durations observed in each state across a set of
    subjects (absorbing placeholders excluded)."""
    d = panel.space.n_states
    absorbing = panel.space.absorbing
    per_state: list[list[float]] = [[] for _ in range(d)]
    for i in members:
        for traj in panel.subjects[int(i)]:
            states, sojourns = traj.states, traj.sojourns
            if absorbing is not None and states[-1] == absorbing:
                states, sojourns = states[:-1], sojourns[:-1]
            for j, x in zip(states, sojourns):
                per_state[int(j)].append(float(x))
    return [np.asarray(v) for v in per_state]


def _cluster_gammas(per_state: list[np.ndarray], absorbing, min_obs_mass: int):
    pooled = None

    def pooled_fit() -> GammaParams:
        nonlocal pooled
        if pooled is None:
            values = np.concatenate([v for v in per_state if v.size])
            try:
                pooled = fit_gamma_mom(WeightedSample(values, np.ones_like(values)))
            except DegenerateSample:
                # No spread at all: exponential with the observed mean.
                pooled = GammaParams(shape=1.0, rate=1.0 / float(values.mean()))
        return pooled

    out = []
    for j, values in enumerate(per_state):
        if absorbing is not None and j == absorbing:
            out.append(None)
            continue
        if values.size > min_obs_mass:
            try:
                out.append(fit_gamma_mom(WeightedSample(values, np.ones_like(values))))
                continue
            except DegenerateSample:
                pass
        out.append(pooled_fit())
    return out


def initial_model(
    panel: Panel,
    n_components: int,
    seed: int,
    restarts: int = 10,
    min_obs_mass: int = 7,
) -> MixtureModel:
    """Build an EM starting model by clustering subjects on their mean
    sojourn profiles and estimating each cluster empirically.

    Initial and transition probabilities get a small additive smoothing on
    every structurally-allowed cell so the starting log-likelihood is
    finite on the training panel; the EM may drive entries back to zero.
    """
    stats = PanelStats.from_panel(panel)
    d = panel.space.n_states
    absorbing = panel.space.absorbing
    labels = kmeans(mean_sojourn_features(panel), n_components, seed, restarts)

    weights = np.zeros(n_components)
    comps = []
    for g in range(n_components):
        members = np.flatnonzero(labels == g)
        weights[g] = members.size / panel.n_subjects

        allowed = np.ones(d)
        if absorbing is not None:
            allowed[absorbing] = 0.0
        alpha = stats.first_counts[members].sum(axis=0) + _SMOOTHING * allowed
        if absorbing is not None:
            alpha[absorbing] = 0.0
        alpha = renormalize_vector(alpha)

        trans = stats.trans_counts[members].sum(axis=0) + _SMOOTHING
        np.fill_diagonal(trans, 0.0)
        trans = renormalize_rows(trans, absorbing)

        per_state = _sojourns_by_state(panel, members)
        gammas = _cluster_gammas(per_state, absorbing, min_obs_mass)
        comps.append(
            ComponentParams(alpha=alpha, trans=trans, sojourn=tuple(gammas), absorbing=absorbing)
        )
    return MixtureModel(space=panel.space, weights=weights, components=tuple(comps))
