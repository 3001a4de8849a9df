"""Penalized EM driver for mixtures of semi-Markov chains.

One iteration alternates the responsibility update (E-step, computed in
log space, rounded to a configurable quantum and renormalized) with three
closed-form or one-dimensional M-step updates: mixture weights, initial
and transition probabilities, and per-state gamma sojourn parameters under
the shape penalty.  Clustering is read off the final responsibilities with
the maximum a posteriori rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import (
    ComponentParams,
    MixtureModel,
    Panel,
    PosteriorMatrix,
    renormalize_rows,
    renormalize_vector,
)
from .errors import (
    AllComponentsImpossible,
    DegenerateSample,
    EmptyComponent,
    NonConvergence,
    NumericalError,
)
from .likelihood import (
    PanelStats,
    mixture_loglik,
    penalty_term,
    penalty_weight,
    subject_loglik_matrix,
)
from .sojourn import _pmle_from_stats

# Ascent slack per EM step; covers responsibility quantization.
ASCENT_SLACK = 1e-7

# Consecutive iterations a component may hold less than one subject of
# responsibility before the fit aborts.
_EMPTY_STREAK_LIMIT = 3


@dataclass(frozen=True)
class EmConfig:
    """Tuning knobs of the EM driver.

    ``max_iter`` defaults to 100; complex fits (all transitions possible)
    may need 400.  ``z_round`` quantizes responsibilities so that near-zero
    weights drop out of the gamma fits; ``min_obs_mass`` is the number of
    weight-carrying observations a state needs before it gets its own
    gamma fit instead of the component-pooled one.
    """

    max_iter: int = 100
    rel_tol: float = 1e-8
    z_round: float = 1e-4
    min_obs_mass: int = 7
    penalized: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (0.0 < self.rel_tol < 1.0):
            raise ValueError("rel_tol must lie in (0, 1)")
        if not (self.z_round == 0.0 or 0.0 < self.z_round <= 0.1):
            raise ValueError("z_round must be 0 or in (0, 0.1]")
        if self.min_obs_mass < 0:
            raise ValueError("min_obs_mass must be nonnegative")


@dataclass(frozen=True, eq=False)
class FitReport:
    """Outcome of one EM run.

    ``objective_trace[0]`` is the objective of the starting model and each
    further entry follows one EM iteration.  The trace is non-decreasing up
    to a 1e-7 slack per step whenever the two small-sample safeguards
    (responsibility rounding and the pooled gamma fallback) stay inactive;
    when a safeguard does force a dip it is recorded in ``warnings``,
    never silently.
    """

    model: MixtureModel
    posteriors: PosteriorMatrix
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool
    warnings: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        trace = tuple(float(v) for v in self.objective_trace)
        object.__setattr__(self, "objective_trace", trace)
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def monotone(self) -> bool:
        """True when the trace never dips below the per-step slack."""
        deltas = np.diff(np.asarray(self.objective_trace))
        return bool(deltas.size == 0 or float(deltas.min()) >= -ASCENT_SLACK)


def _round_responsibilities(z: np.ndarray, z_round: float) -> np.ndarray:
    if z_round == 0.0:
        return z
    z = np.round(z / z_round) * z_round
    sums = z.sum(axis=1)
    if np.any(sums <= 0.0):
        raise NumericalError(
            "a responsibility row vanished after rounding; z_round is too "
            "coarse for this many components"
        )
    return z / sums[:, None]


def _e_step_matrix(ll: np.ndarray, weights: np.ndarray, z_round: float) -> np.ndarray:
    scores = ll + np.log(weights)[None, :]
    with np.errstate(invalid="ignore"):
        norms = logsumexp(scores, axis=1)
    dead = ~np.isfinite(norms)
    if np.any(dead):
        raise AllComponentsImpossible(int(np.flatnonzero(dead)[0]))
    with np.errstate(invalid="ignore"):
        z = np.exp(scores - norms[:, None])
    return _round_responsibilities(z, z_round)


def e_step(panel: Panel, model: MixtureModel, z_round: float = 1e-4) -> PosteriorMatrix:
    """Posterior component responsibilities of every subject (Bayes rule in
    log space), rounded to multiples of ``z_round`` and renormalized."""
    stats = PanelStats.from_panel(panel)
    ll = subject_loglik_matrix(stats, model)
    return PosteriorMatrix(_e_step_matrix(ll, model.weights, z_round))


def m_step_weights(z: PosteriorMatrix) -> np.ndarray:
    """Updated mixture weights: column means of the responsibilities."""
    return z.z.sum(axis=0) / z.n_subjects


def _uniform_off_diagonal(d: int, row: int) -> np.ndarray:
    out = np.ones(d)
    out[row] = 0.0
    return out / out.sum()


def _m_step_alpha_trans_stats(
    stats: PanelStats, z: np.ndarray, labels=None
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    n, d = stats.first_counts.shape
    n_comp = z.shape[1]
    warnings: list[str] = []
    ng = z.sum(axis=0)
    alpha = np.zeros((n_comp, d))
    trans = np.zeros((n_comp, d, d))
    flat_counts = stats.trans_counts.reshape(n, d * d)
    for g in range(n_comp):
        if ng[g] <= 0.0:
            warnings.append(f"component {g}: no responsibility mass; uniform fallback")
            live = np.ones(d)
            if stats.absorbing is not None:
                live[stats.absorbing] = 0.0
            alpha[g] = live / live.sum()
        else:
            alpha[g] = (z[:, g] @ stats.first_counts) / (stats.n_replications * ng[g])
            alpha[g] = renormalize_vector(alpha[g])
        rows = (z[:, g] @ flat_counts).reshape(d, d)
        for h in range(d):
            if stats.absorbing is not None and h == stats.absorbing:
                trans[g, h] = 0.0
                continue
            total = rows[h].sum()
            if total <= 0.0:
                name = labels[h] if labels is not None else str(h)
                warnings.append(
                    f"component {g}: state {name} never left; "
                    "transition row set to uniform"
                )
                trans[g, h] = _uniform_off_diagonal(d, h)
            else:
                trans[g, h] = rows[h] / total
                trans[g, h, h] = 0.0
                trans[g, h] = trans[g, h] / trans[g, h].sum()
    return alpha, trans, warnings


def m_step_alpha_trans(panel: Panel, z: PosteriorMatrix):
    """Responsibility-weighted initial-state frequencies and transition
    rates per component.

    Returns ``(alpha, trans, warnings)`` with shapes (G, D) and (G, D, D).
    States never left under a component get a uniform row (recorded as a
    warning) so the next E-step cannot hit an artificial structural zero.
    """
    stats = PanelStats.from_panel(panel)
    return _m_step_alpha_trans_stats(stats, z.z, labels=panel.space.labels)


def _m_step_sojourn_stats(
    stats: PanelStats,
    z: np.ndarray,
    penalty_c: float,
    min_obs_mass: int,
    z_round: float,
    labels=None,
    bracket_fallback: bool = False,
) -> tuple[list[list], list[str]]:
    n_comp = z.shape[1]
    d = stats.n_states
    warnings: list[str] = []
    sw = z.T @ stats.soj_counts
    slog = z.T @ stats.soj_logsum
    sx = z.T @ stats.soj_sum
    carrying = (z > z_round).astype(np.float64)
    n_obs = carrying.T @ stats.soj_counts

    out: list[list] = []
    for g in range(n_comp):
        pooled = None

        def pooled_fit():
            nonlocal pooled
            if pooled is None:
                try:
                    pooled = _pmle_from_stats(
                        float(sw[g].sum()),
                        float(slog[g].sum()),
                        float(sx[g].sum()),
                        penalty_c,
                    )
                except (DegenerateSample, NonConvergence) as exc:
                    raise type(exc)(f"component {g} pooled sojourn fit: {exc}") from exc
            return pooled

        row: list = []
        for j in range(d):
            if stats.absorbing is not None and j == stats.absorbing:
                row.append(None)
                continue
            name = labels[j] if labels is not None else str(j)
            if n_obs[g, j] > min_obs_mass:
                try:
                    row.append(
                        _pmle_from_stats(
                            float(sw[g, j]), float(slog[g, j]), float(sx[g, j]), penalty_c
                        )
                    )
                    continue
                except DegenerateSample:
                    warnings.append(
                        f"component {g}: degenerate sojourn sample in state {name}; "
                        "pooled fallback"
                    )
                except NonConvergence as exc:
                    if not bracket_fallback:
                        raise NonConvergence(
                            f"component {g}, state {name}: {exc}"
                        ) from exc
                    warnings.append(
                        f"component {g}: sojourn fit for state {name} left the "
                        "shape bracket; pooled fallback"
                    )
            else:
                warnings.append(
                    f"component {g}: state {name} has {int(n_obs[g, j])} "
                    "weight-carrying observations; pooled fallback"
                )
            row.append(pooled_fit())
        out.append(row)
    return out, warnings


def m_step_sojourn(
    panel: Panel,
    z: PosteriorMatrix,
    penalized: bool = True,
    min_obs_mass: int = 7,
    z_round: float = 1e-4,
):
    """Per-component, per-state penalized gamma fits of the sojourn times.

    A state whose number of weight-carrying observations does not exceed
    ``min_obs_mass`` inherits the fit pooled over all of the component's
    observations regardless of state.  Returns ``(params, warnings)`` where
    ``params[g][j]`` is a :class:`GammaParams` (``None`` at the absorbing
    index).
    """
    stats = PanelStats.from_panel(panel)
    c = penalty_weight(panel, stats) if penalized else 0.0
    return _m_step_sojourn_stats(
        stats, z.z, c, min_obs_mass, z_round, labels=panel.space.labels
    )


def _assemble_model(space, pi, alpha, trans, sojourn) -> MixtureModel:
    comps = []
    for g in range(len(pi)):
        comps.append(
            ComponentParams(
                alpha=renormalize_vector(alpha[g]),
                trans=renormalize_rows(trans[g], space.absorbing),
                sojourn=tuple(sojourn[g]),
                absorbing=space.absorbing,
            )
        )
    return MixtureModel(space=space, weights=renormalize_vector(pi), components=tuple(comps))


def fit(panel: Panel, n_components: int, init: MixtureModel, cfg: EmConfig) -> FitReport:
    """Run the penalized EM from ``init`` until the relative objective
    change falls below ``cfg.rel_tol`` or ``cfg.max_iter`` is reached.

    The reported objective is the penalized log-likelihood when
    ``cfg.penalized`` and the plain mixture log-likelihood otherwise; its
    trace includes the starting model.  A per-state gamma fit whose shape
    leaves the search bracket is replaced by the component-pooled fit with
    a warning (the same fallback used for starved states), so only a
    pooled-fit failure propagates as :class:`NonConvergence`.  Aborts with
    :class:`EmptyComponent` (carrying the partial report) when a component
    keeps less than one subject of responsibility for three consecutive
    iterations, or loses all mass outright.
    """
    if init.n_components != n_components:
        raise ValueError("init does not have the requested number of components")
    if init.space != panel.space:
        raise ValueError("init is defined on a different state space")

    stats = PanelStats.from_panel(panel)
    c = penalty_weight(panel, stats) if cfg.penalized else 0.0

    def objective(m: MixtureModel) -> float:
        value = mixture_loglik(panel, m, stats)
        if cfg.penalized:
            value += penalty_term(m, c)
        return value

    model = init
    trace = [objective(init)]
    warnings: dict[str, None] = {}
    empty_streak = np.zeros(n_components, dtype=int)
    converged = False
    iterations = 0

    def partial_report(z_arr) -> FitReport:
        # the aborting iteration never completed its M-step
        return FitReport(
            model=model,
            posteriors=PosteriorMatrix(z_arr),
            objective_trace=tuple(trace),
            iterations=iterations - 1,
            converged=False,
            warnings=tuple(warnings),
        )

    for iterations in range(1, cfg.max_iter + 1):
        ll = subject_loglik_matrix(stats, model)
        z = _e_step_matrix(ll, model.weights, cfg.z_round)
        ng = z.sum(axis=0)

        empty_streak = np.where(ng < 1.0, empty_streak + 1, 0)
        starved = int(np.argmin(ng))
        if np.any(ng == 0.0):
            warnings[f"aborted: component {starved} has no subjects"] = None
            raise EmptyComponent(starved, report=partial_report(z))
        if np.any(empty_streak >= _EMPTY_STREAK_LIMIT):
            starved = int(np.argmax(empty_streak))
            warnings[f"aborted: component {starved} starved for "
                     f"{_EMPTY_STREAK_LIMIT} iterations"] = None
            raise EmptyComponent(starved, report=partial_report(z))

        pi = ng / z.shape[0]
        alpha, trans, w1 = _m_step_alpha_trans_stats(stats, z, labels=panel.space.labels)
        sojourn, w2 = _m_step_sojourn_stats(
            stats, z, c, cfg.min_obs_mass, cfg.z_round, labels=panel.space.labels,
            bracket_fallback=True,
        )
        for msg in (*w1, *w2):
            warnings[msg] = None

        model = _assemble_model(panel.space, pi, alpha, trans, sojourn)
        value = objective(model)
        trace.append(value)
        if value < trace[-2] - ASCENT_SLACK:
            warnings[
                f"objective decreased by {trace[-2] - value:.3e} at iteration "
                f"{iterations} (small-sample safeguard side effect)"
            ] = None
        if abs(value - trace[-2]) / (abs(value) + 1.0) < cfg.rel_tol:
            converged = True
            break

    final_ll = subject_loglik_matrix(stats, model)
    final_z = _e_step_matrix(final_ll, model.weights, cfg.z_round)
    return FitReport(
        model=model,
        posteriors=PosteriorMatrix(final_z),
        objective_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
        warnings=tuple(warnings),
    )


def map_cluster(z: PosteriorMatrix) -> np.ndarray:
    """Maximum a posteriori component per subject (ties go to the lowest
    component index)."""
    return np.argmax(z.z, axis=1)
