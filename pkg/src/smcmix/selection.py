"""Information criteria and selection of the number of mixture components.

The criteria are computed on the plain (unpenalized) mixture
log-likelihood of the penalized-EM fit; folding the shape penalty into a
complexity-penalizing criterion would count complexity twice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import Panel
from .em import EmConfig, EmptyComponent, FitReport, fit
from .initialization import initial_model
from .likelihood import PanelStats, mixture_loglik

CRITERIA = ("bic", "aic", "aicc")


def param_count(n_components: int, n_states: int, d: int = 2, has_absorbing: bool = False) -> int:
    """Number of free parameters of a mixture of Markov renewal processes.

    ``n_states`` counts every state, the absorbing one included.  Each
    sojourn law takes ``d`` parameters (2 for the gamma family).  With an
    absorbing state, the first state can never be absorbing, the absorbing
    row of the transition matrix is fixed, and the absorbing state carries
    no sojourn law.
    """
    g, D = n_components, n_states
    if g < 1 or D < 2 or d < 1:
        raise ValueError("need n_components >= 1, n_states >= 2, d >= 1")
    if has_absorbing:
        return g - 1 + g * ((D - 2) + (D - 1) * (D - 2) + (D - 1) * d)
    return g - 1 + g * ((D - 1) + D * (D - 2) + D * d)


def bic(loglik: float, q: int, n_obs: int) -> float:
    """Bayesian information criterion, ``q ln(n_obs) - 2 loglik`` (lower is
    better)."""
    return q * math.log(n_obs) - 2.0 * loglik


def aic(loglik: float, q: int) -> float:
    return 2.0 * q - 2.0 * loglik


def aicc(loglik: float, q: int, n_obs: int) -> float:
    """Small-sample corrected AIC; only defined when ``n_obs > q + 1``."""
    if n_obs <= q + 1:
        raise ValueError(
            f"aicc needs more observations than parameters (n_obs={n_obs}, q={q})"
        )
    return aic(loglik, q) + 2.0 * q * (q + 1.0) / (n_obs - q - 1.0)


@dataclass(frozen=True)
class SweepRow:
    n_components: int
    loglik: float
    q: int
    bic: float
    aic: float
    aicc: Optional[float]
    converged: bool
    aborted: bool = False


@dataclass(frozen=True, eq=False)
class GSweepResult:
    rows: tuple[SweepRow, ...]
    chosen: dict  # criterion name -> chosen component count
    reports: dict  # component count -> FitReport
    warnings: tuple[str, ...]

    def best_report(self, criterion: str = "bic") -> FitReport:
        return self.reports[self.chosen[criterion]]


def select_g(
    panel: Panel,
    g_range: Sequence[int],
    cfg: EmConfig,
    sample_size: Optional[int] = None,
    restarts: int = 10,
) -> GSweepResult:
    """Fit every component count in ``g_range`` and rank them by BIC, AIC
    and AICc.

    ``sample_size`` is the observation count entering the criteria; it
    defaults to subjects times replications.  What the right effective
    sample size is for temporal data is debatable, hence the override.
    Fits aborted by a starved component are kept with their last valid
    model and flagged.  Ties pick the smallest component count.
    """
    g_values = sorted(set(int(g) for g in g_range))
    if not g_values or g_values[0] < 1:
        raise ValueError("g_range must contain positive component counts")
    n_obs = sample_size if sample_size is not None else panel.n_subjects * panel.n_replications
    stats = PanelStats.from_panel(panel)
    has_absorbing = panel.space.absorbing is not None

    rows: list[SweepRow] = []
    reports: dict[int, FitReport] = {}
    warnings: list[str] = []
    for g in g_values:
        init = initial_model(panel, g, seed=cfg.seed, restarts=restarts,
                             min_obs_mass=cfg.min_obs_mass)
        aborted = False
        try:
            report = fit(panel, g, init, cfg)
        except EmptyComponent as exc:
            if exc.report is None:
                raise
            report = exc.report
            aborted = True
            warnings.append(f"G={g}: {exc}")
        reports[g] = report
        ll = mixture_loglik(panel, report.model, stats)
        q = param_count(g, panel.space.n_states, d=2, has_absorbing=has_absorbing)
        try:
            corrected = aicc(ll, q, n_obs)
        except ValueError:
            corrected = None
            warnings.append(f"G={g}: aicc undefined (q={q} too large for n_obs={n_obs})")
        rows.append(
            SweepRow(
                n_components=g,
                loglik=ll,
                q=q,
                bic=bic(ll, q, n_obs),
                aic=aic(ll, q),
                aicc=corrected,
                converged=report.converged,
                aborted=aborted,
            )
        )

    chosen = {}
    for name in CRITERIA:
        scored = [(getattr(r, name), r.n_components) for r in rows if getattr(r, name) is not None]
        if not scored:
            continue
        chosen[name] = min(scored)[1]
    return GSweepResult(rows=tuple(rows), chosen=chosen, reports=reports, warnings=tuple(warnings))
