"""Panel simulation and the Monte-Carlo benchmark harness.

Trajectories are simulated sequentially: first state from the initial
probabilities, then alternating gamma sojourn draws and transition draws
until the stop rule fires (a fixed transition count, or entry into the
absorbing state).  Benchmarks run many independent replicates, each on its
own random stream, and aggregate recovery metrics.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import ComponentParams, MixtureModel, Panel, Trajectory
from .em import EmConfig, FitReport, fit, map_cluster
from .errors import EmptyComponent, NumericalError
from .initialization import initial_model, kmeans, mean_sojourn_features
from .metrics import (
    align_components,
    classification_rate,
    err_by_component,
    err_gamma,
    pi_recovery,
)
from .selection import select_g

ABSORBING_RULE = "absorbing"
_MAX_SIM_STATES = 1_000_000
# Placeholder duration stored for a final absorbing state; it never enters
# a likelihood.
_ABSORBING_PLACEHOLDER = 1.0


def thread_count() -> int:
    """Parallelism cap from the SMCMIX_THREADS environment variable."""
    raw = os.environ.get("SMCMIX_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class Scenario:
    """A simulation design: the generating mixture, panel dimensions, the
    stop rule (transition count or ``"absorbing"``), the master seed and
    the number of Monte-Carlo replicates."""

    model: MixtureModel
    n_subjects: int
    n_replications: int
    stop_rule: int | str
    seed: int
    replicate_count: int = 50
    name: Optional[str] = None

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_replications < 1:
            raise ValueError("need at least one subject and one replication")
        if self.replicate_count < 1:
            raise ValueError("replicate_count must be positive")
        if isinstance(self.stop_rule, str):
            if self.stop_rule != ABSORBING_RULE:
                raise ValueError(f"unknown stop rule {self.stop_rule!r}")
            if self.model.space.absorbing is None:
                raise ValueError("absorbing stop rule needs an absorbing state")
        elif int(self.stop_rule) < 1:
            raise ValueError("transition count must be at least 1")


def _draw_index(cum: np.ndarray, probs: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    idx = min(idx, len(cum) - 1)
    while probs[idx] == 0.0:  # guard against cumulative rounding at the tail
        idx -= 1
    return idx


class _ComponentSampler:
    """Cached cumulative distributions for fast sequential simulation."""

    def __init__(self, comp: ComponentParams):
        self.comp = comp
        self.alpha_cum = np.cumsum(comp.alpha)
        self.trans_cum = np.cumsum(comp.trans, axis=1)
        self.shapes, self.rates = comp.sojourn_arrays()

    def _sojourn(self, state: int, rng: np.random.Generator) -> float:
        x = rng.gamma(self.shapes[state], 1.0 / self.rates[state])
        while x <= 0.0:  # underflow safety for tiny shapes
            x = rng.gamma(self.shapes[state], 1.0 / self.rates[state])
        return x

    def draw(self, stop_rule, rng: np.random.Generator) -> Trajectory:
        comp = self.comp
        absorbing = comp.absorbing
        states = [_draw_index(self.alpha_cum, comp.alpha, rng)]
        sojourns = []
        max_transitions = None if stop_rule == ABSORBING_RULE else int(stop_rule)
        while True:
            j = states[-1]
            if absorbing is not None and j == absorbing:
                sojourns.append(_ABSORBING_PLACEHOLDER)
                break
            sojourns.append(self._sojourn(j, rng))
            if max_transitions is not None and len(states) == max_transitions + 1:
                break
            if len(states) >= _MAX_SIM_STATES:
                raise NumericalError("simulation did not reach the absorbing state")
            states.append(_draw_index(self.trans_cum[j], comp.trans[j], rng))
        return Trajectory(states=np.asarray(states), sojourns=np.asarray(sojourns))


def simulate_trajectory(comp: ComponentParams, stop_rule, rng: np.random.Generator) -> Trajectory:
    """Draw one trajectory from one renewal process under the stop rule."""
    return _ComponentSampler(comp).draw(stop_rule, rng)


def simulate_panel(
    scenario: Scenario, rng: Optional[np.random.Generator] = None
) -> tuple[Panel, np.ndarray]:
    """Simulate a full panel; every replication of a subject shares the
    subject's mixture component.  Returns the panel and the true labels."""
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(scenario.seed)))
    model = scenario.model
    labels = rng.choice(model.n_components, size=scenario.n_subjects, p=model.weights)
    samplers = [_ComponentSampler(c) for c in model.components]
    subjects = []
    for g in labels:
        sampler = samplers[int(g)]
        subjects.append(
            tuple(
                sampler.draw(scenario.stop_rule, rng)
                for _ in range(scenario.n_replications)
            )
        )
    return Panel(space=model.space, subjects=tuple(subjects)), labels


@dataclass(frozen=True, eq=False)
class BenchmarkResult:
    """Aggregates of a Monte-Carlo benchmark run.

    ``values`` maps metric names to per-replicate arrays (NaN where a
    metric was unavailable); ``histograms`` maps selection criteria to
    chosen-component-count counts when a sweep was requested.
    """

    scenario: Scenario
    values: dict
    histograms: dict
    warnings: tuple[str, ...]

    def table(self) -> dict:
        """Metric name -> (mean, sd) over the replicates where defined."""
        out = {}
        for name, arr in self.values.items():
            arr = np.asarray(arr, dtype=np.float64)
            ok = arr[~np.isnan(arr)]
            if ok.size == 0:
                continue
            sd = float(ok.std(ddof=1)) if ok.size > 1 else 0.0
            out[name] = (float(ok.mean()), sd)
        return out


def _recovery_metrics(truth: MixtureModel, report: FitReport, true_labels, panel, init_seed, restarts, cfg):
    model = report.model
    out = {}
    perm = align_components(truth, model)
    for g, v in enumerate(err_by_component(truth, model, "alpha", perm)):
        out[f"err_alpha_{g + 1}"] = v
    for g, v in enumerate(err_by_component(truth, model, "trans", perm)):
        out[f"err_trans_{g + 1}"] = v
    out["err_shape"] = err_gamma(truth, model, "shape", perm)
    out["err_rate"] = err_gamma(truth, model, "rate", perm)
    out["pi_1"] = float(pi_recovery(truth.weights, model.weights, perm)[0])
    out["class_rate"] = classification_rate(true_labels, map_cluster(report.posteriors))
    km_labels = kmeans(
        mean_sojourn_features(panel), truth.n_components, seed=init_seed, restarts=restarts
    )
    out["kmeans_rate"] = classification_rate(true_labels, km_labels)
    out["iterations"] = float(report.iterations)
    out["converged"] = 1.0 if report.converged else 0.0
    return out


def _one_replicate(scenario, cfg, g_range, restarts, sim_ss, init_seed):
    rng = np.random.Generator(np.random.PCG64(sim_ss))
    panel, true_labels = simulate_panel(scenario, rng)
    truth = scenario.model
    out: dict[str, float] = {}
    warnings: list[str] = []

    if g_range is None:
        init = initial_model(
            panel, truth.n_components, seed=init_seed, restarts=restarts,
            min_obs_mass=cfg.min_obs_mass,
        )
        try:
            report = fit(panel, truth.n_components, init, cfg)
            out["aborted"] = 0.0
        except EmptyComponent as exc:
            if exc.report is None:
                raise
            report = exc.report
            warnings.append(str(exc))
            out["aborted"] = 1.0
        except NumericalError as exc:
            # Last-resort: keep the benchmark alive, score nothing.
            warnings.append(f"replicate failed: {exc}")
            out["aborted"] = 1.0
            return out, warnings
        out.update(_recovery_metrics(truth, report, true_labels, panel, init_seed, restarts, cfg))
    else:
        sweep = select_g(panel, g_range, replace(cfg, seed=init_seed), restarts=restarts)
        warnings.extend(sweep.warnings)
        for name, choice in sweep.chosen.items():
            out[f"{name}_choice"] = float(choice)
        if truth.n_components in sweep.reports:
            report = sweep.reports[truth.n_components]
            out.update(
                _recovery_metrics(truth, report, true_labels, panel, init_seed, restarts, cfg)
            )
    return out, warnings


def run_benchmark(
    scenario: Scenario,
    cfg: EmConfig,
    metrics: Optional[Sequence[str]] = None,
    g_range: Optional[Sequence[int]] = None,
    restarts: int = 10,
) -> BenchmarkResult:
    """Simulate, initialize, fit and score ``scenario.replicate_count``
    independent datasets; optionally sweep component counts.

    Each replicate runs on its own named random stream spawned from the
    scenario seed, so results are independent of the parallelism level
    (capped by SMCMIX_THREADS).  ``metrics`` filters the reported columns.
    """
    root = np.random.SeedSequence(scenario.seed)
    tasks = []
    for child in root.spawn(scenario.replicate_count):
        sim_ss, init_ss = child.spawn(2)
        init_seed = int(init_ss.generate_state(1, dtype=np.uint64)[0])
        tasks.append((sim_ss, init_seed))

    def work(task):
        sim_ss, init_seed = task
        return _one_replicate(scenario, cfg, g_range, restarts, sim_ss, init_seed)

    workers = min(thread_count(), scenario.replicate_count)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]

    names: list[str] = []
    for row, _ in results:
        for key in row:
            if key not in names:
                names.append(key)
    if metrics is not None:
        keep = set(metrics)
        names = [m for m in names if m in keep or m.endswith("_choice")]

    values = {
        name: np.array([row.get(name, np.nan) for row, _ in results]) for name in names
    }
    histograms: dict[str, dict[int, int]] = {}
    for name in names:
        if not name.endswith("_choice"):
            continue
        counts: dict[int, int] = {}
        for v in values[name]:
            if np.isnan(v):
                continue
            counts[int(v)] = counts.get(int(v), 0) + 1
        histograms[name.removesuffix("_choice")] = counts

    all_warnings: list[str] = []
    for i, (_, warns) in enumerate(results):
        all_warnings.extend(f"replicate {i}: {w}" for w in warns)
    return BenchmarkResult(
        scenario=scenario, values=values, histograms=histograms, warnings=tuple(all_warnings)
    )
