"""Recovery metrics for simulation studies, with label-switching alignment.

Mixture likelihoods are invariant under permuting component labels, so
estimated components must be matched to the truth before any error is
computed.  Parameter metrics align by minimizing the summed relative
errors of transition matrices and initial probabilities; the
classification rate aligns by maximizing raw label agreement.  Both
searches are exhaustive over the G! permutations (G <= 8).
"""

from __future__ import annotations

from itertools import permutations

import numpy as np

from .core import MixtureModel

_MAX_COMPONENTS = 8


def err_matrix(true: np.ndarray, est: np.ndarray) -> float:
    """Relative squared error ``||true - est||_F^2 / ||true||_F^2`` (also
    used for vectors with the Euclidean norm)."""
    true = np.asarray(true, dtype=np.float64)
    est = np.asarray(est, dtype=np.float64)
    if true.shape != est.shape:
        raise ValueError("shapes must match")
    denom = float(np.sum(true * true))
    if denom <= 0.0:
        raise ValueError("reference parameters have zero norm")
    diff = true - est
    return float(np.sum(diff * diff)) / denom


def _check_g(g: int) -> None:
    if g > _MAX_COMPONENTS:
        raise ValueError(f"exhaustive alignment supports at most {_MAX_COMPONENTS} components")


def align_components(truth: MixtureModel, est: MixtureModel) -> tuple[int, ...]:
    """Permutation ``perm`` such that estimated component ``perm[g]`` plays
    the role of true component ``g``, minimizing the total relative error
    of transition matrices plus initial probabilities."""
    g = truth.n_components
    if est.n_components != g:
        raise ValueError("models must have the same number of components")
    _check_g(g)
    cost = np.zeros((g, g))
    for t in range(g):
        for e in range(g):
            cost[t, e] = err_matrix(
                truth.components[t].trans, est.components[e].trans
            ) + err_matrix(truth.components[t].alpha, est.components[e].alpha)
    best = None
    for perm in permutations(range(g)):
        total = sum(cost[t, perm[t]] for t in range(g))
        if best is None or total < best[0]:
            best = (total, perm)
    return best[1]


def err_gamma(
    truth: MixtureModel,
    est: MixtureModel,
    which: str,
    perm: tuple[int, ...] | None = None,
) -> float:
    """Pooled relative squared error of the gamma shapes (``which="shape"``)
    or rates (``which="rate"``) over all states and components, after
    alignment."""
    if which not in ("shape", "rate"):
        raise ValueError("which must be 'shape' or 'rate'")
    if perm is None:
        perm = align_components(truth, est)
    num = 0.0
    denom = 0.0
    for t in range(truth.n_components):
        comp_t = truth.components[t]
        comp_e = est.components[perm[t]]
        for pt, pe in zip(comp_t.sojourn, comp_e.sojourn):
            if pt is None:
                continue
            a = getattr(pt, which)
            b = getattr(pe, which)
            num += (a - b) ** 2
            denom += a * a
    if denom <= 0.0:
        raise ValueError("reference parameters have zero norm")
    return num / denom


def err_by_component(
    truth: MixtureModel,
    est: MixtureModel,
    which: str,
    perm: tuple[int, ...] | None = None,
) -> list[float]:
    """Per-component relative errors of ``which`` in {"alpha", "trans"},
    after alignment; index g corresponds to true component g."""
    if which not in ("alpha", "trans"):
        raise ValueError("which must be 'alpha' or 'trans'")
    if perm is None:
        perm = align_components(truth, est)
    out = []
    for t in range(truth.n_components):
        a = getattr(truth.components[t], which)
        b = getattr(est.components[perm[t]], which)
        out.append(err_matrix(a, b))
    return out


def classification_rate(true_labels, est_labels) -> float:
    """Fraction of matching labels under the best label permutation."""
    true_labels = np.asarray(true_labels, dtype=np.int64)
    est_labels = np.asarray(est_labels, dtype=np.int64)
    if true_labels.shape != est_labels.shape:
        raise ValueError("label vectors must have the same length")
    g = int(max(true_labels.max(), est_labels.max())) + 1
    _check_g(g)
    best = 0.0
    for perm in permutations(range(g)):
        mapped = np.asarray(perm)[est_labels]
        best = max(best, float(np.mean(mapped == true_labels)))
    return best


def pi_recovery(true_pi, est_pi, perm: tuple[int, ...] | None = None) -> np.ndarray:
    """Estimated mixture weights reordered to match the truth.

    With ``perm`` from :func:`align_components` the parameter-space
    alignment is used; otherwise the weight permutation minimizing the
    squared weight error is found by enumeration.
    """
    true_pi = np.asarray(true_pi, dtype=np.float64)
    est_pi = np.asarray(est_pi, dtype=np.float64)
    if true_pi.shape != est_pi.shape:
        raise ValueError("weight vectors must have the same length")
    g = len(true_pi)
    _check_g(g)
    if perm is not None:
        return est_pi[list(perm)]
    best = None
    for p in permutations(range(g)):
        cand = est_pi[list(p)]
        score = float(np.sum((cand - true_pi) ** 2))
        if best is None or score < best[0]:
            best = (score, cand)
    return best[1]
