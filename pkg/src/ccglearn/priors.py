"""Class-prior estimation from complementary-label frequencies.

Observed complementary frequencies satisfy p_bar = M^T p for the unknown
ordinary prior p.  We recover p by minimizing ||p_bar - M^T p||^2 over the
probability simplex with projected gradient descent; the projection is the
sort-and-threshold Euclidean projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .labels import Complementary, ComplementaryDataset, TransitionMatrix

MAX_ITERS = 100_000
IMPROVE_TOL = 1e-12


class PriorError(ValueError):
    pass


def check_simplex(v: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < -tol) or abs(v.sum() - 1.0) > tol:
        raise PriorError(f"vector is not on the probability simplex: {v}")
    return v


@dataclass(frozen=True)
class QpSolution:
    estimate: np.ndarray
    residual: float
    iterations: int
    converged: bool
    rank_deficient_warning: bool = False


def empirical_complementary_prior(dataset: ComplementaryDataset,
                                  K: int | None = None) -> np.ndarray:
    """Normalized complementary-label counts; each label of multi-label
    evidence contributes once."""
    if K is None:
        K = int(dataset.eval_true_labels().max()) + 1
    counts = np.zeros(K)
    for e in dataset.evidence:
        if isinstance(e, Complementary):
            for lab in e.labels:
                counts[lab] += 1
    total = counts.sum()
    if total == 0:
        raise PriorError("dataset carries no complementary labels")
    return counts / total


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto {x : x >= 0, sum x = 1}."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise PriorError("cannot project non-finite vector")
    return kernels.simplex_project_kernel(v)


def estimate_prior_qp(p_bar: np.ndarray, transition: TransitionMatrix,
                      max_iters: int = MAX_ITERS,
                      improve_tol: float = IMPROVE_TOL) -> QpSolution:
    """Projected gradient descent on ||p_bar - M^T p||^2 over the simplex.

    Fixed step 1 / (2 lambda_max(M M^T)), the inverse Lipschitz constant of
    the gradient, so the objective is non-increasing.  Starts from the
    uniform prior.
    """
    p_bar = check_simplex(p_bar)
    M = transition.matrix
    K = transition.K
    if p_bar.shape != (K,):
        raise PriorError(f"dimension mismatch: p_bar has {p_bar.shape[0]} entries, K={K}")
    lam = float(np.linalg.eigvalsh(M @ M.T).max())
    step = 1.0 / (2.0 * lam)
    rank_warn = not transition.is_full_rank()

    def objective(p):
        r = p_bar - M.T @ p
        return float(r @ r)

    # Warm start: the better of the uniform prior and the projected
    # least-squares solve of M^T p = p_bar.  When the exact solve is feasible
    # the start is already optimal and the loop exits immediately.
    p = np.full(K, 1.0 / K)
    candidate, *_ = np.linalg.lstsq(M.T, p_bar, rcond=None)
    if np.all(np.isfinite(candidate)):
        candidate = simplex_project(candidate)
        if objective(candidate) < objective(p):
            p = candidate
    obj = objective(p)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        grad = 2.0 * (M @ (M.T @ p - p_bar))
        p_new = simplex_project(p - step * grad)
        obj_new = objective(p_new)
        if obj - obj_new < improve_tol:
            p = p_new
            obj = min(obj, obj_new)
            converged = True
            break
        p, obj = p_new, obj_new
    return QpSolution(estimate=p, residual=obj, iterations=it,
                      converged=converged, rank_deficient_warning=rank_warn)
