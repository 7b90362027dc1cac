"""L1-penalized least-squares density estimation with median-of-means moments.

The criterion is

    crit(theta) = |s_theta|^2 - 2 sum_l theta_l Pbar psi_l + 2 sum_l w_l |theta_l|

where ``Pbar`` is the median-of-means process over one shared partition and
the weights sit at the floor ``L3 sqrt(Pbar psi_l^2) sqrt(V/n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import CONSTANTS, BlockPartition, block_means, choose_block_count, make_regular_partition, median
from .dictionary import Dictionary, check_lasso_hypotheses, coherence_stats
from .errors import DeltaTooSmallError, DimensionError, IllPosedError

__all__ = [
    "LassoProblem",
    "LassoFit",
    "lasso_weights",
    "lasso_criterion",
    "solve_lasso",
    "soft_threshold",
    "lasso_remainder",
]

PSD_TOL = 1e-8


@dataclass
class LassoProblem:
    dictionary: Dictionary
    robust_first_moments: np.ndarray
    robust_second_moments: np.ndarray
    weights: np.ndarray
    V: int
    n: int
    delta: float
    partition: BlockPartition | None = None

    def __post_init__(self):
        M = self.dictionary.M
        self.robust_first_moments = np.asarray(self.robust_first_moments, dtype=float)
        self.robust_second_moments = np.asarray(self.robust_second_moments, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        for name in ("robust_first_moments", "robust_second_moments", "weights"):
            if getattr(self, name).shape != (M,):
                raise DimensionError(f"{name} must have length {M}")

    def weight_floor(self) -> np.ndarray:
        return CONSTANTS.L3 * np.sqrt(np.maximum(self.robust_second_moments, 0.0)) * math.sqrt(self.V / self.n)


@dataclass
class LassoFit:
    theta_hat: np.ndarray
    criterion_value: float
    active_set: tuple[int, ...]
    iterations: int
    converged: bool
    weights: np.ndarray
    labels: list[str]
    history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "theta_hat": {self.labels[j]: float(self.theta_hat[j]) for j in self.active_set},
            "weights": {lab: float(w) for lab, w in zip(self.labels, self.weights)},
            "criterion": float(self.criterion_value),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def soft_threshold(u, w):
    return np.sign(u) * np.maximum(np.abs(u) - w, 0.0)


def lasso_weights(
    sample,
    dictionary: Dictionary,
    delta: float,
    partition: BlockPartition | None = None,
) -> LassoProblem:
    """Robust moments of every dictionary function and the floor weights.

    One partition is shared by all labels.  By default it has
    ``V = ceil(ln(4M / delta))`` blocks.
    """
    x = np.asarray(sample, dtype=float).ravel()
    n = x.size
    M = dictionary.M
    if partition is None:
        V = choose_block_count(delta / (4.0 * M), n, "mean")
        partition = make_regular_partition(n, V)
    elif partition.n != n:
        raise DimensionError(f"partition is for n={partition.n}, sample has {n}")
    V = partition.V
    if V < math.log(4.0 * M / delta):
        raise DeltaTooSmallError(f"V={V} < ln(4M/delta)={math.log(4.0 * M / delta):.3f}")
    design = dictionary.evaluate(x)
    first = np.array([median(block_means(design[:, j], partition)) for j in range(M)])
    second = np.array([median(block_means(design[:, j] ** 2, partition)) for j in range(M)])
    weights = CONSTANTS.L3 * np.sqrt(second) * math.sqrt(V / n)
    return LassoProblem(dictionary, first, second, weights, V, n, delta, partition)


def _quadratic(problem: LassoProblem) -> np.ndarray:
    return problem.dictionary.inner_products


def lasso_criterion(problem: LassoProblem, theta) -> float:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (problem.dictionary.M,):
        raise DimensionError(f"theta must have length {problem.dictionary.M}")
    if problem.dictionary.orthonormal:
        quad = float(theta @ theta)
    else:
        quad = float(theta @ _quadratic(problem) @ theta)
    return quad - 2.0 * float(theta @ problem.robust_first_moments) + 2.0 * float(problem.weights @ np.abs(theta))


def solve_lasso(problem: LassoProblem, max_cycles: int = 10_000, tol: float = 1e-10) -> LassoFit:
    """Cyclic coordinate descent with exact soft-threshold coordinate updates.

    Stops when no coordinate moves by more than ``tol`` during a full cycle.
    """
    H = _quadratic(problem)
    if np.linalg.eigvalsh(problem.dictionary.gram)[0] < -PSD_TOL:
        raise IllPosedError("Gram matrix is not positive semidefinite")
    b = problem.robust_first_moments
    w = problem.weights
    M = b.size
    theta = np.zeros(M)
    Htheta = np.zeros(M)
    crit = lasso_criterion(problem, theta)
    history = [crit]
    converged = False
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        step = 0.0
        for j in range(M):
            old = theta[j]
            partial = b[j] - (Htheta[j] - H[j, j] * old)
            new = float(soft_threshold(partial, w[j])) / H[j, j]
            if new != old:
                theta[j] = new
                Htheta += H[:, j] * (new - old)
                step = max(step, abs(new - old))
        new_crit = lasso_criterion(problem, theta)
        # exact coordinate minimization cannot increase the criterion
        assert new_crit <= crit + 1e-12 * max(1.0, abs(crit)), "coordinate descent increased the criterion"
        history.append(new_crit)
        crit = new_crit
        if step <= tol:
            converged = True
            break
    active = tuple(int(j) for j in np.nonzero(theta)[0])
    return LassoFit(
        theta_hat=theta,
        criterion_value=crit,
        active_set=active,
        iterations=cycles,
        converged=converged,
        weights=w.copy(),
        labels=problem.dictionary.labels,
        history=history,
    )


def lasso_remainder(
    dictionary: Dictionary,
    theta,
    weights,
    n: int,
    delta: float,
    kappa_M: float | None = None,
) -> dict[str, float | None]:
    """Remainder term of the Lasso oracle inequality under each coherence hypothesis.

    Returns a mapping ``{"H1", "H2", "H3", "value"}``; an entry is ``None``
    when its hypothesis fails.  ``value`` is the smallest available remainder.
    Under H1/H2 the remainder is ``F(theta)^2 M(theta) ln(4M/delta) / n``,
    under H3 it is ``G(theta) / kappa_M``.
    """
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(weights, dtype=float)
    M = dictionary.M
    J = np.nonzero(theta)[0]
    out: dict[str, float | None] = {"H1": None, "H2": None, "H3": None}
    if J.size == 0:
        out.update(H1=0.0, H2=0.0, H3=0.0 if kappa_M else None, value=0.0)
        return out
    if np.all(w > 0):
        stats = coherence_stats(dictionary, theta, w, n, delta, kappa_M)
        hyp = check_lasso_hypotheses(stats)
        r12 = stats.F_theta**2 * stats.M_theta * math.log(4.0 * M / delta) / n
        out["H1"] = r12 if hyp.H1 else None
        out["H2"] = r12 if hyp.H2 else None
    if kappa_M is not None and kappa_M > 0:
        zeta = float(np.linalg.eigvalsh(dictionary.gram)[0])
        if zeta >= kappa_M:
            out["H3"] = float(np.sum(w[J] ** 2)) / kappa_M
    avail = [v for v in out.values() if v is not None]
    out["value"] = min(avail) if avail else None
    return out
