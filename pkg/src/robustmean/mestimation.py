"""Robust selection among M-estimators fitted on disjoint blocks.

Each block ``B_K`` of a regular partition produces an estimate ``s_K``.  Two
estimates are compared through the median, over the *other* blocks, of the
block means of their loss difference; the selected block minimizes its worst
comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .blocks import CONSTANTS, BlockPartition, block_means, choose_block_count, make_regular_partition, median
from .dictionary import Dictionary, _check_breakpoints, build_histogram_dictionary
from .errors import (
    BlockFitError,
    DimensionError,
    DomainError,
    EmptyInputError,
    InsufficientBlocksError,
    UnsupportedModelError,
)

__all__ = [
    "BlockEstimate",
    "MarginParams",
    "ContrastModel",
    "SelectorTrace",
    "pairwise_median_loss",
    "pairwise_matrix",
    "select_m_estimator",
    "rate_quantities",
    "contrast_l2_density",
    "contrast_kullback_histogram",
    "contrast_l2_regression",
    "histogram_contrast",
]

QUAD_POINTS = 4096


@dataclass(frozen=True)
class BlockEstimate:
    """Parameters of one fitted estimate.  ``degenerate`` flags a fallback fit."""

    params: np.ndarray
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {"params": [float(v) for v in np.ravel(self.params)], "degenerate": self.degenerate}


@dataclass(frozen=True)
class MarginParams:
    """Variance-to-excess-loss control: ``sigma0`` and pairs ``(alpha_i, sigma_i)``."""

    sigma0: float = 0.0
    alphas: tuple[float, ...] = ()
    sigmas: tuple[float, ...] = ()
    epsilon: float = 0.0

    def __post_init__(self):
        if self.sigma0 < 0:
            raise DomainError("sigma0 must be nonnegative")
        if len(self.alphas) != len(self.sigmas):
            raise DimensionError("alphas and sigmas must have the same length")
        for a, s in zip(self.alphas, self.sigmas):
            if not 0 < a < 1:
                raise DomainError(f"alpha must lie in (0, 1), got {a}")
            if s < 0:
                raise DomainError("sigma_i must be nonnegative")
        if not 0 <= self.epsilon <= 1:
            raise DomainError("epsilon must lie in [0, 1]")

    @property
    def N(self) -> int:
        return len(self.alphas)

    def to_dict(self) -> dict:
        return {
            "sigma0": self.sigma0,
            "alphas": list(self.alphas),
            "sigmas": list(self.sigmas),
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class ContrastModel:
    """A block estimator together with its loss.

    ``fit_block(obs)`` returns a :class:`BlockEstimate`; ``loss(params, obs)``
    returns one real per observation.  ``excess_loss_ref(params)`` is an
    optional analytic excess loss against the true distribution.
    """

    name: str
    fit_block: Callable[[np.ndarray], BlockEstimate]
    loss: Callable[[np.ndarray, np.ndarray], np.ndarray]
    excess_loss_ref: Callable[[np.ndarray], float] | None = None
    margin: MarginParams | None = None


@dataclass
class SelectorTrace:
    """Diagnostics of one selector run; block indices are 0-based."""

    V: int
    estimates: list[BlockEstimate]
    matrix: np.ndarray
    worst_case: np.ndarray
    K_star: int
    notes: list[str] = field(default_factory=list)
    n_used: int | None = None
    truncated: int = 0

    @property
    def estimate(self) -> BlockEstimate:
        return self.estimates[self.K_star]

    def minimizers(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.worst_case == self.worst_case.min())]

    def to_dict(self) -> dict:
        return {
            "V": self.V,
            "K_star": self.K_star,
            "worst_case": [float(v) for v in self.worst_case],
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "estimates": [e.to_dict() for e in self.estimates],
            "notes": list(self.notes),
            "n_used": self.n_used,
            "truncated": self.truncated,
        }


def _slice(sample: np.ndarray, partition: BlockPartition, k: int) -> np.ndarray:
    return sample[partition.block(k)]


def _check_sample(sample, partition: BlockPartition) -> np.ndarray:
    sample = np.asarray(sample, dtype=float)
    if sample.shape[0] != partition.n:
        raise DimensionError(f"sample has {sample.shape[0]} observations, partition expects {partition.n}")
    if partition.V < 3:
        raise InsufficientBlocksError(f"need at least 3 blocks, got V={partition.V}")
    return sample


def pairwise_median_loss(
    K: int,
    K_prime: int,
    estimates: Sequence[BlockEstimate],
    sample,
    partition: BlockPartition,
    contrast: ContrastModel,
) -> float:
    """Median over blocks ``J not in {K, K'}`` of ``P_{B_J}(gamma(s_K) - gamma(s_K'))``."""
    sample = _check_sample(sample, partition)
    diff = np.asarray(contrast.loss(estimates[K].params, sample), dtype=float) - np.asarray(
        contrast.loss(estimates[K_prime].params, sample), dtype=float
    )
    means = block_means(diff, partition)
    keep = [J for J in range(partition.V) if J not in (K, K_prime)]
    return median(means[keep])


def pairwise_matrix(block_losses: np.ndarray) -> np.ndarray:
    """Pairwise statistics from ``block_losses[K, J] = P_{B_J} gamma(s_K)``.

    Entry ``(K, K')`` is the median over ``J not in {K, K'}`` of
    ``block_losses[K, J] - block_losses[K', J]``.
    """
    V = block_losses.shape[0]
    out = np.zeros((V, V))
    for K in range(V):
        for Kp in range(V):
            if Kp == K:
                continue
            keep = [J for J in range(V) if J != K and J != Kp]
            out[K, Kp] = median(block_losses[K, keep] - block_losses[Kp, keep])
    return out


def _fit_all(sample: np.ndarray, partition: BlockPartition, contrast: ContrastModel):
    estimates, notes = [], []
    for K in range(partition.V):
        try:
            est = contrast.fit_block(_slice(sample, partition, K))
        except Exception as exc:  # surfaced with the offending block
            raise BlockFitError(K, exc) from exc
        if est.degenerate:
            notes.append(f"block {K}: degenerate fit, minimal-norm solution used")
        estimates.append(est)
    return estimates, notes


def _run_selector(sample: np.ndarray, partition: BlockPartition, contrast: ContrastModel) -> SelectorTrace:
    estimates, notes = _fit_all(sample, partition, contrast)
    losses = np.empty((partition.V, partition.V))
    for K, est in enumerate(estimates):
        losses[K] = block_means(np.asarray(contrast.loss(est.params, sample), dtype=float), partition)
    matrix = pairwise_matrix(losses)
    worst = matrix.max(axis=1)
    return SelectorTrace(
        V=partition.V,
        estimates=estimates,
        matrix=matrix,
        worst_case=worst,
        K_star=int(np.argmin(worst)),
        notes=notes,
        n_used=partition.n,
    )


def select_m_estimator(
    sample,
    contrast: ContrastModel,
    delta: float | None = None,
    V: int | None = None,
) -> SelectorTrace:
    """Fit one estimate per block and return the argmin-max block.

    ``V`` defaults to ``max(ceil(ln(delta**-2)), 8)``.  Ties go to the
    smallest block index.
    """
    sample = np.asarray(sample, dtype=float)
    n = sample.shape[0]
    if n == 0:
        raise EmptyInputError("empty sample")
    if V is None:
        if delta is None:
            raise DomainError("give either delta or V")
        V = choose_block_count(delta, n, "m_select")
    partition = make_regular_partition(n, V)
    sample = _check_sample(sample, partition)
    return _run_selector(sample, partition, contrast)


def _rate(sigma0: float, alphas, sigmas, N: int, C0: float, Ci, V: int, n: int, Delta: float):
    if Delta <= 1:
        raise DomainError(f"Delta must exceed 1, got {Delta}")
    root = math.sqrt(V / n)
    nu = C0 * sigma0 * root + N / Delta
    R = math.fsum(c * (Delta**a * s * root) ** (1.0 / (1.0 - a)) for c, a, s in zip(Ci, alphas, sigmas))
    return nu, R


def rate_quantities(params: MarginParams, V: int, n: int, Delta: float = 2.0) -> tuple[float, float]:
    """``(nu_n(Delta), R_n(Delta))`` of the i.i.d. selector bound.

    ``C_0 = L1`` and ``C_i = 4 (1 - a_i) (L1 a_i^{a_i})^{1/(1 - a_i)}``.
    """
    L1 = CONSTANTS.L1
    Ci = [4.0 * (1.0 - a) * (L1 * a**a) ** (1.0 / (1.0 - a)) for a in params.alphas]
    return _rate(params.sigma0, params.alphas, params.sigmas, params.N, L1, Ci, V, n, Delta)


# ---------------------------------------------------------------- contrasts


def contrast_l2_density(
    dictionary: Dictionary,
    target_coef=None,
    target_residual2: float = 0.0,
    margin: MarginParams | None = None,
) -> ContrastModel:
    """Least-squares density contrast ``gamma(t)(x) = |t|^2 - 2 t(x)`` on an orthonormal system.

    Estimates are coefficient vectors ``c_l = P_{B_K} psi_l``.  With
    ``target_coef`` (coefficients of the projection of the true density) the
    excess loss ``|t - s*|^2`` is available, ``target_residual2`` being the
    squared distance of the true density to the span.
    """
    if not dictionary.orthonormal:
        raise UnsupportedModelError("the least-squares density contrast needs an orthonormal dictionary")

    def fit_block(obs):
        design = dictionary.evaluate(obs)
        m = design.shape[0]
        if m == 0:
            raise EmptyInputError("empty block")
        return BlockEstimate(np.array([math.fsum(design[:, j].tolist()) / m for j in range(dictionary.M)]))

    def loss(c, obs):
        return float(c @ c) - 2.0 * (dictionary.evaluate(obs) @ c)

    ref = None
    if target_coef is not None:
        t = np.asarray(target_coef, dtype=float)

        def ref(c):
            d = c - t
            return float(d @ d) + target_residual2

    return ContrastModel("l2_density", fit_block, loss, ref, margin)


def contrast_kullback_histogram(
    breakpoints: Sequence[float],
    smoothing: float,
    target_cell_probs=None,
    target_density: Callable[[np.ndarray], np.ndarray] | None = None,
    margin: MarginParams | None = None,
) -> ContrastModel:
    """Maximum-likelihood histogram mixed with the uniform density.

    ``s_K = (s~_K + x) / (1 + x)`` where ``s~_K`` are the cell frequencies
    divided by cell widths and ``x = smoothing``.  ``gamma(t)(x) = -ln t(x)``.
    Estimates are the vectors of cell heights.
    """
    if not smoothing > 0:
        raise DomainError("smoothing must be positive")
    breaks = _check_breakpoints(breakpoints)
    widths = np.diff(breaks)
    D = widths.size
    x = float(smoothing)
    if margin is None:
        margin = MarginParams(0.0, (0.5,), (math.sqrt(2.0 + 3.0 * math.log1p(1.0 / x)),))

    def cells(obs):
        obs = np.asarray(obs, dtype=float).ravel()
        if obs.size and (obs.min() < breaks[0] or obs.max() > breaks[-1]):
            raise DomainError("observations must lie in the histogram's support")
        idx = np.searchsorted(breaks, obs, side="right") - 1
        return np.minimum(idx, D - 1)

    def fit_block(obs):
        idx = cells(obs)
        if idx.size == 0:
            raise EmptyInputError("empty block")
        freq = np.bincount(idx, minlength=D) / idx.size
        return BlockEstimate((freq / widths + x) / (1.0 + x))

    def loss(h, obs):
        return -np.log(h[cells(obs)])

    ref = None
    if target_cell_probs is not None:
        p = np.asarray(target_cell_probs, dtype=float)
        if p.shape != (D,):
            raise DimensionError(f"target_cell_probs must have length {D}")

        def ref(h):
            pos = p > 0
            return float(np.sum(p[pos] * np.log(p[pos] / (h[pos] * widths[pos]))))

    elif target_density is not None:
        grid = np.linspace(breaks[0], breaks[-1], QUAD_POINTS + 1)
        s = np.asarray(target_density(grid), dtype=float)

        def ref(h):
            t = h[np.minimum(np.searchsorted(breaks, grid, side="right") - 1, D - 1)]
            with np.errstate(divide="ignore", invalid="ignore"):
                integrand = np.where(s > 0, s * np.log(s / t), 0.0)
            return float(simpson(integrand, x=grid))

    model = ContrastModel("kullback_histogram", fit_block, loss, ref, margin)
    return model


def contrast_l2_regression(
    basis: Dictionary,
    excess_loss_ref: Callable[[np.ndarray], float] | None = None,
    margin: MarginParams | None = None,
) -> ContrastModel:
    """Least-squares regression contrast ``gamma(t)(x, y) = (y - t(x))^2``.

    Observations are rows ``(x, y)``.  A rank-deficient block falls back to
    the minimal-norm least-squares solution and is flagged degenerate.
    """

    def split(obs):
        obs = np.asarray(obs, dtype=float)
        if obs.ndim != 2 or obs.shape[1] != 2:
            raise DimensionError("regression observations must be (x, y) rows")
        return obs[:, 0], obs[:, 1]

    def fit_block(obs):
        x, y = split(obs)
        if x.size < 1:
            raise EmptyInputError("regression block has no observations")
        design = basis.evaluate(x)
        coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
        return BlockEstimate(coef, degenerate=bool(rank < basis.M))

    def loss(coef, obs):
        x, y = split(obs)
        r = y - basis.evaluate(x) @ coef
        return r * r

    return ContrastModel("l2_regression", fit_block, loss, excess_loss_ref, margin)


def histogram_contrast(cell_count: int) -> ContrastModel:
    """Least-squares density contrast on ``cell_count`` equal cells of ``[0, 1]``."""
    return contrast_l2_density(build_histogram_dictionary(np.linspace(0.0, 1.0, cell_count + 1)))
