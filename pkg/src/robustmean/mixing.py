"""Block methods for stationary dependent sequences.

The sample is cut into ``2V`` consecutive blocks of equal length ``q``.
Estimates are fitted on the odd blocks only; the even blocks act as gaps so
that odd blocks are nearly independent when the process mixes fast enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blocks import CONSTANTS, BlockPartition, block_means, median
from .errors import DomainError, EmptyInputError, InsufficientBlocksError, LayoutError, DimensionError
from .mestimation import ContrastModel, MarginParams, SelectorTrace, _rate, _run_selector

__all__ = [
    "MixingLayout",
    "MixingCoefficients",
    "make_mixing_layout",
    "mixing_block_count",
    "robust_mean_mixing",
    "select_m_estimator_mixing",
    "ar1_mixing_coefficients",
    "mixing_rate_quantities",
]


@dataclass(frozen=True)
class MixingLayout:
    """``2V`` contiguous blocks of length ``q = n / (2V)``; block ``k`` (0-based)
    covers ``[k q, (k + 1) q)``."""

    n: int
    V: int
    q: int

    @property
    def blocks(self) -> BlockPartition:
        return BlockPartition(self.n, tuple((k * self.q, (k + 1) * self.q) for k in range(2 * self.V)))

    @property
    def odd_blocks(self) -> list[tuple[int, int]]:
        """The blocks numbered 1, 3, ..., 2V - 1 when counting from one."""
        return [(2 * k * self.q, (2 * k + 1) * self.q) for k in range(self.V)]

    def odd_indices(self) -> np.ndarray:
        return np.concatenate([np.arange(a, b) for a, b in self.odd_blocks])

    def to_dict(self) -> dict:
        return {"n": self.n, "V": self.V, "q": self.q}


@dataclass(frozen=True)
class MixingCoefficients:
    """Mixing coefficient sequences indexed by lag ``k = 0, 1, ...``."""

    beta: np.ndarray
    phi: np.ndarray
    C_beta: float
    Phi_sq: float
    envelope: bool = True
    tail_bound: float = 0.0

    def beta_at(self, k: int) -> float:
        if k < self.beta.size:
            return float(self.beta[k])
        return float(self.beta[-1])

    def to_dict(self) -> dict:
        return {
            "C_beta": self.C_beta,
            "Phi_sq": self.Phi_sq,
            "envelope": self.envelope,
            "tail_bound": self.tail_bound,
            "horizon": int(self.beta.size - 1),
        }


def make_mixing_layout(n: int, V: int) -> MixingLayout:
    """Layout for ``n = 2 V q``; otherwise a :class:`LayoutError` suggests the
    largest usable sample size."""
    n, V = int(n), int(V)
    if V < 1:
        raise DomainError("V must be at least 1")
    if n < 2 * V or n % (2 * V):
        usable = (n // (2 * V)) * (2 * V)
        raise LayoutError(f"n={n} is not a positive multiple of 2V={2 * V}; use n={usable}", suggested_n=usable)
    return MixingLayout(n, V, n // (2 * V))


def mixing_block_count(delta: float) -> int:
    """``max(ceil(ln(2 / delta^2)), 16)``."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return max(math.ceil(math.log(2.0 / delta**2)), 16)


def robust_mean_mixing(sample, f, layout: MixingLayout) -> float:
    """Median of the ``2V`` block means of ``f``."""
    vals = np.asarray(sample if f is None else f(sample), dtype=float)
    if vals.shape[0] != layout.n:
        raise DimensionError(f"sample has {vals.shape[0]} observations, layout expects {layout.n}")
    return median(block_means(vals, layout.blocks))


def select_m_estimator_mixing(
    sample,
    contrast: ContrastModel,
    delta: float | None = None,
    V: int | None = None,
) -> SelectorTrace:
    """Selector fitted on odd blocks, comparing over the remaining odd blocks.

    Trailing observations beyond the largest multiple of ``2V`` are dropped and
    the count is recorded in ``trace.truncated``.
    """
    sample = np.asarray(sample, dtype=float)
    n = sample.shape[0]
    if n == 0:
        raise EmptyInputError("empty sample")
    if V is None:
        if delta is None:
            raise DomainError("give either delta or V")
        V = mixing_block_count(delta)
    if V < 3:
        raise InsufficientBlocksError(f"need at least 3 odd blocks, got V={V}")
    usable = (n // (2 * V)) * (2 * V)
    if usable == 0:
        raise LayoutError(f"n={n} is smaller than 2V={2 * V}", suggested_n=0)
    layout = make_mixing_layout(usable, V)
    odd = sample[layout.odd_indices()]
    # on the odd subsample the odd blocks are exactly a regular V-block partition
    partition = BlockPartition(odd.shape[0], tuple((k * layout.q, (k + 1) * layout.q) for k in range(V)))
    trace = _run_selector(odd, partition, contrast)
    trace.n_used = usable
    trace.truncated = n - usable
    if trace.truncated:
        trace.notes.append(f"dropped {trace.truncated} trailing observations")
    return trace


def ar1_mixing_coefficients(a: float, horizon: int = 200) -> MixingCoefficients:
    """Geometric envelope ``beta_k = phi_k = |a|^k / (1 - |a|)`` for a stationary AR(1).

    This is a conservative envelope, not the exact coefficients.  ``C_beta``
    and ``Phi_sq`` are truncated at ``horizon`` with the remainder bounded
    in ``tail_bound``.
    """
    if not -1.0 < a < 1.0:
        raise DomainError(f"|a| must be < 1 for a stationary AR(1), got {a}")
    r = abs(a)
    k = np.arange(horizon + 1, dtype=float)
    env = r**k / (1.0 - r)
    beta = env.copy()
    phi = env.copy()
    C_beta = 2.0 * math.fsum(((k + 1.0) * beta).tolist())
    Phi_sq = math.fsum(phi[1:].tolist())
    # remainder of 2 sum_{l>H} (l+1) r^l / (1-r), plus that of sum_{q>H} r^q / (1-r)
    H = horizon
    if r == 0.0:
        tail = 0.0
    else:
        rh = r ** (H + 1)
        tail = 2.0 * rh * ((H + 2) - (H + 1) * r) / (1.0 - r) ** 3 + rh / (1.0 - r) ** 2
    return MixingCoefficients(beta, phi, C_beta, Phi_sq, True, tail)


def mixing_rate_quantities(
    params: MarginParams, V: int, n: int, Delta: float = 2.0, Phi: float = 1.0
) -> tuple[float, float]:
    """``(nu_n, R_n)`` for the dependent-data selector.

    ``C_0 = L8 Phi`` and ``C_i = (1 - a_i) (C_0 a_i^{a_i})^{1/(1 - a_i)}``.
    """
    C0 = CONSTANTS.L8 * Phi
    Ci = [(1.0 - a) * (C0 * a**a) ** (1.0 / (1.0 - a)) for a in params.alphas]
    return _rate(params.sigma0, params.alphas, params.sigmas, params.N, C0, Ci, V, n, Delta)
