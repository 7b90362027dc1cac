"""Regular block partitions and the median-of-means empirical process.

A sample of ``n`` observations is cut into ``V`` contiguous blocks whose sizes
differ from ``n / V`` by at most one.  The robust mean of a function ``f`` is
the median of its block averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DeltaTooSmallError, DimensionError, DomainError, EmptyInputError, PartitionError

__all__ = [
    "AbsoluteConstants",
    "CONSTANTS",
    "BlockPartition",
    "RobustMeanResult",
    "make_regular_partition",
    "median",
    "block_means",
    "robust_mean",
    "choose_block_count",
    "variance_upper_bound",
    "check_variance_condition",
    "mean_half_width",
]


@dataclass(frozen=True)
class AbsoluteConstants:
    """Numerical constants appearing in the deviation and risk bounds.

    ``L6`` has no closed form and is left as ``None``.
    """

    L1: float = 2.0 * math.sqrt(6.0 * math.e)
    L6: float | None = None
    L8: float = 4.0 * math.sqrt(6.0 * math.e)

    @property
    def L2(self) -> float:
        return math.sqrt(2.0) * self.L1

    @property
    def L3(self) -> float:
        return 2.0 * self.L2

    @property
    def L4(self) -> float:
        return 9.0 * self.L1**2 / 4.0

    @property
    def L5(self) -> float:
        return 2.0 * math.sqrt(math.e) + 8.0 * self.L1 * math.e**0.25

    @property
    def L7(self) -> float:
        return 384.0 + 128.0 * math.sqrt(2.0) * math.e * self.L1

    def as_dict(self) -> dict[str, float | None]:
        return {
            "L1": self.L1,
            "L2": self.L2,
            "L3": self.L3,
            "L4": self.L4,
            "L5": self.L5,
            "L6": self.L6,
            "L7": self.L7,
            "L8": self.L8,
        }


CONSTANTS = AbsoluteConstants()

# relative slack so that exact boundary cases are not lost to rounding
EQ_RTOL = 1e-12


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous partition of ``range(n)`` into ``V`` blocks.

    ``ranges`` holds half-open ``(start, stop)`` pairs in increasing order.
    """

    n: int
    ranges: tuple[tuple[int, int], ...]

    @property
    def V(self) -> int:
        return len(self.ranges)

    @property
    def sizes(self) -> list[int]:
        return [b - a for a, b in self.ranges]

    def block(self, k: int) -> slice:
        a, b = self.ranges[k]
        return slice(a, b)

    def to_dict(self) -> dict:
        return {"n": self.n, "V": self.V, "ranges": [list(r) for r in self.ranges]}


@dataclass(frozen=True)
class RobustMeanResult:
    value: float
    block_means: np.ndarray
    V: int
    delta: float | None = None


def make_regular_partition(n: int, V: int) -> BlockPartition:
    """Split ``range(n)`` into ``V`` contiguous blocks.

    The first ``n mod V`` blocks receive ``ceil(n / V)`` points and the rest
    ``floor(n / V)``.  Requires ``1 <= V <= n / 2``.
    """
    n, V = int(n), int(V)
    if V < 1 or 2 * V > n:
        raise PartitionError(
            f"need 1 <= V <= n/2, got n={n}, V={V}; the requested confidence level is too "
            "small for this sample size"
        )
    base, extra = divmod(n, V)
    ranges = []
    start = 0
    for k in range(V):
        stop = start + base + (1 if k < extra else 0)
        ranges.append((start, stop))
        start = stop
    return BlockPartition(n=n, ranges=tuple(ranges))


def median(values: Sequence[float] | np.ndarray) -> float:
    """Median with the midpoint convention for even counts."""
    a = np.sort(np.asarray(values, dtype=float).ravel())
    N = a.size
    if N == 0:
        raise EmptyInputError("median of an empty sequence")
    mid = N // 2
    if N % 2:
        return float(a[mid])
    lo, hi = float(a[mid - 1]), float(a[mid])
    # lo + (hi - lo) / 2 avoids overflow for huge same-sign values
    return lo + (hi - lo) / 2.0 if (lo >= 0) == (hi >= 0) else (lo + hi) / 2.0


def _values(sample, f: Callable | None) -> np.ndarray:
    if f is None:
        vals = np.asarray(sample, dtype=float)
    else:
        vals = np.asarray(f(sample), dtype=float)
    if vals.ndim != 1:
        raise DimensionError(f"f must return one real per observation, got shape {vals.shape}")
    return vals


def block_means(values: np.ndarray, partition: BlockPartition) -> np.ndarray:
    """Exactly-rounded (``math.fsum``) average of ``values`` over each block."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != partition.n:
        raise DimensionError(f"sample has {values.shape[0]} observations, partition expects {partition.n}")
    flat = values.tolist()
    return np.array([math.fsum(flat[a:b]) / (b - a) for a, b in partition.ranges])


def robust_mean(
    sample,
    f: Callable | None,
    partition: BlockPartition,
    delta: float | None = None,
) -> RobustMeanResult:
    """Median of the block means of ``f`` over ``partition``.

    Parameters
    ----------
    sample : array_like
        Observations; any array ``f`` understands (scalars, ``(n, 2)`` pairs...).
    f : callable or None
        Vectorized map from the sample to one real per observation.  ``None``
        uses the observations themselves.
    partition : BlockPartition
        Must have ``partition.n == len(sample)``.
    """
    vals = _values(sample, f)
    means = block_means(vals, partition)
    return RobustMeanResult(value=median(means), block_means=means, V=partition.V, delta=delta)


def choose_block_count(delta: float, n: int, mode: str = "mean") -> int:
    """Number of blocks for confidence level ``delta``.

    ``mode="mean"`` gives ``max(ceil(ln(1/delta)), 1)``; ``mode="m_select"``
    gives ``max(ceil(ln(delta**-2)), 8)``.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if mode == "mean":
        V = max(math.ceil(math.log(1.0 / delta)), 1)
    elif mode == "m_select":
        V = max(math.ceil(-2.0 * math.log(delta)), 8)
    else:
        raise DomainError(f"unknown mode {mode!r}")
    if 2 * V > n:
        raise DeltaTooSmallError(f"delta={delta} needs V={V} blocks but n={n} only allows {n // 2}")
    return V


def variance_upper_bound(sample, f: Callable | None, partition: BlockPartition) -> float:
    """Return ``2 * robust_mean(f**2)``, a high-probability upper bound on Var f."""
    vals = _values(sample, f)
    return 2.0 * robust_mean(vals * vals, None, partition).value


def check_variance_condition(var_f2: float, mean_f2: float, V: int, n: int) -> bool:
    """Whether ``L1 * sqrt(Var f^2) / P f^2 * sqrt(V/n) <= 1/2`` (true when P f^2 = 0)."""
    if var_f2 < 0:
        raise DomainError(f"variance must be nonnegative, got {var_f2}")
    if mean_f2 == 0:
        return True
    return CONSTANTS.L1 * math.sqrt(var_f2) / mean_f2 * math.sqrt(V / n) <= 0.5 * (1.0 + EQ_RTOL)


def mean_half_width(sample, f: Callable | None, partition: BlockPartition) -> float:
    """Deviation half-width ``L1 * sqrt(2 P f^2) * sqrt(V/n)`` with a robust variance plug-in."""
    return CONSTANTS.L1 * math.sqrt(variance_upper_bound(sample, f, partition)) * math.sqrt(
        partition.V / partition.n
    )
