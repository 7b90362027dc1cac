"""Penalized selection among density estimators expanded in an orthonormal system.

Every candidate is stored through its coefficients on a shared orthonormal
dictionary plus the squared norm of whatever lies outside its span.  A model
is a subset of dictionary labels; the projection of a candidate onto a model
keeps the coefficients on that subset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import simpson

from .blocks import CONSTANTS, BlockPartition, block_means, make_regular_partition, median
from .dictionary import Dictionary
from .errors import DeltaTooSmallError, DimensionError, DomainError, UnsupportedModelError

__all__ = [
    "L0",
    "ModelSpec",
    "CandidateEstimator",
    "CriterionValue",
    "SelectionResult",
    "candidate_from_function",
    "classical_criterion",
    "robust_criterion",
    "classical_penalty_bound",
    "classical_penalty",
    "robust_penalty_bound",
    "robust_penalty",
    "label_partitions",
    "with_penalties",
    "select",
]

L0 = 16.0 / math.log(2.0) + 8.0


@dataclass(frozen=True)
class ModelSpec:
    """Linear span of the dictionary functions indexed by ``labels``.

    ``psi_sup_norm`` is ``sup_x sum_l psi_l(x)^2``; ``None`` marks an unbounded
    envelope.
    """

    name: str
    labels: tuple[int, ...]
    pen: float = 0.0
    psi_sup_norm: float | None = None

    def psi(self, dictionary: Dictionary, x) -> np.ndarray:
        if not self.labels:
            return np.zeros(np.asarray(x).size)
        design = dictionary.evaluate(x)[:, list(self.labels)]
        return np.sum(design**2, axis=1)

    def with_pen(self, pen: float) -> "ModelSpec":
        if pen < 0:
            raise DomainError("penalty must be nonnegative")
        return ModelSpec(self.name, self.labels, float(pen), self.psi_sup_norm)


@dataclass(frozen=True)
class CandidateEstimator:
    name: str
    coef: np.ndarray
    menu: tuple[ModelSpec, ...]
    residual_norm2: float = 0.0

    def projection(self, model: ModelSpec) -> np.ndarray:
        """Coefficients of the orthogonal projection onto ``model``."""
        return self.coef[list(model.labels)]

    @property
    def norm2(self) -> float:
        return float(self.coef @ self.coef) + self.residual_norm2

    def projection_gap2(self, model: ModelSpec) -> float:
        """``|proj_m(s) - s|^2`` by Pythagoras."""
        beta = self.projection(model)
        return max(self.norm2 - float(beta @ beta), 0.0)


@dataclass(frozen=True)
class CriterionValue:
    value: float
    model: str
    per_model: dict[str, float]


@dataclass
class SelectionResult:
    """Outcome of :func:`select`; ``criteria`` is aligned with the candidate list."""

    theta_hat: str
    index: int
    alpha: float
    mode: str
    names: list[str] = field(default_factory=list)
    criteria: list[CriterionValue] = field(default_factory=list)

    @property
    def chosen_models(self) -> list[str]:
        return [cv.model for cv in self.criteria]

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "index": self.index,
            "alpha": self.alpha,
            "mode": self.mode,
            "candidates": [
                {"name": name, "criterion": cv.value, "model": cv.model, "per_model": cv.per_model}
                for name, cv in zip(self.names, self.criteria)
            ],
        }


def candidate_from_function(
    name: str,
    func: Callable[[np.ndarray], np.ndarray],
    dictionary: Dictionary,
    menu: Sequence[ModelSpec],
    intervals: int = 4096,
) -> CandidateEstimator:
    """Expand an arbitrary estimate on ``dictionary`` by Simpson quadrature.

    Histogram dictionaries are integrated cell by cell, with cell midpoints
    used for the basis values, so the jumps do not spoil the quadrature.
    """
    if dictionary.kind == "histogram":
        breaks = np.asarray(dictionary.params["breakpoints"], dtype=float)
    else:
        breaks = np.asarray(dictionary.domain, dtype=float)
    coef = np.zeros(dictionary.M)
    total = 0.0
    per_piece = max(2 * (intervals // (2 * (breaks.size - 1))), 2)
    for a, b in zip(breaks[:-1], breaks[1:]):
        x = np.linspace(a, b, per_piece + 1)
        fx = np.asarray(func(x), dtype=float)
        if dictionary.kind == "histogram":
            design = np.repeat(dictionary.evaluate([0.5 * (a + b)]), x.size, axis=0)
        else:
            design = dictionary.evaluate(x)
        coef += simpson(design * fx[:, None], x=x, axis=0)
        total += float(simpson(fx * fx, x=x))
    return CandidateEstimator(name, coef, tuple(menu), max(total - float(coef @ coef), 0.0))


def _check_menu(candidate: CandidateEstimator, M: int):
    if not candidate.menu:
        raise DomainError(f"candidate {candidate.name!r} has an empty model menu")
    if candidate.coef.shape != (M,):
        raise DimensionError(f"candidate {candidate.name!r} has {candidate.coef.size} coefficients, dictionary has {M}")


def _criterion(candidate: CandidateEstimator, alpha: float, empirical: np.ndarray) -> CriterionValue:
    per_model = {}
    for model in candidate.menu:
        beta = candidate.projection(model)
        emp = empirical[list(model.labels)]
        val = (
            float(beta @ beta)
            - 2.0 * float(beta @ emp)
            + alpha * candidate.projection_gap2(model)
            + model.pen
        )
        per_model[model.name] = val
    best = min(per_model, key=per_model.get)
    return CriterionValue(per_model[best], best, per_model)


def _plain_means(sample, dictionary: Dictionary) -> np.ndarray:
    design = dictionary.evaluate(sample)
    n = design.shape[0]
    return np.array([math.fsum(design[:, j].tolist()) / n for j in range(dictionary.M)])


def _robust_means(sample, dictionary: Dictionary, partitions: Mapping[int, BlockPartition], labels, square=False):
    design = dictionary.evaluate(sample)
    out = np.full(dictionary.M, np.nan)
    for j in labels:
        col = design[:, j] ** 2 if square else design[:, j]
        out[j] = median(block_means(col, partitions[j]))
    return out


def classical_criterion(candidate: CandidateEstimator, sample, alpha: float, dictionary: Dictionary) -> CriterionValue:
    """``min_m |s_m|^2 - 2 P_n s_m + alpha |s_m - s|^2 + pen(m)`` over the menu."""
    _check_menu(candidate, dictionary.M)
    return _criterion(candidate, alpha, _plain_means(sample, dictionary))


def robust_criterion(
    candidate: CandidateEstimator,
    sample,
    alpha: float,
    dictionary: Dictionary,
    partitions: Mapping[int, BlockPartition],
) -> CriterionValue:
    """Same as :func:`classical_criterion` with ``P_n psi_l`` replaced by a
    median-of-means over the label's own partition."""
    _check_menu(candidate, dictionary.M)
    labels = sorted({j for m in candidate.menu for j in m.labels})
    missing = [j for j in labels if j not in partitions]
    if missing:
        raise DomainError(f"no partition for labels {missing}")
    return _criterion(candidate, alpha, _robust_means(sample, dictionary, partitions, labels))


def label_partitions(
    n: int,
    delta: float,
    labels: Sequence[int],
    priors: Mapping[int, float] | None = None,
) -> dict[int, BlockPartition]:
    """One regular partition per label with ``V_l = ceil(ln(2 / (pi(l) delta)))`` blocks.

    ``priors`` defaults to uniform over ``labels``.
    """
    labels = list(labels)
    if priors is None:
        priors = {j: 1.0 / len(labels) for j in labels}
    out = {}
    for j in labels:
        V = max(math.ceil(math.log(2.0 / (priors[j] * delta))), 1)
        if 2 * V > n:
            raise DeltaTooSmallError(f"label {j} needs V={V} blocks but n={n} only allows {n // 2}")
        out[j] = make_regular_partition(n, V)
    return out


def classical_penalty_bound(
    p_psi: float,
    psi_sup_norm: float | None,
    n: int,
    delta: float,
    nu: float,
    prior: float,
    s_norm: float,
) -> float:
    """``(5/2 + 2 L0 nu) P Psi_m / n + (2 L0 |s| / nu) r_m + (2 L0 / nu^3) r_m^2``
    with ``r_m = sqrt(|Psi_m|_inf) ln(2 / (pi(m) delta)) / n``."""
    if psi_sup_norm is None or not math.isfinite(psi_sup_norm):
        raise UnsupportedModelError("classical penalty needs a bounded Psi_m; use robust_penalty instead")
    # the underlying concentration bound holds for every nu > 0
    if not nu > 0:
        raise DomainError("nu must be positive")
    r = math.sqrt(psi_sup_norm) * math.log(2.0 / (prior * delta)) / n
    return (2.5 + 2.0 * L0 * nu) * p_psi / n + 2.0 * L0 * s_norm / nu * r + 2.0 * L0 / nu**3 * r * r


def classical_penalty(
    model: ModelSpec,
    sample,
    dictionary: Dictionary,
    delta: float,
    nu: float,
    prior: float,
    s_norm: float,
    partition: BlockPartition | None = None,
) -> float:
    """Classical penalty with ``P Psi_m`` replaced by its median-of-means estimate."""
    x = np.asarray(sample, dtype=float).ravel()
    if partition is None:
        partition = make_regular_partition(x.size, max(math.ceil(math.log(1.0 / delta)), 1))
    p_psi = median(block_means(model.psi(dictionary, x), partition))
    return classical_penalty_bound(p_psi, model.psi_sup_norm, x.size, delta, nu, prior, s_norm)


def _check_epsilon(epsilon: float):
    if not 0 < epsilon < 0.25:
        raise DomainError(f"epsilon must lie in (0, 1/4), got {epsilon}")


def robust_penalty_bound(variances, V_lambda, n: int, epsilon: float) -> float:
    """``L4 / (epsilon n) * sum_l Var(psi_l) V_l`` from population variances."""
    _check_epsilon(epsilon)
    return CONSTANTS.L4 / (epsilon * n) * float(np.dot(variances, V_lambda))


def robust_penalty(
    model: ModelSpec,
    sample,
    dictionary: Dictionary,
    epsilon: float,
    partitions: Mapping[int, BlockPartition],
) -> float:
    """Data-driven ``2 L4 / (epsilon n) * sum_l Pbar psi_l^2 V_l``."""
    _check_epsilon(epsilon)
    if not model.labels:
        return 0.0
    x = np.asarray(sample, dtype=float).ravel()
    second = _robust_means(x, dictionary, partitions, model.labels, square=True)
    total = sum(second[j] * partitions[j].V for j in model.labels)
    return 2.0 * CONSTANTS.L4 / (epsilon * x.size) * total


def with_penalties(candidates: Sequence[CandidateEstimator], pens: Mapping[str, float]) -> list[CandidateEstimator]:
    """Copy of ``candidates`` with every menu model's ``pen`` looked up by name."""
    out = []
    for cand in candidates:
        menu = tuple(m.with_pen(pens[m.name]) for m in cand.menu)
        out.append(CandidateEstimator(cand.name, cand.coef, menu, cand.residual_norm2))
    return out


def select(
    candidates: Sequence[CandidateEstimator],
    sample,
    alpha: float,
    dictionary: Dictionary,
    mode: str = "robust",
    partitions: Mapping[int, BlockPartition] | None = None,
    delta: float | None = None,
    priors: Mapping[int, float] | None = None,
) -> SelectionResult:
    """Pick the candidate with the smallest criterion; ties go to the first declared.

    In robust mode, ``partitions`` may be omitted and are then built from
    ``delta`` and ``priors`` (uniform over every label used by some menu).
    """
    if not candidates:
        raise DomainError("no candidates")
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    if mode == "classical":
        criteria = [classical_criterion(c, sample, alpha, dictionary) for c in candidates]
    elif mode == "robust":
        if partitions is None:
            if delta is None:
                raise DomainError("robust selection needs partitions or delta")
            labels = sorted({j for c in candidates for m in c.menu for j in m.labels})
            partitions = label_partitions(np.asarray(sample).size, delta, labels, priors)
        criteria = [robust_criterion(c, sample, alpha, dictionary, partitions) for c in candidates]
    else:
        raise DomainError(f"unknown mode {mode!r}")
    values = [cv.value for cv in criteria]
    idx = int(np.argmin(values))
    return SelectionResult(candidates[idx].name, idx, float(alpha), mode, [c.name for c in candidates], criteria)
