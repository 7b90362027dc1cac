"""Finite dictionaries of basis functions on an interval and their coherence.

Built-in families live on ``[0, 1]``: histogram cells
``mu(I)^{-1/2} 1_I`` and the trigonometric system.  Custom dictionaries
get their Gram matrix from composite Simpson quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import simpson

from .blocks import CONSTANTS, EQ_RTOL
from .errors import ConstructionError, DimensionError, DomainError

__all__ = [
    "BasisFunction",
    "Dictionary",
    "CoherenceStats",
    "LassoHypotheses",
    "build_histogram_dictionary",
    "build_trigonometric_dictionary",
    "build_custom_dictionary",
    "build_polynomial_dictionary",
    "dictionary_from_dict",
    "quadrature_gram",
    "coherence_stats",
    "check_lasso_hypotheses",
    "check_dictionary_condition",
]

QUAD_INTERVALS = 1024
ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class BasisFunction:
    label: str
    func: Callable[[np.ndarray], np.ndarray]
    l2_norm: float
    kind: str = "custom"

    def __call__(self, x) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Dictionary:
    """Ordered family of basis functions with its correlation Gram matrix.

    ``gram[i, j]`` is ``<psi_i, psi_j> / (|psi_i| |psi_j|)``; the unnormalized
    inner products are available as :attr:`inner_products`.
    """

    functions: tuple[BasisFunction, ...]
    gram: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    domain: tuple[float, float] = (0.0, 1.0)

    @property
    def M(self) -> int:
        return len(self.functions)

    def __len__(self) -> int:
        return self.M

    @property
    def labels(self) -> list[str]:
        return [fn.label for fn in self.functions]

    @property
    def norms(self) -> np.ndarray:
        return np.array([fn.l2_norm for fn in self.functions])

    @property
    def inner_products(self) -> np.ndarray:
        d = self.norms
        return d[:, None] * self.gram * d[None, :]

    @property
    def orthonormal(self) -> bool:
        return bool(
            np.allclose(self.gram, np.eye(self.M), rtol=0.0, atol=ORTHO_TOL)
            and np.allclose(self.norms, 1.0, rtol=0.0, atol=ORTHO_TOL)
        )

    def evaluate(self, x) -> np.ndarray:
        """Design matrix of shape ``(len(x), M)``."""
        x = np.asarray(x, dtype=float).ravel()
        if self.kind == "histogram":
            return _histogram_design(np.asarray(self.params["breakpoints"], dtype=float), x)
        return np.column_stack([fn(x) for fn in self.functions]) if self.M else np.empty((x.size, 0))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {k: (list(v) if isinstance(v, (tuple, np.ndarray)) else v) for k, v in self.params.items()},
            "labels": self.labels,
            "domain": list(self.domain),
        }


class CoherenceStats(NamedTuple):
    rho_theta: float
    rho_star: float
    M_theta: int
    J_theta: tuple[int, ...]
    F_theta: float
    G_theta: float
    G_global: float
    zeta_M: float
    kappa_M: float | None


class LassoHypotheses(NamedTuple):
    H1: bool
    H2: bool
    H3: bool


def _cell_index(breaks: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(breaks, x, side="right") - 1
    # right endpoint belongs to the last cell
    return np.where(x == breaks[-1], breaks.size - 2, idx)


def _histogram_design(breaks: np.ndarray, x: np.ndarray) -> np.ndarray:
    idx = _cell_index(breaks, x)
    heights = 1.0 / np.sqrt(np.diff(breaks))
    out = np.zeros((x.size, breaks.size - 1))
    inside = (idx >= 0) & (idx < breaks.size - 1)
    rows = np.nonzero(inside)[0]
    out[rows, idx[inside]] = heights[idx[inside]]
    return out


def _check_breakpoints(breakpoints: Sequence[float]) -> np.ndarray:
    b = np.asarray(breakpoints, dtype=float)
    if b.ndim != 1 or b.size < 2:
        raise ConstructionError("need at least two breakpoints")
    if np.any(np.diff(b) <= 0):
        raise ConstructionError("breakpoints must be strictly increasing")
    return b


def build_histogram_dictionary(breakpoints: Sequence[float]) -> Dictionary:
    """One normalized indicator ``mu(I)^{-1/2} 1_I`` per interval of ``breakpoints``."""
    b = _check_breakpoints(breakpoints)
    if not (math.isclose(b[0], 0.0, abs_tol=1e-12) and math.isclose(b[-1], 1.0, abs_tol=1e-12)):
        raise ConstructionError(f"breakpoints must span [0, 1], got [{b[0]}, {b[-1]}]")
    funcs = []
    for i in range(b.size - 1):
        lo, hi = float(b[i]), float(b[i + 1])
        h = 1.0 / math.sqrt(hi - lo)
        last = i == b.size - 2

        def fn(x, lo=lo, hi=hi, h=h, last=last):
            inside = (x >= lo) & ((x <= hi) if last else (x < hi))
            return np.where(inside, h, 0.0)

        funcs.append(BasisFunction(f"cell{i}", fn, 1.0, "histogram-cell"))
    return Dictionary(
        functions=tuple(funcs),
        gram=np.eye(len(funcs)),
        kind="histogram",
        params={"breakpoints": b.tolist()},
    )


def build_trigonometric_dictionary(max_frequency: int) -> Dictionary:
    """``1, sqrt2 cos(2 pi k x), sqrt2 sin(2 pi k x)`` for ``k = 1..max_frequency``."""
    if max_frequency < 0:
        raise ConstructionError("max_frequency must be >= 0")
    funcs = [BasisFunction("const", lambda x: np.ones_like(x, dtype=float), 1.0, "trigonometric")]
    r2 = math.sqrt(2.0)
    for k in range(1, int(max_frequency) + 1):
        w = 2.0 * math.pi * k
        funcs.append(BasisFunction(f"cos{k}", lambda x, w=w: r2 * np.cos(w * x), 1.0, "trigonometric"))
        funcs.append(BasisFunction(f"sin{k}", lambda x, w=w: r2 * np.sin(w * x), 1.0, "trigonometric"))
    return Dictionary(
        functions=tuple(funcs),
        gram=np.eye(len(funcs)),
        kind="trigonometric",
        params={"max_frequency": int(max_frequency)},
    )


def quadrature_gram(
    funcs: Sequence[Callable[[np.ndarray], np.ndarray]],
    domain: tuple[float, float] = (0.0, 1.0),
    intervals: int = QUAD_INTERVALS,
) -> np.ndarray:
    """Matrix of inner products ``<f_i, f_j>`` by composite Simpson quadrature."""
    x = np.linspace(domain[0], domain[1], intervals + 1)
    vals = np.array([np.asarray(f(x), dtype=float) for f in funcs])
    prods = vals[:, None, :] * vals[None, :, :]
    return simpson(prods, x=x, axis=-1)


def build_custom_dictionary(
    funcs: Sequence[Callable[[np.ndarray], np.ndarray]],
    labels: Sequence[str] | None = None,
    domain: tuple[float, float] = (0.0, 1.0),
    kind: str = "custom",
    params: dict | None = None,
) -> Dictionary:
    if not funcs:
        raise ConstructionError("a dictionary needs at least one function")
    labels = list(labels) if labels is not None else [f"f{i}" for i in range(len(funcs))]
    if len(labels) != len(funcs):
        raise ConstructionError("one label per function")
    inner = quadrature_gram(funcs, domain)
    norms = np.sqrt(np.diag(inner))
    if np.any(norms <= 0):
        raise ConstructionError("dictionary functions must have positive L2 norm")
    gram = inner / np.outer(norms, norms)
    gram = (gram + gram.T) / 2.0
    np.fill_diagonal(gram, 1.0)
    basis = tuple(BasisFunction(lab, f, float(nrm), "custom") for lab, f, nrm in zip(labels, funcs, norms))
    return Dictionary(functions=basis, gram=gram, kind=kind, params=params or {}, domain=tuple(domain))


def build_polynomial_dictionary(degree: int, domain: tuple[float, float] = (0.0, 1.0)) -> Dictionary:
    """Monomials ``1, x, ..., x^degree`` (not orthonormal)."""
    if degree < 0:
        raise ConstructionError("degree must be >= 0")
    funcs = [lambda x, p=p: np.asarray(x, dtype=float) ** p for p in range(degree + 1)]
    return build_custom_dictionary(
        funcs,
        labels=[f"x^{p}" for p in range(degree + 1)],
        domain=domain,
        kind="polynomial",
        params={"degree": int(degree)},
    )


def dictionary_from_dict(doc: dict) -> Dictionary:
    """Rebuild a built-in dictionary from its :meth:`Dictionary.to_dict` form."""
    kind = doc.get("kind")
    params = doc.get("params", {})
    if kind == "histogram":
        return build_histogram_dictionary(params["breakpoints"])
    if kind == "trigonometric":
        return build_trigonometric_dictionary(int(params["max_frequency"]))
    if kind == "polynomial":
        return build_polynomial_dictionary(int(params["degree"]), tuple(doc.get("domain", (0.0, 1.0))))
    raise ConstructionError(f"cannot rebuild dictionary of kind {kind!r}")


def coherence_stats(
    dictionary: Dictionary,
    theta,
    weights,
    n: int,
    delta: float,
    kappa_M: float | None = None,
) -> CoherenceStats:
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(weights, dtype=float)
    M = dictionary.M
    if theta.shape != (M,) or w.shape != (M,):
        raise DimensionError(f"theta and weights must have length {M}")
    if np.any(w <= 0):
        raise DomainError("weights must be strictly positive")
    norms = dictionary.norms
    gram = dictionary.gram
    J = tuple(int(i) for i in np.nonzero(theta)[0])
    log_term = math.log(2.0 * M / delta)

    off = np.abs(gram - np.diag(np.diag(gram)))
    rho_theta = float(max((off[j].max() for j in J), default=0.0)) if M > 1 else 0.0
    # lambda' > lambda in storage order
    rho_star = float(sum(off[j, j + 1 :].sum() for j in J))
    F = math.sqrt(n / log_term) * max((w[j] / norms[j] for j in J), default=0.0)
    G_theta = float(sum(w[j] ** 2 for j in J))
    G = math.sqrt(log_term / n) * float(np.max(norms / w))
    zeta = float(np.linalg.eigvalsh(gram)[0])
    return CoherenceStats(rho_theta, rho_star, len(J), J, F, G_theta, G, zeta, kappa_M)


def check_lasso_hypotheses(stats: CoherenceStats) -> LassoHypotheses:
    h1 = 16.0 * stats.G_global * stats.F_theta * stats.M_theta <= 1.0
    h2 = 16.0 * stats.G_global * stats.F_theta * stats.rho_star * math.sqrt(stats.M_theta) <= 1.0
    h3 = stats.kappa_M is not None and stats.kappa_M > 0 and stats.zeta_M >= stats.kappa_M
    return LassoHypotheses(bool(h1), bool(h2), bool(h3))


def check_dictionary_condition(moments, V_lambda, n: int) -> bool:
    """Per-label variance condition on the squared dictionary functions.

    ``moments`` is a sequence of ``(Var_P psi^2, P psi^2)`` pairs and
    ``V_lambda`` the block count used for each label.
    """
    moments = list(moments)
    V_lambda = list(V_lambda)
    if len(moments) != len(V_lambda):
        raise DimensionError("one block count per dictionary label")
    ok = True
    for (var2, mean2), V in zip(moments, V_lambda):
        if var2 < 0:
            raise DomainError(f"variance must be nonnegative, got {var2}")
        if mean2 != 0 and CONSTANTS.L1 * math.sqrt(var2) / mean2 * math.sqrt(V / n) > 0.5 * (1.0 + EQ_RTOL):
            ok = False
    return ok
