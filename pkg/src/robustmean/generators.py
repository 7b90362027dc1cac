"""Synthetic samples with known moments for the Monte Carlo experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.signal import lfilter
from scipy.special import ndtr

from .errors import DimensionError, DomainError

__all__ = [
    "GeneratorSpec",
    "generate",
    "rep_rng",
    "analytic_moments",
    "histogram_cell_masses",
    "histogram_dictionary_moments",
    "regression_constants",
]

FAMILIES = (
    "gaussian",
    "constant",
    "student_t",
    "pareto",
    "histogram_density",
    "contaminated",
    "ar1",
    "regression",
)


@dataclass(frozen=True)
class GeneratorSpec:
    """A sampling family and its parameters.

    ========================  ==============================================
    family                    params
    ========================  ==============================================
    ``gaussian``              ``mean``, ``sd``
    ``constant``              ``value``
    ``student_t``             ``df > 2``, ``loc``, ``scale``
    ``pareto``                ``shape > 2``, ``scale`` (support ``[scale, inf)``)
    ``histogram_density``     ``cell_probs``, optional ``breakpoints`` on [0, 1]
    ``contaminated``          ``base`` (a generator dict), ``fraction``, ``magnitude``
    ``ar1``                   ``a`` in (-1, 1), ``marginal`` gaussian | uniform
    ``regression``            ``noise`` gaussian | student_t, ``df``
    ========================  ==============================================
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; choose from {', '.join(FAMILIES)}")
        p = self.params
        if self.family == "student_t" and not p.get("df", 0) > 2:
            raise DomainError("student_t needs df > 2: the variance is infinite otherwise")
        if self.family == "pareto" and not p.get("shape", 0) > 2:
            raise DomainError("pareto needs shape > 2: the variance is infinite otherwise")
        if self.family == "gaussian" and p.get("sd", 1.0) < 0:
            raise DomainError("sd must be nonnegative")
        if self.family == "histogram_density":
            probs = np.asarray(p.get("cell_probs", ()), dtype=float)
            if probs.size == 0 or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-9):
                raise DomainError("cell_probs must be nonnegative and sum to 1")
            if "breakpoints" in p and len(p["breakpoints"]) != probs.size + 1:
                raise DimensionError("need one more breakpoint than cells")
        if self.family == "contaminated":
            if not 0 <= p.get("fraction", 0.0) <= 1:
                raise DomainError("fraction must lie in [0, 1]")
            GeneratorSpec.from_dict(p["base"])
        if self.family == "ar1" and not -1 < p.get("a", 0.0) < 1:
            raise DomainError("ar1 needs |a| < 1 for a stationary path")
        if self.family == "regression" and p.get("noise", "gaussian") == "student_t" and not p.get("df", 0) > 2:
            raise DomainError("student_t noise needs df > 2")

    @classmethod
    def from_dict(cls, doc) -> "GeneratorSpec":
        if isinstance(doc, GeneratorSpec):
            return doc
        doc = dict(doc)
        family = doc.pop("family")
        return cls(family, doc.pop("params", doc))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep``; a pure function of ``(seed, rep)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def _breaks(p: dict, cells: int) -> np.ndarray:
    if "breakpoints" in p:
        return np.asarray(p["breakpoints"], dtype=float)
    return np.linspace(0.0, 1.0, cells + 1)


def _unit_t(rng, df, size):
    # Student t rescaled to unit variance
    return rng.standard_t(df, size) * math.sqrt((df - 2.0) / df)


def generate(spec, n: int, seed) -> np.ndarray:
    """Draw ``n`` observations; ``seed`` is an int, a SeedSequence or a Generator.

    Regression samples are ``(n, 2)`` arrays of ``(x, y)`` rows; every other
    family gives a 1-D array.
    """
    spec = GeneratorSpec.from_dict(spec)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = spec.params
    fam = spec.family
    if fam == "gaussian":
        return p.get("mean", 0.0) + p.get("sd", 1.0) * rng.standard_normal(n)
    if fam == "constant":
        return np.full(n, float(p.get("value", 0.0)))
    if fam == "student_t":
        return p.get("loc", 0.0) + p.get("scale", 1.0) * rng.standard_t(p["df"], n)
    if fam == "pareto":
        # numpy's pareto is the Lomax law; shifting by one gives the classical Pareto
        return (rng.pareto(p["shape"], n) + 1.0) * p.get("scale", 1.0)
    if fam == "histogram_density":
        probs = np.asarray(p["cell_probs"], dtype=float)
        b = _breaks(p, probs.size)
        cells = rng.choice(probs.size, size=n, p=probs / probs.sum())
        return b[cells] + rng.random(n) * np.diff(b)[cells]
    if fam == "contaminated":
        x = generate(p["base"], n, rng)
        hit = rng.random(n) < p["fraction"]
        return x + np.where(hit, float(p["magnitude"]), 0.0)
    if fam == "ar1":
        a = float(p.get("a", 0.0))
        eps = rng.standard_normal(n)
        # stationary start: x_0 ~ N(0, 1 / (1 - a^2)), then x_t = a x_{t-1} + eps_t
        eps[0] /= math.sqrt(1.0 - a * a)
        x = lfilter([1.0], [1.0, -a], eps)
        if p.get("marginal", "gaussian") == "uniform":
            return ndtr(x * math.sqrt(1.0 - a * a))
        return x
    if fam == "regression":
        x = rng.random(n)
        if p.get("noise", "gaussian") == "student_t":
            eps = _unit_t(rng, p["df"], n)
        else:
            eps = rng.standard_normal(n)
        y = 1.0 + x + (0.5 + x) * eps
        return np.column_stack([x, y])
    raise DomainError(f"unknown family {fam!r}")  # pragma: no cover


def analytic_moments(spec) -> dict:
    """Mean, variance and fourth-moment information of the marginal law.

    ``var_sq`` is ``Var(X^2)``; it is ``inf`` when the fourth moment diverges.
    """
    spec = GeneratorSpec.from_dict(spec)
    p = spec.params
    fam = spec.family
    if fam == "gaussian":
        m, s = p.get("mean", 0.0), p.get("sd", 1.0)
        m2 = m * m + s * s
        m4 = m**4 + 6 * m * m * s * s + 3 * s**4
        return {"mean": m, "variance": s * s, "second_moment": m2, "var_sq": m4 - m2 * m2}
    if fam == "constant":
        c = float(p.get("value", 0.0))
        return {"mean": c, "variance": 0.0, "second_moment": c * c, "var_sq": 0.0}
    if fam == "student_t":
        df, loc, sc = p["df"], p.get("loc", 0.0), p.get("scale", 1.0)
        var = sc * sc * df / (df - 2.0)
        m2 = loc * loc + var
        if df > 4 and loc == 0:
            m4 = sc**4 * 3.0 * df * df / ((df - 2.0) * (df - 4.0))
            var_sq = m4 - m2 * m2
        elif df > 4:
            raise DomainError("fourth moment only tabulated for loc = 0")
        else:
            var_sq = math.inf
        return {"mean": loc, "variance": var, "second_moment": m2, "var_sq": var_sq}
    if fam == "pareto":
        a, xm = p["shape"], p.get("scale", 1.0)
        mean = a * xm / (a - 1.0)
        m2 = a * xm * xm / (a - 2.0)
        m4 = a * xm**4 / (a - 4.0) if a > 4 else math.inf
        return {"mean": mean, "variance": m2 - mean * mean, "second_moment": m2, "var_sq": m4 - m2 * m2}
    if fam == "ar1":
        a = float(p.get("a", 0.0))
        if p.get("marginal", "gaussian") == "uniform":
            return {"mean": 0.5, "variance": 1.0 / 12.0, "second_moment": 1.0 / 3.0, "var_sq": 1.0 / 5.0 - 1.0 / 9.0}
        v = 1.0 / (1.0 - a * a)
        return {"mean": 0.0, "variance": v, "second_moment": v, "var_sq": 2.0 * v * v}
    if fam == "histogram_density":
        probs = np.asarray(p["cell_probs"], dtype=float)
        b = _breaks(p, probs.size)
        lo, hi = b[:-1], b[1:]
        m1 = float(np.sum(probs * (lo + hi) / 2.0))
        m2 = float(np.sum(probs * (lo * lo + lo * hi + hi * hi) / 3.0))
        m4 = float(np.sum(probs * (hi**5 - lo**5) / (5.0 * (hi - lo))))
        return {"mean": m1, "variance": m2 - m1 * m1, "second_moment": m2, "var_sq": m4 - m2 * m2}
    raise DomainError(f"no analytic moments for family {fam!r}")


def histogram_cell_masses(density_breaks, cell_probs, breaks) -> np.ndarray:
    """Probability of each interval of ``breaks`` under a piecewise-constant density."""
    db = np.asarray(density_breaks, dtype=float)
    probs = np.asarray(cell_probs, dtype=float)
    heights = probs / np.diff(db)
    b = np.asarray(breaks, dtype=float)
    out = np.zeros(b.size - 1)
    for i in range(b.size - 1):
        lo, hi = b[i], b[i + 1]
        overlap = np.clip(np.minimum(db[1:], hi) - np.maximum(db[:-1], lo), 0.0, None)
        out[i] = float(np.sum(overlap * heights))
    return out


def histogram_dictionary_moments(masses, breaks) -> dict:
    """Exact moments of the normalized cell indicators ``psi = mu(I)^{-1/2} 1_I``.

    With ``p`` the cell mass and ``w`` the width: ``P psi = p / sqrt(w)``,
    ``P psi^2 = p / w``, ``Var psi = p/w - p^2/w``, ``Var psi^2 = (p - p^2) / w^2``.
    """
    p = np.asarray(masses, dtype=float)
    w = np.diff(np.asarray(breaks, dtype=float))
    return {
        "first": p / np.sqrt(w),
        "second": p / w,
        "var": p / w - p * p / w,
        "var_sq": (p - p * p) / (w * w),
        "P_Psi": float(np.sum(p / w)),
        "proj_norm2": float(np.sum(p * p / w)),
    }


def regression_constants(intervals: int = 4096) -> dict:
    """Moment constants for the design ``X ~ U[0, 1]``, basis ``{1, x}``,
    ``s*(x) = 1 + x`` and noise level ``0.5 + x``.

    ``Psi(x) = 1 + 3 (2x - 1)^2`` is the envelope of the unit ball of the
    span in ``L2(P_X)``; ``M_Psi = E Psi^2`` and ``D = E[sigma^2(X) Psi(X)]``.
    """
    x = np.linspace(0.0, 1.0, intervals + 1)
    psi = 1.0 + 3.0 * (2.0 * x - 1.0) ** 2
    return {
        "M_Psi": float(simpson(psi * psi, x=x)),
        "D": float(simpson((0.5 + x) ** 2 * psi, x=x)),
    }
