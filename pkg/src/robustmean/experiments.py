"""Monte Carlo coverage experiments for the deviation and risk bounds.

Every experiment repeats a procedure on independent samples, evaluates a
statistic against its high-probability bound and counts violations.  The
per-replication random stream depends only on ``(seed, rep)``, so reports
are reproducible bit for bit whatever the number of workers.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .blocks import CONSTANTS, check_variance_condition, choose_block_count, make_regular_partition, robust_mean
from .dictionary import (
    build_histogram_dictionary,
    build_polynomial_dictionary,
    build_trigonometric_dictionary,
    check_dictionary_condition,
)
from .errors import ConditionError, DomainError
from .generators import (
    GeneratorSpec,
    analytic_moments,
    generate,
    histogram_dictionary_moments,
    regression_constants,
    rep_rng,
)
from .lasso import lasso_remainder, lasso_weights, solve_lasso
from .mestimation import (
    MarginParams,
    contrast_kullback_histogram,
    contrast_l2_density,
    contrast_l2_regression,
    rate_quantities,
    select_m_estimator,
)
from .mixing import ar1_mixing_coefficients, mixing_block_count, mixing_rate_quantities, select_m_estimator_mixing
from .selection import (
    L0,
    CandidateEstimator,
    ModelSpec,
    classical_penalty,
    label_partitions,
    robust_penalty,
    select,
    with_penalties,
)

__all__ = ["KINDS", "DEFAULTS", "ExperimentReport", "run_coverage_experiment", "coverage_margin"]

SCHEMA_VERSION = 1
MIN_REPS = 100

DEFAULTS: dict[str, dict] = {
    "prop21": {"generator": {"family": "gaussian", "params": {"mean": 0.0, "sd": 1.0}}, "n": 2000, "delta": 0.05},
    "cor22": {"generator": {"family": "gaussian", "params": {"mean": 0.0, "sd": 1.0}}, "n": 2000, "delta": 0.05},
    "thm31": {"cells": 16, "active": [3, 10], "n": 4000, "delta": 0.05, "kappa": 1.0},
    "thm41": {
        "n": 1000,
        "delta": 0.05,
        "alpha": 1.0,
        "nu": 0.5,
        "frequencies": [0, 1, 2, 4, 8],
        "truth": {"cos1": 0.5, "sin2": 0.3},
    },
    "thm42": {
        "n": 1000,
        "delta": 0.05,
        "alpha": 1.0,
        "epsilon": 0.2,
        "frequencies": [0, 1, 2, 4, 8],
        "truth": {"cos1": 0.5, "sin2": 0.3},
    },
    "thm51_l2": {"cell_probs": [0.25, 0.25, 0.25, 0.25], "n": 1600, "delta": 0.01},
    "prop55_kull": {"cell_probs": [0.1, 0.2, 0.3, 0.4], "n": 1600, "delta": 0.05, "Delta": 2.0, "C_reg": 1.0},
    "prop57_reg": {"n": 10400, "delta": 0.05, "noise": "gaussian", "df": 5},
    "thm63_mixing": {"a": 0.5, "cells": 4, "n": 6400, "delta": 0.05, "Delta": 2.0, "horizon": 400},
}
KINDS = tuple(DEFAULTS)


def coverage_margin(rate: float, reps: int) -> float:
    """Three binomial standard errors around ``rate``."""
    rate = min(max(rate, 0.0), 1.0)
    return 3.0 * math.sqrt(rate * (1.0 - rate) / reps)


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    constants: dict
    reps: int
    seed: int
    violations: int
    coverage: float
    allowed_rate: float
    margin: float
    ratio_mean: float | None
    ratio_p95: float | None
    rows: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    wall_ms: float | None = None

    @property
    def violation_rate(self) -> float:
        return self.violations / self.reps

    @property
    def passed(self) -> bool:
        return self.violation_rate <= self.allowed_rate + self.margin

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        lines = ["rep,statistic,bound,violated"]
        for i, (s, b) in enumerate(zip(self.rows["statistic"], self.rows["bound"])):
            lines.append(f"{i},{s!r},{b!r},{int(s > b)}")
        return "\n".join(lines) + "\n"


@dataclass
class _Setup:
    rep: Callable[[np.random.Generator], tuple[float, float]]
    allowed_rate: float
    constants: dict
    extras: Callable[[list], dict] | None = None


# ---------------------------------------------------------------- per-kind setups


def _generator(cfg) -> GeneratorSpec:
    return GeneratorSpec.from_dict(cfg["generator"])


def _setup_prop21(cfg) -> _Setup:
    spec = _generator(cfg)
    mom = analytic_moments(spec)
    n, delta = cfg["n"], cfg["delta"]
    V = choose_block_count(delta, n, "mean")
    part = make_regular_partition(n, V)
    bound = CONSTANTS.L1 * math.sqrt(mom["variance"]) * math.sqrt(V / n)

    def rep(rng):
        x = generate(spec, n, rng)
        return robust_mean(x, None, part).value - mom["mean"], bound

    return _Setup(rep, delta, {"V": V})


def _setup_cor22(cfg) -> _Setup:
    spec = _generator(cfg)
    mom = analytic_moments(spec)
    n, delta = cfg["n"], cfg["delta"]
    V = choose_block_count(delta, n, "mean")
    if not math.isfinite(mom["var_sq"]):
        raise ConditionError("C(f)", f"Var(f^2) is infinite for {spec.family} {spec.params}")
    if not check_variance_condition(mom["var_sq"], mom["second_moment"], V, n):
        raise ConditionError("C(f)", f"L1 sqrt(Var f^2) / P f^2 sqrt(V/n) exceeds 1/2 at n={n}, V={V}")
    part = make_regular_partition(n, V)
    var = mom["variance"]

    def rep(rng):
        x = generate(spec, n, rng)
        return var, 2.0 * robust_mean(x * x, None, part).value

    return _Setup(rep, delta, {"V": V})


def _setup_thm31(cfg) -> _Setup:
    cells, n, delta, kappa = cfg["cells"], cfg["n"], cfg["delta"], cfg["kappa"]
    active = list(cfg["active"])
    breaks = np.linspace(0.0, 1.0, cells + 1)
    dic = build_histogram_dictionary(breaks)
    probs = np.zeros(cells)
    probs[active] = 1.0 / len(active)
    spec = GeneratorSpec("histogram_density", {"cell_probs": probs.tolist()})
    mom = histogram_dictionary_moments(probs, breaks)
    theta_star = mom["first"]
    V = choose_block_count(delta / (4.0 * cells), n, "mean")
    if not check_dictionary_condition(zip(mom["var_sq"], mom["second"]), [V] * cells, n):
        raise ConditionError("C(D)", "variance condition fails for some dictionary function")
    part = make_regular_partition(n, V)
    floors = CONSTANTS.L3 * np.sqrt(mom["second"]) * math.sqrt(V / n)

    def rep(rng):
        x = generate(spec, n, rng)
        problem = lasso_weights(x, dic, delta, part)
        fit = solve_lasso(problem)
        err = float(np.sum((fit.theta_hat - theta_star) ** 2))
        R = lasso_remainder(dic, theta_star, problem.weights, n, delta, kappa)["H3"]
        return err, 16.0 * R

    return _Setup(rep, 2.0 * delta, {"V": V, "weight_floors": floors.tolist()})


def _trig_setup(cfg):
    freqs = sorted(int(f) for f in cfg["frequencies"])
    dic = build_trigonometric_dictionary(max(freqs))
    truth = np.zeros(dic.M)
    truth[0] = 1.0
    for lab, amp in cfg["truth"].items():
        # amplitude of cos/sin, the basis carries a sqrt(2)
        truth[dic.labels.index(lab)] = amp / math.sqrt(2.0)
    spans = {f: list(range(2 * f + 1)) for f in freqs}
    menu = tuple(ModelSpec(f"freq<={f}", tuple(spans[f]), 0.0, 1.0 + 2.0 * f) for f in freqs)
    density_grid = np.linspace(0.0, 1.0, 4097)
    dens = dic.evaluate(density_grid) @ truth
    if dens.min() < 0:
        raise DomainError("trigonometric truth is not a density")
    return freqs, dic, truth, spans, menu


def _trig_sampler(dic, truth, n, rng):
    # rejection sampling from a bounded density on [0, 1]
    grid = np.linspace(0.0, 1.0, 4097)
    top = float(np.max(dic.evaluate(grid) @ truth)) * 1.01
    out = np.empty(0)
    while out.size < n:
        x = rng.random(2 * n)
        u = rng.random(2 * n) * top
        out = np.concatenate([out, x[u < dic.evaluate(x) @ truth]])
    return out[:n]


def _candidates(dic, spans, menu, x):
    emp = dic.evaluate(x).mean(axis=0)
    cands = []
    for f, idx in spans.items():
        coef = np.zeros(dic.M)
        coef[idx] = emp[idx]
        cands.append(CandidateEstimator(f"proj<={f}", coef, menu))
    return cands


def _oracle_rhs(cands, truth, loss_w, gap_w, pen_w):
    best = math.inf
    for c in cands:
        loss = float(np.sum((c.coef - truth) ** 2))
        inner = min(gap_w * c.projection_gap2(m) + pen_w * m.pen for m in c.menu)
        best = min(best, loss_w * loss + inner)
    return best


def _setup_thm41(cfg) -> _Setup:
    n, delta, alpha, nu = cfg["n"], cfg["delta"], cfg["alpha"], cfg["nu"]
    freqs, dic, truth, spans, menu = _trig_setup(cfg)
    s_norm = float(np.linalg.norm(truth))
    prior = 1.0 / len(menu)
    lhs_w = min(0.25, alpha / 2.0)

    def rep(rng):
        x = _trig_sampler(dic, truth, n, rng)
        pens = {m.name: classical_penalty(m, x, dic, delta, nu, prior, s_norm) for m in menu}
        cands = with_penalties(_candidates(dic, spans, menu, x), pens)
        res = select(cands, x, alpha, dic, mode="classical")
        loss = float(np.sum((cands[res.index].coef - truth) ** 2))
        return lhs_w * loss, _oracle_rhs(cands, truth, 3.0, 3.0 + alpha, 2.0)

    return _Setup(rep, 2.0 * delta, {"V": choose_block_count(delta, n, "mean"), "L0": L0})


def _setup_thm42(cfg) -> _Setup:
    n, delta, alpha, eps = cfg["n"], cfg["delta"], cfg["alpha"], cfg["epsilon"]
    freqs, dic, truth, spans, menu = _trig_setup(cfg)
    labels = list(range(dic.M))
    parts = label_partitions(n, delta, labels)
    lhs_w = min(1.0 - 4.0 * eps, alpha) / (2.0 * (8.0 + alpha))

    def rep(rng):
        x = _trig_sampler(dic, truth, n, rng)
        pens = {m.name: robust_penalty(m, x, dic, eps, parts) for m in menu}
        cands = with_penalties(_candidates(dic, spans, menu, x), pens)
        res = select(cands, x, alpha, dic, mode="robust", partitions=parts)
        loss = float(np.sum((cands[res.index].coef - truth) ** 2))
        return lhs_w * loss, _oracle_rhs(cands, truth, 1.0, 1.0, 1.0)

    return _Setup(rep, delta, {"V_lambda": [parts[j].V for j in labels]})


def _density_truth(cfg, cells=None):
    probs = np.asarray(cfg["cell_probs"], dtype=float)
    cells = probs.size if cells is None else cells
    breaks = np.linspace(0.0, 1.0, cells + 1)
    return probs, breaks


def _setup_thm51_l2(cfg) -> _Setup:
    n, delta = cfg["n"], cfg["delta"]
    probs, breaks = _density_truth(cfg)
    dic = build_histogram_dictionary(breaks)
    mom = histogram_dictionary_moments(probs, breaks)
    contrast = contrast_l2_density(dic, mom["first"])
    V = choose_block_count(delta, n, "m_select")
    sigma1_sq = mom["P_Psi"] - mom["proj_norm2"]
    bound = CONSTANTS.L5 * sigma1_sq * V / n
    spec = GeneratorSpec("histogram_density", {"cell_probs": probs.tolist()})

    def rep(rng):
        x = generate(spec, n, rng)
        tr = select_m_estimator(x, contrast, V=V)
        return contrast.excess_loss_ref(tr.estimate.params), bound

    return _Setup(rep, 2.0 * delta, {"V": V, "sigma1_sq": sigma1_sq})


def _setup_prop55_kull(cfg) -> _Setup:
    n, delta, Delta = cfg["n"], cfg["delta"], cfg["Delta"]
    probs, breaks = _density_truth(cfg)
    D = probs.size
    x_smooth = 1.0 / n
    contrast = contrast_kullback_histogram(breaks, x_smooth, target_cell_probs=probs)
    V = choose_block_count(delta, n, "m_select")
    nu, R = rate_quantities(contrast.margin, V, n, Delta)
    if nu > 0.5:
        raise ConditionError("nu_n <= 1/2", f"nu_n = {nu}")
    spec = GeneratorSpec("histogram_density", {"cell_probs": probs.tolist()})
    rate = D * math.log(n) * V / n * (1.0 + cfg["C_reg"] / n)

    def rep(rng):
        x = generate(spec, n, rng)
        tr = select_m_estimator(x, contrast, V=V)
        # the truth is a histogram on the same cells, so s_o = s*
        best = min(contrast.excess_loss_ref(e.params) for e in tr.estimates)
        return contrast.excess_loss_ref(tr.estimate.params), (1.0 + 8.0 * nu) * best + 2.0 * R

    def extras(stats):
        return {"rate": rate, "rate_ratio_mean": float(np.mean(stats)) / rate}

    return _Setup(rep, delta, {"V": V, "nu": nu, "R": R, "smoothing": x_smooth}, extras)


def _setup_prop57_reg(cfg) -> _Setup:
    n, delta = cfg["n"], cfg["delta"]
    consts = regression_constants()
    M_psi, D = consts["M_Psi"], consts["D"]
    V = choose_block_count(delta, n, "m_select")
    regime = 96.0 * math.e * M_psi * V
    if regime > n:
        raise ConditionError("96 e M_Psi V <= n", f"needs n >= {regime:.1f}, got n={n}")
    basis = build_polynomial_dictionary(1)

    def excess(coef):
        a, b = coef[0] - 1.0, coef[1] - 1.0
        return a * a + a * b + b * b / 3.0

    margin = MarginParams(math.sqrt(2.0 * M_psi), (0.5,), (math.sqrt(8.0 * D),))
    contrast = contrast_l2_regression(basis, excess, margin)
    spec = GeneratorSpec("regression", {"noise": cfg["noise"], "df": cfg["df"]})
    bound = CONSTANTS.L7 * D * V / n

    def rep(rng):
        xy = generate(spec, n, rng)
        tr = select_m_estimator(xy, contrast, V=V)
        return excess(tr.estimate.params), bound

    return _Setup(rep, 3.0 * delta, {"V": V, "M_Psi": M_psi, "D": D, "regime_lhs": regime})


def _setup_thm63_mixing(cfg) -> _Setup:
    n, delta, a, Delta = cfg["n"], cfg["delta"], cfg["a"], cfg["Delta"]
    cells = cfg["cells"]
    breaks = np.linspace(0.0, 1.0, cells + 1)
    dic = build_histogram_dictionary(breaks)
    probs = np.full(cells, 1.0 / cells)
    mom = histogram_dictionary_moments(probs, breaks)
    contrast = contrast_l2_density(dic, mom["first"])
    V = mixing_block_count(delta)
    q = n // (2 * V)
    coeffs = ar1_mixing_coefficients(a, cfg["horizon"])
    beta_q = coeffs.beta_at(q)
    Phi = math.sqrt(coeffs.Phi_sq + coeffs.tail_bound)
    params = MarginParams(0.0, (0.5,), (math.sqrt(mom["P_Psi"] - mom["proj_norm2"]),))
    _, R = mixing_rate_quantities(params, V, n, Delta, Phi)
    spec = GeneratorSpec("ar1", {"a": a, "marginal": "uniform"})

    def rep(rng):
        x = generate(spec, n, rng)
        tr = select_m_estimator_mixing(x, contrast, V=V)
        losses = [contrast.excess_loss_ref(e.params) for e in tr.estimates]
        return losses[tr.K_star], min(losses) + 2.0 * R

    return _Setup(
        rep,
        min(delta + V * beta_q, 1.0),
        {"V": V, "q": q, "beta_q": beta_q, "Phi": Phi, "R": R, "mixing": coeffs.to_dict()},
    )


_SETUPS = {
    "prop21": _setup_prop21,
    "cor22": _setup_cor22,
    "thm31": _setup_thm31,
    "thm41": _setup_thm41,
    "thm42": _setup_thm42,
    "thm51_l2": _setup_thm51_l2,
    "prop55_kull": _setup_prop55_kull,
    "prop57_reg": _setup_prop57_reg,
    "thm63_mixing": _setup_thm63_mixing,
}


# ---------------------------------------------------------------- runner


def _merge(kind: str, config: dict | None) -> dict:
    if kind not in DEFAULTS:
        raise DomainError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}")
    cfg = json.loads(json.dumps(DEFAULTS[kind]))
    for k, v in (config or {}).items():
        if k in ("schema", "workers", "timing"):
            continue
        cfg[k] = v
    cfg["schema"] = SCHEMA_VERSION
    return cfg


_worker_setup: _Setup | None = None


def _init_worker(kind, cfg):
    global _worker_setup
    _worker_setup = _SETUPS[kind](cfg)


def _worker_rep(args):
    seed, rep = args
    s, b = _worker_setup.rep(rep_rng(seed, rep))
    return float(s), float(b)


def run_coverage_experiment(
    kind: str,
    config: dict | None = None,
    reps: int = 1000,
    seed: int = 0,
    workers: int = 1,
    timing: bool = False,
) -> ExperimentReport:
    """Run ``reps`` replications of experiment ``kind``.

    ``config`` overrides :data:`DEFAULTS` key by key.  Conditions required by
    the guarantee are checked before any replication and raise
    :class:`ConditionError`.  ``wall_ms`` is filled only when ``timing`` is
    set, so that default reports are byte-identical across runs.
    """
    if reps < MIN_REPS:
        raise DomainError(f"reps must be at least {MIN_REPS}")
    cfg = _merge(kind, config)
    start = time.perf_counter()
    setup = _SETUPS[kind](cfg)
    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(kind, cfg)) as pool:
            pairs = list(pool.map(_worker_rep, [(seed, r) for r in range(reps)], chunksize=max(reps // (4 * workers), 1)))
    else:
        pairs = [tuple(float(v) for v in setup.rep(rep_rng(seed, r))) for r in range(reps)]
    stats = [p[0] for p in pairs]
    bounds = [p[1] for p in pairs]
    violations = sum(s > b for s, b in pairs)
    ratios = np.array([s / b for s, b in pairs if b > 0])
    constants = {"L0": L0, **CONSTANTS.as_dict(), **setup.constants}
    extras = setup.extras(stats) if setup.extras else {}
    return ExperimentReport(
        kind=kind,
        config=cfg,
        constants=constants,
        reps=reps,
        seed=seed,
        violations=int(violations),
        coverage=1.0 - violations / reps,
        allowed_rate=setup.allowed_rate,
        margin=coverage_margin(setup.allowed_rate, reps),
        ratio_mean=float(ratios.mean()) if ratios.size else None,
        ratio_p95=float(np.quantile(ratios, 0.95)) if ratios.size else None,
        rows={"statistic": stats, "bound": bounds},
        extras=extras,
        wall_ms=(time.perf_counter() - start) * 1e3 if timing else None,
    )
