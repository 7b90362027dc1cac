import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmean.blocks import CONSTANTS, make_regular_partition
from robustmean.dictionary import build_histogram_dictionary, build_trigonometric_dictionary
from robustmean.errors import DeltaTooSmallError, DimensionError, DomainError, UnsupportedModelError
from robustmean.generators import rep_rng
from robustmean.selection import (
    L0,
    CandidateEstimator,
    ModelSpec,
    candidate_from_function,
    classical_criterion,
    classical_penalty_bound,
    label_partitions,
    robust_criterion,
    robust_penalty,
    robust_penalty_bound,
    select,
    with_penalties,
)


def _trig_setup(F=3):
    dic = build_trigonometric_dictionary(F)
    menu = tuple(ModelSpec(f"m{f}", tuple(range(2 * f + 1)), 0.0, 1.0 + 2 * f) for f in range(F + 1))
    return dic, menu


def _random_candidates(rng, dic, menu, k):
    return [CandidateEstimator(f"c{i}", rng.normal(size=dic.M), menu, float(rng.uniform(0, 0.5))) for i in range(k)]


def test_classical_criterion_examples():
    dic = build_histogram_dictionary([0, 0.5, 1])
    x = np.random.default_rng(0).random(50)
    zero = CandidateEstimator("zero", np.zeros(2), (ModelSpec("full", (0, 1)),))
    assert classical_criterion(zero, x, 1.0, dic).value == 0.0

    coef = np.array([0.3, -0.2])
    one = CandidateEstimator("s", coef, (ModelSpec("full", (0, 1), pen=0.05),))
    emp = dic.evaluate(x).mean(axis=0)
    expected = coef @ coef - 2 * coef @ emp + 0.05
    assert classical_criterion(one, x, 3.0, dic).value == pytest.approx(expected, abs=1e-14)

    two = CandidateEstimator("s", coef, (ModelSpec("a", (0, 1), 0.1), ModelSpec("b", (0, 1), 0.2)))
    cv = classical_criterion(two, x, 1.0, dic)
    assert cv.model == "a" and cv.value == pytest.approx(expected - 0.05 + 0.1)


def test_criterion_rejects_bad_candidates():
    dic = build_histogram_dictionary([0, 0.5, 1])
    with pytest.raises(DimensionError):
        classical_criterion(CandidateEstimator("s", np.zeros(3), (ModelSpec("a", (0,)),)), [0.1], 1.0, dic)
    with pytest.raises(DomainError):
        classical_criterion(CandidateEstimator("s", np.zeros(2), ()), [0.1], 1.0, dic)


def test_l0_value():
    assert L0 == pytest.approx(16 / math.log(2) + 8, rel=1e-15)
    assert L0 == pytest.approx(31.0831, abs=1e-4)


def test_classical_penalty_bound_examples():
    assert classical_penalty_bound(3.0, 0.0, 100, 0.5, 1.0, 1.0, 5.0) == pytest.approx((2.5 + 2 * L0) * 3.0 / 100)
    with pytest.raises(UnsupportedModelError):
        classical_penalty_bound(1.0, None, 100, 0.1, 0.5, 1.0, 1.0)
    with pytest.raises(DomainError):
        classical_penalty_bound(1.0, 1.0, 100, 0.1, 0.0, 1.0, 1.0)


def test_histogram_envelope_on_uniform_density():
    breaks = [0.0, 0.1, 0.4, 1.0]
    dic = build_histogram_dictionary(breaks)
    model = ModelSpec("full", (0, 1, 2))
    x = np.linspace(0, 1, 200_001)[:-1] + 0.5 / 200_000
    psi = model.psi(dic, x)
    assert psi.mean() == pytest.approx(3.0, rel=1e-6)
    assert psi.max() == pytest.approx(1 / 0.1)
    assert np.all(psi >= 0)


def test_robust_criterion_examples():
    dic = build_histogram_dictionary(np.linspace(0, 1, 5))
    x = np.full(40, 0.3)
    parts = label_partitions(x.size, 0.1, range(4))
    zero = CandidateEstimator("zero", np.zeros(4), (ModelSpec("full", tuple(range(4)), 0.2),), 0.7)
    cv = robust_criterion(zero, x, 2.0, dic, parts)
    assert cv.value == pytest.approx(2.0 * 0.7 + 0.2)
    cand = CandidateEstimator("c", np.array([1.0, 0.5, 0.0, 0.0]), zero.menu)
    first = robust_criterion(cand, x, 1.0, dic, parts).value
    assert robust_criterion(cand, x, 1.0, dic, parts).value == first
    with pytest.raises(DomainError):
        robust_criterion(cand, x, 1.0, dic, {0: parts[0]})


@given(st.integers(0, 2**32 - 1), st.floats(0.1, 5.0))
@settings(max_examples=40, deadline=None)
def test_single_block_robust_equals_classical(seed, alpha):
    rng = np.random.default_rng(seed)
    dic, menu = _trig_setup()
    menu = tuple(m.with_pen(float(rng.uniform(0, 1))) for m in menu)
    x = rng.random(37)
    parts = {j: make_regular_partition(x.size, 1) for j in range(dic.M)}
    for cand in _random_candidates(rng, dic, menu, 3):
        r = robust_criterion(cand, x, alpha, dic, parts)
        c = classical_criterion(cand, x, alpha, dic)
        assert r.value == pytest.approx(c.value, abs=1e-12)


def test_robust_penalty_examples():
    dic = build_histogram_dictionary([0, 1])
    x = np.random.default_rng(3).random(300)
    parts = {0: make_regular_partition(300, 6)}
    assert robust_penalty(ModelSpec("empty", ()), x, dic, 0.2, parts) == 0.0
    assert robust_penalty(ModelSpec("one", (0,)), x, dic, 0.2, parts) == pytest.approx(2 * CONSTANTS.L4 * 6 / (0.2 * 300))
    assert CONSTANTS.L4 == pytest.approx(9 * 24 * math.e / 4)
    assert CONSTANTS.L4 == pytest.approx(146.787, abs=1e-3)
    assert robust_penalty_bound([1.0, 2.0], [3, 4], 100, 0.1) == pytest.approx(CONSTANTS.L4 * 11 / 10)
    with pytest.raises(DomainError):
        robust_penalty(ModelSpec("one", (0,)), x, dic, 0.25, parts)


def test_label_partitions():
    parts = label_partitions(1000, 0.05, [0, 1, 2, 3])
    assert {p.V for p in parts.values()} == {math.ceil(math.log(2 / (0.25 * 0.05)))}
    skewed = label_partitions(1000, 0.05, [0, 1], {0: 0.9, 1: 0.1})
    assert skewed[0].V < skewed[1].V
    with pytest.raises(DeltaTooSmallError):
        label_partitions(10, 1e-4, [0, 1])


def test_select_examples():
    dic, menu = _trig_setup()
    rng = np.random.default_rng(5)
    x = rng.random(100)
    (only,) = _random_candidates(rng, dic, menu, 1)
    assert select([only], x, 1.0, dic, "classical").index == 0
    a, b = _random_candidates(rng, dic, menu, 2)
    res = select([a, b, a], x, 1.0, dic, "robust", delta=0.1)
    dup = select([b, b], x, 1.0, dic, "robust", delta=0.1)
    assert dup.index == 0 and dup.theta_hat == "c1"
    assert res.criteria[0].value == res.criteria[2].value
    assert res.index in (0, 1)
    doc = res.to_dict()
    assert [c["name"] for c in doc["candidates"]] == ["c0", "c1", "c0"]
    with pytest.raises(DomainError):
        select([], x, 1.0, dic)
    with pytest.raises(DomainError):
        select([a], x, 0.0, dic)
    with pytest.raises(DomainError):
        select([a], x, 1.0, dic, "robust")
    with pytest.raises(DomainError):
        select([a], x, 1.0, dic, "bayes")


@given(st.integers(0, 2**32 - 1), st.floats(-5, 5), st.sampled_from(["classical", "robust"]))
@settings(max_examples=40, deadline=None)
def test_penalty_shift(seed, c, mode):
    rng = np.random.default_rng(seed)
    dic, menu = _trig_setup()
    pens = {m.name: float(rng.uniform(5.0, 6.0)) for m in menu}
    cands = with_penalties(_random_candidates(rng, dic, menu, 4), pens)
    shifted = with_penalties(cands, {k: v + c for k, v in pens.items()})
    x = rng.random(120)
    r0 = select(cands, x, 1.0, dic, mode, delta=0.1)
    r1 = select(shifted, x, 1.0, dic, mode, delta=0.1)
    for a, b in zip(r0.criteria, r1.criteria):
        assert b.value == pytest.approx(a.value + c, abs=1e-9)
    assert r0.index == r1.index


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
@settings(max_examples=40, deadline=None)
def test_raising_one_penalty_never_lowers_criterion(seed, bump):
    rng = np.random.default_rng(seed)
    dic, menu = _trig_setup()
    pens = {m.name: float(rng.uniform(0, 1)) for m in menu}
    cands = with_penalties(_random_candidates(rng, dic, menu, 3), pens)
    target = menu[int(rng.integers(len(menu)))].name
    raised = with_penalties(cands, {**pens, target: pens[target] + bump})
    x = rng.random(60)
    for a, b in zip(cands, raised):
        assert classical_criterion(b, x, 1.0, dic).value >= classical_criterion(a, x, 1.0, dic).value


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_minimizer_set_is_rotation_invariant(seed, shift):
    rng = np.random.default_rng(seed)
    dic, menu = _trig_setup()
    base = _random_candidates(rng, dic, menu, 3)
    cands = base + base[:2]
    x = rng.random(80)

    def minimizers(cs):
        vals = [cv.value for cv in select(cs, x, 1.0, dic, "robust", delta=0.2).criteria]
        best = min(vals)
        return {cs[i].name for i, v in enumerate(vals) if v == best}

    rotated = cands[shift:] + cands[:shift]
    assert minimizers(rotated) == minimizers(cands)


def test_projection_from_function():
    dic = build_histogram_dictionary([0, 0.5, 1])
    cand = candidate_from_function("lin", lambda t: 2 * t, dic, [ModelSpec("full", (0, 1))])
    # integral of 2t against sqrt(2) on each half
    np.testing.assert_allclose(cand.coef, [0.5 / math.sqrt(2) * 1, 1.5 / math.sqrt(2) * 1], rtol=1e-10)
    assert cand.residual_norm2 == pytest.approx(4 / 3 - (cand.coef @ cand.coef), abs=1e-9)


def test_monte_carlo_true_density_beats_corruption():
    dic = build_histogram_dictionary(np.linspace(0, 1, 17))
    menu = (ModelSpec("fine", tuple(range(16)), 0.0, 16.0),)
    truth = candidate_from_function("truth", lambda t: np.ones_like(t), dic, menu)
    corrupt = candidate_from_function("corrupt", lambda t: np.ones_like(t) + 10.0, dic, menu)
    wins = 0
    for rep in range(200):
        x = rep_rng(11, rep).random(5000)
        wins += select([truth, corrupt], x, 1.0, dic, "robust", delta=0.05).theta_hat == "truth"
    assert wins >= 190
