import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustmean.blocks import CONSTANTS, make_regular_partition
from robustmean.dictionary import build_histogram_dictionary, build_polynomial_dictionary, build_trigonometric_dictionary
from robustmean.errors import (
    BlockFitError,
    DomainError,
    EmptyInputError,
    InsufficientBlocksError,
    UnsupportedModelError,
)
from robustmean.generators import rep_rng
from robustmean.mestimation import (
    BlockEstimate,
    ContrastModel,
    MarginParams,
    contrast_kullback_histogram,
    contrast_l2_density,
    contrast_l2_regression,
    histogram_contrast,
    pairwise_median_loss,
    rate_quantities,
    select_m_estimator,
)

from oracles import brute_force_argmin_max


def _mean_contrast():
    """Squared-error location contrast, handy for hand-built examples."""
    return ContrastModel(
        "location",
        lambda obs: BlockEstimate(np.array([np.mean(obs)])),
        lambda p, obs: (np.asarray(obs) - p[0]) ** 2,
    )


def test_pairwise_identical_estimates_is_zero():
    x = np.random.default_rng(0).random(30)
    part = make_regular_partition(30, 5)
    c = _mean_contrast()
    est = [BlockEstimate(np.array([0.3]))] * 5
    assert pairwise_median_loss(1, 3, est, x, part, c) == 0.0
    assert pairwise_median_loss(2, 2, est, x, part, c) == 0.0


def test_pairwise_three_blocks_hand_example():
    x = np.array([0.0, 1.0, 2.0, 3.0, 10.0, 20.0])
    part = make_regular_partition(6, 3)
    est = [BlockEstimate(np.array([0.0])), BlockEstimate(np.array([1.0])), BlockEstimate(np.array([2.0]))]
    # only block 2 = {10, 20} remains: mean of (x^2) - (x-1)^2 = mean(2x - 1) = 29
    assert pairwise_median_loss(0, 1, est, x, part, _mean_contrast()) == pytest.approx(29.0)
    with pytest.raises(InsufficientBlocksError):
        pairwise_median_loss(0, 1, est[:2], x, make_regular_partition(6, 2), _mean_contrast())


def test_identical_blocks_pick_first():
    x = np.tile([0.1, 0.4, 0.8, 0.9], 8)
    trace = select_m_estimator(x, histogram_contrast(4), V=8)
    assert trace.K_star == 0
    assert trace.minimizers() == list(range(8))


def test_selector_matches_brute_force_random():
    rng = np.random.default_rng(1)
    c = histogram_contrast(4)
    for _ in range(20):
        x = rng.beta(2, 5, size=64)
        assert select_m_estimator(x, c, V=8).K_star == brute_force_argmin_max(x, 8, c)


def test_selector_trace_serializes_matrix():
    x = np.random.default_rng(2).random(80)
    doc = select_m_estimator(x, histogram_contrast(2), delta=0.05).to_dict()
    assert doc["V"] == 8 and len(doc["matrix"]) == 8 and len(doc["matrix"][0]) == 8
    assert doc["K_star"] == int(np.argmin(doc["worst_case"]))


@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
@settings(max_examples=30, deadline=None)
def test_block_rotation_rotates_minimizers(seed, shift):
    rng = np.random.default_rng(seed)
    x = rng.random(64)
    c = histogram_contrast(4)
    base = select_m_estimator(x, c, V=8)
    rolled = select_m_estimator(np.roll(x, -8 * shift), c, V=8)
    assert sorted((k - shift) % 8 for k in base.minimizers()) == rolled.minimizers()


def test_block_fit_failure_names_block():
    def fit(obs):
        if np.any(obs > 100):
            raise ValueError("outlier")
        return BlockEstimate(np.array([obs.mean()]))

    c = ContrastModel("strict", fit, lambda p, obs: (obs - p[0]) ** 2)
    x = np.zeros(40)
    x[25] = 1000.0
    with pytest.raises(BlockFitError) as info:
        select_m_estimator(x, c, V=8)
    assert info.value.block == 5


def test_contamination_is_avoided():
    c = histogram_contrast(4)
    avoided = 0
    for rep in range(200):
        rng = rep_rng(3, rep)
        x = rng.beta(2, 3, size=1600)
        bad = int(rng.integers(8))
        x[bad * 200 : (bad + 1) * 200] += 100.0
        avoided += select_m_estimator(x, c, delta=0.05).K_star != bad
    assert avoided >= 190


def test_rate_quantities_examples():
    assert rate_quantities(MarginParams(), 8, 100) == (0.0, 0.0)
    nu, _ = rate_quantities(MarginParams(0.0, (0.5,), (0.0,)), 8, 100, 2.0)
    assert nu == 0.5
    # C_1 at alpha = 1/2 equals L1^2 = 24 e; R = C_1 (sqrt(2) sigma sqrt(V/n))^2
    _, R = rate_quantities(MarginParams(0.0, (0.5,), (1.0,)), 8, 100, 2.0)
    assert R == pytest.approx(24 * math.e * 2.0 * 8 / 100, rel=1e-12)
    assert CONSTANTS.L1**2 == pytest.approx(24 * math.e)
    with pytest.raises(DomainError):
        rate_quantities(MarginParams(), 8, 100, 1.0)


@given(st.floats(1.01, 50), st.floats(1.01, 50), st.floats(0.05, 0.95), st.floats(0.0, 3.0))
def test_rate_monotone_in_delta(d1, d2, alpha, sigma):
    lo, hi = sorted((d1, d2))
    if hi - lo < 1e-6:
        return
    p = MarginParams(0.3, (alpha,), (sigma,))
    nu_lo, R_lo = rate_quantities(p, 8, 1000, lo)
    nu_hi, R_hi = rate_quantities(p, 8, 1000, hi)
    assert nu_hi < nu_lo
    assert R_hi >= R_lo


def test_margin_params_validation():
    with pytest.raises(DomainError):
        MarginParams(0.0, (1.0,), (1.0,))
    with pytest.raises(DomainError):
        MarginParams(-1.0)
    assert MarginParams(0.0, (0.5, 0.25), (1.0, 2.0)).N == 2


def test_l2_density_examples():
    const = build_histogram_dictionary([0, 1])
    c = contrast_l2_density(const, target_coef=[1.0])
    est = c.fit_block(np.random.default_rng(0).beta(2, 2, 17))
    np.testing.assert_array_equal(est.params, [1.0])
    assert c.excess_loss_ref(est.params) == 0.0
    np.testing.assert_allclose(c.loss(np.array([2.0]), np.array([0.1, 0.5, 0.9])), 0.0)
    with pytest.raises(UnsupportedModelError):
        contrast_l2_density(build_polynomial_dictionary(1))


def test_l2_density_trig_fit_is_empirical_mean():
    dic = build_trigonometric_dictionary(2)
    x = np.random.default_rng(4).random(100)
    est = contrast_l2_density(dic).fit_block(x)
    np.testing.assert_allclose(est.params, dic.evaluate(x).mean(axis=0), atol=1e-14)


def test_kullback_hand_example():
    c = contrast_kullback_histogram([0, 0.5, 1], 1.0)
    est = c.fit_block(np.array([0.1, 0.2, 0.3]))
    np.testing.assert_allclose(est.params, [1.5, 0.5])
    assert c.margin.sigmas[0] == pytest.approx(math.sqrt(2 + 3 * math.log(2)))
    np.testing.assert_allclose(c.loss(est.params, np.array([0.1, 0.9])), [-math.log(1.5), -math.log(0.5)])
    with pytest.raises(DomainError):
        c.loss(est.params, np.array([1.5]))
    with pytest.raises(DomainError):
        contrast_kullback_histogram([0, 1], 0.0)


def test_kullback_empty_cell_floor():
    x = 0.2
    c = contrast_kullback_histogram(np.linspace(0, 1, 5), x)
    est = c.fit_block(np.array([0.1, 0.15]))
    np.testing.assert_allclose(est.params[1:], x / (1 + x))


def test_kullback_reference_kl():
    probs = np.array([0.1, 0.2, 0.3, 0.4])
    c = contrast_kullback_histogram(np.linspace(0, 1, 5), 0.01, target_cell_probs=probs)
    assert c.excess_loss_ref(probs * 4) == pytest.approx(0.0, abs=1e-15)
    assert c.excess_loss_ref(np.ones(4)) == pytest.approx(float(np.sum(probs * np.log(4 * probs))))
    d = contrast_kullback_histogram(np.linspace(0, 1, 5), 0.01, target_density=lambda t: 2 * t)
    # KL of 2t against the uniform density is ln 2 - 1/2
    assert d.excess_loss_ref(np.ones(4)) == pytest.approx(math.log(2) - 0.5, abs=1e-6)


def test_regression_examples():
    const = contrast_l2_regression(build_polynomial_dictionary(0))
    est = const.fit_block(np.array([[0.2, 1.0], [0.7, 3.0]]))
    np.testing.assert_allclose(est.params, [2.0])
    assert not est.degenerate

    lin = contrast_l2_regression(build_polynomial_dictionary(1))
    x = np.linspace(0, 1, 9)
    obs = np.column_stack([x, 1 + 2 * x])
    est = lin.fit_block(obs)
    np.testing.assert_allclose(lin.loss(est.params, obs), 0.0, atol=1e-20)

    one = np.array([[0.5, 2.0]])
    est = lin.fit_block(one)
    design = build_polynomial_dictionary(1).evaluate(one[:, 0])
    np.testing.assert_allclose(est.params, np.linalg.pinv(design) @ one[:, 1], atol=1e-12)
    assert est.degenerate
    with pytest.raises(EmptyInputError):
        lin.fit_block(np.empty((0, 2)))


def test_degenerate_blocks_are_recorded():
    lin = contrast_l2_regression(build_polynomial_dictionary(1))
    x = np.repeat(np.linspace(0, 1, 8), 3)
    obs = np.column_stack([x, 1 + x])
    trace = select_m_estimator(obs, lin, V=8)
    assert len(trace.notes) == 8


def test_block_risk_identity_small():
    # E|s_K - s_o|^2 = (P Psi - |s_o|^2) / |B_K| = 3 / 50 for four cells under the uniform density
    c = histogram_contrast(4)
    target = np.array([0.5, 0.5, 0.5, 0.5])
    risks = [np.sum((c.fit_block(rep_rng(9, r).random(50)).params - target) ** 2) for r in range(2000)]
    assert np.mean(risks) == pytest.approx(3 / 50, rel=0.08)
