import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stackda.discrepancy import (DiscrepancyMethod, Method, NoOverlappingClass, adaptation_loss, cmmd,
                                 coral, mmd)
from stackda.gradcheck import numeric_grad, rel_error
from stackda.linalg import DegenerateInput, median_sq_dist
from stackda.lowrank import AlmConfig, lowrank_penalty

FIXED = DiscrepancyMethod("mmd", bandwidths=(0.5, 1.0, 2.0))


def _brute_mmd(xs, xt, h):
    k = lambda a, b: np.exp(-np.sum((a - b) ** 2) / (2 * h))  # noqa: E731
    ss = np.mean([[k(a, b) for b in xs] for a in xs])
    tt = np.mean([[k(a, b) for b in xt] for a in xt])
    st_ = np.mean([[k(a, b) for b in xt] for a in xs])
    return ss + tt - 2 * st_


def test_mmd_identical_sets():
    x = np.random.default_rng(0).standard_normal((6, 3))
    res = mmd(x, x.copy(), DiscrepancyMethod("mmd"))
    assert abs(res.value) <= 1e-10
    np.testing.assert_allclose(res.grad_source, -res.grad_target, atol=1e-12)


def test_mmd_singletons_hand_expansion():
    a = np.array([[0.3, -1.2]])
    b = np.array([[1.1, 0.4]])
    sigma2 = 0.9
    expect = 2.0 - 2.0 * np.exp(-np.sum((a - b) ** 2) / (2 * sigma2))
    res = mmd(a, b, DiscrepancyMethod("mmd", bandwidths=(sigma2,)))
    assert res.value == pytest.approx(expect, rel=1e-14)


def test_mmd_matches_brute_force_kernel_sum():
    rng = np.random.default_rng(1)
    xs, xt = rng.standard_normal((5, 2)), rng.standard_normal((7, 2)) + 1
    expect = sum(_brute_mmd(xs, xt, h) for h in FIXED.bandwidths)
    assert mmd(xs, xt, FIXED).value == pytest.approx(expect, rel=1e-12)


def test_default_bandwidths_follow_median_heuristic():
    rng = np.random.default_rng(2)
    xs, xt = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    res = mmd(xs, xt, DiscrepancyMethod("mmd"))
    med = median_sq_dist(xs, xt)
    assert res.info["bandwidths"] == tuple(med * s for s in (0.25, 0.5, 1.0, 2.0, 4.0))


@pytest.mark.parametrize("seed", range(10))
def test_mmd_gradient(seed):
    rng = np.random.default_rng(seed)
    xs, xt = rng.standard_normal((8, 3)), rng.standard_normal((8, 3)) + 0.3
    res = mmd(xs, xt, FIXED)
    assert rel_error(res.grad_source, numeric_grad(lambda: mmd(xs, xt, FIXED).value, xs)) <= 1e-4
    assert rel_error(res.grad_target, numeric_grad(lambda: mmd(xs, xt, FIXED).value, xt)) <= 1e-4


def test_mmd_shape_error():
    with pytest.raises(ValueError):
        mmd(np.zeros((2, 2)), np.zeros((2, 3)), FIXED)


def test_cmmd_single_class_reduces_to_mmd():
    rng = np.random.default_rng(3)
    xs, xt = rng.standard_normal((6, 2)), rng.standard_normal((5, 2))
    m = DiscrepancyMethod("cmmd")
    a = cmmd(xs, np.zeros(6, int), xt, np.zeros(5, int), 1, m)
    b = mmd(xs, xt, m)
    assert abs(a.value - b.value) <= 1e-12
    np.testing.assert_allclose(a.grad_source, b.grad_source, atol=1e-12)


def test_cmmd_matching_classes_is_zero():
    rng = np.random.default_rng(4)
    xs = rng.standard_normal((6, 2))
    ys = np.array([0, 1, 0, 1, 2, 2])
    assert abs(cmmd(xs, ys, xs[::-1].copy(), ys[::-1].copy(), 3, FIXED).value) <= 1e-10


def test_cmmd_equals_hand_looped_average():
    rng = np.random.default_rng(5)
    xs, xt = rng.standard_normal((12, 2)), rng.standard_normal((12, 2))
    ys, yt = rng.integers(0, 2, 12), rng.integers(0, 2, 12)
    per = [sum(_brute_mmd(xs[ys == c], xt[yt == c], h) for h in FIXED.bandwidths) for c in (0, 1)]
    assert cmmd(xs, ys, xt, yt, 2, FIXED).value == pytest.approx(np.mean(per), rel=1e-12)


def test_cmmd_skips_missing_classes_and_zeroes_their_gradient():
    rng = np.random.default_rng(6)
    xs, xt = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    ys = np.array([0, 0, 1, 1, 2, 2])
    yt = np.array([0, 0, 0, 1, 1, 1])
    res = cmmd(xs, ys, xt, yt, 3, FIXED)
    assert res.info["classes"] == [0, 1]
    assert np.all(res.grad_source[ys == 2] == 0)
    per = [sum(_brute_mmd(xs[ys == c], xt[yt == c], h) for h in FIXED.bandwidths) for c in (0, 1)]
    assert res.value == pytest.approx(np.mean(per), rel=1e-12)


def test_cmmd_no_overlap_raises():
    x = np.zeros((2, 2))
    with pytest.raises(NoOverlappingClass):
        cmmd(x, [0, 0], x + 1, [1, 1], 2, FIXED)


def test_cmmd_label_range_checked():
    x = np.zeros((2, 2))
    with pytest.raises(ValueError):
        cmmd(x, [0, 3], x, [0, 0], 2, FIXED)


@pytest.mark.parametrize("seed", range(10))
def test_cmmd_gradient(seed):
    rng = np.random.default_rng(seed)
    xs, xt = rng.standard_normal((10, 3)), rng.standard_normal((9, 3))
    ys, yt = rng.integers(0, 3, 10), rng.integers(0, 3, 9)
    f = lambda: cmmd(xs, ys, xt, yt, 3, FIXED).value  # noqa: E731
    res = cmmd(xs, ys, xt, yt, 3, FIXED)
    assert rel_error(res.grad_source, numeric_grad(f, xs)) <= 1e-4
    assert rel_error(res.grad_target, numeric_grad(f, xt)) <= 1e-4


def test_coral_cases():
    x = np.random.default_rng(7).standard_normal((10, 3))
    assert coral(x, x.copy()).value == 0.0
    # covariances [[2]] and [[0]] in one dimension
    assert coral([[0.0], [2.0]], [[1.0], [1.0]]).value == 1.0
    with pytest.raises(DegenerateInput):
        coral(x[:1], x)


@pytest.mark.parametrize("seed", range(10))
def test_coral_gradient(seed):
    rng = np.random.default_rng(seed)
    xs, xt = rng.standard_normal((20, 4)), 1.5 * rng.standard_normal((20, 4))
    res = coral(xs, xt)
    assert rel_error(res.grad_source, numeric_grad(lambda: coral(xs, xt).value, xs)) <= 1e-4
    assert rel_error(res.grad_target, numeric_grad(lambda: coral(xs, xt).value, xt)) <= 1e-4


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_symmetry_nonnegativity_translation(seed):
    rng = np.random.default_rng(seed)
    xs, xt = rng.standard_normal((6, 3)), rng.standard_normal((7, 3)) * 2
    a, b = mmd(xs, xt, FIXED).value, mmd(xt, xs, FIXED).value
    assert abs(a - b) <= 1e-12 and a >= -1e-10
    c, d = coral(xs, xt).value, coral(xt, xs).value
    assert abs(c - d) <= 1e-12 and c >= 0
    shift = rng.standard_normal(3) * 5
    assert abs(coral(xs + shift, xt).value - c) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    xs, xt = rng.standard_normal((8, 2)), rng.standard_normal((6, 2))
    perm = rng.permutation(8)
    for fn in (lambda a, b: mmd(a, b, DiscrepancyMethod("mmd")), coral):
        base, shuffled = fn(xs, xt), fn(xs[perm], xt)
        assert shuffled.value == pytest.approx(base.value, abs=1e-12)
        np.testing.assert_allclose(shuffled.grad_source, base.grad_source[perm], atol=1e-12)


def test_adaptation_loss_dispatch():
    rng = np.random.default_rng(8)
    xs, xt = rng.standard_normal((6, 4)), rng.standard_normal((6, 4))
    assert adaptation_loss(xs, None, xs.copy(), None, DiscrepancyMethod("coral")).value == 0.0
    z = np.zeros(6, int)
    a = adaptation_loss(xs, z, xt, z, DiscrepancyMethod("cmmd"), n_classes=1)
    assert a.value == pytest.approx(mmd(xs, xt, DiscrepancyMethod("mmd")).value, abs=1e-12)
    lr = adaptation_loss(xs, None, xt, None, DiscrepancyMethod("lowrank"))
    ref = lowrank_penalty(xs, xt, AlmConfig())
    assert lr.value == ref.value
    np.testing.assert_array_equal(lr.grad_source, ref.grad_source)
    np.testing.assert_array_equal(lr.grad_target, ref.grad_target)


def test_method_validation():
    with pytest.raises(ValueError):
        DiscrepancyMethod("mmd", bandwidths=())
    with pytest.raises(ValueError):
        DiscrepancyMethod("mmd", bandwidths=(1.0, -1.0))
    with pytest.raises(ValueError):
        AlmConfig(lambda_e=0.0)
    assert DiscrepancyMethod("lowrank").lambda_e == 1.0
    assert DiscrepancyMethod(Method.CORAL).tag is Method.CORAL
