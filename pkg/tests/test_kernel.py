import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracplap.geometry import build_mesh
from fracplap.kernel import KernelSpec, eval_kernel, kernel_block, validate_ellipticity

MESH1 = build_mesh(1, [(-1, 1)], 0.125, 2.0)
MESH2 = build_mesh(2, [(-1, 1), (-1, 1)], 0.25, 2.0)


def test_canonical_values():
    k = KernelSpec(0.5, 2.0)
    assert eval_kernel(k, 0.0, 1.0) == 1.0
    assert eval_kernel(k, 0.0, 2.0) == pytest.approx(0.25, rel=1e-15)


def test_constant_modulation():
    k = KernelSpec(0.5, 2.0, Lam=2.0, form="modulated", modulation=lambda x, y, t: 2.0)
    assert eval_kernel(k, 0.0, 1.0) == 2.0
    assert validate_ellipticity(k, MESH1, samples=200).passed


def test_diagonal_is_singular():
    with pytest.raises(ValueError):
        eval_kernel(KernelSpec(0.5, 2.0), 0.3, 0.3)


@pytest.mark.parametrize("bad", [dict(s=0.0), dict(s=1.0), dict(p=1.5), dict(Lam=0.5),
                                 dict(form="gaussian")])
def test_spec_validation(bad):
    args = dict(s=0.5, p=2.0) | bad
    with pytest.raises(ValueError):
        KernelSpec(**args)


def test_canonical_worst_ratio_is_one():
    rep = validate_ellipticity(KernelSpec(0.3, 3.0), MESH2, samples=300)
    assert rep.passed
    assert rep.worst_ratio == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_default_modulation_within_sandwich(seed):
    k = KernelSpec(0.5, 3.0, Lam=2.0, form="modulated", seed=seed)
    rep = validate_ellipticity(k, MESH1, samples=500, seed=seed)
    assert rep.passed
    assert 0.5 <= rep.worst_low <= rep.worst_high <= 2.0


def test_violation_has_witness():
    def bump(x, y, t):
        # a = 3 when both points sit right of 0.5
        return np.where((x[..., 0] > 0.5) & (y[..., 0] > 0.5), 3.0, 1.0)

    k = KernelSpec(0.5, 2.0, Lam=2.0, form="modulated", modulation=bump)
    rep = validate_ellipticity(k, MESH1, samples=2000)
    assert not rep.passed
    x, y, t, ratio = rep.witness
    assert ratio == pytest.approx(3.0)
    assert np.all(np.asarray(x) > 0.5) and np.all(np.asarray(y) > 0.5)


@settings(max_examples=60)
@given(seed=st.integers(0, 1000), t=st.floats(0, 5),
       x=st.tuples(st.floats(-2, 2), st.floats(-2, 2)), y=st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_symmetry_and_sandwich(seed, t, x, y):
    if np.allclose(x, y, atol=1e-6):
        return
    k = KernelSpec(0.4, 3.0, Lam=3.0, form="modulated", seed=seed)
    kxy, kyx = eval_kernel(k, x, y, t), eval_kernel(k, y, x, t)
    assert kxy == pytest.approx(kyx, rel=1e-12)
    canon = np.linalg.norm(np.subtract(x, y)) ** -(2 + k.sp)
    assert canon / 3.0 * (1 - 1e-12) <= kxy <= canon * 3.0 * (1 + 1e-12)


@given(c=st.floats(0.1, 10), s=st.floats(0.05, 0.95), p=st.floats(2, 5))
def test_canonical_scaling(c, s, p):
    k = KernelSpec(s, p)
    x, y = np.array([0.2, -0.1]), np.array([0.7, 0.4])
    assert eval_kernel(k, c * x, c * y) == pytest.approx(c ** -(2 + s * p) * eval_kernel(k, x, y), rel=1e-12)


def test_block_matches_pointwise():
    k = KernelSpec(0.5, 3.0, Lam=2.0, form="modulated", seed=1)
    X = MESH2.points[:20]
    B = kernel_block(k, X, X, t=0.3)
    assert np.all(np.diag(B) == 0)
    np.testing.assert_allclose(B, B.T, rtol=1e-13)
    i, j = 3, 11
    assert B[i, j] == pytest.approx(eval_kernel(k, X[i], X[j], 0.3), rel=1e-13)
