import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracplap.geometry import (Cylinder, build_cutoff, build_mesh, read_mesh, scale_cylinder,
                               write_mesh, CutoffSpec)


def test_cell_centered_1d_nodes():
    mesh = build_mesh(1, [(-1, 1)], 0.5, 2.0)
    inner = np.sort(mesh.points[mesh.interior, 0])
    np.testing.assert_allclose(inner, [-0.75, -0.25, 0.25, 0.75])
    outer = np.sort(mesh.points[mesh.exterior, 0])
    np.testing.assert_allclose(outer, [-1.75, -1.25, 1.25, 1.75])
    # band covers (-2,-1) and (1,2) with total measure 2
    assert mesh.measures[mesh.exterior].sum() == pytest.approx(2.0)


def test_zero_spacing_rejected():
    with pytest.raises(ValueError):
        build_mesh(1, [(-1, 1)], 0.0, 2.0)


def test_interior_count_2d_by_enumeration():
    mesh = build_mesh(2, [(-1, 1), (-1, 1)], 0.25, 2.0)
    # enumerate cell centers of the [-2,2]^2 box independently
    centers = [-2 + 0.125 + 0.25 * k for k in range(16)]
    count = sum(1 for x, y in itertools.product(centers, centers) if abs(x) < 1 and abs(y) < 1)
    assert count == 64
    assert mesh.interior.sum() == count


@pytest.mark.parametrize("kwargs", [dict(n=3, box=[(-1, 1)] * 3, h=0.5, R=2),
                                    dict(n=1, box=[(-1, 1)], h=0.5, R=0.9),
                                    dict(n=1, box=[(-1, 1)], h=0.3, R=2)])
def test_build_mesh_preconditions(kwargs):
    with pytest.raises(ValueError):
        build_mesh(kwargs["n"], kwargs["box"], kwargs["h"], kwargs["R"])


@pytest.mark.parametrize("n", [1, 2])
def test_mesh_invariants_and_refinement_count(n):
    box = [(-1, 1)] * n
    coarse = build_mesh(n, box, 0.25, 2.0)
    fine = build_mesh(n, box, 0.125, 2.0)
    coarse.check_invariants()
    fine.check_invariants()
    assert fine.interior.sum() == 2**n * coarse.interior.sum()
    assert np.all(coarse.measures > 0)
    assert coarse.measures.sum() == pytest.approx(4.0**n, rel=1e-12)
    assert np.all(coarse.interior ^ coarse.exterior)


def test_mesh_is_read_only():
    mesh = build_mesh(1, [(-1, 1)], 0.5, 2.0)
    with pytest.raises(ValueError):
        mesh.points[0, 0] = 3.0


def test_mesh_round_trip(tmp_path):
    mesh = build_mesh(2, [(-1, 1), (0, 1)], 0.25, 2.0)
    write_mesh(mesh, tmp_path / "mesh.csv")
    back = read_mesh(tmp_path / "mesh.csv")
    np.testing.assert_array_equal(back.points, mesh.points)
    np.testing.assert_array_equal(back.measures, mesh.measures)
    np.testing.assert_array_equal(back.interior, mesh.interior)
    assert back.h == mesh.h and back.R_ext == mesh.R_ext


def test_scale_cylinder_identity():
    Q = Cylinder((0.3,), 0.7, 1.0, 0.4)
    assert scale_cylinder(Q, 1.0, 0.5, 3.0) == Q


def test_scale_cylinder_values():
    Q = Cylinder((0.0,), 1.0, 0.0, 1.0)
    R = scale_cylinder(Q, 2.0, 0.5, 2.0)
    assert (R.radius, R.duration, R.t_end) == (2.0, 2.0, 0.0)
    assert scale_cylinder(Q, 0.5, 0.5, 4.0).duration == pytest.approx(0.25)


@given(lam=st.floats(0.1, 10), mu=st.floats(0.1, 10), s=st.floats(0.05, 0.95), p=st.floats(2, 6))
def test_scaling_composes(lam, mu, s, p):
    Q = Cylinder((0.0, 1.0), 0.5, 2.0, 0.3)
    a = Q.scaled(lam, s, p).scaled(mu, s, p)
    b = Q.scaled(lam * mu, s, p)
    assert a.radius == pytest.approx(b.radius, rel=1e-12)
    assert a.duration == pytest.approx(b.duration, rel=1e-12)
    assert a.t_end == b.t_end == Q.t_end


def test_cutoff_plateau_and_support():
    phi = build_cutoff(0.5, 1.0, 0.1, 0.2, (0.0,))
    assert phi(np.array([[0.0]]), 0.3)[0] == 1.0
    assert np.all(phi(np.array([[1.0], [1.5], [-2.0]]), 0.3) == 0.0)
    assert phi(np.array([[0.0]]), 0.05)[0] == 0.0


def test_cutoff_gradient_bound():
    phi = build_cutoff(0.5, 1.0, 0.0, 1.0, (0.0,))
    x = np.linspace(-1.5, 1.5, 30001)
    psi = phi.psi(x[:, None])
    grad = np.abs(np.diff(psi)) / np.diff(x)
    assert grad.max() <= CutoffSpec.SHAPE_CONSTANT / 0.5 + 1e-9
    t = np.linspace(-0.5, 1.5, 20001)
    dz = np.abs(np.diff(phi.zeta(t))) / np.diff(t)
    assert dz.max() <= CutoffSpec.SHAPE_CONSTANT / 1.0 + 1e-9


@settings(max_examples=50)
@given(r_in=st.floats(0.05, 0.5), w1=st.floats(0.05, 1.0), w2=st.floats(0.05, 1.0))
def test_cutoff_wider_transition_is_flatter(r_in, w1, w2):
    narrow, wide = sorted([w1, w2])
    x = np.linspace(0, 3, 6001)[:, None]

    def max_grad(width):
        psi = build_cutoff(r_in, r_in + width, 0.0, 1.0, (0.0,)).psi(x)
        return (np.abs(np.diff(psi)) / np.diff(x[:, 0])).max()

    assert max_grad(wide) <= max_grad(narrow) * (1 + 1e-9)


@given(x=st.lists(st.floats(-3, 3), min_size=1, max_size=20), t=st.floats(-1, 2))
def test_cutoff_range(x, t):
    phi = build_cutoff(0.3, 0.9, 0.2, 0.6, (0.1,))
    vals = phi(np.array(x)[:, None], t)
    assert np.all((vals >= 0) & (vals <= 1))


def test_cutoff_preconditions():
    with pytest.raises(ValueError):
        build_cutoff(1.0, 0.5, 0.0, 1.0, (0.0,))
    with pytest.raises(ValueError):
        build_cutoff(0.5, 1.0, 1.0, 0.5, (0.0,))
