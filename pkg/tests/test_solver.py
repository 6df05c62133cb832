import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from fracplap.geometry import Cylinder, build_mesh
from fracplap.kernel import KernelSpec, eval_kernel
from fracplap.solver import (ConvergenceError, ProblemSpec, StepConfig, l2_contraction_check,
                             load_trajectory, save_trajectory, solve, solve_explicit, step_implicit,
                             subsolution_residual, weak_form_basis)

from oracles import small_mesh

CFG = StepConfig(tol=1e-10)


def bump(pts):
    return np.maximum(0.0, 1 - (pts[:, 0] / 0.5) ** 2)


def signed(pts):
    x = pts[:, 0]
    return np.sin(np.pi * x) * (1 - x**2)


def linear_step_matrices(mesh, kernel):
    """Mass matrix and p = 2 stiffness restricted to interior nodes, built pointwise."""
    pts, m = mesh.points, mesh.measures
    W = np.zeros((mesh.N, mesh.N))
    for i in range(mesh.N):
        for j in range(mesh.N):
            if i != j:
                W[i, j] = eval_kernel(kernel, pts[i], pts[j]) * m[i] * m[j]
    I, E = mesh.interior, mesh.exterior
    A = np.diag(W[I].sum(axis=1)) - W[np.ix_(I, I)]
    return np.diag(m[I]), A, W[np.ix_(I, E)]


def test_zero_data_step():
    spec = ProblemSpec(small_mesh(), KernelSpec(0.5, 3.0))
    v, diag = step_implicit(np.zeros(spec.mesh.N), 0.1, spec)
    assert np.all(v == 0) and diag["iterations"] == 0


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_constant_data_is_stationary(p):
    spec = ProblemSpec(small_mesh(), KernelSpec(0.5, p, 2.0, "modulated"), g=1.3, u0=1.3, T=0.05, dt=0.01)
    traj = solve(spec)
    np.testing.assert_allclose(traj.fields, 1.3, rtol=0, atol=1e-14)


def test_two_node_linear_oracle():
    mesh = build_mesh(1, [(-1, 1)], 1.0, 2.0)
    assert mesh.interior.sum() == 2
    k = KernelSpec(0.5, 2.0)
    g = np.array([0.3, -0.7])
    u0 = np.array([1.0, -0.5])
    spec = ProblemSpec(mesh, k, g=g, u0=u0, T=0.1, dt=0.1)
    M, A, WIE = linear_step_matrices(mesh, k)
    dt = 0.1
    rhs = M @ u0 / dt + WIE @ g
    exact = np.linalg.solve(M / dt + A, rhs)
    v, _ = step_implicit(spec.initial_field(), 0.1, spec, StepConfig(tol=1e-13))
    np.testing.assert_allclose(v[mesh.interior], exact, rtol=0, atol=1e-10)


def test_linear_oracle_finer_mesh():
    mesh = small_mesh(h=0.25)
    k = KernelSpec(0.3, 2.0)
    spec = ProblemSpec(mesh, k, g=lambda pts, t: 0.2 * pts[:, 0], u0=bump, T=0.02, dt=0.02)
    M, A, WIE = linear_step_matrices(mesh, k)
    u0 = spec.initial_interior()
    g = spec.exterior_values(0.02)
    exact = np.linalg.solve(M / 0.02 + A, M @ u0 / 0.02 + WIE @ g)
    v, _ = step_implicit(spec.initial_field(), 0.02, spec, StepConfig(tol=1e-12))
    np.testing.assert_allclose(v[mesh.interior], exact, rtol=0, atol=1e-10)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_residual_contract(p):
    spec = ProblemSpec(small_mesh(h=1 / 16), KernelSpec(0.5, p), u0=signed, T=0.05, dt=0.01)
    traj = solve(spec, CFG)
    traj.check_invariants(spec)
    assert len(traj) == 6
    assert all(d["residual"] <= CFG.tol for d in traj.diagnostics)
    np.testing.assert_array_equal(traj.fields[0], spec.initial_field())


def test_time_grid_ceil():
    spec = ProblemSpec(small_mesh(), KernelSpec(0.5, 3.0), T=0.1, dt=0.03)
    times = spec.time_grid()
    assert len(times) == 5 and times[-1] == 0.1


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_l2_mass_dissipates(p):
    spec = ProblemSpec(small_mesh(h=1 / 16), KernelSpec(0.5, p), u0=bump, T=0.1, dt=0.01)
    traj = solve(spec, CFG)
    I = spec.mesh.interior
    mass = (traj.fields[:, I] ** 2 * spec.mesh.measures[I]).sum(axis=1)
    assert np.all(np.diff(mass) <= 1e-12 * mass[:-1])


def test_identical_data_zero_difference():
    spec = ProblemSpec(small_mesh(), KernelSpec(0.5, 3.0), T=0.03, dt=0.01)
    u = spec.mesh.points[spec.mesh.interior, 0]
    rep = l2_contraction_check(spec, u, u.copy())
    assert all(d == 0 for d in rep["distances"])


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10**6), p=st.sampled_from([2.0, 3.0, 4.0]))
def test_contraction_random_pairs(seed, p):
    rng = np.random.default_rng(seed)
    mesh = small_mesh(h=1 / 16)
    spec = ProblemSpec(mesh, KernelSpec(0.5, p, 2.0, "modulated", seed=seed % 5),
                       g=lambda pts, t: np.cos(pts[:, 0] + t), T=0.04, dt=0.01)
    a, b = rng.standard_normal((2, int(mesh.interior.sum())))
    assert l2_contraction_check(spec, a, b, CFG)["non_increasing"]


def test_linear_contraction_matches_eigenvalue():
    mesh = small_mesh(h=0.25)
    k = KernelSpec(0.5, 2.0)
    M, A, _ = linear_step_matrices(mesh, k)
    lam, vecs = scipy.linalg.eigh(A, M)
    dt = 0.05
    spec = ProblemSpec(mesh, k, T=3 * dt, dt=dt)
    # difference along the slowest mode decays by exactly 1/(1 + dt lam_min) per step
    rep = l2_contraction_check(spec, vecs[:, 0], np.zeros(len(lam)), StepConfig(tol=1e-13))
    factors = np.sqrt(np.array(rep["distances"][1:]) / np.array(rep["distances"][:-1]))
    np.testing.assert_allclose(factors, 1 / (1 + dt * lam[0]), rtol=1e-9)
    # a generic difference contracts at least that fast
    rng = np.random.default_rng(0)
    rep = l2_contraction_check(spec, rng.standard_normal(len(lam)), np.zeros(len(lam)), StepConfig(tol=1e-13))
    factors = np.sqrt(np.array(rep["distances"][1:]) / np.array(rep["distances"][:-1]))
    assert np.all(factors <= 1 / (1 + dt * lam[0]) * (1 + 1e-9))


def test_first_order_in_time():
    mesh = small_mesh(h=1 / 8)
    k = KernelSpec(0.5, 3.0)
    T = 0.05

    def run(dt, explicit=False):
        spec = ProblemSpec(mesh, k, u0=bump, T=T, dt=dt)
        traj = solve_explicit(spec) if explicit else solve(spec, StepConfig(tol=1e-12))
        return traj.fields[-1]

    ref = run(T / 512)
    dts = np.array([T / 8, T / 16, T / 32])
    for explicit in (False, True):
        err = [np.abs(run(dt, explicit) - ref).max() for dt in dts]
        slope = np.polyfit(np.log(dts), np.log(err), 1)[0]
        assert 0.8 <= slope <= 1.2, (explicit, slope)


def test_initial_guess_does_not_change_solution():
    spec = ProblemSpec(small_mesh(h=1 / 16), KernelSpec(0.5, 4.0), u0=signed, T=0.03, dt=0.01)
    rng = np.random.default_rng(3)
    a = solve(spec, CFG)
    b = solve(spec, CFG, initial_guess=lambda k, u: u + rng.standard_normal(len(u)))
    np.testing.assert_allclose(a.fields, b.fields, rtol=0, atol=1e-9)


def test_convergence_error_reports_time():
    spec = ProblemSpec(small_mesh(h=1 / 16), KernelSpec(0.5, 4.0), u0=signed, T=0.02, dt=0.01)
    with pytest.raises(ConvergenceError) as info:
        solve(spec, StepConfig(tol=1e-14, max_iter=1))
    assert info.value.time == pytest.approx(0.01)
    assert np.isfinite(info.value.best_residual)


def test_step_config_validation():
    with pytest.raises(ValueError):
        StepConfig(tol=0)
    with pytest.raises(ValueError):
        StepConfig(shrink=1.5)
    with pytest.raises(ValueError):
        ProblemSpec(small_mesh(), KernelSpec(0.5, 2.0), dt=0)


def test_weak_form_basis_shape():
    basis = weak_form_basis(Cylinder((0.0,), 0.6, 1.0, 0.5))
    assert len(basis) == 9
    assert {w for _, w in basis} == {(0.5, 1.0), (0.5, 0.75), (0.75, 1.0)}


def test_identity_residual_is_solver_level():
    spec = ProblemSpec(small_mesh(h=1 / 16), KernelSpec(0.5, 3.0), u0=signed, T=0.05, dt=0.01)
    rep = subsolution_residual(solve(spec, CFG), spec, "identity")
    assert rep["rho_abs"] <= CFG.tol * rep["basis_size"]


@pytest.mark.parametrize("transform", ["positive_part", "negative_part"])
def test_parts_are_subsolutions(transform):
    spec = ProblemSpec(small_mesh(h=1 / 16), KernelSpec(0.5, 3.0), u0=signed, T=0.05, dt=0.01)
    rep = subsolution_residual(solve(spec, CFG), spec, transform)
    assert rep["rho"] <= CFG.tol


def test_trajectory_round_trip(tmp_path):
    spec = ProblemSpec(small_mesh(), KernelSpec(0.5, 3.0), u0=bump, T=0.03, dt=0.01)
    traj = solve(spec)
    save_trajectory(traj, tmp_path)
    back = load_trajectory(tmp_path, spec.mesh)
    assert np.array_equal(back.fields, traj.fields)
    assert np.array_equal(back.times, traj.times)
    assert back.p == traj.p
    assert [d["iterations"] for d in back.diagnostics] == [d["iterations"] for d in traj.diagnostics]
