"""Backward Euler for du/dt + Lu = 0 with exterior data, one convex minimization per step.

Each step minimizes over interior values

    F(v) = (1/(2 dt)) sum_i m_i (v_i - u_i)^2 + E(v)/2,

whose gradient divided by m_i is the discrete equation residual
(v_i - u_i)/dt + (Lv)_i. F is strictly convex for p >= 2, so damped Newton
with backtracking converges from any start.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.linalg

from .geometry import Cylinder, Mesh, build_cutoff
from .kernel import KernelSpec
from .operator import apply_L, build_plan, energy, negative_part, positive_part, read_field, write_field

__all__ = [
    "ProblemSpec",
    "StepConfig",
    "Trajectory",
    "ConvergenceError",
    "step_implicit",
    "solve",
    "solve_explicit",
    "l2_contraction_check",
    "subsolution_residual",
    "weak_form_basis",
    "save_trajectory",
    "load_trajectory",
]

Data = Union[float, np.ndarray, Callable]


class ConvergenceError(RuntimeError):
    def __init__(self, msg, time=math.nan, best_residual=math.nan):
        super().__init__(msg)
        self.time = time
        self.best_residual = best_residual


@dataclass
class StepConfig:
    tol: float = 1e-9
    max_iter: int = 60
    shrink: float = 0.5
    step0: float = 1.0
    armijo: float = 1e-4

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")


@dataclass
class ProblemSpec:
    """Initial/exterior value problem on ``mesh``.

    ``g`` is a constant, an array over exterior nodes, or ``g(points, t)``;
    ``u0`` is a constant, an array (interior-sized or full) or ``u0(points)``.
    """

    mesh: Mesh
    kernel: KernelSpec
    g: Data = 0.0
    u0: Data = 0.0
    T: float = 1.0
    dt: float = 0.1

    def __post_init__(self):
        if not self.T > 0 or not self.dt > 0:
            raise ValueError("T and dt must be positive")

    @property
    def p(self) -> float:
        return self.kernel.p

    def exterior_values(self, t) -> np.ndarray:
        ext = self.mesh.exterior
        if callable(self.g):
            vals = np.broadcast_to(np.asarray(self.g(self.mesh.points[ext], t), float), (int(ext.sum()),))
        else:
            vals = np.broadcast_to(np.asarray(self.g, float), (int(ext.sum()),))
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"exterior data not finite at t={t}")
        return np.array(vals)

    def initial_interior(self) -> np.ndarray:
        I = self.mesh.interior
        nI = int(I.sum())
        if callable(self.u0):
            vals = np.asarray(self.u0(self.mesh.points[I]), float)
        else:
            vals = np.asarray(self.u0, float)
            if vals.shape == (self.mesh.N,):
                vals = vals[I]
        vals = np.array(np.broadcast_to(vals, (nI,)))
        if not np.all(np.isfinite(vals)):
            raise ValueError("initial data not finite")
        return vals

    def initial_field(self) -> np.ndarray:
        return self.assemble(self.initial_interior(), 0.0)

    def assemble(self, interior_values, t) -> np.ndarray:
        u = np.empty(self.mesh.N)
        u[self.mesh.interior] = interior_values
        u[self.mesh.exterior] = self.exterior_values(t)
        return u

    def time_grid(self) -> np.ndarray:
        steps = math.ceil(self.T / self.dt - 1e-9)
        times = np.arange(steps + 1) * self.dt
        times[-1] = self.T
        return times


@dataclass
class Trajectory:
    mesh: Mesh
    times: np.ndarray
    fields: np.ndarray  # (steps + 1, N)
    diagnostics: list = field(default_factory=list)
    p: float = 2.0

    def __len__(self):
        return len(self.times)

    def check_invariants(self, spec: ProblemSpec | None = None) -> None:
        if np.any(np.diff(self.times) <= 0):
            raise AssertionError("times not strictly increasing")
        if spec is not None:
            ext = self.mesh.exterior
            for t, u in zip(self.times, self.fields):
                if not np.allclose(u[ext], spec.exterior_values(t), rtol=0, atol=0):
                    raise AssertionError(f"exterior values differ from g at t={t}")

    def transformed(self, transform: str) -> "Trajectory":
        f = {"identity": lambda u: u, "positive_part": positive_part,
             "negative_part": negative_part, "abs": np.abs}[transform]
        return Trajectory(self.mesh, self.times, f(self.fields), self.diagnostics, self.p)

    def interval_weights(self, t_lo, t_hi) -> np.ndarray:
        """Overlap of each step interval (t_{k-1}, t_k] with (t_lo, t_hi); entry 0 is 0."""
        w = np.zeros(len(self.times))
        a, b = self.times[:-1], self.times[1:]
        w[1:] = np.clip(np.minimum(b, t_hi) - np.maximum(a, t_lo), 0.0, None)
        return w


class _StepProblem:
    """Objective, gradient and Hessian of one implicit step."""

    def __init__(self, spec, u_prev, t_next, dt, plan):
        self.spec = spec
        self.p = spec.p
        self.dt = dt
        self.plan = plan
        mesh = spec.mesh
        self.I = mesh.interior_index
        self.mI = mesh.measures[self.I]
        self.u_prevI = u_prev[self.I]
        self.base = spec.assemble(self.u_prevI, t_next)
        self._W = None

    def field(self, vI):
        v = self.base.copy()
        v[self.I] = vI
        return v

    def objective(self, vI):
        d = vI - self.u_prevI
        return 0.5 / self.dt * float(np.dot(self.mI, d * d)) + 0.5 * energy(self.plan, self.field(vI), self.p)

    def residual(self, vI):
        """(v - u_prev)/dt + Lv on interior nodes."""
        Lv = apply_L(self.plan, self.field(vI), self.p)[self.I]
        return (vI - self.u_prevI) / self.dt + Lv

    def hessian(self, vI):
        if self._W is None:
            self._W = self.plan.dense()
        W = self._W
        if self.p == 2:
            C = W
        else:
            v = self.field(vI)
            C = (self.p - 1) * np.abs(v[:, None] - v[None, :]) ** (self.p - 2) * W
        CI = C[self.I]
        H = -CI[:, self.I]
        H[np.diag_indices_from(H)] += CI.sum(axis=1) + self.mI / self.dt
        return H


def _newton_direction(H, g):
    try:
        c = scipy.linalg.cho_factor(H, check_finite=False)
        return -scipy.linalg.cho_solve(c, g, check_finite=False)
    except np.linalg.LinAlgError:
        return -np.linalg.solve(H, g)


def step_implicit(u_prev, t_next, spec: ProblemSpec, cfg: StepConfig | None = None,
                  dt=None, v_init=None, plan=None):
    """One backward Euler step; returns ``(field, diagnostics)``."""
    cfg = cfg or StepConfig()
    dt = spec.dt if dt is None else dt
    if not dt > 0:
        raise ValueError("time step must be positive")
    u_prev = np.asarray(u_prev, float)
    if not np.all(np.isfinite(u_prev)):
        raise ValueError("previous field is not finite")
    if plan is None:
        plan = build_plan(spec.mesh, spec.kernel, t_next)
    prob = _StepProblem(spec, u_prev, t_next, dt, plan)
    vI = prob.u_prevI.copy() if v_init is None else np.asarray(v_init, float)[prob.I].copy()

    r = prob.residual(vI)
    res = float(np.abs(r).max()) if r.size else 0.0
    F = prob.objective(vI)
    best = res
    it = 0
    while res > cfg.tol:
        if it >= cfg.max_iter:
            raise ConvergenceError(f"no convergence at t={t_next}: best residual {best:.3e}",
                                   time=t_next, best_residual=best)
        it += 1
        grad = prob.mI * r
        d = _newton_direction(prob.hessian(vI), grad)
        slope = float(np.dot(grad, d))
        alpha = cfg.step0
        while True:
            trial = vI + alpha * d
            F_new = prob.objective(trial)
            if not math.isfinite(F_new):
                raise ConvergenceError(f"NaN during line search at t={t_next}",
                                       time=t_next, best_residual=best)
            r_new = prob.residual(trial)
            res_new = float(np.abs(r_new).max())
            if F_new <= F + cfg.armijo * alpha * slope:
                break
            # objective decrease below roundoff: fall back on the residual
            if F_new <= F + 1e-14 * abs(F) and res_new < res:
                break
            alpha *= cfg.shrink
            if alpha < 1e-12:
                raise ConvergenceError(f"line search stalled at t={t_next}: residual {res:.3e}",
                                       time=t_next, best_residual=best)
        vI, r, res, F = trial, r_new, res_new, F_new
        best = min(best, res)

    v = prob.field(vI)
    diag = {"time": float(t_next), "iterations": it, "residual": res,
            "energy": energy(plan, v, spec.p)}
    return v, diag


def solve(spec: ProblemSpec, cfg: StepConfig | None = None, initial_guess=None) -> Trajectory:
    """Run backward Euler from u0 (+) g(0) to T.

    ``initial_guess(k, u_prev)`` may supply the minimizer start for step k.
    """
    cfg = cfg or StepConfig()
    times = spec.time_grid()
    fields = np.empty((len(times), spec.mesh.N))
    fields[0] = spec.initial_field()
    plan = None if spec.kernel.time_dependent else build_plan(spec.mesh, spec.kernel)
    diags = []
    for k in range(1, len(times)):
        v_init = None if initial_guess is None else initial_guess(k, fields[k - 1])
        step_plan = plan if plan is not None else build_plan(spec.mesh, spec.kernel, times[k])
        try:
            fields[k], d = step_implicit(fields[k - 1], times[k], spec, cfg,
                                         dt=times[k] - times[k - 1], v_init=v_init, plan=step_plan)
        except ConvergenceError as err:
            raise ConvergenceError(f"step {k} failed at t={times[k]}: {err}",
                                   time=times[k], best_residual=err.best_residual) from err
        diags.append(d)
    return Trajectory(spec.mesh, times, fields, diags, spec.p)


def solve_explicit(spec: ProblemSpec) -> Trajectory:
    """Forward Euler on the same grid; only for comparison on small meshes."""
    times = spec.time_grid()
    I = spec.mesh.interior
    fields = np.empty((len(times), spec.mesh.N))
    fields[0] = spec.initial_field()
    plan = None if spec.kernel.time_dependent else build_plan(spec.mesh, spec.kernel)
    for k in range(1, len(times)):
        pl = plan if plan is not None else build_plan(spec.mesh, spec.kernel, times[k - 1])
        Lu = apply_L(pl, fields[k - 1], spec.p)
        nxt = fields[k - 1][I] - (times[k] - times[k - 1]) * Lu[I]
        fields[k] = spec.assemble(nxt, times[k])
    return Trajectory(spec.mesh, times, fields, [], spec.p)


def l2_contraction_check(spec: ProblemSpec, u0_a, u0_b, cfg: StepConfig | None = None,
                         slack=1e-10) -> dict:
    """Run both initial data with shared g and report sum m_i (u_i - v_i)^2 per step."""
    from dataclasses import replace

    ta = solve(replace(spec, u0=u0_a), cfg)
    tb = solve(replace(spec, u0=u0_b), cfg)
    I = spec.mesh.interior
    m = spec.mesh.measures[I]
    diffs = ((ta.fields[:, I] - tb.fields[:, I]) ** 2 * m).sum(axis=1)
    incr = np.diff(diffs)
    allowed = slack * np.maximum(diffs[:-1], np.finfo(float).tiny)
    return {
        "times": ta.times.tolist(),
        "distances": diffs.tolist(),
        "non_increasing": bool(np.all(incr <= allowed)),
        "max_relative_increase": float(np.max(incr / np.maximum(diffs[:-1], 1e-300), initial=0.0)),
        "trajectories": (ta, tb),
    }


def _tent(t, a, b):
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return np.clip(1.0 - np.abs(np.asarray(t, float) - mid) / half, 0.0, None)


def weak_form_basis(cylinder: Cylinder, radii_fractions=(1 / 3, 2 / 3, 1.0)):
    """Tensor test functions: radial cutoffs x tent profiles in time.

    Returns a list of ``(cutoff, (a, b))`` pairs. Only the spatial profile
    of the cutoff is used; the time profile is the tent on ``[a, b]``.
    """
    t0, t1 = cylinder.t_start, cylinder.t_end
    mid = 0.5 * (t0 + t1)
    windows = [(t0, t1), (t0, mid), (mid, t1)]
    basis = []
    for frac in radii_fractions:
        r_out = frac * cylinder.radius
        cut = build_cutoff(0.5 * r_out, r_out, t0 - 1.0, t0, cylinder.center)
        for w in windows:
            basis.append((cut, w))
    return basis


def subsolution_residual(traj: Trajectory, spec: ProblemSpec, transform="identity",
                         cylinders=None) -> dict:
    """Worst normalized weak-form pairing over the fixed test basis.

    For each nonnegative test function eta the pairing

        sum_k dt_k sum_i m_i [(w^k_i - w^{k-1}_i)/dt_k + (L w^k)_i] eta(x_i, t_k)

    is divided by sum_k dt_k sum_i m_i eta(x_i, t_k). ``rho`` is the maximum
    over the basis; ``rho <= tol`` certifies the discrete subsolution
    inequality for these tests.
    """
    mesh = traj.mesh
    w = traj.transformed(transform)
    if cylinders is None:
        box = np.asarray(mesh.domain_box, float)
        center = box.mean(axis=1)
        radius = 0.9 * float((box[:, 1] - box[:, 0]).min() / 2)
        cylinders = [Cylinder(center, radius, traj.times[-1], traj.times[-1] - traj.times[0])]
    I = mesh.interior
    m = mesh.measures
    dts = np.diff(traj.times)
    p = traj.p
    plan = None if spec.kernel.time_dependent else build_plan(mesh, spec.kernel)
    brackets = np.zeros((len(dts), mesh.N))
    for k in range(1, len(traj.times)):
        pl = plan if plan is not None else build_plan(mesh, spec.kernel, traj.times[k])
        Lw = apply_L(pl, w.fields[k], p)
        brackets[k - 1] = (w.fields[k] - w.fields[k - 1]) / dts[k - 1] + Lw
    brackets[:, ~I] = 0.0

    values = []
    for cyl in cylinders:
        for cut, (a, b) in weak_form_basis(cyl):
            psi = cut.psi(mesh.points) * I
            zeta = _tent(traj.times[1:], a, b)
            eta = zeta[:, None] * psi[None, :]
            mass = float((dts[:, None] * eta * m).sum())
            if mass == 0.0:
                continue
            values.append(float((dts[:, None] * eta * m * brackets).sum()) / mass)
    values = np.array(values)
    return {"transform": transform, "rho": float(values.max()),
            "rho_abs": float(np.abs(values).max()), "values": values.tolist(),
            "basis_size": int(len(values))}


# -- persistence -------------------------------------------------------------

def save_trajectory(traj: Trajectory, outdir) -> Path:
    """One CSV per snapshot plus ``index.csv`` with per-step diagnostics."""
    outdir = Path(outdir)
    snap = outdir / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    lines = [f"# p = {traj.p!r}", "step,time,file,iterations,residual,energy"]
    for k, (t, u) in enumerate(zip(traj.times, traj.fields)):
        name = f"snap_{k:05d}.csv"
        write_field(snap / name, u, t)
        d = traj.diagnostics[k - 1] if k > 0 and traj.diagnostics else {}
        lines.append(f"{k},{float(t)!r},snapshots/{name},{d.get('iterations', 0)},"
                     f"{float(d.get('residual', 0.0))!r},{float(d.get('energy', math.nan))!r}")
    (outdir / "index.csv").write_text("\n".join(lines) + "\n")
    return outdir / "index.csv"


def load_trajectory(outdir, mesh: Mesh) -> Trajectory:
    outdir = Path(outdir)
    p = 2.0
    times, fields, diags = [], [], []
    for line in (outdir / "index.csv").read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            if key.strip() == "p":
                p = float(val)
            continue
        if line.startswith("step"):
            continue
        k, t, fname, its, res, en = line.split(",")
        t_file, u = read_field(outdir / fname)
        times.append(t_file)
        fields.append(u)
        if int(k) > 0:
            diags.append({"time": t_file, "iterations": int(its), "residual": float(res),
                          "energy": float(en)})
    return Trajectory(mesh, np.array(times), np.array(fields), diags, p)
