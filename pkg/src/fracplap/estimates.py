"""Tail quantities, Caccioppoli terms, the Moser exponent ladder and sup-bound checks.

Every estimate is evaluated on a computed trajectory and reported as its
individual terms plus an empirical constant C_emp (left side / right side).
Time integrals use the backward Euler convention: snapshot k stands for the
interval (t_{k-1}, t_k].
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
import scipy.integrate
import scipy.optimize

from .geometry import Cylinder, CutoffSpec
from .kernel import KernelSpec, kernel_block

__all__ = [
    "TailEstimate",
    "CaccioppoliReport",
    "MoserLadder",
    "BoundednessReport",
    "sphere_area",
    "far_field_mass",
    "exterior_kernel_mass",
    "tail",
    "offset_d",
    "caccioppoli_report",
    "moser_ladder",
    "boundedness_check",
    "unsigned_by_composition",
    "dkp_constant",
    "inequality_suite",
    "gest_quantity",
    "tail_finiteness_audit",
]


def sphere_area(n) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def far_field_mass(n, sp, rho) -> float:
    """int_{|z| > rho} |z|^{-(n+sp)} dz = |S^{n-1}| rho^{-sp} / sp."""
    return sphere_area(n) * rho ** (-sp) / sp


def exterior_kernel_mass(n, s, p, r, dist) -> float:
    """int_{R^n \\ B_r(x0)} |x - y|^{-(n+sp)} dy for a point x with |x - x0| = dist < r."""
    sp = s * p
    if not 0 <= dist < r:
        raise ValueError("point must lie inside the ball")
    if n == 1:
        return ((r - dist) ** (-sp) + (r + dist) ** (-sp)) / sp
    if n == 2:
        # distance from x to the circle along direction theta
        def rho(theta):
            return -dist * math.cos(theta) + math.sqrt(r * r - (dist * math.sin(theta)) ** 2)
        val, _ = scipy.integrate.quad(lambda th: rho(th) ** (-sp), 0.0, 2 * math.pi,
                                      epsabs=0, epsrel=1e-12, limit=200)
        return val / sp
    raise ValueError("only n = 1, 2 are supported")


# -- tails ---------------------------------------------------------------------

@dataclass
class TailEstimate:
    value: float
    remainder: float
    variant: str
    center: tuple
    radius: float
    t_start: float
    t_end: float

    @property
    def total(self) -> float:
        """Upper certificate: value plus the far-field remainder bound."""
        return self.value + self.remainder


def _window_weights(traj, t_lo, t_hi):
    if not t_hi > t_lo:
        raise ValueError("empty time window")
    eps = 1e-12 * max(1.0, abs(traj.times[-1]))
    if t_lo < traj.times[0] - eps or t_hi > traj.times[-1] + eps:
        raise ValueError(f"time window ({t_lo}, {t_hi}) not covered by the trajectory")
    w = traj.interval_weights(t_lo, t_hi)
    if not np.any(w > 0):
        raise ValueError("empty time window")
    return w


def _spatial_tail_integrals(traj, x0, r, s, p, fields=None):
    """Per-snapshot int_{|y-x0|>=r} |v|^{p-1}|y-x0|^{-(n+sp)} dy and far-field bounds."""
    mesh = traj.mesh
    fields = traj.fields if fields is None else fields
    n, sp = mesh.n, s * p
    dist = mesh.distances_to(x0)
    outside = dist >= r
    rho = mesh.far_field_radius(x0)
    if rho < r:
        raise ValueError(f"ball of radius {r} exceeds the meshed region")
    weight = np.zeros(mesh.N)
    weight[outside] = mesh.measures[outside] * dist[outside] ** (-(n + sp))
    absv = np.abs(fields) ** (p - 1)
    integrals = absv @ weight
    if math.isfinite(rho) and mesh.exterior.any():
        M = np.abs(fields[:, mesh.exterior]).max(axis=1)
        remainders = M ** (p - 1) * far_field_mass(n, sp, rho)
    else:
        remainders = np.zeros(len(fields))
    return integrals, remainders


def tail(traj, x0, r, T1, t1, s, p=None, variant="average", fields=None) -> TailEstimate:
    """tail (time average) or tail_inf (time sup) of the trajectory outside B_r(x0)."""
    p = traj.p if p is None else p
    sp = s * p
    w = _window_weights(traj, t1 - T1, t1)
    I, R = _spatial_tail_integrals(traj, x0, r, s, p, fields)
    if variant == "average":
        A = r**sp / T1 * float(w @ I)
        B = r**sp / T1 * float(w @ (I + R))
    elif variant == "supremum":
        sel = w > 0
        A = r**sp * float(I[sel].max())
        B = r**sp * float((I + R)[sel].max())
    else:
        raise ValueError(f"unknown tail variant {variant!r}")
    value = A ** (1 / (p - 1))
    total = B ** (1 / (p - 1))
    center = tuple(np.atleast_1d(np.asarray(x0, float)).tolist())
    return TailEstimate(value, max(total - value, 0.0), variant, center, float(r), t1 - T1, t1)


def offset_d(traj, Q: Cylinder, sigma, s, p=None) -> float:
    """d = tail_inf(u_+; x0, sigma r, t0 - T0, t0) + (r^{sp}/T0)^{1/(p-2)}.

    The tail enters through its upper certificate (value + far-field bound).
    """
    p = traj.p if p is None else p
    if p <= 2:
        raise ValueError("the offset needs p > 2 (exponent 1/(p-2))")
    tl = tail(traj, Q.center, sigma * Q.radius, Q.duration, Q.t_end, s, p, "supremum",
              fields=np.maximum(traj.fields, 0.0))
    return tl.total + (Q.radius ** (s * p) / Q.duration) ** (1 / (p - 2))


# -- Caccioppoli -------------------------------------------------------------------

@dataclass
class CaccioppoliReport:
    xi: float
    d: float
    L1: float
    L2: float
    R1: float
    R2: float
    R3: float
    R4: float

    @property
    def lhs(self) -> float:
        return self.L1 + self.L2

    @property
    def rhs(self) -> float:
        return self.R1 + self.R2 + self.R3 + self.R4

    @property
    def C_emp(self) -> float:
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else math.inf

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(lhs=self.lhs, rhs=self.rhs, C_emp=self.C_emp)
        return out


def caccioppoli_report(traj, kernel: KernelSpec, Q: Cylinder, cutoff: CutoffSpec, xi, d) -> CaccioppoliReport:
    """Evaluate both sides of the sup-in-time Caccioppoli inequality on Q.

    The subsolution is taken to be u_+ (a subsolution whenever u is);
    v = u_+ + d and w = v^{(p-1+xi)/p}. The barred measure on the right is
    Lambda |x-y|^{-(n+sp)}.
    """
    if xi < 1:
        raise ValueError("xi must be >= 1")
    if not d > 0:
        raise ValueError("d must be positive")
    mesh = traj.mesh
    n, s, p = mesh.n, kernel.s, kernel.p
    sp = s * p
    x0 = np.asarray(Q.center, float)
    if not cutoff.r_out < Q.radius or not np.allclose(cutoff.center, x0):
        raise ValueError("cutoff support must lie strictly inside the cylinder's ball")
    if cutoff.t_out < Q.t_start - 1e-12:
        raise ValueError("cutoff support exceeds the cylinder's time interval")
    wts = _window_weights(traj, Q.t_start, Q.t_end)

    dist = mesh.distances_to(x0)
    B = np.flatnonzero(dist < Q.radius)
    outside = np.flatnonzero(dist >= Q.radius)
    ptsB, mB = mesh.points[B], mesh.measures[B]
    psi = cutoff.psi(ptsB)
    canon = kernel_block(KernelSpec(s, p), ptsB, ptsB) * mB[:, None] * mB[None, :]
    supp = np.flatnonzero(dist[B] <= cutoff.r_out)

    # kernel mass from supp(psi) to the unmeshed far field and to exterior-of-B nodes
    rho_far = mesh.far_field_radius(x0)
    far_pts = ptsB[supp]
    Kout = kernel_block(KernelSpec(s, p), far_pts, mesh.points[outside]) * mesh.measures[outside][None, :]
    far_rho_x = rho_far - np.sqrt(((far_pts - x0) ** 2).sum(axis=1)) if math.isfinite(rho_far) else None
    ext_mass = exterior_kernel_mass(n, s, p, Q.radius, cutoff.r_out)

    u_plus = np.maximum(traj.fields, 0.0)
    L1 = R1 = S2 = R3 = R4 = 0.0
    L2 = 0.0
    time_dep = kernel.time_dependent
    Kfix = None if time_dep else kernel_block(kernel, ptsB, ptsB) * mB[:, None] * mB[None, :]
    for k in np.flatnonzero(wts > 0):
        tk = traj.times[k]
        v = u_plus[k, B] + d
        w = v ** ((p - 1 + xi) / p)
        zeta = float(cutoff.zeta(tk))
        phi = psi * zeta
        K = Kfix if not time_dep else kernel_block(kernel, ptsB, ptsB, tk) * mB[:, None] * mB[None, :]
        wphi = w * phi
        L1 += wts[k] * float((np.abs(wphi[:, None] - wphi[None, :]) ** p * K).sum())
        mx = np.maximum(w[:, None], w[None, :]) ** p
        R1 += wts[k] * kernel.Lam * float((mx * np.abs(phi[:, None] - phi[None, :]) ** p * canon).sum())
        S2 += wts[k] * float((w**p * phi**p * mB).sum())
        ext_u = Kout @ (u_plus[k, outside] ** (p - 1))
        if far_rho_x is not None and mesh.exterior.any():
            M = float(np.abs(traj.fields[k, mesh.exterior]).max())
            ext_u = ext_u + M ** (p - 1) * sphere_area(n) * far_rho_x ** (-sp) / sp
        sup_ext = float(ext_u.max()) if ext_u.size else 0.0
        R3 += wts[k] * sup_ext * float((v**xi * phi**p * mB).sum())
        dphi_p = psi**p * p * zeta ** (p - 1) * float(cutoff.dzeta(tk))
        R4 += wts[k] / (1 + xi) * float((v ** (1 + xi) * np.clip(dphi_p, 0, None) * mB).sum())
        L2 = max(L2, float((v ** (1 + xi) * phi**p * mB).sum()) / (1 + xi))
    return CaccioppoliReport(float(xi), float(d), float(L1), float(L2), float(R1),
                             float(ext_mass * S2), float(R3), float(R4))


# -- Moser ladder --------------------------------------------------------------------

@dataclass
class MoserLadder:
    n: object
    s: object
    p: object
    xi0: object
    kappa_star: object
    G: object
    gamma: object
    alpha: object
    alpha_final: object
    xi: list = field(default_factory=list)
    p_levels: list = field(default_factory=list)
    kappa: list = field(default_factory=list)

    def identities_hold(self) -> bool:
        """Recursions checked with ``==`` (exact for Fraction inputs)."""
        n, s, p, g = self.n, self.s, self.p, self.gamma
        exact = isinstance(g, Fraction)

        def same(a, b):
            return a == b if exact else math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)

        ok = same(g, 1 + 1 / self.G) and same(g, (n + s * p) / n)
        for j in range(len(self.xi) - 1):
            ok &= same(self.xi[j + 1], g * (self.xi[j] + 1) - 1)
            ok &= same(p - 1 + s * p / n + g * self.xi[j], self.p_levels[j + 1])
            ok &= same(self.xi[j], g**j * (self.xi0 + 1) - 1)
        ok &= all(1 < k < self.kappa_star for k in self.kappa)
        return bool(ok)


def moser_ladder(n, s, p, xi0, levels=8) -> MoserLadder:
    """Exponents of the Moser iteration; exact when all inputs are ints or Fractions."""
    exact = all(isinstance(v, (int, Fraction)) for v in (n, s, p, xi0))
    if exact:
        n, s, p, xi0 = map(Fraction, (n, s, p, xi0))
    sp = s * p
    if not sp < n:
        raise ValueError("the ladder needs sp < n")
    if not xi0 > 1:
        raise ValueError("xi0 must exceed 1")
    kappa_star = n / (n - sp)
    G = kappa_star / (kappa_star - 1)
    gamma = 1 + 1 / G
    xi = [xi0]
    for _ in range(levels):
        xi.append(gamma * (xi[-1] + 1) - 1)
    p_levels = [p - 1 + x for x in xi]
    kappa = [1 + (1 + x) / (G * (p - 1 + x)) for x in xi]
    return MoserLadder(n, s, p, xi0, kappa_star, G, gamma,
                       (n + sp) ** 2 / sp, (n + sp) * (n + sp + s * n) / sp,
                       xi, p_levels, kappa)


# -- local boundedness ---------------------------------------------------------------

@dataclass
class BoundednessReport:
    mode: str
    sigma: float
    lhs: float
    offset_term: float
    tail_term: float
    average_term: float
    prefactor: float
    alpha: float
    tail_term_alt: float = math.nan

    @property
    def rhs(self) -> float:
        return self.prefactor * (self.offset_term + self.tail_term + self.average_term)

    @property
    def rhs_alt(self) -> float:
        return self.prefactor * (self.offset_term + self.tail_term_alt + self.average_term)

    @property
    def C_emp(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else math.inf

    @property
    def C_emp_alt(self) -> float:
        return self.lhs / self.rhs_alt if self.rhs_alt > 0 else math.inf

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(rhs=self.rhs, C_emp=self.C_emp, rhs_alt=self.rhs_alt, C_emp_alt=self.C_emp_alt)
        return out


def _check_double_cylinder(traj, Q, s, p):
    mesh = traj.mesh
    big = mesh.ball(Q.center, 2 * Q.radius)
    if np.any(big & mesh.exterior):
        raise ValueError("2Q leaves the domain: B_{2R}(x0) meets exterior nodes")
    if Q.t_end - 2 ** (s * p) * Q.duration < traj.times[0] - 1e-12 or Q.t_end > traj.times[-1] + 1e-12:
        raise ValueError("2Q is not covered by the trajectory's time interval")


def _sup_bound_terms(traj, Q, sigma, s, p, lhs_fields, rhs_fields, mode):
    mesh = traj.mesh
    sp = s * p
    R, T0 = Q.radius, Q.duration
    inner = mesh.ball(Q.center, sigma * R)
    w_inner = _window_weights(traj, Q.t_end - sigma**sp * T0, Q.t_end)
    lhs = float(lhs_fields[np.ix_(w_inner > 0, inner)].max())

    w = _window_weights(traj, Q.t_start, Q.t_end)
    tl = tail(traj, Q.center, sigma * R, T0, Q.t_end, s, p, "supremum", fields=rhs_fields).total
    tl_alt = tail(traj, Q.center, R, T0, Q.t_end, s, p, "supremum", fields=rhs_fields).total
    ball = mesh.ball(Q.center, R)
    m = mesh.measures[ball]
    avg = float(((rhs_fields[np.ix_(w > 0, ball)] * m).sum(axis=1) / m.sum()).max())
    ratio = T0 / R**sp
    alpha = (mesh.n + sp) * (mesh.n + sp + s * mesh.n) / sp
    return BoundednessReport(
        mode=mode, sigma=float(sigma), lhs=lhs,
        offset_term=(R**sp / T0) ** (1 / (p - 2)),
        tail_term=ratio * tl ** (p - 1),
        average_term=ratio * max(avg, 0.0) ** (p - 1),
        prefactor=(1 - sigma) ** (-alpha), alpha=alpha,
        tail_term_alt=ratio * tl_alt ** (p - 1),
    )


def boundedness_check(traj, Q: Cylinder, sigma, s, p=None, mode="nonneg-subsolution") -> BoundednessReport:
    """Both sides of the local sup bound on sigma*Q.

    ``nonneg-subsolution`` bounds sup u_+; ``unsigned-solution`` bounds sup |u|
    with the tail and average of |u|. ``tail_term`` uses the tail radius
    sigma*R, ``tail_term_alt`` the radius R.
    """
    p = traj.p if p is None else p
    if p <= 2:
        raise ValueError("the sup bound needs p > 2")
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    _check_double_cylinder(traj, Q, s, p)
    if mode == "nonneg-subsolution":
        f = np.maximum(traj.fields, 0.0)
    elif mode == "unsigned-solution":
        f = np.abs(traj.fields)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _sup_bound_terms(traj, Q, sigma, s, p, f, f, mode)


def unsigned_by_composition(traj, Q: Cylinder, sigma, s, p=None) -> BoundednessReport:
    """Unsigned bound assembled from the nonnegative checks on u_+ and u_-.

    Both parts are bounded with the |u| tail and average; the left side is the
    larger of the two sups.
    """
    p = traj.p if p is None else p
    if p <= 2:
        raise ValueError("the sup bound needs p > 2")
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    _check_double_cylinder(traj, Q, s, p)
    absu = np.abs(traj.fields)
    plus = _sup_bound_terms(traj, Q, sigma, s, p, np.maximum(traj.fields, 0.0), absu, "composition")
    minus = _sup_bound_terms(traj, Q, sigma, s, p, np.maximum(-traj.fields, 0.0), absu, "composition")
    plus.lhs = max(plus.lhs, minus.lhs)
    return plus


# -- elementary inequalities -----------------------------------------------------------

def dkp_constant(p, grid=1201) -> float:
    """Smallest c with phi_y^p <= (1 + c e) phi_x^p + (1 + c e) e^{1-p} |phi_x - phi_y|^p.

    By p-homogeneity only phi_y = 1 > phi_x = a in [0, 1) matters. Grid
    search over (a, e) in [0, 1) x (0, 1] followed by a bounded local polish.
    """
    def required(a, e):
        D = (1 - a) ** p
        return (1 - a**p - e ** (1 - p) * D) / (e * (a**p + e ** (1 - p) * D))

    a = np.linspace(0.0, 1.0, grid)[:-1][:, None]
    e = np.unique(np.concatenate([np.logspace(-8, 0, grid), np.linspace(0.01, 1.0, grid)]))[None, :]
    with np.errstate(over="ignore", invalid="ignore"):
        c = required(a, e)
    c = np.where(np.isfinite(c), c, -np.inf)
    k = np.unravel_index(np.argmax(c), c.shape)
    best = float(c[k])
    res = scipy.optimize.minimize(lambda z: -required(z[0], z[1]), x0=[a[k[0], 0], e[0, k[1]]],
                                  bounds=[(0.0, 1.0 - 1e-12), (1e-12, 1.0)], method="L-BFGS-B")
    if res.success or np.isfinite(res.fun):
        best = max(best, float(-res.fun))
    return max(best, 0.0)


def inequality_suite(seed=0, trials=100_000, p_values=(2.0, 2.5, 3.0, 4.0), tol=1e-12) -> dict:
    """Random trials of three elementary inequalities.

    aleb:      |a|^{p-2}a - |b|^{p-2}b <= |a-b|^{p-2}(a-b) for 0 <= a < b
    alphabeta: alpha^s + beta^s <= (alpha + beta)^s for s >= 1
    dkp:       the cutoff inequality with c_p from ``dkp_constant``
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    out = {}

    p = rng.uniform(2.0, 8.0, trials)
    a = rng.uniform(0.0, 10.0, trials) * (rng.random(trials) > 0.05)
    b = a + rng.uniform(1e-9, 10.0, trials)
    lhs = a ** (p - 1) - b ** (p - 1)
    rhs = -((b - a) ** (p - 1))
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    out["aleb"] = {"trials": trials, "violations": int(np.sum(lhs > rhs + tol * scale))}

    s = rng.uniform(1.0, 8.0, trials)
    al = np.exp(rng.uniform(-5, 3, trials))
    be = np.exp(rng.uniform(-5, 3, trials))
    lhs = al**s + be**s
    rhs = (al + be) ** s
    out["alphabeta"] = {"trials": trials,
                        "violations": int(np.sum(lhs > rhs * (1 + tol)))}

    c_p = {float(q): dkp_constant(q) for q in p_values}
    pp = rng.choice(np.asarray(p_values, float), trials)
    cc = np.array([c_p[float(q)] for q in pp])
    x = rng.random(trials)
    y = rng.random(trials)
    eps = np.exp(rng.uniform(math.log(1e-6), 0.0, trials))
    lhs = y**pp
    rhs = (1 + cc * eps) * x**pp + (1 + cc * eps) * eps ** (1 - pp) * np.abs(x - y) ** pp
    out["dkp"] = {"trials": trials, "violations": int(np.sum(lhs > rhs + tol * np.maximum(1.0, rhs))),
                  "c_p": {str(k): v for k, v in c_p.items()},
                  "c_p_non_decreasing": bool(np.all(np.diff([c_p[float(q)] for q in sorted(p_values)]) >= 0))}
    out["passed"] = all(out[k]["violations"] == 0 for k in ("aleb", "alphabeta", "dkp")) \
        and out["dkp"]["c_p_non_decreasing"]
    return out


# -- tail finiteness audit -------------------------------------------------------------

def gest_quantity(g, n, s, p, x0, R_ext, h, times=(0.0,)) -> float:
    """sup_t int_{|x| < R_ext} |g|^{p-1}(x, t) / (1 + |x - x0|^{n+sp}) dx on a cell-centered grid."""
    m = int(round(2 * R_ext / h))
    axes = [-R_ext + (np.arange(m) + 0.5) * h for _ in range(n)]
    pts = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    pts = pts[np.sqrt((pts**2).sum(axis=1)) < R_ext]
    dist = np.sqrt(((pts - np.asarray(x0, float)) ** 2).sum(axis=1))
    wgt = h**n / (1 + dist ** (n + s * p))
    return max(float((np.abs(np.asarray(g(pts, t), float)) ** (p - 1) * wgt).sum()) for t in times)


def tail_finiteness_audit(traj, spec, x0=None, r=None, q=None, R_ext_list=None, h=None) -> dict:
    """Discrete versions of the three quantities controlling tail_inf.

    ``gest``: sup_t of the weighted exterior mass of |g|^{p-1}; ``uest``:
    sup_t int_Omega |u|^q (q = p - 1 by default); ``localtailsup``:
    sup_t int_{B_{r/2}} |u|^p. With ``R_ext_list`` the gest integral is
    recomputed on growing discs to flag non-integrable exterior data.
    """
    mesh = traj.mesh
    p = traj.p
    s = spec.kernel.s
    n = mesh.n
    q = p - 1 if q is None else q
    box = np.asarray(mesh.domain_box, float)
    x0 = box.mean(axis=1) if x0 is None else np.asarray(x0, float)
    r = float((box[:, 1] - box[:, 0]).min() / 2) if r is None else r
    ext, I = mesh.exterior, mesh.interior
    dist = mesh.distances_to(x0)
    wg = mesh.measures * ext / (1 + dist ** (n + s * p))
    gest = float((np.abs(traj.fields) ** (p - 1) @ wg).max())
    uest = float((np.abs(traj.fields[:, I]) ** q @ mesh.measures[I]).max())
    half = mesh.ball(x0, r / 2) & I
    local = float((np.abs(traj.fields[:, half]) ** p @ mesh.measures[half]).max()) if half.any() else 0.0
    report = {"gest": gest, "uest": uest, "localtailsup": local, "q": q}
    if R_ext_list:
        gfun = spec.g if callable(spec.g) else (lambda pts, t, c=float(np.asarray(spec.g).ravel()[0]): np.full(len(pts), c))
        hh = mesh.h if h is None else h
        vals = [gest_quantity(gfun, n, s, p, x0, R, hh, traj.times) for R in R_ext_list]
        incr = np.diff(vals)
        rel = [abs(d) / v if v > 0 else 0.0 for d, v in zip(incr, vals[1:])]
        ratios = [incr[k + 1] / incr[k] for k in range(len(incr) - 1) if incr[k] > 0]
        report.update(R_ext=list(R_ext_list), gest_by_R=vals, relative_change=rel,
                      increment_ratios=ratios,
                      stabilized=bool(rel and rel[-1] < 0.05),
                      divergent=bool(ratios and ratios[-1] > 0.9))
    return report
