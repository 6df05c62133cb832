"""Cell-centered meshes with an exterior band, parabolic cylinders and cutoffs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Mesh",
    "Cylinder",
    "CutoffSpec",
    "build_mesh",
    "scale_cylinder",
    "build_cutoff",
    "write_mesh",
    "read_mesh",
]

_ALIGN_TOL = 1e-9


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Nodal discretization of a box domain plus a truncated exterior band.

    ``points`` has shape (N, n); ``measures`` are cell volumes. ``outer_center``
    and ``outer_halfwidth`` describe the meshed box; everything outside it is
    the unmeshed far field handled by analytic remainder bounds.
    """

    points: np.ndarray
    measures: np.ndarray
    interior: np.ndarray
    h: float
    domain_box: tuple = ()
    R_ext: float = math.inf
    outer_center: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "measures", _frozen(self.measures))
        object.__setattr__(self, "interior", _frozen(self.interior, bool))
        if self.outer_center is None:
            object.__setattr__(self, "outer_center", _frozen(np.zeros(pts.shape[1])))
        else:
            object.__setattr__(self, "outer_center", _frozen(self.outer_center))
        if len(self.measures) != len(pts) or len(self.interior) != len(pts):
            raise ValueError("points, measures and interior mask must have equal length")
        if np.any(self.measures <= 0):
            raise ValueError("cell measures must be strictly positive")

    @classmethod
    def from_points(cls, points, measures=None, interior=None):
        """Ad-hoc node set, e.g. for hand-checkable toy problems."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        if pts.ndim == 1:
            pts = pts[:, None]
        N = len(pts)
        measures = np.ones(N) if measures is None else measures
        interior = np.ones(N, bool) if interior is None else interior
        return cls(pts, measures, interior, h=0.0)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @property
    def exterior(self) -> np.ndarray:
        return ~self.interior

    @property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @property
    def exterior_index(self) -> np.ndarray:
        return np.flatnonzero(~self.interior)

    @property
    def volume(self) -> float:
        return float(self.measures.sum())

    def distances_to(self, x0) -> np.ndarray:
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (self.n,))
        return np.sqrt(((self.points - x0) ** 2).sum(axis=1))

    def ball(self, x0, r) -> np.ndarray:
        """Mask of nodes in the open ball B_r(x0)."""
        return self.distances_to(x0) < r

    def far_field_radius(self, x0) -> float:
        """Radius rho such that the unmeshed region lies outside B_rho(x0)."""
        x0 = np.broadcast_to(np.asarray(x0, dtype=float), (self.n,))
        return float(self.R_ext - np.linalg.norm(x0 - self.outer_center))

    def check_invariants(self) -> None:
        if not np.all(self.interior ^ self.exterior):
            raise AssertionError("interior/exterior masks overlap")
        if self.domain_box and math.isfinite(self.R_ext):
            meshed = (2 * self.R_ext) ** self.n
            if abs(self.volume - meshed) > 1e-12 * meshed:
                raise AssertionError("cell measures do not sum to the meshed volume")
            half = max((hi - lo) / 2 for lo, hi in self.domain_box)
            gap = self.R_ext - np.abs(self.points[self.interior] - self.outer_center).max(axis=1)
            if gap.size and gap.min() < self.R_ext - half - 1e-12:
                raise AssertionError("exterior band does not surround the domain")


def build_mesh(n, domain_box, h, R_ext) -> Mesh:
    """Uniform cell-centered mesh of ``[c - R_ext, c + R_ext]^n``.

    ``domain_box`` is a sequence of ``(lo, hi)`` pairs (a single pair is
    accepted for n = 1) and ``c`` is its center. Faces of the domain box must
    align with the grid.
    """
    if n not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {n}")
    if not h > 0:
        raise ValueError(f"spacing h must be positive, got {h}")
    box = np.asarray(domain_box, dtype=float).reshape(-1, 2)
    if box.shape[0] != n:
        raise ValueError(f"domain_box has {box.shape[0]} extents for dimension {n}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("domain box extents must satisfy lo < hi")
    center = box.mean(axis=1)
    half = (box[:, 1] - box[:, 0]) / 2
    if not R_ext > half.max():
        raise ValueError(f"R_ext={R_ext} does not exceed the domain half-width {half.max()}")

    cells = 2 * R_ext / h
    m = int(round(cells))
    if abs(cells - m) > _ALIGN_TOL * max(1.0, cells):
        raise ValueError("2*R_ext must be an integer multiple of h")
    for d in range(n):
        for face in box[d]:
            k = (face - (center[d] - R_ext)) / h
            if abs(k - round(k)) > _ALIGN_TOL * max(1.0, abs(k)):
                raise ValueError("domain faces must align with the grid")

    axes = [center[d] - R_ext + (np.arange(m) + 0.5) * h for d in range(n)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    inside = np.all((pts > box[:, 0]) & (pts < box[:, 1]), axis=1)
    measures = np.full(len(pts), h**n)
    return Mesh(pts, measures, inside, h=float(h),
                domain_box=tuple(map(tuple, box)), R_ext=float(R_ext),
                outer_center=center)


@dataclass(frozen=True)
class Cylinder:
    """Q = B_r(x0) x (t_end - duration, t_end)."""

    center: tuple
    radius: float
    t_end: float
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(np.atleast_1d(np.asarray(self.center, float)).tolist()))
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        if not self.duration > 0:
            raise ValueError("cylinder duration must be positive")

    @property
    def t_start(self) -> float:
        return self.t_end - self.duration

    def scaled(self, lam, s, p) -> "Cylinder":
        return scale_cylinder(self, lam, s, p)


def scale_cylinder(Q: Cylinder, lam, s, p) -> Cylinder:
    """lam*Q = B_{lam r}(x0) x (t1 - lam^{sp} T1, t1)."""
    if not lam > 0:
        raise ValueError(f"scale factor must be positive, got {lam}")
    return Cylinder(Q.center, lam * Q.radius, Q.t_end, lam ** (s * p) * Q.duration)


def _smoothstep(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau * tau * (3.0 - 2.0 * tau)


def _smoothstep_deriv(tau):
    inside = (tau > 0) & (tau < 1)
    return np.where(inside, 6.0 * tau * (1.0 - tau), 0.0)


@dataclass(frozen=True)
class CutoffSpec:
    """phi(x, t) = psi(|x - x0|) * zeta(t) with C^1 cubic transitions.

    psi is 1 on B_{r_in} and 0 outside B_{r_out}; zeta is 0 before ``t_out``
    and 1 after ``t_in``. Both transitions have slope at most
    ``SHAPE_CONSTANT`` over the transition length.
    """

    r_in: float
    r_out: float
    t_out: float
    t_in: float
    center: tuple

    SHAPE_CONSTANT = 1.5

    def psi(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        rho = np.sqrt(((pts - np.asarray(self.center)) ** 2).sum(axis=1))
        return _smoothstep((self.r_out - rho) / (self.r_out - self.r_in))

    def zeta(self, t):
        return _smoothstep((np.asarray(t, float) - self.t_out) / (self.t_in - self.t_out))

    def dzeta(self, t):
        w = self.t_in - self.t_out
        return _smoothstep_deriv((np.asarray(t, float) - self.t_out) / w) / w

    def __call__(self, points, t) -> np.ndarray:
        return self.psi(points) * self.zeta(t)

    def support_radius(self) -> float:
        return self.r_out


def build_cutoff(r_in, r_out, t_out, t_in, x0) -> CutoffSpec:
    if not 0 < r_in < r_out:
        raise ValueError(f"need 0 < r_in < r_out, got r_in={r_in}, r_out={r_out}")
    if not t_out < t_in:
        raise ValueError(f"need t_out < t_in, got t_out={t_out}, t_in={t_in}")
    x0 = tuple(np.atleast_1d(np.asarray(x0, float)).tolist())
    return CutoffSpec(float(r_in), float(r_out), float(t_out), float(t_in), x0)


# -- plain-text persistence -------------------------------------------------

def write_mesh(mesh: Mesh, path) -> None:
    """Header lines ``# key = value`` followed by a CSV node table."""
    path = Path(path)
    lines = [
        f"# n = {mesh.n}",
        f"# h = {mesh.h!r}",
        f"# extents = {[[float(a), float(b)] for a, b in mesh.domain_box]}",
        f"# R_ext = {mesh.R_ext!r}",
        f"# outer_center = {mesh.outer_center.tolist()}",
    ]
    coords = ",".join(f"x{d}" for d in range(mesh.n))
    lines.append(f"id,{coords},measure,interior")
    for i in range(mesh.N):
        xs = ",".join(repr(float(v)) for v in mesh.points[i])
        lines.append(f"{i},{xs},{float(mesh.measures[i])!r},{int(mesh.interior[i])}")
    path.write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    import ast

    header = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            header[key.strip()] = ast.literal_eval(val.strip())
        elif line and not line.startswith("id"):
            rows.append([float(v) for v in line.split(",")])
    n = int(header["n"])
    table = np.array(rows)
    return Mesh(table[:, 1:1 + n], table[:, 1 + n], table[:, 2 + n].astype(bool),
                h=float(header["h"]),
                domain_box=tuple(tuple(e) for e in header["extents"]),
                R_ext=float(header["R_ext"]),
                outer_center=np.array(header["outer_center"], float))
