"""Discrete nonlocal p-Laplacian, energy and Gagliardo seminorms.

Nodes carry cell measures m_i and the pair weights are W_ij = K(x_i, x_j, t) m_i m_j.
The operator is

    (Lu)_i = (1/m_i) sum_{j != i} |u_i - u_j|^{p-2} (u_i - u_j) W_ij,

the diagonal being dropped (the discrete principal value). Exterior nodes hold
the Dirichlet-type data and enter every sum like any other node.
"""
from __future__ import annotations

import gc
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kernel import KernelSpec, eval_kernel, kernel_block

__all__ = [
    "OperatorApplyPlan",
    "build_plan",
    "flux",
    "apply_L",
    "apply_L_dense",
    "apply_L_loop",
    "pairing",
    "energy",
    "energy_gradient",
    "seminorm",
    "truncate",
    "positive_part",
    "negative_part",
    "sobolev_ratio",
    "benchmark_apply",
    "scaling_sweep",
    "write_field",
    "read_field",
]

DEFAULT_TILE = 256


def flux(D, p):
    """|D|^{p-2} D, with cheap paths for the common integer exponents."""
    if p == 2:
        return D
    if p == 3:
        return np.abs(D) * D
    if p == 4:
        return D * D * D
    return np.abs(D) ** (p - 2) * D


def _abs_pow(D, p):
    if p == 2:
        return D * D
    if p == 4:
        D2 = D * D
        return D2 * D2
    return np.abs(D) ** p


@dataclass(frozen=True, eq=False)
class OperatorApplyPlan:
    """Upper-triangular tiles of the pair-weight matrix.

    ``tiles`` holds ``(i0, i1, j0, j1, W)`` with ``i0 <= j0``; diagonal tiles
    keep only the strict upper triangle so every unordered pair is stored once.
    """

    measures: np.ndarray
    tiles: tuple
    tile: int
    t: float = 0.0
    kernel: KernelSpec = field(default=None, compare=False)
    mesh: object = field(default=None, compare=False)

    @property
    def N(self) -> int:
        return len(self.measures)

    def dense(self) -> np.ndarray:
        W = np.zeros((self.N, self.N))
        for i0, i1, j0, j1, B in self.tiles:
            W[i0:i1, j0:j1] += B
        return W + W.T

    def nbytes(self) -> int:
        return sum(B.nbytes for *_, B in self.tiles)


def build_plan(mesh, kernel: KernelSpec, t=0.0, tile=DEFAULT_TILE) -> OperatorApplyPlan:
    pts = mesh.points
    m = mesh.measures
    N = len(pts)
    tiles = []
    for i0 in range(0, N, tile):
        i1 = min(i0 + tile, N)
        for j0 in range(i0, N, tile):
            j1 = min(j0 + tile, N)
            B = kernel_block(kernel, pts[i0:i1], pts[j0:j1], t)
            B *= m[i0:i1, None] * m[None, j0:j1]
            if i0 == j0:
                B = np.triu(B, k=1)
            B.setflags(write=False)
            tiles.append((i0, i1, j0, j1, B))
    measures = m.copy()
    measures.setflags(write=False)
    return OperatorApplyPlan(measures, tuple(tiles), tile, float(t), kernel, mesh)


def _check_field(plan, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (plan.N,):
        raise ValueError(f"field has shape {u.shape}, plan expects ({plan.N},)")
    return u


def _flux_inplace(D, p, work):
    """Overwrite D with |D|^{p-2} D using ``work`` as scratch."""
    if p == 2:
        return D
    np.abs(D, out=work)
    if p == 4:
        np.multiply(work, work, out=work)
    elif p != 3:
        np.power(work, p - 2, out=work)
    D *= work
    return D


def _tile_partials(u, p, tiles):
    # scratch reused across tiles: fresh temporaries per tile cost page faults
    rows = max((i1 - i0 for i0, i1, *_ in tiles), default=0)
    cols = max((j1 - j0 for _, _, j0, j1, _ in tiles), default=0)
    buf = np.empty((rows, cols))
    work = np.empty((rows, cols))
    out = []
    for i0, i1, j0, j1, B in tiles:
        D = buf[: i1 - i0, : j1 - j0]
        np.subtract(u[i0:i1, None], u[None, j0:j1], out=D)
        F = _flux_inplace(D, p, work[: i1 - i0, : j1 - j0])
        F *= B
        out.append((F.sum(axis=1), F.sum(axis=0)))
    return out


def _pair_sums(plan, u, p, workers=1):
    """sum_j |u_i - u_j|^{p-2}(u_i - u_j) W_ij for every node i."""
    tiles = plan.tiles
    if workers > 1 and len(tiles) > 1:
        chunks = [tiles[k::workers] for k in range(workers)]
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda c: _tile_partials(u, p, c), chunks))
        # restore the serial tile order so the reduction is deterministic
        partials = [None] * len(tiles)
        for k, part in enumerate(parts):
            partials[k::workers] = part
    else:
        partials = _tile_partials(u, p, tiles)
    acc = np.zeros(plan.N)
    for (i0, i1, j0, j1, _), (rows, cols) in zip(tiles, partials):
        acc[i0:i1] += rows
        acc[j0:j1] -= cols
    return acc


def apply_L(plan: OperatorApplyPlan, u, p, workers=1) -> np.ndarray:
    """Tiled symmetric application; returns Lu on every node.

    Only interior entries are the equation's operator; exterior entries are
    the same formula evaluated at data nodes.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    u = _check_field(plan, u)
    return _pair_sums(plan, u, p, workers) / plan.measures


def apply_L_dense(plan_or_weights, u, p, measures=None) -> np.ndarray:
    """Unblocked evaluation over the full N x N weight matrix."""
    if isinstance(plan_or_weights, OperatorApplyPlan):
        W = plan_or_weights.dense()
        measures = plan_or_weights.measures
    else:
        W = plan_or_weights
    u = np.asarray(u, dtype=float)
    F = flux(u[:, None] - u[None, :], p)
    F *= W
    return F.sum(axis=1) / measures


def apply_L_loop(mesh, kernel: KernelSpec, u, p, t=0.0) -> np.ndarray:
    """Plain double loop over node pairs using pointwise kernel evaluation."""
    pts, m = mesh.points, mesh.measures
    out = np.zeros(mesh.N)
    for i in range(mesh.N):
        acc = 0.0
        for j in range(mesh.N):
            if i == j:
                continue
            d = u[i] - u[j]
            acc += abs(d) ** (p - 2) * d * eval_kernel(kernel, pts[i], pts[j], t) * m[j]
        out[i] = acc
    return out


def pairing(plan, z, v, p) -> float:
    """sum_{i != j} |dz|^{p-2} dz dv W_ij, the discrete <L z, v>."""
    Lz = apply_L(plan, z, p)
    return float(2.0 * np.dot(plan.measures * Lz, v))


def energy(plan: OperatorApplyPlan, u, p) -> float:
    """E(u) = (1/p) sum_{i != j} |u_i - u_j|^p W_ij."""
    u = _check_field(plan, u)
    total = 0.0
    for i0, i1, j0, j1, B in plan.tiles:
        A = _abs_pow(u[i0:i1, None] - u[None, j0:j1], p)
        total += float((A * B).sum())
    return 2.0 * total / p


def energy_gradient(plan, u, p) -> np.ndarray:
    """Gradient of ``energy`` with respect to every nodal value: 2 m_i (Lu)_i."""
    return 2.0 * _pair_sums(plan, _check_field(plan, u), p)


def seminorm(mesh, u, region=None, s=0.5, p=2.0, block=1024) -> np.ndarray | float:
    """Discrete [u]_{W^{s,p}(D)} = sum_{i != j in D} |u_i-u_j|^p |x_i-x_j|^{-(n+sp)} m_i m_j.

    This is the double integral itself, without a 1/p root. ``u`` may carry
    a leading batch axis; a batch returns one value per row.
    """
    u = np.asarray(u, dtype=float)
    if region is None:
        idx = np.arange(mesh.N)
    else:
        region = np.asarray(region)
        idx = np.flatnonzero(region) if region.dtype == bool else region.astype(int)
    if idx.size == 0:
        raise ValueError("seminorm over an empty region")
    pts = mesh.points[idx]
    m = mesh.measures[idx]
    ur = u[..., idx]
    canon = KernelSpec(s=s, p=p)
    total = np.zeros(u.shape[:-1])
    for a0 in range(0, len(idx), block):
        a1 = min(a0 + block, len(idx))
        for b0 in range(a0, len(idx), block):
            b1 = min(b0 + block, len(idx))
            W = kernel_block(canon, pts[a0:a1], pts[b0:b1]) * m[a0:a1, None] * m[None, b0:b1]
            if a0 == b0:
                W = np.triu(W, k=1)
            D = ur[..., a0:a1, None] - ur[..., None, b0:b1]
            total = total + 2.0 * (_abs_pow(D, p) * W).sum(axis=(-1, -2))
    return float(total) if total.ndim == 0 else total


def truncate(u, m) -> np.ndarray:
    """min{u, m}."""
    return np.minimum(np.asarray(u, float), m)


def positive_part(u) -> np.ndarray:
    return np.maximum(np.asarray(u, float), 0.0)


def negative_part(u) -> np.ndarray:
    """u_- = (-u)_+, so that |u| = u_+ + u_-."""
    return np.maximum(-np.asarray(u, float), 0.0)


def sobolev_ratio(mesh, u, q, s, p) -> float:
    """||u||_{L^q}^p / [u]_{W^{s,p}} for ``u`` vanishing on exterior nodes.

    The seminorm runs over every mesh node. A zero field gives 0.
    """
    n = mesh.n
    sp = s * p
    if sp < n:
        q_max = n * p / (n - sp)
        if not p <= q <= q_max * (1 + 1e-12):
            raise ValueError(f"q={q} outside [p, np/(n-sp)] = [{p}, {q_max}]")
    elif not (math.isfinite(q) and q >= p):
        raise ValueError("for sp >= n the exponent q must be finite and >= p")
    u = np.asarray(u, dtype=float)
    if np.any(u[mesh.exterior] != 0):
        raise ValueError("field must vanish on exterior nodes")
    lq = float((mesh.measures * np.abs(u) ** q).sum()) ** (p / q)
    semi = seminorm(mesh, u, None, s, p)
    if semi == 0.0:
        return 0.0
    return lq / semi


# -- benchmarking ------------------------------------------------------------

def _best_time(fn, repetitions, budget=0.25, max_runs=200):
    """Best wall time over at least ``repetitions`` calls, repeating until ``budget`` seconds pass.

    Short calls get many more samples, which keeps the minimum stable on a
    busy machine.
    """
    best = math.inf
    spent = 0.0
    runs = 0
    gc_was_enabled = gc.isenabled()
    gc.disable()  # as timeit does
    try:
        while runs < repetitions or (spent < budget and runs < max_runs):
            t0 = time.perf_counter()
            fn()
            dt = time.perf_counter() - t0
            best = min(best, dt)
            spent += dt
            runs += 1
    finally:
        if gc_was_enabled:
            gc.enable()
    return best


def _bench_case(plan, p, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(plan.N)
    W = plan.dense()
    tiled = apply_L(plan, u, p)
    naive = apply_L_dense(W, u, p, plan.measures)
    scale = max(np.abs(naive).max(), np.finfo(float).tiny)
    rel = float(np.abs(tiled - naive).max() / scale)
    return u, W, rel


def _time_case(plan, W, u, p, repetitions):
    t_tiled = _best_time(lambda: apply_L(plan, u, p), repetitions)
    t_naive = _best_time(lambda: apply_L_dense(W, u, p, plan.measures), repetitions)
    return t_tiled, t_naive


def _bench_row(plan, p, repetitions, rel, t_tiled, t_naive):
    return {
        "N": plan.N,
        "p": p,
        "tile": plan.tile,
        "repetitions": repetitions,
        "rel_diff": rel,
        "agree": rel <= 1e-12,
        "time_tiled": t_tiled,
        "time_naive": t_naive,
        "speedup": t_naive / t_tiled,
    }


def benchmark_apply(plan: OperatorApplyPlan, repetitions=3, p=3.0, seed=0) -> dict:
    """Time tiled vs dense application on a random field and cross-check them."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    u, W, rel = _bench_case(plan, p, seed)
    return _bench_row(plan, p, repetitions, rel, *_time_case(plan, W, u, p, repetitions))


def scaling_sweep(sizes, kernel: KernelSpec, repetitions=3, p=3.0, tile=DEFAULT_TILE, rounds=3) -> dict:
    """Benchmark 1-D point clouds of the given sizes and fit log t = a + b log N.

    Sizes are timed round-robin ``rounds`` times and the best time per size
    is kept, so a burst of machine load does not land on a single size.
    """
    from .geometry import Mesh

    sizes = list(sizes)
    if not sizes:
        raise ValueError("empty size sweep")
    if repetitions < 1 or rounds < 1:
        raise ValueError("repetitions and rounds must be >= 1")
    cases = []
    for N in sizes:
        h = 2.0 / N
        pts = -1.0 + (np.arange(N) + 0.5) * h
        plan = build_plan(Mesh.from_points(pts, np.full(N, h)), kernel, tile=tile)
        cases.append((plan, *_bench_case(plan, p, 0)))
    best = [(math.inf, math.inf)] * len(cases)
    for _ in range(rounds):
        for k, (plan, u, W, _) in enumerate(cases):
            tt, tn = _time_case(plan, W, u, p, repetitions)
            best[k] = (min(best[k][0], tt), min(best[k][1], tn))
    rows = [_bench_row(plan, p, repetitions, rel, *bt) for (plan, _, _, rel), bt in zip(cases, best)]
    slope = math.nan
    if len(sizes) >= 2:
        slope = float(np.polyfit(np.log(sizes), np.log([r["time_tiled"] for r in rows]), 1)[0])
    return {"rows": rows, "slope": slope, "rounds": rounds}


# -- persistence -------------------------------------------------------------

def write_field(path, values, t) -> None:
    """CSV snapshot: ``# t = <time>`` header, then ``id,value`` rows."""
    values = np.asarray(values, dtype=float)
    lines = [f"# t = {float(t)!r}", "id,value"]
    lines += [f"{i},{float(v)!r}" for i, v in enumerate(values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path):
    t = None
    vals = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            if key.strip() == "t":
                t = float(val)
        elif line and not line.startswith("id"):
            vals.append(float(line.split(",")[1]))
    return t, np.array(vals)
