"""Kernels K(x, y, t) comparable to |x - y|^{-(n+sp)} within a factor Lambda."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["KernelSpec", "eval_kernel", "kernel_block", "validate_ellipticity", "EllipticityReport"]


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family parameters.

    ``form`` is ``"canonical"`` (|x-y|^{-(n+sp)}) or ``"modulated"``
    (a(x, y, t) |x-y|^{-(n+sp)}). The default modulation is a seeded smooth
    symmetric function with amplitude (Lam-1)/(Lam+1) around 1; a custom
    ``modulation(x, y, t)`` callable (broadcasting over point arrays of shape
    (..., n)) overrides it.
    """

    s: float
    p: float
    Lam: float = 1.0
    form: str = "canonical"
    seed: int = 0
    modulation: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.s < 1:
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not self.p >= 2:
            raise ValueError(f"p must be >= 2, got {self.p}")
        if not self.Lam >= 1:
            raise ValueError(f"Lambda must be >= 1, got {self.Lam}")
        if self.form not in ("canonical", "modulated"):
            raise ValueError(f"unknown kernel form {self.form!r}")

    @property
    def sp(self) -> float:
        return self.s * self.p

    @property
    def time_dependent(self) -> bool:
        return self.form == "modulated"

    def exponent(self, n) -> float:
        return n + self.s * self.p

    def _default_modulation(self, x, y, t):
        rng = np.random.default_rng(self.seed)
        k1, k2 = rng.uniform(1.0, 4.0, size=2)
        ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
        omega = rng.uniform(1.0, 10.0)
        amp = (self.Lam - 1.0) / (self.Lam + 1.0)
        sx = (x + y).sum(axis=-1)
        dist = np.sqrt(((x - y) ** 2).sum(axis=-1))
        a = 1.0 + amp * np.sin(k1 * sx + ph1 + omega * t) * np.cos(k2 * dist + ph2)
        return np.clip(a, 1.0 / self.Lam, self.Lam)

    def factor(self, x, y, t):
        """Modulation a(x, y, t) broadcast over point arrays."""
        if self.form == "canonical":
            return np.ones(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))
        if self.modulation is not None:
            return np.asarray(self.modulation(x, y, t), dtype=float)
        return self._default_modulation(x, y, t)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x[..., None] if x.ndim == 0 else x


def eval_kernel(spec: KernelSpec, x, y, t=0.0) -> float:
    x = np.atleast_1d(_as_points(x))
    y = np.atleast_1d(_as_points(y))
    r = float(np.sqrt(((x - y) ** 2).sum()))
    if r == 0.0:
        raise ValueError("kernel is singular on the diagonal x = y")
    return float(spec.factor(x, y, t) * r ** (-spec.exponent(x.shape[-1])))


def kernel_block(spec: KernelSpec, X, Y, t=0.0) -> np.ndarray:
    """Pairwise kernel values K(X[i], Y[j], t); coincident points give 0."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    diff = X[:, None, :] - Y[None, :, :]
    r2 = (diff * diff).sum(axis=-1)
    n = X.shape[1]
    with np.errstate(divide="ignore"):
        K = r2 ** (-0.5 * spec.exponent(n))
    if spec.form != "canonical":
        K = K * spec.factor(X[:, None, :], Y[None, :, :], t)
    K[r2 == 0.0] = 0.0
    return K


@dataclass
class EllipticityReport:
    passed: bool
    worst_ratio: float
    worst_low: float
    worst_high: float
    witness: tuple
    samples: int


def validate_ellipticity(spec: KernelSpec, mesh, samples=1000, t_range=(0.0, 1.0), seed=0):
    """Sample node pairs and times and check the Lambda sandwich.

    ``worst_ratio`` is the sampled K |x-y|^{n+sp} farthest from 1 in
    log-scale; ``witness`` is ``(x, y, t, ratio)`` at that sample.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    pts = mesh.points
    N = len(pts)
    i = rng.integers(0, N, size=samples)
    j = rng.integers(0, N - 1, size=samples)
    j = j + (j >= i)  # distinct indices
    t = rng.uniform(*t_range, size=samples)
    x, y = pts[i], pts[j]
    r = np.sqrt(((x - y) ** 2).sum(axis=1))
    keep = r > 0
    x, y, t, r = x[keep], y[keep], t[keep], r[keep]
    e = spec.exponent(mesh.n)
    K = np.array([eval_kernel(spec, x[k], y[k], t[k]) for k in range(len(t))])
    ratio = K * r**e
    lo, hi = 1.0 / spec.Lam, spec.Lam
    tol = 1e-12
    ok = np.all((ratio >= lo * (1 - tol)) & (ratio <= hi * (1 + tol)))
    k = int(np.argmax(np.abs(np.log(ratio))))
    return EllipticityReport(
        passed=bool(ok),
        worst_ratio=float(ratio[k]),
        worst_low=float(ratio.min()),
        worst_high=float(ratio.max()),
        witness=(x[k].tolist(), y[k].tolist(), float(t[k]), float(ratio[k])),
        samples=int(len(t)),
    )
