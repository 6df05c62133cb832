"""Sectioned key = value run configuration.

Data profiles (``u0``, ``g``) are numpy expressions in ``x``, ``y`` (point
coordinates), ``r`` (distance to the origin) and ``t``; e.g.
``u0 = maximum(0, 1 - (x/0.5)**2)``.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .geometry import Cylinder, build_mesh
from .kernel import KernelSpec
from .solver import ProblemSpec, StepConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "make_profile"]


class ConfigError(ValueError):
    pass


# kept in sync with ``cli.CHECKS``
CHECK_NAMES = ("ladder", "inequalities", "ellipticity", "tail", "caccioppoli", "boundedness",
               "contraction", "subsolution", "audit", "refinement")


_EXPR_NAMES = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "maximum", "minimum", "where",
    "sign", "tanh", "arctan", "pi", "clip", "ones_like", "zeros_like", "heaviside")}


def make_profile(expr: str):
    """Compile an expression into ``f(points, t=0.0) -> array``."""
    try:
        code = compile(expr, "<profile>", "eval")
    except SyntaxError as err:
        raise ConfigError(f"cannot parse expression {expr!r}: {err.msg}") from None

    def profile(points, t=0.0):
        pts = np.asarray(points, float)
        if pts.ndim == 1:
            pts = pts[:, None]
        env = dict(_EXPR_NAMES)
        env.update(x=pts[:, 0], y=pts[:, 1] if pts.shape[1] > 1 else np.zeros(len(pts)),
                   r=np.sqrt((pts**2).sum(axis=1)), t=t, np=np)
        val = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(val, float), (len(pts),)).copy()

    profile.expr = expr
    return profile


def _floats(text):
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


@dataclass
class MeshConfig:
    n: int = 1
    extents: list = field(default_factory=lambda: [-1.0, 1.0])
    h: float = 1 / 32
    R_ext: float = 4.0


@dataclass
class KernelConfig:
    s: float = 0.5
    p: float = 3.0
    lam: float = 1.0
    form: str = "canonical"
    seed: int = 0


@dataclass
class ProblemConfig:
    u0: str = "0"
    g: str = "0"
    T: float = 0.1
    dt: float = 0.01


@dataclass
class VerifyConfig:
    checks: list = field(default_factory=list)
    center: list = field(default_factory=lambda: [0.0])
    radius: float = 0.4
    duration: float = 0.02
    t_end: float | None = None
    sigma: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    xi: list = field(default_factory=lambda: [1.0, 2.0])
    xi0: str = "2"
    ladder_n: str | None = None
    ladder_s: str | None = None
    ladder_p: str | None = None
    trials: int = 100_000
    refine_levels: int = 1
    d: float = 1.0
    seed: int = 0


@dataclass
class BenchConfig:
    sizes: list = field(default_factory=lambda: [1024, 1448, 2048, 2896, 4096])
    repetitions: int = 3
    p: float = 3.0
    tile: int = 256


_SECTIONS = {
    "mesh": (MeshConfig, {"n": int, "extents": _floats, "h": float, "r_ext": float}),
    "kernel": (KernelConfig, {"s": float, "p": float, "lambda": float, "form": str, "seed": int}),
    "problem": (ProblemConfig, {"u0": str, "g": str, "t": float, "dt": float}),
    "solver": (StepConfig, {"tol": float, "max_iter": int, "shrink": float, "step0": float,
                            "armijo": float}),
    "verify": (VerifyConfig, {
        "checks": lambda v: [c.strip() for c in v.split(",") if c.strip()],
        "center": _floats, "radius": float, "duration": float, "t_end": float,
        "sigma": _floats, "xi": _floats, "xi0": str, "ladder_n": str, "ladder_s": str,
        "ladder_p": str, "trials": int, "refine_levels": int, "d": float, "seed": int}),
    "bench": (BenchConfig, {"sizes": lambda v: [int(x) for x in _floats(v)],
                            "repetitions": int, "p": float, "tile": int}),
}

# config key -> dataclass attribute where they differ
_RENAME = {"r_ext": "R_ext", "lambda": "lam", "t": "T"}


@dataclass
class RunConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    solver: StepConfig = field(default_factory=StepConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    output_dir: str = "out"
    source: str = ""

    # -- builders ------------------------------------------------------------
    def build_mesh(self, refine=0):
        mc = self.mesh
        ext = list(mc.extents)
        box = [(ext[2 * d], ext[2 * d + 1]) for d in range(mc.n)] if len(ext) == 2 * mc.n else None
        if box is None:
            raise ConfigError(f"[mesh] extents: expected {2 * mc.n} numbers, got {len(ext)}")
        return build_mesh(mc.n, box, mc.h / 2**refine, mc.R_ext)

    def build_kernel(self):
        kc = self.kernel
        return KernelSpec(kc.s, kc.p, kc.lam, kc.form, kc.seed)

    def build_problem(self, refine=0) -> ProblemSpec:
        pc = self.problem
        u0 = make_profile(pc.u0)
        g = make_profile(pc.g)
        return ProblemSpec(self.build_mesh(refine), self.build_kernel(),
                           g=lambda pts, t: g(pts, t), u0=lambda pts: u0(pts, 0.0),
                           T=pc.T, dt=pc.dt / 2**refine)

    def cylinder(self) -> Cylinder:
        vc = self.verify
        center = list(vc.center) + [0.0] * (self.mesh.n - len(vc.center))
        t_end = self.problem.T if vc.t_end is None else vc.t_end
        return Cylinder(center[: self.mesh.n], vc.radius, t_end, vc.duration)

    def ladder_inputs(self):
        vc = self.verify

        def frac(v, default):
            return Fraction(str(default if v is None else v))

        return (int(frac(vc.ladder_n, self.mesh.n)), frac(vc.ladder_s, repr(self.kernel.s)),
                frac(vc.ladder_p, repr(self.kernel.p)), frac(vc.xi0, "2"))


def parse_config(text: str, source="<string>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: {err}") from None
    cfg = RunConfig(source=source)
    for section in cp.sections():
        key_section = section.lower()
        if key_section == "output":
            for key, val in cp.items(section):
                if key != "dir":
                    raise ConfigError(f"{source}: unknown key '{key}' in [output]")
                cfg.output_dir = val
            continue
        if key_section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        klass, parsers = _SECTIONS[key_section]
        values = {}
        for key, raw in cp.items(section):
            if key not in parsers:
                raise ConfigError(f"{source}: unknown key '{key}' in [{section}]")
            try:
                values[_RENAME.get(key, key)] = parsers[key](raw)
            except (TypeError, ValueError) as err:
                raise ConfigError(f"{source}: bad value for '{key}' in [{section}]: {raw!r} ({err})") from None
        names = {f.name for f in fields(klass)}
        try:
            setattr(cfg, key_section, klass(**{k: v for k, v in values.items() if k in names}))
        except ValueError as err:
            raise ConfigError(f"{source}: [{section}] {err}") from None
    for expr in (cfg.problem.u0, cfg.problem.g):
        make_profile(expr)
    unknown = [c for c in cfg.verify.checks if c not in CHECK_NAMES]
    if unknown:
        raise ConfigError(f"{source}: unknown check(s) {', '.join(unknown)} in [verify] checks; "
                          f"available: {', '.join(CHECK_NAMES)}")
    if cfg.verify.refine_levels < 1:
        raise ConfigError(f"{source}: [verify] refine_levels must be >= 1")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, str(path))
