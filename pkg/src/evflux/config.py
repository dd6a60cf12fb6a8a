"""Study configuration: strict INI parsing with every violation reported at once.

Example::

    [grid]
    dims = 64, 64
    lengths = 6.283185307179586, 6.283185307179586

    [physics]
    A = 1
    gamma = 2
    law = affine
    mu0 = 0.02
    law_a = 0.02

    [solver]
    initial = taylor-green
    t_end = 0.5
    snapshot_every = 0.02

    [study]
    mode = single
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constitutive import (
    AdmissibilityError,
    MollifierKernel,
    PressureParams,
    ViscosityLaw,
    viscosity_law,
)
from .diagnostics import RENORMALIZATIONS, omega_range
from .grid import Grid
from .solver import SolverParams, State, delta_approx, initial_data

TWO_PI = 2 * math.pi
MODES = ("single", "eps-sweep", "delta-sweep")
INITIAL = ("uniform", "perturbed", "taylor-green")

# section -> key -> kind
SCHEMA: dict[str, dict[str, str]] = {
    "grid": {"dims": "ints", "lengths": "floats"},
    "physics": {
        "A": "float", "gamma": "float", "delta": "float", "beta": "float",
        "law": "str", "mu0": "float", "lam0": "float", "law_a": "float", "law_b": "float", "law_k": "float",
        "mollifier_radius": "float",
    },
    "solver": {
        "eps": "float", "eps_list": "floats", "delta_list": "floats", "cfl": "float", "dt": "float",
        "t_end": "float", "snapshot_every": "float", "seed": "int", "rho_floor": "float",
        "integrating_factor": "bool", "initial": "str", "rho0": "float", "amp": "float",
        "velocity_amp": "float", "kmax": "int",
    },
    "study": {"mode": "str", "renorm": "strs", "M": "floats", "block": "int", "omega": "float"},
}

LAW_KEYS = {
    "constant": {"mu0", "lam0"},
    "affine": {"mu0", "lam0", "law_a", "law_b"},
    "power": {"mu0", "lam0", "law_a", "law_k"},
}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class StudyConfig:
    grid: Grid = field(default_factory=lambda: Grid.square(64))
    pressure: PressureParams = PressureParams()
    law_name: str = "constant"
    law_params: tuple = (("mu0", 0.05), ("lam0", 0.0))
    mollifier_radius: float | None = None
    eps: float = 0.0
    eps_list: tuple = ()
    delta_list: tuple = ()
    cfl: float = 0.1
    dt: float | None = None
    t_end: float = 0.5
    snapshot_every: float = 0.02
    seed: int | None = None
    rho_floor: float = 1e-8
    integrating_factor: bool = False
    initial: str = "taylor-green"
    rho0: float = 1.0
    amp: float = 0.2
    velocity_amp: float = 1.0
    kmax: int = 2
    mode: str = "single"
    renorm: tuple = ("id", "zlogz")
    M: tuple = (2.0, 8.0, 32.0)
    block: int | None = None
    omega: float | None = None
    source_text: str = field(default="", compare=False)

    # derived objects ------------------------------------------------------
    @property
    def law(self) -> ViscosityLaw:
        return viscosity_law(self.law_name, **_law_kwargs(self.law_name, dict(self.law_params)))

    @property
    def kernel(self) -> MollifierKernel:
        return MollifierKernel(self.mollifier_radius)

    @property
    def block_size(self) -> int:
        return self.block or max(1, min(self.grid.dims) // 8)

    @property
    def omega_value(self) -> float:
        return self.omega if self.omega is not None else 0.5 * omega_range(self.pressure.gamma, self.grid.ndim)

    def solver_params(self, eps: float | None = None, delta: float | None = None) -> SolverParams:
        pressure = self.pressure
        if delta is not None:
            pressure = PressureParams(pressure.A, pressure.gamma, delta, pressure.beta)
        return SolverParams(
            pressure=pressure, law=self.law, kernel=self.kernel,
            eps=self.eps if eps is None else eps, cfl=self.cfl, dt=self.dt, t_end=self.t_end,
            rho_floor=self.rho_floor, integrating_factor=self.integrating_factor,
        )

    def outputs(self) -> list[float]:
        n = max(1, int(round(self.t_end / self.snapshot_every)))
        return [self.t_end * (k + 1) / n for k in range(n)]

    def initial_state(self, seed: int | None = None) -> State:
        seed = self.seed if seed is None else seed
        if self.initial == "uniform":
            return initial_data("uniform", self.grid, rho0=self.rho0)
        U = self.velocity_amp if self.initial == "taylor-green" else 0.0
        return initial_data("perturbed", self.grid, rho0=self.rho0, amp=self.amp, U=U, seed=seed, kmax=self.kmax)

    def delta_initial_state(self, delta: float, seed: int | None = None) -> State:
        """``rho_0 = rho0 (1 + 0.9 cos x cos y)`` (or the seeded low-mode field) regularized at level delta."""
        base = self.initial_state(seed)
        g = self.grid
        x = [c * (TWO_PI / length) for c, length in zip(g.coords, g.lengths)]
        seed = self.seed if seed is None else seed
        if seed is None:
            rho0 = self.rho0 * (1.0 + 0.9 * np.broadcast_to(np.cos(x[0]) * np.cos(x[1]), g.shape))
        else:
            rho0 = base.rho
        m0 = base.m * (rho0 / base.rho)
        return delta_approx(g, rho0, m0, delta, self.pressure.beta, self.kernel)

    def config_hash(self) -> str:
        return hashlib.sha256(canonical_text(self).encode()).hexdigest()[:16]


def _law_kwargs(name: str, params: dict) -> dict:
    rename = {"law_a": "a", "law_b": "b", "law_k": "k"}
    return {rename.get(k, k): v for k, v in params.items()}


def canonical_text(cfg: StudyConfig) -> str:
    parts = []
    for name in StudyConfig.__dataclass_fields__:
        if name == "source_text":
            continue
        parts.append(f"{name}={getattr(cfg, name)!r}")
    return "\n".join(parts)


# --------------------------------------------------------------------------
# parsing


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if kind == "int":
        return int(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if kind == "str":
        return raw.strip("\"'")
    items = [x.strip() for x in raw.strip("[]").split(",") if x.strip()]
    if kind == "ints":
        return tuple(int(x) for x in items)
    if kind == "floats":
        out = tuple(float(x) for x in items)
        if not all(math.isfinite(x) for x in out):
            raise ValueError("entries must be finite")
        return out
    if kind == "strs":
        return tuple(x.strip("\"'") for x in items)
    raise AssertionError(kind)


def parse_config_text(text: str, overrides: dict | None = None) -> StudyConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (A vs a)
    problems: list[str] = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    vals: dict[str, dict[str, object]] = {s: {} for s in SCHEMA}
    for section in cp.sections():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            kind = SCHEMA[section].get(key)
            if kind is None:
                problems.append(f"unknown key {section}.{key}")
                continue
            try:
                vals[section][key] = _convert(kind, raw)
            except ValueError as exc:
                problems.append(f"{section}.{key}: cannot parse {raw!r} ({exc})")
    for k, v in (overrides or {}).items():
        section, key = k.split(".", 1)
        vals[section][key] = v
    cfg, more = _build(vals, text)
    problems += more
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path, overrides: dict | None = None) -> StudyConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {path}"])
    return parse_config_text(p.read_text(), overrides)


def _build(v: dict, text: str) -> tuple[StudyConfig | None, list[str]]:
    problems: list[str] = []
    g, ph, so, st = v["grid"], v["physics"], v["solver"], v["study"]

    dims = g.get("dims", (64, 64))
    lengths = g.get("lengths", (TWO_PI,) * len(dims))
    grid = None
    try:
        grid = Grid(tuple(dims), tuple(lengths))
    except ValueError as exc:
        problems.append(f"grid: {exc}")
    ndim = len(dims) if dims else 2

    pressure = PressureParams(ph.get("A", 1.0), ph.get("gamma", 2.0), ph.get("delta", 0.0), ph.get("beta", 0.0))
    problems += [f"physics: {p}" for p in pressure.violations(ndim)]

    law_name = ph.get("law", "constant")
    law_params = {}
    if law_name not in LAW_KEYS:
        problems.append(f"physics.law: unknown viscosity law {law_name!r}; choose from {sorted(LAW_KEYS)}")
    else:
        for key in ("mu0", "lam0", "law_a", "law_b", "law_k"):
            if key in ph:
                if key not in LAW_KEYS[law_name]:
                    problems.append(f"physics.{key} does not apply to law {law_name!r}")
                else:
                    law_params[key] = ph[key]
        law_params.setdefault("mu0", 0.05)
        try:
            law = viscosity_law(law_name, **_law_kwargs(law_name, law_params))
            law.check(np.linspace(0.0, 10.0, 101), ndim)
        except AdmissibilityError as exc:
            problems.append(f"physics: {exc} (checked on density range [0, 10])")
    radius = ph.get("mollifier_radius")
    if radius is not None and grid is not None and not 0 < radius < min(grid.lengths) / 4:
        problems.append(f"physics.mollifier_radius must lie in (0, min(lengths)/4), got {radius}")
    if radius is None and grid is not None and 8 * min(grid.spacing) >= min(grid.lengths) / 4:
        problems.append("grid too coarse for the default mollifier radius; set physics.mollifier_radius")

    eps = so.get("eps", 0.0)
    if eps < 0:
        problems.append(f"solver.eps must be >= 0, got {eps}")
    eps_list = so.get("eps_list", ())
    delta_list = so.get("delta_list", ())
    if any(e <= 0 for e in eps_list):
        problems.append("solver.eps_list entries must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        problems.append(f"solver.eps_list must be strictly decreasing, got {list(eps_list)}")
    if any(not 0 < d < 1 for d in delta_list):
        problems.append("solver.delta_list entries must lie in (0, 1)")
    if any(b >= a for a, b in zip(delta_list, delta_list[1:])):
        problems.append(f"solver.delta_list must be strictly decreasing, got {list(delta_list)}")
    for d in delta_list:
        if 0 < d < 1:
            problems += [f"physics with delta={d}: {p}" for p in PressureParams(pressure.A, pressure.gamma, d, pressure.beta).violations(ndim)]
    cfl = so.get("cfl", 0.1)
    if not 0 < cfl <= 1:
        problems.append(f"solver.cfl must lie in (0, 1], got {cfl}")
    dt = so.get("dt")
    if dt is not None and not dt > 0:
        problems.append(f"solver.dt must be positive, got {dt}")
    t_end = so.get("t_end", 0.5)
    if not t_end > 0:
        problems.append(f"solver.t_end must be positive, got {t_end}")
    every = so.get("snapshot_every", min(0.02, t_end))
    if not 0 < every <= t_end:
        problems.append(f"solver.snapshot_every must lie in (0, t_end], got {every}")
    seed = so.get("seed")
    if seed is not None and not 0 <= seed < 2**64:
        problems.append(f"solver.seed must be a u64, got {seed}")
    rho_floor = so.get("rho_floor", 1e-8)
    if not rho_floor > 0:
        problems.append(f"solver.rho_floor must be positive, got {rho_floor}")
    initial = so.get("initial", "taylor-green")
    if initial not in INITIAL:
        problems.append(f"solver.initial must be one of {list(INITIAL)}, got {initial!r}")
    rho0 = so.get("rho0", 1.0)
    amp = so.get("amp", 0.2)
    if not rho0 > 0:
        problems.append(f"solver.rho0 must be positive, got {rho0}")
    elif initial != "uniform" and abs(amp) >= rho0:
        problems.append(f"solver.amp={amp} makes the initial density non-positive (rho0={rho0})")
    if rho_floor >= 0.01 * rho0:
        problems.append(f"solver.rho_floor={rho_floor} is not small against rho0={rho0}")
    kmax = so.get("kmax", 2)
    if kmax < 1:
        problems.append("solver.kmax must be >= 1")

    mode = st.get("mode", "single")
    if mode not in MODES:
        problems.append(f"study.mode must be one of {list(MODES)}, got {mode!r}")
    if mode == "eps-sweep" and not eps_list:
        problems.append("study.mode=eps-sweep needs solver.eps_list")
    if mode == "delta-sweep" and not delta_list:
        problems.append("study.mode=delta-sweep needs solver.delta_list")
    renorm = st.get("renorm", ("id", "zlogz"))
    for r in renorm:
        if r not in RENORMALIZATIONS:
            problems.append(f"study.renorm: unknown renormalization {r!r}; choose from {sorted(RENORMALIZATIONS)}")
    M = st.get("M", (2.0, 8.0, 32.0))
    if any(m <= 0 for m in M):
        problems.append("study.M entries must be positive")
    block = st.get("block")
    if block is not None and grid is not None and (block < 1 or any(d % block for d in grid.dims)):
        problems.append(f"study.block={block} must divide every grid dimension")
    omega = st.get("omega")
    hi = omega_range(pressure.gamma, ndim)
    if omega is not None and not 0 < omega < hi:
        problems.append(f"study.omega must lie in (0, {hi:g}), got {omega}")

    if problems:
        return None, problems
    cfg = StudyConfig(
        grid=grid, pressure=pressure, law_name=law_name, law_params=tuple(sorted(law_params.items())),
        mollifier_radius=radius, eps=eps, eps_list=tuple(eps_list), delta_list=tuple(delta_list),
        cfl=cfl, dt=dt, t_end=t_end, snapshot_every=every, seed=seed, rho_floor=rho_floor,
        integrating_factor=so.get("integrating_factor", False), initial=initial, rho0=rho0, amp=amp,
        velocity_amp=so.get("velocity_amp", 1.0), kmax=kmax, mode=mode, renorm=tuple(renorm),
        M=tuple(M), block=block, omega=omega, source_text=text,
    )
    return cfg, []
