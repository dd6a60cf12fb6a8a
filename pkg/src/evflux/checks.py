"""The ``check`` suite: fast invariant and property checks run from the CLI."""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as dg, io, kernels
from .constitutive import TRUNCATION, MollifierKernel, PressureParams, affine_law, constant_law
from .grid import Grid, integrate
from .solver import Solver, SolverParams, initial_data
from .spectral import Spectral, commutator_ratio_ensemble, random_field


@dataclass
class CheckResult:
    name: str
    ok: bool
    value: float
    limit: float
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.ok else "FAIL"
        return f"{tag} {self.name} value={io.fmt(self.value)} limit={io.fmt(self.limit)} ({self.seconds:.2f}s)"


def _spectral_identities(rng) -> float:
    g = Grid.square(32)
    sp = Spectral(g)
    err = 0.0
    for _ in range(20):
        f = random_field(g, rng, mean=rng.normal())
        u = np.stack([random_field(g, rng) for _ in range(2)])
        rr = sum(sp.double_riesz(f, i, i) for i in range(2))
        err = max(err, np.abs(rr + (f - f.mean())).max())
        err = max(err, np.abs(sp.divergence(sp.grad_inv_laplacian(f)) - (f - f.mean())).max())
        err = max(err, np.abs(sp.double_riesz_contract(sp.sym_gradient(u)) - sp.divergence(u)).max())
    return float(err)


def _commutator() -> float:
    g = Grid.square(32)
    sp = Spectral(g)
    x, y = g.mesh()
    f = np.cos(y)
    err = np.abs(sp.commutator_riesz(np.full(g.shape, 2.5), f, 0, 1)).max()
    err = max(err, np.abs(sp.commutator_riesz(np.cos(x), f, 0, 0) - 0.5 * np.cos(x) * np.cos(y)).max())
    return float(err)


def _commutator_ratios(rng) -> float:
    """Worst max/median spread of the CRW and Coifman-Meyer ratios over 40 random pairs."""
    crw, cm = commutator_ratio_ensemble(Grid.square(32), rng, samples=40)
    return float(max(crw.max() / np.median(crw), cm.max() / np.median(cm)))


def _short_run(n: int = 32, t_end: float = 0.2):
    g = Grid.square(n)
    p = SolverParams(law=affine_law(0.05, 0.05), kernel=MollifierKernel(0.6), t_end=t_end, cfl=0.1)
    sol = Solver(g, p)
    traj = sol.run(initial_data("taylor-green", g, amp=0.2), outputs=list(np.linspace(0, t_end, 21)[1:]))
    return g, sol, traj


def _conservation() -> tuple[float, float, float]:
    g, sol, traj = _short_run()
    ser = dg.DiagnosticsSeries.of(traj)
    return (dg.mass_ledger(ser)["rel_drift"], dg.energy_ledger(ser)["max_excess"],
            dg.renorm_residual(traj, dg.IDENTITY, sol))


def _truncation() -> float:
    z = np.linspace(0, 10, 2001)
    M = 1.7
    v = TRUNCATION(z, M)
    err = np.abs(v[z <= M] - z[z <= M]).max()
    err = max(err, np.abs(v[z >= 3 * M] - 2 * M).max())
    second = v[:-2] - 2 * v[1:-1] + v[2:]
    return float(max(err, second.max(), 0.0))


def _convexity() -> float:
    g = Grid.square(32)
    f = np.ones(g.shape)
    f[:, 1::2] = 3.0
    d = dg.convexity_defect(f, dg._zlogz, 2, g) / g.volume
    return abs(d - (1.5 * math.log(3) - 2 * math.log(2)))


def _reproducible() -> float:
    outs = []
    for _ in range(2):
        _, _, traj = _short_run(t_end=0.05)
        outs.append(io.csv_text(traj.series).encode() + io.encode_snapshot(traj.snapshots[-1], Grid.square(32)))
    return 0.0 if outs[0] == outs[1] else 1.0


def _snapshot_roundtrip(rng) -> float:
    g = Grid((16, 8), (1.0, 2.5))
    s = initial_data("uniform", g)
    s.rho = rng.random(g.shape) + 0.5
    s.m = rng.standard_normal((2,) + g.shape)
    s.t = 0.123456789
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "s.evfx"
        io.write_snapshot(s, g, path)
        back, g2 = io.read_snapshot(path)
    same = back.rho.tobytes() == s.rho.tobytes() and back.m.tobytes() == s.m.tobytes() and back.t == s.t and g2 == g
    return 0.0 if same else 1.0


def _backends(rng) -> float:
    if not kernels.compiled_available():
        return 0.0
    rho = rng.random(4096) * 2
    prev = kernels.BACKEND
    vals = []
    try:
        for b in ("python", "cython"):
            kernels.use_backend(b)
            vals.append(kernels.pressure_law(rho, 1.0, 2.0, 0.1, 5.0)[0])
    finally:
        kernels.use_backend(prev)
    return float(np.abs(vals[0] - vals[1]).max() / np.abs(vals[0]).max())


def _energy_units() -> float:
    g = Grid.square(16)
    p = SolverParams(pressure=PressureParams(1.0, 2.0), law=constant_law(1.0))
    s = initial_data("uniform", g, velocity=(1.0, 0.0))
    e = dg.energy(s, Solver(g, p))
    return abs(e["E_kin"] - 2 * math.pi**2) + abs(e["E_int"] - 4 * math.pi**2)


def run_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []

    def timed(name, fn, limit):
        t0 = time.perf_counter()
        val = fn()
        out.append(CheckResult(name, bool(val <= limit), float(val), limit, time.perf_counter() - t0))

    timed("spectral_identities", lambda: _spectral_identities(rng), 1e-12)
    timed("commutator_identities", _commutator, 1e-12)
    timed("commutator_ratio_spread", lambda: _commutator_ratios(rng), 10.0)
    timed("energy_closed_forms", _energy_units, 1e-10)
    mass, excess, weak_id = _conservation()
    out.append(CheckResult("mass_conservation", mass <= 1e-10, mass, 1e-10))
    out.append(CheckResult("energy_inequality", excess <= 1e-2, excess, 1e-2))
    out.append(CheckResult("renorm_id_weak_residual", weak_id <= 1e-8, weak_id, 1e-8))
    timed("truncation_shape", _truncation, 1e-12)
    timed("convexity_two_point", _convexity, 1e-10)
    timed("snapshot_roundtrip", lambda: _snapshot_roundtrip(rng), 0.0)
    timed("backend_agreement", lambda: _backends(rng), 1e-13)
    timed("reproducible_run", _reproducible, 0.0)
    return out
