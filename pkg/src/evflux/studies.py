"""Single runs and the two continuation studies, with trend verdicts and key=value reports.

Run verdicts are computed from the diagnostics rows only, so they can be
recomputed from the persisted CSV files (see :func:`run_verdicts`).
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, diagnostics as dg, io, kernels
from .config import StudyConfig
from .constitutive import truncate
from .grid import lp_norm
from .solver import Solver, SolverAbort, State, Trajectory

log = logging.getLogger(__name__)

PASS, FAIL, INDETERMINATE = "pass", "fail", "indeterminate"

MASS_TOL = 1e-10
ENERGY_TOL = 1e-2
RENORM_ID_TOL = 1e-8
SLACK = 0.05


@dataclass
class Verdict:
    name: str
    status: str
    values: Sequence[float] = ()
    note: str = ""

    def items(self) -> list[tuple[str, object]]:
        out = [(f"verdict.{self.name}", self.status)]
        out.append((f"verdict.{self.name}.values", " ".join(io.fmt(float(v)) for v in self.values)))
        if self.note:
            out.append((f"verdict.{self.name}.note", self.note))
        return out


@dataclass
class StudyReport:
    kind: str
    provenance: list[tuple[str, object]] = field(default_factory=list)
    points: list[tuple[str, object]] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    aborted: bool = False

    @property
    def passed(self) -> bool:
        return not self.aborted and all(v.status != FAIL for v in self.verdicts)

    @property
    def exit_code(self) -> int:
        if self.aborted:
            return 3
        return 0 if self.passed else 1

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def items(self) -> list[tuple[str, object]]:
        out: list[tuple[str, object]] = [("report.kind", self.kind)]
        out += self.provenance
        out += self.points
        for v in self.verdicts:
            out += v.items()
        out.append(("report.aborted", self.aborted))
        out.append(("report.overall", PASS if self.passed else FAIL))
        return out

    def text(self) -> str:
        return io.report_text(self.items())


# --------------------------------------------------------------------------
# trend rules


def nonincreasing_tail(values: Sequence[float], slack: float = SLACK) -> bool:
    """Non-increasing over the last half of the sequence, each step allowed to grow by ``slack``."""
    v = list(values)
    tail = v[len(v) // 2:] if len(v) > 2 else v
    return all(b <= a * (1 + slack) + 1e-300 for a, b in zip(tail, tail[1:]))


def strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _trend(name: str, values: Sequence[float], rule: Callable[[Sequence[float]], bool], note: str = "") -> Verdict:
    vals = [float(x) for x in values]
    if len(vals) < 2:
        return Verdict(name, INDETERMINATE, vals, "fewer than two sweep points")
    if not all(math.isfinite(x) for x in vals):
        return Verdict(name, FAIL, vals, "non-finite entries")
    return Verdict(name, PASS if rule(vals) else FAIL, vals, note)


# --------------------------------------------------------------------------
# single run


def provenance(cfg: StudyConfig) -> list[tuple[str, object]]:
    g = cfg.grid
    return [
        ("provenance.config_hash", cfg.config_hash()),
        ("provenance.code_version", __version__),
        ("provenance.kernel_backend", kernels.BACKEND),
        ("provenance.grid", "x".join(str(d) for d in g.dims)),
        ("provenance.lengths", " ".join(io.fmt(x) for x in g.lengths)),
    ]


def run_verdicts(series: dg.DiagnosticsSeries, prefix: str = "") -> list[Verdict]:
    """Mass, energy, mass-renormalization and vacuum verdicts from diagnostics rows alone."""
    out = []
    mass = dg.mass_ledger(series)
    out.append(Verdict(prefix + "mass_conservation", PASS if mass["rel_drift"] <= MASS_TOL else FAIL,
                       [mass["rel_drift"], MASS_TOL], "relative drift, tolerance"))
    en = dg.energy_ledger(series, ENERGY_TOL)
    out.append(Verdict(prefix + "energy_inequality", PASS if en["pass"] else FAIL,
                       [en["max_excess"], ENERGY_TOL, en["margin"]], "max relative excess, tolerance, margin"))
    rid = float(np.max(series.column("renorm_resid_id")))
    out.append(Verdict(prefix + "renorm_id", PASS if rid <= RENORM_ID_TOL else FAIL, [rid, RENORM_ID_TOL],
                       "max instantaneous relative residual, tolerance"))
    clips = float(series.column("clip_count")[-1])
    out.append(Verdict(prefix + "vacuum_clips", PASS if clips == 0 else FAIL, [clips], "clipped cells"))
    return out


@dataclass
class PointResult:
    label: str
    param: float
    solver: Solver
    traj: Trajectory | None
    aborted: str = ""


def _label(kind: str, value: float) -> str:
    return f"{kind}_{value:.6g}"


def _run_point(cfg: StudyConfig, label: str, param: float, solver: Solver, init: State, out: Path | None,
               all_snapshots: bool) -> PointResult:
    try:
        traj = solver.run(init, cfg.outputs())
    except SolverAbort as exc:
        log.error("run %s aborted: %s", label, exc)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            if exc.last_good is not None:
                io.write_snapshot(exc.last_good, cfg.grid, out / "last_good.evfx")
            if exc.trajectory is not None:
                io.emit_csv(exc.trajectory.series, out / "diagnostics.csv")
        return PointResult(label, param, solver, exc.trajectory, aborted=str(exc))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        io.emit_csv(traj.series, out / "diagnostics.csv")
        snaps = traj.snapshots if all_snapshots else traj.snapshots[-1:]
        start = 0 if all_snapshots else len(traj.snapshots) - 1
        for k, s in enumerate(snaps, start):
            io.write_snapshot(s, cfg.grid, out / f"snap_{k:04d}.evfx")
    return PointResult(label, param, solver, traj)


def _weak_items(pt: PointResult, cfg: StudyConfig) -> list[tuple[str, object]]:
    traj, sol = pt.traj, pt.solver
    items: list[tuple[str, object]] = []
    for name in cfg.renorm:
        B = dg.RENORMALIZATIONS[name]
        items.append((f"point.{pt.label}.weak_renorm_{name}", dg.renorm_residual(traj, B, sol)))
    items.append((f"point.{pt.label}.weak_bf_id", dg.bf_transport_residual(traj, dg.IDENTITY, sol)))
    if len(traj.snapshots) >= 3:
        mid = len(traj.snapshots) // 2
        e = dg.evf_dynamic(traj.snapshots[mid - 1:mid + 2], sol)
        items.append((f"point.{pt.label}.evf_two_route_gap", e.gap))
        items.append((f"point.{pt.label}.evf_eps_correction", e.eps_correction))
    return items


def _series_items(pt: PointResult) -> list[tuple[str, object]]:
    ser = dg.DiagnosticsSeries.of(pt.traj)
    en = dg.energy_ledger(ser, ENERGY_TOL)
    l2 = dg.l2_ledger(ser, pt.solver.params.eps)
    p = f"point.{pt.label}"
    return [
        (f"{p}.steps", pt.traj.steps),
        (f"{p}.t_end", ser.column("t")[-1]),
        (f"{p}.E0", en["E0"]),
        (f"{p}.E_end", en["E_end"]),
        (f"{p}.dissipated", en["dissipated"]),
        (f"{p}.energy_max_excess", en["max_excess"]),
        (f"{p}.energy_closure", en["closure"]),
        (f"{p}.mass_rel_drift", dg.mass_ledger(ser)["rel_drift"]),
        (f"{p}.l2_ledger_closure", l2["closure"]),
        (f"{p}.min_rho", float(ser.column("min_rho").min())),
        (f"{p}.clip_count", int(ser.column("clip_count")[-1])),
        (f"{p}.evf_residual_max", float(ser.column("evf_residual").max())),
        (f"{p}.renorm_resid_zlogz_max", float(ser.column("renorm_resid_zlogz").max())),
    ]


def run_single(cfg: StudyConfig, out: str | Path | None = None, seed: int | None = None) -> StudyReport:
    out = Path(out) if out is not None else None
    rep = StudyReport("single", provenance(cfg))
    sol = Solver(cfg.grid, cfg.solver_params())
    pt = _run_point(cfg, "run", cfg.eps, sol, cfg.initial_state(seed), out, all_snapshots=True)
    if pt.aborted:
        rep.aborted = True
        rep.verdicts.append(Verdict("run_completed", FAIL, [pt.traj.snapshots[-1].t if pt.traj else 0.0], pt.aborted))
        _finish(rep, out)
        return rep
    rep.points += _series_items(pt) + _weak_items(pt, cfg)
    rep.verdicts += run_verdicts(dg.DiagnosticsSeries.of(pt.traj))
    _finish(rep, out)
    return rep


def _finish(rep: StudyReport, out: Path | None) -> None:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        io.write_report(rep.items(), out / "report.txt")


def _run_points(cfg: StudyConfig, kind: str, params: Sequence[float], make: Callable[[float], tuple[Solver, State]],
                out: Path | None, threads: int) -> list[PointResult]:
    def one(v):
        sol, init = make(v)
        label = _label(kind, v)
        return _run_point(cfg, label, v, sol, init, out / label if out else None, all_snapshots=False)

    if threads > 1 and len(params) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, params))
    return [one(v) for v in params]


# --------------------------------------------------------------------------
# eps sweep


def run_eps_sweep(cfg: StudyConfig, out: str | Path | None = None, threads: int = 1, seed: int | None = None) -> StudyReport:
    """eps -> 0 at fixed delta: artificial-viscosity terms, eps-dissipation bound, probe, monitors."""
    out = Path(out) if out is not None else None
    eps_list = sorted(set(cfg.eps_list), reverse=True)
    rep = StudyReport("eps-sweep", provenance(cfg))
    init = cfg.initial_state(seed)

    def make(e):
        return Solver(cfg.grid, cfg.solver_params(eps=e)), init

    pts = _run_points(cfg, "eps", eps_list, make, out, threads)
    bad = [p for p in pts if p.aborted]
    if bad:
        rep.aborted = True
        rep.verdicts += [Verdict(f"{p.label}.run_completed", FAIL, [], p.aborted) for p in bad]
        _finish(rep, out)
        return rep
    omega = cfg.omega_value
    cross, lap, grad2, mon_g, mon_d = [], [], [], [], []
    for p in pts:
        rep.points.append((f"point.{p.label}.eps", p.param))
        rep.points += _series_items(p)
        et = dg.eps_terms(p.traj, p.solver)
        mon = dg.integrability_monitor(p.traj, p.solver, omega)
        cross.append(et["cross_L1"])
        lap.append(et["lap_L2Hm1"])
        grad2.append(et["eps_grad_sq"])
        mon_g.append(mon["gamma_p1"])
        mon_d.append(mon["delta_beta_omega"])
        pre = f"point.{p.label}"
        rep.points += [
            (f"{pre}.eps_cross_L1", et["cross_L1"]),
            (f"{pre}.eps_lap_L2Hm1", et["lap_L2Hm1"]),
            (f"{pre}.eps_grad_sq", et["eps_grad_sq"]),
            (f"{pre}.int_rho_gamma_p1", mon["gamma_p1"]),
            (f"{pre}.int_rho_beta_p1", mon["beta_p1"]),
            (f"{pre}.int_rho_gamma_omega", mon["gamma_omega"]),
            (f"{pre}.delta_int_rho_beta_omega", mon["delta_beta_omega"]),
        ]
        rep.points += _weak_items(p, cfg)
        rep.verdicts += run_verdicts(dg.DiagnosticsSeries.of(p.traj), prefix=f"{p.label}.")
    rep.verdicts.append(_trend("eps_cross_L1_decreasing", cross, strictly_decreasing))
    rep.verdicts.append(_trend("eps_lap_Hm1_decreasing", lap, strictly_decreasing))
    rep.verdicts.append(_trend("eps_grad_sq_bounded", grad2, lambda v: max(v) <= v[0] * (1 + SLACK),
                               "every value within 5% of the largest-eps value"))
    rep.verdicts.append(_trend("integrability_stable", mon_g, lambda v: max(v) <= min(v) * (1 + SLACK),
                               "time-integrated rho^(gamma+1) spread within 5%"))
    ctx = pts[-1].solver
    probe = dg.evf_weak_continuity_probe([p.traj for p in pts], dg.IDENTITY, ctx, block=cfg.block_size)
    for p, d, dj, i_n in zip(pts, probe.deviations, probe.product_deviations, probe.I):
        rep.points.append((f"point.{p.label}.probe_deviation", d))
        rep.points.append((f"point.{p.label}.probe_product_deviation", dj))
        # distance to the smallest-eps run; the coarse proxy keeps a resolution bias this one does not
        rep.points.append((f"point.{p.label}.probe_distance_to_last", float(np.max(np.abs(i_n - probe.I[-1])))))
    tail = probe.deviations[-2:]
    rep.verdicts.append(_trend("probe_nonincreasing", tail, nonincreasing_tail,
                               "last two deviations, 5% slack"))
    _finish(rep, out)
    return rep


# --------------------------------------------------------------------------
# delta sweep


def oscillation_bound_holds(rho: np.ndarray, ref: np.ndarray, M: float, gamma: float, grid) -> tuple[float, float]:
    """``(||T_M(rho) - T_M(ref)||^(gamma+1), int (rho^gamma - ref^gamma)(T_M(rho) - T_M(ref)))``."""
    d = lp_norm(truncate(rho, M) - truncate(ref, M), grid, gamma + 1) ** (gamma + 1)
    rhs = float(np.sum((np.maximum(rho, 0) ** gamma - np.maximum(ref, 0) ** gamma) * (truncate(rho, M) - truncate(ref, M))) * grid.cell_volume)
    return d, rhs


def run_delta_sweep(cfg: StudyConfig, out: str | Path | None = None, threads: int = 1, seed: int | None = None) -> StudyReport:
    """delta -> 0: regularized data bounds, delta-weighted integrability, truncation and defect checks."""
    out = Path(out) if out is not None else None
    deltas = sorted(set(cfg.delta_list), reverse=True)
    rep = StudyReport("delta-sweep", provenance(cfg))
    g = cfg.grid
    beta = cfg.pressure.beta
    inits = {d: cfg.delta_initial_state(d, seed) for d in deltas}

    bounds_ok = []
    for d in deltas:
        r = inits[d].rho
        lo, hi = d, d ** (-1.0 / (2 * beta))
        ok = bool(r.min() >= lo and r.max() <= hi)
        bounds_ok.append(ok)
        rep.points += [(f"point.{_label('delta', d)}.rho0_min", float(r.min())),
                       (f"point.{_label('delta', d)}.rho0_max", float(r.max())),
                       (f"point.{_label('delta', d)}.rho0_upper_bound", hi)]
    rep.verdicts.append(Verdict("initial_data_bounds", PASS if all(bounds_ok) else FAIL,
                                [float(x) for x in bounds_ok], "per-delta pointwise check (1 = holds)"))

    def make(d):
        return Solver(g, cfg.solver_params(delta=d)), inits[d]

    pts = _run_points(cfg, "delta", deltas, make, out, threads)
    bad = [p for p in pts if p.aborted]
    if bad:
        rep.aborted = True
        rep.verdicts += [Verdict(f"{p.label}.run_completed", FAIL, [], p.aborted) for p in bad]
        _finish(rep, out)
        return rep
    omega = cfg.omega_value
    gamma = cfg.pressure.gamma
    weighted, conv = [], []
    finals = [p.traj.snapshots[-1].rho for p in pts]
    ref = finals[-1]
    osc_ok = True
    osc_vals = []
    for p, rho in zip(pts, finals):
        mon = dg.integrability_monitor(p.traj, p.solver, omega)
        weighted.append(mon["delta_beta_omega"])
        cd = dg.convexity_defect(rho, dg._zlogz, cfg.block_size, g)
        conv.append(cd)
        pre = f"point.{p.label}"
        rep.points.append((f"{pre}.delta", p.param))
        rep.points += _series_items(p)
        rep.points += [
            (f"{pre}.delta_int_rho_beta_omega", mon["delta_beta_omega"]),
            (f"{pre}.int_rho_gamma_p1", mon["gamma_p1"]),
            (f"{pre}.int_rho_beta_p1", mon["beta_p1"]),
            (f"{pre}.convexity_defect_zlogz", cd),
        ]
        for M in cfg.M:
            lhs, rhs = oscillation_bound_holds(rho, ref, M, gamma, g)
            osc = dg.oscillation_defect([rho], ref, M, gamma, g)
            osc_vals.append(osc)
            osc_ok &= bool(math.isfinite(osc) and lhs <= rhs + 1e-12 * max(1.0, abs(rhs)))
            rep.points.append((f"{pre}.oscillation_defect_M{M:g}", osc))
        rep.verdicts += run_verdicts(dg.DiagnosticsSeries.of(p.traj), prefix=f"{p.label}.")
    rep.verdicts.append(_trend("delta_weighted_integrability_to_zero", weighted, strictly_decreasing))
    rep.verdicts.append(Verdict("oscillation_defect_bounded", PASS if osc_ok else FAIL, osc_vals,
                                "defect^(gamma+1) <= int (rho^gamma - ref^gamma)(T_M rho - T_M ref) for every delta, M"))
    rep.verdicts.append(Verdict("convexity_defect_nonnegative", PASS if min(conv) >= -1e-12 else FAIL, conv))
    tb_ok = True
    tb_vals = []
    for M in cfg.M:
        for pexp in (1.0, gamma / 2 + 0.5):
            lhs, rhs = dg.truncation_bound(ref, M, pexp, gamma, g)
            tb_vals += [lhs, rhs]
            tb_ok &= lhs <= rhs
    rep.verdicts.append(Verdict("truncation_bound", PASS if tb_ok else FAIL, tb_vals,
                                "pairs (lhs, rhs) for each M and p in (1, gamma/2 + 1/2)"))
    _finish(rep, out)
    return rep


def run_study(cfg: StudyConfig, out=None, threads: int = 1, seed: int | None = None) -> StudyReport:
    if cfg.mode == "eps-sweep":
        return run_eps_sweep(cfg, out, threads, seed)
    if cfg.mode == "delta-sweep":
        return run_delta_sweep(cfg, out, threads, seed)
    return run_single(cfg, out, seed)
