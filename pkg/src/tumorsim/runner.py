"""Run orchestration (time loop, outputs, manifest) and the verification modes."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .config import RunConfig, init_fields, rescale, serialize_config
from .diagnostics import DiagnosticsRecord, EntropyAccumulator, make_record, mass_budget, probe_mask
from .elliptic import HelmholtzProblem, apply_operator, solve
from .errors import ConfigError, NumericalError, OutputError, TumorSimError
from .grid import make_grid
from .snapshot import DiagnosticsWriter, write_snapshot
from .stepper import Scheme, SimState, StepReport, Violation, initial_state, macro_step

log = logging.getLogger(__name__)

SNAPSHOT_FIELDS = ("n", "W", "c", "q")


@dataclass
class StepEvent:
    state: SimState
    report: StepReport | None  # None for the initial state
    record: DiagnosticsRecord


@dataclass
class RunResult:
    records: list[DiagnosticsRecord] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)
    substeps_c: list[int] = field(default_factory=list)
    substeps_q: list[int] = field(default_factory=list)
    solver_iterations: list[int] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    snapshots: list[str] = field(default_factory=list)
    state: SimState | None = None
    wall_time: float = 0.0
    status: str = "ok"
    error: str | None = None


def output_times(t_end: float, every: float) -> list[float]:
    k = int(math.floor(t_end / every + 1e-9))
    times = [i * every for i in range(1, k + 1) if i * every < t_end * (1 - 1e-12)]
    return times + [t_end] if t_end > 0 else []


def simulate(cfg: RunConfig, state: SimState | None = None, scheme: Scheme | None = None,
             stops: list[float] | None = None) -> Iterator[StepEvent]:
    """Yield the initial state and then every macro step up to ``cfg.t_end``.

    Steps are shortened to land exactly on each time in ``stops`` (default:
    the snapshot times).
    """
    if state is None or scheme is None:
        state, scheme = init_fields(cfg)
    params = scheme.params
    mask = probe_mask(scheme.grid, cfg.probe_center, cfg.probe_radius)
    acc = EntropyAccumulator()
    rec = make_record(state, float(state.W.interior.min()), float(state.W.interior.max()),
                      0.0, acc, params.c_crit, mask)
    yield StepEvent(state, None, rec)
    if stops is None:
        stops = output_times(cfg.t_end, cfg.snapshot_every)
    for stop in stops:
        while state.t < stop:
            remaining = stop - state.t
            if remaining <= 1e-13 * max(1.0, stop):
                state.t = stop
                break
            old = state
            state, rep = macro_step(old, scheme, dt_max=remaining)
            if rep.sizes.dt == remaining:
                state.t = stop
            resid = mass_budget(old.n, state.n, rep.phi, rep.sizes.dt, scheme.grid.h)
            acc.add(old.n, state.n, old.W, rep.phi, rep.sizes.dt)
            rec = make_record(state, rep.w_min, rep.w_max, resid, acc, params.c_crit, mask)
            yield StepEvent(state, rep, rec)


def run(cfg: RunConfig, out_dir: str | Path | None = None, write: bool = True,
        on_step: Callable[[StepEvent], None] | None = None) -> RunResult:
    """Integrate to ``cfg.t_end``; with ``write`` emit snapshots, diagnostics CSV and manifest."""
    result = RunResult()
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    writer = None
    started = time.perf_counter()
    snap_times = set(output_times(cfg.t_end, cfg.snapshot_every)) | {0.0}
    try:
        if write:
            try:
                (out / "snapshots").mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise OutputError(f"cannot create output directory {out}: {exc}") from exc
            writer = DiagnosticsWriter(out / "diagnostics.csv")
        for ev in simulate(cfg):
            result.state = ev.state
            result.records.append(ev.record)
            if ev.report is not None:
                result.dts.append(ev.report.sizes.dt)
                result.substeps_c.append(ev.report.sizes.n_sub_c)
                result.substeps_q.append(ev.report.sizes.n_sub_q)
                result.solver_iterations.append(ev.report.solve.iterations)
                result.violations.extend(ev.report.violations)
            if writer is not None:
                writer.write(ev.record)
                if ev.state.t in snap_times:
                    _write_fields(out, ev.state, result)
            if on_step is not None:
                on_step(ev)
    except TumorSimError as exc:
        result.status = "error"
        result.error = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, NumericalError) and getattr(exc, "violations", None):
            result.violations.extend(exc.violations)
        raise
    finally:
        result.wall_time = time.perf_counter() - started
        if writer is not None:
            writer.close()
            _write_manifest(out / "manifest.json", cfg, result)
    return result


def _write_fields(out: Path, state: SimState, result: RunResult) -> None:
    for name in SNAPSHOT_FIELDS:
        path = out / "snapshots" / f"{name}_{state.step:06d}.txt"
        write_snapshot(path, getattr(state, name), state.t, state.step)
        result.snapshots.append(str(path.relative_to(out)))


def _write_manifest(path: Path, cfg: RunConfig, result: RunResult) -> None:
    manifest = {
        "status": result.status,
        "error": result.error,
        "config": serialize_config(cfg),
        "steps": len(result.dts),
        "t_final": result.state.t if result.state is not None else None,
        "dt": result.dts,
        "dt_sum": math.fsum(result.dts),
        "substeps_c": result.substeps_c,
        "substeps_q": result.substeps_q,
        "solver_iterations": result.solver_iterations,
        "violations": [asdict(v) for v in result.violations],
        "snapshots": result.snapshots,
        "wall_time_s": result.wall_time,
    }
    try:
        path.write_text(json.dumps(manifest, indent=1))
    except OSError as exc:
        raise OutputError(f"cannot write manifest {path}: {exc}") from exc


# ---------------------------------------------------------------- verification


@dataclass
class VerifyReport:
    mode: str
    passed: bool
    failures: list[str]
    details: dict

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, default=float)


def coarsen(arr: np.ndarray, factor: int = 2) -> np.ndarray:
    """Average ``factor^d`` blocks of fine cells onto the coarse grid."""
    shape = []
    for n in arr.shape:
        shape += [n // factor, factor]
    return arr.reshape(shape).mean(axis=tuple(range(1, 2 * arr.ndim, 2)))


def final_density(cfg: RunConfig) -> tuple[np.ndarray, float]:
    state = None
    for ev in simulate(cfg, stops=[cfg.t_end]):
        state = ev.state
    return state.n.interior.copy(), state.n.grid.h


def convergence_study(cfg: RunConfig, levels: int = 3) -> dict:
    """Self-convergence at h, h/2, h/4: L1 gaps between consecutive levels on the coarser grid."""
    h0 = cfg.grid.h
    sols = []
    for k in range(levels):
        n, h = final_density(rescale(cfg, h0 / 2**k))
        sols.append((n, h))
    gaps = []
    for (nc, hc), (nf, _) in zip(sols, sols[1:]):
        gaps.append(float(np.sum(np.abs(nc - coarsen(nf)))) * hc ** nc.ndim)
    orders = [math.log2(a / b) for a, b in zip(gaps, gaps[1:]) if a > 0 and b > 0]
    return {"h": [h for _, h in sols], "l1_gaps": gaps, "orders": orders}


def manufactured_battery(cfg: RunConfig, samples: int = 10, seed: int = 0) -> dict:
    """Elliptic round trips ``solve(apply_operator(W0)) == W0`` on the config's grid, both bcs."""
    g = cfg.grid
    rng = np.random.default_rng(seed)
    worst = {}
    for bc in ("periodic", "neumann"):
        grid = make_grid(g.dim, g.n_cells, g.h, g.origin, (bc, g.bc_scalar))
        X = grid.centers()
        lengths = [n * g.h for n in g.n_cells]
        errs = []
        for _ in range(samples):
            W0 = np.zeros(grid.shape)
            for _ in range(4):
                k = rng.integers(1, 4, size=g.dim)
                phase = rng.uniform(0, 2 * np.pi, size=g.dim)
                amp = rng.normal()
                term = amp * np.ones(grid.shape)
                for x, kk, ph, L, o in zip(X, k, phase, lengths, g.origin):
                    term = term * np.cos(2 * np.pi * kk * (x - o) / L + ph)
                W0 += term
            W0 += rng.uniform(0, 1)
            Wf = grid.from_interior(W0, "W")
            p = apply_operator(Wf, cfg.model.mu)
            W, _ = solve(HelmholtzProblem(grid, cfg.model.mu, p, cfg.tol, cfg.max_iter or None,
                                          cfg.preconditioner))
            errs.append(float(np.linalg.norm(W.interior - W0) / np.linalg.norm(W0)))
        worst[bc] = max(errs)
    return {"max_relative_error": worst, "threshold": 10 * cfg.tol}


def verify(cfg: RunConfig, mode: str, seed: int = 0, perturbations: int = 2) -> VerifyReport:
    failures: list[str] = []
    details: dict = {}
    if mode == "invariants":
        cases = [("unperturbed", None)]
        rng = np.random.default_rng(seed)
        for k in range(perturbations):
            cases.append((f"perturbed-{k}", rng))
        for label, gen in cases:
            lax = replace(cfg, strict=False)
            state, scheme = init_fields(lax)
            if gen is not None:
                state = _perturb(state, scheme, gen)
            found: list[Violation] = []
            try:
                for ev in simulate(lax, state, scheme, stops=[cfg.t_end]):
                    if ev.report is not None:
                        found.extend(ev.report.violations)
                        if ev.record.mass_residual > 1e-12:
                            found.append(Violation("mass_residual", ev.state.step,
                                                   ev.record.mass_residual, 1e-12))
            except NumericalError as exc:
                failures.append(f"{label}: {exc}")
            details[label] = len(found)
            failures.extend(f"{label}: {v}" for v in found[:20])
            if len(found) > 20:
                failures.append(f"{label}: ... {len(found) - 20} more")
    elif mode == "convergence":
        study = convergence_study(cfg)
        details.update(study)
        gaps = study["l1_gaps"]
        if any(b >= a for a, b in zip(gaps, gaps[1:])):
            failures.append(f"L1 gaps not decreasing: {gaps}")
    elif mode == "manufactured":
        bat = manufactured_battery(cfg, seed=seed)
        details.update(bat)
        for bc, err in bat["max_relative_error"].items():
            if not err <= bat["threshold"]:
                failures.append(f"{bc}: round-trip error {err:.3e} > {bat['threshold']:.1e}")
    else:
        raise ConfigError(f"unknown verify mode {mode!r}")
    return VerifyReport(mode, not failures, failures, details)


def _perturb(state: SimState, scheme: Scheme, rng: np.random.Generator) -> SimState:
    """Admissible random perturbation: n scaled cellwise into [0, n_inf], c and q scaled down."""
    params = scheme.params
    grid = scheme.grid
    n = np.minimum(state.n.interior * rng.uniform(0.5, 1.5, grid.shape), params.n_inf)
    c = state.c.interior * rng.uniform(0.5, 1.0, grid.shape)
    q = state.q.interior * rng.uniform(0.5, 1.0, grid.shape)
    return initial_state(scheme, n, c, q, state.t, state.step)
