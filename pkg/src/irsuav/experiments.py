"""Experiment harness: scheme/parameter sweeps with machine-readable output.

A sweep runs the full alternating optimizer for every (scheme, value) cell,
writing one aggregated results table plus per-cell trajectory and
convergence-trace files.  All output files are byte-reproducible for a
fixed seed and spec; wall-clock timings go to an opt-in sidecar so they
never break that contract.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import ao
from .scenario import (
    PhaseSchedule,
    Position3,
    PowerSchedule,
    SystemConfig,
    Trajectory,
    UncertaintyRegion,
    config_from_dict,
    config_to_dict,
    dbm_to_watts,
    validate_config,
)

__all__ = [
    "SCHEMES",
    "SWEEP_VARIABLES",
    "ExperimentSpec",
    "CellResult",
    "spec_from_dict",
    "spec_to_dict",
    "load_spec",
    "preset_spec",
    "apply_scheme",
    "apply_sweep_value",
    "run_sweep",
    "export_plotdata",
    "read_results",
    "write_trajectory_file",
    "read_trajectory_file",
]

log = logging.getLogger(__name__)

SCHEMES = ("proposed_irs_g", "proposed_irs_m", "no_irs")
SWEEP_VARIABLES = ("p_jam_dbm", "L", "D_m")

IRS_NEAR_GN = Position3(201.0, 100.0, 5.0)
IRS_NEAR_JAMMER = Position3(251.0, 50.0, 5.0)

RESULTS_COLUMNS = (
    "scheme",
    "sweep_variable",
    "sweep_value",
    "D_m",
    "nominal_rate",
    "worst_case_rate",
    "outer_iterations",
    "converged",
    "status",
)


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: SystemConfig
    sweep_variable: str
    sweep_values: tuple
    schemes: tuple[str, ...]
    output_dir: str
    ao_options: ao.AoOptions = ao.AoOptions()
    write_timings: bool = False

    def violations(self) -> list[str]:
        v = []
        if self.sweep_variable not in SWEEP_VARIABLES:
            v.append(f"unknown sweep variable {self.sweep_variable!r}")
        if not self.sweep_values:
            v.append("sweep values must be non-empty")
        if not self.schemes:
            v.append("schemes must be non-empty")
        for s in self.schemes:
            if s not in SCHEMES:
                v.append(f"unknown scheme {s!r}")
        return v


@dataclass(frozen=True)
class CellResult:
    scheme: str
    sweep_value: float
    D_m: float
    nominal_rate: float | None
    worst_case_rate: float | None
    outer_iterations: int
    converged: bool
    status: str  # "ok" or an error summary
    design: ao.DesignResult | None
    wall_time_s: float


def spec_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentSpec:
    d = dict(data)
    if "base_config_path" in d:
        path = Path(d.pop("base_config_path"))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        with open(path, "r", encoding="utf-8") as f:
            base = config_from_dict(json.load(f))
    else:
        base = config_from_dict(d.pop("base_config", {}))
    ao_kwargs = d.pop("ao", {})
    spec = ExperimentSpec(
        name=str(d.pop("name", "sweep")),
        base=base,
        sweep_variable=str(d.pop("sweep_variable")),
        sweep_values=tuple(d.pop("sweep_values")),
        schemes=tuple(d.pop("schemes", SCHEMES)),
        output_dir=str(d.pop("output_dir", "results")),
        ao_options=ao.AoOptions(**ao_kwargs),
        write_timings=bool(d.pop("write_timings", False)),
    )
    if d:
        raise ValueError(f"unknown spec keys: {sorted(d)}")
    bad = spec.violations()
    if bad:
        raise ValueError(f"invalid experiment spec: {bad}")
    return spec


def spec_to_dict(spec: ExperimentSpec) -> dict:
    return {
        "name": spec.name,
        "base_config": config_to_dict(spec.base),
        "sweep_variable": spec.sweep_variable,
        "sweep_values": list(spec.sweep_values),
        "schemes": list(spec.schemes),
        "output_dir": spec.output_dir,
        "ao": dataclasses.asdict(spec.ao_options),
        "write_timings": spec.write_timings,
    }


def load_spec(path: str | os.PathLike) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as f:
        return spec_from_dict(json.load(f), base_dir=Path(path).parent)


def _square_factors(L: int) -> tuple[int, int]:
    """Split an element count into the most square Lx x Lz grid."""
    if L <= 0:
        return 0, 0
    best = (1, L)
    for lx in range(1, int(np.sqrt(L)) + 1):
        if L % lx == 0:
            best = (lx, L // lx)
    return best[1], best[0]


def apply_scheme(cfg: SystemConfig, scheme: str) -> SystemConfig:
    if scheme == "proposed_irs_g":
        return replace(cfg, irs_pos=IRS_NEAR_GN)
    if scheme == "proposed_irs_m":
        return replace(cfg, irs_pos=IRS_NEAR_JAMMER)
    if scheme == "no_irs":
        return replace(cfg, Lx=0, Lz=0)
    raise ValueError(f"unknown scheme {scheme!r}")


def apply_sweep_value(cfg: SystemConfig, variable: str, value) -> SystemConfig:
    if variable == "p_jam_dbm":
        return replace(cfg, p_jam=dbm_to_watts(float(value)))
    if variable == "L":
        lx, lz = _square_factors(int(value))
        return replace(cfg, Lx=lx, Lz=lz)
    if variable == "D_m":
        return replace(cfg, jammer=replace(cfg.jammer, radius=float(value)))
    raise ValueError(f"unknown sweep variable {variable!r}")


def cell_config(spec: ExperimentSpec, scheme: str, value) -> SystemConfig:
    cfg = apply_sweep_value(spec.base, spec.sweep_variable, value)
    cfg = apply_scheme(cfg, scheme)  # scheme wins on conflicts (no_irs zeroes L)
    return cfg


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(c) for c in row])
    return buf.getvalue()


def write_trajectory_file(path: Path, traj: Trajectory) -> None:
    rows = [(n, p[0], p[1], p[2]) for n, p in enumerate(traj.points)]
    _atomic_write(path, _csv_text(("slot", "x", "y", "z"), rows))


def read_trajectory_file(path: Path) -> Trajectory:
    pts = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            pts.append([float(row["x"]), float(row["y"]), float(row["z"])])
    return Trajectory(np.array(pts))


def _write_trace_file(path: Path, design: ao.DesignResult) -> None:
    rows = [
        (
            r.iteration,
            r.objective,
            r.power_status,
            r.phases_accepted,
            ";".join(str(c) for c in r.phase_inner_iterations),
            r.trajectory_status,
            r.sca_iterations,
        )
        for r in design.trace.records
    ]
    header = (
        "iteration",
        "objective",
        "power_status",
        "phases_accepted",
        "phase_inner_iterations",
        "trajectory_status",
        "sca_iterations",
    )
    _atomic_write(path, _csv_text(header, rows))


def _cell_tag(scheme: str, variable: str, value) -> str:
    return f"{scheme}__{variable}_{_fmt(value)}".replace(".", "p")


def _run_cell(args) -> CellResult:
    spec, scheme, value = args
    cfg = cell_config(spec, scheme, value)
    t0 = time.perf_counter()
    bad = validate_config(cfg)
    if bad:
        return CellResult(
            scheme, float(value), cfg.jammer.radius, None, None, 0, False,
            f"invalid config: {'; '.join(bad)}", None, time.perf_counter() - t0,
        )
    try:
        design = ao.alternating_optimize(cfg, spec.ao_options)
        nominal = ao.evaluate_design(
            cfg, design.trajectory, design.powers, design.phases, "nominal"
        ).rate
        status = "ok" if design.failure is None else f"partial: {design.failure}"
        return CellResult(
            scheme,
            float(value),
            cfg.jammer.radius,
            nominal,
            design.objective,
            design.trace.outer_iterations,
            design.converged,
            status,
            design,
            time.perf_counter() - t0,
        )
    except Exception as exc:  # per-cell failures never abort the sweep
        log.exception("cell %s/%s failed", scheme, value)
        return CellResult(
            scheme, float(value), cfg.jammer.radius, None, None, 0, False,
            f"error: {exc}", None, time.perf_counter() - t0,
        )


def run_sweep(spec: ExperimentSpec, jobs: int = 1) -> list[CellResult]:
    """Run every (scheme, value) cell and write the output files.

    Emits `results.csv`, one trajectory and one trace file per successful
    cell, and a resolved copy of the spec; `timings.csv` is written only
    when the spec opts in, keeping the default outputs byte-reproducible.
    """
    bad = spec.violations()
    if bad:
        raise ValueError(f"invalid experiment spec: {bad}")
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    cells = [(spec, scheme, value) for scheme in spec.schemes for value in spec.sweep_values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]

    rows = []
    for res in results:
        rows.append(
            (
                res.scheme,
                spec.sweep_variable,
                res.sweep_value,
                res.D_m,
                "" if res.nominal_rate is None else res.nominal_rate,
                "" if res.worst_case_rate is None else res.worst_case_rate,
                res.outer_iterations,
                res.converged,
                res.status,
            )
        )
        if res.design is not None:
            tag = _cell_tag(res.scheme, spec.sweep_variable, res.sweep_value)
            write_trajectory_file(out / f"traj__{tag}.csv", res.design.trajectory)
            _write_trace_file(out / f"trace__{tag}.csv", res.design)
    _atomic_write(out / "results.csv", _csv_text(RESULTS_COLUMNS, rows))
    _atomic_write(
        out / "spec_resolved.json",
        json.dumps(spec_to_dict(spec), indent=2, sort_keys=True) + "\n",
    )
    if spec.write_timings:
        trows = [
            (_cell_tag(r.scheme, spec.sweep_variable, r.sweep_value), r.wall_time_s)
            for r in results
        ]
        _atomic_write(out / "timings.csv", _csv_text(("cell", "wall_time_s"), trows))
    return results


def read_results(results_dir: str | os.PathLike) -> list[dict]:
    with open(Path(results_dir) / "results.csv", "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def export_plotdata(results_dir: str | os.PathLike, out_dir: str | os.PathLike | None = None) -> list[Path]:
    """Pivot a results table into plot-ready series files.

    One CSV per rate metric: x = sweep value, one column per scheme, scheme
    columns ordered as declared in the sweep spec.
    """
    results_dir = Path(results_dir)
    rows = read_results(results_dir)
    if not rows:
        raise ValueError("empty results table")
    out = Path(out_dir) if out_dir is not None else results_dir
    out.mkdir(parents=True, exist_ok=True)

    spec_path = results_dir / "spec_resolved.json"
    if spec_path.exists():
        with open(spec_path, "r", encoding="utf-8") as f:
            schemes = list(json.load(f)["schemes"])
    else:
        schemes = list(dict.fromkeys(r["scheme"] for r in rows))
    variable = rows[0]["sweep_variable"]
    values = sorted({float(r["sweep_value"]) for r in rows})

    written = []
    for metric in ("worst_case_rate", "nominal_rate"):
        table = {}
        for r in rows:
            if r[metric] != "":
                table[(r["scheme"], float(r["sweep_value"]))] = float(r[metric])
        out_rows = []
        for v in values:
            out_rows.append([v] + [table.get((s, v), "") for s in schemes])
        path = out / f"series_{metric}.csv"
        _atomic_write(path, _csv_text([variable] + schemes, out_rows))
        written.append(path)
    return written


# --------------------------------------------------------------------------
# Presets mirroring the three evaluation axes (trajectories, jammer power,
# element count) at desk scale; `scale="paper"` restores the full sizes.
# --------------------------------------------------------------------------


def preset_spec(name: str, output_dir: str = "results", scale: str = "desk") -> ExperimentSpec:
    if scale == "desk":
        base = SystemConfig(N=20, Lx=8, Lz=8, T_samples=24, j_max=2)
        opts = ao.AoOptions(
            phase_inner_max=2, sca_inner_max=6, randomizations=100, hull_samples=24
        )
        l_values = (16, 36, 64)
    elif scale == "paper":
        base = SystemConfig(N=50, dt=0.5, Lx=10, Lz=10, T_samples=1000, j_max=30)
        opts = ao.AoOptions()
        l_values = (20, 40, 60, 80, 100)
    else:
        raise ValueError(f"unknown scale {scale!r}")

    if name == "fig2":
        return ExperimentSpec(
            name=f"fig2_{scale}",
            base=base,
            sweep_variable="D_m",
            sweep_values=(0.0, 20.0),
            schemes=SCHEMES,
            output_dir=output_dir,
            ao_options=opts,
        )
    if name == "fig3":
        return ExperimentSpec(
            name=f"fig3_{scale}",
            base=base,
            sweep_variable="p_jam_dbm",
            sweep_values=(15.0, 20.0, 25.0, 30.0) if scale == "paper" else (15.0, 30.0),
            schemes=SCHEMES,
            output_dir=output_dir,
            ao_options=opts,
        )
    if name == "fig4":
        return ExperimentSpec(
            name=f"fig4_{scale}",
            base=replace(base, p_jam=dbm_to_watts(15.0)),
            sweep_variable="L",
            sweep_values=l_values,
            schemes=SCHEMES,
            output_dir=output_dir,
            ao_options=opts,
        )
    raise ValueError(f"unknown preset {name!r}; expected fig2, fig3, or fig4")
