"""Command-line interface: solve one scenario, run sweeps, cross-check
against the brute-force oracles, and export plot-ready series."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import ao, beamforming, experiments, oracles, power_alloc, scenario, trajectory
from .convex_backend import default_tolerance

log = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel slots/cells")
    parser.add_argument(
        "--tol",
        type=float,
        default=None,
        help=f"solver tolerance (default {default_tolerance():g}, env IRSUAV_SOLVER_TOL)",
    )


def _load_config(path: str, seed: int | None) -> scenario.SystemConfig:
    cfg = scenario.load_config(path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    bad = scenario.validate_config(cfg)
    if bad:
        raise SystemExit("invalid config:\n  " + "\n  ".join(bad))
    return cfg


def _cmd_solve(args) -> int:
    cfg = _load_config(args.config, args.seed)
    opts = ao.AoOptions(tol=args.tol, jobs=args.jobs, max_outer=args.max_outer)
    design = ao.alternating_optimize(cfg, opts)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    experiments.write_trajectory_file(out / "trajectory.csv", design.trajectory)
    experiments._write_trace_file(out / "trace.csv", design)
    summary = {
        "objective_worst_case": design.objective,
        "objective_nominal": ao.evaluate_design(
            cfg, design.trajectory, design.powers, design.phases, "nominal"
        ).rate,
        "converged": design.converged,
        "outer_iterations": design.trace.outer_iterations,
        "failure": design.failure,
        "powers_w": [float(p) for p in design.powers.p],
    }
    experiments._atomic_write(
        out / "solution.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    print(f"worst-case average rate: {design.objective:.6f} bits/s/Hz")
    print(f"outputs written to {out}/")
    return 0 if design.failure is None else 1


def _cmd_sweep(args) -> int:
    if args.spec in ("fig2", "fig3", "fig4"):
        spec = experiments.preset_spec(args.spec, output_dir=args.out or "results", scale=args.scale)
    else:
        spec = experiments.load_spec(args.spec)
        if args.out:
            spec = dataclasses.replace(spec, output_dir=args.out)
    if args.seed is not None:
        spec = dataclasses.replace(spec, base=dataclasses.replace(spec.base, seed=args.seed))
    if args.tol is not None:
        spec = dataclasses.replace(spec, ao_options=dataclasses.replace(spec.ao_options, tol=args.tol))
    if args.timings:
        spec = dataclasses.replace(spec, write_timings=True)
    results = experiments.run_sweep(spec, jobs=args.jobs)
    failed = [r for r in results if r.status != "ok"]
    for r in results:
        rate = "-" if r.worst_case_rate is None else f"{r.worst_case_rate:.4f}"
        print(f"{r.scheme:>16} {spec.sweep_variable}={r.sweep_value:g}: {rate}  [{r.status}]")
    print(f"results written to {spec.output_dir}/")
    return 1 if failed else 0


def _cmd_verify(args) -> int:
    cfg = _load_config(args.config, args.seed)
    ok = True
    if args.oracle == "phase":
        ok = _verify_phase(cfg, args.tol)
    elif args.oracle == "jammer":
        ok = _verify_jammer(cfg)
    elif args.oracle == "trajectory":
        ok = _verify_trajectory(cfg, args.tol)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _verify_phase(cfg, tol) -> bool:
    """SDP bound vs exhaustive grid vs recovered design on the middle slot."""
    if cfg.L > 4:
        raise SystemExit("phase oracle needs L <= 4; use a desk-scale config")
    traj = scenario.initial_trajectory(cfg)
    powers = scenario.uniform_power(cfg)
    n = max(1, cfg.N // 2)
    res = beamforming.optimize_slot_phases(
        cfg, traj.points[n], n, float(powers.p[n - 1]), tol=tol
    )
    uav = traj.points[n]
    h_ru = None
    from . import channels  # local alias to build the slot data once

    args_ch = (cfg.Lx, cfg.Lz, cfg.elem_spacing, cfg.wavelength, cfg.rho)
    h_ru = channels.upa_steering(cfg.irs_pos, uav, *args_ch)
    h_gu = channels.los_scalar(cfg.gn_pos, uav, cfg.rho, cfg.wavelength)
    h_gr = channels.upa_steering(cfg.irs_pos, cfg.gn_pos, *args_ch)
    w_g = np.sqrt(powers.p[n - 1]) * beamforming.stacked_channel(h_gu, h_gr, h_ru)
    samples = beamforming.sample_jammer_channels(cfg, uav, h_ru)
    samples = dataclasses.replace(samples, alpha=res.alpha)
    data = beamforming.slot_sdp_data(w_g, samples, cfg.p_jam, cfg.sigma2)
    best, _, report = oracles.exhaustive_phase_oracle(data, levels=16)
    achieved = beamforming.slot_phase_sinr(data, res.theta)
    print(f"SDP bound:        {res.sdp_objective:.6e}")
    print(f"grid optimum:     {best:.6e}  ({report.resolution}, {report.wall_time_s:.2f}s)")
    print(f"recovered design: {achieved:.6e}")
    slack = 1e-6 * (1.0 + abs(res.sdp_objective))
    return best <= res.sdp_objective + slack and achieved >= 0.95 * best - slack


def _verify_jammer(cfg) -> bool:
    """Monte-Carlo worst case never undercuts the closest-point bound."""
    traj = scenario.initial_trajectory(cfg)
    powers = scenario.uniform_power(cfg)
    phases = scenario.zero_phases(cfg)
    bound = power_alloc.worst_case_rate(cfg, traj, powers, phases)
    report = oracles.monte_carlo_worst_jammer(cfg, traj, powers, phases, m=10_000)
    print(f"closest-point bound: {bound:.6f} bits/s/Hz")
    print(f"Monte-Carlo worst:   {report.value:.6f} bits/s/Hz ({report.resolution})")
    return report.value >= bound - 1e-3


def _verify_trajectory(cfg, tol) -> bool:
    """SCA against the exhaustive waypoint grid (two-slot scenario)."""
    if cfg.N != 2:
        raise SystemExit("trajectory oracle needs N = 2")
    phases = scenario.zero_phases(cfg)
    report = oracles.grid_trajectory_oracle(cfg, phases, resolution=25)
    opts = ao.AoOptions(run_phases=False, tol=tol)
    design = ao.alternating_optimize(cfg, opts)
    print(f"grid optimum: {report.value:.6f} bits/s/Hz ({report.resolution})")
    print(f"SCA design:   {design.objective:.6f} bits/s/Hz")
    return design.objective >= 0.98 * report.value


def _cmd_export(args) -> int:
    written = experiments.export_plotdata(args.results_dir, args.out)
    for p in written:
        print(f"wrote {p}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irsuav",
        description="Robust UAV/IRS/power co-design under jammer location uncertainty",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="optimize one scenario config")
    p_solve.add_argument("config", help="scenario config JSON")
    p_solve.add_argument("--out", default="solution", help="output directory")
    p_solve.add_argument("--max-outer", type=int, default=None)
    _add_common(p_solve)
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run an experiment sweep")
    p_sweep.add_argument("spec", help="sweep spec JSON, or preset fig2/fig3/fig4")
    p_sweep.add_argument("--out", default=None, help="output directory")
    p_sweep.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p_sweep.add_argument("--timings", action="store_true", help="also write timings.csv")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="cross-check against a brute-force oracle")
    p_verify.add_argument("config", help="scenario config JSON")
    p_verify.add_argument("--oracle", choices=("phase", "jammer", "trajectory"), required=True)
    _add_common(p_verify)
    p_verify.set_defaults(func=_cmd_verify)

    p_export = sub.add_parser("export", help="pivot sweep results into plot series")
    p_export.add_argument("results_dir")
    p_export.add_argument("--out", default=None)
    p_export.set_defaults(func=_cmd_export)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
