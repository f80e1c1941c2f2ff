"""Outer alternating optimization over power, phases, and trajectory.

One outer iteration updates the power schedule (exact water-filling), then
the per-slot IRS phases (robust SDR), then the trajectory (SCA), always
against the worst-case jammer placement.  Candidate phase and trajectory
updates are only accepted when they improve the evaluated objective, which
makes the recorded objective non-decreasing even though the SDR
randomization step is heuristic; the best iterate is returned.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import beamforming, channels, oracles, power_alloc, trajectory as trajectory_mod
from .scenario import (
    PhaseSchedule,
    PowerSchedule,
    SystemConfig,
    Trajectory,
    closest_point,
    initial_trajectory,
    uniform_power,
    zero_phases,
)

__all__ = [
    "AoOptions",
    "AoIterationRecord",
    "AoTrace",
    "DesignResult",
    "RateReport",
    "alternating_optimize",
    "evaluate_design",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AoOptions:
    """Knobs for one alternating-optimization run.

    The three `run_*` switches support degenerate/evaluate-only runs; the
    caps trade solution quality for wall time on large sweeps.
    """

    run_power: bool = True
    run_phases: bool = True
    run_trajectory: bool = True
    max_outer: int | None = None  # default: cfg.j_max
    phase_inner_max: int = beamforming.MAX_WEIGHT_UPDATES
    sca_inner_max: int = 30
    randomizations: int = beamforming.DEFAULT_RANDOMIZATIONS
    hull_samples: int | None = None  # default: cfg.T_samples
    tol: float | None = None
    jobs: int = 1


@dataclass(frozen=True)
class AoIterationRecord:
    iteration: int
    objective: float
    power_status: str
    phase_inner_iterations: tuple[int, ...]
    phases_accepted: int
    trajectory_status: str
    sca_iterations: int
    wall_time_s: float


@dataclass(frozen=True)
class AoTrace:
    records: tuple[AoIterationRecord, ...]

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def outer_iterations(self) -> int:
        return len(self.records) - 1


@dataclass(frozen=True)
class DesignResult:
    trajectory: Trajectory
    powers: PowerSchedule
    phases: PhaseSchedule
    trace: AoTrace
    objective: float
    converged: bool
    failure: str | None = None


def _slot_coeff(cfg: SystemConfig, uav_pos, theta: np.ndarray) -> float:
    """Per-watt SINR slope of one slot at the closest-point jammer."""
    jam = closest_point(cfg.jammer, uav_pos)
    cs = channels.build_channel_set(cfg, uav_pos, jam)
    g0, gm = channels.slot_gains(cs, theta)
    return g0 / (cfg.p_jam * gm + cfg.sigma2)


def _phase_task(args) -> tuple[int, beamforming.SlotPhaseResult]:
    cfg, uav_pos, slot, p_n, opts = args
    res = beamforming.optimize_slot_phases(
        cfg,
        uav_pos,
        slot,
        p_n,
        T=opts.hull_samples,
        max_inner=opts.phase_inner_max,
        randomizations=opts.randomizations,
        tol=opts.tol,
    )
    return slot, res


def alternating_optimize(cfg: SystemConfig, options: AoOptions | None = None) -> DesignResult:
    """Run the full alternating loop from the straight-line initialization.

    Stops when the worst-case objective changes by at most mu2 or after
    j_max outer iterations; subproblem failures end the loop early with the
    failure recorded and the last consistent iterate kept.
    """
    opts = options or AoOptions()
    max_outer = opts.max_outer if opts.max_outer is not None else cfg.j_max

    Q = initial_trajectory(cfg)
    P = uniform_power(cfg)
    Gamma = zero_phases(cfg)

    obj = power_alloc.worst_case_rate(cfg, Q, P, Gamma)
    records = [
        AoIterationRecord(0, obj, "init", (), 0, "init", 0, 0.0)
    ]
    best = (obj, Q, P, Gamma)
    converged = False
    failure: str | None = None

    pool = None
    if opts.jobs > 1:
        pool = ProcessPoolExecutor(max_workers=opts.jobs)
    try:
        prev_obj = obj
        for it in range(1, max_outer + 1):
            t0 = time.perf_counter()
            power_status = "skipped"
            if opts.run_power:
                coeffs = power_alloc.worst_case_coeffs(cfg, Q, Gamma)
                wf = power_alloc.waterfill(coeffs, cfg.p_bar, cfg.p_max)
                P = wf.schedule
                power_status = "degenerate" if wf.degenerate else "optimal"

            inner_counts: list[int] = []
            accepted = 0
            phase_status = "skipped"
            if opts.run_phases and cfg.L > 0:
                phase_status = "optimal"
                tasks = [
                    (cfg, Q.points[n], n, float(P.p[n - 1]), opts)
                    for n in range(1, cfg.N + 1)
                ]
                try:
                    if pool is not None:
                        results = dict(pool.map(_phase_task, tasks))
                    else:
                        results = dict(map(_phase_task, tasks))
                except beamforming.SlotSolverError as exc:
                    failure = f"iteration {it}: {exc}"
                    log.error("%s", failure)
                    break
                theta = Gamma.theta.copy()
                for n in range(1, cfg.N + 1):
                    res = results[n]
                    inner_counts.append(res.inner_iterations)
                    old = _slot_coeff(cfg, Q.points[n], theta[n - 1])
                    new = _slot_coeff(cfg, Q.points[n], res.theta)
                    if new > old:
                        theta[n - 1] = res.theta
                        accepted += 1
                Gamma = PhaseSchedule(theta)

            traj_status = "skipped"
            sca_iters = 0
            if opts.run_trajectory and cfg.N >= 2:
                base = power_alloc.worst_case_rate(cfg, Q, P, Gamma)
                tr = trajectory_mod.optimize_trajectory(
                    cfg, P, Gamma, Q, max_inner=opts.sca_inner_max, tol=opts.tol
                )
                sca_iters = tr.iterations
                traj_status = "stalled" if tr.stalled else "optimal"
                if tr.objective > base:
                    Q = tr.trajectory
                    traj_status += "+accepted"

            obj = power_alloc.worst_case_rate(cfg, Q, P, Gamma)
            records.append(
                AoIterationRecord(
                    iteration=it,
                    objective=obj,
                    power_status=power_status,
                    phase_inner_iterations=tuple(inner_counts),
                    phases_accepted=accepted,
                    trajectory_status=traj_status,
                    sca_iterations=sca_iters,
                    wall_time_s=time.perf_counter() - t0,
                )
            )
            if obj > best[0]:
                best = (obj, Q, P, Gamma)
            if abs(obj - prev_obj) <= cfg.mu2:
                converged = True
                break
            prev_obj = obj
    finally:
        if pool is not None:
            pool.shutdown()

    objective, Q, P, Gamma = best
    return DesignResult(
        trajectory=Q,
        powers=P,
        phases=Gamma,
        trace=AoTrace(tuple(records)),
        objective=objective,
        converged=converged,
        failure=failure,
    )


@dataclass(frozen=True)
class RateReport:
    mode: str
    rate: float
    samples: int
    seed: int | None


def evaluate_design(
    cfg: SystemConfig,
    trajectory: Trajectory,
    powers: PowerSchedule,
    phases: PhaseSchedule,
    mode: str = "nominal",
    samples: int = 10_000,
    seed: int | None = None,
) -> RateReport:
    """Evaluate a finished design.

    `nominal` places the jammer at the region center; `worst_case_mc` takes
    the minimum rate over seeded Monte-Carlo draws from the uncertainty
    region.
    """
    if mode == "nominal":
        rate = channels.average_rate(cfg, trajectory, powers, phases, cfg.jammer.center)
        return RateReport("nominal", float(rate), 1, None)
    if mode == "worst_case_mc":
        if seed is None:
            seed = cfg.seed
        report = oracles.monte_carlo_worst_jammer(
            cfg, trajectory, powers, phases, samples, seed
        )
        return RateReport("worst_case_mc", report.value, samples, seed)
    raise ValueError(f"unknown evaluation mode {mode!r}")
