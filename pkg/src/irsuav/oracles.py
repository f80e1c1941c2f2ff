"""Independent brute-force references for the optimization modules.

These live in the shipped library (not only in tests) so the CLI can run
reviewer-reproducible cross-checks at desk scale.  Every oracle is
deterministic under a fixed seed or resolution and refuses budgets beyond
its enumerated-state cap instead of silently subsampling.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

import numpy as np

from . import channels, power_alloc
from .beamforming import JammerSampleSet, SlotSdpData, lifted_vector, slot_sdp_data
from .scenario import (
    PhaseSchedule,
    PowerSchedule,
    SystemConfig,
    Trajectory,
    UncertaintyRegion,
)

__all__ = [
    "OracleReport",
    "OracleBudgetError",
    "exhaustive_phase_oracle",
    "hemisphere_draws",
    "monte_carlo_worst_jammer",
    "grid_trajectory_oracle",
]

PHASE_ORACLE_MAX_STATES = 10_000_000
GRID_ORACLE_MAX_STATES = 1_000_000


class OracleBudgetError(ValueError):
    """The requested enumeration exceeds the oracle's state cap."""


@dataclass(frozen=True)
class OracleReport:
    value: float
    method: str
    resolution: str
    wall_time_s: float
    extra: dict | None = None


def exhaustive_phase_oracle(
    data: SlotSdpData, levels: int
) -> tuple[float, np.ndarray, OracleReport]:
    """Exact maximum of a slot SINR over a uniform per-element phase grid.

    Enumerates all levels**L combinations, so it only runs at desk scale;
    returns (best SINR, best phases, report).
    """
    L = data.A.shape[0] - 1
    states = levels**L if L > 0 else 1
    if states > PHASE_ORACLE_MAX_STATES:
        raise OracleBudgetError(
            f"{levels}^{L} = {states} phase states exceed the cap {PHASE_ORACLE_MAX_STATES}"
        )
    t0 = time.perf_counter()
    grid = 2.0 * np.pi * np.arange(levels) / levels
    best_sinr = -np.inf
    best_theta = np.zeros(L)
    for combo in itertools.product(grid, repeat=L):
        theta = np.array(combo)
        sinr = data.sinr(lifted_vector(theta))
        if sinr > best_sinr:
            best_sinr = sinr
            best_theta = theta
    report = OracleReport(
        value=float(best_sinr),
        method="exhaustive_phase_grid",
        resolution=f"{levels} levels x {L} elements ({states} states)",
        wall_time_s=time.perf_counter() - t0,
    )
    return float(best_sinr), best_theta, report


def hemisphere_draws(region: UncertaintyRegion, m: int, seed: int) -> np.ndarray:
    """Uniform-in-volume draws from the uncertainty region, shape (m, 3).

    Draws come from the prefix of a fixed seeded stream, so enlarging m
    extends rather than reshuffles the sample set.
    """
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((m, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if region.hemisphere_up:
        dirs[:, 2] = np.abs(dirs[:, 2])
    radii = region.radius * rng.random(m) ** (1.0 / 3.0)
    return region.center.as_array()[None, :] + dirs * radii[:, None]


def monte_carlo_worst_jammer(
    cfg: SystemConfig,
    trajectory: Trajectory,
    powers: PowerSchedule,
    phases: PhaseSchedule,
    m: int = 10_000,
    seed: int | None = None,
) -> OracleReport:
    """Minimum average rate over m seeded jammer draws from the region."""
    if m < 1:
        raise ValueError("need at least one draw")
    if seed is None:
        seed = cfg.seed
    t0 = time.perf_counter()
    if cfg.jammer.radius == 0.0:
        worst = channels.average_rate(cfg, trajectory, powers, phases, cfg.jammer.center)
        positions = 1
    else:
        draws = hemisphere_draws(cfg.jammer, m, seed)
        worst = np.inf
        for pos in draws:
            rate = channels.average_rate(cfg, trajectory, powers, phases, pos)
            worst = min(worst, rate)
        positions = m
    return OracleReport(
        value=float(worst),
        method="monte_carlo_worst_jammer",
        resolution=f"{positions} draws, seed {seed}",
        wall_time_s=time.perf_counter() - t0,
    )


def grid_trajectory_oracle(
    cfg: SystemConfig,
    phases: PhaseSchedule,
    resolution: int = 25,
) -> OracleReport:
    """Exhaustive single-waypoint search for two-slot scenarios.

    Scans the free middle waypoint over a grid covering the mobility-feasible
    lens, allocating exact water-filling power per candidate, and reports the
    best worst-case average rate.
    """
    if cfg.N != 2:
        raise ValueError("the grid oracle handles exactly one free waypoint (N = 2)")
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    if resolution**2 > GRID_ORACLE_MAX_STATES:
        raise OracleBudgetError(
            f"{resolution}^2 grid states exceed the cap {GRID_ORACLE_MAX_STATES}"
        )
    t0 = time.perf_counter()
    q0 = cfg.q0.as_array()
    qN = cfg.qN.as_array()
    if resolution == 1:
        candidates = np.array([0.5 * (q0[:2] + qN[:2])])
    else:
        lo = np.minimum(q0[:2], qN[:2]) - cfg.d_max
        hi = np.maximum(q0[:2], qN[:2]) + cfg.d_max
        xs = np.linspace(lo[0], hi[0], resolution)
        ys = np.linspace(lo[1], hi[1], resolution)
        gx, gy = np.meshgrid(xs, ys)
        candidates = np.stack([gx.ravel(), gy.ravel()], axis=1)
    best_rate = -np.inf
    best_wp = None
    evaluated = 0
    for wp in candidates:
        if np.linalg.norm(wp - q0[:2]) > cfg.d_max or np.linalg.norm(wp - qN[:2]) > cfg.d_max:
            continue
        evaluated += 1
        traj = Trajectory(
            np.array([q0, [wp[0], wp[1], cfg.H_u], qN])
        )
        coeffs = power_alloc.worst_case_coeffs(cfg, traj, phases)
        wf = power_alloc.waterfill(coeffs, cfg.p_bar, cfg.p_max)
        rate = float(np.mean(np.log2(1.0 + wf.schedule.p * coeffs.a)))
        if rate > best_rate:
            best_rate = rate
            best_wp = wp
    if best_wp is None:
        raise ValueError("no grid candidate satisfies the mobility constraints")
    return OracleReport(
        value=best_rate,
        method="grid_trajectory",
        resolution=f"{resolution}x{resolution} grid, {evaluated} feasible",
        wall_time_s=time.perf_counter() - t0,
        extra={"waypoint": [float(best_wp[0]), float(best_wp[1]), cfg.H_u]},
    )
