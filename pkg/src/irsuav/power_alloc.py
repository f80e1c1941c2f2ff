"""Worst-case power allocation: capped water-filling over the time slots.

The jammer is pinned at the region point closest to the UAV in each slot,
which lower-bounds the achievable rate; the per-slot SINR-per-watt slopes
from that placement feed a water-filling step under the average- and
peak-power constraints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import channels
from .convex_backend import ConicProgram, cp
from .scenario import (
    PhaseSchedule,
    PowerSchedule,
    SystemConfig,
    Trajectory,
    closest_point,
)

__all__ = [
    "SlotSnrCoeff",
    "worst_case_coeffs",
    "WaterfillResult",
    "waterfill",
    "power_program",
    "worst_case_rate",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlotSnrCoeff:
    """Per-slot SINR slope a[n] = g0[n] / (p_jam * gm[n] + sigma2), in 1/W."""

    a: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.a, dtype=float)
        if arr.ndim != 1 or np.any(arr < 0):
            raise ValueError("SINR slopes must be a non-negative vector")
        object.__setattr__(self, "a", arr)


def worst_case_coeffs(
    cfg: SystemConfig, trajectory: Trajectory, phases: PhaseSchedule
) -> SlotSnrCoeff:
    """SINR slopes with the jammer placed at its closest feasible point.

    The jamming gain includes the IRS-reflected component under the current
    phase schedule, evaluated at the same closest point.
    """
    a = np.empty(cfg.N)
    for n in range(1, cfg.N + 1):
        uav = trajectory.points[n]
        jam = closest_point(cfg.jammer, uav)
        cs = channels.build_channel_set(cfg, uav, jam, slot=n)
        g0, gm = channels.slot_gains(cs, phases.theta[n - 1])
        a[n - 1] = g0 / (cfg.p_jam * gm + cfg.sigma2)
    return SlotSnrCoeff(a)


@dataclass(frozen=True)
class WaterfillResult:
    schedule: PowerSchedule
    water_level: float | None
    all_capped: bool
    degenerate: bool  # every slope was zero; fell back to uniform power


def waterfill(coeffs: SlotSnrCoeff, p_bar: float, p_max: float) -> WaterfillResult:
    """Maximize (1/N) sum log2(1 + p[n] a[n]) under mean and peak constraints.

    Capped water-filling: p[n] = clip(nu - 1/a[n], 0, p_max) with the water
    level nu found by bisection until the average-power budget is active or
    every positive-slope slot is peak-limited.
    """
    a = coeffs.a
    if p_bar > p_max:
        raise ValueError("p_bar must not exceed p_max")
    if not np.any(a > 0):
        log.warning("all SINR slopes are zero; returning uniform average power")
        return WaterfillResult(
            PowerSchedule(np.full(a.size, p_bar)), None, False, True
        )

    with np.errstate(divide="ignore"):
        inv_a = np.where(a > 0, 1.0 / np.where(a > 0, a, 1.0), np.inf)

    def powers(nu: float) -> np.ndarray:
        return np.clip(nu - inv_a, 0.0, p_max)

    nu_hi = p_max + float(inv_a[np.isfinite(inv_a)].max())
    if powers(nu_hi).mean() <= p_bar:
        # Peak limits bind before the average budget does.
        p = powers(nu_hi)
        return WaterfillResult(PowerSchedule(p), nu_hi, True, False)

    nu_lo = 0.0
    for _ in range(100):
        nu = 0.5 * (nu_lo + nu_hi)
        resid = powers(nu).mean() - p_bar
        if abs(resid) <= 1e-12:
            break
        if resid > 0:
            nu_hi = nu
        else:
            nu_lo = nu
    nu = 0.5 * (nu_lo + nu_hi)
    p = powers(nu)
    # Project the residual bisection slack so the invariants hold exactly.
    mean = p.mean()
    if mean > p_bar and mean > 0:
        p = p * (p_bar / mean)
    p = np.clip(p, 0.0, p_max)
    return WaterfillResult(PowerSchedule(p), nu, False, False)


def power_program(coeffs: SlotSnrCoeff, p_bar: float, p_max: float) -> ConicProgram:
    """The same allocation problem as a conic program (reference route)."""
    N = coeffs.a.size
    prog = ConicProgram("power_allocation")
    p = prog.vector("p", N, nonneg=True)
    prog.subject_to(cp.sum(p) <= N * p_bar, p <= p_max)
    prog.maximize(cp.sum(cp.log1p(cp.multiply(coeffs.a, p))) / (N * np.log(2.0)))
    return prog


def worst_case_rate(
    cfg: SystemConfig,
    trajectory: Trajectory,
    powers: PowerSchedule,
    phases: PhaseSchedule,
) -> float:
    """Average rate with the jammer at its per-slot closest point, bits/s/Hz."""
    a = worst_case_coeffs(cfg, trajectory, phases).a
    return float(np.mean(np.log2(1.0 + powers.p * a)))
