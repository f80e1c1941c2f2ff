"""Line-of-sight channel generation and the achievable average rate.

Every link is deterministic LoS: amplitude sqrt(rho)/d at distance d with
propagation phase -2*pi*d/lambda.  Reflected links go through a uniform
planar array whose steering is parameterized by the direction cosines of
the terminal as seen from the array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import PhaseSchedule, PowerSchedule, SystemConfig, Trajectory, as_xyz

__all__ = [
    "distance",
    "los_scalar",
    "upa_steering",
    "composite_gain",
    "ChannelSet",
    "build_channel_set",
    "slot_gains",
    "average_rate",
]


def distance(a, b) -> float:
    """Euclidean distance between two points."""
    return float(np.linalg.norm(as_xyz(a) - as_xyz(b)))


def los_scalar(tx, rx, rho: float, wavelength: float) -> complex:
    """Scalar LoS channel sqrt(rho)/d * exp(-j*2*pi*d/lambda)."""
    d = distance(tx, rx)
    if d == 0.0:
        raise ValueError("zero-distance link has no defined LoS channel")
    return np.sqrt(rho) / d * np.exp(-2j * np.pi * d / wavelength)


def upa_steering(
    irs,
    target,
    Lx: int,
    Lz: int,
    spacing: float,
    wavelength: float,
    rho: float,
) -> np.ndarray:
    """Reflected-link channel vector between a UPA at `irs` and `target`.

    Returns sqrt(rho)/d * exp(-j*2*pi*d/lambda) * (u_x kron u_z), where the
    per-axis factors use the direction cosines (t - r)/d along x and z and
    entries are ordered x-index major.
    """
    r = as_xyz(irs)
    t = as_xyz(target)
    d = float(np.linalg.norm(t - r))
    if d == 0.0:
        raise ValueError("zero-distance link has no defined steering vector")
    phi_x = (t[0] - r[0]) / d
    phi_z = (t[2] - r[2]) / d
    k = 2.0 * np.pi * spacing / wavelength
    u_x = np.exp(-1j * k * phi_x * np.arange(Lx))
    u_z = np.exp(-1j * k * phi_z * np.arange(Lz))
    return np.sqrt(rho) / d * np.exp(-2j * np.pi * d / wavelength) * np.kron(u_x, u_z)


def composite_gain(
    direct: complex,
    cascade_in: np.ndarray,
    phases: np.ndarray,
    cascade_out: np.ndarray,
) -> float:
    """|direct + sum_i conj(in_i) * e^{j*theta_i} * out_i|^2.

    With cascade_in the GN/jammer-to-IRS channel and cascade_out the
    IRS-to-UAV channel, this is the effective power gain of the
    direct-plus-reflected link under per-element phase shifts.
    """
    cin = np.asarray(cascade_in)
    cout = np.asarray(cascade_out)
    th = np.asarray(phases, dtype=float)
    if not (cin.shape == cout.shape == th.shape):
        raise ValueError(
            f"length mismatch: in {cin.shape}, phases {th.shape}, out {cout.shape}"
        )
    amp = direct + np.sum(np.conj(cin) * np.exp(1j * th) * cout)
    return float(np.abs(amp) ** 2)


@dataclass(frozen=True)
class ChannelSet:
    """All channels seen in one time slot for a given UAV and jammer position."""

    h_gu: complex
    h_mu: complex
    h_ru: np.ndarray
    h_gr: np.ndarray
    h_mr: np.ndarray
    slot: int

    def __post_init__(self) -> None:
        if not (len(self.h_ru) == len(self.h_gr) == len(self.h_mr)):
            raise ValueError("reflected channel vectors must share the array length")


def build_channel_set(cfg: SystemConfig, uav_pos, jammer_pos, slot: int = 0) -> ChannelSet:
    """Assemble the slot channels for explicit UAV and jammer positions."""
    h_gu = los_scalar(cfg.gn_pos, uav_pos, cfg.rho, cfg.wavelength)
    h_mu = los_scalar(jammer_pos, uav_pos, cfg.rho, cfg.wavelength)
    if cfg.L > 0:
        args = (cfg.Lx, cfg.Lz, cfg.elem_spacing, cfg.wavelength, cfg.rho)
        h_ru = upa_steering(cfg.irs_pos, uav_pos, *args)
        h_gr = upa_steering(cfg.irs_pos, cfg.gn_pos, *args)
        h_mr = upa_steering(cfg.irs_pos, jammer_pos, *args)
    else:
        h_ru = h_gr = h_mr = np.zeros(0, dtype=complex)
    return ChannelSet(h_gu=h_gu, h_mu=h_mu, h_ru=h_ru, h_gr=h_gr, h_mr=h_mr, slot=slot)


def slot_gains(cs: ChannelSet, theta: np.ndarray) -> tuple[float, float]:
    """Effective power gains (signal, jamming) for one slot's phase vector."""
    g0 = composite_gain(cs.h_gu, cs.h_gr, theta, cs.h_ru)
    gm = composite_gain(cs.h_mu, cs.h_mr, theta, cs.h_ru)
    return g0, gm


def average_rate(
    cfg: SystemConfig,
    trajectory: Trajectory,
    powers: PowerSchedule,
    phases: PhaseSchedule,
    jammer_pos,
) -> float:
    """Achievable average rate in bits/s/Hz with the jammer at a fixed point.

    (1/N) * sum_n log2(1 + p[n] g0[n] / (p_jam * gm[n] + sigma2)), with the
    slot-n channels evaluated at waypoint q[n].
    """
    if trajectory.N != cfg.N or powers.p.size != cfg.N or phases.theta.shape[0] != cfg.N:
        raise ValueError("schedule dimensions do not match the config")
    total = 0.0
    for n in range(1, cfg.N + 1):
        cs = build_channel_set(cfg, trajectory.points[n], jammer_pos, slot=n)
        g0, gm = slot_gains(cs, phases.theta[n - 1])
        sinr = powers.p[n - 1] * g0 / (cfg.p_jam * gm + cfg.sigma2)
        total += np.log2(1.0 + sinr)
    return total / cfg.N
