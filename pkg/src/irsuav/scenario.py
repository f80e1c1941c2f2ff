"""Scenario geometry, system configuration, and optimization-variable containers.

Holds the static problem data (node positions, jammer uncertainty region,
power budgets, IRS array geometry) plus the three schedule types that the
optimizer manipulates: the UAV trajectory, the per-slot transmit powers, and
the per-slot IRS phase shifts.  All powers are stored in linear watts; dBm
appears only at the config-file boundary.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "Position3",
    "UncertaintyRegion",
    "SystemConfig",
    "Trajectory",
    "PowerSchedule",
    "PhaseSchedule",
    "dbm_to_watts",
    "watts_to_dbm",
    "validate_config",
    "closest_point",
    "farthest_point",
    "initial_trajectory",
    "uniform_power",
    "zero_phases",
    "load_config",
    "save_config",
    "config_from_dict",
    "config_to_dict",
]


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class Position3:
    """A point in 3-D Cartesian coordinates, in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate in {(self.x, self.y, self.z)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(arr: Sequence[float]) -> "Position3":
        return Position3(float(arr[0]), float(arr[1]), float(arr[2]))


def as_xyz(p) -> np.ndarray:
    """Coerce a Position3 or any length-3 sequence to a float ndarray."""
    if isinstance(p, Position3):
        return p.as_array()
    a = np.asarray(p, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class UncertaintyRegion:
    """Jammer location region: a radius-`radius` ball around `center`,
    restricted to non-negative vertical offsets when `hemisphere_up` is set.
    """

    center: Position3
    radius: float
    hemisphere_up: bool = True

    def contains(self, p, tol: float = 1e-9) -> bool:
        d = as_xyz(p) - self.center.as_array()
        if np.linalg.norm(d) > self.radius + tol:
            return False
        if self.hemisphere_up and d[2] < -tol:
            return False
        return True

    def ball(self) -> "UncertaintyRegion":
        """The same region with the vertical restriction dropped."""
        return replace(self, hemisphere_up=False)


@dataclass(frozen=True)
class SystemConfig:
    """All physical and algorithmic parameters of one scenario.

    Defaults follow the standard evaluation setup: GN at (200,100,0), IRS
    next to the GN, jammer region centered at (250,50,0), UAV flying at
    100 m from (0,0) to (400,200).
    """

    q0: Position3 = Position3(0.0, 0.0, 100.0)
    qN: Position3 = Position3(400.0, 200.0, 100.0)
    gn_pos: Position3 = Position3(200.0, 100.0, 0.0)
    irs_pos: Position3 = Position3(201.0, 100.0, 5.0)
    jammer: UncertaintyRegion = UncertaintyRegion(Position3(250.0, 50.0, 0.0), 20.0)
    H_u: float = 100.0
    N: int = 50
    dt: float = 0.5
    v_max: float = 60.0
    p_bar: float = dbm_to_watts(30.0)
    p_max: float = dbm_to_watts(31.76)
    p_jam: float = dbm_to_watts(30.0)
    rho: float = 1e-3
    sigma2: float = dbm_to_watts(-169.0) * 1e6  # -169 dBm/Hz over 1 MHz
    wavelength: float = 0.1
    elem_spacing: float = 0.05
    Lx: int = 10
    Lz: int = 10
    T_samples: int = 1000
    mu1: float = 1e-3
    mu2: float = 1e-3
    j_max: int = 30
    seed: int = 0
    beta_policy: str = "min"  # amplitude assumed for sampled jammer channels

    @property
    def L(self) -> int:
        return self.Lx * self.Lz

    @property
    def d_max(self) -> float:
        """Maximum flying length per time slot."""
        return self.v_max * self.dt


def validate_config(cfg: SystemConfig) -> list[str]:
    """Check every SystemConfig invariant; returns one message per violation.

    Violations are data, not failures: an empty list means the config is
    usable by every solver in the package.
    """
    v: list[str] = []
    if cfg.N < 1:
        v.append(f"N must be >= 1, got {cfg.N}")
    if cfg.dt <= 0:
        v.append(f"dt must be positive, got {cfg.dt}")
    if cfg.v_max <= 0:
        v.append(f"v_max must be positive, got {cfg.v_max}")
    for name in ("p_bar", "p_max", "p_jam"):
        if getattr(cfg, name) < 0:
            v.append(f"{name} must be non-negative, got {getattr(cfg, name)}")
    if cfg.p_bar <= 0:
        v.append(f"p_bar must be positive, got {cfg.p_bar}")
    if cfg.p_max <= 0:
        v.append(f"p_max must be positive, got {cfg.p_max}")
    if cfg.p_bar > cfg.p_max * (1 + 1e-12):
        v.append("p_bar exceeds p_max")
    if cfg.rho <= 0:
        v.append(f"rho must be positive, got {cfg.rho}")
    if cfg.sigma2 <= 0:
        v.append(f"sigma2 must be positive, got {cfg.sigma2}")
    if cfg.wavelength <= 0:
        v.append(f"wavelength must be positive, got {cfg.wavelength}")
    if cfg.elem_spacing <= 0:
        v.append(f"elem_spacing must be positive, got {cfg.elem_spacing}")
    # Lx = Lz = 0 disables the IRS entirely (the "w/o IRS" baseline).
    if not ((cfg.Lx >= 1 and cfg.Lz >= 1) or (cfg.Lx == 0 and cfg.Lz == 0)):
        v.append(f"Lx, Lz must both be >= 1 (or both 0 for no IRS), got {cfg.Lx}x{cfg.Lz}")
    if cfg.T_samples < 1:
        v.append(f"T_samples must be >= 1, got {cfg.T_samples}")
    if cfg.jammer.radius < 0:
        v.append(f"jammer radius must be >= 0, got {cfg.jammer.radius}")
    if cfg.jammer.center.z < 0:
        v.append(f"jammer center must have z >= 0, got {cfg.jammer.center.z}")
    if cfg.q0.z != cfg.H_u or cfg.qN.z != cfg.H_u:
        v.append("trajectory endpoints must lie at the flight altitude H_u")
    if cfg.N >= 1 and cfg.dt > 0 and cfg.v_max > 0:
        span = float(np.linalg.norm(cfg.qN.as_array() - cfg.q0.as_array()))
        reach = cfg.N * cfg.d_max
        if span > reach * (1 + 1e-12):
            v.append(
                f"endpoints unreachable: |qN - q0| = {span:.3f} m exceeds "
                f"N * v_max * dt = {reach:.3f} m"
            )
    if cfg.mu1 <= 0 or cfg.mu2 <= 0:
        v.append("convergence thresholds mu1, mu2 must be positive")
    if cfg.j_max < 1:
        v.append(f"j_max must be >= 1, got {cfg.j_max}")
    if cfg.beta_policy not in ("min", "max"):
        v.append(f"beta_policy must be 'min' or 'max', got {cfg.beta_policy!r}")
    return v


def closest_point(region: UncertaintyRegion, p) -> Position3:
    """The point of the region closest to `p` (Euclidean projection).

    The region is convex (ball intersected with a half-space), so the
    projection is unique: walk toward `p` inside the ball, and when `p` lies
    below the hemisphere's base plane, project onto the base disk.
    """
    c = region.center.as_array()
    u = as_xyz(p) - c
    r = region.radius
    if r == 0.0:
        return region.center
    if region.hemisphere_up and u[2] < 0.0:
        uxy = u.copy()
        uxy[2] = 0.0
        nrm = np.linalg.norm(uxy)
        if nrm <= r or nrm == 0.0:
            off = uxy
        else:
            off = uxy * (r / nrm)
        return Position3.from_array(c + off)
    nrm = np.linalg.norm(u)
    if nrm <= r:
        return Position3.from_array(c + u)
    return Position3.from_array(c + u * (r / nrm))


def farthest_point(region: UncertaintyRegion, p) -> Position3:
    """The point of the region farthest from `p`.

    Distance is convex, so the maximum sits on an extreme point of the
    region: on the spherical cap, at the antipode of `p`'s direction when
    that is feasible, otherwise on the equatorial rim.
    """
    c = region.center.as_array()
    u = as_xyz(p) - c
    r = region.radius
    if r == 0.0:
        return region.center
    nrm = np.linalg.norm(u)
    if nrm == 0.0:
        # Any cap point is equidistant; pick a deterministic one.
        off = np.array([r, 0.0, 0.0]) if region.hemisphere_up else np.array([0.0, 0.0, -r])
        return Position3.from_array(c + off)
    if region.hemisphere_up and u[2] > 0.0:
        uxy = u.copy()
        uxy[2] = 0.0
        nxy = np.linalg.norm(uxy)
        if nxy == 0.0:
            off = np.array([r, 0.0, 0.0])
        else:
            off = -uxy * (r / nxy)
        return Position3.from_array(c + off)
    return Position3.from_array(c - u * (r / nrm))


@dataclass(frozen=True)
class Trajectory:
    """UAV waypoints q[0..N] at fixed altitude, shape (N+1, 3)."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValueError(f"trajectory needs shape (N+1, 3) with N >= 1, got {pts.shape}")
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.shape[0] - 1

    def violations(self, cfg: SystemConfig, tol: float = 1e-7) -> list[str]:
        v: list[str] = []
        if self.N != cfg.N:
            v.append(f"trajectory has {self.N} slots, config expects {cfg.N}")
            return v
        if not np.allclose(self.points[0], cfg.q0.as_array(), atol=tol):
            v.append("start point differs from q0")
        if not np.allclose(self.points[-1], cfg.qN.as_array(), atol=tol):
            v.append("end point differs from qN")
        if np.any(np.abs(self.points[:, 2] - cfg.H_u) > tol):
            v.append("altitude deviates from H_u")
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        bad = np.nonzero(steps > cfg.d_max + tol)[0]
        for n in bad:
            v.append(f"step {n + 1} length {steps[n]:.6f} exceeds limit {cfg.d_max:.6f}")
        return v


@dataclass(frozen=True)
class PowerSchedule:
    """Per-slot transmit powers in watts, shape (N,)."""

    p: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.p, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError(f"power schedule needs shape (N,), got {arr.shape}")
        object.__setattr__(self, "p", arr)

    def violations(self, cfg: SystemConfig, tol: float = 1e-9) -> list[str]:
        v: list[str] = []
        if self.p.size != cfg.N:
            v.append(f"power schedule has {self.p.size} slots, config expects {cfg.N}")
            return v
        if np.any(self.p < -tol):
            v.append("negative transmit power")
        if np.any(self.p > cfg.p_max + tol):
            v.append("per-slot power exceeds p_max")
        if self.p.mean() > cfg.p_bar + tol:
            v.append("average power exceeds p_bar")
        return v


@dataclass(frozen=True)
class PhaseSchedule:
    """Per-slot IRS phase shifts in radians, shape (N, L), range [0, 2*pi)."""

    theta: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.theta, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"phase schedule needs shape (N, L), got {arr.shape}")
        object.__setattr__(self, "theta", arr)

    def violations(self, cfg: SystemConfig) -> list[str]:
        v: list[str] = []
        if self.theta.shape != (cfg.N, cfg.L):
            v.append(
                f"phase schedule shape {self.theta.shape} differs from ({cfg.N}, {cfg.L})"
            )
            return v
        if self.theta.size and (self.theta.min() < 0.0 or self.theta.max() >= 2.0 * np.pi):
            v.append("phases outside [0, 2*pi)")
        return v


def initial_trajectory(cfg: SystemConfig) -> Trajectory:
    """Straight line from q0 to qN in N equal steps."""
    frac = np.linspace(0.0, 1.0, cfg.N + 1)[:, None]
    pts = (1.0 - frac) * cfg.q0.as_array() + frac * cfg.qN.as_array()
    return Trajectory(pts)


def uniform_power(cfg: SystemConfig) -> PowerSchedule:
    return PowerSchedule(np.full(cfg.N, min(cfg.p_bar, cfg.p_max)))


def zero_phases(cfg: SystemConfig) -> PhaseSchedule:
    return PhaseSchedule(np.zeros((cfg.N, cfg.L)))


# --------------------------------------------------------------------------
# Config file boundary.  JSON schema mirrors the SystemConfig field names;
# powers may be given in watts or with a `_dbm` suffix, and the noise floor
# may be given as a PSD (`noise_psd_dbm_hz` plus `bandwidth_hz`).
# --------------------------------------------------------------------------

_POWER_FIELDS = ("p_bar", "p_max", "p_jam")


def config_from_dict(data: dict) -> SystemConfig:
    d = dict(data)
    kwargs = {}

    def pos(key, default):
        if key in d:
            return Position3.from_array(d.pop(key))
        return default

    base = SystemConfig()
    kwargs["q0"] = pos("q0", base.q0)
    kwargs["qN"] = pos("qN", base.qN)
    kwargs["gn_pos"] = pos("gn_pos", base.gn_pos)
    kwargs["irs_pos"] = pos("irs_pos", base.irs_pos)

    center = pos("jammer_center", base.jammer.center)
    radius = float(d.pop("jammer_radius", base.jammer.radius))
    hemi = bool(d.pop("jammer_hemisphere_up", base.jammer.hemisphere_up))
    kwargs["jammer"] = UncertaintyRegion(center, radius, hemi)

    for name in _POWER_FIELDS:
        if f"{name}_dbm" in d:
            kwargs[name] = dbm_to_watts(float(d.pop(f"{name}_dbm")))
            d.pop(name, None)
        elif name in d:
            kwargs[name] = float(d.pop(name))

    if "sigma2_dbm" in d:
        kwargs["sigma2"] = dbm_to_watts(float(d.pop("sigma2_dbm")))
        d.pop("noise_psd_dbm_hz", None)
        d.pop("bandwidth_hz", None)
    elif "noise_psd_dbm_hz" in d:
        psd = float(d.pop("noise_psd_dbm_hz"))
        bw = float(d.pop("bandwidth_hz", 1e6))
        kwargs["sigma2"] = dbm_to_watts(psd) * bw
    elif "sigma2" in d:
        kwargs["sigma2"] = float(d.pop("sigma2"))

    for name in ("H_u", "dt", "v_max", "rho", "wavelength", "elem_spacing", "mu1", "mu2"):
        if name in d:
            kwargs[name] = float(d.pop(name))
    for name in ("N", "Lx", "Lz", "T_samples", "j_max", "seed"):
        if name in d:
            kwargs[name] = int(d.pop(name))
    if "beta_policy" in d:
        kwargs["beta_policy"] = str(d.pop("beta_policy"))

    if d:
        raise ValueError(f"unknown config keys: {sorted(d)}")
    return SystemConfig(**kwargs)


def config_to_dict(cfg: SystemConfig) -> dict:
    return {
        "q0": list(cfg.q0.as_array()),
        "qN": list(cfg.qN.as_array()),
        "gn_pos": list(cfg.gn_pos.as_array()),
        "irs_pos": list(cfg.irs_pos.as_array()),
        "jammer_center": list(cfg.jammer.center.as_array()),
        "jammer_radius": cfg.jammer.radius,
        "jammer_hemisphere_up": cfg.jammer.hemisphere_up,
        "H_u": cfg.H_u,
        "N": cfg.N,
        "dt": cfg.dt,
        "v_max": cfg.v_max,
        "p_bar_dbm": watts_to_dbm(cfg.p_bar),
        "p_max_dbm": watts_to_dbm(cfg.p_max),
        "p_jam_dbm": watts_to_dbm(cfg.p_jam) if cfg.p_jam > 0 else None,
        "rho": cfg.rho,
        "sigma2": cfg.sigma2,
        "wavelength": cfg.wavelength,
        "elem_spacing": cfg.elem_spacing,
        "Lx": cfg.Lx,
        "Lz": cfg.Lz,
        "T_samples": cfg.T_samples,
        "mu1": cfg.mu1,
        "mu2": cfg.mu2,
        "j_max": cfg.j_max,
        "seed": cfg.seed,
        "beta_policy": cfg.beta_policy,
    }


def load_config(path: str | os.PathLike) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return config_from_dict(data)


def save_config(cfg: SystemConfig, path: str | os.PathLike) -> None:
    d = config_to_dict(cfg)
    if d.get("p_jam_dbm") is None:
        del d["p_jam_dbm"]
        d["p_jam"] = cfg.p_jam
    with open(path, "w", encoding="utf-8") as f:
        json.dump(d, f, indent=2, sort_keys=True)
        f.write("\n")
