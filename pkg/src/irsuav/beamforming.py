"""Robust per-slot passive beamforming.

The jammer's unknown location is handled by sampling its cascaded channel
over the uncertainty hemisphere, forming a convex hull of the sampled outer
products, and alternating between a Cauchy-Schwarz hull-weight update and a
semidefinite relaxation of the per-slot SINR maximization.  Rank-1 designs
are recovered by eigendecomposition or Gaussian randomization.

Convention: the lifted phase vector is v = [e^{j*theta}; 1] and every
stacked channel w satisfies w^H v = direct + sum_i conj(in_i) e^{j*theta_i}
out_i, so SINR(v) = v^H A v / (v^H B v + sigma2) with A, B built from outer
products of stacked vectors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import channels
from .convex_backend import ConicProgram, ConicSolution, cp, solve, trace_inner
from .scenario import SystemConfig, closest_point, farthest_point

__all__ = [
    "JammerSampleSet",
    "SlotSdpData",
    "SlotPhaseResult",
    "SlotSolverError",
    "lifted_vector",
    "stacked_channel",
    "hemisphere_offsets",
    "sample_jammer_channels",
    "cauchy_weights",
    "slot_sdp_data",
    "build_slot_sdp",
    "solve_slot_sdp",
    "recover_phases",
    "slot_phase_sinr",
    "hull_worst_sinr",
    "optimize_slot_phases",
]

log = logging.getLogger(__name__)

RANK1_EIGENVALUE_RATIO = 1e-6
DEFAULT_RANDOMIZATIONS = 200
MAX_WEIGHT_UPDATES = 30


class SlotSolverError(RuntimeError):
    """Raised when a slot subproblem cannot be solved; carries the slot index."""

    def __init__(self, slot: int, detail: str) -> None:
        super().__init__(f"slot {slot}: {detail}")
        self.slot = slot


def lifted_vector(theta: np.ndarray) -> np.ndarray:
    """[e^{j*theta_1}, ..., e^{j*theta_L}, 1]."""
    return np.concatenate([np.exp(1j * np.asarray(theta, dtype=float)), [1.0]])


def stacked_channel(direct: complex, cascade_in: np.ndarray, cascade_out: np.ndarray) -> np.ndarray:
    """Stack a direct term and cascade so that w^H v recovers the composite
    amplitude of :func:`channels.composite_gain` for v = lifted_vector(theta)."""
    return np.concatenate(
        [np.asarray(cascade_in) * np.conj(np.asarray(cascade_out)), [np.conj(direct)]]
    )


def hemisphere_offsets(T: int, radius: float, upper: bool = True) -> np.ndarray:
    """T deterministic low-discrepancy offsets covering the uncertainty region.

    Golden-angle directions on the (half-)sphere with cube-root radial
    scaling, so coverage is roughly uniform in volume and reproducible
    without an RNG.
    """
    if T < 1:
        raise ValueError("need at least one sample")
    t = np.arange(1, T + 1)
    frac = (t - 0.5) / T
    z = frac if upper else 2.0 * frac - 1.0
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    ang = 2.0 * np.pi * t / golden**2
    rxy = np.sqrt(np.maximum(0.0, 1.0 - z**2))
    dirs = np.stack([rxy * np.cos(ang), rxy * np.sin(ang), z], axis=1)
    r = radius * (t / T) ** (1.0 / 3.0)
    return dirs * r[:, None]


@dataclass(frozen=True)
class JammerSampleSet:
    """Sampled cascaded jammer channels with convex-hull weights.

    `samples[t]` is the stacked length-(L+1) vector for the t-th sampled
    jammer position (no jammer power applied); `alpha` lives on the simplex.
    """

    samples: np.ndarray  # (T, L+1) complex
    alpha: np.ndarray  # (T,)

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=complex)
        a = np.asarray(self.alpha, dtype=float)
        if s.ndim != 2 or a.shape != (s.shape[0],):
            raise ValueError("samples must be (T, L+1) with matching weights")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "alpha", a)

    def violations(self) -> list[str]:
        v = []
        if np.any(self.alpha < -1e-12):
            v.append("negative hull weight")
        if abs(self.alpha.sum() - 1.0) > 1e-9:
            v.append(f"hull weights sum to {self.alpha.sum()}, expected 1")
        return v


def _unit_steering(cfg: SystemConfig, target) -> np.ndarray:
    """Steering vector with unit-amplitude entries (propagation phase kept)."""
    d = channels.distance(cfg.irs_pos, target)
    return channels.upa_steering(
        cfg.irs_pos, target, cfg.Lx, cfg.Lz, cfg.elem_spacing, cfg.wavelength, rho=1.0
    ) * d


def _beta_bounds(cfg: SystemConfig, terminal) -> tuple[float, float]:
    """(beta_min, beta_max): path-loss amplitude bounds from the region to a point."""
    d_far = channels.distance(farthest_point(cfg.jammer, terminal), terminal)
    d_near = channels.distance(closest_point(cfg.jammer, terminal), terminal)
    beta_min = np.sqrt(cfg.rho) / max(d_far, 1.0)
    beta_max = np.sqrt(cfg.rho) / max(d_near, 1.0)
    return beta_min, beta_max


def sample_jammer_channels(
    cfg: SystemConfig, uav_pos, h_ru: np.ndarray, T: int | None = None
) -> JammerSampleSet:
    """Draw T cascaded-channel samples over the jammer uncertainty region.

    Each sample carries the steering phases of its sampled position while
    the amplitudes are pinned to the configured path-loss bound (`min`
    policy keeps the far-side amplitude, `max` the near-side one); weights
    start uniform.
    """
    if T is None:
        T = cfg.T_samples
    if T < 1:
        raise ValueError("need at least one hull sample")
    region = cfg.jammer
    offsets = hemisphere_offsets(T, region.radius, upper=region.hemisphere_up)
    positions = region.center.as_array()[None, :] + offsets

    idx = 0 if cfg.beta_policy == "min" else 1
    beta_mu = _beta_bounds(cfg, uav_pos)[idx]
    beta_mr = _beta_bounds(cfg, cfg.irs_pos)[idx]

    uav = np.asarray(uav_pos, dtype=float) if not hasattr(uav_pos, "as_array") else uav_pos.as_array()
    samples = np.empty((T, cfg.L + 1), dtype=complex)
    for t in range(T):
        pos = positions[t]
        d_mu = float(np.linalg.norm(uav - pos))
        h_mu = beta_mu * np.exp(-2j * np.pi * d_mu / cfg.wavelength)
        if cfg.L > 0:
            h_mr = beta_mr * _unit_steering(cfg, pos)
        else:
            h_mr = np.zeros(0, dtype=complex)
        samples[t] = stacked_channel(h_mu, h_mr, h_ru)
    return JammerSampleSet(samples, np.full(T, 1.0 / T))


def cauchy_weights(sample_gains: np.ndarray) -> np.ndarray:
    """Hull weights proportional to the per-sample gains |w_t^H v|^2.

    This is the equality condition of the Cauchy-Schwarz bound on the
    weighted gain sum; degenerate all-zero gains fall back to uniform.
    """
    g = np.asarray(sample_gains, dtype=float)
    if np.any(g < 0):
        raise ValueError("sample gains must be non-negative")
    total = g.sum()
    if total <= 0.0:
        log.warning("all sample gains are zero; using uniform hull weights")
        return np.full(g.size, 1.0 / g.size)
    return g / total


@dataclass(frozen=True)
class SlotSdpData:
    """Numerator/denominator matrices of one slot's SINR quadratic fraction."""

    A: np.ndarray
    B: np.ndarray
    sigma2: float

    def sinr(self, v: np.ndarray) -> float:
        num = float(np.real(np.conj(v) @ self.A @ v))
        den = float(np.real(np.conj(v) @ self.B @ v)) + self.sigma2
        return num / den


def slot_sdp_data(
    w_g: np.ndarray, sample_set: JammerSampleSet, p_jam: float, sigma2: float
) -> SlotSdpData:
    A = np.outer(w_g, np.conj(w_g))
    w = sample_set.samples
    B = p_jam * np.einsum("t,ti,tj->ij", sample_set.alpha, w, np.conj(w))
    return SlotSdpData(A, B, sigma2)


def build_slot_sdp(
    w_g: np.ndarray,
    sample_set: JammerSampleSet,
    sigma2: float,
    p_jam: float = 1.0,
) -> ConicProgram:
    """Relaxed slot problem: maximize tr(A V) over unit-diagonal PSD V after
    the fractional objective is flattened by the substitution V~ = k V,
    k = 1/(tr(B V) + sigma2).

    Data is rescaled so the optimum is O(1); `meta['sinr_scale']` converts
    the solved objective back to a SINR.
    """
    data = slot_sdp_data(w_g, sample_set, p_jam, sigma2)
    n = data.A.shape[0]
    den_scale = max(np.abs(data.B).max(), data.sigma2)
    num_scale = max(np.abs(data.A).max(), den_scale * 1e-12)
    A = data.A / num_scale
    B = data.B / den_scale
    s2 = data.sigma2 / den_scale

    prog = ConicProgram("slot_beamforming_sdp")
    V = prog.hermitian_psd("V_tilde", n)
    k = prog.scalar("k", nonneg=True)
    prog.subject_to(
        cp.diag(cp.real(V)) == k * np.ones(n),
        trace_inner(B, V) + k * s2 == 1,
    )
    prog.maximize(trace_inner(A, V))
    prog.meta["sinr_scale"] = num_scale / den_scale
    prog.meta["dim"] = n
    return prog


def solve_slot_sdp(
    w_g: np.ndarray,
    sample_set: JammerSampleSet,
    sigma2: float,
    p_jam: float = 1.0,
    tol: float | None = None,
) -> tuple[np.ndarray, float, ConicSolution]:
    """Solve the relaxation; returns (V with unit diagonal, SINR bound, solution)."""
    prog = build_slot_sdp(w_g, sample_set, sigma2, p_jam)
    sol = solve(prog, tol)
    if not sol.is_optimal:
        raise SlotSolverError(-1, f"SDP relaxation returned {sol.status}")
    k = sol["k"]
    if k <= 0:
        raise SlotSolverError(-1, "relaxation returned a non-positive scale factor")
    V = np.asarray(sol["V_tilde"]) / k
    V = 0.5 * (V + V.conj().T)
    return V, sol.objective * prog.meta["sinr_scale"], sol


def recover_phases(
    V: np.ndarray,
    randomization_count: int = DEFAULT_RANDOMIZATIONS,
    data: SlotSdpData | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Extract per-element phases from a relaxed solution V.

    Near-rank-1 V yields the dominant eigenvector directly; otherwise
    Gaussian candidates drawn from V are projected to unit modulus and the
    best SINR (which requires `data`) wins.  Phases come from the entry
    ratios against the final reference entry, so the extraction is invariant
    to the global phase of v.
    """
    V = np.asarray(V, dtype=complex)
    n = V.shape[0]
    lam, U = np.linalg.eigh(0.5 * (V + V.conj().T))
    if lam[-1] <= 0:
        raise ValueError("relaxation solution is not PSD")
    if lam.size > 1 and lam[-2] < -1e-8 * lam[-1]:
        raise ValueError("relaxation solution is not PSD")

    def phases_of(v: np.ndarray) -> np.ndarray:
        ref = v[-1]
        if ref == 0:
            ref = 1.0
        return np.mod(np.angle(v[:-1] / ref), 2.0 * np.pi)

    dominant = U[:, -1] * np.sqrt(lam[-1])
    if lam.size == 1 or lam[-2] / lam[-1] <= RANK1_EIGENVALUE_RATIO:
        return phases_of(dominant)

    if data is None:
        raise ValueError("higher-rank recovery needs the slot SINR data")
    if rng is None:
        rng = np.random.default_rng(0)
    half = U @ np.diag(np.sqrt(np.maximum(lam, 0.0)))
    candidates = [phases_of(dominant)]
    g = rng.standard_normal((randomization_count, n)) + 1j * rng.standard_normal(
        (randomization_count, n)
    )
    for i in range(randomization_count):
        candidates.append(phases_of(half @ g[i]))
    best = max(candidates, key=lambda th: data.sinr(lifted_vector(th)))
    return best


def slot_phase_sinr(data: SlotSdpData, theta: np.ndarray) -> float:
    """SINR of a unit-modulus design against hull-weighted jamming."""
    return data.sinr(lifted_vector(theta))


def hull_worst_sinr(
    w_g: np.ndarray,
    sample_set: JammerSampleSet,
    sigma2: float,
    p_jam: float,
    theta: np.ndarray,
) -> float:
    """SINR against the worst hull member, which sits at a vertex: the
    denominator is linear in the weights, so the minimum SINR pins the whole
    weight on the strongest sampled jammer."""
    v = lifted_vector(theta)
    num = float(np.abs(np.conj(w_g) @ v) ** 2)
    gains = np.abs(sample_set.samples.conj() @ v) ** 2
    return num / (p_jam * float(gains.max(initial=0.0)) + sigma2)


@dataclass(frozen=True)
class SlotPhaseResult:
    theta: np.ndarray
    worst_case_sinr: float
    sdp_objective: float
    rate_trace: tuple[float, ...]
    alpha: np.ndarray
    inner_iterations: int


def optimize_slot_phases(
    cfg: SystemConfig,
    uav_pos,
    slot: int,
    p_n: float,
    T: int | None = None,
    max_inner: int = MAX_WEIGHT_UPDATES,
    randomizations: int = DEFAULT_RANDOMIZATIONS,
    tol: float | None = None,
    seed: int | None = None,
) -> SlotPhaseResult:
    """Alternate hull-weight updates with the SDP relaxation for one slot.

    Starts from the all-ones lifted vector, stops once the per-slot rate
    changes by at most mu1 (or after `max_inner` rounds), and returns the
    iterate with the best worst-case SINR over the hull.  The weight update
    and the relaxation optimize in opposing directions, so the loop is
    guarded rather than trusted to be monotone.
    """
    if cfg.L == 0:
        raise ValueError("no IRS elements to optimize")
    h_gu = channels.los_scalar(cfg.gn_pos, uav_pos, cfg.rho, cfg.wavelength)
    args = (cfg.Lx, cfg.Lz, cfg.elem_spacing, cfg.wavelength, cfg.rho)
    h_ru = channels.upa_steering(cfg.irs_pos, uav_pos, *args)
    h_gr = channels.upa_steering(cfg.irs_pos, cfg.gn_pos, *args)
    w_g = np.sqrt(p_n) * stacked_channel(h_gu, h_gr, h_ru)
    samples = sample_jammer_channels(cfg, uav_pos, h_ru, T)

    rng = np.random.default_rng(cfg.seed + 7919 * slot if seed is None else seed)
    v = lifted_vector(np.zeros(cfg.L))
    theta = np.zeros(cfg.L)
    best_theta = theta
    best_wc = hull_worst_sinr(w_g, samples, cfg.sigma2, cfg.p_jam, theta)
    rate_prev = 0.0
    trace: list[float] = []
    sdp_obj = np.nan
    alpha = samples.alpha
    iterations = 0

    for iterations in range(1, max_inner + 1):
        gains = np.abs(samples.samples.conj() @ v) ** 2
        alpha = cauchy_weights(gains)
        samples = replace(samples, alpha=alpha)
        try:
            V, sdp_obj, _ = solve_slot_sdp(w_g, samples, cfg.sigma2, cfg.p_jam, tol)
        except SlotSolverError as exc:
            raise SlotSolverError(slot, str(exc)) from exc
        data = slot_sdp_data(w_g, samples, cfg.p_jam, cfg.sigma2)
        theta = recover_phases(V, randomizations, data, rng)
        v = lifted_vector(theta)

        wc = hull_worst_sinr(w_g, samples, cfg.sigma2, cfg.p_jam, theta)
        if wc > best_wc:
            best_wc = wc
            best_theta = theta
        rate = float(np.log2(1.0 + slot_phase_sinr(data, theta)))
        trace.append(rate)
        if abs(rate - rate_prev) <= cfg.mu1:
            break
        rate_prev = rate

    return SlotPhaseResult(
        theta=best_theta,
        worst_case_sinr=best_wc,
        sdp_objective=float(sdp_obj),
        rate_trace=tuple(trace),
        alpha=alpha,
        inner_iterations=iterations,
    )
