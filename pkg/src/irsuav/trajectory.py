"""Trajectory optimization by successive convex approximation.

Each iteration freezes the channel phases at the incumbent trajectory,
factors the slot gains into (channel row) x (inverse-distance vector),
introduces slack variables for the SINR numerator/denominator and the
inverse distances, and maximizes a tangent lower bound of the rate.  The
unknown jammer position enters through a squared-distance slack certified
over the uncertainty ball by an S-procedure matrix inequality.

Every surrogate is expanded around the incumbent with its slack equalities
active, which keeps the incumbent feasible for each subproblem; slack
variables are normalized by their incumbent values, so the solver sees O(1)
data regardless of the physical scales.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import channels, power_alloc
from .convex_backend import ConicProgram, cp, solve
from .scenario import (
    PhaseSchedule,
    PowerSchedule,
    Position3,
    SystemConfig,
    Trajectory,
    UncertaintyRegion,
    closest_point,
    farthest_point,
)

__all__ = [
    "LinearizationPoint",
    "ScaState",
    "TrajectoryOptResult",
    "FrozenSlot",
    "zeta_coefficients",
    "rate_surrogate",
    "build_theta_lmi",
    "xi_tangent",
    "gn_range_sq",
    "irs_range_sq",
    "f2_tangent",
    "linearized_bounds",
    "build_slot_channel_matrices",
    "factored_gain",
    "linearize",
    "initial_state",
    "sca_step",
    "optimize_trajectory",
]

log = logging.getLogger(__name__)

LOG2E = float(np.log2(np.e))

# Far-field floor: the LoS model is referenced to 1 m, so inverse distances
# are never taken closer than that.
MIN_RANGE = 1.0

# Transmit powers below this fraction of the budget contribute no rate and
# are excluded from the slack machinery (their SINR slacks would blow up).
POWER_FLOOR_FRACTION = 1e-12


def zeta_coefficients(S0, G0):
    """Partial derivatives of f(S, G) = log2(1 + 1/(S*G)) at (S0, G0).

    Both are negative: increasing either slack can only reduce the rate.
    """
    S0 = np.asarray(S0, dtype=float)
    G0 = np.asarray(G0, dtype=float)
    if np.any(S0 <= 0) or np.any(G0 <= 0):
        raise ValueError("expansion point must be strictly positive")
    zeta1 = -LOG2E / (S0 + S0**2 * G0)
    zeta2 = -LOG2E / (G0 + G0**2 * S0)
    return zeta1, zeta2


def _rate_of(S, G):
    return np.log2(1.0 + 1.0 / (np.asarray(S, dtype=float) * np.asarray(G, dtype=float)))


def rate_surrogate(S, G, S0, G0):
    """First-order tangent of f(S, G) at (S0, G0); a global lower bound by
    joint convexity of f on the positive orthant."""
    zeta1, zeta2 = zeta_coefficients(S0, G0)
    return _rate_of(S0, G0) + zeta1 * (np.asarray(S) - S0) + zeta2 * (np.asarray(G) - G0)


def xi_tangent(xi, xi0):
    """Tangent of xi^-2 at xi0: a lower bound for xi > 0 by convexity."""
    xi0 = np.asarray(xi0, dtype=float)
    return xi0**-2 - 2.0 * xi0**-3 * (xi - xi0)


def gn_range_sq(x, y, gn_pos: Position3, H_u: float):
    """Squared distance from the waypoint (x, y, H_u) to the ground node."""
    return (x - gn_pos.x) ** 2 + (y - gn_pos.y) ** 2 + (H_u - gn_pos.z) ** 2


def irs_range_sq(x, y, irs_pos: Position3, H_u: float):
    """Squared distance from the waypoint (x, y, H_u) to the IRS."""
    return (x - irs_pos.x) ** 2 + (y - irs_pos.y) ** 2 + (H_u - irs_pos.z) ** 2


def f2_tangent(x, y, x0: float, y0: float, irs_pos: Position3, H_u: float):
    """Tangent of the squared UAV-IRS distance at (x0, y0); a lower bound."""
    return (
        (x0 - irs_pos.x) ** 2
        + 2.0 * (x0 - irs_pos.x) * (x - x0)
        + (y0 - irs_pos.y) ** 2
        + 2.0 * (y0 - irs_pos.y) * (y - y0)
        + (H_u - irs_pos.z) ** 2
    )


def build_theta_lmi(x, y, d, delta, x0: float, y0: float, region: UncertaintyRegion, H_u: float):
    """S-procedure certificate that d lower-bounds the squared distance to
    every jammer position in the uncertainty ball.

    Returns the 4x4 symmetric (affine) matrix that must be PSD.  The
    waypoint's squared coordinates are replaced by their tangents at
    (x0, y0), which shrinks the certified set and keeps the inequality
    sound; at (x, y) = (x0, y0) the matrix equals the exact certificate.
    """
    c = region.center
    e_lin = (
        -(region.radius**2) * delta
        + 2.0 * x0 * x - x0**2 - 2.0 * c.x * x + c.x**2
        + 2.0 * y0 * y - y0**2 - 2.0 * c.y * y + c.y**2
        + H_u**2 - 2.0 * c.z * H_u + c.z**2
        - d
    )
    return cp.bmat(
        [
            [delta + 1.0, 0.0, 0.0, c.x - x],
            [0.0, delta + 1.0, 0.0, c.y - y],
            [0.0, 0.0, delta + 1.0, c.z - H_u],
            [c.x - x, c.y - y, c.z - H_u, e_lin],
        ]
    )


def linearized_bounds(
    x,
    y,
    xi,
    d,
    xi0: np.ndarray,
    x0: float,
    y0: float,
    gn_pos: Position3,
    irs_pos: Position3,
    H_u: float,
) -> list:
    """The four inverse-distance constraint families for one slot.

    xi[0] under-estimates the inverse GN range and xi[1] the inverse IRS
    range (signal side, against tangents of xi^-2); xi[2] over-estimates the
    inverse jammer range through the squared-distance slack d, and xi[3] the
    inverse IRS range (jamming side, against the tangent of the squared
    range).
    """
    xi1, xi2, xi3, xi4 = xi
    return [
        gn_range_sq(x, y, gn_pos, H_u) <= xi_tangent(xi1, xi0[0]),
        irs_range_sq(x, y, irs_pos, H_u) <= xi_tangent(xi2, xi0[1]),
        cp.power(xi3, -2) <= d,
        cp.power(xi4, -2) <= f2_tangent(x, y, x0, y0, irs_pos, H_u),
    ]


# --------------------------------------------------------------------------
# Frozen per-slot channel data and the linearization point
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FrozenSlot:
    """Channel rows frozen at the incumbent waypoint for one slot.

    The factored gains are |H_g . d_g|^2 and |H_m . d_m|^2 with d_g/d_m the
    inverse-distance vectors; at the incumbent these reproduce the composite
    gains of the frozen geometry exactly.
    """

    H_g: np.ndarray  # (2,) complex
    H_m: np.ndarray  # (2,) complex
    dg0: np.ndarray  # (2,) incumbent [1/d_gu, 1/d_ru]
    dm0: np.ndarray  # (2,) incumbent [1/sqrt(d), 1/d_ru]
    active: bool


def factored_gain(H: np.ndarray, dvec) -> float:
    """Gain of a frozen channel row against an inverse-distance vector."""
    return float(np.abs(np.asarray(H) @ np.asarray(dvec, dtype=float)) ** 2)


def _cascade(h_in: np.ndarray, theta: np.ndarray, unit_out: np.ndarray) -> complex:
    return complex(np.sum(np.conj(h_in) * np.exp(1j * theta) * unit_out))


def build_slot_channel_matrices(
    cfg: SystemConfig, theta_n: np.ndarray, uav_prev
) -> tuple[np.ndarray, np.ndarray]:
    """Signal and jamming channel rows frozen at the incumbent waypoint.

    Entries carry the propagation phases of the incumbent geometry and the
    constant terminal-to-IRS channels; the direct jamming phase is taken at
    the ball-closest jammer point and the jamming reflection at the point
    farthest from the IRS, matching the worst-case split used by the
    distance slacks.
    """
    sqr = np.sqrt(cfg.rho)
    d_gu = channels.distance(uav_prev, cfg.gn_pos)
    e1g = sqr * np.exp(-2j * np.pi * d_gu / cfg.wavelength)

    jam_near = closest_point(cfg.jammer.ball(), uav_prev)
    d_mu = max(channels.distance(uav_prev, jam_near), MIN_RANGE)
    e1m = sqr * np.exp(-2j * np.pi * d_mu / cfg.wavelength)

    if cfg.L > 0:
        args = (cfg.Lx, cfg.Lz, cfg.elem_spacing, cfg.wavelength)
        d_ru = channels.distance(uav_prev, cfg.irs_pos)
        unit_ru = channels.upa_steering(cfg.irs_pos, uav_prev, *args, rho=1.0) * d_ru
        h_gr = channels.upa_steering(cfg.irs_pos, cfg.gn_pos, *args, rho=cfg.rho)
        jam_far = farthest_point(cfg.jammer, cfg.irs_pos)
        h_mr = channels.upa_steering(cfg.irs_pos, jam_far, *args, rho=cfg.rho)
        e2g = sqr * _cascade(h_gr, theta_n, unit_ru)
        e2m = sqr * _cascade(h_mr, theta_n, unit_ru)
    else:
        e2g = 0.0j
        e2m = 0.0j
    return np.array([e1g, e2g]), np.array([e1m, e2m])


@dataclass(frozen=True)
class LinearizationPoint:
    """Per-slot expansion point with every slack equality active.

    Derived from the incumbent trajectory alone, so xi0[:, 2]^-2 == d0 and
    S0/G0 match the frozen factored gains exactly.
    """

    x0: np.ndarray
    y0: np.ndarray
    S0: np.ndarray
    G0: np.ndarray
    xi0: np.ndarray  # (N, 4)
    d0: np.ndarray
    delta0: np.ndarray
    slots: tuple[FrozenSlot, ...]

    @property
    def active(self) -> np.ndarray:
        return np.array([fs.active for fs in self.slots])


def linearize(
    cfg: SystemConfig,
    powers: PowerSchedule,
    phases: PhaseSchedule,
    traj: Trajectory,
) -> LinearizationPoint:
    """Freeze channels and activate every slack equality at the incumbent."""
    N = cfg.N
    p_floor = POWER_FLOOR_FRACTION * max(cfg.p_bar, cfg.p_max)
    S0 = np.ones(N)
    G0 = np.ones(N)
    xi0 = np.ones((N, 4))
    d0 = np.ones(N)
    delta0 = np.zeros(N)
    slots = []
    Dm = cfg.jammer.radius
    c = cfg.jammer.center.as_array()
    for n in range(1, N + 1):
        q = traj.points[n]
        theta_n = phases.theta[n - 1]
        H_g, H_m = build_slot_channel_matrices(cfg, theta_n, q)
        d_gu = max(channels.distance(q, cfg.gn_pos), MIN_RANGE)
        d_ru = max(channels.distance(q, cfg.irs_pos), MIN_RANGE)
        jam_near = closest_point(cfg.jammer.ball(), q)
        d_mu = max(channels.distance(q, jam_near), MIN_RANGE)
        dg0 = np.array([1.0 / d_gu, 1.0 / d_ru])
        dm0 = np.array([1.0 / d_mu, 1.0 / d_ru])
        active = bool(powers.p[n - 1] > p_floor)
        fs = FrozenSlot(H_g, H_m, dg0, dm0, active)
        slots.append(fs)

        i = n - 1
        xi0[i] = [dg0[0], dg0[1], dm0[0], dm0[1]]
        d0[i] = d_mu**2
        nrm = float(np.linalg.norm(q - c))
        delta0[i] = max(nrm / Dm - 1.0, 0.0) if Dm > 0 else 0.0
        if active:
            S0[i] = 1.0 / (powers.p[i] * factored_gain(H_g, dg0))
            G0[i] = cfg.p_jam * factored_gain(H_m, dm0) + cfg.sigma2
    return LinearizationPoint(
        x0=traj.points[1:, 0].copy(),
        y0=traj.points[1:, 1].copy(),
        S0=S0,
        G0=G0,
        xi0=xi0,
        d0=d0,
        delta0=delta0,
        slots=tuple(slots),
    )


# --------------------------------------------------------------------------
# SCA state and step
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaState:
    """One SCA iterate: trajectory plus all slack values in physical units."""

    trajectory: Trajectory
    S: np.ndarray
    G: np.ndarray
    xi: np.ndarray  # (N, 4)
    d: np.ndarray
    delta: np.ndarray
    objective: float  # worst-case average rate of this iterate
    surrogate_objective: float
    stalled: bool = False


def initial_state(
    cfg: SystemConfig,
    powers: PowerSchedule,
    phases: PhaseSchedule,
    traj: Trajectory,
) -> ScaState:
    """Seed the SCA at the incumbent with every slack constraint active."""
    lin = linearize(cfg, powers, phases, traj)
    surrogate = float(np.where(lin.active, _rate_of(lin.S0, lin.G0), 0.0).mean())
    objective = power_alloc.worst_case_rate(cfg, traj, powers, phases)
    return ScaState(
        trajectory=traj,
        S=lin.S0,
        G=lin.G0,
        xi=lin.xi0,
        d=lin.d0,
        delta=lin.delta0,
        objective=objective,
        surrogate_objective=surrogate,
    )


def _project_steps(points: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Blend toward the straight line to absorb solver slack in the step caps."""
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    worst = steps.max()
    if worst <= cfg.d_max:
        return points
    if worst > cfg.d_max + 1e-6:
        log.warning("step bound exceeded by %.3e m; projecting", worst - cfg.d_max)
    frac = np.linspace(0.0, 1.0, points.shape[0])[:, None]
    straight = (1.0 - frac) * cfg.q0.as_array() + frac * cfg.qN.as_array()
    base = np.linalg.norm(cfg.qN.as_array() - cfg.q0.as_array()) / cfg.N
    lam = (cfg.d_max - base) / (worst - base) if worst > base else 0.0
    lam = min(max(lam, 0.0), 1.0) * (1.0 - 1e-12)
    return lam * points + (1.0 - lam) * straight


def sca_step(
    cfg: SystemConfig,
    powers: PowerSchedule,
    phases: PhaseSchedule,
    state: ScaState,
    tol: float | None = None,
) -> ScaState:
    """One convex subproblem expanded around the incumbent state.

    The incumbent is feasible for its own surrogate (every bound is tangent
    there), so an infeasible or failed solve is reported through the stall
    flag with the previous state returned unchanged.
    """
    N = cfg.N
    lin = linearize(cfg, powers, phases, state.trajectory)
    active_idx = [i for i, fs in enumerate(lin.slots) if fs.active]
    zhat = -LOG2E / (1.0 + lin.S0 * lin.G0)  # shared coefficient of both scaled slacks

    prog = ConicProgram("trajectory_sca")
    x = prog.vector("x", N)
    y = prog.vector("y", N)
    na = len(active_idx)
    if na:
        s = prog.vector("s", na)
        g = prog.vector("g", na)
        u = [prog.vector(f"u{k + 1}", na) for k in range(4)]
        w = prog.vector("w", na, nonneg=True)
        delta = prog.vector("delta", na, nonneg=True)

    # Mobility and endpoints (altitude is fixed, so steps are planar).
    q0 = cfg.q0.as_array()
    prog.subject_to(
        cp.norm(cp.hstack([x[0] - q0[0], y[0] - q0[1]])) <= cfg.d_max,
        x[N - 1] == cfg.qN.x,
        y[N - 1] == cfg.qN.y,
    )
    for n in range(1, N):
        prog.subject_to(
            cp.norm(cp.hstack([x[n] - x[n - 1], y[n] - y[n - 1]])) <= cfg.d_max
        )

    const_rate = 0.0
    obj_terms = []
    for j, i in enumerate(active_idx):
        fs = lin.slots[i]
        xi0 = lin.xi0[i]
        xv, yv = x[i], y[i]

        # Signal side: tangent of the factored gain against the scaled
        # inverse-distance slacks, feeding the numerator slack S.
        Mg = np.real(np.outer(np.conj(fs.H_g), fs.H_g))
        row = 2.0 * (xi0[:2] * (fs.dg0 @ Mg)) * powers.p[i] * lin.S0[i]
        g00 = float(fs.dg0 @ Mg @ fs.dg0)
        lin_gain = row[0] * u[0][j] + row[1] * u[1][j] - powers.p[i] * lin.S0[i] * g00
        prog.subject_to(cp.inv_pos(s[j]) <= lin_gain)

        # Jamming side: full convex quadratic in the scaled slacks, feeding
        # the denominator slack G.
        Hm_scaled = np.stack(
            [np.real(fs.H_m) * xi0[2:], np.imag(fs.H_m) * xi0[2:]]
        )
        jam = cp.sum_squares(Hm_scaled @ cp.hstack([u[2][j], u[3][j]]))
        prog.subject_to(cfg.p_jam / lin.G0[i] * jam + cfg.sigma2 / lin.G0[i] <= g[j])

        # Inverse-distance families, scaled so every slack sits at 1 at the
        # incumbent (xi0[2]^-2 == d0 by construction).
        prog.subject_to(
            xi0[0] ** 2 * gn_range_sq(xv, yv, cfg.gn_pos, cfg.H_u) <= 3.0 - 2.0 * u[0][j],
            xi0[1] ** 2 * irs_range_sq(xv, yv, cfg.irs_pos, cfg.H_u) <= 3.0 - 2.0 * u[1][j],
            cp.power(u[2][j], -2) <= w[j],
            cp.power(u[3][j], -2)
            <= xi0[3] ** 2 * f2_tangent(xv, yv, lin.x0[i], lin.y0[i], cfg.irs_pos, cfg.H_u),
        )

        # Squared-distance certificate over the jammer ball; a degenerate
        # (radius 0) region gets the plain tangent bound instead, since the
        # multiplier certificate needs an interior point.
        d_expr = lin.d0[i] * w[j]
        if cfg.jammer.radius > 0:
            prog.add_psd(
                build_theta_lmi(
                    xv, yv, d_expr, delta[j], lin.x0[i], lin.y0[i], cfg.jammer, cfg.H_u
                )
            )
        else:
            c = cfg.jammer.center
            tangent = (
                (lin.x0[i] - c.x) ** 2 + 2.0 * (lin.x0[i] - c.x) * (xv - lin.x0[i])
                + (lin.y0[i] - c.y) ** 2 + 2.0 * (lin.y0[i] - c.y) * (yv - lin.y0[i])
                + (cfg.H_u - c.z) ** 2
            )
            prog.subject_to(d_expr <= tangent)

        const_rate += float(_rate_of(lin.S0[i], lin.G0[i]))
        obj_terms.append(zhat[i] * (s[j] - 1.0) + zhat[i] * (g[j] - 1.0))

    objective = const_rate / N
    if obj_terms:
        objective = objective + cp.sum(cp.hstack(obj_terms)) / N
    prog.maximize(objective)

    sol = solve(prog, tol)
    if not sol.is_optimal:
        log.warning("trajectory subproblem %s; keeping incumbent", sol.status)
        return replace(state, stalled=True)

    pts = state.trajectory.points.copy()
    pts[1:, 0] = np.asarray(sol["x"], dtype=float)
    pts[1:, 1] = np.asarray(sol["y"], dtype=float)
    pts[0] = cfg.q0.as_array()
    pts[-1] = cfg.qN.as_array()
    pts[:, 2] = cfg.H_u
    pts = _project_steps(pts, cfg)
    traj = Trajectory(pts)

    S = lin.S0.copy()
    G = lin.G0.copy()
    xi = lin.xi0.copy()
    d = lin.d0.copy()
    delta_out = lin.delta0.copy()
    if na:
        S[active_idx] = lin.S0[active_idx] * np.asarray(sol["s"], dtype=float)
        G[active_idx] = lin.G0[active_idx] * np.asarray(sol["g"], dtype=float)
        for k in range(4):
            xi[active_idx, k] = lin.xi0[active_idx, k] * np.asarray(
                sol[f"u{k + 1}"], dtype=float
            )
        d[active_idx] = lin.d0[active_idx] * np.asarray(sol["w"], dtype=float)
        delta_out[active_idx] = np.asarray(sol["delta"], dtype=float)

    objective_true = power_alloc.worst_case_rate(cfg, traj, powers, phases)
    return ScaState(
        trajectory=traj,
        S=S,
        G=G,
        xi=xi,
        d=d,
        delta=delta_out,
        objective=objective_true,
        surrogate_objective=float(sol.objective),
        stalled=False,
    )


@dataclass(frozen=True)
class TrajectoryOptResult:
    trajectory: Trajectory
    objective: float
    state: ScaState
    surrogate_trace: tuple[float, ...]
    objective_trace: tuple[float, ...]
    iterations: int
    stalled: bool
    states: tuple[ScaState, ...]


def optimize_trajectory(
    cfg: SystemConfig,
    powers: PowerSchedule,
    phases: PhaseSchedule,
    initial: Trajectory,
    max_inner: int = 30,
    tol: float | None = None,
) -> TrajectoryOptResult:
    """Iterate SCA steps until the true objective settles.

    A step is accepted only while the solved surrogate keeps improving
    (re-freezing the channels at each new trajectory can shift the model, so
    a surrogate dip is the natural stopping signal); the recorded surrogate
    trace is therefore non-decreasing.  The returned iterate is the one with
    the best worst-case rate.
    """
    state = initial_state(cfg, powers, phases, initial)
    best = state
    surrogate_trace = [state.surrogate_objective]
    objective_trace = [state.objective]
    states = [state]
    stalled = False
    iterations = 0
    if cfg.N >= 2:
        prev_obj = state.objective
        for iterations in range(1, max_inner + 1):
            new = sca_step(cfg, powers, phases, state, tol)
            if new.stalled:
                stalled = True
                break
            if new.surrogate_objective < surrogate_trace[-1] - 1e-12:
                break
            state = new
            states.append(state)
            surrogate_trace.append(state.surrogate_objective)
            objective_trace.append(state.objective)
            if state.objective > best.objective:
                best = state
            if abs(state.objective - prev_obj) <= cfg.mu2:
                break
            prev_obj = state.objective
    return TrajectoryOptResult(
        trajectory=best.trajectory,
        objective=best.objective,
        state=best,
        surrogate_trace=tuple(surrogate_trace),
        objective_trace=tuple(objective_trace),
        iterations=iterations,
        stalled=stalled,
        states=tuple(states),
    )
