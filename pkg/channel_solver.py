"""Transient plane shear flow u(y, t) between walls at y = -h and y = h.

Finite volumes: N cells of width dy = 2h/N carry the velocity at their
centres, the shear stress S_12 lives on the N + 1 faces. Interior face
stresses come from the regularized law at the face shear rate; each wall face
closes the flux with the friction condition S_12 n + grad g(u_wall) = 0, where
u_wall = u_cell +/- (dy/2) g. Time stepping is explicit Euler; ``solve_steady``
returns its fixed point directly.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from config import TOLERANCES, ChannelConfig, FluidParams
from constitutive import flow_criterion, shear_yield_stress, stress_regularized
from errors import CFLViolation, Diverged, InvalidParameters
from subdiff_geometry import plug_mask
from tensor_core import spin


class BoundaryFunction(Protocol):
    """Convex wall potential g(v) of the friction condition."""

    def value(self, v: np.ndarray) -> np.ndarray: ...

    def gradient(self, v: np.ndarray) -> np.ndarray: ...

    def curvature(self, v: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class NavierFriction:
    """g(v) = alpha |v|^2 / 2; alpha = 1e8 stands in for no-slip."""

    alpha: float

    def value(self, v):
        return 0.5 * self.alpha * np.square(v)

    def gradient(self, v):
        return self.alpha * np.asarray(v)

    def curvature(self, v):
        return np.full_like(np.asarray(v, dtype=np.float64), self.alpha)


def assemble_shear_stress(u_y, omega, params: FluidParams, reg_n: float):
    """S^n_12 for the simple shear gradient B = [[0, u_y], [0, 0]]."""
    g = np.asarray(u_y, dtype=np.float64)
    B = np.zeros(g.shape + (2, 2))
    B[..., 0, 1] = g
    S12 = stress_regularized(B, omega, params, reg_n)[..., 0, 1]
    return float(S12) if S12.ndim == 0 else S12


def effective_viscosity(params: FluidParams) -> float:
    """Shear viscosity of the viscous part for p = 2, (mu1 + mu2)/2."""
    return 0.5 * (params.mu1 + params.mu2)


def coupling_reg_n(config: ChannelConfig, tau_yield: float) -> int:
    """Regularization level that keeps the plug boundary layer below the cell size."""
    if tau_yield == 0:
        return 1
    dy = 2.0 * config.half_width / config.cells
    forcing = abs(config.body_force) or tau_yield / config.half_width
    ratio = tau_yield / (effective_viscosity(config.params) * dy * forcing)
    return int(min(1e12, max(1.0, math.ceil(TOLERANCES.coupling_factor * ratio ** 2))))


def invert_increasing(f: Callable[[float], float], target: float, scale: float = 1.0) -> float:
    """x with f(x) = target for a continuous increasing f; the bracket grows by doubling."""
    lo, hi = -scale, scale
    while f(lo) > target:
        lo *= 2.0
        if lo < -1e15:
            raise InvalidParameters(f"no preimage of {target!r} below -1e15")
    while f(hi) < target:
        hi *= 2.0
        if hi > 1e15:
            raise InvalidParameters(f"no preimage of {target!r} above 1e15")
    return brentq(lambda x: f(x) - target, lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps)


def channel_plug_tolerance(params: FluidParams, reg_n: float, tau_yield: float, omega_rate: float = 0.0) -> float:
    """|B_nu| at the shear rate where the regularized shear stress rises tau_yield above its zero-rate value."""
    floor = TOLERANCES.channel_plug_floor
    if tau_yield == 0:
        return floor
    omega = spin(omega_rate, 2)
    offset = assemble_shear_stress(0.0, omega, params, reg_n)
    try:
        g_star = invert_increasing(lambda g: assemble_shear_stress(g, omega, params, reg_n) - offset, tau_yield)
    except InvalidParameters:
        raise InvalidParameters("regularized shear stress never reaches the yield stress")
    B = np.array([[0.0, g_star], [0.0, 0.0]])
    return max(floor, float(flow_criterion(B, omega, params)))


def face_omega_rates(config: ChannelConfig) -> np.ndarray:
    """Spin rates on the cells + 1 faces.

    A per-cell profile (cells values) is interpolated linearly between cell
    centres and held constant from the outermost centres to the walls.
    """
    n = config.cells
    rates = np.asarray(config.omega, dtype=np.float64)
    if rates.ndim == 0 or rates.size == n + 1:
        return np.broadcast_to(rates, (n + 1,)).copy()
    dy = 2.0 * config.half_width / n
    centres = -config.half_width + (np.arange(n) + 0.5) * dy
    faces = -config.half_width + np.arange(n + 1) * dy
    return np.interp(faces, centres, rates)


def poiseuille_reference(y: np.ndarray, config: ChannelConfig) -> np.ndarray:
    """Analytic steady profile for p = 2 and omega = 0, including wall slip.

    The shear law reduces to S_12 = mu_eff u_y + tau_y sign(u_y), so the fluid
    is rigid where |G y| <= tau_y.
    """
    params = config.params
    if params.p != 2 or np.any(np.asarray(config.omega) != 0):
        raise InvalidParameters("the analytic channel profile needs p = 2 and omega = 0")
    y = np.asarray(y, dtype=np.float64)
    G, h = config.body_force, config.half_width
    tau_y = shear_yield_stress(params)
    mu_eff = effective_viscosity(params)
    slip = abs(G) * h / config.friction if config.friction > 0 else 0.0
    if G == 0:
        return np.zeros_like(y)
    y_c = min(tau_y / abs(G), h)
    core = (h - y_c) ** 2 - (np.maximum(np.abs(y), y_c) - y_c) ** 2
    return np.sign(G) * (slip + abs(G) / (2.0 * mu_eff) * core)


@dataclass
class ChannelState:
    t: float
    u: np.ndarray
    g_wall: np.ndarray  # shear rate at (bottom, top) wall faces
    step: int = 0
    face_rate: Optional[np.ndarray] = None
    face_stress: Optional[np.ndarray] = None


@dataclass
class StepBalance:
    kinetic_before: float
    kinetic_after: float
    dissipation: float
    boundary_work: float
    forcing_work: float
    max_rate: float

    @property
    def residual(self) -> float:
        return abs(self.kinetic_after - self.kinetic_before + self.dissipation
                   + self.boundary_work - self.forcing_work)


@dataclass
class EnergyLedger:
    """Discrete energy balance K' + D + B - F, aggregated every ``every`` steps."""

    every: int = 1
    rows: List[dict] = field(default_factory=list)
    cumulative_residual: float = 0.0
    _open: Optional[dict] = None

    def add(self, t: float, step: int, balance: StepBalance) -> None:
        if self._open is None:
            self._open = {"kinetic_start": balance.kinetic_before, "dissipation": 0.0,
                          "boundary_work": 0.0, "forcing_work": 0.0,
                          "max_step_residual": 0.0, "min_step_dissipation": math.inf, "steps": 0}
        acc = self._open
        acc["dissipation"] += balance.dissipation
        acc["boundary_work"] += balance.boundary_work
        acc["forcing_work"] += balance.forcing_work
        acc["max_step_residual"] = max(acc["max_step_residual"], balance.residual)
        acc["min_step_dissipation"] = min(acc["min_step_dissipation"], balance.dissipation)
        acc["steps"] += 1
        self.cumulative_residual += balance.residual
        if acc["steps"] >= self.every:
            self.close(t, step, balance.kinetic_after)

    def close(self, t: float, step: int, kinetic: float) -> None:
        acc = self._open
        if acc is None:
            return
        residual = abs(kinetic - acc["kinetic_start"] + acc["dissipation"]
                       + acc["boundary_work"] - acc["forcing_work"])
        self.rows.append({
            "t": t, "step": step, "kinetic": kinetic,
            "dissipation": acc["dissipation"], "boundary_work": acc["boundary_work"],
            "forcing_work": acc["forcing_work"], "residual": residual,
            "max_step_residual": acc["max_step_residual"],
            "min_step_dissipation": acc["min_step_dissipation"],
            "cumulative_residual": self.cumulative_residual,
        })
        self._open = None

    def to_frame(self) -> pd.DataFrame:
        columns = ["t", "step", "kinetic", "dissipation", "boundary_work", "forcing_work",
                   "residual", "max_step_residual", "min_step_dissipation", "cumulative_residual"]
        return pd.DataFrame(self.rows, columns=columns)


@dataclass
class ChannelRun:
    state: ChannelState
    ledger: EnergyLedger
    steady: bool
    profile: pd.DataFrame
    plug_intervals: List[Tuple[float, float]]
    reg_n: int
    dt: float
    plug_tolerance: float

    @property
    def plug_half_width(self) -> float:
        return central_plug_half_width(self.plug_intervals)


def central_plug_half_width(intervals: List[Tuple[float, float]]) -> float:
    """Half length of the plug interval containing the centreline, 0 if none."""
    for lo, hi in intervals:
        if lo <= 0.0 <= hi:
            return 0.5 * (hi - lo)
    return 0.0


class ChannelSolver:
    def __init__(self, config: ChannelConfig, boundary: BoundaryFunction = None):
        self.config = config
        self.params = config.params
        self.h = config.half_width
        self.N = config.cells
        self.dy = 2.0 * self.h / self.N
        self.y = -self.h + (np.arange(self.N) + 0.5) * self.dy
        self.y_faces = -self.h + np.arange(self.N + 1) * self.dy
        self.boundary = boundary if boundary is not None else NavierFriction(config.friction)

        rates = face_omega_rates(config)
        self.omega_faces = spin(rates, 2)
        self.omega_cells = 0.5 * (self.omega_faces[:-1] + self.omega_faces[1:])
        self._omega_eval = np.concatenate([
            self.omega_faces[1:-1],
            self.omega_faces[[0, -1, 0, -1]],
        ])

        cell_rates = self.omega_cells[:, 0, 1]
        spins = np.unique(np.concatenate([rates, cell_rates]))
        thresholds = {w: shear_yield_stress(self.params, w) for w in spins}
        self.tau_yield = max(thresholds.values())
        self.reg_n = config.reg_n if config.reg_n is not None else coupling_reg_n(config, self.tau_yield)
        tolerances = {w: channel_plug_tolerance(self.params, self.reg_n, tau, w) for w, tau in thresholds.items()}
        self.plug_tol_cells = np.array([tolerances[w] for w in cell_rates])
        self.plug_tol = float(self.plug_tol_cells.max())
        self.dt = self._resolve_dt()
        logging.info(f"🚀 Channel solver ready: N={self.N}, dy={self.dy:.4g}, dt={self.dt:.4g}, "
                     f"reg_n={self.reg_n}, tau_yield={self.tau_yield:.4g}")

    def shear_stress(self, g, omega=None):
        return assemble_shear_stress(g, self.omega_faces[0] if omega is None else omega, self.params, self.reg_n)

    def _max_shear_rate(self) -> float:
        rates = np.linspace(-1.0, 1.0, 3)
        base = np.max(np.abs(assemble_shear_stress(np.zeros(len(self.omega_faces)), self.omega_faces,
                                                   self.params, self.reg_n)))
        target = 2.0 * abs(self.config.body_force) * self.h + 2.0 * self.tau_yield + base
        g = 1.0
        while True:
            signed = assemble_shear_stress(np.repeat(g * rates[[0, 2]], len(self.omega_faces)),
                                           np.tile(self.omega_faces, (2, 1, 1)), self.params, self.reg_n)
            if np.min(np.abs(signed)) >= target or g > 1e12:
                return g
            g *= 2.0

    def max_tangent_viscosity(self) -> float:
        """Largest slope dS_12/du_y over the shear rates the run can reach."""
        g_max = self._max_shear_rate()
        ladder = g_max * np.logspace(-12, 0, 400)
        g = np.concatenate([-ladder[::-1], [0.0], ladder])
        omegas = np.unique(self.omega_faces[:, 0, 1])
        slopes = []
        for w in omegas:
            S = assemble_shear_stress(g, spin(w, 2), self.params, self.reg_n)
            slopes.append(np.max(np.diff(S) / np.diff(g)))
        return float(max(slopes))

    def _resolve_dt(self) -> float:
        mu_max = self.max_tangent_viscosity()
        dt_max = self.config.cfl_safety * self.dy ** 2 / mu_max
        if self.config.dt is None:
            return dt_max
        if self.config.dt > dt_max * (1.0 + 1e-12):
            raise CFLViolation(f"dt={self.config.dt:.6g} exceeds the explicit stability limit "
                               f"{dt_max:.6g} (tangent viscosity {mu_max:.6g})")
        return self.config.dt

    def initial_state(self) -> ChannelState:
        if self.config.init == "steady":
            return self.solve_steady()
        return ChannelState(t=0.0, u=np.zeros(self.N), g_wall=np.zeros(2))

    def solve_steady(self) -> ChannelState:
        """Fixed point of ``step``: face stresses c - G y, rates from the shear law, c from the walls.

        The bottom wall fixes u_wall through grad g(u_wall) = S_12; c is the root
        of the top-wall velocity mismatch, which is increasing in c.
        """
        wall = self.boundary
        if not np.all(wall.curvature(np.zeros(1)) > 0):
            raise InvalidParameters("a steady channel state needs a strictly convex wall potential (friction > 0)")
        G, dy = self.config.body_force, self.dy

        def wall_velocity(stress: float) -> float:
            return invert_increasing(lambda v: float(wall.gradient(v)), stress, scale=1e-6)

        def profile(c: float):
            S_faces = c - G * self.y_faces
            rates = np.array([
                invert_increasing(lambda g, w=w: self.shear_stress(g, w), s)
                for s, w in zip(S_faces, self.omega_faces)
            ])
            u = wall_velocity(S_faces[0]) + 0.5 * dy * rates[0] + dy * np.concatenate([[0.0], np.cumsum(rates[1:-1])])
            return S_faces, rates, u

        def top_mismatch(c: float) -> float:
            S_faces, rates, u = profile(c)
            return float(u[-1] + 0.5 * dy * rates[-1] - wall_velocity(-S_faces[-1]))

        c = invert_increasing(top_mismatch, 0.0, scale=abs(G) * self.h + self.tau_yield + 1.0)
        S_faces, rates, u = profile(c)
        logging.info(f"✅ Steady channel state solved directly: c={c:.6g}, max|u|={np.max(np.abs(u)):.6g}")
        return ChannelState(t=0.0, u=u, g_wall=np.array([rates[0], rates[-1]]), face_rate=rates, face_stress=S_faces)

    def kinetic_energy(self, u: np.ndarray) -> float:
        return 0.5 * float(np.sum(u * u)) * self.dy

    def step(self, state: ChannelState) -> Tuple[ChannelState, StepBalance]:
        """One explicit Euler step with Newton-closed wall fluxes."""
        u, dy, dt, N = state.u, self.dy, self.dt, self.N
        G = self.config.body_force
        gb, gt = state.g_wall
        db = 1e-6 * (abs(gb) + 1.0 / math.sqrt(self.reg_n))
        dtp = 1e-6 * (abs(gt) + 1.0 / math.sqrt(self.reg_n))

        g_int = np.diff(u) / dy
        rates = np.concatenate([g_int, [gb, gt, gb + db, gt + dtp]])
        S = assemble_shear_stress(rates, self._omega_eval, self.params, self.reg_n)
        S_int = S[:N - 1]
        Sb, St = S[N - 1], S[N]
        dSb, dSt = (S[N + 1] - Sb) / db, (S[N + 2] - St) / dtp

        wall = self.boundary
        # top wall, outward normal +e_y: S_12 + grad g(u_w) = 0
        uw = u[-1] + 0.5 * dy * gt
        f = St + wall.gradient(uw)
        step_t = -f / (dSt + 0.5 * dy * wall.curvature(uw))
        gt_new = gt + step_t
        St_lin = St + dSt * step_t
        uw_top = u[-1] + 0.5 * dy * gt_new

        # bottom wall, outward normal -e_y: -S_12 + grad g(u_w) = 0
        uw = u[0] - 0.5 * dy * gb
        f = -Sb + wall.gradient(uw)
        step_b = -f / (-dSb - 0.5 * dy * wall.curvature(uw))
        gb_new = gb + step_b
        Sb_lin = Sb + dSb * step_b
        uw_bottom = u[0] - 0.5 * dy * gb_new

        flux = np.concatenate([[Sb_lin], S_int, [St_lin]])
        rate = (flux[1:] - flux[:-1]) / dy + G
        u_new = u + dt * rate
        if not np.all(np.isfinite(u_new)):
            raise Diverged(f"non-finite velocity at step {state.step + 1}", step=state.step + 1, t=state.t + dt)

        balance = StepBalance(
            kinetic_before=self.kinetic_energy(u),
            kinetic_after=self.kinetic_energy(u_new),
            dissipation=dt * (float(np.dot(S_int, g_int)) * dy + 0.5 * dy * (St_lin * gt_new + Sb_lin * gb_new)),
            boundary_work=-dt * (uw_top * St_lin - uw_bottom * Sb_lin),
            forcing_work=dt * G * float(np.sum(u)) * dy,
            max_rate=float(np.max(np.abs(rate))),
        )
        new_state = ChannelState(
            t=state.t + dt, u=u_new, g_wall=np.array([gb_new, gt_new]), step=state.step + 1,
            face_rate=np.concatenate([[gb_new], g_int, [gt_new]]), face_stress=flux,
        )
        return new_state, balance

    def run_to_steady(self, state: ChannelState = None) -> ChannelRun:
        cfg = self.config
        state = self.initial_state() if state is None else state
        ledger = EnergyLedger(every=cfg.ledger_every)
        steady = False
        log_every = max(1, cfg.max_steps // 20)

        while state.step < cfg.max_steps and state.t < cfg.t_end * (1.0 - 1e-12):
            state, balance = self.step(state)
            ledger.add(state.t, state.step, balance)
            if state.step % log_every == 0:
                logging.debug(f"step {state.step}: t={state.t:.4g}, max|du/dt|={balance.max_rate:.3e}")
            if balance.max_rate < cfg.steady_tol:
                steady = True
                break
        ledger.close(state.t, state.step, self.kinetic_energy(state.u))

        if steady:
            logging.info(f"✅ Channel reached steady state at t={state.t:.4g} after {state.step} steps")
        else:
            logging.warning(f"⏰ Channel stopped at t={state.t:.4g} ({state.step} steps) before reaching steady_tol")

        intervals, flags = self.extract_plug(state)
        return ChannelRun(state=state, ledger=ledger, steady=steady, profile=self.profile_frame(state, flags),
                          plug_intervals=intervals, reg_n=self.reg_n, dt=self.dt, plug_tolerance=self.plug_tol)

    def _face_rates(self, state: ChannelState) -> np.ndarray:
        if state.face_rate is not None:
            return state.face_rate
        return np.concatenate([[state.g_wall[0]], np.diff(state.u) / self.dy, [state.g_wall[1]]])

    def extract_plug(self, state: ChannelState):
        """Maximal y-intervals of plug cells, and the per-cell plug flags."""
        g_faces = self._face_rates(state)
        g_cells = 0.5 * (g_faces[:-1] + g_faces[1:])
        B = np.zeros((self.N, 2, 2))
        B[:, 0, 1] = g_cells
        flags = plug_mask(B, self.omega_cells, self.params, self.plug_tol_cells)

        intervals = []
        start = None
        for i, flag in enumerate(flags):
            if flag and start is None:
                start = i
            elif not flag and start is not None:
                intervals.append((float(self.y_faces[start]), float(self.y_faces[i])))
                start = None
        if start is not None:
            intervals.append((float(self.y_faces[start]), float(self.y_faces[self.N])))
        return intervals, flags

    def profile_frame(self, state: ChannelState, flags: np.ndarray) -> pd.DataFrame:
        if state.face_stress is not None:
            S_faces = state.face_stress
        else:
            S_faces = assemble_shear_stress(self._face_rates(state), self.omega_faces, self.params, self.reg_n)
        frame = pd.DataFrame({
            "y": self.y,
            "u": state.u,
            "S12": 0.5 * (S_faces[:-1] + S_faces[1:]),
            "plug_flag": flags.astype(int),
        })
        try:
            frame["u_reference"] = poiseuille_reference(self.y, self.config)
        except InvalidParameters:
            pass
        return frame


def run_channel(config: ChannelConfig, boundary: BoundaryFunction = None) -> ChannelRun:
    return ChannelSolver(config, boundary).run_to_steady()
