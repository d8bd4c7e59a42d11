"""Divergence-free Fourier Galerkin solver on the 2D torus [0, 2 pi)^2.

The velocity is kept as Fourier coefficients on the retained set |k|_inf <= K
and evaluated on an M x M grid. Gradients are formed in spectral space, the
regularized stress pointwise in physical space, and its divergence back in
spectral space. The Leray projection replaces the pressure. With M >= 3K + 1
every quadratic product is resolved exactly on the retained modes, so the
semi-discrete energy identity dE/dt = -integral(S^n : grad v) has no aliasing
error. There is no boundary, so the monitors only see interior terms.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from config import TOLERANCES, FluidParams, OmegaSpec, TorusConfig
from constitutive import MicroRotation, coercivity_bounds, stress_regularized
from errors import CFLViolation, ConfigError, Diverged
from fields import FieldD
from tensor_core import decompose, norm, spin

TORUS_LENGTH = 2.0 * np.pi

_EXPRESSION_NAMESPACE = {
    "np": np, "pi": np.pi, "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "exp": np.exp, "sqrt": np.sqrt, "tanh": np.tanh, "abs": np.abs,
}


def leray_project(v_hat: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
    """(I - k k^T / |k|^2) v_hat(k) for every wave vector; k = 0 is left alone."""
    k2 = kx * kx + ky * ky
    safe = np.where(k2 == 0, 1.0, k2)
    div = (kx * v_hat[0] + ky * v_hat[1]) / safe
    return np.stack([v_hat[0] - kx * div, v_hat[1] - ky * div])


class TorusGrid:
    """Wave numbers, dealiasing mask and quadrature weights for an M x M grid."""

    def __init__(self, modes: int, points: int):
        if points < 2 * modes + 2:
            raise ConfigError(f"grid M={points} cannot hold modes K={modes}; need M >= {2 * modes + 2}")
        if points < 3 * modes + 1:
            logging.warning(f"⚠️ M={points} < 3K+1={3 * modes + 1}: quadratic terms alias onto retained modes")
        self.K = modes
        self.M = points
        self.dx = TORUS_LENGTH / points
        self.cell_area = self.dx * self.dx
        axis = self.dx * np.arange(points)
        self.x, self.y = np.meshgrid(axis, axis, indexing="ij")
        k = np.fft.fftfreq(points, d=1.0 / points)
        self.kx, self.ky = np.meshgrid(k, k, indexing="ij")
        self.k2 = self.kx ** 2 + self.ky ** 2
        self.mask = (np.abs(self.kx) <= modes) & (np.abs(self.ky) <= modes)
        self.wave = (self.kx, self.ky)

    def to_spectral(self, v: np.ndarray) -> np.ndarray:
        return np.fft.fft2(v, axes=(-2, -1))

    def to_physical(self, v_hat: np.ndarray) -> np.ndarray:
        return np.fft.ifft2(v_hat, axes=(-2, -1)).real

    def truncate(self, v_hat: np.ndarray) -> np.ndarray:
        return np.where(self.mask, v_hat, 0.0)

    def project(self, v_hat: np.ndarray) -> np.ndarray:
        return self.truncate(leray_project(v_hat, self.kx, self.ky))

    def gradient(self, v_hat: np.ndarray) -> np.ndarray:
        """B_ij = d_j v_i on the grid, shape (M, M, 2, 2)."""
        B = np.empty((self.M, self.M, 2, 2))
        for i in range(2):
            for j in range(2):
                B[..., i, j] = self.to_physical(1j * self.wave[j] * v_hat[i])
        return B

    def divergence_of_tensor(self, S: np.ndarray) -> np.ndarray:
        """Spectral (div S)_i = sum_j d_j S_ij."""
        S_hat = np.fft.fft2(S, axes=(0, 1))
        return np.stack([sum(1j * self.wave[j] * S_hat[..., i, j] for j in range(2)) for i in range(2)])

    def divergence_max(self, v_hat: np.ndarray) -> float:
        return float(np.max(np.abs(self.to_physical(1j * (self.kx * v_hat[0] + self.ky * v_hat[1])))))

    def energy(self, v_hat: np.ndarray) -> float:
        """1/2 integral |v|^2 via Parseval."""
        return 0.5 * TORUS_LENGTH ** 2 / self.M ** 4 * float(np.sum(np.abs(v_hat) ** 2))

    def integrate(self, pointwise: np.ndarray) -> float:
        return float(np.sum(pointwise)) * self.cell_area


@dataclass
class SpectralState:
    coeffs: np.ndarray  # (2, M, M) complex
    t: float = 0.0
    step: int = 0

    def velocity(self, grid: TorusGrid) -> np.ndarray:
        return grid.to_physical(self.coeffs)

    def to_field(self, grid: TorusGrid) -> FieldD:
        return FieldD(values=self.velocity(grid), spacing=(grid.dx, grid.dx), periodic=True,
                      metadata={"t": self.t, "modes": grid.K})

    def is_conjugate_symmetric(self, grid: TorusGrid, tol: float = 1e-12) -> bool:
        flipped = np.conj(np.roll(np.flip(self.coeffs, axis=(1, 2)), 1, axis=(1, 2)))
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return bool(np.max(np.abs(self.coeffs - flipped)) <= tol * scale)


def omega_field(spec: Union[OmegaSpec, float, np.ndarray], grid: TorusGrid,
                base_dir: Optional[Path] = None) -> np.ndarray:
    """Micro-rotation on the grid, shape (M, M, 2, 2), checked antisymmetric.

    Accepts a constant spin rate, a numpy expression in x and y, or a .npy
    file holding rates (M, M) or matrices (M, M, 2, 2).
    """
    if not isinstance(spec, OmegaSpec):
        values = np.asarray(spec, dtype=np.float64)
        rates = np.broadcast_to(values, (grid.M, grid.M)) if values.ndim <= 2 else None
        matrices = spin(rates, 2) if rates is not None else values
        return MicroRotation(np.array(matrices)).values

    if spec.kind == "constant":
        matrices = spin(np.full((grid.M, grid.M), spec.value), 2)
    elif spec.kind == "expression":
        namespace = dict(_EXPRESSION_NAMESPACE, x=grid.x, y=grid.y)
        try:
            rates = eval(spec.expr, {"__builtins__": {}}, namespace)
        except Exception as e:
            raise ConfigError(f"omega expression {spec.expr!r} failed: {e}")
        matrices = spin(np.broadcast_to(np.asarray(rates, dtype=np.float64), (grid.M, grid.M)), 2)
    else:
        path = Path(spec.path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        try:
            data = np.load(path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read omega samples from {path}: {e}")
        if data.shape == (grid.M, grid.M):
            matrices = spin(data, 2)
        elif data.shape == (grid.M, grid.M, 2, 2):
            matrices = data
        else:
            raise ConfigError(f"omega samples have shape {data.shape}; expected ({grid.M}, {grid.M}) "
                              f"or ({grid.M}, {grid.M}, 2, 2)")
    return MicroRotation(matrices).values


def bound_constant(omega: np.ndarray, params: FluidParams, grid: TorusGrid) -> float:
    """C0 = integral(mu2 2^{p-2} |omega|^p + tau_star |omega|)."""
    n_omega = norm(omega)
    p = params.p
    return grid.integrate(params.mu2 * 2 ** (p - 2) * n_omega ** p + params.tau_star * n_omega)


def tangent_viscosity(params: FluidParams, reg_n: float, rate_max: float, omega_max: float = 0.0) -> float:
    """Largest slope of S^n along shear, extension and rotation paths up to ``rate_max``."""
    ladder = max(rate_max, 1e-12) * np.logspace(-12, 0, 300)
    g = np.concatenate([-ladder[::-1], [0.0], ladder])
    paths = {
        (0, 1): np.array([[0.0, 1.0], [0.0, 0.0]]),
        (0, 0): np.array([[1.0, 0.0], [0.0, -1.0]]),
        (1, 0): np.array([[0.0, 1.0], [-1.0, 0.0]]),
    }
    omega = spin(omega_max, 2)
    slopes = []
    for (i, j), direction in paths.items():
        S = stress_regularized(g[:, None, None] * direction, omega, params, reg_n)[:, i, j]
        response = np.diff(S) / np.diff(g)
        if (i, j) == (1, 0):
            response = -response
        slopes.append(float(np.max(np.abs(response))))
    return max(slopes)


@dataclass
class StageDiagnostics:
    dissipation: float  # integral S^n : grad v
    coercive: float  # mu1 ||B_s||_p^p
    dissipation_lower: float  # integral of the pointwise coercivity lower bound
    dissipation_upper: float  # integral of the pointwise growth upper bound
    grad_p: float  # ||grad v||_p^p
    stress_dual_norm: float  # ||S^n||_{p'}


@dataclass
class GalerkinRun:
    state: SpectralState
    series: pd.DataFrame
    summary: Dict[str, float]
    dt: float


@dataclass
class _Accumulator:
    dissipation: float = 0.0
    coercive: float = 0.0
    grad_p: float = 0.0
    bound_violations: int = 0
    worst_bound_margin: float = math.inf
    worst_dissipation_margin: float = math.inf
    worst_dissipation_upper_margin: float = math.inf
    max_divergence: float = 0.0
    max_identity_residual: float = 0.0
    rows: List[dict] = field(default_factory=list)

    def rk4(self, dt: float, stages: List[StageDiagnostics]) -> None:
        weights = (1.0, 2.0, 2.0, 1.0)
        self.dissipation += dt / 6.0 * sum(w * s.dissipation for w, s in zip(weights, stages))
        self.coercive += dt / 6.0 * sum(w * s.coercive for w, s in zip(weights, stages))
        self.grad_p += dt / 6.0 * sum(w * s.grad_p for w, s in zip(weights, stages))


class GalerkinSolver:
    def __init__(self, config: TorusConfig, omega: Optional[np.ndarray] = None,
                 base_dir: Optional[Path] = None):
        self.config = config
        self.params = config.params
        self.reg_n = config.reg_n
        self.grid = TorusGrid(config.modes, config.resolved_grid)
        self.omega = omega_field(config.omega if omega is None else omega, self.grid, base_dir)
        self.C0 = bound_constant(self.omega, self.params, self.grid)
        logging.info(f"🚀 Galerkin solver ready: K={self.grid.K}, M={self.grid.M}, "
                     f"reg_n={self.reg_n}, C0={self.C0:.4g}")

    def initial_state(self) -> SpectralState:
        g = self.grid
        cfg = self.config
        if cfg.init == "taylor-green":
            v = cfg.amplitude * np.stack([np.sin(g.x) * np.cos(g.y), -np.cos(g.x) * np.sin(g.y)])
        else:
            rng = np.random.default_rng(cfg.seed)
            low = min(g.K, 4)
            shape = (2, g.M, g.M)
            noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            keep = (np.abs(g.kx) <= low) & (np.abs(g.ky) <= low) & (g.k2 > 0)
            v = g.to_physical(np.where(keep, noise / (1.0 + g.k2), 0.0))
        v_hat = g.project(g.to_spectral(v))
        if cfg.init == "random":
            rms = math.sqrt(2.0 * g.energy(v_hat) / TORUS_LENGTH ** 2)
            if rms > 0:
                v_hat *= cfg.amplitude / rms
        return SpectralState(coeffs=v_hat)

    def evaluate(self, v_hat: np.ndarray) -> Tuple[np.ndarray, StageDiagnostics]:
        """Time derivative P[-(v . grad) v + div S^n(grad v)] and stage diagnostics."""
        g = self.grid
        p = self.params.p
        v = g.to_physical(v_hat)
        B = g.gradient(v_hat)
        advection = np.einsum("j...,...ij->i...", v, B)
        S = stress_regularized(B, self.omega, self.params, self.reg_n)
        rhs = g.project(-g.to_spectral(advection) + g.divergence_of_tensor(S))

        Bs, _ = decompose(B)
        lower, upper = coercivity_bounds(B, self.omega, self.params)
        p_dual = p / (p - 1.0)
        diagnostics = StageDiagnostics(
            dissipation=g.integrate(np.einsum("...ij,...ij->...", S, B)),
            coercive=self.params.mu1 * g.integrate(norm(Bs) ** p),
            dissipation_lower=g.integrate(lower),
            dissipation_upper=g.integrate(upper),
            grad_p=g.integrate(norm(B) ** p),
            stress_dual_norm=g.integrate(norm(S) ** p_dual) ** (1.0 / p_dual),
        )
        return rhs, diagnostics

    def rhs(self, state: SpectralState) -> np.ndarray:
        return self.evaluate(state.coeffs)[0]

    def stable_dt(self, state: SpectralState) -> float:
        """RK4 limit for the stiffest retained mode, and the advective CFL limit."""
        g = self.grid
        rate_max = 2.0 * float(np.max(norm(g.gradient(state.coeffs)))) + 1.0
        omega_max = float(np.max(np.abs(self.omega[..., 0, 1])))
        mu_t = tangent_viscosity(self.params, self.reg_n, rate_max, omega_max)
        dt_visc = TOLERANCES.rk4_stability / (mu_t * 2.0 * g.K ** 2)
        speed = float(np.max(np.abs(state.velocity(g))))
        dt_adv = TOLERANCES.advection_cfl * g.dx / speed if speed > 0 else math.inf
        return min(dt_visc, dt_adv)

    def _record(self, acc: _Accumulator, state: SpectralState, E0: float,
                stage: StageDiagnostics, energy: float) -> dict:
        g = self.grid
        residual = abs(energy + acc.dissipation - E0)
        lhs = energy + acc.coercive
        rhs = E0 + self.C0 * state.t
        divergence = g.divergence_max(state.coeffs)
        acc.max_divergence = max(acc.max_divergence, divergence)
        acc.max_identity_residual = max(acc.max_identity_residual, residual)
        row = {
            "t": state.t, "step": state.step, "energy": energy,
            "grad_p_norm": stage.grad_p ** (1.0 / self.params.p),
            "grad_p_integral": acc.grad_p,
            "stress_dual_norm": stage.stress_dual_norm,
            "dissipation_integral": acc.dissipation,
            "identity_residual": residual,
            "bound_lhs": lhs, "bound_rhs": rhs,
            "divergence_max": divergence,
        }
        acc.rows.append(row)
        return row

    def integrate(self, state: SpectralState = None, dt: float = None, t_end: float = None) -> GalerkinRun:
        """Classical RK4 to ``t_end`` with the energy ledger and a-priori bound monitors."""
        g = self.grid
        cfg = self.config
        state = self.initial_state() if state is None else state
        t_end = cfg.t_end if t_end is None else t_end
        dt = cfg.dt if dt is None else dt

        limit = self.stable_dt(state)
        if dt is None:
            dt = limit
        elif dt > limit * (1.0 + 1e-12):
            raise CFLViolation(f"dt={dt:.6g} exceeds the RK4 stability limit {limit:.6g} "
                               f"for K={g.K}, reg_n={self.reg_n}")
        steps = max(1, math.ceil(t_end / dt - 1e-9))
        dt = t_end / steps

        E0 = g.energy(state.coeffs)
        acc = _Accumulator()
        v = state.coeffs
        k1, d1 = self.evaluate(v)
        self._record(acc, state, E0, d1, E0)
        bound_scale = TOLERANCES.bound_rel * max(1.0, E0 + self.C0 * t_end)

        for n in range(1, steps + 1):
            k2, d2 = self.evaluate(v + 0.5 * dt * k1)
            k3, d3 = self.evaluate(v + 0.5 * dt * k2)
            k4, d4 = self.evaluate(v + dt * k3)
            v = g.project(v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            stages = [d1, d2, d3, d4]
            acc.rk4(dt, stages)
            for s in stages:
                acc.worst_dissipation_margin = min(acc.worst_dissipation_margin, s.dissipation - s.dissipation_lower)
                acc.worst_dissipation_upper_margin = min(acc.worst_dissipation_upper_margin,
                                                         s.dissipation_upper - s.dissipation)

            if not np.all(np.isfinite(v)):
                raise Diverged(f"non-finite Fourier coefficients at step {n}", step=n, t=n * dt)
            state = SpectralState(coeffs=v, t=n * dt, step=n)
            k1, d1 = self.evaluate(v)
            energy = g.energy(v)
            margin = E0 + self.C0 * state.t - (energy + acc.coercive)
            acc.worst_bound_margin = min(acc.worst_bound_margin, margin)
            # RK4 can miss the semi-discrete bound by up to the ledger residual
            slack = bound_scale + abs(energy + acc.dissipation - E0)
            if margin < -slack:
                acc.bound_violations += 1
                logging.warning(f"❌ A-priori bound violated at t={state.t:.4g} by {-margin:.3e}")

            if n % cfg.record_every == 0 or n == steps:
                self._record(acc, state, E0, d1, energy)

        summary = {
            "E0": E0,
            "C0": self.C0,
            "dt": dt,
            "steps": steps,
            "final_energy": g.energy(v),
            "sup_energy": max(row["energy"] for row in acc.rows),
            "max_identity_residual": acc.max_identity_residual,
            "final_identity_residual": acc.rows[-1]["identity_residual"],
            "bound_violations": acc.bound_violations,
            "worst_bound_margin": acc.worst_bound_margin,
            "worst_dissipation_margin": acc.worst_dissipation_margin,
            "worst_dissipation_upper_margin": acc.worst_dissipation_upper_margin,
            "max_divergence": acc.max_divergence,
            "note": "periodic domain: boundary work vanishes, monitors cover interior terms only",
        }
        logging.info(f"✅ Galerkin run finished: t={state.t:.4g}, E={summary['final_energy']:.6g}, "
                     f"identity residual={summary['final_identity_residual']:.3e}")
        return GalerkinRun(state=state, series=pd.DataFrame(acc.rows), summary=summary, dt=dt)


def run_galerkin(config: TorusConfig, base_dir: Optional[Path] = None) -> GalerkinRun:
    return GalerkinSolver(config, base_dir=base_dir).integrate()
