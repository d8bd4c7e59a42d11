"""Stress laws, convex potentials and plastic operators for viscoplastic fluids.

All functions act on a single d x d matrix or on a batch ``(..., d, d)``; the
micro-rotation ``omega`` broadcasts against ``X`` and may be ``None`` (zero).

Notation, with R = X_a - omega:

    B_mu_p  = mu1 |X_s|^{p-2} X_s + mu2 |R|^{p-2} R
    B_nu_q  = |X_s|^{q-2} X_s + nu |R|^{q-2} R
    B_hat   = |X_s|^{(q-2)/2} X_s + sqrt(nu) |R|^{(q-2)/2} R,  |B_hat|^2 = |X_s|^q + nu |R|^q
    B_nu    = X_s + nu R                                     (flow criterion)

    V = U + tau_hat W,  U = mu1/p |X_s|^p + mu2/p |R|^p,  W = |B_hat|^{2/q}
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional, Union

import numpy as np

from config import TOLERANCES, FluidParams
from errors import AtPlugPoint, DimensionMismatch, InvalidParameters, UndefinedAtPlug
from tensor_core import MatD, as_matd, decompose, inner, is_antisymmetric, norm, scaled_power, spin

Scalar = Union[float, np.ndarray]


class Regime(str, Enum):
    FLOW = "flow"
    PLUG = "plug"


@dataclass(frozen=True)
class StressResult:
    """Either a definite stress (flow) or the plug constraint |S| <= bound."""

    tag: Regime
    stress: Optional[np.ndarray] = None
    bound: Optional[float] = None

    @property
    def is_plug(self) -> bool:
        return self.tag is Regime.PLUG


class MicroRotation:
    """Prescribed micro-rotation tensor, one constant matrix or one per node."""

    def __init__(self, values, tol: float = None):
        values = as_matd(values)
        if not is_antisymmetric(values, tol):
            raise InvalidParameters("micro-rotation samples must be antisymmetric")
        self.values = values

    @classmethod
    def zero(cls, dim: int) -> "MicroRotation":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def from_rate(cls, rate, dim: int = 2) -> "MicroRotation":
        return cls(spin(rate, dim))

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 2

    def __repr__(self) -> str:
        return f"MicroRotation(dim={self.dim}, shape={self.values.shape})"


class BuildingBlocks(NamedTuple):
    b_mu_p: np.ndarray
    b_nu_q: np.ndarray
    b_hat_nu_q: np.ndarray
    b_nu: np.ndarray


class _Kinematics(NamedTuple):
    Xs: np.ndarray
    R: np.ndarray
    ns: np.ndarray
    nr: np.ndarray


def _omega_array(omega, d: int) -> np.ndarray:
    if omega is None:
        return np.zeros((d, d))
    if isinstance(omega, MicroRotation):
        omega = omega.values
    omega = as_matd(omega)
    if omega.shape[-1] != d:
        raise DimensionMismatch(f"omega is {omega.shape[-1]}x{omega.shape[-1]}, X is {d}x{d}")
    return omega


def _kinematics(X: MatD, omega) -> _Kinematics:
    X = as_matd(X)
    Xs, Xa = decompose(X)
    R = Xa - _omega_array(omega, X.shape[-1])
    return _Kinematics(Xs, R, norm(Xs), norm(R))


def _unwrap(value):
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def _yield_measure(k: _Kinematics, params: FluidParams) -> np.ndarray:
    """|B_hat|^2 = |X_s|^q + nu |R|^q."""
    return k.ns ** params.q + params.nu * k.nr ** params.q


def _viscous_part(k: _Kinematics, params: FluidParams) -> np.ndarray:
    return (params.mu1 * scaled_power(k.Xs, k.ns, params.p - 2)
            + params.mu2 * scaled_power(k.R, k.nr, params.p - 2))


def _plastic_numerator(k: _Kinematics, params: FluidParams) -> np.ndarray:
    return scaled_power(k.Xs, k.ns, params.q - 2) + params.nu * scaled_power(k.R, k.nr, params.q - 2)


def plug_tolerance(X: MatD) -> np.ndarray:
    """Default scale-aware plug threshold, plug_rel * max(1, |X|)."""
    return TOLERANCES.plug_rel * np.maximum(1.0, norm(X))


def flow_criterion(X: MatD, omega, params: FluidParams) -> np.ndarray:
    """|B_nu| = |X_s + nu (X_a - omega)|."""
    k = _kinematics(X, omega)
    return norm(k.Xs + params.nu * k.R)


def building_blocks(X: MatD, omega, params: FluidParams) -> BuildingBlocks:
    k = _kinematics(X, omega)
    q = params.q
    return BuildingBlocks(
        b_mu_p=_viscous_part(k, params),
        b_nu_q=_plastic_numerator(k, params),
        b_hat_nu_q=scaled_power(k.Xs, k.ns, (q - 2) / 2) + np.sqrt(params.nu) * scaled_power(k.R, k.nr, (q - 2) / 2),
        b_nu=k.Xs + params.nu * k.R,
    )


def potential_U(X: MatD, omega, params: FluidParams) -> Scalar:
    k = _kinematics(X, omega)
    p = params.p
    return _unwrap(params.mu1 / p * k.ns ** p + params.mu2 / p * k.nr ** p)


def potential_W(X: MatD, omega, params: FluidParams) -> Scalar:
    k = _kinematics(X, omega)
    return _unwrap(_yield_measure(k, params) ** (1.0 / params.q))


def potential_V(X: MatD, omega, params: FluidParams) -> Scalar:
    params.require_potential()
    k = _kinematics(X, omega)
    p, q = params.p, params.q
    U = params.mu1 / p * k.ns ** p + params.mu2 / p * k.nr ** p
    return _unwrap(U + params.tau_hat * _yield_measure(k, params) ** (1.0 / q))


def potential_Vn(X: MatD, omega, params: FluidParams, n: float) -> Scalar:
    params.require_potential()
    _check_regularization(n)
    k = _kinematics(X, omega)
    p, q = params.p, params.q
    U = params.mu1 / p * k.ns ** p + params.mu2 / p * k.nr ** p
    return _unwrap(U + params.tau_hat * (_yield_measure(k, params) + 1.0 / n) ** (1.0 / q))


def _check_regularization(n: float) -> None:
    if not n >= 1:
        raise InvalidParameters(f"regularization parameter n must be >= 1, got {n}")


def _flow_stress(k: _Kinematics, params: FluidParams, A: np.ndarray) -> np.ndarray:
    q = params.q
    factor = params.tau_hat * A ** (-(q - 1.0) / q)
    return _viscous_part(k, params) + factor[..., None, None] * _plastic_numerator(k, params)


def grad_V(X: MatD, omega, params: FluidParams, tol_plug: float = None) -> np.ndarray:
    """Gradient of V off the plug set.

    Raises AtPlugPoint where |B_nu| <= tol_plug; use ``dir_deriv_V`` or the
    subdifferential tests there.
    """
    params.require_potential()
    X = as_matd(X)
    k = _kinematics(X, omega)
    tol = plug_tolerance(X) if tol_plug is None else tol_plug
    if np.any(norm(k.Xs + params.nu * k.R) <= tol):
        raise AtPlugPoint("grad_V is undefined where the flow criterion B_nu vanishes")
    return _flow_stress(k, params, _yield_measure(k, params))


def dir_deriv_V(X: MatD, Y: MatD, omega, params: FluidParams, tol_plug: float = None) -> Scalar:
    """One-sided directional derivative V'(X; Y), valid on and off the plug."""
    params.require_potential()
    X = as_matd(X)
    Y = as_matd(Y)
    k = _kinematics(X, omega)
    q, nu = params.q, params.nu
    tol = plug_tolerance(X) if tol_plug is None else tol_plug
    plug = norm(k.Xs + nu * k.R) <= tol

    A = np.where(plug, 1.0, _yield_measure(k, params))
    flow_value = inner(_flow_stress(k, params, A), Y)

    # at the plug W'(X; Y) = W(Y + omega), which only sees Y through (Y_s, Y_a)
    Ys, Ya = decompose(Y)
    kink = (norm(Ys) ** q + nu * norm(Ya) ** q) ** (1.0 / q)
    plug_value = inner(_viscous_part(k, params), Y) + params.tau_hat * kink
    return _unwrap(np.where(plug, plug_value, flow_value))


def coercivity_bounds(X: MatD, omega, params: FluidParams, c1_scale: float = 1.0):
    """Lower and upper bounds on V'(X; X) (and the regularized analogue).

    lower = mu1 |X_s|^p - mu2 2^{p-2} |omega|^p - tau_star |omega|
    upper = c1 |X|^p + c2 |omega|^p + tau_star |X|

    ``c1_scale`` multiplies c1; the coercivity suite halves it as a mutation control.
    """
    X = as_matd(X)
    p = params.p
    n_omega = norm(np.broadcast_to(_omega_array(omega, X.shape[-1]), X.shape))
    c1 = c1_scale * (params.mu1 + 2 ** (p - 2) * params.mu2 * (1 + 1 / p))
    c2 = 2 ** (p - 2) * params.mu2 * (1 - 1 / p)
    Xs, _ = decompose(X)
    nx = norm(X)
    lower = params.mu1 * norm(Xs) ** p - params.mu2 * 2 ** (p - 2) * n_omega ** p - params.tau_star * n_omega
    upper = c1 * nx ** p + c2 * n_omega ** p + params.tau_star * nx
    return _unwrap(lower), _unwrap(upper)


def stress_exact(X: MatD, omega, params: FluidParams, tol_plug: float = None) -> StressResult:
    """Generalized Herschel-Bulkley / Cosserat-Bingham stress at a single matrix."""
    X = as_matd(X)
    if X.ndim != 2:
        raise DimensionMismatch("stress_exact takes one matrix; use stress_exact_batch for arrays")
    S, plug = stress_exact_batch(X, omega, params, tol_plug)
    if bool(plug):
        return StressResult(tag=Regime.PLUG, bound=params.tau_star)
    return StressResult(tag=Regime.FLOW, stress=S)


def stress_exact_batch(X: MatD, omega, params: FluidParams, tol_plug: float = None):
    """Vectorized ``stress_exact``: returns (stress, plug_mask); plug entries hold NaN."""
    X = as_matd(X)
    k = _kinematics(X, omega)
    tol = plug_tolerance(X) if tol_plug is None else tol_plug
    plug = norm(k.Xs + params.nu * k.R) <= tol
    A = np.where(plug, 1.0, _yield_measure(k, params))
    S = _flow_stress(k, params, A)
    S = np.where(plug[..., None, None], np.nan, S)
    return S, plug


def stress_regularized(X: MatD, omega, params: FluidParams, n: float) -> np.ndarray:
    """Single-valued approximation S^n, the gradient of V^n."""
    _check_regularization(n)
    k = _kinematics(X, omega)
    q = params.q
    factor = params.tau_hat * (_yield_measure(k, params) + 1.0 / n) ** (-(q - 1.0) / q)
    return _viscous_part(k, params) + factor[..., None, None] * _plastic_numerator(k, params)


def stress_sr_explicit(X: MatD, omega, params: FluidParams, tol_plug: float = None) -> StressResult:
    """Explicit law with direction B_{nu,p}/|B_{nu,p}| (plug set B_{nu,p} = 0)."""
    X = as_matd(X)
    if X.ndim != 2:
        raise DimensionMismatch("stress_sr_explicit takes one matrix")
    k = _kinematics(X, omega)
    p = params.p
    direction = scaled_power(k.Xs, k.ns, p - 2) + params.nu * scaled_power(k.R, k.nr, p - 2)
    size = float(norm(direction))
    tol = float(plug_tolerance(X)) if tol_plug is None else tol_plug
    if size <= tol:
        return StressResult(tag=Regime.PLUG, bound=params.tau_star)
    return StressResult(tag=Regime.FLOW, stress=_viscous_part(k, params) + params.tau_star * direction / size)


def plastic_operator(Xs: MatD, R: MatD, params: FluidParams) -> np.ndarray:
    """B_nu_q / |B_nu_q|."""
    Xs = as_matd(Xs)
    R = as_matd(R)
    q = params.q
    B = scaled_power(Xs, norm(Xs), q - 2) + params.nu * scaled_power(R, norm(R), q - 2)
    size = norm(B)
    if np.any(size == 0):
        raise UndefinedAtPlug("plastic operator undefined where B_nu_q = 0")
    return B / size[..., None, None]


def modified_plastic_operator(Xs: MatD, R: MatD, params: FluidParams) -> np.ndarray:
    """B_nu_q / (|X_s|^q + nu |R|^q)^{(q-1)/q}, monotone for every nu >= 0 and q >= 2."""
    Xs = as_matd(Xs)
    R = as_matd(R)
    q = params.q
    ns, nr = norm(Xs), norm(R)
    A = ns ** q + params.nu * nr ** q
    if np.any(A == 0):
        raise UndefinedAtPlug("modified plastic operator undefined where |X_s|^q + nu |R|^q = 0")
    B = scaled_power(Xs, ns, q - 2) + params.nu * scaled_power(R, nr, q - 2)
    return (A ** (-(q - 1.0) / q))[..., None, None] * B


def _require_implicit_law(params: FluidParams) -> None:
    if not (params.mu2 > 0 and params.tau_star > 0):
        raise InvalidParameters("the implicit Cosserat-Bingham law needs mu1 > 0, mu2 > 0 and tau_star > 0")


def _cb_drive(B: MatD, omega, params: FluidParams):
    """Return (kinematics, mu1 (a1+|B_s|)^{p-2}, K) with K = mu1 (a1+|B_s|)^{p-2} B_0."""
    k = _kinematics(B, omega)
    p = params.p
    coef_s = params.mu1 * (params.a1 + k.ns) ** (p - 2)
    coef_a = params.mu2 * (params.a2 + k.nr) ** (p - 2)
    K = coef_s[..., None, None] * k.Xs + coef_a[..., None, None] * k.R
    return k, coef_s, K


def cb_flow_direction(B: MatD, omega, params: FluidParams):
    """B_0 = B_s + eps R and eps = (mu2/mu1)(a2+|R|)^{p-2}/(a1+|B_s|)^{p-2}.

    eps is infinite where a1 + |B_s| = 0 with p > 2.
    """
    _require_implicit_law(params)
    k = _kinematics(B, omega)
    p = params.p
    base = (params.a1 + k.ns) ** (p - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        eps = np.where(base > 0, params.mu2 / params.mu1 * (params.a2 + k.nr) ** (p - 2) / np.where(base > 0, base, 1.0), np.inf)
    B0 = k.Xs + np.where(np.isfinite(eps), eps, 0.0)[..., None, None] * k.R
    return B0, _unwrap(eps)


def cb_explicit_stress(B: MatD, omega, params: FluidParams, tol_plug: float = None) -> StressResult:
    """Explicit resolution of the implicit Cosserat-Bingham law.

    With K = mu1 (a1+|B_s|)^{p-2} B_0 the flow branch is S = K + tau_star B_0/|B_0|,
    the plug branch is B_0 = 0 (reported as |S| <= tau_star). Where eps is infinite
    K reduces to its rotation part and the direction is K/|K|.
    """
    _require_implicit_law(params)
    B = as_matd(B)
    if B.ndim != 2:
        raise DimensionMismatch("cb_explicit_stress takes one matrix")
    _, _, K = _cb_drive(B, omega, params)
    B0, eps = cb_flow_direction(B, omega, params)
    size = float(norm(K))
    if tol_plug is None:
        scale = max(1.0, params.a1 + params.a2 + float(norm(B))) ** (params.p - 1)
        tol_plug = TOLERANCES.plug_rel * (params.mu1 + params.mu2) * scale
    if size <= tol_plug:
        return StressResult(tag=Regime.PLUG, bound=params.tau_star)
    b0_size = float(norm(B0))
    direction = B0 / b0_size if np.isfinite(eps) and b0_size > 0 else K / size
    return StressResult(tag=Regime.FLOW, stress=K + params.tau_star * direction)


def cb_implicit_residual(S: MatD, B: MatD, omega, params: FluidParams) -> Scalar:
    """|LHS - RHS| of mu1 (a1+|B_s|)^{p-2} ((|S|-tau)_+ + tau) B_0 = (|S|-tau)_+ S."""
    _require_implicit_law(params)
    S = as_matd(S)
    _, _, K = _cb_drive(B, omega, params)
    excess = np.maximum(norm(S) - params.tau_star, 0.0)
    lhs = (excess + params.tau_star)[..., None, None] * K
    rhs = excess[..., None, None] * S
    return _unwrap(norm(lhs - rhs))


def shear_yield_stress(params: FluidParams, omega_rate: float = 0.0) -> float:
    """Half the jump of the exact shear stress S_12 across zero shear rate.

    At omega = 0 the plastic part is 0-homogeneous, so it is evaluated at unit
    shear rate; this equals tau_star / sqrt(2) for the Bingham fluid. With
    nu > 0 a nonzero spin omega_rate keeps |B_nu| >= nu sqrt(2) |omega_rate|,
    the plastic part stays continuous at zero shear and there is no threshold.
    With nu = 0 the rotation does not enter the flow criterion.
    """
    if params.tau_hat == 0:
        return 0.0
    if params.nu > 0 and omega_rate != 0:
        logging.debug(f"No shear yield threshold at omega_rate={omega_rate:.6g} for {params}")
        return 0.0
    B = np.array([[0.0, 1.0], [0.0, 0.0]])
    Xs, Xa = decompose(B)
    direction = modified_plastic_operator(Xs, Xa, params)
    value = params.tau_hat * float(direction[0, 1])
    logging.debug(f"Shear yield stress {value:.6g} for {params}")
    return value
