"""Subdifferential geometry of V at plug points.

For nu > 0 the plug matrix is X = omega and

    dV(omega) = { X* : |X*_s|^{q'} + nu^{1-q'} |X*_a|^{q'} <= tau_hat^{q'} },  q' = q/(q-1),

an ellipsoid squeezed between the balls of radius r_star = tau_hat * r_q and
tau_star. For nu = 0 the plug is X_s = 0 and the subdifferential is the
symmetric ball of radius tau_star shifted by mu2 |R|^{p-2} R.
"""
import logging
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from config import TOLERANCES, FluidParams
from constitutive import Regime, building_blocks, flow_criterion, plug_tolerance
from errors import AtPlugPoint, InvalidParameters, MissingPlugMatrix, NoWitness
from fields import FieldD
from tensor_core import MatD, as_matd, decompose, inner, norm, scaled_power


def r_q_value(q: float, nu: float) -> float:
    """min over t in [0,1] of ((1-t)^{q/2} + nu t^{q/2})^{1/q}, in closed form.

    The minimizer is t = 1/(1 + nu^{2/(q-2)}); the power is taken in log space
    so q close to 2 does not overflow.
    """
    if nu < 0 or q < 2:
        raise InvalidParameters(f"r_q needs nu >= 0 and q >= 2, got nu={nu}, q={q}")
    if nu == 0:
        return 0.0
    if q == 2:
        return min(1.0, float(np.sqrt(nu)))
    log_nu = np.log(nu)
    log_denominator = np.logaddexp(0.0, 2.0 / (q - 2.0) * log_nu)
    return float(np.exp(log_nu / q - (q - 2.0) / (2.0 * q) * log_denominator))


def r_q_numeric(q: float, nu: float, grid: int = 2001) -> float:
    """Grid scan plus bounded Brent refinement of the same minimum."""
    def alpha(t):
        return (1.0 - t) ** (q / 2.0) + nu * t ** (q / 2.0)

    ts = np.linspace(0.0, 1.0, grid)
    values = alpha(ts)
    i = int(np.argmin(values))
    best = float(values[i])
    lo, hi = ts[max(i - 1, 0)], ts[min(i + 1, grid - 1)]
    if hi > lo:
        refined = minimize_scalar(alpha, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-14, "maxiter": 500})
        best = min(best, float(refined.fun))
    return best ** (1.0 / q)


def r_q(params: FluidParams) -> float:
    params.require_potential()
    return r_q_value(params.q, params.nu)


def r_star(params: FluidParams) -> float:
    """Radius of the largest ball inside dV(omega)."""
    return params.tau_hat * r_q(params)


def ellipsoid_gauge(X_star: MatD, params: FluidParams):
    """(|X*_s|^{q'} + nu^{1-q'} |X*_a|^{q'})^{1/q'}; membership is gauge <= tau_hat."""
    if params.nu <= 0:
        raise InvalidParameters("the ellipsoid description needs nu > 0")
    X_star = as_matd(X_star)
    qd = params.q_dual
    Xs, Xa = decompose(X_star)
    total = norm(Xs) ** qd + params.nu ** (1.0 - qd) * norm(Xa) ** qd
    gauge = total ** (1.0 / qd)
    return float(gauge) if np.ndim(gauge) == 0 else gauge


def in_subdifferential_at_plug(X_star: MatD, omega, params: FluidParams,
                               plug_matrix: Optional[MatD] = None, tol: float = None):
    """Is X* a subgradient of V at the plug matrix?

    nu > 0: ellipsoid test at X = omega. nu = 0: ``plug_matrix`` (with X_s = 0)
    is required and X* - mu2 |R|^{p-2} R must be symmetric with norm <= tau_star.
    """
    tol = TOLERANCES.membership_rel if tol is None else tol
    X_star = as_matd(X_star)
    if params.nu > 0:
        member = ellipsoid_gauge(X_star, params) <= params.tau_hat * (1.0 + tol)
        return bool(member) if np.ndim(member) == 0 else member

    if plug_matrix is None:
        raise MissingPlugMatrix("nu = 0: the plug matrix X is needed to form R = X_a - omega")
    plug_matrix = as_matd(plug_matrix)
    Xs, Xa = decompose(plug_matrix)
    if np.any(norm(Xs) > plug_tolerance(plug_matrix)):
        raise InvalidParameters("plug_matrix is not a plug point: its symmetric part is nonzero")
    R = Xa - (0.0 if omega is None else as_matd(getattr(omega, "values", omega)))
    shifted = X_star - params.mu2 * scaled_power(R, norm(R), params.p - 2)
    Ys, Ya = decompose(shifted)
    scale = np.maximum(1.0, norm(X_star))
    member = (norm(Ya) <= TOLERANCES.antisymmetry * scale) & (norm(Ys) <= params.tau_star * (1.0 + tol))
    return bool(member) if np.ndim(member) == 0 else member


def bingham_subdifferential_contains(X_star: MatD, tau_star: float, tol: float = None) -> bool:
    """Classical Bingham description: X*_a = 0 and |X*_s| <= tau_star."""
    tol = TOLERANCES.membership_rel if tol is None else tol
    Xs, Xa = decompose(as_matd(X_star))
    scale = max(1.0, float(norm(X_star)))
    return bool(norm(Xa) <= TOLERANCES.antisymmetry * scale and norm(Xs) <= tau_star * (1.0 + tol))


def violation_witness(X_star: MatD, params: FluidParams, tol: float = None) -> np.ndarray:
    """Unit direction Y with X*:Y > tau_hat W(Y + omega), proving X* is not in dV(omega)."""
    if params.nu <= 0:
        raise InvalidParameters("violation witnesses are constructed for nu > 0 only")
    tol = TOLERANCES.membership_rel if tol is None else tol
    X_star = as_matd(X_star)
    if X_star.ndim != 2:
        raise InvalidParameters("violation_witness takes one matrix")
    q, qd, nu = params.q, params.q_dual, params.nu

    if ellipsoid_gauge(X_star, params) <= params.tau_hat * (1.0 + tol):
        raise NoWitness("X* lies inside the subdifferential ellipsoid")

    Xs, Xa = decompose(X_star)
    ns, na = float(norm(Xs)), float(norm(Xa))
    Ys = (ns ** (qd - 2.0) if ns > 0 else 0.0) * Xs
    Ya = nu ** (1.0 - qd) * (na ** (qd - 2.0) if na > 0 else 0.0) * Xa
    Y = Ys + Ya
    Y = Y / float(norm(Y))

    Ys, Ya = decompose(Y)
    pairing = float(inner(X_star, Y))
    support = params.tau_hat * (float(norm(Ys)) ** q + nu * float(norm(Ya)) ** q) ** (1.0 / q)
    if not pairing > support * (1.0 + tol):
        raise NoWitness(f"no strict violation at tolerance: X*:Y={pairing!r}, tau_hat W={support!r}")
    logging.debug(f"Witness certifies X*:Y - tau_hat W = {pairing - support:.3e}")
    return Y


def plug_mask(B: MatD, omega, params: FluidParams, tol=None) -> np.ndarray:
    B = as_matd(B)
    tol = plug_tolerance(B) if tol is None else tol
    return flow_criterion(B, omega, params) <= tol


def classify_plug(B: MatD, omega, params: FluidParams, tol: float = None) -> Regime:
    """Plug iff |B_s + nu (B_a - omega)| <= tol."""
    B = as_matd(B)
    if B.ndim != 2:
        raise InvalidParameters("classify_plug takes one matrix; use plug_mask for arrays")
    return Regime.PLUG if bool(plug_mask(B, omega, params, tol)) else Regime.FLOW


def plug_fraction(field: FieldD, omega, params: FluidParams, tol=None) -> float:
    """Fraction of grid nodes whose velocity gradient is classified as plug."""
    mask = plug_mask(field.gradient(), omega, params, tol)
    return float(np.mean(mask))


def check_est_dw(X: MatD, omega, params: FluidParams) -> float:
    """|B_nu_q| / |B_hat|^{2(q-1)/q}; never exceeds max(1, nu^{1/q})."""
    X = as_matd(X)
    if np.any(flow_criterion(X, omega, params) <= 0):
        raise AtPlugPoint("check_est_dw is undefined at plug points")
    blocks = building_blocks(X, omega, params)
    q = params.q
    ratio = norm(blocks.b_nu_q) / (norm(blocks.b_hat_nu_q) ** 2) ** ((q - 1.0) / q)
    return float(ratio) if np.ndim(ratio) == 0 else ratio


def est_dw_bound(params: FluidParams) -> float:
    return max(1.0, params.nu ** (1.0 / params.q))
