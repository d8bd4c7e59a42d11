"""Seeded property suites over the constitutive laws and the plug geometry.

Each suite returns a JSON-ready report
``{suite, status, params, samples, worst_margin, failures, failure_count, seed, details}``.
Margins are normalized so that a negative value beyond the suite tolerance is
a violation; failing cases carry their full inputs. Reports hold no timings,
so the same seed gives byte-identical files.
"""
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from config import TOLERANCES, FluidParams
from constitutive import (
    cb_explicit_stress, cb_flow_direction, cb_implicit_residual, coercivity_bounds, dir_deriv_V, flow_criterion,
    grad_V, modified_plastic_operator, plastic_operator, potential_V, potential_Vn,
    stress_exact_batch, stress_regularized, stress_sr_explicit,
)
from fields import FieldD
from subdiff_geometry import (
    bingham_subdifferential_contains, ellipsoid_gauge, in_subdifferential_at_plug,
    r_q_numeric, r_q_value, r_star, violation_witness,
)
from tensor_core import decompose, inner, norm, random_antisymmetric, random_matrices, sym

MAX_FAILURES = 20

SUITE_ORDER = (
    "coercivity", "subgradient", "monotonicity", "korn", "regularization",
    "gradient", "stress_bound", "geometry", "implicit_law", "flow_stress_floor",
)

DEFAULT_SAMPLES = {
    "coercivity": 2000,
    "subgradient": 1000,
    "monotonicity": 5000,
    "korn": 4,
    "regularization": 50,
    "gradient": 500,
    "stress_bound": 2000,
    "geometry": 1000,
    "implicit_law": 10000,
    "flow_stress_floor": 5000,
}

# Per-point counts of the acceptance contract; 1000 gradient points over the 24-point grid clear 1e4.
ACCEPTANCE_SAMPLES = dict(
    DEFAULT_SAMPLES,
    coercivity=100_000,
    monotonicity=100_000,
    gradient=1000,
    stress_bound=100_000,
    flow_stress_floor=100_000,
)

SAMPLE_PROFILES = {"default": DEFAULT_SAMPLES, "acceptance": ACCEPTANCE_SAMPLES}


def default_params_grid(mu1: float = 1.0, mu2: float = 0.7, tau_star: float = 0.8) -> List[FluidParams]:
    """p in {2, 2.2, 3}, q in {2, 3}, nu in {0, 0.5, 1, 4}; mu2 = 0 whenever nu = 0."""
    grid = []
    for p in (2.0, 2.2, 3.0):
        for q in (2.0, 3.0):
            for nu in (0.0, 0.5, 1.0, 4.0):
                grid.append(FluidParams(mu1=mu1, mu2=0.0 if nu == 0 else mu2, nu=nu,
                                        tau_star=tau_star, p=p, q=q))
    return grid


def params_dict(params: FluidParams) -> Dict[str, float]:
    return params.model_dump()


def _tolist(a) -> Any:
    return np.asarray(a).tolist()


def _finite(x: float) -> Optional[float]:
    x = float(x)
    return x if math.isfinite(x) else None


# --- sampling ---------------------------------------------------------------

def flow_samples(rng: np.random.Generator, count: int, dim: int, params: FluidParams,
                 omega: np.ndarray, floor: float = 0.1) -> np.ndarray:
    """Uniform[-2, 2] matrices with |B_nu| > floor against the matching omega rows."""
    kept = []
    total = 0
    while total < count:
        X = random_matrices(rng, count, dim)
        ok = flow_criterion(X, omega, params) > floor
        kept.append(X[ok])
        total += int(ok.sum())
    return np.concatenate(kept)[:count]


def near_plug_samples(rng: np.random.Generator, count: int, dim: int, params: FluidParams,
                      omega: np.ndarray) -> np.ndarray:
    """Matrices with |B_nu| log-uniform in [1e-8, 1e-2] relative to the given omega."""
    Z = random_matrices(rng, count, dim)
    Z /= norm(Z)[:, None, None]
    size = 10.0 ** rng.uniform(-8.0, -2.0, size=count)
    Zs, Za = decompose(Z)
    if params.nu > 0:
        return size[:, None, None] * Zs + omega + (size / params.nu)[:, None, None] * Za
    Zs_unit = Zs / np.maximum(norm(Zs), 1e-300)[:, None, None]
    return size[:, None, None] * Zs_unit + random_antisymmetric(rng, count, dim)


def mixed_samples(rng, count, dim, params, omega):
    """Bulk uniform samples with a tenth of curated near-plug points."""
    near = count // 10
    X = random_matrices(rng, count - near, dim)
    return np.concatenate([X, near_plug_samples(rng, near, dim, params, omega[count - near:count])])


# --- oracles ----------------------------------------------------------------

def finite_difference_gradient(f: Callable[[np.ndarray], np.ndarray], X: np.ndarray,
                               step: float = None) -> np.ndarray:
    """Central differences of a batched scalar function, step scaled by max(1, |X|)."""
    step = TOLERANCES.fd_step if step is None else step
    X = np.asarray(X, dtype=np.float64)
    h = step * np.maximum(1.0, norm(X))
    d = X.shape[-1]
    G = np.empty_like(X)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            shift = h[..., None, None] * E
            G[..., i, j] = (f(X + shift) - f(X - shift)) / (2.0 * h)
    return G


def sampled_membership_oracle(X_star: np.ndarray, X: np.ndarray, omega, params: FluidParams,
                              rng: np.random.Generator, random_dirs: int = 256, angles: int = 2001,
                              lam: float = 1e-6) -> bool:
    """Sampled form of V(X + lam Y) - V(X) >= lam X*:Y.

    Directions are random unit matrices plus the unit circle spanned by the
    symmetric and antisymmetric parts of X* (shifted by the viscous part at X),
    where the supporting direction of the subdifferential lives.
    """
    d = X.shape[-1]
    Y_random = random_matrices(rng, random_dirs, d)
    Y_random /= norm(Y_random)[:, None, None]

    Xs, Xa = decompose(X)
    R = Xa - (0.0 if omega is None else omega)
    shift = params.mu2 * (float(norm(R)) ** (params.p - 2) if float(norm(R)) > 0 else 0.0) * R
    Ps, Pa = decompose(X_star - shift)
    es = Ps / float(norm(Ps)) if float(norm(Ps)) > 0 else np.zeros((d, d))
    ea = Pa / float(norm(Pa)) if float(norm(Pa)) > 0 else np.zeros((d, d))
    theta = np.linspace(0.0, 2.0 * np.pi, angles)
    Y_aligned = np.cos(theta)[:, None, None] * es + np.sin(theta)[:, None, None] * ea
    Y = np.concatenate([Y_random, Y_aligned])
    Y = Y[norm(Y) > 0]

    base = potential_V(X, omega, params)
    increase = potential_V(X + lam * Y, omega, params) - base
    pairing = lam * inner(X_star, Y)
    slack = 1e-9 * lam * (1.0 + float(norm(X_star)))
    return bool(np.all(increase >= pairing - slack))


# --- reports ----------------------------------------------------------------

@dataclass
class SuiteReport:
    suite: str
    seed: int
    params: List[Dict[str, float]] = field(default_factory=list)
    samples: int = 0
    worst_margin: float = math.inf
    failures: List[Dict[str, Any]] = field(default_factory=list)
    failure_count: int = 0
    details: Dict[str, Any] = field(default_factory=dict)
    measured_only: bool = False

    def observe(self, margins: np.ndarray, tol: float, make_case: Callable[[int], Dict[str, Any]]) -> None:
        """Fold normalized margins into the report; margins below -tol are failures."""
        margins = np.atleast_1d(np.asarray(margins, dtype=np.float64))
        if margins.size == 0:
            return
        self.samples += margins.size
        self.worst_margin = min(self.worst_margin, float(np.min(margins)))
        bad = np.flatnonzero(~(margins >= -tol))
        self.failure_count += bad.size
        for i in bad[:max(0, MAX_FAILURES - len(self.failures))]:
            case = make_case(int(i))
            case["margin"] = _finite(margins[i])
            self.failures.append(case)

    def fail(self, case: Dict[str, Any]) -> None:
        self.failure_count += 1
        if len(self.failures) < MAX_FAILURES:
            self.failures.append(case)

    def merge(self, other: "SuiteReport") -> None:
        self.params.extend(other.params)
        self.samples += other.samples
        self.worst_margin = min(self.worst_margin, other.worst_margin)
        self.failure_count += other.failure_count
        self.failures.extend(other.failures[:max(0, MAX_FAILURES - len(self.failures))])
        for key, value in other.details.items():
            self.details.setdefault(key, []).append(value)

    @property
    def status(self) -> str:
        if self.failure_count:
            return "failed"
        return "measured" if self.measured_only else "passed"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "status": self.status,
            "params": self.params,
            "samples": self.samples,
            "worst_margin": _finite(self.worst_margin),
            "failures": self.failures,
            "failure_count": self.failure_count,
            "seed": self.seed,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False)


def _per_params(suite: str, seed: int, params_grid: Sequence[FluidParams], ss: np.random.SeedSequence,
                body: Callable[[FluidParams, np.random.Generator, SuiteReport], None],
                jobs: int = 1) -> SuiteReport:
    """Run ``body`` once per parameter point, each with its own child seed, merge in order."""
    children = ss.spawn(len(params_grid))

    def one(i: int) -> SuiteReport:
        part = SuiteReport(suite=suite, seed=seed, params=[params_dict(params_grid[i])])
        body(params_grid[i], np.random.default_rng(children[i]), part)
        part.details = {"point": part.details} if part.details else {}
        return part

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        parts = list(executor.map(one, range(len(params_grid))))

    report = SuiteReport(suite=suite, seed=seed)
    for part in parts:
        report.merge(part)
    return report


def _case(params: FluidParams, **arrays) -> Dict[str, Any]:
    case = {"params": params_dict(params)}
    case.update({k: _tolist(v) if isinstance(v, np.ndarray) else v for k, v in arrays.items()})
    return case


# --- suites -----------------------------------------------------------------

def suite_coercivity(params_grid: Sequence[FluidParams], samples: int, seed: int,
                     ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3,
                     c1_scale: float = 1.0, reg_levels: Sequence[float] = (1.0, 1e3)) -> SuiteReport:
    """lower <= V'(X; X) <= upper and the same for S^n : X."""

    def body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        omega[: samples // 20] = 0.0
        X = mixed_samples(rng, samples, dim, params, omega)
        lower, upper = coercivity_bounds(X, omega, params, c1_scale=c1_scale)
        scale = 1.0 + np.abs(upper)
        values = {}
        if params.potentials_admissible:
            values["V"] = dir_deriv_V(X, X, omega, params)
        for n in reg_levels:
            values[f"Vn[{n:g}]"] = inner(stress_regularized(X, omega, params, n), X)
        for label, value in values.items():
            for side, margin in (("lower", (value - lower) / scale), ("upper", (upper - value) / scale)):
                report.observe(margin, 1e-12, lambda i, label=label, side=side, value=value: _case(
                    params, X=X[i], omega=omega[i], potential=label, bound=side,
                    value=float(value[i]), lower=float(lower[i]), upper=float(upper[i])))

    report = _per_params("coercivity", seed, params_grid, ss, body, jobs)
    report.details = {"c1_scale": c1_scale, "reg_levels": list(reg_levels)}
    return report


def suite_subgradient(params_grid: Sequence[FluidParams], samples: int, seed: int,
                      ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3) -> SuiteReport:
    """Subgradient inequality off the plug, membership against the oracle at the plug."""
    admissible = [p for p in params_grid if p.potentials_admissible]

    def body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        X = flow_samples(rng, samples, dim, params, omega)
        Y = random_matrices(rng, samples, dim)
        S = grad_V(X, omega, params)
        vx, vy = potential_V(X, omega, params), potential_V(Y, omega, params)
        gap = vy - vx - inner(S, Y - X)
        scale = 1.0 + np.abs(vx) + np.abs(vy) + norm(S) * norm(Y - X)
        report.observe(gap / scale, 1e-12, lambda i: _case(params, X=X[i], Y=Y[i], omega=omega[i], check="V"))

        equality = np.abs(potential_V(X, omega, params) - vx - inner(S, X - X)) / scale
        report.observe(-equality, 0.0, lambda i: _case(params, X=X[i], omega=omega[i], check="Y=X"))

        for n in (1.0, 1e3, 1e9):
            Sn = stress_regularized(X, omega, params, n)
            vxn, vyn = potential_Vn(X, omega, params, n), potential_Vn(Y, omega, params, n)
            gap = vyn - vxn - inner(Sn, Y - X)
            scale = 1.0 + np.abs(vxn) + np.abs(vyn) + norm(Sn) * norm(Y - X)
            report.observe(gap / scale, 1e-12, lambda i, n=n: _case(
                params, X=X[i], Y=Y[i], omega=omega[i], check="Vn", n=n))

        lam = rng.uniform(0.0, 1.0, size=samples)
        mid = lam[:, None, None] * X + (1.0 - lam)[:, None, None] * Y
        for label, potential in (("V", lambda Z: potential_V(Z, omega, params)),
                                 ("Vn", lambda Z: potential_Vn(Z, omega, params, 1e3))):
            chord = lam * potential(X) + (1.0 - lam) * potential(Y)
            report.observe((chord - potential(mid)) / (1.0 + np.abs(chord)), 1e-12, lambda i, label=label: _case(
                params, X=X[i], Y=Y[i], omega=omega[i], lam=float(lam[i]), check=f"{label} segment convexity"))

        points = max(4, samples // 50)
        agree = 0
        for k in range(points):
            factor = 0.99 if k % 2 == 0 else 1.01
            w = random_antisymmetric(rng, 1, dim)[0]
            Z = random_matrices(rng, 1, dim)[0]
            if params.nu > 0:
                plug = w
                X_star = factor * params.tau_hat * Z / ellipsoid_gauge(Z, params)
            else:
                plug = random_antisymmetric(rng, 1, dim)[0]
                Zs = sym(Z)
                R = plug - w
                shift = params.mu2 * float(norm(R)) ** (params.p - 2) * R
                X_star = shift + factor * params.tau_star * Zs / float(norm(Zs))
            member = in_subdifferential_at_plug(X_star, w, params, plug_matrix=plug)
            oracle = sampled_membership_oracle(X_star, plug, w, params, rng)
            if member == oracle and member == (factor < 1):
                agree += 1
            else:
                report.fail(_case(params, X_star=X_star, plug_matrix=plug, omega=w,
                                  check="membership", ellipsoid=bool(member), oracle=bool(oracle)))
        report.details = {"membership_points": points, "membership_agreements": agree}

        if params.nu == 0 and params.p == 2 and params.q == 2:
            stars = random_matrices(rng, samples, dim)
            stars[::2] = sym(stars[::2])
            plug = random_antisymmetric(rng, 1, dim)[0]
            mismatches = 0
            for X_star in stars:
                if in_subdifferential_at_plug(X_star, None, params, plug_matrix=plug) != \
                        bingham_subdifferential_contains(X_star, params.tau_star):
                    mismatches += 1
                    report.fail(_case(params, X_star=X_star, plug_matrix=plug, check="bingham"))
            report.details["bingham_mismatches"] = mismatches

    return _per_params("subgradient", seed, admissible, ss, body, jobs)


def _plane_pair(a1, b1, a2, b2):
    """Matrices a e_s + b e_a in the plane of one symmetric and one antisymmetric unit direction."""
    es = np.zeros((3, 3))
    es[0, 1] = es[1, 0] = 1.0 / math.sqrt(2.0)
    ea = np.zeros((3, 3))
    ea[0, 1], ea[1, 0] = 1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)
    X1 = np.asarray(a1)[..., None, None] * es + np.asarray(b1)[..., None, None] * ea
    X2 = np.asarray(a2)[..., None, None] * es + np.asarray(b2)[..., None, None] * ea
    return X1, X2


def _operator_inner(operator, X1, X2, omega, params):
    X1s, X1a = decompose(X1)
    X2s, X2a = decompose(X2)
    P1 = operator(X1s, X1a - omega, params)
    P2 = operator(X2s, X2a - omega, params)
    return inner(P1 - P2, X1 - X2)


def find_po_counterexample(rng: np.random.Generator, params: FluidParams, tries: int = 20000,
                           step: float = 0.02) -> Optional[Dict[str, Any]]:
    """Search the (sym, antisym) plane for a pair where the plastic operator is not monotone."""
    a1, b1 = rng.uniform(-3.0, 3.0, size=(2, tries))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=tries)
    X1, X2 = _plane_pair(a1, b1, a1 + step * np.cos(phi), b1 + step * np.sin(phi))
    keep = (np.abs(a1) > 1e-3) & (np.abs(b1) > 1e-3)
    X1, X2 = X1[keep], X2[keep]
    zero = np.zeros((3, 3))
    po = _operator_inner(plastic_operator, X1, X2, zero, params)
    i = int(np.argmin(po))
    if not po[i] < -1e-12:
        return None
    mpo = _operator_inner(modified_plastic_operator, X1[i], X2[i], zero, params)
    return {"X1": _tolist(X1[i]), "X2": _tolist(X2[i]),
            "plastic_operator_inner": float(po[i]), "modified_plastic_operator_inner": float(mpo)}


def suite_monotonicity(params_grid: Sequence[FluidParams], samples: int, seed: int,
                       ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3) -> SuiteReport:
    """mpo and S^n monotone; the plastic operator at q = 2, nu = 0.5 is not."""
    mpo_grid = [FluidParams(mu1=1.0, nu=nu, q=q, tau_star=1.0)
                for nu in (0.0, 0.3, 1.0, 5.0) for q in (2.0, 2.5, 4.0)]
    mpo_seed, stress_seed, search_seed = ss.spawn(3)

    def mpo_body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        X1, X2 = random_matrices(rng, samples, dim), random_matrices(rng, samples, dim)
        values = _operator_inner(modified_plastic_operator, X1, X2, omega, params)
        report.observe(values, -TOLERANCES.monotone_floor, lambda i: _case(
            params, X1=X1[i], X2=X2[i], omega=omega[i], operator="modified_plastic_operator"))
        same = _operator_inner(modified_plastic_operator, X1, X1, omega, params)
        report.observe(-np.abs(same), 0.0, lambda i: _case(params, X=X1[i], check="identical pair"))

    def stress_body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        X1, X2 = random_matrices(rng, samples, dim), random_matrices(rng, samples, dim)
        for n in (1.0, 1e3, 1e9):
            S1 = stress_regularized(X1, omega, params, n)
            S2 = stress_regularized(X2, omega, params, n)
            scale = np.maximum(1.0, norm(S1 - S2) * norm(X1 - X2))
            report.observe(inner(S1 - S2, X1 - X2) / scale, -TOLERANCES.monotone_floor, lambda i, n=n: _case(
                params, X1=X1[i], X2=X2[i], omega=omega[i], n=n, operator="stress_regularized"))

    report = _per_params("monotonicity", seed, mpo_grid, mpo_seed, mpo_body, jobs)
    report.merge(_per_params("monotonicity", seed, params_grid, stress_seed, stress_body, jobs))

    po_params = FluidParams(mu1=1.0, nu=0.5, q=2.0, tau_star=1.0)
    counterexample = find_po_counterexample(np.random.default_rng(search_seed), po_params)
    if counterexample is None:
        report.fail({"params": params_dict(po_params), "check": "plastic operator counterexample not found"})
    else:
        logging.info(f"🔍 Plastic operator counterexample: po inner {counterexample['plastic_operator_inner']:.3e}, "
                     f"mpo inner {counterexample['modified_plastic_operator_inner']:.3e}")
    report.details = {"plastic_operator_counterexample": counterexample}
    return report


def korn_ratio(field: FieldD, p: float) -> float:
    """||grad v||_p / (||v||_2 + ||(grad v)_s||_p); 0 for the zero field."""
    B = field.gradient()
    numerator = field.lp_norm(norm(B), p)
    denominator = field.lp_norm(field.magnitude(), 2.0) + field.lp_norm(norm(sym(B)), p)
    if denominator == 0:
        return 0.0
    return numerator / denominator


def smooth_periodic_field(rng: np.random.Generator, modes: int = 3) -> Callable[[int], FieldD]:
    """Random trigonometric polynomial on [0, 2 pi)^2, returned as a sampler for any grid size."""
    ks = [(kx, ky) for kx in range(-modes, modes + 1) for ky in range(-modes, modes + 1) if (kx, ky) != (0, 0)]
    coeffs = rng.standard_normal((2, len(ks), 2)) / (1.0 + np.array([kx * kx + ky * ky for kx, ky in ks]))[None, :, None]
    mean = rng.standard_normal(2) * 0.1

    def sample(M: int) -> FieldD:
        axis = 2.0 * np.pi * np.arange(M) / M
        x, y = np.meshgrid(axis, axis, indexing="ij")
        v = np.zeros((2, M, M)) + mean[:, None, None]
        for m, (kx, ky) in enumerate(ks):
            phase = kx * x + ky * y
            for c in range(2):
                v[c] += coeffs[c, m, 0] * np.cos(phase) + coeffs[c, m, 1] * np.sin(phase)
        return FieldD(values=v, spacing=(2.0 * np.pi / M, 2.0 * np.pi / M), periodic=True)

    return sample


def suite_korn(samples: int, seed: int, ss: np.random.SeedSequence,
               exponents: Sequence[float] = (2.0, 2.2, 3.0), coarse: int = 64, fine: int = 128) -> SuiteReport:
    """Korn ratio of random smooth periodic fields, finite and stable under refinement."""
    report = SuiteReport(suite="korn", seed=seed)
    rng = np.random.default_rng(ss)
    worst = 0.0
    for k in range(samples):
        sample = smooth_periodic_field(rng)
        f_coarse, f_fine = sample(coarse), sample(fine)
        for p in exponents:
            r_coarse, r_fine = korn_ratio(f_coarse, p), korn_ratio(f_fine, p)
            worst = max(worst, r_fine)
            change = abs(r_fine - r_coarse) / r_coarse if r_coarse > 0 else math.inf
            ok = math.isfinite(r_fine) and change <= 0.1
            report.observe(np.array([0.1 - change if ok else -1.0]), 0.0, lambda i, p=p: {
                "field": k, "p": p, "ratio_coarse": _finite(r_coarse), "ratio_fine": _finite(r_fine)})
    report.details = {"max_ratio": worst, "grids": [coarse, fine], "exponents": list(exponents)}
    return report


def suite_regularization(params_grid: Sequence[FluidParams], samples: int, seed: int,
                         ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3,
                         levels: Sequence[float] = (1e2, 1e4, 1e6, 1e8)) -> SuiteReport:
    """|S^n - grad V| decreasing in n, small at the last level; 0 < V^n - V <= tau_hat n^{-1/q}."""

    def body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        X = flow_samples(rng, samples, dim, params, omega)
        G = grad_V(X, omega, params)
        errors = np.stack([norm(stress_regularized(X, omega, params, n) - G) for n in levels], axis=1)
        steps = errors[:, :-1] - errors[:, 1:]
        report.observe(np.min(steps / np.maximum(errors[:, :-1], 1e-300), axis=1), 1e-12,
                       lambda i: _case(params, X=X[i], omega=omega[i], check="monotone decrease",
                                       errors=_tolist(errors[i])))
        limit = 1e-3 * (1.0 + norm(G))
        report.observe((limit - errors[:, -1]) / limit, 0.0, lambda i: _case(
            params, X=X[i], omega=omega[i], check="final error", error=float(errors[i, -1])))

        if params.tau_hat > 0:
            Y = np.concatenate([mixed_samples(rng, samples, dim, params, omega), omega[:1]])
            w = np.concatenate([omega, omega[:1]])
            for n in levels:
                gap = potential_Vn(Y, w, params, n) - potential_V(Y, w, params)
                cap = params.tau_hat * n ** (-1.0 / params.q)
                report.observe(np.where(gap > 0, (cap * (1.0 + 1e-12) - gap) / cap, -1.0), 0.0,
                               lambda i, n=n, gap=gap: _case(params, X=Y[i], omega=w[i], n=n,
                                                            check="potential gap", gap=float(gap[i])))

        slopes = np.diff(np.log10(np.maximum(errors, 1e-300)), axis=1) / np.diff(np.log10(levels))
        report.details = {
            "empirical_rate": float(np.median(slopes)),
            "at_omega": _tolist(norm(stress_regularized(omega[0], omega[0], params, levels[0]))),
        }

    return _per_params("regularization", seed, [p for p in params_grid if p.potentials_admissible],
                       ss, body, jobs)


def suite_gradient(params_grid: Sequence[FluidParams], samples: int, seed: int,
                   ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3, reg_n: float = 1e3) -> SuiteReport:
    """grad_V and S^n against central differences of V and V^n, relative error <= 1e-6."""

    def body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        X = flow_samples(rng, samples, dim, params, omega)
        checks = (
            ("V", grad_V(X, omega, params), lambda Z: potential_V(Z, omega, params)),
            ("Vn", stress_regularized(X, omega, params, reg_n), lambda Z: potential_Vn(Z, omega, params, reg_n)),
        )
        for label, exact, f in checks:
            fd = finite_difference_gradient(f, X)
            err = norm(fd - exact) / np.maximum(1.0, norm(exact))
            report.observe(TOLERANCES.gradient_rel - err, 0.0, lambda i, label=label, err=err: _case(
                params, X=X[i], omega=omega[i], potential=label, relative_error=float(err[i])))

    return _per_params("gradient", seed, [p for p in params_grid if p.potentials_admissible], ss, body, jobs)


def suite_stress_bound(params_grid: Sequence[FluidParams], samples: int, seed: int,
                       ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3) -> SuiteReport:
    """|S^n| <= mu1 |X_s|^{p-1} + mu2 |R|^{p-1} + tau_star."""

    def body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        X = mixed_samples(rng, samples, dim, params, omega)
        Xs, Xa = decompose(X)
        p = params.p
        bound = params.mu1 * norm(Xs) ** (p - 1) + params.mu2 * norm(Xa - omega) ** (p - 1) + params.tau_star
        for n in (1.0, 1e3, 1e9):
            size = norm(stress_regularized(X, omega, params, n))
            report.observe((bound - size) / np.maximum(1.0, bound), 1e-12, lambda i, n=n: _case(
                params, X=X[i], omega=omega[i], n=n))

    return _per_params("stress_bound", seed, params_grid, ss, body, jobs)


def suite_geometry(params_grid: Sequence[FluidParams], samples: int, seed: int,
                   ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3) -> SuiteReport:
    """Ellipsoid test vs oracle, ball sandwich, witnesses and the r_q closed form."""
    oracle_seed, sandwich_seed, rq_seed = ss.spawn(3)
    ellipsoid_grid = [p for p in params_grid if p.nu > 0 and p.p in (2.0, 3.0)]
    per_point = max(1, samples // max(1, len(ellipsoid_grid)))

    def oracle_body(params, rng, report):
        disagreements = 0
        for k in range(per_point):
            factor = 0.99 if k % 2 == 0 else 1.01
            w = random_antisymmetric(rng, 1, dim)[0]
            Z = random_matrices(rng, 1, dim)[0]
            X_star = factor * params.tau_hat * Z / ellipsoid_gauge(Z, params)
            member = in_subdifferential_at_plug(X_star, w, params)
            oracle = sampled_membership_oracle(X_star, w, w, params, rng)
            if member != oracle or member != (factor < 1):
                disagreements += 1
                report.fail(_case(params, X_star=X_star, omega=w, ellipsoid=bool(member), oracle=bool(oracle)))
            if factor > 1:
                try:
                    Y = violation_witness(X_star, params)
                    Ys, Ya = decompose(Y)
                    support = params.tau_hat * (float(norm(Ys)) ** params.q + params.nu * float(norm(Ya)) ** params.q) ** (1.0 / params.q)
                    report.observe(np.array([float(inner(X_star, Y)) - support]), 0.0,
                                   lambda i: _case(params, X_star=X_star, check="witness"))
                except Exception as e:
                    report.fail(_case(params, X_star=X_star, check="witness", error=str(e)))
        report.samples += per_point
        report.details = {"disagreements": disagreements}

    def sandwich_body(params, rng, report):
        count = samples * 10
        Z = random_matrices(rng, count, dim)
        Z /= norm(Z)[:, None, None]
        inner_radius = r_star(params)
        radii = inner_radius * (1.0 - 1e-9) * rng.uniform(0.0, 1.0, size=count) ** (1.0 / (dim * dim))
        small = radii[:, None, None] * Z
        inside = in_subdifferential_at_plug(small, None, params)
        report.observe(np.where(inside, 1.0, -1.0), 0.0, lambda i: _case(params, X_star=small[i], check="inner ball"))

        box = rng.uniform(-1.0, 1.0, size=(count, dim, dim)) * params.tau_star
        members = box[in_subdifferential_at_plug(box, None, params)]
        outer = params.tau_star * (1.0 + TOLERANCES.membership_rel) - norm(members)
        report.observe(outer / params.tau_star, 0.0, lambda i: _case(params, X_star=members[i], check="outer ball"))

    report = _per_params("geometry", seed, ellipsoid_grid, oracle_seed, oracle_body, jobs)
    report.merge(_per_params("geometry", seed, ellipsoid_grid, sandwich_seed, sandwich_body, jobs))

    rng = np.random.default_rng(rq_seed)
    pairs = [(float(q), float(nu)) for q, nu in zip(rng.uniform(2.0, 6.0, 20), rng.uniform(0.05, 8.0, 20))]
    pairs[:3] = [(2.0, 0.25), (2.0, 1.0), (3.0, 2.0)]
    worst_rq = 0.0
    for q, nu in pairs:
        closed, numeric = r_q_value(q, nu), r_q_numeric(q, nu)
        worst_rq = max(worst_rq, abs(closed - numeric))
        if abs(closed - numeric) > 1e-10:
            report.fail({"check": "r_q", "q": q, "nu": nu, "closed_form": closed, "numeric": numeric})
    nus = np.linspace(0.0, 4.0, 81)
    for q in (2.0, 3.0, 4.0):
        values = np.array([r_q_value(q, nu) for nu in nus])
        if np.any(np.diff(values) < -1e-15):
            report.fail({"check": "r_q monotone in nu", "q": q})
    report.details = {"r_q_pairs": len(pairs), "r_q_max_error": worst_rq, **report.details}
    return report


def suite_implicit_law(samples: int, seed: int, ss: np.random.SeedSequence, dim: int = 3) -> SuiteReport:
    """cb_explicit_stress satisfies the implicit law along B_0; with a1 = a2 = 0 it is the explicit law."""
    report = SuiteReport(suite="implicit_law", seed=seed)
    rng = np.random.default_rng(ss)
    plugs = 0
    for k in range(samples):
        p = (2.0, 2.5, 3.0)[k % 3]
        zero_offsets = k % 4 == 0
        mu1, mu2 = rng.uniform(0.2, 2.0, size=2)
        a1, a2 = (0.0, 0.0) if zero_offsets else rng.uniform(0.0, 1.0, size=2)
        params = FluidParams(mu1=float(mu1), mu2=float(mu2), nu=float(mu2 / mu1), p=p,
                             tau_star=float(rng.uniform(0.1, 2.0)), a1=float(a1), a2=float(a2))
        B = random_matrices(rng, 1, dim)[0]
        w = random_antisymmetric(rng, 1, dim)[0]
        result = cb_explicit_stress(B, w, params)
        if result.is_plug:
            plugs += 1
            continue
        S = result.stress
        residual = cb_implicit_residual(S, B, w, params)
        limit = TOLERANCES.cb_residual_rel * (1.0 + float(norm(S)))
        report.observe(np.array([(limit - residual) / limit]), 0.0,
                       lambda i: _case(params, B=B, omega=w, S=S, check="implicit residual"))
        B0, eps = cb_flow_direction(B, w, params)
        if np.isfinite(eps) and float(norm(B0)) > 0:
            misalign = float(norm(S / norm(S) - B0 / norm(B0)))
            report.observe(np.array([1e-10 - misalign]), 0.0, lambda i: _case(
                params, B=B, omega=w, S=S, check="flow direction", misalignment=misalign))
        if zero_offsets:
            explicit = stress_sr_explicit(B, w, params)
            diff = float(norm(explicit.stress - S)) / (1.0 + float(norm(S)))
            report.observe(np.array([1e-12 - diff]), 0.0,
                           lambda i: _case(params, B=B, omega=w, check="explicit law", difference=diff))
    report.params = [{"p": [2.0, 2.5, 3.0], "mu1": [0.2, 2.0], "mu2": [0.2, 2.0], "tau_star": [0.1, 2.0],
                      "a1": [0.0, 1.0], "a2": [0.0, 1.0]}]
    report.details = {"plug_samples": plugs}
    return report


def suite_flow_stress_floor(params_grid: Sequence[FluidParams], samples: int, seed: int,
                            ss: np.random.SeedSequence, jobs: int = 1, dim: int = 3) -> SuiteReport:
    """Measures min |S| / tau_star over flow-branch points; reported, not asserted."""

    def body(params, rng, report):
        omega = random_antisymmetric(rng, samples, dim)
        X = mixed_samples(rng, samples, dim, params, omega)
        S, plug = stress_exact_batch(X, omega, params)
        sizes = norm(S[~plug])
        ratio = float(np.min(sizes) / params.tau_star) if sizes.size and params.tau_star > 0 else None
        report.samples += int((~plug).sum())
        report.details = {"min_stress_over_tau_star": ratio,
                          "below_tau_star": int(np.sum(sizes <= params.tau_star))}

    report = _per_params("flow_stress_floor", seed, params_grid, ss, body, jobs)
    report.measured_only = True
    return report


def run_suite(name: str, seed: int, ss: np.random.SeedSequence, samples: Optional[int] = None,
              params_grid: Optional[Sequence[FluidParams]] = None, jobs: int = 1,
              profile: str = "default") -> SuiteReport:
    """Run one suite; an explicit sample count overrides the profile."""
    if name not in SUITE_ORDER:
        raise ValueError(f"unknown suite '{name}'; choose from {', '.join(SUITE_ORDER)} or 'all'")
    if profile not in SAMPLE_PROFILES:
        raise ValueError(f"unknown sample profile '{profile}'; choose from {', '.join(SAMPLE_PROFILES)}")
    count = SAMPLE_PROFILES[profile][name] if samples is None else samples
    grid = default_params_grid() if params_grid is None else list(params_grid)
    logging.info(f"🔍 Running suite '{name}' with {count} samples per point ({profile} profile)")
    if name == "korn":
        return suite_korn(count, seed, ss)
    if name == "implicit_law":
        return suite_implicit_law(count, seed, ss)
    suite = {
        "coercivity": suite_coercivity,
        "subgradient": suite_subgradient,
        "monotonicity": suite_monotonicity,
        "regularization": suite_regularization,
        "gradient": suite_gradient,
        "stress_bound": suite_stress_bound,
        "geometry": suite_geometry,
        "flow_stress_floor": suite_flow_stress_floor,
    }[name]
    return suite(grid, count, seed, ss, jobs=jobs)


def run_suites(names: Sequence[str], seed: int, samples: Optional[int] = None,
               params_grid: Optional[Sequence[FluidParams]] = None, jobs: int = 1,
               profile: str = "default") -> List[SuiteReport]:
    """Run the named suites ('all' expands to every suite) with seeds fixed per suite name."""
    if "all" in names:
        names = SUITE_ORDER
    unknown = set(names) - set(SUITE_ORDER)
    if unknown:
        raise ValueError(f"unknown suite(s) {sorted(unknown)}; choose from {', '.join(SUITE_ORDER)} or 'all'")
    children = dict(zip(SUITE_ORDER, np.random.SeedSequence(seed).spawn(len(SUITE_ORDER))))
    reports = []
    for name in SUITE_ORDER:
        if name not in names:
            continue
        report = run_suite(name, seed, children[name], samples, params_grid, jobs, profile)
        status = report.status
        marker = "✅" if status != "failed" else "❌"
        logging.info(f"{marker} Suite '{name}': {status}, {report.samples} checks, "
                     f"worst margin {report.worst_margin:.3e}")
        reports.append(report)
    return reports
