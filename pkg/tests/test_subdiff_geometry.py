import numpy as np
import pytest

from config import FluidParams
from constitutive import Regime
from errors import AtPlugPoint, InvalidParameters, MissingPlugMatrix, NoWitness
from fields import FieldD
from subdiff_geometry import (
    bingham_subdifferential_contains, check_est_dw, classify_plug, ellipsoid_gauge, est_dw_bound,
    in_subdifferential_at_plug, plug_fraction, r_q, r_q_numeric, r_q_value, r_star, violation_witness,
)
from tensor_core import decompose, inner, norm, random_antisymmetric, random_matrices, spin, sym
from verify_harness import sampled_membership_oracle


@pytest.mark.parametrize("q, nu", [(2.0, 0.25), (2.0, 3.0), (2.5, 0.5), (3.0, 2.0), (4.0, 0.1), (6.0, 7.5)])
def test_r_q_closed_form_matches_numeric_minimum(q, nu):
    assert abs(r_q_value(q, nu) - r_q_numeric(q, nu)) <= 1e-10


def test_r_q_special_values():
    assert r_q_value(2.0, 0.25) == pytest.approx(0.5)
    assert r_q_value(2.0, 4.0) == 1.0
    assert r_q_value(3.0, 0.0) == 0.0
    with pytest.raises(InvalidParameters):
        r_q_value(1.5, 1.0)


def test_r_q_non_decreasing_in_nu():
    nus = np.linspace(0.0, 4.0, 81)
    for q in (2.0, 3.0, 5.0):
        values = np.array([r_q_value(q, nu) for nu in nus])
        assert np.all(np.diff(values) >= -1e-15)


def test_r_q_near_two_does_not_overflow():
    value = r_q_value(2.0 + 1e-9, 3.0)
    assert np.isfinite(value)
    assert value == pytest.approx(1.0, rel=1e-6)


def test_ball_sandwich(cosserat, rng):
    Z = random_matrices(rng, 2000, 3)
    Z /= norm(Z)[:, None, None]
    inner_ball = r_star(cosserat) * (1.0 - 1e-9) * Z
    assert np.all(in_subdifferential_at_plug(inner_ball, None, cosserat))

    outside = cosserat.tau_star * 1.001 * Z
    assert not np.any(in_subdifferential_at_plug(outside, None, cosserat))
    assert r_star(cosserat) == pytest.approx(cosserat.tau_hat * r_q(cosserat))


def test_ellipsoid_agrees_with_oracle_across_boundary(cosserat, rng):
    for k in range(10):
        factor = 0.99 if k % 2 == 0 else 1.01
        w = random_antisymmetric(rng, 1, 3)[0]
        Z = random_matrices(rng, 1, 3)[0]
        X_star = factor * cosserat.tau_hat * Z / ellipsoid_gauge(Z, cosserat)

        member = in_subdifferential_at_plug(X_star, w, cosserat)
        assert member == (factor < 1)
        assert sampled_membership_oracle(X_star, w, w, cosserat, rng) == member


def test_q_two_ellipsoid_cross_check():
    params = FluidParams(mu1=1.0, mu2=0.3, nu=0.5, tau_star=1.0, q=2.0)
    X_star = np.array([[0.4, 0.3], [-0.1, 0.2]])
    Xs, Xa = decompose(X_star)
    quadratic = float(norm(Xs) ** 2 + norm(Xa) ** 2 / params.nu)
    assert ellipsoid_gauge(X_star, params) == pytest.approx(np.sqrt(quadratic))
    assert in_subdifferential_at_plug(X_star, None, params) == (quadratic <= params.tau_hat ** 2)


def test_violation_witness_certifies(cosserat, rng):
    Z = random_matrices(rng, 1, 3)[0]
    X_star = 1.5 * cosserat.tau_hat * Z / ellipsoid_gauge(Z, cosserat)
    Y = violation_witness(X_star, cosserat)

    Ys, Ya = decompose(Y)
    q = cosserat.q
    support = cosserat.tau_hat * (norm(Ys) ** q + cosserat.nu * norm(Ya) ** q) ** (1.0 / q)
    assert norm(Y) == pytest.approx(1.0)
    assert inner(X_star, Y) > support


def test_no_witness_inside(cosserat):
    with pytest.raises(NoWitness):
        violation_witness(0.1 * np.eye(3), cosserat)


def test_nu_zero_needs_plug_matrix():
    params = FluidParams(mu1=1.0, mu2=0.5, tau_star=1.0)
    with pytest.raises(MissingPlugMatrix):
        in_subdifferential_at_plug(np.eye(3), None, params)
    with pytest.raises(InvalidParameters):
        in_subdifferential_at_plug(np.eye(3), None, params, plug_matrix=np.eye(3))


def test_nu_zero_membership_is_shifted_symmetric_ball(rng):
    params = FluidParams(mu1=1.0, mu2=0.5, tau_star=1.0)
    plug = spin([0.2, -0.4, 0.1], 3)
    shift = params.mu2 * plug
    Zs = sym(random_matrices(rng, 1, 3)[0])
    Zs /= norm(Zs)

    assert in_subdifferential_at_plug(shift + 0.9 * Zs, None, params, plug_matrix=plug)
    assert not in_subdifferential_at_plug(shift + 1.1 * Zs, None, params, plug_matrix=plug)
    # an antisymmetric excess is never admissible
    assert not in_subdifferential_at_plug(shift + 0.1 * plug, None, params, plug_matrix=plug)


def test_bingham_reduction_agrees(bingham, rng):
    plug = random_antisymmetric(rng, 1, 3)[0]
    stars = random_matrices(rng, 200, 3) * 0.6
    stars[::2] = sym(stars[::2])
    for X_star in stars:
        assert in_subdifferential_at_plug(X_star, None, bingham, plug_matrix=plug) == \
            bingham_subdifferential_contains(X_star, bingham.tau_star)


def test_classify_plug(cosserat):
    w = spin(0.5, 2)
    assert classify_plug(w, w, cosserat) is Regime.PLUG
    assert classify_plug(w + np.eye(2), w, cosserat) is Regime.FLOW


def test_plug_fraction_of_rigid_field(bingham):
    values = np.ones((2, 16, 16))
    field = FieldD(values=values, spacing=(0.1, 0.1), periodic=True)
    assert plug_fraction(field, None, bingham) == 1.0


def test_est_dw_bound(cosserat, rng):
    w = random_antisymmetric(rng, 500, 3)
    X = random_matrices(rng, 500, 3)
    assert np.all(check_est_dw(X, w, cosserat) <= est_dw_bound(cosserat) * (1.0 + 1e-12))
    with pytest.raises(AtPlugPoint):
        check_est_dw(w[0], w[0], cosserat)
