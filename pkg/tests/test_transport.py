import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from vacflow.constitutive import PressureLaw
from vacflow.errors import (
    CharacteristicExit,
    DomainError,
    MissingBoundaryData,
    TangencyError,
    UnsupportedConfiguration,
)
from vacflow.transport import (
    Ball,
    CharacteristicFlow,
    DensityProfile,
    Interval,
    VelocityFieldSpec,
    continuity_residual,
    decay_propagation_check,
    density_from_characteristics,
    equilibrium_profile,
    flow_backward,
    flow_forward,
    mass_criterion,
    mass_threshold,
    regularity_propagation_check,
)

half_line = Interval(0.0, np.inf)


def _gauss_pushforward(t, x):
    """Exact density for u = x and rho0 = exp(-x^2)."""
    return np.exp(-t) * np.exp(-((x * np.exp(-t)) ** 2))


# -- flow map ---------------------------------------------------------------


def test_flow_forward_values():
    assert flow_forward(VelocityFieldSpec.constant(1.0), 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)
    assert flow_forward(VelocityFieldSpec.linear(), 1.0, np.log(2.0)) == pytest.approx(2.0, abs=1e-12)
    assert flow_forward(VelocityFieldSpec.zero(), 0.7, 3.0) == 0.7


def test_flow_forward_vectorized_exponential():
    x0 = np.linspace(-2.0, 2.0, 9)
    assert np.allclose(flow_forward(VelocityFieldSpec.linear(), x0, 1.0), x0 * np.e, rtol=1e-13)


def test_flow_backward_values():
    x0, tau = flow_backward(VelocityFieldSpec.constant(1.0), 2.0, 2.0)
    assert (x0, tau) == pytest.approx((0.0, 0.0), abs=1e-12)
    x0, tau = flow_backward(VelocityFieldSpec.constant(1.0, domain=half_line), 1.0, 2.0)
    assert x0 == pytest.approx(0.0, abs=1e-9)
    assert tau == pytest.approx(1.0, abs=1e-9)
    x0, tau = flow_backward(VelocityFieldSpec.zero(), 0.3, 5.0)
    assert (x0, tau) == (0.3, 0.0)


def test_forward_exit_raises_with_location():
    spec = VelocityFieldSpec.constant(1.0, domain=Interval(0.0, 1.0))
    with pytest.raises(CharacteristicExit) as info:
        flow_forward(spec, 0.5, 2.0)
    assert info.value.time is not None


def test_tangential_entry_is_ambiguous():
    # u = (t - 1)^2 carries x = (t - 1)^3 / 3, which leaves x = 0 at t = 1 with zero speed
    spec = VelocityFieldSpec.from_1d(lambda t, x: (t - 1.0) ** 2 + 0.0 * x, lambda t, x: 0.0 * x, domain=half_line)
    with pytest.raises(TangencyError):
        flow_backward(spec, 1.0 / 3.0, 2.0)


def test_two_dimensional_linear_field_in_ball():
    spec = VelocityFieldSpec(
        value=lambda t, x: -x,
        gradient=lambda t, x: np.broadcast_to(-np.eye(2), x.shape + (2,)),
        dim=2,
        domain=Ball(np.zeros(2), 1.0),
    )
    y = flow_forward(spec, np.array([0.5, 0.0]), 1.0)
    assert np.allclose(y, [0.5 * np.exp(-1.0), 0.0], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.0, 1.5), st.floats(-1.0, 1.0))
def test_backward_inverts_forward(x0, t, k):
    spec = VelocityFieldSpec.linear(k)
    x = flow_forward(spec, x0, t)
    back, tau = flow_backward(spec, x, t)
    assert tau == 0.0
    assert back == pytest.approx(x0, abs=1e-10)


# -- transported density ----------------------------------------------------


def test_density_values():
    rho0 = DensityProfile(lambda x: np.exp(-x * x))
    val = density_from_characteristics(rho0, None, VelocityFieldSpec.linear(), np.log(2.0), 0.0)
    assert val == pytest.approx(0.5, abs=1e-12)
    x = np.linspace(-2, 2, 7)
    assert np.allclose(density_from_characteristics(rho0, None, VelocityFieldSpec.zero(), 3.0, x), rho0(x))
    c = 0.8
    ones = DensityProfile(lambda x: 1.0 + 0.0 * x)
    spec = VelocityFieldSpec.linear(c)
    assert density_from_characteristics(ones, None, spec, 1.3, 0.4) == pytest.approx(np.exp(-c * 1.3), rel=1e-12)


def test_density_matches_closed_form():
    rho0 = DensityProfile(lambda x: np.exp(-x * x))
    x = np.linspace(-3, 3, 61)
    for t in (0.25, 0.5, 1.0):
        got = density_from_characteristics(rho0, None, VelocityFieldSpec.linear(), t, x)
        assert np.max(np.abs(got - _gauss_pushforward(t, x))) <= 1e-6


def test_inflow_boundary_needs_density():
    spec = VelocityFieldSpec.constant(1.0, domain=half_line)
    rho0 = DensityProfile(lambda x: 1.0 + 0.0 * x)
    with pytest.raises(MissingBoundaryData):
        density_from_characteristics(rho0, None, spec, 2.0, 1.0)
    rhoB = lambda x: 1.0 + 0.0 * np.asarray(x)
    assert density_from_characteristics(rho0, rhoB, spec, 2.0, np.array([1.0, 3.0])) == pytest.approx([1.0, 1.0])


def test_incompatible_corner_data_rejected():
    spec = VelocityFieldSpec.constant(1.0, domain=half_line)
    rho0 = DensityProfile(lambda x: 1.0 + 0.0 * x)
    with pytest.raises(DomainError):
        density_from_characteristics(rho0, lambda x: 2.0 + 0.0 * np.asarray(x), spec, 2.0, 1.0)


def test_continuity_residual_values():
    spec = VelocityFieldSpec.linear()
    x = np.arange(-3.0, 3.0 + 1e-12, 1e-2)
    res = continuity_residual(_gauss_pushforward, spec, x, 0.5, 1e-2)
    assert res <= 1e-3
    const = VelocityFieldSpec.constant(0.7)
    assert continuity_residual(lambda t, y: 2.0 + 0.0 * y, const, x, 0.5, 1e-2) <= 1e-12


def test_continuity_residual_second_order():
    spec = VelocityFieldSpec.linear()
    rho0 = DensityProfile(lambda x: np.exp(-x * x))
    rho = lambda t, y: density_from_characteristics(rho0, None, spec, t, y)
    coarse = continuity_residual(rho, spec, np.arange(-3.0, 3.0 + 1e-12, 4e-2), 0.5, 4e-2)
    fine = continuity_residual(rho, spec, np.arange(-3.0, 3.0 + 1e-12, 2e-2), 0.5, 2e-2)
    assert coarse / fine >= 3.5


# -- propagation checks -----------------------------------------------------


def test_regularity_static_field_keeps_norm():
    rho0 = DensityProfile.gaussian()
    x = np.linspace(-5, 5, 401)
    rep = regularity_propagation_check(rho0, VelocityFieldSpec.zero(), PressureLaw(1.0, 1.5), 6.0, [0.0, 0.5, 1.0], x)
    assert np.allclose(rep.norms, rep.initial_norm, rtol=0, atol=1e-10)


def test_regularity_matches_analytic_pushforward():
    law = PressureLaw(1.0, 1.5)
    q = 6.0
    x = np.linspace(-15.0, 15.0, 6001)
    times = [0.0, 0.5, 1.0]
    rep = regularity_propagation_check(DensityProfile.gaussian(), VelocityFieldSpec.linear(), law, q, times, x)
    for t, got in zip(times, rep.norms):
        # d/dx rho^(1/2) for the exact push-forward
        g = lambda y: abs(-y * np.exp(-2 * t) * np.exp(-t / 2) * np.exp(-((y * np.exp(-t)) ** 2) / 2))
        exact = quad(lambda y: g(y) ** q, -np.inf, np.inf, epsabs=1e-14)[0] ** (1 / q)
        assert got == pytest.approx(exact, rel=0.01)
    assert rep.bounded


def test_regularity_tracks_compact_support():
    law = PressureLaw(1.0, 1.5)
    rho0 = DensityProfile.compact_power(1.5, radius=0.5)
    spec = VelocityFieldSpec.compact_bump(0.8, radius=1.5)
    x = np.linspace(-2, 2, 801)
    rep = regularity_propagation_check(rho0, spec, law, 4.0, [0.0, 0.5, 1.0], x)
    for (lo, hi), (plo, phi) in zip(rep.support, rep.predicted_support):
        assert lo == pytest.approx(plo, abs=2 * (x[1] - x[0]))
        assert hi == pytest.approx(phi, abs=2 * (x[1] - x[0]))
    assert rep.bounded and np.isfinite(rep.constant)


def test_regularity_rejects_inflow():
    spec = VelocityFieldSpec.constant(1.0, domain=half_line)
    with pytest.raises(UnsupportedConfiguration):
        regularity_propagation_check(DensityProfile.gaussian(), spec, PressureLaw(), 2.0, [0.0, 1.0], np.linspace(0, 1, 11))


@pytest.mark.parametrize("alpha,gamma,beta", [(4.0, 1.5, 6.0), (3.0, 2.0, 2.0), (3.0, 1.5, 4.0)])
def test_decay_exponent(alpha, gamma, beta):
    rep = decay_propagation_check(
        DensityProfile.polynomial_decay(alpha, gamma), VelocityFieldSpec.compact_bump(0.5, 1.0),
        PressureLaw(1.0, gamma), 1.0,
    )
    assert rep.beta_expected == pytest.approx(beta)
    assert rep.passed
    assert rep.beta_fit == pytest.approx(beta, rel=0.02)


def test_decay_static_field_keeps_initial_fit():
    rep = decay_propagation_check(
        DensityProfile.polynomial_decay(4.0, 1.5), VelocityFieldSpec.zero(support_radius=1.0),
        PressureLaw(1.0, 1.5), 1.0,
    )
    assert rep.beta_fit == pytest.approx(rep.beta_initial_fit, rel=1e-12)


def test_decay_needs_compact_velocity():
    with pytest.raises(DomainError):
        decay_propagation_check(DensityProfile.polynomial_decay(4.0, 1.5), VelocityFieldSpec.linear(),
                                PressureLaw(1.0, 1.5), 1.0)


# -- equilibria and the mass criterion --------------------------------------


def test_equilibrium_profile_quadratic_law():
    law = PressureLaw(0.5, 2.0)
    prof = equilibrium_profile(lambda x: 1.0 - x * x, law, 0.0)
    x = np.linspace(-2, 2, 401)
    assert np.allclose(prof(x), np.maximum(1 - x * x, 0.0), atol=1e-14)
    inside = np.abs(x) < 0.99
    grad = np.gradient(law.dP(prof(x)), x)
    assert np.allclose(grad[inside], -2 * x[inside], atol=1e-10)


def test_equilibrium_profile_trivial_cases():
    law = PressureLaw(1.0, 1.5)
    x = np.linspace(-1, 1, 5)
    flat = equilibrium_profile(lambda y: 0.0 * y + 2.0, law)(x)
    assert np.ptp(flat) == 0.0 and flat[0] > 0
    assert np.all(equilibrium_profile(lambda y: 1.0 - y * y, law, c=-100.0)(x) == 0.0)


def test_mass_criterion_table():
    assert mass_criterion(2.6, 1.5)
    assert not mass_criterion(4.0, 2.0)
    assert mass_criterion(4.1, 2.0)
    assert mass_criterion(2.1, 1.1)
    assert [mass_threshold(g) for g in (1.1, 1.5, 2.0)] == [2.0, 2.5, 4.0]


@given(st.floats(1.0001, 2.0), st.floats(0.0, 10.0))
def test_mass_criterion_is_strict_threshold(gamma, alpha):
    assert mass_criterion(alpha, gamma) == (alpha > max(2.0, 3.0 * gamma - 2.0))


def test_flow_object_reports_log_factor():
    # log factor is -int div u = -k t for u = k x
    flow = CharacteristicFlow(VelocityFieldSpec.linear(0.3), dt=1e-3)
    _, _, logf = flow.backward(np.array([1.0]), 2.0)
    assert logf == pytest.approx(-0.6, abs=1e-12)
