import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import load_fixture, random_hermitian
from genma.continuity import continuity_run
from genma.core import residual
from genma.errors import InvalidProblem
from genma.fieldio import slag_from_config
from genma.forms import PPForm
from genma.slag import (
    ExampleParams,
    PhaseUndefined,
    SlagData,
    build_slag_problem,
    compute_theta_hat,
    example_table,
    example_tangent,
    grouping_sides,
    slag_alphas,
)
from genma.torus import FormField, ScalarField, TorusGrid, band_limited, integrate, spectral_ddbar


def proportional_tan(a):
    # int(3 a - a^3) omega^3 / int(1 - 3 a^2) omega^3
    return (3 * a - a ** 3) / (1 - 3 * a * a)


@pytest.fixture(scope="module")
def g3():
    return TorusGrid(3, 8)


def om3(g):
    return FormField.constant(g, PPForm.euclidean(3))


# ---- phase --------------------------------------------------------------

@pytest.mark.parametrize("a", [0.5, 0.1, 0.01, 10.0, 2.0])
def test_theta_hat_proportional(g3, a):
    om = om3(g3)
    assert compute_theta_hat(om, om * a) == pytest.approx(proportional_tan(a), rel=1e-13)


def test_theta_hat_half_is_eleven_halves(g3):
    om = om3(g3)
    assert compute_theta_hat(om, om * 0.5) == pytest.approx(5.5, rel=1e-14)


def test_theta_hat_small_curvature(g3):
    om = om3(g3)
    for a in (1e-2, 1e-3):
        assert compute_theta_hat(om, om * a) == pytest.approx(3 * a, rel=10 * a * a)


def test_negative_phase_rejected(g3):
    om = om3(g3)
    with pytest.raises(InvalidProblem) as e:
        SlagData.from_fields(om, om * 1.0)
    assert e.value.check == "phase"


def test_vanishing_denominator(g3):
    om = om3(g3)
    with pytest.raises(PhaseUndefined):
        compute_theta_hat(om, om * (1 / np.sqrt(3)))


def test_phase_requires_threefold():
    g = TorusGrid(2, 8)
    om = FormField.constant(g, PPForm.euclidean(2))
    with pytest.raises(ValueError):
        compute_theta_hat(om, om)


def test_theta_hat_ignores_exact_terms(g3, rng):
    om = om3(g3)
    modes = [(tuple(rng.integers(-1, 2, 6)), rng.normal(), rng.normal()) for _ in range(3)]
    psi = ScalarField(g3, 0.01 * band_limited(g3, modes))
    th = om * 10.0 + spectral_ddbar(psi)
    assert compute_theta_hat(om, th) == pytest.approx(proportional_tan(10.0), rel=1e-12)


# ---- hypotheses -----------------------------------------------------------

def test_half_omega_fails_first_hypothesis(g3):
    om = om3(g3)
    with pytest.raises(InvalidProblem) as e:
        SlagData.from_fields(om, om * 0.5)
    assert e.value.check == "omega"
    assert "hypothesis (1)" in str(e.value)


def test_large_multiple_passes(g3):
    om = om3(g3)
    d = SlagData.from_fields(om, om * 10.0)
    T = proportional_tan(10.0)
    assert d.tan_theta == pytest.approx(T, rel=1e-14)
    assert d.omega_margin == pytest.approx(10 - T, rel=1e-12)
    # 3 (Omega^2 - sec^2 omega^2) evaluated on a unit 2-vector
    assert d.cone_margin == pytest.approx((10 - T) ** 2 * 2 - 2 * (1 + T * T), rel=1e-12)
    rep = d.report()
    assert rep["theta_hat"] == pytest.approx(np.arctan(T))


@pytest.mark.parametrize("a", np.linspace(2.0, 12.0, 21))
def test_hypotheses_match_proportional_closed_form(g3, a):
    om = om3(g3)
    T = proportional_tan(a)
    ok1 = a - T > 0
    ok2 = (a - T) ** 2 > 1 + T * T
    if T > 0 and ok1 and ok2:
        SlagData.from_fields(om, om * a)
    else:
        with pytest.raises(InvalidProblem):
            SlagData.from_fields(om, om * a)


def test_second_hypothesis_can_fail_alone(g3):
    # constant data satisfying (1) with a positive phase always satisfies (2);
    # a large i ddbar term pushes one eigenvalue of Omega down to ~0.84
    om = om3(g3)
    psi = ScalarField(g3, 0.6 * np.cos(2 * np.pi * g3.x(3)) + 0 * g3.x(1))
    th = om * 10.0 + spectral_ddbar(psi)
    with pytest.raises(InvalidProblem) as e:
        SlagData.from_fields(om, th)
    assert e.value.check == "cone"
    assert "hypothesis (2)" in str(e.value)


# ---- grouping identity ------------------------------------------------------

def test_grouping_identity_batch(rng):
    n, N = 3, 1000
    om = PPForm.from_matrix(random_hermitian(rng, n, (N,), positive=True, shift=0.5))
    th = PPForm.from_matrix(random_hermitian(rng, n, (N,)))
    T = rng.uniform(0.1, 5.0, N)
    lhs, rhs = grouping_sides(th, om, T)
    scale = np.maximum(np.abs(lhs), 1.0)
    assert np.max(np.abs(lhs - rhs) / scale) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-10, 10))
def test_grouping_identity_property(seed, T):
    rng = np.random.default_rng(seed)
    om = PPForm.from_matrix(random_hermitian(rng, 3, positive=True))
    th = PPForm.from_matrix(random_hermitian(rng, 3))
    lhs, rhs = grouping_sides(th, om, T)
    scale = max(1.0, abs(lhs), (1 + T * T) * 10)
    assert abs(lhs - rhs) <= 1e-12 * scale * 100


def test_alphas_for_proportional_data(g3):
    om = om3(g3)
    d = SlagData.from_fields(om, om * 10.0)
    _, a2, a3 = slag_alphas(d)
    assert np.allclose(a2.form.coeffs, (om.power(2) * (3 * d.sec2)).coeffs)
    assert np.allclose(a3.form.top, 2 * d.tan_theta * d.sec2 * 6.0)


# ---- solving -------------------------------------------------------------

def test_proportional_fixture_is_solved_by_zero():
    d = slag_from_config(load_fixture("slag_proportional"))
    p = build_slag_problem(d)
    assert residual(p, ScalarField.zeros(p.grid), 1.0).sup() <= 1e-12


@pytest.mark.slow
def test_perturbed_fixture_recovers_potential():
    cfg = load_fixture("slag_perturbed")
    d = slag_from_config(cfg)
    p = build_slag_problem(d)
    phi, trace = continuity_run(p)
    g = p.grid
    modes = [(m["k"], m.get("a", 0.0), m.get("b", 0.0)) for m in cfg["slag"]["Theta"]["ddbar"]]
    psi = band_limited(g, modes)
    # Omega + i ddbar phi = Omega_0 when phi = -psi up to a constant
    assert np.ptp(phi.values + psi) <= 1e-8
    assert np.all(trace.column("ellipticity_slack") >= -1e-10)


# ---- algebraic example ---------------------------------------------------------

def test_example_params_validation():
    with pytest.raises(ValueError):
        ExampleParams(0, 1e-3)
    with pytest.raises(ValueError):
        ExampleParams(2.5, 1e-3)
    with pytest.raises(ValueError):
        ExampleParams(3, 0.0)


def test_example_small_eps_limit():
    for k in (2, 5, 20):
        expect = (k ** 3 - 3 * k) / (3 * k * k - 1)
        assert example_tangent(ExampleParams(k, 1e-12)) == pytest.approx(expect, rel=1e-9)


def test_example_large_k_limit():
    eps = 1e-3
    I = (1.0, 2.0, 0.5, 3.0)
    lim = I[0] / (3 * (I[0] + eps * I[1]))
    val = example_tangent(ExampleParams(10 ** 6, eps, *I)) / 10 ** 6
    assert val == pytest.approx(lim, rel=1e-6)


def test_example_positive_from_two():
    table = example_table(range(2, 51), 1e-3)
    assert all(v > 0 for _, v in table)
    assert example_tangent(ExampleParams(1, 1e-3)) < 0
    vals = [v for _, v in table]
    assert np.all(np.diff(vals) > 0)


def test_example_agrees_with_torus_phase(g3, rng):
    # constant diagonal classes on the torus give a direct check of the formula
    Theta0 = FormField.constant(g3, PPForm.from_matrix(np.diag(rng.uniform(0.5, 2.0, 3))))
    gamma = FormField.constant(g3, PPForm.from_matrix(np.diag(rng.uniform(0.5, 2.0, 3))))
    eps, k = 0.3, 4
    kahler = Theta0 + gamma * eps
    I = [integrate(Theta0.power(3 - j).wedge(gamma.power(j)) if 0 < j < 3 else
                   (Theta0.power(3) if j == 0 else gamma.power(3))) for j in range(4)]
    direct = compute_theta_hat(kahler, Theta0 * k)
    assert example_tangent(ExampleParams(k, eps, *I)) == pytest.approx(direct, rel=1e-12)
