import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import sine, unit_sine
from lmmg.errors import (
    BoundaryDegeneracyError,
    DegenerateDirectionError,
    InvalidInputError,
    PeakSelectionError,
    StepSizeError,
)
from lmmg.fespace import FeFunction, FeSpace, nodal_interpolant
from lmmg.mesh import create_square_mesh
from lmmg.minimax import (
    Subspace,
    bracketed_newton,
    initial_state,
    minimal_exponent,
    minimax_step,
    peak_select_1d,
    peak_select_nd,
    peak_select_scaled,
    project_unit_Lperp,
    select_peak,
    step_size,
)
from lmmg.problem import EnergyForm, get_problem


def random_unit(form, rng):
    c = rng.uniform(-1, 1, form.space.n_dofs)
    return form.space.function(c / form.norm(c))


def quartic_integral(form, v):
    return float(np.sum(form.at_quad(v.coeffs) ** 4 * form.JW))


class QuadraticSurrogate:
    """E(u) = -||u - z||_eps^2, maximised exactly at z."""

    def __init__(self, form, z):
        self.gram = form.gram
        self.z = z

    def energy(self, u):
        e = u - self.z
        return -float(e @ (self.gram @ e))

    def derivative(self, u):
        return -2.0 * (self.gram @ (u - self.z))

    def second_variation(self, u, Z):
        return -2.0 * Z.T @ (self.gram @ Z)


def test_project_cases(coarse_form):
    form = coarse_form("henon", divisions=6, q=1.0)
    rng = np.random.default_rng(0)
    v = random_unit(form, rng)
    p = project_unit_Lperp(FeFunction(form.space, 3 * v.coeffs), Subspace(), form.gram)
    assert np.allclose(p.coeffs, v.coeffs, rtol=1e-12)
    assert np.allclose(project_unit_Lperp(v, Subspace(), form.gram).coeffs, v.coeffs, atol=1e-12)

    w1 = form.space.function(rng.uniform(-1, 1, form.space.n_dofs))
    L = Subspace.span([w1], form.gram)
    z = rng.uniform(-1, 1, form.space.n_dofs)
    z -= (form.inner(z, w1) / form.inner(w1, w1)) * w1.coeffs
    got = project_unit_Lperp(form.space.function(w1.coeffs + z), L, form.gram)
    assert np.allclose(got.coeffs, z / form.norm(z), atol=1e-12)
    assert abs(form.inner(got, w1)) <= 1e-12
    with pytest.raises(DegenerateDirectionError):
        project_unit_Lperp(form.space.function(2 * w1.coeffs), L, form.gram)
    with pytest.raises(DegenerateDirectionError):
        Subspace.span([w1, form.space.function(2 * w1.coeffs)], form.gram)


def test_bracketed_newton():
    root = bracketed_newton(lambda x: x**3 - 2, lambda x: 3 * x**2, 0.0, 4.0,
                            tol=lambda x, fx: abs(fx) < 1e-14)
    assert math.isclose(root, 2 ** (1 / 3), rel_tol=1e-13)
    with pytest.raises(PeakSelectionError):
        bracketed_newton(lambda x: x**2 + 1, lambda x: 2 * x, -1.0, 1.0)


def test_peak_closed_form_cubic(coarse_form):
    form = coarse_form("lane_emden", divisions=8)
    v = random_unit(form, np.random.default_rng(3))
    t, w = peak_select_1d(form, v)
    expected = math.sqrt(form.inner(v, v) / quartic_integral(form, v))
    assert math.isclose(t, expected, rel_tol=1e-10)
    assert np.allclose(w.coeffs, t * v.coeffs)
    g = t * form.inner(v, v) - t**3 * quartic_integral(form, v)
    assert abs(g) <= 1e-10 * t


def test_peak_sine_oracle(fine_lane_emden):
    form = fine_lane_emden
    assert form.space.mesh.n_elements >= 10_000
    t, _ = peak_select_1d(form, unit_sine(form))
    assert abs(t - 4 * math.pi**2 / 3) <= 0.01 * 4 * math.pi**2 / 3


def test_non_unit_direction_rejected(coarse_form):
    form = coarse_form("lane_emden")
    v = unit_sine(form)
    with pytest.raises(InvalidInputError):
        peak_select_1d(form, form.space.function(2 * v.coeffs))


def test_scaled_agrees(coarse_form):
    form = coarse_form("lane_emden", divisions=6)
    v = unit_sine(form)
    t1, _ = peak_select_1d(form, v)
    t2, _ = peak_select_scaled(form, v)
    assert math.isclose(t1, t2, rel_tol=1e-10)


@pytest.mark.parametrize("eps", [1e-2, 1e-5, 1e-8])
def test_scaled_cubic_closed_form(coarse_form, eps):
    form = coarse_form("lane_emden_perturbed", divisions=8, eps=eps)
    v = unit_sine(form)
    t, w = peak_select_scaled(form, v)
    # the quadratic part uses A = eps K + M, and ||v||_eps = 1 with nu = 1
    expected = math.sqrt(float(v.coeffs @ (form.A @ v.coeffs)) / quartic_integral(form, v))
    assert math.isclose(t, expected, rel_tol=1e-9)
    dirderiv = form.derivative(w) @ v.coeffs
    assert abs(dirderiv) <= 1e-8 * form.norm(w)


def test_ray_sign_change_unique_and_positive(coarse_form):
    form = coarse_form("lane_emden", divisions=6)
    rng = np.random.default_rng(4)
    grid = np.logspace(-6, 6, 241)
    for _ in range(20):
        v = random_unit(form, rng)
        g = np.array([form.derivative(t * v.coeffs) @ v.coeffs for t in grid])
        assert np.count_nonzero(np.diff(np.sign(g)) != 0) == 1
        peak = select_peak(form, Subspace(), v)
        assert peak.t > 0 and peak.energy > 0


def test_nd_reduces_to_1d(coarse_form):
    form = coarse_form("lane_emden", divisions=6)
    v = unit_sine(form)
    a, t, w = peak_select_nd(form, Subspace(), v)
    t1, w1 = peak_select_1d(form, v)
    assert a.size == 0 and t == t1 and np.array_equal(w.coeffs, w1.coeffs)


def test_nd_quadratic_surrogate(coarse_form):
    form = coarse_form("henon", q=1.0, divisions=6)
    rng = np.random.default_rng(8)
    w1 = form.space.function(rng.uniform(-1, 1, form.space.n_dofs))
    L = Subspace.span([w1], form.gram)
    v = project_unit_Lperp(form.space.function(rng.uniform(-1, 1, form.space.n_dofs)), L, form.gram)
    z = 0.3 * w1.coeffs + 0.7 * v.coeffs
    a, t, _ = peak_select_nd(QuadraticSurrogate(form, z), L, v, start=(np.zeros(1), 0.2))
    assert np.allclose(a, [0.3], atol=1e-8) and abs(t - 0.7) <= 1e-8


def test_nd_boundary_degeneracy(coarse_form):
    form = coarse_form("henon", q=1.0, divisions=6)
    rng = np.random.default_rng(9)
    w1 = form.space.function(rng.uniform(-1, 1, form.space.n_dofs))
    L = Subspace.span([w1], form.gram)
    v = project_unit_Lperp(form.space.function(rng.uniform(-1, 1, form.space.n_dofs)), L, form.gram)
    z = 0.3 * w1.coeffs - 0.5 * v.coeffs  # maximiser lies at negative t
    with pytest.raises(BoundaryDegeneracyError):
        peak_select_nd(QuadraticSurrogate(form, z), L, v, start=(np.zeros(1), 0.2))


def test_nd_improves_on_ray(coarse_form):
    form = coarse_form("henon", q=1.0, divisions=8)
    v1 = unit_sine(form)
    _, w1 = peak_select_1d(form, v1)
    L = Subspace.span([w1], form.gram)
    bump = nodal_interpolant(form.space, lambda x, y: np.sin(2 * np.pi * x) * sine(x, y))
    v = project_unit_Lperp(bump, L, form.gram)
    a, t, w = peak_select_nd(form, L, v)
    t_ray, w_ray = peak_select_1d(form, v)
    assert t > 0
    assert form.energy(w) > form.energy(w_ray)
    # stationary in both the L and the v direction
    g = np.column_stack([w1.coeffs / form.norm(w1), v.coeffs]).T @ form.derivative(w)
    assert np.all(np.abs(g) <= 1e-8 * max(1.0, form.norm(w)))


@pytest.mark.parametrize("d_norm,m", [(3.0, 2), (0.9, 0), (1.0, 1), (0.25, -1), (0.3, -1), (1e-9, -29)])
def test_minimal_exponent(d_norm, m):
    assert minimal_exponent(d_norm) == m
    assert 2.0**m > d_norm >= 2.0 ** (m - 1)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-12, 1e12))
def test_minimal_exponent_property(d):
    m = minimal_exponent(d)
    assert 2.0**m > d and not 2.0 ** (m - 1) > d


def test_step_size_rule_and_descent(coarse_form):
    form = coarse_form("lane_emden")
    state = initial_state(form, Subspace(), unit_sine(form))
    res = form.residual(state.w)
    step = step_size(form, Subspace(), state, res.d, res.norm_eps, 0.5)
    assert step.m >= step.m_start == minimal_exponent(res.norm_eps)
    assert step.s == 0.5 / 2.0**step.m
    dv = step.v.coeffs - state.v.coeffs
    lhs = step.peak.energy - state.energy
    assert lhs <= -0.5 * state.t * res.norm_eps * form.norm(dv)
    assert abs(form.norm(step.v) - 1.0) <= 1e-10


def test_step_size_failure(coarse_form):
    form = coarse_form("lane_emden")
    state = initial_state(form, Subspace(), unit_sine(form))
    res = form.residual(state.w)
    # ascent instead of descent can never satisfy the decrease condition
    up = form.space.function(-res.d.coeffs)
    with pytest.raises(StepSizeError):
        step_size(form, Subspace(), state, up, res.norm_eps, 0.5, max_halvings=5)


def test_minimax_step_decreases(coarse_form):
    form = coarse_form("lane_emden")
    state = initial_state(form, Subspace(), unit_sine(form))
    new, diag = minimax_step(form, Subspace(), state, 0.5)
    assert new.energy < state.energy and new.k == 1
    res = form.residual(state.w)
    assert diag["res_norm"] == res.norm_eps == form.norm(res.d)
    with pytest.raises(InvalidInputError):
        minimax_step(form, Subspace(), state, 0.5, residual=type(res)(res.d, 0.0, res.vector))


@pytest.mark.parametrize("name", ["lane_emden", "henon", "henon_perturbed", "lane_emden_perturbed"])
def test_repeated_steps_keep_invariants(name, coarse_form):
    form = coarse_form(name, divisions=8)
    from lmmg.driver import bump_profile

    v0 = nodal_interpolant(form.space, bump_profile(form.problem.domain))
    state = initial_state(form, Subspace(), v0)
    for _ in range(5):
        new, _ = minimax_step(form, Subspace(), state, 0.5)
        assert new.energy < state.energy
        assert abs(form.norm(new.v) - 1.0) <= 1e-10
        g = form.derivative(new.w) @ new.v.coeffs
        assert abs(g) <= 1e-8 * max(1.0, form.norm(new.w))
        state = new
