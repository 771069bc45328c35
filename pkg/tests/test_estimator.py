import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmmg.estimator import IndicatorField, alpha_weights, dorfler_mark, element_indicators
from lmmg.fespace import FeSpace
from lmmg.mesh import create_square_mesh, make_triangulation, refine
from lmmg.problem import EnergyForm, SemilinearProblem, get_problem


def zero(x, y, t):
    return 0 * t


def source_problem(eps):
    """-eps Lap u + u = 1 written as a semilinear problem with a fixed source."""
    return SemilinearProblem(
        name="source", eps=eps, q=1.0, nu=1.0,
        f=lambda x, y, t: 1.0 + 0 * t, f_t=zero, F=lambda x, y, t: t,
    )


def galerkin_solution(form):
    load = form.nonlinear_load(form.space.function())
    return form.space.function(np.linalg.solve(form.A.toarray(), load))


def test_zero_function_zero_indicators():
    pb = get_problem("henon")
    lo, hi = pb.domain
    form = EnergyForm(pb, FeSpace(create_square_mesh(lo, hi, 4)))
    field = element_indicators(form, form.space.function())
    assert np.all(field.eta_sq == 0) and field.eta == 0.0


def test_alpha():
    assert alpha_weights(0.1, 1e-3, 1.0) == pytest.approx(1.0)
    assert alpha_weights(0.01, 1e-3, 1.0) == pytest.approx(0.01 / math.sqrt(1e-3))
    assert alpha_weights(0.2, 1.0, 0.0) == pytest.approx(0.2)


def test_hand_computed_jump():
    # u = x - y on the lower triangle, 0 on the upper: gradients (1, -1) and (0, 0)
    mesh = make_triangulation([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    space = FeSpace(mesh, dirichlet=False)
    pb = SemilinearProblem(name="zero", eps=1.0, q=0.0, nu=0.0, f=zero, f_t=zero, F=zero)
    form = EnergyForm(pb, space)
    u = space.function(np.array([0.0, 1.0, 0.0, 0.0]))
    field = element_indicators(form, u)
    # jump = sqrt(2), |e| = sqrt(2), alpha = h = sqrt(2): 0.5 * sqrt(2) * 2 * sqrt(2) = 2
    assert np.allclose(field.jump_sq, [2.0, 2.0], rtol=0, atol=1e-12)
    assert np.allclose(field.interior_sq, 0.0)
    assert math.isclose(field.eta, 2.0, rel_tol=1e-14)


def test_global_value_consistent():
    form = EnergyForm(source_problem(1e-2), FeSpace(create_square_mesh((0, 0), (1, 1), 6)))
    field = element_indicators(form, galerkin_solution(form))
    assert np.all(field.eta_sq >= 0)
    assert math.isclose(field.eta**2, field.eta_sq.sum(), rel_tol=1e-14)


def test_oscillation_term_present_only_on_request():
    pb = get_problem("lane_emden")
    form = EnergyForm(pb, FeSpace(create_square_mesh((0, 0), (1, 1), 4)))
    u = form.space.function(np.linspace(0.5, 2.0, form.space.n_dofs))
    plain = element_indicators(form, u)
    assert plain.oscillation_sq is None
    osc = element_indicators(form, u, oscillation=True)
    assert np.all(osc.oscillation_sq >= 0) and osc.oscillation_sq.sum() > 0


@pytest.mark.parametrize("eps", [1.0, 0.1])
def test_adaptive_decrease_on_linear_model(eps):
    pb = source_problem(eps)
    mesh = create_square_mesh((0, 0), (1, 1), 4)
    etas = []
    for _ in range(10):
        form = EnergyForm(pb, FeSpace(mesh))
        field = element_indicators(form, galerkin_solution(form))
        etas.append(field.eta)
        mesh = refine(mesh, dorfler_mark(field, 0.5))
    assert np.all(np.diff(etas) < 0)


def test_robust_in_eps():
    mesh = create_square_mesh((0, 0), (1, 1), 8)
    etas = []
    for eps in (1.0, 1e-3, 1e-6):
        form = EnergyForm(source_problem(eps), FeSpace(mesh))
        etas.append(element_indicators(form, galerkin_solution(form)).eta)
    assert max(etas) <= 10 * min(etas)


def test_dorfler_example():
    marked = dorfler_mark(np.array([9, 4, 4, 1, 1, 1], float), 0.5)
    assert marked.tolist() == [0, 1]


def test_dorfler_edge_cases():
    vals = np.array([3.0, 1.0, 2.0, 0.5])
    assert dorfler_mark(vals, 1.0 - 1e-12).tolist() == [0, 1, 2, 3]
    assert dorfler_mark(np.zeros(5), 0.5).size == 0
    assert dorfler_mark(IndicatorField(vals), 0.5).tolist() == [0, 2]
    with pytest.raises(ValueError):
        dorfler_mark(vals, 0.0)


def test_dorfler_ties_prefer_lower_id():
    assert dorfler_mark(np.array([1.0, 2.0, 2.0, 2.0]), 0.25).tolist() == [1]


def test_dorfler_minimality_random_fields():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        vals = rng.exponential(size=n) ** rng.uniform(1, 4)
        theta = float(rng.uniform(0.05, 0.95))
        marked = dorfler_mark(vals, theta)
        total = vals.sum()
        assert vals[marked].sum() >= theta * total
        smallest = marked[np.argmin(vals[marked])]
        rest = np.setdiff1d(marked, [smallest])
        assert vals[rest].sum() < theta * total


@settings(max_examples=100, deadline=None)
@given(
    vals=st.lists(st.floats(0, 1e3), min_size=1, max_size=40),
    t1=st.floats(0.01, 1.0),
    t2=st.floats(0.01, 1.0),
)
def test_dorfler_monotone_in_theta(vals, t1, t2):
    lo, hi = sorted((t1, t2))
    a = set(dorfler_mark(np.array(vals), lo).tolist())
    b = set(dorfler_mark(np.array(vals), hi).tolist())
    assert a <= b
