import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmmg.errors import ConfigurationError, InvalidInputError
from lmmg.fespace import (
    FeSpace,
    assemble_gram,
    assemble_mass,
    assemble_semilinear_residual,
    assemble_stiffness,
    evaluate,
    integrate,
    nodal_interpolant,
    prolongate,
    triangle_quadrature,
)
from lmmg.mesh import create_square_mesh, make_triangulation, refine, refine_uniform
from lmmg.problem import EnergyForm, get_problem, lane_emden


def reference_space():
    mesh = make_triangulation([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    return FeSpace(mesh, dirichlet=False)


def sine(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


@pytest.mark.parametrize("degree", range(0, 11))
def test_quadrature_exact_for_monomials(degree):
    rule = triangle_quadrature(degree)
    assert math.isclose(rule.weights.sum(), 1.0)
    x, y = rule.points[:, 1], rule.points[:, 2]
    for i in range(degree + 1):
        j = degree - i
        # int over reference triangle of x^i y^j = i! j! / (i + j + 2)!
        exact = math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)
        approx = 0.5 * np.sum(rule.weights * x**i * y**j)
        assert math.isclose(approx, exact, rel_tol=1e-12, abs_tol=1e-15)


def test_reference_stiffness_and_mass():
    space = reference_space()
    K = assemble_stiffness(space).toarray()
    assert np.allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    M = assemble_mass(space).toarray()
    assert np.allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24)
    Mq = assemble_mass(space, lambda x, y: np.ones_like(x), degree=2).toarray()
    assert np.allclose(Mq, M)


def test_zero_weight_and_partition_of_unity():
    mesh = refine(create_square_mesh((0, 0), (2, 1), 4), [0, 3])
    space = FeSpace(mesh, dirichlet=False)
    assert assemble_mass(space, 0.0).nnz == 0 or np.all(assemble_mass(space, 0.0).data == 0)
    assert math.isclose(assemble_mass(space).sum(), 2.0)
    K = assemble_stiffness(space)
    assert np.allclose(K @ np.ones(mesh.n_vertices), 0.0, atol=1e-12)


def test_sine_energy_converges():
    space = FeSpace(create_square_mesh((0, 0), (1, 1), 64))
    v = nodal_interpolant(space, sine)
    val = v.coeffs @ (space.stiffness() @ v.coeffs)
    assert abs(val - math.pi**2 / 2) <= 0.005 * math.pi**2 / 2


def test_gram_matrix():
    space = FeSpace(create_square_mesh((0, 0), (1, 1), 4))
    K, M = space.stiffness(), space.mass()
    assert np.allclose(assemble_gram(space, 1.0, 0.0).toarray(), K.toarray())
    assert np.allclose(assemble_gram(space, 1e-3, 1.0).toarray(), (1e-3 * K + M).toarray())
    G = assemble_gram(space, 1e-2, 0.0)
    rng = np.random.default_rng(1)
    for _ in range(100):
        u = rng.standard_normal(space.n_dofs)
        assert u @ (G @ u) > 0
    with pytest.raises(InvalidInputError):
        assemble_gram(space, 0.0, 1.0)


def test_semilinear_residual_cases():
    space = FeSpace(refine_uniform(create_square_mesh((0, 0), (1, 1), 4)))
    pb = lane_emden()
    assert np.allclose(assemble_semilinear_residual(space, pb, space.function()), 0.0)
    linear = pb.__class__(
        name="linear", eps=0.3, q=0.0, nu=0.0,
        f=lambda x, y, t: 0 * t, f_t=lambda x, y, t: 0 * t, F=lambda x, y, t: 0 * t,
    )
    u = nodal_interpolant(space, sine)
    assert np.allclose(assemble_semilinear_residual(space, linear, u), 0.3 * (space.stiffness() @ u.coeffs))
    with pytest.raises(ConfigurationError):
        assemble_semilinear_residual(space, pb, u, degree=2)


@pytest.mark.parametrize("name", ["lane_emden", "henon", "henon_perturbed", "lane_emden_perturbed"])
def test_semilinear_residual_matches_energy_difference(name):
    pb = get_problem(name)
    lo, hi = pb.domain
    space = FeSpace(create_square_mesh(lo, hi, 6))
    form = EnergyForm(pb, space)
    rng = np.random.default_rng(7)
    u = rng.uniform(-1, 1, space.n_dofs)
    v = rng.uniform(-1, 1, space.n_dofs)
    r = assemble_semilinear_residual(space, pb, u)
    assert np.allclose(r, form.derivative(u), rtol=1e-12, atol=1e-14)
    h = 1e-5
    fd = (form.energy(u + h * v) - form.energy(u - h * v)) / (2 * h)
    assert abs(r @ v - fd) <= 1e-6 * max(abs(fd), 1.0)


def test_interpolant_cases():
    mesh = create_square_mesh((0, 0), (1, 1), 4)
    space = FeSpace(mesh)
    assert np.all(nodal_interpolant(space, lambda x, y: 0 * x).coeffs == 0)
    s = nodal_interpolant(space, sine)
    pts = mesh.vertices[space.free]
    assert np.allclose(s.coeffs, sine(pts[:, 0], pts[:, 1]))
    aff = nodal_interpolant(space, lambda x, y: 2 * x - y + 0.5)
    assert np.allclose(aff.coeffs, 2 * pts[:, 0] - pts[:, 1] + 0.5)
    assert np.all(s.full()[mesh.boundary_vertex] == 0)
    with pytest.raises(InvalidInputError):
        nodal_interpolant(space, lambda x, y: np.full_like(x, np.nan))


def test_prolongation():
    mesh = create_square_mesh((0, 0), (1, 1), 4)
    space = FeSpace(mesh)
    u = nodal_interpolant(space, sine)
    same = prolongate(u, FeSpace(refine(mesh, [])))
    assert np.array_equal(same.coeffs, u.coeffs)
    child = FeSpace(refine(mesh, [1, 8, 20]))
    w = prolongate(u, child)
    G0, G1 = assemble_gram(space, 1.0, 1.0), assemble_gram(child, 1.0, 1.0)
    n0, n1 = u.coeffs @ G0 @ u.coeffs, w.coeffs @ G1 @ w.coeffs
    assert abs(n0 - n1) <= 1e-12 * n0
    pts = np.random.default_rng(3).uniform(0.01, 0.99, (50, 2))
    assert np.allclose(evaluate(u, pts), evaluate(w, pts), atol=1e-14)
    grandchild = FeSpace(refine(child.mesh, [0]))
    with pytest.raises(InvalidInputError):
        prolongate(u, grandchild)


def test_two_triangle_midpoints():
    mesh = create_square_mesh((0, 0), (1, 1), 1)
    space = FeSpace(mesh, dirichlet=False)
    u = space.function(np.array([1.0, 2.0, 3.0, 4.0]))
    child = FeSpace(refine_uniform(mesh), dirichlet=False)
    w = prolongate(u, child)
    for k, (a, b) in enumerate(child.mesh.vertex_parents):
        assert w.coeffs[4 + k] == 0.5 * (u.coeffs[a] + u.coeffs[b])


def test_integrate_and_evaluate():
    mesh = create_square_mesh((0, 0), (1, 1), 4)
    space = FeSpace(mesh)
    assert math.isclose(integrate(space, lambda x, y: np.ones_like(x)), 1.0)
    u = nodal_interpolant(space, sine)
    i = np.flatnonzero(~mesh.boundary_vertex)[3]
    assert evaluate(u, mesh.vertices[i]) == pytest.approx(u.full()[i], abs=1e-15)
    with pytest.raises(InvalidInputError):
        evaluate(u, [1.5, 0.5])

    # interpolant of x*y with all vertices free: exact integral of a P1 function is
    # the element mean of the vertex values times the area
    free = FeSpace(mesh, dirichlet=False)
    xy = nodal_interpolant(free, lambda x, y: x * y)
    quad = integrate(free, lambda x, y: evaluate(xy, np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape), degree=2)
    midpoint = np.sum(free.areas * xy.full()[mesh.elements].mean(axis=1))
    assert math.isclose(quad, midpoint, rel_tol=1e-12)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3))
def test_affine_reproduced_everywhere(a, b, c):
    space = FeSpace(create_square_mesh((-1, -1), (1, 1), 4), dirichlet=False)
    u = nodal_interpolant(space, lambda x, y: a * x + b * y + c)
    pts = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert np.allclose(evaluate(u, pts), a * pts[:, 0] + b * pts[:, 1] + c, atol=1e-12)
