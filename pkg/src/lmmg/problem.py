"""Semilinear problems ``-eps Lap u + q u = f(x, u)`` and their discrete energy."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable
import warnings

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .fespace import FeFunction, FeSpace, assemble_gram, assemble_mass
from .sparse import DEFAULT_REL_TOL, cg_solve

UNIT_SQUARE = ((0.0, 0.0), (1.0, 1.0))
CENTERED_SQUARE = ((-1.0, -1.0), (1.0, 1.0))


@dataclass(frozen=True)
class SemilinearProblem:
    """Data of the boundary value problem and its energy functional.

    ``f``, ``f_t`` and ``F`` are vectorised callables of ``(x, y, t)``;
    ``F`` is the antiderivative of ``f`` in ``t`` with ``F(x, 0) = 0``.
    ``q`` is a constant or a callable of ``(x, y)``; ``nu`` is its lower bound
    and ``c_nu`` bounds ``q <= c_nu * nu``.
    """

    name: str
    eps: float
    q: float | Callable
    nu: float
    f: Callable
    f_t: Callable
    F: Callable
    quad_degree: int = 6
    c_nu: float = 1.0
    domain: tuple = UNIT_SQUARE
    description: str = ""
    growth: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidInputError(f"eps must be positive, got {self.eps}")
        if self.nu < 0:
            raise InvalidInputError(f"nu must be nonnegative, got {self.nu}")

    def with_eps(self, eps: float) -> "SemilinearProblem":
        return replace(self, eps=float(eps))

    def q_constant(self):
        return None if callable(self.q) else float(self.q)

    def check_conditions(self, n: int = 21, t_max: float = 5.0) -> list[str]:
        """Sample ``f(x, 0) = 0``, monotonicity of ``f(x, t) / |t|``, ``F' = f`` and the
        bounds on ``q`` on a grid; warn about and return every violation."""
        (x0, y0), (x1, y1) = self.domain
        xs, ys = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n))
        xs, ys = xs.ravel()[:, None], ys.ravel()[:, None]
        ts = np.linspace(-t_max, t_max, 4 * n + 1)[None, :]
        issues = []
        if np.any(self.f(xs, ys, np.zeros_like(ts)) != 0):
            issues.append("f(x, 0) != 0")
        nz = ts[:, ts[0] != 0]
        ratio = self.f(xs, ys, nz) / np.abs(nz)
        interior = np.any(self.f(xs, ys, nz) != 0, axis=1)
        if np.any(np.diff(ratio[interior], axis=1) <= 0):
            issues.append("t -> f(x,t)/|t| is not strictly increasing")
        h = 1e-6
        fd = (self.F(xs, ys, nz + h) - self.F(xs, ys, nz - h)) / (2 * h)
        if not np.allclose(fd, self.f(xs, ys, nz), rtol=1e-5, atol=1e-8):
            issues.append("dF/dt != f")
        qv = np.broadcast_to(self.q(xs, ys) if callable(self.q) else self.q, xs.shape)
        if self.nu > 0 and (np.any(qv < self.nu) or np.any(qv > self.c_nu * self.nu)):
            issues.append("q violates nu <= q <= c_nu * nu")
        if self.nu == 0 and np.any(qv < 0):
            issues.append("q is negative")
        for msg in issues:
            warnings.warn(f"{self.name}: {msg}", stacklevel=2)
        return issues


def _cubic(x, y, t):
    return t**3


def _cubic_t(x, y, t):
    return 3.0 * t**2


def _quartic(x, y, t):
    return 0.25 * t**4


def _r9(x, y):
    r2 = x * x + y * y
    return r2**4 * np.sqrt(r2)


def _henon_f(x, y, t):
    return _r9(x, y) * t**3


def _henon_f_t(x, y, t):
    return 3.0 * _r9(x, y) * t**2


def _henon_F(x, y, t):
    return 0.25 * _r9(x, y) * t**4


_GROWTH = {"s": 3, "mu": 4,
           "note": "|f| <= C(1 + |t|^s) and 0 < mu F <= t f for t != 0; documentation only"}


def lane_emden(eps: float = 1.0) -> SemilinearProblem:
    return SemilinearProblem(
        name="lane_emden", eps=eps, q=0.0, nu=0.0, f=_cubic, f_t=_cubic_t, F=_quartic,
        quad_degree=6, domain=UNIT_SQUARE, description="-Lap u = u^3 on (0,1)^2",
        growth=_GROWTH,
    )


def henon(q: float = 0.0, eps: float = 1.0) -> SemilinearProblem:
    """Henon problem; ``q = 0`` lives on (-1,1)^2, ``q = 1`` on (0,1)^2."""
    if q not in (0, 1):
        raise InvalidInputError("henon is defined for q = 0 or q = 1")
    return SemilinearProblem(
        name="henon" if q == 0 else "henon_q1",
        eps=eps, q=float(q), nu=float(q),
        f=_henon_f, f_t=_henon_f_t, F=_henon_F, quad_degree=10,
        domain=CENTERED_SQUARE if q == 0 else UNIT_SQUARE,
        description=f"-Lap u + {q:g} u = |x|^9 u^3", growth=_GROWTH,
    )


def henon_perturbed(eps: float = 1e-3) -> SemilinearProblem:
    return replace(
        henon(q=1.0, eps=eps), name="henon_perturbed",
        description="-eps Lap u + u = |x|^9 u^3 on (0,1)^2",
    )


def lane_emden_perturbed(eps: float = 1e-8) -> SemilinearProblem:
    return SemilinearProblem(
        name="lane_emden_perturbed", eps=eps, q=1.0, nu=1.0, f=_cubic, f_t=_cubic_t,
        F=_quartic, quad_degree=6, domain=UNIT_SQUARE,
        description="-eps Lap u + u = u^3 on (0,1)^2", growth=_GROWTH,
    )


_CATALOG = {
    "lane_emden": lane_emden,
    "henon": henon,
    "henon_perturbed": henon_perturbed,
    "lane_emden_perturbed": lane_emden_perturbed,
}


def builtin_problems() -> dict:
    """Names mapped to factories of the built-in problems."""
    return dict(_CATALOG)


def get_problem(name: str, **kwargs) -> SemilinearProblem:
    if name == "henon_q1":
        return henon(q=1.0, **kwargs)
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(_CATALOG)}") from None
    return factory(**kwargs)


@dataclass
class DiscreteResidual:
    """Riesz representative of ``E'(w)`` in the Galerkin space.

    ``d = -R_N(w)`` is the steepest descent direction and ``norm_eps`` its
    eps-norm. ``vector`` holds the assembled entries ``<E'(w), phi_i>``.
    """

    d: FeFunction
    norm_eps: float
    vector: np.ndarray


class EnergyForm:
    """Discrete energy, derivative and second variation of a problem on a space.

    Matrices and quadrature tables are assembled once per space.
    """

    def __init__(self, problem: SemilinearProblem, space: FeSpace, degree: int | None = None,
                 rel_tol: float = DEFAULT_REL_TOL):
        self.problem = problem
        self.space = space
        self.degree = problem.quad_degree if degree is None else degree
        if self.degree < problem.quad_degree:
            raise ConfigurationError(
                f"quadrature degree {self.degree} below the required {problem.quad_degree}"
            )
        self.rel_tol = rel_tol
        self.K = space.stiffness()
        qc = problem.q_constant()
        if qc is None:
            self.Mq = assemble_mass(space, problem.q, degree=self.degree)
        else:
            self.Mq = qc * space.mass()
        self.A = problem.eps * self.K + self.Mq  # quadratic part of the energy
        self.gram = assemble_gram(space, problem.eps, problem.nu)
        _, self.X, self.Y, self.JW = space.quadrature(self.degree)

    def at_quad(self, coeffs) -> np.ndarray:
        return self.space.at_quadrature(coeffs, self.degree)

    def energy(self, u) -> float:
        c = _coeffs(u)
        U = self.at_quad(c)
        nonlinear = np.sum(self.problem.F(self.X, self.Y, U) * self.JW)
        return float(0.5 * c @ (self.A @ c) - nonlinear)

    def nonlinear_load(self, u) -> np.ndarray:
        U = self.at_quad(_coeffs(u))
        return self.space.load_vector(self.problem.f(self.X, self.Y, U), self.degree)

    def derivative(self, u) -> np.ndarray:
        """Vector of ``<E'(u), phi_i>`` over the free basis."""
        c = _coeffs(u)
        return self.A @ c - self.nonlinear_load(c)

    def second_variation(self, u, Z: np.ndarray) -> np.ndarray:
        """Matrix ``<E''(u) z_j, z_k>`` for the columns of ``Z`` (n_dofs, m)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
        U = self.at_quad(_coeffs(u))
        ft = self.problem.f_t(self.X, self.Y, U) * self.JW  # (ne, nq)
        ZQ = np.stack([self.at_quad(Z[:, j]) for j in range(Z.shape[1])])  # (m, ne, nq)
        nonlinear = np.einsum("aeq,beq,eq->ab", ZQ, ZQ, ft)
        return Z.T @ (self.A @ Z) - nonlinear

    def residual(self, u) -> DiscreteResidual:
        b = self.derivative(u)
        r = cg_solve(self.gram, b, rel_tol=self.rel_tol)
        norm = float(np.sqrt(max(r @ (self.gram @ r), 0.0)))
        return DiscreteResidual(d=FeFunction(self.space, -r), norm_eps=norm, vector=b)

    def inner(self, u, v) -> float:
        return float(_coeffs(u) @ (self.gram @ _coeffs(v)))

    def norm(self, u) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))


def _coeffs(u) -> np.ndarray:
    return u.coeffs if isinstance(u, FeFunction) else np.asarray(u, dtype=float)


def energy(problem: SemilinearProblem, space: FeSpace, u) -> float:
    return EnergyForm(problem, space).energy(u)


def discrete_residual(problem: SemilinearProblem, space: FeSpace, gram, u) -> DiscreteResidual:
    """Solve ``G r = E'(u)`` and return ``d = -r`` with ``||r||_eps``."""
    form = EnergyForm(problem, space)
    form.gram = gram
    return form.residual(u)


def eps_inner(gram, u, v) -> float:
    return float(_coeffs(u) @ (gram @ _coeffs(v)))


def eps_norm(gram, u) -> float:
    return float(np.sqrt(max(eps_inner(gram, u, u), 0.0)))
