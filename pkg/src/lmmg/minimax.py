"""Local minimax iteration: peak selection, direction update and step size rule.

All routines work on an energy object exposing ``energy``, ``derivative``,
``second_variation``, ``gram`` and ``at_quad`` (see
:class:`lmmg.problem.EnergyForm`); the peak selections along a single ray
additionally read ``A`` (quadratic part), ``problem``, ``X``, ``Y`` and ``JW``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import (
    BoundaryDegeneracyError,
    DegenerateDirectionError,
    InvalidInputError,
    PeakSelectionError,
    StepSizeError,
)
from .fespace import FeFunction

SCALED_THRESHOLD = 1e-4
RAY_TOL = 1e-10
ND_TOL = 1e-8
T_FLOOR = 1e-8
UNIT_TOL = 1e-8


@dataclass
class Subspace:
    """span of previously found critical points, ordered by increasing energy."""

    basis: list = field(default_factory=list)
    gram_matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @classmethod
    def span(cls, basis, gram) -> "Subspace":
        basis = list(basis)
        if not basis:
            return cls()
        B = np.column_stack([b.coeffs for b in basis])
        S = B.T @ (gram @ B)
        if not np.all(np.isfinite(S)) or np.linalg.cond(S) > 1e12:
            raise DegenerateDirectionError("subspace basis is not linearly independent")
        return cls(basis, S)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrix(self) -> np.ndarray:
        if not self.basis:
            return np.zeros((0, 0))
        return np.column_stack([b.coeffs for b in self.basis])

    def combine(self, a) -> np.ndarray:
        if not self.basis:
            return 0.0
        return self.matrix() @ np.asarray(a, dtype=float)


@dataclass
class MinimaxState:
    """Current direction ``v`` (unit, orthogonal to L) and ``w = p(v) = u + t v``."""

    v: FeFunction
    w: FeFunction
    t: float
    a: np.ndarray
    energy: float
    k: int = 0


@dataclass
class PeakResult:
    t: float
    a: np.ndarray
    w: FeFunction
    energy: float


@dataclass
class StepResult:
    s: float
    m: int
    m_start: int
    v: FeFunction
    peak: PeakResult
    trials: int


# -- projection ---------------------------------------------------------------


def project_unit_Lperp(v, L: Subspace, gram) -> FeFunction:
    """Orthogonalise ``v`` against ``L`` in the eps-inner product and normalise."""
    c = np.array(v.coeffs, dtype=float)
    if L.dim:
        B = L.matrix()
        for _ in range(2):  # second pass removes rounding residue
            c -= B @ np.linalg.solve(L.gram_matrix, B.T @ (gram @ c))
    norm = math.sqrt(max(float(c @ (gram @ c)), 0.0))
    scale = math.sqrt(max(float(v.coeffs @ (gram @ v.coeffs)), 0.0))
    if norm < 1e-12 * max(1.0, scale):
        raise DegenerateDirectionError("direction lies in the span of L")
    return FeFunction(v.space, c / norm)


def _check_unit(form, v):
    n = math.sqrt(max(float(v.coeffs @ (form.gram @ v.coeffs)), 0.0))
    if abs(n - 1.0) > UNIT_TOL:
        raise InvalidInputError(f"direction must have unit eps-norm, got {n:.6g}")


# -- scalar root finding ------------------------------------------------------------------


def bracketed_newton(fun, dfun, lo, hi, f_lo=None, f_hi=None, tol=None, max_iter=200):
    """Root of ``fun`` in ``[lo, hi]`` given a sign change; Newton steps that leave the
    bracket (or stall) are replaced by bisection. ``tol(x, fx)`` decides convergence."""
    f_lo = fun(lo) if f_lo is None else f_lo
    f_hi = fun(hi) if f_hi is None else f_hi
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise PeakSelectionError("bracket does not contain a sign change")
    x = 0.5 * (lo + hi)
    fx = fun(x)
    width = hi - lo
    for _ in range(max_iter):
        if fx == 0 or (tol is not None and tol(x, fx)):
            return x
        if np.sign(fx) == np.sign(f_lo):
            lo, f_lo = x, fx
        else:
            hi, f_hi = x, fx
        dfx = dfun(x)
        x_new = x - fx / dfx if dfx != 0 else np.nan
        if not (lo < x_new < hi) or abs(x_new - x) > 0.5 * width:
            x_new = 0.5 * (lo + hi)
        width = abs(x_new - x)
        if hi - lo <= 4 * np.finfo(float).eps * abs(hi):
            return x_new
        x = x_new
        fx = fun(x)
    raise PeakSelectionError("root finding did not converge")


# -- peak selection -------------------------------------------------------------------------


class _Ray:
    """``g'(t)`` and ``g''(t)`` for ``g(t) = E(t v)``, optionally rescaled by ``sqrt(eps)``."""

    def __init__(self, form, v, scale=1.0):
        self.form = form
        self.V = form.at_quad(v.coeffs)
        self.quad = float(v.coeffs @ (form.A @ v.coeffs))  # |||v|||^2
        self.scale = scale
        self.pb = form.problem
        self.VJW = self.V * form.JW

    def d1(self, t):
        s = self.scale
        return t * self.quad - np.sum(self.pb.f(self.form.X, self.form.Y, s * t * self.V) * self.VJW) / s

    def d2(self, t):
        s = self.scale
        return self.quad - np.sum(
            self.pb.f_t(self.form.X, self.form.Y, s * t * self.V) * self.V * self.VJW
        )


def _ray_root(ray: _Ray, tol=RAY_TOL, t_max=1e12, t_min=1e-12):
    t = 1.0
    g = ray.d1(t)
    if g == 0:
        return t
    if g > 0:
        lo, g_lo = t, g
        hi = 2.0 * t
        g_hi = ray.d1(hi)
        while g_hi > 0:
            lo, g_lo = hi, g_hi
            hi *= 2.0
            if hi > t_max:
                raise PeakSelectionError("no sign change of g'(t) up to t = 1e12")
            g_hi = ray.d1(hi)
    else:
        hi, g_hi = t, g
        lo = 0.5 * t
        g_lo = ray.d1(lo)
        while g_lo < 0:
            hi, g_hi = lo, g_lo
            lo *= 0.5
            if lo < t_min:
                raise PeakSelectionError("g'(t) stays negative down to t = 1e-12")
            g_lo = ray.d1(lo)
    return bracketed_newton(
        ray.d1, ray.d2, lo, hi, g_lo, g_hi,
        tol=lambda x, fx: abs(fx) <= tol * ray.quad * x,
    )


def peak_select_1d(form, v: FeFunction, tol: float = RAY_TOL):
    """Maximiser ``t*`` of ``t -> E(t v)`` on ``t > 0``; returns ``(t*, t* v)``."""
    _check_unit(form, v)
    t = _ray_root(_Ray(form, v), tol=tol)
    return t, FeFunction(v.space, t * v.coeffs)


def peak_select_scaled(form, v: FeFunction, tol: float = RAY_TOL):
    """Same maximiser, found as ``sqrt(eps) * argmax_t eps^-1 E(sqrt(eps) t v)``."""
    _check_unit(form, v)
    s = math.sqrt(form.problem.eps)
    that = _ray_root(_Ray(form, v, scale=s), tol=tol)
    t = s * that
    return t, FeFunction(v.space, t * v.coeffs)


def peak_select_nd(form, L: Subspace, v: FeFunction, start=None, t_floor: float = T_FLOOR,
                   tol: float = ND_TOL, max_iter: int = 500):
    """Local maximiser of ``(a, t) -> E(sum a_i w_i + t v)`` over ``t >= t_floor``.

    Ascent from ``start = (a, t)`` or from ``(0, t*)`` with ``t*`` the ray peak.
    Each iteration takes the Newton direction when the restricted Hessian is
    negative definite and the eps-Riesz gradient otherwise, with projection onto
    ``t >= t_floor`` and Armijo backtracking.
    Returns ``(a, t, w)``.
    """
    _check_unit(form, v)
    if L.dim == 0:
        t, w = peak_select_1d(form, v)
        return np.zeros(0), t, w
    Z = np.column_stack([L.matrix(), v.coeffs])
    S = Z.T @ (form.gram @ Z)
    m = L.dim
    if start is None:
        t0, _ = peak_select_1d(form, v)
        c = np.concatenate([np.zeros(m), [t0]])
    else:
        c = np.concatenate([np.asarray(start[0], dtype=float), [float(start[1])]])
    c[-1] = max(c[-1], t_floor)

    phi = form.energy(Z @ c)
    for _ in range(max_iter):
        w = Z @ c
        g = Z.T @ form.derivative(w)
        # at the floor only the inward (t increasing) part of the gradient counts
        g_eff = g.copy()
        at_floor = c[-1] <= t_floor and g[-1] < 0
        if at_floor:
            g_eff[-1] = 0.0
        gnorm = math.sqrt(max(g_eff @ np.linalg.solve(S, g_eff), 0.0))
        wnorm = math.sqrt(max(c @ S @ c, 0.0))
        if gnorm <= tol * max(1.0, wnorm):
            if at_floor:
                raise BoundaryDegeneracyError(
                    "peak selection pinned at the lower bound of t; the iterate "
                    "is not bounded away from L"
                )
            return c[:m], c[-1], FeFunction(v.space, w)
        H = form.second_variation(w, Z)
        H = 0.5 * (H + H.T)
        direction = None
        if np.all(np.linalg.eigvalsh(H) < 0):
            direction = -np.linalg.solve(H, g)
        if direction is None or g @ direction <= 0:
            direction = np.linalg.solve(S, g)
        if at_floor:
            direction[-1] = max(direction[-1], 0.0)
        if g @ direction <= 0:
            raise PeakSelectionError("no ascent direction in the n-dimensional peak selection")
        if g @ direction <= 64 * np.finfo(float).eps * max(1.0, abs(phi)):
            # predicted gain below the rounding level of E: energy values cannot
            # guide a line search any more, take the full step
            c = c + direction
            c[-1] = max(c[-1], t_floor)
            phi = form.energy(Z @ c)
            continue
        alpha = 1.0
        for _ in range(60):
            trial = c + alpha * direction
            trial[-1] = max(trial[-1], t_floor)
            phi_trial = form.energy(Z @ trial)
            if phi_trial >= phi + 1e-4 * g @ (trial - c):
                break
            alpha *= 0.5
        else:
            # no ascent left at floating-point resolution
            if gnorm <= 1e3 * tol * max(1.0, wnorm):
                return c[:m], c[-1], FeFunction(v.space, w)
            raise PeakSelectionError("line search failed in the n-dimensional peak selection")
        c, phi = trial, phi_trial
    raise PeakSelectionError(f"n-dimensional peak selection exceeded {max_iter} iterations")


def select_peak(form, L: Subspace, v: FeFunction, start=None,
                scaled_threshold: float = SCALED_THRESHOLD) -> PeakResult:
    """Dispatch to the ray or half-space peak selection."""
    if L.dim:
        a, t, w = peak_select_nd(form, L, v, start=start)
    else:
        a = np.zeros(0)
        if form.problem.eps < scaled_threshold:
            t, w = peak_select_scaled(form, v)
        else:
            t, w = peak_select_1d(form, v)
    if not t > 0:
        raise PeakSelectionError("peak selection returned a nonpositive ray coefficient")
    return PeakResult(t=t, a=a, w=w, energy=form.energy(w))


def initial_state(form, L: Subspace, v: FeFunction, start=None,
                  scaled_threshold: float = SCALED_THRESHOLD) -> MinimaxState:
    v = project_unit_Lperp(v, L, form.gram)
    peak = select_peak(form, L, v, start=start, scaled_threshold=scaled_threshold)
    return MinimaxState(v=v, w=peak.w, t=peak.t, a=peak.a, energy=peak.energy, k=0)


# -- step size ----------------------------------------------------------------------


def minimal_exponent(d_norm: float) -> int:
    """Smallest integer ``m`` with ``2**m > d_norm``."""
    if not d_norm > 0:
        raise InvalidInputError("descent direction must be nonzero")
    m = math.floor(math.log2(d_norm)) + 1
    while 2.0 ** (m - 1) > d_norm:
        m -= 1
    while not 2.0**m > d_norm:
        m += 1
    return m


def step_size(form, L: Subspace, state: MinimaxState, d: FeFunction, d_norm: float, lam: float,
              scaled_threshold: float = SCALED_THRESHOLD, max_halvings: int = 60) -> StepResult:
    """Step ``s = lam / 2**m`` for the first admissible ``m``.

    ``m`` starts at the smallest integer with ``2**m > ||d||`` and increases
    until ``E(p(v(s))) - E(w) <= -t ||d|| ||v(s) - v|| / 2`` holds with a strict
    energy decrease.
    """
    if not lam > 0:
        raise InvalidInputError("step size control must be positive")
    m0 = minimal_exponent(d_norm)
    G = form.gram
    start = (state.a, state.t) if L.dim else None
    for m in range(m0, m0 + max_halvings + 1):
        s = lam / 2.0**m
        try:
            v_new = project_unit_Lperp(
                FeFunction(state.v.space, state.v.coeffs + s * d.coeffs), L, G
            )
            peak = select_peak(form, L, v_new, start=start, scaled_threshold=scaled_threshold)
        except (PeakSelectionError, DegenerateDirectionError):
            continue
        dv = v_new.coeffs - state.v.coeffs
        dv_norm = math.sqrt(max(float(dv @ (G @ dv)), 0.0))
        bound = -0.5 * state.t * d_norm * dv_norm
        if peak.energy - state.energy <= bound and peak.energy < state.energy:
            return StepResult(s=s, m=m, m_start=m0, v=v_new, peak=peak, trials=m - m0 + 1)
    raise StepSizeError(
        f"descent condition unattainable for m in [{m0}, {m0 + max_halvings}]"
    )


def minimax_step(form, L: Subspace, state: MinimaxState, lam: float, residual=None,
                 scaled_threshold: float = SCALED_THRESHOLD):
    """One iteration: steepest descent, step size rule, peak selection.

    Returns ``(new_state, diagnostics)``; ``residual`` may be passed in when the
    caller has already solved for the descent direction at ``state.w``.
    """
    if residual is None:
        residual = form.residual(state.w)
    if not residual.norm_eps > 0:
        raise InvalidInputError("minimax step requested at a discrete critical point")
    step = step_size(form, L, state, residual.d, residual.norm_eps, lam,
                     scaled_threshold=scaled_threshold)
    peak = step.peak
    new = MinimaxState(v=step.v, w=peak.w, t=peak.t, a=peak.a, energy=peak.energy, k=state.k + 1)
    diagnostics = {
        "res_norm": residual.norm_eps,
        "energy_before": state.energy,
        "energy_after": new.energy,
        "energy_drop": state.energy - new.energy,
        "s": step.s,
        "m": step.m,
        "m_start": step.m_start,
        "t": state.t,
        "dv_norm": math.sqrt(max(float((step.v.coeffs - state.v.coeffs) @ (form.gram @ (step.v.coeffs - state.v.coeffs))), 0.0)),
    }
    return new, diagnostics
