"""Adaptive local minimax Galerkin loop."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import logging
import math
from pathlib import Path
from typing import Callable
import warnings

import numpy as np

from .errors import InvalidInputError, IterationCapError, LmmgError
from .estimator import IndicatorField, dorfler_mark, element_indicators
from .fespace import FeFunction, FeSpace, nodal_interpolant, prolongate
from .mesh import Triangulation, create_square_mesh, refine
from .minimax import (
    SCALED_THRESHOLD,
    MinimaxState,
    Subspace,
    initial_state,
    minimax_step,
    project_unit_Lperp,
)
from .problem import EnergyForm, SemilinearProblem

log = logging.getLogger(__name__)


def sine_profile(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def bump_profile(domain):
    """Single positive sine bump fitted to a rectangle."""
    (x0, y0), (x1, y1) = domain

    def g(x, y):
        return np.sin(np.pi * (x - x0) / (x1 - x0)) * np.sin(np.pi * (y - y0) / (y1 - y0))

    return g


@dataclass
class LmmgConfig:
    """Parameters of one saddle point search.

    ``subspace`` holds previously found critical points (any mesh of the same
    domain); they are re-interpolated onto every Galerkin space.
    """

    problem: SemilinearProblem
    gamma: float = 0.25
    lam: float = 0.5
    theta: float = 0.5
    eps_tol: float = 0.0
    max_elements: int = 50_000
    divisions: int = 4
    initial_guess: str | Callable = "sine"
    refinement: str = "adaptive"
    subspace: list = field(default_factory=list)
    scaled_threshold: float = SCALED_THRESHOLD
    max_steps: int = 200
    checkpoint_dir: str | None = None

    def validate(self):
        for name in ("gamma", "lam", "theta"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidInputError(f"{name} must lie in (0, 1], got {value}")
        if self.refinement not in ("adaptive", "uniform"):
            raise InvalidInputError(f"unknown refinement mode {self.refinement!r}")
        if self.max_elements < 2 * self.divisions**2:
            raise InvalidInputError("max_elements is below the initial element count")
        if self.eps_tol < 0:
            raise InvalidInputError("eps_tol must be nonnegative")

    def profile(self):
        if callable(self.initial_guess):
            return self.initial_guess
        if self.initial_guess == "sine":
            return sine_profile
        if self.initial_guess == "bump":
            return bump_profile(self.problem.domain)
        raise InvalidInputError(f"unknown initial guess {self.initial_guess!r}")


@dataclass
class GenerationRecord:
    N: int
    elements: int
    dofs: int
    eta: float
    res_norm: float
    energy: float
    minimax_steps: int
    sigma: float


@dataclass
class StepRecord:
    N: int
    k: int
    energy_before: float
    energy_after: float
    res_norm: float
    t: float
    dv_norm: float
    s: float
    m: int
    duality_error: float  # |<E'(w), d> + ||R||^2| / ||R||^2


@dataclass
class RunLog:
    records: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    r0: float | None = None
    solution: FeFunction | None = None
    direction: FeFunction | None = None
    gamma: float | None = None
    status: str = "running"

    @property
    def mesh(self) -> Triangulation | None:
        return None if self.solution is None else self.solution.space.mesh

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def sigma(N: int, r0: float, mesh) -> float:
    """``r0 / sqrt(#elements)``, the residual target on generation ``N >= 1``."""
    if N < 1:
        raise InvalidInputError("sigma is defined for N >= 1")
    n = mesh if isinstance(mesh, (int, np.integer)) else mesh.n_elements
    return r0 / math.sqrt(n)


def _subspace_on(space: FeSpace, form: EnergyForm, previous) -> Subspace:
    basis = [nodal_interpolant(space, w) if w.space is not space else w for w in previous]
    basis.sort(key=form.energy)
    return Subspace.span(basis, form.gram)


def _mark(config: LmmgConfig, field_: IndicatorField, mesh) -> np.ndarray:
    if config.refinement == "uniform":
        return np.arange(mesh.n_elements)
    return dorfler_mark(field_, config.theta)


def _checkpoint(config, N, state):
    if not config.checkpoint_dir:
        return
    from .io import write_solution

    out = Path(config.checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_solution(state.w, out / f"gen{N:03d}")


def run_lmmg(config: LmmgConfig, callback: Callable | None = None) -> RunLog:
    """Run the adaptive local minimax Galerkin algorithm.

    On the initial space a single minimax step fixes ``r0 = ||R_0(w_0^1)||``;
    afterwards each space iterates while ``||R|| > gamma * eta`` or
    ``||R|| > sigma(N)``, then the mesh is refined. The run ends when
    ``||R|| < eps_tol`` or when the next mesh would exceed ``max_elements``.
    ``callback(event, **data)`` sees every residual evaluation.
    """
    config.validate()
    problem = config.problem
    run = RunLog(gamma=config.gamma)
    try:
        _run(config, problem, run, callback)
    except LmmgError as exc:
        run.status = f"failed: {exc}"
        exc.log = run
        raise
    run.status = "done"
    return run


def _run(config, problem, run, callback):
    lo, hi = problem.domain
    mesh = create_square_mesh(lo, hi, config.divisions)
    space = FeSpace(mesh)
    form = EnergyForm(problem, space)
    L = _subspace_on(space, form, config.subspace)
    v0 = nodal_interpolant(space, config.profile())
    v0 = project_unit_Lperp(v0, L, form.gram)
    if L.dim:
        w_last = L.basis[-1]
        e0 = form.energy(w_last)
        if not form.energy(w_last.coeffs + 1e-3 * v0.coeffs) > e0:
            warnings.warn("initial direction is not an ascent direction at the last critical point")
    state = initial_state(form, L, v0, scaled_threshold=config.scaled_threshold)

    # generation 0: a single minimax step defines r0
    res = form.residual(state.w)
    _notify(callback, "residual", N=0, k=0, form=form, state=state, residual=res)
    state = _step(config, form, L, state, res, run, N=0)
    res = form.residual(state.w)
    run.r0 = res.norm_eps
    indicators = element_indicators(form, state.w)
    N = 0
    log.info("N=0 elements=%d r0=%.3e energy=%.6e", mesh.n_elements, run.r0, state.energy)

    while True:
        marked = _mark(config, indicators, mesh)
        child = refine(mesh, marked)
        if child.n_elements > config.max_elements:
            break
        N += 1
        mesh = child
        new_space = FeSpace(mesh)
        form = EnergyForm(problem, new_space)
        v = prolongate(state.v, new_space)
        L = _subspace_on(new_space, form, config.subspace)
        v = project_unit_Lperp(v, L, form.gram)
        state = initial_state(form, L, v, start=(state.a, state.t) if L.dim else None,
                              scaled_threshold=config.scaled_threshold)
        space = new_space
        sig = sigma(N, run.r0, mesh)
        k = 0
        while True:
            res = form.residual(state.w)
            indicators = element_indicators(form, state.w)
            _notify(callback, "residual", N=N, k=k, form=form, state=state, residual=res)
            if res.norm_eps <= config.gamma * indicators.eta and res.norm_eps <= sig:
                break
            if k >= config.max_steps:
                raise IterationCapError(
                    f"{config.max_steps} minimax steps on generation {N} without meeting "
                    f"the stopping test (||R||={res.norm_eps:.3e}, eta={indicators.eta:.3e}, "
                    f"sigma={sig:.3e})"
                )
            state = _step(config, form, L, state, res, run, N=N)
            k += 1
        record = GenerationRecord(
            N=N, elements=mesh.n_elements, dofs=space.n_dofs, eta=indicators.eta,
            res_norm=res.norm_eps, energy=state.energy, minimax_steps=k, sigma=sig,
        )
        run.records.append(record)
        run.solution, run.direction = state.w, state.v
        _checkpoint(config, N, state)
        log.info(
            "N=%d elements=%d eta=%.3e |R|=%.3e sigma=%.3e energy=%.6e steps=%d",
            N, record.elements, record.eta, record.res_norm, sig, record.energy, k,
        )
        if res.norm_eps < config.eps_tol:
            break
    if run.solution is None:
        run.solution, run.direction = state.w, state.v


def _step(config, form, L, state, res, run, N) -> MinimaxState:
    dual = float(res.vector @ res.d.coeffs)
    nsq = res.norm_eps**2
    duality = abs(dual + nsq) / nsq if nsq > 0 else 0.0
    new, diag = minimax_step(form, L, state, config.lam, residual=res,
                             scaled_threshold=config.scaled_threshold)
    run.steps.append(StepRecord(
        N=N, k=state.k, energy_before=diag["energy_before"], energy_after=diag["energy_after"],
        res_norm=res.norm_eps, t=state.t, dv_norm=diag["dv_norm"], s=diag["s"], m=diag["m"],
        duality_error=duality,
    ))
    return new


def _notify(callback, event, **data):
    if callback is not None:
        callback(event, **data)


def restart_with_subspace(config: LmmgConfig, previous) -> RunLog:
    """Search for a further critical point with ``L = span(previous)``."""
    return run_lmmg(replace(config, subspace=list(previous)))
