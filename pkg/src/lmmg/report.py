"""Convergence slope and figures rendered from the files of a finished run."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .io import atomic_path, read_csv, read_solution


def fit_slope(elements, eta) -> float:
    """Least-squares slope of ``log eta`` against ``log elements``."""
    x = np.log(np.asarray(elements, dtype=float))
    y = np.log(np.asarray(eta, dtype=float))
    if len(x) < 2:
        raise InvalidInputError("at least two points are needed for a slope")
    if np.ptp(x) == 0:
        raise InvalidInputError("element counts do not vary")
    return float(np.polyfit(x, y, 1)[0])


def report_slope(csv_path, last_k: int = 8) -> float:
    """Slope over the last ``last_k`` rows of a run log."""
    log = read_csv(csv_path)
    if last_k < 2:
        raise InvalidInputError("last_k must be at least 2")
    if len(log.records) < last_k:
        raise InvalidInputError(
            f"{csv_path} has {len(log.records)} rows, fewer than the requested {last_k}"
        )
    rows = log.records[-last_k:]
    return fit_slope([r.elements for r in rows], [r.eta for r in rows])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    path = Path(path)
    with atomic_path(path) as tmp:
        fig.savefig(tmp, format=path.suffix.lstrip(".") or "png", dpi=120, bbox_inches="tight")


def plot_convergence(csv_path, path) -> Path:
    """eta and ||R|| against the element count, with the N^-1/2 reference and
    the number of minimax steps per generation on a second axis."""
    plt = _pyplot()
    log = read_csv(csv_path)
    n = log.column("elements")
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(n, log.column("eta"), "o-", ms=3, label=r"$\eta_N$")
    ax.loglog(n, log.column("res_norm"), "s-", ms=3, label=r"$\|R_N\|_\varepsilon$")
    ref = log.column("eta")[0] * np.sqrt(n[0] / n)
    ax.loglog(n, ref, "k--", lw=1, label=r"$(\#\,\mathrm{elements})^{-1/2}$")
    ax.set_xlabel("number of elements")
    ax.grid(True, which="both", alpha=0.3)
    twin = ax.twinx()
    twin.step(n, log.column("minimax_steps"), where="mid", color="0.5", lw=1)
    twin.set_ylabel("minimax steps", color="0.4")
    twin.set_ylim(bottom=0)
    ax.legend(loc="lower left")
    _save(fig, path)
    plt.close(fig)
    return Path(path)


def plot_solution(sol_path, path) -> Path:
    plt = _pyplot()
    u = read_solution(sol_path)
    mesh = u.space.mesh
    fig, ax = plt.subplots(figsize=(5, 4.5))
    art = ax.tripcolor(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.elements, u.full(),
                       shading="gouraud", cmap="viridis")
    fig.colorbar(art, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(f"solution, {mesh.n_elements} elements")
    _save(fig, path)
    plt.close(fig)
    return Path(path)


def plot_mesh(sol_path, path) -> Path:
    plt = _pyplot()
    mesh = read_solution(sol_path).space.mesh
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.triplot(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.elements, lw=0.2, color="k")
    ax.set_aspect("equal")
    ax.set_title(f"{mesh.n_elements} elements")
    _save(fig, path)
    plt.close(fig)
    return Path(path)


def render_figures(run_dir) -> list[Path]:
    """Write ``convergence.png`` and, when a solution is present, ``solution.png``
    and ``mesh.png`` into ``run_dir``."""
    run_dir = Path(run_dir)
    csv_path = run_dir / "log.csv"
    if not csv_path.exists():
        raise InvalidInputError(f"{csv_path} not found")
    out = [plot_convergence(csv_path, run_dir / "convergence.png")]
    sol = run_dir / "solution.sol"
    if sol.exists():
        out.append(plot_solution(sol, run_dir / "solution.png"))
        out.append(plot_mesh(sol, run_dir / "mesh.png"))
    return out
