"""Residual a posteriori indicators robust in eps, and bulk (Dörfler) marking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fespace import FeFunction


@dataclass
class IndicatorField:
    """Squared element indicators; ``eta`` is the global value."""

    eta_sq: np.ndarray
    interior_sq: np.ndarray | None = None
    jump_sq: np.ndarray | None = None
    oscillation_sq: np.ndarray | None = None

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta_sq.sum()))

    def __len__(self):
        return len(self.eta_sq)


def alpha_weights(h, eps: float, nu: float) -> np.ndarray:
    """``min(nu^-1/2, eps^-1/2 h)``, or ``eps^-1/2 h`` when ``nu = 0``."""
    h = np.asarray(h, dtype=float)
    scaled = h / np.sqrt(eps)
    if nu == 0:
        return scaled
    return np.minimum(1.0 / np.sqrt(nu), scaled)


def element_gradients(u: FeFunction) -> np.ndarray:
    """(ne, 2) constant gradient of a P1 function on each element."""
    space = u.space
    return np.einsum("eik,ei->ek", space.gradients, u.full()[space.mesh.elements])


def normal_jumps(u: FeFunction, eps: float):
    """Per-element, per-local-edge value of the normal jump of ``eps grad u``
    (zero on boundary edges) and the matching edge lengths, both (ne, 3)."""
    mesh = u.space.mesh
    geo = mesh.geometry()
    grad = element_gradients(u)
    nb = mesh.edge_neighbors()
    e2e = mesh.element_edges
    own = np.arange(mesh.n_elements)[:, None]
    other = np.where(nb[e2e, 0] == own, nb[e2e, 1], nb[e2e, 0])  # (ne, 3)
    interior = other >= 0
    diff = grad[:, None, :] - grad[np.where(interior, other, 0)]
    jump = eps * np.einsum("ejk,ejk->ej", diff, geo.normals)
    jump[~interior] = 0.0
    return jump, geo.edge_lengths


def element_indicators(form, u: FeFunction, oscillation: bool = False) -> IndicatorField:
    """eps-robust residual indicators of a P1 function.

    ``eta_T^2 = a_T^2 ||f(.,u) - q u||_T^2 + 0.5 eps^-1/2 a_T ||[eps grad u]||^2_{dT \\ dOmega}``.
    With ``oscillation=True`` the element residual uses the nodal interpolant
    ``f_T`` of ``f(., u)`` and the term ``a_T^2 ||f - f_T||_T^2`` is added.
    """
    pb = form.problem
    space = u.space
    mesh = space.mesh
    eps, nu = pb.eps, pb.nu
    alpha = alpha_weights(mesh.geometry().diameter, eps, nu)
    X, Y, JW = form.X, form.Y, form.JW
    U = form.at_quad(u.coeffs)
    fU = pb.f(X, Y, U)
    q = pb.q(X, Y) if callable(pb.q) else pb.q
    osc = None
    if oscillation:
        from .fespace import triangle_quadrature

        rule = triangle_quadrature(form.degree)
        P = mesh.vertices[mesh.elements]
        fv = pb.f(P[..., 0], P[..., 1], u.full()[mesh.elements])
        fT = fv @ rule.points.T
        osc = alpha**2 * np.sum((fU - fT) ** 2 * JW, axis=1)
        fU = fT
    interior = alpha**2 * np.sum((fU - q * U) ** 2 * JW, axis=1)
    jump, lengths = normal_jumps(u, eps)
    jump_sq = 0.5 / np.sqrt(eps) * alpha * np.sum(jump**2 * lengths, axis=1)
    total = interior + jump_sq
    if osc is not None:
        total = total + osc
    return IndicatorField(eta_sq=total, interior_sq=interior, jump_sq=jump_sq, oscillation_sq=osc)


def dorfler_mark(field, theta: float) -> np.ndarray:
    """Smallest set carrying a ``theta`` fraction of the total squared indicator.

    Greedy in decreasing ``eta_T^2`` with ties resolved by lower element id.
    """
    eta_sq = field.eta_sq if isinstance(field, IndicatorField) else np.asarray(field, dtype=float)
    if not 0 < theta <= 1:
        raise ValueError("theta must lie in (0, 1]")
    total = eta_sq.sum()
    if eta_sq.size == 0 or total <= 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(-eta_sq, kind="stable")
    csum = np.cumsum(eta_sq[order])
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    n = min(n, len(order))
    return np.sort(order[:n])
