"""Symmetric interior penalty (SIPG) discretization of ``-lap u = f``, ``u = g``.

Assembly works facet by facet: every interior facet is integrated once,
from the element that comes first in leaf order, over the overlap segment
of the two incident leaves (so hanging facets use the finer side's edge).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .mesh import Element, Intersection
from .quadrature import MAX_ORDER, default_order, element_rule, gauss_segment
from .space import DiscreteFunction, DiscreteFunctionSpace

Field = Callable[[np.ndarray], np.ndarray]


class SolverBreakdown(RuntimeError):
    """CG met non-positive curvature or ran out of iterations."""


def _zero(x):
    return np.zeros(len(x))


@dataclass
class ProblemData:
    """Source ``f``, Dirichlet data ``g``, optional exact solution, penalty ``gamma``.

    ``singular_points`` lists points where the exact solution is not smooth;
    error integrals on elements touching them use graded subdivision.
    """

    f: Field = _zero
    g: Field = _zero
    exact: Optional[Field] = None
    exact_gradient: Optional[Field] = None
    gamma: float = 10.0
    singular_points: Sequence = field(default_factory=tuple)

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("penalty constant gamma must be positive")


def penalty(h_e: float, k_inside: int, k_outside: Optional[int], gamma: float) -> float:
    """Penalty ``sigma_e``: ``gamma (k^2 + k'^2) / (2 h_e)`` inside, ``gamma k^2 / h_e`` on the boundary."""
    if not h_e > 0:
        raise ValueError("facet diameter must be positive")
    if k_outside is None:
        return gamma * k_inside ** 2 / h_e
    return gamma * (k_inside ** 2 + k_outside ** 2) / (2.0 * h_e)


def intersection_penalty(space: DiscreteFunctionSpace, it: Intersection, gamma: float) -> float:
    kin = space.degree(it.inside)
    kout = None if it.outside is None else space.degree(it.outside)
    return penalty(it.length, kin, kout, gamma)


# ---------------------------------------------------------------------------
# trace helpers


def facet_rule(it: Intersection, order: int):
    rule = gauss_segment(min(order, MAX_ORDER))
    t = rule.points[:, 0]
    return t, it.points(t), rule.weights * it.length


def trace(space: DiscreteFunctionSpace, eid, x: np.ndarray, nderiv: int = 1):
    """Values ``(m, n)`` and physical gradients ``(m, n, 2)`` of a leaf's basis at points ``x``."""
    el = space.element(eid)
    tab = space.family.tabulate(el.cell_type, space.key(eid), el.local_points(x), nderiv)
    if nderiv == 0:
        return tab[0], None
    grad = np.stack([tab[1], tab[2]], axis=-1) @ el.inverse_jacobian
    return tab[0], grad


def volume_tables(space: DiscreteFunctionSpace, el: Element, order: int, nderiv: int = 1):
    rule = element_rule(el.cell_type, min(order, MAX_ORDER))
    tab = space.family.tabulate_rule(el.cell_type, space.key(el.id), rule, nderiv)
    return rule, tab


# ---------------------------------------------------------------------------
# assembly


def assemble(space: DiscreteFunctionSpace, data: ProblemData):
    """Stiffness matrix (CSR) and load vector of the SIPG form."""
    mesh = space.mesh
    N = space.size
    rows, cols, vals = [], [], []
    b = np.zeros(N)
    gamma = data.gamma

    def scatter(ri, ci, block):
        rows.append(np.repeat(ri, len(ci)))
        cols.append(np.tile(ci, len(ri)))
        vals.append(block.ravel())

    for el in mesh.leaves():
        k = space.degree(el.id)
        if k < 1:
            raise ValueError(f"SIPG needs degree >= 1, element {el.id} has {k}")
        ix = space.indices(el.id)
        rule, tab = volume_tables(space, el, default_order(k))
        grad = np.stack([tab[1], tab[2]], axis=-1) @ el.inverse_jacobian
        w = rule.weights * el.det
        scatter(ix, ix, np.einsum("qid,qjd,q->ij", grad, grad, w))
        fx = data.f(el.global_points(rule.points))
        b[ix] += tab[0].T @ (w * fx)

        for it in mesh.intersections(el.id):
            if it.outside is not None and not el.id < it.outside:
                continue
            kout = None if it.outside is None else space.degree(it.outside)
            sigma = penalty(it.length, k, kout, gamma)
            order = default_order(k, kout or k)
            t, x, wf = facet_rule(it, order)
            n = it.normal
            vin, gin = trace(space, el.id, x)
            if it.outside is None:
                dn = gin @ n
                block = (-(np.einsum("qi,qj,q->ij", vin, dn, wf) + np.einsum("qi,qj,q->ij", dn, vin, wf))
                         + sigma * np.einsum("qi,qj,q->ij", vin, vin, wf))
                scatter(ix, ix, block)
                gx = data.g(x)
                b[ix] += (-dn + sigma * vin).T @ (wf * gx)
                continue
            ox = space.indices(it.outside)
            vout, gout = trace(space, it.outside, x)
            # jump factors (sign carries the normal) and averaged normal fluxes
            J = np.concatenate([vin, -vout], axis=1)
            G = 0.5 * np.concatenate([gin @ n, gout @ n], axis=1)
            JG = np.einsum("qi,qj,q->ij", J, G, wf)
            block = -(JG + JG.T) + sigma * np.einsum("qi,qj,q->ij", J, J, wf)
            both = np.concatenate([ix, ox])
            scatter(both, both, block)

    if rows:
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N)).tocsr()
    else:
        A = sp.csr_matrix((N, N))
    A.sum_duplicates()
    A.sort_indices()
    return A, b


# ---------------------------------------------------------------------------
# solver


def block_jacobi(A: sp.csr_matrix, blocks: Sequence[np.ndarray]) -> sp.csr_matrix:
    """Sparse matrix holding the exact inverses of the diagonal element blocks."""
    rows, cols, vals = [], [], []
    for ix in blocks:
        inv = np.linalg.inv(A[ix][:, ix].toarray())
        rows.append(np.repeat(ix, len(ix)))
        cols.append(np.tile(ix, len(ix)))
        vals.append(inv.ravel())
    n = A.shape[0]
    if not rows:
        return sp.identity(n, format="csr")
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


@dataclass
class SolveInfo:
    iterations: int
    residual: float


def solve_cg(A, b, x0=None, tol: float = 1e-10, maxit: Optional[int] = None,
             blocks: Optional[Sequence[np.ndarray]] = None):
    """Preconditioned conjugate gradients; returns ``(x, iterations, relative residual)``.

    Stops once ``||b - A x|| <= tol ||b||``. ``blocks`` selects the block
    Jacobi preconditioner (one index array per element); without it the
    plain diagonal is used.
    """
    b = np.asarray(b, dtype=np.float64)
    n = len(b)
    maxit = 10 * n + 100 if maxit is None else maxit
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    if blocks is not None:
        M = block_jacobi(A, blocks)
        precond = M.dot
    else:
        d = A.diagonal()
        precond = lambda r: r / d  # noqa: E731
    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    if rnorm <= tol * bnorm:
        return x, 0, rnorm / bnorm
    z = precond(r)
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxit + 1):
        Ap = A @ p
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverBreakdown(f"non-positive curvature {pAp:.3e} at iteration {it}; "
                                  "the penalty constant may be too small")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol * bnorm:
            # guard against drift of the recursive residual
            rtrue = float(np.linalg.norm(b - A @ x))
            if rtrue <= tol * bnorm:
                return x, it, rtrue / bnorm
            r = b - A @ x
        z = precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverBreakdown(f"CG did not converge in {maxit} iterations "
                          f"(relative residual {rnorm / bnorm:.3e})")


def element_blocks(space: DiscreteFunctionSpace) -> list[np.ndarray]:
    return [space.indices(e) for e in space.leaf_ids()]


def solve(space: DiscreteFunctionSpace, data: ProblemData, u: Optional[DiscreteFunction] = None,
          tol: float = 1e-10, maxit: Optional[int] = None) -> tuple[DiscreteFunction, int]:
    """Assemble and solve; ``u`` (if given) is the initial guess and receives the solution."""
    A, b = assemble(space, data)
    if u is None:
        u = DiscreteFunction(space, "u_h")
    x, its, _ = solve_cg(A, b, u.dofs, tol=tol, maxit=maxit, blocks=element_blocks(space))
    u.dofs[:] = x
    return u, its


# ---------------------------------------------------------------------------
# norms


def _subcells(el: Element, points: Sequence, levels: int) -> list[Element]:
    """Reference-space cells of ``el``, graded towards any of ``points`` on its closure."""
    ref_root = Element((0,), _reference_vertices(el.cell_type), el.cell_type)
    targets = [el.local_points(np.asarray(p, dtype=np.float64))[0] for p in points]
    targets = [t for t in targets if ref_root.contains(t[None, :], tol=1e-12)[0]]
    if not targets or levels <= 0:
        return [ref_root]
    cells = []
    stack = [(ref_root, 0)]
    while stack:
        cell, lev = stack.pop()
        if lev >= levels or not any(cell.contains(t[None, :], tol=1e-12)[0] for t in targets):
            cells.append(cell)
            continue
        for ci, verts in enumerate(cell.child_vertices()):
            stack.append((Element(cell.id + (ci,), verts, cell.cell_type), lev + 1))
    return cells


def _reference_vertices(cell_type: str) -> np.ndarray:
    if cell_type == "quad":
        return np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    return np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])


def element_quadrature(el: Element, order: int, singular_points=(), levels: int = 3):
    """Reference points and physical weights for integrating over ``el``."""
    rule = element_rule(el.cell_type, min(order, MAX_ORDER))
    cells = _subcells(el, singular_points, levels)
    if len(cells) == 1:
        return rule.points, rule.weights * el.det
    pts = np.concatenate([c.global_points(rule.points) for c in cells])
    wts = np.concatenate([rule.weights * c.det for c in cells]) * el.det
    return pts, wts


def error_norms(u: DiscreteFunction, data: ProblemData, levels: int = 3) -> tuple[float, float]:
    """``(||u - u_h||_L2, ||u - u_h||_DG)`` against the exact solution.

    Element integrals use order ``2k + 4``; elements touching a singular
    point are additionally subdivided ``levels`` times towards it.
    """
    if data.exact is None or data.exact_gradient is None:
        raise ValueError("error norms need the exact solution and its gradient")
    space = u.space
    l2 = 0.0
    h1 = 0.0
    for el in space.mesh.leaves():
        k = space.degree(el.id)
        pts, w = element_quadrature(el, 2 * k + 4, data.singular_points, levels)
        bs = space.basis_set(el)
        c = u.local_dofs(el.id)
        tab = space.family.tabulate(el.cell_type, bs.key, pts, 1)
        x = el.global_points(pts)
        uh = tab[0] @ c
        guh = (np.stack([tab[1], tab[2]], axis=-1) @ el.inverse_jacobian).transpose(0, 2, 1) @ c
        l2 += float(w @ (data.exact(x) - uh) ** 2)
        h1 += float(w @ ((data.exact_gradient(x) - guh) ** 2).sum(axis=1))
    jumps = _facet_terms(u, data.g, data.gamma)
    return float(np.sqrt(l2)), float(np.sqrt(h1 + jumps))


def dg_norm(u: DiscreteFunction, gamma: float) -> float:
    """``||v||_DG`` of a discrete function (boundary term uses ``v`` itself)."""
    space = u.space
    h1 = 0.0
    for el in space.mesh.leaves():
        k = space.degree(el.id)
        rule, tab = volume_tables(space, el, default_order(k))
        grad = (np.stack([tab[1], tab[2]], axis=-1) @ el.inverse_jacobian).transpose(0, 2, 1) @ u.local_dofs(el.id)
        h1 += float((rule.weights * el.det) @ (grad ** 2).sum(axis=1))
    return float(np.sqrt(h1 + _facet_terms(u, _zero, gamma)))


def l2_norm(u: DiscreteFunction) -> float:
    space = u.space
    total = 0.0
    for el in space.mesh.leaves():
        rule, tab = volume_tables(space, el, default_order(space.degree(el.id)), 0)
        v = tab[0] @ u.local_dofs(el.id)
        total += float((rule.weights * el.det) @ v ** 2)
    return float(np.sqrt(total))


def _facet_terms(u: DiscreteFunction, g: Field, gamma: float) -> float:
    space = u.space
    total = 0.0
    for it in _all_facets_once(space):
        kin = space.degree(it.inside)
        kout = None if it.outside is None else space.degree(it.outside)
        sigma = penalty(it.length, kin, kout, gamma)
        _, x, wf = facet_rule(it, default_order(kin, kout or kin))
        vin = trace(space, it.inside, x, 0)[0] @ u.local_dofs(it.inside)
        if it.outside is None:
            diff = vin - g(x)
        else:
            diff = vin - trace(space, it.outside, x, 0)[0] @ u.local_dofs(it.outside)
        total += sigma * float(wf @ diff ** 2)
    return total


def _all_facets_once(space: DiscreteFunctionSpace):
    for eid, inters in space.mesh.all_intersections().items():
        for it in inters:
            if it.outside is None or eid < it.outside:
                yield it


def energy(A, x) -> float:
    """``x^T A x``."""
    return float(x @ (A @ x))
