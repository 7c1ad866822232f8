"""Discrete function spaces over a hierarchical mesh and their adaptation.

A :class:`DiscreteFunctionSpace` binds a mesh, a basis family, a key per
leaf and a :class:`~hpdg.dof.DofMapper`. Discrete functions register with
their space; every h- or p-adaptation runs one DOF transaction in which the
registered arrays are enlarged to the intermediate size, projected element
by element, relocated into holes and truncated.
"""
from __future__ import annotations

import logging
import weakref
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Protocol, Sequence

import numpy as np

from .basis import BasisFamily, BasisFunctionSet, Iso, Key, key_max
from .dof import DofMapper, begin_adapt
from .mesh import AdaptationReport, Element, HierarchicalMesh
from .quadrature import default_order, element_rule

log = logging.getLogger(__name__)


class DataProjection(Protocol):
    """Local transfer of user data during adaptation.

    ``former`` and ``origin`` are parallel sequences: one entry for a
    p-change (the element itself), the father for a refined child, or every
    former child for a coarsened father. ``destination`` holds the
    continuation indices of ``element`` in the new space.
    """

    def __call__(self, element: Element, former: Sequence[BasisFunctionSet],
                 future: BasisFunctionSet, origin: Sequence[np.ndarray],
                 destination: np.ndarray) -> None: ...


@dataclass
class TransactionStats:
    """Index-space bookkeeping of the last adaptation transaction."""

    old_size: int = 0
    new_size: int = 0
    peak_size: int = 0
    changed_elements: int = 0
    relocations: int = 0

    @property
    def storage_bound(self) -> int:
        return self.old_size + self.new_size


class DiscreteFunctionSpace:
    """Piecewise polynomial DG space with per-element keys."""

    def __init__(self, mesh: HierarchicalMesh, family: BasisFamily,
                 key: Key | Mapping | int = 1):
        self.mesh = mesh
        self.family = family
        if isinstance(key, int):
            key = Iso(key)
        if isinstance(key, Mapping):
            self.keys = {e: key[e] for e in mesh.leaf_ids()}
        else:
            self.keys = {e: key for e in mesh.leaf_ids()}
        for e, k in self.keys.items():
            family.validate(mesh.element(e).cell_type, k)
        self.pending: dict = {}
        self.mapper = DofMapper.fresh({e: self.blocks(e) for e in mesh.leaf_ids()})
        self._functions: "weakref.WeakSet[DiscreteFunction]" = weakref.WeakSet()
        self._sets: dict = {}
        self.stats = TransactionStats(self.size, self.size, self.size)
        self.max_peak_ratio = 0.0

    # -- basic queries
    @property
    def size(self) -> int:
        return self.mapper.size

    def __len__(self) -> int:
        return self.size

    def leaf_ids(self):
        return self.mesh.leaf_ids()

    def element(self, eid) -> Element:
        return self.mesh.element(eid)

    def key(self, element) -> Key:
        eid = element.id if isinstance(element, Element) else element
        return self.keys[eid]

    def degree(self, element) -> int:
        return self.key(element).degree

    def blocks(self, eid, key: Optional[Key] = None) -> int:
        key = self.keys[eid] if key is None else key
        return self.family.blocks(self.mesh.element(eid).cell_type, key)

    def basis_set(self, element, key: Optional[Key] = None) -> BasisFunctionSet:
        el = element if isinstance(element, Element) else self.mesh.element(element)
        key = self.keys[el.id] if key is None else key
        cached = self._sets.get((el.id, key))
        if cached is None or cached.element is not el:
            cached = self.family.basis_function_set(el, key)
            self._sets[(el.id, key)] = cached
        return cached

    def indices(self, element) -> np.ndarray:
        eid = element.id if isinstance(element, Element) else element
        return self.mapper.indices(eid)

    def register(self, u: "DiscreteFunction") -> None:
        self._functions.add(u)

    # -- p-adaptation interface
    def mark(self, key: Key, element) -> None:
        """Record a pending key for a leaf; takes effect on :meth:`adapt_p`."""
        eid = element.id if isinstance(element, Element) else element
        if not self.mesh.is_leaf(eid):
            raise ValueError(f"cannot mark non-leaf element {eid}")
        self.family.validate(self.mesh.element(eid).cell_type, key)
        self.pending[eid] = key

    def adapt_p(self, projections: Sequence[DataProjection] = ()) -> bool:
        """Apply pending keys; returns whether the space changed.

        Registered functions without a projection get zero-initialized DOFs
        on every changed element (their old local data is discarded).
        """
        pending, self.pending = self.pending, {}
        new_keys = dict(self.keys)
        changed = set()
        for eid, k in pending.items():
            if eid in new_keys and new_keys[eid] != k:
                new_keys[eid] = k
                changed.add(eid)
        if not changed:
            return False
        sources = {eid: [(self.mesh.element(eid), self.keys[eid])] for eid in changed}
        self._run_transaction(new_keys, sources, changed, projections)
        return True

    # -- h-adaptation
    def adapt_h(self, marks: Mapping, projections: Sequence[DataProjection] = (),
                transfer: Optional[Callable] = None) -> AdaptationReport:
        """Adapt the mesh and project registered data under transferred keys.

        ``transfer(report, keys)`` returns keys for the new leaf set; the
        default gives refined children their father's key and coarsened
        fathers the maximum of their former children's keys.
        """
        self.pending = {e: k for e, k in self.pending.items()
                        if not (marks.get(e) in ("refine", "coarsen"))}
        old_keys = dict(self.keys)
        report = self.mesh.adapt(marks)
        if not report.changed:
            return report
        transfer = transfer or default_key_transfer
        new_keys = transfer(report, old_keys)
        new_keys = {e: new_keys[e] for e in self.mesh.leaf_ids()}
        sources = {}
        for f, kids in report.refined.items():
            fel = self.mesh.element(f)
            for c in kids:
                sources[c] = [(fel, old_keys[f])]
        for f, kid_elements in report.coarsened.items():
            sources[f] = [(k, old_keys[k.id]) for k in kid_elements]
        self._run_transaction(new_keys, sources, set(), projections)
        for f, kids in report.refined.items():
            self._sets = {k: v for k, v in self._sets.items() if k[0] != f}
        for f, kid_elements in report.coarsened.items():
            gone = {k.id for k in kid_elements}
            self._sets = {k: v for k, v in self._sets.items() if k[0] not in gone}
        return report

    # -- transaction
    def _run_transaction(self, new_keys: dict, sources: dict, changed: set,
                         projections: Sequence[DataProjection]) -> None:
        mesh = self.mesh
        new_sizes = {e: self.family.blocks(mesh.element(e).cell_type, new_keys[e])
                     for e in mesh.leaf_ids()}
        tx = begin_adapt(self.mapper, new_sizes, changed)
        functions = list(self._functions)
        for u in functions:
            u._resize(tx.half_size)
        peak = max([tx.half_size] + [len(u.dofs) for u in functions])
        projected = {id(p.function) for p in projections if hasattr(p, "function")}
        for ch in tx.changes:
            el = mesh.element(ch.element)
            future = self.basis_set(el, new_keys[ch.element])
            src = sources.get(ch.element)
            if src is None:
                raise RuntimeError(f"no data source for changed element {ch.element}")
            former = [self._former_set(s_el, s_key) for s_el, s_key in src]
            if len(src) == 1 and src[0][0] is el:
                origin = [ch.origin]
            else:
                origin = [tx.continuation[s_el.id][:len(fs)] for (s_el, _), fs in zip(src, former)]
            for proj in projections:
                proj(el, former, future, origin, ch.destination)
            for u in functions:
                if id(u) not in projected:
                    u.dofs[ch.destination] = 0.0
        tx.mark_projected()
        new_mapper = tx.commit()
        if tx.relocations:
            src_ix = np.fromiter((a for a, _ in tx.relocations), dtype=np.int64)
            dst_ix = np.fromiter((b for _, b in tx.relocations), dtype=np.int64)
        for u in functions:
            if tx.relocations:
                u.dofs[dst_ix] = u.dofs[src_ix]
            u._resize(tx.new_size)
        self.stats = TransactionStats(tx.old_size, tx.new_size, peak, len(tx.changes),
                                      len(tx.relocations))
        self.max_peak_ratio = max(self.max_peak_ratio, peak / max(self.stats.storage_bound, 1))
        self.mapper = new_mapper
        self.keys = new_keys
        log.debug("dof transaction: %d -> %d (peak %d, %d relocations)",
                  tx.old_size, tx.new_size, peak, len(tx.relocations))

    def _former_set(self, el: Element, key: Key) -> BasisFunctionSet:
        return self.family.basis_function_set(el, key)


def default_key_transfer(report: AdaptationReport, keys: Mapping) -> dict:
    """Children inherit the father's key; a coarsened father takes the max."""
    new = dict(keys)
    for f, kids in report.refined.items():
        k = new.pop(f)
        for c in kids:
            new[c] = k
    for f, kid_elements in report.coarsened.items():
        new[f] = key_max(new.pop(c.id) for c in kid_elements)
    return new


class DiscreteFunction:
    """Global DOF vector bound to a space; resized by the space's transactions."""

    def __init__(self, space: DiscreteFunctionSpace, name: str = "u", dofs=None):
        self.space = space
        self.name = name
        if dofs is None:
            self.dofs = np.zeros(space.size)
        else:
            self.dofs = np.array(dofs, dtype=np.float64)
            if self.dofs.shape != (space.size,):
                raise ValueError("DOF vector length does not match the space")
        space.register(self)

    def __len__(self) -> int:
        return len(self.dofs)

    def _resize(self, n: int) -> None:
        if n > len(self.dofs):
            self.dofs = np.concatenate([self.dofs, np.zeros(n - len(self.dofs))])
        elif n < len(self.dofs):
            self.dofs = self.dofs[:n].copy()

    def copy(self, name: Optional[str] = None) -> "DiscreteFunction":
        return DiscreteFunction(self.space, name or self.name, self.dofs.copy())

    def local_dofs(self, element) -> np.ndarray:
        eid = element.id if isinstance(element, Element) else element
        if not self.space.mesh.is_leaf(eid):
            raise ValueError(f"element {eid} is not a leaf")
        return self.dofs[self.space.indices(eid)]

    def evaluate(self, element, ref_points) -> np.ndarray:
        """Values of the local function at reference points of ``element``."""
        bs = self.space.basis_set(element)
        return bs.evaluate(ref_points) @ self.local_dofs(element)

    def gradient(self, element, ref_points) -> np.ndarray:
        bs = self.space.basis_set(element)
        return np.einsum("mnd,n->md", bs.physical_gradient(ref_points), self.local_dofs(element))

    def __call__(self, x) -> np.ndarray:
        """Point evaluation at physical points (first containing leaf wins)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = np.full(len(x), np.nan)
        todo = np.ones(len(x), dtype=bool)
        for el in self.space.mesh.leaves():
            hit = todo & el.contains(x)
            if hit.any():
                out[hit] = self.evaluate(el, el.local_points(x[hit]))
                todo &= ~hit
            if not todo.any():
                break
        return out


def local_l2_project(source: Callable[[np.ndarray], np.ndarray], target: BasisFunctionSet,
                     order: Optional[int] = None) -> np.ndarray:
    """Coefficients of the ``L^2(E)`` projection of ``source`` onto ``target``.

    ``source`` maps physical points ``(m, 2)`` to values ``(m,)``.
    """
    el = target.element
    rule = element_rule(el.cell_type, order if order is not None else default_order(target.degree))
    phi = target.family.tabulate_rule(el.cell_type, target.key, rule)[0]
    vals = np.asarray(source(el.global_points(rule.points)), dtype=np.float64)
    rhs = phi.T @ (rule.weights * vals) * el.det
    return _solve_mass(target, rhs)


def _solve_mass(target: BasisFunctionSet, rhs: np.ndarray) -> np.ndarray:
    mass = np.diag(target.mass_matrix())
    if np.any(mass <= 0.0) or not np.all(np.isfinite(mass)):
        raise np.linalg.LinAlgError("singular mass matrix")
    return rhs / mass


def interpolate(space: DiscreteFunctionSpace, func: Callable, name: str = "u",
                order: Optional[int] = None) -> DiscreteFunction:
    """Global ``L^2`` projection of a callable onto ``space``."""
    u = DiscreteFunction(space, name)
    for eid in space.leaf_ids():
        bs = space.basis_set(eid)
        u.dofs[space.indices(eid)] = local_l2_project(func, bs, order)
    return u


class DefaultDataProjection:
    """Local ``L^2`` projection of one discrete function's data.

    The old local DOFs are copied to scratch storage before the destination
    block is overwritten, since old and new index blocks may overlap.
    """

    def __init__(self, function: DiscreteFunction):
        self.function = function

    def __call__(self, element, former, future, origin, destination):
        u = self.function
        n = len(u.dofs)
        for o in list(origin) + [destination]:
            if len(o) and (o.min() < 0 or o.max() >= n):
                raise IndexError("DOF index outside the transaction's index range")
        scratch = [u.dofs[o].copy() for o in origin]
        rhs = np.zeros(future.size)
        for fset, coeffs in zip(former, scratch):
            rhs += _projection_rhs(fset, coeffs, future)
        u.dofs[destination] = _solve_mass(future, rhs)


def _projection_rhs(source: BasisFunctionSet, coeffs: np.ndarray,
                    target: BasisFunctionSet) -> np.ndarray:
    """``int_{S cap T} u_S phi_T`` integrated on the smaller of the two cells."""
    s_el, t_el = source.element, target.element
    order = default_order(source.degree, target.degree)
    domain = t_el if t_el.area <= s_el.area * (1 + 1e-12) else s_el
    rule = element_rule(domain.cell_type, order)
    x = domain.global_points(rule.points)
    if domain is t_el:
        phi_t = target.family.tabulate_rule(t_el.cell_type, target.key, rule)[0]
        vals = source.evaluate(s_el.local_points(x)) @ coeffs if s_el is not t_el else \
            source.family.tabulate_rule(s_el.cell_type, source.key, rule)[0] @ coeffs
    else:
        phi_t = target.evaluate(t_el.local_points(x))
        vals = source.family.tabulate_rule(s_el.cell_type, source.key, rule)[0] @ coeffs
    return phi_t.T @ (rule.weights * vals) * domain.det
