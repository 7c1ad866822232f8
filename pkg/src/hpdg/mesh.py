"""Hierarchical 2D meshes of quads or triangles with local refinement.

A mesh is a forest: one tree per macro cell. Quads split into four
congruent children, triangles into four by edge midpoints (red
refinement). Hanging nodes are allowed at any level difference.

Element ids are tuples ``(macro_index, c_1, ..., c_level)`` holding the
child path; sorting ids as tuples yields the leaf order (macro index, then
child path lexicographically).
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

ElementId = tuple

REFINE = "refine"
COARSEN = "coarsen"
KEEP = "keep"
_MARK_VALUES = (REFINE, COARSEN, KEEP)


class MacroGridError(ValueError):
    """Malformed or invalid macro grid."""


# ---------------------------------------------------------------------------
# macro grids


@dataclass
class MacroGrid:
    vertices: np.ndarray
    cells: list[tuple[int, ...]]
    cell_type: str

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        self.cells = [tuple(int(i) for i in c) for c in self.cells]

    def cell_vertices(self, i: int) -> np.ndarray:
        return self.vertices[list(self.cells[i])]

    @property
    def area(self) -> float:
        return sum(polygon_area(self.cell_vertices(i)) for i in range(len(self.cells)))

    def validate(self) -> "MacroGrid":
        nv = 4 if self.cell_type == "quad" else 3
        if self.cell_type not in ("quad", "triangle"):
            raise MacroGridError(f"unknown cell type {self.cell_type!r}")
        if not self.cells:
            raise MacroGridError("macro grid has no cells")
        polys = []
        for ci, cell in enumerate(self.cells):
            if len(cell) != nv:
                raise MacroGridError(f"cell {ci}: expected {nv} vertices, got {len(cell)}")
            if min(cell) < 0 or max(cell) >= len(self.vertices):
                raise MacroGridError(f"cell {ci}: vertex index out of range")
            pts = self.vertices[list(cell)]
            if polygon_area(pts) <= 0.0:
                raise MacroGridError(f"cell {ci}: not positively oriented")
            if nv == 4 and not _is_axis_aligned_rectangle(pts):
                raise MacroGridError(f"cell {ci}: quad cells must be axis-aligned rectangles")
            polys.append(pts)
        _check_overlap(polys)
        return self


def polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _is_axis_aligned_rectangle(pts: np.ndarray) -> bool:
    for i in range(4):
        d = pts[(i + 1) % 4] - pts[i]
        if abs(d[0]) > 1e-12 * max(1.0, abs(d[1])) and abs(d[1]) > 1e-12 * max(1.0, abs(d[0])):
            return False
    d0 = pts[1] - pts[0]
    d1 = pts[2] - pts[1]
    return abs(float(np.dot(d0, d1))) <= 1e-12 * float(np.linalg.norm(d0) * np.linalg.norm(d1))


def _check_overlap(polys: list[np.ndarray]) -> None:
    # separating axis test for convex cells, pruned by bounding boxes
    boxes = np.array([[p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()] for p in polys])
    order = np.argsort(boxes[:, 0], kind="stable")
    for ii, i in enumerate(order):
        for j in order[ii + 1:]:
            if boxes[j, 0] >= boxes[i, 2]:
                break
            if boxes[j, 1] >= boxes[i, 3] or boxes[i, 1] >= boxes[j, 3]:
                continue
            if _interiors_intersect(polys[i], polys[j]):
                raise MacroGridError(f"cells {min(i, j)} and {max(i, j)} overlap")


def _interiors_intersect(p: np.ndarray, q: np.ndarray) -> bool:
    scale = max(np.ptp(p, axis=0).max(), np.ptp(q, axis=0).max())
    for poly in (p, q):
        for i in range(len(poly)):
            d = poly[(i + 1) % len(poly)] - poly[i]
            axis = np.array([d[1], -d[0]])
            a, b = p @ axis, q @ axis
            if min(a.max(), b.max()) - max(a.min(), b.min()) <= 1e-12 * scale * np.linalg.norm(axis):
                return False
    return True


def load_macro_grid(text: str) -> MacroGrid:
    """Parse the line-based macro grid format and validate the result.

    Recognized lines: ``DIM 2``, ``CELLTYPE quad|triangle``, ``VERTEX x y``,
    ``CELL i0 i1 i2 [i3]``; ``#`` starts a comment.
    """
    vertices: list[tuple[float, float]] = []
    cells: list[tuple[int, ...]] = []
    cell_type = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kw = tok[0].upper()
        try:
            if kw == "DIM":
                if len(tok) != 2 or int(tok[1]) != 2:
                    raise MacroGridError(f"line {lineno}: only DIM 2 is supported")
            elif kw == "CELLTYPE":
                if len(tok) != 2 or tok[1].lower() not in ("quad", "triangle"):
                    raise MacroGridError(f"line {lineno}: CELLTYPE must be quad or triangle")
                cell_type = tok[1].lower()
            elif kw == "VERTEX":
                if len(tok) != 3:
                    raise MacroGridError(f"line {lineno}: VERTEX needs two coordinates")
                vertices.append((float(tok[1]), float(tok[2])))
            elif kw == "CELL":
                if len(tok) not in (4, 5):
                    raise MacroGridError(f"line {lineno}: CELL needs 3 or 4 vertex indices")
                cells.append(tuple(int(t) for t in tok[1:]))
            else:
                raise MacroGridError(f"line {lineno}: unknown keyword {tok[0]!r}")
        except ValueError as exc:
            if isinstance(exc, MacroGridError):
                raise
            raise MacroGridError(f"line {lineno}: {exc}") from None
    if cell_type is None:
        raise MacroGridError("missing CELLTYPE line")
    return MacroGrid(np.array(vertices).reshape(-1, 2), cells, cell_type).validate()


def format_macro_grid(grid: MacroGrid) -> str:
    lines = ["DIM 2", f"CELLTYPE {grid.cell_type}"]
    lines += [f"VERTEX {float(x)!r} {float(y)!r}" for x, y in grid.vertices]
    lines += ["CELL " + " ".join(str(int(i)) for i in c) for c in grid.cells]
    return "\n".join(lines) + "\n"


def rectangle_macro(nx: int, ny: int, cell_type: str = "quad",
                    x0: float = 0.0, x1: float = 1.0, y0: float = 0.0, y1: float = 1.0) -> MacroGrid:
    """Structured ``nx`` by ``ny`` grid; triangles split along the (0,0)-(1,1) diagonal."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    verts = np.array([(x, y) for y in ys for x in xs])
    cells = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
            if cell_type == "quad":
                cells.append((v00, v10, v11, v01))
            else:
                cells += [(v00, v10, v11), (v00, v11, v01)]
    return MacroGrid(verts, cells, cell_type).validate()


def l_shape_macro(cell_type: str = "quad", n: int = 4) -> MacroGrid:
    """L-shaped domain ``(-1,1)^2`` without the quadrant ``x > 0, y < 0``.

    Each of the three retained quadrants holds ``n x n`` squares. Triangles
    split each square along the diagonal pointing at the reentrant corner.
    """
    m = 2 * n
    xs = np.linspace(-1.0, 1.0, m + 1)
    verts = np.array([(x, y) for y in xs for x in xs])
    cells = []
    for j in range(m):
        for i in range(m):
            if i >= n and j < n:
                continue
            v00 = j * (m + 1) + i
            v10, v01, v11 = v00 + 1, v00 + m + 1, v00 + m + 2
            if cell_type == "quad":
                cells.append((v00, v10, v11, v01))
            elif (i < n) == (j < n):
                # quadrants I and III: corner-nearest vertex is v00 or v11
                cells += [(v00, v10, v11), (v00, v11, v01)]
            else:
                cells += [(v00, v10, v01), (v10, v11, v01)]
    return MacroGrid(verts, cells, cell_type).validate()


# ---------------------------------------------------------------------------
# elements

_QUAD_CHILD_OFFSETS = ((0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.5))
_QUAD_CORNERS = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


class Element:
    """Leaf or interior node of the refinement forest with its affine map.

    ``F(xi) = origin + jacobian @ xi`` maps the reference element (unit
    square or unit triangle) onto the element.
    """

    __slots__ = ("id", "vertices", "cell_type", "origin", "jacobian", "inverse_jacobian",
                 "det", "area", "diameter")

    def __init__(self, eid: ElementId, vertices: np.ndarray, cell_type: str):
        self.id = eid
        self.vertices = np.asarray(vertices, dtype=np.float64)
        self.vertices.flags.writeable = False
        self.cell_type = cell_type
        v = self.vertices
        self.origin = v[0]
        second = v[3] if cell_type == "quad" else v[2]
        self.jacobian = np.column_stack([v[1] - v[0], second - v[0]])
        self.det = float(np.linalg.det(self.jacobian))
        if self.det <= 0.0:
            raise ValueError(f"element {eid} has non-positive Jacobian")
        self.inverse_jacobian = np.linalg.inv(self.jacobian)
        self.area = polygon_area(v)
        diffs = v[:, None, :] - v[None, :, :]
        self.diameter = float(np.sqrt((diffs ** 2).sum(-1)).max())

    @property
    def level(self) -> int:
        return len(self.id) - 1

    @property
    def parent_id(self) -> Optional[ElementId]:
        return self.id[:-1] if len(self.id) > 1 else None

    @property
    def reference_measure(self) -> float:
        return 1.0 if self.cell_type == "quad" else 0.5

    def global_points(self, ref: np.ndarray) -> np.ndarray:
        return np.asarray(ref).reshape(-1, 2) @ self.jacobian.T + self.origin

    def local_points(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x).reshape(-1, 2) - self.origin) @ self.inverse_jacobian.T

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        xi = self.local_points(x)
        inside = (xi >= -tol).all(axis=1)
        if self.cell_type == "quad":
            return inside & (xi <= 1.0 + tol).all(axis=1)
        return inside & (xi.sum(axis=1) <= 1.0 + tol)

    def child_vertices(self) -> list[np.ndarray]:
        v = self.vertices
        if self.cell_type == "quad":
            return [self.global_points(np.array(off) + 0.5 * _QUAD_CORNERS) for off in _QUAD_CHILD_OFFSETS]
        a, b, c = v
        mab, mbc, mca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        return [np.array([a, mab, mca]), np.array([mab, b, mbc]),
                np.array([mca, mbc, c]), np.array([mbc, mca, mab])]

    def edges(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        v = self.vertices
        for i in range(len(v)):
            yield v[i], v[(i + 1) % len(v)]

    def __repr__(self) -> str:
        return f"Element({self.id}, {self.cell_type})"


@dataclass(frozen=True, eq=False)
class Intersection:
    """Piece of an element boundary shared with one neighbor or the boundary.

    ``a``/``b`` follow the inside element's counterclockwise orientation;
    ``normal`` is the unit outer normal of ``inside``.
    """

    inside: ElementId
    outside: Optional[ElementId]
    a: np.ndarray
    b: np.ndarray
    normal: np.ndarray
    length: float

    @property
    def boundary(self) -> bool:
        return self.outside is None

    def points(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t).reshape(-1, 1)
        return self.a + t * (self.b - self.a)


@dataclass
class AdaptationReport:
    """Result of :meth:`HierarchicalMesh.adapt`.

    ``refined`` maps each refined father to its new children; ``coarsened``
    maps each re-exposed father to its removed children (kept as element
    objects so their geometry stays available for data transfer).
    """

    refined: dict = field(default_factory=dict)
    coarsened: dict = field(default_factory=dict)

    @property
    def changed(self) -> bool:
        return bool(self.refined or self.coarsened)

    def father_of(self) -> dict:
        return {c: f for f, cs in self.refined.items() for c in cs}


# ---------------------------------------------------------------------------
# hierarchical mesh


class HierarchicalMesh:
    """Refinement forest over a macro grid; leaves form the current grid."""

    def __init__(self, macro: MacroGrid):
        macro.validate()
        self.macro = macro
        self.cell_type = macro.cell_type
        self._nodes: dict[ElementId, Element] = {}
        self._children: dict[ElementId, tuple] = {}
        for i in range(len(macro.cells)):
            eid = (i,)
            self._nodes[eid] = Element(eid, macro.cell_vertices(i), macro.cell_type)
        self._leaves: Optional[list[ElementId]] = None
        self._intersections: Optional[dict] = None
        self.generation = 0

    # -- queries
    def __len__(self) -> int:
        return len(self.leaf_ids())

    def element(self, eid: ElementId) -> Element:
        return self._nodes[eid]

    def __contains__(self, eid) -> bool:
        return eid in self._nodes

    def is_leaf(self, eid: ElementId) -> bool:
        return eid in self._nodes and eid not in self._children

    def children(self, eid: ElementId) -> tuple:
        return self._children.get(eid, ())

    def leaf_ids(self) -> list[ElementId]:
        if self._leaves is None:
            self._leaves = sorted(e for e in self._nodes if e not in self._children)
        return self._leaves

    def leaves(self) -> list[Element]:
        return [self._nodes[e] for e in self.leaf_ids()]

    leaf_iter = leaves

    def siblings(self, eid: ElementId) -> tuple:
        if len(eid) == 1:
            return ()
        return self._children[eid[:-1]]

    def can_coarsen(self, eid: ElementId) -> bool:
        """True if ``eid`` has a father whose children are all leaves."""
        sib = self.siblings(eid)
        return bool(sib) and all(s not in self._children for s in sib)

    @property
    def area(self) -> float:
        return sum(e.area for e in self.leaves())

    # -- mutation
    def refine(self, eid: ElementId) -> AdaptationReport:
        return self.adapt({eid: REFINE})

    def adapt(self, marks: Mapping[ElementId, str]) -> AdaptationReport:
        """Apply refine/coarsen marks to leaves.

        Coarsening is honored only when every sibling is a leaf marked for
        coarsening; otherwise those marks are demoted to keep.
        """
        for eid, m in marks.items():
            if m not in _MARK_VALUES:
                raise ValueError(f"invalid mark {m!r} for {eid}")
            if not self.is_leaf(eid):
                raise ValueError(f"cannot mark non-leaf element {eid}")
        report = AdaptationReport()
        fathers = sorted({eid[:-1] for eid, m in marks.items() if m == COARSEN and len(eid) > 1})
        for f in fathers:
            kids = self._children[f]
            if all(marks.get(c) == COARSEN and c not in self._children for c in kids):
                report.coarsened[f] = [self._nodes.pop(c) for c in kids]
                del self._children[f]
        for eid in sorted(e for e, m in marks.items() if m == REFINE):
            el = self._nodes[eid]
            kids = tuple(eid + (c,) for c in range(4))
            for cid, verts in zip(kids, el.child_vertices()):
                self._nodes[cid] = Element(cid, verts, self.cell_type)
            self._children[eid] = kids
            report.refined[eid] = kids
        if report.changed:
            self._leaves = None
            self._intersections = None
            self.generation += 1
        return report

    # -- intersections
    def intersections(self, element) -> list[Intersection]:
        eid = element.id if isinstance(element, Element) else element
        if self._intersections is None:
            self._intersections = self._build_intersections()
        return self._intersections[eid]

    def all_intersections(self) -> dict:
        if self._intersections is None:
            self._intersections = self._build_intersections()
        return self._intersections

    def _build_intersections(self) -> dict:
        leaves = self.leaves()
        scale = max(float(np.ptp(self.macro.vertices, axis=0).max()), 1e-300)
        groups: dict = {}
        for el in leaves:
            for ei, (p, q) in enumerate(el.edges()):
                u = _canonical_direction(q - p)
                n0 = np.array([-u[1], u[0]])
                key = (round(u[0], 9), round(u[1], 9), round(float(n0 @ p) / scale, 9))
                tp, tq = float(u @ p), float(u @ q)
                groups.setdefault(key, []).append((min(tp, tq), max(tp, tq), el, ei, p, q, tp, tq))
        result: dict = {el.id: {} for el in leaves}
        tol = 1e-12 * scale
        for edges in groups.values():
            edges.sort(key=lambda r: (r[0], r[2].id))
            cuts = sorted({r[0] for r in edges} | {r[1] for r in edges})
            cuts = [c for i, c in enumerate(cuts) if i == 0 or c - cuts[i - 1] > tol]
            starts = [r[0] for r in edges]
            for s0, s1 in zip(cuts[:-1], cuts[1:]):
                mid = 0.5 * (s0 + s1)
                hi = bisect.bisect_right(starts, mid)
                cover = [r for r in edges[:hi] if r[1] > mid]
                if len(cover) > 2:
                    raise RuntimeError("overlapping elements detected while building intersections")
                for r in cover:
                    other = [o for o in cover if o is not r]
                    out = other[0][2].id if other else None
                    pieces = result[r[2].id].setdefault(r[3], [])
                    if pieces and pieces[-1][0] == out and abs(pieces[-1][2] - s0) <= tol:
                        pieces[-1][2] = s1
                    else:
                        pieces.append([out, s0, s1])
        out_map = {}
        for el in leaves:
            lst = []
            for ei, (p, q) in enumerate(el.edges()):
                d = q - p
                length = float(np.linalg.norm(d))
                normal = np.array([d[1], -d[0]]) / length
                u = _canonical_direction(d)
                tp, tq = float(u @ p), float(u @ q)
                pieces = result[el.id].get(ei, [])
                # pieces were collected along the canonical direction; follow the edge instead
                forward = tq > tp
                if not forward:
                    pieces = pieces[::-1]
                for outside, s0, s1 in pieces:
                    ta, tb = (s0, s1) if forward else (s1, s0)
                    a = p + (ta - tp) / (tq - tp) * d
                    b = p + (tb - tp) / (tq - tp) * d
                    lst.append(Intersection(el.id, outside, a, b, normal, float(np.linalg.norm(b - a))))
            out_map[el.id] = lst
        return out_map


def _canonical_direction(d: np.ndarray) -> np.ndarray:
    u = d / np.linalg.norm(d)
    if u[0] > 1e-12 or (abs(u[0]) <= 1e-12 and u[1] > 0):
        return u
    return -u


def iter_interior_once(mesh: HierarchicalMesh) -> Iterable[Intersection]:
    """Every interior facet once, seen from the element earlier in leaf order."""
    for eid, inters in mesh.all_intersections().items():
        for it in inters:
            if it.outside is not None and eid < it.outside:
                yield it
