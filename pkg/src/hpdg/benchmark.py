"""Reentrant-corner benchmark: hp-adaptive SIPG loop, convergence table, VTK/CSV output."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .adapt import estimate, hp_adapt_cycle, mark_hp
from .basis import Iso, make_family
from .mesh import HierarchicalMesh, MacroGrid, l_shape_macro, load_macro_grid
from .quadrature import default_order, element_rule
from .sipg import ProblemData, SolverBreakdown, error_norms, solve
from .space import DiscreteFunction, DiscreteFunctionSpace, interpolate

log = logging.getLogger(__name__)

CSV_HEADER = ("elements", "dofs", "l2_error", "l2_eoc", "dg_error", "dg_eoc", "eta", "eff_index")
NO_EOC = "—"
TWO_THIRDS = 2.0 / 3.0


# ---------------------------------------------------------------------------
# exact solution


def _angle(x: np.ndarray) -> np.ndarray:
    phi = np.arctan2(x[:, 1], x[:, 0])
    return np.where(phi < 0.0, phi + 2.0 * np.pi, phi)


def exact_solution(x) -> np.ndarray:
    """``r^(2/3) sin(2 phi / 3)`` with ``phi`` in ``[0, 2 pi)`` from the positive x-axis."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = np.hypot(x[:, 0], x[:, 1])
    return r ** TWO_THIRDS * np.sin(TWO_THIRDS * _angle(x))


def exact_gradient(x) -> np.ndarray:
    """``(2/3) r^(-1/3) (-sin(phi/3), cos(phi/3))``; singular at the origin."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = np.hypot(x[:, 0], x[:, 1])
    if np.any(r == 0.0):
        raise ValueError("gradient of the corner solution is singular at the origin")
    phi = _angle(x)
    s = TWO_THIRDS * r ** (-1.0 / 3.0)
    return np.column_stack([-s * np.sin(phi / 3.0), s * np.cos(phi / 3.0)])


def corner_problem(gamma: float = 10.0) -> ProblemData:
    return ProblemData(
        f=lambda x: np.zeros(len(x)),
        g=exact_solution,
        exact=exact_solution,
        exact_gradient=exact_gradient,
        gamma=gamma,
        singular_points=((0.0, 0.0),),
    )


# ---------------------------------------------------------------------------
# records


@dataclass
class IterationRecord:
    elements: int
    dofs: int
    l2_error: float
    dg_error: float
    eta: float
    l2_eoc: Optional[float] = None
    dg_eoc: Optional[float] = None
    # diagnostics outside the table
    solver_iterations: int = 0
    peak_index_space: int = 0
    storage_bound: int = 0
    marked_h: int = 0
    marked_p: int = 0
    seconds: float = 0.0

    @property
    def eff_index(self) -> float:
        return self.eta / self.dg_error if self.dg_error > 0 else math.inf

    def row(self) -> list[str]:
        """Table row as strings; shared by the CSV writer and the printed table."""
        def eoc(v):
            return NO_EOC if v is None else f"{v:.2f}"
        return [str(self.elements), str(self.dofs), f"{self.l2_error:.6e}", eoc(self.l2_eoc),
                f"{self.dg_error:.6e}", eoc(self.dg_eoc), f"{self.eta:.6e}", f"{self.eff_index:.4f}"]


def eoc(e_old: float, e_new: float, n_old: int, n_new: int, dim: int = 2) -> float:
    """``-log(e_old / e_new) / log((N_old / N_new)^(1/d))``."""
    if n_old == n_new:
        raise ZeroDivisionError("EOC undefined for equal DOF counts")
    return -math.log(e_old / e_new) / math.log((n_old / n_new) ** (1.0 / dim))


def compute_eoc(records: Sequence[IterationRecord], dim: int = 2) -> list[IterationRecord]:
    """Fill ``l2_eoc``/``dg_eoc`` from consecutive records (first stays undefined)."""
    if len(records) < 2:
        raise ValueError("EOC needs at least two records")
    records = list(records)
    records[0].l2_eoc = records[0].dg_eoc = None
    for prev, cur in zip(records[:-1], records[1:]):
        cur.l2_eoc = eoc(prev.l2_error, cur.l2_error, prev.dofs, cur.dofs, dim)
        cur.dg_eoc = eoc(prev.dg_error, cur.dg_error, prev.dofs, cur.dofs, dim)
    return records


def format_table(records: Sequence[IterationRecord]) -> str:
    rows = [list(CSV_HEADER)] + [r.row() for r in records]
    widths = [max(len(r[i]) for r in rows) for i in range(len(CSV_HEADER))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def table_csv(records: Sequence[IterationRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# VTK


def cell_means(u: DiscreteFunction) -> np.ndarray:
    space = u.space
    out = []
    for el in space.mesh.leaves():
        rule = element_rule(el.cell_type, default_order(space.degree(el.id)))
        v = space.family.tabulate_rule(el.cell_type, space.key(el.id), rule)[0] @ u.local_dofs(el.id)
        out.append(float(rule.weights @ v) / el.reference_measure)
    return np.array(out)


def write_vtk(path, space: DiscreteFunctionSpace, cell_data: dict, title: str = "hp mesh") -> None:
    """Legacy ASCII unstructured grid of the leaf mesh with cell arrays."""
    leaves = space.mesh.leaves()
    points = {}
    conn = []
    for el in leaves:
        ids = []
        for v in el.vertices:
            key = (float(v[0]), float(v[1]))
            ids.append(points.setdefault(key, len(points)))
        conn.append(ids)
    vtk_type = 9 if space.mesh.cell_type == "quad" else 5
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(points)} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in points]
    size = sum(len(c) + 1 for c in conn)
    lines.append(f"CELLS {len(conn)} {size}")
    lines += [" ".join(str(i) for i in [len(c)] + c) for c in conn]
    lines.append(f"CELL_TYPES {len(conn)}")
    lines += [str(vtk_type)] * len(conn)
    lines.append(f"CELL_DATA {len(conn)}")
    for name, values in cell_data.items():
        values = np.asarray(values)
        kind = "int" if np.issubdtype(values.dtype, np.integer) else "double"
        lines += [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"]
        lines += [str(int(v)) if kind == "int" else repr(float(v)) for v in values]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# driver


@dataclass
class BenchmarkConfig:
    grid: str = "quad"
    tol: float = 1e-3
    gamma: float = 10.0
    k_min: int = 3
    k_max: int = 8
    max_iterations: int = 9
    solver_tol: float = 1e-10
    out: Optional[Path] = None
    macro: Optional[Path] = None
    eta_lower: Optional[float] = None
    eta_upper: Optional[float] = None
    initial_degree: Optional[int] = None

    def __post_init__(self):
        if self.grid not in ("quad", "simplex"):
            raise ValueError(f"grid must be quad or simplex, got {self.grid!r}")
        if not self.tol > 0:
            raise ValueError("TOL must be positive")
        if self.k_min < 1 or self.k_min > self.k_max:
            raise ValueError("need 1 <= k_min <= k_max")
        if self.max_iterations < 1:
            raise ValueError("need at least one iteration")


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    records: list = field(default_factory=list)
    space: Optional[DiscreteFunctionSpace] = None
    solution: Optional[DiscreteFunction] = None

    @property
    def storage_ok(self) -> bool:
        return all(r.peak_index_space <= r.storage_bound for r in self.records)


def macro_grid(config: BenchmarkConfig) -> MacroGrid:
    if config.macro is not None:
        grid = load_macro_grid(Path(config.macro).read_text())
        want = "quad" if config.grid == "quad" else "triangle"
        if grid.cell_type != want:
            raise ValueError(f"macro grid has cell type {grid.cell_type}, expected {want}")
        return grid
    return l_shape_macro("quad" if config.grid == "quad" else "triangle")


def run_benchmark(config: BenchmarkConfig) -> BenchmarkResult:
    """Solve, estimate, mark and adapt until ``eta <= TOL`` or the iteration cap."""
    mesh = HierarchicalMesh(macro_grid(config))
    space = DiscreteFunctionSpace(mesh, make_family("orthonormal"),
                                  Iso(config.initial_degree or config.k_min))
    data = corner_problem(config.gamma)
    u = DiscreteFunction(space, "u_h")
    result = BenchmarkResult(config, space=space, solution=u)
    out = Path(config.out) if config.out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    peak, bound = space.size, space.size
    for m in range(config.max_iterations):
        t0 = time.perf_counter()
        try:
            _, its = solve(space, data, u, tol=config.solver_tol)
        except SolverBreakdown as exc:
            raise SolverBreakdown(f"iteration {m} ({len(mesh)} elements, {space.size} DOFs): {exc}") from exc
        est = estimate(space, u, data)
        l2, dg = error_norms(u, data)
        rec = IterationRecord(len(mesh), space.size, l2, dg, est.eta, solver_iterations=its,
                              peak_index_space=peak, storage_bound=bound)
        result.records.append(rec)
        if out is not None:
            eta_e = est.values()
            write_vtk(out / f"mesh_{m}.vtk", space, {
                "degree": np.array([space.degree(e) for e in space.leaf_ids()], dtype=np.int64),
                "eta": np.array([eta_e[e] for e in space.leaf_ids()]),
                "u_mean": cell_means(u),
            }, title=f"hp mesh iteration {m}")
        stop = est.eta <= config.tol or m == config.max_iterations - 1
        if not stop:
            marking = mark_hp(space, est, u, config.tol, config.k_min, config.k_max,
                              config.eta_lower, config.eta_upper)
            rec.marked_h = marking.count("h_refine")
            rec.marked_p = marking.count("p_raise")
            cycle = hp_adapt_cycle(space, u, marking)
            if cycle.transactions:
                worst = max(cycle.transactions, key=lambda t: t.peak_size - t.storage_bound)
                peak, bound = worst.peak_size, worst.storage_bound
            stop = not cycle.changed
        rec.seconds = time.perf_counter() - t0
        log.info("iteration %d: %d elements, %d dofs, eta=%.3e, dg=%.3e (%.1fs)",
                 m, rec.elements, rec.dofs, rec.eta, rec.dg_error, rec.seconds)
        if stop:
            break
    if len(result.records) >= 2:
        compute_eoc(result.records)
    if out is not None:
        (out / "table.csv").write_text(table_csv(result.records))
    return result
