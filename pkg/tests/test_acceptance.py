"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the report. The
benchmark runs are shared through module fixtures.
"""
import time

import numpy as np
import pytest

from hpdg.adapt import estimate
from hpdg.basis import Aniso, Iso, make_family
from hpdg.benchmark import BenchmarkConfig, run_benchmark
from hpdg.kernels import legendre_table
from hpdg.mesh import REFINE, HierarchicalMesh, rectangle_macro
from hpdg.quadrature import element_rule, gauss_segment
from hpdg.sipg import ProblemData
from hpdg.space import DefaultDataProjection, DiscreteFunction, DiscreteFunctionSpace, interpolate

from dof_sequences import run_sequence
from mms import rates
from oracles import legendre_values


def report(label, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, f"{label}: {detail}"


# -- 1 ---------------------------------------------------------------------------

def test_criterion_1_gram_identity():
    t0 = time.perf_counter()
    fam = make_family("orthonormal")
    worst = 0.0
    for cell_type in ("quad", "triangle"):
        for k in range(9):
            rule = element_rule(cell_type, 2 * k + 2)
            phi = fam.tabulate(cell_type, Iso(k), rule.points)[0]
            g = phi.T @ (rule.weights[:, None] * phi)
            worst = max(worst, np.max(np.abs(g - np.eye(len(g)))))
    dt = time.perf_counter() - t0
    report("1 Gram matrix = I (quad, triangle, k=0..8)", worst <= 1e-11 and dt < 5.0,
           f"max |G - I| = {worst:.2e} (tol 1e-11), {dt:.2f} s (limit 5 s)")


# -- 2 ---------------------------------------------------------------------------

def test_criterion_2_legendre():
    rule = gauss_segment(14)
    x = rule.points[:, 0]
    p = legendre_table(x, 6, 0)[0]
    m = (p * rule.weights) @ p.T
    ref = np.diag([1.0 / (2 * i + 1) for i in range(7)])
    orth = np.max(np.abs(m - ref))
    xs = np.linspace(0.0, 1.0, 10)
    vals = legendre_table(xs, 2, 0)[0][2]
    p2 = max(np.max(np.abs(vals - (6 * xs ** 2 - 6 * xs + 1))),
             np.max(np.abs(vals - np.array(legendre_values(2, xs)))))
    report("2 Legendre orthogonality and p_2", orth <= 1e-12 and p2 <= 1e-13,
           f"max |int p_i p_j - d_ij/(2i+1)| = {orth:.2e} (tol 1e-12), "
           f"max |p_2 error| = {p2:.2e} (tol 1e-13)")


# -- 3 ---------------------------------------------------------------------------

def test_criterion_3_dof_mapper_oracle():
    t0 = time.perf_counter()
    failures = []
    transactions = 0
    for seed in range(1000):
        try:
            transactions += run_sequence(seed)
        except AssertionError as exc:
            failures.append((seed, str(exc)[:200]))
    dt = time.perf_counter() - t0
    report("3 DOF mapper equals reference over 1000 sequences", not failures and dt < 30.0,
           f"{len(failures)} mismatching sequences, {transactions} transactions, "
           f"{dt:.1f} s (limit 30 s)" + (f", first: {failures[0]}" if failures else ""))


# -- 4 ---------------------------------------------------------------------------

EMBEDDINGS = [
    ("orthonormal", "quad", Iso(0), Iso(5)),
    ("orthonormal", "triangle", Iso(0), Iso(5)),
    ("orthonormal", "quad", Iso(3), Iso(4)),
    ("orthonormal", "triangle", Iso(3), Iso(4)),
    ("legendre", "quad", Iso(1), Iso(4)),
    ("anisotropic", "quad", Aniso(1, 3), Aniso(4, 3)),
    ("anisotropic", "quad", Aniso(2, 0), Aniso(2, 2)),
]


def test_criterion_4_lossless_p_embedding():
    rng = np.random.default_rng(7)
    pts = 0.005 + 0.99 * rng.random((100, 2))
    worst = 0.0
    for family, cell_type, key, raised in EMBEDDINGS:
        space = DiscreteFunctionSpace(HierarchicalMesh(rectangle_macro(2, 2, cell_type)),
                                      make_family(family), key)
        u = DiscreteFunction(space, "u", rng.standard_normal(space.size))
        before = u(pts)
        for e in space.leaf_ids():
            space.mark(raised, e)
        space.adapt_p([DefaultDataProjection(u)])
        worst = max(worst, np.max(np.abs(u(pts) - before)))
    report("4 lossless p-embedding, all families", worst <= 1e-11,
           f"max deviation at 100 points = {worst:.2e} (tol 1e-11), {len(EMBEDDINGS)} cases")


# -- 5 ---------------------------------------------------------------------------

def test_criterion_5_manufactured_convergence():
    t0 = time.perf_counter()
    ok = True
    parts = []
    for cell_type in ("quad", "triangle"):
        for k in (1, 2, 3):
            l2, dg = rates(cell_type, k, (16, 32))
            good = abs(l2 - (k + 1)) <= 0.3 and abs(dg - k) <= 0.3
            ok &= good
            parts.append(f"{cell_type} k={k}: L2 {l2:.2f}, DG {dg:.2f}{'' if good else ' (!)'}")
    dt = time.perf_counter() - t0
    report("5 manufactured-solution EOCs (meshes 16 -> 32)", ok and dt < 60.0,
           "; ".join(parts) + f"; {dt:.1f} s (limit 60 s)")


# -- 6 ---------------------------------------------------------------------------

def _poly(x):
    return x[:, 0] ** 2 - x[:, 1] ** 2 + 0.5 * x[:, 0] * x[:, 1] + x[:, 1] - 0.25


def test_criterion_6_estimator_exact_on_resolved_data():
    data = ProblemData(g=_poly, exact=_poly, gamma=10.0)
    worst = 0.0
    for cell_type in ("quad", "triangle"):
        mesh = HierarchicalMesh(rectangle_macro(2, 2, cell_type))
        space = DiscreteFunctionSpace(mesh, make_family("orthonormal"), Iso(3))
        # one refined element leaves hanging nodes
        space.adapt_h({space.leaf_ids()[0]: REFINE})
        u = interpolate(space, _poly)
        worst = max(worst, estimate(space, u, data).eta)
    report("6 estimator on a resolved polynomial", worst <= 1e-9,
           f"max eta = {worst:.2e} (tol 1e-9)")


# -- 7, 8: benchmark -------------------------------------------------------------

def _timed_run(grid):
    t0 = time.perf_counter()
    res = run_benchmark(BenchmarkConfig(grid=grid))
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def quad_run():
    return _timed_run("quad")


@pytest.fixture(scope="module")
def simplex_run():
    return _timed_run("simplex")


def _check_benchmark(label, run, start):
    res, dt = run
    recs = res.records
    first = (recs[0].elements, recs[0].dofs)
    dg = np.array([r.dg_error for r in recs])
    eff = np.array([r.eff_index for r in recs])
    monotone = bool(np.all(np.diff(dg) < 0))
    factor = dg[0] / dg[-1]
    spread = np.max(np.abs(eff - eff.mean()))
    ok = (first == start and len(recs) == 9 and monotone and factor >= 30
          and spread <= 0.05 and dt < 300)
    report(label, ok,
           f"start {first} (want {start}), {len(recs)} iterations (want 9), "
           f"DG monotone={monotone}, factor {factor:.1f} (>= 30), "
           f"effectivity {eff.min():.4f}..{eff.max():.4f}, max |eff - mean| = {spread:.4f} (<= 0.05), "
           f"{dt:.1f} s (limit 300 s)")


def _check_soft_target(label, run, target):
    res, _ = run
    mean = float(np.mean([r.eff_index for r in res.records]))
    report(label, abs(mean - target) <= 0.2,
           f"mean effectivity {mean:.3f}, target {target} +- 0.2")


def test_criterion_7_quad_benchmark(quad_run):
    _check_benchmark("7 quad benchmark", quad_run, (48, 480))


def test_criterion_7b_quad_effectivity_soft_target(quad_run):
    _check_soft_target("7b quad effectivity soft target", quad_run, 1.49)


def test_criterion_8_triangle_benchmark(simplex_run):
    _check_benchmark("8 triangle benchmark", simplex_run, (96, 960))


def test_criterion_8b_triangle_effectivity_soft_target(simplex_run):
    _check_soft_target("8b triangle effectivity soft target", simplex_run, 1.33)


# -- 9 ---------------------------------------------------------------------------

@pytest.mark.parametrize("grid", ["quad", "simplex"])
def test_criterion_9_eoc_growth(grid, quad_run, simplex_run):
    res, _ = quad_run if grid == "quad" else simplex_run
    eocs = [r.dg_eoc for r in res.records]
    # iterations counted from 0, the first record has no EOC
    final, third = eocs[-1], eocs[3]
    tail = eocs[-4:]
    trend = all(b >= a for a, b in zip(tail[:-1], tail[1:]))
    report(f"9 DG EOC growth ({grid})", final >= 2 * third,
           f"EOC[final] = {final:.2f} >= 2 x EOC[3] = {2 * third:.2f}; "
           f"last four {', '.join(f'{e:.2f}' for e in tail)} (non-decreasing: {trend})")


# -- 10 --------------------------------------------------------------------------

@pytest.mark.parametrize("grid", ["quad", "simplex"])
def test_criterion_10_storage_bound(grid, quad_run, simplex_run):
    res, _ = quad_run if grid == "quad" else simplex_run
    over = [(m, r.peak_index_space, r.storage_bound) for m, r in enumerate(res.records)
            if r.peak_index_space > r.storage_bound]
    worst = max(r.peak_index_space / r.storage_bound for r in res.records)
    report(f"10 storage peak <= |D^m| + |D^m+1| ({grid})", not over,
           f"{len(res.records)} iterations, worst peak/bound = {worst:.3f}"
           + (f", violations {over}" if over else ""))
