import math

import numpy as np
import pytest

from hpdg.adapt import (H_COARSEN, H_REFINE, NONE, P_LOWER, P_RAISE, Q_MAX, HpMarking, estimate,
                        hp_adapt_cycle, mark_hp, regularity_from_coefficients, regularity_index,
                        transfer_degrees)
from hpdg.basis import Aniso, Iso, make_family
from hpdg.benchmark import corner_problem, exact_solution
from hpdg.mesh import COARSEN, REFINE, AdaptationReport, Element, HierarchicalMesh, l_shape_macro, rectangle_macro
from hpdg.sipg import ProblemData, solve
from hpdg.space import DiscreteFunction, DiscreteFunctionSpace, interpolate


def space_on(cell_type="quad", k=3, macro=None, n=2):
    mesh = HierarchicalMesh(macro or rectangle_macro(n, n, cell_type))
    return DiscreteFunctionSpace(mesh, make_family("orthonormal"), Iso(k))


def poly(x):
    return x[:, 0] ** 2 - x[:, 1] ** 2 + 0.5 * x[:, 0] * x[:, 1] + x[:, 1]


def poly_data(gamma=10.0):
    # harmonic, so f = 0
    return ProblemData(g=poly, exact=poly, gamma=gamma)


@pytest.mark.parametrize("cell_type", ["quad", "triangle"])
def test_estimator_vanishes_on_resolved_solution(cell_type):
    space = space_on(cell_type, 3)
    u = interpolate(space, poly)
    assert estimate(space, u, poly_data()).eta < 1e-10


def test_estimator_independent_of_gamma():
    space = space_on("triangle", 3)
    u = interpolate(space, lambda x: np.sin(3 * x[:, 0]) * x[:, 1])
    a = estimate(space, u, poly_data(10.0))
    b = estimate(space, u, poly_data(20.0))
    assert a.eta == b.eta


def test_indicator_components_add_up():
    space = space_on("quad", 3, macro=l_shape_macro("quad", n=2))
    data = corner_problem()
    u, _ = solve(space, data)
    est = estimate(space, u, data)
    for ind in est.indicators.values():
        parts = [ind.volume, ind.flux, ind.jump, ind.boundary]
        assert min(parts) >= 0
        assert ind.eta2 == pytest.approx(sum(parts))
    assert est.eta == pytest.approx(math.sqrt(sum(v ** 2 for v in est.values().values())))


def test_estimator_rejects_degree_zero():
    space = space_on("quad", 0)
    with pytest.raises(ValueError):
        estimate(space, DiscreteFunction(space), poly_data())


def test_estimator_interior_jump_term():
    # a piecewise constant with one jump: only jump and boundary terms appear
    space = DiscreteFunctionSpace(HierarchicalMesh(rectangle_macro(2, 1, "quad")),
                                  make_family("orthonormal"), Iso(1))
    u = interpolate(space, lambda x: np.where(x[:, 0] < 0.5, 0.0, 1.0), order=0)
    est = estimate(space, u, ProblemData())
    left, right = space.leaf_ids()
    h = space.element(left).diameter
    assert est[left].volume == 0 and est[left].flux == pytest.approx(0, abs=1e-24)
    # |[u]| = 1 along a facet of length 1, weight k^3 / h
    assert est[left].jump == pytest.approx(1.0 / h, rel=1e-12)
    assert est[left].boundary == pytest.approx(0, abs=1e-24)


def test_regularity_formula():
    k = 3
    c = np.zeros(10)
    c[3:6] = [1.0, 0.0, 0.0]
    c[6:10] = [1.0, 0.0, 0.0, 0.0]
    assert regularity_from_coefficients(c, k) == 1.0
    # decay rate s = 5.5 means q = s - 1/2 = 5
    c[6] = 1 / 1.5 ** 5.5
    assert regularity_from_coefficients(c, k) == pytest.approx(5.0)
    c[6:] = 0.0
    assert regularity_from_coefficients(c, k) == Q_MAX
    c[3:6] = 0.0
    c[6] = 1.0
    assert regularity_from_coefficients(c, k) == 1.0


def test_regularity_requires_degree_three():
    space = space_on("quad", 2)
    with pytest.raises(ValueError):
        regularity_index(DiscreteFunction(space), space.leaf_ids()[0])


def test_regularity_of_resolved_polynomial():
    space = space_on("triangle", 3)
    u = interpolate(space, poly)
    assert all(regularity_index(u, e) == Q_MAX for e in space.leaf_ids())


@pytest.mark.parametrize("cell_type", ["quad", "triangle"])
def test_regularity_discriminates_smooth_and_singular(cell_type):
    space = space_on(cell_type, 3, macro=l_shape_macro(cell_type))
    smooth = interpolate(space, lambda x: np.exp(x[:, 0] + x[:, 1]))
    q = [regularity_index(smooth, e) for e in space.leaf_ids()]
    assert np.mean(np.array(q) > 4) >= 0.9
    corner = interpolate(space, exact_solution, order=20)
    touching = [e for e in space.leaf_ids()
                if np.min(np.linalg.norm(space.element(e).vertices, axis=1)) < 1e-12]
    assert touching
    assert all(regularity_index(corner, e) <= 4 for e in touching)


def _with_decay(space, ratio):
    """Local coefficients with b_2 / b_3 = ratio on every element (k = 3).

    The decay rate is ``s = log(ratio) / log(3/2)`` and ``q = s - 1/2``.
    """
    u = DiscreteFunction(space)
    for e in space.leaf_ids():
        c = np.zeros(10)
        c[0], c[3], c[6] = 1.0, 1.0, 1.0 / ratio
        u.dofs[space.indices(e)] = c
    return u


def test_marking_decisions():
    space = space_on("quad", 3)
    u = _with_decay(space, 1.5 ** 5.5)  # q = 5 = k + 2
    est = estimate(space, u, poly_data())
    m = mark_hp(space, est, u, 1.0, eta_lower=0.0, eta_upper=-1.0, apply=False)
    assert set(m.decisions.values()) == {P_RAISE}
    assert all(k == Iso(4) for k in m.keys.values()) and not m.marks
    u = _with_decay(space, 1.5 ** 3.5)  # q = 3 = k
    m = mark_hp(space, estimate(space, u, poly_data()), u, 1.0, eta_lower=0.0, eta_upper=-1.0)
    assert set(m.decisions.values()) == {H_REFINE}
    assert set(m.marks.values()) == {REFINE} and not m.keys and not space.pending


def test_marking_idle_band_and_clamps():
    space = space_on("quad", 3)
    u = interpolate(space, lambda x: np.sin(5 * x[:, 0]))
    est = estimate(space, u, poly_data())
    m = mark_hp(space, est, u, 1.0, eta_lower=0.0, eta_upper=1e9)
    assert m.empty and set(m.decisions.values()) == {NONE}
    # below the lower threshold on macro elements: degree cannot drop below k_min
    m = mark_hp(space, est, u, 1.0, k_min=3, eta_lower=1e9, eta_upper=2e9)
    assert set(m.decisions.values()) == {NONE}
    m = mark_hp(space, est, u, 1.0, k_min=2, eta_lower=1e9, eta_upper=2e9)
    assert set(m.decisions.values()) == {P_LOWER}
    with pytest.raises(ValueError):
        mark_hp(space, est, u, 0.0)


def test_marking_below_regularity_degree():
    # degree 2 has no decay estimate: enrich towards 3, h-refine once k_max blocks it
    space = space_on("quad", 2)
    u = interpolate(space, lambda x: np.sin(5 * x[:, 0]))
    est = estimate(space, u, poly_data())
    m = mark_hp(space, est, u, 1.0, k_min=2, k_max=8, eta_lower=0.0, eta_upper=-1.0, apply=False)
    assert set(m.decisions.values()) == {P_RAISE} and not m.q
    assert all(k == Iso(3) for k in m.keys.values())
    m = mark_hp(space, est, u, 1.0, k_min=1, k_max=2, eta_lower=0.0, eta_upper=-1.0, apply=False)
    assert set(m.decisions.values()) == {H_REFINE} and not m.keys


def test_marking_prefers_h_coarsening():
    space = space_on("quad", 3, n=1)
    space.adapt_h({space.leaf_ids()[0]: REFINE})
    u = interpolate(space, poly)
    m = mark_hp(space, estimate(space, u, poly_data()), u, 1.0, eta_lower=1.0, eta_upper=2.0)
    assert set(m.decisions.values()) == {H_COARSEN}
    assert set(m.marks.values()) == {COARSEN}


def test_default_thresholds():
    space = space_on("triangle", 3)
    u = interpolate(space, poly)
    m = mark_hp(space, estimate(space, u, poly_data()), u, 0.8, apply=False)
    assert m.eta_lower == pytest.approx(0.8 / 8) and m.eta_upper == pytest.approx(0.8 / math.sqrt(8))


def _report(refined=None, coarsened=None):
    r = AdaptationReport()
    r.refined.update(refined or {})
    tri = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
    for f, ids in (coarsened or {}).items():
        r.coarsened[f] = [Element(c, tri, "triangle") for c in ids]
    return r


def test_transfer_degrees():
    kids = tuple((0, i) for i in range(4))
    assert transfer_degrees(_report(refined={(0,): kids}), {(0,): Iso(4)}) == {c: Iso(4) for c in kids}
    degrees = dict(zip(kids, [Iso(3), Iso(4), Iso(4), Iso(5)]))
    assert transfer_degrees(_report(coarsened={(0,): kids}), degrees) == {(0,): Iso(5)}
    aniso = {kids[0]: Aniso(2, 3), kids[1]: Aniso(3, 2)}
    assert transfer_degrees(_report(coarsened={(0,): kids[:2]}), aniso) == {(0,): Aniso(3, 3)}
    with pytest.raises(KeyError):
        transfer_degrees(_report(refined={(1,): kids}), {})


def test_cycle_without_marks():
    space = space_on("quad", 3)
    u = interpolate(space, poly)
    before = u.dofs.copy()
    res = hp_adapt_cycle(space, u, HpMarking())
    assert not res.changed and np.array_equal(u.dofs, before)


def test_cycle_p_raise_preserves_function():
    space = space_on("triangle", 3)
    u = interpolate(space, lambda x: np.cos(2 * x[:, 0] + x[:, 1]))
    pts = 0.01 + 0.98 * np.random.default_rng(0).random((100, 2))
    before = u(pts)
    for e in space.leaf_ids():
        space.mark(Iso(4), e)
    res = hp_adapt_cycle(space, u, HpMarking(keys={e: Iso(4) for e in space.leaf_ids()}))
    assert res.p_changed and not res.h_report.changed
    assert np.max(np.abs(u(pts) - before)) < 1e-11


def test_cycle_single_h_refine():
    space = space_on("quad", 3)
    u = interpolate(space, poly)
    n0 = space.size
    e = space.leaf_ids()[1]
    res = hp_adapt_cycle(space, u, HpMarking(marks={e: REFINE}))
    assert res.changed and space.size == n0 + 30
    assert res.storage_ok
    assert all(space.key(c) == Iso(3) for c in space.mesh.children(e))
