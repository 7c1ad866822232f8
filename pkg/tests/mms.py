"""Manufactured smooth solution u = sin(pi x) sin(pi y) on the unit square."""
import numpy as np

from hpdg.basis import Iso, make_family
from hpdg.benchmark import eoc
from hpdg.mesh import HierarchicalMesh, rectangle_macro
from hpdg.sipg import ProblemData, error_norms, solve
from hpdg.space import DiscreteFunctionSpace


def exact(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def exact_gradient(x):
    s, c = np.sin(np.pi * x), np.cos(np.pi * x)
    return np.pi * np.column_stack([c[:, 0] * s[:, 1], s[:, 0] * c[:, 1]])


def source(x):
    return 2 * np.pi ** 2 * exact(x)


DATA = ProblemData(f=source, g=lambda x: np.zeros(len(x)), exact=exact,
                   exact_gradient=exact_gradient, gamma=10.0)


def errors(cell_type, k, n):
    space = DiscreteFunctionSpace(HierarchicalMesh(rectangle_macro(n, n, cell_type)),
                                  make_family("orthonormal"), Iso(k))
    u, _ = solve(space, DATA, tol=1e-10)
    l2, dg = error_norms(u, DATA, levels=0)
    return space.size, l2, dg


def rates(cell_type, k, meshes):
    """(L2 EOC, DG EOC) over the last mesh pair."""
    (n0, l0, d0), (n1, l1, d1) = [errors(cell_type, k, n) for n in meshes[-2:]]
    return eoc(l0, l1, n0, n1), eoc(d0, d1, n0, n1)
