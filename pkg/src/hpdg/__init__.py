"""hp-adaptive discontinuous Galerkin kernel for the 2D Poisson problem.

The package is organised bottom-up: ``quadrature`` and ``basis`` provide
reference-element rules and polynomial families, ``mesh`` the hierarchical
grid, ``dof`` the block DOF mapper with its adaptation transaction,
``space`` discrete function spaces and data projection, ``sipg`` the
interior penalty discretisation and solver, ``adapt`` the estimator and
hp marking, and ``benchmark``/``cli`` the reentrant corner driver.
"""
from .basis import Aniso, Iso, make_family
from .benchmark import BenchmarkConfig, run_benchmark
from .dof import DofMapper, begin_adapt
from .kernels import BACKEND
from .mesh import HierarchicalMesh, MacroGrid, l_shape_macro, load_macro_grid, rectangle_macro
from .space import DiscreteFunction, DiscreteFunctionSpace, interpolate

__version__ = "0.1.0"

__all__ = [
    "Aniso", "BACKEND", "BenchmarkConfig", "DiscreteFunction", "DiscreteFunctionSpace",
    "DofMapper", "HierarchicalMesh", "Iso", "MacroGrid", "begin_adapt", "interpolate",
    "l_shape_macro", "load_macro_grid", "make_family", "rectangle_macro", "run_benchmark",
]
