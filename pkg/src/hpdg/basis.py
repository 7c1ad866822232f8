"""Local modal basis families on the reference square and triangle.

Three families share one interface (:class:`BasisFamily`):

* :class:`OrthonormalFamily` -- total-degree monomials ``x^a y^b``,
  ``a + b <= k``, Gram-Schmidt orthonormalized in ``L^2`` of the reference
  element (square or triangle);
* :class:`LegendreTensorFamily` -- products ``p_a(x) p_b(y)`` of shifted
  Legendre polynomials with ``a, b <= k`` (squares only);
* :class:`AnisotropicLegendreFamily` -- the same products with separate
  bounds ``a <= k_x``, ``b <= k_y`` (squares only).

Every function is stored as a linear combination of shifted Legendre
products, which are evaluated by the kernels in :mod:`hpdg.kernels`.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import mpmath
import numpy as np

from . import kernels

MAX_DEGREE = 10
CELL_TYPES = ("quad", "triangle")


@dataclass(frozen=True, order=True)
class Iso:
    """Isotropic key: one polynomial degree."""

    k: int

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"negative degree {self.k}")

    @property
    def degree(self) -> int:
        return self.k

    def __str__(self) -> str:
        return str(self.k)


@dataclass(frozen=True, order=True)
class Aniso:
    """Anisotropic key: one degree per coordinate direction."""

    kx: int
    ky: int

    def __post_init__(self):
        if self.kx < 0 or self.ky < 0:
            raise ValueError(f"negative degree in {self}")

    @property
    def degree(self) -> int:
        return max(self.kx, self.ky)

    def __str__(self) -> str:
        return f"({self.kx},{self.ky})"


Key = Union[Iso, Aniso]


def key_max(keys) -> Key:
    """Largest key of a collection: max degree, componentwise for Aniso."""
    keys = list(keys)
    if not keys:
        raise ValueError("key_max of an empty collection")
    if all(isinstance(k, Iso) for k in keys):
        return Iso(max(k.k for k in keys))
    if all(isinstance(k, Aniso) for k in keys):
        return Aniso(max(k.kx for k in keys), max(k.ky for k in keys))
    raise TypeError("cannot mix Iso and Aniso keys")


def total_degree_exponents(k: int) -> list[tuple[int, int]]:
    """Exponents ``(a, b)`` with ``a + b <= k``.

    Ordered by total degree, ties broken by descending ``a``:
    ``(0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ...``
    """
    return [(d - b, b) for d in range(k + 1) for b in range(d + 1)]


def dim_total_degree(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def _legendre_coefficients(i: int) -> list[Fraction]:
    # p_i(x) = sum_j (-1)^(i+j) C(i,j) C(i+j,j) x^j
    return [Fraction((-1) ** (i + j) * math.comb(i, j) * math.comb(i + j, j))
            for j in range(i + 1)]


def _monomial_in_legendre(n: int) -> list[list[Fraction]]:
    """``T[a][i]`` with ``x^a = sum_i T[a][i] p_i(x)`` on ``[0, 1]``."""
    coeffs = [_legendre_coefficients(i) for i in range(n + 1)]
    table = []
    for a in range(n + 1):
        row = []
        for i in range(n + 1):
            if i > a:
                row.append(Fraction(0))
                continue
            inner = sum(c / (a + j + 1) for j, c in enumerate(coeffs[i]))
            row.append((2 * i + 1) * inner)
        table.append(row)
    return table


def _monomial_moment(cell_type: str, a: int, b: int) -> Fraction:
    if cell_type == "quad":
        return Fraction(1, (a + 1) * (b + 1))
    return Fraction(math.factorial(a) * math.factorial(b), math.factorial(a + b + 2))


def _orthonormal_coefficients(cell_type: str, k: int) -> np.ndarray:
    """Coefficients of the orthonormal functions in the Legendre-product basis.

    The monomial Gram matrix is assembled exactly and factorized as
    ``G = L L^T`` in 60-digit arithmetic; row ``i`` of ``L^{-1}`` holds the
    monomial coefficients of the ``i``-th orthonormal function.
    """
    exps = total_degree_exponents(k)
    n = len(exps)
    T = _monomial_in_legendre(k)
    with mpmath.workdps(60):
        G = mpmath.matrix(n, n)
        for i, (a1, b1) in enumerate(exps):
            for j, (a2, b2) in enumerate(exps):
                m = _monomial_moment(cell_type, a1 + a2, b1 + b2)
                G[i, j] = mpmath.mpf(m.numerator) / m.denominator
        L = mpmath.cholesky(G)
        C = mpmath.inverse(L)
        # monomial -> Legendre products, same exponent ordering
        pos = {e: i for i, e in enumerate(exps)}
        M = mpmath.matrix(n, n)
        for r, (a, b) in enumerate(exps):
            for i in range(a + 1):
                for j in range(b + 1):
                    t = T[a][i] * T[b][j]
                    if t:
                        M[r, pos[(i, j)]] = mpmath.mpf(t.numerator) / t.denominator
        D = C * M
        return np.array([[float(D[i, j]) for j in range(n)] for i in range(n)])


class BasisFamily:
    """Family of local basis function sets indexed by cell type and key."""

    name = "abstract"
    cell_types: tuple[str, ...] = CELL_TYPES

    def __init__(self):
        self._lock = threading.Lock()
        self._tables: dict = {}

    # -- to be provided by subclasses
    def exponents(self, cell_type: str, key: Key) -> list[tuple[int, int]]:
        raise NotImplementedError

    def coefficients(self, cell_type: str, key: Key):
        """Matrix mapping Legendre products to basis functions, or ``None``."""
        return None

    def reference_mass(self, cell_type: str, key: Key) -> np.ndarray:
        """Diagonal of the reference mass matrix."""
        raise NotImplementedError

    def check_key(self, key: Key) -> None:
        raise NotImplementedError

    # -- shared machinery
    def validate(self, cell_type: str, key: Key) -> None:
        if cell_type not in self.cell_types:
            raise ValueError(f"{self.name} basis is restricted to {self.cell_types}, "
                             f"got cell type {cell_type!r}")
        self.check_key(key)
        if key.degree > MAX_DEGREE:
            raise ValueError(f"degree {key.degree} exceeds maximum {MAX_DEGREE}")

    def blocks(self, cell_type: str, key: Key) -> int:
        self.validate(cell_type, key)
        return len(self.exponents(cell_type, key))

    def basis_function_set(self, element, key: Key) -> "BasisFunctionSet":
        self.validate(element.cell_type, key)
        return BasisFunctionSet(self, element, key)

    def tabulate(self, cell_type: str, key: Key, points: np.ndarray, nderiv: int = 0) -> np.ndarray:
        """Reference values and derivatives at ``points`` (shape ``(m, 2)``).

        Returns shape ``(ncomp, m, n)``; components as in
        :func:`hpdg.kernels.tensor_products`.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        exps = self.exponents(cell_type, key)
        kmax = max(max(a for a, _ in exps), max(b for _, b in exps))
        px = kernels.legendre_table(points[:, 0], kmax, nderiv)
        py = kernels.legendre_table(points[:, 1], kmax, nderiv)
        ax = np.fromiter((a for a, _ in exps), dtype=np.intp, count=len(exps))
        ay = np.fromiter((b for _, b in exps), dtype=np.intp, count=len(exps))
        prod = kernels.tensor_products(px, py, ax, ay, nderiv)  # (ncomp, n, m)
        coef = self.coefficients(cell_type, key)
        if coef is not None:
            prod = np.einsum("ij,cjm->cim", coef, prod)
        return np.ascontiguousarray(prod.transpose(0, 2, 1))

    def tabulate_rule(self, cell_type: str, key: Key, rule, nderiv: int = 0) -> np.ndarray:
        """Cached :meth:`tabulate` at the points of a quadrature rule."""
        tag = (cell_type, key, rule.tag, nderiv)
        tab = self._tables.get(tag)
        if tab is None:
            tab = self.tabulate(cell_type, key, rule.points, nderiv)
            tab.flags.writeable = False
            with self._lock:
                self._tables.setdefault(tag, tab)
        return tab


class OrthonormalFamily(BasisFamily):
    """``L^2``-orthonormal modal basis of the total-degree space ``P^k``."""

    name = "orthonormal"
    _coef_lock = threading.Lock()
    _coef_cache: dict[str, np.ndarray] = {}

    def check_key(self, key):
        if not isinstance(key, Iso):
            raise TypeError(f"orthonormal basis needs an Iso key, got {key!r}")

    def exponents(self, cell_type, key):
        return total_degree_exponents(key.k)

    @classmethod
    def _full_table(cls, cell_type: str) -> np.ndarray:
        table = cls._coef_cache.get(cell_type)
        if table is None:
            with cls._coef_lock:
                table = cls._coef_cache.get(cell_type)
                if table is None:
                    table = _orthonormal_coefficients(cell_type, MAX_DEGREE)
                    table.flags.writeable = False
                    cls._coef_cache[cell_type] = table
        return table

    def coefficients(self, cell_type, key):
        # Gram-Schmidt is hierarchical: the degree-k set is a leading block
        n = dim_total_degree(key.k)
        return self._full_table(cell_type)[:n, :n]

    def reference_mass(self, cell_type, key):
        return np.ones(dim_total_degree(key.k))


class LegendreTensorFamily(BasisFamily):
    """Products of shifted Legendre polynomials, ``Q^k`` on squares."""

    name = "legendre"
    cell_types = ("quad",)

    def check_key(self, key):
        if not isinstance(key, Iso):
            raise TypeError(f"Legendre tensor basis needs an Iso key, got {key!r}")

    @staticmethod
    def _bounds(key):
        return key.k, key.k

    def exponents(self, cell_type, key):
        kx, ky = self._bounds(key)
        pairs = [(a, b) for a in range(kx + 1) for b in range(ky + 1)]
        # sorted by max degree so lower keys are leading blocks
        return sorted(pairs, key=lambda ab: (max(ab), ab[0], ab[1]))

    def reference_mass(self, cell_type, key):
        return np.array([1.0 / ((2 * a + 1) * (2 * b + 1))
                         for a, b in self.exponents(cell_type, key)])


class AnisotropicLegendreFamily(LegendreTensorFamily):
    """Legendre products with direction-dependent degree bounds."""

    name = "anisotropic"

    def check_key(self, key):
        if not isinstance(key, Aniso):
            raise TypeError(f"anisotropic basis needs an Aniso key, got {key!r}")

    @staticmethod
    def _bounds(key):
        return key.kx, key.ky


FAMILIES = {
    "orthonormal": OrthonormalFamily,
    "legendre": LegendreTensorFamily,
    "anisotropic": AnisotropicLegendreFamily,
}


def make_family(name: str) -> BasisFamily:
    try:
        return FAMILIES[name]()
    except KeyError:
        raise ValueError(f"unknown basis family {name!r}") from None


class BasisFunctionSet:
    """Local basis ``B_{E,k}`` of one element: reference functions composed
    with the inverse of the element's affine reference map."""

    def __init__(self, family: BasisFamily, element, key: Key):
        self.family = family
        self.element = element
        self.key = key
        self.size = family.blocks(element.cell_type, key)

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"BasisFunctionSet({self.family.name}, {self.element.id}, key={self.key})"

    @property
    def degree(self) -> int:
        return self.key.degree

    def evaluate(self, ref_points) -> np.ndarray:
        """Values, shape ``(m, n)``."""
        return self.family.tabulate(self.element.cell_type, self.key, ref_points, 0)[0]

    def gradient(self, ref_points) -> np.ndarray:
        """Reference gradients, shape ``(m, n, 2)``."""
        tab = self.family.tabulate(self.element.cell_type, self.key, ref_points, 1)
        return np.stack([tab[1], tab[2]], axis=-1)

    def physical_gradient(self, ref_points) -> np.ndarray:
        # grad_x phi = DF^{-T} grad_ref phi
        return self.gradient(ref_points) @ self.element.inverse_jacobian

    def laplacian(self, ref_points) -> np.ndarray:
        tab = self.family.tabulate(self.element.cell_type, self.key, ref_points, 2)
        return laplacian_from_hessian(tab[3], tab[4], tab[5], self.element.inverse_jacobian)

    def mass_matrix(self) -> np.ndarray:
        mass = self.family.reference_mass(self.element.cell_type, self.key)
        return np.diag(mass * self.element.det)


def laplacian_from_hessian(hxx, hxy, hyy, inv_jac) -> np.ndarray:
    """Physical Laplacian from reference second derivatives.

    With ``B = DF^{-1}`` the physical Hessian is ``B^T H B``; its trace is
    ``sum_ab H_ab (B B^T)_ab``.
    """
    S = inv_jac @ inv_jac.T
    return S[0, 0] * hxx + 2.0 * S[0, 1] * hxy + S[1, 1] * hyy
