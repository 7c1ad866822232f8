"""Quadrature rules on the reference segment, square and triangle.

All reference domains use the unit interval ``[0, 1]``: the segment
``[0, 1]``, the square ``[0, 1]^2`` and the triangle
``{x, y >= 0, x + y <= 1}``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 30


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points and weights on a reference domain.

    ``points`` has shape ``(n, dim)``; ``order`` is the polynomial degree
    integrated exactly. ``tag`` identifies the rule for table caching.
    """

    points: np.ndarray
    weights: np.ndarray
    order: int
    tag: tuple

    def __post_init__(self):
        # rules are cached and shared
        self.points.flags.writeable = False
        self.weights.flags.writeable = False

    def __len__(self) -> int:
        return len(self.weights)


def _check_order(order: int) -> int:
    order = int(order)
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"quadrature order must be in [0, {MAX_ORDER}], got {order}")
    return order


@functools.lru_cache(maxsize=None)
def _gauss01(npts: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


@functools.lru_cache(maxsize=None)
def gauss_segment(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on ``[0, 1]`` exact up to degree ``order``."""
    order = _check_order(order)
    x, w = _gauss01(order // 2 + 1)
    pts = x[:, None].copy()
    pts.flags.writeable = False
    return QuadratureRule(pts, w, order, ("segment", order))


@functools.lru_cache(maxsize=None)
def tensor_square(order: int) -> QuadratureRule:
    """Tensor Gauss rule on the unit square."""
    order = _check_order(order)
    x, w = _gauss01(order // 2 + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.outer(w, w).ravel()
    return QuadratureRule(pts, wts, order, ("quad", order))


@functools.lru_cache(maxsize=None)
def triangle_rule(order: int) -> QuadratureRule:
    """Collapsed (Duffy) tensor rule on the unit triangle.

    The collapse ``(u, v) -> (u, v (1 - u))`` adds one polynomial degree in
    ``u`` through the Jacobian, hence the extra point.
    """
    order = _check_order(order)
    n = math.ceil((order + 2) / 2)
    x, w = _gauss01(n)
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    wts = (WU * WV * (1.0 - U)).ravel()
    return QuadratureRule(pts, wts, order, ("triangle", order))


def element_rule(cell_type: str, order: int) -> QuadratureRule:
    if cell_type == "quad":
        return tensor_square(order)
    if cell_type == "triangle":
        return triangle_rule(order)
    raise ValueError(f"unknown cell type {cell_type!r}")


def default_order(*degrees: int) -> int:
    """Integration order ``2 max(k) + 2`` for integrands involving degrees ``k``."""
    return min(2 * max(degrees) + 2, MAX_ORDER)
