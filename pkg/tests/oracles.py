"""Independent reference implementations used by the tests.

Nothing here imports from ``hpdg``; each oracle is a direct transcription
of the defining formula in the simplest form available (exact rationals,
explicit sets, symbolic algebra).
"""
from fractions import Fraction
from math import factorial

import sympy as sp


# -- integrals of monomials --------------------------------------------------

def square_monomial(a, b):
    """int_[0,1]^2 x^a y^b."""
    return Fraction(1, (a + 1) * (b + 1))


def triangle_monomial(a, b):
    """int over {x, y >= 0, x + y <= 1} of x^a y^b."""
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


# -- shifted Legendre polynomials ------------------------------------------------

_x = sp.Symbol("x")


def legendre_symbolic(i):
    """p_i(x) = 1/i! d^i/dx^i (x^2 - x)^i as a sympy polynomial."""
    return sp.expand(sp.diff((_x ** 2 - _x) ** i, _x, i) / sp.factorial(i))


def legendre_values(i, xs):
    # exact rational evaluation; the expanded monomial form cancels badly in floats
    p = sp.Poly(legendre_symbolic(i), _x)
    return [float(p.eval(sp.Rational(float(t)))) for t in xs]


# -- DOF transaction ------------------------------------------------------------

def reference_transaction(old, new_sizes):
    """Steps 1-3 of the restriction/prolongation definition over explicit sets.

    ``old`` maps element -> list of global indices (the current mapping),
    ``new_sizes`` maps element -> block size on the new grid, in leaf order.
    DOFs are identified with pairs ``(element, local index)``.

    Returns ``(mapping, relocations, half_size)``.
    """
    d_old = {(e, i) for e, ix in old.items() for i in range(len(ix))}
    d_new = [(e, i) for e, n in new_sizes.items() for i in range(n)]
    mu_old = {(e, i): g for e, ix in old.items() for i, g in enumerate(ix)}

    # step 1: continuation, fresh indices appended past the end
    n_old = len(d_old)
    mu_half = dict(mu_old)
    nxt = n_old
    for dof in d_new:
        if dof not in d_old:
            mu_half[dof] = nxt
            nxt += 1
    half_size = len(d_old | set(d_new))
    assert nxt == half_size

    # step 3: compaction
    n_new = len(d_new)
    kept = {mu_half[d] for d in d_new if mu_half[d] < n_new}
    holes = sorted(set(range(n_new)) - kept)
    movers = sorted(mu_half[d] for d in d_new if mu_half[d] >= n_new)
    assert len(holes) == len(movers)
    move = dict(zip(movers, holes))
    mapping = {}
    for e, n in new_sizes.items():
        mapping[e] = tuple(move.get(mu_half[(e, i)], mu_half[(e, i)]) for i in range(n))
    return mapping, list(zip(movers, holes)), half_size
