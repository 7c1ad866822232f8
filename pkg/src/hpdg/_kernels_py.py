"""Pure-Python (numpy) versions of the polynomial evaluation kernels.

Signatures and results match the compiled ``_kernels_c`` module exactly;
``hpdg.kernels`` picks one of the two at import time.
"""
import numpy as np


def legendre_table(x, n, nderiv):
    """Shifted Legendre polynomials ``p_0..p_n`` on ``[0, 1]`` and derivatives.

    Returns an array of shape ``(nderiv + 1, n + 1, len(x))`` where entry
    ``[d, j, q]`` is the ``d``-th derivative of ``p_j`` at ``x[q]``.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    t = 2.0 * x - 1.0
    out = np.zeros((nderiv + 1, n + 1, x.shape[0]))
    out[0, 0] = 1.0
    if n >= 1:
        out[0, 1] = t
        if nderiv >= 1:
            out[1, 1] = 2.0
    for j in range(1, n):
        # (j+1) P_{j+1} = (2j+1) t P_j - j P_{j-1}, derivatives by x = (t+1)/2
        out[0, j + 1] = ((2 * j + 1) * t * out[0, j] - j * out[0, j - 1]) / (j + 1)
        if nderiv >= 1:
            out[1, j + 1] = ((2 * j + 1) * (2.0 * out[0, j] + t * out[1, j])
                             - j * out[1, j - 1]) / (j + 1)
        if nderiv >= 2:
            out[2, j + 1] = ((2 * j + 1) * (4.0 * out[1, j] + t * out[2, j])
                             - j * out[2, j - 1]) / (j + 1)
    return out


def tensor_products(px, py, ax, ay, nderiv):
    """Products ``p_a(x) p_b(y)`` for exponent pairs ``(ax[i], ay[i])``.

    ``px``/``py`` come from :func:`legendre_table`. Returns shape
    ``(ncomp, len(ax), npoints)`` with components ``f`` (nderiv=0),
    ``f, f_x, f_y`` (nderiv=1) or ``f, f_x, f_y, f_xx, f_xy, f_yy`` (nderiv=2).
    """
    ax = np.asarray(ax, dtype=np.intp)
    ay = np.asarray(ay, dtype=np.intp)
    comps = [px[0, ax] * py[0, ay]]
    if nderiv >= 1:
        comps.append(px[1, ax] * py[0, ay])
        comps.append(px[0, ax] * py[1, ay])
    if nderiv >= 2:
        comps.append(px[2, ax] * py[0, ay])
        comps.append(px[1, ax] * py[1, ay])
        comps.append(px[0, ax] * py[2, ay])
    return np.stack(comps)
