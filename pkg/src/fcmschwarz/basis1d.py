"""Hierarchic 1D shape functions: two linear hats plus integrated Legendre modes.

Mode ordering on the reference interval [-1, 1]:

* index 0: ``(1 - xi) / 2`` (left hat)
* index 1: ``(1 + xi) / 2`` (right hat)
* index j >= 2: ``(P_j - P_{j-2}) / sqrt(4j - 2)``, a polynomial of degree j
  that vanishes at both ends.

The description elsewhere in the package uses 1-based "mode j" where j >= 3
has degree j - 1; the arrays here are simply 0-based.
"""
import numpy as np


def _legendre_table(p, xi):
    """P_0..P_p and their derivatives at the points ``xi``."""
    xi = np.asarray(xi, dtype=np.float64)
    L = np.zeros((p + 1,) + xi.shape)
    dL = np.zeros_like(L)
    L[0] = 1.0
    if p >= 1:
        L[1] = xi
        dL[1] = 1.0
    for i in range(2, p + 1):
        L[i] = ((2 * i - 1) * xi * L[i - 1] - (i - 1) * L[i - 2]) / i
        dL[i] = ((2 * i - 1) * (L[i - 1] + xi * dL[i - 1]) - (i - 1) * dL[i - 2]) / i
    return L, dL


def eval_modes(p, xi):
    """Values of all p + 1 modes; shape ``(p + 1,) + shape(xi)``."""
    if p < 1:
        raise ValueError("polynomial order must be >= 1")
    xi = np.asarray(xi, dtype=np.float64)
    L, _ = _legendre_table(p, xi)
    out = np.empty((p + 1,) + xi.shape)
    out[0] = 0.5 * (1.0 - xi)
    out[1] = 0.5 * (1.0 + xi)
    for j in range(2, p + 1):
        out[j] = (L[j] - L[j - 2]) / np.sqrt(4.0 * j - 2.0)
    return out


def eval_derivatives(p, xi):
    """d/dxi of all p + 1 modes; shape ``(p + 1,) + shape(xi)``."""
    if p < 1:
        raise ValueError("polynomial order must be >= 1")
    xi = np.asarray(xi, dtype=np.float64)
    _, dL = _legendre_table(p, xi)
    out = np.empty((p + 1,) + xi.shape)
    out[0] = -0.5
    out[1] = 0.5
    for j in range(2, p + 1):
        out[j] = (dL[j] - dL[j - 2]) / np.sqrt(4.0 * j - 2.0)
    return out


def eval_both(p, xi):
    return eval_modes(p, xi), eval_derivatives(p, xi)


def gauss_legendre(n):
    """n-point Gauss rule on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def tensor_values(p, xis, derivs=True):
    """Tensor-product shape values at points given per axis in reference coords.

    ``xis`` is a ``(npts, d)`` array. Returns ``N`` with shape
    ``(npts, (p+1)**d)`` and, if requested, ``dN`` with shape
    ``(npts, (p+1)**d, d)``. Local function ``(m_0, ..., m_{d-1})`` sits at
    flat index ``np.ravel_multi_index(m, (p+1,)*d)``.
    """
    xis = np.atleast_2d(np.asarray(xis, dtype=np.float64))
    npts, d = xis.shape
    vals = [eval_modes(p, xis[:, a]).T for a in range(d)]  # (npts, p+1)
    N = vals[0]
    for a in range(1, d):
        N = (N[:, :, None] * vals[a][:, None, :]).reshape(npts, -1)
    if not derivs:
        return N
    ders = [eval_derivatives(p, xis[:, a]).T for a in range(d)]
    dN = np.empty((npts, N.shape[1], d))
    for g in range(d):
        f = ders[0] if g == 0 else vals[0]
        for a in range(1, d):
            h = ders[a] if a == g else vals[a]
            f = (f[:, :, None] * h[:, None, :]).reshape(npts, -1)
        dN[:, :, g] = f
    return N, dN
