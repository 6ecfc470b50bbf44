"""Periodic derivative operators on the unit parameter square.

Both schemes are circulant matrices applied along the two grid axes, which
are always the last two axes of the input, so a stack ``(..., N1, N2)`` is
differentiated in one call.  For grids of a few hundred points a dense
matrix product is much cheaper than a batch of small FFTs, and the spectral
matrices are built from the FFT symbols so both give the same trigonometric
interpolant derivative.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

SCHEMES = ("spectral", "central4")


def _spectral_matrices(n):
    k = 2 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    k_odd = k.copy()
    if n % 2 == 0:
        # odd derivatives drop the Nyquist mode, it has no real derivative
        k_odd[n // 2] = 0.0
    # first column is the response to a unit impulse; the matrix is its circulant
    c1 = np.fft.ifft(1j * k_odd).real
    c2 = np.fft.ifft(-(k**2)).real
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return c1[idx], c2[idx]


def _central4_matrices(n):
    h = 1.0 / n
    d1 = np.zeros((n, n))
    d2 = np.zeros((n, n))
    for offset, c1, c2 in ((-2, 1.0, -1.0), (-1, -8.0, 16.0), (0, 0.0, -30.0),
                           (1, 8.0, 16.0), (2, -1.0, -1.0)):
        idx = np.arange(n)
        d1[idx, (idx + offset) % n] += c1 / (12.0 * h)
        d2[idx, (idx + offset) % n] += c2 / (12.0 * h * h)
    return d1, d2


class Differentiator:
    """First and second periodic derivatives on an ``N1 x N2`` grid of the unit square.

    Parameters
    ----------
    shape : tuple of int
    scheme : {"spectral", "central4"}
        ``spectral`` is exact on trigonometric polynomials below the Nyquist
        mode; ``central4`` uses the five-point fourth-order stencils, with the
        mixed derivative taken as the product of the two first-derivative
        stencils.
    """

    def __init__(self, shape, scheme="spectral"):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown derivative scheme {scheme!r}; expected one of {SCHEMES}")
        self.shape = tuple(int(n) for n in shape)
        self.scheme = scheme
        build = _spectral_matrices if scheme == "spectral" else _central4_matrices
        d1_x1, d2_x1 = build(self.shape[0])
        self._d1_x1 = np.ascontiguousarray(d1_x1)
        self._d2_x1 = np.ascontiguousarray(d2_x1)
        d1_x2, d2_x2 = build(self.shape[1])
        # right-multiplication acts along the second grid axis
        self._d1_x2_t = np.ascontiguousarray(d1_x2.T)
        self._d2_x2_t = np.ascontiguousarray(d2_x2.T)

    def d1(self, u):
        return np.matmul(self._d1_x1, u)

    def d2(self, u):
        return np.matmul(u, self._d1_x2_t)

    def gradient(self, u):
        """``(D1 u, D2 u)`` stacked on a new leading axis."""
        u = np.asarray(u, dtype=float)
        grad = np.empty((2,) + u.shape)
        # products go straight into the output slices; stacking copies cost more than the products
        np.matmul(self._d1_x1, u, out=grad[0])
        np.matmul(u, self._d1_x2_t, out=grad[1])
        return grad

    def gradient_and_hessian(self, u):
        """``(grad, hess)`` with shapes ``(2, ...)`` and ``(2, 2, ...)``; ``hess`` is symmetric."""
        u = np.asarray(u, dtype=float)
        grad = self.gradient(u)
        hess = np.empty((2, 2) + u.shape)
        np.matmul(self._d2_x1, u, out=hess[0, 0])
        np.matmul(self._d1_x1, grad[1], out=hess[0, 1])
        hess[1, 0] = hess[0, 1]
        np.matmul(u, self._d2_x2_t, out=hess[1, 1])
        return grad, hess


@lru_cache(maxsize=32)
def differentiator(shape, scheme="spectral"):
    """Shared operator instance for a grid shape and scheme name."""
    return Differentiator(tuple(int(n) for n in shape), scheme)
