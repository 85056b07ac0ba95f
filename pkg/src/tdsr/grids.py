"""Spatial discretizations: periodic Fourier grids in 1D/2D and Chebyshev-Lobatto grids.

Transform convention is the plain FFT pair (unnormalized forward, 1/N
inverse); quadrature carries the cell-volume factor. Wavenumbers are
2*pi*m/L in standard DFT ordering.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = ["PeriodicGrid", "ChebyshevGrid", "cheb_diff_matrix", "clenshaw_curtis_weights"]


def _is_power_of_two(n):
    return n >= 2 and (n & (n - 1)) == 0


class PeriodicGrid:
    """Uniform periodic grid in one or two dimensions.

    Parameters
    ----------
    lengths : sequence of float
        Domain length per axis.
    sizes : sequence of int
        Node count per axis; each must be a power of two.
    origins : sequence of float, optional
        Left endpoint per axis. Defaults to -L/2 (domain [-L/2, L/2)).
    """

    def __init__(self, lengths, sizes, origins=None):
        lengths = tuple(float(L) for L in np.atleast_1d(lengths))
        sizes = tuple(int(n) for n in np.atleast_1d(sizes))
        if len(lengths) != len(sizes):
            raise DimensionError("lengths and sizes must have equal length")
        if len(lengths) not in (1, 2):
            raise DimensionError("only 1D and 2D periodic grids are supported")
        for n in sizes:
            if not _is_power_of_two(n):
                raise DimensionError(f"node count must be a power of two, got {n}")
        if origins is None:
            origins = tuple(-L / 2 for L in lengths)
        else:
            origins = tuple(float(o) for o in np.atleast_1d(origins))
            if len(origins) != len(lengths):
                raise DimensionError("origins must match the number of axes")

        self.lengths = lengths
        self.sizes = sizes
        self.origins = origins
        self.ndim = len(sizes)
        self.spacings = tuple(L / n for L, n in zip(lengths, sizes))
        self.cell_volume = float(np.prod(self.spacings))
        self.axes = tuple(
            o + d * np.arange(n) for o, d, n in zip(origins, self.spacings, sizes)
        )
        # 2*pi*m/L in FFT ordering; for odd-order derivatives the Nyquist
        # mode is zeroed so real fields stay real.
        self._k1 = tuple(
            2.0 * np.pi * np.fft.fftfreq(n, d=d) for n, d in zip(sizes, self.spacings)
        )

    @classmethod
    def line(cls, length, n, origin=None):
        """1D grid of `n` points covering [origin, origin+length)."""
        return cls((length,), (n,), None if origin is None else (origin,))

    @classmethod
    def square(cls, length, n, origin=None):
        """2D grid of n*n points on a square domain."""
        org = None if origin is None else (origin, origin)
        return cls((length, length), (n, n), org)

    @property
    def shape(self):
        return self.sizes

    @property
    def x(self):
        """Coordinate array (1D grids only)."""
        if self.ndim != 1:
            raise DimensionError("x is defined for 1D grids; use meshes()")
        return self.axes[0]

    def meshes(self):
        """Coordinate meshgrids with 'ij' indexing."""
        return np.meshgrid(*self.axes, indexing="ij")

    def wavenumbers(self, zero_nyquist=False):
        """Per-axis wavenumber meshgrids (1D: plain arrays).

        With zero_nyquist=True the unmatched Nyquist mode is removed, which
        is required when building odd-order derivative symbols for real
        fields.
        """
        ks = []
        for k in self._k1:
            if zero_nyquist:
                k = k.copy()
                k[len(k) // 2] = 0.0
            ks.append(k)
        if self.ndim == 1:
            return ks[0]
        return np.meshgrid(*ks, indexing="ij")

    def _check_field(self, field):
        field = np.asarray(field)
        if field.shape[-self.ndim:] != self.sizes:
            raise DimensionError(
                f"field shape {field.shape} does not match grid {self.sizes}"
            )
        return field

    def transform(self, field, inverse=False):
        """FFT (forward) or inverse FFT over the grid axes.

        Leading axes (e.g. time levels) are carried along untouched.
        """
        field = self._check_field(field)
        axes = tuple(range(-self.ndim, 0))
        if inverse:
            return np.fft.ifftn(field, axes=axes)
        return np.fft.fftn(field, axes=axes)

    def integrate(self, field):
        """Domain integral by the spectrally exact zero-mode rule."""
        field = self._check_field(field)
        axes = tuple(range(-self.ndim, 0))
        return self.cell_volume * field.sum(axis=axes)

    def differentiate(self, field, order=1):
        """Spectral derivative of the given order (1D grids).

        Multiplies by (i*k)**order; for odd orders the Nyquist mode is
        dropped so differentiation maps real fields to real fields.
        """
        if order < 1:
            raise ValueError("order must be >= 1")
        if self.ndim != 1:
            raise DimensionError("differentiate() is 1D; use gradient() in 2D")
        field = self._check_field(field)
        k = self.wavenumbers(zero_nyquist=(order % 2 == 1))
        out = np.fft.ifft((1j * k) ** order * np.fft.fft(field, axis=-1), axis=-1)
        if np.isrealobj(field):
            return out.real
        return out

    def gradient(self, field):
        """Spectral gradient, one array per axis."""
        field = self._check_field(field)
        ks = self.wavenumbers(zero_nyquist=True)
        if self.ndim == 1:
            ks = [ks]
        fhat = self.transform(field)
        outs = []
        for axis, k in enumerate(ks):
            g = self.transform(1j * k * fhat, inverse=True)
            outs.append(g.real if np.isrealobj(field) else g)
        return outs

    def dealias_mask(self):
        """Boolean 2/3-rule mask in spectral ordering (off by default)."""
        masks = []
        for k in self._k1:
            cut = (2.0 / 3.0) * np.abs(k).max()
            masks.append(np.abs(k) <= cut)
        if self.ndim == 1:
            return masks[0]
        mx, my = np.meshgrid(*masks, indexing="ij")
        return mx & my


def cheb_diff_matrix(n):
    """Chebyshev-Lobatto nodes and first-order differentiation matrix on [-1, 1].

    Nodes are ordered from +1 down to -1. Row sums of the matrix vanish
    identically by the negative-sum trick, so constants differentiate to
    zero at round-off level.
    """
    if n == 0:
        return np.ones(1), np.zeros((1, 1))
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = 2.0
    c[-1] = 2.0
    c *= (-1.0) ** j
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    d -= np.diag(d.sum(axis=1))
    return x, d


def clenshaw_curtis_weights(n):
    """Clenshaw-Curtis quadrature weights on the n+1 Lobatto nodes of [-1, 1]."""
    if n == 0:
        return np.array([2.0])
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    ii = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k * k - 1)
        v -= np.cos(n * theta[ii]) / (n * n - 1)
    else:
        w[0] = w[-1] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta[ii]) / (4.0 * k * k - 1)
    w[ii] = 2.0 * v / n
    return w


class ChebyshevGrid:
    """Chebyshev-Lobatto grid on [x_left, x_right] with n+1 nodes.

    Carries the first-order differentiation matrix and Clenshaw-Curtis
    weights, both rescaled from [-1, 1] by the affine node map.
    """

    def __init__(self, x_left, x_right, n):
        if x_right <= x_left:
            raise ValueError("x_right must exceed x_left")
        if n < 2:
            raise ValueError("need at least degree 2")
        self.x_left = float(x_left)
        self.x_right = float(x_right)
        self.degree = int(n)
        xi, d = cheb_diff_matrix(self.degree)
        half = (self.x_right - self.x_left) / 2.0
        self.x = self.x_left + (xi + 1.0) * half
        self.diff_matrix = d / half
        self.weights = clenshaw_curtis_weights(self.degree) * half
        self.ndim = 1

    @property
    def size(self):
        return self.degree + 1

    @property
    def shape(self):
        return (self.size,)

    def _check_field(self, field):
        field = np.asarray(field)
        if field.shape[-1] != self.size:
            raise DimensionError(
                f"field length {field.shape[-1]} does not match grid {self.size}"
            )
        return field

    def integrate(self, field):
        """Clenshaw-Curtis integral over [x_left, x_right]."""
        field = self._check_field(field)
        return field @ self.weights

    def differentiate(self, field, order=1):
        """Apply the differentiation matrix `order` times."""
        if order < 1:
            raise ValueError("order must be >= 1")
        field = self._check_field(field)
        out = field
        for _ in range(order):
            out = out @ self.diff_matrix.T
        return out

    def neumann_second_derivative(self):
        """Second-derivative matrix with homogeneous Neumann conditions.

        Product D*D0 where D0 is the first-order matrix with its first and
        last rows zeroed; the zeroed rows force the boundary derivative to
        vanish before the outer differentiation.
        """
        d0 = self.diff_matrix.copy()
        d0[0, :] = 0.0
        d0[-1, :] = 0.0
        return self.diff_matrix @ d0

    def dirichlet_second_derivative(self):
        """Interior block of D^2 for homogeneous Dirichlet conditions.

        The returned matrix acts on values at the interior nodes
        (x[1:-1]); boundary values are held at zero.
        """
        d2 = self.diff_matrix @ self.diff_matrix
        return d2[1:-1, 1:-1]
