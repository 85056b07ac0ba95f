"""Linear-semigroup machinery.

Two paths: a diagonal Fourier-symbol path for periodic or rapidly decaying
problems, and a dense-matrix path (matrix exponential, entire-function
evaluation, resolvent contour) for Chebyshev-discretized boundary-value
problems whose operator matrix is not diagonalizable in practice.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .errors import ContourError, StiffnessError

__all__ = [
    "apply_semigroup",
    "matrix_exponential",
    "phi_functions",
    "contour_phi_matrix",
    "gershgorin_bounds",
]


def apply_semigroup(symbol, t, field, grid):
    """Apply exp(t*L) to a field through the Fourier symbol of L.

    Real fields stay real provided the symbol is conjugate-symmetric in k
    (true for all built-in models).
    """
    field = np.asarray(field)
    out = grid.transform(np.exp(t * symbol) * grid.transform(field), inverse=True)
    if np.isrealobj(field):
        return out.real
    return out


def gershgorin_bounds(matrix):
    """(center, enclosing_radius, max_real_bound) of the Gershgorin discs."""
    matrix = np.asarray(matrix)
    diag = np.diagonal(matrix)
    radii = np.abs(matrix).sum(axis=1) - np.abs(diag)
    center = diag.mean()
    enclosing = np.max(np.abs(diag - center) + radii)
    max_real = np.max(diag.real + radii)
    return center, float(enclosing), float(max_real)


def matrix_exponential(matrix, spectral_radius_cap=700.0):
    """Dense matrix exponential by scaling and squaring.

    Raises StiffnessError when the real spectral bound exceeds the cap and
    the result would overflow; the remedy is a smaller time step.
    """
    matrix = np.asarray(matrix, dtype=float)
    _, _, max_real = gershgorin_bounds(matrix)
    if max_real > spectral_radius_cap:
        # Gershgorin over-estimates badly for non-normal matrices; confirm
        # with the true spectrum before rejecting.
        lam = np.linalg.eigvals(matrix)
        if lam.real.max() > spectral_radius_cap:
            raise StiffnessError(
                "matrix exponential would overflow (max Re eigenvalue "
                f"{lam.real.max():.3g} > cap {spectral_radius_cap:.3g}); "
                "reduce the time step"
            )
    out = scipy.linalg.expm(matrix)
    if not np.isfinite(out).all():
        raise StiffnessError(
            "matrix exponential overflowed; reduce the time step"
        )
    return out


def _phi_taylor(b, order, terms=24):
    """Taylor evaluation of exp and phi_1..phi_order for a small-norm matrix.

    phi_j(z) = sum_k z^k / (k+j)!; with the 1-norm of b at most 1/2 the
    series reaches double precision well before `terms`.
    """
    n = b.shape[0]
    eye = np.eye(n)
    outs = []
    for j in range(order + 1):
        acc = np.zeros_like(b)
        power = eye
        for k in range(terms):
            acc = acc + power / math.factorial(k + j)
            power = power @ b
        outs.append(acc)
    return outs


def phi_functions(matrix, order=2):
    """exp(A) together with phi_1(A)..phi_order(A), order <= 3.

    Scaling-and-squaring analogue for the phi family: Taylor series at
    A/2**s followed by s applications of the doubling identities. Stable
    for stiff decaying operators where the direct inverse-based formulas
    overflow or are singular.
    """
    if order > 3:
        raise ValueError("phi_functions supports order <= 3")
    a = np.asarray(matrix, dtype=float)
    norm = np.linalg.norm(a, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0)
    b = a / (2.0 ** s)
    funcs = _phi_taylor(b, order)
    eye = np.eye(a.shape[0])
    for _ in range(s):
        e = funcs[0]
        doubled = [e @ e]
        if order >= 1:
            doubled.append((e + eye) @ funcs[1] / 2.0)
        if order >= 2:
            doubled.append(((e + eye) @ funcs[2] + funcs[1]) / 4.0)
        if order >= 3:
            doubled.append(((e + eye) @ funcs[3] + funcs[2] + funcs[1] / 2.0) / 8.0)
        funcs = doubled
    return funcs


def contour_phi_matrix(
    phi,
    matrix,
    m_points=64,
    center=None,
    radius=None,
    tol=1e-12,
    max_points=4096,
):
    """Evaluate phi(A) as a resolvent contour integral on a circle.

    The circle is centered at the centroid of the Gershgorin disc centers
    with radius 1.1x the enclosing Gershgorin radius (never below 1, so
    the contour stays clear of a removable singularity at the origin).
    The trapezoidal point count is doubled until two successive values
    agree to `tol`. `phi` must accept complex arrays and be numerically
    stable on the contour.
    """
    a = np.asarray(matrix)
    g_center, g_radius, _ = gershgorin_bounds(a)
    if center is None:
        center = g_center
    if radius is None:
        radius = max(1.1 * g_radius, 1.0)
    # Explicit geometry must still enclose every Gershgorin disc.
    diag = np.diagonal(a)
    disc_extent = np.abs(diag - center) + (np.abs(a).sum(axis=1) - np.abs(diag))
    if np.any(disc_extent > radius * (1 + 1e-12)):
        raise ContourError(
            "contour of radius {:.3g} centered at {:.3g} does not enclose the "
            "Gershgorin discs (need radius >= {:.3g})".format(
                radius, complex(center).real, float(disc_extent.max())
            )
        )

    real_case = np.isrealobj(a) and abs(complex(center).imag) == 0.0
    eye = np.eye(a.shape[0], dtype=complex)

    def evaluate(m):
        if real_case:
            # Conjugate-symmetric points: sum the upper half, take 2*Re.
            theta = np.pi * (np.arange(m // 2) + 0.5) / (m // 2)
            acc = np.zeros(a.shape, dtype=complex)
            for th in theta:
                zeta = center + radius * np.exp(1j * th)
                resolvent = np.linalg.solve(zeta * eye - a, eye)
                acc += phi(zeta) * resolvent * (zeta - center)
            return (2.0 * acc.real) / m
        theta = 2.0 * np.pi * (np.arange(m) + 0.5) / m
        acc = np.zeros(a.shape, dtype=complex)
        for th in theta:
            zeta = center + radius * np.exp(1j * th)
            resolvent = np.linalg.solve(zeta * eye - a, eye)
            acc += phi(zeta) * resolvent * (zeta - center)
        return acc / m

    result = evaluate(m_points)
    m = m_points
    while m < max_points:
        m *= 2
        refined = evaluate(m)
        if np.max(np.abs(refined - result)) <= tol * max(1.0, np.max(np.abs(refined))):
            return refined
        result = refined
    return result
