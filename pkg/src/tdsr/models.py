"""Concrete evolution models, exact solutions, and conservation diagnostics.

Built-in models: KdV (periodic or decaying-truncated), cubic NLS in one
and two dimensions, and the Allen-Cahn equation under Neumann or
homogenized-Dirichlet boundary conditions on a Chebyshev grid.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import QuadratureError, TdsrError

__all__ = [
    "Model",
    "kdv_model",
    "nls_model",
    "allen_cahn_neumann",
    "homogenize_dirichlet",
    "allen_cahn_dirichlet",
    "kdv_soliton_exact",
    "kdv_two_soliton_initial",
    "ac_travelling_exact",
    "townes_profile",
    "local_conservation_errors",
]


@dataclass
class Model:
    """An evolution equation u_t = L u + N(u) plus its enforceable laws.

    `linear_kind` selects the semigroup path: "symbol" (diagonal in
    Fourier space) or "matrix" (dense, boundary conditions encoded in the
    matrix). `law_kinds` maps the user-facing law names to functional
    kinds; `dissipative` marks models whose renormalization factor obeys a
    rate equation instead of algebraic constraints.
    """

    name: str
    linear_kind: str
    nonlinear_fn: object
    params: dict = field(default_factory=dict)
    symbol_fn: object = None
    matrix_fn: object = None
    is_complex: bool = False
    dissipative: bool = False
    boundary: str = "periodic"
    law_kinds: dict = field(default_factory=dict)
    lift_fn: object = None
    exact_fn: object = None

    def symbol(self, grid):
        if self.symbol_fn is None:
            raise TdsrError(f"model {self.name} has no Fourier symbol")
        return self.symbol_fn(grid, self.params)

    def matrix(self, grid):
        if self.matrix_fn is None:
            raise TdsrError(f"model {self.name} has no operator matrix")
        return self.matrix_fn(grid, self.params)

    def nonlinear(self, u, grid):
        return self.nonlinear_fn(u, grid, self.params)

    def lift(self, grid):
        return None if self.lift_fn is None else self.lift_fn(grid, self.params)

    def exact(self, grid, t):
        if self.exact_fn is None:
            return None
        return self.exact_fn(grid, t, self.params)

    def functional_kind(self, law):
        if law not in self.law_kinds:
            raise KeyError(
                f"law {law!r} is not supported by model {self.name}; "
                f"supported: {sorted(self.law_kinds)}"
            )
        return self.law_kinds[law]


# ---------------------------------------------------------------------------
# KdV


def _kdv_symbol(grid, params):
    eps = params["epsilon"]
    k = grid.wavenumbers(zero_nyquist=True)
    return 1j * eps**2 * k**3


def _kdv_nonlinear(u, grid, params):
    alpha = params["alpha"]
    return -(alpha / 2.0) * grid.differentiate(u * u)


def kdv_model(alpha=6.0, epsilon=1.0, boundary="decaying"):
    """u_t + alpha u u_x + epsilon^2 u_xxx = 0 on a periodic grid.

    The nonlinearity is evaluated in conservative form -(alpha/2)(u^2)_x,
    analytically equal to -alpha u u_x and consistent with the momentum
    flux used by the local-error diagnostics.
    """
    params = {"alpha": float(alpha), "epsilon": float(epsilon)}
    return Model(
        name="kdv",
        linear_kind="symbol",
        params=params,
        symbol_fn=_kdv_symbol,
        nonlinear_fn=_kdv_nonlinear,
        boundary=boundary,
        law_kinds={
            "mass": "kdv_mass",
            "momentum": "kdv_momentum",
            "hamiltonian": "kdv_hamiltonian",
        },
    )


def kdv_soliton_exact(beta, x, t):
    """One-parameter soliton 2 beta^2 sech^2(beta(x - 4 beta^2 t)) (alpha=6, eps=1)."""
    return 2.0 * beta**2 / np.cosh(beta * (np.asarray(x) - 4.0 * beta**2 * t)) ** 2


def kdv_two_soliton_initial(x, beta1, beta2, separation):
    """Superposed solitons with the slower one offset by `separation`."""
    x = np.asarray(x)
    return (
        2.0 * beta1**2 / np.cosh(beta1 * x) ** 2
        + 2.0 * beta2**2 / np.cosh(beta2 * (x - separation)) ** 2
    )


# ---------------------------------------------------------------------------
# NLS


def _nls_symbol(grid, params):
    ks = grid.wavenumbers()
    if grid.ndim == 1:
        return -1j * ks**2
    return -1j * (ks[0] ** 2 + ks[1] ** 2)


def _nls_nonlinear(u, grid, params):
    return 1j * np.abs(u) ** 2 * u


def nls_model(dim=1):
    """i u_t + lap(u) + |u|^2 u = 0 (zero external potential)."""
    return Model(
        name=f"nls{dim}d",
        linear_kind="symbol",
        params={"dim": dim},
        symbol_fn=_nls_symbol,
        nonlinear_fn=_nls_nonlinear,
        is_complex=True,
        boundary="decaying",
        law_kinds={
            "power": "nls_power",
            "momentum": "nls_momentum",
            "hamiltonian": "nls_hamiltonian",
        },
    )


# ---------------------------------------------------------------------------
# Allen-Cahn


def _ac_neumann_matrix(grid, params):
    return params["diffusion"] * grid.neumann_second_derivative()


def _ac_nonlinear(u, grid, params):
    gamma = params["gamma"]
    return gamma * (u - u**3)


def allen_cahn_neumann(diffusion, gamma):
    """u_t = D u_xx + gamma (u - u^3) with homogeneous Neumann walls.

    The linear part is the bare diffusion operator (D times the matrix
    product of the first-derivative matrix with its row-zeroed copy); the
    whole reaction sits in the nonlinear term so the rate equation for the
    squared norm keeps its 2*gamma coefficient.
    """
    return Model(
        name="allen-cahn-neumann",
        linear_kind="matrix",
        params={"diffusion": float(diffusion), "gamma": float(gamma)},
        matrix_fn=_ac_neumann_matrix,
        nonlinear_fn=_ac_nonlinear,
        dissipative=True,
        boundary="neumann",
        law_kinds={"dissipation": "ac_l2"},
    )


def _ac_dirichlet_matrix(grid, params):
    d2 = grid.diff_matrix @ grid.diff_matrix
    # Zeroing the boundary rows pins the (homogenized) boundary values;
    # interior rows act exactly as the interior block of D^2 because the
    # boundary values they couple to are zero.
    d2[0, :] = 0.0
    d2[-1, :] = 0.0
    return params["diffusion"] * d2


def _lift_field(grid, params):
    g_l = params["g_left"]
    g_r = params["g_right"]
    a = (grid.x - grid.x_left) / (grid.x_right - grid.x_left)
    return g_l + (g_r - g_l) * a


def _ac_homogenized_nonlinear(w, grid, params):
    gamma = params["gamma"]
    phi = _lift_field(grid, params)
    u = w + phi
    return gamma * (u - u**3)


def homogenize_dirichlet(model, g_left, g_right):
    """Rewrite an Allen-Cahn model with u(l)=g_left, u(r)=g_right walls.

    Subtracting the affine lift phi leaves w = u - phi with homogeneous
    Dirichlet conditions; phi_xx = 0 so the diffusion operator is
    unchanged and the full reaction (now evaluated at w + phi) moves into
    the nonlinear term.
    """
    params = dict(model.params)
    params["g_left"] = float(g_left)
    params["g_right"] = float(g_right)
    return Model(
        name="allen-cahn-dirichlet",
        linear_kind="matrix",
        params=params,
        matrix_fn=_ac_dirichlet_matrix,
        nonlinear_fn=_ac_homogenized_nonlinear,
        dissipative=True,
        boundary="dirichlet",
        law_kinds={"dissipation": "ac_l2"},
        lift_fn=_lift_field,
    )


def allen_cahn_dirichlet(diffusion, gamma, g_left=-1.0, g_right=1.0):
    """Homogenized Dirichlet Allen-Cahn model (state is w = u - lift)."""
    return homogenize_dirichlet(allen_cahn_neumann(diffusion, gamma), g_left, g_right)


def ac_travelling_exact(epsilon, x, t):
    """Front 0.5 - 0.5 tanh(xi/(2 sqrt(2) eps)), xi = x - 3t/(sqrt(2) eps).

    Exact solution of u_t = u_xx + (u - u^3)/eps^2.
    """
    xi = np.asarray(x) - 3.0 * t / (np.sqrt(2.0) * epsilon)
    return 0.5 - 0.5 * np.tanh(xi / (2.0 * np.sqrt(2.0) * epsilon))


# ---------------------------------------------------------------------------
# Townes profile (steady-state renormalization oracle for 2D NLS)


def townes_profile(lam, grid, tol=1e-10, max_iter=500, cache_dir=None):
    """Ground-state solution of lap(U) + U^3 = lam^2 U on a 2D grid.

    Fixed-point iteration in Fourier space with the cubic-nonlinearity
    renormalization exponent 3/2; the returned field is the initial
    condition oracle for the 2D NLS scenario. Results are cached as flat
    binary doubles with a text sidecar when cache_dir is given.
    """
    if cache_dir is not None:
        tag = f"townes_lam{lam:g}_L{grid.lengths[0]:g}_N{grid.sizes[0]}"
        bin_path = os.path.join(cache_dir, tag + ".bin")
        meta_path = os.path.join(cache_dir, tag + ".txt")
        if os.path.exists(bin_path) and os.path.exists(meta_path):
            u = np.fromfile(bin_path, dtype=np.float64).reshape(grid.sizes)
            return u

    kx, ky = grid.wavenumbers()
    k2 = kx**2 + ky**2
    denom = lam**2 + k2
    xx, yy = grid.meshes()
    u = 2.0 * np.exp(-(xx**2 + yy**2))
    for iteration in range(max_iter):
        u_hat = grid.transform(u)
        cubic_hat = grid.transform(u**3)
        num = np.real(np.vdot(u_hat, denom * u_hat))
        den = np.real(np.vdot(u_hat, cubic_hat))
        factor = (num / den) ** 1.5
        u_new = grid.transform(factor * cubic_hat / denom, inverse=True).real
        residual = np.abs(
            grid.transform(-k2 * grid.transform(u_new), inverse=True).real
            + u_new**3
            - lam**2 * u_new
        ).max()
        delta = np.abs(u_new - u).max()
        u = u_new
        if residual <= tol and delta <= 10 * tol:
            break
    else:
        raise TdsrError(
            f"Townes iteration did not reach residual {tol:g} in {max_iter} steps "
            f"(residual {residual:.3e})"
        )

    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        u.astype(np.float64).tofile(bin_path)
        with open(meta_path, "w") as fh:
            fh.write(
                "townes profile cache\n"
                f"lambda = {lam!r}\n"
                f"domain length = {grid.lengths[0]!r}\n"
                f"grid points per axis = {grid.sizes[0]}\n"
                f"residual = {residual:.3e}\n"
                "layout = row-major float64\n"
            )
    return u


# ---------------------------------------------------------------------------
# local conservation diagnostics


def _bdf4_time_derivative(series, dt):
    """One-sided fourth-order derivative at the last of five stored levels."""
    if series.shape[0] < 5:
        raise QuadratureError("BDF4 stencil needs at least five time levels")
    s = series[-5:]
    return (25.0 * s[4] - 48.0 * s[3] + 36.0 * s[2] - 16.0 * s[1] + 3.0 * s[0]) / (
        12.0 * dt
    )


def local_conservation_errors(u_series, dt, alpha, epsilon, grid):
    """Pointwise mass and momentum conservation defects at the last level.

    E1 = u_t + alpha u u_x + eps^2 u_xxx,
    E2 = (u^2/2)_t + (alpha u^3/3 + eps^2 (u u_xx - u_x^2/2))_x,
    with time derivatives from the five-level BDF4 stencil and spatial
    derivatives spectral.
    """
    u_series = np.asarray(u_series)
    u = u_series[-1]
    u_t = _bdf4_time_derivative(u_series, dt)
    ux = grid.differentiate(u)
    uxx = grid.differentiate(u, 2)
    uxxx = grid.differentiate(u, 3)
    e1 = u_t + alpha * u * ux + epsilon**2 * uxxx

    half_sq_t = _bdf4_time_derivative(0.5 * u_series**2, dt)
    flux = alpha * u**3 / 3.0 + epsilon**2 * (u * uxx - 0.5 * ux**2)
    e2 = half_sq_t + grid.differentiate(flux)
    return e1, e2
