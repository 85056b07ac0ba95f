"""Conserved/dissipated functionals and the renormalization-factor solvers.

The factors R_j(t) are what make every fixed-point iterate satisfy the
enforced laws exactly: closed forms for one law, a quadratic system for
mass+momentum, Newton for other multi-law combinations, and a
Crank-Nicolson ODE march for dissipation-rate equations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NewtonError, PositivityError, RootSelectionError

__all__ = [
    "Functional",
    "evaluate_functional",
    "evaluate_series",
    "solve_single_law",
    "solve_two_law_mass_momentum",
    "solve_multi_law_newton",
    "dissipative_renorm",
    "DissipativeState",
]

SELECTION_RTOL = 1e-8


def _kdv_mass(u, grid, p):
    return grid.integrate(u)


def _kdv_momentum(u, grid, p):
    return grid.integrate(u * u)


def _kdv_hamiltonian(u, grid, p):
    alpha = p.get("alpha", 6.0)
    eps = p.get("epsilon", 1.0)
    ux = grid.differentiate(u)
    return grid.integrate(-(alpha / 6.0) * u**3 + (eps**2 / 2.0) * ux * ux)


def _zk_q4(u, grid, p):
    eps = p["epsilon"]
    ux = grid.differentiate(u)
    uxx = grid.differentiate(u, 2)
    return grid.integrate(
        u**4 / 4.0 - 3.0 * eps**2 * u * ux**2 + (9.0 / 5.0) * eps**4 * uxx**2
    )


def _zk_q5(u, grid, p):
    eps = p["epsilon"]
    ux = grid.differentiate(u)
    uxx = grid.differentiate(u, 2)
    uxxx = grid.differentiate(u, 3)
    return grid.integrate(
        u**5 / 5.0
        - 6.0 * eps**2 * u**2 * ux**2
        + (36.0 / 5.0) * eps**4 * u * uxx**2
        - (108.0 / 35.0) * eps**6 * uxxx**2
    )


def _zk_q6(u, grid, p):
    eps = p["epsilon"]
    ux = grid.differentiate(u)
    uxx = grid.differentiate(u, 2)
    uxxx = grid.differentiate(u, 3)
    uxxxx = grid.differentiate(u, 4)
    return grid.integrate(
        u**6 / 6.0
        - 10.0 * eps**2 * u**3 * ux**2
        + 18.0 * eps**4 * u**2 * uxx**2
        - 5.0 * eps**4 * ux**4
        - (108.0 / 7.0) * eps**6 * u * uxxx**2
        + (120.0 / 7.0) * eps**6 * uxx**3
        + (36.0 / 7.0) * eps**8 * uxxxx**2
    )


def _nls_power(u, grid, p):
    return grid.integrate(np.abs(u) ** 2)


def _nls_momentum(u, grid, p):
    # Evaluated exactly as the density u * grad(u*); complex-valued in
    # general, one entry per axis in 2D.
    grads = grid.gradient(np.conj(u))
    vals = [grid.integrate(u * g) for g in grads]
    return vals[0] if len(vals) == 1 else np.array(vals)


def _nls_hamiltonian(u, grid, p):
    grads = grid.gradient(u)
    grad_sq = sum(np.abs(g) ** 2 for g in grads)
    return grid.integrate(-0.25 * np.abs(u) ** 4 + 0.5 * grad_sq)


def _ac_l2(u, grid, p):
    return grid.integrate(u * u)


_FUNCTIONALS = {
    "kdv_mass": _kdv_mass,
    "kdv_momentum": _kdv_momentum,
    "kdv_hamiltonian": _kdv_hamiltonian,
    "zk_q1": _kdv_mass,
    "zk_q2": _kdv_momentum,
    "zk_q3": _kdv_hamiltonian,
    "zk_q4": _zk_q4,
    "zk_q5": _zk_q5,
    "zk_q6": _zk_q6,
    "nls_power": _nls_power,
    "nls_momentum": _nls_momentum,
    "nls_hamiltonian": _nls_hamiltonian,
    "ac_l2": _ac_l2,
}


@dataclass(frozen=True)
class Functional:
    """A conserved or dissipated quantity, with the model parameters it needs."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _FUNCTIONALS:
            raise KeyError(
                f"unknown functional kind {self.kind!r}; known: "
                + ", ".join(sorted(_FUNCTIONALS))
            )

    def evaluate(self, field_values, grid):
        return _FUNCTIONALS[self.kind](np.asarray(field_values), grid, self.params)


def evaluate_functional(functional, field_values, grid, params=None):
    """Evaluate a functional (instance or kind name) on one field."""
    if isinstance(functional, str):
        functional = Functional(functional, params or {})
    return functional.evaluate(field_values, grid)


def evaluate_series(functional, series, grid, params=None):
    """Evaluate a functional at every time level of a space-time field."""
    if isinstance(functional, str):
        functional = Functional(functional, params or {})
    return np.array([functional.evaluate(series[i], grid) for i in range(series.shape[0])])


# ---------------------------------------------------------------------------
# single conservation law


def _real_roots(coeff_rows, rtol=1e-10):
    """Real roots of monic-izable cubics given per-row coefficients (a,b,c,d).

    Uses companion-matrix eigenvalues (stacked); roots with relative
    imaginary part below rtol count as real.
    """
    rows = np.asarray(coeff_rows, dtype=float)
    a, b, c, d = rows.T
    comp = np.zeros((rows.shape[0], 3, 3))
    comp[:, 1, 0] = 1.0
    comp[:, 2, 1] = 1.0
    comp[:, 0, 0] = -b / a
    comp[:, 0, 1] = -c / a
    comp[:, 0, 2] = -d / a
    lam = np.linalg.eigvals(comp)
    real_mask = np.abs(lam.imag) <= rtol * (1.0 + np.abs(lam.real))
    return lam, real_mask


def solve_single_law(kind, v_series, constant, pseudo_ic, grid, params=None):
    """Renormalization factor series from one conservation law.

    kind: 'mass' (linear), 'momentum' or 'power' (square root, positive
    branch), or 'hamiltonian' (cubic; root selected at t=0 by the
    reconstruction certificate against the pseudo initial condition, then
    by continuity).
    """
    params = params or {}
    v_series = np.asarray(v_series)
    n_levels = v_series.shape[0]
    diagnostics = {}

    if kind == "mass":
        denom = np.array([grid.integrate(v_series[i]) for i in range(n_levels)])
        if np.any(np.abs(denom) < 1e-300):
            raise RootSelectionError("mass renormalization: integral of v vanishes")
        factors = np.real(constant / denom)
    elif kind in ("momentum", "power"):
        denom = np.array(
            [grid.integrate(np.abs(v_series[i]) ** 2) for i in range(n_levels)]
        )
        ratio = np.real(constant) / denom
        if np.any(ratio <= 0):
            raise RootSelectionError(
                "momentum renormalization: constant/integral ratio not positive "
                f"(min {ratio.min():.3e})"
            )
        factors = np.sqrt(ratio)
    elif kind == "hamiltonian":
        alpha = params.get("alpha", 6.0)
        eps = params.get("epsilon", 1.0)
        cubic_a = np.empty(n_levels)
        cubic_b = np.empty(n_levels)
        for i in range(n_levels):
            v = v_series[i]
            vx = grid.differentiate(v)
            cubic_a[i] = -(alpha / 6.0) * grid.integrate(v**3)
            cubic_b[i] = -(eps**2 / 2.0) * grid.integrate(vx * vx)
        rows = np.stack(
            [cubic_a, -cubic_b, np.zeros(n_levels), -np.full(n_levels, constant)],
            axis=1,
        )
        lam, real_mask = _real_roots(rows)
        if not real_mask.any(axis=1).all():
            bad = int(np.argmin(real_mask.any(axis=1)))
            raise RootSelectionError(
                "hamiltonian cubic has no real root at level "
                f"{bad}: coefficients A={cubic_a[bad]:.6e}, B={cubic_b[bad]:.6e}, "
                f"C={constant:.6e}"
            )
        factors = np.empty(n_levels)
        selected = np.empty(n_levels, dtype=int)
        for i in range(n_levels):
            cands = lam[i].real[real_mask[i]]
            idx = np.flatnonzero(real_mask[i])
            if i == 0:
                scale = np.abs(pseudo_ic).max()
                devs = [
                    np.abs(r * v_series[0] - pseudo_ic).max() / max(scale, 1e-300)
                    for r in cands
                ]
                j = int(np.argmin(devs))
                diagnostics["certificate"] = float(devs[j])
            else:
                j = int(np.argmin(np.abs(cands - factors[i - 1])))
            r = cands[j]
            # Newton polish on the cubic drives the enforced residual to
            # round-off.
            for _ in range(2):
                f = cubic_a[i] * r**3 - cubic_b[i] * r**2 - constant
                fp = 3.0 * cubic_a[i] * r**2 - 2.0 * cubic_b[i] * r
                if fp != 0.0:
                    r -= f / fp
            factors[i] = r
            selected[i] = idx[j]
        diagnostics["selected_roots"] = selected
    else:
        raise KeyError(f"unknown single-law kind {kind!r}")

    if not np.all(np.isfinite(factors)) or np.any(factors == 0.0):
        raise RootSelectionError(f"{kind} renormalization produced zero/non-finite factor")
    return factors, diagnostics


# ---------------------------------------------------------------------------
# two laws: mass + momentum (closed form)


def solve_two_law_mass_momentum(v1_series, v2_series, c1, c2, pseudo_ic_2, grid):
    """Closed-form factors enforcing mass and momentum simultaneously.

    Eliminating R1 through the mass constraint leaves a quadratic for R2;
    the branch is fixed at t=0 by the reconstruction certificate
    R2(0) v2(.,0) = f2 and kept for the whole series. If the default
    branch violates the certificate the other root is tried once.
    """
    v1_series = np.asarray(v1_series)
    v2_series = np.asarray(v2_series)
    n_levels = v1_series.shape[0]
    a1 = np.empty(n_levels)
    a2 = np.empty(n_levels)
    a3 = np.empty(n_levels)
    a4 = np.empty(n_levels)
    a5 = np.empty(n_levels)
    for i in range(n_levels):
        v1 = v1_series[i]
        v2 = v2_series[i]
        a1[i] = grid.integrate(v1)
        a2[i] = grid.integrate(v2)
        a3[i] = grid.integrate(v1 * v1)
        a4[i] = grid.integrate(v2 * v2)
        a5[i] = grid.integrate(v1 * v2)
    if np.any(np.abs(a1) < 1e-300):
        raise RootSelectionError("mass integral of v1 vanishes")

    mu1 = a3 * a2**2 + a4 * a1**2 - 2.0 * a1 * a2 * a5
    mu2 = 2.0 * a1 * a5 * c1 - 2.0 * a2 * a3 * c1
    mu3 = a3 * c1**2 - c2 * a1**2
    disc = mu2**2 - 4.0 * mu1 * mu3
    scale = np.maximum(mu2**2, np.abs(4.0 * mu1 * mu3))
    # Round-off can push a true double root slightly negative.
    disc = np.where(disc < 0, np.where(disc > -1e-12 * scale, 0.0, disc), disc)
    if np.any(disc < 0):
        bad = int(np.argmax(disc < 0))
        raise RootSelectionError(
            f"two-law quadratic has negative discriminant at level {bad} "
            f"({disc[bad]:.3e})"
        )
    sq = np.sqrt(disc)

    def branch(sign):
        r2 = (-mu2 + sign * sq) / (2.0 * mu1)
        r1 = (c1 - a2 * r2) / a1
        return r1, r2

    r1, r2 = branch(+1.0)
    scale0 = max(np.abs(pseudo_ic_2).max(), 1e-300)
    certificate = np.abs(r2[0] * v2_series[0] - pseudo_ic_2).max() / scale0
    diagnostics = {"certificate": certificate, "branch": +1}
    if certificate > SELECTION_RTOL:
        r1_alt, r2_alt = branch(-1.0)
        certificate_alt = np.abs(r2_alt[0] * v2_series[0] - pseudo_ic_2).max() / scale0
        if certificate_alt < certificate:
            warnings.warn(
                "two-law root certificate violated "
                f"({certificate:.2e}); switching to the other quadratic branch",
                stacklevel=2,
            )
            r1, r2 = r1_alt, r2_alt
            diagnostics = {"certificate": certificate_alt, "branch": -1}
    if not (np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))):
        raise RootSelectionError("two-law factors non-finite")
    return r1, r2, diagnostics


# ---------------------------------------------------------------------------
# general multi-law Newton


def _collect_moments(kinds, v_list, grid, params):
    """Cross-moment integrals the polynomial residuals are assembled from."""
    n = len(v_list)
    n_levels = v_list[0].shape[0]
    moments = {}
    moments["m1"] = np.empty((n_levels, n))
    for j in range(n):
        for i in range(n_levels):
            moments["m1"][i, j] = grid.integrate(v_list[j][i])
    moments["m2"] = np.empty((n_levels, n, n))
    for j in range(n):
        for k in range(j, n):
            for i in range(n_levels):
                val = grid.integrate(v_list[j][i] * v_list[k][i])
                moments["m2"][i, j, k] = val
                moments["m2"][i, k, j] = val
    if "hamiltonian" in kinds:
        m3 = np.empty((n_levels, n, n, n))
        d2 = np.empty((n_levels, n, n))
        dv = [
            np.stack([grid.differentiate(v_list[j][i]) for i in range(n_levels)])
            for j in range(n)
        ]
        for j in range(n):
            for k in range(j, n):
                for i in range(n_levels):
                    val = grid.integrate(dv[j][i] * dv[k][i])
                    d2[i, j, k] = val
                    d2[i, k, j] = val
                for l in range(k, n):
                    for i in range(n_levels):
                        val = grid.integrate(v_list[j][i] * v_list[k][i] * v_list[l][i])
                        for perm in {(j, k, l), (j, l, k), (k, j, l),
                                     (k, l, j), (l, j, k), (l, k, j)}:
                            m3[(i,) + perm] = val
        moments["m3"] = m3
        moments["d2"] = d2
    return moments


def _law_residual(kind, r, level_moments, constant, params):
    alpha = params.get("alpha", 6.0)
    eps = params.get("epsilon", 1.0)
    if kind == "mass":
        value = level_moments["m1"] @ r
        jac = level_moments["m1"]
    elif kind == "momentum":
        m2r = level_moments["m2"] @ r
        value = r @ m2r
        jac = 2.0 * m2r
    elif kind == "hamiltonian":
        m3 = level_moments["m3"]
        d2r = level_moments["d2"] @ r
        rr = np.einsum("jkl,k,l->j", m3, r, r)
        value = -(alpha / 6.0) * (r @ rr) + (eps**2 / 2.0) * (r @ d2r)
        jac = -(alpha / 2.0) * rr + eps**2 * d2r
    else:
        raise KeyError(f"law {kind!r} not supported by the Newton path")
    return value - constant, jac


def solve_multi_law_newton(
    kinds,
    v_list,
    constants,
    pseudo_ics,
    grid,
    params=None,
    r_init=None,
    tol=1e-13,
    max_iter=50,
    slack=None,
):
    """Newton solve of the polynomial system enforcing several laws at once.

    One system per time level. Seeding: `r_init` may be a vector (used at
    t=0) or an (n_laws, n_levels) array of per-level seeds (typically the
    previous fixed-point sweep's factors, which keeps the solve on one
    root branch across sweeps); without it, level 0 seeds from the
    least-squares certificate match to the pseudo initial conditions and
    later levels from their predecessor. Jacobians are assembled
    analytically from precomputed cross-moments.

    With three laws the enforced system can momentarily lose its root: the
    solution sits near a fold of the constraint set, and a transient
    iterate may push the fold past the constant by its own distance from
    the fixed point. `slack` (absolute) accepts the least-squares
    minimizer in that situation instead of failing; the enforcement
    residual then tightens to round-off as the outer fixed point
    converges. With slack=None any stall raises NewtonError.

    Returns the (n_laws, n_levels) factor array and diagnostics with
    per-level iteration counts and final residuals.
    """
    params = params or {}
    v_list = [np.asarray(v) for v in v_list]
    n = len(kinds)
    if len(v_list) != n or len(constants) != n:
        raise ValueError("need as many auxiliary fields and constants as laws")
    n_levels = v_list[0].shape[0]
    moments = _collect_moments(kinds, v_list, grid, params)

    def residual_and_jacobian(r, level_moments):
        res = np.empty(n)
        jac = np.empty((n, n))
        for m, kind in enumerate(kinds):
            res[m], jac[m] = _law_residual(kind, r, level_moments, constants[m], params)
        return res, jac

    def newton_step(jac, res, i, history):
        # Proportional auxiliary fields make the system singular but
        # consistent (a solution manifold); least squares then picks the
        # minimum-norm step, which is all the enforcement needs.
        try:
            step = np.linalg.solve(jac, res)
            if np.all(np.isfinite(step)) and np.abs(step).max() < 1e12:
                return step
        except np.linalg.LinAlgError:
            pass
        step, *_ = np.linalg.lstsq(jac, res, rcond=None)
        if not np.all(np.isfinite(step)):
            raise NewtonError(
                f"singular Jacobian at level {i}", residual_history=history
            )
        return step

    factors = np.empty((n, n_levels))
    iterations = np.zeros(n_levels, dtype=int)
    residuals = np.zeros(n_levels)
    seeds = None
    if r_init is not None:
        r_init = np.asarray(r_init, dtype=float)
        if r_init.ndim == 2:
            seeds = r_init
            r = seeds[:, 0].copy()
        else:
            r = r_init.copy()
    elif pseudo_ics is not None:
        # Certificate seed: the per-field least-squares match of
        # R_j v_j(.,0) to f_j. Keeps Newton on the branch that
        # reconstructs the initial condition when several branches (or a
        # whole manifold, for proportional fields) enforce the laws.
        r = np.empty(n)
        for j in range(n):
            v0 = v_list[j][0]
            r[j] = np.real(np.vdot(v0, pseudo_ics[j])) / np.real(np.vdot(v0, v0))
        if not np.all(np.isfinite(r)):
            r = np.ones(n)
    else:
        r = np.ones(n)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_levels):
            if seeds is not None:
                r = seeds[:, i].copy()
            level_moments = {key: val[i] for key, val in moments.items()}
            history = []
            converged = False
            for it in range(max_iter):
                res, jac = residual_and_jacobian(r, level_moments)
                res_norm = np.abs(res).max()
                history.append(res_norm)
                if res_norm <= tol:
                    converged = True
                    iterations[i] = it
                    residuals[i] = res_norm
                step = newton_step(jac, res, i, history)
                if converged:
                    # One polish step past the tolerance costs nothing and
                    # lands the enforced residual at round-off.
                    polished = r - step
                    polished_res, _ = residual_and_jacobian(polished, level_moments)
                    if np.abs(polished_res).max() <= res_norm:
                        r = polished
                    break
                # Backtracking keeps the step inside the basin when the
                # full Newton update overshoots (cubic law, poor seed).
                lam = 1.0
                accepted = None
                for _ in range(40):
                    trial = r - lam * step
                    trial_res, _ = residual_and_jacobian(trial, level_moments)
                    trial_norm = np.abs(trial_res).max()
                    if np.isfinite(trial_norm) and trial_norm < res_norm:
                        accepted = trial
                        break
                    lam /= 2.0
                if accepted is None:
                    if slack is not None and res_norm <= slack:
                        converged = True
                        iterations[i] = it
                        residuals[i] = res_norm
                        break
                    raise NewtonError(
                        f"Newton stalled at level {i} (residual {res_norm:.3e})",
                        residual_history=history,
                    )
                r = accepted
            if not converged:
                if slack is not None and history[-1] <= slack:
                    iterations[i] = max_iter
                    residuals[i] = history[-1]
                else:
                    raise NewtonError(
                        f"Newton did not reach {tol:.1e} in {max_iter} iterations "
                        f"at level {i} (residual {history[-1]:.3e})",
                        residual_history=history,
                    )
            factors[:, i] = r
    if not np.all(np.isfinite(factors)) or np.any(factors == 0.0):
        raise RootSelectionError("multi-law factors zero/non-finite")
    return factors, {"iterations": iterations, "residuals": residuals}


# ---------------------------------------------------------------------------
# dissipation-rate path


@dataclass
class DissipativeState:
    """CN march of p(t) = r(t) R(t)^2 plus the coefficient series behind it."""

    p: np.ndarray
    r: np.ndarray
    a: np.ndarray
    b: np.ndarray


def dissipative_renorm(v_series, grid, diffusion, gamma, p0, dt, lift=None):
    """Factor series R(t) enforcing the L2 dissipation-rate equation.

    The squared-norm variable p = r R^2 is advanced by Crank-Nicolson for
    dp/dt = (-a(t) + 2 gamma) p - b(t) p^2 with coefficients integrated
    from the current auxiliary field (Clenshaw-Curtis on Chebyshev grids).
    With `lift` given (affine boundary lift of a homogenized Dirichlet
    problem) the rate equation keeps the exact lift coupling terms, which
    are odd in R = sqrt(p/r).
    """
    v_series = np.asarray(v_series)
    n_levels = v_series.shape[0]
    if p0 <= 0:
        raise PositivityError(f"initial squared norm must be positive, got {p0:.3e}")

    r = np.empty(n_levels)
    a = np.empty(n_levels)
    b = np.empty(n_levels)
    extra = np.zeros((n_levels, 3))  # lift couplings: sqrt(p), p, p^(3/2) terms
    for i in range(n_levels):
        v = v_series[i]
        vx = grid.differentiate(v)
        r[i] = grid.integrate(v * v)
        if r[i] <= 0:
            raise PositivityError(f"integral of v^2 not positive at level {i}")
        a[i] = 2.0 * diffusion * grid.integrate(vx * vx) / r[i]
        b[i] = 2.0 * gamma * grid.integrate(v**4) / r[i] ** 2
        if lift is not None:
            e1 = grid.integrate(v * lift)
            e3 = grid.integrate(v**3 * lift)
            e2 = grid.integrate(v**2 * lift**2)
            e1c = grid.integrate(v * lift**3)
            extra[i, 0] = 2.0 * gamma * (e1 - e1c) / np.sqrt(r[i])
            extra[i, 1] = -6.0 * gamma * e2 / r[i]
            extra[i, 2] = -6.0 * gamma * e3 / r[i] ** 1.5

    def rate(p_val, i):
        g = (-a[i] + 2.0 * gamma) * p_val - b[i] * p_val**2
        if lift is not None:
            sq = np.sqrt(p_val)
            g += extra[i, 0] * sq + extra[i, 1] * p_val + extra[i, 2] * p_val * sq
        return g

    p = np.empty(n_levels)
    p[0] = p0
    for i in range(n_levels - 1):
        rhs = p[i] + 0.5 * dt * rate(p[i], i)
        if lift is None:
            # Quadratic in p_{i+1}; the product of roots is negative when
            # rhs > 0, so exactly one root is positive.
            qa = 0.5 * dt * b[i + 1]
            qb = 1.0 - 0.5 * dt * (-a[i + 1] + 2.0 * gamma)
            qc = -rhs
            if qa == 0.0:
                nxt = rhs / qb
            else:
                disc = qb**2 - 4.0 * qa * qc
                if disc < 0:
                    raise PositivityError(
                        f"CN quadratic has no real root at level {i + 1}"
                    )
                nxt = (-qb + np.sqrt(disc)) / (2.0 * qa)
        else:
            nxt = p[i]
            for _ in range(60):
                f = nxt - p[i] - 0.5 * dt * (rate(p[i], i) + rate(nxt, i + 1))
                sq = np.sqrt(nxt)
                fp = 1.0 - 0.5 * dt * (
                    (-a[i + 1] + 2.0 * gamma + extra[i + 1, 1])
                    - 2.0 * b[i + 1] * nxt
                    + 0.5 * extra[i + 1, 0] / sq
                    + 1.5 * extra[i + 1, 2] * sq
                )
                step = f / fp
                nxt -= step
                if nxt <= 0:
                    raise PositivityError(
                        f"CN iterate left the positive cone at level {i + 1}"
                    )
                if abs(step) <= 1e-15 * max(1.0, abs(nxt)):
                    break
        if nxt <= 0:
            raise PositivityError(
                f"squared norm became non-positive at level {i + 1} "
                "(diverging iterate)"
            )
        p[i + 1] = nxt

    factors = np.sqrt(p / r)
    return factors, DissipativeState(p=p, r=r, a=a, b=b)
