"""The renormalized Duhamel fixed-point iteration and the multi-block driver.

One block solves u_t = L u + N(u) on [0, T_b] as a space-time fixed point:
the solution is expanded as u = sum_j R_j(t) v_j(x,t) with one auxiliary
field per enforced law, each v_j obeying its own Duhamel integral equation
seeded by a pseudo initial condition, and the factors R_j recomputed from
the enforced laws at every sweep. Long horizons chain blocks, each seeded
with the previous terminal state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import renormalization as renorm
from .errors import ConfigError, DivergenceError, SplitError, TdsrError
from .quadrature import TrapezoidalStepper, duhamel_series_symbol, filon_coefficients

__all__ = [
    "split_initial_condition",
    "mollifier",
    "generate_initial_guess",
    "BlockIteration",
    "BlockSolution",
    "tdsr_solve_block",
    "MultiBlockSolution",
    "multiblock_run",
]


# ---------------------------------------------------------------------------
# pseudo initial conditions


def split_initial_condition(u0, strategy, n_laws, grid, explicit=None):
    """Split u0 into one pseudo initial condition per enforced law.

    Strategies: "single" (n_laws=1), "bell_sech" (narrow-amplitude wide
    sech bell plus remainder, n_laws=2), "bell_gauss" (two Gaussian bells
    plus remainder, n_laws=3), "explicit" (caller-supplied fields,
    validated). Every split must reproduce u0 exactly and contain no
    identically zero component.
    """
    u0 = np.asarray(u0)
    if strategy == "single":
        if n_laws != 1:
            raise SplitError("'single' split needs exactly one law")
        parts = [u0.copy()]
    elif strategy == "bell_sech":
        if n_laws != 2:
            raise SplitError("'bell_sech' split needs exactly two laws")
        f1 = (1.0 / 300.0) / np.cosh(grid.x / np.sqrt(600.0))
        parts = [f1, u0 - f1]
    elif strategy == "bell_gauss":
        if n_laws != 3:
            raise SplitError("'bell_gauss' split needs exactly three laws")
        f3 = 0.15 * np.exp(-grid.x**2)
        f2 = 0.05 * np.exp(-grid.x**2)
        parts = [u0 - f2 - f3, f2, f3]
    elif strategy == "explicit":
        if explicit is None or len(explicit) != n_laws:
            raise SplitError("'explicit' split needs one field per law")
        parts = [np.asarray(f) for f in explicit]
        mismatch = np.abs(sum(parts) - u0).max()
        if mismatch > 1e-12:
            raise SplitError(
                f"explicit pseudo initial conditions do not sum to u0 "
                f"(max deviation {mismatch:.3e})"
            )
    else:
        raise SplitError(f"unknown split strategy {strategy!r}")

    for j, f in enumerate(parts):
        if np.abs(f).max() == 0.0:
            raise SplitError(f"pseudo initial condition {j} is identically zero")
    return parts


def mollifier(x, a, b):
    """Bump with unit peak: exp(b/a^2 - b/(a^2 - x^2)) inside (-a, a), else 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < a
    out[inside] = np.exp(b / a**2 - b / (a**2 - x[inside] ** 2))
    return out


def generate_initial_guess(
    grid, n_levels, n_gaussians, width, moll_a, moll_b, seed
):
    """Random space-time field: mollified, peak-normalized Gaussian bumps.

    Centers are uniform on [-L/2, L/2], per-level amplitudes uniform on
    [-1, 1]; the whole field is scaled to unit space-time peak and
    multiplied by the mollifier so it respects decaying boundary
    conditions. Deterministic for a fixed seed.
    """
    if grid.ndim != 1:
        raise ConfigError("random guesses are only implemented for 1D grids")
    if n_gaussians == 0:
        return np.zeros((n_levels,) + grid.shape)
    rng = np.random.default_rng(seed)
    half = grid.lengths[0] / 2.0
    centers = rng.uniform(-half, half, size=n_gaussians)
    amplitudes = rng.uniform(-1.0, 1.0, size=(n_levels, n_gaussians))
    bumps = np.exp(-(((grid.x[None, :] - centers[:, None]) / width) ** 2))
    raw = amplitudes @ bumps
    peak = np.abs(raw).max()
    if peak > 0:
        raw /= peak
    return raw * mollifier(grid.x, moll_a, moll_b)[None, :]


# ---------------------------------------------------------------------------
# one block


_NEWTON_KIND = {
    "kdv_mass": "mass",
    "kdv_momentum": "momentum",
    "kdv_hamiltonian": "hamiltonian",
}


@dataclass
class BlockSolution:
    """Converged state of one time block (times are local to the block)."""

    times: np.ndarray
    u: np.ndarray
    factors: np.ndarray
    metric_history: list
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)
    iteration_seconds: list = field(default_factory=list)


class BlockIteration:
    """Workspace for the fixed-point sweeps of one block.

    Precomputes the propagated pseudo initial conditions and the
    quadrature coefficients; exposes the individual pieces (factor solve,
    reconstruction, sweep) so consistency properties can be probed
    directly.
    """

    def __init__(self, model, grid, u0, pseudo_ics, dt, n_steps, laws, constants):
        if n_steps < 1:
            raise ConfigError("a block needs at least one step")
        self.model = model
        self.grid = grid
        self.dt = float(dt)
        self.n_levels = n_steps + 1
        self.laws = list(laws)
        self.constants = list(constants)
        self.u0 = np.asarray(u0)
        self.pseudo_ics = [np.asarray(f) for f in pseudo_ics]
        if len(self.pseudo_ics) != len(self.laws):
            raise ConfigError("need one pseudo initial condition per enforced law")
        self.times = self.dt * np.arange(self.n_levels)
        self._expand = (slice(None),) + (None,) * grid.ndim

        if model.linear_kind == "symbol":
            if n_steps < 3:
                raise ConfigError(
                    "the Filon-Simpson startup needs at least three steps per block"
                )
            self.symbol = model.symbol(grid)
            self.coeffs = filon_coefficients(self.symbol, self.dt)
            exp_t = np.exp(self.times[self._expand] * self.symbol[None])
            self.prop_f = []
            for f in self.pseudo_ics:
                prop = grid.transform(exp_t * grid.transform(f)[None], inverse=True)
                self.prop_f.append(prop if model.is_complex else prop.real)
            self.stepper = None
        elif model.linear_kind == "matrix":
            self.stepper = TrapezoidalStepper(model.matrix(grid), self.dt)
            self.prop_f = []
            for f in self.pseudo_ics:
                series = np.empty((self.n_levels,) + grid.shape)
                series[0] = f
                for i in range(1, self.n_levels):
                    series[i] = self.stepper.exp_dt @ series[i - 1]
                self.prop_f.append(series)
        else:
            raise ConfigError(f"unknown linear kind {model.linear_kind!r}")

        self.lift = model.lift(grid) if model.dissipative else None
        if model.dissipative:
            self.p0 = float(grid.integrate(self.u0 * self.u0))
        # Scale for the transient multi-law Newton slack; see
        # renormalization.solve_multi_law_newton.
        self._constant_scale = max(
            1.0, max(abs(float(np.real(c))) for c in self.constants)
        )

    # -- pieces -------------------------------------------------------

    def initial_guess(self, policy="auto", seed=None, n_gaussians=30,
                      width=2.0, moll_a=None, moll_b=1.0, bootstrap=2):
        """Initial auxiliary fields.

        "linear" propagates the pseudo-ICs with the semigroup; "picard"
        additionally applies `bootstrap` plain (unrenormalized) sweeps,
        which differentiates auxiliary fields seeded from proportional
        bells and is required with three enforced laws; "random" builds
        seeded mollified Gaussian bumps. "auto" picks linear for up to two
        laws and picard beyond.
        """
        if policy == "auto":
            policy = "linear" if len(self.laws) < 3 else "picard"
        if policy == "linear":
            return [p.copy() for p in self.prop_f]
        if policy == "picard":
            v_list = [p.copy() for p in self.prop_f]
            ones = np.ones((len(self.laws), self.n_levels))
            for _ in range(bootstrap):
                v_list = self.advance(v_list, ones)
            return v_list
        if policy == "random":
            if moll_a is None:
                moll_a = 0.95 * self.grid.lengths[0] / 2.0
            guesses = []
            for j in range(len(self.laws)):
                g = generate_initial_guess(
                    self.grid, self.n_levels, n_gaussians, width, moll_a, moll_b,
                    None if seed is None else seed + j,
                )
                guesses.append(g.astype(complex) if self.model.is_complex else g)
            return guesses
        raise ConfigError(f"unknown guess policy {policy!r}")

    def solve_factors(self, v_list, metric=None, previous=None):
        """Renormalization factors for the current auxiliary fields.

        `metric` is the latest successive-difference of the outer fixed
        point; it bounds the transient slack granted to multi-law Newton
        (the enforced system can lose its root by exactly that distance
        near a fold, so the grant tightens to nothing as the iteration
        converges). `previous` carries the factors of the preceding sweep
        as per-level Newton seeds, keeping the solve on one root branch.
        """
        model = self.model
        if model.dissipative:
            factors, state = renorm.dissipative_renorm(
                v_list[0], self.grid, model.params["diffusion"],
                model.params["gamma"], self.p0, self.dt, lift=self.lift,
            )
            return np.array([factors]), {"dissipative": state}

        kinds = [model.functional_kind(law) for law in self.laws]
        if len(kinds) == 1:
            kind = kinds[0]
            single = {
                "kdv_mass": "mass",
                "kdv_momentum": "momentum",
                "kdv_hamiltonian": "hamiltonian",
                "nls_power": "power",
            }.get(kind)
            if single is None:
                raise ConfigError(f"no single-law solver for functional {kind!r}")
            factors, diag = renorm.solve_single_law(
                single, v_list[0], self.constants[0], self.pseudo_ics[0],
                self.grid, model.params,
            )
            return np.array([factors]), diag
        if kinds == ["kdv_mass", "kdv_momentum"]:
            r1, r2, diag = renorm.solve_two_law_mass_momentum(
                v_list[0], v_list[1], self.constants[0], self.constants[1],
                self.pseudo_ics[1], self.grid,
            )
            return np.array([r1, r2]), diag
        newton_kinds = [_NEWTON_KIND.get(k) for k in kinds]
        if None in newton_kinds:
            raise ConfigError(f"no multi-law solver for functionals {kinds!r}")
        slack = self._constant_scale * (
            1e-2 if metric is None else min(1e-2, max(10.0 * metric, 1e-10))
        )
        factors, diag = renorm.solve_multi_law_newton(
            newton_kinds, v_list, self.constants, self.pseudo_ics,
            self.grid, model.params, slack=slack, r_init=previous,
        )
        return factors, diag

    def combine(self, v_list, factors):
        """Reconstruct u = sum_j R_j v_j."""
        u = factors[0][self._expand] * v_list[0]
        for j in range(1, len(v_list)):
            u = u + factors[j][self._expand] * v_list[j]
        return u

    def duhamel(self, g_series):
        """Duhamel integral of one integrand series on this block's mesh."""
        if self.stepper is not None:
            return self.stepper.series(g_series)
        out = self.grid.transform(
            duhamel_series_symbol(
                self.grid.transform(g_series), self.symbol, self.dt, self.coeffs
            ),
            inverse=True,
        )
        return out if self.model.is_complex else out.real

    def advance(self, v_list, factors):
        """One fixed-point sweep: new auxiliary fields from (R, v).

        Field j is driven by the telescoped integrand
        N(sum_{l<=j} R_l v_l) - N(sum_{l<j} R_l v_l), so the R-weighted sum
        of the new fields reproduces the propagated u0 plus the Duhamel
        integral of N(u) identically.
        """
        partial = None
        prev_nl = None
        v_new = []
        for j, v in enumerate(v_list):
            term = factors[j][self._expand] * v
            partial = term if partial is None else partial + term
            nl = self.model.nonlinear(partial, self.grid)
            g = nl if prev_nl is None else nl - prev_nl
            prev_nl = nl
            integral = self.duhamel(g)
            v_new.append((self.prop_f[j] + integral) / factors[j][self._expand])
        return v_new


def tdsr_solve_block(
    model,
    grid,
    u0,
    pseudo_ics,
    dt,
    n_steps,
    laws,
    constants,
    tol=1e-13,
    max_iter=200,
    guesses=None,
    guess_policy="auto",
    seed=None,
    divergence_run=5,
):
    """Renormalized fixed-point solve of one time block.

    Sweeps v -> M[R(v), v] until the successive-difference metric
    max_{x,t} |u_new - u_old| with u = sum R_j v_j falls below `tol` or
    `max_iter` sweeps elapse; `divergence_run` consecutive metric
    increases raise DivergenceError carrying the partial solution (the
    usual remedy is a smaller block).
    """
    block = BlockIteration(model, grid, u0, pseudo_ics, dt, n_steps, laws, constants)
    v_list = guesses if guesses is not None else block.initial_guess(guess_policy, seed)

    factors, diag = block.solve_factors(v_list)
    u = block.combine(v_list, factors)
    metric_history = []
    iteration_seconds = []
    growth = 0
    converged = False
    iterations = 0

    for iteration in range(1, max_iter + 1):
        started = time.perf_counter()
        last_metric = metric_history[-1] if metric_history else None
        try:
            v_list = block.advance(v_list, factors)
            factors, diag = block.solve_factors(
                v_list, metric=last_metric, previous=factors
            )
        except TdsrError as exc:
            raise type(exc)(f"iteration {iteration}: {exc}") from exc
        u_new = block.combine(v_list, factors)
        metric = float(np.abs(u_new - u).max())
        metric_history.append(metric)
        iteration_seconds.append(time.perf_counter() - started)
        u = u_new
        iterations = iteration
        if metric <= tol:
            converged = True
            break
        if len(metric_history) > 1 and metric > metric_history[-2]:
            growth += 1
            if growth >= divergence_run:
                partial = BlockSolution(
                    times=block.times, u=u, factors=factors,
                    metric_history=metric_history, iterations=iterations,
                    converged=False, diagnostics=diag,
                    iteration_seconds=iteration_seconds,
                )
                raise DivergenceError(
                    f"metric grew for {divergence_run} consecutive sweeps "
                    f"(last {metric:.3e}); try a smaller time block",
                    partial=partial,
                )
        else:
            growth = 0

    return BlockSolution(
        times=block.times,
        u=u,
        factors=factors,
        metric_history=metric_history,
        iterations=iterations,
        converged=converged,
        diagnostics=diag,
        iteration_seconds=iteration_seconds,
    )


# ---------------------------------------------------------------------------
# multi-block driver


@dataclass
class MultiBlockSolution:
    """Concatenated result of a multi-block run.

    `times` covers every level once (interface levels deduplicated).
    `u` is the full space-time field when collect="full", otherwise only
    `snapshots` are retained. `law_values` holds the enforced laws plus
    any extra reported functionals at every level, column order
    `law_names`.
    """

    times: np.ndarray
    u: np.ndarray
    snapshots: dict
    law_names: list
    law_values: np.ndarray
    law_initial: np.ndarray
    block_iterations: list
    block_metrics: list
    factors_initial: np.ndarray
    converged: bool
    iteration_seconds: list = field(default_factory=list)

    @property
    def drift_absolute(self):
        return self.law_values - self.law_initial[None, :]

    @property
    def drift_relative(self):
        scale = np.where(np.abs(self.law_initial) > 0, np.abs(self.law_initial), 1.0)
        return np.abs(self.drift_absolute) / scale[None, :]


def multiblock_run(
    model,
    grid,
    u0,
    total_time,
    dt,
    block_size=None,
    laws=("momentum",),
    split_strategy=None,
    guess_policy="linear",
    seed=None,
    tol=1e-13,
    max_iter=200,
    report=(),
    collect="full",
    snapshot_times=(),
    constants=None,
    progress=None,
):
    """Sequential block solves covering [0, total_time].

    dt is adjusted (at most marginally) so the horizon is an integer
    number of steps; each block is seeded with the previous terminal state
    and re-splits it with the same strategy. Law constants are evaluated
    once from the global initial condition so the reported drift refers to
    t=0. `report` lists additional functional kinds tracked alongside the
    enforced laws.
    """
    u0 = np.asarray(u0)
    laws = list(laws)
    if split_strategy is None:
        split_strategy = "single" if len(laws) == 1 else None
    if split_strategy is None:
        raise ConfigError("a split strategy is required for several laws")
    n_total = max(1, round(total_time / dt))
    dt_eff = total_time / n_total
    if abs(dt_eff - dt) > 0.05 * dt:
        raise ConfigError(
            f"dt {dt:g} does not tile the horizon {total_time:g} "
            f"(nearest fit {dt_eff:g})"
        )
    if block_size is None:
        n_block = n_total
    else:
        n_block = max(1, round(block_size / dt_eff))
    sizes = []
    remaining = n_total
    while remaining > 0:
        take = min(n_block, remaining)
        if model.linear_kind == "symbol" and 0 < remaining - take < 3:
            # Avoid a trailing stub too short for the quadrature startup.
            take = remaining
        sizes.append(take)
        remaining -= take

    if model.dissipative:
        law_kinds = [model.functional_kind(law) for law in laws]
        initial = np.array([
            renorm.evaluate_functional(kind, u0, grid, model.params)
            for kind in law_kinds
        ])
        if constants is None:
            constants = list(initial)
    else:
        law_kinds = [model.functional_kind(law) for law in laws]
        if constants is None:
            constants = [
                renorm.evaluate_functional(kind, u0, grid, model.params)
                for kind in law_kinds
            ]
        initial = np.array(constants, dtype=float)

    report_kinds = list(report)
    all_kinds = law_kinds + report_kinds
    law_initial = np.concatenate([
        initial,
        [
            np.real(renorm.evaluate_functional(kind, u0, grid, model.params))
            for kind in report_kinds
        ],
    ]) if report_kinds else initial.astype(float)

    times_out = [np.array([0.0])]
    u_out = [u0[None]] if collect == "full" else None
    law_rows = [np.array([
        np.real(renorm.evaluate_functional(kind, u0, grid, model.params))
        for kind in all_kinds
    ])]
    snapshots = {}
    snap_remaining = sorted(float(s) for s in snapshot_times)

    block_iterations = []
    block_metrics = []
    iteration_seconds = []
    factors_initial = None
    converged = True
    current = u0
    t_origin = 0.0
    for b, n_steps in enumerate(sizes):
        pseudo = split_initial_condition(current, split_strategy, len(laws), grid)
        sol = tdsr_solve_block(
            model, grid, current, pseudo, dt_eff, n_steps, laws, constants,
            tol=tol, max_iter=max_iter, guess_policy=guess_policy,
            seed=None if seed is None else seed + b,
        )
        if factors_initial is None:
            factors_initial = sol.factors
        converged = converged and sol.converged
        block_iterations.append(sol.iterations)
        block_metrics.append(sol.metric_history[-1] if sol.metric_history else 0.0)
        iteration_seconds.extend(sol.iteration_seconds)

        block_times = t_origin + sol.times
        times_out.append(block_times[1:])
        if collect == "full":
            u_out.append(sol.u[1:])
        vals = np.empty((n_steps, len(all_kinds)))
        for i in range(1, n_steps + 1):
            for m, kind in enumerate(all_kinds):
                vals[i - 1, m] = np.real(
                    renorm.evaluate_functional(kind, sol.u[i], grid, model.params)
                )
        law_rows.append(vals)

        while snap_remaining and snap_remaining[0] <= block_times[-1] + 1e-9 * dt_eff:
            target = snap_remaining.pop(0)
            idx = int(round((target - t_origin) / dt_eff))
            idx = min(max(idx, 0), n_steps)
            snapshots[target] = sol.u[idx].copy()

        current = sol.u[-1]
        t_origin = block_times[-1]
        if progress is not None:
            progress(b + 1, len(sizes), sol)

    return MultiBlockSolution(
        times=np.concatenate(times_out),
        u=np.concatenate(u_out) if collect == "full" else None,
        snapshots=snapshots,
        law_names=all_kinds,
        law_values=np.concatenate([row.reshape(-1, len(all_kinds)) for row in law_rows]),
        law_initial=law_initial,
        block_iterations=block_iterations,
        block_metrics=block_metrics,
        factors_initial=factors_initial,
        converged=converged,
        iteration_seconds=iteration_seconds,
    )
