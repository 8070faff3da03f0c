"""Numerical verification of the structural identities behind the solver.

Each check compares a Monte Carlo finite difference or functional against
the identity it should satisfy and reports a CheckReport.  All checks run
on common-random-number batches: differences of estimates are formed per
path before averaging, so the reported stderr is the propagated pathwise
one, far below the independent-run value.  Tolerances are assembled per
point from (a) the propagated Monte Carlo stderr, (b) finite-difference
curvature allowances estimated from higher-order differences of the node
values, (c) quadrature and interpolation bounds for the jump integral, and
(d) explicit time-step and horizon-truncation allowances so that
zero-variance (deterministic-path) models are budgeted honestly too.

Checks are advisory: they return reports, they do not raise on failure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .barrier_solver import solve_barrier
from .cost_model import ProblemSpec
from .errors import NonFiniteSample
from .estimators import estimate_rho
from .levy_model import LevyTriplet
from .path_engine import (
    SimConfig,
    discount_factors,
    integral_weights,
    map_reduce_paths,
    reflect_arrays,
)

__all__ = [
    "CheckReport",
    "check_barrier_derivative",
    "check_slope_identity",
    "check_convexity",
    "check_martingale",
    "check_hjb",
]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one verification check.

    Two-sided checks pass iff |statistic| <= tolerance; one-sided checks
    (declared via ``one_sided``) pass iff statistic <= tolerance, where the
    statistic is the worst signed violation across the per-point table.
    """

    name: str
    statistic: float
    tolerance: float
    passed: bool
    details: list
    one_sided: bool = False

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "tolerance": self.tolerance,
            "passed": bool(self.passed),
            "one_sided": self.one_sided,
            "details": self.details,
        }


def _se(samples: np.ndarray) -> float:
    s = np.asarray(samples, dtype=float)
    if s.size < 2 or np.all(s == s[0]):
        return 0.0
    return float(s.std(ddof=1) / math.sqrt(s.size))


def _drift_scale(triplet: LevyTriplet) -> float:
    return abs(triplet.effective_drift) + triplet.sigma + triplet.jumps.rate * triplet.jumps.mean_abs_size()


# ---------------------------------------------------------------------------
# chunk reducers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _BarrierBundleCtx:
    barriers: tuple          # barrier levels for the value functional
    tau_barrier: float       # barrier for the first-passage factor
    f: Callable
    C: float
    w: np.ndarray
    disc: np.ndarray


def _barrier_bundle_chunk(values, ctx: _BarrierBundleCtx):
    """Per-path value at several barriers plus e^{-q tau} at one barrier."""
    v = np.empty((values.shape[0], len(ctx.barriers)))
    for k, b in enumerate(ctx.barriers):
        u, r, _ = reflect_arrays(values, b)
        v[:, k] = np.asarray(ctx.f(u), dtype=float) @ ctx.w + ctx.C * (
            np.diff(r, axis=-1, prepend=0.0) @ ctx.disc
        )
    below = values < ctx.tau_barrier
    any_below = below.any(axis=-1)
    tau_idx = below.argmax(axis=-1)
    tau_disc = np.where(any_below, ctx.disc[np.minimum(tau_idx, len(ctx.disc) - 1)], 0.0)
    return {"pp_v": v, "pp_tau_disc": tau_disc}


@dataclass(frozen=True, eq=False)
class _OffsetBundleCtx:
    offsets: tuple           # start offsets added to the simulated paths
    b: float                 # reflection barrier
    f: Callable
    f_prime: Callable
    C: float
    w: np.ndarray
    disc: np.ndarray
    with_passage: bool       # also return tau factors of the offset-0 path


def _offset_bundle_chunk(values, ctx: _OffsetBundleCtx):
    """Per-path value from several CRN-coupled starting points."""
    v = np.empty((values.shape[0], len(ctx.offsets)))
    for k, off in enumerate(ctx.offsets):
        shifted = values + off
        u, r, _ = reflect_arrays(shifted, ctx.b)
        v[:, k] = np.asarray(ctx.f(u), dtype=float) @ ctx.w + ctx.C * (
            np.diff(r, axis=-1, prepend=0.0) @ ctx.disc
        )
    out = {"pp_v": v}
    if ctx.with_passage:
        # passage functionals belong to the path started at offsets[0]
        base = values + ctx.offsets[0]
        below = base < ctx.b
        any_below = below.any(axis=-1)
        tau_idx = np.where(any_below, below.argmax(axis=-1), base.shape[1])
        # left-rule integral of f'_+ along the raw path, stopped before tau
        wf = np.asarray(ctx.f_prime(base), dtype=float) * ctx.w
        cum = np.concatenate([np.zeros((base.shape[0], 1)), np.cumsum(wf, axis=1)], axis=1)
        out["pp_fprime_to_tau"] = np.take_along_axis(
            cum, np.minimum(tau_idx, base.shape[1])[:, None], axis=1
        )[:, 0]
        out["pp_tau_disc"] = np.where(
            any_below, ctx.disc[np.minimum(tau_idx, len(ctx.disc) - 1)], 0.0
        )
    return out


def _interp_eval(y, nodes, means, C):
    """Piecewise-linear value interpolant with structural extensions.

    Below the node range the value continues with exact slope -C; above it
    the last segment's slope is frozen.
    """
    y = np.asarray(y, dtype=float)
    out = np.interp(y, nodes, means)
    below = y < nodes[0]
    if np.any(below):
        out = np.where(below, means[0] + C * (nodes[0] - y), out)
    above = y > nodes[-1]
    if np.any(above):
        slope = (means[-1] - means[-2]) / (nodes[-1] - nodes[-2])
        out = np.where(above, means[-1] + slope * (y - nodes[-1]), out)
    return out


@dataclass(frozen=True, eq=False)
class _MartingaleCtx:
    b_star: float
    t_indices: tuple
    nodes: np.ndarray
    node_means: np.ndarray
    C: float
    f: Callable
    w: np.ndarray
    disc: np.ndarray


def _martingale_chunk(values, ctx: _MartingaleCtx):
    n, m = values.shape
    below = values < ctx.b_star
    any_below = below.any(axis=-1)
    tau_idx = np.where(any_below, below.argmax(axis=-1), m)
    wf = np.asarray(ctx.f(values), dtype=float) * ctx.w
    cum = np.concatenate([np.zeros((n, 1)), np.cumsum(wf, axis=1)], axis=1)
    out = np.empty((n, len(ctx.t_indices)))
    for k, t_idx in enumerate(ctx.t_indices):
        j = np.minimum(tau_idx, t_idx)
        x_j = np.take_along_axis(values, j[:, None], axis=1)[:, 0]
        out[:, k] = ctx.disc[j] * _interp_eval(x_j, ctx.nodes, ctx.node_means, ctx.C) + (
            np.take_along_axis(cum, j[:, None], axis=1)[:, 0]
        )
    return {"pp_m": out}


def _run_offsets(triplet, problem, cfg, offsets, b, with_passage=False, n_workers=1):
    ctx = _OffsetBundleCtx(
        offsets=tuple(float(o) for o in offsets),
        b=float(b),
        f=problem.cost.f,
        f_prime=problem.cost.f_prime_plus,
        C=problem.C,
        w=integral_weights(problem.q, cfg.dt, cfg.n_steps + 1),
        disc=discount_factors(problem.q, cfg.dt, cfg.n_steps + 1),
        with_passage=with_passage,
    )
    return map_reduce_paths(triplet, 0.0, cfg, _offset_bundle_chunk, ctx, n_workers=n_workers)


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def check_barrier_derivative(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    x: float,
    b: float,
    cfg: SimConfig,
    h: float = 0.05,
    n_workers: int = 1,
) -> CheckReport:
    """Finite difference of b -> v_b(x) against E_x[e^{-q tau_b}] (rho(b)+C).

    The finite difference runs on CRN paths across the three barriers
    b - h, b, b + h; paths that never cross contribute 0 to the passage
    factor (an error of order e^{-qT}, inside the tail allowance).
    """
    if x == b:
        raise ValueError("the derivative identity needs x != b")
    cfg.validate_for(problem.q)
    ctx = _BarrierBundleCtx(
        barriers=(b - h, b, b + h),
        tau_barrier=b,
        f=problem.cost.f,
        C=problem.C,
        w=integral_weights(problem.q, cfg.dt, cfg.n_steps + 1),
        disc=discount_factors(problem.q, cfg.dt, cfg.n_steps + 1),
    )
    out = map_reduce_paths(triplet, x, cfg, _barrier_bundle_chunk, ctx, n_workers=n_workers)
    v = out["pp_v"]
    if not np.all(np.isfinite(v)):
        raise NonFiniteSample("barrier derivative bundle produced non-finite values")
    fwd = (v[:, 2] - v[:, 1]) / h
    lhs, se_lhs = float(fwd.mean()), _se(fwd)
    tau_disc = out["pp_tau_disc"]
    tau_mean, se_tau = float(tau_disc.mean()), _se(tau_disc)
    rho = estimate_rho(triplet, problem, b, cfg, method="time_integral", n_workers=n_workers)
    rho_c = rho.mean + problem.C
    rhs = tau_mean * rho_c
    se_rhs = math.hypot(rho_c * se_tau, tau_mean * rho.stderr) + se_tau * rho.stderr
    # forward-difference bias is h/2 * v'' + O(h^2); budget a full h * v''
    curvature = abs(float((v[:, 2] - 2 * v[:, 1] + v[:, 0]).mean())) / h**2
    allowance = h * curvature
    floor = 1e-9 * (1.0 + abs(lhs) + abs(rhs)) + cfg.tail_tol * (1.0 + abs(rho_c))
    statistic = lhs - rhs
    tolerance = 3.0 * (se_lhs + se_rhs) + allowance + floor
    detail = {
        "x": x, "b": b, "lhs": lhs, "rhs": rhs, "se_lhs": se_lhs, "se_rhs": se_rhs,
        "curvature_allowance": allowance, "residual": statistic, "tolerance": tolerance,
        "passed": bool(abs(statistic) <= tolerance),
    }
    return CheckReport(
        name="barrier_derivative",
        statistic=statistic,
        tolerance=tolerance,
        passed=abs(statistic) <= tolerance,
        details=[detail],
    )


def check_slope_identity(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    x: float,
    b: float,
    cfg: SimConfig,
    h: float = 0.05,
    n_workers: int = 1,
) -> CheckReport:
    """Finite difference of x -> v_b(x) against the first-passage expression

        E_x[ int_0^{tau_b} e^{-qt} f'_+(X_t) dt ] - C E_x[ e^{-q tau_b} ],

    formed pathwise on CRN paths (the same increments drive both starting
    points and the passage functionals).
    """
    cfg.validate_for(problem.q)
    out = _run_offsets(
        triplet, problem, cfg, offsets=(x, x + h, x + 2 * h), b=b, with_passage=True,
        n_workers=n_workers,
    )
    v = out["pp_v"]
    if not np.all(np.isfinite(v)):
        raise NonFiniteSample("slope identity bundle produced non-finite values")
    rhs_p = out["pp_fprime_to_tau"] - problem.C * out["pp_tau_disc"]
    diff = (v[:, 1] - v[:, 0]) / h - rhs_p
    statistic = float(diff.mean())
    se = _se(diff)
    # forward-difference bias is h/2 * v'' + O(h^2); budget a full h * v''
    curvature = abs(float((v[:, 2] - 2 * v[:, 1] + v[:, 0]).mean())) / h**2
    allowance = h * curvature
    floor = 1e-9 * (1.0 + float(np.abs(v[:, 0]).mean())) + cfg.tail_tol * (
        1.0 + abs(float(problem.cost.f_prime_plus(x)))
    )
    tolerance = 3.0 * se + allowance + floor
    detail = {
        "x": x, "b": b, "slope": float(((v[:, 1] - v[:, 0]) / h).mean()),
        "rhs": float(rhs_p.mean()), "residual": statistic, "se": se,
        "tolerance": tolerance, "passed": bool(abs(statistic) <= tolerance),
    }
    return CheckReport(
        name="slope_identity",
        statistic=statistic,
        tolerance=tolerance,
        passed=abs(statistic) <= tolerance,
        details=[detail],
    )


def check_convexity(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    cfg: SimConfig,
    x_grid,
    b_star: float | None = None,
    n_workers: int = 1,
) -> CheckReport:
    """Second differences of x -> v_{b*}(x) on CRN-coupled starts are >= 0
    up to three propagated standard errors at every interior grid point."""
    problem.require_admissible()
    x_grid = np.asarray([float(v) for v in x_grid])
    if x_grid.size < 5:
        raise ValueError("x_grid needs at least 5 points")
    steps = np.diff(x_grid)
    if np.any(steps <= 0) or np.any(np.abs(steps - steps[0]) > 1e-9 * (1 + steps[0])):
        raise ValueError("x_grid must be uniformly spaced increasing")
    if b_star is None:
        b_star = solve_barrier(triplet, problem, cfg, n_workers=n_workers).b_star
    out = _run_offsets(triplet, problem, cfg, offsets=tuple(x_grid), b=b_star, n_workers=n_workers)
    v = out["pp_v"]
    details = []
    worst = -math.inf
    for j in range(1, x_grid.size - 1):
        d2 = v[:, j + 1] - 2 * v[:, j] + v[:, j - 1]
        mean, se = float(d2.mean()), _se(d2)
        floor = 1e-9 * (1.0 + float(np.abs(v[:, j]).mean()))
        violation = -(mean + 3.0 * se + floor)
        worst = max(worst, violation)
        details.append(
            {"x": float(x_grid[j]), "second_difference": mean, "se": se,
             "residual": mean, "tolerance": 3.0 * se + floor, "passed": bool(violation <= 0.0)}
        )
    return CheckReport(
        name="convexity",
        statistic=worst,
        tolerance=0.0,
        passed=worst <= 0.0,
        details=details,
        one_sided=True,
    )


def check_martingale(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    cfg: SimConfig,
    x: float,
    t_grid,
    b_star: float | None = None,
    node_grid=None,
    n_workers: int = 1,
) -> CheckReport:
    """Constancy in t of E_x[e^{-q(tau and t)} v(X) + int_0^{tau and t} e^{-qs} f(X_s) ds].

    The value function enters through a piecewise-linear interpolant whose
    nodes are estimated on an independent CRN batch (derived seed); below
    the node range the exact linear continuation with slope -C is used.
    """
    cfg.validate_for(problem.q)
    if b_star is None:
        b_star = solve_barrier(triplet, problem, cfg, n_workers=n_workers).b_star
    if x <= b_star:
        raise ValueError("martingale check needs a start strictly above the barrier")
    if node_grid is None:
        span = 3.0 * _drift_scale(triplet) / problem.q + 3.0 * triplet.sigma / math.sqrt(problem.q)
        node_grid = np.linspace(b_star - 2.0, x + span, 41)
    node_grid = np.asarray(node_grid, dtype=float)
    node_cfg = replace(cfg, master_seed=cfg.master_seed + 1)
    nodes_out = _run_offsets(
        triplet, problem, node_cfg, offsets=tuple(node_grid), b=b_star, n_workers=n_workers
    )
    node_v = nodes_out["pp_v"]
    node_means = node_v.mean(axis=0)
    node_se = np.array([_se(node_v[:, j]) for j in range(node_grid.size)])
    interp_allow = 3.0 * float(node_se.max()) + float(
        np.max(np.abs(np.diff(node_means, 2))) / 8.0
    )

    t_indices = sorted({0} | {int(round(t / cfg.dt)) for t in t_grid})
    if max(t_indices) > cfg.n_steps:
        raise ValueError("t_grid exceeds the simulation horizon")
    ctx = _MartingaleCtx(
        b_star=b_star,
        t_indices=tuple(t_indices),
        nodes=node_grid,
        node_means=node_means,
        C=problem.C,
        f=problem.cost.f,
        w=integral_weights(problem.q, cfg.dt, cfg.n_steps + 1),
        disc=discount_factors(problem.q, cfg.dt, cfg.n_steps + 1),
    )
    out = map_reduce_paths(triplet, x, cfg, _martingale_chunk, ctx, n_workers=n_workers)
    m = out["pp_m"]
    if not np.all(np.isfinite(m)):
        raise NonFiniteSample("martingale functional produced non-finite values")
    m0 = float(m[:, 0].mean())
    details = []
    statistic = 0.0
    tolerance = 0.0
    for k, t_idx in enumerate(t_indices):
        drift_term = float(m[:, k].mean()) - m0
        se = _se(m[:, k] - m[:, 0])
        tol = 3.0 * se + interp_allow + 1e-9 * (1.0 + abs(m0))
        if abs(drift_term) >= abs(statistic):
            statistic, tolerance = drift_term, tol
        details.append(
            {"t": t_idx * cfg.dt, "m": float(m[:, k].mean()), "residual": drift_term,
             "se": se, "tolerance": tol, "passed": bool(abs(drift_term) <= tol)}
        )
    passed = all(d["passed"] for d in details)
    return CheckReport(
        name="martingale",
        statistic=statistic,
        tolerance=tolerance,
        passed=passed,
        details=details,
    )


# ---------------------------------------------------------------------------
# HJB system check
# ---------------------------------------------------------------------------


def _jump_quadrature(jumps, tail_prob=1e-3, points_per_side=2000):
    """(z, mass) pairs integrating the jump law; exact for atom laws."""
    if jumps.kind == "atoms":
        return np.asarray(jumps.values, dtype=float), np.asarray(jumps.probs, dtype=float), 0.0
    lo, hi = jumps.displacement_quantiles(tail_prob)
    zs, masses = [], []
    for a, b in ((lo, 0.0), (0.0, hi)):
        if b - a <= 0:
            continue
        z = np.linspace(a, b, points_per_side + 1)
        pdf = jumps.pdf(z)
        w = np.full(z.shape, (b - a) / points_per_side)
        w[0] *= 0.5
        w[-1] *= 0.5
        zs.append(z)
        masses.append(pdf * w)
    z = np.concatenate(zs)
    mass = np.concatenate(masses)
    return z, mass, max(0.0, 1.0 - float(mass.sum()))


def _interp_weights(y_points, nodes, C):
    """Hat-function weights of the interpolant at arbitrary points.

    Returns (W, const) with v(y_k) = W[k] @ node_values + const[k], using the
    exact slope -C continuation below the grid and a frozen top slope above.
    """
    y = np.asarray(y_points, dtype=float)
    n = nodes.size
    W = np.zeros((y.size, n))
    const = np.zeros(y.size)
    inside = (y >= nodes[0]) & (y <= nodes[-1])
    idx = np.clip(np.searchsorted(nodes, y[inside], side="right") - 1, 0, n - 2)
    t = (y[inside] - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    rows = np.flatnonzero(inside)
    W[rows, idx] = 1.0 - t
    W[rows, idx + 1] = t
    below = y < nodes[0]
    W[below, 0] = 1.0
    const[below] = C * (nodes[0] - y[below])
    above = y > nodes[-1]
    if np.any(above):
        dlast = nodes[-1] - nodes[-2]
        s = (y[above] - nodes[-1]) / dlast
        W[above, -1] = 1.0 + s
        W[above, -2] = -s
    return W, const


def check_hjb(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    cfg: SimConfig,
    x_grid,
    fd_h: float,
    b_star: float | None = None,
    n_workers: int = 1,
) -> CheckReport:
    """Residual of the generator system at the fitted barrier.

    At each grid point the residual d*v' + (sigma^2/2) v'' +
    rate*E[v(x+J) - v(x)] - q v + f(x) is assembled as a single linear
    combination of CRN node values, so its stderr is the propagated pathwise
    one.  Pass conditions: |residual| <= tol for x >= b*, residual >= -tol
    for x < b*, slope v' + C >= -tol everywhere and |v' + C| <= tol below
    the barrier.
    """
    cfg.validate_for(problem.q)
    if fd_h <= 0:
        raise ValueError("fd_h must be positive")
    if b_star is None:
        b_star = solve_barrier(triplet, problem, cfg, n_workers=n_workers).b_star
    x_grid = np.asarray([float(v) for v in x_grid])
    jumps = triplet.jumps
    d = triplet.effective_drift
    sig2h = 0.5 * triplet.sigma**2
    q, C, cost = problem.q, problem.C, problem.cost

    # node set: five-point stencils around every check point, plus coarser
    # padding nodes so jump displacements stay on the interpolant
    stencil = np.concatenate([x_grid + k * fd_h for k in (-2, -1, 0, 1, 2)])
    nodes = stencil
    z = mass = None
    tail_mass = 0.0
    if jumps.rate > 0:
        z, mass, tail_mass = _jump_quadrature(jumps)
        lo_pad = x_grid.min() + min(z.min(), 0.0) - fd_h
        hi_pad = x_grid.max() + max(z.max(), 0.0) + fd_h
        pad_step = max(fd_h, (hi_pad - lo_pad) / 96.0)
        nodes = np.concatenate([nodes, np.arange(lo_pad, hi_pad + pad_step, pad_step)])
    nodes = np.unique(np.round(nodes, 9))
    out = _run_offsets(triplet, problem, cfg, offsets=tuple(nodes), b=b_star, n_workers=n_workers)
    Y = out["pp_v"]
    if not np.all(np.isfinite(Y)):
        raise NonFiniteSample("value bundle produced non-finite samples")
    means = Y.mean(axis=0)

    def node_index(v):
        i = int(np.searchsorted(nodes, v - 1e-9))
        if abs(nodes[i] - v) > 1e-8:
            raise AssertionError(f"stencil node {v} missing from node set")
        return i

    drift_scale = _drift_scale(triplet)
    tail = math.exp(-q * cfg.effective_horizon)
    moment_scale = abs(b_star) + drift_scale * (cfg.effective_horizon + 4.0 / q)

    details = []
    for x in x_grid:
        i0 = node_index(round(x, 9))
        im1, ip1 = node_index(round(x - fd_h, 9)), node_index(round(x + fd_h, 9))
        im2, ip2 = node_index(round(x - 2 * fd_h, 9)), node_index(round(x + 2 * fd_h, 9))
        c = np.zeros(nodes.size)
        const = float(cost.f(x))
        c[i0] -= q
        c[ip1] += d / (2 * fd_h)
        c[im1] -= d / (2 * fd_h)
        if triplet.sigma > 0:
            c[ip1] += sig2h / fd_h**2
            c[im1] += sig2h / fd_h**2
            c[i0] -= 2 * sig2h / fd_h**2
        quad_allow = 0.0
        if jumps.rate > 0:
            W, w_const = _interp_weights(x + z, nodes, C)
            c += jumps.rate * (mass @ W)
            const += jumps.rate * float(mass @ w_const)
            c[i0] -= jumps.rate * float(mass.sum())
            interp_err = float(np.max(np.abs(np.diff(means, 2)))) / 8.0
            far = cost.growth_k1 + cost.growth_k2 * (
                abs(x) + moment_scale + abs(z).max()
            ) ** cost.growth_degree
            quad_allow = jumps.rate * (tail_mass * (far / q + abs(float(means[i0]))) + interp_err)

        r_paths = Y @ c + const
        res_mean, res_se = float(r_paths.mean()), _se(r_paths)

        v_abs = abs(float(means[i0]))
        f_abs = abs(float(cost.f(x)))
        fp_abs = abs(float(cost.f_prime_plus(x)))
        d4 = abs(float(means[ip2] - 4 * means[ip1] + 6 * means[i0] - 4 * means[im1] + means[im2]))
        d3 = abs(float(means[ip2] - 2 * means[ip1] + 2 * means[im1] - means[im2])) / 2.0
        fd_allow = sig2h * d4 / (12 * fd_h**2) + abs(d) * d3 / (6 * fd_h)
        dt_allow = 2.0 * cfg.dt * (q * v_abs + f_abs + fp_abs * drift_scale)
        tail_allow = 2.0 * tail / q * (
            cost.growth_k1 + cost.growth_k2 * (abs(x) + moment_scale) ** cost.growth_degree
        ) * (1.0 + q)
        kink_allow = 0.0
        if abs(x - b_star) < 2.5 * fd_h:
            d2_here = float(means[ip1] - 2 * means[i0] + means[im1])
            kink_allow = (sig2h / fd_h**2 + abs(d) / (2 * fd_h)) * abs(d2_here) * 2.0
        floor = 1e-9 * (1.0 + v_abs + f_abs)
        tol = 3.0 * res_se + fd_allow + dt_allow + tail_allow + quad_allow + kink_allow + floor

        slope_paths = (Y[:, ip1] - Y[:, im1]) / (2 * fd_h)
        slope_mean, slope_se = float(slope_paths.mean()), _se(slope_paths)
        slope_tol = (
            3.0 * slope_se
            + d3 / (6 * fd_h)
            + 2.0 * cfg.dt * fp_abs
            + tail_allow * q
            + kink_allow * fd_h
            + 1e-9 * (1.0 + abs(C))
        )
        slope_resid = slope_mean + C

        above = x >= b_star
        res_ok = abs(res_mean) <= tol if above else res_mean >= -tol
        slope_ok = slope_resid >= -slope_tol and (above or abs(slope_resid) <= slope_tol)
        details.append(
            {
                "x": float(x),
                "side": "active" if above else "reflecting",
                "residual": res_mean,
                "tolerance": tol,
                "se": res_se,
                "slope_plus_C": slope_resid,
                "slope_tolerance": slope_tol,
                "passed": bool(res_ok and slope_ok),
            }
        )
    passed = all(r["passed"] for r in details)
    worst = max(
        (abs(r["residual"]) - r["tolerance"] for r in details if r["side"] == "active"),
        default=-math.inf,
    )
    worst = max(
        worst,
        max((-r["residual"] - r["tolerance"] for r in details if r["side"] == "reflecting"),
            default=-math.inf),
    )
    return CheckReport(
        name="hjb",
        statistic=float(worst),
        tolerance=0.0,
        passed=passed,
        details=details,
        one_sided=True,
    )
