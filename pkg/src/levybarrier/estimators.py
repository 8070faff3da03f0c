"""Monte Carlo estimators for rho(b) and the barrier value function.

Every estimate is reported with its standard error and a configuration
fingerprint.  Common random numbers come for free from the deterministic
per-path streams: evaluating several barriers or starting points against
the same (master_seed, n_paths) reuses identical paths, so differences of
estimates are pathwise differences.

rho(b) is estimated from paths started at 0 and reflected at 0 with the
argument shift rho(b) = E[ int_0^inf e^{-qt} f'_+(U^0_t + b) dt ]; the
``exp_clock`` variant replaces the time integral by q^{-1} f'_+ of the
running supremum at an independent Exponential(q) time.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cost_model import ProblemSpec
from .errors import NonFiniteSample
from .levy_model import LevyTriplet
from .path_engine import (
    PathBatch,
    SimConfig,
    discount_factors,
    integral_weights,
    map_reduce_paths,
    reflect_arrays,
    sample_sup_at_exp_time,
)

__all__ = [
    "EstimateWithError",
    "estimate_rho",
    "estimate_value",
    "estimate_rho_curve",
    "fingerprint",
    "estimate_record",
]

KURTOSIS_RELIABLE_MAX = 100.0


@dataclass(frozen=True)
class EstimateWithError:
    """Monte Carlo mean with standard error and provenance fingerprint."""

    mean: float
    stderr: float
    n: int
    fingerprint: str
    kurtosis: float | None = None
    stderr_reliable: bool = True
    rejection_rate: float | None = None


def fingerprint(kind: str, triplet: LevyTriplet, problem: ProblemSpec, cfg: SimConfig, **extra) -> str:
    """Stable hash of (model, problem, sim config, estimator kind, extras)."""
    payload = {
        "kind": kind,
        "model": triplet.describe(),
        "problem": problem.describe(),
        "sim": cfg.describe(),
        "extra": extra,
    }
    # numpy scalars serialize through float so callers may pass either
    blob = json.dumps(payload, sort_keys=True, default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _pair_if_antithetic(samples: np.ndarray, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return samples
    half = samples.shape[0] // 2
    return 0.5 * (samples[:half] + samples[half:])


def _moments(samples: np.ndarray, antithetic: bool):
    """(mean, stderr, kurtosis) with antithetic pairs averaged first."""
    s = _pair_if_antithetic(np.asarray(samples, dtype=float), antithetic)
    mean = float(s.mean())
    if s.size < 2 or np.all(s == s[0]):
        return mean, 0.0, None
    centred = s - mean
    m2 = float(np.mean(centred**2))
    stderr = float(np.sqrt(m2 * s.size / (s.size - 1)) / np.sqrt(s.size))
    kurt = float(np.mean(centred**4) / m2**2) if m2 > 0 else None
    return mean, stderr, kurt


def _finish(kind, samples, antithetic, triplet, problem, cfg, rejection_rate=None, **extra):
    samples = np.asarray(samples, dtype=float)
    if not np.all(np.isfinite(samples)):
        raise NonFiniteSample(f"{kind}: non-finite pathwise sample encountered")
    mean, stderr, kurt = _moments(samples, antithetic)
    reliable = True
    if kurt is not None and kurt > KURTOSIS_RELIABLE_MAX:
        reliable = False
        warnings.warn(
            f"{kind}: sample kurtosis {kurt:.1f} exceeds {KURTOSIS_RELIABLE_MAX:.0f}; "
            "the reported stderr may be unreliable",
            stacklevel=3,
        )
    return EstimateWithError(
        mean=mean,
        stderr=stderr,
        n=int(samples.shape[0]),
        fingerprint=fingerprint(kind, triplet, problem, cfg, **extra),
        kurtosis=kurt,
        stderr_reliable=reliable,
        rejection_rate=rejection_rate,
    )


# ---------------------------------------------------------------------------
# chunk reducers (module level so they cross process boundaries)
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _RhoCtx:
    b_values: tuple
    f_prime: Callable
    w: np.ndarray


def _rho_chunk(values, ctx: _RhoCtx):
    u, _, _ = reflect_arrays(values, 0.0)
    cols = [np.asarray(ctx.f_prime(u + b), dtype=float) @ ctx.w for b in ctx.b_values]
    return {"pp_y": np.stack(cols, axis=1)}


@dataclass(frozen=True, eq=False)
class _ValueCtx:
    b_values: tuple
    f: Callable
    w: np.ndarray
    disc: np.ndarray


def _value_chunk(values, ctx: _ValueCtx):
    y1 = np.empty((values.shape[0], len(ctx.b_values)))
    y2 = np.empty_like(y1)
    for k, b in enumerate(ctx.b_values):
        u, r, _ = reflect_arrays(values, b)
        y1[:, k] = np.asarray(ctx.f(u), dtype=float) @ ctx.w
        y2[:, k] = np.diff(r, axis=-1, prepend=0.0) @ ctx.disc
    return {"pp_y1": y1, "pp_y2": y2}


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------


def estimate_rho(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    b: float,
    cfg: SimConfig,
    method: str = "time_integral",
    n_workers: int = 1,
) -> EstimateWithError:
    """Estimate rho(b), the discounted integral of f'_+ along U^b from b.

    ``time_integral`` reflects paths at 0 and integrates f'_+(U^0 + b);
    ``exp_clock`` averages q^{-1} f'_+(sup_{s<=e_q} X_s + b).  No
    admissibility is required to evaluate rho.
    """
    cfg.validate_for(problem.q)
    anti = cfg.antithetic and not (
        triplet.jumps.rate > 0 and not triplet.jumps.is_symmetric
    )
    if method == "time_integral":
        ctx = _RhoCtx(
            b_values=(float(b),),
            f_prime=problem.cost.f_prime_plus,
            w=integral_weights(problem.q, cfg.dt, cfg.n_steps + 1),
        )
        out = map_reduce_paths(triplet, 0.0, cfg, _rho_chunk, ctx, n_workers=n_workers)
        return _finish("rho_time_integral", out["pp_y"][:, 0], anti, triplet, problem, cfg, b=b)
    if method == "exp_clock":
        sups, rejection = sample_sup_at_exp_time(triplet, cfg, problem.q)
        y = np.asarray(problem.cost.f_prime_plus(sups + b), dtype=float) / problem.q
        return _finish(
            "rho_exp_clock", y, anti, triplet, problem, cfg, rejection_rate=rejection, b=b
        )
    raise ValueError(f"unknown rho method {method!r}")


def estimate_value(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    b: float,
    x: float,
    cfg: SimConfig,
    crn_batch: PathBatch | None = None,
    n_workers: int = 1,
):
    """Estimate (v1, v2, v) of the barrier strategy at barrier b from x.

    v1 is the discounted running cost of f(U^b), v2 the discounted control
    Stieltjes integral, and v = v1 + C v2 with the variance taken on the
    pathwise sum.  When ``crn_batch`` is given its paths are reused shifted
    to start at x (spatial homogeneity), enabling common random numbers.
    """
    cfg.validate_for(problem.q)
    ctx = _ValueCtx(
        b_values=(float(b),),
        f=problem.cost.f,
        w=integral_weights(problem.q, cfg.dt, cfg.n_steps + 1),
        disc=discount_factors(problem.q, cfg.dt, cfg.n_steps + 1),
    )
    if crn_batch is not None:
        values = crn_batch.values + (x - crn_batch.x_start)
        out = _value_chunk(values, ctx)
        anti = crn_batch.antithetic
    else:
        out = map_reduce_paths(triplet, x, cfg, _value_chunk, ctx, n_workers=n_workers)
        anti = cfg.antithetic and not (
            triplet.jumps.rate > 0 and not triplet.jumps.is_symmetric
        )
    y1 = out["pp_y1"][:, 0]
    y2 = out["pp_y2"][:, 0]
    v1 = _finish("value_running", y1, anti, triplet, problem, cfg, b=b, x=x)
    v2 = _finish("value_control", y2, anti, triplet, problem, cfg, b=b, x=x)
    v = _finish("value_total", y1 + problem.C * y2, anti, triplet, problem, cfg, b=b, x=x)
    return v1, v2, v


def estimate_rho_curve(
    triplet: LevyTriplet,
    problem: ProblemSpec,
    b_grid,
    cfg: SimConfig,
    n_workers: int = 1,
) -> list[tuple[float, EstimateWithError]]:
    """rho-hat on a sorted barrier grid from ONE shared batch of U^0 paths.

    Because f'_+ is nondecreasing and every barrier sees identical paths and
    identical summation order, the returned means are nondecreasing in b
    exactly, not just statistically.
    """
    b_grid = [float(b) for b in b_grid]
    if any(b2 <= b1 for b1, b2 in zip(b_grid, b_grid[1:])):
        raise ValueError("b_grid must be sorted strictly increasing")
    cfg.validate_for(problem.q)
    anti = cfg.antithetic and not (
        triplet.jumps.rate > 0 and not triplet.jumps.is_symmetric
    )
    ctx = _RhoCtx(
        b_values=tuple(b_grid),
        f_prime=problem.cost.f_prime_plus,
        w=integral_weights(problem.q, cfg.dt, cfg.n_steps + 1),
    )
    out = map_reduce_paths(triplet, 0.0, cfg, _rho_chunk, ctx, n_workers=n_workers)
    return [
        (b, _finish("rho_time_integral", out["pp_y"][:, k], anti, triplet, problem, cfg, b=b))
        for k, b in enumerate(b_grid)
    ]


def estimate_record(kind: str, est: EstimateWithError, b=None, x=None) -> dict:
    """JSON-ready record {kind, b, x, mean, stderr, n, fingerprint}."""
    return {
        "kind": kind,
        "b": b,
        "x": x,
        "mean": est.mean,
        "stderr": est.stderr,
        "n": est.n,
        "fingerprint": est.fingerprint,
    }
