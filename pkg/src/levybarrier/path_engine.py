"""Discretized path simulation, reflection, and discounted functionals.

Paths are generated on the grid 0, dt, 2dt, ..., n_steps*dt.  Every path
owns an independent random stream derived from (master_seed, path index)
through ``numpy.random.SeedSequence`` spawn keys, so re-simulating any path
reproduces it bit-for-bit regardless of batch size, chunking, or worker
count.  Per path the draw order is fixed: Gaussian increments first (when
sigma > 0), then Poisson jump counts per cell, then jump sizes; the
supremum sampler draws its exponential clock before everything else.

Large runs never materialize the full (paths x grid) matrix: estimators
stream chunks of paths through reducer callbacks via ``map_reduce_paths``,
whose merge order is fixed by chunk index so results do not depend on the
worker count.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .levy_model import LevyTriplet

__all__ = [
    "SimConfig",
    "PathBatch",
    "ReflectedPath",
    "NEVER",
    "simulate_batch",
    "reflect",
    "reflect_arrays",
    "discounted_integral",
    "discounted_stieltjes",
    "sample_sup_at_exp_time",
    "map_reduce_paths",
    "horizon_for",
    "integral_weights",
    "discount_factors",
]

NEVER = -1  # sentinel tau index: the path never went strictly below the barrier

CHUNK_TARGET_FLOATS = 2**23  # ~64 MB of float64 per streamed chunk


def horizon_for(q: float, tail_tol: float = 1e-4, dt: float | None = None) -> float:
    """Smallest horizon T with exp(-q T) <= tail_tol, grid-aligned if dt given."""
    t = math.log(1.0 / tail_tol) / q
    if dt is not None:
        t = math.ceil(t / dt - 1e-12) * dt
    return t


@dataclass(frozen=True)
class SimConfig:
    """Discretization grid, path count and seeding for one simulation run."""

    dt: float
    horizon_T: float
    n_paths: int
    master_seed: int
    antithetic: bool = False
    tail_tol: float = 1e-4

    def __post_init__(self):
        if self.dt <= 0 or self.horizon_T <= 0:
            raise ValueError("dt and horizon_T must be positive")
        if self.dt > self.horizon_T:
            raise ValueError("dt must not exceed horizon_T")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not (0 < self.tail_tol < 1):
            raise ValueError("tail_tol must lie in (0, 1)")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon_T / self.dt)))

    @property
    def effective_horizon(self) -> float:
        return self.n_steps * self.dt

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def validate_for(self, q: float) -> None:
        """The discounted tail beyond the horizon must be below tail_tol."""
        tail = math.exp(-q * self.effective_horizon)
        if tail > self.tail_tol * (1 + 1e-9):
            raise ValueError(
                f"horizon too short: exp(-q*T) = {tail:.3g} exceeds tail_tol {self.tail_tol:.3g}"
            )

    def describe(self) -> dict:
        return {
            "dt": self.dt,
            "horizon_T": self.horizon_T,
            "n_paths": self.n_paths,
            "master_seed": self.master_seed,
            "antithetic": self.antithetic,
            "tail_tol": self.tail_tol,
        }


@dataclass
class PathBatch:
    """Materialized sample paths with per-path stream provenance."""

    grid: np.ndarray
    values: np.ndarray
    x_start: float
    jump_marks: list
    seeds: tuple
    antithetic: bool = False

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def dump_csv(self, path) -> None:
        """Columnar debug dump with header ``path,t,x``."""
        with open(path, "w") as fh:
            fh.write("path,t,x\n")
            for p in range(self.n_paths):
                for t, x in zip(self.grid, self.values[p]):
                    fh.write(f"{p},{t!r},{x!r}\n")


@dataclass
class ReflectedPath:
    """Reflected process, control, and first-passage indices for a batch.

    Row p holds path p: u_values = X + R with
    R_t = -min(0, min_{s<=t}(X_s - b)), and tau_minus_index the first grid
    index with X strictly below b (NEVER if no such index).
    """

    u_values: np.ndarray
    r_values: np.ndarray
    tau_minus_index: np.ndarray


# ---------------------------------------------------------------------------
# per-path generation
# ---------------------------------------------------------------------------


def _path_rng(master_seed: int, stream_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_index,))
    return np.random.Generator(np.random.PCG64DXSM(seq))


def _antithetic_active(triplet: LevyTriplet, cfg: SimConfig) -> bool:
    if not cfg.antithetic:
        return False
    if triplet.jumps.rate > 0 and not triplet.jumps.is_symmetric:
        warnings.warn(
            "antithetic ignored: jump law is not symmetric, mirroring would bias it",
            stacklevel=3,
        )
        return False
    if cfg.n_paths % 2 != 0:
        raise ValueError("antithetic sampling needs an even n_paths")
    return True


def _path_increments(triplet, cfg, rng, mirror, collect_marks=False):
    n_steps = cfg.n_steps
    incr = np.full(n_steps, triplet.effective_drift * cfg.dt)
    if triplet.sigma > 0:
        z = rng.standard_normal(n_steps)
        if mirror:
            np.negative(z, out=z)
        incr += (triplet.sigma * math.sqrt(cfg.dt)) * z
    marks = [] if collect_marks else None
    rate = triplet.jumps.rate
    if rate > 0:
        counts = rng.poisson(rate * cfg.dt, n_steps)
        total = int(counts.sum())
        if total:
            sizes = triplet.jumps.sample(rng, total)
            if mirror:
                np.negative(sizes, out=sizes)
            cells = np.repeat(np.arange(n_steps), counts)
            np.add.at(incr, cells, sizes)
            if collect_marks:
                # jumps are booked at the right endpoint of their grid cell
                marks = list(zip((cells + 1).tolist(), sizes.tolist()))
    return incr, marks


def _simulate_chunk(triplet, x_start, cfg, lo, hi, collect_marks=False):
    """Values (hi-lo, n_steps+1) for paths lo..hi-1, plus jump marks if asked."""
    n_steps = cfg.n_steps
    n = hi - lo
    anti = _antithetic_active(triplet, cfg)
    half = cfg.n_paths // 2
    values = np.empty((n, n_steps + 1))
    values[:, 0] = x_start
    marks_all = [] if collect_marks else None
    for j, p in enumerate(range(lo, hi)):
        mirror = anti and p >= half
        stream = p - half if mirror else p
        rng = _path_rng(cfg.master_seed, stream)
        incr, marks = _path_increments(triplet, cfg, rng, mirror, collect_marks)
        np.cumsum(incr, out=values[j, 1:])
        values[j, 1:] += x_start
        if collect_marks:
            marks_all.append(marks)
    return values, marks_all


def simulate_batch(triplet: LevyTriplet, x_start: float, cfg: SimConfig) -> PathBatch:
    """Materialize a full batch of paths (moderate sizes only).

    Deterministic given (master_seed, path index); see the module docstring
    for the draw-order contract.  For large n_paths x grid products use the
    streaming estimators instead.
    """
    n_grid = cfg.n_steps + 1
    if cfg.n_paths * n_grid > 2**27:
        raise ValueError(
            "batch of %d paths x %d grid points is too large to materialize; "
            "use the streaming estimators" % (cfg.n_paths, n_grid)
        )
    values, marks = _simulate_chunk(triplet, x_start, cfg, 0, cfg.n_paths, collect_marks=True)
    seeds = tuple((cfg.master_seed, p) for p in range(cfg.n_paths))
    return PathBatch(
        grid=cfg.times(),
        values=values,
        x_start=x_start,
        jump_marks=marks,
        seeds=seeds,
        antithetic=_antithetic_active(triplet, cfg),
    )


# ---------------------------------------------------------------------------
# reflection and discounted functionals
# ---------------------------------------------------------------------------


def reflect_arrays(values: np.ndarray, b: float):
    """(u, r, tau_idx) for the lower-barrier reflection of each row.

    One forward pass: r = max(b - running_min, 0), u = values + r; tau_idx is
    the first index with the raw path strictly below b, NEVER otherwise.
    """
    running_min = np.minimum.accumulate(values, axis=-1)
    r = np.maximum(b - running_min, 0.0)
    u = values + r
    below = values < b
    any_below = below.any(axis=-1)
    tau = np.where(any_below, below.argmax(axis=-1), NEVER)
    return u, r, tau


def reflect(batch: PathBatch, b: float) -> ReflectedPath:
    u, r, tau = reflect_arrays(batch.values, b)
    return ReflectedPath(u_values=u, r_values=r, tau_minus_index=tau)


def integral_weights(q: float, dt: float, n_grid: int) -> np.ndarray:
    """Left-endpoint weights e^{-q t_i} dt; the final grid point gets 0."""
    w = np.exp(-q * dt * np.arange(n_grid)) * dt
    w[-1] = 0.0
    return w


def discount_factors(q: float, dt: float, n_grid: int) -> np.ndarray:
    return np.exp(-q * dt * np.arange(n_grid))


def discounted_integral(values: np.ndarray, q: float, dt: float) -> np.ndarray | float:
    """Left-endpoint rule for int_0^T e^{-qt} g(t) dt along the last axis."""
    values = np.asarray(values, dtype=float)
    w = integral_weights(q, dt, values.shape[-1])
    return values @ w


def discounted_stieltjes(r_values: np.ndarray, q: float, dt: float) -> np.ndarray | float:
    """Sum of e^{-q t_i} (R_i - R_{i-1}) with R_{-1} := 0.

    The initial value R_0 is charged undiscounted at t = 0.
    """
    r_values = np.asarray(r_values, dtype=float)
    disc = discount_factors(q, dt, r_values.shape[-1])
    increments = np.diff(r_values, axis=-1, prepend=0.0)
    return increments @ disc


# ---------------------------------------------------------------------------
# supremum at an independent exponential clock
# ---------------------------------------------------------------------------


def _sup_range(triplet, cfg, q, x_start, lo, hi):
    anti = _antithetic_active(triplet, cfg)
    half = cfg.n_paths // 2
    sups = np.empty(hi - lo)
    rejected = 0
    for j, p in enumerate(range(lo, hi)):
        mirror = anti and p >= half
        stream = p - half if mirror else p
        rng = _path_rng(cfg.master_seed, stream)
        e = rng.exponential(1.0 / q)
        tries = 0
        while e > cfg.effective_horizon:
            # censoring would bias the supremum down, so reject and redraw
            e = rng.exponential(1.0 / q)
            rejected += 1
            tries += 1
            if tries > 100000:
                raise RuntimeError("exponential clock rejection did not terminate")
        n_i = int(e / cfg.dt)
        if n_i == 0:
            sups[j] = x_start
            continue
        sub = replace(cfg, horizon_T=n_i * cfg.dt)
        incr, _ = _path_increments(triplet, sub, rng, mirror)
        sups[j] = x_start + max(0.0, float(np.max(np.cumsum(incr))))
    return sups, rejected


def sample_sup_at_exp_time(triplet: LevyTriplet, cfg: SimConfig, q: float, x_start: float = 0.0):
    """Running supremum of X over [0, e_q] per path, e_q ~ Exponential(q).

    Clock draws above the horizon are rejected and redrawn; returns
    (sups, rejection_rate).  The supremum is taken over grid points <= e_q.
    """
    cfg.validate_for(q)
    sups, rejected = _sup_range(triplet, cfg, q, x_start, 0, cfg.n_paths)
    return sups, rejected / (cfg.n_paths + rejected)


# ---------------------------------------------------------------------------
# streaming map/reduce over path chunks
# ---------------------------------------------------------------------------


def _chunk_plan(n_paths: int, n_grid: int, target: int) -> list[tuple[int, int]]:
    size = max(1, min(n_paths, target // max(1, n_grid)))
    return [(lo, min(lo + size, n_paths)) for lo in range(0, n_paths, size)]


def _process_chunk(triplet, x_start, cfg, lo, hi, chunk_fn, ctx):
    values, _ = _simulate_chunk(triplet, x_start, cfg, lo, hi)
    return chunk_fn(values, ctx)


def _merge(partials: list[dict]) -> dict:
    """Merge chunk partials in chunk order (fixed float summation order)."""
    out: dict = {}
    for part in partials:
        for key, val in part.items():
            if key.startswith("pp_"):
                out.setdefault(key, []).append(val)
            elif key.startswith("acc_"):
                if key not in out:
                    out[key] = np.array(val, dtype=float, copy=True)
                else:
                    a, b = out[key], np.asarray(val, dtype=float)
                    if b.shape[-1] > a.shape[-1]:
                        a = np.pad(a, (0, b.shape[-1] - a.shape[-1]))
                    elif a.shape[-1] > b.shape[-1]:
                        b = np.pad(b, (0, a.shape[-1] - b.shape[-1]))
                    out[key] = a + b
            elif key.startswith("sum_"):
                out[key] = out.get(key, 0.0) + val
            else:
                raise KeyError(f"chunk partial key {key!r} has no merge rule")
    for key, val in out.items():
        if key.startswith("pp_"):
            out[key] = np.concatenate(val, axis=0)
    return out


def map_reduce_paths(
    triplet: LevyTriplet,
    x_start: float,
    cfg: SimConfig,
    chunk_fn: Callable,
    ctx,
    n_workers: int = 1,
    chunk_target: int = CHUNK_TARGET_FLOATS,
) -> dict:
    """Stream simulated path chunks through ``chunk_fn`` and merge partials.

    ``chunk_fn(values, ctx)`` receives the (chunk_paths, n_grid) value matrix
    and returns a dict whose keys select the merge rule: ``pp_*`` per-path
    rows (concatenated in path order), ``acc_*`` accumulator arrays (summed,
    right-padded to the longest), ``sum_*`` scalars.  The chunk plan depends
    only on (n_paths, n_grid), so results are identical for any worker count.

    Pure-drift models collapse to a single representative path whose partials
    are expanded law-exactly (identical rows, accumulators scaled by the path
    count); stderr over paths is exactly zero there, as it should be.
    """
    if triplet.is_deterministic:
        values, _ = _simulate_chunk(triplet, x_start, cfg, 0, 1)
        part = chunk_fn(values, ctx)
        out = {}
        for key, val in part.items():
            if key.startswith("pp_"):
                out[key] = np.repeat(np.asarray(val), cfg.n_paths, axis=0)
            elif key.startswith("acc_"):
                out[key] = np.asarray(val, dtype=float) * cfg.n_paths
            elif key.startswith("sum_"):
                out[key] = val * cfg.n_paths
            else:
                raise KeyError(f"chunk partial key {key!r} has no merge rule")
        return out

    plan = _chunk_plan(cfg.n_paths, cfg.n_steps + 1, chunk_target)
    if n_workers <= 1 or len(plan) == 1:
        partials = [
            _process_chunk(triplet, x_start, cfg, lo, hi, chunk_fn, ctx) for lo, hi in plan
        ]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as ex:
            futures = [
                ex.submit(_process_chunk, triplet, x_start, cfg, lo, hi, chunk_fn, ctx)
                for lo, hi in plan
            ]
            partials = [f.result() for f in futures]
    return _merge(partials)
