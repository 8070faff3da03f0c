"""Convex running costs, control cost, discounting, and cost smoothing.

A cost is carried around as a :class:`CostSpec`: the function itself, its
one-sided derivatives, a polynomial growth certificate ``|f| <= k1+k2|x|^N``,
and the derivative limits at -inf/+inf.  All evaluation callables must accept
scalars and numpy arrays and be pure; the builtin families are implemented as
small picklable classes so costs can cross process boundaries.

``mollify`` produces the double-averaged smoothing of a convex cost: its
derivative is the average of f'_+ over x + y + z with y, z independent
uniforms on (-eps, 0), equivalently a triangular kernel on [x - 2 eps, x].
It is evaluated in closed form for the builtin families and by quadrature
otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import AssumptionViolated, NonConvexSpec

__all__ = ["CostSpec", "ProblemSpec", "builtin_cost", "mollify"]

NEG_INF = float("-inf")
POS_INF = float("inf")


@dataclass(frozen=True)
class CostSpec:
    """Convex running cost with one-sided derivatives and a growth bound."""

    f: Callable
    f_prime_plus: Callable
    f_prime_minus: Callable
    growth_k1: float
    growth_k2: float
    growth_degree: int
    f_prime_limits: tuple[float, float]
    descriptor: tuple = ("custom",)
    f_double_prime: Callable | None = None

    def validate(self, grid=None) -> None:
        """Spot-check convexity, derivative consistency and the growth bound.

        Raises NonConvexSpec / ValueError on violation.  The finite-difference
        check uses tol = 1e-6 * (1 + |f'_+|), a relative tolerance that
        survives large slopes.
        """
        if grid is None:
            grid = np.linspace(-20.0, 20.0, 41)
        grid = np.asarray(grid, dtype=float)
        fp = np.asarray(self.f_prime_plus(grid), dtype=float)
        fm = np.asarray(self.f_prime_minus(grid), dtype=float)
        if np.any(fm > fp + 1e-12 * (1 + np.abs(fp))):
            raise NonConvexSpec("left derivative exceeds right derivative")
        if np.any(np.diff(fp) < -1e-12 * (1 + np.abs(fp[:-1]))) or np.any(
            np.diff(fm) < -1e-12 * (1 + np.abs(fm[:-1]))
        ):
            raise NonConvexSpec("one-sided derivatives must be nondecreasing")
        h = 1e-6
        fd = (np.asarray(self.f(grid + h)) - np.asarray(self.f(grid))) / h
        tol = 1e-6 * (1.0 + np.abs(fp))
        hi = np.asarray(self.f_prime_plus(grid + h), dtype=float)
        if np.any(fd < fp - tol) or np.any(fd > hi + tol):
            raise ValueError("finite differences inconsistent with declared f'_+")
        bound = self.growth_k1 + self.growth_k2 * np.abs(grid) ** self.growth_degree
        if np.any(np.abs(np.asarray(self.f(grid))) > bound * (1 + 1e-9) + 1e-9):
            raise ValueError("growth certificate (k1, k2, N) does not bound |f| on the grid")

    def describe(self) -> dict:
        return {
            "descriptor": list(self.descriptor),
            "growth": [self.growth_k1, self.growth_k2, self.growth_degree],
        }


@dataclass(frozen=True)
class ProblemSpec:
    """Running cost together with the unit control cost C and discount q."""

    cost: CostSpec
    C: float
    q: float

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("discount q must be positive")

    def is_admissible(self) -> bool:
        """f'_+(-inf) < -C q < f'_+(inf): the barrier problem is nontrivial."""
        lo, hi = self.cost.f_prime_limits
        return lo < -self.C * self.q < hi

    def require_admissible(self) -> None:
        if not self.is_admissible():
            lo, hi = self.cost.f_prime_limits
            raise AssumptionViolated(
                f"need f'_+(-inf) < -C*q < f'_+(inf); got {lo} < {-self.C * self.q} < {hi}"
            )

    def describe(self) -> dict:
        return {"cost": self.cost.describe(), "C": self.C, "q": self.q}


# ---------------------------------------------------------------------------
# builtin families (picklable callables)
# ---------------------------------------------------------------------------


class _Quadratic:
    def __call__(self, x):
        return np.square(x)


class _QuadraticSlope:
    def __call__(self, x):
        return 2.0 * np.asarray(x, dtype=float)


class _Quartic:
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return x**4


class _QuarticSlope:
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 4.0 * x**3


class _PiecewiseLinear:
    """Convex piecewise-linear function anchored at f(first kink) = value."""

    def __init__(self, slopes, kinks, anchor_value=0.0):
        self.slopes = np.asarray(slopes, dtype=float)
        self.kinks = np.asarray(kinks, dtype=float)
        # value at each kink, integrating slopes from the first kink
        vals = [anchor_value]
        for j in range(1, len(self.kinks)):
            vals.append(vals[-1] + self.slopes[j] * (self.kinks[j] - self.kinks[j - 1]))
        self.kink_values = np.asarray(vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.kinks, x, side="right")  # segment index
        idx_k = np.clip(idx, 1, len(self.kinks)) - 1
        base = self.kink_values[idx_k]
        slope = self.slopes[np.clip(idx, 0, len(self.slopes) - 1)]
        return base + slope * (x - self.kinks[idx_k])


class _PiecewiseLinearSlope:
    def __init__(self, slopes, kinks, side):
        self.slopes = np.asarray(slopes, dtype=float)
        self.kinks = np.asarray(kinks, dtype=float)
        self.side = side  # "right" -> f'_+, "left" -> f'_-

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.kinks, x, side="right" if self.side == "right" else "left")
        return self.slopes[np.clip(idx, 0, len(self.slopes) - 1)]


def builtin_cost(kind: str, **params) -> CostSpec:
    """Construct one of the builtin convex cost families.

    kind: "quadratic" (x^2), "abs" (|x|), "quartic" (x^4) or
    "piecewise_linear" with params slopes (len k+1) and kinks (len k).
    Kinks produce genuinely different one-sided derivatives.
    """
    if kind == "quadratic":
        spec = CostSpec(
            f=_Quadratic(),
            f_prime_plus=_QuadraticSlope(),
            f_prime_minus=_QuadraticSlope(),
            growth_k1=0.0,
            growth_k2=1.0,
            growth_degree=2,
            f_prime_limits=(NEG_INF, POS_INF),
            descriptor=("quadratic",),
        )
    elif kind == "quartic":
        spec = CostSpec(
            f=_Quartic(),
            f_prime_plus=_QuarticSlope(),
            f_prime_minus=_QuarticSlope(),
            growth_k1=0.0,
            growth_k2=1.0,
            growth_degree=4,
            f_prime_limits=(NEG_INF, POS_INF),
            descriptor=("quartic",),
        )
    elif kind == "abs":
        return builtin_cost("piecewise_linear", slopes=(-1.0, 1.0), kinks=(0.0,))
    elif kind == "piecewise_linear":
        slopes = tuple(float(s) for s in params["slopes"])
        kinks = tuple(float(k) for k in params["kinks"])
        if len(slopes) != len(kinks) + 1:
            raise ValueError("piecewise_linear needs len(slopes) == len(kinks) + 1")
        if any(s2 < s1 for s1, s2 in zip(slopes, slopes[1:])):
            raise NonConvexSpec("piecewise slopes must be nondecreasing")
        if any(k2 <= k1 for k1, k2 in zip(kinks, kinks[1:])):
            raise ValueError("kinks must be strictly increasing")
        pwl = _PiecewiseLinear(slopes, kinks)
        k1_cert = float(np.max(np.abs(pwl.kink_values)) + np.max(np.abs(kinks)) * np.max(np.abs(slopes)))
        spec = CostSpec(
            f=pwl,
            f_prime_plus=_PiecewiseLinearSlope(slopes, kinks, "right"),
            f_prime_minus=_PiecewiseLinearSlope(slopes, kinks, "left"),
            growth_k1=k1_cert,
            growth_k2=float(np.max(np.abs(slopes))),
            growth_degree=1,
            f_prime_limits=(slopes[0], slopes[-1]),
            descriptor=("piecewise_linear", slopes, kinks),
        )
    else:
        raise ValueError(f"unknown builtin cost kind {kind!r}")
    spec.validate()
    return spec


# ---------------------------------------------------------------------------
# mollification
# ---------------------------------------------------------------------------


def _triangle_cdf(u, eps):
    """CDF of the kernel S = Y + Z, Y, Z iid uniform(-eps, 0); support [-2eps, 0]."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    left = (u > -2 * eps) & (u <= -eps)
    right = (u > -eps) & (u < 0.0)
    out[left] = (u[left] + 2 * eps) ** 2 / (2 * eps**2)
    out[right] = 1.0 - u[right] ** 2 / (2 * eps**2)
    out[u >= 0.0] = 1.0
    return out


class _MollifiedDerivative:
    """Derivative of the smoothed cost: triangular-kernel average of f'_+."""

    def __init__(self, base: CostSpec, eps: float):
        self.base = base
        self.eps = eps
        self.kind = base.descriptor[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        eps = self.eps
        if self.kind == "quadratic":
            return 2.0 * (x - eps)
        if self.kind == "quartic":
            # E[(x+S)^3] with S triangular: mean -eps, variance eps^2/6, zero skew
            c = x - eps
            return 4.0 * (c**3 + 0.5 * c * eps**2)
        if self.kind == "piecewise_linear":
            slopes = np.asarray(self.base.descriptor[1])
            kinks = np.asarray(self.base.descriptor[2])
            # integrate the piecewise-constant slope against the kernel CDF
            edges = np.concatenate(([-np.inf], kinks, [np.inf]))
            out = np.zeros_like(x)
            for j, s in enumerate(slopes):
                hi = np.where(np.isinf(edges[j + 1]), 1.0, _triangle_cdf(edges[j + 1] - x, eps))
                lo = np.where(np.isinf(edges[j]), 0.0, _triangle_cdf(edges[j] - x, eps))
                out += s * (hi - lo)
            return out
        return self._quad(x)

    def _quad(self, x):
        f = self.base.f
        eps = self.eps

        def one(xx):
            val, _ = integrate.quad(
                lambda z: float(f(xx + z)) - float(f(xx + z - eps)), -eps, 0.0, limit=200
            )
            return val / eps**2

        return np.vectorize(one)(x)


class _MollifiedSecond:
    """Exact second derivative of the smoothed cost from base values."""

    def __init__(self, base_f, eps):
        self.base_f = base_f
        self.eps = eps

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        e = self.eps
        return (
            np.asarray(self.base_f(x))
            - 2.0 * np.asarray(self.base_f(x - e))
            + np.asarray(self.base_f(x - 2 * e))
        ) / e**2


class _MollifiedValue:
    """Smoothed cost anchored so that the value agrees with f at the anchor."""

    def __init__(self, base: CostSpec, deriv: _MollifiedDerivative, eps: float, anchor: float):
        self.base = base
        self.deriv = deriv
        self.eps = eps
        self.anchor = anchor

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        anchor_val = float(self.base.f(self.anchor))
        pts = None
        if self.base.descriptor[0] == "piecewise_linear":
            kinks = np.asarray(self.base.descriptor[2])
            pts = np.unique(np.concatenate([kinks, kinks + self.eps, kinks + 2 * self.eps]))

        def one(xx):
            lo, hi = sorted((self.anchor, xx))
            inner = [] if pts is None else [p for p in pts if lo < p < hi]
            val, _ = integrate.quad(
                lambda y: float(self.deriv(y)), self.anchor, xx, points=inner or None, limit=200
            )
            return anchor_val + val

        return np.vectorize(one)(x) if x.ndim else float(one(float(x)))


def mollify(cost: CostSpec, epsilon: float, b_star_anchor: float = 0.0) -> CostSpec:
    """Smooth a convex cost into a C^2 convex cost with the same tail slopes.

    The derivative is the double average of f'_+ over the square
    (-epsilon, 0)^2 shifted to x, so it lies between f'_-(x - 2 epsilon) and
    f'_-(x) and increases pointwise toward f'_- as epsilon decreases.  The
    anchor only fixes the additive constant (value equality at the anchor);
    derivatives and hence the optimal barrier do not depend on it.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    deriv = _MollifiedDerivative(cost, epsilon)
    value = _MollifiedValue(cost, deriv, epsilon, b_star_anchor)
    # |f_eps| <= |f| + |f(a) - f(a - 2 eps)| + 2 eps sup|slope| style slack,
    # folded into k1 via the growth bound at shifted arguments
    shift = 2.0 * epsilon + abs(b_star_anchor)
    k1 = cost.growth_k1 * 2 + cost.growth_k2 * (2.0 * shift + 1.0) ** cost.growth_degree
    k2 = cost.growth_k2 * 2.0 ** cost.growth_degree
    return CostSpec(
        f=value,
        f_prime_plus=deriv,
        f_prime_minus=deriv,
        growth_k1=float(k1),
        growth_k2=float(k2),
        growth_degree=cost.growth_degree,
        f_prime_limits=cost.f_prime_limits,
        descriptor=("mollified", cost.descriptor, epsilon, b_star_anchor),
        f_double_prime=_MollifiedSecond(cost.f, epsilon),
    )
