"""Starting-point cost ``E_{b,T}(A) = i(A) + (optimal path cost A -> b in time T)``.

For linear diffusions the path cost is the quadratic ``w (A - s)^2``, so a
polynomial rate gives a polynomial profile whose stationary points are found
exactly (closed-form cubic for the quartic family, companion matrix
otherwise).  All other combinations bracket sign changes of ``dE/dA`` on the
grid and polish with Brent's method; ``dE/dA = i'(A) - p0(A)`` where ``p0`` is
the initial momentum of the optimal path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import NoSolutionError, TooFewMinimaError
from .models import BirthDeath, Diffusion, ProcessModel, SpinFlip
from .rates import (
    OscillatoryIntegral,
    Quartic,
    RateFunction,
    TiltedQuartic,
    UNBOUNDED_BELOW,
    _real_roots,
    curvature_lower_bound,
    minima_of_i,
)
from .trajectories import closed_form_endpoint, has_closed_form, shoot_bvp

__all__ = [
    "StationaryPoint",
    "CostProfile",
    "ConditionalLimitPrediction",
    "linear_path_weights",
    "path_cost",
    "path_cost_closed_form",
    "cost_value",
    "cost_slope",
    "solve_cubic",
    "build_profile",
    "equal_height_gap",
    "predict_conditional_limit",
    "short_time_uniqueness_bound",
    "profile_report",
    "TIE_TOL",
]

TIE_TOL = 1e-9
SYM_TOL = 1e-8
DEFAULT_GRID = 4001
SHOOTING_GRID = 161
SPINFLIP_EDGE = 1e-6


def linear_path_weights(model: Diffusion, b: float, T: float) -> tuple[float, float]:
    """``(w, s)`` with optimal path cost ``w (A - s)^2`` for drift ``c - kappa x``."""
    kappa, c = model.linear_coeffs()
    if kappa == 0.0:
        return 1.0 / (2.0 * T), b - c * T
    m = c / kappa
    w = kappa * math.exp(-2.0 * kappa * T) / -math.expm1(-2.0 * kappa * T)
    return w, (b - m) * math.exp(kappa * T) + m


def _is_linear(model: ProcessModel) -> bool:
    return isinstance(model, Diffusion) and model.linear_coeffs() is not None


def path_cost(model: ProcessModel, A, b: float, T: float, **shoot_kw):
    """Optimal path cost and its slope ``d cost / dA`` (= ``-p0``), vectorised in ``A``."""
    A = np.asarray(A, dtype=float)
    if _is_linear(model):
        w, s = linear_path_weights(model, b, T)
        return w * (A - s) ** 2, 2.0 * w * (A - s)
    if isinstance(model, BirthDeath) and model.constant_rates and not isinstance(model, SpinFlip):
        v = (b - A) / T
        p = model.legendre_momentum(A, v)
        return T * model.lagrangian(A, v), -p
    cost = np.full(A.shape, np.nan)
    slope = np.full(A.shape, np.nan)
    flat_c, flat_s = cost.reshape(-1), slope.reshape(-1)
    for k, a in enumerate(A.reshape(-1)):
        try:
            if isinstance(model, SpinFlip):
                ev, _, action = closed_form_endpoint(model, float(a), b, T)
                flat_c[k], flat_s[k] = action, -float(ev(0.0)[1])
            else:
                best = min(shoot_bvp(model, float(a), b, T, **shoot_kw), key=lambda tr: tr.action)
                flat_c[k], flat_s[k] = best.action, -best.p0
        except NoSolutionError:
            pass
    return cost, slope


def path_cost_closed_form(model: ProcessModel, A: float, b: float, T: float) -> float:
    """Optimal path cost from ``A`` to ``b``; shooting when no closed form exists."""
    cost, _ = path_cost(model, float(A), b, T)
    if not np.isfinite(cost):
        raise NoSolutionError(f"no optimal path from {A} to {b} in time {T} for {model.grammar()}")
    return float(cost)


def cost_value(model, rate, A, b, T):
    return rate.value(A) + path_cost(model, A, b, T)[0]


def cost_slope(model, rate, A, b, T):
    return rate.deriv(A) + path_cost(model, A, b, T)[1]


def solve_cubic(a3: float, a2: float, a1: float, a0: float) -> np.ndarray:
    """Sorted real roots of ``a3 x^3 + a2 x^2 + a1 x + a0`` (``a3 != 0``).

    Depressed-cubic form; the discriminant decides between one real root
    (Cardano) and three (trigonometric).  Each root gets Newton polishing.
    """
    b, c, d = a2 / a3, a1 / a3, a0 / a3
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = -(4.0 * p**3 + 27.0 * q * q)
    scale = max(abs(p) ** 1.5, abs(q), 1e-300)
    if abs(disc) <= 1e-14 * scale * scale:
        if abs(p) <= 1e-300:
            roots = [0.0]
        else:
            roots = [3.0 * q / p, -1.5 * q / p]
    elif disc > 0:
        r = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * r)))
        theta = math.acos(arg) / 3.0
        roots = [r * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    else:
        sq = math.sqrt(q * q / 4.0 + p**3 / 27.0)
        u = np.cbrt(-q / 2.0 + sq)
        v = np.cbrt(-q / 2.0 - sq)
        roots = [float(u + v)]
    out = []
    for t in roots:
        x = t - shift
        for _ in range(4):
            f = ((a3 * x + a2) * x + a1) * x + a0
            df = (3.0 * a3 * x + 2.0 * a2) * x + a1
            if df == 0.0:
                break
            dx = f / df
            x -= dx
            if abs(dx) <= 4e-16 * max(1.0, abs(x)):
                break
        out.append(x)
    return np.array(sorted(out))


@dataclass(frozen=True)
class StationaryPoint:
    A: float
    value: float
    kind: str  # "min", "max" or "saddle"


@dataclass
class CostProfile:
    model: ProcessModel
    rate: RateFunction
    b: float
    T: float
    grid: np.ndarray
    values: np.ndarray
    stationary_points: list[StationaryPoint]
    global_minimizers: list[float]
    alpha: float | None = None
    polynomial: np.ndarray | None = field(default=None, repr=False)

    @property
    def local_minima(self) -> list[StationaryPoint]:
        return [s for s in self.stationary_points if s.kind == "min"]

    def value_at(self, A):
        return cost_value(self.model, self.rate, A, self.b, self.T)


@dataclass(frozen=True)
class ConditionalLimitPrediction:
    kind: str  # "point_mass", "symmetric_pair" or "multi"
    locations: tuple[float, ...]
    weights: tuple[float, ...] | None


def _domain(model: ProcessModel, rate: RateFunction) -> tuple[float, float]:
    lo, hi = model.state_space
    if isinstance(model, SpinFlip):
        lo, hi = lo + SPINFLIP_EDGE, hi - SPINFLIP_EDGE
    if rate.domain is not None:
        lo, hi = max(lo, rate.domain[0]), min(hi, rate.domain[1])
    return lo, hi


def default_range(model: ProcessModel, rate: RateFunction, b: float, T: float) -> tuple[float, float]:
    lo, hi = _domain(model, rate)
    if math.isfinite(lo) and math.isfinite(hi):
        return lo, hi
    if isinstance(rate, (Quartic, TiltedQuartic)):
        half = 3.0 * rate.a + abs(b)
    else:
        poly = rate.polynomial()
        span = 1.0
        if poly is not None:
            span = max([1.0] + [abs(x) for x, _, _ in minima_of_i(rate)])
        half = 3.0 * span + abs(b)
    left, right = -half, half
    if _is_linear(model):
        w, s = linear_path_weights(model, b, T)
        if abs(s) < 1e3:
            left, right = min(left, s - 1.0), max(right, s + 1.0)
    return max(lo, left), min(hi, right)


def _alpha(model, rate, T):
    if isinstance(rate, (Quartic, TiltedQuartic)) and _is_linear(model) and model.linear_coeffs()[0] == 0.0:
        return 1.0 / (2.0 * T) - 2.0 * rate.a**2
    return None


def _classify(second: float, scale: float) -> str:
    if second > 1e-10 * scale:
        return "min"
    if second < -1e-10 * scale:
        return "max"
    return "saddle"


def _global(stationary: list[StationaryPoint], tol: float = TIE_TOL) -> list[float]:
    mins = [s for s in stationary if s.kind == "min"]
    if not mins:
        return []
    best = min(s.value for s in mins)
    return [s.A for s in mins if s.value - best <= tol]


def _polynomial_profile(model, rate, b, T):
    """Ascending coefficients of ``E_{b,T}`` when it is a polynomial in ``A``."""
    poly = rate.polynomial()
    if poly is None or not _is_linear(model):
        return None
    w, s = linear_path_weights(model, b, T)
    quad = np.array([w * s * s, -2.0 * w * s, w])
    return np.polynomial.polynomial.polyadd(poly, quad)


def _stationary_polynomial(model, rate, b, T, coeffs, lo, hi):
    dc = np.polynomial.polynomial.polyder(coeffs)
    if isinstance(rate, (Quartic, TiltedQuartic)):
        # 4A^3 + (2w - 4a^2) A + (t - 2ws) = 0 with t the tilt.
        roots = solve_cubic(dc[3], dc[2], dc[1], dc[0])
        roots = roots[(roots >= lo) & (roots <= hi)]
    else:
        roots = _real_roots(dc, lo, hi)
    d2 = np.polynomial.polynomial.polyder(coeffs, 2)
    scale = max(1.0, float(np.max(np.abs(d2))))
    pts = []
    for r in np.unique(roots):
        value = float(cost_value(model, rate, float(r), b, T))
        kind = _classify(float(np.polynomial.polynomial.polyval(r, d2)), scale)
        pts.append(StationaryPoint(float(r), value, kind))
    return pts


def _refined_grid(lo, hi, n, rate):
    grid = np.linspace(lo, hi, n)
    if isinstance(rate, OscillatoryIntegral):
        # Log-spaced points resolve the oscillation of i' near 0.
        fine = np.logspace(-6, 0, 600)
        extra = np.concatenate([-fine, [0.0], fine])
        grid = np.unique(np.concatenate([grid, extra[(extra >= lo) & (extra <= hi)]]))
    return grid


def _stationary_bracketed(model, rate, b, T, grid, slope):
    def dE(a):
        return float(rate.deriv(a) + path_cost(model, a, b, T)[1])

    pts = []
    finite = np.isfinite(slope)
    for k in range(len(grid)):
        if not finite[k]:
            continue
        if slope[k] == 0.0:
            left = slope[k - 1] if k > 0 and finite[k - 1] else np.nan
            right = slope[k + 1] if k + 1 < len(grid) and finite[k + 1] else np.nan
            root, sl, sr = grid[k], left, right
        elif k + 1 < len(grid) and finite[k + 1] and slope[k] * slope[k + 1] < 0:
            root = optimize.brentq(dE, grid[k], grid[k + 1], xtol=1e-14, rtol=1e-15)
            sl, sr = slope[k], slope[k + 1]
        else:
            continue
        if sl < 0 < sr:
            kind = "min"
        elif sl > 0 > sr:
            kind = "max"
        else:
            kind = "saddle"
        value = float(cost_value(model, rate, float(root), b, T))
        pts.append(StationaryPoint(float(root), value, kind))
    return pts


def build_profile(
    model: ProcessModel,
    rate: RateFunction,
    b: float,
    T: float,
    grid=None,
    grid_size: int | None = None,
) -> CostProfile:
    """Evaluate ``E_{b,T}`` on a grid and locate its stationary points.

    ``grid`` may be an array or a ``(lo, hi)`` pair.  The stationary solve
    is independent of the grid for polynomial profiles; otherwise the grid
    supplies the brackets.
    """
    if grid_size is None:
        grid_size = DEFAULT_GRID if has_closed_form(model) else SHOOTING_GRID
    if grid is None:
        lo, hi = default_range(model, rate, b, T)
        grid = _refined_grid(lo, hi, grid_size, rate)
    elif len(grid) == 2 and np.ndim(grid) == 1 and grid_size:
        lo, hi = float(grid[0]), float(grid[1])
        grid = _refined_grid(lo, hi, grid_size, rate)
    grid = np.asarray(grid, dtype=float)
    lo, hi = float(grid[0]), float(grid[-1])
    cost, slope = path_cost(model, grid, b, T)
    values = rate.value(grid) + cost
    coeffs = _polynomial_profile(model, rate, b, T)
    if coeffs is not None:
        stationary = _stationary_polynomial(model, rate, b, T, coeffs, lo, hi)
    else:
        stationary = _stationary_bracketed(model, rate, b, T, grid, rate.deriv(grid) + slope)
    return CostProfile(
        model=model,
        rate=rate,
        b=float(b),
        T=float(T),
        grid=grid,
        values=values,
        stationary_points=stationary,
        global_minimizers=_global(stationary),
        alpha=_alpha(model, rate, T),
        polynomial=coeffs,
    )


def equal_height_gap(profile: CostProfile) -> float:
    """``D_T(b) = E(A1) - E(A2)`` for the two lowest local minima, ``A1 < A2``."""
    mins = sorted(profile.local_minima, key=lambda s: s.value)
    if len(mins) < 2:
        raise TooFewMinimaError(f"profile at b={profile.b} has {len(mins)} local minimum")
    first, second = sorted(mins[:2], key=lambda s: s.A)
    return first.value - second.value


def predict_conditional_limit(profile: CostProfile) -> ConditionalLimitPrediction:
    locs = tuple(sorted(profile.global_minimizers))
    if len(locs) == 1:
        return ConditionalLimitPrediction("point_mass", locs, (1.0,))
    if len(locs) == 2 and abs(locs[0] + locs[1]) <= SYM_TOL * max(1.0, abs(locs[1])):
        return ConditionalLimitPrediction("symmetric_pair", locs, (0.5, 0.5))
    return ConditionalLimitPrediction("multi", locs, None)


def short_time_uniqueness_bound(rate: RateFunction) -> float | None:
    """``-1/d`` with ``d = inf i''`` when ``d`` is finite and negative."""
    d = curvature_lower_bound(rate)
    if d == UNBOUNDED_BELOW or d >= 0:
        return None
    return -1.0 / d


def profile_report(profile: CostProfile) -> dict:
    pred = predict_conditional_limit(profile)
    return {
        "model": profile.model.grammar(),
        "rate": profile.rate.grammar(),
        "b": profile.b,
        "T": profile.T,
        "alpha": profile.alpha,
        "stationary_points": [
            {"A": s.A, "value": s.value, "kind": s.kind} for s in profile.stationary_points
        ],
        "global_minimizers": list(profile.global_minimizers),
        "prediction": {
            "kind": pred.kind,
            "locations": list(pred.locations),
            "weights": None if pred.weights is None else list(pred.weights),
        },
    }

