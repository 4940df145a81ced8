"""Critical times, bad terminal points and one-sided selection limits.

A terminal value ``b`` is treated as bad when ``E_{b,T}`` has two or more
global minimisers and the unique minimisers at ``b - eps`` and ``b + eps``
converge to different starting points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .costs import (
    _is_linear,
    build_profile,
    equal_height_gap,
    linear_path_weights,
    path_cost,
)
from .errors import TooFewMinimaError, UnsupportedModelError
from .models import (
    Brownian,
    BrownianDrift,
    Diffusion,
    OrnsteinUhlenbeck,
    OUField,
    ProcessModel,
    SpinFlip,
)
from .rates import Quartic, RateFunction, TiltedQuartic

__all__ = [
    "CriticalTime",
    "BadPoint",
    "SelectionProbe",
    "BadPointReport",
    "neutral_terminal_point",
    "critical_time",
    "closed_form_bad_point",
    "bad_scan",
    "selection_limits",
    "apparent_limits",
    "always_bad_check",
    "detect_bad_points",
    "locate_bad_points",
    "report_dict",
]

NONZERO_MIN = 1e-7
SCAN_POINTS = 2001
SCAN_WIDTH = 1e-9
SEPARATION = 1e-3
NEUTRAL_WINDOW = 0.05
DEFAULT_EPSILONS = tuple(10.0**-k for k in range(1, 9))


@dataclass(frozen=True)
class CriticalTime:
    value: float | None
    method: str  # "closed_form" or "bisection"


@dataclass(frozen=True)
class BadPoint:
    b: float
    method: str  # "closed_form" or "scan"
    bracket: tuple[float, float] | None = None
    gaps: tuple[float, float] | None = None


@dataclass(frozen=True)
class SelectionProbe:
    epsilon: float
    left_min: float | None
    right_min: float | None
    flagged: bool = False


@dataclass
class BadPointReport:
    model: ProcessModel
    rate: RateFunction
    T: float
    critical_time: CriticalTime | None
    bad_points: list[BadPoint]
    selection: dict[float, list[SelectionProbe]] = field(default_factory=dict)
    inconclusive: list[tuple[float, float]] = field(default_factory=list)


def neutral_terminal_point(model: ProcessModel, T: float) -> float:
    """Where the zero-energy flow started at 0 sits at time ``T``."""
    if isinstance(model, Diffusion) and model.linear_coeffs() is not None:
        kappa, c = model.linear_coeffs()
        if kappa == 0.0:
            return c * T
        return (c / kappa) * -math.expm1(-kappa * T)
    if isinstance(model, SpinFlip):
        g = model.gamma
        return (g - 1.0) / (g + 1.0) * -math.expm1(-model.delta * T)
    if model.odd:
        return 0.0
    sol = integrate.solve_ivp(
        lambda t, y: np.atleast_1d(model.zero_energy_drift(y[0])),
        (0.0, T),
        [0.0],
        rtol=1e-12,
        atol=1e-14,
    )
    return float(sol.y[0, -1])


def _check_symmetric(model: ProcessModel, rate: RateFunction) -> None:
    if not rate.even:
        raise UnsupportedModelError(
            f"critical time needs an even rate function; {rate.grammar()} is not (use bad_scan)"
        )
    neutral_ok = model.odd or (isinstance(model, Diffusion) and model.linear_coeffs() is not None)
    if not (neutral_ok or isinstance(model, SpinFlip)):
        raise UnsupportedModelError(
            f"critical time needs reflection-symmetric dynamics; {model.grammar()} is not (use bad_scan)"
        )


def _curvature_at_zero(model: ProcessModel, rate: RateFunction, b: float, T: float) -> float:
    if _is_linear(model):
        w, _ = linear_path_weights(model, b, T)
        return float(rate.second_deriv(0.0)) + 2.0 * w
    # Central difference of the exact slope i'(A) - p0(A).
    h = 1e-5
    _, s = path_cost(model, np.array([-h, h]), b, T)
    return float(rate.second_deriv(0.0)) + float(s[1] - s[0]) / (2.0 * h)


def _has_nonzero_minimizer(model, rate, T, scan_size) -> bool:
    b = neutral_terminal_point(model, T)
    if _curvature_at_zero(model, rate, b, T) < 0.0:
        return True
    # A deeper minimum away from 0 signals a first-order transition.
    prof = build_profile(model, rate, b, T, grid_size=scan_size)
    return any(abs(A) > NONZERO_MIN for A in prof.global_minimizers)


def _closed_form_critical(model, rate):
    if not isinstance(rate, Quartic):
        return None
    a2 = rate.a**2
    if isinstance(model, (Brownian, BrownianDrift)):
        return 1.0 / (4.0 * a2)
    if isinstance(model, (OrnsteinUhlenbeck, OUField)):
        k = model.kappa
        return math.log1p(k / (2.0 * a2)) / (2.0 * k)
    return None


def critical_time(
    model: ProcessModel,
    rate: RateFunction,
    method: str = "auto",
    tol: float = 1e-10,
    t_max: float = 1e4,
    scan_size: int = 201,
) -> CriticalTime:
    """Onset time of nonzero global minimisers at the neutral terminal point.

    ``method`` is ``"auto"`` (closed form when known), ``"closed_form"`` or
    ``"bisection"``.  Returns ``CriticalTime(None, ...)`` when no transition
    happens below ``t_max``.
    """
    _check_symmetric(model, rate)
    if method not in ("auto", "closed_form", "bisection"):
        raise ValueError(f"unknown method {method!r}")
    if method != "bisection":
        value = _closed_form_critical(model, rate)
        if value is not None:
            return CriticalTime(value, "closed_form")
        if method == "closed_form":
            raise UnsupportedModelError(f"no closed-form critical time for {model.grammar()} with {rate.grammar()}")

    def bad(T):
        return _has_nonzero_minimizer(model, rate, T, scan_size)

    hi = 1e-3
    while not bad(hi):
        hi *= 2.0
        if hi > t_max:
            return CriticalTime(None, "bisection")
    lo = hi / 2.0
    while bad(lo):
        lo /= 2.0
        if lo < 1e-12:
            return CriticalTime(0.0, "bisection")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if bad(mid):
            hi = mid
        else:
            lo = mid
    return CriticalTime(0.5 * (lo + hi), "bisection")


def closed_form_bad_point(model: ProcessModel, rate: RateFunction, T: float) -> float | None:
    """The bad point predicted by symmetry, or ``None``.

    For an even rate this is the zero-energy flow from 0 at time ``T``;
    the tilted quartic under a linear diffusion is balanced where the
    path-cost centre equals ``1/(2w)``.
    """
    if isinstance(rate, TiltedQuartic):
        if not _is_linear(model):
            return None
        kappa, c = model.linear_coeffs()
        if kappa == 0.0:
            return T + c * T  # s(b) = b - cT and 1/(2w) = T
        w, _ = linear_path_weights(model, 0.0, T)
        m = c / kappa
        return (1.0 / (2.0 * w) - m) * math.exp(-kappa * T) + m
    if not rate.even:
        return None
    if not (model.odd or _is_linear(model) or isinstance(model, SpinFlip)):
        return None
    try:
        tc = critical_time(model, rate)
    except UnsupportedModelError:
        return None
    if tc.value is None or T <= tc.value:
        return None
    return neutral_terminal_point(model, T)


def _gap(model, rate, b, T, grid_size):
    try:
        return equal_height_gap(build_profile(model, rate, b, T, grid_size=grid_size))
    except TooFewMinimaError:
        return None


def bad_scan(
    model: ProcessModel,
    rate: RateFunction,
    T: float,
    b_range: tuple[float, float],
    n_points: int = SCAN_POINTS,
    width: float = SCAN_WIDTH,
    grid_size: int | None = None,
) -> tuple[list[BadPoint], list[tuple[float, float]]]:
    """Sign changes of ``D_T(b)`` over ``b_range``, each bisected to ``width``.

    Returns ``(bad_points, inconclusive_cells)``; a cell is inconclusive
    when the number of local minima drops below two at one end.
    """
    lo, hi = map(float, b_range)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"b_range must be a finite increasing pair, got {b_range!r}")
    bs = np.linspace(lo, hi, n_points)
    gaps = [_gap(model, rate, b, T, grid_size) for b in bs]
    found, inconclusive = [], []
    for k, (b, g) in enumerate(zip(bs, gaps)):
        if g == 0.0:
            found.append(BadPoint(float(b), "scan", (float(b), float(b)), (0.0, 0.0)))
        if k + 1 == len(bs):
            break
        g2 = gaps[k + 1]
        if (g is None) != (g2 is None):
            inconclusive.append((float(b), float(bs[k + 1])))
            continue
        if g is None or g * g2 >= 0.0:
            continue
        a, c, ga, gc = float(b), float(bs[k + 1]), g, g2
        while c - a > width:
            mid = 0.5 * (a + c)
            gm = _gap(model, rate, mid, T, grid_size)
            if gm is None:
                inconclusive.append((a, c))
                break
            if gm == 0.0:
                a = c = mid
                ga = gc = 0.0
                break
            if gm * ga < 0.0:
                c, gc = mid, gm
            else:
                a, ga = mid, gm
        else:
            found.append(BadPoint(0.5 * (a + c), "scan", (a, c), (ga, gc)))
            continue
        if a == c:
            found.append(BadPoint(a, "scan", (a, c), (0.0, 0.0)))
    found.sort(key=lambda p: p.b)
    return found, inconclusive


def _cost_difference(model, rate, A1, A2, b, T):
    """``E(A1) - E(A2)`` without cancelling two nearly equal totals."""
    di = float(rate.value(A1) - rate.value(A2))
    if _is_linear(model):
        w, s = linear_path_weights(model, b, T)
        return di + w * (A1 - A2) * (A1 + A2 - 2.0 * s)
    c = path_cost(model, np.array([A1, A2]), b, T)[0]
    return di + float(c[0] - c[1])


def _unique_minimizer(model, rate, b, T, grid_size):
    """Global minimiser under strict comparison; ``None`` on an exact tie."""
    prof = build_profile(model, rate, b, T, grid_size=grid_size)
    mins = prof.local_minima
    if not mins:
        return None
    best = mins[0]
    tied = False
    for cand in mins[1:]:
        diff = _cost_difference(model, rate, cand.A, best.A, b, T)
        scale = 8.0 * np.finfo(float).eps * max(abs(cand.value), abs(best.value))
        if diff < -scale:
            best, tied = cand, False
        elif abs(diff) <= scale:
            tied = True
    return None if tied else best.A


def selection_limits(
    model: ProcessModel,
    rate: RateFunction,
    b_star: float,
    T: float,
    epsilons=DEFAULT_EPSILONS,
    grid_size: int | None = None,
) -> list[SelectionProbe]:
    """Unique global minimisers at ``b_star -/+ eps`` for a decreasing ``eps`` ladder."""
    eps = [float(e) for e in epsilons]
    if any(e <= 0 for e in eps) or any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
        raise ValueError("epsilons must be positive and strictly decreasing")
    probes = []
    for e in eps:
        left = _unique_minimizer(model, rate, b_star - e, T, grid_size)
        right = _unique_minimizer(model, rate, b_star + e, T, grid_size)
        probes.append(SelectionProbe(e, left, right, flagged=left is None or right is None))
    return probes


def apparent_limits(probes: list[SelectionProbe]) -> tuple[float | None, float | None]:
    """Left and right minimisers at the smallest unflagged ``eps``."""
    for p in reversed(probes):
        if not p.flagged:
            return p.left_min, p.right_min
    return None, None


def always_bad_check(rate: RateFunction, T_list, resolution: float = 1e-6) -> dict[float, str]:
    """Verdict per ``T`` for ``i(A) + A^2/(2T)`` at ``b = 0``: bad, not_bad or inconclusive.

    The grid is logarithmically refined towards 0 down to ``resolution``.
    """
    fine = np.logspace(math.log10(resolution), 0.5, 4000)
    coarse = np.linspace(-5.0, 5.0, 4001)
    grid = np.unique(np.concatenate([-fine, [0.0], fine, coarse]))
    if rate.domain is not None:
        grid = grid[(grid >= rate.domain[0]) & (grid <= rate.domain[1])]
    iv = rate.value(grid)
    out = {}
    for T in T_list:
        vals = iv + grid * grid / (2.0 * T)
        k = int(np.argmin(vals))
        A = grid[k]
        if A == 0.0:
            out[T] = "not_bad"
        elif abs(A) < 10.0 * resolution:
            out[T] = "inconclusive"
        else:
            out[T] = "bad"
    return out


def locate_bad_points(
    model: ProcessModel,
    rate: RateFunction,
    T: float,
    b_range: tuple[float, float] | None = None,
    n_points: int = SCAN_POINTS,
    grid_size: int | None = None,
) -> tuple[list[BadPoint], list[tuple[float, float]]]:
    """Scan ``b_range`` when given, else use the closed form (refined for biased flips)."""
    if b_range is not None:
        return bad_scan(model, rate, T, b_range, n_points=n_points, grid_size=grid_size)
    b_closed = closed_form_bad_point(model, rate, T)
    if b_closed is None:
        return [], []
    if isinstance(model, SpinFlip) and not model.odd:
        # The biased flip is not odd; the neutral point only seeds a local scan.
        window = (b_closed - NEUTRAL_WINDOW, b_closed + NEUTRAL_WINDOW)
        return bad_scan(model, rate, T, window, n_points=5, grid_size=grid_size)
    return [BadPoint(b_closed, "closed_form")], []


def detect_bad_points(
    model: ProcessModel,
    rate: RateFunction,
    T: float,
    b_range: tuple[float, float] | None = None,
    epsilons=DEFAULT_EPSILONS,
    n_points: int = SCAN_POINTS,
    grid_size: int | None = None,
) -> BadPointReport:
    """Closed form where available, a ``D_T`` scan otherwise, plus selection limits."""
    try:
        tc = critical_time(model, rate)
    except UnsupportedModelError:
        tc = None
    bad, inconclusive = locate_bad_points(model, rate, T, b_range, n_points, grid_size)
    selection = {
        p.b: selection_limits(model, rate, p.b, T, epsilons, grid_size=grid_size) for p in bad
    }
    return BadPointReport(model, rate, float(T), tc, bad, selection, inconclusive)


def report_dict(report: BadPointReport) -> dict:
    tc = report.critical_time
    return {
        "model": report.model.grammar(),
        "rate": report.rate.grammar(),
        "T": report.T,
        "critical_time": None if tc is None else {"value": tc.value, "method": tc.method},
        "bad_points": [
            {
                "b": p.b,
                "method": p.method,
                "bracket": None if p.bracket is None else list(p.bracket),
            }
            for p in report.bad_points
        ],
        "selection": [
            {"b": b, "epsilon": s.epsilon, "left_min": s.left_min, "right_min": s.right_min, "flagged": s.flagged}
            for b, probes in report.selection.items()
            for s in probes
        ],
        "inconclusive": [list(c) for c in report.inconclusive],
    }

