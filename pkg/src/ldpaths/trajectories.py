"""Optimal conditioned trajectories: closed-form extremals, Hamilton flow, shooting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, NoSolutionError, UnsupportedModelError
from .models import BirthDeath, Diffusion, ProcessModel, SpinFlip
from .rates import RateFunction

__all__ = [
    "Trajectory",
    "el_closed_form",
    "has_closed_form",
    "closed_form_endpoint",
    "hamilton_flow",
    "shoot_bvp",
    "spinflip_energy_relations",
    "spinflip_constants",
    "action_integral",
    "write_csv",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(48)


@dataclass
class Trajectory:
    """A sampled path with its energy and costs.

    ``action`` is the path cost ``int L`` only; ``total_cost`` adds ``i(start)``
    when a rate function was supplied.  ``evaluator`` (closed forms only)
    maps times to ``(x, p)`` and lets :func:`action_integral` refine its grid.
    """

    times: np.ndarray
    positions: np.ndarray
    momenta: np.ndarray | None
    energy: float
    start: float
    terminal: float
    action: float
    total_cost: float | None
    provenance: str
    energy_drift: float = 0.0
    exited: bool = False
    evaluator: Callable | None = field(default=None, repr=False, compare=False)

    @property
    def p0(self) -> float:
        return float(self.momenta[0]) if self.momenta is not None else math.nan

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def with_rate(self, rate: RateFunction | None) -> "Trajectory":
        if rate is None:
            return self
        return replace(self, total_cost=self.action + float(rate.value(self.start)))


def has_closed_form(model: ProcessModel) -> bool:
    if isinstance(model, Diffusion):
        return model.linear_coeffs() is not None
    if isinstance(model, SpinFlip):
        return True
    return isinstance(model, BirthDeath) and model.constant_rates


def _linear_solution(kappa, c, gamma0, b, T):
    """Evaluator and action for drift ``c - kappa x``; sinh interpolation."""
    if kappa == 0.0:
        p = (b - gamma0) / T - c

        def ev(t):
            t = np.asarray(t, dtype=float)
            return gamma0 + (b - gamma0) * t / T, np.full_like(t, p)

        return ev, 0.5 * p * p * T

    m = c / kappa
    y0, yT = gamma0 - m, b - m
    den = -math.expm1(-2.0 * kappa * T)

    def ev(t):
        t = np.asarray(t, dtype=float)
        # sinh(k t)/sinh(k T) and sinh(k(T-t))/sinh(k T) without overflow.
        e1 = np.exp(kappa * (t - T))
        e2 = np.exp(-kappa * t)
        s1 = e1 * -np.expm1(-2.0 * kappa * t) / den
        s2 = e2 * -np.expm1(-2.0 * kappa * (T - t)) / den
        c1 = e1 * (1.0 + np.exp(-2.0 * kappa * t)) / den
        c2 = e2 * (1.0 + np.exp(-2.0 * kappa * (T - t))) / den
        y = yT * s1 + y0 * s2
        ydot = kappa * (yT * c1 - y0 * c2)
        return y + m, ydot + kappa * y

    # kappa (y0 - yT e^{kT})^2 / (e^{2kT} - 1), rearranged for large kT.
    action = kappa * (y0 * math.exp(-kappa * T) - yT) ** 2 / den
    return ev, action


def spinflip_constants(gamma: float, E: float, C: float = 1.0) -> tuple[float, float, float]:
    """``(C1, C2, C3)`` of ``x(t) = C1 e^{dt} + C2 e^{-dt} + C3``, ``d = 1 + gamma``."""
    d = 1.0 + gamma
    c1 = C * (2.0 + 2.0 * gamma + E) / d**2
    c2 = E * gamma / (-C * d**2)
    c3 = (E + 1.0 + gamma) * (gamma - 1.0) / d**2
    return c1, c2, c3


def _spinflip_solution(model: SpinFlip, gamma0, b, T):
    """Energy and evaluator of the extremal from ``gamma0`` to ``b``.

    With ``C3`` affine in ``E`` the constraint ``C1 C2 = -E gamma (2 delta + E)/delta^4``
    is a quadratic in ``E``; the physical branch is the larger root.
    """
    gam, d = model.gamma, model.delta
    k0, k1 = (gam - 1.0) / d, (gam - 1.0) / d**2
    u0, uT = gamma0 - k0, b - k0
    g = math.exp(-d * T)
    D = -math.expm1(-2.0 * d * T)
    p0, p1 = g * (uT - u0 * g) / D, g * k1 * (1.0 - g) / D
    q0, q1 = (u0 - uT * g) / D, k1 * (1.0 - g) / D
    a2 = p1 * q1 + gam / d**4
    a1 = 2.0 * gam / d**3 - p0 * q1 - p1 * q0
    a0 = p0 * q0
    disc = a1 * a1 - 4.0 * a2 * a0
    if disc < 0:
        raise NoSolutionError(f"no spin-flip extremal from {gamma0} to {b} in time {T}")
    sq = math.sqrt(disc)
    # Larger root, written to avoid cancellation.
    E = (-a1 + sq) / (2.0 * a2) if a1 <= 0 else (2.0 * a0) / (-a1 - sq)
    c3 = k0 + k1 * E
    y0, yT = gamma0 - c3, b - c3

    def ev(t, with_velocity=False):
        t = np.asarray(t, dtype=float)
        ep = (yT - y0 * g) * np.exp(d * (t - T)) / D  # P e^{dt}
        em = (y0 - yT * g) * np.exp(-d * t) / D  # Q e^{-dt}
        x = c3 + ep + em
        xdot = d * (ep - em)
        bb, dd = model.b(x), model.d(x)
        s = E + bb + dd
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(xdot >= 0, (s + xdot) / (2.0 * bb), 2.0 * dd / (s - xdot))
        p = np.log(u)
        return (x, p, xdot) if with_velocity else (x, p)

    return E, ev


def _composite_gl(f, T, panels):
    edges = np.linspace(0.0, T, panels + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    t = lo + half * (_GL_X + 1.0)
    return float((half * f(t) * _GL_W).sum())


def closed_form_endpoint(model: ProcessModel, gamma0: float, b: float, T: float):
    """``(evaluator, energy, action)`` of the closed-form extremal."""
    if isinstance(model, Diffusion) and model.linear_coeffs() is not None:
        kappa, c = model.linear_coeffs()
        ev, action = _linear_solution(kappa, c, gamma0, b, T)
        x0, p0 = ev(0.0)
        return ev, float(model.hamiltonian(x0, p0)), float(action)
    if isinstance(model, SpinFlip):
        E, ev = _spinflip_solution(model, gamma0, b, T)

        def pxdot(t):
            _, p, xdot = ev(t, with_velocity=True)
            return p * xdot

        panels = max(1, int(math.ceil(model.delta * T)))
        action = _composite_gl(pxdot, T, panels) - E * T
        return ev, float(E), max(float(action), 0.0)
    if isinstance(model, BirthDeath) and model.constant_rates:
        v = (b - gamma0) / T
        p = float(model.legendre_momentum(gamma0, v))

        def ev(t):
            t = np.asarray(t, dtype=float)
            return gamma0 + v * t, np.full_like(t, p)

        return ev, float(model.hamiltonian(gamma0, p)), float(T * model.lagrangian(gamma0, v))
    raise UnsupportedModelError(f"no closed-form extremal for {model.grammar()}; use shoot_bvp")


def el_closed_form(
    model: ProcessModel,
    gamma0: float,
    b: float,
    T: float,
    grid_size: int = 201,
    rate: RateFunction | None = None,
) -> Trajectory:
    """The Euler-Lagrange extremal through ``(0, gamma0)`` and ``(T, b)``."""
    if not (np.all(model.contains([gamma0, b]))):
        raise DomainError(f"endpoints {gamma0}, {b} outside {model.state_space}")
    ev, E, action = closed_form_endpoint(model, gamma0, b, T)
    t = np.linspace(0.0, T, grid_size)
    x, p = ev(t)
    tag = {SpinFlip: "closed-form:spinflip"}.get(type(model), f"closed-form:{type(model).__name__.lower()}")
    exited = bool(np.any(~model.contains(x)))
    traj = Trajectory(
        times=t,
        positions=np.asarray(x, dtype=float),
        momenta=np.asarray(p, dtype=float),
        energy=E,
        start=float(gamma0),
        terminal=float(b),
        action=action,
        total_cost=None,
        provenance=tag,
        exited=exited,
        evaluator=ev,
    )
    return traj.with_rate(rate)


def _rk4(model: ProcessModel, x0, p0, T, nsteps, keep_path=True):
    x = np.array(x0, dtype=float, copy=True)
    p = np.array(p0, dtype=float, copy=True)
    h = T / nsteps
    lo, hi = model.state_space
    alive = np.ones(np.shape(x), dtype=bool)
    exit_side = np.zeros(np.shape(x))
    xs, ps = ([x.copy()], [p.copy()]) if keep_path else (None, None)

    # Jump-process momenta diverge in finite time near the boundary; beyond
    # this cap RK4 is unstable and the path is treated as having exited.
    p_cap = max(8.0, math.log(1.0 / h) + 2.0) if isinstance(model, BirthDeath) else math.inf

    def rhs(xx, pp):
        return model.dH_dp(xx, pp), -model.dH_dx(xx, pp)

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(nsteps):
            x_prev, p_prev = x, p
            k1x, k1p = rhs(x, p)
            k2x, k2p = rhs(x + 0.5 * h * k1x, p + 0.5 * h * k1p)
            k3x, k3p = rhs(x + 0.5 * h * k2x, p + 0.5 * h * k2p)
            k4x, k4p = rhs(x + h * k3x, p + h * k3p)
            x = x + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
            p = p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
            bad = ~np.isfinite(x) | ~np.isfinite(p) | (x < lo) | (x > hi) | (np.abs(p) > p_cap)
            if np.any(bad & alive):
                newly = bad & alive
                # Jump-process exits follow the diverging momentum (RK4 may
                # overshoot to the wrong side); diffusions use the position.
                if isinstance(model, BirthDeath):
                    side = np.sign(p_prev)
                else:
                    heading = np.sign(model.dH_dp(x_prev, p_prev))
                    side = np.where(x > hi, 1.0, np.where(x < lo, -1.0, heading))
                exit_side = np.where(newly, side, exit_side)
                alive &= ~bad
                x = np.where(alive, x, np.nan)
                p = np.where(alive, p, np.nan)
            if keep_path:
                xs.append(x.copy())
                ps.append(p.copy())
            if not np.any(alive):
                break
    if not keep_path:
        return x, p, exit_side, None
    return x, p, np.array(xs), np.array(ps)


def hamilton_flow(model: ProcessModel, x0: float, p0: float, T: float, step: float) -> Trajectory:
    """Integrate Hamilton's equations with fixed-step RK4.

    The step is shrunk so that an integer number of steps lands on ``T``.
    Leaving the state space stops the integration; the partial path is
    returned with ``exited=True``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if not model.contains(x0):
        raise DomainError(f"x0={x0} outside {model.state_space}")
    nsteps = max(1, int(math.ceil(T / step - 1e-12)))
    _, _, xs, ps = _rk4(model, float(x0), float(p0), T, nsteps)
    t = np.linspace(0.0, T, nsteps + 1)[: len(xs)]
    finite = np.isfinite(xs)
    exited = not bool(finite.all())
    xs, ps, t = xs[finite], ps[finite], t[finite]
    E = float(model.hamiltonian(x0, p0))
    drift = float(np.max(np.abs(model.hamiltonian(xs, ps) - E)))
    traj = Trajectory(
        times=t,
        positions=xs,
        momenta=ps,
        energy=E,
        start=float(x0),
        terminal=float(xs[-1]),
        action=math.nan,
        total_cost=None,
        provenance="hamilton-flow:rk4",
        energy_drift=drift,
        exited=exited,
    )
    traj.action = action_integral(model, traj)
    return traj


def _default_pmax(model: ProcessModel, gamma0: float, b: float, T: float) -> float:
    if isinstance(model, Diffusion):
        xs = np.linspace(gamma0, b, 5)
        return 2.0 * (abs(b - gamma0) / T + float(np.max(np.abs(model.drift(xs))))) + 1.0
    return 6.0


def _default_steps(model: ProcessModel, T: float) -> int:
    return max(400, int(math.ceil(T / 0.005)))


def shoot_bvp(
    model: ProcessModel,
    gamma0: float,
    b: float,
    T: float,
    *,
    n_starts: int = 41,
    p_max: float | None = None,
    nsteps: int | None = None,
    tol: float = 1e-7,
    rate: RateFunction | None = None,
) -> list[Trajectory]:
    """All extremals from ``gamma0`` hitting ``b`` at ``T``, sorted by ``p0``.

    A deterministic grid of ``n_starts`` initial momenta in ``[-p_max, p_max]``
    is flowed to ``T``; every sign change of the terminal miss is refined with
    Brent's method.
    """
    if p_max is None:
        p_max = _default_pmax(model, gamma0, b, T)
    if nsteps is None:
        nsteps = _default_steps(model, T)
    grid = np.linspace(-p_max, p_max, n_starts)
    # Paths leaving the state space get a large miss signed by the exit side.
    big = 1e6
    xT, _, side, _ = _rk4(model, np.full(n_starts, float(gamma0)), grid, T, nsteps, keep_path=False)
    miss = np.where(side != 0, side * big, xT - b)

    def terminal_miss(p0):
        x, _, s, _ = _rk4(model, float(gamma0), float(p0), T, nsteps, keep_path=False)
        return float(s) * big if s != 0 else float(x) - b

    roots = []
    for k in range(n_starts):
        if miss[k] == 0.0:
            roots.append(float(grid[k]))
        if k + 1 < n_starts and np.isfinite(miss[k]) and np.isfinite(miss[k + 1]):
            if miss[k] * miss[k + 1] < 0:
                roots.append(optimize.brentq(terminal_miss, grid[k], grid[k + 1], xtol=1e-300, rtol=1e-15))
    sols = []
    for p0 in sorted(set(roots)):
        traj = hamilton_flow(model, gamma0, p0, T, T / nsteps)
        if traj.exited or abs(traj.terminal - b) > tol:
            continue
        traj.provenance = "numeric-shooting"
        sols.append(traj.with_rate(rate))
    if not sols:
        raise NoSolutionError(
            f"no shooting bracket from {gamma0} to {b} in time {T} with |p0| <= {p_max}"
        )
    return sols


def spinflip_energy_relations(gamma: float, E: float, T: float):
    """Symmetric spin flip: starting points ending at 0 with energy ``E``.

    Returns ``((x_minus, x_plus), (p_minus, p_plus))`` where
    ``x = +-sqrt(E/4 (1 + E/4)) (e^{-2T} - e^{2T})`` and ``p`` is the initial
    momentum.  The printed closed-form momentum picks the root of
    ``H(x0, p) = E`` with positive velocity, i.e. the branch starting below 0;
    the other start follows by the symmetry ``(x, p) -> (-x, -p)``.
    """
    if gamma != 1.0:
        raise UnsupportedModelError("energy relations are only available for the symmetric spin flip")
    if E < 0:
        raise ValueError("energy must be non-negative")
    k = math.sqrt(E / 4.0 * (1.0 + E / 4.0))
    x_minus = k * (math.exp(-2.0 * T) - math.exp(2.0 * T))
    if abs(x_minus) >= 1.0:
        raise DomainError(f"|x0| = {abs(x_minus)} >= 1 for E={E}, T={T}")
    x0 = x_minus
    p_minus = math.log((2.0 + E + math.sqrt((2.0 + E) ** 2 - 4.0 * (1.0 - x0 * x0))) / (2.0 * (1.0 - x0)))
    return (x_minus, -x_minus), (p_minus, -p_minus)


def _simpson_uniform(f, T, n):
    t = np.linspace(0.0, T, n + 1)
    y = f(t)
    h = T / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def action_integral(model: ProcessModel, traj: Trajectory, tol: float = 1e-9, max_intervals: int = 2**20) -> float:
    """Composite-Simpson value of ``int_0^T L(x, xdot) dt``.

    Velocities come from ``dH/dp`` at the stored momenta, or from central
    differences when momenta are absent.  With an evaluator the grid doubles
    until successive values change by less than ``tol``.
    """
    if traj.evaluator is not None:
        ev = traj.evaluator

        def integrand(t):
            x, p = ev(t)[:2]
            return model.lagrangian(x, model.dH_dp(x, p))

        T = traj.horizon
        n = 64
        prev = _simpson_uniform(integrand, T, n)
        while n < max_intervals:
            n *= 2
            cur = _simpson_uniform(integrand, T, n)
            if abs(cur - prev) < tol:
                return float(cur + (cur - prev) / 15.0)
            prev = cur
        return float(prev)
    t, x = traj.times, traj.positions
    if len(t) < 2:
        return 0.0
    if traj.momenta is not None:
        v = model.dH_dp(x, traj.momenta)
    else:
        v = np.gradient(x, t, edge_order=1)
    return float(integrate.simpson(model.lagrangian(x, v), x=t))


def write_csv(traj: Trajectory, model: ProcessModel, path) -> None:
    """``t,x,p,energy`` with 17 significant digits."""
    p = traj.momenta if traj.momenta is not None else np.full_like(traj.positions, np.nan)
    H = model.hamiltonian(traj.positions, p)
    with open(path, "w", newline="") as fh:
        fh.write("t,x,p,energy\n")
        for row in zip(traj.times, traj.positions, p, H):
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
