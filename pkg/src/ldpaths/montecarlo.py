"""Finite-n Monte Carlo: start from ``mu_n``, run the process, condition on ``X_T``.

Random streams are counter based: chunk ``k`` of ``CHUNK`` consecutive paths
draws from ``Philox`` seeded with ``SeedSequence(seed, spawn_key=(k,))``, so
results do not depend on how chunks are spread over threads.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import EnvelopeError, UnderpoweredError
from .models import BirthDeath, Diffusion, ProcessModel
from .rates import RateFunction

__all__ = [
    "McConfig",
    "ConditionedEmpirical",
    "chunk_rng",
    "initial_support",
    "sample_initial",
    "simulate_path",
    "run_paths",
    "condition_and_compare",
    "write_accepted_csv",
    "CHUNK",
]

CHUNK = 8192
SUPPORT_MARGIN = 40.0
MIN_ACCEPTANCE = 1e-6
MIN_ACCEPTED = 100
THREADS_ENV = "LDPATHS_THREADS"


@dataclass(frozen=True)
class McConfig:
    model: ProcessModel
    rate: RateFunction
    n: int
    T: float
    b: float
    paths: int = 200_000
    half_width: float = 0.05
    time_step: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if not self.half_width > 0:
            raise ValueError("terminal window half-width must be positive")
        if isinstance(self.model, Diffusion) and not self.time_step > 0:
            raise ValueError("time_step must be positive for diffusions")
        if not self.T > 0:
            raise ValueError("T must be positive")


@dataclass
class ConditionedEmpirical:
    paths: int
    accepted_count: int
    acceptance_rate: float
    path_index: np.ndarray
    start_samples: np.ndarray
    terminal: np.ndarray
    mass_near: dict[float, float] = field(default_factory=dict)
    radius: float = 0.25


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def initial_support(rate: RateFunction, n: int, span: float = 50.0, points: int = 200_001):
    """``[x_lo, x_hi]`` outside which ``i >= i_min + 40/n``; also returns ``i_min``."""
    lo, hi = -span, span
    if rate.domain is not None:
        lo, hi = max(lo, rate.domain[0]), min(hi, rate.domain[1])
    grid = np.linspace(lo, hi, points)
    vals = rate.value(grid)
    k = int(np.argmin(vals))
    step = grid[1] - grid[0]
    # Polish so the envelope ratio exp(-n (i - i_min)) never exceeds one.
    res = optimize.minimize_scalar(
        rate.value, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, points - 1)]), method="bounded",
        options={"xatol": 1e-14},
    )
    i_min = min(float(vals[k]), float(res.fun))
    inside = np.nonzero(vals <= i_min + SUPPORT_MARGIN / n)[0]
    x_lo = max(lo, grid[inside[0]] - step)
    x_hi = min(hi, grid[inside[-1]] + step)
    return float(x_lo), float(x_hi), i_min


def _rejection(rate, n, count, rng, support):
    x_lo, x_hi, i_min = support
    out = np.empty(count)
    filled = 0
    batch = max(1024, 2 * count)
    tries = 0
    while filled < count:
        x = rng.uniform(x_lo, x_hi, batch)
        u = rng.random(batch)
        keep = x[u < np.exp(-n * (rate.value(x) - i_min))]
        take = min(len(keep), count - filled)
        out[filled : filled + take] = keep[:take]
        filled += take
        tries += batch
        if tries >= 1_000_000 and filled / tries < MIN_ACCEPTANCE:
            raise EnvelopeError(
                f"envelope acceptance {filled / tries:.2e} below {MIN_ACCEPTANCE:g}; "
                "widen the support or lower n"
            )
    return out


def sample_initial(rate: RateFunction, n: int, count: int, seed: int = 0) -> np.ndarray:
    """Draws from the density proportional to ``exp(-n i(x))`` by rejection."""
    support = initial_support(rate, n)
    chunks = []
    for k in range(math.ceil(count / CHUNK)):
        m = min(CHUNK, count - k * CHUNK)
        chunks.append(_rejection(rate, n, m, chunk_rng(seed, k), support))
    return np.concatenate(chunks) if chunks else np.empty(0)


def _euler_maruyama(model: Diffusion, n, x0, T, step, rng, keep_path):
    steps = max(1, math.ceil(T / step - 1e-12))
    h = T / steps
    sd = math.sqrt(h / n)
    x = np.array(x0, dtype=float, copy=True)
    path = [x.copy()] if keep_path else None
    for _ in range(steps):
        x = x + model.drift(x) * h + sd * rng.standard_normal(x.shape)
        if keep_path:
            path.append(x.copy())
    if keep_path:
        return x, np.linspace(0.0, T, steps + 1), np.array(path)
    return x, None, None


def _gillespie(model: BirthDeath, N, x0, T, rng, keep_path):
    # Integer lattice k/N avoids accumulated rounding in the position.
    lo, hi = model.state_space
    k = np.rint(np.asarray(x0, dtype=float) * N)
    t = np.zeros_like(k)
    active = np.ones(k.shape, dtype=bool)
    times, states = ([0.0], [k.copy() / N]) if keep_path else (None, None)
    while np.any(active):
        idx = np.nonzero(active)[0]
        x = k[idx] / N
        up = N * np.clip(model.b(x), 0.0, None) * (x < hi)
        down = N * np.clip(model.d(x), 0.0, None) * (x > lo)
        total = up + down
        stuck = total <= 0
        with np.errstate(divide="ignore"):
            tau = rng.exponential(1.0, idx.shape) / total
        tau[stuck] = np.inf
        t_new = t[idx] + tau
        done = t_new > T
        active[idx[done]] = False
        go = idx[~done]
        r = rng.random(idx.shape)[~done]
        jump = np.where(r * total[~done] < up[~done], 1.0, -1.0)
        k[go] += jump
        t[go] = t_new[~done]
        if keep_path and go.size:
            times.append(float(t_new[~done][0]))
            states.append(k.copy() / N)
    if keep_path:
        times.append(T)
        states.append(k.copy() / N)
        return k / N, np.array(times), np.array(states)
    return k / N, None, None


def simulate_path(model: ProcessModel, n: int, x0, T: float, step: float = 1e-3, rng=None, keep_path: bool = False):
    """Terminal value(s) at time ``T`` from ``x0`` (scalar or array).

    With ``keep_path`` the return is ``(xT, times, positions)``.  Diffusions
    use Euler-Maruyama with noise ``n^{-1/2}``; birth-death walks are
    simulated event by event with jumps ``+-1/n``.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    scalar = np.ndim(x0) == 0
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if isinstance(model, BirthDeath):
        xT, times, states = _gillespie(model, n, x0, T, rng, keep_path)
    elif isinstance(model, Diffusion):
        xT, times, states = _euler_maruyama(model, n, x0, T, step, rng, keep_path)
    else:
        raise TypeError(f"cannot simulate {model!r}")
    if scalar:
        xT = float(xT[0])
        if keep_path:
            states = states[:, 0]
    return (xT, times, states) if keep_path else xT


def _run_chunk(cfg: McConfig, k: int, support):
    m = min(CHUNK, cfg.paths - k * CHUNK)
    rng = chunk_rng(cfg.seed, k)
    x0 = _rejection(cfg.rate, cfg.n, m, rng, support)
    if isinstance(cfg.model, BirthDeath):
        x0 = np.rint(x0 * cfg.n) / cfg.n
    xT = simulate_path(cfg.model, cfg.n, x0, cfg.T, cfg.time_step, rng)
    return np.arange(k * CHUNK, k * CHUNK + m), x0, np.atleast_1d(xT)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_paths(cfg: McConfig, threads: int | None = None):
    """``(path_index, x0, xT)`` for every simulated path, in path order."""
    support = initial_support(cfg.rate, cfg.n)
    nchunks = math.ceil(cfg.paths / CHUNK)
    threads = threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda k: _run_chunk(cfg, k, support), range(nchunks)))
    else:
        parts = [_run_chunk(cfg, k, support) for k in range(nchunks)]
    return tuple(np.concatenate(col) for col in zip(*parts))


def default_radius(locations) -> float:
    locs = sorted(locations)
    if len(locs) < 2:
        return 0.25
    return min(0.25, 0.5 * min(b - a for a, b in zip(locs, locs[1:])))


def condition_and_compare(
    cfg: McConfig,
    prediction,
    radius: float | None = None,
    point_mass_min: float = 0.8,
    pair_min: float = 0.3,
    pair_imbalance: float = 0.3,
    min_accepted: int = MIN_ACCEPTED,
    threads: int | None = None,
) -> tuple[ConditionedEmpirical, dict]:
    """Keep paths with ``|X_T - b| <= half_width`` and score them against ``prediction``."""
    idx, x0, xT = run_paths(cfg, threads)
    keep = np.abs(xT - cfg.b) <= cfg.half_width
    emp = ConditionedEmpirical(
        paths=cfg.paths,
        accepted_count=int(keep.sum()),
        acceptance_rate=float(keep.mean()),
        path_index=idx[keep],
        start_samples=x0[keep],
        terminal=xT[keep],
    )
    if emp.accepted_count < min_accepted:
        raise UnderpoweredError(
            f"only {emp.accepted_count} of {cfg.paths} paths ended within {cfg.half_width} of b={cfg.b}; "
            "increase paths or the window"
        )
    rho = default_radius(prediction.locations) if radius is None else radius
    emp.radius = rho
    for loc in prediction.locations:
        emp.mass_near[float(loc)] = float(np.mean(np.abs(emp.start_samples - loc) <= rho))
    masses = list(emp.mass_near.values())
    if prediction.kind == "point_mass":
        passed = masses[0] >= point_mass_min
        thresholds = {"point_mass_min": point_mass_min}
    elif prediction.kind == "symmetric_pair":
        passed = min(masses) >= pair_min and abs(masses[0] - masses[1]) <= pair_imbalance
        thresholds = {"pair_min": pair_min, "pair_imbalance": pair_imbalance}
    else:
        passed = sum(masses) >= point_mass_min
        thresholds = {"total_min": point_mass_min}
    verdict = {
        "verdict": "PASS" if passed else "FAIL",
        "kind": prediction.kind,
        "locations": [float(v) for v in prediction.locations],
        "radius": rho,
        "masses": masses,
        "thresholds": thresholds,
        "accepted": emp.accepted_count,
        "acceptance_rate": emp.acceptance_rate,
        "seed": cfg.seed,
    }
    return emp, verdict


def write_accepted_csv(emp: ConditionedEmpirical, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_index", "x0", "xT"])
        for i, a, z in zip(emp.path_index, emp.start_samples, emp.terminal):
            w.writerow([int(i), format(float(a), ".17g"), format(float(z), ".17g")])
