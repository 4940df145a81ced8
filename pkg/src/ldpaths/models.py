"""Small-noise process families and their Hamiltonians / Lagrangians.

Diffusions ``dX = mu(X) dt + n^{-1/2} dB`` have ``H(x, p) = mu(x) p + p^2/2``
and ``L(x, v) = (v - mu(x))^2 / 2``.  Walks with ``+-1/N`` jumps at rates
``N b(x)``, ``N d(x)`` have ``H(x, p) = (e^p - 1) b(x) + (e^-p - 1) d(x)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRateError, DomainError, SpecParseError

__all__ = [
    "ProcessModel",
    "Diffusion",
    "Brownian",
    "BrownianDrift",
    "OrnsteinUhlenbeck",
    "OUField",
    "GeneralDrift",
    "DRIFT_CATALOG",
    "ConstRate",
    "AffineRate",
    "BirthDeath",
    "SpinFlip",
    "hamiltonian",
    "lagrangian",
    "zero_energy_drift",
    "parse_model",
]

FULL_LINE = (-math.inf, math.inf)


class ProcessModel:
    state_space: tuple[float, float] = FULL_LINE

    def hamiltonian(self, x, p):
        raise NotImplementedError

    def dH_dp(self, x, p):
        raise NotImplementedError

    def dH_dx(self, x, p):
        raise NotImplementedError

    def lagrangian(self, x, v):
        raise NotImplementedError

    def zero_energy_drift(self, x):
        raise NotImplementedError

    def grammar(self) -> str:
        raise NotImplementedError

    @property
    def odd(self) -> bool:
        """True when the dynamics commute with ``x -> -x``."""
        return False

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.state_space
        return (x >= lo) & (x <= hi)


class Diffusion(ProcessModel):
    def drift(self, x):
        raise NotImplementedError

    def drift_deriv(self, x):
        raise NotImplementedError

    def linear_coeffs(self) -> tuple[float, float] | None:
        """``(kappa, c)`` when the drift is ``-kappa x + c``."""
        return None

    def hamiltonian(self, x, p):
        return self.drift(x) * p + 0.5 * np.square(p)

    def dH_dp(self, x, p):
        return self.drift(x) + p

    def dH_dx(self, x, p):
        return self.drift_deriv(x) * p

    def lagrangian(self, x, v):
        return 0.5 * np.square(np.asarray(v, dtype=float) - self.drift(x))

    def zero_energy_drift(self, x):
        return self.drift(x)


class _LinearDiffusion(Diffusion):
    def drift(self, x):
        kappa, c = self.linear_coeffs()
        x = np.asarray(x, dtype=float)
        return c - kappa * x

    def drift_deriv(self, x):
        kappa, _ = self.linear_coeffs()
        return np.full_like(np.asarray(x, dtype=float), -kappa)


@dataclass(frozen=True)
class Brownian(_LinearDiffusion):
    def linear_coeffs(self):
        return (0.0, 0.0)

    @property
    def odd(self):
        return True

    def grammar(self):
        return "bm"


@dataclass(frozen=True)
class BrownianDrift(_LinearDiffusion):
    V: float = 0.0

    def linear_coeffs(self):
        return (0.0, float(self.V))

    @property
    def odd(self):
        return self.V == 0.0

    def grammar(self):
        return f"bm:V={self.V!r}"


@dataclass(frozen=True)
class OrnsteinUhlenbeck(_LinearDiffusion):
    kappa: float = 1.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("OU requires kappa > 0")

    def linear_coeffs(self):
        return (float(self.kappa), 0.0)

    @property
    def odd(self):
        return True

    def grammar(self):
        return f"ou:kappa={self.kappa!r}"


@dataclass(frozen=True)
class OUField(_LinearDiffusion):
    kappa: float = 1.0
    E: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("OU requires kappa > 0")

    def linear_coeffs(self):
        return (float(self.kappa), float(self.E))

    @property
    def odd(self):
        return self.E == 0.0

    def grammar(self):
        return f"oufield:kappa={self.kappa!r},E={self.E!r}"


def _linear_f(p):
    k = p.get("kappa", 1.0)
    return (lambda x: k * x), (lambda x: np.full_like(x, k))


def _cubic_f(p):
    k, c = p.get("k", 0.0), p.get("c", 1.0)
    return (lambda x: k * x + c * x**3), (lambda x: k + 3.0 * c * x**2)


def _tanh_f(p):
    k, w = p.get("k", 1.0), p.get("w", 1.0)
    return (lambda x: k * np.tanh(x / w)), (lambda x: (k / w) / np.cosh(x / w) ** 2)


def _sin_f(p):
    k = p.get("k", 1.0)
    return (lambda x: k * np.sin(x)), (lambda x: k * np.cos(x))


# Named odd drifts f with dX = -f(X) dt + noise.
DRIFT_CATALOG = {
    "linear": _linear_f,
    "cubic": _cubic_f,
    "tanh": _tanh_f,
    "sin": _sin_f,
}


@dataclass(frozen=True)
class GeneralDrift(Diffusion):
    """``dX = -f(X) dt + n^{-1/2} dB`` with ``f`` from :data:`DRIFT_CATALOG`."""

    name: str = "linear"
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.name not in DRIFT_CATALOG:
            raise ValueError(f"unknown drift {self.name!r}; choose from {sorted(DRIFT_CATALOG)}")
        object.__setattr__(self, "params", tuple(sorted((k, float(v)) for k, v in self.params)))

    def _fns(self):
        return DRIFT_CATALOG[self.name](dict(self.params))

    def f(self, x):
        return self._fns()[0](np.asarray(x, dtype=float))

    def drift(self, x):
        return -self.f(x)

    def drift_deriv(self, x):
        return -self._fns()[1](np.asarray(x, dtype=float))

    @property
    def odd(self):
        return True

    def grammar(self):
        extra = "".join(f",{k}={v!r}" for k, v in self.params)
        return f"gd:name={self.name}{extra}"


@dataclass(frozen=True)
class ConstRate:
    c: float

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c)

    def deriv(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def token(self):
        return f"const{self.c!r}"


@dataclass(frozen=True)
class AffineRate:
    """``c0 + c1 x``."""

    c0: float
    c1: float

    def __call__(self, x):
        return self.c0 + self.c1 * np.asarray(x, dtype=float)

    def deriv(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.c1)

    def token(self):
        return f"affine{self.c0!r}:{self.c1!r}"


def _parse_rate_token(tok: str):
    if tok.startswith("const"):
        return ConstRate(float(tok[5:]))
    if tok.startswith("affine"):
        c0, c1 = tok[6:].split(":")
        return AffineRate(float(c0), float(c1))
    raise SpecParseError(f"unknown jump-rate token {tok!r} (use constC or affineC0:C1)")


@dataclass(frozen=True)
class BirthDeath(ProcessModel):
    """Walk with up-rate ``b(x)`` and down-rate ``d(x)`` (scaled by N)."""

    birth: ConstRate | AffineRate = ConstRate(1.0)
    death: ConstRate | AffineRate = ConstRate(1.0)
    state_space: tuple[float, float] = FULL_LINE

    def b(self, x):
        return self.birth(x)

    def d(self, x):
        return self.death(x)

    @property
    def constant_rates(self) -> bool:
        return isinstance(self.birth, ConstRate) and isinstance(self.death, ConstRate)

    @property
    def odd(self):
        # b(-x) = d(x) makes the walk symmetric under reflection.
        xs = np.array([0.0, 0.3, 0.7])
        return bool(np.allclose(self.b(-xs), self.d(xs)))

    def hamiltonian(self, x, p):
        return np.expm1(p) * self.b(x) + np.expm1(-np.asarray(p, dtype=float)) * self.d(x)

    def dH_dp(self, x, p):
        p = np.asarray(p, dtype=float)
        return self.b(x) * np.exp(p) - self.d(x) * np.exp(-p)

    def dH_dx(self, x, p):
        p = np.asarray(p, dtype=float)
        return self.birth.deriv(x) * np.expm1(p) + self.death.deriv(x) * np.expm1(-p)

    def legendre_momentum(self, x, v):
        """The maximiser ``p`` of ``p v - H(x, p)``, from ``v = b e^p - d e^-p``."""
        b = np.asarray(self.b(x), dtype=float)
        d = np.asarray(self.d(x), dtype=float)
        if np.any(b <= 0) or np.any(d <= 0):
            raise DegenerateRateError(f"birth/death rate vanishes at x={x!r}")
        v = np.asarray(v, dtype=float)
        root = np.sqrt(v * v + 4.0 * b * d)
        # Two algebraically equal forms of e^p; pick the one without cancellation.
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.where(v >= 0, (v + root) / (2.0 * b), 2.0 * d / (root - v))
        return np.log(u)

    def lagrangian(self, x, v):
        p = self.legendre_momentum(x, v)
        return p * np.asarray(v, dtype=float) - self.hamiltonian(x, p)

    def zero_energy_drift(self, x):
        return self.b(x) - self.d(x)

    def grammar(self):
        text = f"bd:b={self.birth.token()},d={self.death.token()}"
        if self.state_space != FULL_LINE:
            text += f",lo={self.state_space[0]!r},hi={self.state_space[1]!r}"
        return text


class SpinFlip(BirthDeath):
    """Mean-field spin flips: ``b(x) = gamma (1 - x)``, ``d(x) = 1 + x`` on ``[-1, 1]``."""

    def __init__(self, gamma: float = 1.0):
        if not gamma > 0:
            raise ValueError("spin flip requires gamma > 0")
        object.__setattr__(self, "gamma", float(gamma))
        super().__init__(AffineRate(gamma, -gamma), AffineRate(1.0, 1.0), (-1.0, 1.0))

    def __repr__(self):
        return f"SpinFlip(gamma={self.gamma!r})"

    def __eq__(self, other):
        return isinstance(other, SpinFlip) and other.gamma == self.gamma

    def __hash__(self):
        return hash(("spinflip", self.gamma))

    @property
    def delta(self) -> float:
        return 1.0 + self.gamma

    @property
    def odd(self):
        return self.gamma == 1.0

    def lagrangian(self, x, v):
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) >= 1.0):
            raise DegenerateRateError("spin-flip Lagrangian is not evaluated on the boundary x = +-1")
        return super().lagrangian(x, v)

    def grammar(self):
        return f"spinflip:gamma={self.gamma!r}"


def _check(model: ProcessModel, x):
    if not np.all(model.contains(x)):
        raise DomainError(f"x={x!r} outside state space {model.state_space} of {model.grammar()}")


def _scalar(out, *args):
    return float(out) if all(np.ndim(a) == 0 for a in args) else out


def hamiltonian(model: ProcessModel, x, p):
    _check(model, x)
    return _scalar(model.hamiltonian(x, p), x, p)


def lagrangian(model: ProcessModel, x, v):
    _check(model, x)
    return _scalar(model.lagrangian(x, v), x, v)


def zero_energy_drift(model: ProcessModel, x):
    _check(model, x)
    return _scalar(model.zero_energy_drift(x), x)


def _kv(body: str, text: str) -> dict[str, str]:
    out = {}
    pos = len(text) - len(body)
    for item in body.split(","):
        if not item:
            pos += 1
            continue
        if "=" not in item:
            raise SpecParseError(f"expected key=value at position {pos} of {text!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
        pos += len(item) + 1
    return out


def parse_model(text: str) -> ProcessModel:
    """Parse ``bm``, ``bm:V=0.5``, ``ou:kappa=0.7``, ``oufield:kappa=0.7,E=0.1``,
    ``gd:name=...``, ``bd:b=const1,d=const1`` or ``spinflip:gamma=1``."""
    head, _, body = text.strip().partition(":")
    kv = _kv(body, text.strip())
    try:
        if head == "bm":
            v = kv.pop("V", None)
            model: ProcessModel = Brownian() if v is None else BrownianDrift(V=float(v))
        elif head == "ou":
            model = OrnsteinUhlenbeck(kappa=float(kv.pop("kappa", "1")))
        elif head == "oufield":
            model = OUField(kappa=float(kv.pop("kappa", "1")), E=float(kv.pop("E", "0")))
        elif head == "gd":
            name = kv.pop("name", "linear")
            model = GeneralDrift(name=name, params=tuple((k, float(v)) for k, v in kv.items()))
            kv = {}
        elif head == "bd":
            lo, hi = kv.pop("lo", None), kv.pop("hi", None)
            space = FULL_LINE if lo is None and hi is None else (float(lo or "-inf"), float(hi or "inf"))
            model = BirthDeath(
                _parse_rate_token(kv.pop("b", "const1")),
                _parse_rate_token(kv.pop("d", "const1")),
                space,
            )
        elif head == "spinflip":
            model = SpinFlip(gamma=float(kv.pop("gamma", "1")))
        else:
            raise SpecParseError(f"unknown model kind {head!r} at position 0 of {text!r}")
    except SpecParseError:
        raise
    except ValueError as exc:
        raise SpecParseError(f"{text!r}: {exc}") from None
    if kv:
        raise SpecParseError(f"unknown parameter(s) {sorted(kv)} in {text!r}")
    return model
