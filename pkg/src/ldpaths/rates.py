"""Initial-measure rate functions ``i(x)`` with exact derivatives.

Every rate function is a frozen dataclass exposing ``value``, ``deriv`` and
``second_deriv`` (vectorised over numpy arrays) plus an optional bounded
``domain``.  The module-level helpers (:func:`eval_i`, :func:`minima_of_i`, ...)
add the domain checks and structural queries used by the cost analysis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DomainError, SpecParseError, UndefinedCurvatureError

__all__ = [
    "RateFunction",
    "Quartic",
    "TiltedQuartic",
    "Polynomial",
    "Quadratic",
    "OscillatoryIntegral",
    "sextic",
    "SEXTIC_COEFFS",
    "eval_i",
    "deriv_i",
    "second_deriv_i",
    "curvature_lower_bound",
    "minima_of_i",
    "parse_rate",
    "UNBOUNDED_BELOW",
]

# Ascending powers: 40 - 42x^2 + 38x^3 + 9x^4 - 24x^5 + 7x^6.
SEXTIC_COEFFS = (40.0, 0.0, -42.0, 38.0, 9.0, -24.0, 7.0)

UNBOUNDED_BELOW = -math.inf

TIE_TOL = 1e-9


@dataclass(frozen=True)
class RateFunction:
    """Base class; ``domain`` is ``None`` for the full line or ``(lo, hi)``."""

    domain: tuple[float, float] | None = field(default=None, kw_only=True)

    even = False

    def value(self, x):
        raise NotImplementedError

    def deriv(self, x):
        raise NotImplementedError

    def second_deriv(self, x):
        raise NotImplementedError

    def polynomial(self) -> np.ndarray | None:
        """Ascending coefficients when ``i`` is a polynomial, else ``None``."""
        return None

    def grammar(self) -> str:
        raise NotImplementedError

    def _domain_suffix(self) -> str:
        if self.domain is None:
            return ""
        return f",lo={self.domain[0]!r},hi={self.domain[1]!r}"

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.domain is None:
            return np.isfinite(x)
        lo, hi = self.domain
        return (x >= lo) & (x <= hi)

    def restricted(self, lo: float, hi: float) -> "RateFunction":
        """Copy with the domain intersected with ``[lo, hi]``."""
        from dataclasses import replace

        if self.domain is not None:
            lo, hi = max(lo, self.domain[0]), min(hi, self.domain[1])
        return replace(self, domain=(float(lo), float(hi)))


@dataclass(frozen=True)
class Quartic(RateFunction):
    """Double well ``(x^2 - a^2)^2`` with zeros at ``+-a``."""

    a: float = 1.0
    even = True

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("quartic requires a > 0")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return (x * x - self.a**2) ** 2

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return 4.0 * x * (x * x - self.a**2)

    def second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return 12.0 * x * x - 4.0 * self.a**2

    def polynomial(self):
        a2 = self.a**2
        return np.array([a2 * a2, 0.0, -2.0 * a2, 0.0, 1.0])

    def grammar(self):
        return f"quartic:a={self.a!r}" + self._domain_suffix()


@dataclass(frozen=True)
class TiltedQuartic(RateFunction):
    """``(x^2 - a^2)^2 + x + r``: a double well in a unit field."""

    a: float = 1.0
    r: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("tilted quartic requires a > 0")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return (x * x - self.a**2) ** 2 + x + self.r

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return 4.0 * x * (x * x - self.a**2) + 1.0

    def second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return 12.0 * x * x - 4.0 * self.a**2

    def polynomial(self):
        a2 = self.a**2
        return np.array([a2 * a2 + self.r, 1.0, -2.0 * a2, 0.0, 1.0])

    def grammar(self):
        return f"tilted:a={self.a!r},r={self.r!r}" + self._domain_suffix()


@dataclass(frozen=True)
class Polynomial(RateFunction):
    """Polynomial with ascending coefficients ``c0 + c1 x + ... + cn x^n``."""

    coeffs: tuple[float, ...] = (0.0, 0.0, 1.0)
    label: str = "poly"

    def __post_init__(self):
        c = tuple(float(v) for v in self.coeffs)
        while len(c) > 1 and c[-1] == 0.0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)

    @property
    def even(self):
        return all(v == 0.0 for v in self.coeffs[1::2])

    def _horner(self, c, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x) + c[-1]
        for ck in c[-2::-1]:
            out = out * x + ck
        return out

    def value(self, x):
        return self._horner(self.coeffs, x)

    def deriv(self, x):
        c = np.polynomial.polynomial.polyder(self.coeffs)
        return self._horner(c, x)

    def second_deriv(self, x):
        c = np.polynomial.polynomial.polyder(self.coeffs, 2)
        return self._horner(c, x)

    def polynomial(self):
        return np.array(self.coeffs)

    def grammar(self):
        if self.label == "sextic" and self.coeffs == SEXTIC_COEFFS:
            return "sextic" + (":" + self._domain_suffix()[1:] if self.domain else "")
        return "poly:" + ",".join(repr(v) for v in self.coeffs) + self._domain_suffix()


def sextic(**kwargs) -> Polynomial:
    """The non-symmetric sextic with global minima at -1 and 2."""
    return Polynomial(coeffs=SEXTIC_COEFFS, label="sextic", **kwargs)


@dataclass(frozen=True)
class Quadratic(RateFunction):
    """Strictly convex ``c (x - m)^2``; curvature ``i'' = 2c``."""

    c: float = 1.0
    m: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("quadratic requires c > 0")

    @property
    def even(self):
        return self.m == 0.0

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.c * (x - self.m) ** 2

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.c * (x - self.m)

    def second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, 2.0 * self.c)

    def polynomial(self):
        return np.array([self.c * self.m**2, -2.0 * self.c * self.m, self.c])

    def grammar(self):
        return f"quad:c={self.c!r},m={self.m!r}" + self._domain_suffix()


# Below this radius the integral of u cos^2(1/u) is replaced by u^2/4; the
# neglected oscillatory part is O(radius^3).
_OSC_TAIL = 1e-4
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _gl(f, lo, hi):
    """Gauss-Legendre over each panel ``[lo[k], hi[k]]``."""
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    u = lo + half * (_GL_NODES + 1.0)
    return (half * f(u) * _GL_WEIGHTS).sum(axis=-1)


def _osc_integrand(u):
    return u * np.cos(1.0 / u) ** 2


@lru_cache(maxsize=1)
def _osc_table():
    # Anchors are the zeros of cos(1/u), decreasing towards the tail radius.
    kmax = int(math.floor((2.0 / _OSC_TAIL / math.pi - 1.0) / 2.0))
    k = np.arange(kmax, -1, -1)
    anchors = 2.0 / ((2 * k + 1) * math.pi)
    anchors = np.concatenate([[_OSC_TAIL], anchors])
    pieces = _gl(_osc_integrand, anchors[:-1], anchors[1:])
    cumulative = np.concatenate([[_OSC_TAIL**2 / 4.0], _OSC_TAIL**2 / 4.0 + np.cumsum(pieces)])
    return anchors, cumulative


def _osc_integral(r: np.ndarray) -> np.ndarray:
    """Integral of ``u cos^2(1/u)`` over ``(0, r]`` for ``r >= 0``."""
    anchors, cumulative = _osc_table()
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = r <= _OSC_TAIL
    out[small] = r[small] ** 2 / 4.0
    mid = (~small) & (r <= anchors[-1])
    if mid.any():
        idx = np.searchsorted(anchors, r[mid], side="right") - 1
        out[mid] = cumulative[idx] + _gl(_osc_integrand, anchors[idx], r[mid])
    big = r > anchors[-1]
    if big.any():
        rb = r[big]
        # Beyond the last zero the integrand is smooth; split into unit panels.
        npan = np.maximum(1, np.ceil(rb - anchors[-1]).astype(int))
        total = np.full_like(rb, cumulative[-1])
        for j in range(int(npan.max())):
            lo = anchors[-1] + (rb - anchors[-1]) * j / npan
            hi = anchors[-1] + (rb - anchors[-1]) * (j + 1) / npan
            part = _gl(_osc_integrand, lo, hi)
            total = total + np.where(j < npan, part, 0.0)
        out[big] = total
    return out


@dataclass(frozen=True)
class OscillatoryIntegral(RateFunction):
    """``i(A) = int_0^|A| |u| cos^2(1/u) du``; even, curvature unbounded near 0."""

    even = True

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return _osc_integral(np.abs(x))

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = x * np.cos(1.0 / x) ** 2
        return np.where(x == 0.0, 0.0, out)

    def second_deriv(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x == 0.0):
            raise UndefinedCurvatureError("i'' of the oscillatory integral is undefined at 0")
        return np.cos(1.0 / x) ** 2 + np.sin(2.0 / x) / x

    def grammar(self):
        return "osc" + (":" + self._domain_suffix()[1:] if self.domain else "")


def _check_domain(spec: RateFunction, x):
    if not np.all(spec.contains(x)):
        raise DomainError(f"x={x!r} outside domain {spec.domain} of {spec.grammar()}")


def _scalar(out, x):
    return float(out) if np.ndim(x) == 0 else out


def eval_i(spec: RateFunction, x):
    _check_domain(spec, x)
    return _scalar(spec.value(x), x)


def deriv_i(spec: RateFunction, x):
    _check_domain(spec, x)
    return _scalar(spec.deriv(x), x)


def second_deriv_i(spec: RateFunction, x):
    _check_domain(spec, x)
    return _scalar(spec.second_deriv(x), x)


def _real_roots(coeffs_ascending, lo=-math.inf, hi=math.inf) -> np.ndarray:
    c = np.trim_zeros(np.asarray(coeffs_ascending, dtype=float), "b")
    if len(c) <= 1:
        return np.empty(0)
    # np.roots builds the companion matrix; it wants descending order.
    roots = np.roots(c[::-1])
    scale = max(1.0, float(np.max(np.abs(roots)))) if len(roots) else 1.0
    real = roots[np.abs(roots.imag) <= 1e-7 * scale].real
    dc = np.polynomial.polynomial.polyder(c)
    polished = []
    for r in real:
        for _ in range(8):
            d = np.polynomial.polynomial.polyval(r, dc)
            if d == 0.0:
                break
            step = np.polynomial.polynomial.polyval(r, c) / d
            r -= step
            if abs(step) <= 1e-16 * max(1.0, abs(r)):
                break
        polished.append(r)
    out = np.array(sorted(polished))
    return out[(out >= lo) & (out <= hi)]


def curvature_lower_bound(spec: RateFunction) -> float:
    """``inf i''`` over the domain; :data:`UNBOUNDED_BELOW` when no bound exists."""
    if isinstance(spec, OscillatoryIntegral):
        return UNBOUNDED_BELOW
    c = spec.polynomial()
    c2 = np.polynomial.polynomial.polyder(c, 2)
    lo, hi = spec.domain if spec.domain is not None else (-math.inf, math.inf)
    c2 = np.trim_zeros(c2, "b")
    if len(c2) == 0:
        return 0.0
    deg = len(c2) - 1
    if spec.domain is None and deg >= 1 and (deg % 2 == 1 or c2[-1] < 0):
        return UNBOUNDED_BELOW
    candidates = list(_real_roots(np.polynomial.polynomial.polyder(c2), lo, hi))
    candidates += [v for v in (lo, hi) if math.isfinite(v)]
    if not candidates:
        return float(c2[0]) if deg == 0 else UNBOUNDED_BELOW
    return float(min(np.polynomial.polynomial.polyval(np.array(candidates), c2)))


def minima_of_i(spec: RateFunction) -> list[tuple[float, float, bool]]:
    """Local minima ``(location, value, is_global)`` of a polynomial rate.

    Stationary points come from the companion matrix of ``i'`` and are
    classified by ``i''``; boundary points of a bounded domain count as
    minima when ``i`` increases into the interior.
    """
    c = spec.polynomial()
    if c is None:
        raise TypeError(f"minima_of_i needs a polynomial rate, got {spec.grammar()}")
    lo, hi = spec.domain if spec.domain is not None else (-math.inf, math.inf)
    dc = np.polynomial.polynomial.polyder(c)
    found = []
    for r in _real_roots(dc, lo, hi):
        if spec.second_deriv(r) > 0:
            found.append(float(r))
    for edge, sign in ((lo, 1.0), (hi, -1.0)):
        if math.isfinite(edge) and sign * float(spec.deriv(edge)) > 0:
            found.append(float(edge))
    found = sorted(set(found))
    values = [float(spec.value(x)) for x in found]
    if not values:
        return []
    best = min(values)
    return [(x, v, v - best <= TIE_TOL) for x, v in zip(found, values)]


def _kv(body: str) -> dict[str, str]:
    out = {}
    for item in filter(None, body.split(",")):
        if "=" not in item:
            raise SpecParseError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise SpecParseError(f"not a number in {where}: {text!r}") from None


def parse_rate(text: str) -> RateFunction:
    """Parse ``quartic:a=2``, ``tilted:a=2,r=2.01539``, ``sextic``,
    ``poly:c0,...,cn``, ``osc`` or ``quad:c=1,m=0``.

    Any kind accepts ``lo=..,hi=..`` to restrict the domain.
    """
    head, _, body = text.strip().partition(":")
    head = head.lower()
    try:
        if head == "poly":
            parts = [p for p in body.split(",") if p]
            nums = [p for p in parts if "=" not in p]
            kv = _kv(",".join(p for p in parts if "=" in p))
            spec: RateFunction = Polynomial(coeffs=tuple(_float(p, text) for p in nums))
        else:
            kv = _kv(body)
            if head == "quartic":
                spec = Quartic(a=_float(kv.pop("a", "1"), text))
            elif head == "tilted":
                spec = TiltedQuartic(a=_float(kv.pop("a", "1"), text), r=_float(kv.pop("r", "0"), text))
            elif head == "sextic":
                spec = sextic()
            elif head == "osc":
                spec = OscillatoryIntegral()
            elif head == "quad":
                spec = Quadratic(c=_float(kv.pop("c", "1"), text), m=_float(kv.pop("m", "0"), text))
            else:
                raise SpecParseError(f"unknown rate kind {head!r} at position 0 of {text!r}")
    except ValueError as exc:
        if isinstance(exc, SpecParseError):
            raise
        raise SpecParseError(f"{text!r}: {exc}") from None
    lo, hi = kv.pop("lo", None), kv.pop("hi", None)
    if kv:
        raise SpecParseError(f"unknown parameter(s) {sorted(kv)} in {text!r}")
    if lo is not None or hi is not None:
        spec = spec.restricted(_float(lo or "-inf", text), _float(hi or "inf", text))
    return spec
