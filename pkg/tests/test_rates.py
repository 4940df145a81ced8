import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from ldpaths.errors import DomainError, SpecParseError, UndefinedCurvatureError
from ldpaths.rates import (
    UNBOUNDED_BELOW,
    OscillatoryIntegral,
    Polynomial,
    Quadratic,
    Quartic,
    TiltedQuartic,
    curvature_lower_bound,
    deriv_i,
    eval_i,
    minima_of_i,
    parse_rate,
    second_deriv_i,
    sextic,
)


def osc_oracle(A):
    # Antiderivative through the cosine integral, with w = 2/A.
    w = 2.0 / A
    si, ci = special.sici(w)
    return A * A / 4.0 + 0.5 * (2.0 * math.cos(w) / w**2 - 2.0 * math.sin(w) / w + 2.0 * ci)


def test_quartic_examples():
    q = Quartic(a=2)
    assert eval_i(q, 2.0) == 0.0
    assert eval_i(q, 0.0) == 16.0
    assert deriv_i(q, 1.0) == -12.0
    assert deriv_i(q, 0.0) == 0.0
    assert second_deriv_i(q, 0.0) == -16.0


def test_osc_zero_and_curvature_error():
    osc = OscillatoryIntegral()
    assert eval_i(osc, 0.0) == 0.0
    assert deriv_i(osc, 0.0) == 0.0
    with pytest.raises(UndefinedCurvatureError):
        second_deriv_i(osc, 0.0)


@pytest.mark.parametrize("A", [1e-3, 0.01, 0.05, 0.137, 0.5, 1.0, 2.5, 7.0])
def test_osc_matches_cosine_integral(A):
    assert abs(eval_i(OscillatoryIntegral(), A) - osc_oracle(A)) <= 1e-10


def test_osc_nondecreasing():
    x = np.linspace(0.0, 3.0, 20001)
    v = OscillatoryIntegral().value(x)
    assert np.all(np.diff(v) >= -1e-15)


def test_domain_violation():
    q = parse_rate("quartic:a=2,lo=-1,hi=1")
    assert q.domain == (-1.0, 1.0)
    with pytest.raises(DomainError):
        eval_i(q, 1.5)


def test_curvature_bounds():
    assert curvature_lower_bound(Quartic(a=2)) == -16.0
    assert curvature_lower_bound(Quadratic(c=1.5, m=0.3)) == 3.0
    assert curvature_lower_bound(OscillatoryIntegral()) == UNBOUNDED_BELOW
    # i'' of the sextic is a quartic with positive leading coefficient.
    s = sextic()
    x = np.linspace(-3, 3, 60001)
    assert curvature_lower_bound(s) <= s.second_deriv(x).min() + 1e-9
    assert curvature_lower_bound(s) >= s.second_deriv(x).min() - 1e-3


def test_minima():
    q = minima_of_i(Quartic(a=2))
    assert [(round(x, 12), abs(v) < 1e-12, g) for x, v, g in q] == [(-2.0, True, True), (2.0, True, True)]
    s = [(x, g) for x, _, g in minima_of_i(sextic()) if g]
    assert np.allclose([x for x, _ in s], [-1.0, 2.0], atol=1e-12)
    assert minima_of_i(Quadratic(c=2, m=0.7)) == [(0.7, 0.0, True)]


def test_sextic_coefficients_and_horner():
    s = sextic()
    x = 0.37
    direct = 7 * x**6 - 24 * x**5 + 9 * x**4 + 38 * x**3 - 42 * x**2 + 40
    assert s.value(x) == pytest.approx(direct, rel=1e-15)
    assert s.value(-1.0) == 0.0 and s.value(2.0) == 0.0


def test_tilted_is_quartic_plus_line():
    x = np.linspace(-3, 3, 101)
    t = TiltedQuartic(a=2, r=2.01539)
    assert np.array_equal(t.value(x), Quartic(a=2).value(x) + x + 2.01539)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5, allow_nan=False))
def test_even_symmetry(x):
    for spec in (Quartic(a=1.3), Polynomial(coeffs=(1.0, 0.0, -2.0, 0.0, 1.0)), OscillatoryIntegral()):
        assert abs(spec.value(x) - spec.value(-x)) <= 1e-12


def test_even_flags():
    assert Quartic(a=2).even and OscillatoryIntegral().even
    assert not sextic().even and not TiltedQuartic(a=1).even
    assert Polynomial(coeffs=(1.0, 0.0, 3.0)).even


def test_derivatives_match_finite_differences(rng):
    specs = [Quartic(a=2), TiltedQuartic(a=1.5, r=0.2), sextic(), Quadratic(c=0.8, m=-0.4), OscillatoryIntegral()]
    for spec in specs:
        x = rng.uniform(0.3, 3.0, 1000) * rng.choice([-1, 1], 1000)
        h = 1e-6
        fd = (spec.value(x + h) - spec.value(x - h)) / (2 * h)
        d = spec.deriv(x)
        assert np.all(np.abs(fd - d) <= 1e-6 * np.maximum(1.0, np.abs(d)))
        fd2 = (spec.deriv(x + h) - spec.deriv(x - h)) / (2 * h)
        d2 = spec.second_deriv(x)
        assert np.all(np.abs(fd2 - d2) <= 1e-5 * np.maximum(1.0, np.abs(d2)))


def test_curvature_bound_below_samples(rng):
    for spec in (Quartic(a=0.7), sextic(), TiltedQuartic(a=2, r=0), Quadratic(c=1, m=0)):
        d = curvature_lower_bound(spec)
        x = rng.uniform(-10, 10, 5000)
        assert np.all(spec.second_deriv(x) >= d - 1e-9)


def test_parse_rate_grammar():
    assert parse_rate("quartic:a=2") == Quartic(a=2.0)
    assert parse_rate("tilted:a=2,r=2.01539") == TiltedQuartic(a=2.0, r=2.01539)
    assert parse_rate("sextic") == sextic()
    assert parse_rate("poly:1,0,-2,0,1").value(1.0) == 0.0
    assert isinstance(parse_rate("osc"), OscillatoryIntegral)
    assert parse_rate("quad:c=1,m=0") == Quadratic(c=1.0, m=0.0)
    for spec in ("quartic:a=2", "tilted:a=2.0,r=2.01539", "sextic", "osc", "quad:c=1.0,m=0.5"):
        p = parse_rate(spec)
        assert parse_rate(p.grammar()) == p
    for bad in ("cubic:a=1", "quartic:a=x", "quartic:b=1", "quartic:a"):
        with pytest.raises(SpecParseError):
            parse_rate(bad)
