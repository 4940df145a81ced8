import math

import numpy as np
import pytest

from ldpaths.errors import DomainError, NoSolutionError, UnsupportedModelError
from ldpaths.models import (
    AffineRate,
    BirthDeath,
    Brownian,
    BrownianDrift,
    GeneralDrift,
    OrnsteinUhlenbeck,
    OUField,
    SpinFlip,
)
from ldpaths.rates import Quartic
from ldpaths.trajectories import (
    action_integral,
    el_closed_form,
    hamilton_flow,
    shoot_bvp,
    spinflip_constants,
    spinflip_energy_relations,
    write_csv,
)


def test_brownian_line_and_action():
    A, T = 1.7, 2.5
    tr = el_closed_form(Brownian(), A, 0.0, T, rate=Quartic(a=1))
    assert np.allclose(tr.positions, A - A / T * tr.times, atol=1e-14)
    assert tr.action == pytest.approx(A * A / (2 * T), rel=1e-14)
    assert tr.total_cost == pytest.approx(A * A / (2 * T) + (A * A - 1) ** 2, rel=1e-14)
    assert tr.positions[-1] == pytest.approx(0.0, abs=1e-9)
    assert action_integral(Brownian(), tr) == pytest.approx(A * A / (2 * T), abs=1e-12)


def test_zero_energy_paths_have_zero_action():
    T = 1.3
    ou = OUField(kappa=0.6, E=0.2)
    g0 = 1.1
    m = 0.2 / 0.6
    b = m + (g0 - m) * math.exp(-0.6 * T)
    assert el_closed_form(ou, g0, b, T).action == pytest.approx(0.0, abs=1e-14)
    sf = SpinFlip(1.4)
    c = 0.4 / 2.4
    b = c + (0.5 - c) * math.exp(-2.4 * T)
    tr = el_closed_form(sf, 0.5, b, T)
    assert tr.action == pytest.approx(0.0, abs=1e-10)
    assert action_integral(sf, tr) == pytest.approx(0.0, abs=1e-10)


def test_ou_action_matches_closed_expression():
    k, T, g0, b = 0.8, 1.7, 1.2, -0.3
    tr = el_closed_form(OrnsteinUhlenbeck(kappa=k), g0, b, T)
    expected = k * (g0 - b * math.exp(k * T)) ** 2 / (math.exp(2 * k * T) - 1)
    assert tr.action == pytest.approx(expected, rel=1e-12)
    assert action_integral(OrnsteinUhlenbeck(kappa=k), tr) == pytest.approx(expected, rel=1e-9)


def test_oufield_sinh_form():
    k, E, T, g0, b = 0.7, 0.1, 30.0, 2.0, 0.142857
    tr = el_closed_form(OUField(kappa=k, E=E), g0, b, T, grid_size=301)
    t = tr.times
    m = E / k
    sinh = m + (g0 - m) * np.sinh(k * (T - t)) / np.sinh(k * T) + (b - m) * np.sinh(k * t) / np.sinh(k * T)
    assert np.max(np.abs(tr.positions - sinh)) <= 1e-9


def test_general_drift_has_no_closed_form():
    with pytest.raises(UnsupportedModelError):
        el_closed_form(GeneralDrift("linear", (("kappa", 1.0),)), 0.5, 0.0, 1.0)


def test_el_residual_for_diffusions():
    # Extremals satisfy x'' = f f' with f = -drift.
    k, T = 1.1, 2.0
    tr = el_closed_form(OUField(kappa=k, E=0.3), 0.8, -0.2, T)
    h = 1e-3
    t = np.linspace(0.2, T - 0.2, 50)
    x = lambda s: tr.evaluator(s)[0]
    xdd = (x(t + h) - 2 * x(t) + x(t - h)) / h**2
    f = k * x(t) - 0.3
    assert np.max(np.abs(xdd - f * k)) <= 1e-5


def test_hamilton_flow_examples():
    tr = hamilton_flow(Brownian(), 1.0, -1.0, 1.0, 0.01)
    assert np.allclose(tr.positions, 1.0 - tr.times, atol=1e-13)
    assert tr.energy == 0.5
    tr = hamilton_flow(SpinFlip(1.0), 0.0, 0.0, 2.0, 0.01)
    assert np.all(tr.positions == 0.0)


def test_hamilton_flow_spinflip_second_derivative():
    tr = hamilton_flow(SpinFlip(1.0), 0.3, 0.2, 1.0, 1e-3)
    x, t = tr.positions, tr.times
    h = t[1] - t[0]
    xdd = (x[2:] - 2 * x[1:-1] + x[:-2]) / h**2
    assert np.max(np.abs(xdd - 4 * x[1:-1])) <= 1e-5


def test_hamilton_flow_exit_flag():
    tr = hamilton_flow(SpinFlip(1.0), 0.9, 3.0, 2.0, 1e-3)
    assert tr.exited
    with pytest.raises(DomainError):
        hamilton_flow(SpinFlip(1.0), 1.5, 0.0, 1.0, 0.01)


def test_shoot_brownian_example():
    (tr,) = shoot_bvp(Brownian(), 1.0, 0.0, 2.0)
    assert tr.p0 == pytest.approx(-0.5, abs=1e-9)


@pytest.mark.parametrize(
    "model,g0,b,T",
    [
        (OrnsteinUhlenbeck(kappa=0.7), 1.5, 0.0, 2.0),
        (OUField(kappa=0.7, E=0.1), -1.0, 0.4, 3.0),
        (SpinFlip(1.0), 0.6, -0.2, 1.0),
        (SpinFlip(1.7), -0.3, 0.5, 1.5),
        (SpinFlip(0.5), 0.8, 0.0, 3.0),
        (BrownianDrift(V=0.5), 0.0, 1.0, 1.0),
    ],
)
def test_closed_form_matches_shooting(model, g0, b, T):
    sols = shoot_bvp(model, g0, b, T)
    assert len(sols) == 1
    sh = sols[0]
    cf = el_closed_form(model, g0, b, T)
    x_cf, p_cf = cf.evaluator(sh.times)
    assert np.max(np.abs(sh.positions - x_cf)) <= 1e-6
    assert np.max(np.abs(sh.momenta - p_cf)) <= 1e-6
    assert sh.action == pytest.approx(cf.action, abs=1e-7)
    assert abs(sh.terminal - b) <= 1e-7


def test_general_drift_reproduces_ou():
    k, g0, b, T = 0.9, 1.2, -0.4, 1.5
    (gd,) = shoot_bvp(GeneralDrift("linear", (("kappa", k),)), g0, b, T)
    cf = el_closed_form(OrnsteinUhlenbeck(kappa=k), g0, b, T)
    assert np.max(np.abs(gd.positions - cf.evaluator(gd.times)[0])) <= 1e-6


def test_shoot_no_solution():
    with pytest.raises(NoSolutionError):
        shoot_bvp(Brownian(), 0.0, 100.0, 1.0, p_max=1.0)


def test_spinflip_energy_relations():
    (xm, xp), (pm, pp) = spinflip_energy_relations(1.0, 0.0, 1.0)
    assert (xm, xp, pm, pp) == (0.0, 0.0, 0.0, 0.0)
    # E=0.1 at T=1 would need |x0| > 1; see the DomainError case below.
    T, E = 1.0, 0.01
    (xm, xp), (pm, pp) = spinflip_energy_relations(1.0, E, T)
    assert xm == -xp
    sf = SpinFlip(1.0)
    for x0, p0 in ((xm, pm), (xp, pp)):
        assert float(sf.hamiltonian(x0, p0)) == pytest.approx(E, abs=1e-12)
        tr = hamilton_flow(sf, x0, p0, T, 1e-3)
        assert tr.terminal == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DomainError):
        spinflip_energy_relations(1.0, 0.1, 1.0)


def test_tanh_invariant_along_flow():
    # tanh(p/2) grows like e^{2t}, so p diverges near t = 0.81 for this start.
    tr = hamilton_flow(SpinFlip(1.0), -0.2, 0.4, 0.5, 1e-3)
    assert not tr.exited
    inv = np.tanh(tr.momenta / 2) * np.exp(-2 * tr.times)
    assert np.max(np.abs(inv - inv[0])) <= 1e-10


def test_spinflip_constants_remark():
    for g in (0.3, 1.0, 1.5, 2.7):
        assert spinflip_constants(g, 0.0)[2] == pytest.approx((g - 1) / (g + 1), abs=1e-15)
    for E in (0.0, 0.2, 1.0, 3.0):
        assert spinflip_constants(1.0, E)[2] == 0.0


def test_energy_constant_along_closed_forms():
    for model, g0, b, T in ((SpinFlip(1.3), 0.2, -0.5, 1.2), (OrnsteinUhlenbeck(kappa=1.0), 1.0, 0.3, 2.0)):
        tr = el_closed_form(model, g0, b, T)
        H = model.hamiltonian(tr.positions, tr.momenta)
        assert np.max(np.abs(H - tr.energy)) <= 1e-9


def test_closed_relation_along_birth_death_flow():
    # xdot^2 = E^2 + 2E(b + d) + (b - d)^2 along any jump-process extremal.
    model = BirthDeath(AffineRate(1.0, 0.3), AffineRate(0.9, -0.2))
    tr = hamilton_flow(model, 0.1, 0.3, 1.0, 1e-3)
    x, p = tr.positions, tr.momenta
    E = tr.energy
    b, d = model.b(x), model.d(x)
    res = model.dH_dp(x, p) ** 2 - (E * E + 2 * E * (b + d) + (b - d) ** 2)
    assert np.max(np.abs(res)) <= 1e-8


def test_action_nonnegative_and_csv(tmp_path):
    tr = el_closed_form(SpinFlip(1.0), 0.4, -0.3, 1.0, grid_size=11)
    assert tr.action >= 0
    write_csv(tr, SpinFlip(1.0), tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,x,p,energy" and len(lines) == 12
    x1 = float(lines[1].split(",")[1])
    assert x1 == tr.positions[0]
