import math

import numpy as np
import pytest
from scipy import integrate, stats

from ldpaths.costs import build_profile, predict_conditional_limit
from ldpaths.errors import EnvelopeError, UnderpoweredError
from ldpaths.models import Brownian, BrownianDrift, OrnsteinUhlenbeck, SpinFlip
from ldpaths.montecarlo import (
    CHUNK,
    McConfig,
    condition_and_compare,
    initial_support,
    run_paths,
    sample_initial,
    simulate_path,
    write_accepted_csv,
)
from ldpaths.rates import Quadratic, Quartic


def brownian_conditioned_density(rate, n, T, b, half_width):
    """Exact finite-n law of X_0 given |X_T - b| <= half_width for Brownian motion."""
    lo, hi, i_min = initial_support(rate, n)
    sigma = math.sqrt(T / n)

    def dens(x):
        window = stats.norm.cdf((b + half_width - x) / sigma) - stats.norm.cdf((b - half_width - x) / sigma)
        return math.exp(-n * (float(rate.value(x)) - i_min)) * window

    total = integrate.quad(dens, lo, hi, limit=400, points=[0.0])[0]

    def mass(a, c):
        return integrate.quad(dens, max(a, lo), min(c, hi), limit=400)[0] / total

    return mass


def normalized_cdf(rate, n):
    lo, hi, i_min = initial_support(rate, n)
    x = np.linspace(lo, hi, 200001)
    w = np.exp(-n * (rate.value(x) - i_min))
    c = integrate.cumulative_trapezoid(w, x, initial=0.0)
    c /= c[-1]
    return lambda t: np.interp(t, x, c)


def test_sample_initial_deterministic_and_chunked():
    a = sample_initial(Quartic(a=2), 200, 2 * CHUNK + 17, seed=5)
    b = sample_initial(Quartic(a=2), 200, 2 * CHUNK + 17, seed=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_initial(Quartic(a=2), 200, 2 * CHUNK + 17, seed=6))


def test_quartic_samples_bimodal():
    x = sample_initial(Quartic(a=2), 200, 40000, seed=1)
    assert abs(x.mean()) < 0.05
    pos, neg = x[x > 0], x[x < 0]
    assert pos.mean() == pytest.approx(2.0, abs=0.01) and neg.mean() == pytest.approx(-2.0, abs=0.01)
    # Laplace: std near a well is 1/sqrt(n i''(2)) = 1/sqrt(200*32).
    laplace = 1 / math.sqrt(200 * 32)
    assert 0.5 * laplace <= pos.std() <= 2 * laplace
    big = sample_initial(Quartic(a=2), 800, 40000, seed=1)
    ratio = pos.std() / big[big > 0].std()
    assert 1.0 <= ratio <= 4.0


def test_samples_match_density_oracle():
    for rate, n in ((Quartic(a=1), 5), (Quartic(a=2), 50), (Quadratic(c=2, m=0.7), 20)):
        x = sample_initial(rate, n, 20000, seed=11)
        assert stats.kstest(x, normalized_cdf(rate, n)).pvalue > 1e-3


def test_quadratic_unimodal():
    x = sample_initial(Quadratic(c=1.5, m=-0.4), 30, 20000, seed=2)
    assert x.mean() == pytest.approx(-0.4, abs=0.01)
    counts, edges = np.histogram(x, bins=30)
    k = int(np.argmax(counts))
    assert np.all(np.diff(counts[: k + 1]) >= -60) and np.all(np.diff(counts[k:]) <= 60)


def test_envelope_failure():
    with pytest.raises(EnvelopeError):
        sample_initial(Quadratic(c=1e20, m=0.3), 1, 10, seed=0)


def test_simulate_deterministic_limits():
    rng = np.random.default_rng(0)
    assert simulate_path(Brownian(), 10**6, 1.0, 1.0, rng=rng) == pytest.approx(1.0, abs=0.01)
    k, T = 0.7, 2.0
    xT = simulate_path(OrnsteinUhlenbeck(kappa=k), 10**6, np.full(200, 1.0), T, rng=rng)
    assert np.mean(xT) == pytest.approx(math.exp(-k * T), abs=1e-3)
    xT = simulate_path(SpinFlip(1.0), 10**4, np.full(50, 0.5), 0.5, rng=rng)
    assert np.mean(xT) == pytest.approx(0.5 * math.exp(-1.0), abs=0.02)


def test_spinflip_law_of_large_numbers():
    g, N, T, x0 = 1.5, 10**4, 1.0, 0.6
    _, t, x = simulate_path(SpinFlip(g), N, x0, T, rng=np.random.default_rng(4), keep_path=True)
    c = (g - 1) / (g + 1)
    ode = c + (x0 - c) * np.exp(-(1 + g) * t)
    assert np.max(np.abs(x - ode)) <= 0.02
    assert np.all(np.abs(x) <= 1.0)


def test_spinflip_stays_on_lattice_and_in_bounds():
    xT = simulate_path(SpinFlip(1.0), 10, np.full(500, 0.9), 3.0, rng=np.random.default_rng(1))
    assert np.all(np.abs(xT) <= 1.0)
    assert np.allclose(xT * 10, np.rint(xT * 10), atol=1e-12)


def test_run_paths_independent_of_threads():
    cfg = McConfig(Brownian(), Quartic(a=1), 10, 0.5, 0.0, paths=3 * CHUNK + 5, time_step=1e-2, seed=9)
    one = run_paths(cfg, threads=1)
    four = run_paths(cfg, threads=4)
    for u, v in zip(one, four):
        assert np.array_equal(u, v)
    assert np.array_equal(one[0], np.arange(cfg.paths))


def test_acceptance_decreases_with_window():
    rates = []
    for hw in (0.2, 0.1, 0.05):
        acc = []
        for seed in range(5):
            cfg = McConfig(Brownian(), Quartic(a=1), 10, 0.5, 0.0, paths=4000, half_width=hw,
                           time_step=1e-2, seed=100 * seed + int(hw * 1000))
            _, _, xT = run_paths(cfg)
            acc.append(np.mean(np.abs(xT) <= hw))
        rates.append(np.mean(acc))
    assert rates[0] > rates[1] > rates[2]


def test_drift_equivalence_histograms():
    V, T, n, rate = 0.8, 0.5, 4, Quartic(a=0.7)
    pred = predict_conditional_limit(build_profile(Brownian(), rate, 0.0, T))
    for seed in range(5):
        common = dict(rate=rate, n=n, T=T, paths=3 * CHUNK, half_width=0.1, time_step=0.05)
        e0, _ = condition_and_compare(McConfig(Brownian(), b=0.0, seed=seed, **common), pred)
        e1, _ = condition_and_compare(McConfig(BrownianDrift(V=V), b=V * T, seed=1000 + seed, **common), pred)
        m = min(e0.accepted_count, e1.accepted_count)
        assert m >= 1000
        # Two-sample KS critical value at level 0.001 for two samples of size m.
        crit = 1.95 * math.sqrt(2 / m)
        assert stats.ks_2samp(e0.start_samples[:m], e1.start_samples[:m]).statistic <= crit


def test_symmetric_pair_verdict_matches_oracle():
    rate, n, T, hw = Quartic(a=1), 10, 1.0, 0.05
    pred = predict_conditional_limit(build_profile(Brownian(), rate, 0.0, T))
    assert pred.kind == "symmetric_pair"
    cfg = McConfig(Brownian(), rate, n, T, 0.0, paths=200_000, half_width=hw, seed=3)
    emp, verdict = condition_and_compare(cfg, pred)
    mass = brownian_conditioned_density(rate, n, T, 0.0, hw)
    se = math.sqrt(0.25 / emp.accepted_count)
    for loc in pred.locations:
        oracle = mass(loc - verdict["radius"], loc + verdict["radius"])
        assert emp.mass_near[float(loc)] == pytest.approx(oracle, abs=4 * se)
    assert verdict["verdict"] == "PASS"
    assert emp.acceptance_rate == emp.accepted_count / cfg.paths
    assert sum(verdict["masses"]) <= 1.0


def test_point_mass_verdict_matches_oracle():
    rate, n, T, hw = Quartic(a=1), 5, 0.05, 0.05
    pred = predict_conditional_limit(build_profile(Brownian(), rate, 0.0, T))
    assert pred.kind == "point_mass"
    cfg = McConfig(Brownian(), rate, n, T, 0.0, paths=200_000, half_width=hw, time_step=5e-3, seed=3)
    emp, verdict = condition_and_compare(cfg, pred)
    oracle = brownian_conditioned_density(rate, n, T, 0.0, hw)(-0.25, 0.25)
    se = math.sqrt(oracle * (1 - oracle) / emp.accepted_count)
    assert emp.mass_near[0.0] == pytest.approx(oracle, abs=4 * se + 1e-3)
    assert verdict["verdict"] == "PASS"


def test_one_sided_mass_off_the_bad_point():
    rate, n, T, hw, b = Quartic(a=1), 10, 1.0, 0.05, 0.3
    profile = build_profile(Brownian(), rate, b, T)
    pred = predict_conditional_limit(profile)
    assert pred.kind == "point_mass" and pred.locations[0] > 0
    cfg = McConfig(Brownian(), rate, n, T, b, paths=100_000, half_width=hw, seed=7)
    emp, _ = condition_and_compare(cfg, pred)
    pos = np.mean(emp.start_samples > 0)
    oracle = brownian_conditioned_density(rate, n, T, b, hw)(0.0, 10.0)
    assert pos > 0.5
    assert pos == pytest.approx(oracle, abs=4 * math.sqrt(0.25 / emp.accepted_count))


def test_underpowered_and_validation():
    pred = predict_conditional_limit(build_profile(Brownian(), Quartic(a=2), 0.0, 1.0))
    cfg = McConfig(Brownian(), Quartic(a=2), 50, 1.0, 0.0, paths=CHUNK, time_step=1e-2)
    with pytest.raises(UnderpoweredError):
        condition_and_compare(cfg, pred)
    for kwargs in ({"n": 0}, {"paths": 0}, {"half_width": 0.0}, {"time_step": 0.0}, {"T": 0.0}):
        args = dict(model=Brownian(), rate=Quartic(a=2), n=10, T=1.0, b=0.0)
        args.update(kwargs)
        with pytest.raises(ValueError):
            McConfig(**args)


def test_accepted_csv(tmp_path):
    rate = Quadratic(c=1.0, m=0.0)
    cfg = McConfig(Brownian(), rate, 5, 0.2, 0.0, paths=CHUNK, half_width=0.2, time_step=1e-2, seed=1)
    pred = predict_conditional_limit(build_profile(Brownian(), rate, 0.0, 0.2))
    emp, _ = condition_and_compare(cfg, pred)
    write_accepted_csv(emp, tmp_path / "acc.csv")
    lines = (tmp_path / "acc.csv").read_text().splitlines()
    assert lines[0] == "path_index,x0,xT" and len(lines) == emp.accepted_count + 1
    i, x0, xT = lines[1].split(",")
    assert int(i) == emp.path_index[0] and float(x0) == emp.start_samples[0] and float(xT) == emp.terminal[0]
