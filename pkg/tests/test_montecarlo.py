import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from wignerlab.chebyshev import parse_function
from wignerlab.ensemble import EnsembleSpec, gaussian, match_two_point, sample_wigner
from wignerlab.errors import BudgetExceeded, ConfigError, EmptyBatch, NonPositiveStatistic
from wignerlab.montecarlo import (ExperimentConfig, char_fn_estimate, esseen_bound, jackknife,
                                  ks_distance, les_kernel, rate_fit, replica_map, run_experiment,
                                  summarize)
from wignerlab.spectral import decompose, les
from wignerlab.theory import mu_f

GOE = EnsembleSpec.goe()


# ---------------------------------------------------------------- KS distance

def test_ks_three_points():
    assert ks_distance([-1, 0, 1]) == pytest.approx(0.17468, abs=1e-5)


def test_ks_exact_quantiles():
    M = 10 ** 6
    x = norm.ppf((np.arange(1, M + 1) - 0.5) / M)
    assert ks_distance(x) == pytest.approx(1 / (2 * M), rel=1e-6)


def test_ks_constant_batch():
    assert ks_distance([0, 0, 0]) == pytest.approx(0.5, abs=1e-15)


def test_ks_empty():
    with pytest.raises(EmptyBatch):
        ks_distance([])
    with pytest.raises(EmptyBatch):
        ks_distance([0.3])


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40), st.randoms())
def test_ks_permutation_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert ks_distance(xs) == ks_distance(ys)


# ---------------------------------------------------------------- characteristic function, Esseen

def test_charfn_zero_batch():
    np.testing.assert_array_equal(char_fn_estimate([0.0] * 5, [0.0, 1.0, 7.5]), 1.0)


def test_charfn_two_points():
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(char_fn_estimate([1.0, -1.0], t), np.cos(t), atol=1e-15)


def test_charfn_normal_draws():
    x = np.random.default_rng(8).standard_normal(10 ** 6)
    assert abs(char_fn_estimate(x, [1.0])[0] - math.exp(-0.5)) <= 0.003


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30),
       st.lists(st.floats(-20, 20), min_size=1, max_size=5))
def test_charfn_bounded(xs, ts):
    psi = char_fn_estimate(xs, ts + [0.0])
    assert np.all(np.abs(psi) <= 1 + 1e-12)
    assert psi[-1] == 1.0


def test_esseen_exact_gaussian():
    for T in (1.0, 10.0, 100.0):
        assert esseen_bound(lambda t: math.exp(-t * t / 2), 1.0, T) == pytest.approx(1 / T)


def test_esseen_small_perturbation():
    eps, T = 1e-3, 20.0
    b = esseen_bound(lambda t: math.exp(-t * t / 2) * (1 + eps * t), 1.0, T)
    ref = eps * math.sqrt(math.pi / 2) * math.erf(T / math.sqrt(2)) + 1 / T
    assert b <= eps * math.sqrt(math.pi / 2) + 1 / T + 1e-7
    assert b == pytest.approx(ref, rel=1e-4)


def test_esseen_vanishes_for_large_T():
    vals = [esseen_bound(lambda t: math.exp(-t * t / 2), 1.0, T) for T in (1e2, 1e4, 1e6)]
    assert vals[-1] < 1e-5 and vals[0] > vals[1] > vals[2]


def test_esseen_needs_positive_T():
    with pytest.raises(ConfigError):
        esseen_bound(lambda t: 1.0, 1.0, 0.0)


def test_ks_charfn_coupling():
    rng = np.random.default_rng(31)
    for _ in range(5):
        x = rng.standard_normal(50000)
        if ks_distance(x) < 0.01:
            assert abs(char_fn_estimate(x, [1.0])[0] - math.exp(-0.5)) < 0.05


# ---------------------------------------------------------------- moments and jackknife

@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=60))
def test_jackknife_mean_is_classical(xs):
    x = np.array(xs)
    _, se = jackknife(x, np.mean)
    ref = x.std(ddof=1) / math.sqrt(len(x))
    assert se == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_summary_se_of_mean():
    x = np.random.default_rng(0).standard_normal(500)
    s = summarize(x, 10, bootstrap=20)
    assert s.se_mean == pytest.approx(x.std(ddof=1) / math.sqrt(500), rel=1e-10)
    assert s.se_var >= 0 and s.se_skew >= 0 and s.ks_se >= 0


def test_summary_skewness_matches_jackknife():
    x = np.random.default_rng(1).exponential(size=300)

    def skew(v):
        n = len(v)
        d = v - v.mean()
        k2 = np.sum(d * d) / (n - 1)
        k3 = n * np.sum(d ** 3) / ((n - 1) * (n - 2))
        return k3 / k2 ** 1.5

    s = summarize(x, 10, bootstrap=20)
    est, se = jackknife(x, skew)
    assert s.skewness == pytest.approx(est, rel=1e-9)
    assert s.se_skew == pytest.approx(se, rel=1e-6)


def test_summary_constant_batch():
    s = summarize(np.full(50, 3.0), 10, bootstrap=10)
    assert s.skewness == 0.0 and math.isinf(s.se_skew) and s.degenerate


# ---------------------------------------------------------------- rate fits

def test_rate_fit_exact_power():
    pts = [(n, 3.0 / n, 0.0) for n in (64, 128, 256)]
    fit = rate_fit(pts)
    assert fit.slope == pytest.approx(-1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_rate_fit_noisy_half_power():
    rng = np.random.default_rng(5)
    ns = [64, 128, 256, 512, 1024]
    pts = [(n, n ** -0.5 * (1 + 0.05 * rng.standard_normal()), 0.05 * n ** -0.5) for n in ns]
    fit = rate_fit(pts)
    assert -0.6 <= fit.slope <= -0.4
    assert abs(fit.slope + 0.5) <= 2 * fit.slope_se


def test_rate_fit_repeated_n():
    fit = rate_fit([(64, 0.1, 0.01), (64, 0.11, 0.01), (128, 0.07, 0.01)])
    assert math.isfinite(fit.slope)
    with pytest.raises(ConfigError):
        rate_fit([(64, 0.1, 0.01), (64, 0.11, 0.01), (64, 0.12, 0.01)])


def test_rate_fit_errors():
    with pytest.raises(NonPositiveStatistic):
        rate_fit([(64, 0.1, 0.01), (128, 0.0, 0.01), (256, 0.05, 0.01)])
    with pytest.raises(ConfigError):
        rate_fit([(64, 0.1, 0.01), (128, 0.05, 0.01)])


@given(st.lists(st.tuples(st.integers(2, 5000), st.floats(1e-4, 10), st.floats(1e-5, 1)),
                min_size=3, max_size=8), st.randoms())
def test_rate_fit_permutation_invariant(pts, rnd):
    if len({p[0] for p in pts}) < 2:
        return
    a = rate_fit(pts)
    q = list(pts)
    rnd.shuffle(q)
    b = rate_fit(q)
    assert a.slope == b.slope
    assert abs(a.r_squared) <= 1 + 1e-12


# ---------------------------------------------------------------- sampling engine

@pytest.mark.parametrize("key", ["poly:0.5,1,1", "cheb:3", "cheb:4", "gauss_bump:0.2,0.7"])
def test_les_kernel_paths_agree_with_eigenvalues(key):
    spec = EnsembleSpec(1, match_two_point(2, 2), gaussian(1.0))
    f = parse_function(key)
    out = les_kernel(spec, 20, 3, 5, 9, key)
    for i, r in enumerate(range(5, 9)):
        w = sample_wigner(spec, 20, 3, r)
        s = decompose(w)
        assert out[i, 0] == pytest.approx(les(f, s), abs=1e-9)
        assert out[i, 1] == pytest.approx(s.trace_h, abs=1e-12)
        assert out[i, 2] == pytest.approx(s.sum_diag_sq, abs=1e-12)


def test_replica_map_worker_independence():
    k = lambda *a: les_kernel(*a, f_key="cheb:4")  # noqa: E731
    import functools
    kern = functools.partial(les_kernel, f_key="cheb:4")
    a = replica_map(kern, GOE, 16, 11, 700, workers=1)
    b = replica_map(kern, GOE, 16, 11, 700, workers=3)
    c = replica_map(kern, GOE, 16, 11, 700, workers=1, chunk=50)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert k is not None


def _cfg(**kw):
    base = dict(ensemble=GOE, f="cheb:2", gamma=0.0, n_grid=(32, 64), replicas=300, seed=4,
                statistic="ks")
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_deterministic_and_worker_free():
    a = run_experiment(_cfg())
    b = run_experiment(_cfg(), workers=2)
    assert a.rows == b.rows
    for n in (32, 64):
        assert np.array_equal(a.raw[n], b.raw[n])


def test_run_experiment_grid_order_independent():
    a = run_experiment(_cfg(n_grid=(32, 64)))
    b = run_experiment(_cfg(n_grid=(64,)))
    assert np.array_equal(a.raw[64], b.raw[64])
    assert a.rows[1] == b.rows[0]


def test_run_experiment_variance_t2():
    res = run_experiment(_cfg(n_grid=(512,), replicas=2000, statistic="variance", seed=77))
    assert abs(res.summaries[0].variance - 1.0) <= 0.1


def test_run_experiment_synthetic_normal():
    res = run_experiment(_cfg(n_grid=(8,), replicas=4000, synthetic="normal"))
    assert res.summaries[0].ks <= 4 / math.sqrt(4000)


def test_run_experiment_budget():
    with pytest.raises(BudgetExceeded):
        run_experiment(_cfg(max_cost=1e3))


def test_run_experiment_charfn_rows():
    res = run_experiment(_cfg(statistic="charfn", t_grid=(0.5, 1.0)))
    assert len(res.rows) == 4
    assert all(r[2].startswith("charfn@t=") for r in res.rows)


@pytest.mark.parametrize("bad", [dict(n_grid=()), dict(n_grid=(64, 32)), dict(replicas=50),
                                 dict(statistic="median"), dict(f="nope:1"),
                                 dict(standardize="other")])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        _cfg(**bad)


def test_config_json_roundtrip():
    c = _cfg()
    assert ExperimentConfig.from_json(c.to_json()) == c


# ---------------------------------------------------------------- Monte Carlo oracles for mu_f

def test_mu_t4_goe_against_simulation():
    f = parse_function("cheb:4")
    for n in (200, 400):
        res = run_experiment(_cfg(f="cheb:4", n_grid=(n,), replicas=2000, seed=21,
                                  statistic="variance"))
        s = res.summaries[0]
        pred = mu_f(None, f, GOE, n).value
        assert abs(s.mean - pred) <= 4 * s.se_mean + 5.0 / n


def test_mu_skew_term_against_simulation():
    spec = EnsembleSpec(1, match_two_point(2, 8), gaussian(1.0))
    f = parse_function("cheb:3")
    n = 100
    res = run_experiment(_cfg(ensemble=spec, f="cheb:3", n_grid=(n,), replicas=20000, seed=22,
                              statistic="variance"))
    s = res.summaries[0]
    pred = mu_f(None, f, spec, n).value
    assert pred == pytest.approx(0.4)
    assert abs(s.mean - pred) <= 4 * s.se_mean + 5.0 / n
    assert s.mean > 0.2
