import math

import numpy as np
import pytest

from nsteplab import stats
from nsteplab.errors import ContractError
from nsteplab.trainer import EpisodeRecord
from oracles import t_cdf_quad


def test_t_cdf_against_quadrature():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        dof = float(rng.uniform(1.0, 200.0))
        x = float(rng.uniform(-10.0, 10.0))
        worst = max(worst, abs(stats.t_cdf(x, dof) - t_cdf_quad(x, dof)))
    assert worst <= 1e-10


@pytest.mark.parametrize("x,dof,want", [(0.0, 5.0, 0.5), (2.0, 10.0, 0.96330598261462), (1.0, 1.0, 0.75)])
def test_t_cdf_values(x, dof, want):
    assert stats.t_cdf(x, dof) == pytest.approx(want, abs=1e-12)


def test_t_quantile_values():
    assert stats.t_quantile(0.975, 2) == pytest.approx(4.302652729911275, abs=1e-9)
    assert stats.t_quantile(0.975, 99) == pytest.approx(1.9842169515086827, abs=1e-9)
    assert stats.t_quantile(0.5, 7) == pytest.approx(0.0, abs=1e-12)
    for p in (0.6, 0.9, 0.999):
        assert stats.t_cdf(stats.t_quantile(p, 13.5), 13.5) == pytest.approx(p, abs=1e-11)


def test_summarize_example():
    s = stats.summarize([-1.0, -2.0, -3.0])
    assert s.n_samples == 3 and s.mean == -2.0 and s.sample_sd == 1.0
    assert s.ci_low == pytest.approx(-4.484138, abs=1e-6)
    assert s.ci_high == pytest.approx(0.484138, abs=1e-6)


def test_summarize_needs_two():
    with pytest.raises(ContractError):
        stats.summarize([1.0])


def test_welch_example():
    a = [0.0, 1.0] * 50
    b = [1.0, 2.0] * 50
    w = stats.welch_test(a, b)
    var = 0.25 * 100 / 99
    assert w.t_stat == pytest.approx(-1.0 / math.sqrt(2 * var / 100), rel=1e-12)
    assert w.dof == pytest.approx(198.0, rel=1e-12)
    s = stats.welch_from_summary(0.0, 1.0, 100, 1.0, 1.0, 100)
    assert s.t_stat == pytest.approx(-7.0710678, abs=1e-6)
    assert s.p_value == pytest.approx(2.6e-11, rel=0.1)


def test_welch_antisymmetry_and_translation():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a = rng.normal(0, 1, rng.integers(2, 30)).tolist()
        b = rng.normal(0.3, 2, rng.integers(2, 30)).tolist()
        ab, ba = stats.welch_test(a, b), stats.welch_test(b, a)
        assert ab.t_stat == pytest.approx(-ba.t_stat, rel=1e-12)
        assert ab.dof == pytest.approx(ba.dof, rel=1e-12)
        assert ab.p_value == pytest.approx(ba.p_value, rel=1e-9)
        shift = float(rng.uniform(-100, 100))
        moved = stats.welch_test([x + shift for x in a], [x + shift for x in b])
        assert moved.t_stat == pytest.approx(ab.t_stat, rel=1e-8, abs=1e-9)
        assert moved.p_value == pytest.approx(ab.p_value, rel=1e-6, abs=1e-12)


def test_welch_zero_variance():
    with pytest.raises(ContractError):
        stats.welch_test([1.0, 1.0], [1.0, 1.0])


def test_ci_coverage():
    rng = np.random.default_rng(2024)
    trials, hits = 10_000, 0
    for _ in range(trials):
        s = stats.summarize(rng.normal(3.0, 2.0, 20).tolist())
        hits += s.ci_low <= 3.0 <= s.ci_high
    rate = hits / trials
    assert abs(rate - 0.95) <= 0.01


def test_window_mean():
    values = [float(k) for k in range(120)]
    assert stats.window_mean(values, "first50") == pytest.approx(24.5)
    assert stats.window_mean(values, "last50") == pytest.approx(94.5)
    assert stats.window_mean(values, "all") == pytest.approx(59.5)
    recs = [EpisodeRecord(k, -float(k), k, False) for k in range(60)]
    assert stats.window_mean(recs, "first50") == pytest.approx(-24.5)
    with pytest.raises(ContractError):
        stats.window_mean(values[:10], "last50")
    with pytest.raises(ContractError):
        stats.window_mean(values, "middle")


def test_window_examples():
    assert stats.window_mean([-100.0] * 500, "last50") == -100.0
    ramp = [-(k + 1.0) for k in range(500)]
    assert stats.window_mean(ramp, "all") == -250.5
    assert stats.window_mean(ramp, "first50") == -25.5
    assert stats.window_mean(ramp, "last50") == -475.5


def test_summarize_zero_variance_and_reference_row():
    s = stats.summarize([-7.0] * 100)
    assert s.sample_sd == 0.0 and s.ci_low == s.ci_high == -7.0
    # Sarsa n=1 overall row: mean -308.92, sd 61.42, 100 runs; bounds to 4 significant digits
    half = stats.t_quantile(0.975, 99) * 61.42 / 10
    assert f"{-308.92 - half:.4g}" == f"{-321.11:.4g}"
    assert f"{-308.92 + half:.4g}" == f"{-296.74:.4g}"


def test_welch_identical_and_reference_table():
    w = stats.welch_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert w.t_stat == 0.0 and w.p_value == pytest.approx(1.0, abs=1e-15)
    t1 = stats.welch_from_summary(-829.33, 100.52, 100, -308.92, 61.42, 100)
    assert t1.p_value < 1e-5
    assert 0.0 <= t1.p_value <= 1.0 and t1.dof > 0


def test_t_cdf_limits_and_shape():
    assert stats.t_cdf(0.0, 3.7) == 0.5
    assert stats.t_cdf(1.96, 1e6) == pytest.approx(0.975, abs=1e-4)
    assert 2 * (1 - stats.t_cdf(2.0, 10.0)) == pytest.approx(0.0734, abs=1e-4)
    xs = np.linspace(-30, 30, 601)
    for dof in (0.7, 3.0, 40.0):
        cdf = [stats.t_cdf(float(x), dof) for x in xs]
        assert all(b >= a for a, b in zip(cdf, cdf[1:]))
        for x in xs:
            assert stats.t_cdf(float(x), dof) + stats.t_cdf(float(-x), dof) == pytest.approx(1.0, abs=1e-12)
