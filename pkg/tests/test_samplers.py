import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, special, stats

from spatialvote.samplers import (
    MIN_DRAWS,
    DiagnosticsUnavailable,
    DualAveraging,
    HMCState,
    IntegratorError,
    Kinetic,
    bessel_ratio,
    diagnostics,
    effective_sample_size,
    gamma_sample,
    hmc_step,
    leapfrog,
    log_bessel_i0,
    make_rng,
    run_hmc,
    split_rhat,
    thin,
    truncated_normal_sample,
    von_mises_logpdf,
    von_mises_sample,
    wrap_angle,
)
from spatialvote.samplers.hmc import warmup_windows


# -- random streams -------------------------------------------------------------------------

def test_same_seed_same_stream():
    assert np.array_equal(make_rng(7, 2).random(50), make_rng(7, 2).random(50))


def test_streams_and_seeds_differ():
    a = make_rng(7, 0).random(20)
    assert not np.array_equal(a, make_rng(7, 1).random(20))
    assert not np.array_equal(a, make_rng(8, 0).random(20))


# -- von Mises ------------------------------------------------------------------------------

def test_log_bessel_matches_scipy():
    x = np.concatenate([np.linspace(0, 30, 301), [50, 100, 500, 1e4]])
    ref = np.log(special.i0e(x)) + x
    assert np.allclose(log_bessel_i0(x), ref, rtol=1e-13, atol=1e-13)
    assert np.allclose(bessel_ratio(x[1:]), special.i1e(x[1:]) / special.i0e(x[1:]), rtol=1e-12)


def test_von_mises_uniform_case():
    z = np.linspace(-3, 3, 7)
    assert np.allclose(von_mises_logpdf(z, 0.0, 0.0), -math.log(2 * math.pi))


def test_von_mises_mode_at_mean():
    z = np.linspace(-math.pi, math.pi, 2001)
    vals = von_mises_logpdf(z, 0.7, 3.0)
    assert abs(z[np.argmax(vals)] - 0.7) < 2 * math.pi / 2000


def test_von_mises_value_against_quadrature():
    omega = 2.5
    norm, _ = integrate.quad(lambda t: math.exp(omega * math.cos(t)), -math.pi, math.pi,
                             epsabs=0.0, epsrel=1e-13)
    expected = omega * math.cos(math.pi / 3) - math.log(norm)
    assert abs(von_mises_logpdf(math.pi / 3, 0.0, omega) - expected) < 1e-10


@pytest.mark.parametrize("omega", [0.0, 0.5, 2.0, 10.0, 100.0])
def test_von_mises_density_integrates_to_one(omega):
    total, _ = integrate.quad(lambda t: math.exp(von_mises_logpdf(t, 0.3, omega)), -math.pi, math.pi,
                              points=[0.3], limit=200, epsabs=1e-13, epsrel=1e-13)
    assert abs(total - 1.0) < 1e-8


def test_von_mises_rejects_negative_concentration():
    with pytest.raises(ValueError):
        von_mises_logpdf(0.0, 0.0, -1.0)
    with pytest.raises(ValueError):
        von_mises_sample(make_rng(0), 0.0, -1.0, size=3)


def test_von_mises_sample_uniform_limit():
    x = von_mises_sample(make_rng(1), 0.0, 0.0, size=100_000)
    ks = stats.kstest(x, stats.uniform(-math.pi, 2 * math.pi).cdf).statistic
    assert ks < 0.01


def test_von_mises_sample_concentrated_mean():
    x = von_mises_sample(make_rng(2), 0.0, 50.0, size=100_000)
    assert abs(math.atan2(np.sin(x).mean(), np.cos(x).mean())) < 0.02


@pytest.mark.parametrize("omega", [0.3, 2.5, 40.0])
def test_von_mises_sample_matches_distribution(omega):
    x = von_mises_sample(make_rng(3), 1.0, omega, size=50_000)
    assert np.all((x >= -math.pi) & (x < math.pi))
    ref = stats.vonmises(omega, loc=1.0)
    # compare on the unwrapped window centred at the mean
    centred = wrap_angle(x - 1.0) + 1.0
    assert stats.kstest(centred, ref.cdf).pvalue > 1e-3


def test_von_mises_sample_reproducible():
    a = von_mises_sample(make_rng(5), 0.2, 1.5, size=100)
    b = von_mises_sample(make_rng(5), 0.2, 1.5, size=100)
    assert np.array_equal(a, b)


# -- truncated normal ---------------------------------------------------------------------------

def test_truncated_normal_support():
    x = truncated_normal_sample(make_rng(0), np.zeros(10_000), 1.0, True)
    assert np.all(x > 0)
    y = truncated_normal_sample(make_rng(0), np.zeros(10_000), 1.0, False)
    assert np.all(y < 0)


def test_truncated_normal_negligible_truncation():
    x = truncated_normal_sample(make_rng(1), np.full(100_000, 5.0), 1.0, True)
    assert abs(x.mean() - 5.0) < 0.02


def test_truncated_normal_far_tail():
    x = truncated_normal_sample(make_rng(2), np.full(10_000, -8.0), 1.0, True)
    assert np.all(np.isfinite(x)) and np.all(x > 0)
    # the conditional mean of N(-8, 1) given x > 0 is the inverse Mills ratio shift
    expected = -8.0 + math.exp(stats.norm.logpdf(8.0) - stats.norm.logsf(8.0))
    assert abs(x.mean() - expected) < 0.01


def test_truncated_normal_matches_scipy():
    x = truncated_normal_sample(make_rng(3), np.full(50_000, 0.7), 2.0, False)
    ref = stats.truncnorm(-np.inf, (0 - 0.7) / 2.0, loc=0.7, scale=2.0)
    assert stats.kstest(x, ref.cdf).pvalue > 1e-3


# -- gamma ----------------------------------------------------------------------------------

def test_gamma_mean():
    x = gamma_sample(make_rng(0), 1.0, 0.1, size=1_000_000)
    assert abs(x.mean() - 10.0) / 10.0 < 0.01


def test_gamma_shape_one_is_exponential():
    x = gamma_sample(make_rng(1), 1.0, 2.0, size=20_000)
    assert stats.kstest(x, lambda t: 1 - np.exp(-2.0 * t)).pvalue > 1e-3


def test_gamma_reproducible():
    assert np.array_equal(gamma_sample(make_rng(4), 2.0, 3.0, size=10), gamma_sample(make_rng(4), 2.0, 3.0, size=10))


# -- leapfrog and HMC ---------------------------------------------------------------------------

def _gaussian(q):
    return -0.5 * float(q @ q), -q


def test_leapfrog_energy_drift_harmonic():
    eps = 0.01
    q0, p0 = np.array([1.0]), np.array([0.5])
    h0 = 0.5 * (q0 @ q0 + p0 @ p0)
    q, p, _, _ = leapfrog(q0, p0, _gaussian, eps, 100)
    assert abs(0.5 * (q @ q + p @ p) - h0) < eps ** 2 * 10


def test_leapfrog_zero_steps_is_identity():
    q, p, _, _ = leapfrog(np.array([0.3, 1.0]), np.array([1.0, -2.0]), _gaussian, 0.1, 0)
    assert q.tolist() == [0.3, 1.0] and p.tolist() == [1.0, -2.0]


def test_leapfrog_requires_positive_step():
    with pytest.raises(ValueError):
        leapfrog(np.zeros(1), np.zeros(1), _gaussian, 0.0, 3)


def test_leapfrog_reversible():
    rng = make_rng(0)
    q0, p0 = rng.standard_normal(5), rng.standard_normal(5)
    q1, p1, _, _ = leapfrog(q0, p0, _gaussian, 0.1, 37)
    q2, p2, _, _ = leapfrog(q1, -p1, _gaussian, 0.1, 37)
    assert np.allclose(q2, q0, atol=1e-10) and np.allclose(-p2, p0, atol=1e-10)


def test_leapfrog_reversible_on_circle():
    kinetic = Kinetic(circular=np.array([True, True, False]), concentration=1.0)

    def target(q):
        return 2.0 * math.cos(q[0] - 1.0) + math.cos(q[1]) - 0.5 * q[2] ** 2, np.array(
            [-2.0 * math.sin(q[0] - 1.0), -math.sin(q[1]), -q[2]])

    q0, p0 = np.array([3.0, -3.0, 0.4]), np.array([1.2, -2.0, 0.3])
    q1, p1, _, _ = leapfrog(q0, p0, target, 0.2, 50, kinetic)
    q2, p2, _, _ = leapfrog(q1, -p1, target, 0.2, 50, kinetic)
    assert np.allclose(wrap_angle(q2[:2] - q0[:2]), 0.0, atol=1e-10)
    assert abs(q2[2] - q0[2]) < 1e-10
    assert np.allclose(wrap_angle(-p2[:2] - p0[:2]), 0.0, atol=1e-10)


def test_leapfrog_wraps_angles():
    kinetic = Kinetic(circular=np.array([True]), concentration=1.0)

    def flat(q):
        return math.cos(q[0]), np.array([-math.sin(q[0])])

    q, _, logp, _ = leapfrog(np.array([3.1]), np.array([math.pi / 2]), flat, 0.5, 1, kinetic)
    half_kick = math.pi / 2 + 0.25 * -math.sin(3.1)
    unwrapped = 3.1 + 0.5 * math.sin(half_kick)
    assert unwrapped > math.pi
    assert q[0] == pytest.approx(unwrapped - 2 * math.pi, abs=1e-12)
    # the potential only sees the angle, so it is continuous across the wrap
    assert logp == pytest.approx(math.cos(unwrapped), abs=1e-12)


def test_leapfrog_non_finite_gradient_signals_failure():
    def broken(q):
        return 0.0, np.array([np.nan]) if q[0] > 0.5 else np.array([1.0])

    with pytest.raises(IntegratorError):
        leapfrog(np.array([0.0]), np.array([1.0]), broken, 0.3, 5)

    def raising(q):
        if q[0] > 0.5:
            raise ValueError("outside the domain")
        return 0.0, np.array([1.0])

    with pytest.raises(IntegratorError):
        leapfrog(np.array([0.0]), np.array([1.0]), raising, 0.3, 5)


def test_hmc_step_rejects_after_integrator_failure():
    def wall(q):
        return (-math.inf, np.zeros(1)) if q[0] > 0.1 else (0.0, np.zeros(1))

    state = HMCState(np.array([0.0]), 0.0, np.zeros(1))
    rng = make_rng(0)
    for _ in range(20):
        new, accepted, prob = hmc_step(rng, state, wall, 1.0, 3)
        if not accepted:
            assert new is state
    new, accepted, prob = hmc_step(make_rng(1), state, lambda q: (0.0, np.array([np.inf])), 0.1, 2)
    assert not accepted and prob == 0.0 and new is state


def test_small_step_accepts_almost_everything():
    omega = 4.0
    kinetic = Kinetic(circular=np.array([True, False]))

    def target(q):
        return omega * math.cos(q[0]) - 0.5 * q[1] ** 2, np.array([-omega * math.sin(q[0]), -q[1]])

    rng = make_rng(3)
    state = HMCState(np.array([0.5, 0.1]), *target(np.array([0.5, 0.1])))
    accepted = 0
    for _ in range(1000):
        state, acc, _ = hmc_step(rng, state, target, 1e-4, 10, kinetic)
        accepted += acc
    assert accepted / 1000 > 0.999


def test_hmc_recovers_von_mises_target():
    mu, omega = 1.2, 3.0

    def target(q):
        return omega * math.cos(q[0] - mu), np.array([-omega * math.sin(q[0] - mu)])

    run = run_hmc(make_rng(11), target, np.array([0.0]), 101_000, 1_000, 5, 0.5,
                  circular=np.array([True]))
    x = run.samples[:, 0]
    c, s = np.cos(x).mean(), np.sin(x).mean()
    assert abs(wrap_angle(math.atan2(s, c) - mu)) < 0.02
    r = math.hypot(c, s)
    est = optimize.brentq(lambda k: bessel_ratio(k) - r, 1e-6, 1e3)
    assert abs(est - omega) / omega < 0.05


def test_run_hmc_acceptance_accounting():
    run = run_hmc(make_rng(0), _gaussian, np.zeros(3), 600, 200, 8, 0.3, keep_every=4)
    assert run.samples.shape == (100, 3)
    assert run.proposals == 400
    assert run.acceptance_rate == run.accepted / run.proposals
    assert 0.0 <= run.acceptance_rate <= 1.0


@pytest.mark.parametrize("adapt_metric", [False, True])
def test_run_hmc_adapts_toward_target(adapt_metric):
    sd = np.linspace(0.5, 2.0, 6)

    def target(q):
        return -0.5 * float(np.sum((q / sd) ** 2)), -q / sd ** 2

    run = run_hmc(make_rng(1), target, np.zeros(6), 6000, 2000, 10, 1.5, adapt_metric=adapt_metric)
    assert 0.6 <= run.acceptance_rate <= 0.9
    assert np.all(np.abs(run.samples.mean(axis=0)) < 0.25 * sd)
    assert np.allclose(run.samples.std(axis=0), sd, rtol=0.2)


def test_run_hmc_before_step_and_on_keep_hooks():
    kept, calls = [], []

    def before(q):
        calls.append(q.copy())
        return None

    run_hmc(make_rng(2), _gaussian, np.zeros(2), 30, 10, 3, 0.5, keep_every=5,
            before_step=before, on_keep=kept.append)
    assert len(calls) == 30 and kept == [0, 1, 2, 3]


def test_dual_averaging_finds_step():
    # acceptance decays with step size as exp(-step); target 0.75 is step = log(4/3)
    da = DualAveraging(1.0, target=0.75)
    for _ in range(3000):
        da.update(math.exp(-da.step))
    assert da.final_step == pytest.approx(math.log(4 / 3), rel=0.05)


def test_warmup_windows_cover_slow_phase():
    w = warmup_windows(1000)
    assert w[0][0] == 75 and w[-1][1] == 1000 - 250
    assert all(a[1] == b[0] for a, b in zip(w, w[1:]))
    assert warmup_windows(100) == []


# -- diagnostics -------------------------------------------------------------------------------

def test_constant_chains_are_flagged():
    d = diagnostics({"x": np.ones((2, 200))})
    assert math.isnan(d.split_rhat["x"]) and "x" in d.undefined
    assert math.isnan(effective_sample_size(np.ones((2, 200))))


def test_iid_chains_have_rhat_near_one():
    x = make_rng(0).standard_normal((4, 1000))
    assert 0.99 <= split_rhat(x) <= 1.01
    assert effective_sample_size(x) > 2000


def test_trending_chain_detected():
    rng = make_rng(1)
    stationary = rng.standard_normal(500)
    trending = np.linspace(0, 10, 500) + rng.standard_normal(500)
    assert split_rhat(np.stack([stationary, trending])) > 1.1


def test_too_few_draws():
    with pytest.raises(DiagnosticsUnavailable):
        split_rhat(np.zeros((4, MIN_DRAWS - 1)))
    with pytest.raises(DiagnosticsUnavailable):
        diagnostics({"x": make_rng(0).standard_normal((1, 150))})


def test_single_chain_is_split():
    x = make_rng(2).standard_normal((1, 400))
    assert 0.98 < split_rhat(x) < 1.02


def test_circular_blocks_use_embedding():
    # a well-mixed chain centred on the wrap point: raw values jump between +-pi
    rng = make_rng(3)
    x = wrap_angle(math.pi + 0.3 * rng.standard_normal((4, 500)))
    raw = diagnostics({"a": x})
    embedded = diagnostics({"a": x}, circular={"a"})
    assert embedded.split_rhat["a"] < 1.01
    assert np.isfinite(raw.split_rhat["a"])


def test_block_shapes_and_json():
    rng = make_rng(4)
    d = diagnostics({"v": rng.standard_normal((2, 150, 3)), "s": rng.standard_normal((2, 150))},
                    acceptance_rate=0.8)
    assert d.split_rhat["v"].shape == (3,) and np.ndim(d.ess["s"]) == 0
    js = d.to_json()
    assert js["acceptance_rate"] == 0.8 and len(js["split_rhat"]["v"]) == 3
    assert 0.0 <= d.fraction_above(1.1) <= 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_rhat_not_below_one(seed, chains):
    x = make_rng(seed).standard_normal((chains, 120))
    assert split_rhat(x) >= 1.0 - 1e-12


def test_thin_examples():
    assert thin(np.arange(64000), 5).size == 12800
    x = np.arange(17)
    assert np.array_equal(thin(x, 1), x)
    assert thin(np.arange(10), 3).tolist() == [0, 3, 6, 9]
    with pytest.raises(ValueError):
        thin(x, 0)
