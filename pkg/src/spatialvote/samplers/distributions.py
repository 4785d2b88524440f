"""Random streams and the elementary distributions used by both samplers."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, ndtri

TWO_PI = 2.0 * math.pi
LOG_TWO_PI = math.log(TWO_PI)

# Crossover between the power series and the large-argument expansion of I0 and I1.
_BESSEL_SERIES_MAX = 20.0
_BESSEL_SERIES_TERMS = 80
_BESSEL_ASYMPTOTIC_TERMS = 16

# Truncation points further than this many sd into the tail use exponential rejection.
_TAIL_THRESHOLD = 4.0


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Return the generator for substream ``stream`` of ``seed``.

    Substreams come from ``SeedSequence`` spawn keys, so chain ``k`` of a run
    draws the same sequence whether or not the other chains exist.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.PCG64(ss))


def wrap_angle(theta):
    """Map angles onto [-pi, pi); angles already in range are returned unchanged."""
    theta = np.asarray(theta, dtype=float)
    inside = (theta >= -math.pi) & (theta < math.pi)
    return np.where(inside, theta, np.mod(theta + math.pi, TWO_PI) - math.pi)[()]


def _asymptotic_coefficients(order: int, terms: int) -> np.ndarray:
    # Coefficients of e^x / sqrt(2 pi x) * sum_k c_k x^-k for I_order(x).
    mu = 4.0 * order * order
    coef = np.empty(terms)
    coef[0] = 1.0
    for k in range(1, terms):
        coef[k] = -coef[k - 1] * (mu - (2 * k - 1) ** 2) / (k * 8.0)
    return coef


_I0_ASYM = _asymptotic_coefficients(0, _BESSEL_ASYMPTOTIC_TERMS)
_I1_ASYM = _asymptotic_coefficients(1, _BESSEL_ASYMPTOTIC_TERMS)


def _series_i0_i1(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    q = 0.25 * x * x
    t0 = np.ones_like(x)
    t1 = 0.5 * x
    s0 = t0.copy()
    s1 = t1.copy()
    for k in range(1, _BESSEL_SERIES_TERMS):
        t0 = t0 * q / (k * k)
        t1 = t1 * q / (k * (k + 1))
        s0 += t0
        s1 += t1
    return s0, s1


def _asymptotic_sum(x: np.ndarray, coef: np.ndarray) -> np.ndarray:
    inv = 1.0 / x
    total = np.zeros_like(x)
    power = np.ones_like(x)
    for c in coef:
        total += c * power
        power = power * inv
    return total


def log_bessel_i0(x):
    """log I0(x) for x >= 0: power series below 20, asymptotic expansion above."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= _BESSEL_SERIES_MAX
    if small.any():
        out[small] = np.log(_series_i0_i1(x[small])[0])
    big = ~small
    if big.any():
        xb = x[big]
        out[big] = xb - 0.5 * np.log(TWO_PI * xb) + np.log(_asymptotic_sum(xb, _I0_ASYM))
    return out if out.ndim else float(out)


def bessel_ratio(x):
    """I1(x) / I0(x), the derivative of log I0."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x <= _BESSEL_SERIES_MAX
    if small.any():
        s0, s1 = _series_i0_i1(x[small])
        out[small] = s1 / s0
    big = ~small
    if big.any():
        xb = x[big]
        out[big] = _asymptotic_sum(xb, _I1_ASYM) / _asymptotic_sum(xb, _I0_ASYM)
    return out if out.ndim else float(out)


def von_mises_logpdf(z, mu, omega):
    """Log density of the von Mises distribution on the circle.

    Args:
        z: angle(s), taken modulo 2*pi.
        mu: mean direction.
        omega: concentration, must be non-negative.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("von Mises concentration must be non-negative")
    return omega * np.cos(np.asarray(z) - mu) - (LOG_TWO_PI + log_bessel_i0(omega))


def von_mises_sample(rng: np.random.Generator, mu, omega, size=None) -> np.ndarray:
    """Draw von Mises angles in [-pi, pi) by Best and Fisher's wrapped-Cauchy rejection."""
    mu, omega = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(omega, dtype=float))
    if size is None:
        size = mu.shape
    mu = np.broadcast_to(mu, size).ravel()
    omega = np.broadcast_to(omega, size).ravel()
    if np.any(omega < 0):
        raise ValueError("von Mises concentration must be non-negative")
    n = mu.size
    out = np.empty(n)
    uniform = omega < 1e-8
    if uniform.any():
        out[uniform] = rng.uniform(-math.pi, math.pi, size=int(uniform.sum()))
    pending = np.flatnonzero(~uniform)
    if pending.size:
        k = omega[pending]
        root = np.sqrt(1.0 + 4.0 * k * k)
        tau = 1.0 + root
        # tau - sqrt(2 tau), rearranged to avoid cancellation for small k
        diff = tau * (4.0 * k * k / (root + 1.0)) / (tau + np.sqrt(2.0 * tau))
        rho = diff / (2.0 * k)
        r = (1.0 + rho * rho) / (2.0 * rho)
        while pending.size:
            u = rng.random((3, pending.size))
            zc = np.cos(math.pi * u[0])
            f = (1.0 + r * zc) / (r + zc)
            c = k * (r - f)
            accept = (c * (2.0 - c) - u[1] > 0) | (np.log(c / u[1]) + 1.0 - c >= 0)
            idx = pending[accept]
            theta = np.sign(u[2][accept] - 0.5) * np.arccos(np.clip(f[accept], -1.0, 1.0))
            out[idx] = theta + mu[idx]
            keep = ~accept
            pending, k, r = pending[keep], k[keep], r[keep]
    return wrap_angle(out).reshape(size)


def truncated_normal_sample(rng: np.random.Generator, mean, sd, positive) -> np.ndarray:
    """Draw from N(mean, sd^2) restricted to x > 0 where ``positive`` else x < 0.

    Inverse-CDF sampling, switching to Robert's exponential rejection when the
    truncation point lies more than four sd into the tail.
    """
    mean, sd, positive = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(sd, dtype=float), np.asarray(positive, dtype=bool)
    )
    shape = mean.shape
    mean, sd, positive = mean.ravel(), sd.ravel(), positive.ravel()
    sign = np.where(positive, 1.0, -1.0)
    # Reflect so every draw is a standard normal truncated below at ``lower``.
    lower = -sign * mean / sd
    z = np.empty(mean.size)
    mild = lower <= _TAIL_THRESHOLD
    if mild.any():
        u = 1.0 - rng.random(int(mild.sum()))
        z[mild] = -ndtri(u * ndtr(-lower[mild]))
    tail = np.flatnonzero(~mild)
    if tail.size:
        a = lower[tail]
        lam = 0.5 * (a + np.sqrt(a * a + 4.0))
        while tail.size:
            prop = a + rng.exponential(1.0 / lam)
            accept = rng.random(tail.size) <= np.exp(-0.5 * (prop - lam) ** 2)
            z[tail[accept]] = prop[accept]
            tail, a, lam = tail[~accept], a[~accept], lam[~accept]
    return (mean + sign * sd * z).reshape(shape)


def gamma_sample(rng: np.random.Generator, shape, rate, size=None) -> np.ndarray:
    """Gamma draws with mean ``shape / rate``."""
    return rng.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)
