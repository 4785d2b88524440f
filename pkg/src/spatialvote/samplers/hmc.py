"""Leapfrog integration and Hamiltonian Monte Carlo on mixed circular/linear spaces.

Linear coordinates carry standard normal momenta with kinetic energy p^2/2.
Circular coordinates carry von Mises momenta, kinetic energy -w cos(p), so
both the angle and its momentum live on the circle and are wrapped after
every update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .distributions import von_mises_sample, wrap_angle

LogpGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


class IntegratorError(FloatingPointError):
    """The trajectory reached a non-finite log density or gradient."""


@dataclass
class Kinetic:
    """Kinetic energy specification.

    Attributes:
        circular: boolean mask of angular coordinates, or None for a purely
            linear space.
        concentration: von Mises concentration of the angular momenta.
        scale: per-coordinate velocity scale (a diagonal metric); ones if None.
    """

    circular: np.ndarray | None = None
    concentration: float = 1.0
    scale: np.ndarray | None = None

    def velocity(self, p: np.ndarray) -> np.ndarray:
        if self.circular is None:
            v = p.copy()
        else:
            v = np.where(self.circular, self.concentration * np.sin(p), p)
        if self.scale is not None:
            v *= self.scale
        return v

    def energy(self, p: np.ndarray) -> float:
        if self.circular is None:
            return 0.5 * float(p @ p)
        lin = ~self.circular
        return 0.5 * float(p[lin] @ p[lin]) - self.concentration * float(
            np.cos(p[self.circular]).sum()
        )

    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        p = rng.standard_normal(dim)
        if self.circular is not None and self.circular.any():
            p[self.circular] = von_mises_sample(
                rng, 0.0, self.concentration, size=int(self.circular.sum())
            )
        return p

    def wrap(self, x: np.ndarray) -> np.ndarray:
        if self.circular is not None:
            x[self.circular] = wrap_angle(x[self.circular])
        return x


def leapfrog(
    position: np.ndarray,
    momentum: np.ndarray,
    logp_grad: LogpGrad,
    step_size: float,
    n_steps: int,
    kinetic: Kinetic | None = None,
    start: tuple[float, np.ndarray] | None = None,
):
    """Integrate Hamilton's equations for potential -log p.

    Args:
        position, momentum: starting point (not modified).
        logp_grad: returns (log density, gradient) at a position.
        step_size: integration step, must be positive.
        n_steps: number of leapfrog steps; zero returns the inputs.
        kinetic: kinetic energy; a plain Gaussian kinetic energy if None.
        start: cached (log density, gradient) at ``position``.

    Returns:
        (position, momentum, logp, grad) at the end of the trajectory.

    Raises:
        IntegratorError: a non-finite log density or gradient was met.
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    kinetic = kinetic or Kinetic()
    scale = 1.0 if kinetic.scale is None else kinetic.scale
    q = np.array(position, dtype=float)
    p = np.array(momentum, dtype=float)
    logp, grad = start if start is not None else logp_grad(q)
    if n_steps == 0:
        return q, p, logp, grad
    _check_finite(logp, grad)
    p += 0.5 * step_size * scale * grad
    for step in range(n_steps):
        q += step_size * kinetic.velocity(p)
        kinetic.wrap(q)
        try:
            logp, grad = logp_grad(q)
        except (ValueError, ArithmeticError) as exc:
            raise IntegratorError(str(exc)) from exc
        _check_finite(logp, grad)
        weight = 1.0 if step < n_steps - 1 else 0.5
        p += weight * step_size * scale * grad
        kinetic.wrap(p)
    return q, p, logp, grad


def _check_finite(logp, grad):
    if not (math.isfinite(logp) and np.all(np.isfinite(grad))):
        raise IntegratorError("non-finite log density or gradient")


@dataclass
class HMCState:
    position: np.ndarray
    logp: float
    grad: np.ndarray


def hmc_step(
    rng: np.random.Generator,
    state: HMCState,
    logp_grad: LogpGrad,
    step_size: float,
    n_leapfrog: int,
    kinetic: Kinetic | None = None,
) -> tuple[HMCState, bool, float]:
    """One Metropolis-corrected HMC transition.

    Returns the new state, whether the proposal was accepted and the
    acceptance probability (zero after an integrator failure).
    """
    kinetic = kinetic or Kinetic()
    p0 = kinetic.sample(rng, state.position.size)
    h0 = -state.logp + kinetic.energy(p0)
    log_u = math.log(rng.random())
    try:
        q, p, logp, grad = leapfrog(
            state.position, p0, logp_grad, step_size, n_leapfrog, kinetic,
            start=(state.logp, state.grad),
        )
    except IntegratorError:
        return state, False, 0.0
    h1 = -logp + kinetic.energy(p)
    log_ratio = h0 - h1
    if not math.isfinite(log_ratio):
        return state, False, 0.0
    accept_prob = math.exp(min(0.0, log_ratio))
    if log_u < log_ratio:
        return HMCState(q, logp, grad), True, accept_prob
    return state, False, accept_prob


class DualAveraging:
    """Nesterov dual-averaging step-size adaptation (Hoffman and Gelman's constants)."""

    def __init__(self, initial_step: float, target: float = 0.75, gamma: float = 0.05,
                 t0: float = 10.0, kappa: float = 0.75):
        self.mu = math.log(10.0 * initial_step)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(initial_step)

    def restart(self, step: float) -> None:
        self.mu = math.log(10.0 * step)
        self.count = 0
        self.h_bar = 0.0
        self.log_step = math.log(step)
        self.log_step_bar = 0.0

    @property
    def step(self) -> float:
        return math.exp(self.log_step)

    @property
    def final_step(self) -> float:
        return math.exp(self.log_step_bar)

    def update(self, accept_prob: float) -> float:
        self.count += 1
        t = self.count
        w = 1.0 / (t + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept_prob)
        self.log_step = self.mu - math.sqrt(t) / self.gamma * self.h_bar
        eta = t ** (-self.kappa)
        self.log_step_bar = eta * self.log_step + (1 - eta) * self.log_step_bar
        return self.step


class WelfordVariance:
    """Running per-coordinate variance; angles are accumulated as wrapped increments."""

    def __init__(self, dim: int, circular: np.ndarray | None = None):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.circular = circular

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        if self.circular is not None:
            delta[self.circular] = wrap_angle(delta[self.circular])
        self.mean += delta / self.n
        if self.circular is not None:
            self.mean[self.circular] = wrap_angle(self.mean[self.circular])
        delta2 = x - self.mean
        if self.circular is not None:
            delta2[self.circular] = wrap_angle(delta2[self.circular])
        self.m2 += delta * delta2

    def variance(self, regularize: bool = True) -> np.ndarray:
        var = self.m2 / max(self.n - 1, 1)
        if regularize:
            # Stan's shrinkage toward a small constant
            var = (self.n / (self.n + 5.0)) * var + 1e-3 * (5.0 / (self.n + 5.0))
        return var


def warmup_windows(warmup: int, initial: int = 75, final: int | None = None,
                   base: int = 25) -> list[tuple[int, int]]:
    """Metric-adaptation windows (start, end) inside the warm-up, doubling in length.

    ``final`` is the step-size-only stretch at the end of warm-up; it defaults
    to a quarter of the warm-up (at least 50 iterations) so the averaged step
    size has time to settle after the last metric update.
    """
    if final is None:
        final = max(50, warmup // 4)
    if warmup < initial + final + base:
        return []
    windows = []
    start = initial
    size = base
    end_slow = warmup - final
    while start < end_slow:
        end = start + size
        if end + 2 * size > end_slow:
            end = end_slow
        windows.append((start, end))
        start = end
        size *= 2
    return windows


@dataclass
class HMCRun:
    """Retained positions and bookkeeping from :func:`run_hmc`."""

    samples: np.ndarray
    accepted: int
    proposals: int
    step_size: float

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")


def run_hmc(
    rng: np.random.Generator,
    logp_grad: LogpGrad,
    position: np.ndarray,
    iterations: int,
    warmup: int,
    n_leapfrog: int,
    step_size_init: float,
    keep_every: int = 1,
    target_accept: float = 0.75,
    adapt_metric: bool = False,
    circular: np.ndarray | None = None,
    momentum_concentration: float = 1.0,
    before_step: Callable | None = None,
    on_keep: Callable | None = None,
) -> HMCRun:
    """Run one HMC chain with warm-up adaptation.

    During warm-up the step size follows dual averaging toward
    ``target_accept``; with ``adapt_metric`` a diagonal metric is also
    estimated over doubling windows.  Afterwards the step size is frozen at
    the averaged value and acceptances are counted.

    Args:
        before_step: called as ``before_step(position)`` at the start of every
            iteration; if it returns a callable, that becomes the new target
            (used when the target depends on refreshed auxiliary variables).
        on_keep: called as ``on_keep(index)`` each time a draw is retained.
    """
    position = np.array(position, dtype=float)
    logp, grad = logp_grad(position)
    state = HMCState(position, logp, grad)
    kinetic = Kinetic(circular=circular, concentration=momentum_concentration)
    adapter = DualAveraging(step_size_init, target=target_accept)
    windows = warmup_windows(warmup) if adapt_metric else []
    window_ends = {end for _, end in windows}
    welford = None
    step = step_size_init
    keep = len(range(warmup, iterations, keep_every))
    samples = np.empty((keep, position.size))
    accepted = 0
    k = 0
    for it in range(iterations):
        if before_step is not None:
            new_target = before_step(state.position)
            if new_target is not None:
                logp_grad = new_target
                state = HMCState(state.position, *logp_grad(state.position))
        state, acc, prob = hmc_step(rng, state, logp_grad, step, n_leapfrog, kinetic)
        if it < warmup:
            step = adapter.update(prob)
            if any(start <= it < end for start, end in windows):
                if welford is None:
                    welford = WelfordVariance(position.size, circular)
                welford.add(state.position)
            if it + 1 in window_ends:
                kinetic = Kinetic(circular, momentum_concentration, np.sqrt(welford.variance()))
                welford = None
                adapter.restart(step)
            if it == warmup - 1:
                step = adapter.final_step
        else:
            accepted += acc
            if (it - warmup) % keep_every == 0:
                samples[k] = state.position
                if on_keep is not None:
                    on_keep(k)
                k += 1
    return HMCRun(samples, accepted, iterations - warmup, step)
