"""One-dimensional circular ideal-point model.

Legislators, "Yea" outcomes and "Nay" outcomes sit at angles on the unit
circle.  A legislator at ``beta`` votes Yea on a motion with probability
``G_kappa(z)``, where ``z`` is the squared geodesic distance to the Nay
outcome minus the squared distance to the Yea outcome, and ``G_kappa`` is the
CDF of a Beta(kappa, kappa) variable rescaled from [0, 1] to [-pi^2, pi^2].

The sampler is a single joint HMC update over

    (beta, psi, zeta, log kappa, log omega_beta, log beta_kappa)

with von Mises momenta on the angles, optionally preceded by a refresh of
the missing votes from the posterior predictive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from scipy.special import digamma, gammaln, xlogy

from .data import MISSING, LegislatorMeta, VoteMatrix
from .parallel import run_chains
from .samplers import bessel_ratio, diagnostics, log_bessel_i0, make_rng, wrap_angle
from .samplers.hmc import run_hmc

logger = logging.getLogger(__name__)

PI2 = math.pi ** 2
Z_MAX = PI2 * (1.0 - 1e-12)
DOMAIN_TOL = 1e-9
LOG_2PI = math.log(2.0 * math.pi)
_LOG_HALF = math.log(0.5)
_LOG_4 = math.log(4.0)
_LOG_2PI2 = math.log(2.0 * PI2)
GAMMA_CONVENTIONS = ("rate", "scale")


class LinkDomainError(ValueError):
    """A link argument fell outside [-pi^2, pi^2]."""


# -- geometry -------------------------------------------------------------------------------

def geodesic_distance(a, b):
    """Shortest arc length between angles, in [0, pi]."""
    return np.abs(wrap_angle(np.asarray(a, dtype=float) - b))


def z_statistic(beta, psi, zeta):
    """Squared geodesic distance to the Nay angle minus that to the Yea angle."""
    return wrap_angle(np.asarray(zeta, dtype=float) - beta) ** 2 - wrap_angle(
        np.asarray(psi, dtype=float) - beta) ** 2


# -- the scaled symmetric Beta link -------------------------------------------------------

@numba.njit(cache=True, inline="always")
def _beta_cf(a, da, b, db, x):
    """Continued fraction of I_x(a, b) with its derivative along (da, db).

    Modified Lentz iteration carried out on dual numbers.
    """
    tiny = 1e-300
    qab = a + b
    dqab = da + db
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    dc = 0.0
    d = 1.0 - qab * x / qap
    dd = -x * (dqab * qap - qab * da) / (qap * qap)
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    dd = -dd * d * d
    h = d
    dh = dd
    for m in range(1, 10000):
        m2 = 2 * m
        # even step
        num = m * (b - m) * x
        dnum = m * db * x
        den = (qam + m2) * (a + m2)
        dden = da * (a + m2) + (qam + m2) * da
        aa = num / den
        daa = (dnum - aa * dden) / den
        dd = daa * d + aa * dd
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        d = 1.0 / d
        dd = -dd * d * d
        dc = daa / c - aa * dc / (c * c)
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        dh = dh * d * c + h * (dd * c + d * dc)
        h = h * d * c
        # odd step
        num = -(a + m) * (qab + m) * x
        dnum = -(da * (qab + m) + (a + m) * dqab) * x
        den = (a + m2) * (qap + m2)
        dden = da * (qap + m2) + (a + m2) * da
        aa = num / den
        daa = (dnum - aa * dden) / den
        dd = daa * d + aa * dd
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        d = 1.0 / d
        dd = -dd * d * d
        dc = daa / c - aa * dc / (c * c)
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        de = d * c
        dde = dd * c + d * dc
        dh = dh * de + h * dde
        h = h * de
        if abs(de - 1.0) < 3e-16:
            break
    return h, dh


@numba.njit(cache=True)
def _log_lower_tail(u, kappa, lbeta_half, dlbeta_half):
    """log I_u(kappa, kappa) and its kappa-derivative for 0 < u <= 1/2.

    Uses I_u(k, k) = I_{4u(1-u)}(k, 1/2) / 2, choosing whichever of the two
    tails of Beta(k, 1/2) converges faster.  ``lbeta_half`` is log B(k, 1/2)
    and ``dlbeta_half`` its derivative, digamma(k) - digamma(k + 1/2).
    Also returns log(4u(1-u)), which the density needs.
    """
    s = 1.0 - 2.0 * u
    s2 = s * s
    xp = 4.0 * u * (1.0 - u)
    log_xp = math.log(xp)
    if s2 == 0.0:
        return _LOG_HALF, 0.0, log_xp
    if xp < (kappa + 1.0) / (kappa + 2.5):
        cf, dcf = _beta_cf(kappa, 1.0, 0.5, 0.0, xp)
        lpre = kappa * log_xp + math.log(s) - math.log(kappa) - lbeta_half
        dlpre = log_xp - 1.0 / kappa - dlbeta_half
        return _LOG_HALF + lpre + math.log(cf), dlpre + dcf / cf, log_xp
    cf, dcf = _beta_cf(0.5, 0.0, kappa, 1.0, s2)
    lpre = math.log(s) + kappa * log_xp - _LOG_HALF - lbeta_half
    dlpre = log_xp - dlbeta_half
    upper = math.exp(lpre) * cf
    t = 0.5 * (1.0 - upper)
    dt = -0.5 * upper * (dlpre + dcf / cf)
    return math.log(t), dt / t, log_xp


@numba.njit(cache=True)
def _log_cdf_terms(z, kappa, lbeta_half, dlbeta_half, lnorm):
    """log G_kappa(z) with its derivatives in z and kappa.

    ``lnorm`` is log Gamma(2k) - 2 log Gamma(k) - log(2 pi^2).  Arguments past
    the clamp point are evaluated at the clamp with zero z-derivative.
    """
    clamped = False
    if z > Z_MAX:
        z = Z_MAX
        clamped = True
    elif z < -Z_MAX:
        z = -Z_MAX
        clamped = True
    if z <= 0.0:
        logt, dlogt, log_xp = _log_lower_tail((PI2 + z) / (2.0 * PI2), kappa, lbeta_half, dlbeta_half)
        logg = logt
        dkappa = dlogt
    else:
        logt, dlogt, log_xp = _log_lower_tail((PI2 - z) / (2.0 * PI2), kappa, lbeta_half, dlbeta_half)
        t = math.exp(logt)
        logg = math.log1p(-t)
        dkappa = -t * dlogt / (1.0 - t)
    if clamped:
        return logg, 0.0, dkappa
    # u (1 - u) = xp / 4
    log_dens = lnorm + (kappa - 1.0) * (log_xp - _LOG_4)
    return logg, math.exp(log_dens - logg), dkappa


@numba.njit(cache=True)
def _log_cdf_batch(z, kappa, lbeta_half, dlbeta_half, lnorm, out, dz, dkappa):
    for i in range(z.size):
        out[i], dz[i], dkappa[i] = _log_cdf_terms(z[i], kappa[i], lbeta_half[i], dlbeta_half[i], lnorm[i])


def _kappa_constants(kappa: np.ndarray):
    with np.errstate(invalid="ignore", over="ignore"):
        lbeta_half = gammaln(kappa) + gammaln(0.5) - gammaln(kappa + 0.5)
        dlbeta_half = digamma(kappa) - digamma(kappa + 0.5)
        lnorm = gammaln(2.0 * kappa) - 2.0 * gammaln(kappa) - _LOG_2PI2
    return lbeta_half, dlbeta_half, lnorm


def _check_link_args(z, kappa):
    z = np.asarray(z, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if np.any(np.abs(z) > PI2 * (1.0 + DOMAIN_TOL)) or np.any(np.isnan(z)):
        raise LinkDomainError("link argument must lie in [-pi^2, pi^2]")
    if np.any(~(kappa > 0)):
        raise ValueError("kappa must be positive")
    return np.broadcast_arrays(z, kappa)


def link_log_cdf(z, kappa, return_grad: bool = False):
    """log G_kappa(z); with ``return_grad`` also d/dz and d/dkappa."""
    z, kappa = _check_link_args(z, kappa)
    shape = z.shape
    zf = np.ascontiguousarray(z, dtype=float).ravel()
    kf = np.ascontiguousarray(kappa, dtype=float).ravel()
    out, dz, dk = np.empty_like(zf), np.empty_like(zf), np.empty_like(zf)
    _log_cdf_batch(zf, kf, *_kappa_constants(kf), out, dz, dk)
    # The kernel clamps just inside the support; the endpoints themselves are exact.
    top, bottom = zf >= PI2, zf <= -PI2
    out[top], dz[top], dk[top] = 0.0, 0.0, 0.0
    out[bottom], dk[bottom] = -np.inf, 0.0
    if return_grad:
        return out.reshape(shape), dz.reshape(shape), dk.reshape(shape)
    return out.reshape(shape)


def link_cdf(z, kappa):
    """G_kappa(z), the regularized incomplete Beta I_u(kappa, kappa) at u = (z + pi^2) / (2 pi^2)."""
    out = np.exp(link_log_cdf(z, kappa))
    return out if out.ndim else float(out)


def link_log_density(z, kappa):
    """log g_kappa(z) on [-pi^2, pi^2], via log-Gamma; +inf at the endpoints when kappa < 1."""
    z, kappa = _check_link_args(z, kappa)
    z = np.clip(z, -PI2, PI2)
    lnorm = gammaln(2.0 * kappa) - 2.0 * gammaln(kappa) - _LOG_2PI2
    with np.errstate(divide="ignore"):
        shape = xlogy(kappa - 1.0, PI2 + z) + xlogy(kappa - 1.0, PI2 - z)
    return lnorm + shape - 2.0 * (kappa - 1.0) * _LOG_2PI2


def link_density(z, kappa):
    """Density of the Beta(kappa, kappa) law rescaled to [-pi^2, pi^2]."""
    out = np.exp(link_log_density(z, kappa))
    return out if out.ndim else float(out)


# -- parameters and priors ----------------------------------------------------------------

@dataclass
class CircularParams:
    beta: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray
    kappa: np.ndarray
    omega_beta: float
    beta_kappa: float

    def __post_init__(self):
        self.beta = wrap_angle(self.beta)
        self.psi = wrap_angle(self.psi)
        self.zeta = wrap_angle(self.zeta)
        self.kappa = np.asarray(self.kappa, dtype=float)
        if np.any(~(self.kappa > 0)) or not self.beta_kappa > 0 or not self.omega_beta >= 0:
            raise ValueError("kappa and beta_kappa must be positive, omega_beta non-negative")
        if self.psi.shape != self.zeta.shape or self.psi.shape != self.kappa.shape:
            raise ValueError("psi, zeta and kappa must have one entry per motion")


@dataclass(frozen=True)
class CircularPrior:
    """Hyperpriors.  Gamma laws are Gamma(1, c) with c read as a rate or a scale.

    omega_beta ~ Gamma(1, omega_param), beta_kappa ~ Gamma(1, beta_kappa_param)
    and kappa_j | beta_kappa ~ Gamma(1, beta_kappa), all read per ``convention``.
    """

    omega_param: float = 0.1
    beta_kappa_param: float = 25.0
    convention: str = "rate"

    def __post_init__(self):
        if self.convention not in GAMMA_CONVENTIONS:
            raise ValueError(f"convention must be one of {GAMMA_CONVENTIONS}")
        if not (self.omega_param > 0 and self.beta_kappa_param > 0):
            raise ValueError("Gamma parameters must be positive")

    def _rate(self, c: float) -> float:
        return c if self.convention == "rate" else 1.0 / c

    @property
    def omega_rate(self) -> float:
        return self._rate(self.omega_param)

    @property
    def beta_kappa_rate(self) -> float:
        return self._rate(self.beta_kappa_param)

    @property
    def kappa_sign(self) -> float:
        """Exponent turning beta_kappa into the rate of kappa_j."""
        return 1.0 if self.convention == "rate" else -1.0


# -- likelihood -------------------------------------------------------------------------------

@numba.njit(cache=True)
def _wrap(x):
    return (x + math.pi) % (2.0 * math.pi) - math.pi


@numba.njit(cache=True)
def _loglik_kernel(beta, psi, zeta, kappa, votes, use, lbeta_half, dlbeta_half, lnorm,
                   g_beta, g_psi, g_zeta, g_kappa):
    n = beta.size
    m = psi.size
    total = 0.0
    for j in range(m):
        k = kappa[j]
        for i in range(n):
            if not use[i, j]:
                continue
            dz_ = _wrap(zeta[j] - beta[i])
            dy_ = _wrap(psi[j] - beta[i])
            z = dz_ * dz_ - dy_ * dy_
            sign = 1.0 if votes[i, j] == 1 else -1.0
            logg, dz, dk = _log_cdf_terms(sign * z, k, lbeta_half[j], dlbeta_half[j], lnorm[j])
            total += logg
            dzs = sign * dz
            g_zeta[j] += 2.0 * dz_ * dzs
            g_psi[j] -= 2.0 * dy_ * dzs
            g_beta[i] += 2.0 * (dy_ - dz_) * dzs
            g_kappa[j] += dk
    return total


@numba.njit(cache=True)
def _yes_log_prob_kernel(beta, psi, zeta, kappa, rows, cols, lbeta_half, dlbeta_half, lnorm, out):
    for c in range(rows.size):
        i = rows[c]
        j = cols[c]
        dz_ = _wrap(zeta[j] - beta[i])
        dy_ = _wrap(psi[j] - beta[i])
        z = dz_ * dz_ - dy_ * dy_
        if z >= PI2:
            out[c] = 0.0
        elif z <= -PI2:
            out[c] = -math.inf
        else:
            out[c] = _log_cdf_terms(z, kappa[j], lbeta_half[j], dlbeta_half[j], lnorm[j])[0]


def log_likelihood_and_gradient(votes: np.ndarray, use: np.ndarray, params: CircularParams):
    """Bernoulli log-likelihood over cells where ``use`` is set.

    Returns (loglik, d/dbeta, d/dpsi, d/dzeta, d/dkappa).
    """
    n, m = votes.shape
    g_beta, g_psi, g_zeta, g_kappa = np.zeros(n), np.zeros(m), np.zeros(m), np.zeros(m)
    kappa = np.asarray(params.kappa, dtype=float)
    ll = _loglik_kernel(
        np.asarray(params.beta, dtype=float), np.asarray(params.psi, dtype=float),
        np.asarray(params.zeta, dtype=float), kappa, np.ascontiguousarray(votes, dtype=np.int8),
        np.ascontiguousarray(use, dtype=np.bool_), *_kappa_constants(kappa),
        g_beta, g_psi, g_zeta, g_kappa,
    )
    return ll, g_beta, g_psi, g_zeta, g_kappa


def yes_probability(params: CircularParams, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """G_kappa(z) for the listed (row, column) cells."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    out = np.empty(rows.size)
    kappa = np.asarray(params.kappa, dtype=float)
    _yes_log_prob_kernel(params.beta, params.psi, params.zeta, kappa, rows, cols,
                         *_kappa_constants(kappa), out)
    return np.exp(out)


class CircularPosterior:
    """Log posterior on the sampling coordinates.

    Position vector layout: beta (n), psi (m), zeta (m), log kappa (m),
    log omega_beta, log beta_kappa.  The first n + 2m coordinates are angles.
    Densities of the log-transformed positives include their Jacobians.
    """

    def __init__(self, votes: np.ndarray, use: np.ndarray, prior: CircularPrior | None = None):
        self.votes = np.ascontiguousarray(votes, dtype=np.int8)
        self.use = np.ascontiguousarray(use, dtype=np.bool_)
        self.prior = prior or CircularPrior()
        self.n, self.m = self.votes.shape
        self.dim = self.n + 3 * self.m + 2
        self.circular = np.zeros(self.dim, dtype=bool)
        self.circular[: self.n + 2 * self.m] = True

    def pack(self, p: CircularParams) -> np.ndarray:
        return np.concatenate([
            p.beta, p.psi, p.zeta, np.log(p.kappa), [math.log(p.omega_beta), math.log(p.beta_kappa)]
        ])

    def unpack(self, theta: np.ndarray) -> CircularParams:
        n, m = self.n, self.m
        return CircularParams(
            beta=theta[:n], psi=theta[n:n + m], zeta=theta[n + m:n + 2 * m],
            kappa=np.exp(theta[n + 2 * m:n + 3 * m]),
            omega_beta=math.exp(theta[-2]), beta_kappa=math.exp(theta[-1]),
        )

    def with_votes(self, votes: np.ndarray) -> "CircularPosterior":
        clone = object.__new__(CircularPosterior)
        clone.__dict__.update(self.__dict__)
        clone.votes = np.ascontiguousarray(votes, dtype=np.int8)
        return clone

    def __call__(self, theta: np.ndarray):
        p = self.unpack(np.asarray(theta, dtype=float))
        n, m = self.n, self.m
        ll, g_beta, g_psi, g_zeta, g_kappa = log_likelihood_and_gradient(self.votes, self.use, p)
        pr = self.prior
        omega, kappa = p.omega_beta, p.kappa
        # beta_i ~ von Mises(0, omega); psi and zeta flat on the circle
        lp = ll + omega * np.cos(p.beta).sum() - n * (LOG_2PI + log_bessel_i0(omega))
        lp -= 2 * m * LOG_2PI
        g_beta = g_beta - omega * np.sin(p.beta)
        g_omega = omega * (np.cos(p.beta).sum() - n * bessel_ratio(omega))
        # kappa_j ~ Gamma(1, rate r) with r = beta_kappa^(+-1); Jacobian of log kappa
        s = pr.kappa_sign
        log_r = s * math.log(p.beta_kappa)
        r = math.exp(log_r)
        lp += m * log_r - r * kappa.sum() + np.log(kappa).sum()
        g_logkappa = g_kappa * kappa - r * kappa + 1.0
        g_logbk = s * (m - r * kappa.sum())
        # hyperpriors, each Gamma(1, rate) on the log scale
        lp += math.log(pr.omega_rate) - pr.omega_rate * omega + math.log(omega)
        g_omega += 1.0 - pr.omega_rate * omega
        bk = p.beta_kappa
        lp += math.log(pr.beta_kappa_rate) - pr.beta_kappa_rate * bk + math.log(bk)
        g_logbk += 1.0 - pr.beta_kappa_rate * bk
        grad = np.concatenate([g_beta, g_psi, g_zeta, g_logkappa, [g_omega, g_logbk]])
        lp = float(lp)
        if not (math.isfinite(lp) and np.all(np.isfinite(grad))):
            raise ValueError("non-finite log posterior")
        return lp, grad


def circular_log_posterior_and_gradient(votes, use, params: CircularParams,
                                        prior: CircularPrior | None = None):
    """Log posterior and its gradient on the sampling coordinates of :class:`CircularPosterior`."""
    post = CircularPosterior(votes, use, prior)
    return post(post.pack(params))


# -- imputation --------------------------------------------------------------------------------

def impute_missing(rng: np.random.Generator, missing_rows, missing_cols, params: CircularParams) -> np.ndarray:
    """Draw each missing cell as Bernoulli(G_kappa(z)); returns int8 votes in cell order."""
    prob = yes_probability(params, missing_rows, missing_cols)
    return (rng.random(prob.size) < prob).astype(np.int8)


# -- fitting ----------------------------------------------------------------------------------

@dataclass
class CircularConfig:
    iterations: int = 30000
    burnin: int = 10000
    keep_every: int = 1
    chains: int = 1
    seed: int = 0
    step_size_init: float = 0.05
    n_leapfrog: int = 10
    target_accept: float = 0.75
    impute: bool = True
    adapt_metric: bool = True
    momentum_concentration: float = 1.0
    gamma_convention: str = "rate"
    workers: int | None = None

    def validate(self) -> None:
        if self.iterations <= self.burnin or self.burnin < 0:
            raise ValueError("iterations must exceed burnin, burnin must be non-negative")
        if self.keep_every < 1 or self.chains < 1 or self.n_leapfrog < 1:
            raise ValueError("keep_every, chains and n_leapfrog must be at least 1")
        if not self.step_size_init > 0:
            raise ValueError("step_size_init must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.gamma_convention not in GAMMA_CONVENTIONS:
            raise ValueError(f"gamma_convention must be one of {GAMMA_CONVENTIONS}")

    @property
    def draws_per_chain(self) -> int:
        return len(range(self.burnin, self.iterations, self.keep_every))


@dataclass
class CircularDraws:
    """Retained draws, stacked over chains along the first axis."""

    beta: np.ndarray
    psi: np.ndarray
    zeta: np.ndarray
    kappa: np.ndarray
    omega_beta: np.ndarray
    beta_kappa: np.ndarray
    chain: np.ndarray
    legislator_ids: tuple
    motion_ids: tuple
    config: CircularConfig
    missing_cells: np.ndarray
    imputed: np.ndarray | None
    acceptance_rate: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    diagnostics: object = None
    warning: bool = False

    def per_chain(self, arr: np.ndarray) -> np.ndarray:
        k = self.config.chains
        return arr.reshape((k, arr.shape[0] // k) + arr.shape[1:])

    def config_dict(self) -> dict:
        return asdict(self.config)


def _circular_mean(angles: np.ndarray, weights: np.ndarray) -> float:
    c = float((weights * np.cos(angles)).sum())
    s = float((weights * np.sin(angles)).sum())
    return math.atan2(s, c)


def initial_params(v: VoteMatrix, meta: LegislatorMeta | None) -> CircularParams:
    """Starting point: coalition at +0.5, opposition at -0.5, others at 0.

    Each motion's Yea (Nay) angle starts at the circular mean of the
    legislators who voted Yea (Nay), pushed apart when they coincide.
    """
    n, m = v.votes.shape
    beta = np.zeros(n)
    if meta is not None:
        blocs = {leg.id: leg.bloc for leg in meta.legislators}
        for i, lid in enumerate(v.legislator_ids):
            beta[i] = {"coalition": 0.5, "opposition": -0.5}.get(blocs.get(lid), 0.0)
    psi = np.empty(m)
    zeta = np.empty(m)
    for j in range(m):
        col = v.votes[:, j]
        yes, no = (col == 1).astype(float), (col == 0).astype(float)
        psi[j] = _circular_mean(beta, yes) if yes.any() else 0.0
        zeta[j] = _circular_mean(beta, no) if no.any() else wrap_angle(psi[j] + math.pi)
        if abs(wrap_angle(psi[j] - zeta[j])) < 0.1:
            psi[j], zeta[j] = psi[j] + 0.25, zeta[j] - 0.25
    return CircularParams(beta, psi, zeta, np.ones(m), 1.0, 0.1)


def _run_circular_chain(v: VoteMatrix, init: CircularParams, cfg: CircularConfig, chain: int):
    rng = make_rng(cfg.seed, chain)
    impute_rng = make_rng(cfg.seed, 1000 + chain)
    missing = v.votes == MISSING
    rows, cols = np.nonzero(missing)
    votes = v.votes.copy()
    votes[missing] = 0
    use = ~missing if not cfg.impute else np.ones_like(missing)
    post = CircularPosterior(votes, use, CircularPrior(convention=cfg.gamma_convention))
    keep = cfg.draws_per_chain
    imputed = np.empty((keep, rows.size), dtype=np.int8) if cfg.impute else None
    current = {"votes": votes}

    def before_step(theta):
        if not cfg.impute or rows.size == 0:
            return None
        fresh = current["votes"].copy()
        fresh[rows, cols] = impute_missing(impute_rng, rows, cols, post.unpack(theta))
        current["votes"] = fresh
        return post.with_votes(fresh)

    def on_keep(k):
        if imputed is not None:
            imputed[k] = current["votes"][rows, cols]

    run = run_hmc(
        rng, post, post.pack(init), cfg.iterations, cfg.burnin, cfg.n_leapfrog,
        cfg.step_size_init, keep_every=cfg.keep_every, target_accept=cfg.target_accept,
        adapt_metric=cfg.adapt_metric, circular=post.circular,
        momentum_concentration=cfg.momentum_concentration,
        before_step=before_step, on_keep=on_keep,
    )
    s = run.samples
    n, m = post.n, post.m
    return {
        "beta": s[:, :n], "psi": s[:, n:n + m], "zeta": s[:, n + m:n + 2 * m],
        "kappa": np.exp(s[:, n + 2 * m:n + 3 * m]), "omega_beta": np.exp(s[:, -2]),
        "beta_kappa": np.exp(s[:, -1]), "imputed": imputed,
        "acceptance": run.acceptance_rate, "step_size": run.step_size,
    }


def _chain_worker(args):
    return _run_circular_chain(*args)


def fit_circular(v: VoteMatrix, meta: LegislatorMeta | None = None,
                 config: CircularConfig | None = None,
                 init: CircularParams | None = None) -> CircularDraws:
    """Sample the circular model's posterior.

    Draws are returned raw: rotation and reflection are left unresolved and
    must be fixed by post-processing before interpretation.
    """
    cfg = config or CircularConfig()
    cfg.validate()
    init = init or initial_params(v, meta)
    jobs = [(v, init, cfg, c) for c in range(cfg.chains)]
    results = run_chains(_chain_worker, jobs, cfg.workers)
    stack = {k: np.concatenate([r[k] for r in results]) for k in
             ("beta", "psi", "zeta", "kappa", "omega_beta", "beta_kappa")}
    imputed = np.concatenate([r["imputed"] for r in results]) if cfg.impute else None
    keep = cfg.draws_per_chain
    draws = CircularDraws(
        **stack,
        chain=np.repeat(np.arange(cfg.chains), keep),
        legislator_ids=v.legislator_ids,
        motion_ids=v.motion_ids,
        config=cfg,
        missing_cells=np.argwhere(v.votes == MISSING),
        imputed=imputed,
        acceptance_rate=[r["acceptance"] for r in results],
        step_size=[r["step_size"] for r in results],
    )
    _attach_diagnostics(draws)
    return draws


def _attach_diagnostics(draws: CircularDraws) -> None:
    blocks = {k: draws.per_chain(getattr(draws, k)) for k in
              ("beta", "psi", "zeta", "kappa", "omega_beta", "beta_kappa")}
    try:
        diag = diagnostics(blocks, circular={"beta", "psi", "zeta"},
                           acceptance_rate=float(np.mean(draws.acceptance_rate)))
    except ValueError as exc:
        logger.warning("diagnostics unavailable: %s", exc)
        return
    draws.diagnostics = diag
    if diag.fraction_above(1.1) > 0.05:
        draws.warning = True
        logger.warning("more than 5% of parameters have split R-hat above 1.1")
