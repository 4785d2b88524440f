"""Euclidean ideal-point model with probit or logit link.

Legislator ``i`` votes yea on motion ``j`` with probability
``G(mu_j + alpha_j . beta_i)``.  Motion parameters ``(mu_j, alpha_j)`` share a
joint normal prior, ideal points ``beta_i`` have independent normal priors and
two anchored legislators are held at fixed positions to identify location,
scale and orientation.

The probit link is fitted by Gibbs sampling with truncated-normal data
augmentation; the logit link by Hamiltonian Monte Carlo.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, log_expit, log_ndtr, ndtr

from .data import LegislatorMeta, MaskedVotes, VoteMatrix, complete_case_filter
from .samplers import diagnostics, make_rng, truncated_normal_sample
from .samplers.hmc import run_hmc
from .parallel import run_chains

logger = logging.getLogger(__name__)

LINKS = ("probit", "logit")
PROB_EPS = 1e-12
_LOG_EPS = math.log(PROB_EPS)
_LOG_1M_EPS = math.log1p(-PROB_EPS)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ConfigurationError(ValueError):
    """Invalid fit configuration (for example missing anchors)."""


@dataclass
class EuclideanParams:
    mu: np.ndarray  # (m,)
    alpha: np.ndarray  # (m, d)
    beta: np.ndarray  # (n, d)


@dataclass
class EuclideanPrior:
    """Normal priors: (mu_j, alpha_j) ~ N(alpha0, A0), beta_i ~ N(b_i, B)."""

    alpha0: np.ndarray
    A0: np.ndarray
    b: np.ndarray
    B: np.ndarray

    @classmethod
    def default(cls, n: int, d: int = 1) -> "EuclideanPrior":
        return cls(np.zeros(d + 1), 25.0 * np.eye(d + 1), np.zeros((n, d)), np.eye(d))

    def __post_init__(self):
        self.alpha0 = np.asarray(self.alpha0, dtype=float)
        self.A0 = np.atleast_2d(np.asarray(self.A0, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        for name, mat in (("A0", self.A0), ("B", self.B)):
            if not np.allclose(mat, mat.T):
                raise ConfigurationError(f"{name} must be symmetric")
            if np.any(np.linalg.eigvalsh(mat) <= 0):
                raise ConfigurationError(f"{name} must be positive definite")
        if self.A0.shape[0] != self.alpha0.size or self.B.shape[0] != self.A0.shape[0] - 1:
            raise ConfigurationError("prior dimensions disagree")
        self.A0_inv = np.linalg.inv(self.A0)
        self.B_inv = np.linalg.inv(self.B)

    @property
    def d(self) -> int:
        return self.B.shape[0]


@dataclass
class EuclideanConfig:
    link: str = "logit"
    chains: int = 4
    iterations: int = 80_000
    warmup: int = 16_000
    keep_every: int = 5
    seed: int = 0
    d: int = 1
    n_leapfrog: int = 16
    step_size_init: float = 0.05
    target_accept: float = 0.75
    adapt_metric: bool = True
    motion_mh_scale: float = 0.5
    workers: int | None = None

    def validate(self) -> None:
        if self.link not in LINKS:
            raise ConfigurationError(f"link must be one of {LINKS}")
        if self.chains < 1 or self.iterations < 1 or self.keep_every < 1:
            raise ConfigurationError("chains, iterations and keep_every must be positive")
        if not 0 <= self.warmup < self.iterations:
            raise ConfigurationError("warmup must lie in [0, iterations)")
        if (self.iterations - self.warmup) % self.keep_every:
            raise ConfigurationError("post-warm-up iterations must be divisible by keep_every")

    @property
    def draws_per_chain(self) -> int:
        return (self.iterations - self.warmup) // self.keep_every


@dataclass
class EuclideanDraws:
    mu: np.ndarray  # (S, m)
    alpha: np.ndarray  # (S, m, d)
    beta: np.ndarray  # (S, n, d)
    chain: np.ndarray  # (S,)
    legislator_ids: tuple[str, ...]
    motion_ids: tuple[str, ...]
    anchors: dict[str, float]
    config: dict
    acceptance_rate: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    diagnostics: object = None
    warning: bool = False

    @property
    def n_draws(self) -> int:
        return self.mu.shape[0]

    def per_chain(self, arr: np.ndarray) -> np.ndarray:
        n_chains = int(self.chain.max()) + 1
        return arr.reshape(n_chains, -1, *arr.shape[1:])


def linear_predictor(mu, alpha, beta):
    """mu_j + alpha_j . beta_i; broadcasts to the (n, m) matrix for full parameter arrays."""
    mu = np.asarray(mu, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if alpha.ndim <= 1 and beta.ndim <= 1 and mu.ndim == 0:
        return float(mu + np.dot(alpha, beta))
    return mu[None, :] + beta @ alpha.T


def _log_cdf(link: str, eta):
    return log_ndtr(eta) if link == "probit" else log_expit(eta)


def success_probability(link: str, eta):
    """G(eta) clamped to [1e-12, 1 - 1e-12]."""
    if link not in LINKS:
        raise ValueError(f"unknown link {link!r}")
    g = ndtr(eta) if link == "probit" else expit(eta)
    return np.clip(g, PROB_EPS, 1.0 - PROB_EPS)


def _cell_terms(link: str, eta: np.ndarray, y: np.ndarray):
    """Per-cell log-likelihood and its derivative in eta, clamped as in success_probability."""
    log_g = _log_cdf(link, eta)
    log_1mg = _log_cdf(link, -eta)
    yes = y == 1
    raw = np.where(yes, log_g, log_1mg)
    ll = np.clip(raw, _LOG_EPS, _LOG_1M_EPS)
    active = (raw > _LOG_EPS) & (raw < _LOG_1M_EPS)
    if link == "logit":
        score = np.where(yes, expit(-eta), -expit(eta))
    else:
        log_pdf = -0.5 * eta * eta - _LOG_SQRT_2PI
        score = np.where(yes, np.exp(log_pdf - log_g), -np.exp(log_pdf - log_1mg))
    return ll, np.where(active, score, 0.0)


def log_likelihood(mv: MaskedVotes, params: EuclideanParams, link: str) -> float:
    """Sum over unmasked cells of y log G + (1 - y) log(1 - G)."""
    mask = mv.mask
    if not mask.any():
        return 0.0
    eta = linear_predictor(params.mu, params.alpha, params.beta)
    ll, _ = _cell_terms(link, eta[mask], mv.votes[mask])
    return float(ll.sum())


class EuclideanPosterior:
    """Log posterior and gradient over the free parameters (anchored ideal points excluded).

    The free vector is ``[mu (m), alpha (m*d), beta_free (n_free*d)]``.
    """

    def __init__(self, mv: MaskedVotes, prior: EuclideanPrior, link: str,
                 anchor_rows: dict[int, np.ndarray]):
        self.mv = mv
        self.prior = prior
        self.link = link
        n, m = mv.votes.shape
        self.n, self.m, self.d = n, m, prior.d
        self.anchor_rows = {int(k): np.atleast_1d(np.asarray(v, dtype=float)) for k, v in anchor_rows.items()}
        self.free_rows = np.array([i for i in range(n) if i not in self.anchor_rows], dtype=int)
        self.mask = mv.mask
        self.y = np.where(mv.mask, mv.votes, 0).astype(float)
        self.dim = m + m * self.d + self.free_rows.size * self.d

    def pack(self, params: EuclideanParams) -> np.ndarray:
        return np.concatenate(
            [params.mu, params.alpha.ravel(), params.beta[self.free_rows].ravel()]
        )

    def unpack(self, theta: np.ndarray) -> EuclideanParams:
        m, d = self.m, self.d
        mu = theta[:m]
        alpha = theta[m:m + m * d].reshape(m, d)
        beta = np.empty((self.n, d))
        for i, val in self.anchor_rows.items():
            beta[i] = val
        beta[self.free_rows] = theta[m + m * d:].reshape(-1, d)
        return EuclideanParams(mu.copy(), alpha.copy(), beta)

    def log_prior_and_gradient(self, params: EuclideanParams):
        pr = self.prior
        motion = np.column_stack([params.mu, params.alpha]) - pr.alpha0
        motion_prec = motion @ pr.A0_inv
        lp = -0.5 * float(np.sum(motion_prec * motion))
        free_b = params.beta[self.free_rows] - np.broadcast_to(pr.b, (self.n, self.d))[self.free_rows]
        free_prec = free_b @ pr.B_inv
        lp -= 0.5 * float(np.sum(free_prec * free_b))
        return lp, -motion_prec, -free_prec

    def __call__(self, theta: np.ndarray):
        params = self.unpack(theta)
        if not (np.all(np.isfinite(theta))):
            raise ValueError("non-finite parameters")
        lp, g_motion, g_beta = self.log_prior_and_gradient(params)
        if self.mask.any():
            eta = linear_predictor(params.mu, params.alpha, params.beta)
            ll, score = _cell_terms(self.link, eta, self.y)
            ll = np.where(self.mask, ll, 0.0)
            score = np.where(self.mask, score, 0.0)
            lp += float(ll.sum())
            g_motion = g_motion.copy()
            g_motion[:, 0] += score.sum(axis=0)
            g_motion[:, 1:] += score.T @ params.beta
            g_beta = g_beta + (score @ params.alpha)[self.free_rows]
        grad = np.concatenate([g_motion[:, 0], g_motion[:, 1:].ravel(), g_beta.ravel()])
        return lp, grad


def log_posterior_and_gradient(mv: MaskedVotes, params: EuclideanParams, prior: EuclideanPrior,
                               link: str, anchor_rows: dict[int, np.ndarray] | None = None):
    """Unnormalized log posterior and its gradient over the free parameters.

    Raises:
        ValueError: non-finite parameters.
    """
    post = EuclideanPosterior(mv, prior, link, anchor_rows or {})
    return post(post.pack(params))


def resolve_anchors(v: VoteMatrix, meta: LegislatorMeta, d: int = 1) -> dict[int, np.ndarray]:
    """Map the meta's positive/negative anchors to vote-matrix rows fixed at +1 / -1."""
    rows = {}
    for role, value in (("positive", 1.0), ("negative", -1.0)):
        leg = meta.anchor(role)
        if leg is None:
            raise ConfigurationError(f"no legislator designated as the {role} anchor")
        if leg not in v.legislator_ids:
            raise ConfigurationError(f"{role} anchor {leg!r} is not in the vote matrix")
        vec = np.zeros(d)
        vec[0] = value
        rows[v.legislator_ids.index(leg)] = vec
    return rows


def initial_params(v: VoteMatrix, meta: LegislatorMeta, anchor_rows, d: int = 1) -> EuclideanParams:
    """beta = +1 for coalition, -1 for opposition, 0 otherwise; anchors at their values."""
    beta = np.zeros((v.n_legislators, d))
    for i, leg in enumerate(meta.aligned_to(v.legislator_ids)):
        beta[i, 0] = {"coalition": 1.0, "opposition": -1.0}.get(leg.bloc, 0.0)
    for i, val in anchor_rows.items():
        beta[i] = val
    return EuclideanParams(np.zeros(v.n_motions), np.zeros((v.n_motions, d)), beta)


# -- probit Gibbs sampler ---------------------------------------------------------------

def _sample_mvn_precision(rng, precision: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Batched draws from N(P^-1 r, P^-1) for stacks of precision matrices."""
    chol = np.linalg.cholesky(precision)
    mean = np.linalg.solve(precision, rhs[..., None])[..., 0]
    eps = rng.standard_normal(rhs.shape)
    return mean + np.linalg.solve(np.swapaxes(chol, -1, -2), eps[..., None])[..., 0]


class ProbitGibbs:
    """Albert-Chib data augmentation: latent utilities, then conjugate motion and ideal-point updates.

    Each sweep also applies a per-motion scale move to (latent column, motion
    parameters), the generalized Gibbs step of Liu and Sabatti.  Nearly
    separable motions otherwise pin the motion parameters to their latent
    utilities and the plain augmentation chain crawls along the scale direction.
    """

    def __init__(self, mv: MaskedVotes, prior: EuclideanPrior, anchor_rows, mh_scale: float = 0.5):
        self.mh_scale = mh_scale
        self.prior_chol = np.linalg.cholesky(prior.A0)
        self.beta_chol = np.linalg.cholesky(prior.B)
        self.sign = np.where(mv.votes == 1, 1.0, -1.0)
        self.mask = mv.mask
        self.obs = np.nonzero(mv.mask)
        self.positive = mv.votes[self.obs] == 1
        self.prior = prior
        self.n, self.m = mv.votes.shape
        self.d = prior.d
        self.anchor_rows = anchor_rows
        self.free = np.array([i for i in range(self.n) if i not in anchor_rows], dtype=int)
        self.weights = mv.mask.astype(float)
        self.prior_motion_rhs = prior.A0_inv @ prior.alpha0
        b = np.broadcast_to(prior.b, (self.n, self.d))
        self.prior_beta_rhs = (b @ prior.B_inv)[self.free]

    def _rescale(self, rng, latent, motion, x):
        # Joint move (z_.j, theta_j) -> (g z_.j, g theta_j), g > 0, drawn from
        # p(g theta, g z) g^(N_j + d + 1) dg / g.  With a zero prior mean the
        # draw is exact: g^2 ~ Gamma((N_j + d + 1) / 2, rate = Q / 2).
        resid = self.weights * (latent - x @ motion.T)
        sse = np.einsum("ij,ij->j", resid, resid)
        prior_quad = np.einsum("jk,kl,jl->j", motion, self.prior.A0_inv, motion)
        cross = motion @ (self.prior.A0_inv @ self.prior.alpha0)
        shape = 0.5 * (self.weights.sum(axis=0) + self.d + 1)
        quad = sse + prior_quad
        if np.any(self.prior.alpha0 != 0):
            g = self._rescale_mh(rng, shape, quad, cross)
        else:
            g = np.sqrt(rng.gamma(shape, 2.0 / quad))
        return latent * g[None, :]

    @staticmethod
    def _rescale_mh(rng, shape, quad, cross, width=0.3):
        def log_density(log_g):
            g = np.exp(log_g)
            return 2 * shape * log_g - 0.5 * g * g * quad + g * cross

        prop = width * rng.standard_normal(shape.size)
        accept = np.log(rng.random(shape.size)) < log_density(prop) - log_density(0.0)
        return np.where(accept, np.exp(prop), 1.0)

    def _motion_loglik(self, motion, beta):
        eta = motion[:, 0][None, :] + beta @ motion[:, 1:].T
        signed = np.where(self.sign > 0, eta, -eta)
        return np.einsum("ij,ij->j", self.weights, log_ndtr(signed))

    def _motion_mh(self, rng, motion, beta):
        # Random-walk Metropolis on each (mu_j, alpha_j) with the latent utilities
        # integrated out; the latents are redrawn right after, so this is a
        # collapsed step.  It decorrelates motions whose votes barely inform them.
        cur = self._motion_loglik(motion, beta)
        centered = motion - self.prior.alpha0
        cur_prior = -0.5 * np.einsum("jk,kl,jl->j", centered, self.prior.A0_inv, centered)
        step = self.mh_scale * rng.standard_normal(motion.shape) @ self.prior_chol.T
        prop = motion + step
        pc = prop - self.prior.alpha0
        prop_prior = -0.5 * np.einsum("jk,kl,jl->j", pc, self.prior.A0_inv, pc)
        prop_ll = self._motion_loglik(prop, beta)
        accept = np.log(rng.random(motion.shape[0])) < prop_ll + prop_prior - cur - cur_prior
        return np.where(accept[:, None], prop, motion)

    def _legislator_loglik(self, mu, alpha, beta_rows, rows):
        eta = mu[None, :] + beta_rows @ alpha.T
        signed = np.where(self.sign[rows] > 0, eta, -eta)
        return np.einsum("ij,ij->i", self.weights[rows], log_ndtr(signed))

    def _legislator_mh(self, rng, mu, alpha, beta):
        rows = self.free
        if rows.size == 0:
            return beta
        b = np.broadcast_to(self.prior.b, (self.n, self.d))[rows]
        cur = beta[rows]
        prop = cur + self.mh_scale * rng.standard_normal(cur.shape) @ self.beta_chol.T

        def log_target(x):
            c = x - b
            return self._legislator_loglik(mu, alpha, x, rows) - 0.5 * np.einsum(
                "ik,kl,il->i", c, self.prior.B_inv, c)

        accept = np.log(rng.random(rows.size)) < log_target(prop) - log_target(cur)
        beta = beta.copy()
        beta[rows] = np.where(accept[:, None], prop, cur)
        return beta

    def sweep(self, rng, params: EuclideanParams) -> EuclideanParams:
        mu, alpha, beta = params.mu, params.alpha, params.beta
        w = self.weights
        if self.mh_scale > 0:
            motion = self._motion_mh(rng, np.column_stack([mu, alpha]), beta)
            mu, alpha = motion[:, 0].copy(), motion[:, 1:].copy()
            beta = self._legislator_mh(rng, mu, alpha, beta)
        eta = linear_predictor(mu, alpha, beta)
        latent = np.zeros((self.n, self.m))
        latent[self.obs] = truncated_normal_sample(rng, eta[self.obs], 1.0, self.positive)
        x = np.column_stack([np.ones(self.n), beta])
        latent = self._rescale(rng, latent, np.column_stack([mu, alpha]), x)

        prec = self.prior.A0_inv + np.einsum("ij,ik,il->jkl", w, x, x)
        rhs = self.prior_motion_rhs + (w * latent).T @ x
        motion = _sample_mvn_precision(rng, prec, rhs)
        mu, alpha = motion[:, 0].copy(), motion[:, 1:].copy()

        resid = w * (latent - mu[None, :])
        wf = w[self.free]
        prec_b = self.prior.B_inv + np.einsum("ij,jk,jl->ikl", wf, alpha, alpha)
        rhs_b = self.prior_beta_rhs + resid[self.free] @ alpha
        beta = beta.copy()
        beta[self.free] = _sample_mvn_precision(rng, prec_b, rhs_b)
        return EuclideanParams(mu, alpha, beta)


# -- chain drivers ------------------------------------------------------------------------

def _run_probit_chain(mv, prior, anchor_rows, init, cfg: EuclideanConfig, chain: int):
    rng = make_rng(cfg.seed, chain)
    gibbs = ProbitGibbs(mv, prior, anchor_rows, cfg.motion_mh_scale)
    params = init
    keep = cfg.draws_per_chain
    mu = np.empty((keep, gibbs.m))
    alpha = np.empty((keep, gibbs.m, gibbs.d))
    beta = np.empty((keep, gibbs.n, gibbs.d))
    k = 0
    for it in range(cfg.iterations):
        params = gibbs.sweep(rng, params)
        if it >= cfg.warmup and (it - cfg.warmup) % cfg.keep_every == 0:
            mu[k], alpha[k], beta[k] = params.mu, params.alpha, params.beta
            k += 1
    return {"mu": mu, "alpha": alpha, "beta": beta, "acceptance": 1.0, "step_size": None}


def _run_logit_chain(mv, prior, anchor_rows, init, cfg: EuclideanConfig, chain: int):
    rng = make_rng(cfg.seed, chain)
    post = EuclideanPosterior(mv, prior, cfg.link, anchor_rows)
    run = run_hmc(
        rng, post, post.pack(init), cfg.iterations, cfg.warmup, cfg.n_leapfrog,
        cfg.step_size_init, keep_every=cfg.keep_every, target_accept=cfg.target_accept,
        adapt_metric=cfg.adapt_metric,
    )
    samples = run.samples
    keep = samples.shape[0]
    mu = samples[:, :post.m]
    alpha = samples[:, post.m:post.m * (1 + post.d)].reshape(keep, post.m, post.d)
    beta = np.empty((keep, post.n, post.d))
    for i, val in post.anchor_rows.items():
        beta[:, i] = val
    beta[:, post.free_rows] = samples[:, post.m * (1 + post.d):].reshape(keep, -1, post.d)
    return {
        "mu": mu, "alpha": alpha, "beta": beta,
        "acceptance": run.acceptance_rate, "step_size": run.step_size,
    }


def _chain_worker(args):
    link = args[-2].link
    runner = _run_probit_chain if link == "probit" else _run_logit_chain
    return runner(*args)


def fit_euclidean(v: VoteMatrix, meta: LegislatorMeta, prior: EuclideanPrior | None = None,
                  config: EuclideanConfig | None = None, mask: np.ndarray | None = None) -> EuclideanDraws:
    """Sample the Euclidean ideal-point posterior.

    ``v`` should already have no-record legislators removed.  Missing cells are
    masked out of the likelihood (complete-case analysis).

    Raises:
        ConfigurationError: missing anchors or an invalid schedule.
    """
    cfg = config or EuclideanConfig()
    cfg.validate()
    prior = prior or EuclideanPrior.default(v.n_legislators, cfg.d)
    if prior.d != cfg.d:
        raise ConfigurationError("prior dimension does not match config.d")
    anchor_rows = resolve_anchors(v, meta, cfg.d)
    mv = complete_case_filter(v)
    if mask is not None:
        mv = MaskedVotes(v, mv.mask & mask)
    init = initial_params(v, meta, anchor_rows, cfg.d)
    jobs = [(mv, prior, anchor_rows, init, cfg, c) for c in range(cfg.chains)]
    results = run_chains(_chain_worker, jobs, cfg.workers)

    keep = cfg.draws_per_chain
    draws = EuclideanDraws(
        mu=np.concatenate([r["mu"] for r in results]),
        alpha=np.concatenate([r["alpha"] for r in results]),
        beta=np.concatenate([r["beta"] for r in results]),
        chain=np.repeat(np.arange(cfg.chains), keep),
        legislator_ids=v.legislator_ids,
        motion_ids=v.motion_ids,
        anchors={v.legislator_ids[i]: float(val[0]) for i, val in anchor_rows.items()},
        config=asdict(cfg),
        acceptance_rate=[r["acceptance"] for r in results],
        step_size=[r["step_size"] for r in results],
    )
    _attach_diagnostics(draws, anchor_rows)
    return draws


def _attach_diagnostics(draws: EuclideanDraws, anchor_rows) -> None:
    free = [i for i in range(draws.beta.shape[1]) if i not in anchor_rows]
    blocks = {
        "mu": draws.per_chain(draws.mu),
        "alpha": draws.per_chain(draws.alpha),
        "beta": draws.per_chain(draws.beta[:, free]),
    }
    try:
        diag = diagnostics(blocks, acceptance_rate=float(np.mean(draws.acceptance_rate)))
    except ValueError as exc:
        logger.info("diagnostics unavailable: %s", exc)
        return
    draws.diagnostics = diag
    frac = diag.fraction_above(1.1)
    if frac > 0.05:
        draws.warning = True
        logger.warning("R-hat > 1.1 on %.1f%% of parameters", 100 * frac)


def posterior_mean_beta(draws: EuclideanDraws) -> np.ndarray:
    return draws.beta.mean(axis=0)
