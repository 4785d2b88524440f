"""Synthetic roll calls from known parameters and brute-force posterior oracles.

The oracle code here deliberately re-derives the link functions from the
standard library and scipy primitives instead of importing the fitting
modules, so that agreement between the two is evidence rather than tautology.
"""

from __future__ import annotations

import io
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .data import BLOCS, MISSING, Legislator, LegislatorMeta, VoteMatrix

GEOMETRIES = ("euclidean", "circular")


class SynthConfigError(ValueError):
    """Invalid synthetic-data configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class OracleRefused(ValueError):
    """The instance is too large for brute-force quadrature."""


@dataclass
class BlocSpec:
    size: int
    center: float
    spread: float
    bloc: str | None = None


@dataclass
class SynthConfig:
    n: int
    m: int
    geometry: str = "euclidean"
    blocs: list[BlocSpec] = field(default_factory=list)
    link: str = "probit"
    mu_sd: float = 1.0
    alpha_sd: float = 1.5
    kappa: float | None = None
    kappa_shape: float = 1.0
    kappa_rate: float = 0.5
    bill_concentration: float = 0.0
    missing_rate: float = 0.0
    scandal_intercept: float = -1.0
    scandal_slope: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.blocs = [b if isinstance(b, BlocSpec) else BlocSpec(**b) for b in self.blocs]
        if not self.blocs:
            self.blocs = [BlocSpec(self.n, 0.0, 1.0)]

    def validate(self) -> None:
        if self.n < 2:
            raise SynthConfigError("need at least two legislators", "n")
        if self.m < 1:
            raise SynthConfigError("need at least one motion", "m")
        if self.geometry not in GEOMETRIES:
            raise SynthConfigError(f"must be one of {GEOMETRIES}", "geometry")
        if sum(b.size for b in self.blocs) != self.n:
            raise SynthConfigError("bloc sizes must sum to n", "blocs")
        for k, b in enumerate(self.blocs):
            if b.size < 0 or b.spread < 0:
                raise SynthConfigError("size and spread must be non-negative", f"blocs[{k}]")
            if b.bloc is not None and b.bloc not in BLOCS:
                raise SynthConfigError(f"bloc must be one of {BLOCS}", f"blocs[{k}].bloc")
        if not 0 <= self.missing_rate < 1:
            raise SynthConfigError("must lie in [0, 1)", "missing_rate")
        if self.link not in ("probit", "logit"):
            raise SynthConfigError("must be probit or logit", "link")
        if self.kappa is not None and self.kappa <= 0:
            raise SynthConfigError("must be positive", "kappa")

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise SynthConfigError("unknown field", unknown[0])
        for key in ("n", "m"):
            if key not in raw:
                raise SynthConfigError("required", key)
        blocs = []
        for k, b in enumerate(raw.get("blocs", [])):
            try:
                blocs.append(BlocSpec(**b))
            except TypeError as exc:
                raise SynthConfigError(str(exc), f"blocs[{k}]") from None
        cfg = cls(**{**raw, "blocs": blocs})
        cfg.validate()
        return cfg


@dataclass
class SynthTruth:
    geometry: str
    beta: np.ndarray
    mu: np.ndarray | None = None
    alpha: np.ndarray | None = None
    psi: np.ndarray | None = None
    zeta: np.ndarray | None = None
    kappa: np.ndarray | None = None

    def to_csv(self, legislator_ids, motion_ids) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["block", "id", "value"])
        for i, leg in enumerate(legislator_ids):
            writer.writerow(["beta", leg, repr(float(np.ravel(self.beta)[i]))])
        for name in ("mu", "alpha", "psi", "zeta", "kappa"):
            arr = getattr(self, name)
            if arr is None:
                continue
            for j, mot in enumerate(motion_ids):
                writer.writerow([name, mot, repr(float(np.ravel(arr)[j]))])
        return buf.getvalue()


def _wrap(theta):
    return np.mod(theta + math.pi, 2 * math.pi) - math.pi


def _phi(x):
    return 0.5 * np.vectorize(math.erfc)(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def _logistic(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def circular_yes_probability(beta, psi, zeta, kappa):
    """Pr(yea) under the circular model, written directly from the geodesic definition."""
    d_nay = np.arccos(np.clip(np.cos(zeta - beta), -1.0, 1.0))
    d_yea = np.arccos(np.clip(np.cos(psi - beta), -1.0, 1.0))
    z = d_nay ** 2 - d_yea ** 2
    u = (z + math.pi ** 2) / (2.0 * math.pi ** 2)
    return betainc(kappa, kappa, np.clip(u, 0.0, 1.0))


def generate(cfg: SynthConfig):
    """Simulate a roll-call matrix.

    Returns:
        (VoteMatrix, SynthTruth, LegislatorMeta).  Legislator blocs follow the
        generating cluster; the legislators with the largest and smallest true
        position are designated positive and negative anchors.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, m = cfg.n, cfg.m
    centers = np.concatenate([np.full(b.size, b.center) for b in cfg.blocs])
    spreads = np.concatenate([np.full(b.size, b.spread) for b in cfg.blocs])
    bloc_names = []
    for k, b in enumerate(cfg.blocs):
        bloc_names += [b.bloc or BLOCS[min(k, len(BLOCS) - 1)]] * b.size
    raw = centers + spreads * rng.standard_normal(n)

    if cfg.geometry == "euclidean":
        beta = raw
        mu = cfg.mu_sd * rng.standard_normal(m)
        alpha = cfg.alpha_sd * rng.standard_normal(m)
        hi, lo = int(np.argmax(beta)), int(np.argmin(beta))
        # Affine map putting the extreme legislators at +1 / -1; the likelihood is unchanged.
        scale = 2.0 / (beta[hi] - beta[lo])
        shift = -1.0 - scale * beta[lo]
        mu = mu - alpha * shift / scale
        alpha = alpha / scale
        beta = scale * beta + shift
        beta[hi], beta[lo] = 1.0, -1.0
        eta = mu[None, :] + np.outer(beta, alpha)
        prob = _phi(eta) if cfg.link == "probit" else _logistic(eta)
        truth = SynthTruth("euclidean", beta, mu=mu, alpha=alpha[:, None])
        score = beta
    else:
        beta = _wrap(raw)
        psi = _von_mises(rng, cfg.bill_concentration, m)
        zeta = _von_mises(rng, cfg.bill_concentration, m)
        if cfg.kappa is not None:
            kappa = np.full(m, float(cfg.kappa))
        else:
            kappa = rng.gamma(cfg.kappa_shape, 1.0 / cfg.kappa_rate, size=m)
        prob = circular_yes_probability(beta[:, None], psi[None, :], zeta[None, :], kappa[None, :])
        hi, lo = int(np.argmax(beta)), int(np.argmin(beta))
        truth = SynthTruth("circular", beta, psi=psi, zeta=zeta, kappa=kappa)
        score = beta

    votes = (rng.random((n, m)) < prob).astype(np.int8)
    if cfg.missing_rate > 0:
        votes[rng.random((n, m)) < cfg.missing_rate] = MISSING
    scandal = rng.random(n) < _logistic(cfg.scandal_intercept + cfg.scandal_slope * score)

    width = len(str(max(n, m)))
    leg_ids = tuple(f"L{i + 1:0{width}d}" for i in range(n))
    mot_ids = tuple(f"V{j + 1:0{width}d}" for j in range(m))
    legislators = []
    for i in range(n):
        anchor = "positive" if i == hi else "negative" if i == lo else None
        legislators.append(
            Legislator(leg_ids[i], f"Legislator {i + 1}", f"P{bloc_names[i][:3].upper()}",
                       bloc_names[i], bool(scandal[i]), anchor)
        )
    return VoteMatrix(votes, leg_ids, mot_ids), truth, LegislatorMeta(tuple(legislators))


def _von_mises(rng, concentration: float, size: int) -> np.ndarray:
    if concentration <= 0:
        return rng.uniform(-math.pi, math.pi, size)
    return rng.vonmises(0.0, concentration, size)


# -- quadrature oracle --------------------------------------------------------------------

@dataclass
class GridSpec:
    beta_range: tuple[float, float] = (-6.0, 6.0)
    beta_points: int = 41
    motion_range: tuple[float, float] = (-25.0, 25.0)
    motion_points: int = 41


MAX_GRID_POINTS = 41
MAX_JOINT_DIMENSION = 6


def _trapezoid(lo, hi, points):
    x = np.linspace(lo, hi, points)
    w = np.full(points, (hi - lo) / (points - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def _gauss_logpdf_2d(x, y, mean, cov):
    inv = np.linalg.inv(cov)
    dx, dy = x - mean[0], y - mean[1]
    quad = inv[0, 0] * dx * dx + 2 * inv[0, 1] * dx * dy + inv[1, 1] * dy * dy
    return -0.5 * quad - math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(cov))


def quadrature_posterior(v: VoteMatrix, anchors: dict[str, float], alpha0=(0.0, 0.0),
                         A0=((25.0, 0.0), (0.0, 25.0)), b=0.0, B=1.0, link: str = "probit",
                         grid: GridSpec | None = None) -> dict:
    """Posterior means of a tiny one-dimensional Euclidean model by grid quadrature.

    Given the free ideal points the motions are conditionally independent, so
    the joint integral factorizes into a grid over the free ideal points and,
    per motion and grid point, a two-dimensional grid over (mu_j, alpha_j).

    Args:
        v: vote matrix with at most 3 legislators and 4 motions.
        anchors: legislator id -> fixed position.
        alpha0, A0: prior mean and covariance of (mu_j, alpha_j).
        b, B: prior mean and variance of each free ideal point.
        link: "probit" or "logit".
        grid: ranges and point counts (at most 41 points per axis).

    Returns:
        dict with ``beta`` (n,), ``mu`` (m,), ``alpha`` (m,) posterior means
        (anchors at their fixed values) and ``weights``, the normalized
        posterior over the free-ideal-point grid.

    Raises:
        OracleRefused: instance or grid too large.
    """
    grid = grid or GridSpec()
    n, m = v.votes.shape
    free = [i for i, leg in enumerate(v.legislator_ids) if leg not in anchors]
    if n > 3 or m > 4:
        raise OracleRefused(f"instance {n}x{m} exceeds the 3x4 oracle limit")
    if len(free) + 2 > MAX_JOINT_DIMENSION:
        raise OracleRefused("joint integration dimension exceeds 6")
    if max(grid.beta_points, grid.motion_points) > MAX_GRID_POINTS:
        raise OracleRefused(f"more than {MAX_GRID_POINTS} grid points per axis")
    cdf = _phi if link == "probit" else _logistic

    bx, bw = _trapezoid(*grid.beta_range, grid.beta_points)
    mx, mw = _trapezoid(*grid.motion_range, grid.motion_points)
    # free ideal-point grid: (G, n_free)
    mesh = np.meshgrid(*([bx] * len(free)), indexing="ij")
    free_pts = np.stack([g.ravel() for g in mesh], axis=-1) if free else np.zeros((1, 0))
    free_w = np.ones(len(free_pts))
    for k in range(len(free)):
        idx = np.unravel_index(np.arange(len(free_pts)), [len(bx)] * len(free))[k]
        free_w *= bw[idx]
    positions = np.zeros((len(free_pts), n))
    for i, leg in enumerate(v.legislator_ids):
        if leg in anchors:
            positions[:, i] = anchors[leg]
    positions[:, free] = free_pts

    log_post = np.log(free_w)
    for col in range(len(free)):
        log_post = log_post - 0.5 * (free_pts[:, col] - b) ** 2 / B - 0.5 * math.log(2 * math.pi * B)

    mu_g, al_g = np.meshgrid(mx, mx, indexing="ij")
    motion_w = np.outer(mw, mw)
    log_prior_motion = _gauss_logpdf_2d(mu_g, al_g, np.asarray(alpha0, float), np.asarray(A0, float))
    base = motion_w * np.exp(log_prior_motion)  # (H, H)

    cond_mu = np.zeros((len(free_pts), m))
    cond_alpha = np.zeros((len(free_pts), m))
    for j in range(m):
        lik = np.ones((len(free_pts),) + mu_g.shape)
        for i in range(n):
            y = v.votes[i, j]
            if y == MISSING:
                continue
            p = cdf(mu_g[None] + al_g[None] * positions[:, i, None, None])
            lik = lik * (p if y == 1 else 1.0 - p)
        integrand = lik * base[None]
        marg = integrand.sum(axis=(1, 2))
        cond_mu[:, j] = (integrand * mu_g[None]).sum(axis=(1, 2)) / marg
        cond_alpha[:, j] = (integrand * al_g[None]).sum(axis=(1, 2)) / marg
        log_post = log_post + np.log(marg)

    weights = np.exp(log_post - log_post.max())
    weights /= weights.sum()
    beta_mean = weights @ positions
    for i, leg in enumerate(v.legislator_ids):
        if leg in anchors:
            beta_mean[i] = anchors[leg]
    return {
        "beta": beta_mean,
        "mu": weights @ cond_mu,
        "alpha": weights @ cond_alpha,
        "weights": weights,
        "grid": free_pts,
    }
