"""Logistic regression of a binary legislator attribute on ideal points, draw by draw.

Each posterior draw of the ideal points gives one maximum-likelihood fit and
one in-sample AUC; the spread of these across draws carries the ideal-point
uncertainty into the regression.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import rankdata

from .data import DataError, LegislatorMeta

SCORE_TOL = 1e-10
MAX_ITER = 50
QUANTILES = (0.5, 2.5, 97.5, 99.5)


class RegressionError(ValueError):
    """The regression is undefined for the given data."""


@dataclass
class LogisticFit:
    intercept: np.ndarray
    slope: np.ndarray
    converged: np.ndarray
    iterations: np.ndarray


def _loglik(b0, b1, x, y):
    eta = b0[:, None] + b1[:, None] * x
    return (y * log_expit(eta) + (1 - y) * log_expit(-eta)).sum(axis=1)


def fit_logistic_batch(x, y, tol: float = SCORE_TOL, max_iter: int = MAX_ITER) -> LogisticFit:
    """Fit logit P(y=1) = b0 + b1 x separately for every row of ``x``.

    Newton-Raphson (equivalently IRLS) with step halving whenever a full step
    lowers the likelihood.  A row converges once both score components are
    below ``tol``.  Rows whose classes are separated (quasi-completely or
    completely) by x have no finite MLE; they run to ``max_iter`` and are
    returned with ``converged=False``, as is any row that fails to settle.

    Args:
        x: (rows, n) covariate values, or a single length-n vector.
        y: length-n 0/1 outcome shared by all rows.

    Raises:
        RegressionError: y has a single class, or some row of x is constant.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[1] != y.size:
        raise RegressionError("x and y lengths differ")
    if not np.all(np.isfinite(x)):
        raise RegressionError("x must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise RegressionError("y must be binary")
    if y.min() == y.max():
        raise RegressionError("y contains a single class")
    if np.any(np.ptp(x, axis=1) == 0):
        raise RegressionError("x is constant; the slope is not identified")
    rows = x.shape[0]
    pos, neg = x[:, y == 1], x[:, y == 0]
    separated = (pos.min(axis=1) >= neg.max(axis=1)) | (neg.min(axis=1) >= pos.max(axis=1))
    ybar = y.mean()
    b0 = np.full(rows, math.log(ybar / (1 - ybar)))
    b1 = np.zeros(rows)
    converged = np.zeros(rows, dtype=bool)
    iterations = np.zeros(rows, dtype=int)
    active = np.arange(rows)
    for it in range(1, max_iter + 1):
        xa = x[active]
        p = expit(b0[active, None] + b1[active, None] * xa)
        r = y - p
        s0, s1 = r.sum(axis=1), (r * xa).sum(axis=1)
        # separated rows have no finite MLE: run them to the cap and flag them
        done = (np.maximum(np.abs(s0), np.abs(s1)) < tol) & ~separated[active]
        converged[active[done]] = True
        iterations[active[done]] = it - 1
        keep = ~done
        active, xa, p, s0, s1 = active[keep], xa[keep], p[keep], s0[keep], s1[keep]
        if active.size == 0:
            break
        w = p * (1 - p)
        h00, h01, h11 = w.sum(axis=1), (w * xa).sum(axis=1), (w * xa * xa).sum(axis=1)
        det = h00 * h11 - h01 * h01
        with np.errstate(divide="ignore", invalid="ignore"):
            d0 = (h11 * s0 - h01 * s1) / det
            d1 = (h00 * s1 - h01 * s0) / det
        bad = ~np.isfinite(d0) | ~np.isfinite(d1)
        d0[bad], d1[bad] = 0.0, 0.0
        old = _loglik(b0[active], b1[active], xa, y)
        scale = np.ones(active.size)
        for _ in range(30):
            new = _loglik(b0[active] + scale * d0, b1[active] + scale * d1, xa, y)
            worse = new < old - 1e-12 * np.abs(old)
            if not worse.any():
                break
            scale[worse] *= 0.5
        b0[active] += scale * d0
        b1[active] += scale * d1
        iterations[active] = it
    return LogisticFit(b0, b1, converged, iterations)


def fit_logistic(x, y, tol: float = SCORE_TOL, max_iter: int = MAX_ITER) -> tuple[float, float, bool]:
    """Single maximum-likelihood logistic fit; returns (intercept, slope, converged)."""
    fit = fit_logistic_batch(np.asarray(x, dtype=float)[None, :], y, tol, max_iter)
    return float(fit.intercept[0]), float(fit.slope[0]), bool(fit.converged[0])


def _check_auc_inputs(scores, y):
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    y = np.asarray(y).astype(bool)
    if scores.shape[1] != y.size:
        raise ValueError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    return scores, y, n_pos, n_neg


def auc(scores, y):
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties half.

    ``scores`` may be (rows, n) for one AUC per row.
    """
    raw = np.asarray(scores)
    scores, y, n_pos, n_neg = _check_auc_inputs(scores, y)
    ranks = rankdata(scores, axis=1, method="average")
    u = ranks[:, y].sum(axis=1) - n_pos * (n_pos + 1) / 2.0
    out = u / (n_pos * n_neg)
    return out if raw.ndim == 2 else float(out[0])


def auc_fitted(intercept, slope, x, y):
    """AUC of fitted probabilities expit(b0 + b1 x).

    Computed on sign(b1) * x, which orders legislators identically to the
    fitted probabilities but cannot collapse distinct scores into ties when
    the logistic saturates in floating point.  The intercept does not affect
    the ordering and is accepted only for symmetry with the fit output.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s = np.sign(np.atleast_1d(np.asarray(slope, dtype=float)))
    return auc(s[:, None] * x, y)


@dataclass
class RegressionEnsemble:
    intercept: np.ndarray
    slope: np.ndarray
    auc: np.ndarray
    converged: np.ndarray
    draw_index: np.ndarray
    excluded_draws: int
    excluded_legislators: list[str]

    @property
    def separated(self) -> int:
        return int((~self.converged).sum())

    def summary(self) -> dict:
        out = {}
        for name in ("intercept", "slope", "auc"):
            v = getattr(self, name)
            q = np.percentile(v, QUANTILES)
            out[name] = {
                "mean": float(v.mean()),
                "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                "q0.5": float(q[0]), "q2.5": float(q[1]),
                "q97.5": float(q[2]), "q99.5": float(q[3]),
            }
        out["n_draws"] = int(self.slope.size)
        out["excluded_draws"] = self.excluded_draws
        out["separated_draws"] = self.separated
        out["excluded_legislators"] = list(self.excluded_legislators)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["draw", "intercept", "slope", "auc", "converged"])
        for k in range(self.slope.size):
            writer.writerow([int(self.draw_index[k]), repr(float(self.intercept[k])),
                             repr(float(self.slope[k])), repr(float(self.auc[k])),
                             int(self.converged[k])])
        return buf.getvalue()


def ensemble_regression(draws, legislator_ids, meta: LegislatorMeta,
                        exclude=None, drop_anchors: bool = True) -> RegressionEnsemble:
    """Regress the scandal flag on each draw's ideal points.

    Args:
        draws: (draws, legislators) ideal points; NaN marks an unusable value
            (an invalid tangent projection) and drops the whole draw.
        exclude: extra legislator ids to leave out.
        drop_anchors: leave out the legislators whose positions were fixed.

    Raises:
        RegressionError: no draw survives the exclusions, or the outcome or a
            draw's covariate is degenerate.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    ids = list(legislator_ids)
    if draws.shape[1] != len(ids):
        raise DataError("draw matrix does not match the legislator ids")
    legs = [meta.get(i) for i in ids]
    skip = set(exclude or ())
    if drop_anchors:
        skip |= {leg.id for leg in legs if leg.anchor}
    cols = [k for k, leg in enumerate(legs) if leg.id not in skip]
    y = np.array([legs[k].scandal_flag for k in cols], dtype=float)
    x = draws[:, cols]
    ok = np.all(np.isfinite(x), axis=1)
    if not ok.any():
        raise RegressionError("every draw was excluded")
    x = x[ok]
    fit = fit_logistic_batch(x, y)
    scores = auc_fitted(fit.intercept, fit.slope, x, y)
    return RegressionEnsemble(
        fit.intercept, fit.slope, np.atleast_1d(scores), fit.converged,
        np.flatnonzero(ok), int((~ok).sum()), sorted(skip & set(ids)),
    )
