"""Identification of circular draws, tangent projection and posterior summaries.

Circular draws are only defined up to a rotation and a reflection of the
whole circle.  Each draw is rotated so a first reference legislator sits at
pi/2, then reflected about the axis through pi/2 when a second reference
legislator lands on the wrong side.  Aligned angles near pi/2 are mapped to
a line by ``tan(theta - pi/2)``, giving values comparable with Euclidean
ideal points.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataError, LegislatorMeta
from .samplers import MIN_DRAWS, wrap_angle

HALF_PI = 0.5 * math.pi
TANGENT_EPS = 1e-3
MIN_VALID_FRACTION = 0.5
TANGENT_CUTOFF = 10.0
SUMMARY_COLUMNS = ("id", "mean", "lo", "hi", "party", "bloc", "scandal_flag")


def align_rotation(draws, ref1: int, extra: dict | None = None):
    """Rotate every draw so column ``ref1`` sits at pi/2.

    Args:
        draws: (draws, legislators) angles.
        ref1: column index of the reference legislator.
        extra: optional name -> (draws, k) arrays of further angles (motion
            outcomes) rotated by the same per-draw shift.

    Returns:
        The rotated draws, or (rotated, rotated extras) when ``extra`` is given.
    """
    draws = np.asarray(draws, dtype=float)
    shift = draws[:, ref1] - HALF_PI
    out = wrap_angle(draws - shift[:, None])
    # Exact placement; wrapping arithmetic could leave a rounding residue.
    out[:, ref1] = HALF_PI
    if extra is None:
        return out
    return out, {k: wrap_angle(np.asarray(v, dtype=float) - shift[:, None]) for k, v in extra.items()}


def reflect(angles):
    """Mirror angles about the axis through pi/2, theta -> pi - theta."""
    return wrap_angle(math.pi - np.asarray(angles, dtype=float))


@dataclass
class ReflectionResult:
    draws: np.ndarray
    reflected: np.ndarray
    ties: int
    extra: dict = field(default_factory=dict)


def align_reflection(draws, ref1: int, ref2: int, extra: dict | None = None) -> ReflectionResult:
    """Reflect draws in which ``ref2`` lies clockwise of ``ref1`` (already at pi/2).

    Draws where ``ref2`` sits exactly on the axis (at pi/2 or -pi/2) are
    left alone and counted as ties.
    """
    draws = np.asarray(draws, dtype=float)
    side = wrap_angle(draws[:, ref2] - draws[:, ref1])
    on_axis = (side == 0.0) | (side == -math.pi)
    flip = (side < 0) & ~on_axis
    out = draws.copy()
    out[flip] = reflect(draws[flip])
    out[:, ref1] = draws[:, ref1]
    moved = {}
    for k, v in (extra or {}).items():
        v = np.array(v, dtype=float)
        v[flip] = reflect(v[flip])
        moved[k] = v
    return ReflectionResult(out, flip, int(on_axis.sum()), moved)


def tangent_project(draws, eps: float = TANGENT_EPS):
    """Map aligned angles to tan(theta - pi/2).

    Returns (values, valid); values are NaN where the angle is within ``eps``
    of a quarter turn away from pi/2, where the projection blows up.
    """
    offset = wrap_angle(np.asarray(draws, dtype=float) - HALF_PI)
    valid = np.abs(offset) < HALF_PI - eps
    values = np.where(valid, np.tan(np.where(valid, offset, 0.0)), np.nan)
    return values, valid


@dataclass
class AlignedSample:
    beta: np.ndarray
    tangent: np.ndarray
    valid: np.ndarray
    ref1: str
    ref2: str
    reflected: np.ndarray
    ties: int
    legislator_ids: tuple
    extra: dict = field(default_factory=dict)

    @property
    def valid_fraction(self) -> np.ndarray:
        return self.valid.mean(axis=0)


def default_references(beta_draws, legislator_ids, meta: LegislatorMeta) -> tuple[str, str]:
    """Reference legislators when none are configured.

    ref2 is the positive anchor, so positive tangent values point the same
    way as positive Euclidean ideal points.  ref1 is the most central
    non-anchor legislator: draws are provisionally aligned on the two anchors
    and ref1 is the one whose mean direction lies closest to the mean
    direction of all legislators.  Centring the tangent map there keeps as
    many legislators as possible away from its singularities.
    """
    ids = tuple(legislator_ids)
    neg, pos = meta.anchor("negative"), meta.anchor("positive")
    if neg is None or pos is None or neg not in ids or pos not in ids:
        raise DataError("alignment needs reference legislators; none configured and anchors missing")
    draws = np.asarray(beta_draws, dtype=float)
    provisional = align_reflection(
        align_rotation(draws, ids.index(neg)), ids.index(neg), ids.index(pos)).draws
    means = circular_mean(provisional)
    centre = circular_mean(means)
    dist = np.abs(wrap_angle(means - centre))
    dist[[ids.index(neg), ids.index(pos)]] = np.inf
    if not np.isfinite(dist).any():
        return neg, pos
    return ids[int(np.argmin(dist))], pos


def align(beta_draws, legislator_ids, ref1: str, ref2: str, extra: dict | None = None,
          eps: float = TANGENT_EPS) -> AlignedSample:
    """Rotation, reflection and tangent projection in one pass."""
    ids = tuple(legislator_ids)
    for ref in (ref1, ref2):
        if ref not in ids:
            raise DataError(f"reference legislator {ref!r} not among the fitted legislators")
    if ref1 == ref2:
        raise DataError("the two reference legislators must differ")
    i1, i2 = ids.index(ref1), ids.index(ref2)
    rotated = align_rotation(beta_draws, i1, extra)
    if extra is not None:
        rotated, moved = rotated
    else:
        moved = None
    res = align_reflection(rotated, i1, i2, moved)
    tangent, valid = tangent_project(res.draws, eps)
    return AlignedSample(res.draws, tangent, valid, ref1, ref2, res.reflected, res.ties, ids, res.extra)


def circular_mean(draws, axis: int = 0) -> np.ndarray:
    """Mean direction of angles along ``axis``."""
    return np.angle(np.exp(1j * np.asarray(draws, dtype=float)).mean(axis=axis))


def circular_correlation(a, b) -> float:
    """Jammalamadaka-Sarma circular correlation of two angle vectors.

    Invariant to rotating either vector; reflecting one of them flips the sign.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sa = np.sin(a - circular_mean(a))
    sb = np.sin(b - circular_mean(b))
    return float((sa * sb).sum() / math.sqrt((sa * sa).sum() * (sb * sb).sum()))


# -- summaries -------------------------------------------------------------------------------

@dataclass
class LegislatorSummary:
    id: str
    mean: float
    lo: float
    hi: float
    significant: bool
    n_draws: int
    tail: dict = field(default_factory=dict)


@dataclass
class GroupSummary:
    group: str
    size: int
    min: float
    max: float
    cv: float | None


@dataclass
class PosteriorSummary:
    legislators: list[LegislatorSummary]
    groups: list[GroupSummary]
    group_by: str

    def means(self) -> np.ndarray:
        return np.array([s.mean for s in self.legislators])

    def by_id(self) -> dict[str, LegislatorSummary]:
        return {s.id: s for s in self.legislators}

    def to_json(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else float(x)

        return {
            "group_by": self.group_by,
            "legislators": [
                {"id": s.id, "mean": num(s.mean), "lo": num(s.lo), "hi": num(s.hi),
                 "significant": bool(s.significant), "n_draws": s.n_draws,
                 "tail": {k: num(v) for k, v in s.tail.items()}}
                for s in self.legislators
            ],
            "groups": [
                {"group": g.group, "size": g.size, "min": num(g.min), "max": num(g.max), "cv": num(g.cv)}
                for g in self.groups
            ],
        }


def coefficient_of_variation(values) -> float | None:
    """Sample sd over |mean|, in percent; None for fewer than two values."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return None
    centre = abs(values.mean())
    if centre == 0:
        return math.inf
    return float(values.std(ddof=1) / centre * 100.0)


def summarize(draws, legislator_ids, meta: LegislatorMeta | None = None,
              thresholds=(), group_by: str = "party", level: float = 0.95) -> PosteriorSummary:
    """Posterior means, percentile intervals, tail probabilities and group spread.

    NaN entries (invalid tangent values) are ignored per legislator.

    Args:
        draws: (draws, legislators) matrix.
        thresholds: values t for which P(beta < t) and P(beta > t) are reported.
        group_by: ``"party"`` or ``"bloc"``; groups need ``meta``.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[1] != len(legislator_ids):
        raise ValueError("draws must be (draws, legislators) matching the id list")
    if draws.shape[0] < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} draws to summarize")
    tail_lo = 100 * (1 - level) / 2
    out = []
    for k, lid in enumerate(legislator_ids):
        col = draws[:, k]
        col = col[np.isfinite(col)]
        if col.size == 0:
            out.append(LegislatorSummary(lid, math.nan, math.nan, math.nan, False, 0))
            continue
        lo, hi = np.percentile(col, [tail_lo, 100 - tail_lo])
        # summation rounding can push the mean of a constant column off its value
        mean = float(np.clip(col.mean(), col.min(), col.max()))
        lo, hi = min(lo, mean), max(hi, mean)
        tail = {}
        for t in thresholds:
            tail[f"P(<{t:g})"] = float(np.mean(col < t))
            tail[f"P(>{t:g})"] = float(np.mean(col > t))
        out.append(LegislatorSummary(lid, mean, float(lo), float(hi), bool(lo > 0 or hi < 0), col.size, tail))
    groups = []
    if meta is not None:
        if group_by not in ("party", "bloc"):
            raise ValueError("group_by must be 'party' or 'bloc'")
        members: dict[str, list[float]] = {}
        for s in out:
            key = getattr(meta.get(s.id), group_by)
            if math.isfinite(s.mean):
                members.setdefault(key, []).append(s.mean)
        for key in sorted(members):
            vals = np.array(members[key])
            groups.append(GroupSummary(key, vals.size, float(vals.min()), float(vals.max()),
                                       coefficient_of_variation(vals)))
    return PosteriorSummary(out, groups, group_by)


def format_summary_csv(summary: PosteriorSummary, meta: LegislatorMeta | None = None) -> str:
    """Plot-ready table: one row per legislator."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for s in summary.legislators:
        leg = meta.get(s.id) if meta is not None else None
        writer.writerow([
            s.id, repr(s.mean), repr(s.lo), repr(s.hi),
            leg.party if leg else "", leg.bloc if leg else "",
            int(leg.scandal_flag) if leg else "",
        ])
    return buf.getvalue()


# -- cross-model comparison ----------------------------------------------------------------

@dataclass
class ModelComparison:
    correlation: float
    kept: list[str]
    excluded: list[str]


def compare_models(euclidean_means, tangent_means, legislator_ids, valid_fraction=None,
                   cutoff: float = TANGENT_CUTOFF,
                   min_valid: float = MIN_VALID_FRACTION) -> ModelComparison:
    """Pearson correlation of two sets of posterior means over a common legislator set.

    A legislator is dropped when fewer than ``min_valid`` of its tangent
    draws are valid, or when its tangent mean is non-finite or exceeds
    ``cutoff`` in absolute value.
    """
    e = np.asarray(euclidean_means, dtype=float)
    t = np.asarray(tangent_means, dtype=float)
    ids = list(legislator_ids)
    if not (e.shape == t.shape == (len(ids),)):
        raise ValueError("both mean vectors must align with the legislator ids")
    keep = np.isfinite(t) & np.isfinite(e) & (np.abs(t) <= cutoff)
    if valid_fraction is not None:
        keep &= np.asarray(valid_fraction, dtype=float) >= min_valid
    if keep.sum() < 3:
        raise ValueError("fewer than three legislators left after exclusions")
    r = float(np.corrcoef(e[keep], t[keep])[0, 1])
    return ModelComparison(
        r, [i for i, k in zip(ids, keep) if k], [i for i, k in zip(ids, keep) if not k]
    )
