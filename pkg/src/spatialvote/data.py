"""Roll-call matrices, legislator metadata and descriptive participation statistics.

Votes are stored as an ``int8`` matrix with ``1`` (yea), ``0`` (nay) and
``-1`` (missing).  On disk they are CSV files whose first column holds the
legislator id and whose header row names the motions; cells are ``1``, ``0``
or ``NA``.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

YEA = 1
NAY = 0
MISSING = -1

BLOCS = ("coalition", "opposition", "independent", "minority")
ANCHOR_ROLES = ("positive", "negative")

_CELL_CODES = {"1": YEA, "0": NAY, "NA": MISSING}
_CELL_TEXT = {YEA: "1", NAY: "0", MISSING: "NA"}


class DataError(ValueError):
    """Raised when roll-call or metadata input fails validation."""


class ParseError(DataError):
    """A cell could not be parsed; ``row`` and ``col`` are 1-based file positions."""

    def __init__(self, message: str, row: int, col: int):
        super().__init__(f"{message} (row {row}, column {col})")
        self.row = row
        self.col = col


@dataclass(frozen=True)
class VoteMatrix:
    votes: np.ndarray
    legislator_ids: tuple[str, ...]
    motion_ids: tuple[str, ...]

    def __post_init__(self):
        votes = np.asarray(self.votes, dtype=np.int8)
        if votes.ndim != 2:
            raise DataError("vote matrix must be two-dimensional")
        if votes.shape != (len(self.legislator_ids), len(self.motion_ids)):
            raise DataError(
                f"vote matrix shape {votes.shape} does not match "
                f"{len(self.legislator_ids)} legislators x {len(self.motion_ids)} motions"
            )
        bad = ~np.isin(votes, (YEA, NAY, MISSING))
        if bad.any():
            i, j = np.argwhere(bad)[0]
            raise DataError(f"invalid cell value {votes[i, j]} at ({i}, {j})")
        _check_unique(self.legislator_ids, "legislator")
        _check_unique(self.motion_ids, "motion")
        votes.setflags(write=False)
        object.__setattr__(self, "votes", votes)
        object.__setattr__(self, "legislator_ids", tuple(self.legislator_ids))
        object.__setattr__(self, "motion_ids", tuple(self.motion_ids))

    def __eq__(self, other):
        if not isinstance(other, VoteMatrix):
            return NotImplemented
        return (self.legislator_ids == other.legislator_ids and self.motion_ids == other.motion_ids
                and np.array_equal(self.votes, other.votes))

    __hash__ = None

    @property
    def n_legislators(self) -> int:
        return self.votes.shape[0]

    @property
    def n_motions(self) -> int:
        return self.votes.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """Boolean mask of non-missing cells."""
        return self.votes != MISSING

    def index_of(self, legislator_id: str) -> int:
        try:
            return self.legislator_ids.index(legislator_id)
        except ValueError:
            raise DataError(f"unknown legislator id {legislator_id!r}") from None

    def select_rows(self, rows: Sequence[int]) -> "VoteMatrix":
        rows = list(rows)
        return VoteMatrix(
            self.votes[rows], tuple(self.legislator_ids[i] for i in rows), self.motion_ids
        )


@dataclass(frozen=True)
class MaskedVotes:
    """A vote matrix together with the mask of cells the likelihood may use."""

    matrix: VoteMatrix
    mask: np.ndarray

    @property
    def votes(self) -> np.ndarray:
        return self.matrix.votes


@dataclass(frozen=True)
class Legislator:
    id: str
    name: str
    party: str
    bloc: str
    scandal_flag: bool
    anchor: str | None = None


@dataclass(frozen=True)
class LegislatorMeta:
    legislators: tuple[Legislator, ...]

    def __post_init__(self):
        legislators = tuple(self.legislators)
        _check_unique([leg.id for leg in legislators], "legislator")
        for leg in legislators:
            if leg.bloc not in BLOCS:
                raise DataError(f"legislator {leg.id!r}: unknown bloc {leg.bloc!r}")
            if leg.anchor is not None and leg.anchor not in ANCHOR_ROLES:
                raise DataError(f"legislator {leg.id!r}: unknown anchor role {leg.anchor!r}")
        for role in ANCHOR_ROLES:
            holders = [leg.id for leg in legislators if leg.anchor == role]
            if len(holders) > 1:
                raise DataError(f"anchor={role} assigned to more than one legislator: {holders}")
        object.__setattr__(self, "legislators", legislators)

    def __len__(self):
        return len(self.legislators)

    def __iter__(self):
        return iter(self.legislators)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(leg.id for leg in self.legislators)

    def get(self, legislator_id: str) -> Legislator:
        for leg in self.legislators:
            if leg.id == legislator_id:
                return leg
        raise DataError(f"legislator {legislator_id!r} not in metadata")

    def anchor(self, role: str) -> str | None:
        for leg in self.legislators:
            if leg.anchor == role:
                return leg.id
        return None

    def aligned_to(self, ids: Sequence[str]) -> list[Legislator]:
        """Return metadata records in the order of ``ids``; every id must be present."""
        lookup = {leg.id: leg for leg in self.legislators}
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise DataError(f"metadata missing for legislators: {missing}")
        return [lookup[i] for i in ids]


@dataclass(frozen=True)
class ParticipationSummary:
    legislator_ids: tuple[str, ...]
    participation_rate: np.ndarray
    attendance_rate: np.ndarray | None = None
    abstention_rate: np.ndarray | None = None
    party_rates: dict = field(default_factory=dict)


def _check_unique(ids: Iterable[str], kind: str) -> None:
    seen = set()
    for token in ids:
        if token in seen:
            raise DataError(f"duplicate {kind} id {token!r}")
        seen.add(token)


def _read_rows(path) -> list[list[str]]:
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row]


def parse_votes(rows: list[list[str]], na_values: Sequence[str] = ("NA",)) -> VoteMatrix:
    if not rows:
        raise DataError("empty votes file")
    header = rows[0]
    motion_ids = tuple(h.strip() for h in header[1:])
    codes = dict(_CELL_CODES)
    for token in na_values:
        codes[token] = MISSING
    ids = []
    votes = np.empty((len(rows) - 1, len(motion_ids)), dtype=np.int8)
    for r, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(row)}", row=r + 2, col=len(row)
            )
        ids.append(row[0].strip())
        for c, cell in enumerate(row[1:]):
            code = codes.get(cell.strip())
            if code is None:
                raise ParseError(f"malformed vote cell {cell!r}", row=r + 2, col=c + 2)
            votes[r, c] = code
    return VoteMatrix(votes, tuple(ids), motion_ids)


def load_votes(path, na_values: Sequence[str] = ("NA",)) -> VoteMatrix:
    """Read a votes CSV, preserving file order of legislators and motions.

    Raises:
        ParseError: a cell is not one of ``1``, ``0`` or a missing token.
        DataError: duplicate ids or a ragged file.
    """
    return parse_votes(_read_rows(path), na_values=na_values)


def format_votes(v: VoteMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", *v.motion_ids])
    for leg, row in zip(v.legislator_ids, v.votes):
        writer.writerow([leg, *(_CELL_TEXT[int(x)] for x in row)])
    return buf.getvalue()


def write_votes(v: VoteMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_votes(v))


def _parse_flag(text: str, leg_id: str) -> bool:
    token = text.strip().lower()
    if token in ("1", "true", "yes"):
        return True
    if token in ("0", "false", "no"):
        return False
    raise DataError(f"legislator {leg_id!r}: scandal_flag {text!r} is not boolean")


META_COLUMNS = ("id", "name", "party", "bloc", "scandal_flag", "anchor")


def load_meta(path) -> LegislatorMeta:
    rows = _read_rows(path)
    if not rows or tuple(h.strip() for h in rows[0][: len(META_COLUMNS)]) != META_COLUMNS:
        raise DataError(f"metadata header must start with {','.join(META_COLUMNS)}")
    legislators = []
    for r, row in enumerate(rows[1:]):
        if len(row) < 5:
            raise ParseError("metadata row too short", row=r + 2, col=len(row))
        leg_id = row[0].strip()
        anchor = row[5].strip() if len(row) > 5 and row[5].strip() else None
        legislators.append(
            Legislator(
                id=leg_id,
                name=row[1].strip(),
                party=row[2].strip(),
                bloc=row[3].strip().lower(),
                scandal_flag=_parse_flag(row[4], leg_id),
                anchor=anchor,
            )
        )
    return LegislatorMeta(tuple(legislators))


def format_meta(meta: LegislatorMeta) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(META_COLUMNS)
    for leg in meta:
        writer.writerow(
            [leg.id, leg.name, leg.party, leg.bloc, int(leg.scandal_flag), leg.anchor or ""]
        )
    return buf.getvalue()


def write_meta(meta: LegislatorMeta, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_meta(meta))


def load_attendance(path, votes: VoteMatrix) -> np.ndarray:
    """Read an attendance CSV (cells ``P`` present / ``A`` absent) shaped like ``votes``.

    Returns a boolean matrix, ``True`` where the legislator was present.
    """
    rows = _read_rows(path)
    header = tuple(h.strip() for h in rows[0][1:])
    if header != votes.motion_ids:
        raise DataError("attendance motions do not match the vote matrix")
    ids = tuple(row[0].strip() for row in rows[1:])
    if ids != votes.legislator_ids:
        raise DataError("attendance legislators do not match the vote matrix")
    present = np.zeros(votes.votes.shape, dtype=bool)
    for r, row in enumerate(rows[1:]):
        for c, cell in enumerate(row[1:]):
            token = cell.strip().upper()
            if token not in ("P", "A"):
                raise ParseError(f"malformed attendance cell {cell!r}", row=r + 2, col=c + 2)
            present[r, c] = token == "P"
    cast = votes.observed & ~present
    if cast.any():
        i, j = np.argwhere(cast)[0]
        raise DataError(
            f"legislator {votes.legislator_ids[i]!r} recorded a vote on "
            f"{votes.motion_ids[j]!r} while marked absent"
        )
    return present


def apply_abstention_coding(v: VoteMatrix, present: np.ndarray, coding: str = "missing") -> VoteMatrix:
    """Recode present-but-not-voting cells as missing (default) or as nay."""
    if coding == "missing":
        return v
    if coding != "nay":
        raise DataError(f"abstention coding must be 'missing' or 'nay', got {coding!r}")
    votes = v.votes.copy()
    votes[(votes == MISSING) & present] = NAY
    return VoteMatrix(votes, v.legislator_ids, v.motion_ids)


def exclude_no_record(v: VoteMatrix) -> tuple[VoteMatrix, list[str]]:
    """Drop legislators whose rows are entirely missing; return the kept matrix and dropped ids."""
    has_record = v.observed.any(axis=1)
    excluded = [leg for leg, keep in zip(v.legislator_ids, has_record) if not keep]
    return v.select_rows(np.flatnonzero(has_record)), excluded


def complete_case_filter(v: VoteMatrix) -> MaskedVotes:
    """Mask out missing cells; rows are never dropped."""
    return MaskedVotes(v, v.observed.copy())


def participation_summary(
    v: VoteMatrix, meta: LegislatorMeta, present: np.ndarray | None = None
) -> ParticipationSummary:
    if v.n_motions == 0:
        raise DataError("participation undefined for an empty motion set")
    records = meta.aligned_to(v.legislator_ids)
    voted = v.observed.sum(axis=1)
    participation = voted / v.n_motions
    attendance = abstention = None
    if present is not None:
        attended = present.sum(axis=1)
        attendance = attended / v.n_motions
        abstained = (present & ~v.observed).sum(axis=1)
        abstention = np.divide(
            abstained, attended, out=np.zeros(len(attended)), where=attended > 0
        )
    party_rates = {}
    parties = np.array([leg.party for leg in records])
    for party in sorted(set(parties)):
        sel = parties == party
        entry = {"n": int(sel.sum()), "participation_rate": float(participation[sel].mean())}
        if attendance is not None:
            entry["attendance_rate"] = float(attendance[sel].mean())
            entry["abstention_rate"] = float(abstention[sel].mean())
        party_rates[party] = entry
    return ParticipationSummary(
        v.legislator_ids, participation, attendance, abstention, party_rates
    )
