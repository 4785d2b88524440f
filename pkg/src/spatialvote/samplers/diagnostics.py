"""Rank-normalized split R-hat and effective sample size (Vehtari et al., 2021)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

MIN_DRAWS = 100


class DiagnosticsUnavailable(ValueError):
    """Too few draws to compute convergence diagnostics."""


@dataclass
class ChainDiagnostics:
    ess: dict[str, np.ndarray]
    split_rhat: dict[str, np.ndarray]
    acceptance_rate: float | None = None
    undefined: list[str] = field(default_factory=list)

    def max_rhat(self) -> float:
        vals = [np.nanmax(v) for v in self.split_rhat.values() if np.isfinite(v).any()]
        return float(max(vals)) if vals else float("nan")

    def fraction_above(self, threshold: float = 1.1) -> float:
        flat = np.concatenate([np.ravel(v) for v in self.split_rhat.values()])
        finite = flat[np.isfinite(flat)]
        return float(np.mean(finite > threshold)) if finite.size else 0.0

    def to_json(self) -> dict:
        def clean(a):
            return [None if not np.isfinite(x) else float(x) for x in np.ravel(a)]

        return {
            "acceptance_rate": self.acceptance_rate,
            "max_rhat": _none_if_nan(self.max_rhat()),
            "fraction_rhat_above_1.1": self.fraction_above(),
            "split_rhat": {k: clean(v) for k, v in self.split_rhat.items()},
            "ess": {k: clean(v) for k, v in self.ess.items()},
            "undefined": list(self.undefined),
        }


def _none_if_nan(x):
    return None if not np.isfinite(x) else x


def _split(chains: np.ndarray) -> np.ndarray:
    # (chains, draws, ...) -> (2 * chains, draws // 2, ...)
    half = chains.shape[1] // 2
    first = chains[:, :half]
    second = chains[:, chains.shape[1] - half:]
    return np.concatenate([first, second], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    ranks = rankdata(x.reshape(-1), method="average").reshape(x.shape)
    return ndtri((ranks - 0.375) / (x.size + 0.25))


def _rhat_core(x: np.ndarray) -> float:
    m, n = x.shape
    chain_var = x.var(axis=1, ddof=1)
    w = chain_var.mean()
    b = n * x.mean(axis=1).var(ddof=1)
    if w <= 0:
        return float("nan")
    var_plus = (n - 1) / n * w + b / n
    # sampling noise can push the ratio just under 1; no chain disagreement reads as 1
    return float(max(1.0, np.sqrt(var_plus / w)))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    size = 1 << int(np.ceil(np.log2(2 * n)))
    centered = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(centered, n=size, axis=-1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=-1)[..., :n]
    return acov / n


def _ess_core(x: np.ndarray) -> float:
    m, n = x.shape
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    var_plus = w * (n - 1.0) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float("nan")
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # Geyer's initial positive and monotone sequence
    total = 0.0
    prev_pair = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev_pair)
        total += pair
        prev_pair = pair
        t += 2
    tau = -1.0 + 2.0 * total
    tau = max(tau, 1.0 / np.log10(m * n))
    return float(m * n / tau)


def split_rhat(chains) -> float:
    """Rank-normalized split R-hat of a (chains, draws) array; max of bulk and tail.

    Returns NaN when the draws are constant.
    """
    x = np.asarray(chains, dtype=float)
    _check_shape(x)
    if np.ptp(x) == 0:
        return float("nan")
    s = _split(x)
    bulk = _rhat_core(_rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat_core(_rank_normalize(folded)) if np.ptp(folded) > 0 else bulk
    return float(max(bulk, tail))


def effective_sample_size(chains) -> float:
    """Bulk ESS of a (chains, draws) array; NaN for constant draws."""
    x = np.asarray(chains, dtype=float)
    _check_shape(x)
    if np.ptp(x) == 0:
        return float("nan")
    return _ess_core(_rank_normalize(_split(x)))


def _check_shape(x: np.ndarray) -> None:
    if x.ndim != 2:
        raise ValueError("expected a (chains, draws) array")
    if x.shape[0] < 2 and x.shape[1] < 2 * MIN_DRAWS:
        raise DiagnosticsUnavailable(
            f"a single chain needs at least {2 * MIN_DRAWS} draws to split"
        )
    if x.shape[1] < MIN_DRAWS:
        raise DiagnosticsUnavailable(f"need at least {MIN_DRAWS} draws per chain")


def diagnostics(
    draws: dict[str, np.ndarray],
    circular: frozenset | set = frozenset(),
    acceptance_rate: float | None = None,
) -> ChainDiagnostics:
    """Diagnose every parameter block.

    Args:
        draws: name -> array of shape (chains, draws) or (chains, draws, k).
        circular: names of blocks holding angles; these are diagnosed on
            their cosine and sine, reporting the worse of the two.
        acceptance_rate: echoed into the result.
    """
    ess, rhat, undefined = {}, {}, []
    for name, arr in draws.items():
        arr = np.asarray(arr, dtype=float)
        flat = arr.reshape(arr.shape[0], arr.shape[1], -1)
        k = flat.shape[2]
        r = np.empty(k)
        e = np.empty(k)
        for i in range(k):
            x = flat[:, :, i]
            if name in circular:
                rc, rs = split_rhat(np.cos(x)), split_rhat(np.sin(x))
                ec, es = effective_sample_size(np.cos(x)), effective_sample_size(np.sin(x))
                r[i] = np.nanmax([rc, rs]) if np.isfinite([rc, rs]).any() else np.nan
                e[i] = np.nanmin([ec, es]) if np.isfinite([ec, es]).any() else np.nan
            else:
                r[i] = split_rhat(x)
                e[i] = effective_sample_size(x)
            if not np.isfinite(e[i]):
                undefined.append(f"{name}[{i}]" if k > 1 else name)
        shape = arr.shape[2:]
        rhat[name] = r.reshape(shape) if shape else r[0]
        ess[name] = e.reshape(shape) if shape else e[0]
    return ChainDiagnostics(ess, rhat, acceptance_rate, undefined)


def thin(draws, keep_every: int, axis: int = 0):
    """Keep every ``keep_every``-th draw starting with the first."""
    if int(keep_every) != keep_every or keep_every < 1:
        raise ValueError("keep_every must be a positive integer")
    draws = np.asarray(draws)
    index = [slice(None)] * draws.ndim
    index[axis] = slice(None, None, int(keep_every))
    return draws[tuple(index)]
