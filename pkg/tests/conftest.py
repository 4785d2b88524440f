import numpy as np
import pytest

from spatialvote.data import Legislator, LegislatorMeta, VoteMatrix

_ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool | None, detail: str) -> None:
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    _ACCEPTANCE_LINES.append(f"[{status}] criterion {number:2d} {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
        terminalreporter.write_line(line)


@pytest.fixture
def tiny_votes():
    votes = np.array([[1, 1, 0, 1], [0, 1, 1, 0], [1, 1, 0, -1]], dtype=np.int8)
    return VoteMatrix(votes, ("A", "B", "C"), ("m1", "m2", "m3", "m4"))


@pytest.fixture
def tiny_meta():
    return LegislatorMeta((
        Legislator("A", "Ann", "red", "coalition", False, "positive"),
        Legislator("B", "Bo", "blue", "opposition", False, "negative"),
        Legislator("C", "Cy", "red", "independent", True),
    ))


# -- shared fits ------------------------------------------------------------------------------
# The expensive posterior runs are computed once per session and shared by the
# acceptance suite and the module tests that check statistical properties.

import time  # noqa: E402

from spatialvote import circular as circ  # noqa: E402
from spatialvote import euclidean as euc  # noqa: E402
from spatialvote import postprocess as post  # noqa: E402
from spatialvote.synth import BlocSpec, SynthConfig, generate, quadrature_posterior  # noqa: E402


class Timed:
    def __init__(self, result, seconds):
        self.result = result
        self.seconds = seconds


def _timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return Timed(out, time.perf_counter() - start)


def _tiny():
    votes = np.array([[1, 1, 0, 1], [0, 1, 1, 0], [1, 1, 0, -1]], dtype=np.int8)
    v = VoteMatrix(votes, ("A", "B", "C"), ("m1", "m2", "m3", "m4"))
    meta = LegislatorMeta((
        Legislator("A", "Ann", "red", "coalition", False, "positive"),
        Legislator("B", "Bo", "blue", "opposition", False, "negative"),
        Legislator("C", "Cy", "red", "independent", True),
    ))
    return v, meta


@pytest.fixture(scope="session")
def tiny_probit():
    """Quadrature oracle and a long probit run on the 3 x 4 instance."""
    v, meta = _tiny()
    oracle = quadrature_posterior(v, {"A": 1.0, "B": -1.0})
    cfg = euc.EuclideanConfig(link="probit", chains=4, iterations=50_000, warmup=1_000,
                              keep_every=1, seed=20)
    return v, meta, oracle, euc.fit_euclidean(v, meta, config=cfg)


@pytest.fixture(scope="session")
def euclidean_synthetic():
    cfg = SynthConfig(
        n=100, m=150, link="probit", missing_rate=0.1, seed=1,
        blocs=[BlocSpec(50, 1.0, 0.5, "coalition"), BlocSpec(50, -1.0, 0.5, "opposition")],
    )
    return generate(cfg)


@pytest.fixture(scope="session")
def probit_fit(euclidean_synthetic):
    v, _, meta = euclidean_synthetic
    cfg = euc.EuclideanConfig(link="probit", chains=4, iterations=8_000, warmup=2_000, keep_every=1,
                              seed=11)
    return _timed(euc.fit_euclidean, v, meta, config=cfg)


@pytest.fixture(scope="session")
def logit_fit(euclidean_synthetic):
    v, _, meta = euclidean_synthetic
    cfg = euc.EuclideanConfig(link="logit", chains=2, iterations=3_000, warmup=1_500, keep_every=1,
                              seed=12)
    return _timed(euc.fit_euclidean, v, meta, config=cfg)


def circular_synthetic_config(**overrides):
    raw = dict(
        n=80, m=120, geometry="circular", kappa_shape=1.0, kappa_rate=0.5, seed=3,
        blocs=[BlocSpec(40, 1.0, 0.6, "coalition"), BlocSpec(40, -1.0, 0.6, "opposition")],
    )
    raw.update(overrides)
    return SynthConfig(**raw)


@pytest.fixture(scope="session")
def circular_synthetic():
    return generate(circular_synthetic_config())


@pytest.fixture(scope="session")
def circular_fit(circular_synthetic):
    v, _, meta = circular_synthetic
    cfg = circ.CircularConfig(iterations=15_000, burnin=5_000, seed=13)
    return _timed(circ.fit_circular, v, meta, cfg)


@pytest.fixture(scope="session")
def near_euclidean():
    """Tightly clustered angles and concentrated links, fitted by both models."""
    cfg = circular_synthetic_config(
        kappa=10.0, bill_concentration=2.0, seed=7,
        blocs=[BlocSpec(40, 0.4, 0.4, "coalition"), BlocSpec(40, -0.4, 0.4, "opposition")],
    )
    v, truth, meta = generate(cfg)
    c = circ.fit_circular(v, meta, circ.CircularConfig(iterations=3_000, burnin=1_500, seed=14))
    e = euc.fit_euclidean(v, meta, config=euc.EuclideanConfig(
        link="probit", chains=2, iterations=3_000, warmup=1_000, keep_every=1, seed=15))
    ref1, ref2 = post.default_references(c.beta, v.legislator_ids, meta)
    aligned = post.align(c.beta, v.legislator_ids, ref1, ref2)
    return v, truth, meta, c, e, aligned


@pytest.fixture(scope="session")
def missingness_fits():
    """Imputation and mask-only circular fits at 20% missing votes."""
    v, truth, meta = generate(circular_synthetic_config(missing_rate=0.2, seed=5))
    fits = {}
    for impute in (True, False):
        cfg = circ.CircularConfig(iterations=4_000, burnin=2_000, impute=impute, seed=16)
        fits[impute] = circ.fit_circular(v, meta, cfg)
    return v, truth, meta, fits
