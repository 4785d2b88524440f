"""Command-line front end.

Subcommands::

    simulate     synthetic votes, metadata and true parameters
    fit          sample the euclidean or circular model
    postprocess  align circular draws, project them, summarize either model
    regress      per-draw logistic regression of the scandal flag
    compare      correlate euclidean and circular (tangent) posterior means
    diagnose     convergence diagnostics from draw files

Each command takes an optional JSON config (``--config``); explicit flags
override it.  Exit codes: 0 success, 1 usage or configuration error, 2 data
validation error, 3 convergence gate failed under ``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import circular as circ
from . import euclidean as euc
from . import postprocess as post
from .analysis import RegressionError, ensemble_regression
from .data import (
    DataError,
    apply_abstention_coding,
    exclude_no_record,
    format_meta,
    format_votes,
    load_attendance,
    load_meta,
    load_votes,
)
from .parallel import default_workers
from .samplers import DiagnosticsUnavailable, diagnostics
from .storage import (
    OutputSet,
    format_draws,
    now_utc,
    read_draws,
    read_manifest,
    sha256_file,
    versions,
)
from .synth import SynthConfig, SynthConfigError, generate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3
RHAT_GATE = 1.1

logger = logging.getLogger("spatialvote")


class UsageError(Exception):
    """Bad flags or configuration."""


class ConvergenceError(Exception):
    """The R-hat gate failed."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- configuration -------------------------------------------------------------------------

def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return raw


def _merge(dataclass_type, file_cfg: dict, overrides: dict, section: str):
    """Defaults < config file < flags; unknown keys are errors."""
    known = {f.name for f in fields(dataclass_type)}
    unknown = sorted(set(file_cfg) - known)
    if unknown:
        raise UsageError(f"{section}: unknown config field {unknown[0]!r}")
    merged = dict(file_cfg)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return dataclass_type(**merged)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{section}: {exc}") from None


def _input_digests(*paths) -> dict:
    return {str(p): sha256_file(p) for p in paths if p is not None}


def _manifest(command: str, config: dict, inputs: dict, started: str, **extra) -> dict:
    out = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "versions": versions(),
        "inputs": inputs,
        "timestamps": {"started": started, "finished": now_utc()},
    }
    out.update(extra)
    return out


def _check_out_dir(path) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"output path {out} exists and is not a directory")
    return out


# -- simulate ----------------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    started = now_utc()
    raw = _load_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = SynthConfig.from_dict(raw)
    except SynthConfigError as exc:
        raise UsageError(f"invalid simulation config: {exc}") from None
    except TypeError as exc:
        raise UsageError(f"invalid simulation config: {exc}") from None
    out = _check_out_dir(args.out)
    v, truth, meta = generate(cfg)
    files = OutputSet(out)
    files.add_text("votes.csv", format_votes(v))
    files.add_text("meta.csv", format_meta(meta))
    files.add_text("truth.csv", truth.to_csv(v.legislator_ids, v.motion_ids))
    config = asdict(cfg)
    files.commit(_manifest("simulate", config, _input_digests(args.config), started))
    return EXIT_OK


# -- fit -------------------------------------------------------------------------------------------

def _load_inputs(args):
    v = load_votes(args.votes)
    meta = load_meta(args.meta)
    if args.attendance is not None:
        present = load_attendance(args.attendance, v)
        v = apply_abstention_coding(v, present, args.abstention)
    v, excluded = exclude_no_record(v)
    if v.n_legislators == 0:
        raise DataError("no legislator has any recorded vote")
    meta.aligned_to(v.legislator_ids)
    return v, meta, excluded


def _euclidean_outputs(files: OutputSet, draws: euc.EuclideanDraws):
    d = draws.beta.shape[2]

    def names(ids):
        if d == 1:
            return list(ids)
        return [f"{i}[{k + 1}]" for i in ids for k in range(d)]

    s = draws.chain.size
    files.add_text("beta.csv", format_draws(draws.chain, draws.beta.reshape(s, -1), names(draws.legislator_ids)))
    files.add_text("mu.csv", format_draws(draws.chain, draws.mu, list(draws.motion_ids)))
    files.add_text("alpha.csv", format_draws(draws.chain, draws.alpha.reshape(s, -1), names(draws.motion_ids)))


def _circular_outputs(files: OutputSet, draws: circ.CircularDraws, v):
    files.add_text("beta.csv", format_draws(draws.chain, draws.beta, list(draws.legislator_ids)))
    files.add_text("psi.csv", format_draws(draws.chain, draws.psi, list(draws.motion_ids)))
    files.add_text("zeta.csv", format_draws(draws.chain, draws.zeta, list(draws.motion_ids)))
    files.add_text("kappa.csv", format_draws(draws.chain, draws.kappa, list(draws.motion_ids)))
    files.add_text("hyper.csv", format_draws(
        draws.chain, np.column_stack([draws.omega_beta, draws.beta_kappa]), ["omega_beta", "beta_kappa"]))
    if draws.imputed is not None and draws.missing_cells.size:
        cells = [f"{v.legislator_ids[i]}:{v.motion_ids[j]}" for i, j in draws.missing_cells]
        files.add_text("imputed.csv", format_draws(draws.chain, draws.imputed, cells))


def _aligned_beta_diagnostics(beta, chain, ids, meta, refs):
    ref1, ref2 = refs if refs[0] and refs[1] else post.default_references(beta, ids, meta)
    aligned = post.align(beta, ids, ref1, ref2)
    n_chains = int(chain.max()) + 1
    per_chain = aligned.beta.reshape(n_chains, -1, aligned.beta.shape[1])
    return diagnostics({"beta_aligned": per_chain}, circular={"beta_aligned"}), (ref1, ref2)


def _gate(diag_sets, threshold: float) -> dict:
    worst = max((d.max_rhat() for d in diag_sets if d is not None and math.isfinite(d.max_rhat())),
                default=float("nan"))
    return {"max_rhat": worst if math.isfinite(worst) else None, "threshold": threshold,
            "passed": not worst > threshold}


def cmd_fit(args) -> int:
    started = now_utc()
    file_cfg = _load_config(args.config)
    workers = args.workers if args.workers is not None else default_workers()
    if args.model == "euclidean":
        overrides = dict(link=args.link, chains=args.chains, iterations=args.iterations,
                         warmup=args.warmup, keep_every=args.keep_every, seed=args.seed,
                         n_leapfrog=args.n_leapfrog, step_size_init=args.step_size, workers=workers)
        cfg = _merge(euc.EuclideanConfig, file_cfg, overrides, "euclidean config")
        try:
            cfg.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        impute = None if args.impute is None else args.impute == "yes"
        overrides = dict(chains=args.chains, iterations=args.iterations, burnin=args.burnin,
                         keep_every=args.keep_every, seed=args.seed, n_leapfrog=args.n_leapfrog,
                         step_size_init=args.step_size, impute=impute,
                         gamma_convention=args.gamma_convention, workers=workers)
        cfg = _merge(circ.CircularConfig, file_cfg, overrides, "circular config")
        try:
            cfg.validate()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    out = _check_out_dir(args.out)
    v, meta, excluded = _load_inputs(args)

    files = OutputSet(out)
    warnings = {"excluded_no_record": excluded}
    diag_sets = []
    if args.model == "euclidean":
        try:
            euc.resolve_anchors(v, meta, cfg.d)
        except euc.ConfigurationError as exc:
            raise UsageError(str(exc)) from None
        draws = euc.fit_euclidean(v, meta, config=cfg)
        _euclidean_outputs(files, draws)
        diag_sets.append(draws.diagnostics)
        diag_json = draws.diagnostics.to_json() if draws.diagnostics else None
        extra = {"anchors": draws.anchors, "step_size": draws.step_size}
        n_chains = cfg.chains
    else:
        draws = circ.fit_circular(v, meta, cfg)
        _circular_outputs(files, draws, v)
        diag_json = {"raw": draws.diagnostics.to_json() if draws.diagnostics else None}
        if draws.diagnostics is not None:
            invariant = {k: draws.diagnostics.split_rhat[k] for k in ("kappa", "omega_beta", "beta_kappa")}
            diag_sets.append(type(draws.diagnostics)({}, invariant))
        try:
            aligned, refs = _aligned_beta_diagnostics(draws.beta, draws.chain, v.legislator_ids, meta,
                                                       (args.ref1, args.ref2))
            diag_sets.append(aligned)
            diag_json["aligned_beta"] = aligned.to_json()
            diag_json["references"] = list(refs)
        except (DataError, DiagnosticsUnavailable) as exc:
            warnings["aligned_diagnostics"] = str(exc)
        extra = {"step_size": draws.step_size, "missing_cells": int(draws.missing_cells.shape[0])}
        n_chains = cfg.chains
    gate = _gate(diag_sets, args.rhat_threshold)
    if draws.warning:
        warnings["rhat"] = "more than 5% of parameters have split R-hat above 1.1"
    config = asdict(cfg) if not isinstance(cfg, dict) else cfg
    manifest = _manifest(
        f"fit {args.model}", config, _input_digests(args.votes, args.meta, args.attendance, args.config),
        started, model=args.model,
        schedule={"chains": n_chains, "draws_per_chain": cfg.draws_per_chain,
                  "total_draws": int(draws.chain.size)},
        acceptance_rate=draws.acceptance_rate, diagnostics=diag_json, convergence_gate=gate,
        warnings=warnings, legislators=list(v.legislator_ids), **extra,
    )
    files.commit(manifest)
    if args.strict and not gate["passed"]:
        raise ConvergenceError(f"max split R-hat {gate['max_rhat']:.3f} exceeds {args.rhat_threshold}")
    return EXIT_OK


# -- postprocess ---------------------------------------------------------------------------------

def _summary_outputs(files, name, matrix, ids, meta, args):
    summary = post.summarize(matrix, ids, meta, thresholds=args.threshold or (), group_by=args.group_by)
    files.add_text(f"{name}_summary.csv", post.format_summary_csv(summary, meta))
    files.add_json(f"{name}_summary.json", summary.to_json())
    return summary


def cmd_postprocess(args) -> int:
    started = now_utc()
    cfg = _load_config(args.config)
    for key in ("ref1", "ref2", "eps", "group_by"):
        if getattr(args, key) is None and key in cfg:
            setattr(args, key, cfg[key])
    args.eps = post.TANGENT_EPS if args.eps is None else float(args.eps)
    args.group_by = args.group_by or "party"
    out = _check_out_dir(args.out)
    draws_dir = Path(args.draws)
    source = read_manifest(draws_dir)
    model = source.get("model")
    if model not in ("euclidean", "circular"):
        raise DataError(f"{draws_dir}: manifest does not name a fitted model")
    meta = load_meta(args.meta)
    chain, beta, ids = read_draws(draws_dir / "beta.csv")
    meta.aligned_to(ids)
    files = OutputSet(out)
    extra = {"model": model}
    if model == "euclidean":
        _summary_outputs(files, "euclidean", beta, ids, meta, args)
    else:
        if (args.ref1 is None) != (args.ref2 is None):
            raise UsageError("give both --ref1 and --ref2, or neither")
        if args.ref1 is None:
            ref1, ref2 = post.default_references(beta, ids, meta)
        else:
            ref1, ref2 = args.ref1, args.ref2
        aligned = post.align(beta, ids, ref1, ref2, eps=args.eps)
        files.add_text("aligned_beta.csv", format_draws(chain, aligned.beta, ids))
        files.add_text("tangent.csv", format_draws(chain, aligned.tangent, ids))
        frac = aligned.valid_fraction
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "valid_fraction"])
        for i, f in zip(ids, frac):
            writer.writerow([i, repr(float(f))])
        files.add_text("validity.csv", buf.getvalue())
        _summary_outputs(files, "circular", aligned.tangent, ids, meta, args)
        extra.update(
            references={"ref1": ref1, "ref2": ref2},
            reflected_draws=int(aligned.reflected.sum()),
            reflection_ties=aligned.ties,
            tangent_invalid={i: float(1 - f) for i, f in zip(ids, frac) if f < 1},
            draws_with_invalid_tangent=int((~aligned.valid.all(axis=1)).sum()),
        )
    config = {"ref1": args.ref1, "ref2": args.ref2, "eps": args.eps, "group_by": args.group_by,
              "thresholds": list(args.threshold or ())}
    inputs = _input_digests(draws_dir / "beta.csv", args.meta, args.config)
    files.commit(_manifest("postprocess", config, inputs, started, **extra))
    return EXIT_OK


# -- regress -------------------------------------------------------------------------------------

def cmd_regress(args) -> int:
    started = now_utc()
    out = _check_out_dir(args.out)
    meta = load_meta(args.meta)
    inputs = []
    for spec in args.input:
        label, sep, path = spec.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"--input expects LABEL=PATH, got {spec!r}")
        inputs.append((label, Path(path)))
    if len({label for label, _ in inputs}) != len(inputs):
        raise UsageError("--input labels must be distinct")
    loaded = []
    for label, path in inputs:
        _, matrix, ids = read_draws(path)
        meta.aligned_to(ids)
        loaded.append((label, matrix, ids))
    files = OutputSet(out)
    report = {}
    for label, matrix, ids in loaded:
        try:
            ens = ensemble_regression(matrix, ids, meta, exclude=args.exclude)
        except RegressionError as exc:
            raise DataError(f"{label}: {exc}") from None
        files.add_text(f"{label}_ensemble.csv", ens.to_csv())
        report[label] = ens.summary()
    files.add_json("regression.json", report)
    warnings = {label: {"separated_draws": r["separated_draws"], "excluded_draws": r["excluded_draws"],
                        "excluded_legislators": r["excluded_legislators"]} for label, r in report.items()}
    files.commit(_manifest("regress", {"inputs": [f"{lab}={p}" for lab, p in inputs],
                                       "exclude": list(args.exclude or ())},
                           _input_digests(args.meta, *[p for _, p in inputs]), started,
                           warnings=warnings))
    return EXIT_OK


# -- compare ---------------------------------------------------------------------------------------

def _read_summary_means(path) -> dict[str, float]:
    try:
        rows = list(csv.DictReader(io.StringIO(Path(path).read_text(encoding="utf-8"))))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if not rows or "id" not in rows[0] or "mean" not in rows[0]:
        raise DataError(f"{path}: expected a summary CSV with id and mean columns")
    return {r["id"]: float(r["mean"]) for r in rows}


def cmd_compare(args) -> int:
    started = now_utc()
    out = _check_out_dir(args.out)
    e = _read_summary_means(args.euclidean)
    t = _read_summary_means(args.circular)
    validity = None
    if args.validity is not None:
        try:
            text = Path(args.validity).read_text(encoding="utf-8")
            validity = {r["id"]: float(r["valid_fraction"]) for r in csv.DictReader(io.StringIO(text))}
        except (OSError, KeyError, ValueError) as exc:
            raise DataError(f"cannot read validity file {args.validity}: {exc}") from None
    ids = [i for i in e if i in t]
    if len(ids) < 3:
        raise DataError("the two summaries share fewer than three legislators")
    frac = None if validity is None else [validity.get(i, 0.0) for i in ids]
    try:
        res = post.compare_models([e[i] for i in ids], [t[i] for i in ids], ids, frac,
                                  cutoff=args.cutoff, min_valid=args.min_valid)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    files = OutputSet(out)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "euclidean", "tangent", "kept"])
    kept = set(res.kept)
    for i in ids:
        writer.writerow([i, repr(e[i]), repr(t[i]), int(i in kept)])
    files.add_text("paired.csv", buf.getvalue())
    report = {"correlation": res.correlation, "n_kept": len(res.kept), "excluded": res.excluded,
              "not_in_both": sorted(set(e) ^ set(t))}
    files.add_json("comparison.json", report)
    files.commit(_manifest("compare", {"cutoff": args.cutoff, "min_valid": args.min_valid},
                           _input_digests(args.euclidean, args.circular, args.validity), started,
                           correlation=res.correlation, excluded=res.excluded))
    print(f"correlation {res.correlation:.4f} over {len(res.kept)} legislators; excluded: "
          f"{', '.join(res.excluded) or 'none'}")
    return EXIT_OK


# -- diagnose ----------------------------------------------------------------------------------------

ANGLE_BLOCKS = {"beta", "psi", "zeta", "aligned_beta"}


def cmd_diagnose(args) -> int:
    draws_dir = Path(args.draws)
    source = read_manifest(draws_dir)
    model = source.get("model")
    blocks = {}
    circular = set()
    for path in sorted(draws_dir.glob("*.csv")):
        name = path.stem
        if name in ("imputed", "tangent", "validity") or name.endswith("_summary"):
            continue
        chain, values, _ = read_draws(path)
        n_chains = int(chain.max()) + 1
        if values.shape[0] % n_chains:
            raise DataError(f"{path}: chains have unequal lengths")
        blocks[name] = values.reshape(n_chains, -1, values.shape[1])
        if model == "circular" and name in ANGLE_BLOCKS:
            circular.add(name)
    if not blocks:
        raise DataError(f"no draw files in {draws_dir}")
    try:
        diag = diagnostics(blocks, circular=circular)
    except DiagnosticsUnavailable as exc:
        raise DataError(str(exc)) from None
    report = diag.to_json()
    report["gate"] = {"threshold": args.rhat_threshold, "passed": not diag.max_rhat() > args.rhat_threshold}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(f"max split R-hat {diag.max_rhat():.4f}; "
          f"{100 * diag.fraction_above(args.rhat_threshold):.1f}% of parameters above {args.rhat_threshold}")
    if args.strict and not report["gate"]["passed"]:
        raise ConvergenceError("R-hat gate failed")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatialvote", description="Bayesian ideal points on lines and circles.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic roll-call data set")
    p.add_argument("--config", required=True, help="JSON simulation config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="sample a model's posterior")
    p.add_argument("model", choices=("euclidean", "circular"))
    p.add_argument("--votes", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--attendance", help="optional attendance CSV (P/A cells)")
    p.add_argument("--abstention", choices=("missing", "nay"), default="missing",
                   help="coding of present-but-not-voting cells (needs --attendance)")
    p.add_argument("--config", help="JSON sampler config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int, help="euclidean warm-up iterations")
    p.add_argument("--burnin", type=int, help="circular burn-in iterations")
    p.add_argument("--keep-every", type=int)
    p.add_argument("--link", choices=euc.LINKS)
    p.add_argument("--n-leapfrog", type=int)
    p.add_argument("--step-size", type=float, help="initial leapfrog step size")
    p.add_argument("--impute", choices=("yes", "no"), help="circular: impute missing votes")
    p.add_argument("--gamma-convention", choices=circ.GAMMA_CONVENTIONS)
    p.add_argument("--ref1", help="circular: legislator placed at pi/2 for aligned diagnostics")
    p.add_argument("--ref2", help="circular: legislator fixing the orientation")
    p.add_argument("--workers", type=int, help="parallel chain processes")
    p.add_argument("--strict", action="store_true", help="exit 3 when the R-hat gate fails")
    p.add_argument("--rhat-threshold", type=float, default=RHAT_GATE)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("postprocess", help="align, project and summarize draws")
    p.add_argument("--draws", required=True, help="directory written by 'fit'")
    p.add_argument("--meta", required=True)
    p.add_argument("--config")
    p.add_argument("--ref1")
    p.add_argument("--ref2")
    p.add_argument("--eps", type=float, help="tangent validity margin in radians")
    p.add_argument("--group-by", choices=("party", "bloc"))
    p.add_argument("--threshold", type=float, action="append",
                   help="report P(x < t) and P(x > t); repeatable")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("regress", help="per-draw logistic regression of the scandal flag")
    p.add_argument("--input", action="append", required=True, metavar="LABEL=PATH",
                   help="draw CSV (beta.csv or tangent.csv); repeatable")
    p.add_argument("--meta", required=True)
    p.add_argument("--exclude", action="append", help="legislator id to leave out; repeatable")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("compare", help="correlate euclidean and tangent posterior means")
    p.add_argument("--euclidean", required=True, help="euclidean_summary.csv")
    p.add_argument("--circular", required=True, help="circular_summary.csv")
    p.add_argument("--validity", help="validity.csv from postprocess")
    p.add_argument("--cutoff", type=float, default=post.TANGENT_CUTOFF)
    p.add_argument("--min-valid", type=float, default=post.MIN_VALID_FRACTION)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("diagnose", help="split R-hat and ESS from draw files")
    p.add_argument("--draws", required=True)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--rhat-threshold", type=float, default=RHAT_GATE)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except euc.ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
