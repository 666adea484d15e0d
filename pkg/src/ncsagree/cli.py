"""Command line entry point: ``ncsagree run|validate|synth|stats|report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import compare_pair, contingency, interpret_kappa, percent_agreement, weighted_kappa
from .config import load_config, read_config_file, validate
from .errors import IngestError, NcsAgreeError
from .report import fmt
from .synth import SynthConfig, generate_synthetic_corpus, load_bundled, write_synthetic

logger = logging.getLogger("ncsagree")


def _overrides(args) -> dict:
    return {
        "match_mode": args.match_mode,
        "seed": args.seed,
        "bootstrap": args.bootstrap,
        "css_iterations": args.css_iterations,
        "workers": args.workers,
        "freq_threshold": args.freq_threshold,
    }


def _load(args):
    cfg = load_config(args.config, _overrides(args))
    if args.out:
        cfg = cfg.with_out(Path(args.out))
    if cfg.workers is None:
        cfg = replace(cfg, workers=os.cpu_count() or 1)
    return cfg


def cmd_run(args) -> int:
    from .pipeline import run

    cfg = _load(args)
    result = run(cfg)
    print(f"wrote {len(result.files)} files to {cfg.out} ({len(result.results)} pairwise results)")
    return 0


def cmd_report(args) -> int:
    from .pipeline import rerun_from_dumps

    cfg = _load(args)
    result = rerun_from_dumps(cfg, args.dumps, cfg.out)
    print(f"wrote {len(result.files)} files to {cfg.out}")
    return 0


def cmd_validate(args) -> int:
    raw = read_config_file(args.config)
    if isinstance(raw, dict):
        raw.update({k: v for k, v in _overrides(args).items() if v is not None})
    diags = validate(raw, Path(args.config).parent)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return 2 if diags else 0


def cmd_synth(args) -> int:
    if args.corpus_config:
        raw = read_config_file(args.corpus_config)
        synth = SynthConfig.from_mapping(raw["corpus"] if "corpus" in raw else raw)
        run_settings = raw.get("run", {}) if "corpus" in raw else {}
    else:
        synth, run_settings = load_bundled()
    changes = {}
    if args.papers is not None:
        changes["n_papers"] = args.papers
    if args.seed is not None:
        changes["seed"] = args.seed
    if changes:
        synth = replace(synth, **changes)
    corpus = generate_synthetic_corpus(synth)
    path = write_synthetic(corpus, args.out, run_settings)
    print(f"wrote synthetic corpus ({len(corpus.publications)} papers, {len(corpus.systems)} systems); config {path}")
    return 0


def _read_vector(path, kind):
    try:
        lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
        return [int(v) for v in lines] if kind == "classes" else [float(v) for v in lines]
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read {kind} from {path}: {exc}", module="cli") from exc


def cmd_stats(args) -> int:
    kind = "scores" if args.scores else "classes"
    a = _read_vector(args.file_a, kind)
    b = _read_vector(args.file_b, kind)
    if len(a) != len(b):
        raise IngestError(f"vectors differ in length: {len(a)} vs {len(b)}", module="cli")
    seed = args.seed if args.seed is not None else 0
    boot = args.bootstrap if args.bootstrap is not None else 1000
    if args.scores:
        r = compare_pair("A", "B", a, b, css_iterations=args.css_iterations or 3, n_boot=boot, seed=seed)
        out = {
            "n": r.n,
            "contingency": r.table.counts.tolist(),
            "percent_agreement": fmt(r.percent_agreement),
            "kappa": fmt(r.kappa.value),
            "kappa_ci": [fmt(r.kappa.ci_low), fmt(r.kappa.ci_high)],
            "kappa_band": r.kappa_band,
            "lcc": fmt(r.lcc.value),
            "lcc_ci": [fmt(r.lcc.ci_low), fmt(r.lcc.ci_high)],
        }
    else:
        try:
            k = args.k or max(max(a), max(b))
            table = contingency(a, b, k)
        except ValueError as exc:
            raise IngestError(str(exc), module="cli") from exc
        kappa = weighted_kappa(table, n_boot=boot, seed=np.random.default_rng(seed))
        out = {
            "n": table.total,
            "contingency": table.counts.tolist(),
            "percent_agreement": fmt(percent_agreement(table)),
            "kappa": fmt(kappa.value),
            "kappa_ci": [fmt(kappa.ci_low), fmt(kappa.ci_high)],
            "kappa_band": interpret_kappa(kappa.value),
        }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncsagree", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p, out_required=False):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--match-mode", choices=("pairwise", "full"))
        p.add_argument("--seed", type=int)
        p.add_argument("--bootstrap", type=int, help="bootstrap replicates, 0 disables")
        p.add_argument("--css-iterations", type=int)
        p.add_argument("--out", type=Path, required=out_required)
        p.add_argument("--workers", type=int)
        p.add_argument("--freq-threshold", type=int)

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config file without running it")
    run_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="regenerate the report from persisted dumps")
    run_flags(p, out_required=True)
    p.add_argument("--dumps", required=True, type=Path)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus and run config")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--corpus-config", type=Path, help="synthetic corpus settings (default: bundled 6 systems)")
    p.add_argument("--papers", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="agreement of two pre-computed vectors (one value per line)")
    p.add_argument("file_a", type=Path)
    p.add_argument("file_b", type=Path)
    p.add_argument("--scores", action="store_true", help="inputs are scores; derive CSS classes and Lin's lcc")
    p.add_argument("-k", type=int, help="number of classes (default: largest level seen)")
    p.add_argument("--seed", type=int)
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--css-iterations", type=int)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NcsAgreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
