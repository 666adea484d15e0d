"""End-to-end run: ingest, resolve, normalize, match, classify, compare, report.

The work splits into a scoring stage (everything up to per-system scores)
and a comparison stage. The scoring stage can be persisted as dumps, and the
comparison stage replayed from them gives the same report bytes.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import AgreementResult, pairwise_compare
from .config import RunConfig
from .corpus import (
    ClassificationSystemDescriptor,
    Corpus,
    FieldSizeSummary,
    LoadReport,
    MatchedDataset,
    SystemAssignments,
    field_sizes,
    join_systems,
    link_assignments,
    load_assignments,
    load_publications,
    summarize_sizes,
    write_publications,
)
from .css import CssThresholds, assign_levels, compute_thresholds
from .errors import ConsistencyError, OutputError
from .normalize import NcsTable, ncs_for_system, read_ncs_dump, write_ncs_dump
from .report import AlluvialBand, RunManifest, alluvial_bands, export_report, file_digest

logger = logging.getLogger(__name__)


@dataclass
class ScoredStage:
    corpus: Corpus
    systems: list[SystemAssignments]
    ncs: dict[str, NcsTable]
    inputs: dict[str, str]
    ingest: dict


@dataclass
class RunResult:
    config: RunConfig
    scored: ScoredStage
    datasets: list[MatchedDataset]
    results: list[AgreementResult]
    reference: MatchedDataset | None
    reference_thresholds: dict[str, CssThresholds]
    reference_classes: dict[str, np.ndarray]
    bands: list[AlluvialBand]
    summaries: list[FieldSizeSummary]
    frequencies: dict[str, list[tuple[str, int]]]
    manifest: RunManifest
    files: list[Path] = field(default_factory=list)


def score(config: RunConfig) -> ScoredStage:
    inputs = {config.publications_as_given: file_digest(config.publications)}
    corpus = load_publications(config.publications, config.year_range)
    reports: dict[str, LoadReport] = {}
    systems = []
    for s in config.systems:
        inputs[s.assignments_as_given] = file_digest(s.assignments)
        table = load_assignments(s.assignments, s.descriptor)
        reports[s.system_id] = table.report
        systems.append(link_assignments(corpus, table))
    ncs = {}
    for s in systems:
        ncs[s.system_id] = ncs_for_system(corpus.by_key, s.fields, s.system_id)
        if ncs[s.system_id].zero_mean_cells:
            logger.info("%s: %d reference sets without citations scored 0",
                        s.system_id, ncs[s.system_id].zero_mean_cells)
    ingest = {
        "publications": corpus.report.to_dict(),
        "publications_retained": len(corpus),
        "assignments": {sid: reports[sid].to_dict() for sid in config.system_ids},
        "systems": {s.system_id: s.summary() for s in systems},
        "zero_mean_reference_sets": {sid: ncs[sid].zero_mean_cells for sid in config.system_ids},
    }
    return ScoredStage(corpus, systems, ncs, dict(sorted(inputs.items())), ingest)


def _decisions(config: RunConfig) -> dict:
    return {
        "css_boundary": "score equal to a threshold belongs to the upper class",
        "css_truncation": config.css_truncation,
        "css_population": config.css_population,
        "css_iterations": config.css_iterations,
        "kappa_weights": "linear agreement weights 1 - |i-j|/k",
        "kappa_ci": "bootstrap-percentile" if config.bootstrap > 0 else "none",
        "kappa_band_rounding": "two decimals, half up, bands closed at upper endpoint",
        "lin_moments": "population (1/n)",
        "lin_ci": config.lin_ci,
        "bootstrap_resampling": "papers, fixed CSS classes, per-pair seed streams",
        "zero_mean_reference_set": "score 0",
        "multi_field_score": "unweighted mean over distinct fields",
        "focal_paper_in_reference_set": True,
        "ncs_population": "all linked papers of each system, before matching",
        "doi_normalization": "trim, lowercase, strip resolver prefixes",
        "duplicate_publications": "merge rows sharing an identifier, keep max citations",
        "multiple_primaries": "keep smallest field_id",
        "boxplot": "Tukey hinges, 1.5 IQR fences",
    }


def compare(config: RunConfig, scored: ScoredStage) -> RunResult:
    corpus, systems, ncs = scored.corpus, scored.systems, scored.ncs
    datasets = join_systems(corpus, systems, config.match_mode)
    for ds in datasets:
        logger.info("matched %s: %d papers", ds.label, len(ds))

    fixed = None
    if config.css_population == "system":
        fixed = {
            sid: compute_thresholds(list(t.scores.values()), config.css_iterations, config.css_truncation)
            for sid, t in ncs.items()
        }
    if config.match_mode == "full":
        keys = datasets[0].paper_keys
    else:
        keys = {ds.systems: ds.paper_keys for ds in datasets}
    results = pairwise_compare(
        {sid: t.scores for sid, t in ncs.items()},
        config.system_ids,
        paper_keys=keys,
        match_mode=config.match_mode,
        css_iterations=config.css_iterations,
        css_truncation=config.css_truncation,
        fixed_thresholds=fixed,
        n_boot=config.bootstrap,
        seed=config.seed or 0,
        lin_ci=config.lin_ci,
        workers=config.workers,
    )

    if config.match_mode == "full":
        reference = datasets[0]
    else:
        try:
            reference = join_systems(corpus, systems, "full")[0]
        except ConsistencyError:
            logger.warning("systems share no paper; alluvial bands skipped")
            reference = None

    ref_th: dict[str, CssThresholds] = {}
    ref_classes: dict[str, np.ndarray] = {}
    bands: list[AlluvialBand] = []
    if reference is not None:
        for sid in config.system_ids:
            scores = ncs[sid].vector(reference.paper_keys)
            ref_th[sid] = (fixed or {}).get(sid) or compute_thresholds(
                scores, config.css_iterations, config.css_truncation
            )
            ref_classes[sid] = assign_levels(scores, ref_th[sid])
        bands = alluvial_bands(ref_classes, config.order)

    summaries = []
    frequencies = {}
    for s in systems:
        fields = reference.fields[s.system_id] if reference is not None else s.fields
        sizes = field_sizes(fields)
        summaries.append(summarize_sizes(s.system_id, sizes))
        frequencies[s.system_id] = sorted(
            ((f, n) for f, n in sizes.items() if n >= config.freq_threshold), key=lambda t: (-t[1], t[0])
        )

    manifest = RunManifest(
        config=config.echo(),
        inputs=scored.inputs,
        seed=config.seed,
        version=__version__,
        decisions=_decisions(config),
    )
    return RunResult(config, scored, datasets, results, reference, ref_th, ref_classes, bands, summaries,
                     frequencies, manifest)


def write(result: RunResult, out=None) -> list[Path]:
    out = Path(out or result.config.out)
    coverage = list(result.datasets)
    if result.reference is not None and result.config.match_mode == "pairwise":
        coverage.append(result.reference)
    result.files = export_report(
        result.results, result.bands, result.summaries, result.manifest, out,
        frequencies=result.frequencies, coverage=coverage,
        reference_thresholds=result.reference_thresholds, ingest=result.scored.ingest,
    )
    return result.files


def run(config: RunConfig) -> RunResult:
    scored = score(config)
    if config.write_dumps:
        write_dumps(scored, Path(config.out) / "dumps")
    result = compare(config, scored)
    write(result)
    return result


# ---------------------------------------------------------------------------
# intermediate dumps
# ---------------------------------------------------------------------------


def write_dumps(scored: ScoredStage, dump_dir):
    dump_dir = Path(dump_dir)
    try:
        (dump_dir / "fields").mkdir(parents=True, exist_ok=True)
        (dump_dir / "ncs").mkdir(parents=True, exist_ok=True)
        write_publications(scored.corpus.records, dump_dir / "publications.csv")
        for s in scored.systems:
            with open(dump_dir / "fields" / f"{s.system_id}.csv", "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["paper", "field_id"])
                for key in sorted(s.fields):
                    for f in s.fields[key]:
                        writer.writerow([key, f])
            write_ncs_dump(scored.ncs[s.system_id], dump_dir / "ncs" / f"{s.system_id}.csv")
        state = {"inputs": scored.inputs, "ingest": scored.ingest}
        (dump_dir / "state.json").write_text(json.dumps(state, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OutputError(f"cannot write dumps to {dump_dir}: {exc}") from exc


def read_dumps(dump_dir, config: RunConfig) -> ScoredStage:
    """Rebuild the scoring stage from :func:`write_dumps` output."""
    dump_dir = Path(dump_dir)
    state = json.loads((dump_dir / "state.json").read_text(encoding="utf-8"))
    corpus = load_publications(dump_dir / "publications.csv", year_range=(-(10**9), 10**9))
    systems = []
    ncs = {}
    for sc in config.systems:
        sid = sc.system_id
        summary = state["ingest"]["systems"][sid]
        fields: dict[str, list[str]] = {}
        with open(dump_dir / "fields" / f"{sid}.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                fields.setdefault(row["paper"], []).append(row["field_id"])
        descriptor = ClassificationSystemDescriptor(sid, summary["policy"], summary["namespace"])
        systems.append(SystemAssignments(
            descriptor, {k: tuple(v) for k, v in fields.items()}, summary["fields_total"],
            summary["unlinked_keys"], summary["dropped_no_primary"], summary["multiple_primaries"],
        ))
        table = read_ncs_dump(dump_dir / "ncs" / f"{sid}.csv", sid)
        ncs[sid] = NcsTable(sid, table.scores, table.n_fields, state["ingest"]["zero_mean_reference_sets"][sid])
    return ScoredStage(corpus, systems, ncs, state["inputs"], state["ingest"])


def rerun_from_dumps(config: RunConfig, dump_dir, out) -> RunResult:
    result = compare(config, read_dumps(dump_dir, config))
    write(result, out)
    return result
