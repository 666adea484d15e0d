"""Machine-readable analysis artifacts.

Every file is written with sorted keys, ``\\n`` line endings and numbers as
fixed six-decimal strings, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .agreement import AgreementResult, Estimate
from .corpus import FieldSizeSummary, MatchedDataset
from .css import CssThresholds, class_label
from .errors import OutputError

logger = logging.getLogger(__name__)

PAIRWISE_COLUMNS = (
    "system_a", "system_b", "match_mode", "n", "k", "contingency", "percent_agreement",
    "kappa", "kappa_ci_low", "kappa_ci_high", "kappa_ci_method", "kappa_band",
    "lcc", "lcc_ci_low", "lcc_ci_high", "lcc_ci_method",
    "thresholds_a", "thresholds_b", "bootstrap_seed", "bootstrap_b",
)
BAND_COLUMNS = (
    "position", "source_system", "target_system", "source_class", "source_label",
    "target_class", "target_label", "count",
)
BOXPLOT_COLUMNS = (
    "system_id", "n_fields", "total_memberships", "min", "q1", "median", "q3", "max",
    "lower_fence", "upper_fence", "whisker_low", "whisker_high", "n_outliers", "outliers",
)


@dataclass(frozen=True)
class AlluvialBand:
    position: int
    source_system: str
    target_system: str
    source_class: int
    target_class: int
    count: int


@dataclass
class RunManifest:
    config: dict
    inputs: dict[str, str]
    seed: int | None
    version: str
    decisions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "decisions": self.decisions,
            "inputs": self.inputs,
            "seed": self.seed,
            "software": {"name": "ncsagree", "version": self.version},
        }


def fmt(value) -> str:
    """Six-decimal string; blank for missing values, never ``-0.000000``."""
    if value is None:
        return ""
    s = f"{float(value):.6f}"
    return "0.000000" if s == "-0.000000" else s


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def alluvial_bands(classes: Mapping[str, Sequence[int]], order: Sequence[str]) -> list[AlluvialBand]:
    """Flows between adjacent systems in ``order``, one band per non-empty class pair."""
    for sid in order:
        if sid not in classes:
            raise ValueError(f"system {sid!r} in alluvial order has no class vector")
    lengths = {len(classes[s]) for s in order}
    if len(lengths) > 1:
        raise ValueError("class vectors must cover the same papers")
    bands = []
    for pos, (a, b) in enumerate(zip(order, order[1:])):
        flows = Counter(zip((int(v) for v in classes[a]), (int(v) for v in classes[b])))
        for (ca, cb), n in sorted(flows.items()):
            bands.append(AlluvialBand(pos, a, b, ca, cb, n))
    return bands


def _thresholds(th: CssThresholds) -> str:
    return ";".join(fmt(m) for m in th.means)


def _ci(est: Estimate):
    return fmt(est.value), fmt(est.ci_low), fmt(est.ci_high), est.method


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def pairwise_rows(results: Iterable[AgreementResult]) -> list[list]:
    rows = []
    for r in results:
        table = "|".join(";".join(str(int(c)) for c in row) for row in r.table.counts)
        rows.append([
            r.system_a, r.system_b, r.match_mode, r.n, r.table.k, table, fmt(r.percent_agreement),
            *_ci(r.kappa), r.kappa_band, *_ci(r.lcc),
            _thresholds(r.thresholds_a), _thresholds(r.thresholds_b),
            "" if r.seed is None else r.seed, r.n_boot,
        ])
    return rows


def band_rows(bands: Iterable[AlluvialBand]) -> list[list]:
    return [
        [b.position, b.source_system, b.target_system, b.source_class, class_label(b.source_class),
         b.target_class, class_label(b.target_class), b.count]
        for b in bands
    ]


def boxplot_rows(summaries: Iterable[FieldSizeSummary]) -> list[list]:
    return [
        [s.system_id, s.n_fields, s.total_memberships, s.min, fmt(s.q1), fmt(s.median), fmt(s.q3), s.max,
         fmt(s.lower_fence), fmt(s.upper_fence), s.whisker_low, s.whisker_high, len(s.outliers),
         ";".join(f"{f}:{n}" for f, n in s.outliers)]
        for s in summaries
    ]


def frequency_rows(frequencies: Mapping[str, Sequence[tuple[str, int]]]) -> list[list]:
    return [[sid, f, n] for sid, items in frequencies.items() for f, n in items]


def coverage_rows(datasets: Iterable[MatchedDataset]) -> list[list]:
    return [
        [ds.label, ds.match_mode, c.system_id, len(ds), c.fields_total, c.fields_retained, fmt(c.percent)]
        for ds in datasets
        for c in ds.coverage
    ]


def threshold_rows(results: Iterable[AgreementResult], reference: Mapping[str, CssThresholds]) -> list[list]:
    rows = []
    for r in results:
        label = f"{r.system_a}-{r.system_b}"
        for sid, th in ((r.system_a, r.thresholds_a), (r.system_b, r.thresholds_b)):
            rows.append([label, sid, th.iterations, th.truncation, _thresholds(th)])
    for sid, th in reference.items():
        rows.append(["reference", sid, th.iterations, th.truncation, _thresholds(th)])
    return rows


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def export_report(
    results: Sequence[AgreementResult],
    bands: Sequence[AlluvialBand],
    summaries: Sequence[FieldSizeSummary],
    manifest: RunManifest,
    destination,
    frequencies: Mapping[str, Sequence[tuple[str, int]]] | None = None,
    coverage: Sequence[MatchedDataset] = (),
    reference_thresholds: Mapping[str, CssThresholds] | None = None,
    ingest: Mapping | None = None,
) -> list[Path]:
    """Write the report files into ``destination``; returns their paths.

    On an I/O failure every file written by this call is removed again and
    :class:`OutputError` is raised.
    """
    dest = Path(destination)
    contents = {
        "pairwise_agreement.csv": _csv(PAIRWISE_COLUMNS, pairwise_rows(results)),
        "alluvial_bands.csv": _csv(BAND_COLUMNS, band_rows(bands)),
        "boxplot_summary.csv": _csv(BOXPLOT_COLUMNS, boxplot_rows(summaries)),
        "field_frequency.csv": _csv(("system_id", "field_id", "n_papers"), frequency_rows(frequencies or {})),
        "coverage.csv": _csv(
            ("dataset", "match_mode", "system_id", "papers", "fields_total", "fields_retained", "percent_retained"),
            coverage_rows(coverage),
        ),
        "css_thresholds.csv": _csv(
            ("dataset", "system_id", "iterations", "truncation", "thresholds"),
            threshold_rows(results, reference_thresholds or {}),
        ),
    }
    if ingest is not None:
        contents["ingest_report.json"] = _json(ingest)
    contents["manifest.json"] = _json(manifest.to_dict())

    written: list[Path] = []
    try:
        dest.mkdir(parents=True, exist_ok=True)
        for name in sorted(contents):
            path = dest / name
            with open(path, "w", encoding="utf-8", newline="") as fh:
                written.append(path)
                fh.write(contents[name])
    except OSError as exc:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise OutputError(f"cannot write report to {dest}: {exc}") from exc
    logger.info("wrote %d report files to %s", len(written), dest)
    return written
