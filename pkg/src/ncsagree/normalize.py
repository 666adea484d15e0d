"""Reference sets and normalized citation scores.

A reference set is every paper of one system sharing a (field, publication
year) cell. A paper's score in a field is its citation count divided by the
mean citation count of that cell, the paper itself included. Papers with
several fields get the unweighted mean of their per-field scores.

Sums are kept as Python integers and the division happens once per
(paper, field), so the mean score of a single-assignment cell is 1 up to
one rounding step per paper.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .corpus import PublicationRecord
from .errors import ConsistencyError


@dataclass(frozen=True)
class ReferenceSetStats:
    system_id: str
    field_id: str
    pub_year: int
    n_papers: int
    citation_sum: int

    @property
    def mean_citations(self) -> Fraction:
        return Fraction(self.citation_sum, self.n_papers)

    def score(self, citations: int) -> float:
        """Citations relative to the cell mean; 0 when the whole cell is uncited."""
        if self.citation_sum == 0:
            return 0.0
        return citations * self.n_papers / self.citation_sum


@dataclass(frozen=True)
class NcsTable:
    system_id: str
    scores: dict[str, float]
    n_fields: dict[str, int]
    zero_mean_cells: int = 0

    def __len__(self):
        return len(self.scores)

    def __getitem__(self, key):
        return self.scores[key]

    def __contains__(self, key):
        return key in self.scores

    def vector(self, keys: Sequence[str]) -> list[float]:
        return [self.scores[k] for k in keys]


def build_reference_sets(
    papers: Mapping[str, PublicationRecord],
    fields: Mapping[str, Sequence[str]],
    system_id: str,
) -> dict[tuple[str, int], ReferenceSetStats]:
    """Aggregate citation counts per (field, year) cell.

    ``fields`` maps paper keys to their resolved field list; a paper listed
    under several fields contributes its full count to each of them.
    """
    counts: dict[tuple[str, int], list[int]] = {}
    for key, fs in fields.items():
        rec = papers[key]
        for f in set(fs):
            cell = counts.setdefault((f, rec.pub_year), [0, 0])
            cell[0] += 1
            cell[1] += rec.citations
    return {
        cell: ReferenceSetStats(system_id, cell[0], cell[1], n, total)
        for cell, (n, total) in sorted(counts.items())
    }


def compute_ncs(
    papers: Mapping[str, PublicationRecord],
    fields: Mapping[str, Sequence[str]],
    refsets: Mapping[tuple[str, int], ReferenceSetStats],
    system_id: str,
) -> NcsTable:
    scores = {}
    n_fields = {}
    for key in sorted(fields):
        rec = papers[key]
        distinct = sorted(set(fields[key]))
        if not distinct:
            continue
        per_field = []
        for f in distinct:
            stats = refsets.get((f, rec.pub_year))
            if stats is None:
                raise ConsistencyError(f"{system_id}: no reference set for field {f!r}, year {rec.pub_year}")
            per_field.append(stats.score(rec.citations))
        scores[key] = per_field[0] if len(per_field) == 1 else math.fsum(per_field) / len(per_field)
        n_fields[key] = len(distinct)
    zero = sum(1 for s in refsets.values() if s.citation_sum == 0)
    return NcsTable(system_id, scores, n_fields, zero)


def ncs_for_system(
    papers: Mapping[str, PublicationRecord], fields: Mapping[str, Sequence[str]], system_id: str
) -> NcsTable:
    """Reference sets and scores in one call."""
    refsets = build_reference_sets(papers, fields, system_id)
    return compute_ncs(papers, fields, refsets, system_id)


def write_ncs_dump(table: NcsTable, path):
    """Full-precision dump: paper, score (round-trip repr), contributing fields."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["paper", "score", "n_fields"])
        for key in sorted(table.scores):
            writer.writerow([key, repr(table.scores[key]), table.n_fields[key]])


def read_ncs_dump(path, system_id: str) -> NcsTable:
    scores, n_fields = {}, {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores[row["paper"]] = float(row["score"])
            n_fields[row["paper"]] = int(row["n_fields"])
    return NcsTable(system_id, scores, n_fields)


def mean_score_by_cell(
    table: NcsTable, papers: Mapping[str, PublicationRecord], fields: Mapping[str, Iterable[str]]
) -> dict[tuple[str, int], float]:
    """Mean score per (field, year) cell; used for desk checks of the unit-mean property."""
    acc: dict[tuple[str, int], list[float]] = {}
    for key, fs in fields.items():
        for f in set(fs):
            acc.setdefault((f, papers[key].pub_year), []).append(table.scores[key])
    return {cell: math.fsum(v) / len(v) for cell, v in sorted(acc.items())}
