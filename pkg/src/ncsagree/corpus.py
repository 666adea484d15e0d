"""Publication ingestion, field assignments and cross-system matching.

Papers are identified by up to three identifiers (DOI, PubMed ID, WoS UT).
Each classification system keys its assignment file on one of these
namespaces; after linking, everything downstream is keyed on the canonical
record key (see :attr:`PublicationRecord.key`).
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import ConsistencyError, IngestError

logger = logging.getLogger(__name__)

NAMESPACES = ("doi", "pmid", "ut")
POLICY_AVERAGED = "all-assignments-averaged"
POLICY_PRIMARY = "primary-only"
POLICIES = (POLICY_AVERAGED, POLICY_PRIMARY)
MATCH_MODES = ("pairwise", "full")
DEFAULT_YEAR_RANGE = (1900, 2100)

PUBLICATION_COLUMNS = ("doi", "pmid", "ut", "pub_year", "citations")
ASSIGNMENT_COLUMNS = ("paper_key", "field_id", "is_primary")

_DOI_PREFIXES = (
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi:",
)


# ---------------------------------------------------------------------------
# identifiers
# ---------------------------------------------------------------------------


def normalize_doi(value: str) -> str | None:
    """Lowercase, trim and strip resolver prefixes. Idempotent."""
    s = value.strip().lower()
    stripped = True
    while stripped:
        stripped = False
        for prefix in _DOI_PREFIXES:
            if s.startswith(prefix):
                s = s[len(prefix):].strip()
                stripped = True
    return s or None


def normalize_pmid(value) -> str | None:
    s = str(value).strip()
    if not s:
        return None
    if not s.isdigit():
        raise ValueError(f"invalid pmid {value!r}")
    return str(int(s))


def normalize_ut(value: str) -> str | None:
    s = str(value).strip()
    return s or None


_NORMALIZERS = {"doi": normalize_doi, "pmid": normalize_pmid, "ut": normalize_ut}


def normalize_identifier(namespace: str, value) -> str | None:
    """Normalize ``value`` in ``namespace``; ``None``/blank means absent."""
    if value is None:
        return None
    try:
        normalizer = _NORMALIZERS[namespace]
    except KeyError:
        raise ValueError(f"unknown identifier namespace {namespace!r}") from None
    return normalizer(str(value))


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PublicationRecord:
    doi: str | None
    pmid: str | None
    ut: str | None
    pub_year: int
    citations: int

    def __post_init__(self):
        if self.doi is None and self.pmid is None and self.ut is None:
            raise ValueError("publication needs at least one identifier")
        if self.citations < 0:
            raise ValueError("negative citations")

    @property
    def key(self) -> str:
        """Canonical key: the first present identifier, namespace-prefixed."""
        for ns in NAMESPACES:
            value = getattr(self, ns)
            if value is not None:
                return f"{ns}:{value}"
        raise AssertionError("unreachable")

    def identifiers(self) -> Iterator[tuple[str, str]]:
        for ns in NAMESPACES:
            value = getattr(self, ns)
            if value is not None:
                yield ns, value


@dataclass(frozen=True)
class ClassificationSystemDescriptor:
    system_id: str
    assignment_policy: str
    identifier_namespace: str

    def __post_init__(self):
        if not self.system_id:
            raise ValueError("system_id must be non-empty")
        if self.assignment_policy not in POLICIES:
            raise ValueError(f"unknown assignment policy {self.assignment_policy!r}")
        if self.identifier_namespace not in NAMESPACES:
            raise ValueError(f"unknown namespace {self.identifier_namespace!r}")


@dataclass(frozen=True)
class FieldAssignment:
    system_id: str
    paper_key: str
    field_id: str
    is_primary: bool = False


@dataclass
class LoadReport:
    """Accepted/rejected row counts for one input file."""

    source: str
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    duplicates_merged: int = 0
    identifier_conflicts: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_rejected(self) -> int:
        return sum(self.rejected.values())

    def reject(self, reason: str):
        self.rejected[reason] += 1

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "accepted": self.accepted,
            "rejected": self.n_rejected,
            "reasons": dict(sorted(self.rejected.items())),
            "duplicates_merged": self.duplicates_merged,
            "identifier_conflicts": self.identifier_conflicts,
            **dict(sorted(self.extra.items())),
        }


# ---------------------------------------------------------------------------
# row readers
# ---------------------------------------------------------------------------


def read_rows(path) -> Iterator[dict]:
    """Yield dict rows from a CSV/TSV file or a JSON-lines file."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError:
                    yield {"__malformed__": f"line {lineno}"}
                    continue
                yield row if isinstance(row, dict) else {"__malformed__": f"line {lineno}"}
        return
    delimiter = "\t" if suffix in (".tsv", ".tab") else ","
    with open(path, newline="", encoding="utf-8") as fh:
        yield from csv.DictReader(fh, delimiter=delimiter)


def _rows(source) -> tuple[Iterable[Mapping], str]:
    if isinstance(source, (str, os.PathLike)):
        try:
            return list(read_rows(source)), str(source)
        except OSError as exc:
            raise IngestError(f"cannot read {source}: {exc}") from exc
    return source, "<stream>"


def _blank(value) -> bool:
    return value is None or (isinstance(value, str) and not value.strip())


def _parse_int(value) -> int:
    if isinstance(value, bool):
        raise ValueError(value)
    if isinstance(value, int):
        return value
    return int(str(value).strip())


# ---------------------------------------------------------------------------
# publications
# ---------------------------------------------------------------------------


class Corpus:
    """Deduplicated publications plus an index from every seen identifier.

    Rows sharing any identifier collapse into one record that keeps the
    maximum citation count. Identifiers of collapsed rows stay resolvable
    through :meth:`lookup` even when the kept record shows another value.
    """

    def __init__(self, records: Sequence[PublicationRecord], aliases: Mapping[tuple[str, str], str],
                 report: LoadReport | None = None):
        self.records = tuple(sorted(records, key=lambda r: r.key))
        self.by_key = {r.key: r for r in self.records}
        self._aliases = dict(aliases)
        for r in self.records:
            for ident in r.identifiers():
                self._aliases.setdefault(ident, r.key)
        self.report = report or LoadReport("<memory>", accepted=len(self.records))

    @classmethod
    def from_records(cls, records: Iterable[PublicationRecord]) -> "Corpus":
        return load_publications(
            [
                {k: ("" if getattr(r, k) is None else getattr(r, k)) for k in PUBLICATION_COLUMNS}
                for r in records
            ],
            year_range=(-(10**9), 10**9),
        )

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def lookup(self, namespace: str, value: str) -> str | None:
        """Canonical key of the record carrying ``value`` (already normalized)."""
        return self._aliases.get((namespace, value))


def _parse_publication(row: Mapping, year_range) -> tuple[dict | None, str | None]:
    if "__malformed__" in row:
        return None, "malformed row"
    ids = {}
    for ns in NAMESPACES:
        raw = row.get(ns)
        if _blank(raw):
            ids[ns] = None
            continue
        try:
            ids[ns] = normalize_identifier(ns, raw)
        except ValueError:
            return None, f"invalid {ns}"
    if all(v is None for v in ids.values()):
        return None, "no identifier"
    if _blank(row.get("pub_year")):
        return None, "missing pub_year"
    try:
        year = _parse_int(row["pub_year"])
    except (TypeError, ValueError):
        return None, "invalid pub_year"
    lo, hi = year_range
    if not lo <= year <= hi:
        return None, "pub_year out of range"
    if _blank(row.get("citations")):
        return None, "missing citations"
    try:
        citations = _parse_int(row["citations"])
    except (TypeError, ValueError):
        return None, "invalid citations"
    if citations < 0:
        return None, "negative citations"
    return {**ids, "pub_year": year, "citations": citations}, None


def load_publications(source, year_range=DEFAULT_YEAR_RANGE) -> Corpus:
    """Load, validate and deduplicate publication rows.

    ``source`` is a path (CSV, TSV or JSON lines) or an iterable of mappings
    with the fields doi, pmid, ut, pub_year, citations. Bad rows are counted
    in ``corpus.report``; a source with no valid row raises
    :class:`IngestError`.
    """
    rows, name = _rows(source)
    report = LoadReport(name)
    parsed = []
    for row in rows:
        rec, reason = _parse_publication(row, year_range)
        if rec is None:
            report.reject(reason)
        else:
            parsed.append(rec)
    if not parsed:
        raise IngestError(f"no valid publication rows in {name}")

    # union-find over rows sharing an identifier
    parent = list(range(len(parsed)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner: dict[tuple[str, str], int] = {}
    for i, rec in enumerate(parsed):
        for ns in NAMESPACES:
            if rec[ns] is None:
                continue
            j = owner.setdefault((ns, rec[ns]), i)
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = defaultdict(list)
    for i in range(len(parsed)):
        groups[find(i)].append(i)

    records = []
    aliases: dict[tuple[str, str], PublicationRecord] = {}
    for members in groups.values():
        # max citations, first occurrence on ties
        best = max(members, key=lambda i: (parsed[i]["citations"], -i))
        ids = {}
        conflict = False
        for ns in NAMESPACES:
            values = [parsed[i][ns] for i in members if parsed[i][ns] is not None]
            if len(set(values)) > 1:
                conflict = True
            ids[ns] = parsed[best][ns] if parsed[best][ns] is not None else (values[0] if values else None)
        rec = PublicationRecord(pub_year=parsed[best]["pub_year"], citations=parsed[best]["citations"], **ids)
        records.append(rec)
        for i in members:
            for ns in NAMESPACES:
                if parsed[i][ns] is not None:
                    aliases[(ns, parsed[i][ns])] = rec
        report.duplicates_merged += len(members) - 1
        report.identifier_conflicts += conflict
    report.accepted = len(parsed)
    if report.duplicates_merged:
        logger.info("%s: merged %d duplicate publication rows", name, report.duplicates_merged)
    if report.n_rejected:
        logger.warning("%s: rejected %d publication rows", name, report.n_rejected)
    return Corpus(records, {k: r.key for k, r in aliases.items()}, report)


def write_publications(records: Iterable[PublicationRecord], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PUBLICATION_COLUMNS)
        for r in records:
            writer.writerow(["" if r.doi is None else r.doi, "" if r.pmid is None else r.pmid,
                             "" if r.ut is None else r.ut, r.pub_year, r.citations])


# ---------------------------------------------------------------------------
# assignments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssignmentTable:
    system: ClassificationSystemDescriptor
    assignments: tuple[FieldAssignment, ...]
    report: LoadReport

    def __iter__(self):
        return iter(self.assignments)

    def __len__(self):
        return len(self.assignments)

    @property
    def field_ids(self) -> frozenset[str]:
        return frozenset(a.field_id for a in self.assignments)


def _parse_flag(value) -> bool:
    if _blank(value):
        return False
    s = str(value).strip().lower()
    if s in ("1", "true"):
        return True
    if s in ("0", "false"):
        return False
    raise ValueError(value)


def load_assignments(source, system: ClassificationSystemDescriptor) -> AssignmentTable:
    """Load one system's assignment rows (paper_key, field_id, is_primary).

    Paper keys are normalized in the system's namespace but not checked
    against the publications here; unknown keys drop out at linking time.
    """
    rows, name = _rows(source)
    report = LoadReport(name)
    seen: dict[tuple[str, str], bool] = {}
    for row in rows:
        if "__malformed__" in row:
            report.reject("malformed row")
            continue
        try:
            key = normalize_identifier(system.identifier_namespace, row.get("paper_key"))
        except ValueError:
            report.reject("invalid paper_key")
            continue
        if key is None:
            report.reject("missing paper_key")
            continue
        field_id = row.get("field_id")
        field_id = "" if field_id is None else str(field_id).strip()
        if not field_id:
            report.reject("empty field_id")
            continue
        try:
            primary = _parse_flag(row.get("is_primary"))
        except ValueError:
            report.reject("invalid is_primary")
            continue
        report.accepted += 1
        k = (key, field_id)
        if k in seen:
            report.duplicates_merged += 1
            seen[k] = seen[k] or primary
        else:
            seen[k] = primary
    if not seen:
        raise IngestError(f"no valid assignment rows for system {system.system_id} in {name}")
    assignments = tuple(
        FieldAssignment(system.system_id, key, fid, primary) for (key, fid), primary in sorted(seen.items())
    )
    report.extra["n_papers"] = len({a.paper_key for a in assignments})
    report.extra["n_fields"] = len({a.field_id for a in assignments})
    return AssignmentTable(system, assignments, report)


def write_assignments(assignments: Iterable[FieldAssignment], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ASSIGNMENT_COLUMNS)
        for a in assignments:
            writer.writerow([a.paper_key, a.field_id, int(a.is_primary)])


@dataclass(frozen=True)
class Resolution:
    fields: dict[str, tuple[str, ...]]
    dropped_no_primary: int = 0
    multiple_primaries: int = 0


def resolve_assignments(assignments: Iterable[FieldAssignment], policy: str) -> Resolution:
    """Reduce assignment tuples to the per-paper field list used for scoring.

    Under ``primary-only`` each paper keeps its primary field; papers without
    one are dropped and papers with several keep the smallest field_id.
    Under ``all-assignments-averaged`` every distinct field is kept.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown assignment policy {policy!r}")
    by_paper: dict[str, dict[str, bool]] = defaultdict(dict)
    systems = set()
    for a in assignments:
        systems.add(a.system_id)
        by_paper[a.paper_key][a.field_id] = by_paper[a.paper_key].get(a.field_id, False) or a.is_primary
    if len(systems) > 1:
        raise ValueError(f"assignments from several systems: {sorted(systems)}")

    out = {}
    dropped = multi = 0
    for key in sorted(by_paper):
        fields = by_paper[key]
        if policy == POLICY_AVERAGED:
            out[key] = tuple(sorted(fields))
            continue
        primaries = sorted(f for f, p in fields.items() if p)
        if not primaries:
            dropped += 1
            continue
        if len(primaries) > 1:
            multi += 1
        out[key] = (primaries[0],)
    tag = next(iter(systems), "?")
    if dropped:
        logger.warning("%s: dropped %d papers without a primary field", tag, dropped)
    if multi:
        logger.warning("%s: %d papers with several primary fields, kept smallest field_id", tag, multi)
    return Resolution(out, dropped, multi)


@dataclass(frozen=True)
class SystemAssignments:
    """One system's resolved fields, keyed on canonical publication keys."""

    system: ClassificationSystemDescriptor
    fields: dict[str, tuple[str, ...]]
    n_fields_total: int
    unlinked_keys: int = 0
    dropped_no_primary: int = 0
    multiple_primaries: int = 0

    @property
    def system_id(self) -> str:
        return self.system.system_id

    def summary(self) -> dict:
        return {
            "system_id": self.system_id,
            "policy": self.system.assignment_policy,
            "namespace": self.system.identifier_namespace,
            "papers": len(self.fields),
            "fields_total": self.n_fields_total,
            "unlinked_keys": self.unlinked_keys,
            "dropped_no_primary": self.dropped_no_primary,
            "multiple_primaries": self.multiple_primaries,
        }


def link_assignments(corpus: Corpus, table: AssignmentTable) -> SystemAssignments:
    """Re-key a system's assignments on canonical keys, then resolve them."""
    ns = table.system.identifier_namespace
    linked = []
    unlinked = set()
    for a in table.assignments:
        key = corpus.lookup(ns, a.paper_key)
        if key is None:
            unlinked.add(a.paper_key)
            continue
        linked.append(FieldAssignment(a.system_id, key, a.field_id, a.is_primary))
    if unlinked:
        logger.info("%s: %d assignment keys not found in publications", table.system.system_id, len(unlinked))
    res = resolve_assignments(linked, table.system.assignment_policy)
    return SystemAssignments(
        table.system, res.fields, len(table.field_ids), len(unlinked), res.dropped_no_primary, res.multiple_primaries
    )


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldCoverage:
    system_id: str
    fields_total: int
    fields_retained: int

    @property
    def percent(self) -> float:
        return 100.0 * self.fields_retained / self.fields_total if self.fields_total else 0.0


@dataclass(frozen=True)
class MatchedDataset:
    systems: tuple[str, ...]
    papers: tuple[PublicationRecord, ...]
    fields: dict[str, dict[str, tuple[str, ...]]]
    match_mode: str
    coverage: tuple[FieldCoverage, ...] = ()

    @property
    def paper_keys(self) -> tuple[str, ...]:
        return tuple(p.key for p in self.papers)

    @property
    def label(self) -> str:
        return "+".join(self.systems) if self.match_mode == "full" else "-".join(self.systems)

    def __len__(self):
        return len(self.papers)


def _restrict(corpus: Corpus, systems: Sequence[SystemAssignments], keys: set[str], mode: str) -> MatchedDataset:
    ordered = sorted(keys)
    fields = {s.system_id: {k: s.fields[k] for k in ordered} for s in systems}
    coverage = tuple(
        FieldCoverage(s.system_id, s.n_fields_total, len({f for fs in fields[s.system_id].values() for f in fs}))
        for s in systems
    )
    return MatchedDataset(
        tuple(s.system_id for s in systems), tuple(corpus.by_key[k] for k in ordered), fields, mode, coverage
    )


def join_systems(corpus: Corpus, systems: Sequence[SystemAssignments], match_mode: str) -> list[MatchedDataset]:
    """Intersect the systems' paper sets.

    ``pairwise`` returns one dataset per unordered pair (in listing order);
    ``full`` returns a single dataset over the intersection of all systems.
    """
    if match_mode not in MATCH_MODES:
        raise ValueError(f"unknown match mode {match_mode!r}")
    if len(systems) < 2:
        raise ValueError("joining needs at least two systems")
    ids = [s.system_id for s in systems]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate system ids: {ids}")
    keysets = {s.system_id: set(s.fields) & corpus.by_key.keys() for s in systems}

    if match_mode == "pairwise":
        out = []
        for a, b in combinations(systems, 2):
            keys = keysets[a.system_id] & keysets[b.system_id]
            if not keys:
                raise ConsistencyError(f"empty intersection for pair {a.system_id}-{b.system_id}", module="corpus")
            out.append(_restrict(corpus, (a, b), keys, match_mode))
        return out

    keys = set(keysets[ids[0]])
    for i in range(1, len(systems)):
        nxt = keys & keysets[ids[i]]
        if not nxt:
            culprit = ids[0] if i == 1 else "+".join(ids[:i])
            raise ConsistencyError(f"empty intersection for pair {culprit}-{ids[i]}", module="corpus")
        keys = nxt
    return [_restrict(corpus, systems, keys, match_mode)]


def full_intersection(corpus: Corpus, systems: Sequence[SystemAssignments]) -> set[str]:
    keys = set(corpus.by_key)
    for s in systems:
        keys &= set(s.fields)
    return keys


# ---------------------------------------------------------------------------
# papers per field
# ---------------------------------------------------------------------------


def field_sizes(fields: Mapping[str, Sequence[str]]) -> dict[str, int]:
    """Number of papers per field, counting every (paper, field) membership."""
    sizes: Counter = Counter()
    for fs in fields.values():
        sizes.update(set(fs))
    return dict(sorted(sizes.items()))


def _median(sorted_values: Sequence[float]) -> float:
    n = len(sorted_values)
    mid = n // 2
    if n % 2:
        return sorted_values[mid]
    return (sorted_values[mid - 1] + sorted_values[mid]) / 2


def tukey_hinges(values: Sequence[float]) -> tuple[float, float, float]:
    """Lower hinge, median, upper hinge; the median joins both halves when n is odd."""
    v = sorted(values)
    n = len(v)
    if n == 0:
        raise ValueError("no values")
    half = (n + 1) // 2
    return _median(v[:half]), _median(v), _median(v[n - half:])


@dataclass(frozen=True)
class FieldSizeSummary:
    system_id: str
    n_fields: int
    total_memberships: int
    min: int
    q1: float
    median: float
    q3: float
    max: int
    lower_fence: float
    upper_fence: float
    whisker_low: int
    whisker_high: int
    outliers: tuple[tuple[str, int], ...]


def papers_per_field_summary(dataset: MatchedDataset, system_id: str) -> FieldSizeSummary:
    if not dataset.papers:
        raise ValueError("empty dataset")
    sizes = field_sizes(dataset.fields[system_id])
    return summarize_sizes(system_id, sizes)


def summarize_sizes(system_id: str, sizes: Mapping[str, int]) -> FieldSizeSummary:
    values = sorted(sizes.values())
    q1, med, q3 = tukey_hinges(values)
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = [v for v in values if lo <= v <= hi]
    outliers = tuple(sorted(((f, n) for f, n in sizes.items() if n < lo or n > hi), key=lambda t: (t[1], t[0])))
    return FieldSizeSummary(
        system_id, len(values), sum(values), values[0], q1, med, q3, values[-1], lo, hi,
        inside[0], inside[-1], outliers,
    )
