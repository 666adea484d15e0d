"""Seeded synthetic corpora for tests and demo runs.

Each paper gets a latent topic position u in [0, 1). Citation rates vary by
topic, publication age and a per-paper quality factor. A classification
system cuts the unit circle into ``n_fields`` equal arcs starting at its own
random offset, so systems agree where their arcs line up; ``noise`` moves a
share of papers to a uniformly random field and ``extra_field_prob`` adds a
neighbouring second field (a secondary section under primary-only).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import (
    POLICY_PRIMARY,
    ClassificationSystemDescriptor,
    FieldAssignment,
    PublicationRecord,
    write_assignments,
    write_publications,
)
from .errors import ConfigError


@dataclass(frozen=True)
class SynthSystem:
    system_id: str
    namespace: str
    policy: str
    n_fields: int
    coverage: float = 1.0
    noise: float = 0.1
    extra_field_prob: float = 0.0

    @property
    def descriptor(self) -> ClassificationSystemDescriptor:
        return ClassificationSystemDescriptor(self.system_id, self.policy, self.namespace)


@dataclass(frozen=True)
class SynthConfig:
    n_papers: int
    systems: tuple[SynthSystem, ...]
    seed: int
    years: tuple[int, int] = (2006, 2011)
    mean_citations: float = 10.0
    dispersion: float = 1.5
    n_topics: int = 400
    topic_spread: float = 0.7
    doi_upper_prob: float = 0.2

    @classmethod
    def from_mapping(cls, raw: Mapping) -> "SynthConfig":
        raw = dict(raw)
        try:
            systems = tuple(SynthSystem(**s) for s in raw.pop("systems"))
            if "years" in raw:
                raw["years"] = tuple(raw["years"])
            return cls(systems=systems, **raw)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad synthetic corpus config: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["years"] = list(self.years)
        return d


@dataclass
class SyntheticCorpus:
    publications: list[PublicationRecord]
    assignments: dict[str, list[FieldAssignment]] = field(default_factory=dict)
    systems: list[ClassificationSystemDescriptor] = field(default_factory=list)


def _identifiers(i: int) -> tuple[str, str, str]:
    return f"10.5555/syn.{i:07d}", str(20_000_000 + i), f"WOS:{i:015d}"


def generate_synthetic_corpus(config: SynthConfig) -> SyntheticCorpus:
    if config.n_papers < 1:
        raise ConfigError("synthetic corpus needs at least one paper")
    if not config.systems:
        raise ConfigError("synthetic corpus needs at least one system")
    for s in config.systems:
        if s.n_fields < 1:
            raise ConfigError(f"system {s.system_id} needs at least one field")
    if config.mean_citations < 0:
        raise ConfigError("mean_citations must be >= 0")

    root = np.random.SeedSequence(config.seed)
    paper_ss, *system_ss = root.spawn(1 + len(config.systems))
    rng = np.random.default_rng(paper_ss)
    n = config.n_papers
    y0, y1 = config.years

    u = rng.random(n)
    years = rng.integers(y0, y1 + 1, size=n)
    topic_rate = rng.lognormal(0.0, config.topic_spread, config.n_topics)
    topic_rate /= topic_rate.mean()
    quality = rng.gamma(config.dispersion, 1.0 / config.dispersion, size=n)
    age = 1.0 + 0.3 * (y1 - years)
    lam = config.mean_citations * topic_rate[(u * config.n_topics).astype(int)] * quality * age / age.mean()
    citations = rng.poisson(lam)

    pubs = []
    for i in range(n):
        doi, pmid, ut = _identifiers(i)
        pubs.append(PublicationRecord(doi, pmid, ut, int(years[i]), int(citations[i])))

    out = SyntheticCorpus(pubs)
    for s, ss in zip(config.systems, system_ss):
        srng = np.random.default_rng(ss)
        offset = srng.random()
        base = (((u + offset) % 1.0) * s.n_fields).astype(int) % s.n_fields
        flip = srng.random(n) < s.noise
        base[flip] = srng.integers(0, s.n_fields, size=int(flip.sum()))
        covered = srng.random(n) < s.coverage
        extra = (srng.random(n) < s.extra_field_prob) & (s.n_fields > 1)
        step = np.where(srng.random(n) < 0.5, -1, 1)
        upper = srng.random(n) < config.doi_upper_prob
        width = len(str(s.n_fields - 1))
        primary_flag = s.policy == POLICY_PRIMARY

        rows = []
        for i in np.flatnonzero(covered):
            doi, pmid, ut = _identifiers(int(i))
            if s.namespace == "doi":
                key = doi.upper() if upper[i] else doi
            elif s.namespace == "pmid":
                key = pmid
            else:
                key = ut
            f0 = int(base[i])
            rows.append(FieldAssignment(s.system_id, key, f"{s.system_id}-{f0:0{width}d}", primary_flag))
            if extra[i]:
                f1 = (f0 + int(step[i])) % s.n_fields
                rows.append(FieldAssignment(s.system_id, key, f"{s.system_id}-{f1:0{width}d}", False))
        out.assignments[s.system_id] = rows
        out.systems.append(s.descriptor)
    return out


def write_synthetic(corpus: SyntheticCorpus, out_dir, run_settings: Mapping | None = None) -> Path:
    """Write publications, one assignment file per system and a run config.

    Returns the path of the run config, whose file paths are relative to it.
    """
    out_dir = Path(out_dir)
    (out_dir / "assignments").mkdir(parents=True, exist_ok=True)
    write_publications(corpus.publications, out_dir / "publications.csv")
    systems = []
    for d in corpus.systems:
        rel = f"assignments/{d.system_id}.csv"
        write_assignments(corpus.assignments[d.system_id], out_dir / rel)
        systems.append({
            "system_id": d.system_id,
            "namespace": d.identifier_namespace,
            "policy": d.assignment_policy,
            "assignments": rel,
        })
    config = {"publications": "publications.csv", "systems": systems}
    config.update(run_settings or {})
    path = out_dir / "run.json"
    path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def bundled_config_path() -> Path:
    return Path(__file__).with_name("data") / "synthetic6.json"


def load_bundled() -> tuple[SynthConfig, dict]:
    """The bundled six-system corpus settings and its run settings."""
    raw = json.loads(bundled_config_path().read_text(encoding="utf-8"))
    return SynthConfig.from_mapping(raw["corpus"]), raw.get("run", {})
