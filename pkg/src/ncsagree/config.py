"""Declarative run configuration (JSON) and its validation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from .corpus import DEFAULT_YEAR_RANGE, MATCH_MODES, NAMESPACES, POLICIES, ClassificationSystemDescriptor
from .css import TRUNCATION_MODES
from .errors import ConfigError

CSS_POPULATIONS = ("analysis", "system")
LIN_CI_METHODS = ("fisher", "bootstrap", "none")

DEFAULTS = {
    "match_mode": "full",
    "css_iterations": 3,
    "css_truncation": "inclusive",
    "css_population": "analysis",
    "bootstrap": 1000,
    "seed": None,
    "lin_ci": "fisher",
    "freq_threshold": 5000,
    "out": "report",
    "workers": None,
    "alluvial_order": None,
    "year_range": list(DEFAULT_YEAR_RANGE),
    "write_dumps": True,
}


@dataclass(frozen=True)
class SystemConfig:
    descriptor: ClassificationSystemDescriptor
    assignments: Path
    assignments_as_given: str

    @property
    def system_id(self) -> str:
        return self.descriptor.system_id


@dataclass(frozen=True)
class RunConfig:
    publications: Path
    publications_as_given: str
    systems: tuple[SystemConfig, ...]
    match_mode: str = "full"
    css_iterations: int = 3
    css_truncation: str = "inclusive"
    css_population: str = "analysis"
    bootstrap: int = 1000
    seed: int | None = None
    lin_ci: str = "fisher"
    freq_threshold: int = 5000
    out: Path = Path("report")
    workers: int | None = None
    alluvial_order: tuple[str, ...] | None = None
    year_range: tuple[int, int] = DEFAULT_YEAR_RANGE
    write_dumps: bool = True
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def system_ids(self) -> tuple[str, ...]:
        return tuple(s.system_id for s in self.systems)

    @property
    def order(self) -> tuple[str, ...]:
        return self.alluvial_order or self.system_ids

    def with_out(self, out) -> "RunConfig":
        return replace(self, out=Path(out))

    def echo(self) -> dict:
        """Config as it affects results; output location and workers excluded."""
        return {
            "publications": self.publications_as_given,
            "systems": [
                {
                    "system_id": s.system_id,
                    "namespace": s.descriptor.identifier_namespace,
                    "policy": s.descriptor.assignment_policy,
                    "assignments": s.assignments_as_given,
                }
                for s in self.systems
            ],
            "match_mode": self.match_mode,
            "css_iterations": self.css_iterations,
            "css_truncation": self.css_truncation,
            "css_population": self.css_population,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
            "lin_ci": self.lin_ci,
            "freq_threshold": self.freq_threshold,
            "alluvial_order": list(self.order),
            "year_range": list(self.year_range),
        }


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def validate(raw: Mapping, base_dir=".", check_files: bool = True) -> list[str]:
    """Diagnostics for a raw config mapping; empty means the run can start."""
    base = Path(base_dir)
    diags: list[str] = []
    if not isinstance(raw, Mapping):
        return ["config: must be a JSON object"]
    known = set(DEFAULTS) | {"publications", "systems"}
    for key in sorted(set(raw) - known):
        diags.append(f"{key}: unknown setting")

    pubs = raw.get("publications")
    if not isinstance(pubs, str) or not pubs:
        diags.append("publications: missing path")
    elif check_files and not (base / pubs).is_file():
        diags.append(f"publications: file not found: {pubs}")

    systems = raw.get("systems")
    if not isinstance(systems, list):
        diags.append("systems: must be a list of system descriptors")
        systems = []
    elif len(systems) < 2:
        diags.append(f"systems: at least two systems required, got {len(systems)}")
    ids = []
    for i, s in enumerate(systems):
        if not isinstance(s, Mapping):
            diags.append(f"systems[{i}]: must be an object")
            continue
        sid = s.get("system_id")
        tag = f"systems[{i}] ({sid})" if sid else f"systems[{i}]"
        if not isinstance(sid, str) or not sid:
            diags.append(f"{tag}.system_id: missing")
        elif sid in ids:
            diags.append(f"{tag}.system_id: duplicate id {sid!r}")
        else:
            ids.append(sid)
        if s.get("namespace") not in NAMESPACES:
            diags.append(f"{tag}.namespace: must be one of {', '.join(NAMESPACES)}")
        if s.get("policy") not in POLICIES:
            diags.append(f"{tag}.policy: must be one of {', '.join(POLICIES)}")
        path = s.get("assignments")
        if not isinstance(path, str) or not path:
            diags.append(f"{tag}.assignments: missing path")
        elif check_files and not (base / path).is_file():
            diags.append(f"{tag}.assignments: file not found: {path}")
        for key in sorted(set(s) - {"system_id", "namespace", "policy", "assignments"}):
            diags.append(f"{tag}.{key}: unknown setting")

    def choice(key, options):
        if key in raw and raw[key] not in options:
            diags.append(f"{key}: must be one of {', '.join(options)}")

    choice("match_mode", MATCH_MODES)
    choice("css_truncation", TRUNCATION_MODES)
    choice("css_population", CSS_POPULATIONS)
    choice("lin_ci", LIN_CI_METHODS)

    def integer(key, minimum, nullable=False):
        if key not in raw or (nullable and raw[key] is None):
            return
        v = raw[key]
        if not _is_int(v) or v < minimum:
            diags.append(f"{key}: must be an integer >= {minimum}")

    integer("css_iterations", 1)
    integer("bootstrap", 0)
    integer("freq_threshold", 0)
    integer("workers", 1, nullable=True)
    integer("seed", 0, nullable=True)

    boot = raw.get("bootstrap", DEFAULTS["bootstrap"])
    uses_boot = _is_int(boot) and boot > 0
    if uses_boot and raw.get("seed") is None:
        diags.append("seed: required when bootstrap is enabled")

    order = raw.get("alluvial_order")
    if order is not None:
        if not isinstance(order, list) or len(order) != len(set(map(str, order))):
            diags.append("alluvial_order: must list each system at most once")
        else:
            for sid in order:
                if sid not in ids:
                    diags.append(f"alluvial_order: unknown system {sid!r}")
            if len(order) < 2:
                diags.append("alluvial_order: needs at least two systems")

    yr = raw.get("year_range")
    if yr is not None and not (isinstance(yr, list) and len(yr) == 2 and all(map(_is_int, yr)) and yr[0] <= yr[1]):
        diags.append("year_range: must be [first, last] integers")
    if "write_dumps" in raw and not isinstance(raw["write_dumps"], bool):
        diags.append("write_dumps: must be true or false")
    if "out" in raw and (not isinstance(raw["out"], str) or not raw["out"]):
        diags.append("out: must be a path")
    return diags


def from_mapping(raw: Mapping, base_dir=".", overrides: Mapping | None = None) -> RunConfig:
    """Validate and build a :class:`RunConfig`; overrides win over file values."""
    merged = dict(raw) if isinstance(raw, Mapping) else raw
    if isinstance(merged, dict):
        merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    diags = validate(merged, base_dir)
    if diags:
        raise ConfigError("invalid run configuration: " + "; ".join(diags), diags)
    base = Path(base_dir)
    cfg = {**DEFAULTS, **merged}
    systems = tuple(
        SystemConfig(
            ClassificationSystemDescriptor(s["system_id"], s["policy"], s["namespace"]),
            base / s["assignments"],
            s["assignments"],
        )
        for s in merged["systems"]
    )
    return RunConfig(
        publications=base / merged["publications"],
        publications_as_given=merged["publications"],
        systems=systems,
        match_mode=cfg["match_mode"],
        css_iterations=cfg["css_iterations"],
        css_truncation=cfg["css_truncation"],
        css_population=cfg["css_population"],
        bootstrap=cfg["bootstrap"],
        seed=cfg["seed"],
        lin_ci=cfg["lin_ci"],
        freq_threshold=cfg["freq_threshold"],
        out=base / cfg["out"],
        workers=cfg["workers"],
        alluvial_order=tuple(cfg["alluvial_order"]) if cfg["alluvial_order"] else None,
        year_range=tuple(cfg["year_range"]),
        write_dumps=cfg["write_dumps"],
        base_dir=base,
    )


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return raw


def load_config(path, overrides: Mapping | None = None) -> RunConfig:
    path = Path(path)
    return from_mapping(read_config_file(path), path.parent, overrides)
