"""Agreement between two classification systems.

Categorical agreement works on CSS class vectors (contingency table, share of
papers on the diagonal, weighted Kappa). Continuous agreement works on the
score vectors (Lin's concordance coefficient).
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from itertools import combinations
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from .css import CssThresholds, assign_levels, compute_thresholds
from .errors import DegeneracyError

KAPPA_BANDS = (
    (Decimal("0.20"), "slight"),
    (Decimal("0.40"), "fair"),
    (Decimal("0.60"), "moderate"),
    (Decimal("0.80"), "substantial"),
    (Decimal("1.00"), "almost perfect"),
)


@dataclass(frozen=True)
class Estimate:
    value: float
    ci_low: float | None = None
    ci_high: float | None = None
    method: str = "none"

    @property
    def ci(self):
        return None if self.ci_low is None else (self.ci_low, self.ci_high)


# ---------------------------------------------------------------------------
# tables and weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    counts: np.ndarray
    row_label: str = "A"
    col_label: str = "B"

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"contingency table must be square, got shape {c.shape}")
        if np.any(c < 0):
            raise ValueError("negative counts")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def transpose(self) -> "ContingencyTable":
        return ContingencyTable(self.counts.T.copy(), self.col_label, self.row_label)

    def __eq__(self, other):
        return (
            isinstance(other, ContingencyTable)
            and np.array_equal(self.counts, other.counts)
            and (self.row_label, self.col_label) == (other.row_label, other.col_label)
        )


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.values, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("weight matrix must be square")
        if not np.array_equal(w, w.T):
            raise ValueError("weight matrix must be symmetric")
        if not np.all(np.diag(w) == 1.0):
            raise ValueError("weight matrix diagonal must be 1")
        if np.any(w < 0) or np.any(w > 1):
            raise ValueError("weights must lie in [0, 1]")
        object.__setattr__(self, "values", w)

    @classmethod
    def linear(cls, k: int = 4) -> "WeightMatrix":
        """Agreement weights 1 - |i - j| / k; k = 4 gives 1, .75, .5, .25.

        Kappa is unchanged by any affine rescaling that keeps the diagonal at
        1, so this matches Cohen's linear weights 1 - |i - j| / (k - 1).
        """
        if k < 2:
            raise ValueError("need at least two categories")
        i = np.arange(k)
        return cls(1.0 - np.abs(i[:, None] - i[None, :]) / k)

    @property
    def k(self) -> int:
        return self.values.shape[0]


def contingency(classes_a, classes_b, k: int = 4, labels=("A", "B")) -> ContingencyTable:
    """Cross-tabulate two class vectors with levels 1..k."""
    a = np.asarray(classes_a)
    b = np.asarray(classes_b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"class vectors differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("empty class vectors")
    for v in (a, b):
        if not np.issubdtype(v.dtype, np.integer):
            if not np.all(np.equal(np.mod(v, 1), 0)):
                raise ValueError("class levels must be integers")
        if v.min() < 1 or v.max() > k:
            raise ValueError(f"class level out of range 1..{k}")
    idx = (a.astype(np.int64) - 1) * k + (b.astype(np.int64) - 1)
    counts = np.bincount(idx, minlength=k * k).reshape(k, k)
    return ContingencyTable(counts, *labels)


def percent_agreement(table: ContingencyTable) -> float:
    """Share of papers on the diagonal."""
    total = table.total
    if total == 0:
        raise DegeneracyError("percent agreement of an empty table")
    return int(np.trace(table.counts)) / total


# ---------------------------------------------------------------------------
# weighted kappa
# ---------------------------------------------------------------------------


def _kappa_from_props(p: np.ndarray, w: np.ndarray) -> float:
    po = float((w * p).sum())
    pe = float(p.sum(axis=1) @ w @ p.sum(axis=0))
    if pe >= 1.0:
        if po >= 1.0:
            return 1.0
        raise DegeneracyError("weighted kappa undefined: expected agreement is 1")
    return (po - pe) / (1.0 - pe)


def kappa_point(table: ContingencyTable, weights: WeightMatrix | None = None) -> float:
    weights = weights or WeightMatrix.linear(table.k)
    if weights.k != table.k:
        raise ValueError(f"weights are {weights.k}x{weights.k}, table is {table.k}x{table.k}")
    n = table.total
    if n == 0:
        raise DegeneracyError("weighted kappa of an empty table")
    return _kappa_from_props(table.counts / n, weights.values)


def _bootstrap_kappa(table: ContingencyTable, w: np.ndarray, n_boot: int, rng: np.random.Generator) -> np.ndarray:
    n = table.total
    k = table.k
    p = (table.counts / n).ravel()
    draws = rng.multinomial(n, p, size=n_boot).reshape(n_boot, k, k) / n
    po = np.einsum("bij,ij->b", draws, w)
    pe = np.einsum("bi,ij,bj->b", draws.sum(axis=2), w, draws.sum(axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        kap = (po - pe) / (1.0 - pe)
    degenerate = pe >= 1.0
    kap[degenerate] = np.where(po[degenerate] >= 1.0, 1.0, np.nan)
    return kap


def _percentile_ci(samples: np.ndarray, point: float, confidence: float) -> tuple[float, float]:
    samples = samples[np.isfinite(samples)]
    if samples.size == 0:
        return point, point
    alpha = (1.0 - confidence) / 2
    lo, hi = np.percentile(samples, [100 * alpha, 100 * (1 - alpha)])
    # a percentile interval can miss the point estimate on tiny or lopsided tables
    return min(float(lo), point), max(float(hi), point)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def weighted_kappa(
    table: ContingencyTable,
    weights: WeightMatrix | None = None,
    n_boot: int = 1000,
    seed=0,
    confidence: float = 0.95,
) -> Estimate:
    """Agreement-weighted Kappa with a percentile bootstrap interval.

    kappa = (p_o - p_e) / (1 - p_e), where p_o sums the weighted cell shares
    and p_e the weighted products of the marginal shares. Replicates resample
    papers, i.e. draw the table from a multinomial over its cell shares.
    ``n_boot=0`` skips the interval.
    """
    weights = weights or WeightMatrix.linear(table.k)
    point = kappa_point(table, weights)
    if n_boot <= 0:
        return Estimate(point)
    samples = _bootstrap_kappa(table, weights.values, n_boot, _rng(seed))
    lo, hi = _percentile_ci(samples, point, confidence)
    return Estimate(point, lo, hi, "bootstrap-percentile")


# ---------------------------------------------------------------------------
# Lin's concordance coefficient
# ---------------------------------------------------------------------------


def _moments(x: np.ndarray, y: np.ndarray):
    mx, my = x.mean(axis=-1, keepdims=True), y.mean(axis=-1, keepdims=True)
    dx, dy = x - mx, y - my
    sxx = (dx * dx).mean(axis=-1)
    syy = (dy * dy).mean(axis=-1)
    sxy = (dx * dy).mean(axis=-1)
    diff = (mx - my)[..., 0]
    return sxx, syy, sxy, diff


def lin_fisher_variance(lcc: float, sxx: float, syy: float, sxy: float, diff: float, n: int) -> float:
    """Asymptotic variance of atanh(lcc) after Lin (1989).

    Rewritten in terms of the population moments so it stays finite when the
    Pearson correlation is 0 or one vector is constant.
    """
    d = sxx + syy + diff * diff
    p2 = lcc * lcc
    one_m = 1.0 - p2
    cb2 = 4.0 * sxx * syy / (d * d)          # squared bias-correction factor
    cbu2 = 2.0 * diff * diff / d              # bias-correction factor times squared location shift
    var = (
        (cb2 - p2) / one_m
        + 2.0 * p2 * (1.0 - lcc) * cbu2 / (one_m * one_m)
        - p2 * cbu2 * cbu2 / (2.0 * one_m * one_m)
    ) / (n - 2)
    return max(var, 0.0)


def lin_ccc(x, y, ci: str = "fisher", n_boot: int = 1000, seed=0, confidence: float = 0.95) -> Estimate:
    """Lin's concordance coefficient with population (1/n) moments.

    ``ci`` is ``"fisher"`` (asymptotic interval on the z scale),
    ``"bootstrap"`` (percentile interval over resampled papers) or ``"none"``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"score vectors differ in length: {x.shape} vs {y.shape}")
    n = x.size
    if n < 2:
        raise ValueError("need at least two paired values")
    sxx, syy, sxy, diff = (float(v) for v in _moments(x, y))
    if sxx == 0.0 and syy == 0.0:
        raise DegeneracyError("concordance undefined: both score vectors are constant")
    lcc = 2.0 * sxy / (sxx + syy + diff * diff)

    if ci == "none":
        return Estimate(lcc)
    if ci == "fisher":
        if abs(lcc) >= 1.0:
            return Estimate(lcc, lcc, lcc, "fisher-z")
        if n <= 2:
            return Estimate(lcc, -1.0, 1.0, "fisher-z")
        se = math.sqrt(lin_fisher_variance(lcc, sxx, syy, sxy, diff, n))
        zc = NormalDist().inv_cdf(1.0 - (1.0 - confidence) / 2)
        z = math.atanh(lcc)
        return Estimate(lcc, math.tanh(z - zc * se), math.tanh(z + zc * se), "fisher-z")
    if ci == "bootstrap":
        if n_boot <= 0:
            return Estimate(lcc)
        samples = _bootstrap_lin(x, y, n_boot, _rng(seed))
        lo, hi = _percentile_ci(samples, lcc, confidence)
        return Estimate(lcc, lo, hi, "bootstrap-percentile")
    raise ValueError(f"unknown CI method {ci!r}")


def _bootstrap_lin(x: np.ndarray, y: np.ndarray, n_boot: int, rng: np.random.Generator) -> np.ndarray:
    n = x.size
    chunk = max(1, 4_000_000 // n)
    out = np.empty(n_boot)
    done = 0
    while done < n_boot:
        m = min(chunk, n_boot - done)
        idx = rng.integers(0, n, size=(m, n))
        sxx, syy, sxy, diff = _moments(x[idx], y[idx])
        denom = sxx + syy + diff * diff
        with np.errstate(divide="ignore", invalid="ignore"):
            out[done:done + m] = np.where(denom > 0, 2.0 * sxy / denom, np.nan)
        done += m
    return out


# ---------------------------------------------------------------------------
# interpretation
# ---------------------------------------------------------------------------


def interpret_kappa(value: float) -> str:
    """Landis-Koch band of a Kappa value, after rounding to two decimals."""
    v = float(value)
    if not math.isfinite(v) or not -1.0 - 1e-9 <= v <= 1.0 + 1e-9:
        raise ValueError(f"kappa out of range: {value!r}")
    d = Decimal(repr(v)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    if d < 0:
        return "poor"
    for upper, label in KAPPA_BANDS:
        if d <= upper:
            return label
    return KAPPA_BANDS[-1][1]


# ---------------------------------------------------------------------------
# pairwise comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgreementResult:
    system_a: str
    system_b: str
    n: int
    table: ContingencyTable
    percent_agreement: float
    kappa: Estimate
    kappa_band: str
    lcc: Estimate
    thresholds_a: CssThresholds
    thresholds_b: CssThresholds
    match_mode: str = "pairwise"
    seed: int | None = None
    n_boot: int = 0


def pair_seed(seed: int, a: str, b: str) -> np.random.SeedSequence:
    """Independent, reproducible stream per system pair."""
    return np.random.SeedSequence([int(seed), zlib.crc32(a.encode()), zlib.crc32(b.encode())])


def compare_pair(
    a: str,
    b: str,
    scores_a,
    scores_b,
    css_iterations: int = 3,
    css_truncation: str = "inclusive",
    thresholds_a: CssThresholds | None = None,
    thresholds_b: CssThresholds | None = None,
    weights: WeightMatrix | None = None,
    n_boot: int = 1000,
    seed: int = 0,
    lin_ci: str = "fisher",
    match_mode: str = "pairwise",
) -> AgreementResult:
    """All agreement statistics for one pair of aligned score vectors.

    CSS thresholds are computed on the given population unless passed in.
    """
    sa = np.asarray(scores_a, dtype=float)
    sb = np.asarray(scores_b, dtype=float)
    th_a = thresholds_a or compute_thresholds(sa, css_iterations, css_truncation)
    th_b = thresholds_b or compute_thresholds(sb, css_iterations, css_truncation)
    k = th_a.n_classes
    if th_b.n_classes != k:
        raise ValueError("both systems need the same number of CSS classes")
    table = contingency(assign_levels(sa, th_a), assign_levels(sb, th_b), k, (a, b))
    kappa_ss, lin_ss = pair_seed(seed, a, b).spawn(2)
    kappa = weighted_kappa(table, weights, n_boot=n_boot, seed=np.random.default_rng(kappa_ss))
    lcc = lin_ccc(sa, sb, ci=lin_ci, n_boot=n_boot, seed=np.random.default_rng(lin_ss))
    return AgreementResult(
        a, b, table.total, table, percent_agreement(table), kappa, interpret_kappa(kappa.value), lcc,
        th_a, th_b, match_mode, seed if n_boot > 0 else None, max(n_boot, 0),
    )


def pairwise_compare(
    ncs: Mapping[str, Mapping[str, float]],
    systems: Sequence[str],
    paper_keys=None,
    pairs: Sequence[tuple[str, str]] | None = None,
    match_mode: str = "pairwise",
    css_iterations: int = 3,
    css_truncation: str = "inclusive",
    fixed_thresholds: Mapping[str, CssThresholds] | None = None,
    weights: WeightMatrix | None = None,
    n_boot: int = 1000,
    seed: int = 0,
    lin_ci: str = "fisher",
    workers: int | None = None,
) -> list[AgreementResult]:
    """Compare every unordered pair of ``systems`` (or the explicit ``pairs``).

    ``ncs`` maps system ids to paper -> score mappings (an NcsTable's
    ``scores``). ``paper_keys`` selects the analysed papers: one sequence for
    every pair (full match), a mapping from pair to sequence, or ``None`` for
    the papers the pair has in common. Results come back in pair order and do
    not depend on ``workers``.
    """
    if pairs is None:
        if len(systems) < 2:
            raise ValueError("pairwise comparison needs at least two systems")
        pairs = list(combinations(systems, 2))
    for a, b in pairs:
        for s in (a, b):
            if s not in ncs:
                raise ValueError(f"no scores for system {s!r}")

    def keys_for(a, b):
        if paper_keys is None:
            return sorted(ncs[a].keys() & ncs[b].keys())
        if isinstance(paper_keys, Mapping):
            return list(paper_keys[(a, b)])
        return list(paper_keys)

    fixed = fixed_thresholds or {}

    def one(pair):
        a, b = pair
        keys = keys_for(a, b)
        if not keys:
            raise DegeneracyError(f"no shared papers for pair {a}-{b}")
        sa = [ncs[a][k] for k in keys]
        sb = [ncs[b][k] for k in keys]
        return compare_pair(
            a, b, sa, sb, css_iterations, css_truncation, fixed.get(a), fixed.get(b), weights,
            n_boot, seed, lin_ci, match_mode,
        )

    if workers == 1 or len(pairs) == 1:
        return [one(p) for p in pairs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, pairs))
