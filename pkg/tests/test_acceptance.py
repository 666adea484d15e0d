"""Acceptance criteria, one test each, printing a PASS/FAIL line per criterion.

Kappa values are banded after rounding to two decimals, so -0.004 reads as
0.00 and is "slight".

Run with ``pytest tests/test_acceptance.py -s`` to see only these lines; they
are printed even without ``-s``.
"""

import json
import os
import random
import time
from pathlib import Path

import numpy as np
import pytest

from ncsagree.agreement import ContingencyTable, interpret_kappa, lin_ccc, percent_agreement, weighted_kappa
from ncsagree.config import load_config
from ncsagree.corpus import Corpus, PublicationRecord, link_assignments, load_assignments
from ncsagree.css import assign_levels, compute_thresholds
from ncsagree.normalize import ReferenceSetStats, compute_ncs, mean_score_by_cell, ncs_for_system
from ncsagree.pipeline import run
from ncsagree.synth import SynthConfig, SynthSystem, generate_synthetic_corpus, load_bundled, write_synthetic
from oracles import css_brute, kappa_direct, four_class_weights


class Criterion:
    def __init__(self, number, title, capsys):
        self.title = f"[{number}] {title}"
        self.capsys = capsys
        self.failures = []
        self.reported = False

    def __call__(self, ok, detail=""):
        if not ok:
            self.failures.append(detail)

    def emit(self, ok, detail=""):
        self.reported = True
        with self.capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {self.title}" + (f" -- {detail}" if detail else ""))

    def done(self):
        self.emit(not self.failures, "; ".join(self.failures))
        assert not self.failures, "; ".join(self.failures)


@pytest.fixture
def report(capsys):
    made = []

    def start(number, title):
        made.append(Criterion(number, title, capsys))
        return made[-1]

    yield start
    for c in made:
        if not c.reported:
            c.emit(False, "aborted before all checks ran")


def test_criterion_1_lin_anchor(report):
    check = report(1, "Lin anchor lcc((1..10), (11..20)) = 0.142 +- 0.0005 in < 1 ms")
    x, y = np.arange(1, 11, dtype=float), np.arange(11, 21, dtype=float)
    lin_ccc(x, y)  # warm-up
    timings = []
    for _ in range(20):
        t0 = time.perf_counter()
        est = lin_ccc(x, y)
        timings.append(time.perf_counter() - t0)
    check(abs(est.value - 0.142) <= 0.0005, f"lcc = {est.value}")
    check(min(timings) < 1e-3, f"best runtime {min(timings) * 1e3:.3f} ms")
    check.done()


def test_criterion_2_ncs_anchor(report):
    check = report(2, "NCS anchor 3 / 10.67 rounds to 0.28")
    paper = {"p": PublicationRecord("10.1/p", None, None, 2010, 3)}
    # a reference set of 100 papers with 1067 citations has mean 10.67 exactly
    stats = {("F", 2010): ReferenceSetStats("S", "F", 2010, 100, 1067)}
    score = compute_ncs(paper, {"p": ("F",)}, stats, "S")["p"]
    check(round(score, 2) == 0.28, f"score {score}")
    # and a literal three-paper set 3, 10, 19 (mean 10.667) through the full scoring path
    papers = {k: PublicationRecord(f"10.1/{k}", None, None, 2010, c) for k, c in (("a", 3), ("b", 10), ("c", 19))}
    score = ncs_for_system(papers, {k: ("F",) for k in papers}, "S")["a"]
    check(round(score, 2) == 0.28, f"three-paper score {score}")
    check.done()


def test_criterion_3_kappa_oracle(report):
    check = report(3, "weighted kappa matches the direct p_o/p_e evaluation on 1000 tables to 1e-12 in < 5 s")
    rng = np.random.default_rng(20201014)
    tables = []
    for _ in range(1000):
        counts = rng.integers(0, 60, size=(4, 4))
        counts[rng.integers(4), rng.integers(4)] += 1
        tables.append(counts)
    t0 = time.perf_counter()
    estimates = [weighted_kappa(ContingencyTable(c), seed=i) for i, c in enumerate(tables)]
    elapsed = time.perf_counter() - t0
    worst = max(abs(e.value - kappa_direct(c.tolist(), four_class_weights())) for e, c in zip(estimates, tables))
    check(worst <= 1e-12, f"max deviation {worst:.3e}")
    check(elapsed < 5.0, f"runtime {elapsed:.2f} s (with 1000 bootstrap replicates per table)")
    check.done()


def test_criterion_4_independence_and_perfection(report):
    check = report(4, "uniform table kappa = 0, diagonal table kappa = 1 and percent = 1, lcc(x, x) = 1")
    k0 = weighted_kappa(ContingencyTable(np.full((4, 4), 10)), seed=1).value
    check(abs(k0) <= 1e-12, f"uniform kappa {k0}")
    diag = ContingencyTable(np.diag([25] * 4))
    k1 = weighted_kappa(diag, seed=1).value
    check(k1 == 1.0, f"diagonal kappa {k1}")
    check(percent_agreement(diag) == 1.0, "diagonal percent")
    x = np.random.default_rng(4).lognormal(size=500)
    check(lin_ccc(x, x).value == 1.0, "lcc(x, x)")
    check.done()


def _single_assignment_corpus(seed):
    rnd = random.Random(seed)
    systems = tuple(
        SynthSystem(f"S{j}", ns, policy, rnd.randint(2, 40), coverage=rnd.uniform(0.5, 1.0), noise=rnd.random())
        for j, (ns, policy) in enumerate((("doi", "primary-only"), ("ut", "all-assignments-averaged")))
    )
    cfg = SynthConfig(rnd.randint(50, 800), systems, seed=seed, mean_citations=rnd.choice([0.5, 3, 10, 40]))
    return generate_synthetic_corpus(cfg)


def _score_systems(synth, factor=1):
    recs = [PublicationRecord(p.doi, p.pmid, p.ut, p.pub_year, p.citations * factor) for p in synth.publications]
    corpus = Corpus.from_records(recs)
    out = []
    for d in synth.systems:
        rows = [{"paper_key": a.paper_key, "field_id": a.field_id, "is_primary": int(a.is_primary)}
                for a in synth.assignments[d.system_id]]
        linked = link_assignments(corpus, load_assignments(rows, d))
        out.append((linked, ncs_for_system(corpus.by_key, linked.fields, d.system_id), corpus))
    return out


def test_criterion_5_reference_set_invariant(report):
    check = report(5, "unit mean per reference set within 1e-12 on 100 corpora; scaling by 2 and 7 changes nothing")
    worst_mean = worst_scale = 0.0
    cells = 0
    for seed in range(100):
        synth = _single_assignment_corpus(seed)
        base = _score_systems(synth)
        for linked, table, corpus in base:
            assert all(len(fs) == 1 for fs in linked.fields.values())
            means = mean_score_by_cell(table, corpus.by_key, linked.fields)
            sums = {}
            for key, (f,) in linked.fields.items():
                cell = (f, corpus.by_key[key].pub_year)
                sums[cell] = sums.get(cell, 0) + corpus.by_key[key].citations
            for cell, m in means.items():
                if sums[cell] > 0:
                    cells += 1
                    worst_mean = max(worst_mean, abs(m - 1.0))
        for k in (2, 7):
            for (_, t0, _), (_, t1, _) in zip(base, _score_systems(synth, k)):
                worst_scale = max(worst_scale, max(abs(t0[p] - t1[p]) for p in t0.scores))
    check(cells > 1000, f"only {cells} cells checked")
    check(worst_mean <= 1e-12, f"max |mean - 1| {worst_mean:.3e}")
    check(worst_scale <= 1e-12, f"max scaling change {worst_scale:.3e}")
    check.done()


def test_criterion_6_css_oracle(report):
    check = report(6, "CSS thresholds and classes match brute force on 100 vectors (n <= 10000); monotone classes")
    rng = np.random.default_rng(6)
    bad_th = bad_cls = bad_mono = 0
    for i in range(100):
        n = int(rng.integers(1, 10_001)) if i else 10_000
        scores = rng.lognormal(0, rng.uniform(0.3, 1.5), n)
        scores[rng.random(n) < rng.uniform(0, 0.4)] = 0.0
        if i % 10 == 1:
            scores = np.round(scores, 1)  # ties on thresholds
        th = compute_thresholds(scores)
        levels = assign_levels(scores, th)
        means, classes = css_brute(scores.tolist())
        bad_th += not np.allclose(th.means, means, rtol=1e-12, atol=0)
        bad_cls += levels.tolist() != classes
        order = np.argsort(scores, kind="stable")
        bad_mono += not np.all(np.diff(levels[order]) >= 0)
    check(bad_th == 0, f"{bad_th} vectors with threshold mismatch")
    check(bad_cls == 0, f"{bad_cls} vectors with class mismatch")
    check(bad_mono == 0, f"{bad_mono} vectors not monotone")
    check.done()


def test_criterion_7_concordance_vs_correlation(report):
    check = report(7, "lcc < 1 with r = 1 on 1000 shifted pairs; |lcc| <= |r| on 1000 free pairs")
    rng = np.random.default_rng(7)
    shifted_bad = free_bad = 0
    for _ in range(1000):
        x = rng.normal(rng.uniform(-10, 10), rng.uniform(0.1, 10), int(rng.integers(3, 500)))
        c = rng.choice([-1, 1]) * rng.uniform(0.01, 10)
        lcc = lin_ccc(x, x + c, ci="none").value
        r = np.corrcoef(x, x + c)[0, 1]
        shifted_bad += not (lcc < 1 and abs(r - 1) <= 1e-12)
    for _ in range(1000):
        n = int(rng.integers(3, 500))
        x = rng.normal(size=n) * rng.uniform(0.1, 10)
        y = rng.uniform(-3, 3) * x + rng.normal(rng.uniform(-5, 5), rng.uniform(0.01, 10), n)
        lcc = lin_ccc(x, y, ci="none").value
        free_bad += not abs(lcc) <= abs(np.corrcoef(x, y)[0, 1])
    check(shifted_bad == 0, f"{shifted_bad} shifted pairs failed")
    check(free_bad == 0, f"{free_bad} free pairs with |lcc| > |r|")
    check.done()


def _tree(path):
    out = {}
    for dirpath, _, files in os.walk(path):
        for f in files:
            p = Path(dirpath) / f
            out[str(p.relative_to(path))] = p.read_bytes()
    return out


def test_criterion_8_end_to_end(report, tmp_path):
    check = report(8, "bundled 6-system corpus (>= 50000 papers) in < 60 s, 15 results, bands = tables, byte-identical")
    synth, settings = load_bundled()
    check(synth.n_papers >= 50_000, f"{synth.n_papers} papers")
    t0 = time.perf_counter()
    path = write_synthetic(generate_synthetic_corpus(synth), tmp_path / "corpus", settings)
    cfg = load_config(path)
    first = run(cfg.with_out(tmp_path / "a"))
    elapsed = time.perf_counter() - t0
    check(elapsed < 60, f"synth + run took {elapsed:.1f} s")
    check(len(first.results) == 15, f"{len(first.results)} pairwise results")

    by_pair = {(r.system_a, r.system_b): r.table.counts for r in first.results}
    for pos, (a, b) in enumerate(zip(cfg.order, cfg.order[1:])):
        table = np.zeros((4, 4), int)
        for band in first.bands:
            if band.position == pos:
                table[band.source_class - 1, band.target_class - 1] += band.count
        expected = by_pair[(a, b)] if (a, b) in by_pair else by_pair[(b, a)].T
        check(np.array_equal(table, expected), f"bands {a}->{b} differ from the contingency table")
    check(len({b.position for b in first.bands}) == 5, "expected five adjacent band sets")

    run(cfg.with_out(tmp_path / "b"))
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    check(a == b, f"outputs differ: {sorted(k for k in a if a.get(k) != b.get(k))}")
    rows = (tmp_path / "a" / "pairwise_agreement.csv").read_text().splitlines()
    check(len(rows) == 16, f"{len(rows) - 1} rows in pairwise_agreement.csv")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    check(manifest["seed"] == settings["seed"], "manifest seed")
    check.done()


def test_criterion_9_banding(report):
    check = report(9, "Landis-Koch labels at interior points and at the band boundaries")
    interior = {-0.3: "poor", 0.1: "slight", 0.3: "fair", 0.5: "moderate", 0.7: "substantial", 0.9: "almost perfect"}
    boundary = {0.00: "slight", 0.20: "slight", 0.40: "fair", 0.60: "moderate", 0.80: "substantial",
                -0.01: "poor", -0.004: "slight", 0.201: "slight", 0.21: "fair", 0.41: "moderate", 0.61: "substantial",
                0.81: "almost perfect", 1.0: "almost perfect"}
    for value, label in {**interior, **boundary}.items():
        got = interpret_kappa(value)
        check(got == label, f"{value}: {got} != {label}")
    check.done()
