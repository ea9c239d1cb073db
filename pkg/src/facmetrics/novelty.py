"""Per-paper novelty from atypical co-cited journal combinations.

A paper's references map to journals; every unordered pair of distinct
journals it co-cites is a combination. Observed pair frequencies in a
publication year are compared against a degree-preserving null in which
cited journal labels are permuted within strata of equal cited-work age,
giving a z-score per pair. A paper's novelty score is the 10th-percentile
z over its own pairs; the paper is novel when that score is below zero.

All randomness is driven by (master_seed, year, run_index) so results are
a pure function of the inputs, independent of thread count: per-run tallies
are integer maps merged by commutative addition.
"""

from __future__ import annotations

import math
import string
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, WorkRecord
from .errors import InputError

JournalPair = tuple[str, str]  # (lo, hi) with lo < hi


def make_pair(a: str, b: str) -> JournalPair:
    if a == b:
        raise ValueError(f"self-pair {a!r}")
    return (a, b) if a < b else (b, a)


@dataclass(slots=True)
class PairStat:
    year: int
    pair: JournalPair
    observed: int
    null_mean: float
    null_std: float
    z: float | None  # None when null_std == 0 or null absent

    @property
    def defined(self) -> bool:
        return self.z is not None


@dataclass(slots=True)
class NoveltyResult:
    work_id: str
    ns: float
    is_novel: bool
    n_pairs: int


@dataclass(slots=True)
class TermNoveltyResult:
    work_id: str
    new_word: bool
    new_phrase: bool


def reference_journals(work: WorkRecord, journal_of: Mapping[str, str]) -> list[str]:
    """Journals of the work's references, unknown journals dropped,
    reference order preserved."""
    out = []
    for rid in work.referenced_work_ids:
        j = journal_of.get(rid)
        if j is not None:
            out.append(j)
    return out


def pairs_from_journals(journals: Sequence[str], multiset: bool = False) -> Counter:
    """Unordered journal pairs for one paper.

    Distinct mode (default): one count per pair of distinct journals.
    Multiset mode: each pair of reference slots with different journals
    counts, so a paper citing A twice and B once yields AB twice."""
    counts = Counter()
    if multiset:
        tally = Counter(journals)
        for a, b in combinations(sorted(tally), 2):
            counts[(a, b)] = tally[a] * tally[b]
    else:
        for a, b in combinations(sorted(set(journals)), 2):
            counts[(a, b)] = 1
    return counts


def paper_pairs(work: WorkRecord, journal_of: Mapping[str, str],
                multiset: bool = False) -> Counter:
    """Multiset of journal pairs over the work's resolvable references.
    Fewer than two distinct journals yields an empty set."""
    return pairs_from_journals(reference_journals(work, journal_of), multiset)


def observed_counts(works: Iterable[WorkRecord], journal_of: Mapping[str, str],
                    year: int, multiset: bool = False) -> Counter:
    """Sum of pair multiplicities over all papers published in `year`."""
    total = Counter()
    for w in works:
        if w.year == year:
            total.update(paper_pairs(w, journal_of, multiset))
    return total


def _build_strata(works: Sequence[WorkRecord], journal_of: Mapping[str, str],
                  year_of: Mapping[str, int]) -> tuple[list[list[str]], list[tuple[int, int]], list[list[tuple[int, int]]]]:
    """Group the reference slots of `works` by cited-work publication year.

    Returns per-stratum journal label lists, per-slot (paper_idx, ref_idx)
    addresses flattened per stratum, and per-paper slot addresses. Cited
    works with no known year pool into one stratum."""
    strata_labels: dict[object, list[str]] = defaultdict(list)
    strata_slots: dict[object, list[tuple[int, int]]] = defaultdict(list)
    paper_slots: list[list[tuple[int, int]]] = []
    for pi, w in enumerate(works):
        slots = []
        k = 0
        for rid in w.referenced_work_ids:
            j = journal_of.get(rid)
            if j is None:
                continue
            key = year_of.get(rid)  # None pools unknown-age references
            strata_labels[key].append(j)
            strata_slots[key].append((pi, k))
            slots.append((pi, k))
            k += 1
        paper_slots.append(slots)
    # fixed stratum order: known years ascending, pooled stratum last
    keys = sorted((k for k in strata_labels if k is not None)) + (
        [None] if None in strata_labels else []
    )
    labels = [strata_labels[k] for k in keys]
    flat_slots = [strata_slots[k] for k in keys]
    return labels, paper_slots, flat_slots


def _run_tally(strata_labels: list[list[str]],
               strata_slots: list[list[tuple[int, int]]],
               paper_refcount: list[int],
               rng: np.random.Generator,
               multiset: bool) -> Counter:
    """One rewiring run: permute labels within each stratum, rebuild each
    paper's journal list, tally pairs."""
    per_paper: list[list[str | None]] = [[None] * n for n in paper_refcount]
    for labels, slots in zip(strata_labels, strata_slots):
        if len(labels) > 1:
            order = rng.permutation(len(labels))
            shuffled = [labels[i] for i in order]
        else:
            shuffled = labels
        for (pi, ki), j in zip(slots, shuffled):
            per_paper[pi][ki] = j
    tally = Counter()
    for journals in per_paper:
        if len(journals) >= 2:
            tally.update(pairs_from_journals(journals, multiset))  # type: ignore[arg-type]
    return tally


def rewire_null(works: Sequence[WorkRecord], journal_of: Mapping[str, str],
                year_of: Mapping[str, int], year: int, runs: int, seed: int,
                multiset: bool = False, threads: int = 1,
                ) -> dict[JournalPair, tuple[float, float]]:
    """Monte-Carlo null pair frequencies for papers published in `year`.

    Each run permutes cited journal labels within (citing year, cited
    publication year) strata, preserving per-paper reference counts and
    per-journal per-stratum citation totals, then re-tallies pair counts.
    Returns pair -> (mean, std) over runs, std with denominator runs-1.
    Pairs never formed in any run are absent from the map.

    Output is a pure function of (works, maps, year, runs, seed): runs are
    seeded independently and merged by integer addition."""
    if runs < 2:
        raise InputError(f"rewire_null requires runs >= 2, got {runs}")
    works_year = [w for w in works if w.year == year]
    strata_labels, paper_slots, strata_slots = _build_strata(works_year, journal_of, year_of)
    paper_refcount = [len(s) for s in paper_slots]

    def run_range(run_indices: Sequence[int]) -> tuple[Counter, Counter]:
        s, sq = Counter(), Counter()
        for r in run_indices:
            rng = np.random.default_rng((seed, year, r))
            tally = _run_tally(strata_labels, strata_slots, paper_refcount, rng, multiset)
            for pair, c in tally.items():
                s[pair] += c
                sq[pair] += c * c
        return s, sq

    sums, sumsqs = Counter(), Counter()
    if threads <= 1:
        sums, sumsqs = run_range(range(runs))
    else:
        chunks = [list(range(runs))[i::threads] for i in range(threads)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for s, sq in pool.map(run_range, [c for c in chunks if c]):
                sums.update(s)
                sumsqs.update(sq)

    null: dict[JournalPair, tuple[float, float]] = {}
    for pair in sums:
        s = sums[pair]
        sq = sumsqs[pair]
        mean = s / runs
        var = (sq - s * s / runs) / (runs - 1)
        null[pair] = (mean, math.sqrt(max(var, 0.0)))
    return null


def pair_z(observed: Mapping[JournalPair, int],
           null: Mapping[JournalPair, tuple[float, float]],
           year: int) -> dict[JournalPair, PairStat]:
    """z-scores per pair over the union of observed and null pairs.
    Pairs with zero null std, or observed but absent from the null, are
    flagged undefined (z = None) and excluded from percentile input."""
    stats: dict[JournalPair, PairStat] = {}
    for pair in set(observed) | set(null):
        obs = observed.get(pair, 0)
        if pair in null:
            mean, std = null[pair]
            z = (obs - mean) / std if std > 0 else None
        else:
            mean, std, z = 0.0, 0.0, None
        stats[pair] = PairStat(year=year, pair=pair, observed=obs,
                               null_mean=mean, null_std=std, z=z)
    return stats


def nearest_rank_percentile(values: Sequence[float], q: float) -> float:
    """q-quantile by the nearest-rank rule: element at 1-based index
    ceil(q * k) of the ascending sort. Always a member of `values`."""
    if not values:
        raise ValueError("empty input")
    ordered = sorted(values)
    idx = max(1, math.ceil(q * len(ordered)))
    return ordered[idx - 1]


def novelty_score(work: WorkRecord, stats: Mapping[JournalPair, PairStat],
                  journal_of: Mapping[str, str], multiset: bool = False,
                  percentile_rule: str = "nearest_rank") -> NoveltyResult | None:
    """10th-percentile z over the work's own pairs; novel iff strictly
    below zero. Returns None when the work has no pair with a defined z."""
    zs: list[float] = []
    for pair, mult in paper_pairs(work, journal_of, multiset).items():
        st = stats.get(pair)
        if st is not None and st.z is not None:
            zs.extend([st.z] * mult)
    if not zs:
        return None
    if percentile_rule == "nearest_rank":
        ns = nearest_rank_percentile(zs, 0.10)
    elif percentile_rule == "linear":
        ns = float(np.percentile(zs, 10, method="linear"))
    else:
        raise InputError(f"unknown percentile rule: {percentile_rule}")
    return NoveltyResult(work_id=work.work_id, ns=ns, is_novel=ns < 0, n_pairs=len(zs))


def score_year(works: Sequence[WorkRecord], journal_of: Mapping[str, str],
               year_of: Mapping[str, int], year: int, runs: int, seed: int,
               multiset: bool = False, percentile_rule: str = "nearest_rank",
               threads: int = 1) -> tuple[list[NoveltyResult], int]:
    """Full novelty pass for one publication year. Returns the results
    plus the count of works left unscored (no defined pair)."""
    works_year = [w for w in works if w.year == year]
    observed = observed_counts(works_year, journal_of, year, multiset)
    null = rewire_null(works_year, journal_of, year_of, year, runs, seed,
                       multiset, threads)
    stats = pair_z(observed, null, year)
    results: list[NoveltyResult] = []
    unscored = 0
    for w in works_year:
        res = novelty_score(w, stats, journal_of, multiset, percentile_rule)
        if res is None:
            unscored += 1
        else:
            results.append(res)
    return results, unscored


def score_corpus(corpus: Corpus, runs: int, seed: int, multiset: bool = False,
                 percentile_rule: str = "nearest_rank", threads: int = 1,
                 ) -> tuple[list[NoveltyResult], dict[int, int]]:
    """Novelty for every year of the corpus. Years are independent work
    units; results are concatenated in year order so output does not
    depend on scheduling."""
    journal_of = {w.work_id: w.journal_id for w in corpus if w.journal_id is not None}
    year_of = {w.work_id: w.year for w in corpus}
    works = list(corpus)
    years = corpus.years()

    def one_year(y: int) -> tuple[list[NoveltyResult], int]:
        return score_year(works, journal_of, year_of, y, runs, seed,
                          multiset, percentile_rule, threads=1)

    per_year: dict[int, tuple[list[NoveltyResult], int]] = {}
    if threads <= 1:
        for y in years:
            per_year[y] = one_year(y)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for y, out in zip(years, pool.map(one_year, years)):
                per_year[y] = out

    results: list[NoveltyResult] = []
    unscored: dict[int, int] = {}
    for y in years:
        res, n_unscored = per_year[y]
        results.extend(sorted(res, key=lambda r: r.work_id))
        unscored[y] = n_unscored
    return results, unscored


_PUNCT = string.punctuation


def title_words(work: WorkRecord) -> list[str]:
    """Filtered word sequence: punctuation stripped, length >= 3."""
    words = []
    for tok in work.title_tokens:
        cleaned = tok.strip(_PUNCT)
        if len(cleaned) >= 3:
            words.append(cleaned)
    return words


def detect_new_terms(corpus: Corpus) -> list[TermNoveltyResult]:
    """First-use flags for title words and adjacent-word phrases,
    scoped to the ingested corpus. A work is flagged when some word
    (or bigram) of its title is absent from all strictly earlier years;
    every first-year user of a term gets the flag."""
    ordered = sorted(corpus, key=lambda w: (w.year, w.work_id))
    first_word_year: dict[str, int] = {}
    first_phrase_year: dict[tuple[str, str], int] = {}
    per_work: list[tuple[str, int, list[str], list[tuple[str, str]]]] = []
    for w in ordered:
        words = title_words(w)
        phrases = list(zip(words, words[1:]))
        per_work.append((w.work_id, w.year, words, phrases))
        for t in words:
            if t not in first_word_year or w.year < first_word_year[t]:
                first_word_year[t] = w.year
        for p in phrases:
            if p not in first_phrase_year or w.year < first_phrase_year[p]:
                first_phrase_year[p] = w.year

    results = []
    for wid, year, words, phrases in per_work:
        new_word = any(first_word_year[t] == year for t in words)
        new_phrase = any(first_phrase_year[p] == year for p in phrases)
        results.append(TermNoveltyResult(work_id=wid, new_word=new_word,
                                         new_phrase=new_phrase))
    return results
