"""Rao-Stirling interdisciplinarity over per-year subfield distances.

The distance between two subfields in year t is 1 minus the cosine
similarity of their citing-profile rows in that year's subfield-level
citation count matrix. A paper's score sums d * R_m * R_n over ordered
pairs of distinct subfields cited by the paper, where R is the fraction
of its resolvable references attributed to each subfield.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, WorkRecord

DEFAULT_MIN_LINKS = 1000


@dataclass(slots=True)
class FieldDistanceMatrix:
    year: int
    subfield_ids: list[str]
    d: np.ndarray  # symmetric, zero diagonal, entries in [0, 1]
    pooled_window: bool = False

    def index(self) -> dict[str, int]:
        return {sid: i for i, sid in enumerate(self.subfield_ids)}


@dataclass(slots=True)
class RaoStirlingResult:
    work_id: str
    year: int
    score: float
    n_fields: int
    ref_count_used: int
    pooled_window: bool


def primary_subfield(work: WorkRecord) -> str | None:
    """Highest-share subfield, ties broken by smaller subfield id."""
    if not work.subfield_shares:
        return None
    return min(work.subfield_shares, key=lambda sid: (-work.subfield_shares[sid], sid))


def subfield_universe(corpus: Corpus) -> list[str]:
    ids = set()
    for w in corpus:
        ids.update(w.subfield_shares)
    return sorted(ids)


def field_citation_matrix(corpus: Corpus, years: Sequence[int],
                          subfield_ids: Sequence[str],
                          symmetric: bool = False) -> np.ndarray:
    """Counts of citing(primary subfield m, year in `years`) ->
    cited(primary subfield n) links, over the given subfield universe.
    With symmetric=True the transpose is added, turning rows into
    co-citation profiles."""
    idx = {sid: i for i, sid in enumerate(subfield_ids)}
    n = len(subfield_ids)
    counts = np.zeros((n, n), dtype=np.int64)
    year_set = set(years)
    for w in corpus:
        if w.year not in year_set:
            continue
        m = primary_subfield(w)
        if m is None or m not in idx:
            continue
        mi = idx[m]
        for rid in w.referenced_work_ids:
            cited = corpus.get(rid)
            if cited is None:
                continue
            nfield = primary_subfield(cited)
            if nfield is None or nfield not in idx:
                continue
            counts[mi, idx[nfield]] += 1
    if symmetric:
        counts = counts + counts.T
    return counts


def distances(matrix: np.ndarray, year: int, subfield_ids: Sequence[str],
              pooled_window: bool = False) -> FieldDistanceMatrix:
    """1 - cosine similarity between rows. All-zero rows are maximally
    distant from everything (d = 1 off-diagonal). The result is asserted
    to be a valid dissimilarity: symmetric, nonnegative, zero diagonal."""
    m = np.asarray(matrix, dtype=np.float64)
    norms = np.sqrt((m * m).sum(axis=1))
    nonzero = norms > 0
    safe = np.where(nonzero, norms, 1.0)
    unit = m / safe[:, None]
    sim = unit @ unit.T
    d = 1.0 - sim
    # zero rows: maximal distance to every other subfield
    d[~nonzero, :] = 1.0
    d[:, ~nonzero] = 1.0
    d = (d + d.T) / 2.0
    np.clip(d, 0.0, 1.0, out=d)
    np.fill_diagonal(d, 0.0)
    assert np.all(d >= 0.0) and np.all(d <= 1.0)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0.0)
    return FieldDistanceMatrix(year=year, subfield_ids=list(subfield_ids), d=d,
                               pooled_window=pooled_window)


def reference_shares(work: WorkRecord, corpus: Corpus,
                     fractional: bool = False) -> tuple[dict[str, float], int]:
    """R_m per subfield over the work's resolvable references, summing
    to 1. Default attributes each reference to its primary subfield;
    fractional mode spreads each reference over its share vector."""
    weights: Counter = Counter()
    used = 0
    for rid in work.referenced_work_ids:
        cited = corpus.get(rid)
        if cited is None or not cited.subfield_shares:
            continue
        used += 1
        if fractional:
            for sid, share in cited.subfield_shares.items():
                weights[sid] += share
        else:
            weights[primary_subfield(cited)] += 1.0
    total = sum(weights.values())
    if total <= 0:
        return {}, 0
    return {sid: w / total for sid, w in weights.items()}, used


def rao_stirling(work: WorkRecord, dmatrix: FieldDistanceMatrix, corpus: Corpus,
                 fractional: bool = False, unordered: bool = False,
                 ) -> RaoStirlingResult | None:
    """Rao-Stirling score of one work against its year's distance matrix.
    Ordered-pair summation by default (both (m,n) and (n,m) count);
    unordered mode halves the score. Returns None when no reference
    resolves to a subfield. Traversal order is fixed (sorted subfields)
    so accumulation is bitwise reproducible."""
    shares, used = reference_shares(work, corpus, fractional)
    if used == 0:
        return None
    idx = dmatrix.index()
    sids = sorted(shares)
    score = 0.0
    for a, m in enumerate(sids):
        mi = idx.get(m)
        if mi is None:
            continue
        for n in sids[a + 1:]:
            ni = idx.get(n)
            if ni is None:
                continue
            score += 2.0 * dmatrix.d[mi, ni] * shares[m] * shares[n]
    if unordered:
        score /= 2.0
    return RaoStirlingResult(work_id=work.work_id, year=work.year, score=score,
                             n_fields=len(sids), ref_count_used=used,
                             pooled_window=dmatrix.pooled_window)


def count_links(corpus: Corpus, year: int) -> int:
    n = 0
    for w in corpus:
        if w.year != year or primary_subfield(w) is None:
            continue
        for rid in w.referenced_work_ids:
            cited = corpus.get(rid)
            if cited is not None and cited.subfield_shares:
                n += 1
    return n


def build_distance_matrices(corpus: Corpus, min_links: int = DEFAULT_MIN_LINKS,
                            symmetric: bool = False, threads: int = 1,
                            ) -> dict[int, FieldDistanceMatrix]:
    """One distance matrix per corpus year. Years with fewer than
    min_links citing->cited links pool the two adjacent years and are
    flagged. Matrix building parallelizes over years; outputs are keyed
    by year so results are independent of scheduling."""
    universe = subfield_universe(corpus)
    years = corpus.years()
    links = {y: count_links(corpus, y) for y in years}

    def build(year: int) -> FieldDistanceMatrix:
        if links[year] >= min_links:
            window, pooled = [year], False
        else:
            window, pooled = [year - 1, year, year + 1], True
        counts = field_citation_matrix(corpus, window, universe, symmetric)
        return distances(counts, year, universe, pooled_window=pooled)

    out: dict[int, FieldDistanceMatrix] = {}
    if threads <= 1:
        for y in years:
            out[y] = build(y)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for y, dm in zip(years, pool.map(build, years)):
                out[y] = dm
    return out


def score_corpus(corpus: Corpus, min_links: int = DEFAULT_MIN_LINKS,
                 fractional: bool = False, unordered: bool = False,
                 symmetric: bool = False, threads: int = 1,
                 ) -> tuple[list[RaoStirlingResult], int]:
    """Rao-Stirling for every work with at least one resolvable
    reference; the count of excluded works is returned alongside."""
    matrices = build_distance_matrices(corpus, min_links, symmetric, threads)
    results: list[RaoStirlingResult] = []
    excluded = 0
    for w in corpus:
        res = rao_stirling(w, matrices[w.year], corpus, fractional, unordered)
        if res is None:
            excluded += 1
        else:
            results.append(res)
    return results, excluded
