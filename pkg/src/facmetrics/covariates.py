"""Regression observation rows: outcomes, facility regressors, team and
journal controls, and fixed-effect group ids.

All logged quantities are natural logs of strictly positive values;
h-index fields use log(h + 1) to absorb zero h. Works missing any
required control are excluded and itemized by cause, so emitted rows
plus exclusions always account for the whole corpus.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .corpus import Corpus, WorkRecord
from .errors import InputError

LEADERSHIP_LEVELS = ("mixed", "all_north", "all_south")

# Exclusion causes in attribution order: a work failing several checks is
# counted once, under the first.
EXCLUSION_CAUSES = (
    "no_authors",
    "no_institutions",
    "no_countries",
    "no_references",
    "leadership_unmapped",
    "career_age_missing",
    "institution_h_missing",
    "journal_unknown",
    "no_discipline",
    "no_domain",
)


@dataclass(slots=True)
class CovariateRow:
    work_id: str
    novelty_dv: bool | None
    rs_dv: float | None
    new_word_dv: bool | None
    new_phrase_dv: bool | None
    bsf: bool
    n_facilities: int
    log_authors: float
    log_institutions: float
    log_countries: float
    log_references: float
    leadership: str
    log_avg_career_age: float
    log_avg_inst_h: float
    log_journal_h: float
    core_journal: bool
    fe_author: str
    fe_year: int
    fe_discipline: str
    domain: str


def load_north_south(path: str | Path | None = None) -> dict[str, str]:
    """country_code -> north/south map; default table ships with the
    package and follows the UN M49 developed/developing grouping."""
    if path is None:
        text = resources.files("facmetrics.data").joinpath("north_south.csv").read_text("utf-8")
        lines = text.splitlines()
    else:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    out: dict[str, str] = {}
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"country_code", "group"}.issubset(reader.fieldnames):
        raise InputError("north/south map needs header country_code,group")
    for row in reader:
        group = row["group"].strip().lower()
        if group not in ("north", "south"):
            raise InputError(f"bad north/south group {group!r}")
        out[row["country_code"].strip().upper()] = group
    return out


def load_field_domains(path: str | Path | None = None) -> dict[str, str]:
    """field_id -> domain (physical/life/health/social); defaults ship
    with the package for the 26-field universe."""
    if path is None:
        text = resources.files("facmetrics.data").joinpath("field_domains.csv").read_text("utf-8")
        lines = text.splitlines()
    else:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    out: dict[str, str] = {}
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"field_id", "domain"}.issubset(reader.fieldnames):
        raise InputError("field/domain map needs header field_id,domain (name optional)")
    for row in reader:
        domain = row["domain"].strip().lower()
        if domain not in ("physical", "life", "health", "social"):
            raise InputError(f"bad domain {domain!r}")
        out[row["field_id"].strip()] = domain
    return out


def load_core_journals(path: str | Path | None) -> frozenset[str]:
    """One journal id per line; comments with #. Unlisted journals are
    simply non-core."""
    if path is None:
        return frozenset()
    ids = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            ids.add(stripped)
    return frozenset(ids)


def field_of_subfield(subfield_id: str) -> str | None:
    """Top-level field of a subfield id. Subfield ids follow the
    4-digit convention where the leading two digits name the field."""
    if len(subfield_id) == 4 and subfield_id.isdigit():
        return subfield_id[:2]
    return None


def classify_leadership(first_country: str, last_country: str,
                        ns_map: Mapping[str, str]) -> str | None:
    """Leadership category from the first and last author's countries.
    Returns None when either country is unmapped (row gets flagged)."""
    a = ns_map.get(first_country)
    b = ns_map.get(last_country)
    if a is None or b is None:
        return None
    if a == "north" and b == "north":
        return "all_north"
    if a == "south" and b == "south":
        return "all_south"
    return "mixed"


def build_first_year_index(corpus: Corpus) -> dict[str, int]:
    """Author's debut year over the full ingested corpus."""
    first: dict[str, int] = {}
    for w in corpus:
        for a in w.authorships:
            prev = first.get(a.author_id)
            if prev is None or w.year < prev:
                first[a.author_id] = w.year
    return first


def career_age(author_id: str, year: int, first_year_index: Mapping[str, int]) -> int | None:
    """Years since debut, inclusive: debut-year authors have age 1.
    None when the author is absent from the index."""
    first = first_year_index.get(author_id)
    if first is None:
        return None
    return year - first + 1


def h_index(citation_counts: list[int]) -> int:
    """Largest h with at least h entries >= h; empty input gives 0."""
    h = 0
    for i, c in enumerate(sorted(citation_counts, reverse=True), start=1):
        if c >= i:
            h = i
        else:
            break
    return h


def build_journal_h_index(corpus: Corpus) -> dict[str, int]:
    cites: dict[str, list[int]] = defaultdict(list)
    for w in corpus:
        if w.journal_id is not None:
            cites[w.journal_id].append(w.citation_count)
    return {jid: h_index(cs) for jid, cs in cites.items()}


def build_institution_h_index(corpus: Corpus) -> dict[str, int]:
    cites: dict[str, list[int]] = defaultdict(list)
    for w in corpus:
        insts = set()
        for a in w.authorships:
            insts.update(a.institution_ids)
        for iid in insts:
            cites[iid].append(w.citation_count)
    return {iid: h_index(cs) for iid, cs in cites.items()}


@dataclass(slots=True)
class CorpusIndices:
    """Lookup tables shared by every row; built once from the full
    ingested corpus, before last-author expansion."""
    first_year: dict[str, int]
    journal_h: dict[str, int]
    institution_h: dict[str, int]

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "CorpusIndices":
        return cls(
            first_year=build_first_year_index(corpus),
            journal_h=build_journal_h_index(corpus),
            institution_h=build_institution_h_index(corpus),
        )


@dataclass(slots=True)
class OutcomeTables:
    """Per-work outcome values joined into rows; every map is optional."""
    novelty: Mapping[str, bool] | None = None
    rao_stirling: Mapping[str, float] | None = None
    new_word: Mapping[str, bool] | None = None
    new_phrase: Mapping[str, bool] | None = None

    def _get(self, table: Mapping | None, work_id: str):
        return table.get(work_id) if table is not None else None


def work_discipline(work: WorkRecord) -> str | None:
    """argmax-share top-level field; ties go to the smaller field id."""
    totals: dict[str, float] = defaultdict(float)
    for sid, share in work.subfield_shares.items():
        fid = field_of_subfield(sid)
        if fid is not None:
            totals[fid] += share
    if not totals:
        return None
    return min(totals, key=lambda f: (-totals[f], f))


def build_row(work: WorkRecord, indices: CorpusIndices, outcomes: OutcomeTables,
              ns_map: Mapping[str, str], core_journals: frozenset[str],
              domains: Mapping[str, str]) -> CovariateRow | str:
    """One CovariateRow, or the exclusion cause which blocked it."""
    if not work.authorships:
        return "no_authors"

    n_authors = len(work.authorships)
    institutions = {i for a in work.authorships for i in a.institution_ids}
    if not institutions:
        return "no_institutions"
    countries = {a.country_code for a in work.authorships if a.country_code}
    if not countries:
        return "no_countries"
    n_refs = len(work.referenced_work_ids)
    if n_refs == 0:
        return "no_references"

    first_cc = work.authorships[0].country_code
    last_cc = work.authorships[-1].country_code
    leadership = None
    if first_cc and last_cc:
        leadership = classify_leadership(first_cc, last_cc, ns_map)
    if leadership is None:
        return "leadership_unmapped"

    ages = []
    for a in work.authorships:
        age = career_age(a.author_id, work.year, indices.first_year)
        if age is not None:
            ages.append(age)
    if not ages:
        return "career_age_missing"
    avg_age = sum(ages) / len(ages)

    inst_hs = []
    for a in work.authorships:
        for iid in a.institution_ids:
            h = indices.institution_h.get(iid)
            if h is not None:
                inst_hs.append(h)
    if not inst_hs:
        return "institution_h_missing"
    avg_inst_h = sum(inst_hs) / len(inst_hs)

    if work.journal_id is None or work.journal_id not in indices.journal_h:
        return "journal_unknown"
    journal_h = indices.journal_h[work.journal_id]

    discipline = work_discipline(work)
    if discipline is None:
        return "no_discipline"
    domain = domains.get(discipline)
    if domain is None:
        return "no_domain"

    return CovariateRow(
        work_id=work.work_id,
        novelty_dv=outcomes._get(outcomes.novelty, work.work_id),
        rs_dv=outcomes._get(outcomes.rao_stirling, work.work_id),
        new_word_dv=outcomes._get(outcomes.new_word, work.work_id),
        new_phrase_dv=outcomes._get(outcomes.new_phrase, work.work_id),
        bsf=work.is_bsf,
        n_facilities=work.facility_count,
        log_authors=math.log(n_authors),
        log_institutions=math.log(len(institutions)),
        log_countries=math.log(len(countries)),
        log_references=math.log(n_refs),
        leadership=leadership,
        log_avg_career_age=math.log(avg_age),
        log_avg_inst_h=math.log(avg_inst_h + 1.0),
        log_journal_h=math.log(journal_h + 1.0),
        core_journal=work.journal_id in core_journals,
        fe_author=work.authorships[-1].author_id,
        fe_year=work.year,
        fe_discipline=discipline,
        domain=domain,
    )


def build_rows(corpus: Corpus, indices: CorpusIndices, outcomes: OutcomeTables,
               ns_map: Mapping[str, str], core_journals: frozenset[str] = frozenset(),
               domains: Mapping[str, str] | None = None,
               ) -> tuple[list[CovariateRow], dict[str, int]]:
    """Rows for every work that passes the control requirements, plus the
    per-cause exclusion tally. len(rows) + sum(exclusions) == len(corpus)."""
    if domains is None:
        domains = load_field_domains()
    rows: list[CovariateRow] = []
    exclusions: dict[str, int] = {c: 0 for c in EXCLUSION_CAUSES}
    for work in corpus:
        out = build_row(work, indices, outcomes, ns_map, core_journals, domains)
        if isinstance(out, str):
            exclusions[out] += 1
        else:
            assert out.bsf == (out.n_facilities >= 1)
            rows.append(out)
    return rows, exclusions
