"""Publication corpus: JSONL ingestion, filtering, facility matching, and
the last-author comparison set.

Input is one JSON object per line with keys id, doi, publication_year,
journal_id, type, language, title, referenced_works, subfields,
authorships, cited_by_count; unknown keys are ignored. The assembled
corpus is immutable after ingest, ordered canonically by work id, and
safe for concurrent readers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

from .cache import read_cache, write_cache
from .errors import InputError, MalformedDOIError

_DOI_PREFIXES = (
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi:",
)

YEAR_MIN = 1900
YEAR_MAX = 2100


@dataclass(frozen=True, slots=True)
class Authorship:
    author_id: str
    institution_ids: tuple[str, ...]
    country_code: str | None


@dataclass(slots=True)
class WorkRecord:
    """One publication. `facility_ids` is filled by facility matching."""

    work_id: str
    doi: str | None
    year: int
    journal_id: str | None
    doc_type: str  # "article" or "other"
    language: str | None
    title_tokens: tuple[str, ...]
    referenced_work_ids: tuple[str, ...]
    subfield_shares: dict[str, float]
    authorships: tuple[Authorship, ...]
    citation_count: int
    facility_ids: set[str] = field(default_factory=set)

    @property
    def is_bsf(self) -> bool:
        return len(self.facility_ids) >= 1

    @property
    def facility_count(self) -> int:
        return len(self.facility_ids)

    @property
    def last_author_id(self) -> str | None:
        return self.authorships[-1].author_id if self.authorships else None


@dataclass(frozen=True, slots=True)
class FacilityEntry:
    facility_id: str
    match_key: str  # "doi" or "work_id"
    key_value: str


@dataclass(slots=True)
class CorpusManifest:
    n_works: int
    n_bsf_works: int
    n_last_authors: int
    year_range: tuple[int, int] | None
    source_digest: str
    excluded_doctype: int = 0
    excluded_language: int = 0
    invalid_records: int = 0
    parse_errors: int = 0
    duplicate_count: int = 0

    def to_dict(self) -> dict:
        return {
            "n_works": self.n_works,
            "n_bsf_works": self.n_bsf_works,
            "n_last_authors": self.n_last_authors,
            "year_range": list(self.year_range) if self.year_range else None,
            "source_digest": self.source_digest,
            "excluded_doctype": self.excluded_doctype,
            "excluded_language": self.excluded_language,
            "invalid_records": self.invalid_records,
            "parse_errors": self.parse_errors,
            "duplicate_count": self.duplicate_count,
        }


class Corpus:
    """Immutable store of WorkRecords, iterated in work_id order."""

    def __init__(self, records: dict[str, WorkRecord], manifest: CorpusManifest):
        self._records = records
        self._order = sorted(records)
        self.manifest = manifest

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[WorkRecord]:
        for wid in self._order:
            yield self._records[wid]

    def __contains__(self, work_id: str) -> bool:
        return work_id in self._records

    def get(self, work_id: str) -> WorkRecord | None:
        return self._records.get(work_id)

    def work_ids(self) -> list[str]:
        return list(self._order)

    def years(self) -> list[int]:
        return sorted({w.year for w in self})

    def works_in_year(self, year: int) -> list[WorkRecord]:
        return [w for w in self if w.year == year]


def normalize_doi(raw: str) -> str:
    """Canonicalize DOI text: strip resolver prefixes and whitespace,
    lowercase. Rejects text without a 10. prefix or with embedded
    whitespace."""
    if not raw:
        raise MalformedDOIError("empty DOI")
    text = raw.strip().lower()
    for prefix in _DOI_PREFIXES:
        if text.startswith(prefix):
            text = text[len(prefix):]
            break
    text = text.strip()
    if not text.startswith("10."):
        raise MalformedDOIError(f"no 10. prefix after stripping: {raw!r}")
    if any(ch.isspace() for ch in text):
        raise MalformedDOIError(f"embedded whitespace: {raw!r}")
    return text


@dataclass(slots=True)
class IngestFilters:
    doc_types: frozenset[str] = frozenset({"article"})
    languages: frozenset[str] = frozenset({"en"})
    error_threshold: float = 0.01


def _parse_record(obj: dict) -> WorkRecord:
    """Build a validated WorkRecord from a parsed JSON object.

    Raises ValueError on structural problems (missing id, bad year,
    negative weights or citation counts)."""
    work_id = obj.get("id")
    if not isinstance(work_id, str) or not work_id:
        raise ValueError("missing id")

    year = obj.get("publication_year")
    if not isinstance(year, int) or not (YEAR_MIN <= year <= YEAR_MAX):
        raise ValueError(f"bad publication_year: {year!r}")

    doi_raw = obj.get("doi")
    doi = None
    if isinstance(doi_raw, str) and doi_raw.strip():
        try:
            doi = normalize_doi(doi_raw)
        except MalformedDOIError:
            doi = None  # unmatched later, not a record-level failure

    journal = obj.get("journal_id")
    journal_id = journal if isinstance(journal, str) and journal else None

    doc_type = "article" if obj.get("type") == "article" else "other"
    language = obj.get("language") if isinstance(obj.get("language"), str) else None

    title = obj.get("title")
    title_tokens = tuple(title.lower().split()) if isinstance(title, str) else ()

    refs_raw = obj.get("referenced_works") or []
    seen: set[str] = set()
    refs: list[str] = []
    for r in refs_raw:
        if isinstance(r, str) and r and r != work_id and r not in seen:
            seen.add(r)
            refs.append(sys.intern(r))

    shares: dict[str, float] = {}
    for sf in obj.get("subfields") or []:
        if not isinstance(sf, dict):
            continue
        sid, score = sf.get("id"), sf.get("score")
        if not isinstance(sid, str) or not isinstance(score, (int, float)):
            continue
        if score < 0:
            raise ValueError(f"negative subfield score on {work_id}")
        shares[sys.intern(sid)] = shares.get(sid, 0.0) + float(score)
    total = sum(shares.values())
    if total > 0:
        shares = {sid: w / total for sid, w in shares.items()}
    else:
        shares = {}

    authorships: list[Authorship] = []
    for a in obj.get("authorships") or []:
        if not isinstance(a, dict):
            continue
        aid = a.get("author_id")
        if not isinstance(aid, str) or not aid:
            continue
        insts = tuple(
            sys.intern(i) for i in (a.get("institution_ids") or []) if isinstance(i, str) and i
        )
        cc = a.get("country_code")
        country = cc.upper() if isinstance(cc, str) and cc else None
        authorships.append(Authorship(sys.intern(aid), insts, country))

    citations = obj.get("cited_by_count", 0)
    if not isinstance(citations, int) or citations < 0:
        raise ValueError(f"bad cited_by_count on {work_id}")

    return WorkRecord(
        work_id=sys.intern(work_id),
        doi=doi,
        year=year,
        journal_id=sys.intern(journal_id) if journal_id else None,
        doc_type=doc_type,
        language=language,
        title_tokens=title_tokens,
        referenced_work_ids=tuple(refs),
        subfield_shares=shares,
        authorships=tuple(authorships),
        citation_count=citations,
    )


def ingest(stream: IO[bytes] | IO[str] | Iterable[bytes | str],
           filters: IngestFilters | None = None) -> Corpus:
    """Parse a JSONL stream into a Corpus, applying article/language
    filters. Unparseable lines are skipped and counted; if their rate
    exceeds filters.error_threshold the whole ingest aborts. Duplicate
    work ids resolve last-wins with a warning count.

    The manifest digest is the sha256 of the raw stream bytes, so
    re-ingesting identical input yields an identical manifest."""
    filters = filters or IngestFilters()
    records: dict[str, WorkRecord] = {}
    hasher = hashlib.sha256()
    n_lines = 0
    parse_errors = 0
    excluded_doctype = 0
    excluded_language = 0
    invalid = 0
    duplicates = 0

    for line in stream:
        if isinstance(line, str):
            data = line.encode("utf-8")
        else:
            data = line
        hasher.update(data)
        stripped = data.strip()
        if not stripped:
            continue
        n_lines += 1
        try:
            obj = json.loads(stripped)
            if not isinstance(obj, dict):
                raise ValueError("line is not a JSON object")
        except ValueError:
            parse_errors += 1
            continue
        try:
            rec = _parse_record(obj)
        except ValueError:
            invalid += 1
            continue
        if rec.doc_type not in filters.doc_types:
            excluded_doctype += 1
            continue
        if rec.language not in filters.languages:
            excluded_language += 1
            continue
        if rec.work_id in records:
            duplicates += 1
        records[rec.work_id] = rec

    if n_lines > 0 and parse_errors / n_lines > filters.error_threshold:
        raise InputError(
            f"parse error rate {parse_errors}/{n_lines} exceeds threshold "
            f"{filters.error_threshold}"
        )

    years = [w.year for w in records.values()]
    last_authors = {w.last_author_id for w in records.values() if w.authorships}
    manifest = CorpusManifest(
        n_works=len(records),
        n_bsf_works=0,
        n_last_authors=len(last_authors),
        year_range=(min(years), max(years)) if years else None,
        source_digest=hasher.hexdigest(),
        excluded_doctype=excluded_doctype,
        excluded_language=excluded_language,
        invalid_records=invalid,
        parse_errors=parse_errors,
        duplicate_count=duplicates,
    )
    return Corpus(records, manifest)


def ingest_path(path: str | Path, filters: IngestFilters | None = None) -> Corpus:
    with open(path, "rb") as fh:
        return ingest(fh, filters)


def load_facility_entries(path: str | Path) -> tuple[list[FacilityEntry], list[dict]]:
    """Read the facility list CSV (facility_id,match_key,key_value).
    DOI keys are canonicalized; rows that cannot be canonicalized are
    returned in the rejects report instead of raising."""
    entries: list[FacilityEntry] = []
    rejects: list[dict] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"facility_id", "match_key", "key_value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(f"facility list must have header facility_id,match_key,key_value: {path}")
        for row in reader:
            fid = (row["facility_id"] or "").strip()
            key = (row["match_key"] or "").strip()
            value = (row["key_value"] or "").strip()
            if not fid or not value or key not in ("doi", "work_id"):
                rejects.append({"row": dict(row), "reason": "malformed row"})
                continue
            if key == "doi":
                try:
                    value = normalize_doi(value)
                except MalformedDOIError as exc:
                    rejects.append({"row": dict(row), "reason": str(exc)})
                    continue
            entries.append(FacilityEntry(fid, key, value))
    return entries, rejects


def match_facilities(corpus: Corpus, entries: list[FacilityEntry]) -> list[FacilityEntry]:
    """Annotate works with facility ids in place. work_id keys match the
    corpus primary key directly and take precedence; doi keys go through
    the canonical-DOI index. Returns the unmatched entries."""
    by_doi: dict[str, str] = {}
    for w in corpus:
        if w.doi is not None:
            by_doi[w.doi] = w.work_id

    unmatched: list[FacilityEntry] = []
    for entry in entries:
        if entry.match_key == "work_id":
            rec = corpus.get(entry.key_value)
        else:
            wid = by_doi.get(entry.key_value)
            rec = corpus.get(wid) if wid is not None else None
        if rec is None:
            unmatched.append(entry)
        else:
            rec.facility_ids.add(entry.facility_id)

    n_bsf = sum(1 for w in corpus if w.is_bsf)
    corpus.manifest.n_bsf_works = n_bsf
    return unmatched


@dataclass(slots=True)
class ExpansionReport:
    n_bsf_works: int
    n_bsf_last_authors: int
    n_works_retained: int
    n_works_dropped: int


def expand_by_last_author(corpus: Corpus) -> tuple[Corpus, ExpansionReport]:
    """Keep exactly the works whose last author is last author on at
    least one BSF-flagged work. Single-authored works count; works with
    no authorships have no last author and are dropped."""
    bsf_authors: set[str] = set()
    n_bsf = 0
    for w in corpus:
        if w.is_bsf:
            n_bsf += 1
            la = w.last_author_id
            if la is not None:
                bsf_authors.add(la)
    if n_bsf == 0:
        raise InputError("empty treatment set: no BSF-flagged works in corpus")

    retained = {
        w.work_id: w for w in corpus
        if w.last_author_id is not None and w.last_author_id in bsf_authors
    }
    years = [w.year for w in retained.values()]
    manifest = CorpusManifest(
        n_works=len(retained),
        n_bsf_works=sum(1 for w in retained.values() if w.is_bsf),
        n_last_authors=len({w.last_author_id for w in retained.values()}),
        year_range=(min(years), max(years)) if years else None,
        source_digest=corpus.manifest.source_digest,
        excluded_doctype=corpus.manifest.excluded_doctype,
        excluded_language=corpus.manifest.excluded_language,
        invalid_records=corpus.manifest.invalid_records,
        parse_errors=corpus.manifest.parse_errors,
        duplicate_count=corpus.manifest.duplicate_count,
    )
    report = ExpansionReport(
        n_bsf_works=n_bsf,
        n_bsf_last_authors=len(bsf_authors),
        n_works_retained=len(retained),
        n_works_dropped=len(corpus) - len(retained),
    )
    return Corpus(retained, manifest), report


# Columnar persistence. Records are exploded into parallel per-field lists
# so the pickle stays flat and fast at millions of rows.

def corpus_to_columns(corpus: Corpus) -> dict:
    cols: dict[str, list] = {
        "work_id": [], "doi": [], "year": [], "journal_id": [], "doc_type": [],
        "language": [], "title_tokens": [], "referenced_work_ids": [],
        "subfield_shares": [], "authorships": [], "citation_count": [],
        "facility_ids": [],
    }
    for w in corpus:
        cols["work_id"].append(w.work_id)
        cols["doi"].append(w.doi)
        cols["year"].append(w.year)
        cols["journal_id"].append(w.journal_id)
        cols["doc_type"].append(w.doc_type)
        cols["language"].append(w.language)
        cols["title_tokens"].append(w.title_tokens)
        cols["referenced_work_ids"].append(w.referenced_work_ids)
        cols["subfield_shares"].append(sorted(w.subfield_shares.items()))
        cols["authorships"].append(
            tuple((a.author_id, a.institution_ids, a.country_code) for a in w.authorships)
        )
        cols["citation_count"].append(w.citation_count)
        cols["facility_ids"].append(tuple(sorted(w.facility_ids)))
    return {"columns": cols, "manifest": corpus.manifest.to_dict()}


def corpus_from_columns(payload: dict) -> Corpus:
    cols = payload["columns"]
    records: dict[str, WorkRecord] = {}
    n = len(cols["work_id"])
    for i in range(n):
        rec = WorkRecord(
            work_id=cols["work_id"][i],
            doi=cols["doi"][i],
            year=cols["year"][i],
            journal_id=cols["journal_id"][i],
            doc_type=cols["doc_type"][i],
            language=cols["language"][i],
            title_tokens=cols["title_tokens"][i],
            referenced_work_ids=cols["referenced_work_ids"][i],
            subfield_shares=dict(cols["subfield_shares"][i]),
            authorships=tuple(Authorship(*a) for a in cols["authorships"][i]),
            citation_count=cols["citation_count"][i],
            facility_ids=set(cols["facility_ids"][i]),
        )
        records[rec.work_id] = rec
    m = payload["manifest"]
    manifest = CorpusManifest(
        n_works=m["n_works"],
        n_bsf_works=m["n_bsf_works"],
        n_last_authors=m["n_last_authors"],
        year_range=tuple(m["year_range"]) if m["year_range"] else None,
        source_digest=m["source_digest"],
        excluded_doctype=m["excluded_doctype"],
        excluded_language=m["excluded_language"],
        invalid_records=m["invalid_records"],
        parse_errors=m["parse_errors"],
        duplicate_count=m["duplicate_count"],
    )
    return Corpus(records, manifest)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    write_cache(path, corpus.manifest.source_digest, corpus_to_columns(corpus))


def load_corpus(path: str | Path, expected_digest: str | None = None) -> Corpus:
    _, payload = read_cache(path, expected_digest)
    return corpus_from_columns(payload)
