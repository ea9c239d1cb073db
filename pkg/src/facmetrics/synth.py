"""Synthetic corpora with planted effects for end-to-end verification.

Generation is sequential per seed so a fixed seed yields an identical
corpus regardless of threads. Latent outcomes follow the structural form
of the estimated model: a planted log-odds shift on the novelty outcome
and an additive shift on the continuous diversity outcome, on top of
author, year, and field effect draws.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
from scipy.special import expit

from .corpus import Authorship, Corpus, CorpusManifest, FacilityEntry, WorkRecord
from .errors import InputError

# field codes span the four research domains so heterogeneity splits have
# support everywhere
_FIELDS = ("31", "16", "22", "13", "11", "27", "29", "33", "32")
_COUNTRIES = ("US", "DE", "JP", "GB", "FR", "CN", "BR", "IN", "ZA", "KR")
_VOCAB = [
    "electron", "lattice", "protein", "spectrum", "quantum", "neural",
    "dynamics", "thermal", "catalyst", "membrane", "plasma", "genome",
    "crystal", "polymer", "magnetic", "kinetic", "optical", "cellular",
    "synthesis", "scattering", "resonance", "diffraction", "transport",
    "coupling", "emission", "gradient", "spin", "phase", "binding", "flux",
]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_authors: int = 200
    n_years: int = 10
    n_journals: int = 40
    n_subfields: int = 27
    n_papers: int = 5000
    bsf_share: float = 0.1
    planted_logit_effect: float = 0.084
    planted_rs_effect: float = 0.003
    author_effect_sd: float = 0.5
    year_effect_sd: float = 0.2
    field_effect_sd: float = 0.2
    # plumbing knobs, not part of the planted model
    refs_per_paper: int = 8
    n_institutions: int = 50
    n_facilities: int = 10
    start_year: int = 1990
    logit_intercept: float = -0.5
    rs_intercept: float = 0.14
    rs_noise_sd: float = 0.05
    new_token_rate: float = 0.05

    def validate(self) -> None:
        for name in ("n_authors", "n_years", "n_journals", "n_subfields"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if self.n_papers < 0:
            raise InputError("n_papers must be >= 0")
        if not (0.0 < self.bsf_share < 1.0):
            raise InputError("bsf_share must be in (0, 1)")
        if min(self.author_effect_sd, self.year_effect_sd, self.field_effect_sd) < 0:
            raise InputError("effect SDs must be nonnegative")
        if self.n_papers > 0 and self.refs_per_paper > self.n_papers - 1:
            raise InputError(
                f"refs_per_paper={self.refs_per_paper} exceeds available works "
                f"({self.n_papers - 1})"
            )


@dataclass(slots=True)
class TruthRow:
    work_id: str
    year: int
    last_author: str
    field: str
    bsf: bool
    n_facilities: int
    p_novel: float
    novelty_dv: bool
    rs_mean: float
    rs_value: float
    author_fx_logit: float
    year_fx_logit: float
    field_fx_logit: float
    author_fx_lin: float
    year_fx_lin: float
    field_fx_lin: float


@dataclass(slots=True)
class SynthResult:
    corpus: Corpus
    facility_entries: list[FacilityEntry]
    truth: list[TruthRow]
    params: dict


def _subfield_ids(n: int) -> list[str]:
    return [f"{_FIELDS[i % len(_FIELDS)]}{i // len(_FIELDS):02d}" for i in range(n)]


def gen_corpus(config: SynthConfig) -> SynthResult:
    """Generate a corpus plus its ground-truth table.

    The stored novelty propensity is expit(intercept + effect*bsf +
    author_fx + year_fx + field_fx) evaluated in exactly that order, so
    recomputing it from the emitted draws reproduces it bitwise."""
    config.validate()
    rng = np.random.default_rng(config.seed)

    years = [config.start_year + i for i in range(config.n_years)]
    subfields = _subfield_ids(config.n_subfields)
    fields_of = sorted({sid[:2] for sid in subfields})
    authors = [f"A{i:05d}" for i in range(config.n_authors)]

    author_fx_logit = {a: float(v) for a, v in zip(
        authors, rng.normal(0.0, config.author_effect_sd, config.n_authors))}
    author_fx_lin = {a: float(v) for a, v in zip(
        authors, rng.normal(0.0, config.author_effect_sd * 0.01, config.n_authors))}
    year_fx_logit = {y: float(v) for y, v in zip(
        years, rng.normal(0.0, config.year_effect_sd, config.n_years))}
    year_fx_lin = {y: float(v) for y, v in zip(
        years, rng.normal(0.0, config.year_effect_sd * 0.01, config.n_years))}
    field_fx_logit = {f: float(v) for f, v in zip(
        fields_of, rng.normal(0.0, config.field_effect_sd, len(fields_of)))}
    field_fx_lin = {f: float(v) for f, v in zip(
        fields_of, rng.normal(0.0, config.field_effect_sd * 0.01, len(fields_of)))}

    n = config.n_papers
    paper_years = np.sort(rng.integers(0, config.n_years, n)) + config.start_year if n else np.array([], dtype=int)
    last_authors = rng.integers(0, config.n_authors, n)
    n_coauthors = rng.integers(0, 4, n)  # team size 1..4 before the last author
    journal_idx = rng.integers(0, config.n_journals, n)
    bsf_flags = rng.random(n) < config.bsf_share
    extra_facility = rng.random(n) < 0.2  # co-utilization share among BSF works
    noise_lin = rng.normal(0.0, 1.0, n)

    records: dict[str, WorkRecord] = {}
    entries: list[FacilityEntry] = []
    truth: list[TruthRow] = []
    token_pool = list(_VOCAB)
    new_token_serial = 0

    for i in range(n):
        wid = f"W{i:07d}"
        year = int(paper_years[i])
        la = authors[int(last_authors[i])]
        team = [authors[int(j)] for j in rng.integers(0, config.n_authors, int(n_coauthors[i]))]
        team.append(la)
        authorships = tuple(
            Authorship(
                author_id=a,
                institution_ids=(f"I{int(a[1:]) % config.n_institutions:04d}",),
                country_code=_COUNTRIES[int(a[1:]) % len(_COUNTRIES)],
            )
            for a in team
        )

        n_refs = min(config.refs_per_paper, i)
        if n_refs > 0:
            ref_idx = rng.choice(i, size=n_refs, replace=False)
            refs = tuple(f"W{int(r):07d}" for r in sorted(ref_idx))
        else:
            refs = ()

        k_sub = int(rng.integers(1, 4))
        sub_idx = rng.choice(config.n_subfields, size=min(k_sub, config.n_subfields), replace=False)
        weights = rng.random(len(sub_idx)) + 0.1
        weights /= weights.sum()
        shares = {subfields[int(s)]: float(w) for s, w in zip(sub_idx, weights)}

        title_n = int(rng.integers(4, 9))
        title = [token_pool[int(t)] for t in rng.integers(0, len(token_pool), title_n)]
        if rng.random() < config.new_token_rate:
            token = f"term{new_token_serial:05d}"
            new_token_serial += 1
            title.append(token)
            token_pool.append(token)

        facility_ids: set[str] = set()
        if bsf_flags[i]:
            f1 = int(rng.integers(0, config.n_facilities))
            facility_ids.add(f"F{f1:02d}")
            if extra_facility[i]:
                f2 = int(rng.integers(0, config.n_facilities))
                facility_ids.add(f"F{f2:02d}")
            for k, fid in enumerate(sorted(facility_ids)):
                # exercise both match-key paths
                if (i + k) % 2 == 0:
                    entries.append(FacilityEntry(fid, "work_id", wid))
                else:
                    entries.append(FacilityEntry(fid, "doi", f"10.5555/{wid.lower()}"))

        # argmax-share field with ties to smaller id, mirroring the
        # covariate builder
        totals: dict[str, float] = {}
        for sid, w in shares.items():
            totals[sid[:2]] = totals.get(sid[:2], 0.0) + w
        field = min(totals, key=lambda f: (-totals[f], f))

        bsf = bool(bsf_flags[i])
        p_novel = float(expit(
            config.logit_intercept + config.planted_logit_effect * bsf
            + author_fx_logit[la] + year_fx_logit[year] + field_fx_logit[field]
        ))
        novelty_dv = bool(rng.random() < p_novel)
        rs_mean = (
            config.rs_intercept + config.planted_rs_effect * bsf
            + author_fx_lin[la] + year_fx_lin[year] + field_fx_lin[field]
        )
        rs_value = float(rs_mean + config.rs_noise_sd * noise_lin[i])

        records[wid] = WorkRecord(
            work_id=wid,
            doi=f"10.5555/{wid.lower()}",
            year=year,
            journal_id=f"J{int(journal_idx[i]):04d}",
            doc_type="article",
            language="en",
            title_tokens=tuple(title),
            referenced_work_ids=refs,
            subfield_shares=shares,
            authorships=authorships,
            citation_count=int(rng.integers(0, 200)),
            facility_ids=facility_ids,
        )
        truth.append(TruthRow(
            work_id=wid, year=year, last_author=la, field=field, bsf=bsf,
            n_facilities=len(facility_ids), p_novel=p_novel,
            novelty_dv=novelty_dv, rs_mean=float(rs_mean), rs_value=rs_value,
            author_fx_logit=author_fx_logit[la], year_fx_logit=year_fx_logit[year],
            field_fx_logit=field_fx_logit[field], author_fx_lin=author_fx_lin[la],
            year_fx_lin=year_fx_lin[year], field_fx_lin=field_fx_lin[field],
        ))

    digest = hashlib.sha256(
        json.dumps(asdict(config), sort_keys=True).encode("utf-8")
    ).hexdigest()
    years_present = [w.year for w in records.values()]
    manifest = CorpusManifest(
        n_works=len(records),
        n_bsf_works=sum(1 for w in records.values() if w.is_bsf),
        n_last_authors=len({w.last_author_id for w in records.values()}) if records else 0,
        year_range=(min(years_present), max(years_present)) if years_present else None,
        source_digest=digest,
    )
    params = {
        "seed": config.seed,
        "planted_logit_effect": config.planted_logit_effect,
        "planted_rs_effect": config.planted_rs_effect,
        "logit_intercept": config.logit_intercept,
        "rs_intercept": config.rs_intercept,
        "rs_noise_sd": config.rs_noise_sd,
    }
    return SynthResult(
        corpus=Corpus(records, manifest),
        facility_entries=sorted(entries, key=lambda e: (e.facility_id, e.match_key, e.key_value)),
        truth=truth,
        params=params,
    )


def write_corpus_jsonl(corpus: Corpus, path: str | Path) -> None:
    """Emit the corpus in the ingestion JSONL schema."""
    with open(path, "w", encoding="utf-8") as fh:
        for w in corpus:
            obj = {
                "id": w.work_id,
                "doi": w.doi,
                "publication_year": w.year,
                "journal_id": w.journal_id,
                "type": w.doc_type,
                "language": w.language,
                "title": " ".join(w.title_tokens),
                "referenced_works": list(w.referenced_work_ids),
                "subfields": [
                    {"id": sid, "score": share}
                    for sid, share in sorted(w.subfield_shares.items())
                ],
                "authorships": [
                    {
                        "author_id": a.author_id,
                        "institution_ids": list(a.institution_ids),
                        "country_code": a.country_code,
                    }
                    for a in w.authorships
                ],
                "cited_by_count": w.citation_count,
            }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def write_facility_csv(entries: list[FacilityEntry], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("facility_id,match_key,key_value\n")
        for e in entries:
            fh.write(f"{e.facility_id},{e.match_key},{e.key_value}\n")


def write_truth_csv(truth: list[TruthRow], params: dict, path: str | Path) -> None:
    cols = [
        "work_id", "year", "last_author", "field", "bsf", "n_facilities",
        "p_novel", "novelty_dv", "rs_mean", "rs_value",
        "author_fx_logit", "year_fx_logit", "field_fx_logit",
        "author_fx_lin", "year_fx_lin", "field_fx_lin",
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for t in truth:
            vals = []
            for c in cols:
                v = getattr(t, c)
                if isinstance(v, bool):
                    vals.append("true" if v else "false")
                elif isinstance(v, float):
                    vals.append(repr(v))
                else:
                    vals.append(str(v))
            fh.write(",".join(vals) + "\n")
    Path(str(path) + ".params.json").write_text(
        json.dumps(params, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_truth_outcomes(path: str | Path) -> tuple[dict[str, bool], dict[str, float]]:
    """Planted outcome maps (novelty, diversity value) from truth.csv."""
    import csv as _csv
    novelty: dict[str, bool] = {}
    rs: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            novelty[row["work_id"]] = row["novelty_dv"] == "true"
            rs[row["work_id"]] = float(row["rs_value"])
    return novelty, rs
