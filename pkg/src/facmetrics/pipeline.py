"""Stage orchestration: reproducible runs from raw inputs to the table
and figure data files.

Every stage reads its upstream artifacts from the run directory and
writes its own, so any command can resume a partial run; missing
upstream outputs raise StageMissingError naming the stage to run. All
emitted files are deterministic for fixed inputs, config, and seed
(floats are written with repr, JSON with sorted keys), so reruns and
different thread counts produce byte-identical artifacts; timings live
only in the volatile section of the run manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from . import covariates as cov
from . import diversity, novelty
from .cache import read_cache, write_cache
from .config import RunConfig
from .corpus import Corpus, corpus_from_columns, corpus_to_columns, ingest_path, load_facility_entries, match_facilities, expand_by_last_author
from .covariates import CovariateRow, CorpusIndices, OutcomeTables
from .errors import InputError, NumericalError, StageMissingError
from .hdfe import Dataset, FitResult, ModelSpec, fit, predict_margins
from .synth import SynthConfig, gen_corpus, read_truth_outcomes, write_corpus_jsonl, write_facility_csv, write_truth_csv

STARS_LEGEND = "*** p<0.01, ** p<0.05, * p<0.1"

CONTROLS = (
    "log_authors", "log_institutions", "log_countries", "log_references",
    "leadership_all_north", "leadership_all_south",
    "log_avg_career_age", "log_avg_inst_h", "log_journal_h", "core_journal",
)
FE_MAIN = ("author", "year", "discipline")
BSF_LEVELS = (("false", 0.0), ("true", 1.0))

ROW_COLUMNS = (
    "work_id", "novelty_dv", "rs_dv", "new_word_dv", "new_phrase_dv",
    "bsf", "n_facilities", "log_authors", "log_institutions", "log_countries",
    "log_references", "leadership", "log_avg_career_age", "log_avg_inst_h",
    "log_journal_h", "core_journal", "fe_author", "fe_year", "fe_discipline",
    "domain",
)


def stars(p: float) -> str:
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_rows_csv(rows: list[CovariateRow], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(ROW_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(getattr(r, c)) for c in ROW_COLUMNS) + "\n")


def read_rows_csv(path: Path) -> list[CovariateRow]:
    rows: list[CovariateRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(CovariateRow(
                work_id=rec["work_id"],
                novelty_dv=None if rec["novelty_dv"] == "" else rec["novelty_dv"] == "true",
                rs_dv=None if rec["rs_dv"] == "" else float(rec["rs_dv"]),
                new_word_dv=None if rec["new_word_dv"] == "" else rec["new_word_dv"] == "true",
                new_phrase_dv=None if rec["new_phrase_dv"] == "" else rec["new_phrase_dv"] == "true",
                bsf=rec["bsf"] == "true",
                n_facilities=int(rec["n_facilities"]),
                log_authors=float(rec["log_authors"]),
                log_institutions=float(rec["log_institutions"]),
                log_countries=float(rec["log_countries"]),
                log_references=float(rec["log_references"]),
                leadership=rec["leadership"],
                log_avg_career_age=float(rec["log_avg_career_age"]),
                log_avg_inst_h=float(rec["log_avg_inst_h"]),
                log_journal_h=float(rec["log_journal_h"]),
                core_journal=rec["core_journal"] == "true",
                fe_author=rec["fe_author"],
                fe_year=int(rec["fe_year"]),
                fe_discipline=rec["fe_discipline"],
                domain=rec["domain"],
            ))
    return rows


def dataset_from_rows(rows: list[CovariateRow]) -> tuple[Dataset, dict[str, np.ndarray]]:
    """Numeric design + FE vectors from covariate rows; missing outcomes
    become NaN so each model selects its own sample. Leadership expands
    to all_north/all_south dummies with mixed as the reference."""
    n = len(rows)

    def opt_bool(get):
        return np.array([np.nan if get(r) is None else float(get(r)) for r in rows])

    columns = {
        "novelty_dv": opt_bool(lambda r: r.novelty_dv),
        "rs_dv": np.array([np.nan if r.rs_dv is None else r.rs_dv for r in rows]),
        "new_word_dv": opt_bool(lambda r: r.new_word_dv),
        "new_phrase_dv": opt_bool(lambda r: r.new_phrase_dv),
        "bsf": np.array([float(r.bsf) for r in rows]),
        "n_facilities": np.array([float(r.n_facilities) for r in rows]),
        "log_authors": np.array([r.log_authors for r in rows]),
        "log_institutions": np.array([r.log_institutions for r in rows]),
        "log_countries": np.array([r.log_countries for r in rows]),
        "log_references": np.array([r.log_references for r in rows]),
        "leadership_all_north": np.array([float(r.leadership == "all_north") for r in rows]),
        "leadership_all_south": np.array([float(r.leadership == "all_south") for r in rows]),
        "log_avg_career_age": np.array([r.log_avg_career_age for r in rows]),
        "log_avg_inst_h": np.array([r.log_avg_inst_h for r in rows]),
        "log_journal_h": np.array([r.log_journal_h for r in rows]),
        "core_journal": np.array([float(r.core_journal) for r in rows]),
    }
    fe = {
        "author": np.array([r.fe_author for r in rows]),
        "year": np.array([r.fe_year for r in rows], dtype=np.int64),
        "discipline": np.array([r.fe_discipline for r in rows]),
    }
    aux = {
        "work_id": np.array([r.work_id for r in rows]),
        "domain": np.array([r.domain for r in rows]),
        "decade": np.array([(r.fe_year // 10) * 10 for r in rows], dtype=np.int64),
    }
    return Dataset(columns=columns, fe=fe, n=n), aux


def main_specs(se_type: str) -> dict[str, ModelSpec]:
    return {
        "novelty": ModelSpec(
            name="novelty", outcome="novelty_dv", regressor_of_interest="bsf",
            controls=CONTROLS, fe=FE_MAIN, family="logit", se_type=se_type),
        "raostirling": ModelSpec(
            name="raostirling", outcome="rs_dv", regressor_of_interest="bsf",
            controls=CONTROLS, fe=FE_MAIN, family="linear", se_type=se_type),
    }


def robustness_specs(se_type: str) -> list[ModelSpec]:
    return [
        ModelSpec(name="no_author_fe_novelty", outcome="novelty_dv",
                  regressor_of_interest="bsf", controls=CONTROLS,
                  fe=("year", "discipline"), family="logit", se_type=se_type),
        ModelSpec(name="no_author_fe_raostirling", outcome="rs_dv",
                  regressor_of_interest="bsf", controls=CONTROLS,
                  fe=("year", "discipline"), family="linear", se_type=se_type),
        ModelSpec(name="n_facilities_novelty", outcome="novelty_dv",
                  regressor_of_interest="n_facilities", controls=CONTROLS,
                  fe=FE_MAIN, family="logit", se_type=se_type),
        ModelSpec(name="n_facilities_raostirling", outcome="rs_dv",
                  regressor_of_interest="n_facilities", controls=CONTROLS,
                  fe=FE_MAIN, family="linear", se_type=se_type),
        ModelSpec(name="new_word", outcome="new_word_dv",
                  regressor_of_interest="bsf", controls=CONTROLS,
                  fe=FE_MAIN, family="logit", se_type=se_type),
        ModelSpec(name="new_phrase", outcome="new_phrase_dv",
                  regressor_of_interest="bsf", controls=CONTROLS,
                  fe=FE_MAIN, family="logit", se_type=se_type),
    ]


def fit_to_dict(result: FitResult) -> dict:
    coefs = {}
    for term in result.col_names:
        p = result.pvalue(term)
        coefs[term] = {
            "coef": result.coef[term],
            "se": result.se[term],
            "p": p,
            "stars": stars(p),
        }
    return {
        "name": result.spec.name,
        "outcome": result.spec.outcome,
        "regressor_of_interest": result.spec.regressor_of_interest,
        "family": result.spec.family,
        "se_type": result.spec.se_type,
        "fe": list(result.spec.fe),
        "controls": list(result.spec.controls),
        "coefficients": coefs,
        "n_obs_input": result.n_obs_input,
        "n_obs_used": result.n_obs_used,
        "n_dropped_separation": result.n_dropped_separation,
        "dropped_collinear": result.dropped_collinear,
        "r2": result.r2,
        "pseudo_r2": result.pseudo_r2,
        "converged": result.converged,
        "df_resid": result.df_resid,
        "fe_level_counts": result.fe_level_counts,
        "stars_legend": STARS_LEGEND,
    }


def write_fit_json(result: FitResult, path: Path) -> None:
    path.write_text(json.dumps(fit_to_dict(result), sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def write_margins_csv(margins, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("level,avg_prediction,ci_low,ci_high\n")
        for m in margins:
            fh.write(f"{m.level_label},{_fmt(m.avg_prediction)},{_fmt(m.ci_low)},{_fmt(m.ci_high)}\n")


def write_coef_table(fits: list[FitResult], path: Path) -> None:
    """Long-form coefficient table with the stars legend in the header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# significance codes: {STARS_LEGEND}\n")
        fh.write("model,term,coef,se,p,stars\n")
        for f in fits:
            for term in f.col_names:
                p = f.pvalue(term)
                fh.write(f"{f.spec.name},{term},{_fmt(f.coef[term])},{_fmt(f.se[term])},{_fmt(p)},{stars(p)}\n")


def write_stats_table(fits: list[FitResult], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("model,family,n_obs_input,n_obs_used,n_dropped_separation,r2,pseudo_r2,converged\n")
        for f in fits:
            dropped = sum(f.n_dropped_separation.values())
            fh.write(
                f"{f.spec.name},{f.spec.family},{f.n_obs_input},{f.n_obs_used},"
                f"{dropped},{_fmt(f.r2)},{_fmt(f.pseudo_r2)},{_fmt(f.converged)}\n"
            )


@dataclass
class StageTimer:
    timings: dict[str, float]

    def time(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()
                return self_inner

            def __exit__(self_inner, *exc):
                timer.timings[name] = time.perf_counter() - self_inner.t0
                return False

        return _Ctx()


class Pipeline:
    """One run directory with its config, seed, and thread budget."""

    def __init__(self, out_dir: str | Path, config: RunConfig | None = None,
                 seed: int | None = None, threads: int = 1):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config = config or RunConfig()
        self.seed = seed
        self.threads = max(1, threads)
        self.timings: dict[str, float] = {}
        self.input_digests: dict[str, str] = {}

    # -- helpers ---------------------------------------------------------

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def _require(self, name: str, stage: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise StageMissingError(f"missing {name}; run stage '{stage}' first")
        return p

    def _novelty_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        return self.config.get_int("novelty.seed")

    def _load_corpus(self) -> Corpus:
        path = self._require("corpus.fmx", "ingest")
        _, payload = read_cache(path)
        return corpus_from_columns(payload)

    def _expanded(self, corpus: Corpus) -> Corpus:
        expanded, _ = expand_by_last_author(corpus)
        return expanded

    # -- stages ----------------------------------------------------------

    def stage_synth(self, synth_config: SynthConfig) -> list[str]:
        with StageTimer(self.timings).time("synth"):
            result = gen_corpus(synth_config)
            write_corpus_jsonl(result.corpus, self.path("works.jsonl"))
            write_facility_csv(result.facility_entries, self.path("facilities.csv"))
            write_truth_csv(result.truth, result.params, self.path("truth.csv"))
        return ["works.jsonl", "facilities.csv", "truth.csv", "truth.csv.params.json"]

    def stage_ingest(self, works: str | Path, facilities: str | Path | None) -> list[str]:
        from .corpus import IngestFilters
        with StageTimer(self.timings).time("ingest"):
            works = Path(works)
            if not works.exists():
                raise InputError(f"works file not found: {works}")
            works_digest = _sha256_file(works)
            self.input_digests["works"] = works_digest
            fac_digest = ""
            if facilities is not None:
                facilities = Path(facilities)
                if not facilities.exists():
                    raise InputError(f"facility list not found: {facilities}")
                fac_digest = _sha256_file(facilities)
                self.input_digests["facilities"] = fac_digest
            combined = hashlib.sha256((works_digest + fac_digest).encode()).hexdigest()

            cache_path = self.path("corpus.fmx")
            if cache_path.exists():
                try:
                    read_cache(cache_path, combined)
                    return ["corpus.fmx"]  # fresh cache, resume
                except Exception:
                    pass

            threshold = self.config.get_float("ingest.error_threshold")
            corpus = ingest_path(works, IngestFilters(error_threshold=threshold))
            unmatched: list = []
            rejects: list = []
            if facilities is not None:
                entries, rejects = load_facility_entries(facilities)
                unmatched = match_facilities(corpus, entries)
            write_cache(cache_path, combined, corpus_to_columns(corpus))
            report = {
                "manifest": corpus.manifest.to_dict(),
                "unmatched_facility_entries": [
                    {"facility_id": e.facility_id, "match_key": e.match_key,
                     "key_value": e.key_value} for e in unmatched
                ],
                "rejected_facility_rows": rejects,
            }
            self.path("ingest_report.json").write_text(
                json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return ["corpus.fmx", "ingest_report.json"]

    def stage_describe(self) -> list[str]:
        with StageTimer(self.timings).time("describe"):
            corpus = self._expanded(self._load_corpus())
            domains = cov.load_field_domains()
            lines = ["year,n_works,n_bsf,bsf_share,bsf_authors,bsf_institutions,"
                     "bsf_countries,active_facilities,subfields_physical,"
                     "subfields_life,subfields_health,subfields_social"]
            for year in corpus.years():
                works = corpus.works_in_year(year)
                bsf_works = [w for w in works if w.is_bsf]
                authors = {a.author_id for w in bsf_works for a in w.authorships}
                insts = {i for w in bsf_works for a in w.authorships for i in a.institution_ids}
                countries = {a.country_code for w in bsf_works for a in w.authorships
                             if a.country_code}
                facilities = {f for w in bsf_works for f in w.facility_ids}
                per_domain = {d: set() for d in ("physical", "life", "health", "social")}
                for w in bsf_works:
                    for sid in w.subfield_shares:
                        fid = cov.field_of_subfield(sid)
                        dom = domains.get(fid) if fid else None
                        if dom:
                            per_domain[dom].add(sid)
                share = len(bsf_works) / len(works) if works else 0.0
                lines.append(
                    f"{year},{len(works)},{len(bsf_works)},{_fmt(share)},"
                    f"{len(authors)},{len(insts)},{len(countries)},{len(facilities)},"
                    f"{len(per_domain['physical'])},{len(per_domain['life'])},"
                    f"{len(per_domain['health'])},{len(per_domain['social'])}"
                )
            self.path("describe.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        return ["describe.csv"]

    def stage_novelty(self) -> list[str]:
        with StageTimer(self.timings).time("metrics-novelty"):
            corpus = self._expanded(self._load_corpus())
            runs = self.config.get_int("novelty.runs")
            multiset = self.config.get_bool("novelty.pair_multiplicity")
            rule = self.config.get("novelty.percentile_rule")
            results, unscored = novelty.score_corpus(
                corpus, runs=runs, seed=self._novelty_seed(), multiset=multiset,
                percentile_rule=rule, threads=self.threads)
            year_of = {w.work_id: w.year for w in corpus}
            with open(self.path("novelty.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write("work_id,year,n_pairs,ns,is_novel\n")
                for r in results:
                    fh.write(f"{r.work_id},{year_of[r.work_id]},{r.n_pairs},"
                             f"{_fmt(r.ns)},{_fmt(r.is_novel)}\n")
            terms = novelty.detect_new_terms(corpus)
            with open(self.path("term_novelty.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write("work_id,new_word,new_phrase\n")
                for t in sorted(terms, key=lambda t: t.work_id):
                    fh.write(f"{t.work_id},{_fmt(t.new_word)},{_fmt(t.new_phrase)}\n")
            self.path("novelty_report.json").write_text(
                json.dumps({"unscored_by_year": {str(k): v for k, v in unscored.items()},
                            "runs": runs, "seed": self._novelty_seed(),
                            "percentile_rule": rule, "pair_multiplicity": multiset},
                           sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return ["novelty.csv", "term_novelty.csv", "novelty_report.json"]

    def stage_rs(self) -> list[str]:
        with StageTimer(self.timings).time("metrics-rs"):
            corpus = self._expanded(self._load_corpus())
            results, excluded = diversity.score_corpus(
                corpus,
                min_links=self.config.get_int("diversity.min_links"),
                fractional=self.config.get_bool("diversity.fractional"),
                unordered=self.config.get_bool("diversity.unordered"),
                symmetric=self.config.get_bool("diversity.symmetric"),
                threads=self.threads)
            with open(self.path("raostirling.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write("work_id,year,n_fields,score,pooled_window\n")
                for r in results:
                    fh.write(f"{r.work_id},{r.year},{r.n_fields},{_fmt(r.score)},"
                             f"{_fmt(r.pooled_window)}\n")
        return ["raostirling.csv"]

    def stage_covariates(self, outcomes_path: str | Path | None = None,
                         north_south: str | Path | None = None,
                         core_journals: str | Path | None = None,
                         field_domains: str | Path | None = None) -> list[str]:
        with StageTimer(self.timings).time("covariates"):
            full = self._load_corpus()
            indices = CorpusIndices.from_corpus(full)
            expanded = self._expanded(full)

            term_path = self.path("term_novelty.csv")
            new_word: dict[str, bool] = {}
            new_phrase: dict[str, bool] = {}
            if term_path.exists():
                with open(term_path, newline="", encoding="utf-8") as fh:
                    for rec in csv.DictReader(fh):
                        new_word[rec["work_id"]] = rec["new_word"] == "true"
                        new_phrase[rec["work_id"]] = rec["new_phrase"] == "true"

            if outcomes_path is not None:
                novelty_map, rs_map = read_truth_outcomes(outcomes_path)
            else:
                nov_path = self._require("novelty.csv", "metrics-novelty")
                rs_path = self._require("raostirling.csv", "metrics-rs")
                novelty_map = {}
                with open(nov_path, newline="", encoding="utf-8") as fh:
                    for rec in csv.DictReader(fh):
                        novelty_map[rec["work_id"]] = rec["is_novel"] == "true"
                rs_map = {}
                with open(rs_path, newline="", encoding="utf-8") as fh:
                    for rec in csv.DictReader(fh):
                        rs_map[rec["work_id"]] = float(rec["score"])

            outcomes = OutcomeTables(
                novelty=novelty_map, rao_stirling=rs_map,
                new_word=new_word or None, new_phrase=new_phrase or None)
            ns_map = cov.load_north_south(north_south)
            core = cov.load_core_journals(core_journals)
            domains = cov.load_field_domains(field_domains)
            rows, exclusions = cov.build_rows(expanded, indices, outcomes, ns_map,
                                              core, domains)
            write_rows_csv(rows, self.path("rows.csv"))
            self.path("exclusions.json").write_text(
                json.dumps({"exclusions": exclusions, "n_rows": len(rows),
                            "n_corpus": len(expanded)}, sort_keys=True, indent=2) + "\n",
                encoding="utf-8")
        return ["rows.csv", "exclusions.json"]

    def _fit_dataset(self) -> tuple[Dataset, dict[str, np.ndarray]]:
        rows = read_rows_csv(self._require("rows.csv", "covariates"))
        return dataset_from_rows(rows)

    def stage_fit_main(self) -> list[str]:
        with StageTimer(self.timings).time("fit-main"):
            dataset, _ = self._fit_dataset()
            se_type = self.config.get("hdfe.se_type")
            fits = []
            files = []
            for name, spec in main_specs(se_type).items():
                result = fit(spec, dataset)
                fits.append(result)
                write_fit_json(result, self.path(f"fit_{name}.json"))
                margins = predict_margins(result, "bsf", BSF_LEVELS)
                write_margins_csv(margins, self.path(f"margins_{name}.csv"))
                files += [f"fit_{name}.json", f"margins_{name}.csv"]
            write_coef_table(fits, self.path("table2.csv"))
            write_stats_table(fits, self.path("table2_stats.csv"))
        return files + ["table2.csv", "table2_stats.csv"]

    def stage_fit_hetero(self) -> list[str]:
        with StageTimer(self.timings).time("fit-hetero"):
            dataset, aux = self._fit_dataset()
            se_type = self.config.get("hdfe.se_type")
            files: list[str] = []
            errors: dict[str, str] = {}
            for name, spec in main_specs(se_type).items():
                decade_lines = ["decade,level,avg_prediction,ci_low,ci_high,n_obs_input,n_obs_used"]
                for decade in sorted(set(aux["decade"].tolist())):
                    mask = aux["decade"] == decade
                    try:
                        result = fit(spec, dataset.subset(mask))
                        for m in predict_margins(result, "bsf", BSF_LEVELS):
                            decade_lines.append(
                                f"{decade},{m.level_label},{_fmt(m.avg_prediction)},"
                                f"{_fmt(m.ci_low)},{_fmt(m.ci_high)},"
                                f"{result.n_obs_input},{result.n_obs_used}")
                    except NumericalError as exc:
                        errors[f"decade_{decade}_{name}"] = str(exc)
                fname = f"hetero_decade_{name}.csv"
                self.path(fname).write_text("\n".join(decade_lines) + "\n", encoding="utf-8")
                files.append(fname)

                domain_lines = ["domain,level,avg_prediction,ci_low,ci_high,n_obs_input,n_obs_used"]
                domain_fits = []
                for domain in ("physical", "life", "health", "social"):
                    mask = aux["domain"] == domain
                    if not mask.any():
                        continue
                    subset_spec = replace(spec, name=f"{spec.name}_{domain}")
                    try:
                        result = fit(subset_spec, dataset.subset(mask))
                        domain_fits.append(result)
                        for m in predict_margins(result, "bsf", BSF_LEVELS):
                            domain_lines.append(
                                f"{domain},{m.level_label},{_fmt(m.avg_prediction)},"
                                f"{_fmt(m.ci_low)},{_fmt(m.ci_high)},"
                                f"{result.n_obs_input},{result.n_obs_used}")
                    except NumericalError as exc:
                        errors[f"domain_{domain}_{name}"] = str(exc)
                fname = f"hetero_domain_{name}.csv"
                self.path(fname).write_text("\n".join(domain_lines) + "\n", encoding="utf-8")
                files.append(fname)
                # S4/S5-shaped per-domain coefficient tables
                write_coef_table_with_labels(domain_fits, self.path(f"hetero_domain_coefs_{name}.csv"))
                files.append(f"hetero_domain_coefs_{name}.csv")
            self.path("hetero_errors.json").write_text(
                json.dumps(errors, sort_keys=True, indent=2) + "\n", encoding="utf-8")
            files.append("hetero_errors.json")
        return files

    def stage_fit_robustness(self) -> list[str]:
        with StageTimer(self.timings).time("fit-robustness"):
            dataset, _ = self._fit_dataset()
            se_type = self.config.get("hdfe.se_type")
            fits = []
            files = []
            for i, spec in enumerate(robustness_specs(se_type), start=1):
                result = fit(spec, dataset)
                fits.append(result)
                write_fit_json(result, self.path(f"fit_robust_{i}_{spec.name}.json"))
                files.append(f"fit_robust_{i}_{spec.name}.json")
            write_coef_table(fits, self.path("table3.csv"))
            write_stats_table(fits, self.path("table3_stats.csv"))
        return files + ["table3.csv", "table3_stats.csv"]

    def write_manifest(self, outputs: list[str]) -> None:
        digests = {}
        for name in sorted(set(outputs)):
            p = self.path(name)
            if p.exists():
                digests[name] = _sha256_file(p)
        manifest = {
            "software_version": __version__,
            "config_digest": self.config.digest(),
            "seed": self.seed,
            "input_digests": self.input_digests,
            "output_digests": digests,
            "volatile": {"timings": self.timings, "threads": self.threads},
        }
        self.path("run_manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    def run_all(self, works: str | Path, facilities: str | Path | None,
                outcomes_path: str | Path | None = None,
                north_south: str | Path | None = None,
                core_journals: str | Path | None = None,
                field_domains: str | Path | None = None) -> list[str]:
        outputs = []
        outputs += self.stage_ingest(works, facilities)
        outputs += self.stage_describe()
        outputs += self.stage_novelty()
        outputs += self.stage_rs()
        outputs += self.stage_covariates(outcomes_path, north_south,
                                         core_journals, field_domains)
        outputs += self.stage_fit_main()
        outputs += self.stage_fit_hetero()
        outputs += self.stage_fit_robustness()
        self.write_manifest(outputs)
        return outputs + ["run_manifest.json"]


def write_coef_table_with_labels(fits: list[FitResult], path: Path) -> None:
    """Coefficient table for a list of subset fits, keyed by fit name and
    sample sizes; used for the per-domain tables."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# significance codes: {STARS_LEGEND}\n")
        fh.write("model,n_obs_input,n_obs_used,term,coef,se,p,stars\n")
        for f in fits:
            for term in f.col_names:
                p = f.pvalue(term)
                fh.write(f"{f.spec.name},{f.n_obs_input},{f.n_obs_used},"
                         f"{term},{_fmt(f.coef[term])},{_fmt(f.se[term])},{_fmt(p)},{stars(p)}\n")


def manifest_stable_view(manifest: dict) -> dict:
    """Manifest minus the volatile section, for reproducibility checks."""
    return {k: v for k, v in manifest.items() if k != "volatile"}
