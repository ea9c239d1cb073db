"""Command-line entry point.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 missing
upstream stage output.
"""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig, load_config
from .errors import InputError, NumericalError, StageMissingError
from .pipeline import Pipeline
from .synth import SynthConfig


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value config file")
    common.add_argument("--seed", type=int, default=None, help="run seed")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out-dir", default=".", help="run directory")
    return common


def _add_synth_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-papers", type=int, default=5000)
    p.add_argument("--n-authors", type=int, default=200)
    p.add_argument("--n-years", type=int, default=10)
    p.add_argument("--n-journals", type=int, default=40)
    p.add_argument("--n-subfields", type=int, default=27)
    p.add_argument("--bsf-share", type=float, default=0.1)
    p.add_argument("--logit-effect", type=float, default=0.084)
    p.add_argument("--rs-effect", type=float, default=0.003)
    p.add_argument("--refs-per-paper", type=int, default=8)


def _add_input_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--works", required=True, help="JSONL works file")
    p.add_argument("--facilities", default=None, help="facility list CSV")


def _add_covariate_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--outcomes", default=None,
                   help="truth.csv with planted outcomes overriding the metric outputs")
    p.add_argument("--north-south", default=None)
    p.add_argument("--core-journals", default=None)
    p.add_argument("--field-domains", default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="facmetrics",
                                     description="facility-usage metrics pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    _add_synth_args(p)

    p = sub.add_parser("ingest", parents=[common], help="parse and cache the corpus")
    _add_input_args(p)

    sub.add_parser("describe", parents=[common], help="per-year descriptive counts")
    sub.add_parser("metrics-novelty", parents=[common], help="novelty scores")
    sub.add_parser("metrics-rs", parents=[common], help="diversity scores")

    p = sub.add_parser("covariates", parents=[common], help="regression rows")
    _add_covariate_args(p)

    sub.add_parser("fit-main", parents=[common], help="main models and margins")
    sub.add_parser("fit-hetero", parents=[common], help="decade and domain splits")
    sub.add_parser("fit-robustness", parents=[common], help="robustness models")

    p = sub.add_parser("all", parents=[common], help="run the full pipeline")
    _add_input_args(p)
    _add_covariate_args(p)
    return parser


def run(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else RunConfig()
    pipe = Pipeline(args.out_dir, config=config, seed=args.seed, threads=args.threads)

    if args.command == "synth":
        synth_config = SynthConfig(
            seed=args.seed if args.seed is not None else 0,
            n_papers=args.n_papers, n_authors=args.n_authors,
            n_years=args.n_years, n_journals=args.n_journals,
            n_subfields=args.n_subfields, bsf_share=args.bsf_share,
            planted_logit_effect=args.logit_effect,
            planted_rs_effect=args.rs_effect,
            refs_per_paper=args.refs_per_paper,
        )
        files = pipe.stage_synth(synth_config)
    elif args.command == "ingest":
        files = pipe.stage_ingest(args.works, args.facilities)
    elif args.command == "describe":
        files = pipe.stage_describe()
    elif args.command == "metrics-novelty":
        files = pipe.stage_novelty()
    elif args.command == "metrics-rs":
        files = pipe.stage_rs()
    elif args.command == "covariates":
        files = pipe.stage_covariates(args.outcomes, args.north_south,
                                      args.core_journals, args.field_domains)
    elif args.command == "fit-main":
        files = pipe.stage_fit_main()
    elif args.command == "fit-hetero":
        files = pipe.stage_fit_hetero()
    elif args.command == "fit-robustness":
        files = pipe.stage_fit_robustness()
    elif args.command == "all":
        files = pipe.run_all(args.works, args.facilities, args.outcomes,
                             args.north_south, args.core_journals,
                             args.field_domains)
    else:  # pragma: no cover
        raise InputError(f"unknown command {args.command}")

    for name in files:
        print(pipe.path(name))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except StageMissingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
