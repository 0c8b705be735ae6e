import argparse
import json
import os
import sys
from typing import List, Optional

import pandas as pd

from config import BENCHMARK_CONFIG, MODEL_KINDS, REFERENCE_GAMMAS, SYNTH_CONFIG
from models.serialization import save_model
from src.core_data import PenaltyConfig, fit_standardizer, load_dataset, standardize
from src.longitudinal_features import extract_features
from src.orchestrator import run_benchmark
from src.run_store import RunStore
from src.selection import default_gamma_grid, fit_model, kfold_cv
from src.synth import SynthConfig, synth_generate, synth_series
from util.errors import DataError, PrognosisError, UsageError
from util.logger import get_logger, set_global_level

logger = get_logger(__name__)


class PrognosisBench:
    """Entry points behind each CLI subcommand."""

    def synth(self, args) -> None:
        config = SynthConfig(n=args.n, d=args.d, sparsity=args.sparsity, rate_high=args.rate_high,
                             rate_low=args.rate_low, censor_rate=args.censor_rate, seed=args.seed,
                             n_binary=args.binary)
        data, truth = synth_generate(config)
        os.makedirs(args.out_dir, exist_ok=True)
        data.to_frame().to_csv(os.path.join(args.out_dir, "covariates.csv"), index=False, float_format="%.10g")
        pd.DataFrame({"subject_id": list(data.subject_ids), "group": truth.groups,
                      "event_time": truth.event_times}).to_csv(
            os.path.join(args.out_dir, "latent.csv"), index=False, float_format="%.10g")
        if args.series:
            synth_series(data.subject_ids, truth.groups, seed=args.seed).to_csv(
                os.path.join(args.out_dir, "series.csv"), index=False, float_format="%.10g")
        logger.info(f"Synthetic data written to {args.out_dir}")

    def features(self, args) -> None:
        try:
            series = pd.read_csv(args.series)
        except (OSError, pd.errors.ParserError) as e:
            raise DataError(f"cannot read series table '{args.series}': {e}") from e
        table = extract_features(series, args.window, args.threshold, args.seed, args.n_jobs)
        table.to_csv(args.out, float_format="%.10g")
        logger.info(f"Wrote {table.shape[1]} features for {table.shape[0]} subjects to {args.out}")

    def _standardized(self, args):
        data = load_dataset(args.data, seed=args.seed)
        return standardize(data, fit_standardizer(data))

    def fit(self, args) -> None:
        data = self._standardized(args)
        gamma = REFERENCE_GAMMAS[args.model] if args.gamma is None else args.gamma
        model = fit_model(args.model, data, PenaltyConfig(gamma, args.eta), args.epsilon, args.seed)
        save_model(model, data.names, args.out)
        logger.info(f"[{args.model}] model saved to {args.out}")

    def cv(self, args) -> None:
        data = self._standardized(args)
        grid = args.grid or default_gamma_grid()
        result = kfold_cv(data, args.model, grid, eta=args.eta, k=args.folds, seed=args.seed,
                          epsilon=args.epsilon, n_jobs=args.n_jobs)
        print(json.dumps(result.to_dict(), indent=2, sort_keys=True))

    def bench(self, args) -> None:
        _, directory = run_benchmark(args.config, reuse=args.reuse)
        print(directory)

    def report(self, args) -> None:
        report = RunStore.retrieve_run(args.run_dir)
        written = report.write_tables(args.out or args.run_dir)
        for path in written:
            print(path)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prognosis-bench", description="Penalized binary and survival prognosis benchmark")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    synth = commands.add_parser("synth", help="write a synthetic cohort")
    synth.add_argument("--out-dir", required=True)
    synth.add_argument("--n", type=int, default=SYNTH_CONFIG["n"])
    synth.add_argument("--d", type=int, default=SYNTH_CONFIG["d"])
    synth.add_argument("--sparsity", type=int, default=SYNTH_CONFIG["sparsity"])
    synth.add_argument("--rate-high", type=float, default=SYNTH_CONFIG["rate_high"])
    synth.add_argument("--rate-low", type=float, default=SYNTH_CONFIG["rate_low"])
    synth.add_argument("--censor-rate", type=float, default=SYNTH_CONFIG["censor_rate"])
    synth.add_argument("--binary", type=int, default=0, help="number of binary covariates")
    synth.add_argument("--series", action="store_true", help="also write long-format vitals")
    synth.add_argument("--seed", type=int, default=SYNTH_CONFIG["seed"])

    features = commands.add_parser("features", help="long-format series to a feature table")
    features.add_argument("--series", required=True)
    features.add_argument("--out", required=True)
    features.add_argument("--window", type=float, default=None)
    features.add_argument("--threshold", type=float, default=None)
    features.add_argument("--seed", type=int, default=BENCHMARK_CONFIG["seed"])
    features.add_argument("--n-jobs", type=int, default=BENCHMARK_CONFIG["n_jobs"])

    for name, help_text in (("fit", "fit one model"), ("cv", "cross-validate gamma for one model")):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--data", required=True)
        sub.add_argument("--model", required=True, choices=MODEL_KINDS)
        sub.add_argument("--eta", type=float, default=BENCHMARK_CONFIG["eta"])
        sub.add_argument("--epsilon", type=float, default=BENCHMARK_CONFIG["epsilon"])
        sub.add_argument("--seed", type=int, default=BENCHMARK_CONFIG["seed"])
        if name == "fit":
            sub.add_argument("--gamma", type=float, default=None, help="defaults to the reference value")
            sub.add_argument("--out", required=True)
        else:
            sub.add_argument("--grid", type=float, nargs="+", default=None)
            sub.add_argument("--folds", type=int, default=BENCHMARK_CONFIG["cv_folds"])
            sub.add_argument("--n-jobs", type=int, default=BENCHMARK_CONFIG["n_jobs"])

    bench = commands.add_parser("bench", help="full benchmark run from a JSON config")
    bench.add_argument("--config", required=True)
    bench.add_argument("--reuse", action="store_true", help="reload a stored run with the same inputs")

    report = commands.add_parser("report", help="re-emit the tables of a stored run")
    report.add_argument("--run-dir", required=True)
    report.add_argument("--out", default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            set_global_level(args.log_level)
        getattr(PrognosisBench(), args.command)(args)
        return 0
    except PrognosisError as e:
        logger.error(str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
