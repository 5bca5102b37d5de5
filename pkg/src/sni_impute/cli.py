#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Command-line entry point for SNI Impute.

Subcommands:
    impute     Fill the missing cells of a CSV and write a run report
    inject     Hide cells of a complete CSV under MCAR/MAR/MNAR
    benchmark  Compare imputers on injected missingness
    sanity     Dependency-recovery experiment on synthetic tables
    explain    Export dependency artifacts from a run report
"""

import argparse
import json
import logging
import sys
from typing import Any, List, Optional, Sequence

import numpy as np

from . import __version__
from .benchmark import METHODS, run_benchmark, summarize
from .config_manager import ConfigManager
from .dependency_diagnostics import DependencyMatrix, edge_list, hubness_map
from .error_handler import ConfigError, ErrorHandler, UsageError
from .log_formatter import setup_logger
from .missingness import InjectionSpec, inject, truth_to_json
from .sni_engine import SniImputer
from .synth_sanity import REGIMES, VARIANTS, SanityReport, SynthSpec, run_sanity
from .tabular_core import load_csv, load_schema, write_csv

logger = logging.getLogger('cli')


class ArgumentParser(argparse.ArgumentParser):
    """argparse without the implicit exit, so usage errors map onto exit code 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _str_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--log-json", dest="log_json", action="store_true", default=None,
                        help="Emit one JSON object per log record")
    common.add_argument("--deterministic", action="store_true", default=None,
                        help="Single-threaded run without timestamps in any artifact")
    common.add_argument("--workers", type=int, help="Per-feature training threads")
    common.add_argument("--seed", type=int, help="Seed of partitioning, masking and training")
    common.add_argument("--error-log", dest="error_log_path", help="Append error records to this JSON file")

    parser = ArgumentParser(prog="sni", description="Statistical-neural interaction imputation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser("impute", parents=[common], help="Impute a CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--mask-aware", dest="mask_aware", action="store_true", default=None)

    p = sub.add_parser("inject", parents=[common], help="Inject missingness into a complete CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--mechanism", required=True, choices=["mcar", "mar", "mnar"])
    p.add_argument("--rate", required=True, type=float)
    p.add_argument("--anchors", type=_str_list, default=None,
                   help="Always-observed MAR drivers (default: first feature)")
    p.add_argument("--out", required=True)
    p.add_argument("--truth", required=True)

    p = sub.add_parser("benchmark", parents=[common], help="Compare imputers")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--mechanisms", type=_str_list, default=["mcar", "mar"])
    p.add_argument("--rates", type=_float_list, default=[0.1, 0.3, 0.5])
    p.add_argument("--methods", type=_str_list, default=["sni", "meanmode", "knn"])
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 5, 8])
    p.add_argument("--anchors", type=_str_list, default=None)
    p.add_argument("--dataset", default=None, help="Dataset label (default: data file name)")
    p.add_argument("--out", required=True)
    p.add_argument("--summary", help="Summary JSON with mean/SD and average ranks")

    p = sub.add_parser("sanity", parents=[common], help="Synthetic dependency recovery")
    p.add_argument("--regime", default="all", choices=("all",) + REGIMES)
    p.add_argument("--variants", type=_str_list, default=list(VARIANTS))
    p.add_argument("--seeds", type=_int_list, default=[1, 2, 3, 5, 8])
    p.add_argument("--rate", type=float, default=0.3)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d", type=int, default=12)
    p.add_argument("--out", required=True)

    p = sub.add_parser("explain", parents=[common], help="Export dependency artifacts")
    p.add_argument("--report", required=True)
    p.add_argument("--out-depmatrix", dest="out_depmatrix")
    p.add_argument("--out-edges", dest="out_edges")
    p.add_argument("--out-lambdas", dest="out_lambdas")
    p.add_argument("--out-priors", dest="out_priors")
    p.add_argument("--out-hubness", dest="out_hubness")
    p.add_argument("--min-weight", dest="min_weight", type=float, default=0.0)
    return parser


def _write_json(payload: Any, path: str):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_config(args, error_handler: ErrorHandler) -> ConfigManager:
    overrides = {
        "log_level": args.log_level,
        "log_json": args.log_json,
        "deterministic": args.deterministic,
        "workers": args.workers,
        "seed": args.seed,
        "mask_aware": getattr(args, "mask_aware", None),
        "error_log_path": args.error_log_path,
    }
    return ConfigManager(config_path=args.config, overrides=overrides, error_handler=error_handler)


def _load_table(args, config: ConfigManager):
    schema = load_schema(args.schema)
    return load_csv(args.data, schema, config.get_config("missing_tokens"))


def cmd_impute(args, config: ConfigManager, error_handler: ErrorHandler) -> int:
    table = _load_table(args, config)
    sni_config = config.sni_config()
    result = SniImputer(sni_config, error_handler=error_handler).run(table)
    write_csv(result.imputed, args.out)
    _write_json(result.to_report(config.as_dict(), sni_config.seed), args.report)
    logger.info(f"Wrote {args.out} and {args.report} after {result.iterations} iterations")
    return ErrorHandler.EXIT_OK


def cmd_inject(args, config: ConfigManager, error_handler: ErrorHandler) -> int:
    table = _load_table(args, config)
    anchors = tuple(args.anchors) if args.anchors else ((0,) if args.mechanism == "mar" else ())
    spec = InjectionSpec(args.mechanism, args.rate, seed=config.get_config("seed"), anchor_features=anchors)
    masked, truth = inject(table, spec)
    write_csv(masked, args.out)
    truth_to_json(truth, args.truth)
    return ErrorHandler.EXIT_OK


def cmd_benchmark(args, config: ConfigManager, error_handler: ErrorHandler) -> int:
    unknown = [m for m in args.methods if m not in METHODS]
    if unknown:
        raise UsageError(f"--methods: unknown methods {unknown}; choose from {', '.join(METHODS)}")
    table = _load_table(args, config)
    dataset = args.dataset or args.data.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    results = run_benchmark(
        table, dataset=dataset, mechanisms=args.mechanisms, rates=args.rates,
        methods=args.methods, seeds=args.seeds, config=config.sni_config(),
        anchors=tuple(args.anchors) if args.anchors else (0,),
        knn_k=config.get_config("knn_k"),
    )
    results.to_csv(args.out, index=False, lineterminator="\n", float_format="%.10g")
    if args.summary:
        summary = summarize(results)
        summary["config"] = config.as_dict()
        _write_json(summary, args.summary)
    logger.info(f"Wrote {len(results)} benchmark rows to {args.out}")
    return ErrorHandler.EXIT_OK


def cmd_sanity(args, config: ConfigManager, error_handler: ErrorHandler) -> int:
    unknown = [v for v in args.variants if v not in VARIANTS]
    if unknown:
        raise UsageError(f"--variants: unknown variants {unknown}; choose from {', '.join(VARIANTS)}")
    regimes = REGIMES if args.regime == "all" else (args.regime,)
    report = SanityReport()
    for regime in regimes:
        run_sanity(SynthSpec(regime, n=args.n, d=args.d), args.variants, rate=args.rate,
                   seeds=args.seeds, config=config.sni_config(), report=report)
    payload = report.to_dict()
    payload["config"] = config.as_dict()
    _write_json(payload, args.out)
    return ErrorHandler.EXIT_OK


def cmd_explain(args, config: ConfigManager, error_handler: ErrorHandler) -> int:
    with open(args.report, "r") as f:
        report = json.load(f)
    names = tuple(report["features"])
    dependency = DependencyMatrix(np.asarray(report["dependency"], dtype=np.float64), names)
    if not any([args.out_depmatrix, args.out_edges, args.out_lambdas, args.out_priors, args.out_hubness]):
        raise UsageError("explain: give at least one --out-* flag")

    if args.out_depmatrix:
        dependency.to_frame().to_csv(args.out_depmatrix, lineterminator="\n", float_format="%.17g")
    if args.out_edges:
        _write_json(edge_list(dependency, args.min_weight), args.out_edges)
    if args.out_lambdas:
        _write_json(report.get("lambdas", {}), args.out_lambdas)
    if args.out_priors:
        priors = DependencyMatrix(np.asarray(report["priors"], dtype=np.float64), names)
        priors.to_frame().to_csv(args.out_priors, lineterminator="\n", float_format="%.17g")
    if args.out_hubness:
        _write_json(hubness_map(dependency), args.out_hubness)
    return ErrorHandler.EXIT_OK


COMMANDS = {
    "impute": cmd_impute,
    "inject": cmd_inject,
    "benchmark": cmd_benchmark,
    "sanity": cmd_sanity,
    "explain": cmd_explain,
}


def command_error_handler(config: ConfigManager) -> ErrorHandler:
    """Handler for one subcommand: configured error log, errors re-raised for the exit code."""
    return ErrorHandler(config={
        "error_log_path": config.get_config("error_log_path"),
        "deterministic": config.get_config("deterministic"),
        "reraise_exceptions": True,
    })


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and run one subcommand.

    Returns:
        0 on success, 2 for usage errors, 1 for any other failure
    """
    error_handler = ErrorHandler()
    try:
        args = build_parser().parse_args(argv)
        config = _load_config(args, error_handler)
        setup_logger(config.get_config("log_level"), config.get_config("log_json"),
                     config.get_config("deterministic"))
        command_handler = command_error_handler(config)
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else ErrorHandler.EXIT_OK
    except ConfigError as e:
        # already recorded by the config manager
        return error_handler.exit_code(e)
    except Exception as e:
        error_handler.handle_error(type(e).__name__, str(e), e)
        return error_handler.exit_code(e)

    error_handler = command_handler
    command = error_handler.error_decorator(f"{args.command}_failed")(COMMANDS[args.command])
    try:
        return command(args, config, error_handler)
    except Exception as e:
        return error_handler.exit_code(e)
    finally:
        if error_handler.records:
            summary = error_handler.get_error_summary()
            logger.info(f"{summary['total_errors']} error record(s): {summary['by_type']}")


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
