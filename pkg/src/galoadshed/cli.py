"""Command-line entry point.

Subcommands: ``run`` (one experiment), ``bench`` (worker-count sweep),
``rules`` (list or validate rule tables), ``report`` (rebuild the summary
from persisted files and render figures).  Exit codes: 0 on success, 2 for
configuration problems, 3 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import (
    GaloadshedError,
    InvalidConfigError,
    OverConstrainedError,
    UnknownProblemError,
)
from .experiment import ExperimentConfig, bench, run_experiment
from .ga import GaConfig
from .reasoning import default_rules, load_rules_file
from .report import format_summary, report
from .simulation import FaultSpec, SimConfig, worker_name

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

_RUN_DEFAULTS = {
    "pop": 50,
    "gens": 100,
    "workers": 4,
    "seed": 0,
    "sim_seed": 0,
    "mutation_rate": 0.1,
    "mutation_sigma": None,
    "selection_fraction": 0.5,
    "elitism": 1,
    "weights": None,
    "per_eval_cost_ms": 100,
    "latency_ms": "1,5",
    "fault": [],
    "rules": None,
    "out": "out",
    "transport": "sim",
    "buffered": False,
    "job_timeout_ms": None,
    "generation_budget_ms": None,
}


def _parse_weights(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise InvalidConfigError(f"bad weights {text!r}: {exc}") from exc


def _parse_latency(value) -> tuple[int, int]:
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = str(value).split(",")
    if len(parts) != 2:
        raise InvalidConfigError(f"latency must be min,max, got {value!r}")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise InvalidConfigError(f"bad latency {value!r}: {exc}") from exc
    if not 0 <= lo <= hi:
        raise InvalidConfigError(f"latency bounds must satisfy 0 <= min <= max, got {value!r}")
    return lo, hi


def _parse_fault(text: str) -> FaultSpec:
    """worker:job_ordinal, with the worker as a 1-based index or a full id."""
    worker, sep, ordinal = text.partition(":")
    if not sep:
        raise InvalidConfigError(f"fault must be worker:job_ordinal, got {text!r}")
    if worker.isdigit():
        worker = worker_name(int(worker))
    try:
        n = int(ordinal)
    except ValueError as exc:
        raise InvalidConfigError(f"bad fault ordinal in {text!r}") from exc
    if n < 1:
        raise InvalidConfigError(f"fault ordinal must be >= 1, got {text!r}")
    return FaultSpec(worker=worker, stall_on_ordinal=n)


def _parse_sweep(text: str) -> list[int]:
    try:
        sweep = [int(part) for part in text.split(",")]
    except ValueError as exc:
        raise InvalidConfigError(f"bad workers sweep {text!r}: {exc}") from exc
    if not sweep or any(k < 1 for k in sweep):
        raise InvalidConfigError(f"workers sweep must be positive integers, got {text!r}")
    return sweep


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    # Defaults stay None here so config-file values can fill unset flags;
    # _RUN_DEFAULTS applies last.
    parser.add_argument("--problem", help="problem name, e.g. sphere-5")
    parser.add_argument("--pop", type=int, help="population size")
    parser.add_argument("--gens", type=int, help="generation count")
    parser.add_argument("--workers", type=int, help="simulated worker count")
    parser.add_argument("--seed", type=int, help="GA random seed")
    parser.add_argument("--sim-seed", type=int, help="simulation latency seed")
    parser.add_argument("--mutation-rate", type=float)
    parser.add_argument("--mutation-sigma", type=float)
    parser.add_argument("--selection-fraction", type=float)
    parser.add_argument("--elitism", type=int)
    parser.add_argument("--weights", help="objective weights, e.g. 1.0,2.0")
    parser.add_argument("--per-eval-cost-ms", type=int)
    parser.add_argument("--latency-ms", help="dispatch/return latency range, e.g. 1,5")
    parser.add_argument(
        "--fault",
        action="append",
        help="stall a worker on its n-th job (worker:job_ordinal); repeatable",
    )
    parser.add_argument("--rules", help="JSON rules file replacing the default table")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--transport", choices=["sim", "tcp"])
    parser.add_argument("--buffered", action="store_true", default=None)
    parser.add_argument("--job-timeout-ms", type=int)
    parser.add_argument("--generation-budget-ms", type=int)
    parser.add_argument("--config", help="JSON config file; flags override its keys")


def _merge_config(args: argparse.Namespace, extra_keys: dict | None = None) -> dict:
    """Flag values, falling back to --config file values, then defaults."""
    defaults = dict(_RUN_DEFAULTS)
    if extra_keys:
        defaults.update(extra_keys)
    from_file: dict = {}
    if args.config:
        try:
            from_file = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise InvalidConfigError(f"cannot read config file {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"bad JSON in {args.config}: {exc}") from exc
        if not isinstance(from_file, dict):
            raise InvalidConfigError("config file must hold a JSON object")
        unknown = set(from_file) - set(defaults) - {"problem"}
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged = {}
    for key in list(defaults) + ["problem"]:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in from_file:
            merged[key] = from_file[key]
        else:
            merged[key] = defaults.get(key)
    return merged


def _experiment_config(merged: dict) -> ExperimentConfig:
    if not merged.get("problem"):
        raise InvalidConfigError("--problem is required (flag or config file)")
    weights = merged["weights"]
    if isinstance(weights, str):
        weights = _parse_weights(weights)
    elif isinstance(weights, list):
        weights = tuple(float(w) for w in weights)
    faults = []
    for item in merged["fault"] or []:
        faults.append(item if isinstance(item, FaultSpec) else _parse_fault(item))
    ga = GaConfig(
        population_size=merged["pop"],
        generations=merged["gens"],
        selection_fraction=merged["selection_fraction"],
        mutation_rate=merged["mutation_rate"],
        mutation_sigma=merged["mutation_sigma"],
        elitism_count=merged["elitism"],
        seed=merged["seed"],
        weights=weights,
    )
    try:
        sim = SimConfig(
            workers=merged["workers"],
            per_eval_cost_ms=merged["per_eval_cost_ms"],
            latency_ms=_parse_latency(merged["latency_ms"]),
            fault_plan=tuple(faults),
            sim_seed=merged["sim_seed"],
        )
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc
    try:
        return ExperimentConfig(
            problem=merged["problem"],
            ga=ga,
            sim=sim,
            job_timeout_ms=merged["job_timeout_ms"],
            generation_budget_ms=merged["generation_budget_ms"],
            buffered=bool(merged["buffered"]),
            transport=merged["transport"],
        )
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc


def _load_rules(path: str | None):
    return load_rules_file(path) if path else default_rules()


def _cmd_run(args: argparse.Namespace) -> int:
    merged = _merge_config(args)
    config = _experiment_config(merged)
    rules = _load_rules(merged["rules"])
    outcome = run_experiment(config, merged["out"], rules=rules)
    print(format_summary(outcome.metrics.summary))
    print(f"wrote {outcome.out_dir}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    merged = _merge_config(args, extra_keys={"workers_sweep": "1,2,4,8"})
    sweep_value = merged["workers_sweep"]
    sweep = (
        _parse_sweep(sweep_value)
        if isinstance(sweep_value, str)
        else [int(k) for k in sweep_value]
    )
    config = _experiment_config(merged)
    table = bench(config, sweep, merged["out"])
    print("workers  total_sim_time_ms  speedup_vs_one_worker")
    for row in table:
        print(
            f"{row['workers']:>7}  {row['total_sim_time_ms']:>17}  "
            f"{row['speedup_vs_one_worker']:>21.3f}"
        )
    print(f"wrote {Path(merged['out']) / 'bench.csv'}")
    return EXIT_OK


def _cmd_rules(args: argparse.Namespace) -> int:
    if args.action == "list":
        rules = _load_rules(args.rules)
        print(f"revision {rules.revision}, {len(rules.rules)} rules")
        for rule in rules.rules:
            pattern = " ".join(
                f"{k}={v}" for k, v in rule.pattern.attributes.items()
            )
            params = " ".join(
                f"{k}={v}" for k, v in rule.decision_template.parameters.items()
            )
            line = (
                f"{rule.priority:>4}  {rule.id:<28} {rule.pattern.kind}"
                f"{' [' + pattern + ']' if pattern else ''}"
                f" -> {rule.decision_template.action}"
            )
            if params:
                line += f" ({params})"
            print(line)
        return EXIT_OK
    # reload: parse and validate the file, as a running master would on reload
    if not args.rules:
        raise InvalidConfigError("rules reload requires --rules <file>")
    rules = load_rules_file(args.rules)
    print(f"ok: {len(rules.rules)} rules loaded from {args.rules}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    print(report(args.out, figures=not args.no_figures))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="galoadshed",
        description="Distributed genetic-algorithm runner with rule-based scheduling",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one experiment")
    _add_run_arguments(run_parser)
    run_parser.set_defaults(handler=_cmd_run)

    bench_parser = sub.add_parser("bench", help="sweep worker counts, emit speedups")
    _add_run_arguments(bench_parser)
    bench_parser.add_argument(
        "--workers-sweep", dest="workers_sweep", help="comma-separated counts, e.g. 1,2,4,8"
    )
    bench_parser.set_defaults(handler=_cmd_bench)

    rules_parser = sub.add_parser("rules", help="inspect or validate rule tables")
    rules_parser.add_argument("action", choices=["list", "reload"])
    rules_parser.add_argument("--rules", help="JSON rules file")
    rules_parser.set_defaults(handler=_cmd_rules)

    report_parser = sub.add_parser("report", help="summarize a finished run")
    report_parser.add_argument("--out", required=True, help="run output directory")
    report_parser.add_argument("--no-figures", action="store_true")
    report_parser.set_defaults(handler=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (InvalidConfigError, UnknownProblemError, OverConstrainedError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GaloadshedError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
