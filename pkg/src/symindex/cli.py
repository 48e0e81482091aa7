"""Command line entry point: ``symindex run`` and ``symindex verify``."""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import __version__
from .errors import ContractError, ScenarioError, SymIndexError
from .report import (
    DEFAULT_N,
    DEFAULT_STEPS,
    IndexReport,
    PlotData,
    Scenario,
    plot_to_csv,
    report_to_text,
    reports_to_csv,
    reports_to_json,
    run_scenario,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONTRACT = 2
EXIT_NUMERICAL = 3

DEFAULTS: dict[str, Any] = {
    "scenario": [],
    "steps": DEFAULT_STEPS,
    "galerkin_n": DEFAULT_N,
    "format": "json",
    "out": None,
    "plot_out": None,
    "integrator": "gauss4",
    "split_tol": 1e-6,
    "stability_tol": 1e-8,
    "s0": None,
    "options": {},
    "jobs": 1,
}
FORMATS = ("json", "csv", "text")


def _parse_value(text: str) -> Any:
    return yaml.safe_load(text)


def _option_pair(text: str) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key.strip(), _parse_value(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symindex", description="Index theory and parity instability test for periodic orbits.")
    parser.add_argument("--version", action="version", version=f"symindex {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one or more scenarios and emit a report")
    run.add_argument("--config", type=Path, help="YAML (or JSON) config file; flags override its values")
    run.add_argument("--scenario", action="append", help="preset name or orbit file; repeat for a batch")
    run.add_argument("--steps", type=int, help=f"integration steps (default {DEFAULT_STEPS})")
    run.add_argument("--galerkin-n", type=int, dest="galerkin_n", help=f"Fourier truncation N (default {DEFAULT_N})")
    run.add_argument("--format", choices=FORMATS)
    run.add_argument("--out", type=Path, help="report path (stdout when omitted)")
    run.add_argument("--plot-out", type=Path, dest="plot_out",
                     help="plot CSV path (default: next to --out with suffix .plot.csv)")
    run.add_argument("--integrator", choices=("gauss4", "midpoint"))
    run.add_argument("--split-tol", type=float, dest="split_tol")
    run.add_argument("--stability-tol", type=float, dest="stability_tol")
    run.add_argument("--s0", type=float, help="fix the penalty weight instead of choosing it")
    run.add_argument("--option", action="append", type=_option_pair, default=[], metavar="KEY=VALUE",
                     help="preset parameter override, e.g. h=-0.4 or frame=screw")
    run.add_argument("--jobs", type=int, help="parallel workers for a batch (default 1)")

    verify = sub.add_parser("verify", help="run the acceptance suite")
    verify.add_argument("--only", type=int, action="append", help="run only the given criterion numbers")
    return parser


def load_config(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as err:
        raise ScenarioError(f"cannot read config {path}: {err}") from err
    if not isinstance(doc, dict):
        raise ScenarioError(f"config {path} must be a mapping")
    unknown = sorted(set(doc) - set(DEFAULTS))
    if unknown:
        raise ScenarioError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def resolve_settings(args: argparse.Namespace) -> dict[str, Any]:
    """Merge defaults, config file and flags (flags win)."""
    settings = dict(DEFAULTS)
    settings["options"] = {}
    file_cfg = load_config(args.config)
    for key, value in file_cfg.items():
        settings[key] = dict(value) if key == "options" else value
    for key in DEFAULTS:
        if key in ("options", "scenario"):
            continue
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if args.scenario:
        settings["scenario"] = list(args.scenario)
    elif isinstance(settings["scenario"], str):
        settings["scenario"] = [settings["scenario"]]
    settings["options"].update(dict(args.option))
    if not settings["scenario"]:
        raise ScenarioError("no scenario given (use --scenario or the config key 'scenario')")
    if settings["format"] not in FORMATS:
        raise ScenarioError(f"format must be one of {FORMATS}")
    return settings


def _scenarios(settings: dict[str, Any]) -> list[Scenario]:
    return [
        Scenario(
            name=str(name),
            options=dict(settings["options"]),
            steps=int(settings["steps"]),
            galerkin_n=int(settings["galerkin_n"]),
            integrator=str(settings["integrator"]),
            split_tol=float(settings["split_tol"]),
            stability_tol=float(settings["stability_tol"]),
            s0=None if settings["s0"] is None else float(settings["s0"]),
        )
        for name in settings["scenario"]
    ]


def _run_one(scenario: Scenario) -> tuple[IndexReport | None, PlotData | None, SymIndexError | None]:
    try:
        report, plot = run_scenario(scenario)
    except SymIndexError as err:
        return None, None, err
    return report, plot, None


def _exit_code(err: SymIndexError) -> int:
    return EXIT_CONTRACT if isinstance(err, ContractError) or err.category == "contract" else EXIT_NUMERICAL


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _plot_path(settings: dict[str, Any]) -> Path | None:
    if settings["plot_out"] is not None:
        return Path(settings["plot_out"])
    if settings["out"] is not None:
        out = Path(settings["out"])
        return out.with_name(out.stem + ".plot.csv")
    return None


def cmd_run(args: argparse.Namespace) -> int:
    try:
        settings = resolve_settings(args)
    except SymIndexError as err:
        print(f"symindex: {err}", file=sys.stderr)
        return _exit_code(err)
    scenarios = _scenarios(settings)
    jobs = max(1, int(settings["jobs"]))
    if jobs > 1 and len(scenarios) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(scenarios))) as pool:
            results = list(pool.map(_run_one, scenarios))
    else:
        results = [_run_one(s) for s in scenarios]

    code = EXIT_OK
    reports: list[IndexReport] = []
    plots: list[tuple[str, PlotData]] = []
    for scenario, (report, plot, err) in zip(scenarios, results):
        if err is not None:
            print(f"symindex: {scenario.name}: {err}", file=sys.stderr)
            code = max(code, _exit_code(err))
            continue
        if not report.splitting_available:
            print(f"symindex: {scenario.name}: splitting unavailable, reporting unreduced indices "
                  f"({report.provenance['split_error']})", file=sys.stderr)
            code = max(code, EXIT_NUMERICAL)
        reports.append(report)
        plots.append((scenario.name, plot))
    if not reports:
        return code

    fmt = settings["format"]
    if fmt == "json":
        body = reports_to_json(reports)
    elif fmt == "csv":
        body = reports_to_csv(reports)
    else:
        body = "".join(report_to_text(r) for r in reports)
    out = None if settings["out"] is None else Path(settings["out"])
    try:
        _emit(body, out)
        plot_path = _plot_path(settings)
        if plot_path is not None:
            plot_path.write_text(plot_to_csv(plots), encoding="utf-8")
    except OSError as err:
        print(f"symindex: cannot write output: {err}", file=sys.stderr)
        return EXIT_FAILED
    return code


def cmd_verify(args: argparse.Namespace) -> int:
    from .acceptance import run_acceptance

    results = run_acceptance(args.only)
    for res in results:
        print(res.line(), flush=True)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
