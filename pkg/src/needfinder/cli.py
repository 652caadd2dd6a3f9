"""
``needfinder`` command line: one batch subcommand per pipeline stage plus
``demo``, which chains them all on a bundled scenario.

Every subcommand accepts ``--config FILE``: a JSON object whose keys are
option names (``window_min``, ``top_m`` ...), optionally nested under the
subcommand name. Precedence is flags > config file > defaults.

Exit codes: 0 success, 1 usage error, 2 untrainable day, 3 malformed input.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import MalformedInputError, UntrainableError
from .evaluate import build_series, evaluate_recovery, raw_count_reports, read_pv
from .learn import (DEFAULT_FLOOR, DEFAULT_TOP_M, DEFAULT_TOP_N, Hyperparams, NeedReport,
                    StopwordSet, baseline_window, derive_stopwords, load_report, load_stopwords,
                    read_json, score_day, write_json)
from .prepare import (DEFAULT_K, prepare_counts, read_counts, read_pings, read_searches,
                      write_counts)
from .region import load_region
from .scenario import (ScenarioConfig, bundled_config, generate_scenario, load_config, load_truth,
                       parse_tz, write_scenario)

EXIT_OK, EXIT_USAGE, EXIT_UNTRAINABLE, EXIT_MALFORMED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# (flag, dest, type, default, help). A default of ... marks a required option.
_REQUIRED = ...
OPTIONS = {
    "generate": [
        ("--scenario", "scenario", str, None, "scenario JSON (default: bundled noto_demo)"),
        ("--seed", "seed", int, None, "override the scenario seed"),
        ("--out", "out", str, _REQUIRED, "output directory"),
    ],
    "prepare": [
        ("--pings", "pings", str, _REQUIRED, "pings.csv"),
        ("--searches", "searches", str, _REQUIRED, "searches.csv"),
        ("--region", "region", str, _REQUIRED, "region.json"),
        ("--k", "k", int, DEFAULT_K, "k-anonymity threshold"),
        ("--window-min", "window_min", float, 90.0, "ping join window in minutes"),
        ("--tz", "tz", str, "+09:00", "reporting timezone offset"),
        ("--out", "out", str, _REQUIRED, "counts.csv path"),
    ],
    "stopwords": [
        ("--counts", "counts", str, _REQUIRED, "counts.csv"),
        ("--baseline-start", "baseline_start", str, None, "first baseline date"),
        ("--baseline-end", "baseline_end", str, None, "last baseline date"),
        ("--event-day", "event_day", str, None, "event day; defaults the baseline to the 28 days before it"),
        ("--top-m", "top_m", int, DEFAULT_TOP_M, "maximum stopwords"),
        ("--floor", "floor", float, DEFAULT_FLOOR, "minimum baseline weight"),
        ("--lambda", "l2_lambda", float, 1e-4, "L2 strength"),
        ("--seed", "seed", int, 42, "undersampling seed"),
        ("--out", "out", str, _REQUIRED, "stopwords.json path"),
    ],
    "score": [
        ("--counts", "counts", str, _REQUIRED, "counts.csv"),
        ("--date", "date", str, _REQUIRED, "day to score (YYYY-MM-DD)"),
        ("--stopwords", "stopwords", str, None, "stopwords.json"),
        ("--top", "top", int, DEFAULT_TOP_N, "entries in the top list"),
        ("--lambda", "l2_lambda", float, 1e-4, "L2 strength"),
        ("--seed", "seed", int, 42, "undersampling seed"),
        ("--out", "out", str, _REQUIRED, "report JSON path ('-' for stdout)"),
    ],
    "eval": [
        ("--reports", "reports", str, _REQUIRED, "directory of report_*.json"),
        ("--truth", "truth", str, _REQUIRED, "truth.json"),
        ("--pv", "pv", str, None, "pv.csv"),
        ("--counts", "counts", str, None, "counts.csv, adds the raw-count baseline"),
        ("--n", "n", int, DEFAULT_TOP_N, "cutoff for precision/recall"),
        ("--out", "out", str, _REQUIRED, "metrics.json path"),
    ],
    "report": [
        ("--out", "out", str, "-", "text output path ('-' for stdout)"),
    ],
    "demo": [
        ("--scenario", "scenario", str, None, "scenario JSON (default: bundled noto_demo)"),
        ("--seed", "seed", int, None, "override the scenario seed"),
        ("--k", "k", int, DEFAULT_K, "k-anonymity threshold"),
        ("--top", "top", int, DEFAULT_TOP_N, "entries per day"),
        ("--lambda", "l2_lambda", float, 1e-4, "L2 strength"),
        ("--score-seed", "score_seed", int, 42, "undersampling seed"),
        ("--out", "out", str, _REQUIRED, "output directory"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="needfinder", description="Disaster information-need finder pipeline.")
    parser.add_argument("--version", action="version", version=f"needfinder {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, options in OPTIONS.items():
        p = sub.add_parser(name)
        if name == "report":
            p.add_argument("report_file", help="report JSON to render")
        p.add_argument("--config", default=None, help="JSON config file")
        for flag, dest, typ, _, help_text in options:
            p.add_argument(flag, dest=dest, type=typ, default=None, help=help_text)
    return parser


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Merge flags over config file over defaults."""
    file_cfg: dict = {}
    if args.config:
        file_cfg = read_json(args.config)
        if not isinstance(file_cfg, dict):
            raise MalformedInputError(f"{args.config}: config must be a JSON object")
        nested = file_cfg.get(command)
        file_cfg = {**{k: v for k, v in file_cfg.items() if not isinstance(v, dict)},
                    **(nested if isinstance(nested, dict) else {})}
    opts = {}
    for flag, dest, typ, default, _ in OPTIONS[command]:
        value = getattr(args, dest)
        if value is None and dest in file_cfg:
            value = typ(file_cfg[dest])
        if value is None:
            if default is _REQUIRED:
                raise UsageError(f"needfinder {command}: {flag} is required")
            value = default
        opts[dest] = value
    return opts


def provenance(command: str, opts: dict, artifact) -> dict:
    """Tool version, effective options and their hash.

    File paths are stored relative to the artifact's directory and the output
    location itself is left out, so a tree written elsewhere hashes the same.
    """
    base = Path(artifact).resolve().parent if artifact not in (None, "-") else Path.cwd()
    config = {}
    for key, value in sorted(opts.items()):
        if key == "out":
            continue
        if isinstance(value, str) and key in _PATH_KEYS:
            value = os.path.relpath(Path(value).resolve(), base)
        config[key] = value
    blob = json.dumps({"command": command, "config": config}, sort_keys=True).encode()
    return {"tool": "needfinder", "version": __version__, "command": command, "config": config,
            "config_hash": hashlib.sha256(blob).hexdigest()[:16]}


_PATH_KEYS = {"scenario", "pings", "searches", "region", "counts", "stopwords", "reports",
              "truth", "pv"}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _scenario(opts) -> ScenarioConfig:
    cfg = load_config(opts["scenario"]) if opts.get("scenario") else bundled_config()
    if opts.get("seed") is not None:
        data = cfg.to_dict()
        data["seed"] = opts["seed"]
        cfg = ScenarioConfig.from_dict(data)
    return cfg


def cmd_generate(opts) -> int:
    cfg = _scenario(opts)
    out = Path(opts["out"])
    paths = write_scenario(generate_scenario(cfg), out)
    write_json(cfg.to_dict(), out / "scenario.json")
    write_json(cfg.region.to_dict(), out / "region.json")
    prov = provenance("generate", opts, out / "provenance.json")
    prov["scenario_hash"] = hashlib.sha256(
        json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:16]
    prov["files"] = sorted(p.name for p in paths.values()) + ["region.json", "scenario.json"]
    write_json(prov, out / "provenance.json")
    return EXIT_OK


def cmd_prepare(opts) -> int:
    if opts["k"] < 1:
        raise UsageError("needfinder prepare: --k must be >= 1")
    if opts["window_min"] <= 0:
        raise UsageError("needfinder prepare: --window-min must be positive")
    try:
        tz = parse_tz(opts["tz"])
    except ValueError as exc:
        raise UsageError(f"needfinder prepare: {exc}") from None
    region = load_region(opts["region"])
    counts = prepare_counts(read_searches(opts["searches"]), read_pings(opts["pings"]), region,
                            k=opts["k"], window=dt.timedelta(minutes=opts["window_min"]), tz=tz)
    write_counts(counts, opts["out"])
    prov = provenance("prepare", opts, opts["out"])
    prov["rows"] = int(len(counts))
    write_json(prov, f"{opts['out']}.provenance.json")
    return EXIT_OK


def _hyper(opts, seed_key="seed") -> Hyperparams:
    return Hyperparams(l2_lambda=opts["l2_lambda"], seed=opts[seed_key])


def cmd_stopwords(opts) -> int:
    counts = read_counts(opts["counts"])
    start, end = opts["baseline_start"], opts["baseline_end"]
    if opts["event_day"]:
        d0, d1 = baseline_window(dt.date.fromisoformat(opts["event_day"]))
        start, end = start or d0.isoformat(), end or d1.isoformat()
    if not (start and end):
        raise UsageError("needfinder stopwords: give --baseline-start/--baseline-end or --event-day")
    base = counts[(counts["date"] >= start) & (counts["date"] <= end)]
    sw = derive_stopwords(base, _hyper(opts), top_m=opts["top_m"], weight_floor=opts["floor"],
                          event_day=opts["event_day"])
    data = sw.to_dict()
    data["baseline_start"], data["baseline_end"] = start, end
    data["provenance"] = provenance("stopwords", opts, opts["out"])
    write_json(data, opts["out"])
    return EXIT_OK


def cmd_score(opts, counts=None, stopwords=None) -> int:
    if counts is None:
        counts = read_counts(opts["counts"])
    if stopwords is None:
        stopwords = load_stopwords(opts["stopwords"]) if opts["stopwords"] else StopwordSet.empty()
    rows = counts[counts["date"] == opts["date"]]
    report = score_day(rows, stopwords, _hyper(opts), top_n=opts["top"], date=opts["date"])
    report.provenance = provenance("score", opts, opts["out"])
    write_json(report.to_dict(), opts["out"])
    return EXIT_OK if report.status == "ok" else EXIT_UNTRAINABLE


def _load_reports(directory) -> list[NeedReport]:
    files = sorted(Path(directory).glob("*.json"))
    if not files:
        raise MalformedInputError(f"{directory}: no report JSON files")
    return [load_report(f) for f in files]


def cmd_eval(opts) -> int:
    reports = _load_reports(opts["reports"])
    truth = load_truth(opts["truth"])
    pv = read_pv(opts["pv"]) if opts["pv"] else None
    metrics = evaluate_recovery(reports, truth, opts["n"])
    data = {"dnf": metrics.to_dict()}
    if opts["counts"]:
        raw = evaluate_recovery(raw_count_reports(read_counts(opts["counts"]), opts["n"]),
                                truth, opts["n"])
        data["raw_count"] = raw.to_dict()
    data["provenance"] = provenance("eval", opts, opts["out"])
    write_json(data, opts["out"])
    series = build_series(reports, truth, pv)
    series.to_csv(Path(opts["out"]).with_name("series.csv"), index=False, lineterminator="\n",
                  float_format="%.6f")
    return EXIT_OK


def render_report(report: NeedReport) -> str:
    lines = [f"date: {report.date}   status: {report.status}   stopword set: {report.stopword_set_id}"]
    rows = [(str(i + 1), q, f"{s:.4f}") for i, (q, s) in enumerate(report.top)]
    width = max([len("query")] + [len(r[1]) for r in rows])
    lines.append(f"{'rank':>4}  {'query':<{width}}  {'score':>8}")
    lines.append(f"{'-' * 4}  {'-' * width}  {'-' * 8}")
    lines += [f"{r:>4}  {q:<{width}}  {s:>8}" for r, q, s in rows]
    lines.append(f"({len(report.entries)} positive-weight queries in total)")
    return "\n".join(lines) + "\n"


def render_board(reports: list[NeedReport], top_n: int = DEFAULT_TOP_N, days_per_block: int = 7,
                 cell: int = 22) -> str:
    """Dates across, ranks down, one block per week."""
    reports = sorted(reports, key=lambda r: r.date)
    out = []
    for start in range(0, len(reports), days_per_block):
        block = reports[start:start + days_per_block]
        out.append("rank " + "".join(f"{r.date:<{cell}}" for r in block).rstrip())
        for rank in range(top_n):
            cells = []
            for r in block:
                if r.status != "ok":
                    text = "(untrainable)" if rank == 0 else ""
                elif rank < len(r.top):
                    q, s = r.top[rank]
                    text = f"{q[:cell - 8]} {s:.2f}"
                else:
                    text = ""
                cells.append(f"{text:<{cell}}")
            out.append(f"{rank + 1:>4} " + "".join(cells).rstrip())
        out.append("")
    return "\n".join(out)


def cmd_report(opts, report_file) -> int:
    text = render_report(load_report(report_file))
    if opts["out"] == "-":
        sys.stdout.write(text)
    else:
        Path(opts["out"]).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_demo(opts) -> int:
    """generate -> prepare -> stopwords -> score every day -> eval -> board."""
    out = Path(opts["out"])
    cfg = _scenario(opts)
    out.mkdir(parents=True, exist_ok=True)
    scenario_path = out / "scenario.json"
    write_json(cfg.to_dict(), scenario_path)
    cmd_generate({"scenario": str(scenario_path), "seed": None, "out": str(out)})
    counts_path = out / "counts.csv"
    cmd_prepare({"pings": str(out / "pings.csv"), "searches": str(out / "searches.csv"),
                 "region": str(out / "region.json"), "k": opts["k"], "window_min": 90.0,
                 "tz": cfg.timezone, "out": str(counts_path)})
    stop_path = out / "stopwords.json"
    cmd_stopwords({"counts": str(counts_path), "baseline_start": None, "baseline_end": None,
                   "event_day": cfg.event_day.isoformat(), "top_m": DEFAULT_TOP_M,
                   "floor": DEFAULT_FLOOR, "l2_lambda": opts["l2_lambda"],
                   "seed": opts["score_seed"], "out": str(stop_path)})
    counts = read_counts(counts_path)
    stopwords = load_stopwords(stop_path)
    report_dir = out / "reports"
    report_dir.mkdir(exist_ok=True)
    for day in cfg.date_range.days():
        cmd_score({"counts": str(counts_path), "date": day.isoformat(), "stopwords": str(stop_path),
                   "top": opts["top"], "l2_lambda": opts["l2_lambda"], "seed": opts["score_seed"],
                   "out": str(report_dir / f"report_{day.isoformat()}.json")},
                  counts=counts, stopwords=stopwords)
    cmd_eval({"reports": str(report_dir), "truth": str(out / "truth.json"),
              "pv": str(out / "pv.csv"), "counts": str(counts_path), "n": opts["top"],
              "out": str(out / "metrics.json")})
    board = render_board(_load_reports(report_dir), opts["top"])
    (out / "board.txt").write_text(board, encoding="utf-8")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        opts = resolve_options(args.command, args)
        if args.command == "report":
            return cmd_report(opts, args.report_file)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except UntrainableError as exc:
        print(f"needfinder: untrainable: {exc}", file=sys.stderr)
        return EXIT_UNTRAINABLE
    except (MalformedInputError, FileNotFoundError, ValueError) as exc:
        print(f"needfinder: malformed input: {exc}", file=sys.stderr)
        return EXIT_MALFORMED


COMMANDS = {
    "generate": cmd_generate,
    "prepare": cmd_prepare,
    "stopwords": cmd_stopwords,
    "score": cmd_score,
    "eval": cmd_eval,
    "demo": cmd_demo,
}


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
