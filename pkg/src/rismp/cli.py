"""Command-line entry point.

    rismp run <config> --out <dir> [--seed S] [--schemes a,b] [--blocks T] [--override k=v ...]
    rismp validate <config>
    rismp cdf <records.csv> --scheme S --ue N --traffic Q

Exit codes: 0 success, 1 invalid configuration or input, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .config import SCHEMES, ConfigError, ScenarioConfig, config_hash, parse_config, serialize
from .simulator import LatencyRecord, SummaryTable, export_cdf, home_paths, run_scenario

log = logging.getLogger("rismp")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

RECORD_COLUMNS = ("block", "scheme", "ue", "traffic", "latency_s", "f_s", "violation")
CDF_COLUMNS = ("latency_s", "cdf")


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    schemes: tuple[str, ...]
    started: str
    version: str
    paths: dict[str, str]
    home_paths: tuple[int, ...]  # SP access BS per UE, 1-based
    finished: str | None = None
    status: str = "running"
    extra: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        data = {
            "config_hash": self.config_hash, "seed": self.seed, "schemes": list(self.schemes),
            "started": self.started, "finished": self.finished, "status": self.status,
            "version": self.version, "paths": self.paths, "sp_home_bs": list(self.home_paths), **self.extra,
        }
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _num(x: float) -> str:
    return repr(float(x))


# -- writers -------------------------------------------------------------------


def write_records(path: Path, records: list[LatencyRecord]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in records:
            w.writerow((r.block, r.scheme, r.ue, r.traffic, _num(r.latency), _num(r.objective), int(r.violation)))


def read_records(path: Path) -> list[LatencyRecord]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise ValueError(f"{path}: expected columns {', '.join(RECORD_COLUMNS)}")
        return [
            LatencyRecord(block=int(row["block"]), scheme=row["scheme"], ue=int(row["ue"]), traffic=int(row["traffic"]),
                          latency=float(row["latency_s"]), per_path=(), objective=float(row["f_s"]),
                          violation=row["violation"] == "1")
            for row in reader
        ]


def write_summary(path: Path, summary: SummaryTable) -> None:
    """Three blank-line separated tables: mean latency per traffic type (ms),
    per-UE means (ms) and per-scheme totals."""
    schemes = summary.schemes
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("traffic", *schemes))
        for q in range(1, summary.n_traffic + 1):
            w.writerow((q, *(f"{summary.per_traffic[(s, q)]:.3f}" for s in schemes)))
        fh.write("\n")
        w.writerow(("ue", "traffic", *schemes))
        for n in range(1, summary.n_ue + 1):
            for q in range(1, summary.n_traffic + 1):
                w.writerow((n, q, *(f"{summary.per_ue[(s, n, q)]:.3f}" for s in schemes)))
        fh.write("\n")
        w.writerow(("scheme", "u_bar_ms", "violations", "nonfinite_blocks"))
        for s in schemes:
            w.writerow((s, f"{summary.u_bar[s] * 1e3:.3f}", summary.violations[s], summary.nonfinite_blocks[s]))


def read_summary(path: Path) -> list[list[list[str]]]:
    """The summary file as a list of tables (rows of cells, header first)."""
    tables, current = [], []
    for row in csv.reader(Path(path).read_text(encoding="utf-8").splitlines()):
        if not row:
            if current:
                tables.append(current)
            current = []
        else:
            current.append(row)
    if current:
        tables.append(current)
    return tables


def write_cdf(path: Path, points) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CDF_COLUMNS)
        for x, p in points:
            w.writerow((_num(x), _num(p)))


def cdf_filename(scheme: str, ue: int, traffic: int) -> str:
    return f"{scheme}_ue{ue}_t{traffic}.csv"


# -- commands --------------------------------------------------------------------


def _load(args) -> ScenarioConfig:
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"sim.seed={args.seed}")
    if args.blocks is not None:
        overrides.append(f"sim.blocks={args.blocks}")
    if args.schemes is not None:
        overrides.append(f"sim.schemes={args.schemes}")
    return parse_config(args.config, overrides)


def cmd_run(args) -> int:
    config = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cdf").mkdir(exist_ok=True)
    paths = {"config": "config.txt", "records": "records.csv", "summary": "summary.csv", "cdf_dir": "cdf"}
    (out / paths["config"]).write_text(serialize(config), encoding="utf-8")
    manifest = RunManifest(
        config_hash=config_hash(config), seed=config.sim.seed, schemes=config.sim.schemes, started=_now(),
        version=__version__, paths=paths, home_paths=tuple(int(m) + 1 for m in home_paths(config)),
    )
    manifest.write(out / "manifest.json")

    step = max(1, config.sim.blocks // 20)

    def progress(res):
        if (res.block + 1) % step == 0:
            log.info("block %d / %d", res.block + 1, config.sim.blocks)

    try:
        records, summary, _ = run_scenario(config, workers=args.workers, on_block=progress)
    except Exception as exc:
        manifest.status, manifest.finished = "failed", _now()
        manifest.extra = {"error": str(exc)}
        manifest.write(out / "manifest.json")
        raise

    write_records(out / paths["records"], records)
    write_summary(out / paths["summary"], summary)
    cdf_files = []
    for s in summary.schemes:
        for n in range(1, config.n_ue + 1):
            for q in range(1, len(config.traffic) + 1):
                name = cdf_filename(s, n, q)
                write_cdf(out / "cdf" / name, export_cdf(records, s, n, q))
                cdf_files.append(f"cdf/{name}")
    manifest.paths = {**paths, "cdf": cdf_files}
    manifest.status, manifest.finished = "ok", _now()
    manifest.write(out / "manifest.json")
    print((out / paths["summary"]).read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    config = parse_config(args.config)
    print(f"ok {config_hash(config)}")
    return EXIT_OK


def cmd_cdf(args) -> int:
    records = read_records(Path(args.records))
    points = export_cdf(records, args.scheme, args.ue, args.traffic)
    if args.out:
        write_cdf(Path(args.out), points)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(CDF_COLUMNS)
        for x, p in points:
            w.writerow((_num(x), _num(p)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rismp", description="RIS-assisted multi-path uplink latency simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario and write records, summary and CDFs")
    run.add_argument("config")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int)
    run.add_argument("--schemes", help=f"comma-separated subset of {','.join(SCHEMES)}")
    run.add_argument("--blocks", type=int)
    run.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    run.add_argument("--override", action="append", metavar="KEY=VALUE")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="parse and validate a config file")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)

    cdf = sub.add_parser("cdf", help="empirical CDF of one (scheme, ue, traffic) from a records file")
    cdf.add_argument("records")
    cdf.add_argument("--scheme", required=True, choices=SCHEMES)
    cdf.add_argument("--ue", type=int, required=True)
    cdf.add_argument("--traffic", type=int, required=True)
    cdf.add_argument("--out")
    cdf.set_defaults(func=cmd_cdf)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors count as invalid input
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        where = f" (line {exc.line})" if exc.line and f"line {exc.line}" not in str(exc) else ""
        print(f"error: invalid configuration{where}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (LookupError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if args.command == "cdf" else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
