"""``modex`` command line: train, eval, verify and report.

Exit codes: 0 success, 1 identity violation (verify), 2 usage or config
error, 3 training diverged, 4 checkpoint missing or incompatible, 5 no
results to report.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data import DataFormatError
from .experiments import RESULT_COLUMNS, build_datasets, evaluate
from .nnet import TrainingError, load_checkpoint, save_checkpoint
from .trainer import train
from .verify import failures_json, run_suite

log = logging.getLogger("modex")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DIVERGED, EXIT_CHECKPOINT, EXIT_EMPTY = 0, 1, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _config(args) -> RunConfig:
    if not args.config:
        raise CliError(EXIT_USAGE, "--config is required")
    try:
        cfg = load_config(args.config)
        return cfg.with_overrides(seed=args.seed, out_dir=args.out)
    except ConfigError as exc:
        raise CliError(EXIT_USAGE, f"config error: {exc}") from None


def _datasets(cfg: RunConfig):
    try:
        return build_datasets(cfg)
    except (OSError, DataFormatError, ValueError) as exc:
        raise CliError(EXIT_USAGE, f"dataset error: {exc}") from None


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(text)


def cmd_train(args) -> int:
    cfg = _config(args)
    train_set, val_set, _ = _datasets(cfg)
    out = Path(cfg.out_dir)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    try:
        model, history = train(cfg.train_config(), train_set, val_set)
    except TrainingError as exc:
        raise CliError(EXIT_DIVERGED, f"training diverged: {exc}") from None
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, ckpt)
    _write_text(out / "history.csv", history.to_csv())
    last = history[-1]
    print(f"trained {len(history)} epochs (best {history.best_epoch}, "
          f"val acc {last.val_acc:.4f}); checkpoint {ckpt}")
    return EXIT_OK


def _results_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def cmd_eval(args) -> int:
    cfg = _config(args)
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(cfg.out_dir) / "model.ckpt"
    try:
        model = load_checkpoint(ckpt)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_CHECKPOINT, f"cannot load checkpoint {ckpt}: {exc}") from None
    _, _, test = _datasets(cfg)
    if model.D != test.D or model.K != test.n_classes:
        raise CliError(EXIT_CHECKPOINT,
                       f"checkpoint expects D={model.D}, K={model.K} but data has "
                       f"D={test.D}, K={test.n_classes}")
    try:
        rows = evaluate(cfg, model, test)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"evaluation error: {exc}") from None
    out = Path(cfg.out_dir)
    stem = f"results_{cfg.method_name}_seed{cfg.seed}"
    if "csv" in cfg.formats:
        _write_text(out / f"{stem}.csv", _results_csv(rows))
    if "json" in cfg.formats:
        _write_text(out / f"{stem}.json", json.dumps(rows, indent=1) + "\n")
    for r in rows:
        metric = (f"acc {r['accuracy']:.2f}" if r["task"] == "accuracy"
                  else f"AUROC {r['auroc']:.2f} AUPR {r['aupr']:.2f}")
        sev = f" severity {r['severity']}" if r["severity"] != "" else ""
        print(f"{r['task']}{sev}: {metric}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trials is None or args.trials < 1:
        raise CliError(EXIT_USAGE, "--trials must be a positive integer")
    res = run_suite(args.trials, 0 if args.seed is None else args.seed)
    print(res.table())
    if res.ok:
        print(f"all identities hold over {args.trials} trials")
        return EXIT_OK
    names = ", ".join(res.failed_checks())
    print(f"FAILED: {names}", file=sys.stderr)
    payload = failures_json(res)
    if args.out:
        path = Path(args.out) / "verify_failures.json"
        _write_text(path, payload + "\n")
        print(f"failing parameters written to {path}", file=sys.stderr)
    else:
        print(payload, file=sys.stderr)
    return EXIT_VERIFY


def _column(row: dict) -> list[tuple[str, str]]:
    task = row["task"]
    if task == "accuracy":
        return [("accuracy", "accuracy")]
    label = f"shift-{row['severity']}" if task == "shift" else task
    return [(f"{label} AUROC", "auroc"), (f"{label} AUPR", "aupr")]


def _fmt(values: list[float]) -> str:
    m = float(np.mean(values))
    if len(values) == 1:
        return f"{m:.2f}"
    return f"{m:.2f} ±{float(np.std(values, ddof=1)):.2f}"


def report_markdown(rows: list[dict]) -> str:
    """Method-by-column table of mean ±std across seeds."""
    cells: dict = defaultdict(list)
    columns: list[str] = []
    methods: list[str] = []
    for r in rows:
        if r["method"] not in methods:
            methods.append(r["method"])
        for col, key in _column(r):
            if col not in columns:
                columns.append(col)
            if r.get(key, "") != "":
                cells[r["method"], col].append(float(r[key]))
    lines = ["| method | " + " | ".join(columns) + " |",
             "|---" * (len(columns) + 1) + "|"]
    for m in methods:
        vals = [_fmt(cells[m, c]) if cells[m, c] else "" for c in columns]
        lines.append(f"| {m} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    src = Path(args.results_dir or args.out or ".")
    files = sorted(src.rglob("results_*.csv")) if src.is_dir() else []
    rows = []
    for f in files:
        with open(f, newline="") as fh:
            rows += list(csv.DictReader(fh))
    if not rows:
        raise CliError(EXIT_EMPTY, f"no results_*.csv files under {src}")
    text = report_markdown(rows)
    dest = Path(args.out or src) / "report.md"
    _write_text(dest, text)
    print(text, end="")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="modex", description="Courtroom-mixture evidential classifier.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a model from a config")
    e = sub.add_parser("eval", help="evaluate a checkpoint on the configured tasks")
    for sp in (t, e):
        sp.add_argument("--config")
        sp.add_argument("--checkpoint")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
    t.set_defaults(func=cmd_train)
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="randomised identity suite")
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="aggregate result CSVs into a markdown table")
    r.add_argument("results_dir", nargs="?")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
