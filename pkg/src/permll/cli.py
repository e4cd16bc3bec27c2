"""Command-line driver.

Subcommands: train, sweep, inject, check, export-fig2. Exit codes distinguish
configuration problems (2) from runtime failures (1). Every run directory gets
fixed-name artifacts: config.resolved, report.json, epochs.csv, ckpt.npz.
The default output root comes from $PERMLL_OUT_ROOT (falling back to the
config's output dir).
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

from . import propcheck
from .config import (apply_overrides, build_bundle, load_config_file,
                     load_dataset, resolved_json, validate_config)
from .data import write_csv_dataset
from .errors import ConfigError, DomainError, PermLLError, TrainingError
from .losses import KL_DIVERGENCE, SQUARED_L2
from .noise import apply_noise
from .trainer import sweep, sweep_csv, train


def _run_dir(parsed, explicit) -> Path:
    if explicit:
        d = Path(explicit)
    else:
        root = os.environ.get("PERMLL_OUT_ROOT", parsed["output_dir"])
        stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
        d = Path(root) / f"run-{stamp}-{os.getpid()}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load(args) -> dict:
    raw = load_config_file(args.config)
    apply_overrides(raw, getattr(args, "set", None))
    return validate_config(raw)


def cmd_train(args) -> int:
    parsed = _load(args)
    bundle = build_bundle(parsed)
    out = _run_dir(parsed, args.out)
    (out / "config.resolved").write_text(resolved_json(parsed))
    report = train(parsed["train"], parsed["model"], bundle,
                   checkpoint_path=out / "ckpt.npz")
    (out / "report.json").write_text(report.to_json())
    (out / "epochs.csv").write_text(report.epochs_csv())
    print(f"final test accuracy {report.final_test_accuracy:.4f}, "
          f"permutation accuracy {report.final_perm_accuracy:.2f}% "
          f"(initial {report.initial_perm_accuracy:.2f}%)")
    print(f"artifacts in {out}")
    return 0


def _parse_grid(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad grid {text!r}: {exc}") from exc


def cmd_sweep(args) -> int:
    parsed = _load(args)
    eta_grid = _parse_grid(args.eta_alpha)
    ia_grid = _parse_grid(args.i_alpha)
    bundle = build_bundle(parsed)
    out = _run_dir(parsed, args.out)
    (out / "config.resolved").write_text(resolved_json(parsed))
    rows = sweep(parsed["train"], parsed["model"], bundle, eta_grid, ia_grid)
    (out / "sweep.csv").write_text(sweep_csv(rows))
    ok = [r for r in rows if r["status"] == "ok"]
    for r in rows:
        if r["status"] != "ok":
            print(f"cell eta_alpha={r['eta_alpha']} i_alpha={r['i_alpha']}: {r['status']}",
                  file=sys.stderr)
    if not ok:
        print("every sweep cell failed", file=sys.stderr)
        return 1
    best = max(ok, key=lambda r: r["perm_accuracy"])
    print(f"best cell: eta_alpha={best['eta_alpha']} i_alpha={best['i_alpha']} "
          f"perm_accuracy={best['perm_accuracy']:.2f}% "
          f"test_accuracy={best['test_accuracy']:.4f}")
    print(f"sweep table in {out / 'sweep.csv'}")
    return 0


def cmd_inject(args) -> int:
    parsed = _load(args)
    train_clean, _ = load_dataset(parsed["dataset_kind"], parsed["dataset"])
    noisy = apply_noise(train_clean, parsed["noise"])
    from .data import Dataset  # local alias for the export wrapper
    ds = Dataset(noisy.features, noisy.noisy_labels, noisy.c, noisy.name)
    write_csv_dataset(ds, args.out, clean_labels=noisy.clean_labels)
    flipped = int(noisy.flip_mask.sum())
    print(f"wrote {ds.n} rows to {args.out} ({flipped} flipped labels)")
    return 0


def _run_checks(props, trials, seed, grad_hook=None):
    verdicts = []
    fig2_points = None
    for prop in props:
        if prop == "2":
            for fn in (SQUARED_L2, KL_DIVERGENCE):
                verdicts.append(propcheck.check_prop2(fn, trials, seed=seed))
        elif prop == "3":
            for fn in (SQUARED_L2,):
                verdicts.append(propcheck.check_prop3(fn, trials, seed=seed))
        elif prop == "4":
            for fn in (SQUARED_L2, KL_DIVERGENCE):
                verdicts.append(propcheck.check_prop4_bound(
                    fn, trials, seed=seed, grad_hook=grad_hook))
        elif prop == "fig2":
            fig2_points = []
            fd_worst = 0.0
            for fn in (SQUARED_L2, KL_DIVERGENCE):
                for variant in ("permute_prediction", "permute_label"):
                    pts, fd = propcheck.figure2_curves(fn, variant, seed=seed,
                                                      grad_hook=grad_hook)
                    fig2_points.extend(pts)
                    fd_worst = max(fd_worst, fd)
            verdicts.append({"check": "figure2", "passed": fd_worst <= 1e-5,
                             "fd_max_rel_err": fd_worst})
        else:
            raise ConfigError(f"unknown property {prop!r}; choose from 2,3,4,fig2")
    return verdicts, fig2_points


def cmd_check(args) -> int:
    props = [p.strip() for p in args.props.split(",") if p.strip()]
    grad_hook = (lambda g: g * 1.5) if args.corrupt_gradient else None
    verdicts, fig2_points = _run_checks(props, args.trials, args.seed,
                                        grad_hook=grad_hook)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdicts.json").write_text(json.dumps(verdicts, indent=2))
        if fig2_points is not None:
            (out / "fig2.csv").write_text(propcheck.fig2_csv(fig2_points))
    failed = 0
    for v in verdicts:
        status = "SKIP" if v.get("skipped") else ("PASS" if v["passed"] else "FAIL")
        print(f"[{status}] {v['check']} ({v.get('loss', '-')})")
        if status == "FAIL":
            failed += 1
    return 1 if failed else 0


def cmd_export_fig2(args) -> int:
    _, fig2_points = _run_checks(["fig2"], trials=0, seed=args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(propcheck.fig2_csv(fig2_points))
    print(f"wrote {len(fig2_points)} curve points to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="permll",
                                 description="Permutation-layer training under label noise")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("-c", "--config", required=True, help="TOML run configuration")
        p.add_argument("--set", action="append", metavar="dotted.key=value",
                       help="override a config value")

    p = sub.add_parser("train", help="run one training job")
    add_config(p)
    p.add_argument("--out", help="run directory (default: timestamped)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="grid sweep over eta_alpha and i_alpha")
    add_config(p)
    p.add_argument("--eta-alpha", required=True, help="comma-separated values")
    p.add_argument("--i-alpha", required=True, help="comma-separated values")
    p.add_argument("--out", help="run directory (default: timestamped)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("inject", help="export a noisy CSV dataset")
    add_config(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("check", help="run the property checks")
    p.add_argument("--props", default="2,3,4,fig2")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for verdicts.json / fig2.csv")
    p.add_argument("--corrupt-gradient", action="store_true",
                   help=argparse.SUPPRESS)  # negative-control test hook
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("export-fig2", help="emit the two-class gradient curves CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_fig2)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, PermLLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
