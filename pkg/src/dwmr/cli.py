"""Command-line entry point: ``dwmr {gen-data,train,eval,sweep,ablate,report}``.

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as C
from . import trainer
from .datasets import DatasetFormatError, build_splits, read_dataset, write_dataset
from .ndcore.checkpoint import CheckpointError
from .probes import EvalReport, evaluate

log = logging.getLogger("dwmr")

DATA_ENV = "DWMR_DATA_DIR"
DATASET_FILE = "dataset.bin"
CONFIG_FILE = "config.json"
ABLATIONS = {
    "var": {"loss.lambda_var": 0.0},
    "cor": {"loss.lambda_cor": 0.0},
    "cos": {"loss.lambda_cos": 0.0},
    "loc": {"loss.lambda_loc": 0.0},
    "ema": {"train.ema": False},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers
def _resolve_config(args, extra: dict | None = None) -> dict:
    overrides = dict(C.parse_override(item) for item in args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    overrides.update(extra or {})
    path = args.config
    if path is None and args.out is not None and (Path(args.out) / CONFIG_FILE).exists() \
            and args.command in ("eval",):
        path = Path(args.out) / CONFIG_FILE
    return C.load_config(path, overrides)


def _dataset_path(args) -> Path:
    root = args.data or os.environ.get(DATA_ENV) or args.out
    if root is None:
        raise UsageError("no dataset location: pass --data, set DWMR_DATA_DIR, or use --out")
    path = Path(root)
    return path / DATASET_FILE if path.is_dir() or not path.suffix else path


def load_splits(path: Path, cfg: dict) -> dict:
    header, splits = read_dataset(path)
    bench = header.get("benchmark")
    if bench != cfg["benchmark"]:
        raise ValueError(f"{path} holds {bench!r} data but the config is for {cfg['benchmark']!r}")
    if bool(header.get("noisy")) != bool(cfg["data.noisy"]):
        raise ValueError(f"{path} noise setting {header.get('noisy')} differs from data.noisy={cfg['data.noisy']}")
    return splits


def _info(cfg: dict) -> dict:
    return {"noise": bool(cfg["data.noisy"]), "family": cfg["family"], "variant": cfg["variant"],
            "seed": int(cfg["seed"])}


def _probe_kw(cfg: dict) -> dict:
    return {"epochs": int(cfg["probe.epochs"]), "lr": float(cfg["probe.lr"]),
            "weight_decay": float(cfg["probe.weight_decay"]), "batch_size": int(cfg["probe.batch_size"])}


def train_and_eval(cfg: dict, splits: dict, out: Path, report_split: str = "test") -> tuple[EvalReport, EvalReport]:
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(C.dumps(cfg))
    state = trainer.run_training(cfg, splits["train"], out)
    enc, im = evaluate(state.model, splits["train"], splits[report_split], _probe_kw(cfg), **_info(cfg))
    enc.save(out / "eval_enc.json")
    im.save(out / "eval_im.json")
    return enc, im


# ----------------------------------------------------------------- commands
def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    if args.out is None:
        raise UsageError("gen-data needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = build_splits(
        cfg["benchmark"], noisy=cfg["data.noisy"], seeds=cfg["data.split_seeds"], sizes=C.split_sizes(cfg),
        digits_per_class=int(cfg["data.digits_per_class"]), digit_seed=int(cfg["data.digit_seed"]),
        mnist_dir=cfg["data.mnist_dir"], noise_std=float(cfg["data.noise_std"]), noise_mode=cfg["data.noise_mode"])
    write_dataset(out / DATASET_FILE, splits, benchmark=cfg["benchmark"], noisy=bool(cfg["data.noisy"]))
    print(f"wrote {out / DATASET_FILE} ({', '.join(f'{k}={len(v)}' for k, v in splits.items())})")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    if args.out is None:
        raise UsageError("train needs --out")
    splits = load_splits(_dataset_path(args), cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(C.dumps(cfg))
    state = trainer.run_training(cfg, splits["train"], out, resume=args.resume)
    print(f"trained {state.epoch} epochs; metrics in {out / 'metrics.csv'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    if args.out is None:
        raise UsageError("eval needs --out (the training run directory)")
    out = Path(args.out)
    ckpt = Path(args.checkpoint) if args.checkpoint else trainer.latest_checkpoint(out)
    if ckpt is None:
        raise FileNotFoundError(f"no checkpoint in {out}")
    splits = load_splits(_dataset_path(args), cfg)
    model = trainer.load_model(cfg, ckpt)
    enc, im = evaluate(model, splits["train"], splits[args.split], _probe_kw(cfg), **_info(cfg))
    enc.save(out / "eval_enc.json")
    im.save(out / "eval_im.json")
    print(f"{args.split}: encoding F1 {enc.mean_f1:.1f} acc {enc.mean_acc:.1f} | "
          f"imagination F1 {im.mean_f1:.1f} acc {im.mean_acc:.1f}")
    return 0


def sample_point(cfg: dict, rng: np.random.Generator) -> dict:
    """One random-search point centred on ``cfg``; zero weights stay zero."""
    point = {}
    for key in ("loss.lambda_var", "loss.lambda_cor", "loss.lambda_cos", "loss.lambda_loc",
                "loss.lambda_rec", "loss.lambda_kl"):
        if cfg[key] > 0:
            point[key] = float(cfg[key] * math.exp(rng.uniform(math.log(0.25), math.log(4.0))))
    for key in ("train.lr_enc", "train.lr_pred"):
        point[key] = float(math.exp(rng.uniform(math.log(1e-4), math.log(3e-3))))
    point["train.tau"] = float(rng.uniform(0.8, 0.99))
    point["loss.gamma"] = float(rng.uniform(0.35, 0.49))
    point["loss.L"] = 1
    point["loss.U"] = int(rng.integers(2, 13))
    for name in C.SCHEDULED:
        point[f"schedule.{name}"] = float(rng.uniform(0.95, 1.05))
    return point


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    if args.out is None:
        raise UsageError("sweep needs --out")
    splits = load_splits(_dataset_path(args), cfg)
    out = Path(args.out)
    rng = np.random.default_rng(int(cfg["sweep.seed"]))
    results = []
    for i in range(int(cfg["sweep.points"])):
        point = sample_point(cfg, rng)
        point_cfg = C.resolve({**cfg, **point, "train.epochs": cfg["sweep.epochs"]})
        # selection uses the validation split only
        _, im = train_and_eval(point_cfg, splits, out / f"point_{i:03d}", report_split="val")
        results.append({"point": i, "params": point, "val_im_f1": im.mean_f1, "val_im_acc": im.mean_acc})
        log.info("sweep point %d: val imagination F1 %.1f", i, im.mean_f1)
    best = max(results, key=lambda r: r["val_im_f1"])
    final = []
    for s in range(int(cfg["sweep.final_seeds"])):
        seed_cfg = C.resolve({**cfg, **best["params"], "seed": int(cfg["seed"]) + s})
        enc, im = train_and_eval(seed_cfg, splits, out / "final" / f"seed_{s:02d}", report_split="test")
        final.append({"seed": seed_cfg["seed"], "enc_f1": enc.mean_f1, "im_f1": im.mean_f1})
    summary = {"points": results, "best": best, "final": final}
    (out / "sweep.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"best point {best['point']} (val imagination F1 {best['val_im_f1']:.1f}); "
          f"test runs in {out / 'final'}")
    return 0


def cmd_ablate(args) -> int:
    comps = list(ABLATIONS) if args.component == "all" else [args.component]
    cfg = _resolve_config(args)
    if args.out is None:
        raise UsageError("ablate needs --out")
    splits = load_splits(_dataset_path(args), cfg)
    out = Path(args.out)
    for comp in ["none"] + comps:
        for r in range(args.runs):
            run_cfg = C.resolve({**cfg, **ABLATIONS.get(comp, {}), "seed": int(cfg["seed"]) + r})
            enc, im = train_and_eval(run_cfg, splits, out / comp / f"seed_{r:02d}")
            print(f"{comp:>5} seed {run_cfg['seed']}: encoding acc {enc.mean_acc:.1f} | "
                  f"imagination acc {im.mean_acc:.1f}")
    return 0


def _fmt(values: list[float]) -> str:
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
    return f"{round(mean)} ±{round(std)}"


def write_metrics_table(reports: Sequence[EvalReport | dict], metric: str = "f1",
                        family_order: Sequence[str] = C.FAMILIES) -> str:
    """Mean ± sample std per (family, benchmark, noise, mode), rounded to integers."""
    key = "mean_f1" if metric == "f1" else "mean_acc"
    cells: dict[tuple, list[float]] = {}
    for r in reports:
        d = r.to_dict() if isinstance(r, EvalReport) else r
        cells.setdefault((d["family"], d["benchmark"], bool(d["noise"]), d["mode"]), []).append(float(d[key]))
    if not cells:
        raise ValueError("no reports to tabulate")
    columns = sorted({(b, n, m) for _, b, n, m in cells}, key=lambda c: (c[0], c[1], c[2] != "encoding"))
    order = {f: i for i, f in enumerate(family_order)}
    families = sorted({f for f, *_ in cells}, key=lambda f: (order.get(f, len(order)), f))
    heads = ["model"] + [f"{b}/{'noisy' if n else 'clean'}/{'enc' if m == 'encoding' else 'im'}"
                         for b, n, m in columns]
    rows = [[f] + [_fmt(cells[(f, *c)]) if (f, *c) in cells else "-" for c in columns] for f in families]
    widths = [max(len(r[i]) for r in [heads] + rows) for i in range(len(heads))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [heads] + rows]
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    paths = [Path(p) for p in args.reports] if args.reports else []
    if args.out is not None and not paths:
        paths = sorted(Path(args.out).rglob("eval_*.json"))
    if not paths:
        raise UsageError("report found no eval_*.json files")
    reports = [EvalReport.load(p) for p in paths]
    table = write_metrics_table(reports, metric=args.metric)
    if args.out is not None:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "table.txt").write_text(table)
    sys.stdout.write(table)
    return 0


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config with flat dotted keys")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    common.add_argument("--seed", type=int, help="shortcut for --set seed=N")
    common.add_argument("--out", help="output directory")
    common.add_argument("--data", help=f"dataset directory or file (default: ${DATA_ENV}, then --out)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="dwmr", description="Boolean world models: data, training, probes and reports.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen-data", parents=[common], help="generate train/val/test transitions")
    p = sub.add_parser("train", parents=[common], help="train one run")
    p.add_argument("--resume", action="store_true", help="continue from the latest checkpoint in --out")
    p = sub.add_parser("eval", parents=[common], help="fit probes and write eval_{enc,im}.json")
    p.add_argument("--split", choices=("val", "test"), default="test")
    p.add_argument("--checkpoint", help="checkpoint file (default: latest in --out)")
    sub.add_parser("sweep", parents=[common], help="random search ranked by validation imagination F1")
    p = sub.add_parser("ablate", parents=[common], help="remove one objective component")
    p.add_argument("--component", choices=sorted(ABLATIONS) + ["all"], required=True)
    p.add_argument("--runs", type=int, default=1, help="seeds per setting")
    p = sub.add_parser("report", parents=[common], help="aggregate reports into table.txt")
    p.add_argument("reports", nargs="*", help="report JSON files (default: all under --out)")
    p.add_argument("--metric", choices=("f1", "acc"), default="f1")
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
            "ablate": cmd_ablate, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, C.ConfigError) as exc:
        print(f"dwmr {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, CheckpointError, DatasetFormatError, FloatingPointError) as exc:
        print(f"dwmr {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
