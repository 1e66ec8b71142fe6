"""Command-line entry point.

Subcommands: train, eval, degrade, verify. Exit codes: 0 on success, 1 on a
runtime failure, 2 on a usage error, 3 when verification checks fail. The
D2R_SEED environment variable overrides the configured seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import data as data_mod
from .config import ModelConfig, load_config
from .errors import D2RError
from .pipeline import evaluate, train_stage
from .verify import run_verification


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="d2r",
                                     description="dual-path image restoration pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training stage")
    p_train.add_argument("--stage", type=int, required=True, choices=(1, 2, 3))
    p_train.add_argument("--config", required=True, help="flat key=value config file")
    p_train.add_argument("--data", required=True, help="directory with manifest.tsv")
    p_train.add_argument("--out", required=True, help="output directory")
    p_train.add_argument("--resume", default=None, help="checkpoint to resume from")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on paired data")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--data", required=True, help="directory with manifest.tsv")
    p_eval.add_argument("--report", required=True, help="TSV report path")

    p_deg = sub.add_parser("degrade", help="apply a synthetic degradation to images")
    p_deg.add_argument("--kind", required=True,
                       choices=("noise", "blur", "lowlight", "haze"))
    p_deg.add_argument("--level", type=float, required=True)
    p_deg.add_argument("--in", dest="in_dir", required=True)
    p_deg.add_argument("--out", required=True)
    p_deg.add_argument("--seed", type=int, default=0)

    p_ver = sub.add_parser("verify", help="run the property suites")
    p_ver.add_argument("--filter", default=None, help="substring filter on suite names")
    p_ver.add_argument("--f64", action="store_true", help="tighten tolerances to float64")
    return parser


def _seeded(cfg: ModelConfig) -> ModelConfig:
    env = os.environ.get("D2R_SEED")
    if env is not None:
        try:
            cfg.seed = int(env)
        except ValueError:
            raise D2RError(f"D2R_SEED must be an integer, got {env!r}")
    return cfg


def cmd_train(args) -> int:
    cfg = _seeded(load_config(args.config))
    pairs = data_mod.load_pairs(args.data)
    out_dir = Path(args.out)
    prerequisite = None
    if args.stage >= 2 and args.resume is None:
        prerequisite = out_dir / f"stage{args.stage - 1}.ckpt"
        if not prerequisite.is_file():
            raise D2RError(f"stage {args.stage} needs {prerequisite}; run the "
                           f"previous stage first")
    ckpt, metrics = train_stage(args.stage, cfg, pairs, out_dir,
                                prerequisite=prerequisite, resume=args.resume)
    print(f"checkpoint: {ckpt}")
    print(f"metrics: {metrics}")
    return 0


def cmd_eval(args) -> int:
    pairs = data_mod.load_pairs(args.data)
    table = evaluate(args.ckpt, pairs, report_path=args.report)
    for key in sorted(table):
        print(f"{key}\t{table[key]:.6f}")
    return 0


def cmd_degrade(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(p for p in in_dir.iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg")) if in_dir.is_dir() else []
    if not files:
        raise D2RError(f"no images found in {in_dir}")
    level = args.level
    if args.kind == "noise" and level > 1.0:
        level = level / 255.0  # accept sigma given on the 8-bit scale
    rows = []
    for i, src in enumerate(files):
        spec = data_mod.DegradationSpec(args.kind, level, seed=args.seed + i)
        clean = data_mod.read_png(src)
        dst = out_dir / (src.stem + ".png")
        data_mod.write_png(dst, data_mod.degrade(clean, spec))
        rows.append((str(src.resolve()), dst.name, args.kind,
                     data_mod.params_text(spec)))
    data_mod.write_manifest(out_dir / "manifest.tsv", rows)
    print(f"wrote {len(rows)} degraded images to {out_dir}")
    return 0


def cmd_verify(args) -> int:
    ok = run_verification(args.filter, args.f64)
    return 0 if ok else 3


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"train": cmd_train, "eval": cmd_eval,
               "degrade": cmd_degrade, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except D2RError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
