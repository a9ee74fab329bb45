"""Command line surface: simgen / train / reconstruct / analyze / evalzs.

Exit codes: 0 success, 2 I/O, 3 config, 4 numeric failure, 5 artifact
mismatch. Every command is driven by one flat config file plus explicit
overrides, so a run is reproducible from its arguments alone.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import DEFAULTS, format_config, load_config, merge_config, parse_config_text
from .errors import ArtifactMismatch, ConfigError, NumericFailure


def _load_cfg(args) -> dict:
    cfg = load_config(getattr(args, "config", None))
    overrides: dict[str, object] = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides.update(parse_config_text(item))
    if getattr(args, "seed", None) is not None:
        for key in ("sim.seed", "train.seed", "model.seed", "head.seed"):
            overrides[key] = args.seed
    if getattr(args, "lambda_eq", None) is not None:
        overrides["train.lambda_eq"] = args.lambda_eq
    if getattr(args, "epochs", None) is not None:
        overrides["train.epochs"] = args.epochs
    return merge_config(overrides, base=cfg)


class _TrainLock:
    """Single training instance per output directory."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / ".train.lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OSError(
                f"lock file {self.path} exists: another training run owns this "
                "directory (remove the file if that run is gone)"
            )
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def cmd_simgen(args) -> int:
    from .data import write_dataset

    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = write_dataset(out, cfg)
    n_eps = len(manifest["episodes"])
    n_frames = sum(ep["n_frames"] for ep in manifest["episodes"])
    print(f"wrote {n_eps} episodes / {n_frames} paired frames to {out}")
    print(f"splits: " + ", ".join(f"{k}={len(v)}" for k, v in manifest["splits"].items()))
    return 0


def cmd_train(args) -> int:
    from . import checkpoint, figures
    from .losses import LossWeights
    from .model import ModelConfig, TactileCvae
    from .pairs import PairDataset
    from .training import TrainConfig, train

    cfg = _load_cfg(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_cfg = ModelConfig.from_run_config(cfg)
    model = TactileCvae(model_cfg, seed=cfg["model.seed"])
    dataset = PairDataset(args.data, split="train", model_size=model_cfg.input_size)
    try:
        val_dataset = PairDataset(args.data, split="val", model_size=model_cfg.input_size)
    except ValueError:
        val_dataset = None
    weights = LossWeights.from_run_config(cfg)
    train_cfg = TrainConfig.from_run_config(cfg)

    ckpt_path = out / "checkpoint.tfck"

    def save_ckpt(m, epoch):
        checkpoint.save_model(ckpt_path, m, extra={"epoch": epoch})
        if train_cfg.ckpt_every > 0 and epoch + 1 < train_cfg.epochs:
            checkpoint.save_model(out / f"checkpoint_ep{epoch + 1:03d}.tfck", m,
                                  extra={"epoch": epoch})

    print(f"model: {model.parameter_count()} parameters, "
          f"{model_cfg.n_patches} patches, embed {model_cfg.embed_dim}")
    with _TrainLock(out):
        result = train(dataset, model, weights, train_cfg,
                       val_dataset=val_dataset, log_csv=out / "loss.csv",
                       checkpoint_fn=save_ckpt, dump_dir=out, quiet=False)
    figures.loss_curves(result["steps"], out / "loss_curves.png")
    (out / "run_config.txt").write_text(format_config(cfg))
    print(f"checkpoint: {ckpt_path}")
    return 0


def _resolve_side(manifest: dict, spec: str) -> str:
    if spec in ("L", "R"):
        return spec
    for side, key in (("L", "left"), ("R", "right")):
        if manifest["profiles"][key]["sensor_id"] == spec:
            return side
    raise ConfigError(f"no sensor {spec!r} in dataset (use L, R, or a sensor_id)")


def cmd_reconstruct(args) -> int:
    import torch

    from . import checkpoint, figures
    from .pairs import PairDataset

    model = checkpoint.load_model(args.ckpt)
    dataset = PairDataset(args.data, split="all", model_size=model.config.input_size)
    episode = args.episode or dataset.episodes[-1]["id"]
    known = {ep["id"]: ep for ep in dataset.episodes}
    if episode not in known:
        raise ArtifactMismatch(f"episode {episode!r} not in dataset {args.data}")
    frame = args.frame if args.frame is not None else known[episode]["n_frames"] - 1
    x_l = torch.from_numpy(dataset.observation(episode, frame, "L")).unsqueeze(0)
    x_r = torch.from_numpy(dataset.observation(episode, frame, "R")).unsqueeze(0)
    with torch.no_grad():
        pair = model.forward_pair(x_l, x_r, mode="eval")
    grid = figures.reconstruction_grid(
        x_l[0, 1].numpy(), pair.recons[("L", "L")][0].numpy(),
        pair.recons[("R", "L")][0].numpy(),
        x_r[0, 1].numpy(), pair.recons[("R", "R")][0].numpy(),
        pair.recons[("L", "R")][0].numpy(),
    )
    figures.save_grid(grid, args.out)
    print(f"wrote 2x4 reconstruction grid for {episode} frame {frame} to {args.out}")
    return 0


def cmd_analyze(args) -> int:
    from . import checkpoint, figures
    from .evaluate import (LabeledDataset, correlation_csv,
                           latent_correlation_analysis)

    model = checkpoint.load_model(args.ckpt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labeled = {}
    for side in ("L", "R"):
        ds = LabeledDataset(args.data, side, split=args.split,
                            model_size=model.config.input_size)
        labeled[ds.sensor_id] = ds
    result = latent_correlation_analysis(model, labeled)
    correlation_csv(result, out / "correlation.csv")
    figures.correlation_heatmap(result, out / "correlation_heatmap.png")
    summary = {
        "format_version": 1,
        "n": result.n,
        "counts": result.counts,
        "per_sensor": {k: v.tolist() for k, v in result.per_sensor.items()},
    }
    with open(out / "correlation_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"analyzed {result.n} frames across {len(labeled)} sensors")
    print(f"wrote {out / 'correlation.csv'} and heat map")
    return 0


def cmd_evalzs(args) -> int:
    from . import checkpoint, figures
    from .evaluate import HeadConfig, LabeledDataset, train_head, zero_shot_eval

    cfg = _load_cfg(args)
    model = checkpoint.load_model(args.ckpt)
    source_manifest_dir = args.data
    target_dir = args.target_data or args.data

    from .data import load_manifest

    source_side = _resolve_side(load_manifest(source_manifest_dir), args.source)
    target_side = _resolve_side(load_manifest(target_dir), args.target)

    head_cfg = HeadConfig.from_run_config(cfg)
    source = LabeledDataset(source_manifest_dir, source_side, split="train",
                            model_size=model.config.input_size)
    if args.head and Path(args.head).exists():
        head, head_source = checkpoint.load_head(args.head)
        source_id = head_source or source.sensor_id
        print(f"loaded head from {args.head}")
    else:
        print(f"training head on {source.sensor_id} (seen indenters)")
        head = train_head(model, source, head_cfg, quiet=False)
        source_id = source.sensor_id
        if args.head:
            checkpoint.save_head(args.head, head, source_id)
            print(f"saved head to {args.head}")

    target = LabeledDataset(target_dir, target_side, split="test",
                            model_size=model.config.input_size)
    report = zero_shot_eval(head, model, target, source_id=source_id)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    figures.eval_report_figure(report, out.with_suffix(".png"))
    tag = " (self-evaluation)" if report.self_eval else ""
    print(f"{report.source} -> {report.target}{tag}: n={report.n}")
    for axis in ("fx", "fy", "fz"):
        print(f"  {axis}: R2={report.r2[axis]:+.3f}  MAE={report.mae[axis]:.3f} N")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacforce",
        description="Synthetic bilateral tactile data, label-free latent force "
                    "training, and zero-shot cross-sensor force evaluation.",
    )
    parser.add_argument("--print-config", action="store_true",
                        help="print the full default config and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simgen", help="generate a paired synthetic dataset")
    p.add_argument("--config", help="flat dotted-key config file")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--seed", type=int, help="override every *.seed key")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_simgen)

    p = sub.add_parser("train", help="train the latent force model")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--config", help="flat dotted-key config file")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lambda-eq", type=float, dest="lambda_eq")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="render a 2x4 reconstruction grid")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--episode", help="episode id (default: last)")
    p.add_argument("--frame", type=int, help="frame index (default: last)")
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("analyze", help="latent-force correlation analysis")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="all", choices=("train", "val", "test", "all"))
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evalzs", help="zero-shot cross-sensor force evaluation")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="source dataset directory")
    p.add_argument("--target-data", help="target dataset directory (default: --data)")
    p.add_argument("--source", required=True, help="source sensor: L, R, or sensor_id")
    p.add_argument("--target", required=True, help="target sensor: L, R, or sensor_id")
    p.add_argument("--head", help="head checkpoint to load, or to save after training")
    p.add_argument("--config", help="flat dotted-key config file")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_evalzs)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        sys.stdout.write(format_config(dict(DEFAULTS)))
        return 0
    if not getattr(args, "command", None):
        parser.print_help()
        return 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except ArtifactMismatch as exc:
        print(f"artifact mismatch: {exc}", file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
