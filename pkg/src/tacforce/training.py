"""Label-free training loop over paired observations.

Adaptive-moment gradient descent with cosine learning-rate decay on the
combined reconstruction / KL / equilibrium objective. Fixed seeds give
reproducible loss trajectories on the same hardware.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import NumericFailure
from .losses import LossWeights, total_loss
from .model import TactileCvae

LOSS_CSV_COLUMNS = ("step", "recon", "kl", "eq", "total")


@dataclass
class TrainConfig:
    batch_size: int = 8
    epochs: int = 4
    lr: float = 1e-4
    weight_decay: float = 1e-4
    seed: int = 0
    ckpt_every: int = 0   # epochs between periodic checkpoints; 0 = final only

    def __post_init__(self) -> None:
        if self.batch_size <= 0 or self.epochs <= 0 or self.lr <= 0:
            raise ValueError("batch_size, epochs, and lr must be positive")

    @classmethod
    def from_run_config(cls, cfg: dict) -> "TrainConfig":
        return cls(batch_size=cfg["train.batch_size"], epochs=cfg["train.epochs"],
                   lr=cfg["train.lr"], weight_decay=cfg["train.weight_decay"],
                   seed=cfg["train.seed"], ckpt_every=cfg["train.ckpt_every"])


def write_loss_csv(history: list[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(LOSS_CSV_COLUMNS) + "\n")
        for row in history:
            fh.write(",".join(f"{row[c]}" if c == "step" else f"{row[c]:.8g}"
                              for c in LOSS_CSV_COLUMNS) + "\n")


def train(dataset, model: TactileCvae, weights: LossWeights, cfg: TrainConfig, *,
          val_dataset=None, log_csv: str | Path | None = None,
          checkpoint_fn=None, dump_dir: str | Path | None = None,
          val_max_samples: int = 256, quiet: bool = True) -> dict:
    """Run the full training loop; returns per-step and per-epoch records.

    ``checkpoint_fn(model, epoch)`` is invoked at the configured cadence and
    once after the final epoch. A non-finite loss dumps the offending batch
    under ``dump_dir`` and raises :class:`NumericFailure`.
    """
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    model.train()
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr,
                            weight_decay=cfg.weight_decay)
    steps_per_epoch = math.ceil(len(dataset) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(total_steps, 1))
    gen = torch.Generator().manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)

    history: list[dict] = []
    epoch_log: list[dict] = []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(dataset))
            sums = {"recon": 0.0, "kl": 0.0, "eq": 0.0, "total": 0.0}
            for start in range(0, len(order), cfg.batch_size):
                chunk = order[start:start + cfg.batch_size].tolist()
                swap = rng.random(len(chunk)) < 0.5
                x_l, x_r = dataset.batch(chunk, swap)
                x_l = torch.from_numpy(x_l)
                x_r = torch.from_numpy(x_r)
                pair = model.forward_pair(x_l, x_r, mode="train", generator=gen)
                loss, breakdown = total_loss(pair, x_l, x_r, weights)
                if not math.isfinite(breakdown["total"]):
                    path = _dump_batch(dump_dir, step, x_l, x_r, chunk)
                    raise NumericFailure(
                        f"non-finite loss {breakdown['total']} at step {step}"
                        + (f"; offending batch dumped to {path}" if path else "")
                    )
                opt.zero_grad()
                loss.backward()
                opt.step()
                sched.step()
                history.append({"step": step, **breakdown})
                for key in sums:
                    sums[key] += breakdown[key]
                step += 1
            record = {"epoch": epoch,
                      **{k: v / steps_per_epoch for k, v in sums.items()}}
            if val_dataset is not None:
                record.update({f"val_{k}": v for k, v in
                               evaluate_pairs(model, val_dataset,
                                              max_samples=val_max_samples).items()})
                model.train()
            epoch_log.append(record)
            if not quiet:
                parts = [f"epoch {epoch + 1}/{cfg.epochs}"]
                parts += [f"{k} {record[k]:.4f}" for k in ("recon", "kl", "eq", "total")]
                if "val_eq" in record:
                    parts.append(f"val_eq {record['val_eq']:.4f}")
                print("  ".join(parts), flush=True)
            if checkpoint_fn is not None and cfg.ckpt_every > 0 \
                    and (epoch + 1) % cfg.ckpt_every == 0:
                checkpoint_fn(model, epoch)
    finally:
        if log_csv is not None:
            write_loss_csv(history, log_csv)
    if checkpoint_fn is not None:
        checkpoint_fn(model, cfg.epochs - 1)
    model.eval()
    return {"steps": history, "epochs": epoch_log}


def _dump_batch(dump_dir, step, x_l, x_r, indices) -> Path | None:
    if dump_dir is None:
        return None
    path = Path(dump_dir) / f"nan_batch_step{step}.npz"
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, x_left=x_l.numpy(), x_right=x_r.numpy(),
             indices=np.asarray(indices))
    return path


def evaluate_pairs(model: TactileCvae, dataset, batch_size: int = 16,
                   max_samples: int | None = None) -> dict[str, float]:
    """Held-out pair metrics at inference (z = posterior mean).

    Reports the equilibrium distance, per-branch L1 errors of the cross
    reconstruction, and the L1 of a zero-latent decode of the same targets
    (the no-information baseline).
    """
    from .losses import eq_loss  # local to keep module import cheap

    model.eval()
    n = len(dataset)
    if max_samples is not None and n > max_samples:
        idx = np.linspace(0, n - 1, max_samples).astype(int).tolist()
    else:
        idx = list(range(n))
    eq_vals, cross_vals, self_vals, zero_vals = [], [], [], []
    with torch.no_grad():
        for start in range(0, len(idx), batch_size):
            chunk = idx[start:start + batch_size]
            x_l, x_r = dataset.batch(chunk)
            x_l = torch.from_numpy(x_l)
            x_r = torch.from_numpy(x_r)
            pair = model.forward_pair(x_l, x_r, mode="eval")
            b = x_l.shape[0]
            eq_vals.append((float(eq_loss(pair.posterior_left.mu,
                                          pair.posterior_right.mu)), b))
            cur_r = x_r[:, 1]
            cross = (pair.recons[("L", "R")] - cur_r).abs().mean()
            own = (pair.recons[("R", "R")] - cur_r).abs().mean()
            zero = (model.decode(x_r[:, 0], torch.zeros_like(pair.z_right)) - cur_r).abs().mean()
            cross_vals.append((float(cross), b))
            self_vals.append((float(own), b))
            zero_vals.append((float(zero), b))

    def wmean(pairs):
        total = sum(w for _, w in pairs)
        return sum(v * w for v, w in pairs) / total

    return {"eq": wmean(eq_vals), "cross_l1": wmean(cross_vals),
            "self_l1": wmean(self_vals), "zero_l1": wmean(zero_vals)}
