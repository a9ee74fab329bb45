"""Frozen-encoder force regression and latent-force correlation analysis.

The encoder is frozen, a convolutional recurrent head is trained on one
(source) sensor's labeled windows, and evaluation runs zero-shot on a
target sensor: no finetuning, no gradient computation, no parameter
mutation. Labels come from the wrench metadata, which only this module
reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .data import read_meta
from .errors import UndefinedMetricError
from .model import TactileCvae, encoder_checksum
from .pairs import PairDataset

FORCE_AXES = ("fx", "fy", "fz")

# Incremented on every head optimization step; zero-shot evaluation must
# leave it untouched (instrumented no-training audit).
grad_step_count = 0


# ---------------------------------------------------------------------------
# scalar metrics
# ---------------------------------------------------------------------------

def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("pearson expects two equal-length 1D sequences")
    if len(xs) < 2:
        raise UndefinedMetricError("pearson needs at least 2 points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise UndefinedMetricError("pearson undefined for zero-variance input")
    return float(dx @ dy / math.sqrt(vx * vy))


def r2(y_true, y_pred) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("r2 expects two equal-length 1D sequences")
    if len(y_true) < 2:
        raise UndefinedMetricError("r2 needs at least 2 points")
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise UndefinedMetricError("r2 undefined for constant targets")
    ss_res = float(((y_true - y_pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def mae(y_true, y_pred) -> float:
    """Mean absolute error."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or len(y_true) == 0:
        raise ValueError("mae expects two equal-length non-empty 1D sequences")
    return float(np.abs(y_true - y_pred).mean())


# ---------------------------------------------------------------------------
# labeled access and latent extraction
# ---------------------------------------------------------------------------

class LabeledDataset:
    """One sensor side of a dataset with per-frame force labels."""

    def __init__(self, data_dir: str | Path, side: str, split: str = "train",
                 model_size: int = 224):
        if side not in ("L", "R"):
            raise ValueError(f"side must be 'L' or 'R', got {side!r}")
        self.side = side
        self.pairs = PairDataset(data_dir, split=split, model_size=model_size)
        self.meta = {ep["id"]: read_meta(data_dir, ep["id"])
                     for ep in self.pairs.episodes}
        key = "left" if side == "L" else "right"
        self.sensor_id = self.pairs.manifest["profiles"][key]["sensor_id"]

    @property
    def episodes(self) -> list[dict]:
        return self.pairs.episodes

    def observation(self, episode_id: str, k: int) -> np.ndarray:
        return self.pairs.observation(episode_id, k, self.side)

    def force(self, episode_id: str, k: int) -> np.ndarray:
        return np.asarray(self.meta[episode_id][k]["wrench"][:3], dtype=float)

    def indenter(self, episode_id: str) -> str:
        return self.meta[episode_id][0]["indenter_id"]


def episode_latent_maps(model: TactileCvae, labeled: LabeledDataset,
                        episode_id: str, n_frames: int,
                        batch_size: int = 32) -> np.ndarray:
    """Posterior-mean latent maps (n_frames, N_p, 6) for one episode."""
    model.eval()
    maps = []
    with torch.no_grad():
        for start in range(0, n_frames, batch_size):
            ks = range(start, min(start + batch_size, n_frames))
            obs = np.stack([labeled.observation(episode_id, k) for k in ks])
            post = model.encode(torch.from_numpy(obs))
            maps.append(post.mu.numpy())
    return np.concatenate(maps)


def frame_latents_and_forces(model: TactileCvae, labeled: LabeledDataset,
                             batch_size: int = 32
                             ) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Patch-averaged latents (n, 6), forces (n, 3), indenter per frame."""
    zs, fs, groups = [], [], []
    for ep in labeled.episodes:
        maps = episode_latent_maps(model, labeled, ep["id"], ep["n_frames"], batch_size)
        zs.append(maps.mean(axis=1))
        fs.append(np.stack([labeled.force(ep["id"], k) for k in range(ep["n_frames"])]))
        groups.extend([labeled.indenter(ep["id"])] * ep["n_frames"])
    return np.concatenate(zs), np.concatenate(fs), groups


def correlation_matrix(latents: np.ndarray, forces: np.ndarray) -> np.ndarray:
    """(6, 3) Pearson matrix; undefined cells are NaN."""
    out = np.full((latents.shape[1], forces.shape[1]), np.nan)
    for i in range(latents.shape[1]):
        for j in range(forces.shape[1]):
            try:
                out[i, j] = pearson(latents[:, i], forces[:, j])
            except UndefinedMetricError:
                pass
    return out


@dataclass
class CorrelationResult:
    per_sensor: dict[str, np.ndarray]   # sensor_id -> (6, 3)
    pooled: np.ndarray                  # (6, 3) over all frames
    sd: np.ndarray                      # (6, 3) SD across sensors
    counts: dict[str, int]
    n: int


def latent_correlation_analysis(model: TactileCvae,
                                labeled_sets: dict[str, LabeledDataset],
                                batch_size: int = 32) -> CorrelationResult:
    """Latent-force Pearson matrices per sensor, pooled, and their spread.

    SD is taken across sensors (population SD over the per-sensor
    matrices); NaN marks cells undefined for every sensor.
    """
    per_sensor: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    all_z, all_f = [], []
    for sensor_id, labeled in labeled_sets.items():
        z, f, _ = frame_latents_and_forces(model, labeled, batch_size)
        per_sensor[sensor_id] = correlation_matrix(z, f)
        counts[sensor_id] = len(z)
        all_z.append(z)
        all_f.append(f)
    pooled_z = np.concatenate(all_z)
    pooled_f = np.concatenate(all_f)
    stack = np.stack(list(per_sensor.values()))
    return CorrelationResult(
        per_sensor=per_sensor,
        pooled=correlation_matrix(pooled_z, pooled_f),
        sd=np.nanstd(stack, axis=0) if len(stack) else np.zeros((6, 3)),
        counts=counts,
        n=len(pooled_z),
    )


def correlation_csv(result: CorrelationResult, path: str | Path) -> None:
    """6x3 pooled r values plus their SDs, one row per latent dimension."""
    header = ["latent"] + [f"r_{a}" for a in FORCE_AXES] + [f"sd_{a}" for a in FORCE_AXES]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(result.pooled.shape[0]):
            row = [f"z{i}"]
            row += [f"{result.pooled[i, j]:.6f}" for j in range(3)]
            row += [f"{result.sd[i, j]:.6f}" for j in range(3)]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# force prediction head
# ---------------------------------------------------------------------------

@dataclass
class HeadConfig:
    window: int = 5
    channels: int = 32
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0

    @classmethod
    def from_run_config(cls, cfg: dict) -> "HeadConfig":
        return cls(window=cfg["head.window"], channels=cfg["head.channels"],
                   epochs=cfg["head.epochs"], lr=cfg["head.lr"],
                   batch_size=cfg["head.batch_size"], seed=cfg["head.seed"])


class ConvGRUCell(nn.Module):
    def __init__(self, channels: int, kernel: int = 3):
        super().__init__()
        pad = kernel // 2
        self.gates = nn.Conv2d(2 * channels, 2 * channels, kernel, padding=pad)
        self.candidate = nn.Conv2d(2 * channels, channels, kernel, padding=pad)

    def forward(self, x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        update, reset = torch.sigmoid(self.gates(torch.cat([x, h], dim=1))).chunk(2, dim=1)
        cand = torch.tanh(self.candidate(torch.cat([x, reset * h], dim=1)))
        return (1.0 - update) * h + update * cand


class ForceHead(nn.Module):
    """Spatial convolutions over the latent grid, a convolutional gated
    recurrent aggregator over the frame window, and an MLP to (Fx, Fy, Fz)."""

    def __init__(self, grid: int, latent_dim: int = 6, channels: int = 32,
                 window: int = 5, seed: int = 0):
        super().__init__()
        self.grid = grid
        self.latent_dim = latent_dim
        self.channels = channels
        self.window = window
        self.seed = seed
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.features = nn.Sequential(
                nn.Conv2d(latent_dim, channels, 3, padding=1), nn.ReLU(),
                nn.Conv2d(channels, channels, 3, padding=1), nn.ReLU(),
            )
            self.gru = ConvGRUCell(channels)
            self.mlp = nn.Sequential(nn.Linear(channels, channels), nn.ReLU(),
                                     nn.Linear(channels, 3))

    def forward(self, z_seq: torch.Tensor) -> torch.Tensor:
        """(B, L, N_p, 6) latent-map windows -> (B, 3) forces."""
        b, length, n, d = z_seq.shape
        if n != self.grid**2:
            raise ValueError(f"latent map has {n} patches, head expects {self.grid**2}")
        x = z_seq.reshape(b * length, self.grid, self.grid, d).permute(0, 3, 1, 2)
        feats = self.features(x)
        feats = feats.reshape(b, length, -1, self.grid, self.grid)
        h = torch.zeros_like(feats[:, 0])
        for t in range(length):
            h = self.gru(feats[:, t], h)
        return self.mlp(h.mean(dim=(2, 3)))


def make_windows(model: TactileCvae, labeled: LabeledDataset, window: int,
                 batch_size: int = 32
                 ) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Sliding latent windows (n, L, N_p, 6), last-frame forces, indenters."""
    zs, ys, groups = [], [], []
    for ep in labeled.episodes:
        n_frames = ep["n_frames"]
        if n_frames < window:
            continue
        maps = episode_latent_maps(model, labeled, ep["id"], n_frames, batch_size)
        indenter = labeled.indenter(ep["id"])
        for k in range(window - 1, n_frames):
            zs.append(maps[k - window + 1:k + 1])
            ys.append(labeled.force(ep["id"], k))
            groups.append(indenter)
    if not zs:
        raise ValueError(f"no windows of length {window} in the dataset")
    return (np.stack(zs).astype(np.float32),
            np.stack(ys).astype(np.float32), groups)


def train_head(model: TactileCvae, labeled_source: LabeledDataset,
               cfg: HeadConfig, quiet: bool = True) -> ForceHead:
    """Fit the force head by MSE on source windows; the encoder stays frozen."""
    global grad_step_count
    checksum_before = encoder_checksum(model)
    z, y, _ = make_windows(model, labeled_source, cfg.window)
    head = ForceHead(model.config.grid, model.config.latent_dim,
                     channels=cfg.channels, window=cfg.window, seed=cfg.seed)
    head.train()
    opt = torch.optim.Adam(head.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    z_t = torch.from_numpy(z)
    y_t = torch.from_numpy(y)
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(z))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = torch.from_numpy(order[start:start + cfg.batch_size])
            pred = head(z_t[idx])
            loss = ((pred - y_t[idx]) ** 2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            grad_step_count += 1
            epoch_loss += float(loss.detach())
        if not quiet:
            print(f"head epoch {epoch + 1}/{cfg.epochs}  mse "
                  f"{epoch_loss / max(1, math.ceil(len(order) / cfg.batch_size)):.5f}",
                  flush=True)
    head.eval()
    if encoder_checksum(model) != checksum_before:
        raise RuntimeError("frozen-encoder violation: parameters changed during head training")
    return head


# ---------------------------------------------------------------------------
# zero-shot evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    source: str
    target: str
    n: int
    r2: dict[str, float]
    mae: dict[str, float]
    pearson: np.ndarray       # (6, 3) mean across indenter groups
    pearson_sd: np.ndarray    # (6, 3) SD across indenter groups
    self_eval: bool

    def to_json_dict(self) -> dict:
        def clean(arr):
            return [[None if np.isnan(v) else float(v) for v in row] for row in arr]

        return {
            "format_version": 1,
            "source": self.source,
            "target": self.target,
            "n": self.n,
            "r2": self.r2,
            "mae": self.mae,
            "pearson": clean(self.pearson),
            "pearson_sd": clean(self.pearson_sd),
            "self_eval": self.self_eval,
        }


def zero_shot_eval(head: ForceHead, model: TactileCvae,
                   labeled_target: LabeledDataset, *, source_id: str = "",
                   batch_size: int = 64) -> EvalReport:
    """Evaluate the trained head on a target sensor without any updates.

    The Pearson matrix is computed per indenter group on the target set and
    reported as mean +- SD across groups.
    """
    z, y, groups = make_windows(model, labeled_target, head.window)
    if len(z) == 0:
        raise ValueError("target dataset produced no evaluation windows")
    head.eval()
    model.eval()
    preds = []
    with torch.no_grad():
        for start in range(0, len(z), batch_size):
            preds.append(head(torch.from_numpy(z[start:start + batch_size])).numpy())
    pred = np.concatenate(preds)

    r2_vals = {axis: r2(y[:, j], pred[:, j]) for j, axis in enumerate(FORCE_AXES)}
    mae_vals = {axis: mae(y[:, j], pred[:, j]) for j, axis in enumerate(FORCE_AXES)}

    z_mean = z[:, -1].mean(axis=1)  # last-frame patch-averaged latent
    group_ids = sorted(set(groups))
    matrices = []
    for gid in group_ids:
        mask = np.asarray([g == gid for g in groups])
        matrices.append(correlation_matrix(z_mean[mask], y[mask]))
    stack = np.stack(matrices)
    with np.errstate(invalid="ignore"):
        pearson_mean = np.nanmean(stack, axis=0)
        pearson_sd = np.nanstd(stack, axis=0)

    return EvalReport(
        source=source_id,
        target=labeled_target.sensor_id,
        n=len(z),
        r2=r2_vals,
        mae=mae_vals,
        pearson=pearson_mean,
        pearson_sd=pearson_sd,
        self_eval=(source_id == labeled_target.sensor_id),
    )
