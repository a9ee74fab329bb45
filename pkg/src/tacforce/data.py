"""On-disk dataset layout: manifest, paired frames, and wrench metadata.

Layout under a dataset root:

    manifest.json
    pairs/<episode>/frame_<k>_L.png      canonical binary marker image
    pairs/<episode>/frame_<k>_R.png      right finger, stored already mirrored
    pairs/<episode>/meta.jsonl           one row per frame with the wrench
    pairs/<episode>/taxels_{L,R}.jsonl   raw taxel signals (taxel kind only)

Ground-truth wrenches live only in meta.jsonl. The training path loads
pairs through :mod:`tacforce.pairs`, which never touches this file; the
reader here counts its invocations so tests can audit that.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import canonical, sensors
from .errors import ArtifactMismatch, ConfigError

FORMAT_VERSION = 1

# Incremented on every wrench-metadata read; the label-free training audit
# asserts this stays untouched across a training run.
meta_read_count = 0


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def split_indenters(ids: list[str]) -> dict[str, list[str]]:
    """Disjoint train/val/test assignment over indenter ids."""
    n = len(ids)
    if n == 1:
        return {"train": list(ids), "val": [], "test": []}
    if n == 2:
        return {"train": [ids[0]], "val": [], "test": [ids[1]]}
    n_test = max(1, n // 4)
    n_val = max(1, n // 8)
    n_train = n - n_test - n_val
    return {
        "train": ids[:n_train],
        "val": ids[n_train:n_train + n_val],
        "test": ids[n_train + n_val:],
    }


def canon_params(cfg: dict) -> dict:
    return {
        "k_xy": cfg["canon.k_xy"],
        "k_z": cfg["canon.k_z"],
        "r_min": cfg["canon.r_min"],
        "r_max": cfg["canon.r_max"],
    }


def build_profiles(cfg: dict) -> tuple[sensors.SensorProfile, sensors.SensorProfile]:
    seed = cfg["sim.seed"]
    jitter = cfg["sim.jitter_mm"]
    profiles = []
    for side, kind_key in (("left", "sim.kind_left"), ("right", "sim.kind_right")):
        kind = cfg[kind_key]
        if kind not in sensors.SENSOR_KINDS:
            raise ConfigError(f"bad value for {kind_key}: {kind!r}")
        profiles.append(sensors.make_profile(
            kind, side, seed, jitter_mm=jitter,
            shear_gain=cfg[f"sim.gain_shear.{kind}"],
            normal_gain=cfg[f"sim.gain_normal.{kind}"],
        ))
    return tuple(profiles)


def write_dataset(out_dir: str | Path, cfg: dict) -> dict:
    """Generate and persist a paired dataset; returns the manifest dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    profile_l, profile_r = build_profiles(cfg)
    params = canon_params(cfg)
    ids = sensors.indenter_ids(cfg["sim.n_indenters"])
    n_frames = cfg["sim.n_frames"]
    base_seed = cfg["sim.seed"]

    episodes = []
    checksums: dict[str, str] = {}
    for idx, indenter in enumerate(ids):
        episode_seed = base_seed * 100000 + idx
        episode_id = f"ep{idx:03d}_{indenter}"
        episode = sensors.generate_episode(
            profile_l, profile_r, indenter, n_frames, episode_seed,
            f_min=cfg["sim.f_min"],
            fz_peak_range=(cfg["sim.fz_peak_min"], cfg["sim.fz_peak_max"]),
            shear_limit=cfg["sim.shear_limit"],
            mu_cap=cfg["sim.mu_cap"],
            torque_amp=cfg["sim.torque_amp"],
            noise_std=cfg["sim.noise_std"],
            episode_id=episode_id,
        )
        ep_dir = out / "pairs" / episode_id
        ep_dir.mkdir(parents=True, exist_ok=True)
        taxel_frames = {"L": [], "R": []}
        with open(ep_dir / "meta.jsonl", "w") as meta_fh:
            for k, (contact, raw_l, raw_r) in enumerate(episode.frames):
                img_l = canonical.canonicalize_raw(raw_l, profile_l, mirror=False,
                                                   canon_params=params)
                img_r = canonical.canonicalize_raw(raw_r, profile_r, mirror=True,
                                                   canon_params=params)
                canonical.save_png(img_l, ep_dir / f"frame_{k:04d}_L.png")
                canonical.save_png(img_r, ep_dir / f"frame_{k:04d}_R.png")
                if raw_l.taxels is not None:
                    taxel_frames["L"].append(raw_l.taxels)
                if raw_r.taxels is not None:
                    taxel_frames["R"].append(raw_r.taxels)
                meta_fh.write(json.dumps({
                    "episode": episode_id,
                    "k": k,
                    "wrench": [float(v) for v in contact.wrench],
                    "contact_center": [float(v) for v in contact.contact_center],
                    "indenter_id": indenter,
                }) + "\n")
        for side, frames in taxel_frames.items():
            if frames:
                canonical.save_taxel_signals(ep_dir / f"taxels_{side}.jsonl",
                                             np.stack(frames))
        for path in sorted(ep_dir.iterdir()):
            checksums[str(path.relative_to(out))] = file_sha256(path)
        episodes.append({
            "id": episode_id,
            "indenter_id": indenter,
            "n_frames": n_frames,
            "seed": episode_seed,
        })

    manifest = {
        "format_version": FORMAT_VERSION,
        "profiles": {"left": profile_l.to_dict(), "right": profile_r.to_dict()},
        "episodes": episodes,
        "splits": split_indenters(ids),
        "checksums": checksums,
        "canon": params,
        "config": {k: v for k, v in sorted(cfg.items()) if k.startswith(("sim.", "canon."))},
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def load_manifest(data_dir: str | Path) -> dict:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"no manifest.json under {data_dir}")
    with open(path) as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ArtifactMismatch(
            f"manifest format_version {version!r} unsupported (expected {FORMAT_VERSION})"
        )
    return manifest


def validate_manifest(data_dir: str | Path, manifest: dict) -> None:
    """Check referenced files exist and splits are disjoint."""
    root = Path(data_dir)
    for rel in manifest["checksums"]:
        if not (root / rel).exists():
            raise ArtifactMismatch(f"manifest references missing file: {rel}")
    splits = manifest["splits"]
    seen: set[str] = set()
    for name in ("train", "val", "test"):
        ids = set(splits.get(name, []))
        if ids & seen:
            raise ArtifactMismatch(f"split {name} overlaps another split")
        seen |= ids


def episode_dir(data_dir: str | Path, episode_id: str) -> Path:
    return Path(data_dir) / "pairs" / episode_id


def frame_path(data_dir: str | Path, episode_id: str, k: int, side: str) -> Path:
    return episode_dir(data_dir, episode_id) / f"frame_{k:04d}_{side}.png"


def read_meta(data_dir: str | Path, episode_id: str) -> list[dict]:
    """Read the per-frame wrench rows of one episode (labeled access only)."""
    global meta_read_count
    meta_read_count += 1
    rows = []
    with open(episode_dir(data_dir, episode_id) / "meta.jsonl") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def episodes_for_split(manifest: dict, split: str) -> list[dict]:
    if split == "all":
        return list(manifest["episodes"])
    ids = set(manifest["splits"].get(split, []))
    return [ep for ep in manifest["episodes"] if ep["indenter_id"] in ids]
