"""Flat dotted-key run configuration.

One config file drives every command. The format is a plain text file of
``key = value`` lines (TOML-like scalars, ``#`` comments); keys are dotted
paths such as ``sim.n_frames``. Every key has a default below, so a run is
fully reproducible from the config file alone.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

# Defaults for every recognized key. Values double as the expected type.
DEFAULTS: dict[str, object] = {
    # --- synthetic data generation ---
    "sim.kind_left": "grid_vision",
    "sim.kind_right": "pin_vision",
    "sim.n_frames": 1000,
    "sim.n_indenters": 8,
    "sim.seed": 0,
    "sim.noise_std": 0.0,
    "sim.f_min": 0.0,            # normal force at frame 0 (N)
    "sim.fz_peak_min": 6.0,      # per-episode peak normal force sampled in
    "sim.fz_peak_max": 12.0,     # [fz_peak_min, fz_peak_max] N
    "sim.shear_limit": 3.0,      # |Fx|,|Fy| hard clip (N)
    "sim.mu_cap": 0.4,           # friction cap: |shear| <= mu_cap * Fz
    "sim.torque_amp": 0.0,       # torque excitation amplitude (N*mm)
    "sim.jitter_mm": 0.0,        # marker layout jitter per profile seed
    "sim.gain_shear.grid_vision": 0.30,   # mm/N
    "sim.gain_normal.grid_vision": 0.15,
    "sim.gain_shear.pin_vision": 0.55,    # softer skin
    "sim.gain_normal.pin_vision": 0.30,
    "sim.gain_shear.taxel_array": 0.25,
    "sim.gain_normal.taxel_array": 0.12,
    # --- canonicalization (taxel signal -> marker image rendering) ---
    "canon.k_xy": 20.0,          # px per mm of taxel shear
    "canon.k_z": 4.0,            # px radius growth per mm of taxel depth
    "canon.r_min": 2.0,
    "canon.r_max": 24.0,
    # --- model ---
    "model.input_size": 224,
    "model.patch_size": 16,
    "model.embed_dim": 256,
    "model.depth": 4,
    "model.heads": 8,
    "model.decoder_depth": 4,
    "model.seed": 0,
    # --- training ---
    "train.batch_size": 8,
    "train.epochs": 4,
    "train.lr": 1e-4,
    "train.weight_decay": 1e-4,
    "train.seed": 0,
    "train.ckpt_every": 0,       # epochs between checkpoints; 0 = final only
    "train.lambda_kl": 1e-3,
    "train.lambda_eq": 1.0,
    "train.lambda_lpips": 1.0,
    # --- force head / zero-shot evaluation ---
    "head.window": 5,            # frames per regression window
    "head.channels": 32,
    "head.epochs": 30,
    "head.lr": 1e-3,
    "head.batch_size": 32,
    "head.seed": 0,
}


def _parse_scalar(text: str, key: str) -> object:
    text = text.strip()
    if not text:
        raise ConfigError(f"empty value for config key: {key}")
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_text(text: str) -> dict[str, object]:
    """Parse ``key = value`` lines into a flat dict (no defaults applied)."""
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _parse_scalar(value, key.strip())
    return out


def merge_config(overrides: dict[str, object],
                 base: dict[str, object] | None = None) -> dict[str, object]:
    """Apply overrides onto ``base`` (defaults), validating keys and types."""
    cfg = dict(DEFAULTS if base is None else base)
    for key, value in overrides.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        default = DEFAULTS[key]
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"config key {key} expects a boolean, got {value!r}")
        elif isinstance(default, int) and not isinstance(value, bool):
            if not isinstance(value, int):
                raise ConfigError(f"config key {key} expects an integer, got {value!r}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key {key} expects a number, got {value!r}")
            value = float(value)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"config key {key} expects a string, got {value!r}")
        cfg[key] = value
    return cfg


def load_config(path: str | Path | None = None) -> dict[str, object]:
    """Load a config file merged over the defaults. ``None`` -> defaults."""
    if path is None:
        return dict(DEFAULTS)
    text = Path(path).read_text()
    return merge_config(parse_config_text(text))


def format_config(cfg: dict[str, object]) -> str:
    """Render a config as parseable ``key = value`` lines, sorted by key."""
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
