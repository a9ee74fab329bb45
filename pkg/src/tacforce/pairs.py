"""Training-path access to paired observations.

This loader sees only the manifest and the frame PNGs; by construction it
has no way to reach the per-frame force metadata, which keeps the
representation-learning stage label-free.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .canonical import MODEL_SIZE, load_png, resize_nearest
from .data import episodes_for_split, frame_path, load_manifest


class PairDataset:
    """Paired (left, right) observations from one dataset directory.

    Each sample is a pair of (2, 1, S, S) float32 arrays with values in
    {0, 1}: frame 0 of the episode as the reference and frame k as the
    contact frame, for each finger.
    """

    def __init__(self, data_dir: str | Path, split: str = "train",
                 model_size: int = MODEL_SIZE, cache: bool = True):
        self.data_dir = Path(data_dir)
        self.model_size = model_size
        self.manifest = load_manifest(data_dir)
        self.episodes = episodes_for_split(self.manifest, split)
        if not self.episodes:
            raise ValueError(f"split {split!r} holds no episodes in {data_dir}")
        self.index: list[tuple[str, int]] = []
        for ep in self.episodes:
            for k in range(1, ep["n_frames"]):
                self.index.append((ep["id"], k))
        self._cache: dict[tuple[str, str, int], np.ndarray] | None = {} if cache else None

    def __len__(self) -> int:
        return len(self.index)

    def _frame(self, episode_id: str, k: int, side: str) -> np.ndarray:
        key = (episode_id, side, k)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        img = load_png(frame_path(self.data_dir, episode_id, k, side))
        pixels = resize_nearest(img.pixels, (self.model_size, self.model_size))
        frame = (pixels > 127).astype(np.float32)
        if self._cache is not None:
            self._cache[key] = frame
        return frame

    def observation(self, episode_id: str, k: int, side: str) -> np.ndarray:
        """(2, 1, S, S) reference/contact stack for one finger."""
        ref = self._frame(episode_id, 0, side)
        cur = self._frame(episode_id, k, side)
        return np.stack([ref, cur])[:, None, :, :]

    def sample(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        episode_id, k = self.index[i]
        return (self.observation(episode_id, k, "L"),
                self.observation(episode_id, k, "R"))

    def batch(self, indices: list[int], swap: np.ndarray | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
        """Stack samples into (B, 2, 1, S, S) pairs, optionally swapping sides."""
        lefts, rights = [], []
        for j, i in enumerate(indices):
            x_l, x_r = self.sample(i)
            if swap is not None and swap[j]:
                x_l, x_r = x_r, x_l
            lefts.append(x_l)
            rights.append(x_r)
        return np.stack(lefts), np.stack(rights)
