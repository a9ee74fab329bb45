import numpy as np
import pytest
import torch

from tacforce import data
from tacforce.config import merge_config
from tacforce.model import ModelConfig, TactileCvae

# Tiny geometry shared across test modules: 49 patches, narrow embeddings.
TINY = dict(input_size=112, patch_size=16, embed_dim=32, depth=2, heads=4,
            decoder_depth=2)


@pytest.fixture(scope="session")
def tiny_config() -> ModelConfig:
    return ModelConfig(**TINY)


@pytest.fixture(scope="session")
def tiny_model(tiny_config) -> TactileCvae:
    return TactileCvae(tiny_config, seed=0)


def random_obs(batch: int, size: int = 112, seed: int = 0) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return (torch.rand(batch, 2, 1, size, size, generator=g) > 0.9).float()


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """3 indenters x 10 frames, grid_vision + pin_vision, on disk."""
    out = tmp_path_factory.mktemp("tiny_ds")
    cfg = merge_config({"sim.n_frames": 10, "sim.n_indenters": 3, "sim.seed": 5})
    data.write_dataset(out, cfg)
    return out


@pytest.fixture(scope="session")
def taxel_dataset_dir(tmp_path_factory):
    """taxel_array left finger, 2 indenters x 8 frames."""
    out = tmp_path_factory.mktemp("taxel_ds")
    cfg = merge_config({
        "sim.n_frames": 8, "sim.n_indenters": 2, "sim.seed": 2,
        "sim.kind_left": "taxel_array", "sim.kind_right": "grid_vision",
    })
    data.write_dataset(out, cfg)
    return out


def zero_wrench_contact(center=(12.0, 12.0), indenter="cube"):
    from tacforce.sensors import ContactState

    return ContactState(wrench=np.zeros(6), contact_center=np.asarray(center, float),
                        indenter_id=indenter)
