"""Training objective: reconstruction + KL + equilibrium consistency.

The perceptual term is a deterministic multi-scale surrogate: L1 between
Sobel gradient-response maps of prediction and target at scales
{1, 1/2, 1/4}, averaged. It replaces a learned perceptual scorer so the
artifact stays self-contained; swap in an external scorer by passing
``perceptual=`` to :func:`recon_loss`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigError
from .model import PairOutput, Posterior


@dataclass(frozen=True)
class LossWeights:
    lambda_kl: float = 1e-3
    lambda_eq: float = 1.0
    lambda_lpips: float = 1.0

    def __post_init__(self) -> None:
        for name in ("lambda_kl", "lambda_eq", "lambda_lpips"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ConfigError(f"{name} must be finite and non-negative, got {value}")

    @classmethod
    def from_run_config(cls, cfg: dict) -> "LossWeights":
        return cls(lambda_kl=cfg["train.lambda_kl"],
                   lambda_eq=cfg["train.lambda_eq"],
                   lambda_lpips=cfg["train.lambda_lpips"])


def sobel_response(img: torch.Tensor) -> torch.Tensor:
    """Horizontal/vertical Sobel responses of a (B, 1, H, W) image -> (B, 2, H, W)."""
    kx = torch.tensor([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]],
                      dtype=img.dtype, device=img.device)
    weight = torch.stack([kx, kx.t()]).unsqueeze(1)
    return F.conv2d(img, weight, padding=1)


def perceptual_surrogate(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean L1 between Sobel maps at scales {1, 1/2, 1/4}, averaged."""
    terms = []
    for scale in (1, 2, 4):
        if scale == 1:
            p, t = pred, target
        else:
            p = F.avg_pool2d(pred, scale)
            t = F.avg_pool2d(target, scale)
        terms.append((sobel_response(p) - sobel_response(t)).abs().mean())
    return torch.stack(terms).mean()


def recon_loss(pred: torch.Tensor, target: torch.Tensor,
               lambda_lpips: float = 1.0, perceptual=None) -> torch.Tensor:
    """Mean absolute error plus the weighted perceptual term."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    loss = (pred - target).abs().mean()
    if lambda_lpips > 0.0:
        scorer = perceptual if perceptual is not None else perceptual_surrogate
        loss = loss + lambda_lpips * scorer(pred, target)
    return loss


def kl_loss(post: Posterior) -> torch.Tensor:
    """Mean over all entries of the per-entry KL to the standard normal."""
    return (-0.5 * (1.0 + post.log_var - post.mu.square() - post.log_var.exp())).mean()


def eq_loss(z_left: torch.Tensor, z_right: torch.Tensor) -> torch.Tensor:
    """Patch-normalized squared distance between the two latent force maps.

    Per sample: ||z_L - z_R||^2 summed over all entries, divided by the
    patch count; batches average over samples.
    """
    if z_left.shape != z_right.shape:
        raise ValueError(
            f"shape mismatch: {tuple(z_left.shape)} vs {tuple(z_right.shape)}"
        )
    n_patches = z_left.shape[-2]
    sq = (z_left - z_right).square().sum(dim=(-2, -1)) / n_patches
    return sq.mean()


def combine_losses(recon, kl, eq, weights: LossWeights):
    """Weighted total: recon + lambda_kl * kl + lambda_eq * eq."""
    return recon + weights.lambda_kl * kl + weights.lambda_eq * eq


def total_loss(pair: PairOutput, x_left: torch.Tensor, x_right: torch.Tensor,
               weights: LossWeights) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted sum of the four-branch reconstruction, KL, and equilibrium terms.

    The equilibrium term compares the posterior means so the pairwise
    constraint is noise-free; reconstruction branches use the sampled
    latents carried in ``pair``.
    """
    expected = {(i, j) for i in ("L", "R") for j in ("L", "R")}
    if set(pair.recons) != expected:
        raise ValueError(f"expected reconstruction branches {sorted(expected)}, "
                         f"got {sorted(pair.recons)}")
    targets = {"L": x_left[:, 1], "R": x_right[:, 1]}
    recon = sum(recon_loss(pair.recons[(i, j)], targets[j], weights.lambda_lpips)
                for i in ("L", "R") for j in ("L", "R"))
    kl = 0.5 * (kl_loss(pair.posterior_left) + kl_loss(pair.posterior_right))
    eq = eq_loss(pair.posterior_left.mu, pair.posterior_right.mu)
    total = combine_losses(recon, kl, eq, weights)
    breakdown = {
        "recon": float(recon.detach()),
        "kl": float(kl.detach()),
        "eq": float(eq.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown
