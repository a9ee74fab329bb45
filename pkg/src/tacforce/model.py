"""Variational encoder/decoder over paired tactile marker images.

The encoder patchifies the (reference, contact) frame pair, alternates
spatial self-attention within each frame with causal temporal attention
across the two frames, and projects the contact-frame tokens to a
patch-wise diagonal-Gaussian posterior over a 6D-per-patch latent map.
The decoder reconstructs the contact frame from the reference frame's
patch embedding plus an additive projection of the latent map.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from .errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 224
    patch_size: int = 16
    embed_dim: int = 256
    depth: int = 4           # (spatial, temporal) block pairs in the encoder
    heads: int = 8
    decoder_depth: int = 4
    latent_dim: int = 6
    mlp_ratio: float = 4.0
    log_var_clamp: float = 10.0

    def __post_init__(self) -> None:
        if self.input_size % self.patch_size != 0:
            raise ConfigError(
                f"input_size {self.input_size} not divisible by patch_size {self.patch_size}"
            )
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )

    @property
    def grid(self) -> int:
        return self.input_size // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.grid**2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    @classmethod
    def from_run_config(cls, cfg: dict) -> "ModelConfig":
        return cls(
            input_size=cfg["model.input_size"],
            patch_size=cfg["model.patch_size"],
            embed_dim=cfg["model.embed_dim"],
            depth=cfg["model.depth"],
            heads=cfg["model.heads"],
            decoder_depth=cfg["model.decoder_depth"],
        )


@dataclass
class Posterior:
    """Patch-wise diagonal Gaussian over the latent force map."""

    mu: torch.Tensor       # (..., N_p, latent_dim)
    log_var: torch.Tensor


def sample_latent(post: Posterior, eps: torch.Tensor | None = None) -> torch.Tensor:
    """Reparameterized sample ``mu + exp(log_var / 2) * eps``; ``None`` -> mu."""
    if eps is None:
        return post.mu
    return post.mu + torch.exp(0.5 * post.log_var) * eps


def sinusoid_table(n_pos: int, dim: int) -> torch.Tensor:
    """Classic interleaved sin/cos position table, shape (n_pos, dim)."""
    pos = torch.arange(n_pos, dtype=torch.float64)[:, None]
    idx = torch.arange(dim, dtype=torch.float64)[None, :]
    angle = pos / torch.pow(10000.0, 2.0 * torch.floor(idx / 2.0) / dim)
    table = torch.where(idx.long() % 2 == 0, torch.sin(angle), torch.cos(angle))
    return table.float()


class Attention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv.unbind(0)
        attn = (q @ k.transpose(-2, -1)) * self.scale
        if attn_mask is not None:
            attn = attn + attn_mask
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class Block(nn.Module):
    """Pre-norm attention + MLP with residuals."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), attn_mask)
        x = x + self.mlp(self.norm2(x))
        return x


class PatchEmbed(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.proj = nn.Conv2d(1, cfg.embed_dim, cfg.patch_size, stride=cfg.patch_size)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] % self.proj.stride[0] or x.shape[-1] % self.proj.stride[1]:
            raise ValueError(f"image size {tuple(x.shape[-2:])} not divisible by patch size")
        return self.proj(x).flatten(2).transpose(1, 2)  # (B, N, D)


class CausalEncoder(nn.Module):
    """Inverse dynamics: observation pair -> latent force posterior.

    Temporal attention is masked so the reference frame (t=0) never attends
    to the contact frame; the contact frame attends to both.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = PatchEmbed(cfg)
        self.register_buffer("pos_patch", sinusoid_table(cfg.n_patches, cfg.embed_dim),
                             persistent=False)
        self.register_buffer("pos_time", sinusoid_table(2, cfg.embed_dim),
                             persistent=False)
        self.register_buffer("causal_mask",
                             torch.triu(torch.full((2, 2), float("-inf")), diagonal=1),
                             persistent=False)
        self.spatial = nn.ModuleList(
            Block(cfg.embed_dim, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.depth))
        self.temporal = nn.ModuleList(
            Block(cfg.embed_dim, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.depth))
        self.out_norm = nn.LayerNorm(cfg.embed_dim)
        self.posterior_head = nn.Linear(cfg.embed_dim, 2 * cfg.latent_dim)

    def patchify(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 2, 1, H, W) -> (B, 2, N_p, D) tokens with position encodings."""
        if x.dim() != 5 or x.shape[1] != 2:
            raise ValueError(f"expected (B, 2, 1, H, W) observation, got {tuple(x.shape)}")
        b, t, c, h, w = x.shape
        tokens = self.patch_embed(x.reshape(b * t, c, h, w))
        tokens = tokens.reshape(b, t, -1, self.cfg.embed_dim)
        return tokens + self.pos_patch[None, None] + self.pos_time[None, :, None, :]

    def forward(self, x: torch.Tensor, collect_reference: bool = False):
        v = self.patchify(x)
        b, t, n, d = v.shape
        reference_states = []
        for spatial, temporal in zip(self.spatial, self.temporal):
            v = spatial(v.reshape(b * t, n, d)).reshape(b, t, n, d)
            u = v.permute(0, 2, 1, 3).reshape(b * n, t, d)
            u = temporal(u, attn_mask=self.causal_mask)
            v = u.reshape(b, n, t, d).permute(0, 2, 1, 3)
            if collect_reference:
                reference_states.append(v[:, 0])
        h_last = v[:, 1]  # contact-frame slice, the causally complete one
        stats = self.posterior_head(self.out_norm(h_last))
        mu, log_var = stats.chunk(2, dim=-1)
        post = Posterior(mu=mu, log_var=log_var.clamp(-self.cfg.log_var_clamp,
                                                      self.cfg.log_var_clamp))
        if collect_reference:
            return post, reference_states
        return post


class ForwardDecoder(nn.Module):
    """Forward dynamics: (reference frame, latent force map) -> contact frame."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = PatchEmbed(cfg)
        self.z_proj = nn.Linear(cfg.latent_dim, cfg.embed_dim)
        self.register_buffer("pos_patch", sinusoid_table(cfg.n_patches, cfg.embed_dim),
                             persistent=False)
        self.blocks = nn.ModuleList(
            Block(cfg.embed_dim, cfg.heads, cfg.mlp_ratio) for _ in range(cfg.decoder_depth))
        self.out_norm = nn.LayerNorm(cfg.embed_dim)
        self.pixel_head = nn.Linear(cfg.embed_dim, cfg.patch_size**2)

    def forward(self, i_ref: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-2] != self.cfg.n_patches:
            raise ValueError(
                f"latent map has {z.shape[-2]} patches, model expects {self.cfg.n_patches}"
            )
        v = self.patch_embed(i_ref) + self.pos_patch[None] + self.z_proj(z)
        for block in self.blocks:
            v = block(v)
        patches = torch.sigmoid(self.pixel_head(self.out_norm(v)))
        return unpatchify(patches, self.cfg.grid, self.cfg.patch_size)


def unpatchify(patches: torch.Tensor, grid: int, patch: int) -> torch.Tensor:
    """(B, grid^2, patch^2) row-major patches -> (B, 1, H, W)."""
    b = patches.shape[0]
    x = patches.reshape(b, grid, grid, patch, patch)
    x = x.permute(0, 1, 3, 2, 4).reshape(b, grid * patch, grid * patch)
    return x.unsqueeze(1)


@dataclass
class PairOutput:
    """Both posteriors, both latents, and the four decoded branches.

    ``recons[(i, j)]`` decodes sensor j's reference frame with sensor i's
    latent; its supervision target is sensor j's contact frame.
    """

    posterior_left: Posterior
    posterior_right: Posterior
    z_left: torch.Tensor
    z_right: torch.Tensor
    recons: dict = field(default_factory=dict)


class TactileCvae(nn.Module):
    """Full inverse/forward dynamics model over a bilateral sensor pair."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.seed = seed
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.encoder = CausalEncoder(config)
            self.decoder = ForwardDecoder(config)

    def encode(self, x: torch.Tensor, collect_reference: bool = False):
        return self.encoder(x, collect_reference=collect_reference)

    def decode(self, i_ref: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        return self.decoder(i_ref, z)

    def forward_pair(self, x_left: torch.Tensor, x_right: torch.Tensor,
                     mode: str = "train",
                     generator: torch.Generator | None = None,
                     eps: tuple[torch.Tensor, torch.Tensor] | None = None) -> PairOutput:
        """Encode both observations and decode all four ordered branches."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        post_l = self.encode(x_left)
        post_r = self.encode(x_right)
        if mode == "eval":
            z_l, z_r = post_l.mu, post_r.mu
        else:
            if eps is None:
                eps_l = torch.randn(post_l.mu.shape, generator=generator,
                                    dtype=post_l.mu.dtype, device=post_l.mu.device)
                eps_r = torch.randn(post_r.mu.shape, generator=generator,
                                    dtype=post_r.mu.dtype, device=post_r.mu.device)
            else:
                eps_l, eps_r = eps
            z_l = sample_latent(post_l, eps_l)
            z_r = sample_latent(post_r, eps_r)
        refs = {"L": x_left[:, 0], "R": x_right[:, 0]}
        latents = {"L": z_l, "R": z_r}
        recons = {(i, j): self.decode(refs[j], latents[i])
                  for i in ("L", "R") for j in ("L", "R")}
        return PairOutput(posterior_left=post_l, posterior_right=post_r,
                          z_left=z_l, z_right=z_r, recons=recons)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def observation_tensor(obs_array, dtype=torch.float32, device=None) -> torch.Tensor:
    """(2, 1, S, S) or (B, 2, 1, S, S) numpy observation -> torch tensor."""
    t = torch.as_tensor(obs_array, dtype=dtype, device=device)
    if t.dim() == 4:
        t = t.unsqueeze(0)
    return t


def encoder_checksum(model: TactileCvae) -> str:
    """SHA-256 over the encoder parameters, for frozen-encoder audits."""
    digest = hashlib.sha256()
    for name, param in sorted(model.encoder.named_parameters()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
