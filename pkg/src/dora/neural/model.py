"""Dual cross-attention occupancy VAE."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
import torch
from torch import nn

from ..sampling import SurfacePointCloud, concat, fps
from .layers import (
    CrossAttentionPath,
    FeedForward,
    SelfAttentionBlock,
    fourier_dim,
    fourier_embed,
    init_linear,
)

ARMS = ("full", "no-dca", "no-ses")


@dataclass(frozen=True)
class EncoderConfig:
    width: int = 64
    heads: int = 4
    encoder_layers: int = 2
    decoder_layers: int = 2
    frequencies: int = 8
    include_normals: bool = True
    latent_width: int = 8

    def __post_init__(self):
        if self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by {self.heads} heads")
        for name in ("width", "heads", "encoder_layers", "decoder_layers", "latent_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.frequencies < 0:
            raise ValueError("frequencies must be >= 0")


@dataclass(frozen=True)
class Profile:
    """Model size plus the sampling and optimization budget of a run."""

    name: str
    model: EncoderConfig
    n_total: int
    n_desired: int
    ns_min: int
    ns_max: int
    n_near: int
    n_uniform: int
    near_sigma: float = 0.02
    batch_size: int = 1
    lr: float = 1e-3
    kl_weight: float = 1e-3
    grid_res: int = 64
    extract_interpolation: str = "midpoint"
    eval_points: int = 100_000
    eval_every: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Profile":
        data = dict(data)
        data["model"] = EncoderConfig(**data["model"])
        return cls(**data)


PROFILES = {
    "toy": Profile(
        name="toy",
        model=EncoderConfig(),
        n_total=1024,
        n_desired=512,
        ns_min=64,
        ns_max=64,
        n_near=1024,
        n_uniform=512,
    ),
    # layer counts and sampling budget at the published scale; width, heads
    # and query counts are not published and follow common vecset settings
    "paper": Profile(
        name="paper",
        model=EncoderConfig(
            width=768, heads=12, encoder_layers=8, decoder_layers=16, frequencies=8, latent_width=64
        ),
        n_total=32768,
        n_desired=16384,
        ns_min=256,
        ns_max=1280,
        n_near=8192,
        n_uniform=8192,
        batch_size=2048,
        lr=5e-5,
        grid_res=256,
        eval_points=1_000_000,
    ),
}


def get_profile(name: str, **overrides) -> Profile:
    try:
        prof = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return replace(prof, **overrides) if overrides else prof


@dataclass
class LatentCode:
    """Latent token set: ``z`` plus the Gaussian parameters it was drawn from, each (B, N_s, C)."""

    z: torch.Tensor
    mean: torch.Tensor
    logvar: torch.Tensor

    def kl(self) -> torch.Tensor:
        """KL to the unit Gaussian per token, summed over channels: (B, N_s)."""
        # expm1 keeps exp(v) - 1 - v nonnegative for tiny v
        return 0.5 * torch.sum(self.mean**2 + torch.expm1(self.logvar) - self.logvar, dim=-1)


@dataclass
class PointBatch:
    """Padded encoder inputs for B shapes. Masks mark real (non-padding) rows."""

    ps_pos: torch.Tensor
    ps_nrm: torch.Tensor
    pu_pos: torch.Tensor
    pu_nrm: torch.Tensor
    pu_mask: torch.Tensor
    pa_pos: torch.Tensor
    pa_nrm: torch.Tensor
    pa_mask: torch.Tensor
    meta: dict = field(default_factory=dict)

    def to(self, dtype) -> "PointBatch":
        conv = {k: (v.to(dtype) if v.is_floating_point() else v) for k, v in self.__dict__.items() if k != "meta"}
        return PointBatch(**conv, meta=self.meta)


def _pad(arrays: list[np.ndarray], width: int, dtype) -> tuple[torch.Tensor, torch.Tensor]:
    n = max((len(a) for a in arrays), default=0)
    out = np.zeros((len(arrays), n, width))
    mask = np.zeros((len(arrays), n), dtype=bool)
    for i, a in enumerate(arrays):
        out[i, : len(a)] = a
        mask[i, : len(a)] = True
    return torch.as_tensor(out, dtype=dtype), torch.as_tensor(mask)


def collate(items, dtype=torch.float32) -> PointBatch:
    """Stack ``(P_s, P_u, P_a)`` cloud triples into a padded batch."""
    ps, pu, pa = zip(*items)
    if any(len(c) == 0 for c in ps):
        raise ValueError("P_s must be nonempty")
    if any(len(c) == 0 for c in pu):
        raise ValueError("P_u must be nonempty")
    if len({len(c) for c in ps}) != 1:
        raise ValueError("all P_s in a batch need the same length")
    ps_pos, _ = _pad([c.positions for c in ps], 3, dtype)
    ps_nrm, _ = _pad([c.normals for c in ps], 3, dtype)
    pu_pos, pu_mask = _pad([c.positions for c in pu], 3, dtype)
    pu_nrm, _ = _pad([c.normals for c in pu], 3, dtype)
    pa_pos, pa_mask = _pad([c.positions for c in pa], 3, dtype)
    pa_nrm, _ = _pad([c.normals for c in pa], 3, dtype)
    return PointBatch(ps_pos, ps_nrm, pu_pos, pu_nrm, pu_mask, pa_pos, pa_nrm, pa_mask)


def build_ps(
    p_u: SurfacePointCloud, p_a: SurfacePointCloud, n_s1: int, n_s2: int, seed: int = 0
) -> SurfacePointCloud:
    """Farthest point subsets of the uniform and salient clouds, labels kept.

    A salient shortfall (fewer than ``n_s2`` salient points) is taken from the
    uniform cloud instead, so the result always has ``n_s1 + n_s2`` points.
    """
    total = n_s1 + n_s2
    if total > len(p_u) + len(p_a):
        raise ValueError(
            f"requested {total} points but only {len(p_u) + len(p_a)} are available"
        )
    n2 = min(n_s2, len(p_a))
    n1 = total - n2
    if n1 > len(p_u):
        n1 = len(p_u)
        n2 = total - n1
    parts = []
    if n1:
        parts.append(p_u.subset(fps(p_u.positions, n1, seed)))
    if n2:
        parts.append(p_a.subset(fps(p_a.positions, n2, seed)))
    return concat(*parts, seed=seed)


class DoraVAE(nn.Module):
    """Set VAE over surface points with an occupancy decoder.

    ``arm`` selects the encoder: ``full`` attends to uniform and salient
    points with separate cross-attentions and sums the results; ``no-dca``
    and ``no-ses`` use one cross-attention over the merged cloud.
    """

    def __init__(self, config: EncoderConfig = EncoderConfig(), arm: str = "full"):
        super().__init__()
        if arm not in ARMS:
            raise ValueError(f"unknown arm {arm!r}")
        self.config = config
        self.arm = arm
        d = config.width
        point_in = fourier_dim(config.frequencies) + (3 if config.include_normals else 0)
        self.point_embed = init_linear(nn.Linear(point_in, d))
        self.uniform_path = CrossAttentionPath(d, config.heads)
        self.salient_path = CrossAttentionPath(d, config.heads) if arm == "full" else None
        self.encoder_ff = FeedForward(d)
        self.encoder_layers = nn.ModuleList(
            SelfAttentionBlock(d, config.heads) for _ in range(config.encoder_layers)
        )
        self.encoder_norm = nn.LayerNorm(d)
        self.mean_head = init_linear(nn.Linear(d, config.latent_width))
        self.logvar_head = nn.Linear(d, config.latent_width)
        nn.init.zeros_(self.logvar_head.weight)
        nn.init.zeros_(self.logvar_head.bias)

        self.latent_proj = init_linear(nn.Linear(config.latent_width, d))
        self.decoder_layers = nn.ModuleList(
            SelfAttentionBlock(d, config.heads) for _ in range(config.decoder_layers)
        )
        self.query_embed = init_linear(nn.Linear(fourier_dim(config.frequencies), d))
        self.decoder_cross = CrossAttentionPath(d, config.heads)
        self.decoder_ff = FeedForward(d)
        self.decoder_norm = nn.LayerNorm(d)
        self.occupancy_head = init_linear(nn.Linear(d, 1))

    @property
    def dual(self) -> bool:
        return self.salient_path is not None

    def embed_points(self, pos: torch.Tensor, nrm: torch.Tensor) -> torch.Tensor:
        feats = fourier_embed(pos, self.config.frequencies)
        if self.config.include_normals:
            feats = torch.cat([feats, nrm], dim=-1)
        return self.point_embed(feats)

    def dual_encode(self, batch: PointBatch) -> torch.Tensor:
        """Point-cloud feature C for each P_s row: (B, N_s, d)."""
        e_s = self.embed_points(batch.ps_pos, batch.ps_nrm)
        e_u = self.embed_points(batch.pu_pos, batch.pu_nrm)
        has_salient = batch.pa_mask.shape[1] > 0 and bool(batch.pa_mask.any())
        if self.dual:
            c = self.uniform_path(e_s, e_u, batch.pu_mask)
            if has_salient:
                e_a = self.embed_points(batch.pa_pos, batch.pa_nrm)
                c = c + self.salient_path(e_s, e_a, batch.pa_mask)
            return c
        if has_salient:
            e_a = self.embed_points(batch.pa_pos, batch.pa_nrm)
            kv = torch.cat([e_u, e_a], dim=1)
            mask = torch.cat([batch.pu_mask, batch.pa_mask], dim=1)
        else:
            kv, mask = e_u, batch.pu_mask
        return self.uniform_path(e_s, kv, mask)

    def encode(
        self, batch: PointBatch, sample: bool = False, generator: torch.Generator | None = None
    ) -> LatentCode:
        e_s = self.embed_points(batch.ps_pos, batch.ps_nrm)
        h = e_s + self.dual_encode(batch)
        h = h + self.encoder_ff(h)
        for layer in self.encoder_layers:
            h = layer(h)
        h = self.encoder_norm(h)
        mean = self.mean_head(h)
        logvar = self.logvar_head(h)
        if sample:
            eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=mean.device)
            z = mean + torch.exp(0.5 * logvar) * eps
        else:
            z = mean
        return LatentCode(z, mean, logvar)

    def decode(self, z: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
        """Occupancy in (0, 1) for queries (B, Q, 3) given latents (B, N_s, C)."""
        x = self.decode_latents(z)
        return self.query_occupancy(x, queries)

    def decode_latents(self, z: torch.Tensor) -> torch.Tensor:
        x = self.latent_proj(z)
        for layer in self.decoder_layers:
            x = layer(x)
        return x

    def query_occupancy(self, latents: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
        q = self.query_embed(fourier_embed(queries, self.config.frequencies))
        h = q + self.decoder_cross(q, latents)
        h = h + self.decoder_ff(h)
        return torch.sigmoid(self.occupancy_head(self.decoder_norm(h))).squeeze(-1)

    def forward(self, batch: PointBatch, queries: torch.Tensor, sample: bool = False, generator=None):
        code = self.encode(batch, sample, generator)
        return self.decode(code.z, queries), code


def salient_block_size(model: DoraVAE) -> int:
    return 0 if model.salient_path is None else sum(p.numel() for p in model.salient_path.parameters())


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def flat_parameters(model: nn.Module) -> tuple[list[str], torch.Tensor]:
    """Parameter names and their concatenation in registration order."""
    names, chunks = [], []
    for name, p in model.named_parameters():
        names.append(name)
        chunks.append(p.detach().reshape(-1))
    return names, torch.cat(chunks)
