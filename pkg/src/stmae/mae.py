"""Space-time vision transformer pretrained by masked autoencoding.

Clips are cut into non-overlapping space-time patches, a random subset of
patch tokens is dropped, the remaining tokens run through pre-norm
transformer blocks, and a learned grid of latent tokens joins for the
final blocks. Each latent token maps linearly to one output pixel patch;
the full-grid reconstruction is trained with a plain mean-squared error
against the RGB input. Features for downstream readouts come from any
block, with latent tokens stripped.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .numcore import Tensor


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    width: int
    depth: int
    mlp: int
    heads: int
    input_size: tuple = (16, 224, 224)        # frames, height, width
    input_patch: tuple = (2, 16, 16)
    latent_layers: int = 4
    decode_grid: tuple = None                  # defaults to the input token grid
    output_patch: tuple = None                 # defaults to input_patch
    mask_ratio: float = 0.95

    def __post_init__(self):
        if self.decode_grid is None:
            object.__setattr__(self, "decode_grid", self.token_grid)
        if self.output_patch is None:
            object.__setattr__(self, "output_patch", self.input_patch)
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
        if self.latent_layers > self.depth:
            raise ValueError(f"latent_layers {self.latent_layers} exceeds depth {self.depth}")
        for size, patch in zip(self.input_size, self.input_patch):
            if size % patch != 0:
                raise ValueError(f"input size {self.input_size} not divisible by patch {self.input_patch}")
        covered = tuple(g * p for g, p in zip(self.decode_grid, self.output_patch))
        if covered != tuple(self.input_size):
            raise ValueError(
                f"decode grid {self.decode_grid} x output patch {self.output_patch} "
                f"covers {covered}, expected {self.input_size}")
        if not 0 <= self.mask_ratio < 1:
            raise ValueError(f"mask_ratio {self.mask_ratio} outside [0, 1)")

    @property
    def token_grid(self):
        return tuple(s // p for s, p in zip(self.input_size, self.input_patch))

    @property
    def num_tokens(self):
        t, h, w = self.token_grid
        return t * h * w

    @property
    def num_latents(self):
        t, h, w = self.decode_grid
        return t * h * w

    @property
    def patch_dim(self):
        t, h, w = self.input_patch
        return t * h * w * 3

    @property
    def output_patch_dim(self):
        t, h, w = self.output_patch
        return t * h * w * 3

    def to_dict(self):
        return dataclasses.asdict(self)


def _cfg(width, depth, mlp, heads, **kw):
    return dict(width=width, depth=depth, mlp=mlp, heads=heads, **kw)


# Published encoder ladder (trainable here for parameter accounting only)
# plus two desk-scale configs small enough to train in tests.
PRESETS = {
    "S": _cfg(384, 12, 1536, 6),
    "B": _cfg(768, 12, 3072, 12),
    "L": _cfg(1024, 24, 4096, 16),
    "H": _cfg(1280, 32, 5120, 16),
    "G": _cfg(1664, 48, 8192, 16),
    "e": _cfg(1792, 56, 15360, 16),
    "j": _cfg(4096, 64, 32768, 32, input_size=(16, 256, 256), latent_layers=2,
              decode_grid=(4, 8, 8), output_patch=(4, 32, 32)),
    "nano": _cfg(64, 4, 256, 4, input_size=(8, 64, 64), latent_layers=2),
    "micro": _cfg(128, 6, 512, 8, input_size=(8, 64, 64), latent_layers=2),
}


def preset(name, **overrides):
    """Build a named ModelConfig, optionally overriding fields."""
    if name not in PRESETS:
        raise KeyError(f"unknown config '{name}'; choose from {sorted(PRESETS)}")
    base = dict(PRESETS[name])
    base.update(overrides)
    return ModelConfig(**base)


def count_parameters(config):
    """Analytic parameter totals, split into encoder and decoding parts.

    Matches an actual instantiation exactly (see tests); avoids allocating
    the multi-billion-parameter configs just to count them.
    """
    w, m = config.width, config.mlp
    block = (4 * w * w + 4 * w) + (2 * w * m + m + w) + 4 * w
    encoder = (
        config.patch_dim * w + w        # patch embedding
        + config.num_tokens * w         # positional embeddings
        + config.depth * block
        + 2 * w                         # final layer norm
    )
    decoding = (
        config.num_latents * w                       # latent tokens
        + w * config.output_patch_dim + config.output_patch_dim  # pixel projection
    )
    return {"encoder": encoder, "decoding": decoding, "total": encoder + decoding}


# ---------------------------------------------------------------------------
# Clips, patches, masks
# ---------------------------------------------------------------------------

@dataclass
class VideoClip:
    """T x H x W x 3 pixel block in [0, 1]."""
    frames: np.ndarray
    frame_stride: int = 2


@dataclass
class MaskPlan:
    """Disjoint kept/masked partition of token indices 0..total-1."""
    kept: np.ndarray
    masked: np.ndarray
    total: int


def sample_mask(total, ratio, seed):
    """Uniform without-replacement mask: |masked| = floor(ratio * total).

    The floor gets a 1e-9 nudge so ratios like 0.95 whose float product
    lands just under an integer still mask the intended count.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"mask ratio must lie in (0, 1), got {ratio}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_masked = int(np.floor(ratio * total + 1e-9))
    perm = rng.permutation(total)
    kept = np.sort(perm[n_masked:])
    masked = np.sort(perm[:n_masked])
    return MaskPlan(kept=kept, masked=masked, total=total)


def full_plan(total):
    """Mask plan that keeps every token (used for features and distillation)."""
    return MaskPlan(kept=np.arange(total), masked=np.empty(0, dtype=np.int64), total=total)


def patchify(frames, patch):
    """Cut (T,H,W,3) frames into (N, t*h*w*3) tokens, row-major over the grid.

    A leading batch axis is carried through: (B,T,H,W,3) -> (B,N,P).
    """
    pt, ph, pw = patch
    *lead, T, H, W, C = frames.shape
    if T % pt or H % ph or W % pw:
        raise ValueError(f"clip extent {(T, H, W)} not divisible by patch {patch}")
    nt, nh, nw = T // pt, H // ph, W // pw
    x = frames.reshape(*lead, nt, pt, nh, ph, nw, pw, C)
    order = tuple(range(len(lead))) + tuple(len(lead) + a for a in (0, 2, 4, 1, 3, 5, 6))
    x = x.transpose(order)
    return np.ascontiguousarray(x.reshape(*lead, nt * nh * nw, pt * ph * pw * C))


def unpatchify(tokens, grid, patch):
    """Inverse of patchify for a (N, t*h*w*3) token array."""
    nt, nh, nw = grid
    pt, ph, pw = patch
    x = tokens.reshape(nt, nh, nw, pt, ph, pw, 3)
    x = x.transpose(0, 3, 1, 4, 2, 5, 6)
    return np.ascontiguousarray(x.reshape(nt * pt, nh * ph, nw * pw, 3))


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

def trunc_normal(rng, shape, std=0.02):
    """Normal(0, std) resampled until everything lies within 2 sigma."""
    x = rng.standard_normal(shape)
    while True:
        bad = np.abs(x) > 2.0
        if not bad.any():
            break
        x[bad] = rng.standard_normal(int(bad.sum()))
    return x * std


@dataclass
class FeatureMap:
    """T x K x C backbone activations for one clip."""
    data: np.ndarray
    layer_fraction: int


FEATURE_FRACTIONS = (25, 50, 75, 85, 95, 100)


def feature_block_index(fraction_pct, depth):
    """1-based block index for a depth percentage (integer floor, min 1)."""
    if fraction_pct not in FEATURE_FRACTIONS:
        raise ValueError(f"layer fraction {fraction_pct}%% unsupported; use {FEATURE_FRACTIONS}")
    return max(1, (fraction_pct * depth) // 100)


class MaskedVideoModel:
    """Encoder + latent-grid pixel decoder over one clip geometry."""

    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        w, m = config.width, config.mlp
        p = {}

        def weight(name, shape):
            p[name] = nc.parameter(trunc_normal(rng, shape).astype(dtype))

        def zeros(name, shape):
            p[name] = nc.parameter(np.zeros(shape, dtype=dtype))

        def ones(name, shape):
            p[name] = nc.parameter(np.ones(shape, dtype=dtype))

        weight("patch_embed.weight", (config.patch_dim, w))
        zeros("patch_embed.bias", (w,))
        weight("pos_embed", (config.num_tokens, w))
        for i in range(config.depth):
            b = f"blocks.{i}"
            ones(f"{b}.ln1.scale", (w,))
            zeros(f"{b}.ln1.bias", (w,))
            weight(f"{b}.attn.qkv.weight", (w, 3 * w))
            zeros(f"{b}.attn.qkv.bias", (3 * w,))
            weight(f"{b}.attn.proj.weight", (w, w))
            zeros(f"{b}.attn.proj.bias", (w,))
            ones(f"{b}.ln2.scale", (w,))
            zeros(f"{b}.ln2.bias", (w,))
            weight(f"{b}.mlp.fc1.weight", (w, m))
            zeros(f"{b}.mlp.fc1.bias", (m,))
            weight(f"{b}.mlp.fc2.weight", (m, w))
            zeros(f"{b}.mlp.fc2.bias", (w,))
        ones("final_norm.scale", (w,))
        zeros("final_norm.bias", (w,))
        weight("latent_tokens", (config.num_latents, w))
        weight("decode.weight", (w, config.output_patch_dim))
        zeros("decode.bias", (config.output_patch_dim,))
        self.params = p

    def num_parameters(self):
        return sum(t.data.size for t in self.params.values())

    def _norm(self, x, prefix):
        y = nc.layer_norm(x)
        return y * self.params[f"{prefix}.scale"] + self.params[f"{prefix}.bias"]

    def _block(self, x, i):
        p, cfg = self.params, self.config
        n = x.shape[0]
        heads, dh = cfg.heads, cfg.width // cfg.heads
        y = self._norm(x, f"blocks.{i}.ln1")
        qkv = y @ p[f"blocks.{i}.attn.qkv.weight"] + p[f"blocks.{i}.attn.qkv.bias"]
        q = nc.transpose(nc.reshape(qkv[:, :cfg.width], (n, heads, dh)), (1, 0, 2))
        k = nc.transpose(nc.reshape(qkv[:, cfg.width:2 * cfg.width], (n, heads, dh)), (1, 0, 2))
        v = nc.transpose(nc.reshape(qkv[:, 2 * cfg.width:], (n, heads, dh)), (1, 0, 2))
        scores = (q @ nc.transpose(k, (0, 2, 1))) * (1.0 / np.sqrt(dh))
        attn = nc.softmax(scores) @ v                              # (heads, n, dh)
        merged = nc.reshape(nc.transpose(attn, (1, 0, 2)), (n, cfg.width))
        x = x + (merged @ p[f"blocks.{i}.attn.proj.weight"] + p[f"blocks.{i}.attn.proj.bias"])
        y = self._norm(x, f"blocks.{i}.ln2")
        h = nc.gelu(y @ p[f"blocks.{i}.mlp.fc1.weight"] + p[f"blocks.{i}.mlp.fc1.bias"])
        return x + (h @ p[f"blocks.{i}.mlp.fc2.weight"] + p[f"blocks.{i}.mlp.fc2.bias"])

    def encode(self, frames, plan, collect=()):
        """Run the trunk on the kept tokens of one (T,H,W,3) clip.

        Returns (token state after the final block, dict of collected
        1-based block index -> patch-token activations as Tensors).
        """
        cfg, p = self.config, self.params
        if plan.total != cfg.num_tokens:
            raise ValueError(f"mask plan covers {plan.total} tokens, model expects {cfg.num_tokens}")
        tokens = patchify(np.asarray(frames, dtype=self.dtype), cfg.input_patch)
        kept = Tensor(tokens[plan.kept])
        x = kept @ p["patch_embed.weight"] + p["patch_embed.bias"]
        x = x + nc.gather(p["pos_embed"], plan.kept, axis=0)
        n_visible = len(plan.kept)
        join_at = cfg.depth - cfg.latent_layers
        collected = {}
        for i in range(cfg.depth):
            if i == join_at:
                x = nc.concat([x, p["latent_tokens"]], axis=0)
            x = self._block(x, i)
            if (i + 1) in collect:
                collected[i + 1] = x[:n_visible] if x.shape[0] > n_visible else x
        return x, collected

    def reconstruct(self, frames, plan, collect=()):
        """Full forward pass: returns (reconstruction Tensor (T,H,W,3), collected)."""
        cfg = self.config
        x, collected = self.encode(frames, plan, collect=collect)
        latents = x[len(plan.kept):]
        latents = self._norm(latents, "final_norm")
        pixels = latents @ self.params["decode.weight"] + self.params["decode.bias"]
        gt, gh, gw = cfg.decode_grid
        pt, ph, pw = cfg.output_patch
        y = nc.reshape(pixels, (gt, gh, gw, pt, ph, pw, 3))
        y = nc.transpose(y, (0, 3, 1, 4, 2, 5, 6))
        return nc.reshape(y, cfg.input_size + (3,)), collected

    def features(self, frames, fraction_pct, grad=False):
        """T x K x C activations at a depth fraction; no masking, latents dropped.

        With grad=False the graph is skipped and a plain FeatureMap returns;
        with grad=True the (T*K, C) activation Tensor returns for finetuning.
        """
        cfg = self.config
        block = feature_block_index(fraction_pct, cfg.depth)
        plan = full_plan(cfg.num_tokens)
        if grad:
            _, collected = self.encode(frames, plan, collect=(block,))
            return collected[block]
        with nc.no_grad():
            _, collected = self.encode(frames, plan, collect=(block,))
        nt, nh, nw = cfg.token_grid
        data = collected[block].data.reshape(nt, nh * nw, cfg.width)
        return FeatureMap(data=data, layer_fraction=fraction_pct)

    def state(self):
        return {name: t.data for name, t in self.params.items()}

    def load_state(self, tensors):
        for name, t in self.params.items():
            if name not in tensors:
                raise KeyError(f"checkpoint missing tensor '{name}'")
            if tuple(tensors[name].shape) != t.data.shape:
                raise ValueError(f"tensor '{name}' has shape {tensors[name].shape}, "
                                 f"expected {t.data.shape}")
            t.data = tensors[name].astype(self.dtype)


def mae_loss(reconstruction, frames):
    """Mean squared RGB error over every pixel of every patch."""
    target = np.asarray(frames)
    if tuple(reconstruction.shape) != target.shape:
        raise ValueError(f"reconstruction shape {tuple(reconstruction.shape)} "
                         f"!= clip shape {target.shape}")
    diff = reconstruction - Tensor(target.astype(reconstruction.dtype))
    return nc.mean(diff * diff)


def masked_patch_mse(reconstruction, frames, plan, config):
    """MSE restricted to masked output patches (diagnostic, not the loss).

    Only meaningful when the decode grid equals the input token grid.
    """
    recon_tokens = patchify(np.asarray(reconstruction), config.input_patch)
    target_tokens = patchify(np.asarray(frames), config.input_patch)
    err = recon_tokens[plan.masked] - target_tokens[plan.masked]
    return float(np.mean(err * err))


def save_model(path, model):
    from .checkpoint import save_tensors
    save_tensors(path, model.state(), config=model.config.to_dict())


def load_model(path, dtype=np.float32):
    from .checkpoint import load_tensors
    tensors, cfg = load_tensors(path)
    cfg = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}
    model = MaskedVideoModel(ModelConfig(**cfg), seed=0, dtype=dtype)
    model.load_state(tensors)
    return model


def params_digest(params):
    """Order-independent content hash of a parameter dict."""
    digest = hashlib.sha256()
    for name in sorted(params):
        data = params[name].data if isinstance(params[name], Tensor) else params[name]
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(data).tobytes())
    return digest.hexdigest()
