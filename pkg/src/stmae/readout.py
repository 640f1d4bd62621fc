"""Cross-attention readout heads shared by every downstream task.

The shared pipeline: layer-normalize the T x K x C backbone features, add
learned per-time embeddings, let task queries cross-attend to all T*K
tokens, run a residual MLP (hidden 4x the attention width), then a final
linear to the task output size. Queries are either learned vectors or
Fourier-encoded geometry (points, boxes, space-time patch centers) passed
through a small MLP. Tracking heads keep an attention output projection;
learned-query heads omit it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .mae import trunc_normal
from .numcore import Tensor

FOURIER_BASES = 16
FOURIER_MLP_SIZE = 512
QUERY_KINDS = ("learned", "fourier-point", "fourier-box", "spatial-patch")
_COORD_DIMS = {"fourier-point": 2, "fourier-box": 4, "spatial-patch": 3}


@dataclass(frozen=True)
class ReadoutConfig:
    qkv_size: int
    heads: int
    query_kind: str
    num_queries: int
    output_size: int
    feature_channels: int
    time_steps: int = 16
    query_channels: int = None       # learned queries default to qkv_size
    attn_out_proj: bool = None       # default: only for fourier queries

    def __post_init__(self):
        if self.query_kind not in QUERY_KINDS:
            raise ValueError(f"unknown query kind '{self.query_kind}'")
        if self.qkv_size % self.heads != 0:
            raise ValueError(f"qkv_size {self.qkv_size} not divisible by heads {self.heads}")
        if self.output_size < 1:
            raise ValueError("output_size must be >= 1")
        if self.query_channels is None:
            default = self.qkv_size if self.query_kind == "learned" else FOURIER_MLP_SIZE
            object.__setattr__(self, "query_channels", default)
        if self.attn_out_proj is None:
            object.__setattr__(self, "attn_out_proj", self.query_kind != "learned")


@dataclass
class SE3Pose:
    """Rotation matrix plus translation, metric units."""
    r: np.ndarray
    t: np.ndarray

    def validate(self, tol=1e-6):
        if np.linalg.norm(self.r.T @ self.r - np.eye(3)) > tol:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(self.r) - 1.0) > tol:
            raise ValueError("rotation determinant is not +1")
        return self

    def as_vector(self):
        return np.concatenate([self.r.reshape(9), self.t.reshape(3)])

    def apply(self, points):
        return points @ self.r.T + self.t


@dataclass
class TrackPrediction:
    """Per-frame point-track outputs; positions already sigmoid-squashed."""
    positions: np.ndarray     # (tracks, frames, 2) in [0, 1]
    vis_logits: np.ndarray    # (tracks, frames)
    unc_logits: np.ndarray    # (tracks, frames)


# ---------------------------------------------------------------------------
# Query encodings
# ---------------------------------------------------------------------------

def fourier_features(positions, bases=FOURIER_BASES):
    """sin/cos at geometric frequencies pi * 2^0..2^(bases-1) per coordinate.

    positions: (..., d) in [0, 1] -> (..., d * 2 * bases).
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.size and (pos.min() < 0.0 or pos.max() > 1.0):
        raise ValueError(f"coordinates must lie in [0, 1], got range "
                         f"[{pos.min():.4f}, {pos.max():.4f}]")
    freqs = np.pi * (2.0 ** np.arange(bases))
    angles = pos[..., None] * freqs                      # (..., d, bases)
    feats = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    return feats.reshape(*pos.shape[:-1], pos.shape[-1] * 2 * bases)


def procrustes_so3(m, with_degeneracy=False):
    """Nearest rotation (Frobenius norm) to a 3x3 matrix via SVD.

    R = U diag(1, 1, det(U V^T)) V^T. Degenerate inputs (rank deficiency
    making the minimizer non-unique) still return a valid minimizer with
    the flag set.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    u, s, vt = np.linalg.svd(m)
    d = np.linalg.det(u @ vt)
    sign = 1.0 if d >= 0 else -1.0
    r = (u * np.array([1.0, 1.0, sign])) @ vt
    degenerate = bool(s[1] + s[2] < 1e-12 or (sign < 0 and s[1] - s[2] < 1e-12))
    return (r, degenerate) if with_degeneracy else r


# ---------------------------------------------------------------------------
# Shared cross-attention readout
# ---------------------------------------------------------------------------

class CrossAttentionReadout:
    """LayerNorm -> temporal embeddings -> cross-attention -> residual MLP -> linear."""

    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        c, d, cq = config.feature_channels, config.qkv_size, config.query_channels
        p = {}

        def weight(name, shape):
            p[name] = nc.parameter(trunc_normal(rng, shape).astype(dtype))

        def zeros(name, shape):
            p[name] = nc.parameter(np.zeros(shape, dtype=dtype))

        def ones(name, shape):
            p[name] = nc.parameter(np.ones(shape, dtype=dtype))

        ones("feat_norm.scale", (c,))
        zeros("feat_norm.bias", (c,))
        weight("temporal_embed", (config.time_steps, c))
        if config.query_kind == "learned":
            weight("queries", (config.num_queries, cq))
        else:
            raw = _COORD_DIMS[config.query_kind] * 2 * FOURIER_BASES
            weight("query_mlp.fc1.weight", (raw, FOURIER_MLP_SIZE))
            zeros("query_mlp.fc1.bias", (FOURIER_MLP_SIZE,))
            weight("query_mlp.fc2.weight", (FOURIER_MLP_SIZE, cq))
            zeros("query_mlp.fc2.bias", (cq,))
        weight("attn.q.weight", (cq, d))
        zeros("attn.q.bias", (d,))
        weight("attn.k.weight", (c, d))
        zeros("attn.k.bias", (d,))
        weight("attn.v.weight", (c, d))
        zeros("attn.v.bias", (d,))
        if config.attn_out_proj:
            weight("attn.out.weight", (d, d))
            zeros("attn.out.bias", (d,))
        ones("mlp_norm.scale", (d,))
        zeros("mlp_norm.bias", (d,))
        weight("mlp.fc1.weight", (d, 4 * d))
        zeros("mlp.fc1.bias", (4 * d,))
        weight("mlp.fc2.weight", (4 * d, d))
        zeros("mlp.fc2.bias", (d,))
        weight("head.weight", (d, config.output_size))
        zeros("head.bias", (config.output_size,))
        self.params = p

    def num_parameters(self):
        return sum(t.data.size for t in self.params.values())

    def encode_queries(self, positions):
        """Fourier-encode (B, n, d) coordinates and run the query MLP."""
        raw = Tensor(fourier_features(positions).astype(self.dtype))
        p = self.params
        h = nc.gelu(raw @ p["query_mlp.fc1.weight"] + p["query_mlp.fc1.bias"])
        return h @ p["query_mlp.fc2.weight"] + p["query_mlp.fc2.bias"]

    def learned_queries(self, batch):
        q = self.params["queries"]
        return nc.reshape(q, (1,) + tuple(q.shape))      # broadcasts over batch

    def forward(self, features, queries):
        """features: (B, T, K, C) Tensor or array; queries: (B?, Q, Cq) Tensor."""
        cfg, p = self.config, self.params
        x = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=self.dtype))
        b, t, k, c = x.shape
        if c != cfg.feature_channels:
            raise ValueError(f"features have {c} channels, readout expects {cfg.feature_channels}")
        if t != cfg.time_steps:
            raise ValueError(f"features have {t} time steps, readout expects {cfg.time_steps}")
        if queries.shape[-1] != cfg.query_channels:
            raise ValueError(f"queries have {queries.shape[-1]} channels, "
                             f"readout expects {cfg.query_channels}")
        x = nc.layer_norm(x) * p["feat_norm.scale"] + p["feat_norm.bias"]
        x = x + nc.reshape(p["temporal_embed"], (t, 1, c))
        x = nc.reshape(x, (b, t * k, c))

        heads, dh = cfg.heads, cfg.qkv_size // cfg.heads
        n, nq = t * k, queries.shape[-2]

        def split(z, count):
            z4 = nc.reshape(z, tuple(z.shape[:-1]) + (heads, dh))
            return nc.transpose(z4, (0, 2, 1, 3))        # (B, heads, count, dh)

        q = split(queries @ p["attn.q.weight"] + p["attn.q.bias"], nq)
        key = split(x @ p["attn.k.weight"] + p["attn.k.bias"], n)
        val = split(x @ p["attn.v.weight"] + p["attn.v.bias"], n)
        scores = (q @ nc.transpose(key, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
        mix = nc.softmax(scores) @ val                   # (B, heads, Q, dh)
        batch = mix.shape[0]
        y = nc.reshape(nc.transpose(mix, (0, 2, 1, 3)), (batch, nq, cfg.qkv_size))
        if cfg.attn_out_proj:
            y = y @ p["attn.out.weight"] + p["attn.out.bias"]
        z = nc.layer_norm(y) * p["mlp_norm.scale"] + p["mlp_norm.bias"]
        z = nc.gelu(z @ p["mlp.fc1.weight"] + p["mlp.fc1.bias"])
        y = y + (z @ p["mlp.fc2.weight"] + p["mlp.fc2.bias"])
        return y @ p["head.weight"] + p["head.bias"]


# ---------------------------------------------------------------------------
# Task heads
# ---------------------------------------------------------------------------

class ClassHead:
    """Single learned query -> class logits."""

    def __init__(self, feature_channels, num_classes, qkv_size=768, heads=12,
                 seed=0, dtype=np.float32):
        self.readout = CrossAttentionReadout(ReadoutConfig(
            qkv_size=qkv_size, heads=heads, query_kind="learned", num_queries=1,
            output_size=num_classes, feature_channels=feature_channels,
        ), seed=seed, dtype=dtype)
        self.params = {f"class.{k}": v for k, v in self.readout.params.items()}

    def forward(self, features):
        out = self.readout.forward(features, self.readout.learned_queries(None))
        return nc.reshape(out, (out.shape[0], out.shape[-1]))


class PoseHead:
    """First/last-frame features, channel-concatenated, -> 12-d pose vector.

    The final linear starts at zero weights with an identity-pose bias, so
    the untrained head predicts the identity transform.
    """

    def __init__(self, feature_channels, qkv_size=256, heads=8, seed=0, dtype=np.float32):
        self.readout = CrossAttentionReadout(ReadoutConfig(
            qkv_size=qkv_size, heads=heads, query_kind="learned", num_queries=1,
            output_size=12, feature_channels=2 * feature_channels, time_steps=1,
        ), seed=seed, dtype=dtype)
        self.readout.params["head.weight"].data[:] = 0.0
        self.readout.params["head.bias"].data[:] = np.array(
            [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0], dtype=dtype)
        self.params = {f"pose.{k}": v for k, v in self.readout.params.items()}

    def forward(self, features):
        """features: (B, T, K, C) -> (B, 12) raw pose vectors."""
        first = features[:, :1]
        last = features[:, features.shape[1] - 1:]
        both = nc.concat([first, last], axis=-1)         # (B, 1, K, 2C)
        out = self.readout.forward(both, self.readout.learned_queries(None))
        return nc.reshape(out, (out.shape[0], 12))

    @staticmethod
    def to_pose(vec12):
        """Project one 12-vector to a valid SE3Pose via Procrustes."""
        vec12 = np.asarray(vec12, dtype=np.float64)
        return SE3Pose(r=procrustes_so3(vec12[:9].reshape(3, 3)), t=vec12[9:].copy())


class PointTrackHead:
    """Fourier point queries, replicated per 2-frame chunk, -> (x,y,vis,unc)."""

    def __init__(self, feature_channels, num_frames=16, qkv_size=1024, heads=8,
                 max_tracks=64, seed=0, dtype=np.float32):
        if num_frames % 2:
            raise ValueError("point head predicts 2 frames per query; frames must be even")
        self.num_frames = num_frames
        self.replicas = num_frames // 2
        self.max_tracks = max_tracks
        self.readout = CrossAttentionReadout(ReadoutConfig(
            qkv_size=qkv_size, heads=heads, query_kind="fourier-point",
            num_queries=0, output_size=8, feature_channels=feature_channels,
        ), seed=seed, dtype=dtype)
        rng = np.random.default_rng([seed, 1])
        self.readout.params["query_time_embed"] = nc.parameter(
            trunc_normal(rng, (self.replicas, FOURIER_MLP_SIZE)).astype(dtype))
        self.params = {f"point.{k}": v for k, v in self.readout.params.items()}

    def forward(self, features, query_points):
        """query_points: (B, tracks, 2) frame-0 positions in [0, 1].

        Returns (positions01 (B,tracks,frames,2), vis_logits, unc_logits).
        """
        query_points = np.asarray(query_points)
        b, tracks = query_points.shape[:2]
        if tracks > self.max_tracks:
            raise ValueError(f"{tracks} tracks exceed the configured maximum {self.max_tracks}")
        emb = self.readout.encode_queries(query_points)   # (B, tracks, 512)
        emb = nc.reshape(emb, (b, tracks, 1, FOURIER_MLP_SIZE))
        emb = emb + self.readout.params["query_time_embed"]
        queries = nc.reshape(emb, (b, tracks * self.replicas, FOURIER_MLP_SIZE))
        out = self.readout.forward(features, queries)     # (B, tracks*reps, 8)
        out = nc.reshape(out, (b, tracks, self.num_frames, 4))
        positions = nc.sigmoid(out[:, :, :, :2])
        return positions, out[:, :, :, 2], out[:, :, :, 3]


class BoxTrackHead:
    """One Fourier box query per track predicting every frame; raw outputs."""

    MAX_BOXES = 25

    def __init__(self, feature_channels, num_frames=16, qkv_size=1024, heads=4,
                 seed=0, dtype=np.float32):
        self.num_frames = num_frames
        self.readout = CrossAttentionReadout(ReadoutConfig(
            qkv_size=qkv_size, heads=heads, query_kind="fourier-box",
            num_queries=0, output_size=4 * num_frames, feature_channels=feature_channels,
        ), seed=seed, dtype=dtype)
        self.params = {f"box.{k}": v for k, v in self.readout.params.items()}

    def forward(self, features, query_boxes):
        """query_boxes: (B, boxes, 4) first-frame (xmin,xmax,ymin,ymax) in [0,1].

        Returns (B, boxes, frames, 4), no output activation.
        """
        query_boxes = np.asarray(query_boxes)
        b, boxes = query_boxes.shape[:2]
        if boxes > self.MAX_BOXES:
            raise ValueError(f"{boxes} boxes exceed the maximum {self.MAX_BOXES}")
        queries = self.readout.encode_queries(query_boxes)
        out = self.readout.forward(features, queries)
        return nc.reshape(out, (b, boxes, self.num_frames, 4))


class DepthHead:
    """Fourier space-time patch queries, each emitting one depth patch.

    Output patch is (2, 8, 8): 128 depth values per query, softplus-mapped
    so depths stay positive, assembled to the full T x H x W map.
    """

    PATCH = (2, 8, 8)

    def __init__(self, feature_channels, clip_size, qkv_size=1024, heads=16,
                 seed=0, dtype=np.float32):
        t, h, w = clip_size
        pt, ph, pw = self.PATCH
        if t % pt or h % ph or w % pw:
            raise ValueError(f"clip size {clip_size} not divisible by depth patch {self.PATCH}")
        self.clip_size = clip_size
        self.grid = (t // pt, h // ph, w // pw)
        centers = np.stack(np.meshgrid(
            (np.arange(self.grid[0]) + 0.5) / self.grid[0],
            (np.arange(self.grid[1]) + 0.5) / self.grid[1],
            (np.arange(self.grid[2]) + 0.5) / self.grid[2],
            indexing="ij"), axis=-1).reshape(-1, 3)
        self.query_positions = centers                     # (Q, 3) in [0,1]
        self.readout = CrossAttentionReadout(ReadoutConfig(
            qkv_size=qkv_size, heads=heads, query_kind="spatial-patch",
            num_queries=len(centers), output_size=pt * ph * pw,
            feature_channels=feature_channels,
        ), seed=seed, dtype=dtype)
        self.params = {f"depth.{k}": v for k, v in self.readout.params.items()}

    def forward(self, features):
        """-> (B, T, H, W) strictly positive depth."""
        b = features.shape[0]
        queries = self.readout.encode_queries(self.query_positions[None])  # (1, Q, 512)
        out = self.readout.forward(features, queries)       # (B, Q, 128)
        out = nc.softplus(out)
        gt, gh, gw = self.grid
        pt, ph, pw = self.PATCH
        y = nc.reshape(out, (b, gt, gh, gw, pt, ph, pw))
        y = nc.transpose(y, (0, 1, 4, 2, 5, 3, 6))
        return nc.reshape(y, (b,) + tuple(self.clip_size))
