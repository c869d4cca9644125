"""Hybrid region encoding: from feature stacks and boxes to region tokens.

Per region the encoder pools a primary feature (concatenated over the four
pyramid scales) and an auxiliary feature (pooled from the fused map),
concatenates them, adds a sine-cosine embedding of the box coordinates,
and projects through a small two-layer connector into the token space.

The positional embedding follows transformer convention: the vector splits
into four equal blocks, one per coordinate in (x1, y1, x2, y2) order; block
entry 2i is sin(v * w_i) and 2i+1 is cos(v * w_i), where v is the
normalized coordinate scaled by 2*pi and w_i = 10000 ** (-2i / block).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridops import FeatureMap
from .roialign import Box, RoiConfig, roi_align_pooled

__all__ = [
    "HybridRegionFeature",
    "RegionToken",
    "Connector",
    "extract_region_features",
    "positional_embedding",
    "positional_embedding_matrix",
    "fuse_hybrid",
    "connector_forward",
    "connector_backward",
    "region_tokens",
]


@dataclass
class HybridRegionFeature:
    """Per-region feature decomposition: f_hybrid = concat(f_pri, f_aux) + e_pos."""

    f_pri: np.ndarray
    f_aux: np.ndarray
    e_pos: np.ndarray
    f_hybrid: np.ndarray


@dataclass(frozen=True)
class RegionToken:
    """A token-space vector standing for one proposal region."""

    embedding: np.ndarray
    index: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.embedding)):
            raise ValueError("region token embedding must be finite")
        if self.index < 0:
            raise ValueError("region index must be >= 0")


def extract_region_features(
    pri_pyramid: list[FeatureMap],
    aux_fused: FeatureMap,
    boxes: list[Box],
    cfg: RoiConfig = RoiConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Pool per-region features from both visual streams.

    Returns (N x D_p, N x D_a): primary rows concatenate the pooled features
    of the four pyramid scales in order; auxiliary rows pool the fused map.
    """
    if not boxes:
        raise ValueError("at least one box is required")
    if len(pri_pyramid) != 4:
        raise ValueError("expected a 4-level pyramid")
    pri = np.concatenate([roi_align_pooled(level, boxes, cfg) for level in pri_pyramid], axis=1)
    aux = roi_align_pooled(aux_fused, boxes, cfg)
    return pri, aux


def positional_embedding(box: Box, dim: int) -> np.ndarray:
    """Sine-cosine embedding of the four box coordinates, length ``dim``.

    ``dim`` must be divisible by 8 (four coordinate blocks of sin/cos pairs).
    """
    if dim % 8 != 0:
        raise ValueError("embedding dimension must be divisible by 8")
    block = dim // 4
    freqs = 10000.0 ** (-2.0 * np.arange(block // 2) / block)
    out = np.empty(dim)
    for i, coord in enumerate((box.x1, box.y1, box.x2, box.y2)):
        phase = (2.0 * np.pi * coord) * freqs
        out[i * block : (i + 1) * block : 2] = np.sin(phase)
        out[i * block + 1 : (i + 1) * block : 2] = np.cos(phase)
    return out


def positional_embedding_matrix(boxes: list[Box], dim: int) -> np.ndarray:
    return np.stack([positional_embedding(b, dim) for b in boxes])


def fuse_hybrid(f_pri: np.ndarray, f_aux: np.ndarray, boxes: list[Box]) -> list[HybridRegionFeature]:
    """Concatenate the two feature streams and add each box's positional embedding."""
    n = len(boxes)
    if f_pri.shape[0] != n or f_aux.shape[0] != n:
        raise ValueError("feature row counts must equal the number of boxes")
    dim = f_pri.shape[1] + f_aux.shape[1]
    out = []
    for i, box in enumerate(boxes):
        e_pos = positional_embedding(box, dim)
        comb = np.concatenate([f_pri[i], f_aux[i]])
        out.append(HybridRegionFeature(f_pri[i].copy(), f_aux[i].copy(), e_pos, comb + e_pos))
    return out


@dataclass
class Connector:
    """Two affine layers with a tanh between, projecting features to token space.

    ``activation`` may be "tanh" or "identity"; the identity setting exists
    for linear-path tests.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "tanh"
    trainable: bool = True

    def __post_init__(self):
        if self.activation not in ("tanh", "identity"):
            raise ValueError("activation must be 'tanh' or 'identity'")
        if self.w1.shape[0] != self.b1.shape[0] or self.w2.shape[0] != self.b2.shape[0]:
            raise ValueError("bias lengths must match layer output widths")
        if self.w2.shape[1] != self.w1.shape[0]:
            raise ValueError("layer widths are inconsistent")
        for arr in (self.w1, self.b1, self.w2, self.b2):
            if not np.all(np.isfinite(arr)):
                raise ValueError("connector parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    @classmethod
    def seeded(
        cls, in_dim: int, out_dim: int, rng: np.random.Generator, hidden_dim: int | None = None,
        activation: str = "tanh",
    ) -> "Connector":
        hidden = out_dim if hidden_dim is None else hidden_dim
        s1 = 1.0 / np.sqrt(in_dim)
        s2 = 1.0 / np.sqrt(hidden)
        return cls(
            w1=rng.uniform(-s1, s1, size=(hidden, in_dim)),
            b1=rng.uniform(-s1, s1, size=hidden),
            w2=rng.uniform(-s2, s2, size=(out_dim, hidden)),
            b2=rng.uniform(-s2, s2, size=out_dim),
            activation=activation,
        )

    def to_json(self) -> dict:
        return {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in (("w1", self.w1), ("b1", self.b1), ("w2", self.w2), ("b2", self.b2))
        } | {"activation": self.activation}

    @classmethod
    def from_json(cls, obj: dict) -> "Connector":
        def arr(name):
            spec = obj[name]
            return np.asarray(spec["data"]).reshape(spec["shape"])

        return cls(arr("w1"), arr("b1"), arr("w2"), arr("b2"), obj.get("activation", "tanh"))


def connector_forward(conn: Connector, f_hybrid: np.ndarray) -> np.ndarray:
    """Row-wise affine -> activation -> affine."""
    f = np.atleast_2d(f_hybrid)
    if f.shape[1] != conn.in_dim:
        raise ValueError(f"input width {f.shape[1]} does not match connector ({conn.in_dim})")
    pre = f @ conn.w1.T + conn.b1
    hidden = np.tanh(pre) if conn.activation == "tanh" else pre
    return hidden @ conn.w2.T + conn.b2


def connector_backward(
    conn: Connector, f_hybrid: np.ndarray, upstream: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Analytic gradients of :func:`connector_forward`.

    Returns ({"w1", "b1", "w2", "b2"}, d_input) for an upstream gradient of
    the same shape as the forward output.
    """
    f = np.atleast_2d(f_hybrid)
    g = np.atleast_2d(upstream)
    if f.shape[1] != conn.in_dim:
        raise ValueError("input width does not match connector")
    if g.shape != (f.shape[0], conn.out_dim):
        raise ValueError("upstream gradient shape does not match forward output")
    pre = f @ conn.w1.T + conn.b1
    hidden = np.tanh(pre) if conn.activation == "tanh" else pre
    d_w2 = g.T @ hidden
    d_b2 = g.sum(axis=0)
    d_hidden = g @ conn.w2
    d_pre = d_hidden * (1.0 - hidden**2) if conn.activation == "tanh" else d_hidden
    d_w1 = d_pre.T @ f
    d_b1 = d_pre.sum(axis=0)
    d_f = d_pre @ conn.w1
    grads = {"w1": d_w1, "b1": d_b1, "w2": d_w2, "b2": d_b2}
    return grads, d_f


def region_tokens(conn: Connector, hybrids: list[HybridRegionFeature]) -> list[RegionToken]:
    """Project hybrid features to token space, indexed in input order."""
    mat = np.stack([h.f_hybrid for h in hybrids])
    emb = connector_forward(conn, mat)
    return [RegionToken(embedding=emb[i], index=i) for i in range(len(hybrids))]
