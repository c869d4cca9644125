"""Region-of-interest feature extraction by aligned bilinear sampling.

Boxes live in normalized [0, 1] image coordinates and are scaled to each
feature map's resolution inside the op, so one box representation serves
every pyramid level.  The coordinate transform is the aligned one: a
normalized coordinate u maps to the continuous array coordinate
``u * size - 0.5`` (pixel i has its center at (i + 0.5) / size), with no
rounding anywhere.  Samples falling outside the map clamp to the edge.

``roi_align`` produces the C x P x P bin grid; ``roi_align_pooled`` means
over the bins, which equals a fixed linear functional of the map.  That
functional's weights are exposed via :func:`pooled_weights` so training
code can cache them per (map size, box set) and backpropagate through
pooling as a plain matrix product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridops import FeatureMap

__all__ = ["Box", "RoiConfig", "roi_align", "roi_align_pooled", "pooled_weights", "pooled_apply"]


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle in normalized coordinates, with optional score/label.

    Coordinates are clamped to [0, 1] at construction; x1 <= x2 and y1 <= y2
    must hold after clamping.
    """

    x1: float
    y1: float
    x2: float
    y2: float
    score: float | None = None
    label: str | None = None

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"box coordinate {name} is not finite")
            object.__setattr__(self, name, min(1.0, max(0.0, v)))
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError("box corners out of order (x1 <= x2 and y1 <= y2 required)")
        if self.score is not None:
            s = float(self.score)
            if not (0.0 <= s <= 1.0):
                raise ValueError("box score must lie in [0, 1]")
            object.__setattr__(self, "score", s)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_json(self) -> list:
        return [self.x1, self.y1, self.x2, self.y2, self.score, self.label]

    @classmethod
    def from_json(cls, obj: list) -> "Box":
        x1, y1, x2, y2 = obj[:4]
        score = obj[4] if len(obj) > 4 else None
        label = obj[5] if len(obj) > 5 else None
        return cls(x1, y1, x2, y2, score, label)


@dataclass(frozen=True)
class RoiConfig:
    """Pooling grid size P and per-bin samples per axis."""

    pool_size: int = 7
    sampling_ratio: int = 2

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.sampling_ratio < 1:
            raise ValueError("sampling_ratio must be >= 1")


def _sample_coords(lo: float, hi: float, size: int, cfg: RoiConfig) -> np.ndarray:
    """Continuous array coordinates of all P * ratio samples along one axis.

    lo/hi are the box edges in normalized [0, 1]; returned coordinates are
    clamped to [0, size - 1].
    """
    start = lo * size - 0.5
    extent = (hi - lo) * size
    bin_len = extent / cfg.pool_size
    r = cfg.sampling_ratio
    # sample s of bin b sits at start + bin_len * (b + (s + 0.5) / r)
    offsets = (np.arange(cfg.pool_size)[:, None] + (np.arange(r)[None, :] + 0.5) / r) * bin_len
    coords = start + offsets.ravel()
    return np.clip(coords, 0.0, size - 1)


def _axis_weights(coords: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    lo = np.floor(coords).astype(int)
    hi = np.minimum(lo + 1, size - 1)
    frac = coords - lo
    return lo, hi, 1.0 - frac, frac


def roi_align(fmap: FeatureMap, box: Box, cfg: RoiConfig = RoiConfig()) -> FeatureMap:
    """Extract a C x P x P grid for one box.

    Each bin is the average of sampling_ratio^2 bilinear samples taken at
    regularly spaced points inside the bin.
    """
    p, r = cfg.pool_size, cfg.sampling_ratio
    ys = _sample_coords(box.y1, box.y2, fmap.height, cfg)
    xs = _sample_coords(box.x1, box.x2, fmap.width, cfg)
    y0, y1, wy0, wy1 = _axis_weights(ys, fmap.height)
    x0, x1, wx0, wx1 = _axis_weights(xs, fmap.width)
    d = fmap.data
    # samples: (C, P*r, P*r) via separable bilinear weights
    samples = (
        d[:, y0[:, None], x0[None, :]] * (wy0[:, None] * wx0[None, :])
        + d[:, y0[:, None], x1[None, :]] * (wy0[:, None] * wx1[None, :])
        + d[:, y1[:, None], x0[None, :]] * (wy1[:, None] * wx0[None, :])
        + d[:, y1[:, None], x1[None, :]] * (wy1[:, None] * wx1[None, :])
    )
    bins = samples.reshape(fmap.channels, p, r, p, r).mean(axis=(2, 4))
    return FeatureMap(fmap.channels, p, p, bins)


def pooled_weights(height: int, width: int, boxes: list[Box], cfg: RoiConfig = RoiConfig()) -> np.ndarray:
    """(N, height * width) weights W with pooled[n, c] = sum_p W[n, p] * map[c, p].

    Mean-over-bins pooling averages all P^2 * ratio^2 samples with equal
    weight, so the pooled vector is this fixed linear functional of the map.
    """
    if not boxes:
        raise ValueError("at least one box is required")
    n_samples = (cfg.pool_size * cfg.sampling_ratio) ** 2
    out = np.zeros((len(boxes), height * width))
    for n, box in enumerate(boxes):
        ys = _sample_coords(box.y1, box.y2, height, cfg)
        xs = _sample_coords(box.x1, box.x2, width, cfg)
        y0, y1, wy0, wy1 = _axis_weights(ys, height)
        x0, x1, wx0, wx1 = _axis_weights(xs, width)
        grid = np.zeros((height, width))
        # accumulate the four bilinear corners of every sample point
        np.add.at(grid, (y0[:, None], x0[None, :]), wy0[:, None] * wx0[None, :])
        np.add.at(grid, (y0[:, None], x1[None, :]), wy0[:, None] * wx1[None, :])
        np.add.at(grid, (y1[:, None], x0[None, :]), wy1[:, None] * wx0[None, :])
        np.add.at(grid, (y1[:, None], x1[None, :]), wy1[:, None] * wx1[None, :])
        out[n] = grid.ravel() / n_samples
    return out


def pooled_apply(weights: np.ndarray, map_data: np.ndarray) -> np.ndarray:
    """Apply cached pooling weights to a (C, H, W) array, yielding (N, C)."""
    c = map_data.shape[0]
    return weights @ map_data.reshape(c, -1).T


def roi_align_pooled(fmap: FeatureMap, boxes: list[Box], cfg: RoiConfig = RoiConfig()) -> np.ndarray:
    """Mean-pooled region features: one row of length ``channels`` per box."""
    w = pooled_weights(fmap.height, fmap.width, boxes, cfg)
    return pooled_apply(w, fmap.data)
