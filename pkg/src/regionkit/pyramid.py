"""Multi-scale feature stacks.

Two constructions feed region pooling:

* :func:`simple_fp` expands a single-scale map into a 4-level pyramid via
  strided branches {2, 1, 1/2, 1/4} — a stride-2 3x3 convolution, a 1x1
  convolution, one 2x2 transposed convolution, and two chained 2x2
  transposed convolutions.  Every level carries ``fp_channels`` channels,
  so the concatenated per-region feature has dimension 4 * fp_channels.
* :func:`aux_fuse` upsamples four maps to the largest spatial size and
  concatenates them along channels, so the fused region feature dimension
  is the sum of the four channel counts.

Branches are plain linear maps (no normalization or nonlinearity);
parameters initialize from a seeded uniform so runs are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .gridops import FeatureMap, Kernel, bilinear_resize, concat_channels, conv2d, deconv2d

__all__ = ["PyramidConfig", "SimpleFPParams", "simple_fp", "aux_fuse"]

#: Spatial scale of each pyramid level relative to the input map.
PYRAMID_STRIDES = (2, 1, "1/2", "1/4")


@dataclass(frozen=True)
class PyramidConfig:
    """Per-scale channel width; the region feature dimension is 4x that."""

    fp_channels: int = 512

    def __post_init__(self):
        if self.fp_channels < 1:
            raise ValueError("fp_channels must be >= 1")

    @property
    def strides(self) -> tuple:
        return PYRAMID_STRIDES

    @property
    def d_p(self) -> int:
        """Dimension of the concatenated per-region pyramid feature."""
        return 4 * self.fp_channels


_BRANCHES = ("down", "same", "up2", "up4_a", "up4_b")


@dataclass
class SimpleFPParams:
    """The five branch kernels of the pyramid, keyed by branch name."""

    kernels: dict[str, Kernel] = field(default_factory=dict)

    def __post_init__(self):
        missing = [b for b in _BRANCHES if b not in self.kernels]
        if missing:
            raise ValueError(f"missing pyramid branches: {missing}")

    @classmethod
    def seeded(cls, in_channels: int, cfg: PyramidConfig, rng: np.random.Generator) -> "SimpleFPParams":
        fp = cfg.fp_channels
        return cls(
            {
                "down": Kernel.seeded_uniform(fp, in_channels, 3, 3, rng),
                "same": Kernel.seeded_uniform(fp, in_channels, 1, 1, rng),
                "up2": Kernel.seeded_uniform(fp, in_channels, 2, 2, rng),
                "up4_a": Kernel.seeded_uniform(fp, in_channels, 2, 2, rng),
                "up4_b": Kernel.seeded_uniform(fp, fp, 2, 2, rng),
            }
        )

    def to_json(self) -> dict:
        out = {}
        for name, k in self.kernels.items():
            out[name] = {
                "out_channels": k.out_channels,
                "in_channels": k.in_channels,
                "k_h": k.k_h,
                "k_w": k.k_w,
                "weights": k.weights.ravel().tolist(),
                "bias": k.bias.tolist(),
            }
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SimpleFPParams":
        kernels = {}
        for name, spec in obj.items():
            kernels[name] = Kernel(
                spec["out_channels"], spec["in_channels"], spec["k_h"], spec["k_w"],
                np.asarray(spec["weights"]), np.asarray(spec["bias"]),
            )
        return cls(kernels)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def simple_fp(last_map: FeatureMap, cfg: PyramidConfig, params: SimpleFPParams) -> list[FeatureMap]:
    """Build the 4-level pyramid {H/2 x W/2, H x W, 2H x 2W, 4H x 4W}."""
    if min(last_map.height, last_map.width) < 4:
        raise ValueError("input map must be at least 4x4 for the stride-2 branch")
    k = params.kernels
    down = conv2d(last_map, k["down"], stride=2, padding=1)
    same = conv2d(last_map, k["same"], stride=1, padding=0)
    up2 = deconv2d(last_map, k["up2"], stride=2)
    up4 = deconv2d(deconv2d(last_map, k["up4_a"], stride=2), k["up4_b"], stride=2)
    return [down, same, up2, up4]


def aux_fuse(maps: list[FeatureMap]) -> FeatureMap:
    """Resize four maps to the largest spatial size and concatenate channels."""
    if len(maps) != 4:
        raise ValueError(f"aux_fuse expects exactly 4 maps, got {len(maps)}")
    areas = [m.height * m.width for m in maps]
    biggest = max(areas)
    target_shapes = {(m.height, m.width) for m, a in zip(maps, areas) if a == biggest}
    if len(target_shapes) != 1:
        raise ValueError("largest map is ambiguous: maximal-area maps differ in shape")
    (th, tw) = target_shapes.pop()
    resized = [m if (m.height, m.width) == (th, tw) else bilinear_resize(m, th, tw) for m in maps]
    return concat_channels(resized)
