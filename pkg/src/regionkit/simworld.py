"""Synthetic scenes, toy dual encoders, and a simulated proposal network.

This module is the desk-scale stand-in for real images, pretrained vision
backbones, and an external proposal detector.  Scenes are boxes with
category labels on a unit square; "encoding" renders them into feature
grids whose channel layout makes the learning problem solvable by a linear
head while still exercising the full pipeline:

* the primary encoder is low-resolution and semantic: one coverage channel
  per category, blurred, plus background, coordinate ramps, and inert
  noise channels;
* the auxiliary encoder is high-resolution and perceptual: sharp texture
  channels that merge category pairs (it can localize crisply but cannot
  tell paired categories apart), plus edge channels, rendered at four
  scales.

The split mirrors a semantics-rich global encoder paired with a
detail-specialist tower: either stream alone is handicapped, together they
are complementary.  All randomness flows from explicit seeds; everything
here is replayable bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gridops import FeatureMap
from .roialign import Box

__all__ = [
    "CATEGORY_WORDS",
    "vocabulary",
    "SceneConfig",
    "EncoderConfig",
    "ProposalSimConfig",
    "Scene",
    "TrainingSample",
    "generate_scene",
    "toy_encode",
    "simulate_opn",
    "make_training_set",
    "scenes_to_json",
    "scenes_from_json",
]

CATEGORY_WORDS = ("ball", "block", "tree", "car", "person", "sign", "lamp", "bird")


def vocabulary(n_categories: int) -> tuple[str, ...]:
    """The first n category names of the fixed toy vocabulary."""
    if n_categories < 1:
        raise ValueError("need at least one category")
    names = list(CATEGORY_WORDS[:n_categories])
    names += [f"thing{k}" for k in range(len(names), n_categories)]
    return tuple(names)


@dataclass(frozen=True)
class SceneConfig:
    """Scene sampling distribution: object counts, sizes, overlap, clutter."""

    n_categories: int = 8
    min_objects: int = 5
    max_objects: int = 8
    min_size: float = 0.12
    max_size: float = 0.32
    max_overlap: float = 0.2
    clutter_density: float = 0.05
    resolution: int = 64
    category_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not (0 <= self.min_objects <= self.max_objects):
            raise ValueError("object count range is invalid")
        if not (0.0 < self.min_size <= self.max_size <= 1.0):
            raise ValueError("object size range is invalid")
        if self.category_weights is not None and len(self.category_weights) != self.n_categories:
            raise ValueError("category_weights length must equal n_categories")

    @property
    def categories(self) -> tuple[str, ...]:
        return vocabulary(self.n_categories)

    @property
    def weights(self) -> np.ndarray:
        if self.category_weights is None:
            return np.full(self.n_categories, 1.0 / self.n_categories)
        w = np.asarray(self.category_weights, dtype=np.float64)
        return w / w.sum()


@dataclass(frozen=True)
class EncoderConfig:
    """Toy dual-encoder rendering parameters."""

    primary_resolution: int = 16
    aux_base_resolution: int = 64
    noise_sigma: float = 0.01
    distractor_intensity: float = 0.3

    @staticmethod
    def primary_channels(n_categories: int) -> int:
        # signatures + background + two ramps, padded to a multiple of 8
        base = n_categories + 3
        return ((base + 7) // 8) * 8

    @staticmethod
    def aux_channels(n_categories: int) -> int:
        # paired-category texture channels + two edge channels
        return (n_categories + 1) // 2 + 2

    @staticmethod
    def aux_total_dim(n_categories: int) -> int:
        return 4 * EncoderConfig.aux_channels(n_categories)


@dataclass(frozen=True)
class ProposalSimConfig:
    """Simulated proposal-network behavior."""

    jitter_sigma: float = 0.005
    drop_rate: float = 0.0
    clutter_rate: float = 2.0
    max_proposals: int = 100

    def __post_init__(self):
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be >= 0")
        if not (0.0 <= self.drop_rate <= 1.0):
            raise ValueError("drop_rate must lie in [0, 1]")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be >= 0")
        if self.max_proposals < 1:
            raise ValueError("max_proposals must be >= 1")


@dataclass(frozen=True)
class Scene:
    """One synthetic image: labeled object boxes on the unit square."""

    image_id: int
    resolution: int
    objects: tuple[tuple[str, Box], ...]
    clutter_density: float
    seed: int
    n_categories: int

    def boxes_of(self, category: str) -> list[Box]:
        return [b for c, b in self.objects if c == category]

    @property
    def present_categories(self) -> tuple[str, ...]:
        order = {name: i for i, name in enumerate(vocabulary(self.n_categories))}
        present = sorted({c for c, _ in self.objects}, key=order.get)
        return tuple(present)


def _pair_iou(a: Box, b: Box) -> float:
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def generate_scene(seed: int, config: SceneConfig = SceneConfig()) -> Scene:
    """Sample one scene, deterministic in the seed.

    Objects are rejected (up to a fixed retry budget) when they overlap an
    already-placed object too much, so scenes stay readable.
    """
    rng = np.random.default_rng(seed)
    names = config.categories
    n_obj = int(rng.integers(config.min_objects, config.max_objects + 1))
    objects: list[tuple[str, Box]] = []
    for _ in range(n_obj):
        cat = names[int(rng.choice(config.n_categories, p=config.weights))]
        for _attempt in range(50):
            w = float(rng.uniform(config.min_size, config.max_size))
            h = float(rng.uniform(config.min_size, config.max_size))
            x1 = float(rng.uniform(0.0, 1.0 - w))
            y1 = float(rng.uniform(0.0, 1.0 - h))
            box = Box(x1, y1, x1 + w, y1 + h, label=cat)
            if all(_pair_iou(box, b) <= config.max_overlap for _, b in objects):
                objects.append((cat, box))
                break
    return Scene(
        image_id=int(seed),
        resolution=config.resolution,
        objects=tuple(objects),
        clutter_density=config.clutter_density,
        seed=int(seed),
        n_categories=config.n_categories,
    )


# ------------------------------------------------------------- rendering

def _coverage(box: Box, res: int) -> np.ndarray:
    """Fraction of each grid cell covered by the box (res x res, values in [0, 1])."""
    edges = np.arange(res + 1) / res
    cy = np.clip(np.minimum(box.y2, edges[1:]) - np.maximum(box.y1, edges[:-1]), 0.0, None) * res
    cx = np.clip(np.minimum(box.x2, edges[1:]) - np.maximum(box.x1, edges[:-1]), 0.0, None) * res
    return np.outer(cy, cx)


def _blur3(img: np.ndarray) -> np.ndarray:
    """3x3 binomial blur with zero padding, applied per 2-D slice."""
    pad = np.pad(img, 1)
    out = np.zeros_like(img)
    weights = {(-1, -1): 1, (-1, 0): 2, (-1, 1): 1, (0, -1): 2, (0, 0): 4, (0, 1): 2, (1, -1): 1, (1, 0): 2, (1, 1): 1}
    h, w = img.shape
    for (dy, dx), wt in weights.items():
        out += wt * pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out / 16.0


def _edge_maps(occupancy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ey = np.zeros_like(occupancy)
    ex = np.zeros_like(occupancy)
    ey[1:-1, :] = np.abs(occupancy[2:, :] - occupancy[:-2, :]) / 2.0
    ex[:, 1:-1] = np.abs(occupancy[:, 2:] - occupancy[:, :-2]) / 2.0
    return ey, ex


def toy_encode(scene: Scene, enc: EncoderConfig = EncoderConfig()) -> tuple[FeatureMap, list[FeatureMap]]:
    """Render a scene into (primary last map, four auxiliary maps).

    Deterministic in the scene seed: encoding the same scene twice yields
    bitwise-identical maps.
    """
    rng = np.random.default_rng([scene.seed, 0xE0C0DE])
    n_cat = scene.n_categories
    names = vocabulary(n_cat)
    cat_index = {name: i for i, name in enumerate(names)}

    # distractor smudges shared by both streams
    n_distract = int(rng.poisson(scene.clutter_density * 8))
    distractors: list[tuple[int, Box]] = []
    for _ in range(n_distract):
        w = float(rng.uniform(0.03, 0.10))
        h = float(rng.uniform(0.03, 0.10))
        x1 = float(rng.uniform(0.0, 1.0 - w))
        y1 = float(rng.uniform(0.0, 1.0 - h))
        distractors.append((int(rng.integers(n_cat)), Box(x1, y1, x1 + w, y1 + h)))

    def painted(res: int) -> np.ndarray:
        sig = np.zeros((n_cat, res, res))
        for cat, box in scene.objects:
            sig[cat_index[cat]] += _coverage(box, res)
        for ci, box in distractors:
            sig[ci] += enc.distractor_intensity * _coverage(box, res)
        return sig

    # primary stream: blurred semantics at low resolution
    pr = enc.primary_resolution
    c_pri = enc.primary_channels(n_cat)
    primary = np.zeros((c_pri, pr, pr))
    sig = painted(pr)
    occupancy = sig.sum(axis=0)
    for c in range(n_cat):
        primary[c] = _blur3(sig[c])
    primary[n_cat] = np.clip(1.0 - occupancy, 0.0, None)
    ramp = (np.arange(pr) + 0.5) / pr
    primary[n_cat + 1] = np.tile(ramp, (pr, 1))
    primary[n_cat + 2] = np.tile(ramp[:, None], (1, pr))
    primary += rng.normal(0.0, enc.noise_sigma, size=primary.shape)

    # auxiliary stream: sharp paired-category textures plus edges, four scales
    n_groups = (n_cat + 1) // 2
    aux_maps = []
    for level in range(4):
        res = enc.aux_base_resolution // (2**level)
        ch = EncoderConfig.aux_channels(n_cat)
        level_map = np.zeros((ch, res, res))
        sig_l = painted(res)
        for c in range(n_cat):
            level_map[c // 2] += sig_l[c]
        ey, ex = _edge_maps(sig_l.sum(axis=0))
        level_map[n_groups] = ey
        level_map[n_groups + 1] = ex
        level_map += rng.normal(0.0, enc.noise_sigma, size=level_map.shape)
        aux_maps.append(FeatureMap.from_array(level_map))

    return FeatureMap.from_array(primary), aux_maps


# ------------------------------------------------------------- proposals

def simulate_opn(scene: Scene, cfg: ProposalSimConfig = ProposalSimConfig(), seed: int = 0) -> list[Box]:
    """Simulate a proposal network over the scene's ground truth.

    Each object survives with probability 1 - drop_rate and is emitted with
    Gaussian coordinate jitter; the proposal score decays with the jitter
    magnitude.  Poisson(clutter_rate) spurious low-score boxes are added,
    and the list is sorted by score and truncated to max_proposals.
    """
    rng = np.random.default_rng(seed)
    proposals: list[Box] = []
    for _, box in scene.objects:
        drop = rng.uniform() < cfg.drop_rate
        jitter = rng.normal(0.0, cfg.jitter_sigma, size=4) if cfg.jitter_sigma > 0 else np.zeros(4)
        if drop:
            continue
        x1, y1, x2, y2 = np.clip(
            [box.x1 + jitter[0], box.y1 + jitter[1], box.x2 + jitter[2], box.y2 + jitter[3]], 0.0, 1.0
        )
        x1, x2 = sorted((x1, x2))
        y1, y2 = sorted((y1, y2))
        score = float(np.exp(-10.0 * np.linalg.norm(jitter)))
        proposals.append(Box(float(x1), float(y1), float(x2), float(y2), score=score))
    for _ in range(int(rng.poisson(cfg.clutter_rate))):
        w = float(rng.uniform(0.05, 0.30))
        h = float(rng.uniform(0.05, 0.30))
        x1 = float(rng.uniform(0.0, 1.0 - w))
        y1 = float(rng.uniform(0.0, 1.0 - h))
        proposals.append(Box(x1, y1, x1 + w, y1 + h, score=float(rng.uniform(0.0, 0.3))))
    proposals.sort(key=lambda b: -b.score)
    return proposals[: cfg.max_proposals]


# ---------------------------------------------------------- training data

@dataclass(frozen=True)
class TrainingSample:
    """One training record: a scene, its proposals, the queried categories,
    and the (proposal, query) target matrix."""

    scene: Scene
    proposals: tuple[Box, ...]
    queries: tuple[str, ...]
    targets: np.ndarray = field(repr=False)
    is_rejection: bool = False


def assignment_targets(proposals: list[Box], scene: Scene, queries: list[str], iou_threshold: float = 0.5) -> np.ndarray:
    """(N, Q) binary targets: proposal i is positive for query q when it
    overlaps a same-category ground-truth box with IoU above the threshold."""
    targets = np.zeros((len(proposals), len(queries)))
    for q, name in enumerate(queries):
        gt = scene.boxes_of(name)
        if not gt:
            continue
        for i, p in enumerate(proposals):
            if any(_pair_iou(p, g) > iou_threshold for g in gt):
                targets[i, q] = 1.0
    return targets


def make_training_set(
    n_scenes: int,
    rejection_fraction: float = 0.2,
    seed: int = 0,
    scene_config: SceneConfig = SceneConfig(),
    proposal_config: ProposalSimConfig = ProposalSimConfig(),
    n_rejection_queries: int = 2,
) -> list[TrainingSample]:
    """Build a replayable dataset of (scene, proposals, queries, targets).

    A ``rejection_fraction`` share of samples additionally queries categories
    absent from the scene; their targets are all-negative by construction.
    """
    if not (0.0 <= rejection_fraction <= 1.0):
        raise ValueError("rejection_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    names = scene_config.categories
    samples = []
    for _ in range(n_scenes):
        scene_seed = int(rng.integers(2**31))
        prop_seed = int(rng.integers(2**31))
        want_rejection = bool(rng.uniform() < rejection_fraction)
        scene = generate_scene(scene_seed, scene_config)
        proposals = simulate_opn(scene, proposal_config, prop_seed)
        if not proposals:
            proposals = [Box(0.0, 0.0, 1.0, 1.0, score=0.0)]
        queries = list(scene.present_categories)
        is_rejection = False
        if want_rejection:
            absent = [n for n in names if n not in queries]
            if absent:
                picked = rng.choice(len(absent), size=min(n_rejection_queries, len(absent)), replace=False)
                queries.extend(absent[i] for i in sorted(picked))
                is_rejection = True
        targets = assignment_targets(proposals, scene, queries)
        samples.append(
            TrainingSample(scene, tuple(proposals), tuple(queries), targets, is_rejection)
        )
    return samples


# ----------------------------------------------------------- persistence

def scenes_to_json(scenes: list[Scene], proposals: dict[int, list[Box]] | None = None) -> dict:
    """COCO-like record: a list of images with objects, plus optional proposals."""
    out = {
        "images": [
            {
                "id": s.image_id,
                "resolution": s.resolution,
                "seed": s.seed,
                "n_categories": s.n_categories,
                "clutter_density": s.clutter_density,
                "objects": [
                    {"category": c, "bbox": [b.x1, b.y1, b.width, b.height]} for c, b in s.objects
                ],
            }
            for s in scenes
        ]
    }
    if proposals is not None:
        out["proposals"] = {str(k): [b.to_json() for b in v] for k, v in proposals.items()}
    return out


def scenes_from_json(obj: dict) -> tuple[list[Scene], dict[int, list[Box]]]:
    scenes = []
    for rec in obj["images"]:
        objects = tuple(
            (o["category"], Box(o["bbox"][0], o["bbox"][1], o["bbox"][0] + o["bbox"][2], o["bbox"][1] + o["bbox"][3], label=o["category"]))
            for o in rec["objects"]
        )
        scenes.append(
            Scene(
                image_id=rec["id"],
                resolution=rec.get("resolution", 64),
                objects=objects,
                clutter_density=rec.get("clutter_density", 0.0),
                seed=rec.get("seed", rec["id"]),
                n_categories=rec.get("n_categories", 8),
            )
        )
    proposals = {
        int(k): [Box.from_json(b) for b in v] for k, v in obj.get("proposals", {}).items()
    }
    return scenes, proposals
