"""Two-stage training of the region-retrieval head.

Parameters live in named groups so the freeze schedule can be stated and
audited exactly:

* ``primary_encoder`` — a 1x1 channel-mixing kernel on the primary map,
  identity-initialized; frozen throughout (it stands in for the pretrained
  primary tower) unless the explicit ablation switch unfreezes it.
* ``aux_encoder`` — per-level 1x1 kernels on the auxiliary maps,
  identity-initialized; frozen in stage 1, unfrozen in stage 2.
* ``simplefp`` — the pyramid branch kernels; trained in both stages.
* ``connector`` — the feature-to-token projection; trained in both stages.
* ``new_token_embeddings`` — the per-category query vectors the retrieval
  head scores against (the newly added protocol symbols); trained in both
  stages.
* ``original_embeddings`` — a fixed table standing in for the preexisting
  text vocabulary; never trained.

Stage 1 aligns regions to token space (lr 1e-3 by default); stage 2
finetunes with the auxiliary group unfrozen (lr 1e-5).  The loss is
per-(region, query) binary cross-entropy against the synthetic-world
assignment targets, summed over pairs.  The optimizer is plain gradient
descent so every gradient stays auditable, and everything is deterministic
given the config seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .gridops import (
    FeatureMap,
    Kernel,
    bilinear_resize,
    bilinear_resize_grad,
    concat_channels,
    conv2d,
    conv2d_backward,
    deconv2d,
    deconv2d_backward,
)
from .pyramid import PyramidConfig, SimpleFPParams
from .regionenc import Connector, connector_backward, connector_forward, positional_embedding_matrix
from .retrieval import CategoryQuery
from .roialign import Box, pooled_apply, pooled_weights
from .simworld import TrainingSample, make_training_set, toy_encode, vocabulary

__all__ = [
    "GROUP_PRIMARY",
    "GROUP_AUX",
    "GROUP_SIMPLEFP",
    "GROUP_CONNECTOR",
    "GROUP_NEW_VOCAB",
    "GROUP_ORIG_VOCAB",
    "ModelParams",
    "FreezeSchedule",
    "TrainingLog",
    "TrainingDivergence",
    "SampleStatic",
    "init_model_params",
    "prepare_sample",
    "loss_and_grads",
    "region_token_matrix",
    "train",
    "grad_check",
]

GROUP_PRIMARY = "primary_encoder"
GROUP_AUX = "aux_encoder"
GROUP_SIMPLEFP = "simplefp"
GROUP_CONNECTOR = "connector"
GROUP_NEW_VOCAB = "new_token_embeddings"
GROUP_ORIG_VOCAB = "original_embeddings"

_FP_BRANCHES = ("down", "same", "up2", "up4_a", "up4_b")


class TrainingDivergence(RuntimeError):
    """Raised when the loss stops being finite."""

    def __init__(self, stage: int, step: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at stage {stage} step {step}")
        self.stage = stage
        self.step = step
        self.loss = loss


@dataclass
class ModelParams:
    """All trainable state, as named arrays in named groups."""

    groups: dict[str, dict[str, np.ndarray]]

    def copy(self) -> "ModelParams":
        return ModelParams(
            {g: {k: v.copy() for k, v in arrs.items()} for g, arrs in self.groups.items()}
        )

    def checksum(self, group: str) -> str:
        h = hashlib.sha256()
        for name in sorted(self.groups[group]):
            arr = self.groups[group][name]
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def checksums(self) -> dict[str, str]:
        return {g: self.checksum(g) for g in sorted(self.groups)}

    def to_json(self) -> dict:
        return {
            g: {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in arrs.items()}
            for g, arrs in self.groups.items()
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelParams":
        return cls(
            {
                g: {k: np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"]) for k, spec in arrs.items()}
                for g, arrs in obj.items()
            }
        )

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f)

    @classmethod
    def load(cls, path) -> "ModelParams":
        with open(path) as f:
            return cls.from_json(json.load(f))


@dataclass(frozen=True)
class FreezeSchedule:
    """Trainable group names per stage; everything else is frozen."""

    stage1: frozenset
    stage2: frozenset

    def __post_init__(self):
        if GROUP_ORIG_VOCAB in self.stage1 | self.stage2:
            raise ValueError("the original vocabulary embeddings are never trainable")
        if GROUP_PRIMARY in self.stage1:
            raise ValueError("the primary encoder is frozen in stage 1")

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "FreezeSchedule":
        base = {GROUP_CONNECTOR, GROUP_NEW_VOCAB}
        if config.use_primary and config.use_simplefp:
            base.add(GROUP_SIMPLEFP)
        stage2 = set(base)
        if config.use_auxiliary and config.unfreeze_aux_stage2:
            stage2.add(GROUP_AUX)
        if config.use_primary and config.unfreeze_primary:
            stage2.add(GROUP_PRIMARY)
        return cls(frozenset(base), frozenset(stage2))

    def trainable(self, stage: int) -> frozenset:
        if stage == 1:
            return self.stage1
        if stage == 2:
            return self.stage2
        raise ValueError("stage must be 1 or 2")


def init_model_params(config: ExperimentConfig, rng: np.random.Generator | None = None) -> ModelParams:
    """Seeded initialization of every parameter group.

    Encoder mixing kernels start at identity (they stand in for pretrained
    towers); pyramid and connector weights draw from the seeded uniform.
    """
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    n_cat = config.n_categories
    groups: dict[str, dict[str, np.ndarray]] = {}

    c_pri = config.primary_channels
    groups[GROUP_PRIMARY] = {
        "mix_w": np.eye(c_pri).reshape(c_pri, c_pri, 1, 1),
        "mix_b": np.zeros(c_pri),
    }

    c_aux = config.encoder.aux_channels(n_cat)
    aux: dict[str, np.ndarray] = {}
    for level in range(4):
        aux[f"mix{level}_w"] = np.eye(c_aux).reshape(c_aux, c_aux, 1, 1)
        aux[f"mix{level}_b"] = np.zeros(c_aux)
    groups[GROUP_AUX] = aux

    fp = SimpleFPParams.seeded(c_pri, PyramidConfig(config.fp_channels), rng)
    groups[GROUP_SIMPLEFP] = {}
    for branch in _FP_BRANCHES:
        k = fp.kernels[branch]
        groups[GROUP_SIMPLEFP][f"{branch}_w"] = k.weights
        groups[GROUP_SIMPLEFP][f"{branch}_b"] = k.bias

    conn = Connector.seeded(config.d_total, config.d_llm, rng, hidden_dim=config.hidden_dim)
    groups[GROUP_CONNECTOR] = {"w1": conn.w1, "b1": conn.b1, "w2": conn.w2, "b2": conn.b2}

    # near-unit-norm query rows: the scoring is bilinear in (token, query),
    # so a timid query init throttles the connector's early gradients
    groups[GROUP_NEW_VOCAB] = {
        "queries": rng.uniform(-1.0, 1.0, size=(n_cat, config.d_llm))
    }
    groups[GROUP_ORIG_VOCAB] = {
        "table": rng.normal(0.0, 0.02, size=(64, config.d_llm))
    }
    return ModelParams(groups)


def _kernel(groups: dict, group: str, name: str) -> Kernel:
    w = groups[group][f"{name}_w"]
    b = groups[group][f"{name}_b"]
    return Kernel(w.shape[0], w.shape[1], w.shape[2], w.shape[3], w, b)


def _connector(groups: dict) -> Connector:
    c = groups[GROUP_CONNECTOR]
    return Connector(c["w1"], c["b1"], c["w2"], c["b2"])


def model_queries(params: ModelParams, config: ExperimentConfig) -> list[CategoryQuery]:
    names = vocabulary(config.n_categories)
    table = params.groups[GROUP_NEW_VOCAB]["queries"]
    return [CategoryQuery(name, table[i]) for i, name in enumerate(names)]


# ---------------------------------------------------------- sample prep

@dataclass
class SampleStatic:
    """Everything about one sample that does not depend on the parameters:
    rendered maps, cached pooling weights per map size, positional
    embeddings, query indices, and targets."""

    boxes: list[Box]
    last_map: FeatureMap
    aux_maps: list[FeatureMap]
    pool_w: dict[tuple[int, int], np.ndarray]
    epos: np.ndarray
    query_idx: np.ndarray
    targets: np.ndarray
    scene_id: int


def _pool_sizes(config: ExperimentConfig) -> list[tuple[int, int]]:
    sizes = []
    if config.use_primary:
        pr = config.encoder.primary_resolution
        if config.use_simplefp:
            sizes += [(pr // 2, pr // 2), (pr, pr), (2 * pr, 2 * pr), (4 * pr, 4 * pr)]
        else:
            sizes.append((pr, pr))
    if config.use_auxiliary:
        ar = config.encoder.aux_base_resolution
        sizes.append((ar, ar))
    return sizes


def prepare_sample(sample: TrainingSample, config: ExperimentConfig) -> SampleStatic:
    last_map, aux_maps = toy_encode(sample.scene, config.encoder)
    boxes = list(sample.proposals)
    pool_w = {}
    for h, w in _pool_sizes(config):
        if (h, w) not in pool_w:
            pool_w[(h, w)] = pooled_weights(h, w, boxes, config.roi)
    epos = positional_embedding_matrix(boxes, config.d_total)
    names = vocabulary(config.n_categories)
    index = {n: i for i, n in enumerate(names)}
    query_idx = np.array([index[q] for q in sample.queries], dtype=int)
    return SampleStatic(
        boxes=boxes,
        last_map=last_map,
        aux_maps=aux_maps,
        pool_w=pool_w,
        epos=epos,
        query_idx=query_idx,
        targets=np.asarray(sample.targets, dtype=np.float64),
        scene_id=sample.scene.image_id,
    )


# ------------------------------------------------------------- forward

@dataclass
class _ForwardCache:
    mixed_pri: FeatureMap | None = None
    levels: list[FeatureMap] | None = None
    up4_mid: FeatureMap | None = None
    mixed_aux: list[FeatureMap] | None = None
    fused: FeatureMap | None = None
    features: np.ndarray | None = None
    tokens: np.ndarray | None = None


def _forward(params: ModelParams, s: SampleStatic, config: ExperimentConfig) -> _ForwardCache:
    g = params.groups
    cache = _ForwardCache()
    parts = []
    if config.use_primary:
        mixed = conv2d(s.last_map, _kernel(g, GROUP_PRIMARY, "mix"))
        cache.mixed_pri = mixed
        if config.use_simplefp:
            k = {b: _kernel(g, GROUP_SIMPLEFP, b) for b in _FP_BRANCHES}
            down = conv2d(mixed, k["down"], stride=2, padding=1)
            same = conv2d(mixed, k["same"])
            up2 = deconv2d(mixed, k["up2"], stride=2)
            mid = deconv2d(mixed, k["up4_a"], stride=2)
            up4 = deconv2d(mid, k["up4_b"], stride=2)
            cache.levels = [down, same, up2, up4]
            cache.up4_mid = mid
        else:
            cache.levels = [mixed]
        for level in cache.levels:
            w = s.pool_w[(level.height, level.width)]
            parts.append(pooled_apply(w, level.data))
    if config.use_auxiliary:
        mixed_aux = [
            conv2d(m, _kernel(g, GROUP_AUX, f"mix{i}")) for i, m in enumerate(s.aux_maps)
        ]
        cache.mixed_aux = mixed_aux
        target = (mixed_aux[0].height, mixed_aux[0].width)
        resized = [
            m if (m.height, m.width) == target else bilinear_resize(m, *target) for m in mixed_aux
        ]
        fused = concat_channels(resized)
        cache.fused = fused
        parts.append(pooled_apply(s.pool_w[target], fused.data))
    feats = np.concatenate(parts, axis=1) + s.epos
    cache.features = feats
    cache.tokens = connector_forward(_connector(g), feats)
    return cache


def region_token_matrix(params: ModelParams, s: SampleStatic, config: ExperimentConfig) -> np.ndarray:
    """Token-space embeddings for every proposal of a prepared sample."""
    return _forward(params, s, config).tokens


def _bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> float:
    # log(1 + exp(-|z|)) formulation, stable for large |z|
    return float(np.sum(np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))))


def loss_and_grads(
    params: ModelParams,
    s: SampleStatic,
    config: ExperimentConfig,
    trainable: frozenset | set = frozenset(),
) -> tuple[float, dict[str, dict[str, np.ndarray]]]:
    """Loss on one sample plus analytic gradients for the requested groups.

    The loss is binary cross-entropy per (region, query) pair, summed over
    all pairs of the sample.
    """
    g = params.groups
    if s.query_idx.size == 0:
        return 0.0, {grp: {k: np.zeros_like(v) for k, v in g[grp].items()} for grp in trainable}
    cache = _forward(params, s, config)
    queries = g[GROUP_NEW_VOCAB]["queries"][s.query_idx]
    logits = cache.tokens @ queries.T
    loss = _bce_with_logits(logits, s.targets)

    grads: dict[str, dict[str, np.ndarray]] = {}
    want = set(trainable)
    if not want:
        return loss, grads

    probs = 1.0 / (1.0 + np.exp(-logits))
    d_logits = probs - s.targets

    if GROUP_NEW_VOCAB in want:
        dq = np.zeros_like(g[GROUP_NEW_VOCAB]["queries"])
        np.add.at(dq, s.query_idx, d_logits.T @ cache.tokens)
        grads[GROUP_NEW_VOCAB] = {"queries": dq}

    need_features = want & {GROUP_CONNECTOR, GROUP_SIMPLEFP, GROUP_AUX, GROUP_PRIMARY}
    if not need_features:
        return loss, grads

    d_tokens = d_logits @ queries
    conn_grads, d_feats = connector_backward(_connector(g), cache.features, d_tokens)
    if GROUP_CONNECTOR in want:
        grads[GROUP_CONNECTOR] = conn_grads

    # split the feature gradient back into its pooled blocks
    col = 0
    d_blocks = []
    if config.use_primary:
        for level in cache.levels:
            d_blocks.append(("pri", level, d_feats[:, col : col + level.channels]))
            col += level.channels
    if config.use_auxiliary:
        d_blocks.append(("aux", cache.fused, d_feats[:, col : col + cache.fused.channels]))
        col += cache.fused.channels

    d_mixed_pri = None
    for kind_index, (kind, fmap, d_pool) in enumerate(d_blocks):
        if kind == "pri" and not (want & {GROUP_SIMPLEFP, GROUP_PRIMARY}):
            continue
        if kind == "aux" and GROUP_AUX not in want:
            continue
        w = s.pool_w[(fmap.height, fmap.width)]
        d_map = (d_pool.T @ w).reshape(fmap.channels, fmap.height, fmap.width)
        if kind == "aux":
            aux_grads = {}
            c0 = 0
            target = (cache.fused.height, cache.fused.width)
            for i, mixed in enumerate(cache.mixed_aux):
                d_res = d_map[c0 : c0 + mixed.channels]
                c0 += mixed.channels
                if (mixed.height, mixed.width) == target:
                    d_mixed = d_res
                else:
                    d_mixed = bilinear_resize_grad(d_res, mixed.height, mixed.width)
                d_w, d_b, _ = conv2d_backward(s.aux_maps[i], _kernel(g, GROUP_AUX, f"mix{i}"), d_mixed)
                aux_grads[f"mix{i}_w"] = d_w
                aux_grads[f"mix{i}_b"] = d_b
            grads[GROUP_AUX] = aux_grads
        else:
            if d_mixed_pri is None:
                d_mixed_pri = np.zeros_like(cache.mixed_pri.data)
            if config.use_simplefp:
                # primary blocks precede the aux block, so kind_index is the
                # pyramid level: down, same, up2, up4
                level_idx = kind_index
                fp_grads = grads.setdefault(GROUP_SIMPLEFP, {})
                if level_idx == 0:
                    d_w, d_b, d_in = conv2d_backward(
                        cache.mixed_pri, _kernel(g, GROUP_SIMPLEFP, "down"), d_map, stride=2, padding=1
                    )
                    fp_grads["down_w"], fp_grads["down_b"] = d_w, d_b
                elif level_idx == 1:
                    d_w, d_b, d_in = conv2d_backward(cache.mixed_pri, _kernel(g, GROUP_SIMPLEFP, "same"), d_map)
                    fp_grads["same_w"], fp_grads["same_b"] = d_w, d_b
                elif level_idx == 2:
                    d_w, d_b, d_in = deconv2d_backward(cache.mixed_pri, _kernel(g, GROUP_SIMPLEFP, "up2"), d_map, stride=2)
                    fp_grads["up2_w"], fp_grads["up2_b"] = d_w, d_b
                else:
                    d_wb, d_bb, d_mid = deconv2d_backward(cache.up4_mid, _kernel(g, GROUP_SIMPLEFP, "up4_b"), d_map, stride=2)
                    d_wa, d_ba, d_in = deconv2d_backward(cache.mixed_pri, _kernel(g, GROUP_SIMPLEFP, "up4_a"), d_mid, stride=2)
                    fp_grads["up4_b_w"], fp_grads["up4_b_b"] = d_wb, d_bb
                    fp_grads["up4_a_w"], fp_grads["up4_a_b"] = d_wa, d_ba
                d_mixed_pri += d_in
            else:
                d_mixed_pri += d_map

    if GROUP_PRIMARY in want and d_mixed_pri is not None:
        d_w, d_b, _ = conv2d_backward(s.last_map, _kernel(g, GROUP_PRIMARY, "mix"), d_mixed_pri)
        grads[GROUP_PRIMARY] = {"mix_w": d_w, "mix_b": d_b}

    # requested groups with no path into this config's loss get zero grads;
    # groups touched only to reach an input gradient are dropped
    grads = {grp: arrs for grp, arrs in grads.items() if grp in want}
    for grp in want:
        if grp not in grads:
            grads[grp] = {k: np.zeros_like(v) for k, v in g[grp].items()}
    return loss, grads


# -------------------------------------------------------------- training

@dataclass
class TrainingLog:
    losses: dict[str, list[float]] = field(default_factory=lambda: {"stage1": [], "stage2": []})
    checksums: dict[str, dict[str, str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"losses": self.losses, "checksums": self.checksums}


def train(
    config: ExperimentConfig,
    dataset: list[TrainingSample] | None = None,
) -> tuple[ModelParams, TrainingLog]:
    """Run the two-stage schedule and return (parameter bundle, log).

    The log records the per-step loss of both stages and per-group
    parameter checksums at initialization and after each stage.
    """
    ss = np.random.SeedSequence(config.seed)
    data_ss, param_ss = ss.spawn(2)
    if dataset is None:
        dataset = make_training_set(
            config.n_train_scenes,
            config.rejection_fraction,
            seed=data_ss,
            scene_config=config.world,
            proposal_config=config.proposals,
        )
    statics = [prepare_sample(sample, config) for sample in dataset]
    params = init_model_params(config, np.random.default_rng(param_ss))
    schedule = FreezeSchedule.from_config(config)
    log = TrainingLog()
    log.checksums["init"] = params.checksums()

    step_counter = 0
    for stage, steps, lr in ((1, config.stage1_steps, config.stage1_lr), (2, config.stage2_steps, config.stage2_lr)):
        trainable = schedule.trainable(stage)
        for _ in range(steps):
            s = statics[step_counter % len(statics)]
            step_counter += 1
            try:
                loss, grads = loss_and_grads(params, s, config, trainable)
            except ValueError as exc:
                if "non-finite" in str(exc):
                    raise TrainingDivergence(stage, step_counter, float("nan")) from exc
                raise
            if not np.isfinite(loss):
                raise TrainingDivergence(stage, step_counter, loss)
            for grp, arrs in grads.items():
                for name, d in arrs.items():
                    params.groups[grp][name] -= lr * d
            log.losses[f"stage{stage}"].append(loss)
        log.checksums[f"after_stage{stage}"] = params.checksums()
    return params, log


# ------------------------------------------------------------ grad check

@dataclass
class GradCheckReport:
    per_group: dict[str, dict]
    frozen_zero: list[str]

    @property
    def max_rel_error(self) -> float:
        return max((v["max_rel_error"] for v in self.per_group.values()), default=0.0)

    def to_json(self) -> dict:
        return {"per_group": self.per_group, "frozen_zero": self.frozen_zero, "max_rel_error": self.max_rel_error}


def grad_check(
    config: ExperimentConfig,
    step: float = 1e-5,
    max_entries_per_array: int | None = None,
) -> GradCheckReport:
    """Central finite differences against the analytic gradients.

    Checks every parameterized group that can ever train.  The relative
    error per entry is |a - n| / max(|a|, |n|, 1e-5); intended for small
    configurations (dims <= 64).  The original-vocabulary table has no
    path into the loss, so it is reported in ``frozen_zero`` rather than
    differenced.
    """
    if config.d_llm > 64 or config.hidden_dim > 64:
        raise ValueError("grad_check is meant for small dimensions (<= 64)")
    ss = np.random.SeedSequence(config.seed)
    data_ss, param_ss = ss.spawn(2)
    dataset = make_training_set(
        2, config.rejection_fraction, seed=data_ss,
        scene_config=config.world, proposal_config=config.proposals,
    )
    s = prepare_sample(dataset[0], config)
    params = init_model_params(config, np.random.default_rng(param_ss))

    check_groups = [GROUP_CONNECTOR, GROUP_NEW_VOCAB]
    if config.use_primary and config.use_simplefp:
        check_groups.append(GROUP_SIMPLEFP)
    if config.use_auxiliary:
        check_groups.append(GROUP_AUX)
    if config.use_primary:
        check_groups.append(GROUP_PRIMARY)

    _, analytic = loss_and_grads(params, s, config, frozenset(check_groups))

    rng = np.random.default_rng(param_ss.spawn(1)[0])
    report: dict[str, dict] = {}
    for grp in check_groups:
        worst = 0.0
        n_checked = 0
        for name, arr in params.groups[grp].items():
            flat = arr.ravel()
            idx = np.arange(flat.size)
            if max_entries_per_array is not None and flat.size > max_entries_per_array:
                idx = rng.choice(flat.size, size=max_entries_per_array, replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + step
                up, _ = loss_and_grads(params, s, config)
                flat[i] = orig - step
                down, _ = loss_and_grads(params, s, config)
                flat[i] = orig
                numeric = (up - down) / (2 * step)
                a = analytic[grp][name].ravel()[i]
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-5)
                worst = max(worst, rel)
                n_checked += 1
        report[grp] = {"max_rel_error": worst, "entries_checked": n_checked}
    return GradCheckReport(per_group=report, frozen_zero=[GROUP_ORIG_VOCAB])
