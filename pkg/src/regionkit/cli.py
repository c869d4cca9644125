"""Command-line interface.

Subcommands: ``gen`` (scenes + proposals), ``train``, ``gradcheck``,
``bench``, ``ablate``, ``validate-transcript``.  Each experiment command
accepts ``--config FILE`` (the JSON schema mirrors ExperimentConfig) plus
flag overrides for the common fields, and writes its artifacts and a
manifest under ``--out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .experiments import run_ablations, run_benchmark, write_artifacts
from .simworld import generate_scene, scenes_to_json, simulate_opn
from .tokenproto import ParseError, parse_grounded
from .training import grad_check, train


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.loads(Path(args.config).read_text())
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for name in (
        "seed",
        "stage1_steps",
        "stage2_steps",
        "stage1_lr",
        "stage2_lr",
        "threshold",
        "n_train_scenes",
        "n_eval_scenes",
        "rejection_fraction",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return cfg.replace(**overrides) if overrides else cfg


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (see README for the schema)")
    p.add_argument("--seed", type=int)
    p.add_argument("--stage1-steps", dest="stage1_steps", type=int)
    p.add_argument("--stage2-steps", dest="stage2_steps", type=int)
    p.add_argument("--stage1-lr", dest="stage1_lr", type=float)
    p.add_argument("--stage2-lr", dest="stage2_lr", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--n-train-scenes", dest="n_train_scenes", type=int)
    p.add_argument("--n-eval-scenes", dest="n_eval_scenes", type=int)
    p.add_argument("--rejection-fraction", dest="rejection_fraction", type=float)


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    rng = np.random.default_rng(cfg.seed)
    scenes = []
    proposals = {}
    for _ in range(args.n_scenes):
        scene = generate_scene(int(rng.integers(2**31)), cfg.world)
        scenes.append(scene)
        proposals[scene.image_id] = simulate_opn(scene, cfg.proposals, int(rng.integers(2**31)))
    payload = json.dumps(scenes_to_json(scenes, proposals), indent=2)
    if args.out:
        write_artifacts(Path(args.out), seeds=[cfg.seed], config=cfg, files={"scenes.json": payload})
        print(f"wrote {args.out}/scenes.json ({len(scenes)} scenes)")
    else:
        print(payload)
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    params, log = train(cfg)
    files = {
        "bundle.json": json.dumps(params.to_json()),
        "train_log.json": json.dumps(log.to_json(), indent=2),
    }
    out = Path(args.out or "runs/train")
    write_artifacts(out, seeds=[cfg.seed], config=cfg, files=files)
    final = log.losses["stage2"][-1] if log.losses["stage2"] else (log.losses["stage1"] or [float("nan")])[-1]
    print(f"trained: final loss {final:.4f}; bundle at {out}/bundle.json")
    return 0


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    if args.config is None and args.seed is None:
        cfg = small_gradcheck_config()
    report = grad_check(cfg)
    print(json.dumps(report.to_json(), indent=2))
    ok = report.max_rel_error < 1e-4
    print(f"max relative error {report.max_rel_error:.3e}: {'OK' if ok else 'FAIL'}")
    if args.out:
        write_artifacts(Path(args.out), seeds=[cfg.seed], config=cfg,
                        files={"gradcheck.json": json.dumps(report.to_json(), indent=2)})
    return 0 if ok else 1


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    result = run_benchmark(cfg, out_dir=args.out or "runs/bench")
    print(result.tsv(), end="")
    gap = result.retrieval.ap_mean - result.baseline.ap_mean
    print(f"retrieval - baseline ap_mean gap: {gap:+.4f}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    rows = run_ablations(cfg, n_seeds=args.n_seeds, out_dir=args.out or "runs/ablate")
    for row in rows:
        print(f"{row.variant:<20}\tap_mean={row.ap_mean:.4f}")
    return 0


def cmd_validate_transcript(args) -> int:
    """Validate a transcript file: one JSON-escaped response string per line."""
    path = Path(args.file)
    failures = 0
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            text = json.loads(raw)
            if not isinstance(text, str):
                raise ValueError("line must decode to a JSON string")
        except ValueError as exc:
            print(f"line {lineno}: invalid JSON string ({exc})")
            failures += 1
            continue
        try:
            parse_grounded(text, args.n_regions)
            print(f"line {lineno}: ok")
        except ParseError as exc:
            print(f"line {lineno}: offset {exc.offset} [{exc.production}] {exc.message}")
            failures += 1
    print(f"{failures} invalid line(s)")
    return 0 if failures == 0 else 1


def small_gradcheck_config() -> ExperimentConfig:
    """Tiny dimensions so finite differences over every parameter stay fast."""
    from .simworld import EncoderConfig, ProposalSimConfig, SceneConfig

    return ExperimentConfig(
        seed=3,
        world=SceneConfig(n_categories=4, min_objects=2, max_objects=3, resolution=16),
        proposals=ProposalSimConfig(jitter_sigma=0.01, drop_rate=0.0, clutter_rate=1.0, max_proposals=8),
        encoder=EncoderConfig(primary_resolution=8, aux_base_resolution=16),
        fp_channels=2,
        d_llm=8,
        n_train_scenes=2,
        stage1_steps=0,
        stage2_steps=0,
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="regionkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate scenes and simulated proposals")
    _add_config_flags(p)
    p.add_argument("--n-scenes", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="run the two-stage training schedule")
    _add_config_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    _add_config_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="head-to-head retrieval vs coordinate regression")
    _add_config_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="feature-stream ablation table")
    _add_config_flags(p)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("validate-transcript", help="validate grounded responses, one JSON string per line")
    p.add_argument("file")
    p.add_argument("--n-regions", type=int, default=100)
    p.set_defaults(func=cmd_validate_transcript)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
