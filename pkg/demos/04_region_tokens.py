"""From a synthetic scene to region tokens and the model input sequence.

Runs the whole encoding path at desk scale: render a scene with the toy
dual encoders, build the pyramid, pool per-proposal features from both
streams, add box positional embeddings, project through the connector,
and interleave the resulting region tokens into an input sequence.
"""

import numpy as np

from regionkit import (
    Connector,
    PyramidConfig,
    SimpleFPParams,
    aux_fuse,
    build_input_sequence,
    generate_scene,
    region_tokens,
    simple_fp,
    simulate_opn,
    toy_encode,
)
from regionkit.regionenc import extract_region_features, fuse_hybrid
from regionkit.simworld import SceneConfig


def main():
    rng = np.random.default_rng(1)
    world = SceneConfig(min_objects=3, max_objects=3)
    scene = generate_scene(11, world)
    print("scene objects:", [(c, round(b.x1, 2), round(b.y1, 2)) for c, b in scene.objects])

    proposals = simulate_opn(scene, seed=5)
    print(f"{len(proposals)} proposals, top score {proposals[0].score:.2f}")

    primary, aux_maps = toy_encode(scene)
    cfg = PyramidConfig(fp_channels=8)
    pyramid = simple_fp(primary, cfg, SimpleFPParams.seeded(primary.channels, cfg, rng))
    fused = aux_fuse(aux_maps)

    f_pri, f_aux = extract_region_features(pyramid, fused, proposals)
    hybrids = fuse_hybrid(f_pri, f_aux, proposals)
    print("hybrid feature length:", hybrids[0].f_hybrid.shape[0])

    connector = Connector.seeded(hybrids[0].f_hybrid.shape[0], 64, rng)
    tokens = region_tokens(connector, hybrids)
    print("region tokens:", len(tokens), "x", tokens[0].embedding.shape[0])

    seq = build_input_sequence(4, tokens, ["find ", "every ", "object"])
    print("input sequence:")
    print(seq.render())


if __name__ == "__main__":
    main()
