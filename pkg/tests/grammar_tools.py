"""Generators for grounded-response fuzzing.

``random_response`` builds random canonical response trees (the valid-input
generator); ``mutate_invalid`` applies one structural mutation that is
guaranteed to violate the grammar, so every mutant must produce a
structured parse error.
"""

from __future__ import annotations

import numpy as np

from regionkit.tokenproto import BareRegionRef, GroundedResponse, GroundedSpan, Text, serialize_grounded

_WORDS = ("the", "two", "red", "people", "dogs", "cars", "are", "dancing", "left", "of", "a", "tree")
_PUNCT = (" ", ", ", ". ", "! ", " - ", ": ")


def _random_text(rng: np.random.Generator) -> str:
    n = int(rng.integers(1, 5))
    parts = []
    for i in range(n):
        parts.append(str(rng.choice(_WORDS)))
        if i < n - 1:
            parts.append(str(rng.choice(_PUNCT)))
    return "".join(parts)


def _random_span(rng: np.random.Generator, n_regions: int) -> GroundedSpan:
    k = int(rng.integers(1, min(4, n_regions) + 1))
    regions = rng.choice(n_regions, size=k, replace=False)
    return GroundedSpan(str(rng.choice(_WORDS)), tuple(int(r) for r in regions))


def random_response(rng: np.random.Generator, n_regions: int = 16) -> GroundedResponse:
    """A random canonical tree: no adjacent/empty text, valid spans and refs."""
    nodes = []
    prev_text = False
    for _ in range(int(rng.integers(1, 7))):
        kind = rng.uniform()
        if kind < 0.45 and not prev_text:
            nodes.append(Text(_random_text(rng)))
            prev_text = True
        elif kind < 0.8:
            nodes.append(_random_span(rng, n_regions))
            prev_text = False
        else:
            nodes.append(BareRegionRef(int(rng.integers(n_regions))))
            prev_text = False
    if not nodes:
        nodes = [Text("ok")]
    return GroundedResponse(tuple(nodes))


def mutate_invalid(rng: np.random.Generator, valid: str, n_regions: int) -> str:
    """Produce a string that must fail parsing, by one structural mutation."""
    strategies = []

    def drop_closing():
        for tag in ("</ground>", "</object>"):
            if tag in valid:
                return valid.replace(tag, "", 1)
        return None

    def unclosed_ground():
        return valid + "<ground>dangling"

    def bare_object():
        return valid + "<object><region0></object>"

    def stray_close():
        return "</ground>" + valid

    def whitespace_tag():
        if "<region" in valid:
            return valid.replace("<region", "<region ", 1)
        return valid + "<region 1>"

    def out_of_range():
        return valid + f"<region{n_regions + 5}>"

    def leading_zero():
        return valid + "<region007>"

    def duplicate_in_object():
        i = valid.find("<object><region")
        if i == -1:
            return None
        j = valid.find(">", i + len("<object>"))
        ref = valid[i + len("<object>") : j + 1]
        return valid[: j + 1] + ref + valid[j + 1 :]

    def empty_object():
        return valid + "<ground>x</ground><object></object>"

    def unknown_tag():
        return valid + "<zzz>"

    def ground_without_object():
        return valid + "<ground>x</ground> trailing"

    def truncate_mid_tag():
        i = valid.find("<")
        if i == -1:
            return None
        return valid[: i + 2]

    def nested_ground():
        i = valid.find("<ground>")
        if i == -1:
            return None
        return valid[: i + len("<ground>")] + "<ground>" + valid[i + len("<ground>") :]

    strategies = [
        drop_closing,
        unclosed_ground,
        bare_object,
        stray_close,
        whitespace_tag,
        out_of_range,
        leading_zero,
        duplicate_in_object,
        empty_object,
        unknown_tag,
        ground_without_object,
        truncate_mid_tag,
        nested_ground,
    ]
    order = rng.permutation(len(strategies))
    for idx in order:
        mutant = strategies[idx]()
        if mutant is not None and mutant != valid:
            return mutant
    return valid + "<"  # lone '<' can never start a tag


def random_valid_string(rng: np.random.Generator, n_regions: int = 16) -> str:
    return serialize_grounded(random_response(rng, n_regions))
