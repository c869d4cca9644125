"""Retrieval-based detection decoding.

Detection here is a lookup, not a generation problem: each region token is
scored independently against every category query with a logistic over the
dot product, and any (region, category) pair above the threshold becomes a
detection that reuses the proposal's box verbatim.  A category whose scores
all stay below the threshold yields nothing — rejection is the default
outcome, not an error.  Counting is decode-then-count: decode detections
for the category, report their cardinality.

There is no non-maximum suppression; proposals are assumed to come from a
detector that already deduplicates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roialign import Box
from .regionenc import RegionToken
from .tokenproto import GroundedResponse, GroundedSpan

__all__ = [
    "CategoryQuery",
    "Detection",
    "score_regions",
    "score_matrix",
    "decode_detections",
    "detect_then_count",
    "grounded_to_detections",
    "detections_to_json",
    "emit_grounded_summary",
]


@dataclass(frozen=True)
class CategoryQuery:
    """A named category with its learned token-space embedding."""

    name: str
    embedding: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.embedding)):
            raise ValueError("query embedding must be finite")


@dataclass(frozen=True)
class Detection:
    """One decoded detection; the box is always the source proposal's box."""

    box: Box
    label: str
    confidence: float
    source_region: int


def _logistic(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def score_matrix(token_embeddings: np.ndarray, query_embeddings: np.ndarray) -> np.ndarray:
    """(N, Q) logistic scores from raw embedding matrices."""
    t = np.atleast_2d(token_embeddings)
    q = np.atleast_2d(query_embeddings)
    if t.shape[1] != q.shape[1]:
        raise ValueError(f"token dim {t.shape[1]} does not match query dim {q.shape[1]}")
    return _logistic(t @ q.T)


def score_regions(tokens: list[RegionToken], queries: list[CategoryQuery]) -> np.ndarray:
    """Score every region token against every category query; entries in [0, 1]."""
    t = np.stack([tok.embedding for tok in tokens])
    q = np.stack([qr.embedding for qr in queries])
    names = [qr.name for qr in queries]
    if len(set(names)) != len(names):
        raise ValueError("query names must be unique")
    return score_matrix(t, q)


def decode_detections(
    scores: np.ndarray,
    proposals: list[Box],
    queries: list[CategoryQuery],
    threshold: float = 0.5,
) -> list[Detection]:
    """One detection per (region, query) score strictly above the threshold.

    Output is ordered by confidence descending, ties broken by lower region
    index then query order.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    scores = np.atleast_2d(scores)
    if scores.shape != (len(proposals), len(queries)):
        raise ValueError("score matrix shape must be (n_proposals, n_queries)")
    hits = []
    for i in range(scores.shape[0]):
        for q in range(scores.shape[1]):
            s = float(scores[i, q])
            if s > threshold:
                hits.append((-s, i, q))
    hits.sort()
    return [
        Detection(box=proposals[i], label=queries[q].name, confidence=-neg, source_region=i)
        for neg, i, q in hits
    ]


def detect_then_count(
    scores: np.ndarray, proposals: list[Box], query: CategoryQuery, threshold: float = 0.5
) -> int:
    """Count instances of one category by decoding first, then aggregating."""
    dets = decode_detections(scores, proposals, [query], threshold)
    return len(dets)


def grounded_to_detections(
    resp: GroundedResponse, proposals: list[Box], phrase_to_label: dict[str, str] | None = None
) -> list[Detection]:
    """Turn each grounded span's region references into confidence-1.0 detections.

    Labels come from ``phrase_to_label`` when given, else the phrase itself.
    """
    out = []
    for node in resp.nodes:
        if not isinstance(node, GroundedSpan):
            continue
        label = phrase_to_label.get(node.phrase, node.phrase) if phrase_to_label else node.phrase
        for idx in node.regions:
            if idx >= len(proposals):
                raise ValueError(f"region index {idx} out of range for {len(proposals)} proposals")
            out.append(Detection(box=proposals[idx], label=label, confidence=1.0, source_region=idx))
    return out


def detections_to_json(detections: list[Detection], image_id: int) -> list[dict]:
    """COCO-result-style records: normalized [x, y, w, h] boxes plus score."""
    return [
        {
            "image_id": image_id,
            "category": d.label,
            "bbox": [d.box.x1, d.box.y1, d.box.width, d.box.height],
            "score": d.confidence,
        }
        for d in detections
    ]


def emit_grounded_summary(detections: list[Detection]) -> str:
    """Template emitter: render detections as one grounded sentence per category.

    Categories appear in first-detection order; regions within a span are
    ordered by region index.
    """
    by_label: dict[str, list[int]] = {}
    for d in detections:
        by_label.setdefault(d.label, []).append(d.source_region)
    parts = []
    for label, regions in by_label.items():
        refs = "".join(f"<region{r}>" for r in sorted(set(regions)))
        parts.append(f"<ground>{label}</ground><object>{refs}</object>")
    if not parts:
        return "nothing detected"
    return "found " + " ".join(parts)
