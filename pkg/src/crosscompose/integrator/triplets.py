"""Triplet data pipeline: build (content, style, stylized) records with an
external stylizer, filter them, and read/write the line-delimited manifests.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ..core import ImagePlane
from .features import PromptFeature, StyleTriplet, TripletRecord, cosine_similarity

log = logging.getLogger(__name__)

# Reason codes for rejected training data:
#   a - content inconsistency, b - style discrepancy, c - substandard visual quality
REASON_CONTENT = "a"
REASON_STYLE = "b"
REASON_QUALITY = "c"


@dataclass(frozen=True)
class FilterThresholds:
    content_min_cosine: float = 0.6
    style_min_score: float = 0.3


@dataclass
class FilterOutcome:
    kept: list[TripletRecord]
    rejected: list[tuple[TripletRecord, list[str]]]
    review_rows: list[dict] = field(default_factory=list)


def build_triplets(
    contents: Sequence[tuple[str, ImagePlane]],
    styles: Sequence[tuple[str, ImagePlane]],
    stylizer: Callable[[ImagePlane, ImagePlane], np.ndarray | ImagePlane],
    encoder: Callable[[ImagePlane], PromptFeature],
    stylizer_id: str = "external",
) -> list[TripletRecord]:
    """Run the stylizer over the content x style grid and encode each triple.

    A stylizer failure skips only that pair (logged); a stylized output with
    invalid pixels is kept as a record without features so the filter can
    reject it explicitly for quality.
    """
    records: list[TripletRecord] = []
    for content_id, content in contents:
        f_c = encoder(content).retag("image_content")
        for style_id, style in styles:
            try:
                stylized_raw = stylizer(content, style)
            except Exception:  # noqa: BLE001 - one bad pair must not sink the batch
                log.warning("stylizer failed for pair (%s, %s); skipped", content_id, style_id, exc_info=True)
                continue
            f_s = encoder(style).retag("image_style")
            pixels = stylized_raw.pixels if isinstance(stylized_raw, ImagePlane) else np.asarray(stylized_raw)
            record = TripletRecord(
                content_id=content_id,
                style_id=style_id,
                stylizer_id=stylizer_id,
                stylized_pixels=pixels,
            )
            try:
                stylized = stylized_raw if isinstance(stylized_raw, ImagePlane) else ImagePlane(pixels)
                f_l = encoder(stylized).retag("integrated")
                record.features = StyleTriplet(f_c, f_s, f_l)
            except ValueError:
                log.warning("stylized output for (%s, %s) is not a valid image; left unencoded", content_id, style_id)
            records.append(record)
    return records


def _quality_flags(pixels: np.ndarray | None) -> bool:
    """True when the stylized output shows artifact signatures."""
    if pixels is None:
        return True
    arr = np.asarray(pixels, dtype=np.float64)
    if not np.isfinite(arr).all():
        return True
    if arr.min() < -1e-6 or arr.max() > 1.0 + 1e-6:
        return True
    if arr.std() < 1e-4:  # collapsed to a near-constant image
        return True
    return False


def filter_triplets(
    records: Iterable[TripletRecord],
    thresholds: FilterThresholds | None = None,
    style_scorer: Callable[[TripletRecord], float] | None = None,
) -> FilterOutcome:
    """Automatic pre-filter with per-record reasons and a review manifest.

    These checks are proxies meant to queue candidates for a final manual
    pass, not to replace it: content keeps triplets whose stylized feature
    still resembles the content feature, style scores the stylized output
    against the style reference (feature cosine unless a scorer is supplied),
    and quality rejects non-finite/degenerate outputs.
    """
    thresholds = thresholds or FilterThresholds()
    kept: list[TripletRecord] = []
    rejected: list[tuple[TripletRecord, list[str]]] = []
    review_rows: list[dict] = []

    for rec in records:
        reasons: list[str] = []
        scores: dict = {}

        if _quality_flags(rec.stylized_pixels) or rec.features is None:
            reasons.append(REASON_QUALITY)
        else:
            content_score = cosine_similarity(rec.features.f_c.flat(), rec.features.f_l.flat())
            scores["content_cosine"] = content_score
            if content_score < thresholds.content_min_cosine:
                reasons.append(REASON_CONTENT)

            if style_scorer is not None:
                style_score = float(style_scorer(rec))
            else:
                style_score = cosine_similarity(rec.features.f_s.flat(), rec.features.f_l.flat())
            scores["style_score"] = style_score
            if style_score < thresholds.style_min_score:
                reasons.append(REASON_STYLE)

        if reasons:
            rejected.append((rec, reasons))
        else:
            kept.append(rec)
        review_rows.append(
            {
                "content_id": rec.content_id,
                "style_id": rec.style_id,
                "stylizer_id": rec.stylizer_id,
                "keep": not reasons,
                "reasons": reasons,
                "scores": scores,
            }
        )
    return FilterOutcome(kept=kept, rejected=rejected, review_rows=review_rows)


# ---------------------------------------------------------------------------
# Manifests: one JSON record per line


def write_triplet_manifest(records: Iterable[TripletRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "content_id": rec.content_id,
                        "style_id": rec.style_id,
                        "stylizer_id": rec.stylizer_id,
                        "content_path": rec.content_path,
                        "style_path": rec.style_path,
                        "stylized_path": rec.stylized_path,
                    }
                )
                + "\n"
            )


def read_triplet_manifest(path: str | Path) -> list[dict]:
    rows = []
    with Path(path).open() as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"malformed triplet manifest line {line_no}: {e}") from e
            missing = {"content_path", "style_path", "stylized_path"} - set(row)
            if missing:
                raise ValueError(f"triplet manifest line {line_no} missing fields: {sorted(missing)}")
            rows.append(row)
    return rows


def write_review_manifest(outcome: FilterOutcome, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for row in outcome.review_rows:
            fh.write(json.dumps(row) + "\n")
