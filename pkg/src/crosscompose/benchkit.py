"""Benchmark manifests, the metric protocol, and report generation.

Manifests are line-delimited JSON, one sample per line. Perceptual scorers
(LPIPS, CSD, CLIP, FID, ArtFID) are external capabilities plugged in through a
registry; the kit ships mock scorers so the whole protocol can run hermetically
and a built-in exact PSNR.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import imageio
from .core import ImagePlane, MaskPlane, grow_window, resize_mask_to
from .core import _bilinear_resample, _nearest_indices

PSNR_CAP_DB = 100.0
CLIP_T_SCOPES = ("global", "local")
PAIR_METRICS = ("lpips", "csd", "clip_i")
POOL_METRICS = ("fid", "artfid")


class UndefinedRegionError(ValueError):
    """The metric's region of interest is empty."""


@dataclass(frozen=True)
class BenchmarkSample:
    id: str
    bg_path: str
    fg_path: str
    bg_box_path: str
    fg_mask_path: str
    prompt: str | None = None
    domain_tags: tuple[str, ...] = ()
    clip_t_scope: str = "local"

    def __post_init__(self):
        if self.clip_t_scope not in CLIP_T_SCOPES:
            raise ValueError(f"clip_t_scope must be one of {CLIP_T_SCOPES}, got {self.clip_t_scope!r}")


@dataclass
class ManifestLoadResult:
    samples: list[BenchmarkSample]
    errors: list[tuple[int, str]]

    @property
    def counts(self) -> dict:
        return {"loaded": len(self.samples), "malformed": len(self.errors)}


def load_manifest(path: str | Path, validate_paths: bool = True) -> ManifestLoadResult:
    """Parse a JSONL manifest; malformed rows are collected, never fatal."""
    path = Path(path)
    samples: list[BenchmarkSample] = []
    errors: list[tuple[int, str]] = []
    base = path.parent
    with path.open() as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                errors.append((line_no, f"invalid JSON: {e}"))
                continue
            missing = {"id", "bg_path", "fg_path", "bg_box_path", "fg_mask_path"} - set(row)
            if missing:
                errors.append((line_no, f"missing fields: {sorted(missing)}"))
                continue
            try:
                sample = BenchmarkSample(
                    id=str(row["id"]),
                    bg_path=row["bg_path"],
                    fg_path=row["fg_path"],
                    bg_box_path=row["bg_box_path"],
                    fg_mask_path=row["fg_mask_path"],
                    prompt=row.get("prompt"),
                    domain_tags=tuple(row.get("domain_tags", ())),
                    clip_t_scope=row.get("clip_t_scope", "local"),
                )
            except ValueError as e:
                errors.append((line_no, str(e)))
                continue
            if validate_paths:
                unresolved = [
                    p
                    for p in (sample.bg_path, sample.fg_path, sample.bg_box_path, sample.fg_mask_path)
                    if not (base / p).exists() and not Path(p).exists()
                ]
                if unresolved:
                    errors.append((line_no, f"unresolvable paths: {unresolved}"))
                    continue
            samples.append(sample)
    return ManifestLoadResult(samples, errors)


def write_manifest(samples: Iterable[BenchmarkSample], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "id": s.id,
                        "bg_path": s.bg_path,
                        "fg_path": s.fg_path,
                        "bg_box_path": s.bg_box_path,
                        "fg_mask_path": s.fg_mask_path,
                        "prompt": s.prompt,
                        "domain_tags": list(s.domain_tags),
                        "clip_t_scope": s.clip_t_scope,
                    }
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# Metrics


def psnr_outside_box(result: ImagePlane, bg: ImagePlane, bg_box: MaskPlane) -> float:
    """PSNR over the complement of the box; identical images report the cap."""
    if result.shape_hw != bg.shape_hw or bg_box.shape_hw != bg.shape_hw:
        raise ValueError("result, background and box must share dimensions")
    outside = ~bg_box.bits
    if not outside.any():
        raise UndefinedRegionError("bg_box covers the entire frame; PSNR region is empty")
    diff = result.pixels[outside] - bg.pixels[outside]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / mse)))


def crop_to_box(img: ImagePlane, box: MaskPlane, min_edge: int = 8) -> ImagePlane:
    """Cut out exactly the box rectangle (grown to the minimum decodable size)."""
    r0, c0, r1, c1 = box.bbox()
    r0, r1 = grow_window(r0, r1, img.height, min_edge)
    c0, c1 = grow_window(c0, c1, img.width, min_edge)
    return ImagePlane(img.pixels[r0:r1, c0:c1].copy())


def hybrid_paste(bg: ImagePlane, fg: ImagePlane, fg_mask: MaskPlane, bg_box: MaskPlane) -> ImagePlane:
    """Direct paste reference: the foreground resized into the box rectangle."""
    r0, c0, r1, c1 = bg_box.bbox()
    dims = (r1 - r0, c1 - c0)
    ridx = _nearest_indices(fg.height, dims[0])
    cidx = _nearest_indices(fg.width, dims[1])
    fg_px = fg.pixels[np.ix_(ridx, cidx)]
    bits = resize_mask_to(fg_mask, dims).bits
    out = bg.pixels.copy()
    window = out[r0:r1, c0:c1]
    window[bits] = fg_px[bits]
    return ImagePlane(out)


def resample_for_scorer(img: ImagePlane, size: int) -> ImagePlane:
    """Bilinear resample to the square input a perceptual scorer expects."""
    return ImagePlane(np.clip(_bilinear_resample(img.pixels, (size, size)), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Scorer registry


class MockPairScorer:
    """Fixed-value stand-in for an external pairwise model; keeps CI hermetic."""

    kind = "pair"

    def __init__(self, value: float, name: str = "mock"):
        self.value = float(value)
        self.config_id = f"mock-pair:{name}:{value}"

    def __call__(self, a: ImagePlane, b: ImagePlane) -> float:
        return self.value


class MockTextScorer:
    kind = "text"

    def __init__(self, value: float, name: str = "mock"):
        self.value = float(value)
        self.config_id = f"mock-text:{name}:{value}"

    def __call__(self, img: ImagePlane, text: str) -> float:
        return self.value


class MockPoolScorer:
    kind = "pool"

    def __init__(self, value: float, name: str = "mock"):
        self.value = float(value)
        self.config_id = f"mock-pool:{name}:{value}"

    def __call__(self, pool_a: Sequence[ImagePlane], pool_b: Sequence[ImagePlane]) -> float:
        return self.value


class RmsePairScorer:
    """Simple built-in pair scorer (root mean squared difference); useful for
    self-distance checks where an external perceptual model is overkill."""

    kind = "pair"
    config_id = "builtin-rmse"

    def __call__(self, a: ImagePlane, b: ImagePlane) -> float:
        if a.shape_hw != b.shape_hw:
            b = ImagePlane(np.clip(_bilinear_resample(b.pixels, a.shape_hw), 0.0, 1.0))
        return float(np.sqrt(np.mean((a.pixels - b.pixels) ** 2)))


class ExternalScorerStub:
    """Placeholder registry entry for a real perceptual model adapter.

    Carries only identity; calling it reports the capability as missing so a
    row still renders with the metric marked unavailable.
    """

    def __init__(self, name: str, kind: str):
        self.kind = kind
        self.name = name
        self.config_id = f"external-stub:{name}"

    def __call__(self, *args, **kwargs):
        raise RuntimeError(f"scorer {self.name!r} requires an external model adapter")


def mock_registry(values: dict[str, float] | None = None) -> dict:
    """A full registry of mock scorers (plus the real PSNR, which is built in)."""
    values = values or {}
    return {
        "lpips": MockPairScorer(values.get("lpips", 0.4), "lpips"),
        "csd": MockPairScorer(values.get("csd", 0.5), "csd"),
        "clip_i": MockPairScorer(values.get("clip_i", 0.7), "clip_i"),
        "clip_t": MockTextScorer(values.get("clip_t", 30.0), "clip_t"),
        "fid": MockPoolScorer(values.get("fid", 10.0), "fid"),
        "artfid": MockPoolScorer(values.get("artfid", 15.0), "artfid"),
        "psnr": "builtin",
    }


# ---------------------------------------------------------------------------
# Scoring


@dataclass
class SampleAssets:
    bg: ImagePlane
    fg: ImagePlane
    bg_box: MaskPlane
    fg_mask: MaskPlane
    hybrid: ImagePlane


def load_sample_assets(sample: BenchmarkSample, base: Path | None = None) -> SampleAssets:
    def resolve(p: str) -> Path:
        cand = Path(p)
        if cand.exists() or base is None:
            return cand
        return base / p

    bg = imageio.load_image(resolve(sample.bg_path))
    fg = imageio.load_image(resolve(sample.fg_path))
    bg_box = imageio.load_mask(resolve(sample.bg_box_path), "bg_box")
    fg_mask = imageio.load_mask(resolve(sample.fg_mask_path), "fg_object")
    return SampleAssets(bg, fg, bg_box, fg_mask, hybrid_paste(bg, fg, fg_mask, bg_box))


def score_sample(sample: BenchmarkSample, result: ImagePlane, scorers: dict, assets: SampleAssets | None = None,
                 base: Path | None = None) -> dict:
    """One metric row. Metrics without a working scorer are marked unavailable.

    Region conventions: LPIPS compares result vs direct-paste hybrid inside
    the box; CSD compares result vs background globally; CLIP-T crops to the
    box when the sample's scope is local; CLIP-I compares the box crop vs the
    foreground; PSNR runs outside the box.
    """
    assets = assets or load_sample_assets(sample, base)
    row: dict = {"id": sample.id, "metrics": {}, "unavailable": []}

    def attempt(name: str, fn):
        scorer = scorers.get(name)
        if scorer is None:
            row["unavailable"].append(name)
            return
        try:
            row["metrics"][name] = float(fn(scorer))
        except Exception:  # noqa: BLE001 - a dead scorer must not kill the row
            row["unavailable"].append(name)

    box_crop_result = crop_to_box(result, assets.bg_box)
    box_crop_hybrid = crop_to_box(assets.hybrid, assets.bg_box)

    attempt("psnr", lambda _s: psnr_outside_box(result, assets.bg, assets.bg_box))
    attempt("lpips", lambda s: s(box_crop_result, box_crop_hybrid))
    attempt("csd", lambda s: s(result, assets.bg))
    attempt("clip_i", lambda s: s(box_crop_result, assets.fg))
    if sample.prompt:
        target = box_crop_result if sample.clip_t_scope == "local" else result
        attempt("clip_t", lambda s: s(target, sample.prompt))
    else:
        row["unavailable"].append("clip_t")
    return row


# ---------------------------------------------------------------------------
# Reports


@dataclass
class EvalReport:
    method: str
    rows: list[dict]
    aggregates: dict[str, float]
    pool_metrics: dict[str, float]
    missing: list[str]
    config_hash: str

    def verify_aggregates(self) -> bool:
        return self.aggregates == _aggregate(self.rows)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rows": self.rows,
            "aggregates": self.aggregates,
            "pool_metrics": self.pool_metrics,
            "missing": self.missing,
            "config_hash": self.config_hash,
        }

    def to_csv(self) -> str:
        names = sorted({k for r in self.rows for k in r["metrics"]})
        lines = ["id," + ",".join(names)]
        for r in self.rows:
            lines.append(r["id"] + "," + ",".join(_fmt(r["metrics"].get(n)) for n in names))
        lines.append("mean," + ",".join(_fmt(self.aggregates.get(n)) for n in names))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6g}"


def _aggregate(rows: list[dict]) -> dict[str, float]:
    sums: dict[str, list[float]] = {}
    for r in rows:
        for name, v in r["metrics"].items():
            sums.setdefault(name, []).append(v)
    # values are summed in canonical order so the mean is bit-identical for
    # any sample ordering
    return {name: float(np.mean(np.sort(vals))) for name, vals in sorted(sums.items())}


def _registry_hash(scorers: dict) -> str:
    ids = sorted(
        getattr(s, "config_id", str(s)) if not isinstance(s, str) else f"{name}:{s}"
        for name, s in scorers.items()
    )
    payload = json.dumps({"scorers": ids, "crop": "bg_box-rect/bilinear-resample"}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def evaluate_run(
    results_dir: str | Path,
    manifest: str | Path | ManifestLoadResult | Sequence[BenchmarkSample],
    scorers: dict,
    method: str = "ours",
    assets_base: str | Path | None = None,
) -> EvalReport:
    """Score every sample with a result image present; missing ones are flagged
    and excluded from aggregates."""
    results_dir = Path(results_dir)
    base: Path | None = Path(assets_base) if assets_base is not None else None
    if isinstance(manifest, (str, Path)):
        base = base or Path(manifest).parent
        manifest = load_manifest(manifest)
    samples = manifest.samples if isinstance(manifest, ManifestLoadResult) else list(manifest)

    rows: list[dict] = []
    missing: list[str] = []
    result_pool: list[ImagePlane] = []
    hybrid_pool: list[ImagePlane] = []
    for sample in samples:
        result_path = results_dir / f"{sample.id}.png"
        if not result_path.exists():
            missing.append(sample.id)
            continue
        result = imageio.load_image(result_path)
        assets = load_sample_assets(sample, base)
        rows.append(score_sample(sample, result, scorers, assets=assets))
        result_pool.append(crop_to_box(result, assets.bg_box))
        hybrid_pool.append(crop_to_box(assets.hybrid, assets.bg_box))

    pool_metrics: dict[str, float] = {}
    for name in POOL_METRICS:
        scorer = scorers.get(name)
        if scorer is None or isinstance(scorer, str) or not rows:
            continue
        try:
            pool_metrics[name] = float(scorer(result_pool, hybrid_pool))
        except Exception:  # noqa: BLE001
            pass

    return EvalReport(
        method=method,
        rows=rows,
        aggregates=_aggregate(rows),
        pool_metrics=pool_metrics,
        missing=missing,
        config_hash=_registry_hash(scorers),
    )


def relative_improvement(baseline: float, ours: float, lower_is_better: bool = True) -> float:
    """Fractional improvement of ``ours`` over ``baseline``."""
    if baseline == 0:
        raise ValueError("baseline value must be nonzero")
    if lower_is_better:
        return (baseline - ours) / baseline
    return (ours - baseline) / baseline


def render_comparison(reports: Sequence[EvalReport], digits: int = 4) -> str:
    """Plain-text side-by-side table over shared metrics, pool metrics included."""
    names = sorted({k for rep in reports for k in (*rep.aggregates, *rep.pool_metrics)})
    width = max((len(r.method) for r in reports), default=6) + 2
    header = "metric".ljust(12) + "".join(r.method.rjust(width) for r in reports)
    lines = [header, "-" * len(header)]
    for name in names:
        cells = []
        for rep in reports:
            v = rep.aggregates.get(name, rep.pool_metrics.get(name))
            cells.append(("-" if v is None else f"{v:.{digits}f}").rjust(width))
        lines.append(name.ljust(12) + "".join(cells))
    return "\n".join(lines) + "\n"
