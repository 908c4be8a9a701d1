"""Command-line entry points: compose, train-mlp, eval, serve.

The CLI is a thin shell; every behavior is reachable through the library with
identical results. Exit codes: 0 success, 1 runtime failure, 2 invalid
arguments or inputs, 3 backbone unavailable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import benchkit, imageio
from .backbone import load_backbone
from .core import PipelineConfig, Placement
from .errors import BackboneUnavailableError
from .integrator import (
    IntegratorModel,
    StyleTriplet,
    TrainerConfig,
    read_triplet_manifest,
    train_integrator,
)
from .pipeline import CompositionJob, compose_detailed


class CliInputError(ValueError):
    """Bad input files or argument values; maps to exit code 2."""


def _parse_place(text: str) -> Placement:
    parts = text.split(",")
    if len(parts) != 3:
        raise CliInputError(f"--place expects 'x,y,scale', got {text!r}")
    try:
        return Placement(offset_x=int(parts[0]), offset_y=int(parts[1]), scale=float(parts[2]))
    except ValueError as e:
        raise CliInputError(f"invalid --place {text!r}: {e}") from e


def _load_model(path: str | None, backbone) -> IntegratorModel:
    if path:
        if not Path(path).exists():
            raise CliInputError(f"model file not found: {path}")
        return IntegratorModel.load(path)
    p = backbone.profile
    return IntegratorModel.zero(p.token_count, p.token_dim, max(p.token_dim, 64))


def cmd_compose(args) -> int:
    backbone = load_backbone(args.backbone)
    model = _load_model(args.model, backbone)
    try:
        bg = imageio.load_image(args.bg)
        fg = imageio.load_image(args.fg)
        fg_mask = imageio.load_mask(args.fg_mask, "fg_object")
        bg_box = imageio.load_mask(args.bg_box, "bg_box") if args.bg_box else None
    except (FileNotFoundError, ValueError, OSError) as e:
        raise CliInputError(f"cannot load inputs: {e}") from e

    cfg = PipelineConfig(
        steps_invert=args.steps,
        steps_denoise=args.steps,
        inject_steps=args.inject_steps,
        lambda_init=args.lambda_init,
        lambda_diffusion=args.lambda_diff,
        dilation_radius_px=args.dilation_radius,
        seed=args.seed,
        use_image_clip=not args.no_image_clip,
        use_init_blend=not args.no_init_blend,
        use_inversion=not args.no_inversion,
        full_diffusion=args.full_diffusion,
    )
    job = CompositionJob(
        bg=bg, fg=fg, fg_mask=fg_mask, placement=_parse_place(args.place), cfg=cfg, bg_box=bg_box, prompt=args.prompt
    )
    try:
        job.validate()
    except ValueError as e:
        raise CliInputError(str(e)) from e

    run = compose_detailed(job, backbone, model)
    out = Path(args.out)
    imageio.save_image(run.image, out)
    imageio.save_image(run.preview, out.with_suffix(".preview.png"))
    out.with_suffix(".trace.jsonl").write_text(run.trace.to_jsonl())
    print(f"wrote {out} (config {run.config_hash[:12]}, {run.trace.count('denoiser')} denoiser calls)")
    return 0


def cmd_train_mlp(args) -> int:
    backbone = load_backbone(args.backbone)
    try:
        rows = read_triplet_manifest(args.triplets)
    except (FileNotFoundError, ValueError, OSError) as e:
        raise CliInputError(f"cannot read triplet manifest: {e}") from e

    base = Path(args.triplets).parent
    triplets = []
    for row in rows:
        def resolve(p):
            cand = Path(p)
            return cand if cand.exists() else base / p

        try:
            f_c = backbone.image_features(imageio.load_image(resolve(row["content_path"]))).retag("image_content")
            f_s = backbone.image_features(imageio.load_image(resolve(row["style_path"]))).retag("image_style")
            f_l = backbone.image_features(imageio.load_image(resolve(row["stylized_path"]))).retag("integrated")
        except (FileNotFoundError, ValueError, OSError) as e:
            raise CliInputError(f"cannot load triplet images for {row.get('content_id')}: {e}") from e
        triplets.append(StyleTriplet(f_c, f_s, f_l))

    hyper = TrainerConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        val_fraction=args.val_split,
        seed=args.seed,
        direct=args.direct,
        hidden_width=args.hidden,
    )
    result = train_integrator(triplets, hyper)
    result.model.save(args.out_model)
    if args.loss_curve:
        curve = Path(args.loss_curve)
        curve.parent.mkdir(parents=True, exist_ok=True)
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{h['epoch']},{h['train_loss']:.8g},{h['val_loss']:.8g}" for h in result.history]
        curve.write_text("\n".join(lines) + "\n")
    print(
        f"trained {result.model.metadata['variant']} integrator on {len(triplets)} triplets: "
        f"train {result.train_loss:.6g}, val {result.val_loss:.6g} -> {args.out_model}"
    )
    return 0


def cmd_eval(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.exists():
        raise CliInputError(f"manifest not found: {manifest_path}")
    scorers = benchkit.mock_registry() if args.mock_scorers else {"psnr": "builtin"}
    report = benchkit.evaluate_run(args.results, manifest_path, scorers, method=args.method)
    print(benchkit.render_comparison([report]))
    if report.missing:
        print(f"missing results for {len(report.missing)} samples: {', '.join(report.missing)}", file=sys.stderr)
    if args.out:
        prefix = Path(args.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        Path(f"{prefix}.json").write_text(json.dumps(report.to_dict(), indent=2))
        Path(f"{prefix}.csv").write_text(report.to_csv())
        print(f"wrote {prefix}.json and {prefix}.csv")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    backbone = load_backbone(args.backbone)
    app = create_app(backbone=backbone, workers=args.workers, queue_limit=args.queue_limit, runs_dir=args.runs_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crosscompose", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compose", help="compose a foreground into a background")
    c.add_argument("--bg", required=True)
    c.add_argument("--fg", required=True)
    c.add_argument("--fg-mask", required=True)
    c.add_argument("--bg-box", default=None)
    c.add_argument("--place", default="0,0,1.0", help="offset_x,offset_y,scale in background pixels")
    c.add_argument("--prompt", default=None)
    c.add_argument("--steps", type=int, default=10)
    c.add_argument("--inject-steps", type=int, default=5)
    c.add_argument("--lambda-init", type=float, default=1.0)
    c.add_argument("--lambda-diff", type=float, default=0.1)
    c.add_argument("--dilation-radius", type=int, default=15)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--backbone", choices=("toy", "sdxl"), default="toy")
    c.add_argument("--model", default=None, help="trained integrator .npz (default: zero model)")
    c.add_argument("--no-image-clip", action="store_true")
    c.add_argument("--no-init-blend", action="store_true")
    c.add_argument("--no-inversion", action="store_true")
    c.add_argument("--full-diffusion", action="store_true")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compose)

    t = sub.add_parser("train-mlp", help="train the residual integrator on a triplet manifest")
    t.add_argument("--triplets", required=True)
    t.add_argument("--val-split", type=float, default=0.1)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--hidden", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--backbone", choices=("toy", "sdxl"), default="toy")
    variant = t.add_mutually_exclusive_group()
    variant.add_argument("--residual", dest="direct", action="store_false")
    variant.add_argument("--direct", dest="direct", action="store_true")
    t.set_defaults(direct=False)
    t.add_argument("--out-model", required=True)
    t.add_argument("--loss-curve", default=None)
    t.set_defaults(func=cmd_train_mlp)

    e = sub.add_parser("eval", help="score a results directory against a benchmark manifest")
    e.add_argument("--results", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--method", default="ours")
    e.add_argument("--mock-scorers", action="store_true", help="use fixed-value scorers (hermetic)")
    e.add_argument("--out", default=None, help="report path prefix (.json/.csv)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("serve", help="run the composition HTTP service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8185)
    s.add_argument("--backbone", choices=("toy", "sdxl"), default="toy")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--queue-limit", type=int, default=8)
    s.add_argument("--runs-dir", default=None)
    s.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except CliInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except BackboneUnavailableError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except Exception as e:  # noqa: BLE001 - runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
