"""CLI: panexport (activation traces) and panexport-infer (JSONL dumps)."""

import argparse
import sys

import torch

from .capture import export_activations
from .images import load_batch
from .inference import run_variant_inference
from .models import ZOO, build_model
from .variants import load_census_pan_set, make_variant

_VARIANT_NAMES = {
    "original": "original",
    "reflect": "reflect_all",
    "reflect-all": "reflect_all",
    "pan-reflect": "pan_reflect",
    "rand-reflect": "rand_reflect",
}


def _add_common(parser):
    parser.add_argument("--model", required=True, help=f"toy2 or one of {', '.join(ZOO)}")
    parser.add_argument("--images", required=True, help="folder of input images")
    parser.add_argument("--variant", default="original", choices=sorted(_VARIANT_NAMES))
    parser.add_argument("--census", help="pan-census JSON (needed for pan-reflect)")
    parser.add_argument("--seed", type=int, help="control-set seed (rand-reflect)")
    parser.add_argument("--weights", help="local state-dict file")
    parser.add_argument("--pretrained", action="store_true", help="fetch zoo weights")
    parser.add_argument("--image-size", type=int, default=224)
    parser.add_argument("--normalize", choices=["imagenet", "none"], default="imagenet")
    parser.add_argument("--limit", type=int, help="cap the number of images")
    parser.add_argument("--out", required=True)


def _prepare(args):
    torch.manual_seed(0)
    model = build_model(args.model, weights_path=args.weights, pretrained=args.pretrained)
    kind = _VARIANT_NAMES[args.variant]
    pan_set = None
    if kind in ("pan_reflect", "rand_reflect"):
        if not args.census:
            raise ValueError(f"{args.variant} needs --census")
        pan_set = load_census_pan_set(args.census)
    variant = make_variant(model, kind, pan_set=pan_set, seed=args.seed)
    batch, paths = load_batch(
        args.images, size=args.image_size, normalize=args.normalize, limit=args.limit
    )
    return variant, batch, paths


def main_export(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="panexport", description="Export conv activations to PANTRACE"
    )
    _add_common(parser)
    try:
        args = parser.parse_args(argv)
        variant, batch, _ = _prepare(args)
        names = export_activations(variant, args.model, batch, args.out)
    except (ValueError, OSError) as exc:
        print(f"panexport: error: {exc}", file=sys.stderr)
        return 2
    print(f"exported {len(names)} layers x {batch.shape[0]} images -> {args.out}")
    return 0


def main_infer(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="panexport-infer", description="Per-image softmax/logit dump (JSON lines)"
    )
    _add_common(parser)
    try:
        args = parser.parse_args(argv)
        variant, batch, paths = _prepare(args)
        count = run_variant_inference(variant, batch, paths, args.out)
    except (ValueError, OSError) as exc:
        print(f"panexport-infer: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {count} records -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main_export())
