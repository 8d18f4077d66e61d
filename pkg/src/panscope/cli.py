"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/format error. Diagnostics go
to stderr.
"""

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bias import (
    VARIANT_ORIGINAL,
    VARIANT_PAN_REFLECT,
    VARIANT_RAND_REFLECT,
    VARIANT_REFLECT_ALL,
    VariantSpec,
    make_variant,
    run_bias_experiment,
)
from .detector import DetectorConfig, NeuronRef, census, census_trace
from .engine import forward
from .errors import DataError, PanscopeError, UsageError
from .modelio import read_model, write_model
from .plants import (
    PRNG_NAME,
    build_synthetic_network,
    evaluate_detector,
    load_truth,
    make_calibration_batch,
    template_from_json,
    truth_to_json,
)
from .regions import BORDERS, extract_regions, histogram, truncate_centre
from .reports import (
    census_doc,
    census_pan_set,
    eval_doc,
    load_census,
    odds_doc,
    write_json,
    write_log_odds_csv,
    write_region_histograms,
)
from .traceio import read_trace

_VARIANT_NAMES = {
    "original": VARIANT_ORIGINAL,
    "reflect": VARIANT_REFLECT_ALL,
    "pan-reflect": VARIANT_PAN_REFLECT,
    "rand-reflect": VARIANT_RAND_REFLECT,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_synthetic(text: str) -> dict:
    parts = text.split(",")
    if len(parts) != 4:
        raise UsageError(f"--synthetic-batch wants seed,count,height,width, got {text!r}")
    try:
        seed, count, h, w = (int(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"--synthetic-batch wants integers: {exc}") from exc
    if count < 1 or h < 3 or w < 3:
        raise UsageError("--synthetic-batch needs count >= 1 and dims >= 3")
    return {
        "kind": "synthetic",
        "seed": seed,
        "count": count,
        "height": h,
        "width": w,
        "prng": PRNG_NAME,
    }


def _batch_from_descriptor(descriptor: dict, channels: int):
    kind = descriptor.get("kind")
    if kind == "synthetic":
        return make_calibration_batch(
            int(descriptor["seed"]),
            int(descriptor["count"]),
            int(descriptor["height"]),
            int(descriptor["width"]),
            channels,
        )
    if kind == "tensor-file":
        trace = read_trace(descriptor["path"])
        if len(trace.layers) != 1:
            raise DataError(
                f"{descriptor['path']}: a batch container must hold exactly one tensor, "
                f"found {len(trace.layers)}"
            )
        return trace.layers[0][1]
    raise DataError(f"batch descriptor {descriptor!r} is not runnable")


def _theta(value: float) -> DetectorConfig:
    return DetectorConfig(theta=value)


def _parse_neuron(text: str) -> NeuronRef:
    layer, sep, channel = text.rpartition(":")
    if not sep or not layer:
        raise UsageError(f"--neuron wants layer:channel, got {text!r}")
    try:
        return NeuronRef(layer, int(channel))
    except ValueError as exc:
        raise UsageError(f"--neuron channel must be an integer: {exc}") from exc


def _cmd_detect(args) -> int:
    config = _theta(args.theta)
    model = read_model(args.model)
    if args.batch:
        descriptor = {"kind": "tensor-file", "path": args.batch}
    else:
        descriptor = _parse_synthetic(args.synthetic_batch)
    channels = model.layers[0].in_channels if model.layers else 1
    batch = _batch_from_descriptor(descriptor, channels)
    result = census(model, batch, config)
    doc = census_doc(result, descriptor, {"kind": "model-file", "path": args.model})
    write_json(args.out, doc)
    print(f"census: {result.pan_count} PANs / {result.neuron_count} neurons -> {args.out}")
    return 0


def _cmd_detect_trace(args) -> int:
    config = _theta(args.theta)
    trace = read_trace(args.trace)
    result = census_trace(trace, config)
    doc = census_doc(
        result,
        {"kind": "trace", "path": args.trace},
        {"kind": "trace", "model_name": trace.model_name},
    )
    write_json(args.out, doc)
    print(f"census: {result.pan_count} PANs / {result.neuron_count} neurons -> {args.out}")
    return 0


def _split_out_pair(text: str) -> tuple[str, str]:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError(f"--out wants model.json,truth.json, got {text!r}")
    return parts[0], parts[1]


def _cmd_plant(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.spec}: invalid JSON: {exc}") from exc
    template, plants = template_from_json(doc)
    model_path, truth_path = _split_out_pair(args.out)
    model, truth = build_synthetic_network(template, plants, args.seed)
    weights_path = write_model(model, model_path)
    write_json(truth_path, truth_to_json(truth, model.name))
    print(f"planted model -> {model_path} (+ {weights_path}), truth -> {truth_path}")
    return 0


def _cmd_evaluate(args) -> int:
    config = _theta(args.theta)
    model = read_model(args.model)
    truth = load_truth(args.truth)
    if args.synthetic_batch:
        descriptor = _parse_synthetic(args.synthetic_batch)
    else:
        calib = truth.calibration
        if not calib:
            raise DataError(f"{args.truth} has no calibration descriptor; pass --synthetic-batch")
        descriptor = {
            "kind": "synthetic",
            "seed": calib["seed"],
            "count": calib["batch"],
            "height": calib["height"],
            "width": calib["width"],
        }
    channels = model.layers[0].in_channels if model.layers else 1
    batch = _batch_from_descriptor(descriptor, channels)
    report = evaluate_detector(model, truth, batch, config)
    doc = eval_doc(report)
    if args.out:
        write_json(args.out, doc)
        print(f"precision={report.precision} recall={report.recall} -> {args.out}")
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_bias(args) -> int:
    model = read_model(args.model)
    if model.head is None:
        raise DataError(f"{args.model}: bias experiments need a model with a head")
    census_json = load_census(args.census)
    pan_set = census_pan_set(census_json)
    kind = _VARIANT_NAMES[args.variant]
    spec = VariantSpec(kind=kind, pan_set=pan_set, seed=args.seed)
    descriptor = (
        _parse_synthetic(args.synthetic_batch)
        if args.synthetic_batch
        else census_json["config"]["batch"]
    )
    channels = model.layers[0].in_channels if model.layers else 1
    batch = _batch_from_descriptor(descriptor, channels)
    report = run_bias_experiment(model, spec, batch, cut=args.cut, bins=args.bins)
    census_ref = {"path": args.census, "theta": census_json.get("config", {}).get("theta")}
    doc = odds_doc(report, descriptor, {"kind": "model-file", "path": args.model}, census_ref)
    write_json(args.out, doc)
    hist_path = args.hist_csv or (args.out + ".hist.csv")
    write_log_odds_csv(report, hist_path)
    finite = report.odds.log_odds[np.isfinite(report.odds.log_odds)]
    spread = float(np.std(finite)) if finite.size else 0.0
    print(
        f"odds: variant={args.variant} classes={report.odds.odds.size} "
        f"log-odds std={spread:.6f} -> {args.out}, {hist_path}"
    )
    return 0


def _cmd_hist(args) -> int:
    census_json = load_census(args.census)
    config = census_json.get("config", {})
    model_ref = config.get("model", {})
    if model_ref.get("kind") != "model-file":
        raise DataError(
            f"{args.census}: census was not produced from a model file; "
            "histograms need a runnable model"
        )
    model = read_model(model_ref["path"])
    channels = model.layers[0].in_channels if model.layers else 1
    batch = _batch_from_descriptor(config.get("batch", {}), channels)
    if args.policy == "reflect":
        model = make_variant(model, VariantSpec(kind=VARIANT_REFLECT_ALL))
    neuron = _parse_neuron(args.neuron)
    trace, _ = forward(model, batch, want_logits=False)
    try:
        maps = trace.activations(neuron.layer)
    except KeyError as exc:
        raise DataError(str(exc)) from exc
    if not 0 <= neuron.channel < maps.shape[1]:
        raise DataError(f"channel {neuron.channel} out of range for layer {neuron.layer}")
    regions = extract_regions(maps[:, neuron.channel])
    all_values = np.concatenate(
        [regions.border(b) for b in BORDERS] + [regions.centre]
    )
    lo, hi = float(all_values.min()), float(all_values.max())
    if lo == hi:
        hi = lo + 1e-6
    span = (lo, hi)
    region_bins = {}
    for b in BORDERS:
        region_bins[b] = histogram(regions.border(b), args.bins, span)
    region_bins["centre"] = histogram(regions.centre, args.bins, span)
    trunc = truncate_centre(regions.centre, regions.top.size)
    region_bins["centre_low"] = histogram(trunc.low, args.bins, span)
    region_bins["centre_high"] = histogram(trunc.high, args.bins, span)
    write_region_histograms(region_bins, args.out)
    print(f"histograms for {neuron} -> {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="panscope", description="Padding-aware-neuron diagnostics")
    parser.add_argument("--version", action="version", version=f"panscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run a model and census its neurons")
    p.add_argument("--model", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--batch", help="PANTRACE container holding one input tensor")
    group.add_argument("--synthetic-batch", help="seed,count,height,width")
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("detect-trace", help="census framework-exported activations")
    p.add_argument("--trace", required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_detect_trace)

    p = sub.add_parser("plant", help="build a synthetic network with ground truth")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="model.json,truth.json")
    p.set_defaults(func=_cmd_plant)

    p = sub.add_parser("evaluate", help="score a census against planted ground truth")
    p.add_argument("--model", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--synthetic-batch")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("bias", help="padding-swap odds experiment")
    p.add_argument("--model", required=True)
    p.add_argument("--census", required=True)
    p.add_argument("--variant", required=True, choices=sorted(_VARIANT_NAMES))
    p.add_argument("--seed", type=int)
    p.add_argument("--cut", type=float, default=0.07)
    p.add_argument("--bins", type=int, default=41)
    p.add_argument("--synthetic-batch")
    p.add_argument("--hist-csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_bias)

    p = sub.add_parser("hist", help="per-region activation histograms for one neuron")
    p.add_argument("--census", required=True)
    p.add_argument("--neuron", required=True, help="layer:channel")
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--policy", choices=["zero", "reflect"], default="zero",
                   help="reflect recomputes with every layer switched to reflect")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_hist)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"panscope: usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"panscope: error: {exc}", file=sys.stderr)
        return 2
    except PanscopeError as exc:
        print(f"panscope: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"panscope: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
