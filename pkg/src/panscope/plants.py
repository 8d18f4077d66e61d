"""Synthetic networks with planted ground truth.

Three kinds of plants:

* border-probe kernels engineered so designated borders produce activations
  stochastically separated from every centre value (validated PANs),
* classical edge detectors (Prewitt/Sobel/Laplacian-of-Gaussian), which
  must never pass the truncated-centre gate,
* explicit random redraws, as labelled negatives.

Border probes put probe weight on the kernel cells that overlap the padded
area at a target border and a balancing opposite weight on the middle
row/column, replicated across all input channels. Over non-negative
rectified features the zeroed probe cells then push border outputs far
outside anything the interior produces, so probe plants belong in layers
whose input is rectified (>= 1). The recommended host is a layer fed by a
reflect-padded, sign-paired feature layer: reflect keeps the upstream
layer's own padding artifacts out of the probes (otherwise a top probe
also reads the feature map's border-deficient last row and smears into a
top+bottom type), and sign pairing makes the feature ensemble track the
magnitude of local contrast so sign-flipped image structure cannot mimic
a border.

Ground truth is enforced, not hoped for: the builder verifies every
planted PAN on a calibration batch (fail-fast) and redraws unplanted
neurons that trip the detector - genuinely padding-aware neurons arise in
plain random nets at a few percent, which would otherwise falsify
planted-precision claims.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .detector import (
    VERDICT_EDGE,
    VERDICT_NONE,
    VERDICT_PAN,
    CensusResult,
    DetectorConfig,
    NeuronRef,
    census,
    classify_type,
    score_neuron,
)
from .engine import ConvLayerSpec, ConvNetSpec, LinearHead, Tensor, forward
from .errors import PlantError, UsageError
from .regions import extract_regions

PRNG_NAME = "numpy-pcg64"

EDGE_KINDS = ("prewitt_v", "prewitt_h", "sobel_v", "sobel_h", "log")
PLANT_KINDS = EDGE_KINDS + ("pan", "random")

# fail-fast calibration thresholds for planted PANs
PLANT_SEPARATION = 0.9  # target borders: two-sided and one-sided statistics
PLANT_PURITY = 0.5  # non-target borders must stay below the default theta

# unplanted neurons are redrawn until none trips the detector at this margin
CONDITION_THETA = 0.45
CONDITION_ROUNDS = 12

_EDGE_KERNELS = {
    "prewitt_v": [[-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0]],
    "prewitt_h": [[-1.0, -1.0, -1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]],
    "sobel_v": [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]],
    "sobel_h": [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]],
    "log": [[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]],
}


def make_edge_kernel(kind: str) -> np.ndarray:
    """Canonical 3x3 edge-detector values for the given kind."""
    if kind not in _EDGE_KERNELS:
        raise UsageError(f"unknown edge kernel kind {kind!r}, expected one of {EDGE_KINDS}")
    return np.array(_EDGE_KERNELS[kind], dtype=np.float32)


def make_pan_kernel(borders, size: int = 3) -> tuple[np.ndarray, float]:
    """Border-probe kernel pattern for a border subset; returns (kernel, bias).

    Per target border the pattern puts probe weight on the innermost
    row/column that still overlaps padding at that border, balanced by an
    opposite weight on the middle row/column: the kernel mass cancels
    everywhere except where padding zeroes the probe cells, and the border
    output then rides the whole local activation level. Rows and columns
    outside the probe ring sum to zero, so partially padded outputs (which
    belong to the centre region for kernels wider than 3) see no
    systematic shift. Top/left probes are negative (their borders respond
    high), bottom/right probes positive (respond low); complementary
    subsets collapse into plain first-difference kernels, keeping every
    pattern's border shift large relative to its noise pickup. Sizes
    above 3 spread the same mass over more cells, which improves that
    ratio further; the builder's calibration is the final arbiter.
    """
    if size < 3 or size % 2 == 0:
        raise UsageError(f"PAN kernel size must be odd and >= 3, got {size}")
    name = classify_type(borders)  # validates the subset
    p = size // 2
    q = p - 1  # probe ring: innermost ring fully covered by padding at a border
    pattern = np.zeros((size, size), dtype=np.float64)
    if "T" in name:
        pattern[q, :] -= 1.0
        pattern[p, :] += 1.0
    if "B" in name:
        pattern[size - 1 - q, :] += 1.0
        pattern[p, :] -= 1.0
    if "L" in name:
        pattern[:, q] -= 1.0
        pattern[:, p] += 1.0
    if "R" in name:
        pattern[:, size - 1 - q] += 1.0
        pattern[:, p] -= 1.0
    return pattern.astype(np.float32), 0.0


@dataclass(frozen=True)
class PlantSpec:
    """One planted channel: where it lives and what it is."""

    layer: int
    channel: int
    kind: str
    borders: str = ""

    def __post_init__(self):
        if self.kind not in PLANT_KINDS:
            raise UsageError(f"unknown plant kind {self.kind!r}")
        if self.kind == "pan":
            object.__setattr__(self, "borders", classify_type(self.borders))
        elif self.borders:
            raise UsageError(f"borders only apply to pan plants, got {self.kind!r}")

    @property
    def expected_verdict(self) -> str:
        if self.kind == "pan":
            return VERDICT_PAN
        if self.kind in EDGE_KINDS:
            return VERDICT_EDGE
        return VERDICT_NONE


@dataclass(frozen=True)
class GroundTruth:
    """Expected verdict (and border subset for PANs) per planted neuron."""

    entries: dict[NeuronRef, tuple[str, str]]  # neuron -> (verdict, borders)
    seed: int
    prng: str = PRNG_NAME
    calibration: dict = field(default_factory=dict)

    def pan_neurons(self) -> set[NeuronRef]:
        return {n for n, (verdict, _) in self.entries.items() if verdict == VERDICT_PAN}


@dataclass(frozen=True)
class LayerTemplate:
    name: str
    out_channels: int
    kernel: int = 3
    stride: int = 1
    padding: int = 1
    policy: str = "zero"
    nonlinearity: str = "relu"
    # draw half the filters and install each with its negation: the
    # rectified pair-sum then tracks |response|, so the layer's ensemble
    # output is insensitive to the sign of local contrast
    sign_paired: bool = False


@dataclass(frozen=True)
class NetTemplate:
    name: str
    input_channels: int
    layers: tuple[LayerTemplate, ...]
    head_classes: Optional[int] = None
    calibration_batch: int = 16
    calibration_height: int = 64
    calibration_width: int = 64


def template_from_json(doc: dict) -> tuple[NetTemplate, tuple[PlantSpec, ...]]:
    """Parse a plant-spec document: template geometry plus plant list."""
    try:
        layers = tuple(
            LayerTemplate(
                name=str(entry.get("name", f"conv{i}")),
                out_channels=int(entry["out_channels"]),
                kernel=int(entry.get("kernel", 3)),
                stride=int(entry.get("stride", 1)),
                padding=int(entry.get("padding", 1)),
                policy=str(entry.get("policy", "zero")),
                nonlinearity=str(entry.get("nonlinearity", "relu")),
                sign_paired=bool(entry.get("sign_paired", False)),
            )
            for i, entry in enumerate(doc["layers"])
        )
        calib = doc.get("calibration", {})
        template = NetTemplate(
            name=str(doc.get("name", "synthetic")),
            input_channels=int(doc.get("input_channels", 1)),
            layers=layers,
            head_classes=int(doc["head_classes"]) if doc.get("head_classes") else None,
            calibration_batch=int(calib.get("batch", 16)),
            calibration_height=int(calib.get("height", 64)),
            calibration_width=int(calib.get("width", 64)),
        )
        plants = tuple(
            PlantSpec(
                layer=int(entry["layer"]),
                channel=int(entry["channel"]),
                kind=str(entry["kind"]),
                borders=str(entry.get("borders", "")),
            )
            for entry in doc.get("plants", ())
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed plant spec: {exc}") from exc
    return template, plants


def make_calibration_batch(
    seed: int, count: int, height: int, width: int, channels: int = 1
) -> Tensor:
    """Seeded corpus built to keep every padding signal honest.

    Layout per image:

    * a smooth positive brightness field spanning a wide range, so a
      neuron that merely rescales with local brightness at a padded border
      (the generic zero-padding response) finds in-distribution interior
      twins and cannot pass the truncated-centre gates;
    * sign-flipped inset rectangles whose magnitude matches the local
      field: their boundaries are strictly interior vertical/horizontal
      step edges with contrast at least the background-to-zero contrast of
      padding (plain edge detectors always see stronger edges inside the
      image than along the border), while rectified feature levels barely
      step across them.

    Every fourth image is structure-free (field + noise only).
    """
    rng = np.random.default_rng(seed)
    batch = np.empty((count, channels, height, width), dtype=np.float32)
    usable_h = height - 4
    usable_w = width - 4
    floor, ceil = _border_band(height, width)
    for i in range(count):
        base = _smooth_field(rng, height, width, 0.0, 1.0)
        # brightness is banded near the boundary and wide open inside, so
        # any border response that is a rescaled copy of the local level
        # has interior twins both dimmer and brighter than itself
        img = floor + (ceil - floor) * base
        if i % 4 != 3 and usable_h >= 3 and usable_w >= 3:
            for _ in range(int(rng.integers(2, 5))):
                side_h = int(rng.integers(3, usable_h + 1))
                side_w = int(rng.integers(3, usable_w + 1))
                y0 = int(rng.integers(2, height - 2 - side_h + 1))
                x0 = int(rng.integers(2, width - 2 - side_w + 1))
                local = img[y0 : y0 + side_h, x0 : x0 + side_w].mean()
                img[y0 : y0 + side_h, x0 : x0 + side_w] = -local * rng.uniform(0.9, 1.1)
        img += rng.normal(0.0, 0.09, size=(height, width))
        for c in range(channels):
            jitter = 1.0 + 0.05 * rng.standard_normal() if channels > 1 else 1.0
            batch[i, c] = (img * jitter).astype(np.float32)
    return batch


def _border_band(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Smooth brightness floor/ceiling maps.

    At the boundary brightness lives in [0.45, 0.85]; a few pixels in it
    opens up to [0.08, 1.0].
    """
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    d = np.minimum(
        np.minimum(rows, height - 1 - rows), np.minimum(cols, width - 1 - cols)
    ).astype(np.float64)
    decay = np.exp(-d / 5.0)
    floor = 0.08 + 0.37 * decay
    ceil = 1.0 - 0.15 * decay
    return floor, ceil


def _smooth_field(rng, height: int, width: int, lo: float, hi: float) -> np.ndarray:
    """Three-octave bilinear random field, normalized to span [lo, hi]."""
    field = (
        0.6 * _bilinear_grid(rng, height, width, max(2, height // 16), max(2, width // 16))
        + 0.28 * _bilinear_grid(rng, height, width, max(2, height // 8), max(2, width // 8))
        + 0.12 * _bilinear_grid(rng, height, width, max(2, height // 5), max(2, width // 5))
    )
    span = field.max() - field.min()
    if span == 0.0:
        return np.full((height, width), 0.5 * (lo + hi))
    return lo + (hi - lo) * (field - field.min()) / span


def _bilinear_grid(rng, height: int, width: int, gh: int, gw: int) -> np.ndarray:
    grid = rng.uniform(0.0, 1.0, size=(gh, gw))
    rows = np.linspace(0.0, gh - 1.0, height)
    cols = np.linspace(0.0, gw - 1.0, width)
    tmp = np.empty((gh, width))
    for r in range(gh):
        tmp[r] = np.interp(cols, np.arange(gw), grid[r])
    field = np.empty((height, width))
    for c in range(width):
        field[:, c] = np.interp(rows, np.arange(gh), tmp[:, c])
    return field


def _he_weights(rng, out_c: int, in_c: int, k: int) -> np.ndarray:
    std = np.sqrt(2.0 / (in_c * k * k))
    return rng.normal(0.0, std, size=(out_c, in_c, k, k)).astype(np.float32)


def _plant_weight_tensor(
    spec: PlantSpec, in_channels: int, kernel_size: int = 3
) -> tuple[np.ndarray, float]:
    """Weights for one planted output channel, L2-matched to the random init.

    Matching the norm keeps planted channels at an ordinary downstream
    footprint (the KS statistics they are detected by are scale-invariant
    anyway) while leaving the padding-swap experiments a measurable signal.
    Border probes replicate the pattern across every input channel.
    """
    target_norm = np.sqrt(2.0)
    if spec.kind in EDGE_KINDS:
        pattern = make_edge_kernel(spec.kind).astype(np.float64)
        tensor = np.zeros((in_channels, 3, 3), dtype=np.float64)
        tensor[0] = pattern  # input channel 0 carries the detector
        bias = 0.0
    else:
        pattern, bias = make_pan_kernel(spec.borders, kernel_size)
        tensor = np.repeat(pattern[None, :, :].astype(np.float64), in_channels, axis=0)
    tensor *= target_norm / np.linalg.norm(tensor)
    return tensor.astype(np.float32), bias


def _assemble(template: NetTemplate, params: list[dict], head: Optional[LinearHead]) -> ConvNetSpec:
    layers = []
    in_c = template.input_channels
    for lt, par in zip(template.layers, params):
        layers.append(
            ConvLayerSpec(
                name=lt.name,
                in_channels=in_c,
                out_channels=lt.out_channels,
                kernel_height=lt.kernel,
                kernel_width=lt.kernel,
                stride=lt.stride,
                padding_amount=lt.padding,
                padding_policy=lt.policy,
                weights=par["weights"].copy(),
                bias=par["bias"].copy(),
                post_nonlinearity=lt.nonlinearity,
            )
        )
        in_c = lt.out_channels
    return ConvNetSpec(name=template.name, layers=tuple(layers), head=head)


def build_synthetic_network(
    template: NetTemplate,
    plants,
    seed: int,
    calibrate: bool = True,
    condition: bool = True,
    calibration_batch: Optional[Tensor] = None,
) -> tuple[ConvNetSpec, GroundTruth]:
    """Seeded random net with the requested channels overwritten by plants.

    Unplanted weights are He-scaled normals from a single PCG64 stream; the
    seed and generator name are recorded in the ground truth. Two checks
    make the ground truth exact rather than hopeful:

    * ``condition``: unplanted neurons are rescored on the calibration
      batch and any that trips the detector at a small margin below the
      default threshold (a padding-aware neuron arising by chance, exactly
      the phenomenon the detector hunts) is redrawn from the same stream,
      iterating to a fixed point;
    * ``calibrate``: every planted PAN must reach its separation targets,
      otherwise PlantError is raised instead of emitting a weak plant.
    """
    plants = tuple(plants)
    seen = set()
    for p in plants:
        if not 0 <= p.layer < len(template.layers):
            raise UsageError(f"plant layer {p.layer} out of range")
        if not 0 <= p.channel < template.layers[p.layer].out_channels:
            raise UsageError(f"plant channel {p.channel} out of range in layer {p.layer}")
        if (p.layer, p.channel) in seen:
            raise UsageError(f"duplicate plant position ({p.layer}, {p.channel})")
        seen.add((p.layer, p.channel))
        if p.kind in EDGE_KINDS and template.layers[p.layer].kernel != 3:
            raise UsageError(f"edge plants need a 3x3 layer, layer {p.layer} has kernel "
                             f"{template.layers[p.layer].kernel}")

    if calibration_batch is None:
        calibration_batch = make_calibration_batch(
            seed,
            template.calibration_batch,
            template.calibration_height,
            template.calibration_width,
            template.input_channels,
        )

    rng = np.random.default_rng(seed)
    params = []
    in_c = template.input_channels
    for idx, lt in enumerate(template.layers):
        if lt.sign_paired:
            if lt.out_channels % 2:
                raise UsageError(f"layer {lt.name}: sign pairing needs an even channel count")
            half = _he_weights(rng, lt.out_channels // 2, in_c, lt.kernel)
            weights = np.concatenate([half, -half], axis=0)
        else:
            weights = _he_weights(rng, lt.out_channels, in_c, lt.kernel)
        bias = np.zeros(lt.out_channels, dtype=np.float32)
        for p in plants:
            if p.layer != idx:
                continue
            if p.kind == "random":
                weights[p.channel] = _he_weights(rng, 1, in_c, lt.kernel)[0]
            else:
                w, b = _plant_weight_tensor(p, in_c, lt.kernel)
                weights[p.channel] = w
                bias[p.channel] = b
        params.append({"weights": weights, "bias": bias, "in_c": in_c})
        in_c = lt.out_channels
    head = None
    if template.head_classes:
        channels = template.layers[-1].out_channels
        head = LinearHead(
            weights=rng.normal(0.0, 1.0 / np.sqrt(channels),
                               size=(template.head_classes, channels)).astype(np.float32),
            bias=np.zeros(template.head_classes, dtype=np.float32),
        )

    model = _assemble(template, params, head)
    planted_refs = {NeuronRef(template.layers[p.layer].name, p.channel) for p in plants}
    if condition:
        layer_index = {lt.name: i for i, lt in enumerate(template.layers)}
        margin = DetectorConfig(CONDITION_THETA)
        for round_no in range(CONDITION_ROUNDS):
            offenders = census(model, calibration_batch, margin).pan_set() - planted_refs
            if not offenders:
                break
            for neuron in sorted(offenders):
                idx = layer_index[neuron.layer]
                lt = template.layers[idx]
                par = params[idx]
                fresh = _he_weights(rng, 1, par["in_c"], lt.kernel)[0]
                par["weights"][neuron.channel] = fresh
                if lt.sign_paired:
                    half = lt.out_channels // 2
                    twin = (neuron.channel + half) % lt.out_channels
                    if NeuronRef(lt.name, twin) not in planted_refs:
                        par["weights"][twin] = -fresh
            model = _assemble(template, params, head)
        else:
            raise PlantError(
                f"conditioning did not converge in {CONDITION_ROUNDS} rounds; "
                f"still padding-aware: {sorted(offenders)}"
            )

    calibration = {
        "seed": seed,
        "batch": template.calibration_batch,
        "height": template.calibration_height,
        "width": template.calibration_width,
        "channels": template.input_channels,
    }
    truth = GroundTruth(
        entries={
            NeuronRef(template.layers[p.layer].name, p.channel): (p.expected_verdict, p.borders)
            for p in plants
        },
        seed=seed,
        calibration=calibration,
    )
    if calibrate and any(p.kind == "pan" for p in plants):
        _verify_pan_plants(model, plants, template, calibration_batch)
    return model, truth


def _verify_pan_plants(model: ConvNetSpec, plants, template: NetTemplate, batch: Tensor) -> None:
    trace, _ = forward(model, batch, want_logits=False)
    for p in plants:
        if p.kind != "pan":
            continue
        layer_name = template.layers[p.layer].name
        maps = trace.activations(layer_name)[:, p.channel]
        report = score_neuron(extract_regions(maps), NeuronRef(layer_name, p.channel))
        target = {b for b in ("top", "bottom", "left", "right") if b[0].upper() in p.borders}
        for b in ("top", "bottom", "left", "right"):
            one_sided = max(report.ks_plus[b], report.ks_minus[b])
            if b in target:
                if report.ks[b] < PLANT_SEPARATION or one_sided < PLANT_SEPARATION:
                    raise PlantError(
                        f"plant {layer_name}:{p.channel} ({p.borders}) too weak on {b}: "
                        f"ks={report.ks[b]:.3f} one-sided={one_sided:.3f} < {PLANT_SEPARATION}"
                    )
            else:
                if report.ks[b] >= PLANT_PURITY and one_sided >= PLANT_PURITY:
                    raise PlantError(
                        f"plant {layer_name}:{p.channel} ({p.borders}) leaks onto {b}: "
                        f"ks={report.ks[b]:.3f} one-sided={one_sided:.3f}"
                    )


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    flagged: int
    true_pans: int
    true_positives: int
    zero_flagged: bool  # precision reported as 1.0 with nothing flagged
    confusion: dict[str, dict[str, int]]  # planted type -> detected outcome counts
    census: CensusResult


def evaluate_detector(
    model: ConvNetSpec, truth: GroundTruth, batch: Tensor, config: DetectorConfig
) -> EvalReport:
    """Precision/recall of the pan verdict against the planted ground truth.

    Neurons the truth does not mention count as true negatives; planted
    edge detectors labelled edge_candidate are correct rejections. The
    confusion matrix maps each planted PAN's border subset to the detected
    outcome (a type name, or the non-pan verdict).
    """
    result = census(model, batch, config)
    detected = result.pan_set()
    truth_pans = truth.pan_neurons()
    tp = len(detected & truth_pans)
    flagged = len(detected)
    zero_flagged = flagged == 0
    precision = 1.0 if zero_flagged else tp / flagged
    recall = tp / len(truth_pans) if truth_pans else 1.0

    confusion: dict[str, dict[str, int]] = {}
    for neuron, (verdict, borders) in truth.entries.items():
        if verdict != VERDICT_PAN:
            continue
        record = result.record_for(neuron)
        if record is None:
            outcome = "excluded"
        elif record.label.verdict == VERDICT_PAN:
            outcome = record.label.type_name
        else:
            outcome = record.label.verdict
        confusion.setdefault(borders, {}).setdefault(outcome, 0)
        confusion[borders][outcome] += 1
    return EvalReport(
        precision=precision,
        recall=recall,
        flagged=flagged,
        true_pans=len(truth_pans),
        true_positives=tp,
        zero_flagged=zero_flagged,
        confusion=confusion,
        census=result,
    )


def truth_to_json(truth: GroundTruth, model_name: str) -> dict:
    return {
        "format": "panscope-truth",
        "version": 1,
        "model": model_name,
        "seed": truth.seed,
        "prng": truth.prng,
        "calibration": dict(truth.calibration),
        "plants": [
            {"layer": n.layer, "channel": n.channel, "expected": verdict, "borders": borders}
            for n, (verdict, borders) in sorted(truth.entries.items())
        ],
    }


def truth_from_json(doc: dict) -> GroundTruth:
    try:
        if doc.get("format") != "panscope-truth":
            raise UsageError("not a panscope-truth document")
        entries = {
            NeuronRef(str(e["layer"]), int(e["channel"])): (str(e["expected"]), str(e.get("borders", "")))
            for e in doc["plants"]
        }
        return GroundTruth(
            entries=entries,
            seed=int(doc["seed"]),
            prng=str(doc.get("prng", PRNG_NAME)),
            calibration=dict(doc.get("calibration", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed truth document: {exc}") from exc


def load_truth(path: str) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        return truth_from_json(json.load(fh))
