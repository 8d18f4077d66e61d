"""Padding-swap experiments: model variants, class odds, logit divergence.

Four variants of one model are compared through paired inference:
``original``, ``reflect_all`` (every layer switched to reflect padding),
``pan_reflect`` (only a designated neuron set switched, per-channel) and
``rand_reflect`` (a random non-designated control set of the same size and
per-layer distribution). Odds per class are ratios of summed softmax mass
between a variant and the original; log odds use the natural log.
"""

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .detector import NeuronRef
from .engine import ConvNetSpec, PAD_REFLECT, Tensor, forward
from .errors import DataError, UsageError
from .regions import histogram

VARIANT_ORIGINAL = "original"
VARIANT_REFLECT_ALL = "reflect_all"
VARIANT_PAN_REFLECT = "pan_reflect"
VARIANT_RAND_REFLECT = "rand_reflect"
VARIANT_KINDS = (VARIANT_ORIGINAL, VARIANT_REFLECT_ALL, VARIANT_PAN_REFLECT, VARIANT_RAND_REFLECT)


@dataclass(frozen=True)
class VariantSpec:
    kind: str
    pan_set: frozenset = frozenset()
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in VARIANT_KINDS:
            raise UsageError(f"unknown variant kind {self.kind!r}")
        object.__setattr__(self, "pan_set", frozenset(self.pan_set))
        if self.kind == VARIANT_RAND_REFLECT and self.seed is None:
            raise UsageError("rand_reflect needs a seed")


def _check_neurons(model: ConvNetSpec, neurons) -> None:
    by_layer = {lay.name: lay.out_channels for lay in model.layers}
    for n in neurons:
        if n.layer not in by_layer or not 0 <= n.channel < by_layer[n.layer]:
            raise UsageError(f"unknown neuron {n} in model {model.name}")


def _swap_channels(model: ConvNetSpec, neurons) -> ConvNetSpec:
    """Per-channel padding override: designated channels get reflect."""
    _check_neurons(model, neurons)
    per_layer: dict[str, set[int]] = {}
    for n in neurons:
        per_layer.setdefault(n.layer, set()).add(n.channel)
    layers = []
    for lay in model.layers:
        swapped = per_layer.get(lay.name)
        if not swapped:
            layers.append(lay)
            continue
        policies = tuple(
            PAD_REFLECT if ch in swapped else lay.padding_policy
            for ch in range(lay.out_channels)
        )
        layers.append(dataclasses.replace(lay, channel_policies=policies))
    return ConvNetSpec(name=model.name, layers=tuple(layers), head=model.head)


def sample_random_control(model: ConvNetSpec, pan_set, seed: int) -> frozenset:
    """Non-PAN control set with the same per-layer counts as ``pan_set``."""
    pan_set = frozenset(pan_set)
    _check_neurons(model, pan_set)
    rng = np.random.default_rng(seed)
    control = set()
    for lay in model.layers:
        count = sum(1 for n in pan_set if n.layer == lay.name)
        if count == 0:
            continue
        taken = {n.channel for n in pan_set if n.layer == lay.name}
        candidates = [ch for ch in range(lay.out_channels) if ch not in taken]
        if len(candidates) < count:
            raise DataError(
                f"layer {lay.name}: need {count} non-PAN control neurons, "
                f"only {len(candidates)} available"
            )
        chosen = rng.choice(len(candidates), size=count, replace=False)
        control.update(NeuronRef(lay.name, candidates[i]) for i in sorted(chosen))
    return frozenset(control)


def make_variant(model: ConvNetSpec, spec: VariantSpec) -> ConvNetSpec:
    """Build the padding variant; weights are shared, never copied or changed."""
    if spec.kind == VARIANT_ORIGINAL:
        return model
    if spec.kind == VARIANT_REFLECT_ALL:
        layers = tuple(
            dataclasses.replace(lay, padding_policy=PAD_REFLECT, channel_policies=None)
            for lay in model.layers
        )
        return ConvNetSpec(name=model.name, layers=layers, head=model.head)
    if spec.kind == VARIANT_PAN_REFLECT:
        return _swap_channels(model, spec.pan_set)
    control = sample_random_control(model, spec.pan_set, spec.seed)
    return _swap_channels(model, control)


def softmax(logits) -> np.ndarray:
    """Row-wise stable softmax in float64."""
    arr = np.asarray(logits, dtype=np.float64)
    shifted = arr - arr.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ClassOdds:
    odds: np.ndarray  # nan where undefined
    log_odds: np.ndarray
    undefined: tuple[int, ...]


def class_odds(probs_variant, probs_original) -> ClassOdds:
    """odds(c) = sum_i variant_i[c] / sum_i original_i[c].

    Classes whose original mass sums to zero are flagged undefined rather
    than clipped.
    """
    pv = np.asarray(probs_variant, dtype=np.float64)
    po = np.asarray(probs_original, dtype=np.float64)
    if pv.shape != po.shape:
        raise UsageError(f"probability shapes differ: {pv.shape} vs {po.shape}")
    if pv.ndim != 2:
        raise UsageError(f"expected (images, classes) arrays, got ndim={pv.ndim}")
    sv = pv.sum(axis=0)
    so = po.sum(axis=0)
    undefined = tuple(int(i) for i in np.flatnonzero(so == 0.0))
    odds = np.full(sv.shape, np.nan)
    ok = so != 0.0
    odds[ok] = sv[ok] / so[ok]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_odds = np.log(odds)
    return ClassOdds(odds=odds, log_odds=log_odds, undefined=undefined)


def threshold_classes(odds, cut: float) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Classes with odds > 1+cut, and those with 1/odds > 1+cut."""
    arr = np.asarray(odds, dtype=np.float64)
    finite = np.isfinite(arr)
    above = tuple(int(i) for i in np.flatnonzero(finite & (arr > 1.0 + cut)))
    positive = finite & (arr > 0.0)
    below = np.zeros_like(finite)
    below[positive] = (1.0 / arr[positive]) > 1.0 + cut
    return above, tuple(int(i) for i in np.flatnonzero(below))


def logit_l1_distance(logits_a, logits_b) -> float:
    a = np.asarray(logits_a, dtype=np.float64).ravel()
    b = np.asarray(logits_b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise UsageError(f"logit lengths differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


@dataclass(frozen=True)
class SampleDivergence:
    index: int
    distance: float
    pred_original: int
    pred_variant: int

    @property
    def agree(self) -> bool:
        return self.pred_original == self.pred_variant


def rank_samples_by_divergence(logits_original, logits_variant) -> tuple[SampleDivergence, ...]:
    """Samples ordered by descending L1 logit distance, ties by index."""
    lo = np.asarray(logits_original, dtype=np.float64)
    lv = np.asarray(logits_variant, dtype=np.float64)
    if lo.shape != lv.shape:
        raise UsageError(f"logit shapes differ: {lo.shape} vs {lv.shape}")
    distances = np.abs(lo - lv).sum(axis=1)
    preds_o = lo.argmax(axis=1)
    preds_v = lv.argmax(axis=1)
    order = sorted(range(lo.shape[0]), key=lambda i: (-distances[i], i))
    return tuple(
        SampleDivergence(
            index=i,
            distance=float(distances[i]),
            pred_original=int(preds_o[i]),
            pred_variant=int(preds_v[i]),
        )
        for i in order
    )


def disagreements_in_top(ranked, fraction: float) -> tuple[int, int]:
    """(#prediction disagreements, prefix size) in the top fraction."""
    take = max(1, int(np.floor(len(ranked) * fraction))) if ranked else 0
    prefix = ranked[:take]
    return sum(1 for s in prefix if not s.agree), take


@dataclass(frozen=True)
class OddsReport:
    variant: VariantSpec
    control_set: frozenset  # rand_reflect only, else empty
    odds: ClassOdds
    samples: tuple[SampleDivergence, ...]
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    above_cut: tuple[int, ...]
    below_cut: tuple[int, ...]
    cut: float
    top_fraction: float
    top_disagreements: int
    top_size: int


def run_bias_experiment(
    model: ConvNetSpec,
    spec: VariantSpec,
    batch: Tensor,
    cut: float = 0.07,
    bins: int = 41,
    top_fraction: float = 0.10,
) -> OddsReport:
    """Paired inference original-vs-variant and the full odds analysis."""
    if model.head is None:
        raise UsageError("bias experiments need a model with a classifier head")
    _, logits_orig = forward(model, batch)
    variant_model = make_variant(model, spec)
    _, logits_var = forward(variant_model, batch)
    probs_orig = softmax(logits_orig)
    probs_var = softmax(logits_var)
    odds = class_odds(probs_var, probs_orig)
    finite = odds.log_odds[np.isfinite(odds.log_odds)]
    if finite.size:
        span = max(float(np.abs(finite).max()), 1e-6)
        edges, counts = histogram(finite, bins, (-span, span))
    else:
        edges, counts = np.array([0.0, 1.0]), np.array([0])
    above, below = threshold_classes(odds.odds, cut)
    ranked = rank_samples_by_divergence(logits_orig, logits_var)
    disagreements, top_size = disagreements_in_top(ranked, top_fraction)
    control = frozenset()
    if spec.kind == VARIANT_RAND_REFLECT:
        control = sample_random_control(model, spec.pan_set, spec.seed)
    return OddsReport(
        variant=spec,
        control_set=control,
        odds=odds,
        samples=ranked,
        hist_edges=edges,
        hist_counts=counts,
        above_cut=above,
        below_cut=below,
        cut=cut,
        top_fraction=top_fraction,
        top_disagreements=disagreements,
        top_size=top_size,
    )
