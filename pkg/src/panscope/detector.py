"""Padding-aware-neuron detection.

A border counts as detected when both gates pass at threshold theta:

1. the two-sided KS between the border sample and the full centre is high,
   and
2. a one-sided KS against the truncated centre is high: either the top-k
   centre values sit below the border (ks_plus) or the bottom-k sit above
   it (ks_minus).

Gate (1) alone marks an ordinary edge-detector candidate; gate (2) is what
separates padding awareness from data-driven edges.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import ks
from .engine import ActivationTrace, ConvNetSpec, Tensor, forward
from .errors import DegenerateMapError, UsageError
from .regions import BORDERS, RegionSamples, extract_regions, truncate_centre

BORDER_LETTERS = {"top": "T", "bottom": "B", "left": "L", "right": "R"}
LETTER_ORDER = "TBLR"

VERDICT_NONE = "none"
VERDICT_EDGE = "edge_candidate"
VERDICT_PAN = "pan"


class NeuronRef(NamedTuple):
    layer: str
    channel: int

    def __str__(self) -> str:
        return f"{self.layer}:{self.channel}"


@dataclass(frozen=True)
class DetectorConfig:
    theta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise UsageError(f"theta must be in (0, 1], got {self.theta}")


@dataclass(frozen=True)
class KSReport:
    """Per-border statistics for one neuron."""

    neuron: NeuronRef
    ks: dict[str, float]
    ks_plus: dict[str, float]
    ks_minus: dict[str, float]
    shortfall: bool


@dataclass(frozen=True)
class PANLabel:
    verdict: str
    borders: tuple[str, ...] = ()  # letters, in T,B,L,R order
    type_name: str = ""


def classify_type(borders) -> str:
    """Canonical name of a border subset: letters concatenated in T,B,L,R order."""
    letters = set()
    for b in borders:
        letter = BORDER_LETTERS.get(b, b)
        if letter not in LETTER_ORDER:
            raise ValueError(f"unknown border {b!r}")
        letters.add(letter)
    if not letters:
        raise ValueError("border subset must be non-empty")
    return "".join(l for l in LETTER_ORDER if l in letters)


def _all_types() -> tuple[str, ...]:
    names = []
    for mask in range(1, 16):
        subset = [LETTER_ORDER[i] for i in range(4) if mask & (1 << i)]
        names.append(classify_type(subset))
    # stable, short-first presentation order
    return tuple(sorted(set(names), key=lambda t: (len(t), [LETTER_ORDER.index(c) for c in t])))


ALL_TYPE_NAMES = _all_types()


def score_neuron(regions: RegionSamples, neuron: NeuronRef = NeuronRef("?", -1)) -> KSReport:
    """Compute the two-sided and truncated one-sided statistics per border.

    The truncation size k is that border's own pooled sample size, so row
    and column borders of rectangular maps get different k.
    """
    centre = regions.centre
    two_sided: dict[str, float] = {}
    plus: dict[str, float] = {}
    minus: dict[str, float] = {}
    shortfall = False
    trunc_cache: dict[int, object] = {}
    for b in BORDERS:
        sample = regions.border(b)
        two_sided[b] = ks.ks_two_sided(sample, centre)
        k = sample.size
        if k not in trunc_cache:
            trunc_cache[k] = truncate_centre(centre, k)
        trunc = trunc_cache[k]
        shortfall = shortfall or trunc.shortfall
        # high border values push the border ECDF below the top-k centre's
        plus[b] = ks.ks_less(sample, trunc.high)
        # low border values lift the border ECDF above the bottom-k centre's
        minus[b] = ks.ks_greater(sample, trunc.low)
    return KSReport(neuron=neuron, ks=two_sided, ks_plus=plus, ks_minus=minus, shortfall=shortfall)


def label_neuron(report: KSReport, config: DetectorConfig) -> PANLabel:
    """Apply the two-gate rule at the configured threshold."""
    theta = config.theta
    positive = [
        b
        for b in BORDERS
        if report.ks[b] >= theta
        and (report.ks_plus[b] >= theta or report.ks_minus[b] >= theta)
    ]
    if positive:
        letters = tuple(l for l in LETTER_ORDER if l in {BORDER_LETTERS[b] for b in positive})
        return PANLabel(verdict=VERDICT_PAN, borders=letters, type_name="".join(letters))
    if max(report.ks[b] for b in BORDERS) >= theta:
        return PANLabel(verdict=VERDICT_EDGE)
    return PANLabel(verdict=VERDICT_NONE)


@dataclass(frozen=True)
class NeuronRecord:
    neuron: NeuronRef
    report: KSReport
    label: PANLabel


@dataclass(frozen=True)
class ExcludedNeuron:
    neuron: NeuronRef
    reason: str


@dataclass(frozen=True)
class LayerCensus:
    name: str
    size: int  # channels, excluded neurons included
    pan_count: int
    pan_percent: int  # floor of 100 * pan_count / size


@dataclass(frozen=True)
class CensusResult:
    config: DetectorConfig
    records: tuple[NeuronRecord, ...]
    excluded: tuple[ExcludedNeuron, ...]
    layers: tuple[LayerCensus, ...]

    @property
    def pan_count(self) -> int:
        return sum(l.pan_count for l in self.layers)

    @property
    def neuron_count(self) -> int:
        return sum(l.size for l in self.layers)

    @property
    def pan_percent(self) -> float:
        """Overall percentage, one decimal, rounded down."""
        if self.neuron_count == 0:
            return 0.0
        return np.floor(1000.0 * self.pan_count / self.neuron_count) / 10.0

    def pan_set(self) -> set[NeuronRef]:
        return {r.neuron for r in self.records if r.label.verdict == VERDICT_PAN}

    def type_counts(self) -> dict[str, int]:
        counts = {t: 0 for t in ALL_TYPE_NAMES}
        for r in self.records:
            if r.label.verdict == VERDICT_PAN:
                counts[r.label.type_name] += 1
        return counts

    def record_for(self, neuron: NeuronRef) -> Optional[NeuronRecord]:
        for r in self.records:
            if r.neuron == neuron:
                return r
        return None


def worker_count() -> int:
    """Worker cap from PANSCOPE_THREADS (0 or unset = auto)."""
    raw = os.environ.get("PANSCOPE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"PANSCOPE_THREADS must be an integer, got {raw!r}")
    if n < 0:
        raise UsageError(f"PANSCOPE_THREADS must be >= 0, got {n}")
    if n == 0:
        return min(8, os.cpu_count() or 1)
    return n


def _score_channel(args):
    name, channel, maps = args
    neuron = NeuronRef(name, channel)
    try:
        regions = extract_regions(maps)
    except DegenerateMapError as exc:
        return ("excluded", ExcludedNeuron(neuron, str(exc)))
    report = score_neuron(regions, neuron)
    return ("scored", report)


def census_trace(trace: ActivationTrace, config: DetectorConfig) -> CensusResult:
    """Score and label every neuron of every layer present in a trace."""
    jobs = []
    for name, acts in trace.layers:
        for ch in range(acts.shape[1]):
            jobs.append((name, ch, acts[:, ch]))
    workers = worker_count()
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_score_channel, jobs))
    else:
        outcomes = [_score_channel(j) for j in jobs]

    records = []
    excluded = []
    for kind, payload in outcomes:
        if kind == "excluded":
            excluded.append(payload)
        else:
            records.append(NeuronRecord(payload.neuron, payload, label_neuron(payload, config)))

    layer_rows = []
    for name, acts in trace.layers:
        size = acts.shape[1]
        pans = sum(
            1 for r in records if r.neuron.layer == name and r.label.verdict == VERDICT_PAN
        )
        layer_rows.append(
            LayerCensus(
                name=name,
                size=size,
                pan_count=pans,
                pan_percent=int(np.floor(100.0 * pans / size)) if size else 0,
            )
        )
    return CensusResult(
        config=config,
        records=tuple(records),
        excluded=tuple(excluded),
        layers=tuple(layer_rows),
    )


def census(model: ConvNetSpec, batch: Tensor, config: DetectorConfig) -> CensusResult:
    """Run the model on the batch and census its analyzable layers.

    Layers with 1x1 kernels cannot see padding and are left out entirely.
    """
    trace, _ = forward(model, batch, want_logits=False)
    analyzable = {lay.name for lay in model.layers if lay.analyzable}
    kept = tuple((name, acts) for name, acts in trace.layers if name in analyzable)
    pruned = ActivationTrace(model_name=trace.model_name, layers=kept)
    return census_trace(pruned, config)


def relabel(result: CensusResult, config: DetectorConfig) -> CensusResult:
    """Re-threshold an existing census without recomputing the statistics."""
    records = tuple(
        NeuronRecord(r.neuron, r.report, label_neuron(r.report, config)) for r in result.records
    )
    layer_rows = []
    for lay in result.layers:
        pans = sum(
            1 for r in records if r.neuron.layer == lay.name and r.label.verdict == VERDICT_PAN
        )
        layer_rows.append(
            LayerCensus(
                name=lay.name,
                size=lay.size,
                pan_count=pans,
                pan_percent=int(np.floor(100.0 * pans / lay.size)) if lay.size else 0,
            )
        )
    return CensusResult(
        config=config, records=records, excluded=result.excluded, layers=tuple(layer_rows)
    )
