"""JSON/CSV report emission.

Reports embed their full configuration (threshold, seeds, PRNG name, batch
descriptor, tool version) so re-running the tool from a report reproduces
it bit-for-bit; the only non-reproducible field is ``created_at``.
All writes are atomic.
"""

import csv
import io
import json
import os
import tempfile
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .bias import OddsReport
from .detector import CensusResult, NeuronRef
from .errors import DataError
from .plants import EvalReport
from .regions import BORDERS


def atomic_write_text(destination: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(destination)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".panscope-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, destination)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(destination: str, doc: dict) -> None:
    atomic_write_text(destination, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _tool_block() -> dict:
    return {"name": "panscope", "version": __version__}


def census_doc(result: CensusResult, batch_descriptor: dict, model_ref: dict,
               timestamp: bool = True) -> dict:
    doc = {
        "report": "pan-census",
        "version": 1,
        "tool": _tool_block(),
        "config": {
            "theta": result.config.theta,
            "model": model_ref,
            "batch": batch_descriptor,
        },
        "layers": [
            {
                "name": lay.name,
                "size": lay.size,
                "pan_count": lay.pan_count,
                "pan_percent": lay.pan_percent,
            }
            for lay in result.layers
        ],
        "totals": {
            "neurons": result.neuron_count,
            "pans": result.pan_count,
            "pan_percent": result.pan_percent,
        },
        "type_counts": result.type_counts(),
        "neurons": [
            {
                "layer": r.neuron.layer,
                "channel": r.neuron.channel,
                "verdict": r.label.verdict,
                "type": r.label.type_name,
                "borders": list(r.label.borders),
                "shortfall": r.report.shortfall,
                "ks": {b: r.report.ks[b] for b in BORDERS},
                "ks_plus": {b: r.report.ks_plus[b] for b in BORDERS},
                "ks_minus": {b: r.report.ks_minus[b] for b in BORDERS},
            }
            for r in result.records
        ],
        "excluded": [
            {"layer": e.neuron.layer, "channel": e.neuron.channel, "reason": e.reason}
            for e in result.excluded
        ],
    }
    if timestamp:
        doc["created_at"] = datetime.now(timezone.utc).isoformat()
    return doc


def load_census(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if doc.get("report") != "pan-census":
        raise DataError(f"{path}: not a pan-census report")
    return doc


def census_pan_set(doc: dict) -> frozenset:
    return frozenset(
        NeuronRef(str(n["layer"]), int(n["channel"]))
        for n in doc.get("neurons", ())
        if n.get("verdict") == "pan"
    )


def _clean_float(x: float):
    return None if not np.isfinite(x) else float(x)


def odds_doc(report: OddsReport, batch_descriptor: dict, model_ref: dict,
             census_ref: dict | None = None, timestamp: bool = True) -> dict:
    doc = {
        "report": "pan-odds",
        "version": 1,
        "tool": _tool_block(),
        "config": {
            "variant": report.variant.kind,
            "seed": report.variant.seed,
            "prng": "numpy-pcg64",
            "cut": report.cut,
            "top_fraction": report.top_fraction,
            "pan_set": sorted(f"{n.layer}:{n.channel}" for n in report.variant.pan_set),
            "model": model_ref,
            "batch": batch_descriptor,
            "census": census_ref or {},
        },
        "control_set": sorted(f"{n.layer}:{n.channel}" for n in report.control_set),
        "classes": [
            {
                "class": int(c),
                "odds": _clean_float(report.odds.odds[c]),
                "log_odds": _clean_float(report.odds.log_odds[c]),
                "undefined": int(c) in report.odds.undefined,
            }
            for c in range(report.odds.odds.size)
        ],
        "classes_above_cut": list(report.above_cut),
        "classes_below_cut": list(report.below_cut),
        "log_odds_histogram": {
            "edges": [float(e) for e in report.hist_edges],
            "counts": [int(c) for c in report.hist_counts],
        },
        "samples": [
            {
                "index": s.index,
                "l1_distance": s.distance,
                "pred_original": s.pred_original,
                "pred_variant": s.pred_variant,
                "agree": s.agree,
            }
            for s in report.samples
        ],
        "summary": {
            "top_disagreements": report.top_disagreements,
            "top_size": report.top_size,
        },
    }
    if timestamp:
        doc["created_at"] = datetime.now(timezone.utc).isoformat()
    return doc


def write_log_odds_csv(report: OddsReport, destination: str) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bin_index", "bin_lo", "bin_hi", "count"])
    edges = report.hist_edges
    for i, count in enumerate(report.hist_counts):
        writer.writerow([i, repr(float(edges[i])), repr(float(edges[i + 1])), int(count)])
    atomic_write_text(destination, buf.getvalue())


def eval_doc(report: EvalReport, timestamp: bool = True) -> dict:
    doc = {
        "report": "pan-eval",
        "version": 1,
        "tool": _tool_block(),
        "precision": report.precision,
        "recall": report.recall,
        "flagged": report.flagged,
        "true_pans": report.true_pans,
        "true_positives": report.true_positives,
        "zero_flagged": report.zero_flagged,
        "confusion": report.confusion,
        "theta": report.census.config.theta,
    }
    if timestamp:
        doc["created_at"] = datetime.now(timezone.utc).isoformat()
    return doc


def write_region_histograms(region_bins: dict, destination: str) -> None:
    """CSV of per-region histograms: region,bin_index,bin_lo,bin_hi,count."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["region", "bin_index", "bin_lo", "bin_hi", "count"])
    for region, (edges, counts) in region_bins.items():
        for i, count in enumerate(counts):
            writer.writerow(
                [region, i, repr(float(edges[i])), repr(float(edges[i + 1])), int(count)]
            )
    atomic_write_text(destination, buf.getvalue())
