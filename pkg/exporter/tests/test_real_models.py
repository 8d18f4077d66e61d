"""Real-model acceptance checks (pretrained weights + validation images).

These need artifacts the package cannot fetch itself:

* ``PANEXPORT_WEIGHTS`` - torchvision state-dict file for ResNet-50
  (IMAGENET1K_V2), e.g. downloaded once with
  ``torchvision.models.resnet50(weights=ResNet50_Weights.IMAGENET1K_V2)``.
* ``PANEXPORT_IMAGES`` - a folder of validation images (ILSVRC val split
  for the published numbers; at least a few hundred files).

Without both variables the module skips.
"""

import json
import os
import subprocess

import numpy as np
import pytest

WEIGHTS = os.environ.get("PANEXPORT_WEIGHTS")
IMAGES = os.environ.get("PANEXPORT_IMAGES")

pytestmark = pytest.mark.skipif(
    not (WEIGHTS and os.path.exists(WEIGHTS) and IMAGES and os.path.isdir(IMAGES)),
    reason="set PANEXPORT_WEIGHTS (resnet50 state dict) and PANEXPORT_IMAGES (val folder)",
)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("real")
    trace = root / "resnet50.pantrace"
    rc = subprocess.run(
        ["panexport", "--model", "resnet50", "--weights", WEIGHTS, "--images", IMAGES,
         "--limit", "64", "--out", str(trace)],
        capture_output=True, text=True,
    )
    assert rc.returncode == 0, rc.stderr
    census = root / "census.json"
    rc = subprocess.run(
        ["panscope", "detect-trace", "--trace", str(trace), "--theta", "0.5",
         "--out", str(census)],
        capture_output=True, text=True,
    )
    assert rc.returncode == 0, rc.stderr
    return {"root": root, "census": census}


def infer(variant, census, out, seed=None, limit=5000):
    cmd = ["panexport-infer", "--model", "resnet50", "--weights", WEIGHTS,
           "--images", IMAGES, "--limit", str(limit), "--variant", variant,
           "--out", str(out)]
    if variant in ("pan-reflect", "rand-reflect"):
        cmd += ["--census", str(census)]
    if seed is not None:
        cmd += ["--seed", str(seed)]
    rc = subprocess.run(cmd, capture_output=True, text=True)
    assert rc.returncode == 0, rc.stderr


def test_census_fraction_and_single_border_majority(workspace):
    doc = json.loads(workspace["census"].read_text())
    total = doc["totals"]["neurons"]
    pans = doc["totals"]["pans"]
    fraction = pans / total
    print(f"real-model census: {pans}/{total} = {fraction:.2%}")
    assert 0.005 <= fraction <= 0.05
    singles = sum(doc["type_counts"][t] for t in ("T", "B", "L", "R"))
    print(f"single-border share: {singles}/{pans}")
    assert pans > 0 and singles / pans >= 0.55


def test_log_odds_wider_and_bimodal(workspace):
    from panexport.analysis import class_log_odds, log_odds_std, mode_count
    from panexport.inference import load_jsonl

    root = workspace["root"]
    infer("original", workspace["census"], root / "orig.jsonl")
    infer("pan-reflect", workspace["census"], root / "pan.jsonl")
    infer("rand-reflect", workspace["census"], root / "rand.jsonl", seed=1)
    probs_o, _ = load_jsonl(str(root / "orig.jsonl"))
    probs_p, _ = load_jsonl(str(root / "pan.jsonl"))
    probs_r, _ = load_jsonl(str(root / "rand.jsonl"))
    lo_pan = class_log_odds(probs_p, probs_o)
    lo_rand = class_log_odds(probs_r, probs_o)
    ratio = log_odds_std(lo_pan) / max(log_odds_std(lo_rand), 1e-12)
    modes = mode_count(lo_pan)
    print(f"std ratio pan/rand = {ratio:.2f}, pan-reflect modes = {modes}")
    assert ratio > 1.5
    assert modes >= 2


def test_top_divergent_samples_mostly_agree(workspace):
    from panexport.analysis import top_divergence_disagreements
    from panexport.inference import load_jsonl

    root = workspace["root"]
    _, logits_o = load_jsonl(str(root / "orig.jsonl"))
    _, logits_p = load_jsonl(str(root / "pan.jsonl"))
    disagree, take = top_divergence_disagreements(logits_o, logits_p, 0.10)
    print(f"top-10% divergent: {disagree}/{take} disagreements")
    assert disagree / take < 0.02
