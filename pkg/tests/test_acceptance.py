"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured quantities."""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from panscope.bias import VariantSpec, class_odds, make_variant, run_bias_experiment, softmax
from panscope.cli import main
from panscope.detector import DetectorConfig, census, relabel
from panscope.engine import ActivationTrace, ConvLayerSpec, conv2d, forward
from panscope.ks import ks_greater, ks_less, ks_two_sided
from panscope.plants import (
    LayerTemplate,
    NetTemplate,
    PlantSpec,
    build_synthetic_network,
    evaluate_detector,
    make_calibration_batch,
)
from panscope.regions import extract_regions
from panscope.traceio import trace_bytes, trace_from_bytes, write_trace

from conftest import PAN_BENCH_PLANTS, PAN_BENCH_SEED
from test_engine import naive_conv2d, simple_layer
from test_ks import ks_oracle

BIAS_SEEDS = (110, 114, 129, 137, 138)


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def test_ks_oracle_equivalence():
    with criterion("KS oracle equivalence"):
        rng = np.random.default_rng(12345)
        t0 = time.time()
        worst = 0.0
        for i in range(1000):
            na, nb = rng.integers(2, 201, size=2)
            a = rng.uniform(-5, 5, size=na)
            b = rng.uniform(-5, 5, size=nb)
            if i % 3 == 0:  # deliberate ties, within and across samples
                a = np.round(a)
                b = np.round(b)
            if i % 7 == 0:
                b[: nb // 2] = a[: nb // 2] if na >= nb // 2 else b[: nb // 2]
            two, less, greater = ks_oracle(a, b)
            worst = max(
                worst,
                abs(ks_two_sided(a, b) - two),
                abs(ks_less(a, b) - less),
                abs(ks_greater(a, b) - greater),
            )
        elapsed = time.time() - t0
        print(f"  1000 pairs, max |difference| = {worst:.2e}, {elapsed:.2f}s")
        assert worst < 1e-12
        assert elapsed < 10.0


def test_conv_oracle_equivalence():
    with criterion("Conv oracle equivalence"):
        rng = np.random.default_rng(777)
        worst = 0.0
        for case in range(100):
            policy = "zero" if case % 2 == 0 else "reflect"
            stride = 1 + (case // 2) % 2
            b = int(rng.integers(1, 3))
            ic = int(rng.integers(1, 4))
            oc = int(rng.integers(1, 4))
            kh = int(rng.integers(1, 4))
            kw = int(rng.integers(1, 4))
            pad = int(rng.integers(0, 2))
            h = int(rng.integers(max(3, kh), 10))
            w = int(rng.integers(max(3, kw), 10))
            x = rng.uniform(-1, 1, size=(b, ic, h, w)).astype(np.float32)
            layer = simple_layer(
                rng.uniform(-1, 1, size=(oc, ic, kh, kw)),
                bias=rng.uniform(-1, 1, size=oc),
                stride=stride,
                pad=pad,
                policy=policy,
            )
            worst = max(worst, float(np.max(np.abs(conv2d(x, layer) - naive_conv2d(x, layer)))))
        print(f"  100 cases, max |difference| = {worst:.2e}")
        assert worst < 1e-5


def test_planted_detection(pan_bench):
    with criterion("Planted detection"):
        t0 = time.time()
        report = evaluate_detector(
            pan_bench["model"], pan_bench["truth"], pan_bench["batch"], pan_bench["config"]
        )
        elapsed = pan_bench["build_seconds"] + (time.time() - t0)
        types = sorted(pan_bench["truth"].entries.values())
        print(
            f"  precision={report.precision} recall={report.recall} "
            f"planted types={sorted(b for _, b in types)} runtime={elapsed:.1f}s"
        )
        assert report.precision == 1.0
        assert report.recall == 1.0
        for true_type, outcomes in report.confusion.items():
            assert outcomes == {true_type: 1}
        assert elapsed < 60.0


def test_edge_detector_discrimination():
    with criterion("Edge-detector discrimination"):
        template = NetTemplate(
            name="edgebench",
            input_channels=1,
            layers=(LayerTemplate(name="conv0", out_channels=8, policy="zero"),),
            head_classes=None,
            calibration_batch=16,
            calibration_height=64,
            calibration_width=64,
        )
        plants = (
            PlantSpec(layer=0, channel=1, kind="sobel_v"),
            PlantSpec(layer=0, channel=2, kind="sobel_h"),
            PlantSpec(layer=0, channel=5, kind="prewitt_v"),
            PlantSpec(layer=0, channel=6, kind="prewitt_h"),
        )
        model, truth = build_synthetic_network(template, plants, seed=77)
        batch = make_calibration_batch(77, 16, 64, 64, 1)
        result = census(model, batch, DetectorConfig(0.5))
        for neuron in truth.entries:
            record = result.record_for(neuron)
            two_sided = max(record.report.ks.values())
            one_sided = max(
                max(record.report.ks_plus.values()), max(record.report.ks_minus.values())
            )
            print(
                f"  {neuron}: verdict={record.label.verdict} "
                f"max ks={two_sided:.2f} max one-sided={one_sided:.2f}"
            )
            assert record.label.verdict == "edge_candidate"
            assert two_sided >= 0.5
            for b in record.report.ks:
                assert record.report.ks_plus[b] < 0.5
                assert record.report.ks_minus[b] < 0.5


def test_reflect_kill_switch(pan_bench):
    with criterion("Reflect kill-switch"):
        reflect_model = make_variant(pan_bench["model"], VariantSpec("reflect_all"))
        result = census(reflect_model, pan_bench["batch"], pan_bench["config"])
        planted = pan_bench["truth"].pan_neurons()
        worst = 0.0
        for record in result.records:
            if record.neuron in planted:
                worst = max(
                    worst,
                    max(record.report.ks_plus.values()),
                    max(record.report.ks_minus.values()),
                )
        detected = len(result.pan_set() & planted)
        print(f"  max planted one-sided under reflect = {worst:.3f}, planted detections = {detected}")
        assert worst < 0.5
        assert detected == 0


def test_threshold_monotonicity(pan_bench):
    with criterion("Threshold monotonicity"):
        base = census(pan_bench["model"], pan_bench["batch"], pan_bench["config"])
        sets = {
            theta: relabel(base, DetectorConfig(theta)).pan_set() for theta in (0.4, 0.5, 0.6)
        }
        print(f"  |PANs| at 0.4/0.5/0.6 = {len(sets[0.4])}/{len(sets[0.5])}/{len(sets[0.6])}")
        assert sets[0.6] <= sets[0.5] <= sets[0.4]


def test_region_accounting():
    with criterion("Region accounting"):
        for n in (3, 5, 8, 32):
            maps = np.random.default_rng(n).normal(size=(1, n, n))
            regions = extract_regions(maps)
            for b in ("top", "bottom", "left", "right"):
                assert regions.border(b).size == n
            assert regions.centre.size == (n - 2) ** 2
        print("  border = N and centre = (N-2)^2 for N in {3, 5, 8, 32}")


def test_odds_identity_and_conservation(pan_bench):
    with criterion("Odds identity and conservation"):
        model = pan_bench["model"]
        batch = pan_bench["batch"][:8]
        _, logits = forward(model, batch)
        probs = softmax(logits)
        odds = class_odds(probs, probs)
        assert np.all(np.abs(odds.odds - 1.0) < 1e-9)
        pan_set = frozenset(pan_bench["truth"].pan_neurons())
        specs = [
            VariantSpec("original"),
            VariantSpec("reflect_all"),
            VariantSpec("pan_reflect", pan_set),
            VariantSpec("rand_reflect", pan_set, seed=1),
        ]
        worst = 0.0
        for spec in specs:
            _, logits_v = forward(make_variant(model, spec), batch)
            sums = softmax(logits_v).sum(axis=1)
            worst = max(worst, float(np.max(np.abs(sums - 1.0))))
        print(f"  identity odds within 1e-9; softmax sum max deviation = {worst:.2e}")
        assert worst < 1e-6


def test_planted_bias_separation():
    with criterion("Planted bias separation"):
        wins = 0
        for seed in BIAS_SEEDS:
            layers = (
                LayerTemplate(name="conv0", out_channels=64, policy="reflect", sign_paired=True),
                LayerTemplate(name="conv1", out_channels=64, policy="zero", kernel=5, padding=2),
                LayerTemplate(name="conv2", out_channels=64, policy="zero"),
            )
            template = NetTemplate(
                name="biasbench",
                input_channels=1,
                layers=layers,
                head_classes=10,
                calibration_batch=12,
                calibration_height=36,
                calibration_width=36,
            )
            plants = tuple(
                PlantSpec(layer=1, channel=c, kind="pan", borders=b)
                for c, b in ((1, "T"), (8, "B"), (15, "LR"), (22, "TB"))
            )
            model, truth = build_synthetic_network(template, plants, seed=seed)
            images = make_calibration_batch(seed + 5000, 32, 36, 36, 1)
            pan_set = frozenset(truth.pan_neurons())

            def spread(report):
                vals = report.odds.log_odds[np.isfinite(report.odds.log_odds)]
                return float(np.std(vals))

            pan_std = spread(run_bias_experiment(model, VariantSpec("pan_reflect", pan_set), images))
            rand_std = spread(
                run_bias_experiment(model, VariantSpec("rand_reflect", pan_set, seed=seed), images)
            )
            win = pan_std > rand_std
            wins += win
            print(f"  seed {seed}: pan std {pan_std:.5f} vs rand std {rand_std:.5f} -> {'win' if win else 'loss'}")
        assert wins == len(BIAS_SEEDS)


def test_trace_round_trip_and_rejections(tmp_path):
    with criterion("Trace round-trip"):
        rng = np.random.default_rng(3)
        trace = ActivationTrace(
            model_name="rt",
            layers=(
                ("a", rng.normal(size=(2, 3, 6, 5)).astype(np.float32)),
                ("b", rng.normal(size=(2, 2, 5, 5)).astype(np.float32)),
            ),
        )
        blob = trace_bytes(trace)
        assert trace_bytes(trace_from_bytes(blob)) == blob

        cases = {
            "bad magic": b"PANTRACX" + blob[8:],
            "bad version": blob[:8] + (42).to_bytes(4, "little") + blob[12:],
            "truncated payload": blob[:-16],
        }
        codes = {}
        for name, payload in cases.items():
            path = tmp_path / f"{name.replace(' ', '_')}.pantrace"
            path.write_bytes(payload)
            codes[name] = main(
                ["detect-trace", "--trace", str(path), "--out", str(tmp_path / "o.json")]
            )
        print(f"  byte-exact round trip; rejection exit codes = {codes}")
        assert all(code == 2 for code in codes.values())
