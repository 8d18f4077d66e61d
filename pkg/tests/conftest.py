import numpy as np
import pytest

from panscope.detector import DetectorConfig
from panscope.plants import (
    LayerTemplate,
    NetTemplate,
    PlantSpec,
    build_synthetic_network,
    make_calibration_batch,
)

# The planted layer (5x5 probes, wide kernel keeps the probe ring inside
# the partially padded band) sits between a sign-paired reflect feature
# layer (no upstream padding artifacts, contrast-sign-faithful features)
# and zero-padded tail layers; conditioning keeps unplanted neurons clean.

PAN_BENCH_SEED = 5
PAN_BENCH_PLANTS = ((3, "T"), (17, "B"), (40, "L"), (5, "LR"), (21, "TB"), (48, "TBLR"))


def pan_bench_template() -> NetTemplate:
    layers = (
        LayerTemplate(name="conv0", out_channels=64, policy="reflect", sign_paired=True),
        LayerTemplate(name="conv1", out_channels=64, policy="zero", kernel=5, padding=2),
        LayerTemplate(name="conv2", out_channels=64, policy="zero"),
        LayerTemplate(name="conv3", out_channels=64, policy="zero"),
    )
    return NetTemplate(
        name="panbench",
        input_channels=1,
        layers=layers,
        head_classes=10,
        calibration_batch=16,
        calibration_height=64,
        calibration_width=64,
    )


def small_bench(seed: int, plants, hw: int = 48, batch: int = 12, head_classes: int = 10):
    layers = (
        LayerTemplate(name="conv0", out_channels=64, policy="reflect", sign_paired=True),
        LayerTemplate(name="conv1", out_channels=64, policy="zero", kernel=5, padding=2),
        LayerTemplate(name="conv2", out_channels=64, policy="zero"),
    )
    template = NetTemplate(
        name="bench",
        input_channels=1,
        layers=layers,
        head_classes=head_classes,
        calibration_batch=batch,
        calibration_height=hw,
        calibration_width=hw,
    )
    specs = tuple(PlantSpec(layer=1, channel=c, kind="pan", borders=b) for c, b in plants)
    model, truth = build_synthetic_network(template, specs, seed=seed)
    images = make_calibration_batch(seed, batch, hw, hw, 1)
    return model, truth, images


@pytest.fixture(scope="session")
def pan_bench():
    """Full-size planted bench shared by the slow tests; build is timed."""
    import time

    template = pan_bench_template()
    plants = tuple(
        PlantSpec(layer=1, channel=c, kind="pan", borders=b) for c, b in PAN_BENCH_PLANTS
    )
    t0 = time.time()
    model, truth = build_synthetic_network(template, plants, seed=PAN_BENCH_SEED)
    elapsed = time.time() - t0
    batch = make_calibration_batch(PAN_BENCH_SEED, 16, 64, 64, 1)
    return {
        "model": model,
        "truth": truth,
        "batch": batch,
        "template": template,
        "build_seconds": elapsed,
        "config": DetectorConfig(0.5),
    }


@pytest.fixture(scope="session")
def mini_bench():
    """Small planted bench for variant/bias unit tests."""
    model, truth, images = small_bench(14, ((3, "T"), (9, "LR")))
    return {"model": model, "truth": truth, "batch": images}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
