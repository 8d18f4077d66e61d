import numpy as np
import pytest
from PIL import Image


def _field(rng, size):
    gh = max(2, size // 12)
    grid = rng.uniform(0.0, 1.0, size=(gh, gh))
    pos = np.linspace(0.0, gh - 1.0, size)
    tmp = np.array([np.interp(pos, np.arange(gh), grid[r]) for r in range(gh)])
    out = np.array([np.interp(pos, np.arange(gh), tmp[:, c]) for c in range(size)]).T
    span = out.max() - out.min()
    return (out - out.min()) / (span if span else 1.0)


def synth_image(rng, size=64):
    """Wide-span smooth field with level-matched inset rectangles and noise.

    Texture-rich on purpose: flat images make half the random channels of
    any zero-padded net look padding-aware, which is realistic but useless
    as a toy test fixture.
    """
    img = 0.25 + 0.7 * _field(rng, size)
    for _ in range(int(rng.integers(1, 4))):
        side = int(rng.integers(8, size // 2))
        y0 = int(rng.integers(2, size - 2 - side))
        x0 = int(rng.integers(2, size - 2 - side))
        local = img[y0 : y0 + side, x0 : x0 + side].mean()
        img[y0 : y0 + side, x0 : x0 + side] = np.clip(
            local * rng.uniform(0.35, 0.65), 0.02, 1.0
        )
    img += rng.normal(0, 0.09, size=(size, size))
    return np.clip(img, 0.0, 1.0)


@pytest.fixture(scope="session")
def image_folder(tmp_path_factory):
    folder = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(99)
    for i in range(12):
        img = synth_image(rng)
        arr = (img * 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").convert("RGB").save(folder / f"img_{i:03d}.png")
    return str(folder)
