"""Image-folder ingestion: deterministic order, standard preprocessing."""

import os

import numpy as np
import torch
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".webp")

# ImageNet channel statistics, the convention the zoo models were trained with
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def list_images(folder: str, limit: int | None = None) -> list[str]:
    names = sorted(
        entry
        for entry in os.listdir(folder)
        if entry.lower().endswith(IMAGE_EXTENSIONS)
    )
    if not names:
        raise ValueError(f"{folder}: no images found")
    if limit is not None:
        names = names[:limit]
    return [os.path.join(folder, n) for n in names]


def load_image(path: str, size: int, normalize: str) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    # shorter-side resize then centre crop, the standard eval transform
    w, h = img.size
    scale = (size * 256 // 224) / min(w, h)
    img = img.resize((max(size, round(w * scale)), max(size, round(h * scale))), Image.BILINEAR)
    w, h = img.size
    left, top = (w - size) // 2, (h - size) // 2
    img = img.crop((left, top, left + size, top + size))
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if normalize == "imagenet":
        arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return arr.transpose(2, 0, 1)


def load_batch(folder: str, size: int = 224, normalize: str = "imagenet",
               limit: int | None = None) -> tuple[torch.Tensor, list[str]]:
    paths = list_images(folder, limit)
    batch = np.stack([load_image(p, size, normalize) for p in paths])
    return torch.from_numpy(batch), paths
