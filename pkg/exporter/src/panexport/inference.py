"""Per-image softmax/logit dumps (JSON lines) for the bias machinery."""

import json
import os
import tempfile

import numpy as np
import torch


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted.astype(np.float64))
    return e / e.sum(axis=-1, keepdims=True)


@torch.no_grad()
def run_variant_inference(model, batch: torch.Tensor, paths, destination: str,
                          chunk: int = 16) -> int:
    """Run the model and write one JSON line per image; returns the count."""
    model.eval()
    lines = []
    index = 0
    for start in range(0, batch.shape[0], chunk):
        logits = model(batch[start : start + chunk]).detach().cpu().to(torch.float32).numpy()
        probs = softmax(logits)
        for row in range(logits.shape[0]):
            lines.append(
                json.dumps(
                    {
                        "index": index,
                        "path": os.path.basename(paths[index]) if paths else str(index),
                        "logits": [float(v) for v in logits[row]],
                        "probs": [float(v) for v in probs[row]],
                    }
                )
            )
            index += 1
    directory = os.path.dirname(os.path.abspath(destination)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".panexport-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, destination)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return index


def load_jsonl(path: str) -> tuple[np.ndarray, np.ndarray]:
    """(probs, logits) arrays from a dump, ordered by the stored index."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    rows.sort(key=lambda r: r["index"])
    probs = np.array([r["probs"] for r in rows], dtype=np.float64)
    logits = np.array([r["logits"] for r in rows], dtype=np.float64)
    return probs, logits
