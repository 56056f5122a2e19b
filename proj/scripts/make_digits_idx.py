#!/usr/bin/env python3
"""Build a source digit archive in IDX format.

Uses scikit-learn's bundled 8x8 digit scans, upscaled to 28x28, so the
toolkit has a self-contained glyph source that needs no downloads. The C++
loader pools 28x28 down to its 14x14 working size.
"""

import argparse
import gzip
import pathlib
import struct

import numpy as np
from PIL import Image
from sklearn.datasets import load_digits


def upscale(img8: np.ndarray) -> np.ndarray:
    # 8x8 with values 0..16 -> 28x28 uint8
    scaled = np.clip(img8 / 16.0 * 255.0, 0, 255).astype(np.uint8)
    return np.asarray(Image.fromarray(scaled).resize((28, 28), Image.BILINEAR))


def write_idx_images(path: pathlib.Path, images: np.ndarray) -> None:
    n, rows, cols = images.shape
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">iiii", 2051, n, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path: pathlib.Path, labels: np.ndarray) -> None:
    with gzip.open(path, "wb") as f:
        f.write(struct.pack(">ii", 2049, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True, help="output directory")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    ds = load_digits()
    images = np.stack([upscale(img) for img in ds.images])
    labels = ds.target

    write_idx_images(out / "train-images-idx3-ubyte.gz", images)
    write_idx_labels(out / "train-labels-idx1-ubyte.gz", labels)
    counts = np.bincount(labels, minlength=10)
    print(f"wrote {len(labels)} digits to {out} (per class: {counts.tolist()})")


if __name__ == "__main__":
    main()
