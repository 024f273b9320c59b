#!/usr/bin/env python3
"""Regenerate data/digits/*.idx from scikit-learn's bundled 8x8 digits.

The four IDX files checked into data/digits/ are produced by this script.
Deterministic: fixed shuffle seed, fixed 80/20 split.
"""
import struct
import pathlib

import numpy as np
from sklearn.datasets import load_digits

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "digits"
SEED = 20160219
TRAIN_FRACTION = 0.8


def write_images(path, imgs):
    n, h, w = imgs.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(imgs.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    digits = load_digits()
    imgs = np.round(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    rng = np.random.RandomState(SEED)
    order = rng.permutation(len(labels))
    imgs, labels = imgs[order], labels[order]

    n_train = int(round(TRAIN_FRACTION * len(labels)))
    OUT.mkdir(parents=True, exist_ok=True)
    write_images(OUT / "digits-train-images.idx3", imgs[:n_train])
    write_labels(OUT / "digits-train-labels.idx1", labels[:n_train])
    write_images(OUT / "digits-test-images.idx3", imgs[n_train:])
    write_labels(OUT / "digits-test-labels.idx1", labels[n_train:])
    print(f"wrote {n_train} train / {len(labels) - n_train} test images to {OUT}")


if __name__ == "__main__":
    main()
