#!/usr/bin/env python3
"""Fetch the 10k-sample MNIST subset bundled in the npm `mnist` package and
convert it to gzipped IDX files under data/mnist/.

The npm package (MIT, https://www.npmjs.com/package/mnist) ships 10,000
28x28 grayscale digits as JSON, grouped by class, with pixel values already
scaled to [0,1]. We quantize back to bytes, shuffle with a fixed seed, and
split 8,000 train / 2,000 test.

Usage:
    python3 scripts/fetch_mnist.py [--tarball mnist-1.1.0.tgz] [--out data/mnist]

Without --tarball, runs `npm pack mnist` in a temp directory.
"""

import argparse
import gzip
import json
import pathlib
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

TRAIN_COUNT = 8000
SPLIT_SEED = 20240915


def load_digits(pkg_root: pathlib.Path):
    samples = []  # (label, bytes)
    for digit in range(10):
        flat = json.loads((pkg_root / "src" / "digits" / f"{digit}.json").read_text())["data"]
        if len(flat) % 784 != 0:
            sys.exit(f"digit {digit}: unexpected flat length {len(flat)}")
        for i in range(0, len(flat), 784):
            px = bytes(min(255, max(0, round(v * 255))) for v in flat[i : i + 784])
            samples.append((digit, px))
    return samples


def write_idx_pair(samples, images_path: pathlib.Path, labels_path: pathlib.Path):
    # mtime=0 keeps the .gz byte-stable across regenerations
    with open(images_path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">iiii", 0x00000803, len(samples), 28, 28))
        for _, px in samples:
            f.write(px)
    with open(labels_path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">ii", 0x00000801, len(samples)))
        f.write(bytes(label for label, _ in samples))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tarball", help="pre-downloaded mnist-*.tgz (skips npm pack)")
    ap.add_argument("--out", default="data/mnist")
    args = ap.parse_args()

    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        if args.tarball:
            tarball = pathlib.Path(args.tarball)
        else:
            subprocess.run(["npm", "pack", "mnist"], cwd=tmp, check=True,
                           stdout=subprocess.DEVNULL)
            tarball = next(tmp.glob("mnist-*.tgz"))
        with tarfile.open(tarball) as tf:
            tf.extractall(tmp / "pkg")
        samples = load_digits(tmp / "pkg" / "package")

    if len(samples) != 10000:
        sys.exit(f"expected 10000 samples, got {len(samples)}")

    random.Random(SPLIT_SEED).shuffle(samples)
    train, test = samples[:TRAIN_COUNT], samples[TRAIN_COUNT:]

    write_idx_pair(train, out_dir / "train-images-idx3-ubyte.gz",
                   out_dir / "train-labels-idx1-ubyte.gz")
    write_idx_pair(test, out_dir / "t10k-images-idx3-ubyte.gz",
                   out_dir / "t10k-labels-idx1-ubyte.gz")
    for label, name in [(train, "train"), (test, "test")]:
        counts = [0] * 10
        for l, _ in label:
            counts[l] += 1
        print(f"{name}: {len(label)} samples, per-class {counts}")


if __name__ == "__main__":
    main()
