#!/usr/bin/env python3
"""Convert the digit subset shipped in the npm `mnist` package into IDX files.

The npm package stores each class as src/digits/<d>.json with a flat list of
784 intensities in [0, 1] per image. This writes train/t10k IDX pairs so the
C++ loader and CLI can run on machines without the full dataset.
"""
import argparse
import json
import pathlib
import random
import struct


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package_dir", help="unpacked npm mnist package (contains src/digits)")
    ap.add_argument("out_dir")
    ap.add_argument("--test-fraction", type=float, default=0.2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        blob = json.loads((pathlib.Path(args.package_dir) / "src" / "digits" / f"{digit}.json").read_text())
        flat = blob["data"]
        for k in range(len(flat) // 784):
            px = [min(255, max(0, round(v * 255))) for v in flat[k * 784:(k + 1) * 784]]
            samples.append((px, digit))

    random.Random(args.seed).shuffle(samples)
    n_test = int(len(samples) * args.test_fraction)
    test, train = samples[:n_test], samples[n_test:]

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"train={len(train)} test={len(test)} -> {out}")


if __name__ == "__main__":
    main()
