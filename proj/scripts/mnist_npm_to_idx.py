#!/usr/bin/env python3
"""Convert the digit bundle shipped in the npm `mnist` package into IDX files.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_npm_to_idx.py package data/

The package stores 10,000 MNIST digits as pixel/255 rounded to three
decimals; rounding back to bytes recovers the original values exactly.
"""
import argparse
import gzip
import json
import random
import struct
from pathlib import Path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        raw = json.loads((args.package_dir / "src" / "digits" / f"{digit}.json").read_text())["data"]
        count = len(raw) // 784
        for i in range(count):
            pix = bytes(min(255, max(0, round(v * 255))) for v in raw[i * 784:(i + 1) * 784])
            samples.append((pix, digit))
    random.Random(args.seed).shuffle(samples)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    n = len(samples)
    with gzip.GzipFile(args.out_dir / "mnist10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for pix, _ in samples:
            f.write(pix)
    with gzip.GzipFile(args.out_dir / "mnist10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(lbl for _, lbl in samples))
    print(f"wrote {n} samples to {args.out_dir}")


if __name__ == "__main__":
    main()
