#!/usr/bin/env python3
"""Convert the digits shipped in the npm `mnist` package into IDX files.

The official MNIST mirrors are not always reachable; the npm package
(https://registry.npmjs.org/mnist/-/mnist-1.1.0.tgz) bundles 10,000 real
MNIST digits as JSON with pixel intensities in [0, 1]. This script maps them
back to bytes (round(255 * v)), interleaves the digit classes with a fixed
shuffle, and writes gzipped IDX image/label files.

usage: mnist_npm_to_idx.py <package/src/digits> <out-dir>
"""
import gzip
import json
import os
import random
import struct
import sys


def main():
    src, out = sys.argv[1], sys.argv[2]
    samples = []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for i in range(len(flat) // 784):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in flat[i * 784:(i + 1) * 784])
            samples.append((pixels, digit))
    random.Random(0).shuffle(samples)
    os.makedirs(out, exist_ok=True)
    n = len(samples)
    with gzip.GzipFile(os.path.join(out, "images-idx3-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with gzip.GzipFile(os.path.join(out, "labels-idx1-ubyte.gz"), "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {n} samples to {out}")


if __name__ == "__main__":
    main()
