#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the npm `mnist` package into
gzipped IDX files (8,000 train / 2,000 test, class-interleaved, seeded shuffle).

usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_subset_from_npm.py package/src/digits data/mnist10k
"""
import gzip
import json
import os
import random
import struct
import sys


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main(src, dst, n_train=8000, seed=2019):
    samples = []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        assert len(flat) % 784 == 0
        for k in range(len(flat) // 784):
            px = [min(255, max(0, round(v * 255))) for v in flat[k * 784:(k + 1) * 784]]
            samples.append((px, digit))
    random.Random(seed).shuffle(samples)
    os.makedirs(dst, exist_ok=True)
    for name, part in (("train", samples[:n_train]), ("t10k", samples[n_train:])):
        write_idx(os.path.join(dst, f"{name}-images-idx3-ubyte.gz"), 0x803,
                  [len(part), 28, 28], [b for px, _ in part for b in px])
        write_idx(os.path.join(dst, f"{name}-labels-idx1-ubyte.gz"), 0x801,
                  [len(part)], [lbl for _, lbl in part])
        print(name, len(part))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
