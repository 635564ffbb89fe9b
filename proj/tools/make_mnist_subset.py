#!/usr/bin/env python3
"""Build a gzipped IDX copy of the 10 000-digit MNIST subset shipped in the
`mnist` npm package (https://www.npmjs.com/package/mnist, MIT).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist

Pixels are stored in the package as floats in [0, 1] rounded to three
decimals; they are mapped back to bytes with round(v * 255). Digits are
interleaved with a fixed permutation so that any prefix holds every class.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def main() -> int:
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    samples = []
    for label in range(10):
        flat = json.loads((src / f"{label}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for k in range(len(flat) // 784):
            px = bytes(min(255, max(0, round(v * 255))) for v in flat[784 * k:784 * (k + 1)])
            samples.append((px, label))
    random.Random(20240917).shuffle(samples)
    dst.mkdir(parents=True, exist_ok=True)
    count = len(samples)
    with gzip.GzipFile(dst / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        for px, _ in samples:
            f.write(px)
    with gzip.GzipFile(dst / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, count))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {count} images to {dst}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
