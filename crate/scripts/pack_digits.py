#!/usr/bin/env python3
"""Pack the 10,000 MNIST digits bundled with the npm `mnist` package into IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/pack_digits.py package/src/digits data/digits

Writes gzipped IDX files: an 8,000-sample train split and a 2,000-sample test split,
interleaved with a fixed permutation so both splits cover every class.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim]) + b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header)
        f.write(array.tobytes())


def main(src, dst):
    images, labels = [], []
    for digit in range(10):
        flat = np.array(json.loads(Path(src, f"{digit}.json").read_text())["data"])
        pix = np.round(flat * 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(pix)
        labels.append(np.full(len(pix), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(20240101).permutation(len(labels))
    images, labels = images[order], labels[order]
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", images[:8000])
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[:8000])
    write_idx(out / "t10k-images-idx3-ubyte.gz", images[8000:])
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[8000:])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
