#!/usr/bin/env python3
"""Generate the 200-sample synthetic IDX fixture used by offline tests.

Each class k in 0..9 draws a bright horizontal bar at row 3 + 2k and a vertical bar at
column 3 + 2k, plus uniform speckle noise. Output is uncompressed IDX.
"""
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim]) + b"".join(struct.pack(">I", d) for d in array.shape)
    Path(path).write_bytes(header + array.tobytes())


def main(dst, n=200):
    rng = np.random.default_rng(7)
    labels = np.arange(n, dtype=np.uint8) % 10
    images = np.zeros((n, 28, 28), dtype=np.uint8)
    for i, k in enumerate(labels):
        img = (rng.random((28, 28)) < 0.05) * rng.integers(0, 128, (28, 28))
        img[3 + 2 * k, 4:24] = 255
        img[4:24, 3 + 2 * k] = 200
        images[i] = img
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "fixture-images-idx3-ubyte", images)
    write_idx(out / "fixture-labels-idx1-ubyte", labels)


if __name__ == "__main__":
    main(sys.argv[1])
