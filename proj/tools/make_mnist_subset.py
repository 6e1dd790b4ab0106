#!/usr/bin/env python3
"""Build IDX files from the 5000-digit MNIST subset bundled in the mlxtend wheel.

The sandbox used for development has no route to the usual MNIST mirrors, but
PyPI is reachable. mlxtend ships 500 training digits per class as CSV; this
script rewrites them as standard IDX (magic 2051/2049, big-endian sizes).

    pip download --no-deps mlxtend -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__)
        return 2
    wheel, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = [r.split(",") for r in text.strip().splitlines()]
    pixels = bytearray()
    labels = bytearray()
    for r in rows:
        pixels.extend(int(float(v)) for v in r[:-1])
        labels.append(int(float(r[-1])))
    n = len(rows)
    (out / "train-images-idx3-ubyte").write_bytes(struct.pack(">IIII", 2051, n, 28, 28) + bytes(pixels))
    (out / "train-labels-idx1-ubyte").write_bytes(struct.pack(">II", 2049, n) + bytes(labels))
    print(f"wrote {n} digits to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
