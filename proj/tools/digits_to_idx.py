#!/usr/bin/env python3
"""Write scikit-learn's 8x8 handwritten digits as MNIST-named IDX files.

The result is a small stand-in for MNIST when the real files are absent:
    python3 tools/digits_to_idx.py OUT_DIR [--test-fraction 0.2]
"""

import argparse
import gzip
import pathlib
import struct

import numpy as np


def find_digits_csv() -> pathlib.Path:
    import sklearn

    return pathlib.Path(sklearn.__file__).parent / "datasets" / "data" / "digits.csv.gz"


def write_idx(path: pathlib.Path, array: np.ndarray, magic: int) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.astype(np.uint8).tobytes())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out_dir", type=pathlib.Path)
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--source", type=pathlib.Path, default=None, help="digits.csv.gz (default: from sklearn)")
    args = parser.parse_args()

    with gzip.open(args.source or find_digits_csv(), "rt") as f:
        data = np.loadtxt(f, delimiter=",")
    images = np.rint(data[:, :64] * (255.0 / 16.0)).reshape(-1, 8, 8)
    labels = data[:, 64].astype(np.uint8)
    split = int(round(len(labels) * (1.0 - args.test_fraction)))

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train-images-idx3-ubyte", images[:split], 0x803)
    write_idx(args.out_dir / "train-labels-idx1-ubyte", labels[:split], 0x801)
    write_idx(args.out_dir / "t10k-images-idx3-ubyte", images[split:], 0x803)
    write_idx(args.out_dir / "t10k-labels-idx1-ubyte", labels[split:], 0x801)
    print(f"wrote {split} training and {len(labels) - split} test images to {args.out_dir}")


if __name__ == "__main__":
    main()
