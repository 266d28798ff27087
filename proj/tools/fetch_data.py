#!/usr/bin/env python3
"""Builds the dataset files read by the nmd experiment presets.

    data/mnist_500.csv   500 x 784, 50 images per digit, one image per row
    data/cbcl.csv        2429 x 361, one 19x19 face per row
    data/mit_logo.pgm    the logo as an 8-bit graymap

Each source is either a local path or a URL. Nothing is downloaded unless a
URL is given. The MNIST subset is drawn with --seed (default 0).

    python3 tools/fetch_data.py \
        --mnist-images train-images-idx3-ubyte.gz \
        --mnist-labels train-labels-idx1-ubyte.gz \
        --cbcl faces/train/face \
        --mit-logo mit_logo.png
"""

import argparse
import gzip
import io
import pathlib
import sys
import urllib.request

import numpy as np
from PIL import Image


def read_source(src):
    if src.startswith(("http://", "https://")):
        with urllib.request.urlopen(src, timeout=60) as resp:
            return resp.read()
    return pathlib.Path(src).read_bytes()


def maybe_gunzip(raw):
    return gzip.decompress(raw) if raw[:2] == b"\x1f\x8b" else raw


def parse_idx(raw):
    raw = maybe_gunzip(raw)
    ndim = raw[3]
    dims = [int.from_bytes(raw[4 + 4 * k : 8 + 4 * k], "big") for k in range(ndim)]
    return np.frombuffer(raw, dtype=np.uint8, offset=4 + 4 * ndim).reshape(dims)


def mnist_subset(images_src, labels_src, per_digit, seed):
    images = parse_idx(read_source(images_src)).reshape(-1, 784)
    labels = parse_idx(read_source(labels_src))
    rng = np.random.default_rng(seed)
    rows = []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        rows.extend(np.sort(rng.choice(idx, size=per_digit, replace=False)))
    return images[rows]


def cbcl_faces(src):
    # Sorted file order keeps the row order reproducible.
    files = sorted(p for p in pathlib.Path(src).iterdir() if p.suffix.lower() == ".pgm")
    if not files:
        sys.exit(f"no .pgm files under {src}")
    faces = [np.asarray(Image.open(p).convert("L"), dtype=np.uint8).reshape(-1) for p in files]
    return np.stack(faces)


def write_csv(path, matrix):
    np.savetxt(path, matrix, fmt="%d", delimiter=",")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data", help="output directory (default data)")
    ap.add_argument("--mnist-images", help="train-images-idx3-ubyte[.gz], path or URL")
    ap.add_argument("--mnist-labels", help="train-labels-idx1-ubyte[.gz], path or URL")
    ap.add_argument("--per-digit", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0, help="MNIST subset seed")
    ap.add_argument("--cbcl", help="directory of CBCL training face .pgm files")
    ap.add_argument("--mit-logo", help="logo image (any Pillow format), path or URL")
    args = ap.parse_args()

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    done = []
    if args.mnist_images and args.mnist_labels:
        X = mnist_subset(args.mnist_images, args.mnist_labels, args.per_digit, args.seed)
        write_csv(out / "mnist_500.csv", X)
        done.append(f"mnist_500.csv {X.shape[0]}x{X.shape[1]}")
    if args.cbcl:
        X = cbcl_faces(args.cbcl)
        write_csv(out / "cbcl.csv", X)
        done.append(f"cbcl.csv {X.shape[0]}x{X.shape[1]}")
    if args.mit_logo:
        img = Image.open(io.BytesIO(read_source(args.mit_logo))).convert("L")
        img.save(out / "mit_logo.pgm")
        done.append(f"mit_logo.pgm {img.height}x{img.width}")
    if not done:
        ap.error("nothing to do; give at least one source")
    for line in done:
        print(f"wrote {out / line}")


if __name__ == "__main__":
    main()
