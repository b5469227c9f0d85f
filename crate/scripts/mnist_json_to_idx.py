#!/usr/bin/env python3
"""Convert the digit JSON files of the `mnist` npm package into IDX files.

The npm package ships 10,000 MNIST digits as per-class JSON arrays of
pixel intensities in [0, 1]. This writes a fixed, seeded 8000/2000 split as

    train-images-idx3-ubyte  train-labels-idx1-ubyte
    t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte

Usage: mnist_json_to_idx.py <package>/src/digits <out-dir> [--seed N]
"""
import argparse
import json
import random
import struct
from pathlib import Path

SIDE = 28


def load(digits_dir: Path):
    samples = []
    for label in range(10):
        raw = json.loads((digits_dir / f"{label}.json").read_text())["data"]
        count = len(raw) // (SIDE * SIDE)
        for i in range(count):
            pixels = raw[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]
            samples.append((bytes(min(255, max(0, round(v * 255))) for v in pixels), label))
    return samples


def write(out: Path, prefix: str, samples):
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), SIDE, SIDE))
        for pixels, _ in samples:
            f.write(pixels)
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train", type=int, default=8000)
    args = parser.parse_args()

    samples = load(args.digits_dir)
    random.Random(args.seed).shuffle(samples)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write(args.out_dir, "train", samples[:args.train])
    write(args.out_dir, "t10k", samples[args.train:])
    print(f"wrote {args.train} train / {len(samples) - args.train} test samples to {args.out_dir}")


if __name__ == "__main__":
    main()
