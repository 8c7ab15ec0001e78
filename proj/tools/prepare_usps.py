#!/usr/bin/env python3
"""Convert a USPS download into the CSV pair read by `fffkit train --dataset usps`.

Accepted inputs:
  libsvm text files (usps / usps.t, optionally .bz2): labels 1..10, pixels in [-1, 1]
  usps.h5 with train/{data,target} and test/{data,target}: labels 0..9, pixels in [0, 1]

Output rows are `label,p0,...,p255` with labels 0..9 and pixels in [0, 1].
"""

import argparse
import bz2
import csv
import pathlib
import sys

DIM = 256


def open_text(path):
    if path.suffix == ".bz2":
        return bz2.open(path, "rt")
    return open(path, "r")


def read_libsvm(path):
    rows = []
    with open_text(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            label = int(float(parts[0])) - 1
            if not 0 <= label <= 9:
                sys.exit(f"{path}:{lineno}: label {parts[0]} outside 1..10")
            pixels = [0.5] * DIM  # omitted entries are 0 on the [-1, 1] scale
            for tok in parts[1:]:
                idx, val = tok.split(":")
                i = int(idx) - 1
                if not 0 <= i < DIM:
                    sys.exit(f"{path}:{lineno}: feature index {idx} outside 1..{DIM}")
                pixels[i] = (float(val) + 1.0) / 2.0
            rows.append((label, pixels))
    return rows


def read_h5(path):
    try:
        import h5py
    except ImportError:
        sys.exit("reading .h5 needs h5py (pip install h5py)")
    out = {}
    with h5py.File(path, "r") as f:
        for split in ("train", "test"):
            data = f[split]["data"][:]
            target = f[split]["target"][:]
            out[split] = [(int(t), [float(v) for v in row]) for row, t in zip(data, target)]
    return out


def write_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for label, pixels in rows:
            w.writerow([label] + [repr(min(1.0, max(0.0, p))) for p in pixels])
    print(f"wrote {len(rows)} rows to {path}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--libsvm-train", type=pathlib.Path)
    ap.add_argument("--libsvm-test", type=pathlib.Path)
    ap.add_argument("--h5", type=pathlib.Path)
    ap.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("data/usps"))
    args = ap.parse_args()

    if args.h5:
        splits = read_h5(args.h5)
    elif args.libsvm_train and args.libsvm_test:
        splits = {"train": read_libsvm(args.libsvm_train), "test": read_libsvm(args.libsvm_test)}
    else:
        ap.error("give --h5, or both --libsvm-train and --libsvm-test")

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(splits["train"], args.out_dir / "usps_train.csv")
    write_csv(splits["test"], args.out_dir / "usps_test.csv")


if __name__ == "__main__":
    main()
