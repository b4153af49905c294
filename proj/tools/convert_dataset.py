#!/usr/bin/env python3
"""Convert a node-classification graph into a gatpos dataset package.

Input: an .npz file with three arrays
  features  float array, shape (N, F)
  labels    integer array, shape (N,), class ids starting at 0
  edges     integer array, shape (E, 2) or (2, E), undirected edge list

Output: a package directory containing edges.tsv, features.tsv,
labels.tsv and meta.json, as consumed by `gatpos train` and
`gatpos reproduce`. The engine symmetrizes, deduplicates and strips
self-loops on load, so the edge list may be raw.

Example:
  python3 tools/convert_dataset.py chameleon.npz datasets/chameleon
"""

import argparse
import json
import pathlib

import numpy as np


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("npz", help="input .npz with features/labels/edges")
    ap.add_argument("out_dir", help="package directory to create")
    args = ap.parse_args()

    data = np.load(args.npz)
    for key in ("features", "labels", "edges"):
        if key not in data:
            raise SystemExit(f"{args.npz}: missing array '{key}'")

    features = np.asarray(data["features"], dtype=np.float64)
    labels = np.asarray(data["labels"], dtype=np.int64)
    edges = np.asarray(data["edges"], dtype=np.int64)
    if edges.ndim != 2 or 2 not in edges.shape:
        raise SystemExit(f"edges must be (E, 2) or (2, E), got {edges.shape}")
    if edges.shape[0] == 2 and edges.shape[1] != 2:
        edges = edges.T

    n = labels.shape[0]
    if features.shape[0] != n:
        raise SystemExit(
            f"features rows ({features.shape[0]}) != labels ({n})")
    if labels.min() < 0:
        raise SystemExit("labels must be non-negative class ids")
    if edges.min() < 0 or edges.max() >= n:
        raise SystemExit("edge endpoints out of range")

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "edges.tsv", edges, fmt="%d", delimiter="\t")
    np.savetxt(out / "features.tsv", features, fmt="%.17g", delimiter="\t")
    np.savetxt(out / "labels.tsv", labels, fmt="%d")
    meta = {
        "num_nodes": int(n),
        "num_features": int(features.shape[1]),
        "num_classes": int(labels.max()) + 1,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {out}: {n} nodes, {features.shape[1]} features, "
          f"{meta['num_classes']} classes, {edges.shape[0]} edge rows")


if __name__ == "__main__":
    main()
