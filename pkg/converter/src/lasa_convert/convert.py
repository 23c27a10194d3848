"""mat-file v5 -> CSV conversion for handwriting demonstration archives.

Each shape file holds a ``demos`` cell array of structs with fields
``pos`` (2xT), ``t`` (1xT) and ``vel`` (2xT).  Output is one CSV per shape
in the schema ``demo,t,x1,x2,v1,v2`` (full 17-significant-digit decimal
text, so the numbers round-trip bitwise) plus a manifest JSON.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import loadmat

__all__ = ["LasaShapeArchive", "read_shape", "convert"]

EXPECTED_DEMOS = 7


@dataclass
class LasaShapeArchive:
    name: str
    demos: list  # per demo: dict with t (T,), pos (T, 2), vel (T, 2)


def _as_demo_dict(rec):
    try:
        pos = np.atleast_2d(np.asarray(rec["pos"], dtype=float))
        vel = np.atleast_2d(np.asarray(rec["vel"], dtype=float))
        t = np.asarray(rec["t"], dtype=float).ravel()
    except (KeyError, IndexError, ValueError, TypeError) as exc:
        raise ValueError(f"demo record is missing pos/vel/t fields: {exc}") from exc
    # archive stores coordinates as rows (2xT); emit samples as rows
    if pos.shape[0] == 2 and pos.shape[1] != 2:
        pos = pos.T
    if vel.shape[0] == 2 and vel.shape[1] != 2:
        vel = vel.T
    if not (len(t) == len(pos) == len(vel)):
        raise ValueError("pos/vel/t lengths disagree")
    if np.any(np.diff(t) <= 0.0):
        raise ValueError("time vector is not strictly increasing")
    if not np.all(np.isfinite(vel)) or not np.all(np.isfinite(pos)):
        raise ValueError("non-finite entries in demo")
    return {"t": t, "pos": pos, "vel": vel}


def read_shape(path) -> LasaShapeArchive:
    mat = loadmat(path, simplify_cells=True)
    if "demos" not in mat:
        raise ValueError(f"{path}: no 'demos' variable in mat file")
    raw = mat["demos"]
    if isinstance(raw, dict):  # single-demo cell collapses under simplify_cells
        raw = [raw]
    demos = [_as_demo_dict(rec) for rec in raw]
    name = os.path.splitext(os.path.basename(str(path)))[0]
    if len(demos) != EXPECTED_DEMOS:
        warnings.warn(f"{name}: expected {EXPECTED_DEMOS} demos, found {len(demos)}")
    return LasaShapeArchive(name=name, demos=demos)


def _write_csv(archive: LasaShapeArchive, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["demo", "t", "x1", "x2", "v1", "v2"])
        for k, demo in enumerate(archive.demos):
            for t, p, v in zip(demo["t"], demo["pos"], demo["vel"]):
                writer.writerow(
                    [k, repr(float(t)), repr(float(p[0])), repr(float(p[1])),
                     repr(float(v[0])), repr(float(v[1]))]
                )


def convert(input_path, out_dir):
    """Convert one mat file or every mat file in a directory.

    Returns the manifest dict that is also written to ``manifest.json``.
    """
    if os.path.isdir(input_path):
        files = sorted(
            os.path.join(input_path, f)
            for f in os.listdir(input_path)
            if f.lower().endswith(".mat")
        )
        if not files:
            raise ValueError(f"no .mat files in {input_path}")
    else:
        files = [input_path]
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"shapes": []}
    for path in files:
        archive = read_shape(path)
        out_csv = os.path.join(out_dir, f"{archive.name}.csv")
        _write_csv(archive, out_csv)
        manifest["shapes"].append(
            {
                "name": archive.name,
                "n_demos": len(archive.demos),
                "n_samples": [len(demo["t"]) for demo in archive.demos],
                "csv": os.path.basename(out_csv),
            }
        )
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest
