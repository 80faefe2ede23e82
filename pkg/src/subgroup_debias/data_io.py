"""Dataset parsing and encoding.

Primary on-disk format: CSV with header y,t,s,w1,...,wk where y and t are
0/1, s is a subgroup label in 1..K (no interior gaps; K is the largest
label) and the w columns are numeric covariates. Encoding expands this to the regression
design: z_l = t * 1(s = l) for every level l, and x = [intercept,
1(s = 1..K-1), w] with level K the reference. No plain treatment column is
added; it would be collinear with the z block.

A second, lossless "encoded" format (arbitrary numeric CSV plus a JSON
sidecar declaring the y/z/x roles and forced columns) carries simulated
designs whose subgroups are not a partition.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .design import EncodedDesign
from .errors import (
    DataError,
    DegenerateCellWarning,
    EmptyFile,
    MalformedRow,
    NonBinaryOutcome,
    UnknownColumn,
)

__all__ = [
    "SubgroupData",
    "parse_subgroup_csv",
    "encode_subgroup_data",
    "load_design",
    "parse_encoded_csv",
    "write_encoded_csv",
]


@dataclass
class SubgroupData:
    y: np.ndarray
    t: np.ndarray
    s: np.ndarray
    w: np.ndarray
    w_labels: list


def _parse_binary(text, row_number, name):
    try:
        v = float(text)
    except ValueError:
        raise MalformedRow(row_number, f"{name}={text!r} is not numeric") from None
    if v not in (0.0, 1.0):
        raise NonBinaryOutcome(f"row {row_number}: {name}={text!r} must be 0 or 1")
    return v


def parse_subgroup_csv(path):
    """Read and validate the y,t,s,w1..wk format."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} has no header")
        header = [h.strip() for h in header]
        if header[:3] != ["y", "t", "s"]:
            raise UnknownColumn(f"header must start with y,t,s; got {header[:3]}")
        expected_w = [f"w{j}" for j in range(1, len(header) - 2)]
        if header[3:] != expected_w:
            bad = [h for h in header[3:] if h not in expected_w]
            raise UnknownColumn(f"unexpected covariate columns {bad or header[3:]}; "
                                f"expected w1..w{len(header) - 3}")

        k = len(header) - 3
        y, t, s, w = [], [], [], []
        for row_number, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if len(row) != len(header):
                raise MalformedRow(row_number, f"expected {len(header)} fields, got {len(row)}")
            y.append(_parse_binary(row[0], row_number, "y"))
            t.append(_parse_binary(row[1], row_number, "t"))
            try:
                sv = float(row[2])
            except ValueError:
                raise MalformedRow(row_number, f"s={row[2]!r} is not numeric") from None
            if sv != int(sv) or sv < 1:
                raise MalformedRow(row_number, f"s={row[2]!r} must be a positive integer label")
            s.append(int(sv))
            try:
                w.append([float(v) for v in row[3:]])
            except ValueError:
                raise MalformedRow(row_number, "covariate fields must be numeric") from None

    if not y:
        raise EmptyFile(f"{path} has no data rows")
    y = np.asarray(y)
    t = np.asarray(t)
    s = np.asarray(s, dtype=int)
    w = np.asarray(w, dtype=np.float64).reshape(len(y), k)

    levels = int(s.max())
    present = set(np.unique(s).tolist())
    # interior gaps are errors; unused low labels only degrade to thin cells
    missing = sorted(set(range(int(s.min()), levels + 1)) - present)
    if missing:
        raise DataError(f"subgroup labels must be contiguous up to {levels}; missing {missing}")

    thin = [(l, int(tv)) for l in range(1, levels + 1) for tv in (0, 1)
            if np.count_nonzero((s == l) & (t == tv)) < 2]
    if thin:
        warnings.warn(f"subgroup-by-treatment cells with fewer than 2 observations: {thin}",
                      DegenerateCellWarning, stacklevel=2)

    return SubgroupData(y=y, t=t, s=s, w=w,
                        w_labels=[f"w{j}" for j in range(1, k + 1)])


def encode_subgroup_data(data):
    """Expand SubgroupData to the EncodedDesign regression layout."""
    n = data.y.shape[0]
    levels = int(data.s.max())
    z = np.zeros((n, levels))
    for l in range(1, levels + 1):
        z[:, l - 1] = data.t * (data.s == l)
    indic = np.zeros((n, levels - 1))
    for l in range(1, levels):
        indic[:, l - 1] = data.s == l
    x = np.hstack([np.ones((n, 1)), indic, data.w])
    z_labels = [f"z:s={l}" for l in range(1, levels + 1)]
    x_labels = ["intercept"] + [f"s={l}" for l in range(1, levels)] + list(data.w_labels)
    return EncodedDesign(y=data.y, z=z, x=x, z_labels=z_labels,
                         x_labels=x_labels, forced=tuple(range(levels)))


def parse_encoded_csv(path, sidecar):
    """Read a wide numeric CSV with a JSON sidecar declaring column roles.

    Sidecar keys: "y" (column name), "z" (list of names), "x" (list of
    names), "forced" (list of x positions).
    """
    path, sidecar = Path(path), Path(sidecar)
    roles = json.loads(sidecar.read_text(encoding="utf-8"))
    for key in ("y", "z", "x"):
        if key not in roles:
            raise DataError(f"sidecar {sidecar} missing role {key!r}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyFile(f"{path} has no header")
        header = [h.strip() for h in header]
        known = {roles["y"], *roles["z"], *roles["x"]}
        unknown = [h for h in header if h not in known]
        if unknown:
            raise UnknownColumn(f"columns {unknown} not declared in {sidecar}")
        missing = [c for c in known if c not in header]
        if missing:
            raise DataError(f"declared columns missing from {path}: {sorted(missing)}")
        col = {name: i for i, name in enumerate(header)}

        rows = []
        for row_number, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if len(row) != len(header):
                raise MalformedRow(row_number, f"expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise MalformedRow(row_number, "all fields must be numeric") from None
    if not rows:
        raise EmptyFile(f"{path} has no data rows")
    arr = np.asarray(rows, dtype=np.float64)

    y = arr[:, col[roles["y"]]]
    bad = ~np.isin(y, (0.0, 1.0))
    if np.any(bad):
        raise NonBinaryOutcome(f"y must be 0/1; first offending data row "
                               f"{int(np.flatnonzero(bad)[0]) + 1}")
    z = arr[:, [col[c] for c in roles["z"]]]
    x = arr[:, [col[c] for c in roles["x"]]]
    forced = tuple(roles.get("forced", (0,)))
    return EncodedDesign(y=y, z=z, x=x, z_labels=list(roles["z"]),
                         x_labels=list(roles["x"]), forced=forced)


def write_encoded_csv(design, path, sidecar):
    """Write a design losslessly as wide CSV + role sidecar."""
    path, sidecar = Path(path), Path(sidecar)
    header = ["y"] + list(design.z_labels) + list(design.x_labels)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(design.n):
            row = [design.y[i], *design.z[i], *design.x[i]]
            writer.writerow([repr(float(v)) for v in row])
    sidecar.write_text(json.dumps({
        "y": "y",
        "z": list(design.z_labels),
        "x": list(design.x_labels),
        "forced": list(design.forced),
    }, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_design(path, sidecar=None):
    """Dispatch: sidecar present means the encoded format, else y,t,s,w."""
    if sidecar is not None:
        return parse_encoded_csv(path, sidecar)
    return encode_subgroup_data(parse_subgroup_csv(path))
