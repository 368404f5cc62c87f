"""Plain-text matrix, tensor and label files.

Matrix: a header line ``rows cols`` followed by one whitespace-separated row
per line.  Tensor: a header ``I J L`` followed by ``I`` lines, line ``i``
holding ``T[i, :, :]`` with the ``J`` index varying fastest (the transposed
mode-1 unfolding).  Labels: one 1-based integer per line.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..kernels import fold, unfold


def _fmt(v):
    return repr(float(v))


def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        for row in A:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _read_body(path, header_len):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != header_len:
            raise ValueError(f"{path}: expected a {header_len}-field header, got {header}")
        dims = tuple(int(h) for h in header)
        data = np.loadtxt(fh, ndmin=2) if dims[0] else np.zeros((0, 0))
    return dims, data


def read_matrix(path):
    (r, c), data = _read_body(path, 2)
    if data.shape != (r, c):
        raise ValueError(f"{path}: header says {r}x{c}, body is {data.shape[0]}x{data.shape[1]}")
    return data


def write_tensor(path, T):
    T = np.asarray(T, dtype=float)
    I, J, L = T.shape
    rows = unfold(T, 1).T
    with open(path, "w") as fh:
        fh.write(f"{I} {J} {L}\n")
        for row in rows:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def read_tensor(path):
    (I, J, L), data = _read_body(path, 3)
    if data.shape != (I, J * L):
        raise ValueError(f"{path}: header says {I}x{J}x{L}, body is {data.shape}")
    return fold(data.T, 1, (I, J, L))


def write_labels(path, labels):
    with open(path, "w") as fh:
        for v in np.asarray(labels, dtype=int):
            fh.write(f"{v + 1}\n")


def read_labels(path):
    vals = np.loadtxt(path, dtype=int, ndmin=1)
    if vals.size and vals.min() < 1:
        raise ValueError(f"{path}: labels must be 1-based positive integers")
    return vals - 1


def write_ground_truth(directory, gt):
    """Write an instance as text files plus ``truth.json`` metadata."""
    os.makedirs(directory, exist_ok=True)
    j = lambda name: os.path.join(directory, name)  # noqa: E731
    files = {}
    if gt.X.ndim == 3:
        write_tensor(j("X.txt"), gt.X)
        for name in ("A", "B", "C"):
            write_matrix(j(f"{name}.txt"), getattr(gt, name))
            files[name] = f"{name}.txt"
    else:
        write_matrix(j("X.txt"), gt.X)
        write_matrix(j("W.txt"), gt.W)
        files["W"] = "W.txt"
    write_matrix(j("H.txt"), gt.H)
    write_matrix(j("M.txt"), gt.M)
    write_labels(j("labels.txt"), gt.labels)
    np.savetxt(j("outliers.txt"), gt.outlier_mask.astype(int), fmt="%d")
    files.update(X="X.txt", H="H.txt", M="M.txt", labels="labels.txt",
                 outliers="outliers.txt")
    meta = {"params": gt.params.to_dict(), "files": files}
    with open(j("truth.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return files
