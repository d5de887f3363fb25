"""Plain-text artifacts: vectors, sparse matrices, logs, JSON manifests."""
import json
import math
import os

import numpy as np
import scipy.sparse as sp


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _finite(o):
    """JSON has no inf/nan; encode them as strings."""
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, dict):
        return {k: _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    return o


def write_json(path, data):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_finite(data), fh, indent=2, default=_json_default)
        fh.write("\n")
    return path


def write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def write_vector(path, v):
    """One value per line, repr precision."""
    return write_text(path, "".join(f"{float(x)!r}\n" for x in np.asarray(v).ravel()))


def read_vector(path):
    with open(path) as fh:
        return np.array([float(s) for s in fh.read().split()])


def write_coo(path, A):
    """``nrows ncols nnz`` header then ``i j value`` triples, row-major order."""
    A = sp.coo_matrix(A)
    order = np.lexsort((A.col, A.row))
    lines = [f"{A.shape[0]} {A.shape[1]} {A.nnz}\n"]
    lines += [f"{i} {j} {float(v)!r}\n" for i, j, v in zip(A.row[order], A.col[order], A.data[order])]
    return write_text(path, "".join(lines))


def read_coo(path):
    with open(path) as fh:
        m, n, nnz = (int(s) for s in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(m, n))
