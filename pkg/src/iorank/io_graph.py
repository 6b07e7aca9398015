"""Input-output matrices: validation, norms and file formats.

An input-output linkage matrix ``W`` is square and nonnegative with a zero
diagonal; ``w[i, j]`` is the share of firm ``i``'s intermediate inputs bought
from firm ``j``, so rows sum to one.  Directed-chain networks are allowed to be
row-substochastic (a firm at the head of a chain has no supplier), which is
what ``mode="substochastic"`` accepts.

Two file formats are supported:

``dense-csv``
    ``n`` lines of ``n`` comma separated decimals.
``edge-json``
    ``{"n": int, "edges": [{"i": int, "j": int, "w": float}, ...]}`` with
    0-based indices; unlisted entries are zero.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidP,
    NegativeEntry,
    NoConvergence,
    NonSquare,
    NonzeroDiagonal,
    ParseError,
    RowSumViolation,
    ValidationError,
    ZeroRow,
)

ROW_SUM_TOL = 1e-9
MODES = ("strict", "lenient", "substochastic")
FORMATS = ("dense-csv", "edge-json")


class IoMatrix:
    """Immutable, validated input-output matrix.

    Build instances through :func:`validate` (or the loaders); the
    constructor assumes its argument has already been checked.
    """

    __slots__ = ("_w", "_mode")

    def __init__(self, w: np.ndarray, mode: str = "strict"):
        arr = np.array(w, dtype=float, copy=True)
        arr.setflags(write=False)
        self._w = arr
        self._mode = mode

    @property
    def w(self) -> np.ndarray:
        """Read-only dense entries."""
        return self._w

    @property
    def n(self) -> int:
        return self._w.shape[0]

    @property
    def mode(self) -> str:
        return self._mode

    @property
    def is_stochastic(self) -> bool:
        return bool(np.all(np.abs(self._w.sum(axis=1) - 1.0) <= ROW_SUM_TOL))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._w
        return self._w.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, IoMatrix):
            return NotImplemented
        return np.array_equal(self._w, other._w)

    def __hash__(self):
        return hash(self._w.tobytes())

    def __repr__(self):
        return f"IoMatrix(n={self.n}, mode={self._mode!r})"


def _as_square(m) -> np.ndarray:
    if isinstance(m, IoMatrix):
        return m.w
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise NonSquare(f"expected a nonempty square matrix, got shape {arr.shape}")
    return arr


def validate(m, mode: str = "strict") -> IoMatrix:
    """Check ``m`` against the input-output invariants and wrap it.

    ``strict`` requires a zero diagonal and unit row sums (within 1e-9).
    ``lenient`` zeroes the diagonal and divides each row by its sum; an
    all-zero row raises :class:`ZeroRow` rather than being patched.
    ``substochastic`` requires a zero diagonal and row sums at most one.
    """
    if mode not in MODES:
        raise ValidationError(f"unknown validation mode {mode!r}")
    arr = _as_square(m)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix has non-finite entries")
    if np.any(arr < 0):
        i, j = np.argwhere(arr < 0)[0]
        raise NegativeEntry(f"negative entry w[{i},{j}] = {arr[i, j]!r}")

    if mode == "lenient":
        arr = arr.copy()
        np.fill_diagonal(arr, 0.0)
        sums = arr.sum(axis=1)
        zero = np.flatnonzero(sums == 0)
        if zero.size:
            raise ZeroRow(f"row {zero[0]} has no off-diagonal weight")
        return IoMatrix(arr / sums[:, None], "strict")

    diag = np.diag(arr)
    if np.any(diag != 0):
        i = int(np.flatnonzero(diag)[0])
        raise NonzeroDiagonal(f"diagonal entry w[{i},{i}] = {diag[i]!r} must be zero")
    sums = arr.sum(axis=1)
    if mode == "strict":
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            i = int(bad[0])
            raise RowSumViolation(f"row {i} sums to {sums[i]!r}, expected 1")
    else:
        bad = np.flatnonzero(sums > 1.0 + ROW_SUM_TOL)
        if bad.size:
            i = int(bad[0])
            raise RowSumViolation(f"row {i} sums to {sums[i]!r} > 1")
    return IoMatrix(arr, mode)


def from_triplets(n: int, triplets: Iterable[tuple[int, int, float]], mode: str = "strict") -> IoMatrix:
    """Densify a sparse ``(i, j, w)`` listing and validate it."""
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}")
    arr = np.zeros((n, n))
    seen = set()
    for i, j, w in triplets:
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"edge ({i}, {j}) out of range for n={n}")
        if (i, j) in seen:
            raise ParseError(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
        arr[i, j] = w
    return validate(arr, mode)


def ones(n: int) -> np.ndarray:
    return np.ones(n)


def check_alpha(alpha: float) -> float:
    """Return ``alpha`` as a float after checking it is a labor share in (0, 1)."""
    a = float(alpha)
    if not 0.0 < a < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha!r}")
    return a


# -- norms -------------------------------------------------------------------

def vec_p_norm(v: Sequence[float], p: float = 2.0) -> float:
    """p-norm of a vector; ``p`` may be ``math.inf``."""
    p = float(p)
    if not p >= 1:
        raise InvalidP(f"p must be >= 1, got {p!r}")
    x = np.abs(np.asarray(v, dtype=float))
    if x.size == 0:
        return 0.0
    if math.isinf(p):
        return float(x.max())
    if p == 1:
        return float(x.sum())
    # scale first so large entries do not overflow the power
    top = x.max()
    if top == 0:
        return 0.0
    return float(top * np.sum((x / top) ** p) ** (1.0 / p))


def mat_inf_norm(a) -> float:
    """Maximum absolute row sum."""
    arr = np.asarray(a, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.abs(arr).sum(axis=1).max())


def mat_1_norm(a) -> float:
    """Maximum absolute column sum."""
    return mat_inf_norm(np.asarray(a, dtype=float).T)


def operator_norm(a, tol: float = 1e-10, max_iter: int | None = None) -> float:
    """Largest singular value by power iteration on the Gram matrix.

    Works for rectangular input.  Stops once the extrapolated remaining
    change of the Rayleigh quotient drops below ``tol`` relative to the
    estimate.  ``max_iter`` defaults to ``100 * n`` with ``n`` the Gram size;
    if the iteration has not settled by then, or settles with a large
    eigen-residual, the top singular values are clustered and the estimate
    is finished by repeated squaring.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"expected a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix has non-finite entries")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if arr.size == 0 or not np.any(arr):
        return 0.0
    gram = arr.T @ arr if arr.shape[1] <= arr.shape[0] else arr @ arr.T
    k = gram.shape[0]
    if k == 1:
        return float(math.sqrt(gram[0, 0]))
    cap = max_iter if max_iter is not None else 100 * k

    # fixed pseudo-random start: a deterministic vector that is almost surely
    # not orthogonal to the top singular direction
    x = np.random.default_rng(0x5EED).standard_normal(k)
    x /= np.linalg.norm(x)
    rho = float(x @ gram @ x)
    prev_delta = None
    for _ in range(cap):
        y = gram @ x
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        x = y / ny
        new_rho = float(x @ gram @ x)
        delta = abs(new_rho - rho)
        rho = new_rho
        settled = delta <= tol * rho * 1e-3
        if not settled and prev_delta is not None and prev_delta > 0:
            ratio = delta / prev_delta
            settled = ratio < 1 and delta * ratio / (1 - ratio) <= tol * rho
        if settled:
            # a stalled mix of clustered eigenvectors leaves a large residual
            if np.linalg.norm(gram @ x - rho * x) <= tol * rho:
                return math.sqrt(rho)
            break
        prev_delta = delta
    return math.sqrt(_squared_power(gram, x, tol))


def _squared_power(gram: np.ndarray, x: np.ndarray, tol: float) -> float:
    """Top eigenvalue of a PSD ``gram`` by repeated squaring.

    Plain iteration stalls when the two largest singular values nearly
    coincide.  Squaring ``s`` times applies ``gram ** 2**s``, which damps every
    eigenvalue below ``(1 - tol)`` times the top one by ``exp(-tol * 2**s)``;
    the Rayleigh quotient is then within ``tol`` of the top eigenvalue.
    """
    m = gram / np.abs(gram).max()
    steps = int(math.ceil(math.log2(60.0 / tol)))
    for _ in range(steps):
        m = m @ m
        scale = np.abs(m).max()
        if scale == 0 or not np.isfinite(scale):
            raise NoConvergence("repeated squaring lost the top eigenvector")
        m /= scale
    y = m @ x
    ny = np.linalg.norm(y)
    if ny == 0:
        # start vector orthogonal to the top space: use the dominant column
        y = m[:, int(np.argmax(np.abs(m).sum(axis=0)))]
        ny = np.linalg.norm(y)
    y /= ny
    return float(y @ gram @ y)


# -- file formats --------------------------------------------------------------

def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in FORMATS:
            raise ParseError(f"unknown matrix format {fmt!r}")
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".json":
        return "edge-json"
    if suffix in (".csv", ".txt"):
        return "dense-csv"
    raise ParseError(f"cannot infer matrix format from {path.name!r}")


def parse_dense_csv(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    if not rows:
        raise ParseError("empty matrix file")
    if any(len(r) != len(rows) for r in rows):
        raise NonSquare(f"dense-csv matrix is not square ({len(rows)} rows)")
    return np.array(rows)


def parse_edge_json(doc) -> tuple[int, list[tuple[int, int, float]]]:
    try:
        n = doc["n"]
        edges = doc["edges"]
        if not isinstance(n, int) or isinstance(n, bool):
            raise TypeError("n must be an integer")
        triplets = [(int(e["i"]), int(e["j"]), float(e["w"])) for e in edges]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed edge-json document: {exc}") from None
    return n, triplets


def load_matrix(path, fmt: str | None = None, mode: str = "strict") -> IoMatrix:
    path = Path(path)
    fmt = _infer_format(path, fmt)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    if fmt == "dense-csv":
        return validate(parse_dense_csv(text), mode)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    n, triplets = parse_edge_json(doc)
    return from_triplets(n, triplets, mode)


def _num(x: float) -> str:
    return format(float(x), ".17g")


def dump_dense_csv(m) -> str:
    arr = np.asarray(m, dtype=float)
    return "".join(",".join(_num(x) for x in row) + "\n" for row in arr)


def dump_edge_json(m) -> str:
    arr = np.asarray(m, dtype=float)
    edges = [
        f'{{"i": {i}, "j": {j}, "w": {_num(arr[i, j])}}}'
        for i, j in zip(*np.nonzero(arr))
    ]
    body = ",\n  ".join(edges)
    return f'{{"n": {arr.shape[0]}, "edges": [\n  {body}\n]}}\n'


def save_matrix(m, path, fmt: str | None = None) -> None:
    """Write ``m`` with 17 significant digits so that loading round-trips exactly."""
    path = Path(path)
    fmt = _infer_format(path, fmt)
    text = dump_dense_csv(m) if fmt == "dense-csv" else dump_edge_json(m)
    path.write_text(text)
