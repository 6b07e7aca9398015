"""Leontief inverses and influence vectors.

The influence vector of ``W`` with labor share ``alpha`` is

    v = (alpha / n) * (I - (1 - alpha) W^T)^{-1} 1,

equivalently the stationary distribution of a random walk that follows a
supplier link with probability ``1 - alpha`` and teleports uniformly with
probability ``alpha``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import NoConvergence, SelfLoopOnly, SingularSystem, ValidationError
from .io_graph import IoMatrix, check_alpha, validate

POWER_TOL = 1e-12
RESIDUAL_GATE = 1e-9


@dataclass(frozen=True)
class InfluenceResult:
    v: np.ndarray
    method: str
    iterations: int
    residual: float

    def to_dict(self) -> dict:
        return {
            "v": [float(x) for x in self.v],
            "method": self.method,
            "iterations": int(self.iterations),
            "residual": float(self.residual),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _entries(w) -> np.ndarray:
    if isinstance(w, IoMatrix):
        return w.w
    return validate(w, "strict").w


def steady_state_map(w, alpha: float, z: np.ndarray) -> np.ndarray:
    """One step of the walk: ``alpha/n + (1 - alpha) W^T z``."""
    return _step(_entries(w), alpha, z)


def _step(arr: np.ndarray, alpha: float, z: np.ndarray) -> np.ndarray:
    return alpha / arr.shape[0] + (1.0 - alpha) * (arr.T @ z)


def _system(arr: np.ndarray, alpha: float) -> np.ndarray:
    return np.eye(arr.shape[0]) - (1.0 - alpha) * arr.T


def leontief_inverse(w, alpha: float) -> np.ndarray:
    """``(I - (1 - alpha) W^T)^{-1}``, checked by multiplying back."""
    alpha = check_alpha(alpha)
    arr = _entries(w)
    a = _system(arr, alpha)
    eye = np.eye(arr.shape[0])
    try:
        inv = np.linalg.solve(a, eye)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    if np.abs(inv @ a - eye).sum(axis=1).max() > RESIDUAL_GATE:
        raise SingularSystem("Leontief inverse failed the residual check")
    return inv


def influence_direct(w, alpha: float, gate: float = RESIDUAL_GATE) -> InfluenceResult:
    """Influence vector from a pivoted LU solve; no inverse is formed.

    Raises :class:`SingularSystem` when the 1-norm steady-state residual
    exceeds ``gate``.
    """
    alpha = check_alpha(alpha)
    arr = _entries(w)
    n = arr.shape[0]
    try:
        v = np.linalg.solve(_system(arr, alpha), np.full(n, alpha / n))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    residual = float(np.abs(_step(arr, alpha, v) - v).sum())
    if not np.all(np.isfinite(v)) or not residual <= gate:
        raise SingularSystem(f"direct solve residual {residual:.3e} exceeds gate")
    return InfluenceResult(v, "direct", 0, residual)


def default_cap(alpha: float, tol: float, margin: int = 10) -> int:
    # the residual starts at most 2(1 - alpha) and contracts by (1 - alpha)
    return int(math.ceil(math.log(tol / 2.0) / math.log(1.0 - alpha))) + margin


def influence_power(w, alpha: float, tol: float = POWER_TOL, cap: int | None = None) -> InfluenceResult:
    """Fixed-point iteration of the walk from the uniform vector.

    Returns the first iterate ``z`` with ``||f(z) - z||_1 <= tol``; since the
    map is a ``(1 - alpha)``-contraction in the 1-norm, ``z`` is then within
    ``tol / alpha`` of the exact influence vector.
    """
    alpha = check_alpha(alpha)
    if not tol > 0:
        raise ValidationError("tol must be positive")
    arr = _entries(w)
    n = arr.shape[0]
    if cap is None:
        cap = default_cap(alpha, tol)
    wt = arr.T
    lam = 1.0 - alpha
    z = np.full(n, 1.0 / n)
    for it in range(1, cap + 1):
        fz = alpha / n + lam * (wt @ z)
        residual = float(np.abs(fz - z).sum())
        if residual <= tol:
            return InfluenceResult(z, "power", it, residual)
        z = fz
    raise NoConvergence(f"power iteration exceeded {cap} steps (alpha={alpha}, tol={tol})")


def from_link_graph(adjacency, weighted: bool = False) -> IoMatrix:
    """Turn a raw directed link graph into a linkage matrix.

    Rows with outgoing links become uniform over their out-neighbours (or
    proportional to the weights when ``weighted``); self-loops are ignored.
    A dangling row becomes uniform ``1/(n-1)`` over every other vertex.
    """
    adj = np.array(adjacency, dtype=float)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValidationError(f"adjacency must be square, got shape {adj.shape}")
    n = adj.shape[0]
    if n < 2:
        raise ValidationError("a link graph needs at least two vertices")
    if np.any(adj < 0) or not np.all(np.isfinite(adj)):
        raise ValidationError("adjacency entries must be finite and nonnegative")
    loops = np.diag(adj).copy()
    np.fill_diagonal(adj, 0.0)
    if not weighted:
        adj = (adj > 0).astype(float)
    out = adj.sum(axis=1)
    w = np.empty_like(adj)
    for i in range(n):
        if out[i] > 0:
            w[i] = adj[i] / out[i]
        elif weighted and loops[i] > 0:
            raise SelfLoopOnly(f"vertex {i} links only to itself")
        else:
            w[i] = 1.0 / (n - 1)
            w[i, i] = 0.0
    return validate(w, "strict")


@dataclass(frozen=True)
class FirmGoodNetwork:
    """Vertices are ``(firm, good)`` pairs; ``criticality[i, j]`` is how much
    vertex ``i``'s production depends on vertex ``j``'s good."""

    vertices: tuple[tuple[Hashable, Hashable], ...]
    criticality: np.ndarray

    def __post_init__(self):
        verts = tuple(tuple(v) for v in self.vertices)
        c = np.array(self.criticality, dtype=float)
        n = len(verts)
        if c.shape != (n, n):
            raise ValidationError(f"criticality must be {n}x{n}, got {c.shape}")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValidationError("criticalities must be finite and nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "criticality", c)

    @classmethod
    def from_mapping(cls, vertices: Sequence, criticality: Mapping[tuple[int, int], float]):
        n = len(vertices)
        c = np.zeros((n, n))
        for (i, j), value in criticality.items():
            c[i, j] = value
        return cls(tuple(vertices), c)

    def linkage(self) -> IoMatrix:
        return validate(self.criticality, "lenient")

    @property
    def firms(self) -> list:
        seen = {}
        for f, _ in self.vertices:
            seen.setdefault(f, None)
        return list(seen)


def firm_scores(net: FirmGoodNetwork, alpha: float) -> dict:
    """Importance score of each firm: the walk's mass on the firm's goods.

    The teleport term uses the vertex count of the firm-good graph.
    """
    u = influence_direct(net.linkage(), alpha).v
    scores = {f: 0.0 for f in net.firms}
    for (f, _), ui in zip(net.vertices, u):
        scores[f] += float(ui)
    return scores
