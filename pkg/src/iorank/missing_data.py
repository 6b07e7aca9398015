"""Observed matrices under share-denominated missing data, and error certificates.

A :class:`MissingSpec` says that firm ``i`` is missing a share ``d[i]`` of its
intermediate input, of which ``c[i, j]`` (in the same units as ``w``) was
supplied by firm ``j``.  Removing those flows and renormalising gives the
observed matrix ``u[i, j] = (w[i, j] - c[i, j]) / (1 - d[i])``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DegenerateRow, InvalidDelta, SpecMismatch, ValidationError
from .influence import influence_direct
from .io_graph import IoMatrix, check_alpha, mat_inf_norm, validate, vec_p_norm

SPEC_TOL = 1e-9
HOLDS_TOL = 1e-12


@dataclass(frozen=True)
class MissingSpec:
    d: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        d = np.array(self.d, dtype=float)
        c = np.array(self.c, dtype=float)
        n = d.shape[0]
        if d.ndim != 1 or c.shape != (n, n):
            raise ValidationError(f"spec shapes disagree: d {d.shape}, c {c.shape}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(c))):
            raise ValidationError("spec has non-finite entries")
        if np.any(d < 0) or np.any(d >= 1):
            raise SpecMismatch("missing shares must lie in [0, 1)")
        if np.any(c < 0):
            raise SpecMismatch("missing compositions must be nonnegative")
        gap = np.abs(c.sum(axis=1) - d)
        if np.any(gap > SPEC_TOL):
            i = int(np.argmax(gap))
            raise SpecMismatch(f"row {i}: sum of c is {c[i].sum()!r} but d is {d[i]!r}")
        d.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def max_share(self) -> float:
        return float(self.d.max()) if self.n else 0.0

    @classmethod
    def none(cls, n: int) -> "MissingSpec":
        return cls(np.zeros(n), np.zeros((n, n)))

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MissingSpec":
        try:
            d = [float(x) for x in doc["d"]]
            c = np.zeros((len(d), len(d)))
            for e in doc.get("c", []):
                c[int(e["i"]), int(e["j"])] = float(e["v"])
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ValidationError(f"malformed missing-data spec: {exc}") from None
        return cls(np.array(d), c)

    def to_dict(self) -> dict:
        return {
            "d": [float(x) for x in self.d],
            "c": [
                {"i": int(i), "j": int(j), "v": float(self.c[i, j])}
                for i, j in zip(*np.nonzero(self.c))
            ],
        }


def observe(w: IoMatrix, spec: MissingSpec) -> IoMatrix:
    """Drop the missing flows from ``w`` and renormalise each row.

    Each row is divided by its realised remaining mass, which equals
    ``1 - d[i]`` for a row-stochastic ``w`` up to the spec tolerance, so row
    sums are preserved exactly.
    """
    if not isinstance(w, IoMatrix):
        w = validate(w, "strict")
    arr = w.w
    if spec.n != w.n:
        raise SpecMismatch(f"spec is for {spec.n} firms, matrix has {w.n}")
    over = spec.c - arr
    if np.any(over > SPEC_TOL):
        i, j = np.unravel_index(int(np.argmax(over)), over.shape)
        raise SpecMismatch(f"c[{i},{j}] = {spec.c[i, j]!r} exceeds w[{i},{j}] = {arr[i, j]!r}")
    rest = np.clip(arr - spec.c, 0.0, None)
    orig = arr.sum(axis=1)
    kept = rest.sum(axis=1)
    u = np.zeros_like(arr)
    for i in range(w.n):
        if orig[i] == 0:
            continue
        if kept[i] <= 0:
            raise DegenerateRow(f"row {i} has no observed input left")
        u[i] = rest[i] * (orig[i] / kept[i])
    return validate(u, w.mode)


def random_missing_spec(w: IoMatrix, delta: float, rng: np.random.Generator) -> MissingSpec:
    """Draw a feasible spec with every share at most ``delta``.

    Each row gets ``d_i ~ U[0, delta]`` spread over a random subset of its
    suppliers by a symmetric Dirichlet split; the split is water-filled under
    the caps ``c_ij <= w_ij`` and ``d_i`` shrinks when the subset cannot
    absorb it.
    """
    if not 0 <= delta < 1:
        raise InvalidDelta(f"delta must lie in [0, 1), got {delta!r}")
    arr = w.w
    n = w.n
    d = np.zeros(n)
    c = np.zeros((n, n))
    for i in range(n):
        support = np.flatnonzero(arr[i] > 0)
        if support.size == 0 or delta == 0:
            continue
        pick = support[rng.random(support.size) < 0.5]
        if pick.size == 0:
            pick = support[[rng.integers(support.size)]]
        caps = arr[i, pick]
        di = min(rng.uniform(0.0, delta), float(caps.sum()))
        if pick.size == support.size:
            di = min(di, float(caps.sum()) * (1 - 1e-12))
        share = rng.dirichlet(np.ones(pick.size))
        row = _water_fill(di, share, caps)
        c[i, pick] = row
        d[i] = row.sum()
    return MissingSpec(d, c)


def _water_fill(total: float, share: np.ndarray, caps: np.ndarray) -> np.ndarray:
    out = np.zeros_like(caps)
    free = np.ones(caps.size, dtype=bool)
    remaining = total
    while remaining > 0 and free.any():
        weights = share[free] / share[free].sum()
        trial = out[free] + remaining * weights
        idx = np.flatnonzero(free)
        clipped = trial >= caps[idx]
        if not clipped.any():
            out[idx] = trial
            break
        out[idx[clipped]] = caps[idx[clipped]]
        free[idx[clipped]] = False
        remaining = total - out.sum()
    return out


# -- bounds --------------------------------------------------------------------

def ipsen_wills_bound(alpha: float, b_inf: float) -> float:
    """``(1 - alpha) * ||W - U||_inf / alpha`` bound on ``||v_U - v_W||_1``."""
    alpha = check_alpha(alpha)
    if b_inf < 0:
        raise ValidationError("b_inf must be nonnegative")
    return (1.0 - alpha) * b_inf / alpha


def share_perturbation(delta: float) -> float:
    """Worst-case ``||W - U||_inf`` when each firm misses at most a ``delta`` share."""
    if not 0 <= delta < 1:
        raise InvalidDelta(f"delta must lie in [0, 1), got {delta!r}")
    return (2.0 * delta - delta * delta) / (1.0 - delta)


def delta_share_bound(alpha: float, delta: float) -> float:
    alpha = check_alpha(alpha)
    if not 0 <= delta < 1:
        raise InvalidDelta(f"delta must lie in [0, 1), got {delta!r}")
    return delta * (1.0 - alpha) * (2.0 - delta) / (alpha * (1.0 - delta))


@dataclass(frozen=True)
class BoundCertificate:
    theorem: str
    inputs: dict = field(default_factory=dict)
    bound: float = math.inf
    measured: float = 0.0

    @property
    def holds(self) -> bool:
        return self.measured <= self.bound + HOLDS_TOL

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem,
            "inputs": {k: _jsonable(v) for k, v in self.inputs.items()},
            "bound": float(self.bound),
            "measured": float(self.measured),
            "holds": self.holds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return "inf" if math.isinf(x) else x
    if isinstance(x, np.integer):
        return int(x)
    return x


NORMS = (1.0, 2.0, math.inf)


def certify(w: IoMatrix, u: IoMatrix, alpha: float, delta: float | None = None) -> list[BoundCertificate]:
    """Certificates for the transition-perturbation bound (always) and the
    delta-share bound (when ``delta`` is given), each in the 1-, 2- and
    inf-norm against the same right-hand side."""
    alpha = check_alpha(alpha)
    if w.n != u.n:
        raise ValidationError(f"matrix sizes differ: {w.n} vs {u.n}")
    diff = influence_direct(u, alpha).v - influence_direct(w, alpha).v
    b_inf = mat_inf_norm(w.w - u.w)
    certs = []
    iw = ipsen_wills_bound(alpha, b_inf)
    for p in NORMS:
        certs.append(BoundCertificate(
            "ipsen-wills", {"alpha": alpha, "b_inf": b_inf, "p": p}, iw, vec_p_norm(diff, p)))
    if delta is not None:
        ds = delta_share_bound(alpha, delta)
        for p in NORMS:
            certs.append(BoundCertificate(
                "delta-share", {"alpha": alpha, "delta": float(delta), "b_inf": b_inf, "p": p},
                ds, vec_p_norm(diff, p)))
    return certs
