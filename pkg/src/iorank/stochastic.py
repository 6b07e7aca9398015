"""Binomial missing data over dollar flows, with Monte Carlo checks of the
Chernoff/union bound on the influence error.

Each dollar of the flow ``y[i, j]`` is observed independently with
probability ``1 - zeta``.  Randomness comes from counter-based Philox
streams: the draws of firm ``i`` in trial ``t`` use key ``(seed, t)`` and a
counter block reserved for row ``i``, so results do not depend on the order
or parallel schedule in which rows and trials are evaluated.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AllMissingRow, ParseError, ValidationError
from .influence import influence_direct
from .io_graph import IoMatrix, check_alpha, mat_inf_norm, validate, vec_p_norm

MAX_RESAMPLES = 64
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class FlowMatrix:
    """Integer dollar flows ``y[i, j]`` from supplier ``j`` to firm ``i``."""

    y: np.ndarray

    def __post_init__(self):
        y = np.array(self.y)
        if y.ndim != 2 or y.shape[0] != y.shape[1]:
            raise ValidationError(f"flows must be square, got shape {y.shape}")
        if not np.all(np.isfinite(y)) or np.any(y != np.round(y)):
            raise ValidationError("flows must be whole dollars")
        y = y.astype(np.int64)
        if np.any(y < 0):
            raise ValidationError("flows must be nonnegative")
        if np.any(np.diag(y) != 0):
            raise ValidationError("a firm cannot supply itself")
        if np.any(y.sum(axis=1) <= 0):
            raise ValidationError("every firm needs positive intermediate input")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @classmethod
    def uniform(cls, n: int, amount: int) -> "FlowMatrix":
        y = np.full((n, n), int(amount), dtype=np.int64)
        np.fill_diagonal(y, 0)
        return cls(y)

    @classmethod
    def from_matrix(cls, w: IoMatrix, ii: Sequence[int]) -> "FlowMatrix":
        y = np.asarray(w.w) * np.asarray(ii, dtype=float)[:, None]
        if np.any(np.abs(y - np.round(y)) > 1e-6):
            raise ValidationError("w * II does not give whole-dollar flows")
        return cls(np.round(y))

    @classmethod
    def from_dict(cls, doc) -> "FlowMatrix":
        try:
            if "y" in doc:
                return cls(np.array(doc["y"], dtype=float))
            n = int(doc["n"])
            y = np.zeros((n, n))
            for e in doc["edges"]:
                y[int(e["i"]), int(e["j"])] = float(e["y"])
            return cls(y)
        except (KeyError, TypeError, IndexError) as exc:
            raise ParseError(f"malformed flows document: {exc}") from None

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def ii(self) -> np.ndarray:
        return self.y.sum(axis=1)

    @property
    def m(self) -> int:
        """Smallest positive flow."""
        return int(self.y[self.y > 0].min())

    def true_matrix(self) -> IoMatrix:
        return validate(self.y / self.ii[:, None].astype(float))


def row_stream(seed: int, trial: int, row: int) -> np.random.Generator:
    """Counter-based generator for one firm in one trial."""
    key = [int(seed) & _U64, int(trial) & _U64]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, int(row) & _U64, 0]))


def observed_counts(flows: FlowMatrix, zeta: float, seed: int, trial: int = 0) -> tuple[np.ndarray, int]:
    """Draw ``X[i, j] ~ Bin(y[i, j], 1 - zeta)``.

    Rows with nothing observed are redrawn from the same stream; the second
    return value counts those redraws.
    """
    if not 0 < zeta < 1:
        raise ValidationError(f"zeta must lie in (0, 1), got {zeta!r}")
    p = 1.0 - zeta
    x = np.zeros_like(flows.y)
    resampled = 0
    for i in range(flows.n):
        rng = row_stream(seed, trial, i)
        for attempt in range(MAX_RESAMPLES + 1):
            row = rng.binomial(flows.y[i], p)
            if row.sum() > 0:
                break
            resampled += 1
        else:
            raise AllMissingRow(f"row {i} unobserved after {MAX_RESAMPLES} redraws")
        x[i] = row
    return x, resampled


def sample_observed(flows: FlowMatrix, zeta: float, seed: int, trial: int = 0) -> IoMatrix:
    x, _ = observed_counts(flows, zeta, seed, trial)
    return validate(x / x.sum(axis=1, keepdims=True).astype(float))


def chernoff_success_bound(n: int, epsilon: float, zeta: float, m: int) -> float:
    """Lower bound ``1 - 2 n^2 exp(-eps^2 (1 - zeta) M / 3)`` clamped at zero."""
    if not 0 < epsilon < 1:
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    if not 0 < zeta < 1:
        raise ValidationError(f"zeta must lie in (0, 1), got {zeta!r}")
    if m < 1:
        raise ValidationError("M must be at least 1")
    return max(0.0, 1.0 - 2.0 * n * n * math.exp(-epsilon ** 2 * (1 - zeta) * m / 3.0))


def error_threshold(alpha: float, epsilon: float) -> float:
    """Influence error ``2 (1 - alpha) eps / (alpha (1 - eps))`` certified with that probability."""
    alpha = check_alpha(alpha)
    return 2.0 * (1 - alpha) * epsilon / (alpha * (1 - epsilon))


def vanishing_epsilon(n: int, m: int, zeta: float, const: float = 7.0) -> float:
    """``sqrt(c ln n / (M (1 - zeta)))``; with ``c > 6`` the failure probability
    ``2 n^{2 - c/3}`` vanishes as ``n`` grows."""
    return math.sqrt(const * math.log(n) / (m * (1 - zeta)))


@dataclass(frozen=True)
class TrialReport:
    trials: int
    epsilon: float
    zeta: float
    empirical_success: float
    bound_probability: float
    error_threshold: float
    seed: int
    q: float = 1.0
    alpha: float = 0.5
    m: int = 0
    max_error: float = 0.0
    resampled_rows: int = 0
    # trials where every flow landed inside its Chernoff window, and how many
    # of those broke the matching ||W - U||_inf bound (always expected 0)
    concentrated_trials: int = 0
    concentration_violations: int = 0

    @property
    def margin(self) -> float:
        p = self.bound_probability
        return 3.0 * math.sqrt(p * (1 - p) / self.trials)

    @property
    def passes(self) -> bool:
        return (self.empirical_success >= self.bound_probability - self.margin
                and self.concentration_violations == 0)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["q"] = "inf" if math.isinf(self.q) else self.q
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def monte_carlo_norms(flows: FlowMatrix, alpha: float, zeta: float, epsilon: float,
                      qs: Sequence[float], trials: int, seed: int) -> list[TrialReport]:
    """Run ``trials`` draws once and score the error in each norm of ``qs``."""
    alpha = check_alpha(alpha)
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    for q in qs:
        if not q >= 1:
            raise ValidationError(f"q must be >= 1, got {q!r}")
    w = flows.true_matrix()
    v_w = influence_direct(w, alpha).v
    threshold = error_threshold(alpha, epsilon)
    bound = chernoff_success_bound(flows.n, epsilon, zeta, flows.m)
    expected = (1 - zeta) * flows.y
    window = epsilon * expected
    b_window = 2 * epsilon / (1 - epsilon)

    successes = np.zeros(len(qs), dtype=np.int64)
    worst = np.zeros(len(qs))
    resampled = concentrated = violations = 0
    for t in range(trials):
        x, r = observed_counts(flows, zeta, seed, t)
        resampled += r
        u = validate(x / x.sum(axis=1, keepdims=True).astype(float))
        diff = influence_direct(u, alpha).v - v_w
        for k, q in enumerate(qs):
            e = vec_p_norm(diff, q)
            worst[k] = max(worst[k], e)
            if e <= threshold:
                successes[k] += 1
        if np.all(np.abs(x - expected) <= window):
            concentrated += 1
            if mat_inf_norm(w.w - u.w) > b_window + 1e-12:
                violations += 1

    return [
        TrialReport(
            trials=trials, epsilon=float(epsilon), zeta=float(zeta),
            empirical_success=float(successes[k] / trials), bound_probability=bound,
            error_threshold=threshold, seed=int(seed), q=float(q), alpha=alpha,
            m=flows.m, max_error=float(worst[k]), resampled_rows=resampled,
            concentrated_trials=concentrated, concentration_violations=violations,
        )
        for k, q in enumerate(qs)
    ]


def monte_carlo(flows: FlowMatrix, alpha: float, zeta: float, epsilon: float,
                q: float, trials: int, seed: int) -> TrialReport:
    return monte_carlo_norms(flows, alpha, zeta, epsilon, (q,), trials, seed)[0]
