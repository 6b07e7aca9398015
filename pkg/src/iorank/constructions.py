"""Named extremal networks with their closed-form influence coefficients.

Indices in docstrings are 1-based to match how the networks are usually
described (firm 1 is row 0).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidDelta, InvalidK, ValidationError
from .io_graph import IoMatrix, check_alpha, validate
from .missing_data import MissingSpec

ClosedForm = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class NamedConstruction:
    name: str
    w: IoMatrix
    closed_form: Optional[ClosedForm] = None
    params: dict = field(default_factory=dict)
    # influence vector of the b -> 0 (or epsilon -> 0) limit network, when
    # the construction is only asymptotically explicit
    limit_form: Optional[ClosedForm] = None

    @property
    def n(self) -> int:
        return self.w.n


def figure1() -> NamedConstruction:
    """Six firms: firms 1 and 2 supply each other, firms 3-6 buy half from each."""
    w = np.zeros((6, 6))
    w[0, 1] = w[1, 0] = 1.0
    w[2:, 0] = w[2:, 1] = 0.5

    def closed(alpha):
        a = check_alpha(alpha)
        return np.array([0.5 - a / 3, 0.5 - a / 3] + [a / 6] * 4)

    return NamedConstruction("figure1", validate(w), closed, {"n": 6})


# -- delta-share lower bound ---------------------------------------------------

def _lower_bound_matrix(n: int, delta: float) -> np.ndarray:
    w = np.zeros((n, n))
    w[0, 1:] = 1.0 / (n - 1)
    w[1, :] = 1.0 / (n - 1)
    w[1, 1] = 0.0
    w[2:, 0] = 1.0 - delta
    w[2:, 1] = delta
    return w


def lower_bound_coefficients(n: int, delta: float, alpha: float) -> tuple[float, float, float]:
    """``(x, y, z)``: influence of firm 1, firm 2 and each remaining firm."""
    a = alpha
    den = n * (2 * n - 3 - a * (n - 2))
    x = (n - 1) * (n - 1 - a * (1 - delta) * (n - 2) - delta * (n - 2)) / den
    y = (n - 1) * ((1 - a) * delta * (n - 2) + 1) / den
    z = (n - a) / den
    return x, y, z


def lower_bound_shift(n: int, delta: float, alpha: float) -> float:
    """``y - b = a - x``: how far the first two coefficients move."""
    return (1 - alpha) * delta * (n - 2) * (n - 1) / (n * (2 * n - 3 - alpha * (n - 2)))


def _lower_bound_vector(n, delta):
    def closed(alpha):
        a = check_alpha(alpha)
        x, y, z = lower_bound_coefficients(n, delta, a)
        return np.array([x, y] + [z] * (n - 2))
    return closed


def lower_bound_pair(n: int, delta: float) -> tuple[NamedConstruction, NamedConstruction]:
    """True matrix ``W`` and observed ``U``.

    Firms 1 and 2 buy uniformly from everyone else; firms ``j > 2`` buy
    ``1 - delta`` from firm 1 and ``delta`` from firm 2.  ``U`` is ``W`` at
    ``delta = 0``, i.e. firm 2's supply to the small firms is unobserved.
    """
    if n <= 2:
        raise ValidationError("lower_bound_pair needs n > 2")
    if not 0 <= delta < 1:
        raise InvalidDelta(f"delta must lie in [0, 1), got {delta!r}")
    params = {"n": n, "delta": delta}
    w = NamedConstruction("lower-bound-W", validate(_lower_bound_matrix(n, delta)),
                          _lower_bound_vector(n, delta), params)
    u = NamedConstruction("lower-bound-U", validate(_lower_bound_matrix(n, 0.0)),
                          _lower_bound_vector(n, 0.0), params)
    return w, u


def lower_bound_missing_spec(n: int, delta: float) -> MissingSpec:
    """Spec removing firm 2's supply to every firm ``j > 2``."""
    d = np.zeros(n)
    c = np.zeros((n, n))
    d[2:] = delta
    c[2:, 1] = delta
    return MissingSpec(d, c)


# -- extremal coefficients -------------------------------------------------------

def max_coefficient(n: int, alpha: float) -> float:
    """Largest possible influence coefficient in an ``n``-firm network."""
    return (1 - (n - 1) * alpha / n) / (2 - alpha)


def min_coefficient(n: int, alpha: float) -> float:
    return alpha / n


def star(n: int) -> NamedConstruction:
    """Hub buys uniformly from all leaves; every leaf buys only from the hub."""
    if n < 2:
        raise ValidationError("star needs n >= 2")
    w = np.zeros((n, n))
    w[0, 1:] = 1.0 / (n - 1)
    w[1:, 0] = 1.0

    def closed(alpha):
        a = check_alpha(alpha)
        x = max_coefficient(n, a)
        return np.array([x] + [(1 - x) / (n - 1)] * (n - 1))

    return NamedConstruction("star", validate(w), closed, {"n": n})


def two_hub(n: int) -> NamedConstruction:
    """Firm 1 buys only from firm 2; everyone else buys only from firm 1.

    Firm 1 reaches the maximum coefficient and firms ``3..n`` the minimum.
    """
    if n < 3:
        raise ValidationError("two_hub needs n >= 3")
    w = np.zeros((n, n))
    w[0, 1] = 1.0
    w[1:, 0] = 1.0

    def closed(alpha):
        a = check_alpha(alpha)
        x = max_coefficient(n, a)
        y = (1 - a) * x + a / n
        return np.array([x, y] + [a / n] * (n - 2))

    return NamedConstruction("two-hub", validate(w), closed, {"n": n})


# -- share of firms --------------------------------------------------------------

def firm_share_pair(n: int, epsilon: float) -> tuple[NamedConstruction, NamedConstruction]:
    """Network ``G`` and its observation ``H`` with firm 1's sales to firms
    ``3..n`` unobserved (one firm's data, a ``1/n`` share of firms).

    ``G`` is the delta-share lower-bound ``W`` at ``delta = epsilon``; ``H``
    is its ``U`` with firms 1 and 2 swapped.
    """
    if n <= 2:
        raise ValidationError("firm_share_pair needs n > 2")
    if not 0 < epsilon < 1:
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    g = _lower_bound_matrix(n, epsilon)
    perm = np.arange(n)
    perm[[0, 1]] = [1, 0]
    h = _lower_bound_matrix(n, 0.0)[np.ix_(perm, perm)]
    base = _lower_bound_vector(n, 0.0)

    def h_closed(alpha):
        return base(alpha)[perm]

    params = {"n": n, "epsilon": epsilon}
    return (
        NamedConstruction("firm-share-G", validate(g), _lower_bound_vector(n, epsilon), params),
        NamedConstruction("firm-share-H", validate(h), h_closed, params),
    )


# -- locality counterexample -------------------------------------------------------

def path_limit_vector(n: int, alpha: float) -> np.ndarray:
    """Influence of the ``b = 0`` path network on ``n`` firms.

    Firm 1 buys uniformly from all others and firm ``i > 1`` buys only from
    firm ``i - 1``.  Solves the two-term recurrence in closed form.
    """
    a = check_alpha(alpha)
    lam = 1 - a
    p_n = (1 - a / n) * a * a / (-a * a + lam ** (n + 1) + a * n + a - 1)
    p = np.empty(n)
    i = np.arange(n - 1)
    # p[n-1-i] = p_{n-i} in 1-based terms, for 0 <= i < n-1
    p[n - 1 - i] = (1 - lam ** (i + 1)) / a * p_n
    p[0] = a / n + lam * p[1]
    return p


def locality_chain(n: int, b: float) -> NamedConstruction:
    """Path ``n -> n-1 -> ... -> 1`` with feedback.

    Firm 1 buys uniformly from everyone; firm ``i > 1`` buys ``1 - b`` from
    firm ``i - 1`` and spreads ``b`` over the firms other than ``i - 1, i``.
    """
    if n <= 3:
        raise ValidationError("locality_chain needs n > 3")
    if not 0 < b < 1:
        raise ValidationError(f"b must lie in (0, 1), got {b!r}")
    w = np.zeros((n, n))
    w[0, 1:] = 1.0 / (n - 1)
    for i in range(1, n):
        w[i, :] = b / (n - 2)
        w[i, i] = 0.0
        w[i, i - 1] = 1.0 - b
    return NamedConstruction("locality-G", validate(w), None, {"n": n, "b": b},
                             lambda alpha: path_limit_vector(n, alpha))


def locality_truncated(n: int, k: int, b: float) -> NamedConstruction:
    """The part of :func:`locality_chain` within ``k`` steps of firm ``n``.

    Rows and columns stand for firms ``n-k .. n``; the outermost firm buys
    uniformly from the rest and the feedback weight is renormalised over the
    ``k - 1`` remaining firms.
    """
    if n <= 3:
        raise ValidationError("locality_truncated needs n > 3")
    if not 1 <= k < n - 1:
        raise InvalidK(f"k must satisfy 1 <= k < n - 1, got k={k}, n={n}")
    if not 0 < b < 1:
        raise ValidationError(f"b must lie in (0, 1), got {b!r}")
    m = k + 1
    scale = 1 - b + (k - 1) * b / (n - 2)
    u = np.zeros((m, m))
    u[0, 1:] = 1.0 / k
    for i in range(1, m):
        u[i, :] = b / ((n - 2) * scale)
        u[i, i] = 0.0
        u[i, i - 1] = (1 - b) / scale
    return NamedConstruction("locality-H", validate(u), None, {"n": n, "k": k, "b": b},
                             lambda alpha: path_limit_vector(m, alpha))


def locality_lower_bound(n: int, k: int, alpha: float) -> float:
    """Guaranteed 1-norm gap between the two limit networks."""
    return (n - k - 1) * alpha / n + (k + 1) * (alpha / (k + 1) - 1 / (alpha * n))


def padded(v: np.ndarray, n: int) -> np.ndarray:
    """Prepend zeros so a truncated influence vector lines up with the full one."""
    v = np.asarray(v, dtype=float)
    return np.concatenate([np.zeros(n - v.size), v])


# -- random generators for property tests -------------------------------------------

def random_io_matrix(n: int, rng: np.random.Generator, density: float | None = None) -> IoMatrix:
    """Uniform random linkage matrix with a random sparsity pattern."""
    if n < 2:
        raise ValidationError("need n >= 2")
    if density is None:
        density = rng.uniform(0.1, 1.0)
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, False)
    for i in range(n):
        if not mask[i].any():
            j = rng.integers(n - 1)
            mask[i, j + (j >= i)] = True
    w = np.where(mask, rng.random((n, n)), 0.0)
    w[mask & (w == 0)] = 1.0
    return validate(w / w.sum(axis=1, keepdims=True))
