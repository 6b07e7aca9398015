"""Directed chains of firm blocks and the locality of influence errors.

Blocks ``V_1, ..., V_M`` form a directed chain when supply only flows
inside a block or forward to the next block: ``w[i, j]`` may be nonzero only
if ``j`` is in ``V_r`` and ``i`` is in ``V_r`` or ``V_{r+1}``.  Then
``W^T`` is block upper bidiagonal in the block basis, with diagonal blocks
``W_r^T`` and interface blocks ``A_r = W^T[V_r, V_{r+1}]``.

Block numbers in the public API (``q``, ``k_cut``, ``k``) are 1-based;
firm indices are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BackEdge,
    CouplingTooStrong,
    InvalidDelta,
    InvalidIndices,
    NotAPartition,
    NotWeaklyCoupled,
    SingularSystem,
    SkipEdge,
    ValidationError,
)
from .influence import InfluenceResult, steady_state_map
from .io_graph import IoMatrix, check_alpha, operator_norm, validate
from .missing_data import BoundCertificate, delta_share_bound, share_perturbation

NORM_TOL = 1e-10
WEAK_MARGIN = 1e-9


def _as_matrix(w) -> IoMatrix:
    return w if isinstance(w, IoMatrix) else validate(w, "substochastic")


def _block_leontief(block: np.ndarray, alpha: float) -> np.ndarray:
    m = block.shape[0]
    try:
        return np.linalg.solve(np.eye(m) - (1 - alpha) * block.T, np.eye(m))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None


@dataclass(frozen=True)
class ChainPartition:
    blocks: tuple[tuple[int, ...], ...]

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[int]], n: int | None = None) -> "ChainPartition":
        """Check ``blocks`` are nonempty, disjoint and cover ``0..n-1``."""
        bl = tuple(tuple(int(i) for i in b) for b in blocks)
        if not bl or any(len(b) == 0 for b in bl):
            raise NotAPartition("blocks must be nonempty")
        flat = [i for b in bl for i in b]
        if len(set(flat)) != len(flat):
            raise NotAPartition("blocks overlap")
        total = len(flat) if n is None else n
        if sorted(flat) != list(range(total)):
            raise NotAPartition(f"blocks do not cover firms 0..{total - 1}")
        return cls(bl)

    @classmethod
    def singletons(cls, n: int) -> "ChainPartition":
        return cls(tuple((i,) for i in range(n)))

    @classmethod
    def contiguous(cls, sizes: Sequence[int]) -> "ChainPartition":
        out, start = [], 0
        for s in sizes:
            out.append(tuple(range(start, start + s)))
            start += s
        return cls.from_blocks(out)

    @property
    def sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    @property
    def m(self) -> int:
        """Number of blocks."""
        return len(self.blocks)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    @property
    def order(self) -> np.ndarray:
        """Firm indices in block order (the relabelled basis)."""
        return np.array([i for b in self.blocks for i in b], dtype=int)

    def block_of(self) -> np.ndarray:
        lab = np.empty(self.n, dtype=int)
        for r, b in enumerate(self.blocks):
            lab[list(b)] = r
        return lab

    def head(self, q: int) -> np.ndarray:
        """Firms of the first ``q`` blocks."""
        return np.array([i for b in self.blocks[:q] for i in b], dtype=int)

    def tail_size(self, k: int) -> int:
        """``|V_k u ... u V_M|`` for 1-based ``k``."""
        return sum(self.sizes[k - 1:])

    def to_dict(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks]}


def validate_chain(w, blocks) -> ChainPartition:
    """Accept ``blocks`` as a directed chain for ``w`` or say which edge breaks it.

    An edge here means supply from firm ``j`` to firm ``i`` (``w[i, j] > 0``).
    Supply into an earlier block is a :class:`BackEdge`; supply skipping a
    block, in either direction, is a :class:`SkipEdge`.
    """
    w = _as_matrix(w)
    part = blocks if isinstance(blocks, ChainPartition) else ChainPartition.from_blocks(blocks, w.n)
    if part.n != w.n:
        raise NotAPartition(f"partition covers {part.n} firms, matrix has {w.n}")
    lab = part.block_of()
    rows, cols = np.nonzero(w.w)
    gap = lab[rows] - lab[cols]  # buyer block minus supplier block
    skip = np.flatnonzero(np.abs(gap) >= 2)
    if skip.size:
        k = skip[0]
        raise SkipEdge(f"firm {cols[k]} (block {lab[cols[k]] + 1}) supplies firm {rows[k]} "
                       f"(block {lab[rows[k]] + 1})")
    back = np.flatnonzero(gap == -1)
    if back.size:
        k = back[0]
        raise BackEdge(f"firm {cols[k]} (block {lab[cols[k]] + 1}) supplies firm {rows[k]} "
                       f"in the earlier block {lab[rows[k]] + 1}")
    return part


@dataclass(frozen=True)
class ChainDecomposition:
    partition: ChainPartition
    alpha: float
    diagonal: tuple[np.ndarray, ...]      # W_r, m_r x m_r
    interfaces: tuple[np.ndarray, ...]    # A_r = W^T[V_r, V_{r+1}], m_r x m_{r+1}
    leontief: tuple[np.ndarray, ...]      # (I - (1 - alpha) W_r^T)^{-1}
    interface_norms: tuple[float, ...]    # ||L_r A_r||
    gamma: float

    @property
    def weakly_coupled(self) -> bool:
        return self.gamma < 1 - WEAK_MARGIN

    def s_hat(self, r: int) -> np.ndarray:
        """Off-diagonal block ``(1 - alpha) L_r A_r`` (0-based ``r``)."""
        return (1 - self.alpha) * self.leontief[r] @ self.interfaces[r]

    def block_influence(self, r: int) -> np.ndarray:
        m = self.diagonal[r].shape[0]
        return self.alpha / m * self.leontief[r].sum(axis=1)

    def reassemble(self) -> np.ndarray:
        n = self.partition.n
        w = np.zeros((n, n))
        blocks = self.partition.blocks
        for r, b in enumerate(blocks):
            w[np.ix_(b, b)] = self.diagonal[r]
        for r, a in enumerate(self.interfaces):
            w[np.ix_(blocks[r + 1], blocks[r])] = a.T
        return w

    def report(self) -> dict:
        return {
            "blocks": self.partition.sizes,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "weakly_coupled": self.weakly_coupled,
            "interface_norms": list(self.interface_norms),
        }


def decompose(w, part: ChainPartition, alpha: float) -> ChainDecomposition:
    alpha = check_alpha(alpha)
    w = _as_matrix(w)
    part = validate_chain(w, part)
    arr = w.w
    blocks = part.blocks
    diag = tuple(arr[np.ix_(b, b)].copy() for b in blocks)
    inter = tuple(arr[np.ix_(blocks[r + 1], blocks[r])].T.copy() for r in range(part.m - 1))
    leon = tuple(_block_leontief(d, alpha) for d in diag)
    norms = tuple(operator_norm(leon[r] @ inter[r], NORM_TOL) for r in range(len(inter)))
    gamma = (1 - alpha) * max(norms) if norms else 0.0
    return ChainDecomposition(part, alpha, diag, inter, leon, norms, gamma)


def coupling_constant(w, part: ChainPartition, alpha: float) -> float:
    return decompose(w, part, alpha).gamma


# -- bipartitions ------------------------------------------------------------------

@dataclass(frozen=True)
class _Bipartition:
    first: np.ndarray
    second: np.ndarray
    w1t: np.ndarray
    w2t: np.ndarray
    a1: np.ndarray
    a2: np.ndarray


def _split(w, first) -> _Bipartition:
    arr = _as_matrix(w).w
    n = arr.shape[0]
    first = np.array(sorted(set(int(i) for i in first)), dtype=int)
    if first.size == 0 or first.size == n or first.min() < 0 or first.max() >= n:
        raise NotAPartition("the first part must be a nonempty proper subset of the firms")
    second = np.setdiff1d(np.arange(n), first)
    wt = arr.T
    return _Bipartition(first, second,
                        wt[np.ix_(first, first)], wt[np.ix_(second, second)],
                        wt[np.ix_(first, second)], wt[np.ix_(second, first)])


def _unpermute(bp: _Bipartition, s_blocks: np.ndarray) -> np.ndarray:
    order = np.concatenate([bp.first, bp.second])
    out = np.empty_like(s_blocks)
    out[np.ix_(order, order)] = s_blocks
    return out


def bipartition_coupling(w, first, alpha: float) -> float:
    """``(1 - alpha) max(||L_1 A_1||, ||L_2 A_2||)``, the operator norm of the
    Neumann-series ratio ``(1 - alpha) L_perp W_int^T``."""
    alpha = check_alpha(alpha)
    bp = _split(w, first)
    l1 = _block_leontief(bp.w1t.T, alpha)
    l2 = _block_leontief(bp.w2t.T, alpha)
    return (1 - alpha) * max(operator_norm(l1 @ bp.a1, NORM_TOL), operator_norm(l2 @ bp.a2, NORM_TOL))


def interaction_matrix_direct(w, first, alpha: float) -> np.ndarray:
    """``(I - (1 - alpha) L_perp W_int^T)^{-1}`` by a dense solve."""
    alpha = check_alpha(alpha)
    bp = _split(w, first)
    m1, m2 = bp.first.size, bp.second.size
    lperp = np.zeros((m1 + m2, m1 + m2))
    lperp[:m1, :m1] = _block_leontief(bp.w1t.T, alpha)
    lperp[m1:, m1:] = _block_leontief(bp.w2t.T, alpha)
    wint_t = np.zeros_like(lperp)
    wint_t[:m1, m1:] = bp.a1
    wint_t[m1:, :m1] = bp.a2
    a = np.eye(m1 + m2) - (1 - alpha) * lperp @ wint_t
    try:
        s = np.linalg.solve(a, np.eye(m1 + m2))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    return _unpermute(bp, s)


def interaction_matrix(w, first, alpha: float) -> np.ndarray:
    """Interaction matrix assembled from its 2x2 block formula.

    Refuses with :class:`CouplingTooStrong` unless the bipartition coupling is
    below one, which makes the Neumann series absolutely convergent.  Rows and
    columns are in the original firm order.
    """
    alpha = check_alpha(alpha)
    gamma = bipartition_coupling(w, first, alpha)
    if gamma >= 1 - WEAK_MARGIN:
        raise CouplingTooStrong(f"coupling {gamma:.6g} >= 1; use interaction_matrix_direct")
    bp = _split(w, first)
    lam = 1 - alpha
    l1a1 = _block_leontief(bp.w1t.T, alpha) @ bp.a1
    l2a2 = _block_leontief(bp.w2t.T, alpha) @ bp.a2
    m1, m2 = bp.first.size, bp.second.size
    x = np.linalg.solve(np.eye(m1) - lam * lam * l1a1 @ l2a2, np.eye(m1))
    y = np.linalg.solve(np.eye(m2) - lam * lam * l2a2 @ l1a1, np.eye(m2))
    s = np.block([[x, lam * l1a1 @ y], [lam * l2a2 @ x, y]])
    return _unpermute(bp, s)


def bipartition_influence(w, first, alpha: float) -> np.ndarray:
    """``S ((m_1/N) v_1 (+) (m_2/N) v_2)`` from the two block-local influence vectors."""
    alpha = check_alpha(alpha)
    bp = _split(w, first)
    n = bp.first.size + bp.second.size
    local = np.empty(n)
    for idx, wt in ((bp.first, bp.w1t), (bp.second, bp.w2t)):
        m = idx.size
        v = alpha / m * _block_leontief(wt.T, alpha).sum(axis=1)
        local[idx] = m / n * v
    return interaction_matrix(w, first, alpha) @ local


def neumann_residuals(w, first, alpha: float, terms: int = 30) -> list[float]:
    """Operator-norm distance from the interaction matrix to its partial sums
    ``sum_{k < K} T^k`` for ``K = 1..terms``."""
    alpha = check_alpha(alpha)
    bp = _split(w, first)
    s = interaction_matrix_direct(w, first, alpha)
    order = np.concatenate([bp.first, bp.second])
    s = s[np.ix_(order, order)]
    m1 = bp.first.size
    n = s.shape[0]
    t = np.zeros((n, n))
    t[:m1, m1:] = (1 - alpha) * _block_leontief(bp.w1t.T, alpha) @ bp.a1
    t[m1:, :m1] = (1 - alpha) * _block_leontief(bp.w2t.T, alpha) @ bp.a2
    partial = np.zeros((n, n))
    power = np.eye(n)
    out = []
    for _ in range(terms):
        partial = partial + power
        power = power @ t
        out.append(float(np.linalg.norm(s - partial, 2)))
    return out


# -- chains -------------------------------------------------------------------------

def chain_influence(w, part: ChainPartition, alpha: float) -> InfluenceResult:
    """Influence vector assembled block by block.

    ``theta_M = m_M v_M`` and ``theta_r = m_r v_r + S_hat_r theta_{r+1}``,
    with ``v_r`` the influence vector of block ``r`` alone; the result is
    ``(theta_1 (+) ... (+) theta_M) / N``.  Exact for any valid chain; weak
    coupling is only needed for the error bounds.
    """
    w = _as_matrix(w)
    dec = decompose(w, part, alpha)
    blocks = dec.partition.blocks
    n = dec.partition.n
    v = np.empty(n)
    theta = None
    for r in range(dec.partition.m - 1, -1, -1):
        m = len(blocks[r])
        theta = m * dec.block_influence(r) + (dec.s_hat(r) @ theta if theta is not None else 0.0)
        v[list(blocks[r])] = theta / n
    residual = float(np.abs(steady_state_map(w, dec.alpha, v) - v).sum())
    return InfluenceResult(v, "chain", 0, residual)


def truncation_bound(part: ChainPartition, gamma: float, q: int, k_cut: int) -> float:
    """Bound on ``||P_q (v_W - v_U)||_2`` when ``W`` and ``U`` differ only in
    columns of firms in blocks ``k_cut..M``:
    ``2 sqrt(q) |V_K u ... u V_M| / N * gamma^(K - q)``."""
    if not 1 <= q <= k_cut < part.m:
        raise InvalidIndices(f"need 1 <= q <= k_cut < M, got q={q}, k_cut={k_cut}, M={part.m}")
    if not 0 <= gamma < 1:
        raise NotWeaklyCoupled(f"coupling constant {gamma!r} is not below 1")
    if gamma == 0:
        return 0.0
    return 2 * math.sqrt(q) * part.tail_size(k_cut) / part.n * math.exp(-math.log(1 / gamma) * (k_cut - q))


def projected_error(v_w, v_u, part: ChainPartition, q: int) -> float:
    """Euclidean norm of ``v_W - v_U`` on the firms of the first ``q`` blocks."""
    if not 1 <= q <= part.m:
        raise InvalidIndices(f"q must lie in 1..{part.m}, got {q}")
    head = part.head(q)
    return float(np.linalg.norm(np.asarray(v_w)[head] - np.asarray(v_u)[head]))


def tail_columns_only(w, u, part: ChainPartition, k_cut: int) -> bool:
    """True when ``w`` and ``u`` differ only in columns of blocks ``k_cut..M``."""
    diff = np.any(np.asarray(w) != np.asarray(u), axis=0)
    allowed = np.zeros(part.n, dtype=bool)
    for b in part.blocks[k_cut - 1:]:
        allowed[list(b)] = True
    return not np.any(diff & ~allowed)


def certify_truncation(w, u, part: ChainPartition, alpha: float, q: int, k_cut: int) -> BoundCertificate:
    """Projected-error certificate for a tail perturbation.

    The coupling constant used is the larger of the two matrices', since the
    bound needs both chains' interface norms below it.
    """
    w, u = _as_matrix(w), _as_matrix(u)
    if not tail_columns_only(w.w, u.w, part, k_cut):
        raise ValidationError(f"matrices differ outside the columns of blocks {k_cut}..{part.m}")
    dw, du = decompose(w, part, alpha), decompose(u, part, alpha)
    gamma = max(dw.gamma, du.gamma)
    bound = truncation_bound(part, gamma, q, k_cut)
    measured = projected_error(chain_influence(w, part, alpha).v, chain_influence(u, part, alpha).v, part, q)
    return BoundCertificate("truncation", {"alpha": dw.alpha, "gamma": gamma, "q": q, "k_cut": k_cut},
                            bound, measured)


def combined_bound(alpha: float, gamma: float, delta_k: float, k: int) -> float:
    """Per-coordinate error bound on ``V_1`` with ``delta_k``-share missing data
    in blocks ``1..k+1`` and arbitrary data beyond."""
    alpha = check_alpha(alpha)
    if not 0 <= gamma < 1:
        raise NotWeaklyCoupled(f"coupling constant {gamma!r} is not below 1")
    if not 0 <= delta_k < 1:
        raise InvalidDelta(f"delta_k must lie in [0, 1), got {delta_k!r}")
    if k < 0:
        raise InvalidIndices("k must be nonnegative")
    tail = 0.0 if gamma == 0 else 2 * math.exp(-math.log(1 / gamma) * k)
    return delta_share_bound(alpha, delta_k) + tail


def splice(w, u, part: ChainPartition, k: int) -> np.ndarray:
    """Rows of ``w`` for firms in blocks ``1..k+1`` and rows of ``u`` beyond."""
    out = np.asarray(u, dtype=float).copy()
    head = part.head(k + 1)
    out[head] = np.asarray(w, dtype=float)[head]
    return out


def certify_combined(w, u, part: ChainPartition, alpha: float, delta_k: float, k: int) -> BoundCertificate:
    """Largest coordinate error on ``V_1`` against :func:`combined_bound`.

    ``u`` must be ``w`` observed with at most a ``delta_k`` share missing in
    blocks ``1..k+1`` (checked through ``||W - U||_inf`` on those rows) and
    may be arbitrary after.  ``gamma`` is the largest coupling among ``w``,
    ``u`` and their splice.
    """
    w, u = _as_matrix(w), _as_matrix(u)
    if not 0 <= k < part.m - 1:
        raise InvalidIndices(f"k must lie in 0..M-2, got k={k}, M={part.m}")
    head = part.head(k + 1)
    near = np.abs(w.w[head] - u.w[head]).sum(axis=1).max()
    if near > share_perturbation(delta_k) + 1e-12:
        raise ValidationError("observed rows in blocks 1..k+1 differ by more than a delta_k share")
    mixed = validate(splice(w.w, u.w, part, k), "substochastic")
    gamma = max(decompose(m, part, alpha).gamma for m in (w, u, mixed))
    bound = combined_bound(alpha, gamma, delta_k, k)
    v1 = part.head(1)
    measured = float(np.abs(chain_influence(w, part, alpha).v[v1] - chain_influence(u, part, alpha).v[v1]).max())
    return BoundCertificate("combined", {"alpha": alpha, "gamma": gamma, "delta_k": delta_k, "k": k},
                            bound, measured)


# -- random instances -----------------------------------------------------------------

def random_chain(sizes: Sequence[int], rng: np.random.Generator, share: float = 0.3,
                 max_gamma: float = 0.95, alpha: float = 0.5, tries: int = 50) -> IoMatrix:
    """Random directed chain, redrawn until its coupling at ``alpha`` is at
    most ``max_gamma``.

    Firms with suppliers inside their block buy a share below ``share`` from
    the previous block.  Firms alone in their block buy only from the previous
    block; each redraw shrinks both that share and the total purchases of
    lone firms, so the result may be substochastic.
    """
    part = ChainPartition.contiguous(sizes)
    lone = 1.0
    for _ in range(tries):
        w = _chain_draw(part, rng, share, lone)
        if decompose(w, part, alpha).gamma <= max_gamma:
            return w
        share *= 0.7
        lone *= 0.8
    raise NotWeaklyCoupled("could not draw a weakly coupled chain")


def _chain_draw(part: ChainPartition, rng: np.random.Generator, share: float, lone: float = 1.0) -> IoMatrix:
    n = part.n
    w = np.zeros((n, n))
    for r, block in enumerate(part.blocks):
        prev = part.blocks[r - 1] if r else ()
        for i in block:
            _fill_row(w, i, [j for j in block if j != i], list(prev), rng, share, lone)
    return validate(w, "substochastic")


def _fill_row(w, i, inside, before, rng, share, lone=1.0):
    if inside:
        inner = rng.random(len(inside)) * (rng.random(len(inside)) < 0.7)
        if not inner.any():
            inner[rng.integers(len(inside))] = 1.0
    if before:
        outer = rng.random(len(before)) * (rng.random(len(before)) < 0.7)
        if not outer.any():
            outer[rng.integers(len(before))] = 1.0
    if inside and before:
        s = rng.uniform(0, share)
        w[i, inside] = (1 - s) * inner / inner.sum()
        w[i, before] = s * outer / outer.sum()
    elif inside:
        w[i, inside] = inner / inner.sum()
    elif before:
        w[i, before] = lone * outer / outer.sum()


def perturb_tail(w, part: ChainPartition, k_cut: int, rng: np.random.Generator, share: float = 0.3) -> IoMatrix:
    """Redraw the data in the columns of blocks ``k_cut..M`` and keep the chain shape.

    Rows of later blocks are redrawn entirely; rows of block ``k_cut`` keep
    their purchases from block ``k_cut - 1`` and reshuffle the rest inside
    their own block.
    """
    arr = np.array(_as_matrix(w).w)
    blocks = part.blocks
    for r in range(k_cut - 1, part.m):
        block = blocks[r]
        for i in block:
            inside = [j for j in block if j != i]
            if r == k_cut - 1:
                mass = arr[i, inside].sum() if inside else 0.0
                if mass > 0:
                    fresh = rng.random(len(inside)) + 1e-3
                    arr[i, inside] = mass * fresh / fresh.sum()
            else:
                arr[i, :] = 0.0
                _fill_row(arr, i, inside, list(blocks[r - 1]), rng, share)
    return validate(arr, "substochastic")


def random_bipartition(sizes: tuple[int, int], rng: np.random.Generator, alpha: float,
                       share: float = 0.5, max_gamma: float = 0.95,
                       tries: int = 50) -> tuple[IoMatrix, np.ndarray]:
    """Random row-stochastic matrix with a scattered two-part split, redrawn
    until the bipartition coupling is at most ``max_gamma``.

    Returns the matrix and the firms of the first part.
    """
    m1, m2 = sizes
    if m1 < 2 or m2 < 2:
        raise ValidationError("each part needs at least two firms")
    n = m1 + m2
    for _ in range(tries):
        first = np.sort(rng.permutation(n)[:m1])
        second = np.setdiff1d(np.arange(n), first)
        w = np.zeros((n, n))
        for own, other in ((first, second), (second, first)):
            for i in own:
                _fill_row(w, i, [j for j in own if j != i], list(other), rng, share)
        w = validate(w)
        if bipartition_coupling(w, first, alpha) <= max_gamma:
            return w, first
        share *= 0.7
    raise CouplingTooStrong("could not draw a weakly coupled bipartition")
