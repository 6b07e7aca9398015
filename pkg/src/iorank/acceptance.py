"""End-to-end checks of the library against closed forms and certified bounds.

Each ``check_*`` function returns a :class:`Check`.  Details are formatted
with fixed precision and carry no timings, so a report depends only on the
seed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import chains, constructions as cons
from .influence import influence_direct
from .io_graph import mat_inf_norm, validate, vec_p_norm
from .missing_data import MissingSpec, delta_share_bound, observe, random_missing_spec, share_perturbation
from .stochastic import FlowMatrix, error_threshold, monte_carlo_norms

ALPHAS = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass(frozen=True)
class Check:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{self.number:>2} {'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _rng(seed: int, number: int) -> np.random.Generator:
    return np.random.default_rng([seed, number])


def check_figure1(seed: int = 0) -> Check:
    net = cons.figure1()
    worst = max(np.abs(influence_direct(net.w, a).v - net.closed_form(a)).max() for a in ALPHAS)
    return Check(1, "figure1 closed form", worst <= 1e-10, f"max error {worst:.3e} (tol 1e-10)")


def check_lower_bound_closed_forms(seed: int = 0) -> Check:
    worst_coef = worst_shift = 0.0
    for n in (4, 10, 50):
        for delta in (0.01, 0.1, 0.3):
            for a in (0.1, 0.5, 0.9):
                w, u = cons.lower_bound_pair(n, delta)
                vw = influence_direct(w.w, a).v
                vu = influence_direct(u.w, a).v
                x, y, z = cons.lower_bound_coefficients(n, delta, a)
                worst_coef = max(worst_coef, abs(vw[0] - x), abs(vw[1] - y), np.abs(vw[2:] - z).max())
                shift = cons.lower_bound_shift(n, delta, a)
                worst_shift = max(worst_shift, abs((vw[0] - vu[0]) + shift), abs((vw[1] - vu[1]) - shift))
    ok = worst_coef <= 1e-10 and worst_shift <= 1e-10
    return Check(2, "lower-bound closed forms", ok,
                 f"coefficient error {worst_coef:.3e}, shift error {worst_shift:.3e} (tol 1e-10)")


def check_delta_share_certificate(seed: int = 0, instances: int = 1000) -> Check:
    rng = _rng(seed, 3)
    bad_bound = bad_inf = 0
    tightest = 0.0
    for _ in range(instances):
        n = int(rng.integers(2, 21))
        delta = float(rng.uniform(0.0, 0.5))
        alpha = float(rng.uniform(0.05, 0.95))
        w = cons.random_io_matrix(n, rng)
        u = observe(w, random_missing_spec(w, delta, rng))
        err = vec_p_norm(influence_direct(u, alpha).v - influence_direct(w, alpha).v, 1)
        bound = delta_share_bound(alpha, delta)
        bad_bound += err > bound + 1e-12
        bad_inf += mat_inf_norm(w.w - u.w) > share_perturbation(delta) + 1e-12
        if bound > 0:
            tightest = max(tightest, err / bound)
    ok = bad_bound == 0 and bad_inf == 0
    return Check(3, "delta-share certificate", ok,
                 f"{instances} instances, {bad_bound} bound and {bad_inf} inf-norm violations, "
                 f"max measured/bound {tightest:.4f}")


def check_sharpness(seed: int = 0) -> Check:
    n, a = 50, 0.5
    deltas = np.round(np.arange(1, 21) * 0.01, 10)
    ratios, uppers = [], []
    for delta in deltas:
        w, u = cons.lower_bound_pair(n, float(delta))
        err = vec_p_norm(influence_direct(w.w, a).v - influence_direct(u.w, a).v, 1)
        ratios.append(err / delta)
        uppers.append(delta_share_bound(a, float(delta)) / delta)
    ratios = np.array(ratios)
    spread = (ratios.max() - ratios.min()) / ratios.mean()
    lower = 2 * (1 - a) / (2 - a) * 0.9
    inside = bool(np.all(ratios >= lower) and np.all(ratios <= np.array(uppers)))
    ok = spread <= 0.01 and inside
    return Check(4, "linear scaling in delta", ok,
                 f"ratio {ratios.mean():.6f}, relative spread {spread:.2e}, "
                 f"bracket [{lower:.4f}, {min(uppers):.4f}]")


def check_extremal_coefficients(seed: int = 0, instances: int = 500) -> Check:
    worst_attain = 0.0
    for n in (3, 5, 12, 40):
        for a in (0.1, 0.5, 0.9):
            v = influence_direct(cons.two_hub(n).w, a).v
            worst_attain = max(worst_attain, abs(v.max() - cons.max_coefficient(n, a)),
                               abs(v.min() - cons.min_coefficient(n, a)))
    rng = _rng(seed, 5)
    violations = 0
    for _ in range(instances):
        n = int(rng.integers(3, 13))
        a = float(rng.choice([0.1, 0.5, 0.9]))
        v = influence_direct(cons.random_io_matrix(n, rng), a).v
        violations += v.max() > cons.max_coefficient(n, a) + 1e-9 or v.min() < cons.min_coefficient(n, a) - 1e-9
    ok = worst_attain <= 1e-12 and violations == 0
    return Check(5, "extremal coefficients", ok,
                 f"two-hub error {worst_attain:.3e} (tol 1e-12), {violations}/{instances} random violations")


def check_firm_share(seed: int = 0) -> Check:
    g, h = cons.firm_share_pair(200, 1e-6)
    parts, ok = [], True
    for a in (0.25, 0.5):
        gap = vec_p_norm(influence_direct(g.w, a).v - influence_direct(h.w, a).v, 1)
        need = 2 * (1 - a) / (2 - a) - 0.05
        ok &= gap >= need
        parts.append(f"alpha={a}: {gap:.6f} >= {need:.6f}")
    return Check(6, "one firm's data moves influence", ok, "; ".join(parts))


def check_monte_carlo(seed: int = 0, trials: int = 10_000) -> Check:
    flows = FlowMatrix.uniform(10, 1000)
    start = time.perf_counter()
    reports = monte_carlo_norms(flows, 0.5, 0.1, 0.2, (1.0, 2.0, math.inf), trials, seed)
    fast = time.perf_counter() - start < 60
    need = 0.998771 - 3 * math.sqrt(0.0012 / trials)
    ok = fast and all(r.empirical_success >= need and r.concentration_violations == 0 for r in reports)
    rates = ", ".join(f"q={'inf' if math.isinf(r.q) else int(r.q)}: {r.empirical_success:.4f}" for r in reports)
    r = reports[0]
    return Check(7, "binomial missing data", ok,
                 f"{trials} trials, threshold {error_threshold(0.5, 0.2):.4f}, success {rates} "
                 f"(need {need:.6f}), concentrated {r.concentrated_trials} with "
                 f"{r.concentration_violations} violations, runtime {'ok' if fast else 'over 60s'}")


def check_chain_formulas(seed: int = 0) -> Check:
    rng = _rng(seed, 8)
    s_err = 0.0
    for _ in range(100):
        a = float(rng.uniform(0.2, 0.8))
        sizes = (int(rng.integers(2, 7)), int(rng.integers(2, 7)))
        w, first = chains.random_bipartition(sizes, rng, a)
        s_err = max(s_err, np.abs(chains.interaction_matrix(w, first, a)
                                  - chains.interaction_matrix_direct(w, first, a)).max())
    v_err = 0.0
    for _ in range(100):
        a = float(rng.uniform(0.2, 0.8))
        sizes = [int(s) for s in rng.integers(1, 7, size=int(rng.integers(1, 9)))]
        part = chains.ChainPartition.contiguous(sizes)
        w = chains.random_chain(sizes, rng, alpha=a)
        v_err = max(v_err, np.abs(chains.chain_influence(w, part, a).v - influence_direct(w, a).v).max())
    held = 0
    for _ in range(200):
        while True:
            a = float(rng.uniform(0.2, 0.8))
            sizes = [int(s) for s in rng.integers(1, 7, size=int(rng.integers(2, 9)))]
            part = chains.ChainPartition.contiguous(sizes)
            w = chains.random_chain(sizes, rng, alpha=a)
            k_cut = int(rng.integers(1, part.m))
            q = int(rng.integers(1, k_cut + 1))
            u = chains.perturb_tail(w, part, k_cut, rng)
            if chains.decompose(u, part, a).weakly_coupled:
                break
        held += chains.certify_truncation(w, u, part, a, q, k_cut).holds
    ok = s_err <= 1e-10 and v_err <= 1e-10 and held == 200
    return Check(8, "chain formulas and truncation bound", ok,
                 f"interaction matrix error {s_err:.3e}, chain influence error {v_err:.3e} (tol 1e-10), "
                 f"truncation certificate held {held}/200")


def singleton_chain(n: int) -> np.ndarray:
    """Firm ``i`` buys everything from firm ``i - 1``; firm 0 buys nothing."""
    w = np.zeros((n, n))
    w[np.arange(1, n), np.arange(n - 1)] = 1.0
    return w


def check_combined(seed: int = 0, per_case: int = 40) -> Check:
    rng = _rng(seed, 9)
    n = 30
    part = chains.ChainPartition.singletons(n)
    w = validate(singleton_chain(n), "substochastic")
    total = held = 0
    slack = math.inf
    for delta_k in (0.0, 0.05, 0.1):
        for k in (3, 10):
            for _ in range(per_case):
                a = float(rng.uniform(0.2, 0.8))
                near = np.arange(1, k + 2)
                d = np.zeros(n)
                d[near] = rng.uniform(0, delta_k, size=near.size)
                c = np.zeros((n, n))
                c[near, near - 1] = d[near]
                u = np.array(observe(w, MissingSpec(d, c)).w)
                tail = np.arange(k + 2, n)
                u[tail, tail - 1] = rng.uniform(0.0, 1.0, size=tail.size)
                cert = chains.certify_combined(w, validate(u, "substochastic"), part, a, delta_k, k)
                total += 1
                held += cert.holds
                slack = min(slack, cert.bound - cert.measured)
    return Check(9, "combined locality certificate", held == total,
                 f"held {held}/{total}, min slack {slack:.3e}")


def check_locality(seed: int = 0) -> Check:
    n, k, a, b = 100, 10, 0.5, 1e-8
    g = cons.locality_chain(n, b)
    h = cons.locality_truncated(n, k, b)
    vg = influence_direct(g.w, a).v
    vh = influence_direct(h.w, a).v
    gap = vec_p_norm(vg - cons.padded(vh, n), 1)
    need = 0.9 * cons.locality_lower_bound(n, k, a)
    p = g.limit_form(a)
    closed = max(np.abs(vg - p).max(), np.abs(vh - h.limit_form(a)).max())
    in_range = bool(np.all(p >= a / n - 1e-15) and np.all(p <= 1 / (a * n) + 1e-15))
    ok = gap >= need and closed <= 1e-5 and in_range
    return Check(10, "locality counterexample", ok,
                 f"gap {gap:.6f} >= {need:.6f}, closed-form error {closed:.3e} (tol 1e-5), "
                 f"p in [{p.min():.6f}, {p.max():.6f}] within [{a / n:.4f}, {1 / (a * n):.4f}]")


CHECKS: tuple[Callable[[int], Check], ...] = (
    check_figure1,
    check_lower_bound_closed_forms,
    check_delta_share_certificate,
    check_sharpness,
    check_extremal_coefficients,
    check_firm_share,
    check_monte_carlo,
    check_chain_formulas,
    check_combined,
    check_locality,
)


def run_checks(seed: int = 0) -> list[Check]:
    return [f(seed) for f in CHECKS]


def render(checks: list[Check]) -> str:
    return "".join(c.line() + "\n" for c in checks)


def verify_all(seed: int = 0, rerun: bool = True) -> list[Check]:
    """Run every check; with ``rerun`` run them twice and compare the reports byte for byte."""
    checks = run_checks(seed)
    if rerun:
        same = render(run_checks(seed)) == render(checks)
        checks.append(Check(11, "deterministic report", same,
                            f"second run with seed {seed} {'identical' if same else 'differs'}"))
    return checks
