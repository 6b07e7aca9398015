"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 a bound
certificate failed under ``--strict`` (or an acceptance check failed).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import acceptance, chains, constructions as cons
from .errors import NumericalError, ParseError, ValidationError
from .influence import RESIDUAL_GATE, POWER_TOL, influence_direct, influence_power
from .io_graph import FORMATS, MODES, IoMatrix, check_alpha, dump_edge_json, load_matrix, save_matrix, vec_p_norm
from .missing_data import MissingSpec, certify, delta_share_bound, observe
from .stochastic import FlowMatrix, monte_carlo_norms, sample_observed

EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CERTIFICATE = 4


class CertificateFailed(Exception):
    pass


# -- argument types ---------------------------------------------------------------

def _open_unit(name):
    def parse(text):
        x = float(text)
        if not 0 < x < 1:
            raise argparse.ArgumentTypeError(f"{name} must lie in (0, 1), got {text}")
        return x
    return parse


def _half_open_unit(text):
    x = float(text)
    if not 0 <= x < 1:
        raise argparse.ArgumentTypeError(f"delta must lie in [0, 1), got {text}")
    return x


def _norm(text):
    q = float(text)
    if not q >= 1:
        raise argparse.ArgumentTypeError(f"norm order must be >= 1 or inf, got {text}")
    return q


def _grid(text):
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text}") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("grid needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def _load_partition(path, n):
    doc = _read_json(path)
    if not isinstance(doc, dict) or "blocks" not in doc:
        raise ParseError(f"{path}: expected a JSON object with a 'blocks' list")
    return chains.ChainPartition.from_blocks(doc["blocks"], n)


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, allow_nan=False, default=_json_default)


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


# -- commands -------------------------------------------------------------------

def cmd_influence(args) -> int:
    w = load_matrix(args.matrix, args.format, args.mode)
    if args.method == "power":
        res = influence_power(w, args.alpha, tol=args.tol, cap=args.cap)
    elif args.method == "chain":
        if not args.partition:
            raise ValidationError("--method chain needs --partition")
        res = chains.chain_influence(w, _load_partition(args.partition, w.n), args.alpha)
    else:
        res = influence_direct(w, args.alpha, gate=args.gate)
    _emit(res.to_json() + "\n", args.out)
    return 0


def cmd_certify(args) -> int:
    mode = "substochastic" if args.partition else args.mode
    w = load_matrix(args.true, args.format, mode)
    u = load_matrix(args.observed, args.format, mode)
    certs = []
    if w.is_stochastic and u.is_stochastic:
        certs.extend(certify(w, u, args.alpha, args.delta))
    if args.partition:
        part = _load_partition(args.partition, w.n)
        if args.k_cut is not None:
            certs.append(chains.certify_truncation(w, u, part, args.alpha, args.q_block, args.k_cut))
        if args.k is not None:
            certs.append(chains.certify_combined(w, u, part, args.alpha, args.delta_k, args.k))
    if not certs:
        raise ValidationError("no certificate applies; give stochastic matrices or a partition with --k-cut/--k")
    _emit("".join(c.to_json() + "\n" for c in certs), args.out)
    if args.strict and not all(c.holds for c in certs):
        raise CertificateFailed(f"{sum(not c.holds for c in certs)} certificate(s) failed")
    return 0


def cmd_observe(args) -> int:
    w = load_matrix(args.matrix, args.format, args.mode)
    spec = MissingSpec.from_dict(_read_json(args.spec))
    u = observe(w, spec)
    if args.out:
        save_matrix(u, args.out, args.out_format)
    else:
        sys.stdout.write(dump_edge_json(u) + "\n")
    return 0


def cmd_simulate(args) -> int:
    flows = FlowMatrix.from_dict(_read_json(args.flows))
    if args.sample_only:
        u = sample_observed(flows, args.zeta, args.seed)
        _emit(dump_edge_json(u) + "\n", args.out)
        return 0
    qs = args.q or [1.0]
    reports = monte_carlo_norms(flows, args.alpha, args.zeta, args.epsilon, qs, args.trials, args.seed)
    if len(reports) == 1:
        text = _dumps(reports[0].to_dict()) + "\n"
    else:
        text = "".join(_dumps(r.to_dict()) + "\n" for r in reports)
    _emit(text, args.out)
    if args.strict and not all(r.passes for r in reports):
        raise CertificateFailed("empirical success fell below the bound by more than 3 standard errors")
    return 0


def cmd_chain(args) -> int:
    w = load_matrix(args.matrix, args.format, "substochastic")
    part = _load_partition(args.partition, w.n)
    dec = chains.decompose(w, part, args.alpha)
    doc = dec.report()
    doc["influence"] = chains.chain_influence(w, part, args.alpha).to_dict()
    _emit(_dumps(doc) + "\n", args.out)
    return 0


def _construct(args) -> tuple[list[cons.NamedConstruction], dict | None]:
    name = args.name
    n = args.n
    if name == "figure1":
        return [cons.figure1()], None
    if name == "lower-bound":
        w, u = cons.lower_bound_pair(n or 10, args.delta)
        return [w, u], cons.lower_bound_missing_spec(n or 10, args.delta).to_dict()
    if name == "star":
        return [cons.star(n or 10)], None
    if name == "two-hub":
        return [cons.two_hub(n or 10)], None
    if name == "firm-share":
        return list(cons.firm_share_pair(n or 10, args.epsilon)), None
    if name == "locality":
        return [cons.locality_chain(n or 100, args.b), cons.locality_truncated(n or 100, args.k, args.b)], None
    raise ValidationError(f"unknown construction {name!r}")


def cmd_construct(args) -> int:
    members, spec = _construct(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".json" if args.out_format == "edge-json" else ".csv"
    files, coefficients, limits = [], {}, {}
    for m in members:
        path = out_dir / f"{m.name}{suffix}"
        save_matrix(m.w, path, args.out_format)
        files.append(str(path))
        if m.closed_form is not None:
            coefficients[m.name] = [float(x) for x in m.closed_form(args.alpha)]
        if m.limit_form is not None:
            limits[m.name] = [float(x) for x in m.limit_form(args.alpha)]
    if spec is not None:
        path = out_dir / f"{args.name}-spec.json"
        path.write_text(_dumps(spec) + "\n")
        files.append(str(path))
    doc = {"name": args.name, "alpha": args.alpha, "params": members[0].params}
    if coefficients:
        doc["closed_form"] = coefficients
    if limits:
        doc["limit_form"] = limits
    closed = out_dir / f"{args.name}.closed.json"
    closed.write_text(_dumps(doc) + "\n")
    files.append(str(closed))
    sys.stdout.write(_dumps({"files": files}) + "\n")
    return 0


def _l1_gap(a: IoMatrix, b: IoMatrix, alpha: float, pad_to: int | None = None) -> float:
    va = influence_direct(a, alpha).v
    vb = influence_direct(b, alpha).v
    if pad_to is not None:
        vb = cons.padded(vb, pad_to)
    return vec_p_norm(va - vb, 1)


SWEEPS = {
    "lower-bound": ("delta", "n"),
    "firm-share": ("epsilon", "n"),
    "locality": ("k", "n"),
}


def _sweep_point(args, value) -> tuple[float, float]:
    a = args.alpha
    kind = args.construction
    if kind == "lower-bound":
        n = int(value) if args.param == "n" else args.n
        delta = value if args.param == "delta" else args.delta
        w, u = cons.lower_bound_pair(n, delta)
        return _l1_gap(w.w, u.w, a), delta_share_bound(a, delta)
    if kind == "firm-share":
        n = int(value) if args.param == "n" else args.n
        eps = value if args.param == "epsilon" else args.epsilon
        g, h = cons.firm_share_pair(n, eps)
        return _l1_gap(g.w, h.w, a), 2 * (1 - a) / (2 - a)
    n = int(value) if args.param == "n" else args.n
    k = int(value) if args.param == "k" else args.k
    g, h = cons.locality_chain(n, args.b), cons.locality_truncated(n, k, args.b)
    return _l1_gap(g.w, h.w, a, pad_to=n), cons.locality_lower_bound(n, k, a)


def cmd_sweep(args) -> int:
    if args.param not in SWEEPS[args.construction]:
        raise ValidationError(f"{args.construction} sweeps over {' or '.join(SWEEPS[args.construction])}, "
                              f"not {args.param}")
    check_alpha(args.alpha)
    xs, measured, bound = [], [], []
    lines = [f"{args.param},measured,bound\n"]
    for value in args.grid:
        m, b = _sweep_point(args, value)
        xs.append(value)
        measured.append(m)
        bound.append(b)
        lines.append(f"{value:.12g},{m:.17g},{b:.17g}\n")
    _emit("".join(lines), args.out)
    if args.plot:
        from .plotting import plot_sweep

        label = "upper bound" if args.construction == "lower-bound" else "lower bound"
        plot_sweep(args.param, xs, measured, bound, args.plot,
                   title=f"{args.construction}, alpha={args.alpha:g}", bound_label=label)
    return 0


def cmd_verify_all(args) -> int:
    checks = acceptance.verify_all(args.seed, rerun=not args.no_rerun)
    _emit(acceptance.render(checks), args.out)
    if not all(c.passed for c in checks):
        raise CertificateFailed(f"{sum(not c.passed for c in checks)} acceptance check(s) failed")
    return 0


# -- parser ---------------------------------------------------------------------

def _matrix_opts(p):
    p.add_argument("--format", choices=FORMATS, help="input format (default: from the file suffix)")
    p.add_argument("--mode", choices=MODES, default="strict", help="row validation mode")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iorank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    alpha = dict(type=_open_unit("alpha"), default=0.5, help="labor share (default 0.5)")

    p = sub.add_parser("influence", help="influence vector of a linkage matrix")
    p.add_argument("--matrix", required=True)
    _matrix_opts(p)
    p.add_argument("--alpha", **alpha)
    p.add_argument("--method", choices=("direct", "power", "chain"), default="direct")
    p.add_argument("--tol", type=float, default=POWER_TOL, help="power-iteration residual target")
    p.add_argument("--cap", type=int, help="power-iteration step cap")
    p.add_argument("--gate", type=float, default=RESIDUAL_GATE, help="direct-solve residual gate")
    p.add_argument("--partition", help="chain partition JSON for --method chain")
    p.add_argument("--out")
    p.set_defaults(func=cmd_influence)

    p = sub.add_parser("certify", help="compare measured influence error with its bounds")
    p.add_argument("--true", required=True, help="true matrix W")
    p.add_argument("--observed", required=True, help="observed matrix U")
    _matrix_opts(p)
    p.add_argument("--alpha", **alpha)
    p.add_argument("--delta", type=_half_open_unit, help="largest missing share")
    p.add_argument("--partition", help="chain partition JSON for the locality certificates")
    p.add_argument("--q", dest="q_block", type=int, default=1, help="leading blocks projected onto")
    p.add_argument("--k-cut", type=int, help="first block whose columns may differ")
    p.add_argument("--k", type=int, help="depth of the observed neighbourhood for the combined bound")
    p.add_argument("--delta-k", type=_half_open_unit, default=0.0)
    p.add_argument("--strict", action="store_true", help="exit 4 when a certificate fails")
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("observe", help="apply a missing-data spec")
    p.add_argument("--matrix", required=True)
    _matrix_opts(p)
    p.add_argument("--spec", required=True, help='JSON {"d": [...], "c": [{"i", "j", "v"}]}')
    p.add_argument("--out")
    p.add_argument("--out-format", choices=FORMATS)
    p.set_defaults(func=cmd_observe)

    p = sub.add_parser("simulate", help="Monte Carlo check of binomial missing data")
    p.add_argument("--flows", required=True, help='JSON {"y": [[...]]} or {"n", "edges": [{"i", "j", "y"}]}')
    p.add_argument("--alpha", **alpha)
    p.add_argument("--zeta", type=_open_unit("zeta"), required=True, help="probability a dollar is missing")
    p.add_argument("--epsilon", type=_open_unit("epsilon"), default=0.2)
    p.add_argument("--q", type=_norm, action="append", help="error norm order, repeatable (default 1)")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-only", action="store_true", help="emit one observed matrix instead")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("chain", help="decompose a directed chain and compute its influence")
    p.add_argument("--matrix", required=True)
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--partition", required=True, help='JSON {"blocks": [[0, 1], [2, 3], ...]}')
    p.add_argument("--alpha", **alpha)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("construct", help="write a named network and its closed form")
    p.add_argument("name", choices=("figure1", "lower-bound", "star", "two-hub", "firm-share", "locality"))
    p.add_argument("--n", type=int)
    p.add_argument("--delta", type=_half_open_unit, default=0.1)
    p.add_argument("--epsilon", type=_open_unit("epsilon"), default=1e-6)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--b", type=_open_unit("b"), default=1e-8)
    p.add_argument("--alpha", **alpha)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--out-format", choices=FORMATS, default="edge-json")
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("sweep", help="measured error and bound over a parameter grid, as CSV")
    p.add_argument("--construction", choices=tuple(SWEEPS), required=True)
    p.add_argument("--param", choices=("delta", "epsilon", "k", "n"), required=True)
    p.add_argument("--grid", type=_grid, required=True, help="start:stop:step, inclusive")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--delta", type=_half_open_unit, default=0.1)
    p.add_argument("--epsilon", type=_open_unit("epsilon"), default=1e-6)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--b", type=_open_unit("b"), default=1e-8)
    p.add_argument("--alpha", **alpha)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--plot", help="also write a PNG figure here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-all", help="run the acceptance checks and print a pass table")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-rerun", action="store_true", help="skip the second, determinism run")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"iorank: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"iorank: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CertificateFailed as exc:
        print(f"iorank: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATE
    except OSError as exc:
        print(f"iorank: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
