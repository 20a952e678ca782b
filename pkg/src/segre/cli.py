"""Command-line front end.

Exit status: 0 on success, 2 on bad arguments or input files, 3 when any
certified violation of a proved inequality is found.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

import numpy as np

from . import experiments as ex
from . import serialize as ser
from .cross_norms import NormKind, Verdict, hilbert_norm, injective_norm, projective_norm
from .normed_space import ConvergenceError, auerbach_basis
from .options import OptimizerOptions
from .rank_tools import NotContained, Ruling, StructureError, is_segre, rank_upper_bound, segre_subspace_structure
from .sigma_operators import lipschitz_estimate, operator_norm, p_summing_ratio

EXIT_OK, EXIT_USAGE, EXIT_VIOLATION = 0, 2, 3
log = logging.getLogger("segre")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, *, config=False, tensor=False):
    if config:
        p.add_argument("--config", required=True, help="JSON input file")
    if tensor:
        p.add_argument("--tensor", required=True, help="JSON tensor file")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, help="overrides the seed in the config")
    p.add_argument("--restarts", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="segre", description="Cross-norm, rank and multilinear-map numerics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    spaces = sub.add_parser("spaces", help="normed-space utilities").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    _common(spaces.add_parser("auerbach", help="Auerbach basis of a space"), config=True)

    norms = sub.add_parser("norms", help="cross-norm certificates").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = norms.add_parser("eval", help="certified bounds on a tensor norm")
    _common(p, tensor=True)
    p.add_argument("--kind", default="all", help="injective, projective, hilbert or all")

    rank = sub.add_parser("rank", help="tensor rank tools").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    p = rank.add_parser("estimate", help="rank bracket with border-rank flags")
    _common(p, tensor=True)
    p.add_argument("--rmax", type=int, required=True)
    p.add_argument("--refine", action="store_true", help="try to raise the flattening lower bound")
    _common(rank.add_parser("segre", help="is the tensor decomposable?"), tensor=True)
    _common(rank.add_parser("ruling", help="ruling of a subspace spanned by decomposables"), config=True)

    sigma = sub.add_parser("sigma", help="multilinear maps").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    _common(sigma.add_parser("opnorm", help="operator norm bracket"), config=True)
    p = sigma.add_parser("lip", help="Lipschitz lower bound on the Segre cone")
    _common(p, config=True)
    p.add_argument("--pairs", type=int, default=64)
    p = sigma.add_parser("psum", help="p-summing ratio of a finite family")
    _common(p, config=True)
    p.add_argument("--family", required=True, help='JSON {"p": .., "us": [[..]], "vs": [[..]]}')

    exp = sub.add_parser("exp", help="seeded experiments").add_subparsers(
        dest="action", required=True, parser_class=_Parser)
    for name in ex.EXPERIMENTS:
        p = exp.add_parser(name, help=f"run the {name} experiment")
        _common(p, config=True)
        p.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")
    return parser


def _options(args, base: OptimizerOptions | None = None) -> OptimizerOptions:
    base = base or OptimizerOptions()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.restarts is not None:
        changes["restarts"] = args.restarts
    if args.tol is not None and args.command in ("norms", "sigma", "spaces"):
        changes["tol"] = args.tol
    return dataclasses.replace(base, **changes)


def _emit(args, data) -> None:
    if args.format == "csv":
        rows = data if isinstance(data, list) else [_flat(data)]
        text = ex.to_csv(rows)
    else:
        text = ser.dumps(data)
    if args.out:
        ser.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


def _flat(d: dict, prefix="") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = ser.json.dumps(v)
        else:
            out[key] = v
    return out


# -- subcommands -------------------------------------------------------------------------


def _spaces(args):
    space = ser.space_from_dict(ser.load_json(args.config))
    try:
        b = auerbach_basis(space, _options(args))
        ok = True
    except ConvergenceError as exc:
        b, ok = exc.best, False
    return {"space": ser.space_to_dict(space), "vectors": b.vectors.tolist(), "duals": b.duals.tolist(),
            "determinant": b.determinant, "defects": b.defects(), "converged": ok}, False


def _norms(args):
    z = ser.dense(ser.tensor_from_dict(ser.load_json(args.tensor)))
    opts = _options(args)
    kinds = [NormKind.INJECTIVE, NormKind.PROJECTIVE] if args.kind == "all" else [NormKind.parse(args.kind)]
    if args.kind == "all" and all(m.is_euclidean for m in z.modes):
        kinds.append(NormKind.HILBERT)
    out = {}
    for k in kinds:
        if k is NormKind.INJECTIVE:
            out[k.value] = ser.certificate_to_dict(injective_norm(z, opts))
        elif k is NormKind.PROJECTIVE:
            out[k.value] = ser.certificate_to_dict(projective_norm(z, opts))
        else:
            h = hilbert_norm(z)
            out[k.value] = {"kind": k.value, "lower": h, "upper": h, "gap": 0.0, "converged": True}
    violation = any(v["lower"] > v["upper"] * (1 + 1e-9) + 1e-12 for v in out.values())
    return out, violation


def _rank(args):
    if args.action == "ruling":
        data = ser.load_json(args.config)
        basis = [ser.dense(ser.tensor_from_dict(t)) for t in data["basis"]]
        tol = args.tol if args.tol is not None else 1e-8
        try:
            res = segre_subspace_structure(basis, tol=tol, seed=args.seed or 0)
        except StructureError as exc:
            return {"result": "StructureError", "message": str(exc)}, False
        if isinstance(res, NotContained):
            return {"result": "NotContained", "witness": ser.tensor_to_dict(res.witness)}, False
        assert isinstance(res, Ruling)
        return {"result": "Ruling", "mode": res.mode,
                "fixed_factors": [None if v is None else v.coords.tolist() for v in res.fixed_factors],
                "line_space": [v.coords.tolist() for v in res.line_space]}, False
    z = ser.dense(ser.tensor_from_dict(ser.load_json(args.tensor)))
    if args.action == "segre":
        tol = args.tol if args.tol is not None else 1e-8
        return {"is_segre": is_segre(z, tol), "tol": tol}, False
    kw = {"tol": args.tol} if args.tol is not None else {}
    est = rank_upper_bound(z, args.rmax, _options(args), refine_lower=args.refine, **kw)
    return {"lower": est.lower, "upper": est.upper, "status": est.status, "tol": est.tol,
            "lower_method": est.lower_method,
            "border_suspected": [{"m": m, "flag": "BorderRankSuspected"} for m in est.border_suspected],
            "residuals": {str(m): r for m, r in sorted(est.residuals.items())},
            "witness": ser.tensor_to_dict(est.witness) if est.witness is not None else None}, False


def _sigma(args):
    T = ser.map_from_dict(ser.load_json(args.config))
    opts = _options(args)
    if args.action == "opnorm":
        c = operator_norm(T, opts)
        return ser.certificate_to_dict(c), False
    if args.action == "lip":
        c = operator_norm(T, opts)
        est = lipschitz_estimate(T, args.pairs, opts, operator_cert=c)
        violation = est.value > c.upper * (1 + 1e-9) + 1e-12
        return {"lipschitz_lower": est.value, "pairs": est.pairs, "denominator": est.denominator_method,
                "operator_norm_lower": c.lower, "operator_norm_upper": c.upper}, violation
    fam = ser.load_json(args.family)
    res = p_summing_ratio(T, [tuple(np.asarray(a) for a in u) for u in fam["us"]],
                          [tuple(np.asarray(a) for a in v) for v in fam["vs"]], float(fam.get("p", 1.0)), opts)
    return dataclasses.asdict(res), False


def _exp(args):
    data = ser.load_json(args.config)
    data = dict(data, experiment=args.action)
    cfg = ser.config_from_dict(data, seed=args.seed)
    cfg = dataclasses.replace(cfg, optimizer=_options(args, cfg.optimizer),
                              workers=args.workers if args.workers else cfg.workers)
    name = args.action
    if name in ("equivalence", "subspace", "closedness"):
        fn = {"equivalence": ex.run_equivalence_trial, "subspace": ex.subspace_bound_trial,
              "closedness": ex.matrix_closedness_demo}[name]
        trials = fn(cfg)
        violation = any(t.verdict is Verdict.VIOLATION for t in trials)
        if args.format == "csv":
            return ex.trial_rows(trials), violation
        key = {"equivalence": "ratio_upper", "subspace": "ratio_upper", "closedness": None}[name]
        return {"config": ser.config_to_dict(cfg), "summary": ex.summary(trials, key),
                "trials": ex.trial_rows(trials)}, violation
    if name == "sigma-r":
        est = ex.estimate_sigma_r(cfg)
        rows = [dataclasses.asdict(r) for r in est.table]
        if args.format == "csv":
            return rows, False
        return {"config": ser.config_to_dict(cfg), "value": est.value, "table": rows,
                "witness": [ser.tensor_to_dict(t) for t in est.witness] if est.witness else None}, False
    rep = ex.border_rank_experiment(cfg)
    rows = [dataclasses.asdict(r) for r in rep.rows]
    if args.format == "csv":
        return rows, False
    return {"config": ser.config_to_dict(cfg), "rows": rows, "halving_ratios": list(rep.halving_ratios),
            "limit_rank": {"lower": rep.limit_lower, "upper": rep.limit_upper,
                           "border_suspected": list(rep.border_suspected)},
            "trajectory": [list(t) for t in rep.trajectory]}, False


HANDLERS = {"spaces": _spaces, "norms": _norms, "rank": _rank, "sigma": _sigma, "exp": _exp}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        data, violation = HANDLERS[args.command](args)
    except (ser.InputError, KeyError, TypeError, ValueError, FileNotFoundError) as exc:
        msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"segre: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    _emit(args, data)
    if violation:
        log.error("certified violation found")
        return EXIT_VIOLATION
    return EXIT_OK


def main() -> None:
    sys.exit(run())


__all__ = ["build_parser", "main", "run"]
