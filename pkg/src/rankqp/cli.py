"""Command line interface.

Commands: solve-qp, train-svm, factor-kernel, verify, predict.  Every
command can write a versioned JSON report; with a fixed --seed the report
is bit-identical across runs except for the timing block.

Exit codes: 0 success, 2 validation/parse error, 3 solver failure,
64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import barrier, ipm, kernel, model, oracle, svm
from .exceptions import (InvariantViolation, ParseError, RankQPError,
                         SolverError, ValidationError)
from .libsvm_io import parse_libsvm

SCHEMA = 1
EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _jsonable(obj):
    if isinstance(obj, float):
        return obj
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _write_report(report, path):
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def load_instance_json(path):
    """Instance file: JSON object with c, A, b, blocks [{lo, hi}...] and
    optional weights, R, r, L, and either U and V or Q."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        blocks = [barrier.BlockDomain.box(blk["lo"], blk["hi"]) for blk in data["blocks"]]
        return model.build_qp_instance(
            c=data["c"], A=data.get("A"), b=data.get("b", []), blocks=blocks,
            weights=data.get("weights"), R=data.get("R"), r=data.get("r"),
            L=data.get("L"),
            U=data.get("U"), V=data.get("V"), Q=data.get("Q"))
    except KeyError as exc:
        raise ValidationError(f"instance file missing field {exc}") from exc


def _kkt_block(inst, x, s, y):
    rep = oracle.kkt_residuals(inst, x, s, y)
    return {"stationarity": rep.stationarity,
            "primal_residual_l1": rep.primal_residual_l1,
            "duality_gap": rep.duality_gap,
            "objective": rep.objective}


def _cmd_solve_qp(args):
    inst = load_instance_json(args.instance)
    t0 = time.perf_counter()
    sol = ipm.solve(inst, args.epsilon, mode=args.mode, backend=args.backend,
                    seed=args.seed)
    elapsed = time.perf_counter() - t0
    report = {"schema": SCHEMA, "command": "solve-qp", "seed": args.seed,
              "parameters": {"epsilon": args.epsilon, "mode": args.mode,
                             "backend": sol.report["backend"]},
              "objective": sol.report["objective"],
              "iterations": sol.report["iterations"],
              "solution": {"x": sol.x, "s": sol.s, "y": sol.y},
              "kkt": _kkt_block(inst, sol.x, sol.s, sol.y),
              "solve": sol.report,
              "timing": {"seconds": elapsed}}
    if args.oracle:
        xo, so, yo, rep = oracle.dense_solve_qp(inst, tol=1e-9)
        report["oracle"] = {"objective": rep.objective,
                            "gap_vs_oracle": sol.report["objective"] - rep.objective,
                            "budget": sol.report["error_budget"]}
    _write_report(report, args.report)
    return EXIT_OK


def _variant_key(name):
    aliases = {"hard": "hard", "hard-margin": "hard", "c-svc": "c-svc",
               "csvc": "c-svc", "nu-svc": "nu-svc", "one-class": "one-class",
               "eps-svr": "eps-svr", "nu-svr": "nu-svr"}
    try:
        return aliases[name]
    except KeyError:
        raise ValidationError(f"unknown variant {name!r}") from None


def _cmd_train_svm(args):
    ds = parse_libsvm(args.data)
    X = ds.to_dense()
    variant = _variant_key(args.variant)
    y = None if variant == "one-class" else ds.y
    spec = svm.SvmSpec(X=X, y=y, variant=variant, kernel=args.kernel,
                       C=args.C, nu=args.nu, eps_tube=args.eps_tube,
                       box_cap=args.radius_R)
    t0 = time.perf_counter()
    mdl = svm.train(spec, eps_solve=args.epsilon, mode=args.mode,
                    backend=args.backend, seed=args.seed)
    elapsed = time.perf_counter() - t0
    report = {"schema": SCHEMA, "command": "train-svm", "seed": args.seed,
              "parameters": {"variant": variant, "kernel": args.kernel,
                             "C": args.C, "nu": args.nu,
                             "eps_tube": args.eps_tube,
                             "epsilon": args.epsilon, "mode": args.mode},
              "objective": mdl.dual_objective,
              "iterations": mdl.solve_report["iterations"],
              "bias": mdl.bias,
              "n_support": int(mdl.support.size),
              "solve": mdl.solve_report,
              "timing": {"seconds": elapsed}}
    if args.oracle and mdl.spec.kernel == "gaussian":
        red = svm.reduce_to_qp(spec, eps_factor=1e-10)
        K = kernel.exact_gaussian_kernel(X)
        report["oracle"] = {"note": "exact-kernel objective at trained alpha",
                            "objective_exact_kernel": _exact_dual_objective(spec, mdl.alpha, K)}
    if args.model_out:
        dump_model(mdl, args.model_out)
        report["model_path"] = args.model_out
    _write_report(report, args.report)
    return EXIT_OK


def _exact_dual_objective(spec, alpha, K):
    n = K.shape[0]
    if spec.variant in ("hard", "c-svc", "nu-svc"):
        Q = K * np.outer(spec.y, spec.y)
    elif spec.variant == "one-class":
        Q = K
    else:
        Q = np.block([[K, -K], [-K, K]])
    quad = 0.5 * float(alpha @ (Q @ alpha))
    if spec.variant in ("hard", "c-svc"):
        return float(alpha.sum()) - quad
    return quad


def _cmd_factor_kernel(args):
    ds = parse_libsvm(args.data)
    X = ds.to_dense()
    t0 = time.perf_counter()
    fact = kernel.gaussian_lowrank_factor(X, args.epsilon)
    elapsed = time.perf_counter() - t0
    report = {"schema": SCHEMA, "command": "factor-kernel", "seed": args.seed,
              "parameters": {"epsilon": args.epsilon},
              "degree": fact.degree, "rank": fact.rank,
              "radius_B": fact.radius,
              "certified_sup_error": fact.sup_error,
              "prune_slack": fact.prune_slack,
              "rank_bound": kernel.rank_bound(X.shape[1], fact.degree),
              "timing": {"seconds": elapsed}}
    if args.out:
        dump_factorization(fact, args.out)
        report["factorization_path"] = args.out
    _write_report(report, args.report)
    return EXIT_OK


def _cmd_verify(args):
    inst = load_instance_json(args.instance)
    with open(args.report_file, "r", encoding="utf-8") as fh:
        report = json.load(fh)
    sol = report["solution"]
    fresh = _kkt_block(inst, np.array(sol["x"]), np.array(sol["s"]), np.array(sol["y"]))
    stored = report["kkt"]
    worst = max(abs(fresh[k] - stored[k]) / max(1.0, abs(stored[k])) for k in fresh)
    ok = worst <= args.tolerance
    _write_report({"schema": SCHEMA, "command": "verify",
                   "recomputed": fresh, "stored": stored,
                   "max_relative_difference": worst,
                   "tolerance": args.tolerance, "match": ok}, args.report)
    return EXIT_OK if ok else EXIT_SOLVER


def _cmd_predict(args):
    mdl = load_model(args.model)
    ds = parse_libsvm(args.data)
    X = ds.to_dense()
    if X.shape[1] < mdl["d"]:
        pad = np.zeros((X.shape[0], mdl["d"] - X.shape[1]))
        X = np.hstack([X, pad])
    elif X.shape[1] > mdl["d"]:
        X = X[:, : mdl["d"]]
    dec = _model_decision(mdl, X)
    labels = np.sign(dec) if mdl["variant"] in ("hard", "c-svc", "nu-svc", "one-class") else dec
    report = {"schema": SCHEMA, "command": "predict", "seed": args.seed,
              "decision_values": dec, "labels": labels}
    if ds.y.size and mdl["variant"] in ("hard", "c-svc", "nu-svc"):
        report["accuracy"] = float(np.mean(np.sign(dec) == ds.y))
    _write_report(report, args.report)
    return EXIT_OK


# -- plain-text model / factorization dumps --------------------------------

def _write_array(fh, name, a):
    a = np.asarray(a, dtype=float).ravel()
    fh.write(f"{name} {a.size}\n")
    fh.write(" ".join(repr(float(v)) for v in a) + "\n")


def _read_array(lines, name):
    header = lines.pop(0).split()
    if header[0] != name:
        raise ParseError(f"expected section {name}, got {header[0]}")
    count = int(header[1])
    vals = np.array([float(t) for t in lines.pop(0).split()])
    if vals.size != count:
        raise ParseError(f"section {name}: expected {count} values, got {vals.size}")
    return vals


def dump_model(mdl: svm.SvmModel, path):
    spec = mdl.spec
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rankqp-svm-model 1\n")
        fh.write(f"variant {spec.variant}\n")
        fh.write(f"kernel {spec.kernel}\n")
        fh.write(f"n {spec.X.shape[0]} d {spec.X.shape[1]}\n")
        fh.write(f"bias {repr(float(mdl.bias))}\n")
        _write_array(fh, "alpha", mdl.alpha)
        _write_array(fh, "support", mdl.support.astype(float))
        coef = mdl._coef()
        _write_array(fh, "coef", coef)
        _write_array(fh, "X", spec.X)
        if mdl.w is not None:
            _write_array(fh, "w", mdl.w)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("rankqp-svm-model"):
        raise ParseError("not a rankqp model file", line=1)
    lines.pop(0)
    meta = {}
    meta["variant"] = lines.pop(0).split()[1]
    meta["kernel"] = lines.pop(0).split()[1]
    nd = lines.pop(0).split()
    meta["n"], meta["d"] = int(nd[1]), int(nd[3])
    meta["bias"] = float(lines.pop(0).split()[1])
    meta["alpha"] = _read_array(lines, "alpha")
    meta["support"] = _read_array(lines, "support").astype(int)
    meta["coef"] = _read_array(lines, "coef")
    meta["X"] = _read_array(lines, "X").reshape(meta["n"], meta["d"])
    if lines and lines[0].startswith("w "):
        meta["w"] = _read_array(lines, "w")
    return meta


def _model_decision(meta, Xq):
    if meta["kernel"] == "linear":
        cross = meta["X"] @ Xq.T
    else:
        d2 = (np.sum(meta["X"]**2, axis=1)[:, None] + np.sum(Xq**2, axis=1)[None, :]
              - 2.0 * meta["X"] @ Xq.T)
        cross = np.exp(-np.maximum(d2, 0.0))
    f_nb = meta["coef"] @ cross
    if meta["variant"] in ("eps-svr", "nu-svr"):
        return f_nb + meta["bias"]
    return f_nb - meta["bias"]


def dump_factorization(fact: kernel.KernelFactorization, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rankqp-kernel-factorization 1\n")
        fh.write(f"degree {fact.degree} rank {fact.rank}\n")
        fh.write(f"radius {repr(fact.radius)} epsilon {repr(fact.epsilon)}\n")
        fh.write(f"sup_error {repr(fact.sup_error)} prune_slack {repr(fact.prune_slack)}\n")
        _write_array(fh, "coeffs", fact.coeffs)
        _write_array(fh, "shift", fact.shift)
        _write_array(fh, "U", fact.U)
        _write_array(fh, "V", fact.V)


def build_parser():
    parser = _Parser(prog="rankqp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--epsilon", type=float, default=1e-3)
        p.add_argument("--mode", choices=["theory", "practical"], default="practical")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report", default=None, help="write the JSON report here")

    p = sub.add_parser("solve-qp", help="solve a QP instance from a JSON file")
    p.add_argument("instance")
    common(p)
    p.add_argument("--backend", choices=["auto", "dense", "lowrank"], default="auto")
    p.add_argument("--oracle", action="store_true",
                   help="also run the dense reference solver and report the gap")
    p.set_defaults(func=_cmd_solve_qp)

    p = sub.add_parser("train-svm", help="train an SVM from LIBSVM data")
    p.add_argument("data")
    common(p)
    p.add_argument("--backend", choices=["auto", "dense", "lowrank"], default="auto")
    p.add_argument("--variant", default="c-svc")
    p.add_argument("--kernel", choices=["linear", "gaussian"], default="linear")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=0.5)
    p.add_argument("--eps-tube", type=float, default=0.1)
    p.add_argument("--radius-R", type=float, default=None,
                   help="box cap for the hard-margin dual")
    p.add_argument("--model-out", default=None)
    p.add_argument("--oracle", action="store_true")
    p.set_defaults(func=_cmd_train_svm)

    p = sub.add_parser("factor-kernel", help="low-rank factor a Gaussian kernel")
    p.add_argument("data")
    common(p)
    p.add_argument("--out", default=None, help="write the factorization dump here")
    p.set_defaults(func=_cmd_factor_kernel)

    p = sub.add_parser("verify", help="recompute a report's KKT residuals")
    p.add_argument("report_file")
    p.add_argument("instance")
    p.add_argument("--tolerance", type=float, default=1e-12)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("predict", help="predict with a dumped model")
    p.add_argument("data")
    p.add_argument("--model", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_predict)
    return parser


def cli_run(argv):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (ValidationError, ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, InvariantViolation) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except RankQPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    raise SystemExit(cli_run(sys.argv[1:]))


if __name__ == "__main__":
    main()
