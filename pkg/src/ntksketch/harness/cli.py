"""``ntksketch`` command line.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError, NtkSketchError
from ..kernels_exact import ntk_gram
from ..poly_approx import (build_p_relu, build_pdot_relu, grid_error, kappa0_degree_rule, kappa1_degree_rule,
                           select_degrees)
from ..random_features import spectral_audit, statistical_dimension
from .bench import format_table, report_json, run_benchmark
from .data import Dataset
from .io import load_csv, load_targets, read_tensor, save_csv, write_tensor
from .methods import METHODS, build_method
from .ridge import kernel_ridge_result, ridge_solve, select_ridge

log = logging.getLogger("ntksketch")

_DIM_FLAGS = (("m0", "m0"), ("m1", "m1"), ("ms", "ms"), ("s", "s"), ("n1", "n1"), ("r", "r"), ("m", "m"),
              ("sstar", "s_star"), ("p", "p"), ("p-dot", "p_dot"))


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _shared() -> argparse.ArgumentParser:
    sh = argparse.ArgumentParser(add_help=False)
    g = sh.add_argument_group("shared options")
    g.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed for every random transform")
    g.add_argument("--depth", type=int, default=2, help="network depth L")
    g.add_argument("--eps", type=float, default=0.25, help="target relative error")
    g.add_argument("--delta", type=float, default=0.1, help="target failure probability")
    g.add_argument("--method", choices=METHODS, default=None)
    g.add_argument("--filter-size", type=int, default=3, help="convolution filter size q (odd)")
    g.add_argument("--dim-scale", type=float, default=1.0, help="multiply every default dimension")
    for flag, key in _DIM_FLAGS:
        g.add_argument(f"--{flag}", dest=key, type=int, default=None, help=f"override dimension {key}")
    g.add_argument("--leaf", choices=("srht", "sparse", "identity"), default=None, help="PolySketch leaf kind")
    g.add_argument("--workers", type=int, default=1, help="threads for featurization")
    g.add_argument("--ridge", type=float, default=None,
                   help="ridge lambda; the solve uses (Phi^T Phi + lambda*n*I), i.e. lambda is scaled by n")
    g.add_argument("--ridge-grid", type=str, default=None,
                   help="comma-separated ridge values, chosen by validation MSE on a random training subset")
    g.add_argument("--out", type=str, default=None, help="output path (stdout when omitted)")
    g.add_argument("--format", choices=("csv", "bin"), default="csv", help="matrix output format")
    g.add_argument("--header", action="store_true", help="CSV inputs have a header row")
    g.add_argument("-v", "--verbose", action="store_true")
    return sh


def build_parser() -> argparse.ArgumentParser:
    sh = _shared()
    ap = argparse.ArgumentParser(prog="ntksketch", description="Sketched and random-feature NTK/CNTK tools.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("featurize", parents=[sh], help="write the feature matrix of an input file")
    p.add_argument("--input", required=True, help="CSV (rows are points) or NTKF tensor (rank 2 or 4)")
    p.add_argument("--target", default="none", help="CSV target column to drop (index, name or 'none')")

    p = sub.add_parser("exact-kernel", parents=[sh], help="write an exact NTK or CNTK Gram matrix")
    p.add_argument("--input", required=True)
    p.add_argument("--other", default=None, help="second input file for a cross-kernel matrix")
    p.add_argument("--target", default="none")

    p = sub.add_parser("regress", parents=[sh], help="ridge regression with one method")
    p.add_argument("--train", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--target", default="-1", help="CSV target column (index or header name)")
    p.add_argument("--train-targets", default=None, help="targets for an NTKF training tensor")
    p.add_argument("--test-targets", default=None, help="targets for an NTKF test tensor")
    p.add_argument("--task", choices=("regression", "classification"), default="regression")

    p = sub.add_parser("spectral-audit", parents=[sh], help="whitened eigenvalue range of a random-feature kernel")
    p.add_argument("--input", required=True)
    p.add_argument("--target", default="none")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="ridge level (default 0.1*n)")

    p = sub.add_parser("bench", parents=[sh], help="run a benchmark config and write a JSON report")
    p.add_argument("--config", required=True)

    p = sub.add_parser("poly-check", parents=[sh], help="degrees and uniform errors of the kappa polynomials")
    p.add_argument("--grid", type=int, default=10_001)
    return ap


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _method_params(args, name: str) -> dict:
    params = {"depth": args.depth, "eps": args.eps, "delta": args.delta, "dim_scale": args.dim_scale,
              "filter_size": args.filter_size, "workers": args.workers}
    for _, key in _DIM_FLAGS:
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    if args.leaf is not None:
        params["leaf"] = args.leaf
    return params


def _load_inputs(path, args, target="none", targets=None, task="regression") -> Dataset:
    if str(path).endswith(".csv"):
        tgt = None if str(target).lower() == "none" else target
        return load_csv(path, target=tgt, header=args.header, task=task)
    arr = np.asarray(read_tensor(path), dtype=np.float64)
    y = None if targets is None else load_targets(targets, task)
    if arr.ndim == 2:
        return Dataset("vectors", arr, y, task=task)
    if arr.ndim == 4:
        return Dataset("images", arr, y, task=task)
    raise DataError(f"{path}: expected a rank-2 or rank-4 tensor, got rank {arr.ndim}")


def _default_method(ds: Dataset, args, kernel: bool) -> str:
    if args.method is not None:
        return args.method
    if kernel:
        return "exact-cntk" if ds.kind == "images" else "exact-ntk"
    return "cntk-sketch" if ds.kind == "images" else "ntk-sketch"


def _write_matrix(M: np.ndarray, args) -> None:
    if args.out is None:
        if args.format == "bin":
            raise ConfigError("binary output needs --out")
        save_csv(sys.stdout, M)
        return
    if args.format == "bin":
        write_tensor(args.out, M)
    else:
        save_csv(args.out, M)


def _emit_json(obj, args) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _ridge_grid(args) -> list[float] | None:
    if args.ridge_grid is None:
        return None
    try:
        return [float(v) for v in args.ridge_grid.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--ridge-grid must be comma-separated numbers, got {args.ridge_grid!r}") from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_featurize(args) -> int:
    ds = _load_inputs(args.input, args, args.target)
    name = _default_method(ds, args, kernel=False)
    method = build_method(name, _method_params(args, name), ds.input_shape, args.seed)
    if method.is_kernel:
        raise ConfigError(f"{name} has no explicit features; use exact-kernel")
    t0 = time.perf_counter()
    F = method.featurize(ds.features)
    log.info("featurized %d inputs into %d dims in %.3fs", ds.n, F.shape[1], time.perf_counter() - t0)
    _write_matrix(F, args)
    return 0


def cmd_exact_kernel(args) -> int:
    ds = _load_inputs(args.input, args, args.target)
    name = _default_method(ds, args, kernel=True)
    method = build_method(name, _method_params(args, name), ds.input_shape, args.seed)
    if not method.is_kernel:
        raise ConfigError(f"{name} is not an exact kernel; use exact-ntk or exact-cntk")
    other = None if args.other is None else _load_inputs(args.other, args, args.target).features
    _write_matrix(method.gram(ds.features, other), args)
    return 0


def cmd_regress(args) -> int:
    train = _load_inputs(args.train, args, args.target, args.train_targets, args.task)
    if train.targets is None:
        raise DataError("training data has no targets")
    test = None
    if args.test is not None:
        test = _load_inputs(args.test, args, args.target, args.test_targets, args.task)
    name = _default_method(train, args, kernel=False)
    method = build_method(name, _method_params(args, name), train.input_shape, args.seed)
    grid = _ridge_grid(args)
    t0 = time.perf_counter()
    if method.is_kernel:
        K = method.gram(train.features)
        K_te = None if test is None else method.gram(test.features, train.features)
        feat_s = time.perf_counter() - t0
        lam = args.ridge if grid is None else select_ridge(grid, train.targets, args.seed, K=K)[0]
        res = kernel_ridge_result(K, train.targets, lam if lam is not None else 1e-3, K_te,
                                  None if test is None else test.targets)
    else:
        F = method.featurize(train.features)
        F_te = None if test is None else method.featurize(test.features)
        feat_s = time.perf_counter() - t0
        lam = args.ridge if grid is None else select_ridge(grid, train.targets, args.seed, Phi=F)[0]
        res = ridge_solve(F, train.targets, lam if lam is not None else 1e-3, F_te,
                          None if test is None else test.targets)
    res.featurize_seconds = feat_s
    out = {"method": name, "feature_dim": method.feature_dim, "seed": args.seed, **res.summary()}
    _emit_json(out, args)
    return 0


def cmd_spectral_audit(args) -> int:
    ds = _load_inputs(args.input, args, args.target)
    if ds.kind != "vectors":
        raise ConfigError("spectral-audit works on vector data")
    name = args.method or "ntk-rf-leverage"
    method = build_method(name, _method_params(args, name), ds.input_shape, args.seed)
    if method.is_kernel:
        raise ConfigError("spectral-audit needs a feature method")
    lam = args.lam if args.lam is not None else 0.1 * ds.n
    K = ntk_gram(ds.features, args.depth)
    F = method.featurize(ds.features)
    lo, hi = spectral_audit(F, K, lam)
    out = {"method": name, "n": ds.n, "lambda": lam, "feature_dim": method.feature_dim,
           "statistical_dimension": statistical_dimension(K, lam), "eig_min": lo, "eig_max": hi,
           "eps": args.eps, "within_eps": bool(1 - args.eps <= lo and hi <= 1 + args.eps)}
    _emit_json(out, args)
    return 0


def cmd_bench(args) -> int:
    report = run_benchmark(args.config)
    text = report_json(report)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    sys.stderr.write(format_table(report) + "\n")
    return 0


def cmd_poly_check(args) -> int:
    p, p_dot = select_degrees(args.eps, args.depth)
    p1, p0 = kappa1_degree_rule(args.eps), kappa0_degree_rule(args.eps)
    rows = {
        "eps": args.eps,
        "depth": args.depth,
        "sketch_degrees": {"p": p, "p_dot": p_dot},
        "single_kernel_degrees": {"p": p1, "p_dot": p0},
        "kappa1_error_single": grid_error(build_p_relu(p1), args.grid),
        "kappa0_error_single": grid_error(build_pdot_relu(p0), args.grid),
        "kappa1_error_sketch": grid_error(build_p_relu(p), args.grid),
        "kappa0_error_sketch": grid_error(build_pdot_relu(p_dot), args.grid),
    }
    rows["single_kernel_within_eps"] = bool(max(rows["kappa1_error_single"], rows["kappa0_error_single"]) <= args.eps)
    _emit_json(rows, args)
    return 0


COMMANDS = {
    "featurize": cmd_featurize,
    "exact-kernel": cmd_exact_kernel,
    "regress": cmd_regress,
    "spectral-audit": cmd_spectral_audit,
    "bench": cmd_bench,
    "poly-check": cmd_poly_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not 0 <= args.seed < 2**64:
        sys.stderr.write("error: --seed must be an unsigned 64-bit integer\n")
        return ConfigError.exit_code
    try:
        return COMMANDS[args.command](args)
    except NtkSketchError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
