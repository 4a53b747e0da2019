"""Benchmark runner: one dataset, several methods, one JSON report.

A run is fully determined by the config (including its seed); only the
``*_seconds`` fields change between runs.
"""
from __future__ import annotations

import hashlib
import json
import logging
import statistics
import time
from pathlib import Path

import jsonschema
import numpy as np

from ..errors import ConfigError, DataError
from .data import Dataset, planted_relu_dataset, random_image_dataset
from .io import load_csv, load_image_tensor
from .methods import METHODS, build_method
from .ridge import kernel_ridge_result, ridge_solve, select_ridge

__all__ = ["CONFIG_SCHEMA", "REPORT_SCHEMA", "TIMING_FIELDS", "run_benchmark", "load_config", "config_hash",
           "format_table", "report_json", "strip_timings", "build_dataset"]

log = logging.getLogger(__name__)

TIMING_FIELDS = ("featurize_seconds", "solve_seconds")
# settings that change how a run executes but not what it computes
_UNHASHED = ("cache_dir", "timing_repeats")

_POS_INT = {"type": "integer", "minimum": 1}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_FRACTION = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dataset", "methods"],
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "ridge": _POS_NUM,
        "ridge_grid": {"type": "array", "items": _POS_NUM, "minItems": 1},
        "timing_repeats": _POS_INT,
        "cache_dir": {"type": ["string", "null"]},
        "dataset": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["kind", "n", "d"],
                 "properties": {"kind": {"const": "planted-relu"}, "n": _POS_INT, "d": _POS_INT,
                                "width": _POS_INT, "noise": {"type": "number", "minimum": 0},
                                "test_fraction": _FRACTION}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "n", "shape"],
                 "properties": {"kind": {"const": "random-images"}, "n": _POS_INT,
                                "shape": {"type": "array", "items": _POS_INT, "minItems": 3, "maxItems": 3},
                                "classes": {"type": "integer", "minimum": 2}, "test_fraction": _FRACTION}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "path"],
                 "properties": {"kind": {"const": "csv"}, "path": {"type": "string"},
                                "target": {"type": ["integer", "string", "null"]}, "header": {"type": "boolean"},
                                "task": {"enum": ["regression", "classification"]}, "test_fraction": _FRACTION}},
                {"type": "object", "additionalProperties": False, "required": ["kind", "path", "targets"],
                 "properties": {"kind": {"const": "image-tensor"}, "path": {"type": "string"},
                                "targets": {"type": "string"},
                                "task": {"enum": ["regression", "classification"]}, "test_fraction": _FRACTION}},
            ]
        },
        "methods": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name"],
                "additionalProperties": False,
                "properties": {
                    "name": {"enum": list(METHODS)},
                    "depth": _POS_INT,
                    "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                    "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "dim_scale": _POS_NUM,
                    "filter_size": _POS_INT,
                    "leaf": {"enum": ["srht", "sparse", "identity"]},
                    "workers": _POS_INT,
                    "row_chunk": _POS_INT,
                    **{k: _POS_INT for k in ("s", "n1", "r", "m", "s_star", "m0", "m1", "ms")},
                    **{k: {"type": "integer", "minimum": 0} for k in ("p", "p_dot")},
                },
            },
        },
    },
}

_NUM_OR_NULL = {"type": ["number", "null"]}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "config_hash", "seed", "dataset", "methods"],
    "properties": {
        "schema_version": {"const": 1},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{16}$"},
        "seed": {"type": "integer", "minimum": 0},
        "dataset": {
            "type": "object",
            "required": ["kind", "task", "n_train", "n_test", "input_shape"],
            "properties": {"n_train": {"type": "integer", "minimum": 1}, "n_test": {"type": "integer", "minimum": 0}},
        },
        "methods": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "feature_dim", "mse", "accuracy", "featurize_seconds", "solve_seconds", "seed",
                             "config_hash"],
                "properties": {
                    "name": {"enum": list(METHODS)},
                    "feature_dim": {"type": ["integer", "null"], "minimum": 1},
                    "mse": {"type": ["number", "null"], "minimum": 0},
                    "train_mse": {"type": "number", "minimum": 0},
                    "accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "featurize_seconds": {"type": "number", "minimum": 0},
                    "solve_seconds": {"type": "number", "minimum": 0},
                    "seed": {"type": "integer", "minimum": 0},
                    "config_hash": {"type": "string", "pattern": "^[0-9a-f]{16}$"},
                    "ridge": _NUM_OR_NULL,
                },
            },
        },
    },
}


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(_canonical(obj).encode()).hexdigest()[:16]


def load_config(source) -> dict:
    """Parse and validate a config given as a dict, a JSON string path, or a Path."""
    if isinstance(source, dict):
        cfg = json.loads(json.dumps(source))
    else:
        try:
            cfg = json.loads(Path(source).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config schema violation at {where}: {exc.message}") from None
    if "ridge" in cfg and "ridge_grid" in cfg:
        raise ConfigError("give either ridge or ridge_grid, not both")
    cfg.setdefault("seed", 0)
    cfg.setdefault("timing_repeats", 3)
    cfg.setdefault("cache_dir", None)
    if "ridge_grid" not in cfg:
        cfg.setdefault("ridge", 1e-3)
    return cfg


def build_dataset(spec: dict, seed: int) -> Dataset:
    kind = spec["kind"]
    frac = spec.get("test_fraction", 0.3)
    if kind == "planted-relu":
        return planted_relu_dataset(spec["n"], spec["d"], seed, width=spec.get("width", 64),
                                    noise=spec.get("noise", 0.05), test_fraction=frac)
    if kind == "random-images":
        return random_image_dataset(spec["n"], tuple(spec["shape"]), seed, classes=spec.get("classes", 2),
                                    test_fraction=frac)
    if kind == "csv":
        ds = load_csv(spec["path"], target=spec.get("target", -1), header=spec.get("header", False),
                      task=spec.get("task", "regression"))
    else:
        ds = load_image_tensor(spec["path"], spec["targets"], task=spec.get("task", "regression"))
    if ds.targets is None:
        raise DataError("benchmark datasets need targets")
    return ds.split(frac, seed)


def _data_digest(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.features).tobytes())
    h.update(np.ascontiguousarray(ds.targets).tobytes())
    h.update(ds.train_idx.tobytes())
    h.update(ds.test_idx.tobytes())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _timed(fn, repeats: int):
    """Run fn ``repeats`` times; return the first result and the median wall time."""
    times, result = [], None
    for i in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
        if i == 0:
            result = out
    return result, float(statistics.median(times))


def _cache_path(cache_dir, key: str) -> Path | None:
    return None if cache_dir is None else Path(cache_dir) / f"features-{key}.npz"


def _run_method(entry: dict, ds: Dataset, cfg: dict, data_key: str) -> dict:
    seed = int(cfg["seed"])
    repeats = int(cfg["timing_repeats"])
    params = {k: v for k, v in entry.items() if k != "name"}
    m_hash = config_hash({"method": entry, "seed": seed, "data": data_key})
    method = build_method(entry["name"], params, ds.input_shape, seed)
    X_tr, y_tr = ds.part("train")
    X_te, y_te = ds.part("test")

    if method.is_kernel:
        (K, K_te), feat_s = _timed(lambda: (method.gram(X_tr), method.gram(X_te, X_tr) if len(X_te) else None),
                                   repeats)
        lam = cfg.get("ridge")
        if lam is None:
            lam, _ = select_ridge(cfg["ridge_grid"], y_tr, seed, K=K)
        res, solve_s = _timed(lambda: kernel_ridge_result(K, y_tr, lam, K_te, y_te if len(X_te) else None), repeats)
    else:
        path = _cache_path(cfg["cache_dir"], m_hash)
        if path is not None and path.exists():
            log.info("feature cache hit %s", path.name)
            with np.load(path) as z:
                F_tr, F_te, feat_s = z["train"], z["test"], float(z["seconds"])
        else:
            (F_tr, F_te), feat_s = _timed(lambda: (method.featurize(X_tr), method.featurize(X_te)), repeats)
            if path is not None:
                path.parent.mkdir(parents=True, exist_ok=True)
                np.savez(path, train=F_tr, test=F_te, seconds=feat_s)
        lam = cfg.get("ridge")
        if lam is None:
            lam, _ = select_ridge(cfg["ridge_grid"], y_tr, seed, Phi=F_tr)
        res, solve_s = _timed(lambda: ridge_solve(F_tr, y_tr, lam, F_te, y_te if len(X_te) else None), repeats)
    return {
        "name": entry["name"],
        "feature_dim": method.feature_dim,
        "mse": res.test_mse,
        "train_mse": res.train_mse,
        "accuracy": res.test_accuracy,
        "ridge": float(lam),
        "featurize_seconds": feat_s,
        "solve_seconds": solve_s,
        "seed": seed,
        "config_hash": m_hash,
        "params": params,
    }


def run_benchmark(config) -> dict:
    """Run every configured method on the configured dataset; returns the report dict."""
    cfg = load_config(config)
    seed = int(cfg["seed"])
    ds = build_dataset(cfg["dataset"], seed)
    if ds.train_idx.size == 0:
        raise DataError("benchmark dataset has no training rows")
    data_key = _data_digest(ds)
    report = {
        "schema_version": 1,
        "config_hash": config_hash({k: v for k, v in cfg.items() if k not in _UNHASHED}),
        "seed": seed,
        "dataset": {
            "kind": ds.kind,
            "source": cfg["dataset"]["kind"],
            "task": ds.task,
            "n_train": int(ds.train_idx.size),
            "n_test": int(ds.test_idx.size),
            "input_shape": list(ds.input_shape),
            "digest": data_key,
        },
        "methods": [_run_method(entry, ds, cfg, data_key) for entry in cfg["methods"]],
    }
    jsonschema.validate(report, REPORT_SCHEMA)
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def strip_timings(report: dict) -> dict:
    out = json.loads(json.dumps(report))
    for m in out["methods"]:
        for k in TIMING_FIELDS:
            m.pop(k, None)
    return out


def format_table(report: dict) -> str:
    head = f"{'method':<17}{'dim':>9}{'test mse':>13}{'accuracy':>10}{'ridge':>10}{'feat s':>10}{'solve s':>10}"
    lines = [head, "-" * len(head)]
    for m in report["methods"]:
        dim = "-" if m["feature_dim"] is None else str(m["feature_dim"])
        mse = "-" if m["mse"] is None else f"{m['mse']:.5g}"
        acc = "-" if m["accuracy"] is None else f"{m['accuracy']:.3f}"
        lines.append(f"{m['name']:<17}{dim:>9}{mse:>13}{acc:>10}{m['ridge']:>10.3g}"
                     f"{m['featurize_seconds']:>10.3f}{m['solve_seconds']:>10.3f}")
    return "\n".join(lines)
