"""Command-line pipeline: ``simulate``, ``fit``, ``predict``, ``validate``, ``bench``.

Configuration is a flat YAML mapping checked against :data:`SCHEMA` before
any computation. Each stage reads and writes plain files in ``--out``::

    simulate  -> data.csv, train.csv, test.csv   (z observed, y hidden truth)
    fit       -> fit.json, basis.jsonl
    predict   -> predictions.csv
    validate  -> diagnostics.csv, diagnostics.txt
    bench     -> bench.csv, bench.txt

Exit status is 0 on success, 2 for configuration or input problems and 3 for
numerical failures. Failures print one line to stderr of the form
``frkpy: error=<kind> stage=<cmd> reason=<text>``.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import bench as bench_mod
from .basis import BasisSet, MultiResSpec, Resolution, build_multires, load_basis, save_basis
from .covariance import Ar1PerResolution, ExpCentroid, KModel, NoiseParams, ScaledIdentity, Unstructured
from .data import CsvSchema, DataError, SpatialDataset, SplitSpec, load_csv, split_indices
from .diagnostics import diagnose, format_table, write_table
from .em import EmConfig, EmMonotonicityError, fit_em, initial_params, load_fit, save_fit
from .engine import PredictiveResult, SingularModelError, SreParams, fit_matern_ml, kriging_baseline, predict
from .engine import write_predictions
from .simulate import simulate_sre, uniform_locations
from .transgauss import McConfig, TransformDomainError, predict_trans

__all__ = ["SCHEMA", "ConfigError", "load_config", "validate_config", "run_pipeline", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("simulate", "fit", "predict", "validate", "bench")


class ConfigError(ValueError):
    """Invalid configuration or missing upstream input."""


# ---------------------------------------------------------------- schema


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def _float(v):
    if not _is_num(v):
        raise TypeError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _list(item: Callable) -> Callable:
    def check(v):
        if not isinstance(v, list):
            raise TypeError("expected a list")
        return [item(x) for x in v]
    return check


def _opt(check: Callable) -> Callable:
    return lambda v: None if v is None else check(v)


def _choice(*options: str) -> Callable:
    def check(v):
        if v not in options:
            raise TypeError(f"expected one of {', '.join(options)}")
        return v
    return check


_grid = _list(_list(_int))

#: key -> (validator, default)
SCHEMA: dict[str, tuple[Callable, Any]] = {
    "seed": (_int, 0),
    # files and CSV schema
    "data_path": (_opt(_str), None),
    "test_path": (_opt(_str), None),
    "coord_columns": (_list(_str), ["s1", "s2"]),
    "value_column": (_str, "z"),
    "truth_column": (_str, "y"),
    "covariate_columns": (_list(_str), []),
    "intercept": (_bool, True),
    # basis
    "basis_grid": (_grid, [[4, 4], [8, 8]]),
    "basis_ratio": (_float, 1.5),
    "basis_extend": (_bool, False),
    "bbox_lower": (_opt(_list(_float)), None),
    "bbox_upper": (_opt(_list(_float)), None),
    # coefficient covariance and noise initial values
    "k_model": (_choice("exp_centroid", "ar1", "scaled_identity", "unstructured"), "exp_centroid"),
    "k_length_scale": (_opt(_float), None),
    "k_rho": (_float, 0.5),
    "sigma2_delta": (_opt(_float), None),
    "sigma2_eps": (_opt(_float), None),
    # E-M
    "em_max_iter": (_int, 200),
    "em_tol": (_float, 1e-6),
    "em_param_tol": (_float, 1e-5),
    "free_beta": (_bool, True),
    "free_k": (_bool, True),
    "free_sigma2_delta": (_bool, False),
    "free_sigma2_eps": (_bool, True),
    "merge_nugget": (_bool, False),
    # prediction
    "level": (_float, 0.9),
    "boxcox_lambda": (_opt(_float), None),
    "mc_samples": (_int, 2000),
    "method_name": (_str, "FRK"),
    # validation baseline
    "baseline_matern": (_bool, False),
    "matern_nu": (_float, 1.5),
    "matern_max_n": (_int, 2000),
    # simulation
    "sim_n": (_int, 8000),
    "sim_test_fraction": (_float, 0.5),
    "sim_lower": (_list(_float), [0.0, 0.0]),
    "sim_upper": (_list(_float), [1.0, 1.0]),
    "sim_grid": (_grid, [[4, 4], [8, 8]]),
    "sim_k_sigma2": (_float, 1.0),
    "sim_k_length_scale": (_float, 0.3),
    "sim_sigma2_delta": (_float, 0.05),
    "sim_sigma2_eps": (_float, 0.2),
    "sim_beta": (_list(_float), [1.0]),
    # benchmark
    "bench_sizes": (_list(_int), [1000, 10000, 100000]),
    "bench_r": (_int, 100),
    "bench_targets": (_int, 1000),
    "bench_dense_max": (_int, 4000),
    "bench_repeats": (_int, 3),
}


def validate_config(raw: dict | None) -> dict:
    """Check keys and types, fill defaults and apply range checks."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat key-value mapping")
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(map(str, unknown))}")
    cfg = {}
    for key, (check, default) in SCHEMA.items():
        if key not in raw:
            cfg[key] = default
            continue
        try:
            cfg[key] = check(raw[key])
        except TypeError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    if not 0 < cfg["level"] < 1:
        raise ConfigError("level: must lie in (0, 1)")
    if not 0 < cfg["sim_test_fraction"] < 1:
        raise ConfigError("sim_test_fraction: must lie in (0, 1)")
    if len(cfg["coord_columns"]) == 0:
        raise ConfigError("coord_columns: at least one coordinate column is required")
    if cfg["free_sigma2_delta"] and cfg["free_sigma2_eps"] and not cfg["merge_nugget"]:
        raise ConfigError("free_sigma2_delta and free_sigma2_eps need merge_nugget: true")
    if (cfg["bbox_lower"] is None) != (cfg["bbox_upper"] is None):
        raise ConfigError("bbox_lower and bbox_upper must be given together")
    if len(cfg["sim_lower"]) != len(cfg["sim_upper"]):
        raise ConfigError("sim_lower and sim_upper differ in length")
    if cfg["sim_n"] < 2:
        raise ConfigError("sim_n: at least two locations are required")
    if cfg["mc_samples"] < 100:
        raise ConfigError("mc_samples: at least 100 required")
    for key in ("basis_grid", "sim_grid"):
        if not cfg[key] or any(not row or min(row) < 1 for row in cfg[key]):
            raise ConfigError(f"{key}: each resolution needs positive per-axis counts")
    return cfg


def load_config(path) -> dict:
    if path is None:
        return validate_config({})
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {str(exc).splitlines()[0]}") from None
    return validate_config(raw)


# ---------------------------------------------------------------- helpers


def _schema(cfg: dict, value: str | None = None) -> CsvSchema:
    return CsvSchema(
        coords=tuple(cfg["coord_columns"]),
        value=value or cfg["value_column"],
        covariates=tuple(cfg["covariate_columns"]),
        intercept=cfg["intercept"],
    )


def _path(cfg: dict, key: str, out: Path, default: str) -> Path:
    return Path(cfg[key]) if cfg[key] else out / default


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"missing {what}: {path}")
    return path


def _load_targets(cfg: dict, path: Path) -> tuple[np.ndarray, np.ndarray | None]:
    """Target coordinates and covariates; the value column is not needed."""
    sch = _schema(cfg)
    cols = (*sch.coords, *sch.covariates)
    ds = load_csv(_require(path, "target file"), replace(sch, value=cols[0]))
    return ds.locations, ds.covariates


def _k_template(cfg: dict, lower, upper) -> KModel:
    if cfg["k_model"] == "scaled_identity":
        return ScaledIdentity(1.0)
    if cfg["k_model"] == "ar1":
        return Ar1PerResolution(1.0, cfg["k_rho"])
    if cfg["k_model"] == "unstructured":
        return Unstructured(np.eye(1))  # replaced by initial_params
    ell = cfg["k_length_scale"]
    if ell is None:
        ell = 0.25 * float(np.max(np.asarray(upper) - np.asarray(lower)))
    return ExpCentroid(1.0, ell)


def _build_basis(cfg: dict, ds: SpatialDataset) -> BasisSet:
    if cfg["bbox_lower"] is not None:
        lower, upper = cfg["bbox_lower"], cfg["bbox_upper"]
    else:
        lower, upper = ds.locations.min(axis=0), ds.locations.max(axis=0)
    res = [Resolution(tuple(c), cfg["basis_ratio"]) for c in cfg["basis_grid"]]
    return build_multires(MultiResSpec(res, tuple(lower), tuple(upper), cfg["basis_extend"]))


# ---------------------------------------------------------------- stages


def _simulate(cfg: dict, out: Path) -> list[Path]:
    lower, upper = cfg["sim_lower"], cfg["sim_upper"]
    res = [Resolution(tuple(c), cfg["basis_ratio"]) for c in cfg["sim_grid"]]
    basis = build_multires(MultiResSpec(res, tuple(lower), tuple(upper)))
    beta = np.asarray(cfg["sim_beta"], dtype=float)
    if cfg["covariate_columns"]:
        raise ConfigError("simulate generates intercept-only data; clear covariate_columns")
    if beta.size != int(cfg["intercept"]):
        raise ConfigError("sim_beta must have one entry with intercept: true, none otherwise")
    if len(cfg["coord_columns"]) != len(lower):
        raise ConfigError("coord_columns must match the simulation dimension")
    params = SreParams(
        beta,
        ExpCentroid(cfg["sim_k_sigma2"], cfg["sim_k_length_scale"]),
        NoiseParams(cfg["sim_sigma2_delta"], cfg["sim_sigma2_eps"]),
    )
    rng = np.random.default_rng(cfg["seed"])
    n = cfg["sim_n"]
    locs = uniform_locations(n, lower, upper, rng)
    X = np.ones((n, 1)) if beta.size else None
    sim = simulate_sre(basis, params, locs, seed=rng, covariates=X)
    train_idx, test_idx = split_indices(n, SplitSpec(cfg["sim_test_fraction"], cfg["seed"]))
    names = list(cfg["coord_columns"])
    outs = []
    for name, idx in (("data", np.arange(n)), ("train", train_idx), ("test", test_idx)):
        path = out / f"{name}.csv"
        block = np.column_stack([locs[idx], sim.data.z[idx], sim.y[idx]])
        _write_csv(path, [*names, cfg["value_column"], cfg["truth_column"]], block)
        outs.append(path)
    return outs


def _write_csv(path: Path, header: list[str], block: np.ndarray) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in block:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _fit(cfg: dict, out: Path) -> list[Path]:
    ds = load_csv(_require(_path(cfg, "data_path", out, "train.csv"), "training data"), _schema(cfg))
    if cfg["boxcox_lambda"] is not None:
        from .transgauss import transform_dataset

        ds = transform_dataset(ds, cfg["boxcox_lambda"])
    basis = _build_basis(cfg, ds)
    lo, hi = basis.centers.min(axis=0), basis.centers.max(axis=0)
    fixed_noise = not cfg["merge_nugget"]
    delta0 = cfg["sigma2_delta"]
    if fixed_noise and not cfg["free_sigma2_delta"] and delta0 is None:
        delta0 = 0.0
    if fixed_noise and not cfg["free_sigma2_eps"] and cfg["sigma2_eps"] is None:
        raise ConfigError("sigma2_eps must be given when it is not estimated")
    init = initial_params(ds, basis, _k_template(cfg, lo, hi), delta0, cfg["sigma2_eps"])
    config = EmConfig(
        max_iter=cfg["em_max_iter"], tol=cfg["em_tol"], param_tol=cfg["em_param_tol"],
        free_beta=cfg["free_beta"], free_k=cfg["free_k"],
        free_sigma2_delta=cfg["free_sigma2_delta"], free_sigma2_eps=cfg["free_sigma2_eps"],
        merge_nugget=cfg["merge_nugget"],
    )
    t0 = time.perf_counter()
    result = fit_em(ds, basis, init, config)
    elapsed = time.perf_counter() - t0
    fit_path, basis_path = out / "fit.json", out / "basis.jsonl"
    save_fit(result, fit_path)
    save_basis(basis, basis_path)
    (out / "fit_seconds.txt").write_text(f"{elapsed!r}\n", encoding="utf-8")
    return [fit_path, basis_path]


def _predict(cfg: dict, out: Path) -> list[Path]:
    fit_path = _require(out / "fit.json", "fit file (run fit first)")
    basis = load_basis(_require(out / "basis.jsonl", "basis file (run fit first)"))
    result = load_fit(fit_path)
    ds = load_csv(_require(_path(cfg, "data_path", out, "train.csv"), "training data"), _schema(cfg))
    targets, X0 = _load_targets(cfg, _path(cfg, "test_path", out, "test.csv"))
    t0 = time.perf_counter()
    lam = cfg["boxcox_lambda"]
    if lam is None:
        pred = predict(ds, basis, result.params, targets, cfg["level"], X0)
    else:
        mc = McConfig(cfg["mc_samples"], cfg["seed"])
        pred = predict_trans(ds, basis, result.params, lam, targets, mc, cfg["level"], X0)
    elapsed = time.perf_counter() - t0
    fit_time = out / "fit_seconds.txt"
    if fit_time.is_file():
        elapsed += float(fit_time.read_text())
    path = out / "predictions.csv"
    write_predictions(pred, path, cfg["coord_columns"])
    (out / "predict_seconds.txt").write_text(f"{elapsed!r}\n", encoding="utf-8")
    return [path]


def _read_predictions(path: Path, d: int) -> PredictiveResult:
    block = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    locs, mean, se, lower, upper = block[:, :d], block[:, d], block[:, d + 1], block[:, d + 2], block[:, d + 3]
    return PredictiveResult(locs, mean, se ** 2, lower, upper)


def _validate(cfg: dict, out: Path) -> list[Path]:
    test_path = _require(_path(cfg, "test_path", out, "test.csv"), "test data")
    truth = load_csv(test_path, _schema(cfg, cfg["truth_column"]))
    pred_path = _require(out / "predictions.csv", "predictions (run predict first)")
    d = len(cfg["coord_columns"])
    pred = _read_predictions(pred_path, d)
    if len(pred) != truth.n or not np.array_equal(pred.locations, truth.locations):
        raise ConfigError("predictions do not line up with the test locations")
    timing = out / "predict_seconds.txt"
    run_time = float(timing.read_text()) if timing.is_file() else 0.0
    alpha = 1.0 - cfg["level"]
    rows = [diagnose(cfg["method_name"], pred, truth.z, run_time, alpha)]
    if cfg["baseline_matern"]:
        rows.append(_matern_row(cfg, out, truth, alpha))
    csv_path, txt_path = out / "diagnostics.csv", out / "diagnostics.txt"
    write_table(rows, csv_path)
    txt_path.write_text(format_table(rows) + "\n", encoding="utf-8")
    return [csv_path, txt_path]


def _matern_row(cfg: dict, out: Path, truth: SpatialDataset, alpha: float):
    ds = load_csv(_require(_path(cfg, "data_path", out, "train.csv"), "training data"), _schema(cfg))
    t0 = time.perf_counter()
    beta = np.linalg.lstsq(ds.X, ds.z, rcond=None)[0] if ds.p else np.zeros(0)
    resid = SpatialDataset(ds.locations, ds.z - ds.X @ beta)
    sub = resid.subset(np.arange(min(resid.n, cfg["matern_max_n"])))
    mp, e2 = fit_matern_ml(sub, cfg["matern_nu"], cfg["matern_max_n"])
    pred = kriging_baseline(sub, mp, e2, truth.locations, cfg["level"])
    if truth.p:
        pred = pred.shifted(truth.X @ beta)
    return diagnose("Kriging", pred, truth.z, time.perf_counter() - t0, alpha)


def _bench(cfg: dict, out: Path) -> list[Path]:
    rows = bench_mod.run_bench(
        cfg["bench_sizes"], cfg["bench_r"], cfg["bench_targets"],
        cfg["bench_dense_max"], cfg["bench_repeats"], cfg["seed"],
    )
    csv_path, txt_path = out / "bench.csv", out / "bench.txt"
    bench_mod.write_bench(rows, csv_path)
    txt_path.write_text(bench_mod.format_bench(rows) + "\n", encoding="utf-8")
    return [csv_path, txt_path]


_STAGES = {"simulate": _simulate, "fit": _fit, "predict": _predict, "validate": _validate, "bench": _bench}

_CONFIG_ERRORS = (ConfigError, DataError, FileNotFoundError)
_NUMERIC_ERRORS = (
    SingularModelError, EmMonotonicityError, TransformDomainError,
    np.linalg.LinAlgError, ArithmeticError, FloatingPointError,
)


def _fail(kind: str, cmd: str, exc: BaseException) -> None:
    reason = " ".join(str(exc).split()) or type(exc).__name__
    print(f"frkpy: error={kind} stage={cmd} reason={reason}", file=sys.stderr)


def run_pipeline(cmd: str, cfg: dict, out) -> tuple[int, list[Path]]:
    """Run one stage with a validated config; returns ``(exit status, files written)``."""
    if cmd not in _STAGES:
        _fail("config", cmd, ConfigError(f"unknown command {cmd!r}"))
        return EXIT_CONFIG, []
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        return EXIT_OK, _STAGES[cmd](cfg, out)
    except _CONFIG_ERRORS as exc:
        _fail("config", cmd, exc)
        return EXIT_CONFIG, []
    except _NUMERIC_ERRORS as exc:
        _fail("numeric", cmd, exc)
        return EXIT_NUMERIC, []
    except ValueError as exc:
        # model constructors reject invalid parameter values with ValueError
        _fail("config", cmd, exc)
        return EXIT_CONFIG, []


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frkpy", description="Fixed-rank spatial prediction pipeline.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat YAML configuration file")
    ap.add_argument("--seed", type=int, help="override the configured seed")
    ap.add_argument("--out", default=".", help="output directory (default: current)")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _fail("config", args.command, exc)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg["seed"] = args.seed
    status, files = run_pipeline(args.command, cfg, args.out)
    for f in files:
        print(f)
    return status


if __name__ == "__main__":
    sys.exit(main())
