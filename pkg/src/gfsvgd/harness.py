"""Config-driven experiment runner with deterministic seeding and CSV output.

A run is described by an :class:`ExperimentConfig`, usually loaded from a
JSON file. ``run_experiment`` builds the densities, draws the exact
reference sample, runs the named algorithm and writes one CSV of checkpoint
metrics plus a JSON sidecar. ``sweep`` runs many configs, optionally in
worker processes, and writes a summary table that ``report`` can rebuild
from the per-run files alone.

Seeding: the integer seed feeds a :class:`numpy.random.SeedSequence` whose
four spawned children drive, in order, random model parameters, the exact
reference sample, the initial particles, and the algorithm's own randomness
(PCG64 bit generator throughout).
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import math
import os
import platform
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .baselines import gf_ais, importance_sample
from .densities import (DensityModel, FlatDensity, GaussBernoulliRBM, GaussianMixture,
                        IsotropicGaussian, fit_kernel_curve_surrogate)
from .discrepancy import Evaluator
from .errors import ConfigError, GFSVGDError, NumericalAbort
from .records import CSV_COLUMNS, RunRecord
from .transport import AnnealSchedule, UpdateConfig, run_annealed, run_gf_svgd, run_svgd

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "ALGORITHMS",
    "OUTPUT_ROOT_ENV",
    "load_config",
    "load_config_dir",
    "expand_config",
    "build_densities",
    "run_experiment",
    "write_record",
    "read_csv",
    "sweep",
    "summarize",
    "report",
]

ALGORITHMS = ("svgd", "gf-svgd", "a-svgd", "agf-svgd", "is", "gf-ais", "exact-mc")
OUTPUT_ROOT_ENV = "GFSVGD_OUTPUT_ROOT"
SUMMARY_COLUMNS = ("group", "name", "algorithm", "label", "runs", "failed",
                   "mmd2_mean", "mmd2_std", "mse_mean_mean", "mse_var_mean")

_DEFAULT_SCHEDULE = {"T": 1000, "gamma": 1.0, "m": 1}
_DEFAULT_OPTIMIZER = {"name": "adam", "step_size": 0.05, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}
_DEFAULT_MALA = {"step": "auto", "n_mala": 1, "target_accept": 0.6, "initial_step": 0.1}
# fields that name or place a run but do not change its numbers
_NON_SEMANTIC = ("name", "output", "timing", "label")
_FAMILIES = ("gaussian", "gmm", "rbm", "flat")
_SURROGATE_NAMES = ("flat", "target", "p0", "auto-kernel-curve")


@dataclass
class ExperimentConfig:
    """One fully specified run.

    Density specs are dicts with a ``family`` key (``gaussian``, ``gmm``,
    ``rbm`` or ``flat``). The surrogate may also be one of the strings
    ``"flat"``, ``"target"``, ``"p0"`` or ``"auto-kernel-curve"``. Numeric parameters written as
    ``{"uniform": [lo, hi]}`` or ``{"choice": [a, b]}`` are drawn from the
    model stream of the seed.
    """

    algorithm: str
    target: dict
    n: int = 100
    iterations: int = 1000
    surrogate: Optional[object] = None
    p0: Optional[dict] = None
    init: Optional[dict] = None
    schedule: dict = field(default_factory=lambda: dict(_DEFAULT_SCHEDULE))
    optimizer: dict = field(default_factory=lambda: dict(_DEFAULT_OPTIMIZER))
    bandwidth_scale: float = 1.0
    smoothing_scale: float = 1.0
    mala: dict = field(default_factory=lambda: dict(_DEFAULT_MALA))
    n_exact: int = 1000
    record_every: int = 0
    seed: int = 0
    name: str = "run"
    output: Optional[str] = None
    timing: bool = False
    label: Optional[str] = None

    def __post_init__(self):
        self.schedule = {**_DEFAULT_SCHEDULE, **(self.schedule or {})}
        self.optimizer = {**_DEFAULT_OPTIMIZER, **(self.optimizer or {})}
        self.mala = {**_DEFAULT_MALA, **(self.mala or {})}

    def to_dict(self):
        return copy.deepcopy(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data, source=None, path=None):
        data = dict(data)
        data.pop("sweep", None)
        _validate(data, source, path)
        return cls(**copy.deepcopy(data))

    def canonical(self) -> str:
        semantic = {k: v for k, v in self.to_dict().items() if k not in _NON_SEMANTIC}
        return json.dumps(semantic, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]

    @property
    def group_hash(self) -> str:
        """Hash of the config with the seed removed; runs differing only by seed share it."""
        semantic = {k: v for k, v in self.to_dict().items() if k not in _NON_SEMANTIC + ("seed",)}
        text = json.dumps(semantic, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    @property
    def stem(self) -> str:
        return f"{self.name}-s{self.seed}-{self.config_hash}"

    def update_config(self) -> UpdateConfig:
        opt = self.optimizer
        return UpdateConfig(step_size=float(opt["step_size"]), iterations=int(self.iterations),
                            optimizer=opt["name"], beta1=float(opt["beta1"]),
                            beta2=float(opt["beta2"]), eps=float(opt["eps"]),
                            bandwidth_scale=float(self.bandwidth_scale),
                            record_every=int(self.record_every))

    def anneal_schedule(self) -> AnnealSchedule:
        s = self.schedule
        return AnnealSchedule.power(int(s["T"]), float(s["gamma"]), int(s["m"]))


# ---------------------------------------------------------------- validation

def _line_of(source, key):
    """1-based line of the first ``"key":`` in ``source``, if present."""
    if source is None:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(str(key)), source)
    return source.count("\n", 0, match.start()) + 1 if match else None


def _validate(data, source, path):
    def fail(msg, key):
        raise ConfigError(msg, line=_line_of(source, key), path=path)

    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    for key in data:
        if key not in known:
            fail(f"unknown field {key!r}", key)
    for key in ("algorithm", "target"):
        if key not in data:
            raise ConfigError(f"missing required field {key!r}", path=path)
    if data["algorithm"] not in ALGORITHMS:
        fail(f"algorithm must be one of {', '.join(ALGORITHMS)}", "algorithm")
    for key in ("n", "iterations", "n_exact", "record_every", "seed"):
        if key in data and (isinstance(data[key], bool) or not isinstance(data[key], int)
                            or data[key] < 0):
            fail(f"{key} must be a non-negative integer", key)
    if data.get("n", 100) < 2:
        fail("n must be at least 2", "n")
    for key in ("bandwidth_scale", "smoothing_scale"):
        if key in data and not (_is_number(data[key]) and data[key] > 0):
            fail(f"{key} must be a positive number", key)
    _validate_density(data["target"], "target", fail, allow_flat=False)
    algo = data["algorithm"]
    surrogate = data.get("surrogate")
    if algo in ("gf-svgd", "is") and surrogate is None:
        fail(f"{algo} needs a surrogate", "algorithm")
    if surrogate is not None and not (isinstance(surrogate, str) and surrogate in _SURROGATE_NAMES):
        _validate_density(surrogate, "surrogate", fail, allow_flat=True)
    if algo == "is" and surrogate in ("flat", "auto-kernel-curve"):
        fail("importance sampling needs a proposal that can be sampled", "surrogate")
    if surrogate == "p0" and data.get("p0") is None:
        fail("surrogate 'p0' needs a p0 density", "surrogate")
    if algo in ("a-svgd", "agf-svgd", "gf-ais") and data.get("p0") is None:
        fail(f"{algo} needs an initial density p0", "algorithm")
    for key in ("p0", "init"):
        if data.get(key) is not None:
            _validate_density(data[key], key, fail, allow_flat=False)
    schedule = {**_DEFAULT_SCHEDULE, **data.get("schedule", {})}
    for key in schedule:
        if key not in _DEFAULT_SCHEDULE:
            fail(f"unknown schedule field {key!r}", key)
    if not (isinstance(schedule["T"], int) and schedule["T"] >= 1):
        fail("schedule.T must be a positive integer", "T")
    if not (isinstance(schedule["m"], int) and schedule["m"] >= 1):
        fail("schedule.m must be a positive integer", "m")
    if not (_is_number(schedule["gamma"]) and schedule["gamma"] > 0):
        fail("schedule.gamma must be positive", "gamma")
    opt = {**_DEFAULT_OPTIMIZER, **data.get("optimizer", {})}
    for key in opt:
        if key not in _DEFAULT_OPTIMIZER:
            fail(f"unknown optimizer field {key!r}", key)
    if opt["name"] not in ("adam", "plain"):
        fail("optimizer.name must be 'adam' or 'plain'", "name")
    if not (_is_number(opt["step_size"]) and opt["step_size"] > 0):
        fail("optimizer.step_size must be positive", "step_size")
    mala = {**_DEFAULT_MALA, **data.get("mala", {})}
    for key in mala:
        if key not in _DEFAULT_MALA:
            fail(f"unknown mala field {key!r}", key)
    if mala["step"] != "auto" and not (_is_number(mala["step"]) and mala["step"] >= 0):
        fail("mala.step must be 'auto' or a non-negative number", "step")
    if not isinstance(data.get("timing", False), bool):
        fail("timing must be true or false", "timing")


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _validate_density(spec, role, fail, allow_flat):
    if not isinstance(spec, dict):
        fail(f"{role} must be an object with a 'family' field", role)
    family = spec.get("family")
    if family not in _FAMILIES:
        fail(f"{role}.family must be one of {', '.join(_FAMILIES)}", role)
    if family == "flat" and not allow_flat:
        fail(f"{role} cannot be flat", role)
    if spec.get("like") not in (None, "target"):
        fail(f"{role}.like may only be 'target'", "like")
    if family == "rbm" and "hidden" in spec and not (isinstance(spec["hidden"], int) and spec["hidden"] >= 1):
        fail("rbm.hidden must be a positive integer", "hidden")


# ---------------------------------------------------------------- loading

def load_config(path) -> list:
    """Load a JSON config file and expand any ``sweep`` block into concrete configs."""
    path = Path(path)
    try:
        source = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", path=str(path)) from exc
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno, path=str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object", line=1, path=str(path))
    return expand_config(data, source, str(path))


def load_config_dir(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError("not a directory", path=str(directory))
    configs = []
    for path in sorted(directory.glob("*.json")):
        configs.extend(load_config(path))
    return configs


def _set_dotted(data, dotted, value):
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        if not isinstance(node.get(key), dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value


def expand_config(data, source=None, path=None) -> list:
    """Cartesian product over ``sweep`` entries, keyed by dotted field paths.

    >>> [c.seed for c in expand_config({"algorithm": "exact-mc",
    ...     "target": {"family": "gaussian", "dim": 1}, "sweep": {"seed": [0, 1]}})]
    [0, 1]
    """
    grid = data.get("sweep") or {}
    if not isinstance(grid, dict) or any(not isinstance(v, list) or not v for v in grid.values()):
        raise ConfigError("sweep must map field paths to non-empty lists",
                          line=_line_of(source, "sweep"), path=path)
    keys = sorted(grid)
    configs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        concrete = copy.deepcopy({k: v for k, v in data.items() if k != "sweep"})
        for key, value in zip(keys, values):
            _set_dotted(concrete, key, value)
        swept = [f"{k}={json.dumps(v)}" for k, v in zip(keys, values) if k != "seed"]
        if swept and "label" not in data:
            concrete["label"] = ",".join(swept)
        configs.append(ExperimentConfig.from_dict(concrete, source, path))
    return configs


# ---------------------------------------------------------------- densities

def _draw(value, rng, shape=None):
    """Resolve a literal, ``{"uniform": [lo, hi]}`` or ``{"choice": [...]}`` parameter."""
    if isinstance(value, dict):
        if "uniform" in value:
            lo, hi = value["uniform"]
            return rng.uniform(lo, hi, size=shape)
        if "choice" in value:
            return rng.choice(np.asarray(value["choice"], dtype=float), size=shape)
        if "normal" in value:
            loc, scale = value["normal"]
            return rng.normal(loc, scale, size=shape)
        raise ConfigError(f"unknown random parameter {value!r}")
    arr = np.asarray(value, dtype=float)
    return np.broadcast_to(arr, shape).copy() if shape is not None else arr


def _make_density(spec, rng, target=None) -> DensityModel:
    spec = dict(spec)
    family = spec["family"]
    if spec.get("like") == "target":
        # Gaussian centred on the target's mean, scaled from its variance
        mean, var = target.moments()
        scale = 10.0 ** float(spec.get("log10_scale", 0.0))
        base_sigma = getattr(target, "sigma", float(np.mean(var)))
        return IsotropicGaussian(mean, float(base_sigma) * scale)
    dim = int(spec.get("dim", target.dim if target is not None else 1))
    if family == "flat":
        return FlatDensity(dim)
    if family == "gaussian":
        mean = _draw(spec.get("mean", 0.0), rng, (dim,))
        return IsotropicGaussian(mean, float(spec.get("sigma", 1.0)))
    if family == "gmm":
        k = int(spec.get("components", 2))
        means = _draw(spec.get("means", {"uniform": [-1.0, 1.0]}), rng, (k, dim))
        weights = np.asarray(spec.get("weights", np.full(k, 1.0 / k)), dtype=float)
        return GaussianMixture(weights, means, float(spec.get("sigma", 1.0)))
    if family == "rbm":
        hidden = int(spec.get("hidden", 10))
        B = _draw(spec.get("B", {"choice": [-0.5, 0.5]}), rng, (dim, hidden))
        c1 = _draw(spec.get("c1", {"normal": [0.0, 1.0]}), rng, (dim,))
        c2 = _draw(spec.get("c2", {"normal": [0.0, 1.0]}), rng, (hidden,))
        return GaussBernoulliRBM(B, c1, c2)
    raise ConfigError(f"unknown density family {family!r}")


def build_densities(config: ExperimentConfig, model_seed):
    """Target, surrogate, p0 and init density of a config, drawn from ``model_seed``."""
    rng = np.random.default_rng(model_seed)
    target = _make_density(config.target, rng)
    surrogate = config.surrogate
    if isinstance(surrogate, dict):
        surrogate = _make_density(surrogate, rng, target)
    elif surrogate == "flat":
        surrogate = FlatDensity(target.dim)
    elif surrogate == "target":
        surrogate = target
    p0 = _make_density(config.p0, rng, target) if config.p0 is not None else None
    init = _make_density(config.init, rng, target) if config.init is not None else None
    if surrogate == "p0":
        surrogate = p0
    return target, surrogate, p0, init


# ---------------------------------------------------------------- running

def _seed_streams(seed):
    model, exact, init, algo = np.random.SeedSequence(int(seed)).spawn(4)
    return model, exact, init, algo


def run_experiment(config: ExperimentConfig, out_dir=None) -> RunRecord:
    """Run one config and return its record; also write CSV and sidecar if ``out_dir`` is given."""
    model_ss, exact_ss, init_ss, algo_ss = _seed_streams(config.seed)
    target, surrogate, p0, init_density = build_densities(config, model_ss)
    evaluator = Evaluator.for_model(target, config.n_exact, exact_ss)

    def monitor(it, X, w):
        r = evaluator.report(X, w)
        return {"mmd2": r.mmd2, "mse_mean": r.mse_mean, "mse_var": r.mse_var}

    def unweighted(it, X, w):
        return monitor(it, X, None)

    algo = config.algorithm
    n = config.n
    start_density = init_density or p0 or (surrogate if isinstance(surrogate, DensityModel)
                                           and surrogate.has_sampler else None)
    if algo in ("svgd", "gf-svgd", "a-svgd", "agf-svgd"):
        if start_density is None:
            raise ConfigError(f"{algo} needs an 'init' density to draw the starting particles")
        X0 = start_density.sample_exact(n, init_ss)
        cfg = config.update_config()
        if algo == "svgd":
            _, rec = run_svgd(target, X0, cfg, unweighted)
        elif algo == "gf-svgd":
            if surrogate == "auto-kernel-curve":
                surrogate = fit_kernel_curve_surrogate(X0, target)
            _, rec = run_gf_svgd(target, surrogate, X0, cfg, unweighted)
        else:
            mode = "gradient" if algo == "a-svgd" else "gradient_free"
            _, rec = run_annealed(target, p0, config.anneal_schedule(), X0, cfg, mode=mode,
                                  monitor=unweighted,
                                  smoothing_scale=float(config.smoothing_scale))
    elif algo == "gf-ais":
        mala = config.mala
        state = gf_ais(target, p0, config.anneal_schedule(), n, mala_step=mala["step"],
                       seed=init_ss, n_mala=int(mala["n_mala"]),
                       target_accept=float(mala["target_accept"]),
                       initial_step=float(mala["initial_step"]),
                       smoothing_scale=float(config.smoothing_scale),
                       monitor=monitor, record_every=int(config.record_every))
        rec = state.record
    elif algo == "is":
        result = importance_sample(target, surrogate, n, init_ss)
        rec = RunRecord()
        rec.add_row(0, 0.0, ess=result.ess, bandwidth=evaluator.bandwidth,
                    **monitor(0, result.samples, result.weights))
        rec.particles, rec.weights = result.samples, result.weights
        rec.info.update(algorithm="is", low_ess=bool(result.low_ess))
    else:
        X = target.sample_exact(n, algo_ss)
        rec = RunRecord()
        rec.add_row(0, 0.0, ess=float(n), bandwidth=evaluator.bandwidth, **unweighted(0, X, None))
        rec.particles = X
        rec.info.update(algorithm="exact-mc")
    _check_rows(rec)
    if not config.timing:
        for row in rec.rows:
            row["wall_ms"] = 0.0
    rec.config_hash = config.config_hash
    rec.version = __version__
    weighted = algo in ("gf-ais", "is")
    rec.info.update(mmd_bandwidth=evaluator.bandwidth, mmd_statistic="V" if weighted else "U")
    if out_dir is not None:
        write_record(config, rec, out_dir)
    return rec


def _check_rows(rec: RunRecord):
    for row in rec.rows:
        bad = [k for k in CSV_COLUMNS if not math.isfinite(row[k])]
        if bad:
            raise NumericalAbort(f"non-finite metrics {', '.join(bad)}", iteration=row["iteration"])


def _format(value, column):
    return str(int(value)) if column == "iteration" else repr(float(value))


def write_record(config: ExperimentConfig, rec: RunRecord, out_dir):
    """Write ``<stem>.csv`` and ``<stem>.json``; returns the CSV path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{config.stem}.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rec.rows:
            writer.writerow([_format(row[c], c) for c in CSV_COLUMNS])
    sidecar = {
        "config": config.to_dict(),
        "config_hash": config.config_hash,
        "group": config.group_hash,
        "label": _label(config),
        "version": __version__,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
        "final": rec.final,
        "info": _jsonable(rec.info),
    }
    with open(csv_path.with_suffix(".json"), "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _label(config: ExperimentConfig):
    base = f"{config.name}/{config.algorithm}"
    return f"{base}[{config.label}]" if config.label else base


def read_csv(path):
    """Rows of a run CSV as a list of float dicts."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [{k: float(v) for k, v in row.items()} for row in reader]


# ---------------------------------------------------------------- sweeps

@dataclass
class RunResult:
    config: ExperimentConfig
    record: Optional[RunRecord] = None
    csv_path: Optional[str] = None
    error: Optional[str] = None
    error_kind: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


def _output_dir(config: ExperimentConfig, root):
    return Path(root) / (config.output or config.name)


def _run_one(config: ExperimentConfig, root):
    out_dir = _output_dir(config, root)
    try:
        rec = run_experiment(config, out_dir)
    except NumericalAbort as exc:
        logger.error("run %s aborted: %s", config.stem, exc)
        return RunResult(config, error=str(exc), error_kind="numeric")
    except (GFSVGDError, ValueError) as exc:
        logger.error("run %s failed: %s", config.stem, exc)
        return RunResult(config, error=str(exc), error_kind="config")
    return RunResult(config, rec, str(out_dir / f"{config.stem}.csv"))


def default_output_root():
    return os.environ.get(OUTPUT_ROOT_ENV, "runs")


def sweep(configs, jobs=1, out_root=None, summary_path=None) -> list:
    """Run every config; failures are recorded and the sweep continues.

    Writes ``summary.csv`` under ``out_root`` (or ``summary_path``).
    """
    configs = list(configs)
    root = Path(out_root if out_root is not None else default_output_root())
    stems = [(_output_dir(c, root), c.stem) for c in configs]
    if len(set(stems)) != len(stems):
        raise ConfigError("sweep contains duplicate runs with the same output path")
    if jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, configs, [root] * len(configs)))
    else:
        results = [_run_one(c, root) for c in configs]
    rows = summarize(results)
    write_summary(rows, summary_path or root / "summary.csv")
    return results


def summarize(results) -> list:
    """Group runs that differ only by seed; mean and std of final metrics per group."""
    groups = {}
    for res in results:
        key = res.config.group_hash
        entry = groups.setdefault(key, {"config": res.config, "finals": [], "failed": 0})
        if res.ok:
            entry["finals"].append(res.record.final)
        else:
            entry["failed"] += 1
    return [_summary_row(key, entry["config"].name, entry["config"].algorithm,
                         _label(entry["config"]), entry["finals"], entry["failed"])
            for key, entry in groups.items()]


def _summary_row(group, name, algorithm, label, finals, failed):
    mmd = np.array([f["mmd2"] for f in finals], dtype=float)
    mse_m = np.array([f["mse_mean"] for f in finals], dtype=float)
    mse_v = np.array([f["mse_var"] for f in finals], dtype=float)
    nan = float("nan")
    return {
        "group": group, "name": name, "algorithm": algorithm, "label": label,
        "runs": len(finals), "failed": failed,
        "mmd2_mean": float(mmd.mean()) if mmd.size else nan,
        "mmd2_std": float(mmd.std(ddof=1)) if mmd.size > 1 else 0.0 if mmd.size else nan,
        "mse_mean_mean": float(mse_m.mean()) if mse_m.size else nan,
        "mse_var_mean": float(mse_v.mean()) if mse_v.size else nan,
    }


def write_summary(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                             for c in SUMMARY_COLUMNS])
    return path


def read_summary(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("runs", "failed"):
            row[key] = int(row[key])
        for key in ("mmd2_mean", "mmd2_std", "mse_mean_mean", "mse_var_mean"):
            row[key] = float(row[key])
    return rows


def report(in_dir) -> list:
    """Rebuild the summary from the per-run CSVs and sidecars under ``in_dir``."""
    groups = {}
    for sidecar in sorted(Path(in_dir).rglob("*.json")):
        try:
            meta = json.loads(sidecar.read_text())
        except json.JSONDecodeError:
            continue
        if not isinstance(meta, dict) or "group" not in meta:
            continue
        csv_path = sidecar.with_suffix(".csv")
        if not csv_path.exists():
            continue
        rows = read_csv(csv_path)
        cfg = meta["config"]
        entry = groups.setdefault(meta["group"], {"cfg": cfg, "label": meta["label"], "finals": []})
        entry["finals"].append(rows[-1])
    return [_summary_row(key, e["cfg"]["name"], e["cfg"]["algorithm"], e["label"], e["finals"], 0)
            for key, e in sorted(groups.items(), key=lambda kv: (kv[1]["label"], kv[0]))]
