"""Experiment orchestration: config, realization loop, result files."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import ota
from .channel import InterferenceKind, InterferenceSource, dbm_to_watts, deploy
from .codec import Codebook
from .dgd import Schedule, dgd_step, frame_duration, metrics, step_sizes
from .objective import (
    LogisticObjective,
    QuadraticObjective,
    balanced_subset,
    class_means,
    ingest_fashion_mnist,
    radius_from_optimum,
    solve_optimum,
    split_by_class,
    synthetic_dataset,
    synthetic_samples,
)
from .rng import IterationStreams, Label, StreamKey, derive_stream, standard_normal

log = logging.getLogger(__name__)

ESTIMATORS = ("ncota", "ir-ncota", "oracle")
OBJECTIVES = ("logistic-fmnist", "logistic-synthetic", "quadratic-toy")
CSV_HEADER = ["realization", "iteration", "air_time_s", "normalized_error", "subopt_gap", "test_error"]


class ConfigError(ValueError):
    pass


class RealizationError(RuntimeError):
    """A module error raised inside one realization, tagged with its index."""

    def __init__(self, realization: int, cause: BaseException):
        super().__init__(f"realization {realization}: {type(cause).__name__}: {cause}")
        self.realization = realization


@dataclass
class ExperimentConfig:
    seed: int = 0
    N: int = 200
    area_radius_m: float = 2000.0
    f_c_hz: float = 3e9
    bandwidth_hz: float = 5e6
    tx_power_dbm: float = 20.0
    noise_psd_dbm_hz: float = -173.0
    p_tx: float = 0.34
    estimator: str = "ir-ncota"
    interference: str = "none"
    jammer_x_m: float = 0.0
    jammer_y_m: float = 0.0
    rotation_mode: str = "sign-flip"
    n_P: int = 10
    iterations: int = 10000
    realizations: int = 20
    objective: str = "logistic-synthetic"
    mu: float = 0.001
    n_classes: int = 10
    n_features: int = 50
    per_node: int = 5
    test_per_class: int = 100
    synthetic_noise: float = 0.3
    quadratic_dim: int = 10
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    gamma0: float = 1.7e7
    eta0: float | None = None
    delta: float | None = None
    metrics_stride: int = 10
    workers: int = 1

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def noise_psd_w_hz(self) -> float:
        return dbm_to_watts(self.noise_psd_dbm_hz)

    @property
    def energy(self) -> float:
        return self.tx_power_w / self.bandwidth_hz

    @property
    def dim(self) -> int:
        if self.objective == "quadratic-toy":
            return self.quadratic_dim
        return (self.n_classes - 1) * self.n_features

    def frame_duration(self) -> float:
        return frame_duration(self.dim, self.bandwidth_hz, self.estimator, self.n_P)

    def schedule(self, mu: float, L: float) -> Schedule:
        base = Schedule.default(mu, L, self.gamma0)
        eta0 = self.eta0 if self.eta0 is not None else base.eta0
        delta = self.delta if self.delta is not None else 5.0 / (4.0 * mu * eta0)
        return Schedule(self.gamma0, eta0, delta)

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.N >= 2, "N must be at least 2")
        need(0.0 < self.p_tx < 1.0, f"p_tx must lie in (0, 1), got {self.p_tx}")
        need(self.estimator in ESTIMATORS, f"estimator must be one of {ESTIMATORS}")
        need(self.interference in {k.value for k in InterferenceKind},
             f"unknown interference kind {self.interference!r}")
        need(self.rotation_mode in {m.value for m in ota.RotationMode},
             f"unknown rotation_mode {self.rotation_mode!r}")
        need(self.objective in OBJECTIVES, f"objective must be one of {OBJECTIVES}")
        need(self.n_P >= 2, "n_P must be at least 2")
        need(self.iterations >= 1 and self.realizations >= 1, "iterations and realizations must be positive")
        need(self.metrics_stride >= 1, "metrics_stride must be positive")
        need(self.workers >= 1, "workers must be positive")
        for name in ("area_radius_m", "f_c_hz", "bandwidth_hz", "mu", "gamma0", "synthetic_noise"):
            need(getattr(self, name) > 0, f"{name} must be positive")
        for name in ("eta0", "delta"):
            value = getattr(self, name)
            need(value is None or value > 0, f"{name} must be positive")
        need(math.hypot(self.jammer_x_m, self.jammer_y_m) <= self.area_radius_m,
             "jammer must sit inside the deployment area")
        if self.objective != "quadratic-toy":
            need(self.N % self.n_classes == 0, "N must be divisible by n_classes")
        if self.objective == "logistic-fmnist":
            for name in ("train_images", "train_labels", "test_images", "test_labels"):
                need(getattr(self, name), f"objective logistic-fmnist needs {name}")
        return self


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(name: str, value):
    if value is None:
        return None
    default = FIELDS[name].default
    try:
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float) or name in ("eta0", "delta"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a flat YAML mapping and apply ``overrides`` on top of it."""
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        raw = yaml.safe_load(text) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config must be a flat key-value mapping")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in raw.items()}).validate()


# --- problem construction ------------------------------------------------


def build_objective(cfg: ExperimentConfig, realization: int):
    stream = derive_stream(cfg.seed, StreamKey(Label.DATA_SHUFFLE, realization))
    if cfg.objective == "quadratic-toy":
        centers = 1.0 + 0.5 * standard_normal(stream, (cfg.N, cfg.quadratic_dim))
        return QuadraticObjective(centers)
    if cfg.objective == "logistic-synthetic":
        means = class_means(cfg.n_classes, cfg.n_features, stream)
        datasets = synthetic_dataset(cfg.n_classes, cfg.n_features, cfg.per_node, cfg.N, stream,
                                     noise=cfg.synthetic_noise, means=means)
        test_labels = np.repeat(np.arange(cfg.n_classes), cfg.test_per_class)
        test = synthetic_samples(means, test_labels, cfg.synthetic_noise, stream)
        return LogisticObjective(datasets, cfg.mu, cfg.n_classes, test)
    train = ingest_fashion_mnist(cfg.train_images, cfg.train_labels)
    test_pool = ingest_fashion_mnist(cfg.test_images, cfg.test_labels)
    datasets = split_by_class(train, cfg.N, cfg.per_node, stream, cfg.n_classes)
    test = balanced_subset(test_pool, cfg.test_per_class, stream, cfg.n_classes)
    return LogisticObjective(datasets, cfg.mu, cfg.n_classes, test)


@dataclass
class Problem:
    objective: object
    w_star: np.ndarray
    f_star: float
    radius: float


def build_problem(cfg: ExperimentConfig, realization: int) -> Problem:
    objective = build_objective(cfg, realization)
    opt = solve_optimum(objective)
    if not opt.converged:
        log.warning("optimum solver stopped at |grad|=%.3g without converging", opt.grad_norm)
    _, grad0 = objective.value_grad(np.zeros(objective.dim))
    radius = radius_from_optimum(objective.mu, grad0)
    return Problem(objective, opt.w, opt.value, radius)


# --- runs -----------------------------------------------------------------


@dataclass
class RunRecord:
    realization: int
    iteration: int
    air_time_s: float
    normalized_error: float
    subopt_gap: float
    test_error: float

    def row(self) -> list[str]:
        return [str(self.realization), str(self.iteration)] + [
            repr(float(getattr(self, name))) for name in CSV_HEADER[2:]
        ]


def run_realization(cfg: ExperimentConfig, realization: int, problem: Problem | None = None) -> list[RunRecord]:
    jammer = (cfg.jammer_x_m, cfg.jammer_y_m)
    deployment = deploy(
        cfg.N, cfg.area_radius_m, derive_stream(cfg.seed, StreamKey(Label.DEPLOYMENT, realization)),
        avoid=[jammer], carrier_frequency=cfg.f_c_hz, bandwidth=cfg.bandwidth_hz,
        tx_power=cfg.tx_power_w, noise_psd=cfg.noise_psd_w_hz,
    )
    gains = deployment.gain_matrix()
    interference = InterferenceSource.at(cfg.interference, deployment, jammer)
    if problem is None:
        problem = build_problem(cfg, realization)
    objective = problem.objective
    cb = Codebook(objective.dim, problem.radius)
    schedule = cfg.schedule(objective.mu, objective.L)
    radio = ota.Radio(deployment.energy, deployment.noise_psd, cfg.p_tx, cfg.n_P,
                      ota.RotationMode(cfg.rotation_mode))
    frame = cfg.frame_duration()
    round_fn = {"ncota": ota.ncota_round, "ir-ncota": ota.ir_ncota_round}.get(cfg.estimator)

    W = np.zeros((cfg.N, objective.dim))
    records = []

    def record(k):
        m = metrics(W, problem.w_star, objective, problem.f_star)
        records.append(RunRecord(realization, k, k * frame, m.normalized_error, m.subopt_gap, m.test_error))

    for k in range(cfg.iterations):
        if k % cfg.metrics_stride == 0:
            record(k)
        if round_fn is None:
            estimates = ota.disagreement_oracle(W, gains)
        else:
            streams = IterationStreams(cfg.seed, realization, k)
            estimates = round_fn(W, gains, cb, radio, interference, streams).estimate
        gamma, eta = step_sizes(schedule, k)
        W = dgd_step(W, estimates, objective.local_gradients(W), gamma, eta, problem.radius, k)
    record(cfg.iterations)
    return records


def _realization_job(args):
    cfg, realization = args
    try:
        return run_realization(cfg, realization)
    except (ArithmeticError, ValueError) as exc:
        raise RealizationError(realization, exc) from exc


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[RunRecord]
    summary: dict = field(default_factory=dict)

    def mean_curve(self, metric: str = "normalized_error") -> tuple[np.ndarray, np.ndarray]:
        curve = self.summary["mean"]
        return np.asarray(curve["iteration"]), np.asarray(curve[metric])


def summarize(cfg: ExperimentConfig, records: list[RunRecord]) -> dict:
    iterations = sorted({r.iteration for r in records})
    index = {k: i for i, k in enumerate(iterations)}
    mean = {"iteration": iterations, "air_time_s": [k * cfg.frame_duration() for k in iterations]}
    for name in CSV_HEADER[3:]:
        sums = np.zeros(len(iterations))
        counts = np.zeros(len(iterations))
        for r in records:
            sums[index[r.iteration]] += getattr(r, name)
            counts[index[r.iteration]] += 1
        mean[name] = (sums / counts).tolist()
    final = {name: mean[name][-1] for name in CSV_HEADER[3:]}
    M = 2 * cfg.dim + 1
    return {
        "config": dataclasses.asdict(cfg),
        "frame_duration_s": {
            "ncota": frame_duration(cfg.dim, cfg.bandwidth_hz, "ncota"),
            "ir-ncota": frame_duration(cfg.dim, cfg.bandwidth_hz, "ir-ncota", cfg.n_P),
            "selected": cfg.frame_duration(),
        },
        "samples_per_frame": M + (cfg.n_P if cfg.estimator == "ir-ncota" else 0),
        "final": final,
        "plateau_ratio": plateau_ratio(np.asarray(mean["iteration"]), np.asarray(mean["normalized_error"])),
        "mean": mean,
    }


def plateau_ratio(iterations: np.ndarray, values: np.ndarray) -> float | None:
    """Mean over the final quarter of the run divided by the mean over the
    centered quarter (3/8 to 5/8 of the horizon)."""
    horizon = iterations.max()
    final = values[iterations > 0.75 * horizon]
    mid = values[(iterations > 0.375 * horizon) & (iterations <= 0.625 * horizon)]
    if final.size == 0 or mid.size == 0:
        return None  # too few recorded iterations
    return float(final.mean() / mid.mean())


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    cfg.validate()
    jobs = [(cfg, r) for r in range(cfg.realizations)]
    if cfg.workers > 1 and cfg.realizations > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, os.cpu_count() or 1)) as pool:
            per_realization = list(pool.map(_realization_job, jobs))
    else:
        per_realization = []
        for job in jobs:
            per_realization.append(_realization_job(job))
            log.info("realization %d/%d done", job[1] + 1, cfg.realizations)
    records = [r for block in per_realization for r in block]
    return ExperimentResult(cfg, records, summarize(cfg, records))


def emit_results(result: ExperimentResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs = out / "runs.csv"
    with open(runs, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in result.records:
            writer.writerow(rec.row())
    summary = out / "summary.json"
    with open(summary, "w") as fh:
        json.dump(result.summary, fh, indent=2)
        fh.write("\n")
    return runs, summary
