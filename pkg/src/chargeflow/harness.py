"""Experiment drivers: synthetic teacher-student training, node-wise recovery
runs, and their file outputs.

All randomness flows from explicit seeds through per-cell generators, so a
config file plus seed list pins every number in the outputs (wall-clock
columns excepted).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from .descent import DescentConfig, RandomBallInit, node_wise_descent
from .errors import DivergedLoss
from .loss import Objective, TargetNetwork
from .potentials import parse_potential

SCHEMA_VERSION = 1

CSV_COLUMNS = ("depth", "width", "seed", "train_err", "test_err", "wall_ms")


@dataclass(frozen=True)
class ExperimentConfig:
    """Knobs for the grid / recovery / dynamics experiments.

    Desk-scale defaults; the full-scale iteration count sits behind
    ``full_scale``.
    """

    experiment: str = "table"
    d: int = 10
    depths: tuple = (2, 3, 5)
    widths: tuple = (5, 10, 20, 40)
    seeds: tuple = (0, 1, 2)
    n_train: int = 10_000
    n_test: int = 10_000
    iters: int = 200_000
    alpha: float = 0.2
    batch: int = 32
    full_scale: bool = False  # long-run settings: iters = 1e6, alpha = 1e-5
    # recovery knobs
    k: int = 2
    potential: str = "almost:eps=0.1,lambda=1,d=3"
    separation: float = 10.0
    scale: float | None = None  # variance of the hidden weights; None = d ln d
    trials: int = 3_000_000
    radius_mult: float = 1.2
    descent_T: int = 30_000
    descent_alpha: float = 1e-5
    descent_eta: float = 1e-7
    descent_gamma: float = 1e-2
    trace_stride: int = 1000
    # dynamics knobs
    dt: float = 1e-3
    steps: int = 1000
    stride: int = 10
    scheme: str = "rk4"
    # outputs
    out: str = ""

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1 or self.iters < 0 or self.batch < 1:
            raise ValueError("counts must be positive")
        if not self.seeds:
            raise ValueError("need at least one seed")

    def resolved(self):
        if self.full_scale:
            return replace(self, iters=1_000_000, alpha=1e-5, full_scale=False)
        return self


@dataclass(frozen=True)
class ResultRow:
    depth: int
    width: int
    seed: int
    train_err: float
    test_err: float
    wall_ms: float


# ---------------------------------------------------------------------------
# targets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayeredNetwork:
    """Fully-connected tanh network; tanh is applied at every node including
    the scalar output."""

    weights: tuple

    @property
    def depth(self):
        return len(self.weights)

    @property
    def width(self):
        return self.weights[0].shape[0]

    def forward(self, x):
        h = x
        for w in self.weights:
            h = np.tanh(h @ w.T)
        return h[:, 0]


def generate_target(d, depth, width, seed, flavor="empirical", scale=None):
    """Deterministic synthetic target.

    flavor="empirical": ``depth`` layers of standard-Gaussian weights, tanh at
    every node (the grid-experiment teacher). flavor="theory": depth must be
    2; returns a TargetNetwork with hidden rows ~ N(0, scale I) (scale
    defaults to d log d) and outer weights uniform in [-1, 1].
    """
    rng = np.random.default_rng(seed)
    if flavor == "empirical":
        if depth < 2:
            raise ValueError("depth must be >= 2")
        dims = [d] + [width] * (depth - 1) + [1]
        weights = tuple(rng.standard_normal((dims[i + 1], dims[i])) for i in range(depth))
        return LayeredNetwork(weights=weights)
    if flavor != "theory":
        raise ValueError(f"unknown flavor {flavor!r}")
    if depth != 2:
        raise ValueError("theory targets are depth-2")
    variance = float(scale) if scale is not None else d * np.log(d)
    w = rng.standard_normal((width, d)) * np.sqrt(variance)
    b = rng.uniform(-1.0, 1.0, width)
    return TargetNetwork(w=w, b=b)


def generate_separated_target(d, k, seed, separation, scale=None):
    """Theory target resampled until the hidden vectors are pairwise at least
    ``separation`` apart (hidden-weight std defaults to the separation)."""
    std = np.sqrt(scale) if scale is not None else float(separation)
    rng = np.random.default_rng(seed)
    while True:
        w = rng.standard_normal((k, d)) * std
        b = rng.uniform(-1.0, 1.0, k)
        if k == 1:
            return TargetNetwork(w=w, b=b)
        diff = w[:, None, :] - w[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= separation:
            return TargetNetwork(w=w, b=b)


# ---------------------------------------------------------------------------
# empirical teacher-student training
# ---------------------------------------------------------------------------


def sgd_train(config: ExperimentConfig, target: LayeredNetwork, depth, width, seed):
    """Minibatch SGD on the empirical squared loss of a same-architecture
    student; returns a ResultRow with train/test errors on the sampled sets."""
    cfg = config.resolved()
    # data/student stream independent of the target stream for the same seed
    rng = np.random.default_rng([seed, 1])
    xs = rng.standard_normal((cfg.n_train, cfg.d))
    ys = target.forward(xs)
    xt = rng.standard_normal((cfg.n_test, cfg.d))
    yt = target.forward(xt)
    dims = [cfg.d] + [width] * (depth - 1) + [1]
    student = [rng.standard_normal((dims[i + 1], dims[i])) for i in range(depth)]
    t0 = time.perf_counter()
    for _ in range(cfg.iters):
        idx = rng.integers(0, cfg.n_train, cfg.batch)
        x = xs[idx]
        y = ys[idx]
        hs = [x]
        for w in student:
            hs.append(np.tanh(hs[-1] @ w.T))
        err = hs[-1][:, 0] - y
        delta = (2.0 / cfg.batch) * err[:, None] * (1.0 - hs[-1] ** 2)
        grads = []
        for li in range(len(student) - 1, -1, -1):
            grads.append(delta.T @ hs[li])
            if li > 0:
                delta = (delta @ student[li]) * (1.0 - hs[li] ** 2)
        for w, g in zip(student, reversed(grads)):
            w -= cfg.alpha * g
        if not np.all(np.isfinite(student[-1])):
            raise DivergedLoss(f"non-finite weights at depth={depth} width={width} seed={seed}")
    wall_ms = (time.perf_counter() - t0) * 1e3
    trained = LayeredNetwork(weights=tuple(student))
    train_err = float(np.mean((trained.forward(xs) - ys) ** 2))
    test_err = float(np.mean((trained.forward(xt) - yt) ** 2))
    if not (np.isfinite(train_err) and np.isfinite(test_err)):
        raise DivergedLoss("non-finite final error")
    return ResultRow(depth=depth, width=width, seed=seed, train_err=train_err, test_err=test_err, wall_ms=wall_ms)


def _run_cell(args):
    config, depth, width, seed = args
    target = generate_target(config.d, depth, width, seed)
    return sgd_train(config, target, depth, width, seed)


def run_table(config: ExperimentConfig, workers=1):
    """Depth x width x seed grid in deterministic order; cells may run in
    parallel (per-cell generators make results independent of scheduling)."""
    cells = [
        (config, depth, width, seed)
        for depth, width, seed in itertools.product(config.depths, config.widths, config.seeds)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [r.depth, r.width, r.seed, f"{r.train_err:.10g}", f"{r.test_err:.10g}", f"{r.wall_ms:.3f}"]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# node-wise recovery on the population loss
# ---------------------------------------------------------------------------


def match_to_target(theta, a, target: TargetNetwork):
    """Min-total-distance assignment of learned nodes to fixed ones, brute
    force over permutations (k <= 8)."""
    k = target.k
    if k > 8:
        raise ValueError("brute-force matching is for k <= 8")
    diff = theta[:, None, :] - target.w[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(k)):
        cost = sum(dist[i, perm[i]] for i in range(k))
        if cost < best_cost:
            best_perm, best_cost = perm, cost
    perm = np.array(best_perm)
    max_dist = float(max(dist[i, perm[i]] for i in range(k)))
    max_charge = float(np.max(np.abs(a + target.b[perm])))
    return perm, max_dist, max_charge


def recovery_experiment(config: ExperimentConfig, table_loader=None):
    """Node-wise descent against separated depth-2 targets over the seed list.

    Returns a report dict with one record per seed (matched permutation, max
    position error, max outer-weight error) plus the success count at the 0.1
    tolerance.
    """
    pot = parse_potential(config.potential, table_loader=table_loader)
    d = getattr(pot, "d", 3)
    records = []
    for seed in config.seeds:
        target = generate_separated_target(d, config.k, seed, config.separation, config.scale)
        obj = Objective(pot, target)
        radius = config.radius_mult * float(np.max(np.linalg.norm(target.w, axis=1)))
        policy = RandomBallInit(radius=radius, trials=config.trials)
        cfg = DescentConfig(
            T=config.descent_T,
            alpha=config.descent_alpha,
            eta=config.descent_eta,
            gamma=config.descent_gamma,
            seed=seed * 1000,
            alpha_scale="init-charge",
            trace_stride=config.trace_stride,
        )
        t0 = time.perf_counter()
        result = node_wise_descent(obj, policy, cfg)
        perm, max_dist, max_charge = match_to_target(result.theta, result.a, target)
        records.append(
            {
                "schema_version": SCHEMA_VERSION,
                "seed": seed,
                "k": config.k,
                "permutation": perm.tolist(),
                "distinct": len(set(perm.tolist())) == config.k,
                "max_position_err": max_dist,
                "max_charge_err": max_charge,
                "recovered": bool(max_dist < 0.1 and max_charge < 0.1),
                "iterations": [r.iterations for r in result.reports],
                "wall_ms": (time.perf_counter() - t0) * 1e3,
            }
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "potential": config.potential,
        "k": config.k,
        "seeds": list(config.seeds),
        "records": records,
        "recovered_count": sum(r["recovered"] for r in records),
    }


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

_LIST_KEYS = {"depths", "widths", "seeds"}
_INT_KEYS = {"d", "n_train", "n_test", "iters", "batch", "k", "trials", "descent_T", "steps", "stride", "trace_stride"}
_FLOAT_KEYS = {"alpha", "separation", "scale", "radius_mult", "descent_alpha", "descent_eta", "descent_gamma", "dt"}
_BOOL_KEYS = {"full_scale"}


def parse_config_file(path):
    """One ``key = value`` per line; blank lines and # comments ignored.
    List-valued keys take comma-separated integers."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key] = _coerce(key, val)
    return out


def parse_seeds(val):
    """Seed specification: a bare integer N means seeds 0..N-1, a
    comma-separated list names them explicitly."""
    text = str(val)
    if "," in text:
        return tuple(int(v) for v in text.split(",") if v.strip())
    return tuple(range(int(text)))


def _coerce(key, val):
    if key == "seeds":
        return parse_seeds(val)
    if key in _LIST_KEYS:
        return tuple(int(v) for v in val.split(","))
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _BOOL_KEYS:
        return val.lower() in ("1", "true", "yes")
    return val


def config_from(file_values: dict, overrides: dict):
    """Build the experiment config with flags overriding file values."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**merged)


def write_jsonl(records, path):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
