"""Descent algorithms: plain gradient steps, negative-curvature steps, their
combination with an early stop, and the sequential node-by-node driver.

All algorithms operate on objects exposing ``value(x)`` and ``grad(x)`` over a
flat coordinate vector (``hess(x)`` and ``project(x)`` are picked up when
present, with finite-difference and identity fallbacks). Runs are
deterministic: the only randomness is the seeded ball sampling in node
initialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ChargeflowError, EigenSolveFailure, InitializationFailed
from .loss import Objective, VectorObjective, fd_gradient, fd_hessian


@dataclass(frozen=True)
class DescentConfig:
    T: int = 1000
    alpha: float = 0.1
    eta: float = 1e-3
    gamma: float = 1e-2
    projection: str = "none"  # "none" | "unit-sphere"
    hessian_step: float = 1e-4
    seed: int = 0
    trace_stride: int = 1
    # node-wise driver: "fixed" uses alpha as-is per node; "init-charge"
    # rescales it by the squared initial outer weight, which equalizes the
    # particle drift speed across nodes of different charge magnitude
    alpha_scale: str = "fixed"
    alpha_floor: float = 1e-4

    def __post_init__(self):
        if self.T < 1 or self.alpha <= 0 or self.eta <= 0 or self.gamma <= 0:
            raise ValueError("need T >= 1 and positive alpha, eta, gamma")
        if self.alpha_scale not in ("fixed", "init-charge"):
            raise ValueError(f"unknown alpha_scale {self.alpha_scale!r}")

    def min_decrease(self):
        return min(self.alpha * self.eta**2 / 2.0, self.alpha**2 * self.gamma**3 / 2.0)


@dataclass
class IterationRecord:
    iteration: int
    value: float
    grad_norm: float
    lambda_min: float  # nan on gradient-branch iterations
    branch: str  # "grad" | "hessian"
    decrease: float


@dataclass
class DescentReport:
    rows: list = field(default_factory=list)
    termination: str = "max_iters"  # "max_iters" | "early_stop" | "error"
    final_x: np.ndarray | None = None
    final_value: float = float("nan")
    iterations: int = 0
    error: str = ""

    def values(self):
        return np.array([r.value for r in self.rows])

    def to_jsonl(self):
        lines = []
        for r in self.rows:
            lines.append(
                json.dumps(
                    {
                        "schema_version": 1,
                        "iteration": r.iteration,
                        "value": r.value,
                        "grad_norm": r.grad_norm,
                        "lambda_min": None if np.isnan(r.lambda_min) else r.lambda_min,
                        "branch": r.branch,
                        "decrease": r.decrease,
                    }
                )
            )
        lines.append(
            json.dumps(
                {
                    "schema_version": 1,
                    "termination": self.termination,
                    "iterations": self.iterations,
                    "final_value": self.final_value,
                    "error": self.error,
                }
            )
        )
        return "\n".join(lines)


@dataclass
class StationaritySet:
    """Membership record for the set of eps-approximate second-order
    stationary points: small gradient and nearly-PSD Hessian."""

    point: np.ndarray
    eps: float
    grad_norm: float
    lambda_min: float

    @property
    def grad_ok(self):
        return self.grad_norm <= self.eps

    @property
    def hess_ok(self):
        return self.lambda_min >= -self.eps

    @property
    def member(self):
        return self.grad_ok and self.hess_ok


class FunctionObjective:
    """Wrap plain callables for the descent drivers; missing derivatives fall
    back to central finite differences."""

    def __init__(self, f, grad=None, hess=None, grad_step=None, hess_step=1e-4):
        self._f = f
        self._grad = grad
        self._hess = hess
        self._grad_step = grad_step
        self._hess_step = hess_step

    def value(self, x):
        return float(self._f(np.asarray(x, dtype=float)))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(x), dtype=float)
        return fd_gradient(self._f, x, self._grad_step)

    def hess(self, x, h=None):
        x = np.asarray(x, dtype=float)
        if self._hess is not None:
            return np.asarray(self._hess(x), dtype=float)
        return fd_hessian(self._f, x, h or self._hess_step)


def _project(objective, x, cfg):
    if cfg.projection == "none":
        return x
    proj = getattr(objective, "project", None)
    if proj is not None:
        return proj(x)
    n = np.linalg.norm(x)
    return x if n == 0 else x / n


def _hess_of(objective, x, cfg):
    hess = getattr(objective, "hess", None)
    if hess is not None:
        return hess(x, cfg.hessian_step)
    return fd_hessian(objective.value, x, cfg.hessian_step)


def min_eigpair(h, tol=1e-8, max_iter=50_000):
    """Smallest eigenvalue and unit eigenvector of a symmetric matrix.

    Dense solve up to dimension 256; beyond that, power iteration on the
    Gershgorin-shifted matrix with a deterministic start vector.
    """
    h = np.asarray(h, dtype=float)
    n = h.shape[0]
    if not np.all(np.isfinite(h)):
        raise EigenSolveFailure("Hessian has non-finite entries")
    if n <= 256:
        vals, vecs = np.linalg.eigh(h)
        return float(vals[0]), vecs[:, 0]
    shift = float(np.max(np.sum(np.abs(h), axis=1)))
    m = shift * np.eye(n) - h
    v = np.ones(n) + 1e-3 * np.arange(n)  # deterministic start
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    for _ in range(max_iter):
        w = m @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return float(shift), v  # h = shift*I on this subspace
        v = w / norm
        lam = float(v @ h @ v)
        residual = np.linalg.norm(h @ v - lam * v)
        if residual <= tol and abs(lam - lam_prev) <= tol:
            return lam, v
        lam_prev = lam
    raise EigenSolveFailure(f"power iteration stalled (last residual {residual:g})")


def gd(objective, x0, cfg: DescentConfig):
    """Plain gradient descent: T steps of x <- Pi(x - alpha * grad).

    A kernel kink or solver failure mid-trajectory truncates the run and is
    recorded on the report instead of propagating."""
    x = np.asarray(x0, dtype=float).copy()
    report = DescentReport()
    value = objective.value(x)
    for it in range(1, cfg.T + 1):
        try:
            g = objective.grad(x)
            x_new = _project(objective, x - cfg.alpha * g, cfg)
            new_value = objective.value(x_new)
        except ChargeflowError as exc:
            report.termination = "error"
            report.error = str(exc)
            break
        if it % cfg.trace_stride == 0 or it == cfg.T:
            report.rows.append(
                IterationRecord(
                    iteration=it,
                    value=new_value,
                    grad_norm=float(np.linalg.norm(g)),
                    lambda_min=float("nan"),
                    branch="grad",
                    decrease=value - new_value,
                )
            )
        x, value = x_new, new_value
        report.iterations = it
    report.final_x = x
    report.final_value = value
    return report


def hessian_descent_step(objective, x, cfg: DescentConfig):
    """One negative-curvature step: x + beta v_min with |beta| = alpha
    |lambda_min| and the sign chosen so beta * (grad . v_min) <= 0
    (sign(0) := +1), the choice the decrease guarantee rests on.

    Returns (new point, lambda_min)."""
    x = np.asarray(x, dtype=float)
    lam_min, v_min = min_eigpair(_hess_of(objective, x, cfg))
    g = objective.grad(x)
    s = float(np.sign(g @ v_min))
    if s == 0.0:
        s = 1.0
    beta = -cfg.alpha * abs(lam_min) * s
    return x + beta * v_min, lam_min


def second_gd(objective, x0, cfg: DescentConfig):
    """Gradient steps while the gradient is large, one negative-curvature step
    otherwise; stop and return the PREVIOUS iterate as soon as an iteration
    fails to decrease the objective by min(alpha eta^2/2, alpha^2 gamma^3/2).
    """
    x_prev = np.asarray(x0, dtype=float).copy()
    report = DescentReport()
    fused = getattr(objective, "value_and_grad", None)
    if fused is not None:
        v_prev, g = fused(x_prev)
    else:
        v_prev = objective.value(x_prev)
        g = objective.grad(x_prev)
    threshold = cfg.min_decrease()
    for it in range(1, cfg.T + 1):
        gnorm = float(np.linalg.norm(g))
        lam_min = float("nan")
        try:
            if gnorm >= cfg.eta:
                branch = "grad"
                x_new = _project(objective, x_prev - cfg.alpha * g, cfg)
            else:
                branch = "hessian"
                x_new, lam_min = hessian_descent_step(objective, x_prev, cfg)
                x_new = _project(objective, x_new, cfg)
            if fused is not None:
                v_new, g_new = fused(x_new)
            else:
                v_new = objective.value(x_new)
                g_new = None
        except ChargeflowError as exc:
            report.termination = "error"
            report.error = str(exc)
            report.final_x = x_prev
            report.final_value = v_prev
            return report
        decrease = v_prev - v_new
        report.iterations = it
        if it % cfg.trace_stride == 0 or v_new >= v_prev - threshold or it == cfg.T:
            report.rows.append(
                IterationRecord(
                    iteration=it,
                    value=v_new,
                    grad_norm=gnorm,
                    lambda_min=lam_min,
                    branch=branch,
                    decrease=decrease,
                )
            )
        if v_new >= v_prev - threshold:
            report.termination = "early_stop"
            report.final_x = x_prev
            report.final_value = v_prev
            return report
        x_prev, v_prev = x_new, v_new
        if g_new is not None:
            g = g_new
        else:
            try:
                g = objective.grad(x_prev)
            except ChargeflowError as exc:
                report.termination = "error"
                report.error = str(exc)
                report.final_x = x_prev
                report.final_value = v_prev
                return report
    report.termination = "max_iters"
    report.final_x = x_prev
    report.final_value = v_prev
    return report


def stationarity_check(objective, x, eps, cfg: DescentConfig | None = None):
    """Measure both membership conditions of the eps-stationary set."""
    cfg = cfg or DescentConfig()
    x = np.asarray(x, dtype=float)
    g = objective.grad(x)
    lam_min, _ = min_eigpair(_hess_of(objective, x, cfg))
    return StationaritySet(
        point=x, eps=eps, grad_norm=float(np.linalg.norm(g)), lambda_min=lam_min
    )


# ---------------------------------------------------------------------------
# node-wise driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OriginInit:
    """Place the node at the origin with its optimal outer weight."""


@dataclass(frozen=True)
class RandomBallInit:
    """Best of ``trials`` uniform samples from the radius-``radius`` ball,
    each scored by the loss change of its optimal outer weight."""

    radius: float
    trials: int = 200


def initialize_node(obj: Objective, policy, seed=0):
    """Initialize one mobile node on the (restricted) objective.

    Returns (a, theta, loss_change) where loss_change is the signed change
    against a = 0 (negative when the initialization strictly improves).
    Raises InitializationFailed when no strict improvement is found.
    """
    d = obj.target.d
    if isinstance(policy, OriginInit):
        theta = np.zeros(d)
        a, change = obj.optimal_outer_weight(theta)
    elif isinstance(policy, RandomBallInit):
        rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], dtype=np.uint64)))
        quad = obj.potential.diagonal() + (1.0 if obj.regularization == "charge" else 0.0)
        best = (None, None, np.inf)
        remaining = policy.trials
        while remaining > 0:
            m = min(remaining, 1 << 19)
            direction = rng.standard_normal((m, d))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            radius = policy.radius * rng.uniform(size=m) ** (1.0 / d)
            pts = direction * radius[:, None]
            s = obj.cross_block(pts) @ obj.target.b
            changes = -s * s / quad
            idx = int(np.argmin(changes))
            if changes[idx] < best[2]:
                best = (-s[idx] / quad, pts[idx], float(changes[idx]))
            remaining -= m
        a, theta, change = best
    else:
        raise ValueError(f"unknown initialization policy {policy!r}")
    if change >= 0.0:
        raise InitializationFailed(
            f"no strict decrease achievable (best change {change:g})"
        )
    return a, theta, change


@dataclass
class NodeWiseResult:
    a: np.ndarray
    theta: np.ndarray
    reports: list
    init_changes: list


def node_wise_descent(obj: Objective, policy, cfg: DescentConfig, k=None):
    """Learn nodes sequentially: initialize node i, run the combined descent
    on its restricted objective with nodes < i frozen at their learned values
    (acting as additional fixed charges) and nodes > i silent at a = 0.

    Each node finishes with the closed-form re-optimization of its outer
    weight at the learned position (a strict decrease of the quadratic; the
    position converges faster than the jointly descended weight)."""
    k = k or obj.target.k
    d = obj.target.d
    learned_a: list[float] = []
    learned_theta: list[np.ndarray] = []
    reports = []
    changes = []
    for i in range(k):
        sub = obj.restricted(np.array(learned_theta), np.array(learned_a))
        a0, th0, change = initialize_node(sub, policy, seed=cfg.seed + i)
        node_cfg = cfg
        if cfg.alpha_scale == "init-charge":
            scale = max(a0 * a0, cfg.alpha_floor)
            node_cfg = replace(cfg, alpha=min(1.0, cfg.alpha / scale), alpha_scale="fixed")
        vec = VectorObjective(sub, 1, d, hessian_step=cfg.hessian_step)
        x0 = np.concatenate([[a0], th0])
        rep = second_gd(vec, x0, node_cfg)
        hyp = vec.unpack(rep.final_x)
        a_final, _ = sub.optimal_outer_weight(hyp.theta[0])
        learned_a.append(float(a_final))
        learned_theta.append(hyp.theta[0])
        reports.append(rep)
        changes.append(change)
    return NodeWiseResult(
        a=np.array(learned_a),
        theta=np.array(learned_theta),
        reports=reports,
        init_changes=changes,
    )
