"""Population squared loss of a two-layer fit, expanded over the pair kernel.

With the mobile outer weights re-signed, the residual is
sum_i a_i sigma(., theta_i) + sum_j b_j sigma(., w_j) and its expected square
expands into kernel blocks:

    L = sum_ij a_i a_j K(theta_i, theta_j)
      + 2 sum_ij a_i b_j K(theta_i, w_j)
      + sum_ij b_i b_j K(w_i, w_j)

The fixed-fixed block is constant and cached. The charge-regularized form
adds ||a||^2. For kernels with an infinite diagonal (Coulomb, log) the
constant self-energy terms are omitted; those kernels are used only with
frozen charges, where the omission shifts the value by a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonDifferentiablePoint, SingularDiagonal
from .potentials import SPHERE, Potential

_COLLISION_GUARD = 1e-10


@dataclass(frozen=True)
class TargetNetwork:
    """Fixed hidden weights and outer weights (the immobile charges)."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.atleast_2d(np.asarray(self.w, dtype=float)))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).ravel())
        if self.w.shape[0] != self.b.shape[0] or self.w.shape[0] < 1:
            raise DimensionMismatch("need one outer weight per hidden vector")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise ValueError("target weights must be finite")

    @property
    def k(self):
        return self.w.shape[0]

    @property
    def d(self):
        return self.w.shape[1]


@dataclass(frozen=True)
class Hypothesis:
    """Trainable hidden weights and outer weights (the mobile charges)."""

    theta: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", np.atleast_2d(np.asarray(self.theta, dtype=float)))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).ravel())
        if self.theta.shape[0] != self.a.shape[0] or self.theta.shape[0] < 1:
            raise DimensionMismatch("need one outer weight per hidden vector")

    @property
    def k(self):
        return self.theta.shape[0]

    @property
    def d(self):
        return self.theta.shape[1]


def _offdiag_kernel_matrix(pot, pts):
    """Kernel matrix over one point set with the diagonal zeroed.

    The diagonal is handled separately through pot.diagonal(); zero separation
    off the diagonal is the caller's collision problem.
    """
    if pot.manifold == SPHERE:
        m = np.asarray(pot.phi_rho(np.clip(pts @ pts.T, -1.0, 1.0)), dtype=float)
        np.fill_diagonal(m, 0.0)
        return m
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    off = ~np.eye(len(pts), dtype=bool)
    if pot.raw_singular and np.any(dist[off] < _COLLISION_GUARD):
        raise SingularDiagonal(f"{pot.name}: coincident points at a singular kernel")
    np.fill_diagonal(dist, 1.0)
    m = np.asarray(pot.phi_r(dist), dtype=float)
    np.fill_diagonal(m, 0.0)
    return m


def _cross_kernel_matrix(pot, pts_a, pts_b):
    if pot.manifold == SPHERE:
        return np.asarray(pot.phi_rho(np.clip(pts_a @ pts_b.T, -1.0, 1.0)), dtype=float)
    diff = pts_a[:, None, :] - pts_b[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    if pot.raw_singular and np.any(dist < _COLLISION_GUARD):
        raise SingularDiagonal(f"{pot.name}: electron sits on a fixed charge")
    return np.asarray(pot.phi_r(dist), dtype=float)


class Objective:
    """Loss evaluator bound to a kernel and a target network.

    ``regularization`` is "none" or "charge" (adds ||a||^2). The fixed-fixed
    kernel block is computed once at construction.
    """

    def __init__(self, potential: Potential, target: TargetNetwork, regularization="none"):
        if regularization not in ("none", "charge"):
            raise ValueError(f"unknown regularization {regularization!r}")
        self.potential = potential
        self.target = target
        self.regularization = regularization
        if potential.manifold == SPHERE:
            norms = np.linalg.norm(target.w, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-12):
                raise DimensionMismatch("sphere kernel requires unit target weights")
        try:
            diag = potential.diagonal()
            self._bb_const = float(
                target.b @ _offdiag_kernel_matrix(potential, target.w) @ target.b
                + diag * float(target.b @ target.b)
            )
        except SingularDiagonal:
            # infinite self-energy omitted; constant for fixed charges
            self._bb_const = float(
                target.b @ _offdiag_kernel_matrix(potential, target.w) @ target.b
            )

    # -- basic blocks --------------------------------------------------------

    def _check(self, hyp: Hypothesis):
        if hyp.d != self.target.d:
            raise DimensionMismatch(f"hypothesis d={hyp.d}, target d={self.target.d}")

    def cross_block(self, theta):
        """Kernel matrix between mobile points and the fixed ones."""
        return _cross_kernel_matrix(self.potential, np.atleast_2d(theta), self.target.w)

    def baseline(self):
        """Loss of the all-zero hypothesis (the fixed-fixed block alone)."""
        return self._bb_const

    # -- value / gradient ----------------------------------------------------

    def loss(self, hyp: Hypothesis):
        self._check(hyp)
        pot = self.potential
        gram_off = _offdiag_kernel_matrix(pot, hyp.theta)
        cross = self.cross_block(hyp.theta)
        try:
            diag = pot.diagonal()
        except SingularDiagonal:
            diag = 0.0  # self-energy omitted (constant; see module docstring)
        val = (
            hyp.a @ gram_off @ hyp.a
            + diag * float(hyp.a @ hyp.a)
            + 2.0 * hyp.a @ cross @ self.target.b
            + self._bb_const
        )
        if self.regularization == "charge":
            val += float(hyp.a @ hyp.a)
        return float(val)

    def grad(self, hyp: Hypothesis):
        """Analytic gradient (d/da, d/dtheta); sphere gradients are projected
        to the tangent spaces."""
        self._check(hyp)
        pot = self.potential
        gram_off = _offdiag_kernel_matrix(pot, hyp.theta)
        cross = self.cross_block(hyp.theta)
        try:
            diag = pot.diagonal()
        except SingularDiagonal:
            diag = 0.0
        ga = 2.0 * (gram_off @ hyp.a + diag * hyp.a + cross @ self.target.b)
        if self.regularization == "charge":
            ga = ga + 2.0 * hyp.a
        gt = self._theta_grad(hyp)
        return ga, gt

    def loss_and_grad(self, hyp: Hypothesis):
        """Fused value and analytic gradient sharing the kernel blocks."""
        self._check(hyp)
        pot = self.potential
        if hyp.k == 1 and pot.manifold != SPHERE:
            return self._loss_and_grad_single(hyp)
        gram_off = _offdiag_kernel_matrix(pot, hyp.theta)
        cross = self.cross_block(hyp.theta)
        try:
            diag = pot.diagonal()
        except SingularDiagonal:
            diag = 0.0
        ga_core = gram_off @ hyp.a + diag * hyp.a + cross @ self.target.b
        val = float(hyp.a @ ga_core + hyp.a @ cross @ self.target.b + self._bb_const)
        ga = 2.0 * ga_core
        if self.regularization == "charge":
            val += float(hyp.a @ hyp.a)
            ga = ga + 2.0 * hyp.a
        return val, ga, self._theta_grad(hyp)

    def _loss_and_grad_single(self, hyp: Hypothesis):
        """One mobile node against the fixed charges: a single fused kernel
        pass over the k separations (the restricted-objective hot loop)."""
        pot = self.potential
        theta = hyp.theta[0]
        a = float(hyp.a[0])
        diff = theta - self.target.w
        dist = np.sqrt(np.einsum("kd,kd->k", diff, diff))
        if float(dist.min()) < _COLLISION_GUARD and not pot.smooth_origin:
            raise NonDifferentiablePoint(
                f"{pot.name}: zero separation at a kernel kink/singularity"
            )
        phi, dphi = pot.phi_and_dphi(dist)
        s = float(phi @ self.target.b)
        diag = pot.diagonal()
        val = a * a * diag + 2.0 * a * s + self._bb_const
        ga = 2.0 * (a * diag + s)
        if self.regularization == "charge":
            val += a * a
            ga += 2.0 * a
        # zero separation only reaches here for smooth kernels, where diff = 0
        # kills the term; the clamped denominator just avoids the 0/0
        fac = dphi / np.maximum(dist, _COLLISION_GUARD)
        gt = (2.0 * a) * ((fac * self.target.b) @ diff)
        return val, np.array([ga]), gt[None, :]

    def _theta_grad(self, hyp: Hypothesis):
        pot = self.potential
        theta, a = hyp.theta, hyp.a
        w, b = self.target.w, self.target.b
        if pot.manifold == SPHERE:
            rho_ee = np.clip(theta @ theta.T, -1.0, 1.0)
            rho_ew = np.clip(theta @ w.T, -1.0, 1.0)
            if np.max(np.abs(np.concatenate([rho_ee[~np.eye(hyp.k, dtype=bool)].ravel(), rho_ew.ravel()]))) > 1.0 - 1e-12:
                raise NonDifferentiablePoint("inner product at a kernel kink")
            dee = np.asarray(pot.dphi_rho(rho_ee), dtype=float)
            np.fill_diagonal(dee, 0.0)
            dew = np.asarray(pot.dphi_rho(rho_ew), dtype=float)
            gt = (dee * a[None, :]) @ theta + (dew * b[None, :]) @ w
            gt = 2.0 * a[:, None] * gt
            gt -= np.sum(gt * theta, axis=1, keepdims=True) * theta
            return gt
        diff_ee = theta[:, None, :] - theta[None, :, :]
        dist_ee = np.sqrt(np.sum(diff_ee * diff_ee, axis=-1))
        diff_ew = theta[:, None, :] - w[None, :, :]
        dist_ew = np.sqrt(np.sum(diff_ew * diff_ew, axis=-1))
        off = ~np.eye(hyp.k, dtype=bool)
        min_sep = min(
            float(np.min(dist_ee[off])) if hyp.k > 1 else np.inf, float(np.min(dist_ew))
        )
        if min_sep < _COLLISION_GUARD and not pot.smooth_origin:
            raise NonDifferentiablePoint(
                f"{pot.name}: zero separation at a kernel kink/singularity"
            )
        np.fill_diagonal(dist_ee, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac_ee = np.asarray(pot.dphi_r(dist_ee), dtype=float) / dist_ee
            fac_ew = np.asarray(pot.dphi_r(dist_ew), dtype=float) / dist_ew
        np.fill_diagonal(fac_ee, 0.0)
        if pot.smooth_origin:
            fac_ew = np.where(dist_ew < _COLLISION_GUARD, 0.0, fac_ew)
            fac_ee = np.where(dist_ee < _COLLISION_GUARD, 0.0, fac_ee)
        gt = np.einsum("ij,j,ijd->id", fac_ee, a, diff_ee)
        gt += np.einsum("ij,j,ijd->id", fac_ew, b, diff_ew)
        return 2.0 * a[:, None] * gt

    # -- quadratic structure in the outer weights -----------------------------

    def optimal_outer_weight(self, theta1):
        """Single-node optimum of the quadratic in a_1 and the loss change it buys.

        Unregularized: a* = -S, change -S^2; charge-regularized: a* = -S/2,
        change -S^2/2, where S = sum_j b_j K(theta1, w_j). The change is the
        signed difference against a_1 = 0 (negative when the loss improves).
        """
        diag = self.potential.diagonal()
        s = float((self.cross_block(theta1) @ self.target.b).ravel()[0])
        if self.regularization == "charge":
            quad = diag + 1.0
        else:
            quad = diag
        a_star = -s / quad
        change = -s * s / quad
        return a_star, change

    def solve_optimal_a(self, theta):
        """Exact minimizer of the quadratic in the full outer-weight vector.

        Solves (G + reg I) a = -C b; falls back to a 1e-12 Tikhonov shift when
        the Gram system is singular or ill-conditioned.
        """
        theta = np.atleast_2d(theta)
        diag = self.potential.diagonal()
        g = _offdiag_kernel_matrix(self.potential, theta) + diag * np.eye(len(theta))
        if self.regularization == "charge":
            g = g + np.eye(len(theta))
        rhs = -self.cross_block(theta) @ self.target.b
        try:
            a = np.linalg.solve(g, rhs)
            if not np.all(np.isfinite(a)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            a = np.linalg.solve(g + 1e-12 * np.eye(len(theta)), rhs)
        return a

    # -- derived objects ------------------------------------------------------

    def restricted(self, frozen_theta=None, frozen_a=None):
        """Objective for one mobile node with previously learned nodes frozen
        as additional fixed charges; nodes not yet visited carry zero outer
        weight and vanish from the loss."""
        if frozen_theta is None or len(frozen_theta) == 0:
            return self
        w_eff = np.vstack([self.target.w, np.atleast_2d(frozen_theta)])
        b_eff = np.concatenate([self.target.b, np.asarray(frozen_a, dtype=float).ravel()])
        return Objective(self.potential, TargetNetwork(w_eff, b_eff), self.regularization)


# ---------------------------------------------------------------------------
# finite differences over the packed coordinate vector
# ---------------------------------------------------------------------------


@dataclass
class VectorObjective:
    """Flat-vector adapter over (a, theta) used by the descent algorithms.

    Packing: x = [a_1..a_k, theta_11..theta_1d, ..., theta_kd]. ``project``
    renormalizes the hidden vectors for sphere kernels and is the identity
    otherwise.
    """

    objective: Objective
    k: int
    d: int
    hessian_step: float = 1e-4

    def pack(self, hyp: Hypothesis):
        return np.concatenate([hyp.a, hyp.theta.ravel()])

    def unpack(self, x):
        return Hypothesis(theta=x[self.k :].reshape(self.k, self.d), a=x[: self.k])

    @property
    def dim(self):
        return self.k + self.k * self.d

    def value(self, x):
        return self.objective.loss(self.unpack(x))

    def grad(self, x):
        ga, gt = self.objective.grad(self.unpack(x))
        return np.concatenate([ga, gt.ravel()])

    def value_and_grad(self, x):
        val, ga, gt = self.objective.loss_and_grad(self.unpack(x))
        return val, np.concatenate([ga, gt.ravel()])

    def hess(self, x, h=None):
        return fd_hessian(self.value, x, h or self.hessian_step)

    def project(self, x):
        if self.objective.potential.manifold != SPHERE:
            return x
        out = x.copy()
        theta = out[self.k :].reshape(self.k, self.d)
        norms = np.linalg.norm(theta, axis=1, keepdims=True)
        theta /= norms
        return out


def fd_gradient(f, x, h=None):
    """Central-difference gradient; h defaults to 1e-5 * max(1, |x|)."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * max(1.0, float(np.linalg.norm(x)))
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def fd_hessian(f, x, h=1e-4):
    """Symmetric central-difference Hessian, symmetrized as (H + H^T)/2."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.zeros((n, n))
    f0 = f(x)
    basis = np.eye(n) * h
    for i in range(n):
        hess[i, i] = (f(x + 2 * basis[i]) - 2 * f0 + f(x - 2 * basis[i])) / (4.0 * h * h)
        for j in range(i + 1, n):
            pij = (
                f(x + basis[i] + basis[j])
                - f(x + basis[i] - basis[j])
                - f(x - basis[i] + basis[j])
                + f(x - basis[i] - basis[j])
            ) / (4.0 * h * h)
            hess[i, j] = pij
            hess[j, i] = pij
    return 0.5 * (hess + hess.T)


def hessian(obj: Objective, hyp: Hypothesis, h=1e-4):
    """Finite-difference Hessian of the loss over the packed (a, theta) vector."""
    vec = VectorObjective(obj, hyp.k, hyp.d, hessian_step=h)
    return vec.hess(vec.pack(hyp), h)


def theta_laplacian(obj: Objective, hyp: Hypothesis, i, h=1e-4):
    """Trace of the theta_i block of the Hessian via axis-aligned second
    differences."""
    if not 0 <= i < hyp.k:
        raise DimensionMismatch(f"node index {i} out of range")
    base = hyp.theta.copy()
    f0 = obj.loss(hyp)
    acc = 0.0
    for m in range(hyp.d):
        for sgn in (+1.0, -1.0):
            t = base.copy()
            t[i, m] += sgn * h
            acc += obj.loss(Hypothesis(theta=t, a=hyp.a))
        acc -= 2.0 * f0
    return acc / (h * h)


# spec-surface aliases
def loss(obj: Objective, hyp: Hypothesis):
    return obj.loss(hyp)


def grad(obj: Objective, hyp: Hypothesis):
    return obj.grad(hyp)


def optimal_outer_weight(obj: Objective, theta1):
    return obj.optimal_outer_weight(theta1)
