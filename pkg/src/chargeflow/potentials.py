"""Activation/kernel duality under standard Gaussian inputs.

Every similarity kernel here is the expectation Phi(theta, w) =
E[sigma(X, theta) sigma(X, w)] over X ~ N(0, I) for some activation sigma.
Translationally invariant kernels depend on r = ||theta - w||, rotationally
invariant ones (unit-sphere weights) on rho = theta . w. Kernels are
normalized to Phi(theta, theta) = 1 whenever that diagonal is finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, k0e, k1e

from . import harmonic
from .errors import (
    DimensionMismatch,
    GridTooCoarse,
    NegativeCoefficient,
    NonDifferentiablePoint,
    NonFiniteSample,
    OffManifold,
    SingularDiagonal,
    UnsupportedDimension,
)

EUCLIDEAN = "euclidean"
SPHERE = "sphere"

_COLLISION_GUARD = 1e-10


# ---------------------------------------------------------------------------
# Hermite helpers (probabilists', orthonormal under N(0, 1))
# ---------------------------------------------------------------------------


def hermite_eval(coeffs, x):
    """Evaluate sum_i coeffs[i] * h_i(x) with h_i = He_i / sqrt(i!)."""
    c = np.asarray(coeffs, dtype=float)
    scaled = c * np.exp(-0.5 * gammaln(np.arange(len(c)) + 1.0))
    return np.polynomial.hermite_e.hermeval(x, scaled)


def dual_from_hermite(hermite_coeffs):
    """Kernel Taylor coefficients induced by an orthonormal-Hermite activation.

    An activation sum_i a_i h_i has sphere kernel rho -> sum_i a_i^2 rho^i.
    """
    a = np.asarray(hermite_coeffs, dtype=float)
    return a * a


def activation_from_potential_taylor(taylor_coeffs):
    """Inverse of :func:`dual_from_hermite`: componentwise square root.

    Requires non-negative coefficients; raises NegativeCoefficient with the
    index of the first offender, since a signed coefficient means no
    orthonormal-Hermite activation induces this kernel.
    """
    c = np.asarray(taylor_coeffs, dtype=float)
    bad = np.nonzero(c < 0)[0]
    if bad.size:
        raise NegativeCoefficient(int(bad[0]), float(c[bad[0]]))
    return np.sqrt(c)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


class Potential:
    """Base similarity kernel.

    Subclasses are either radial (implement ``phi_r``/``dphi_r`` of the
    separation r) on Euclidean space, or rotational (implement
    ``phi_rho``/``dphi_rho`` of the inner product) on the unit sphere.
    """

    name = "potential"
    manifold = EUCLIDEAN
    finite_diagonal = True
    smooth_origin = False  # True when grad exists at zero separation
    raw_singular = False  # True when the pointwise form diverges as r -> 0

    def diagonal(self):
        """Normalized value at theta == w (the a_i^2 self-term of the loss)."""
        if not self.finite_diagonal:
            raise SingularDiagonal(f"{self.name} kernel diverges on the diagonal")
        return 1.0

    def phi_and_dphi(self, r):
        """Radial value and derivative together (single pass where possible)."""
        return self.phi_r(r), self.dphi_r(r)

    # -- radial/rotational dispatch ----------------------------------------

    def value_from_points(self, theta, w):
        if self.manifold == EUCLIDEAN:
            return float(self.phi_r(np.linalg.norm(theta - w)))
        return float(self.phi_rho(np.dot(theta, w)))

    def pairwise(self, pts_a, pts_b):
        """Kernel matrix between two point sets, shapes (n, d) and (m, d)."""
        if self.manifold == EUCLIDEAN:
            diff = pts_a[:, None, :] - pts_b[None, :, :]
            return self.phi_r(np.sqrt(np.sum(diff * diff, axis=-1)))
        return self.phi_rho(pts_a @ pts_b.T)

    def grad_theta(self, theta, w):
        """Gradient in the first argument; sphere kernels return the tangent
        projection."""
        if self.manifold == EUCLIDEAN:
            diff = theta - w
            r = float(np.linalg.norm(diff))
            if r < _COLLISION_GUARD:
                if self.smooth_origin:
                    return np.zeros_like(diff)
                raise NonDifferentiablePoint(
                    f"{self.name} kernel is not differentiable at zero separation"
                )
            return float(self.dphi_r(r)) / r * diff
        rho = float(np.dot(theta, w))
        g = float(self.dphi_rho(rho)) * w
        return g - np.dot(g, theta) * theta


class SignPotential(Potential):
    """Kernel of the sign activation on the unit sphere: 1 - 2 acos(rho) / pi."""

    name = "sign"
    manifold = SPHERE

    def phi_rho(self, rho):
        return 1.0 - 2.0 * np.arccos(np.clip(rho, -1.0, 1.0)) / np.pi

    def dphi_rho(self, rho):
        if 1.0 - abs(rho) < 1e-12:
            raise NonDifferentiablePoint("sign kernel has kinks at rho = +/-1")
        return 2.0 / (np.pi * np.sqrt(1.0 - rho * rho))


class GaussianPotential(Potential):
    """exp(-c r^2 / 2); strictly positive Laplacian outside r^2 = d/c."""

    manifold = EUCLIDEAN
    smooth_origin = True

    def __init__(self, c=1.0):
        if c <= 0:
            raise ValueError("c must be positive")
        self.c = float(c)
        self.name = f"gauss:c={c:g}"

    def phi_r(self, r):
        return np.exp(-self.c * np.square(r) / 2.0)

    def dphi_r(self, r):
        return -self.c * r * self.phi_r(r)


class ExpLambdaHarmonicPotential(Potential):
    """Raw Laplacian eigenfunction kernel p(r) e^{-sqrt(lam) r} / r^(d-2).

    Singular on the diagonal; ``diagonal()`` still reports 1.0, the normalized
    limit of the bounded tabulated variant, which is what the quadratic loss
    uses for the self-terms.
    """

    manifold = EUCLIDEAN
    raw_singular = True

    def __init__(self, lam=1.0, d=3):
        self.radial = harmonic.lambda_harmonic_poly(d, lam)
        self.lam = float(lam)
        self.d = int(d)
        self.name = f"explh:lambda={lam:g},d={d}"

    def diagonal(self):
        return 1.0

    def phi_r(self, r):
        return self.radial.phi(r)

    def dphi_r(self, r):
        return self.radial.phi_deriv(r)


class PolynomialPotential(Potential):
    """rho^l on the sphere, the kernel of the degree-l orthonormal Hermite."""

    manifold = SPHERE

    def __init__(self, l):
        if l < 1 or l != int(l):
            raise ValueError("l must be an integer >= 1")
        self.l = int(l)
        self.name = f"poly:l={self.l}"

    def phi_rho(self, rho):
        return np.asarray(rho) ** self.l

    def dphi_rho(self, rho):
        return self.l * np.asarray(rho) ** (self.l - 1)


class HermiteDualPotential(Potential):
    """Kernel sum_i c_i rho^i / Z on the sphere, Z = sum_i c_i."""

    manifold = SPHERE

    def __init__(self, taylor_coeffs):
        c = np.asarray(taylor_coeffs, dtype=float)
        activation_from_potential_taylor(c)  # validates non-negativity
        z = float(c.sum())
        if z <= 0:
            raise ValueError("need at least one positive coefficient")
        self.taylor = c
        self.z = z
        self.name = "hermite-dual"

    def phi_rho(self, rho):
        return np.polynomial.polynomial.polyval(rho, self.taylor) / self.z

    def dphi_rho(self, rho):
        d = np.polynomial.polynomial.polyder(self.taylor)
        return np.polynomial.polynomial.polyval(rho, d) / self.z


class AlmostHarmonicPotential(Potential):
    """Bounded tabulated kernel, exact Laplacian eigenfunction for r >= eps."""

    manifold = EUCLIDEAN

    def __init__(self, table: harmonic.TabulatedPotential):
        self.table = table
        self.eps = table.eps
        self.lam = table.lam
        self.d = table.d
        self.name = f"almost:eps={table.eps:g},lambda={table.lam:g},d={table.d}"

    def phi_r(self, r):
        return self.table.value(r)

    def dphi_r(self, r):
        return self.table.deriv(r)

    def phi_and_dphi(self, r):
        return self.table.value_and_deriv(r)


class LaplaceExpPotential(Potential):
    """exp(-sqrt(lam) r); the one-dimensional Laplacian eigenfunction kernel."""

    manifold = EUCLIDEAN

    def __init__(self, lam=1.0):
        self.lam = float(lam)
        self.s = float(np.sqrt(lam))
        self.name = f"exp1d:lambda={lam:g}"

    def phi_r(self, r):
        return np.exp(-self.s * np.asarray(r))

    def dphi_r(self, r):
        return -self.s * np.exp(-self.s * np.asarray(r))


class CoulombPotential(Potential):
    """Diagnostic harmonic kernel r^(2-d) (d != 2); not realizable."""

    manifold = EUCLIDEAN
    finite_diagonal = False
    raw_singular = True

    def __init__(self, d=3):
        if d == 2:
            raise UnsupportedDimension("use the log kernel for d = 2")
        self.d = int(d)
        self.name = f"coulomb:d={d}"

    def phi_r(self, r):
        return np.asarray(r, dtype=float) ** (2 - self.d)

    def dphi_r(self, r):
        return (2 - self.d) * np.asarray(r, dtype=float) ** (1 - self.d)


class LogPotential(Potential):
    """Diagnostic harmonic kernel -log r in two dimensions; not realizable."""

    manifold = EUCLIDEAN
    finite_diagonal = False
    raw_singular = True

    def __init__(self):
        self.d = 2
        self.name = "log"

    def phi_r(self, r):
        return -np.log(np.asarray(r, dtype=float))

    def dphi_r(self, r):
        return -1.0 / np.asarray(r, dtype=float)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


class Activation:
    """Pointwise activation sigma(x, weight). ``eval`` is vectorized over a
    sample batch of shape (n, d). Activations carrying an exp(|x|^2/4) factor
    also provide ``log_eval`` so products can be formed without overflow."""

    name = "activation"
    manifold = EUCLIDEAN
    has_log_eval = False

    def __init__(self, d):
        self.d = int(d)


class SignActivation(Activation):
    name = "sign"
    manifold = SPHERE

    def eval(self, x, weight):
        return np.sign(x @ weight)


class HermiteActivation(Activation):
    """sum_i a_i h_i(weight . x) with orthonormal probabilists' Hermites."""

    manifold = SPHERE

    def __init__(self, coeffs, d):
        super().__init__(d)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.name = "hermite"

    def eval(self, x, weight):
        return hermite_eval(self.coeffs, x @ weight)


class GaussianActivation(Activation):
    """(4c)^{d/4} e^{|x|^2/4} e^{-c|x-w|^2}; kernel exp(-c r^2 / 2)."""

    has_log_eval = True

    def __init__(self, c=1.0, d=1):
        super().__init__(d)
        self.c = float(c)
        self.name = f"gauss:c={c:g}"

    def log_eval(self, x, weight):
        sq = np.sum(x * x, axis=-1)
        diff = x - weight
        return (
            self.d / 4.0 * np.log(4.0 * self.c)
            + sq / 4.0
            - self.c * np.sum(diff * diff, axis=-1)
        )

    def eval(self, x, weight):
        return np.exp(self.log_eval(x, weight))


class BesselK0Activation(Activation):
    """(2/pi)^{3/4} e^{x^2/4} K_0(|x - w|) in one dimension; kernel e^{-r}."""

    has_log_eval = True

    def __init__(self):
        super().__init__(1)
        self.name = "bessel0"

    def log_eval(self, x, weight):
        r = np.abs(x[:, 0] - weight[0])
        sq = x[:, 0] * x[:, 0]
        # log K_0 via the exponentially scaled form to avoid underflow
        return 0.75 * np.log(2.0 / np.pi) + sq / 4.0 + np.log(k0e(r)) - r

    def eval(self, x, weight):
        return np.exp(self.log_eval(x, weight))


class BesselK1RadialActivation(Activation):
    """(2 pi)^{3/4} pi^{-3/2} e^{|x|^2/4} K_1(r)/r in three dimensions.

    Kernel e^{-r}/r: the raw eigenfunction for lam = 1, d = 3. The product
    estimator has infinite variance (the integrable 1/r^2 spike), so reported
    standard errors for this activation are not trustworthy; the pair is
    verified through the Fourier certificate instead.
    """

    has_log_eval = True

    def __init__(self):
        super().__init__(3)
        self.name = "bessel1"

    def log_eval(self, x, weight):
        diff = x - weight
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        sq = np.sum(x * x, axis=-1)
        const = 0.75 * np.log(2.0 * np.pi) - 1.5 * np.log(np.pi)
        return const + sq / 4.0 + np.log(k1e(r)) - r - np.log(r)

    def eval(self, x, weight):
        return np.exp(self.log_eval(x, weight))


# ---------------------------------------------------------------------------
# kernel evaluation with contract checks
# ---------------------------------------------------------------------------


def _check_points(pot, theta, w):
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    if theta.shape != w.shape or theta.ndim != 1:
        raise DimensionMismatch(f"shapes {theta.shape} vs {w.shape}")
    d = getattr(pot, "d", None)
    if d is not None and theta.shape[0] != d:
        raise DimensionMismatch(f"{pot.name} expects dimension {d}, got {theta.shape[0]}")
    if pot.manifold == SPHERE:
        for v in (theta, w):
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise OffManifold(f"|v| = {np.linalg.norm(v)} != 1")
    return theta, w


def eval_potential(pot, theta, w):
    """Normalized kernel value with manifold checks.

    Kernels with a singular diagonal (the raw eigenfunction form, Coulomb,
    log) refuse zero separation.
    """
    theta, w = _check_points(pot, theta, w)
    if pot.manifold == EUCLIDEAN:
        r = float(np.linalg.norm(theta - w))
        if r < _COLLISION_GUARD:
            if pot.raw_singular:
                raise SingularDiagonal(f"{pot.name} diverges at zero separation")
            return float(pot.diagonal()) if r == 0.0 else float(pot.phi_r(r))
        return float(pot.phi_r(r))
    return float(pot.phi_rho(float(np.dot(theta, w))))


# ---------------------------------------------------------------------------
# Monte-Carlo duality check
# ---------------------------------------------------------------------------

_CHUNK = 1 << 17


def empirical_dual(act, theta, w, n, seed, paired=None):
    """Monte-Carlo estimate of E[sigma(X, theta) sigma(X, w)], X ~ N(0, I_d).

    Returns (estimate, standard error). Deterministic for a fixed seed: each
    fixed-size chunk draws from its own counter-based stream keyed by
    (seed, chunk index) and partial sums are reduced in chunk order, so the
    result does not depend on how chunks are distributed over workers.

    ``paired`` selects the product form exp(log s1 + log s2) that keeps
    exp(|x|^2/4)-type activations finite; defaults to using it whenever the
    activation provides ``log_eval``. With paired=False an overflowing sample
    raises NonFiniteSample.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(w, dtype=float)
    if theta.shape != (act.d,) or w.shape != (act.d,):
        raise DimensionMismatch(f"weights must have shape ({act.d},)")
    if act.manifold == SPHERE:
        for v in (theta, w):
            if abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise OffManifold("sphere activation needs unit weights")
    if paired is None:
        paired = act.has_log_eval

    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_idx = 0
    while done < n:
        m = min(_CHUNK, n - done)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, chunk_idx], dtype=np.uint64))
        )
        x = rng.standard_normal((m, act.d))
        with np.errstate(over="ignore", invalid="ignore"):
            if paired:
                vals = np.exp(act.log_eval(x, theta) + act.log_eval(x, w))
            else:
                vals = act.eval(x, theta) * act.eval(x, w)
        if not np.all(np.isfinite(vals)):
            raise NonFiniteSample(
                f"{act.name}: non-finite sample; use the paired product form"
            )
        total += float(vals.sum())
        total_sq += float(np.square(vals).sum())
        done += m
        chunk_idx += 1
    mean = total / n
    var = max(0.0, (total_sq - n * mean * mean) / max(1, n - 1))
    return mean, float(np.sqrt(var / n))


# ---------------------------------------------------------------------------
# radial Fourier realizability certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialCertificate:
    realizable: bool
    min_transform: float
    omega_min: float
    tol: float

    def __bool__(self):
        return self.realizable


def realizability_certificate_radial(r, values, d, tol=1e-6, omega=None, n_omega=2048):
    """Sign check of the d-dimensional radial Fourier transform on a frequency grid.

    Advisory: Realizable means the trapezoid transform never dips below -tol.
    Supports d = 1 (cosine transform) and d = 3 (sine transform / omega).
    """
    r = np.asarray(r, dtype=float)
    values = np.asarray(values, dtype=float)
    if r.ndim != 1 or r.shape != values.shape or r.size < 8:
        raise DimensionMismatch("need matching 1-d arrays of at least 8 samples")
    h = r[1] - r[0]
    if not np.allclose(np.diff(r), h, rtol=1e-8):
        raise GridTooCoarse("radial grid must be uniform")
    if d not in (1, 3):
        raise UnsupportedDimension(f"radial transform implemented for d in {{1, 3}}, got {d}")
    peak = np.max(np.abs(values))
    if abs(values[-1]) > tol * peak:
        raise GridTooCoarse(
            f"samples have not decayed at the boundary: |phi(r_max)| = {abs(values[-1]):g}"
        )
    nyquist = np.pi / h
    if omega is None:
        omega = np.linspace(0.0, nyquist / 2.0, n_omega)
    else:
        omega = np.asarray(omega, dtype=float)
        if np.max(omega) > nyquist:
            raise GridTooCoarse(
                f"requested frequency {np.max(omega):g} exceeds the Nyquist limit {nyquist:g}"
            )
    transform = np.empty_like(omega)
    for i, om in enumerate(omega):
        if d == 1:
            transform[i] = 2.0 * np.trapezoid(values * np.cos(om * r), r)
        elif om == 0.0:
            transform[i] = 4.0 * np.pi * np.trapezoid(r * r * values, r)
        else:
            transform[i] = 4.0 * np.pi / om * np.trapezoid(r * values * np.sin(om * r), r)
    idx = int(np.argmin(transform))
    return RadialCertificate(
        realizable=bool(transform[idx] >= -tol),
        min_transform=float(transform[idx]),
        omega_min=float(omega[idx]),
        tol=tol,
    )


# ---------------------------------------------------------------------------
# string registry
# ---------------------------------------------------------------------------


def _parse_args(argstr):
    out = {}
    if argstr:
        for part in argstr.split(","):
            key, _, val = part.partition("=")
            out[key.strip()] = float(val)
    return out


def parse_potential(identifier, table_loader=None):
    """Build a kernel from its string id.

    Ids: "sign", "gauss:c=1.0", "explh:lambda=1,d=3", "poly:l=3",
    "almost:eps=0.1,lambda=1,d=3", "exp1d:lambda=1", "coulomb:d=3", "log".
    ``table_loader(d, eps, lam)`` supplies the tabulation for "almost" kinds
    (defaults to the on-disk cache).
    """
    head, _, rest = identifier.partition(":")
    args = _parse_args(rest)
    if head == "sign":
        return SignPotential()
    if head == "gauss":
        return GaussianPotential(c=args.get("c", 1.0))
    if head == "explh":
        return ExpLambdaHarmonicPotential(lam=args.get("lambda", 1.0), d=int(args.get("d", 3)))
    if head == "poly":
        return PolynomialPotential(l=int(args.get("l", 1)))
    if head == "almost":
        loader = table_loader or harmonic.load_or_build_almost_harmonic
        table = loader(
            int(args.get("d", 3)), args.get("eps", 0.1), args.get("lambda", 1.0)
        )
        return AlmostHarmonicPotential(table)
    if head == "exp1d":
        return LaplaceExpPotential(lam=args.get("lambda", 1.0))
    if head == "coulomb":
        return CoulombPotential(d=int(args.get("d", 3)))
    if head == "log":
        return LogPotential()
    raise ValueError(f"unknown potential id {identifier!r}")


def built_in_pairs(d=3):
    """(activation, kernel) pairs whose duality is checked empirically."""
    pairs = [
        (SignActivation(d), SignPotential()),
        (GaussianActivation(c=1.0, d=d), GaussianPotential(c=1.0)),
        (BesselK0Activation(), LaplaceExpPotential(lam=1.0)),
    ]
    for l in (1, 2, 3):
        coeffs = np.zeros(l + 1)
        coeffs[l] = 1.0
        pairs.append((HermiteActivation(coeffs, d), PolynomialPotential(l)))
    return pairs
