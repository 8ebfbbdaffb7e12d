"""Radial eigenfunctions of the Laplacian and their bounded tabulated approximations.

The centerpiece kernel family solves ``laplacian(phi) = lam * phi`` away from the
origin with the closed form ``phi(r) = p(r) * exp(-sqrt(lam)*r) / r**(d-2)``.
Because that form blows up at r = 0 it cannot serve as a similarity kernel
directly; :func:`build_almost_harmonic` replaces it below a matching radius
``eps`` by a positive combination of ball-overlap kernels, which keeps the
eigenrelation for ``r >= eps`` while staying smooth and bounded at the origin.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    EvenDimension,
    QuadratureNotConverged,
    TooCloseToOrigin,
    UnsupportedDimension,
)

SCHEMA_VERSION = 1

# ---------------------------------------------------------------------------
# polynomial helpers (ascending coefficient arrays)
# ---------------------------------------------------------------------------


def _poly_eval(coeffs, r):
    """Horner evaluation; works for numpy arrays and plain scalars."""
    acc = coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * r + c
    return acc


def _poly_deriv(coeffs):
    return np.array([i * c for i, c in enumerate(coeffs)][1:] or [0.0])


def _shift_poly(coeffs, m, s):
    """Coefficients of q where d/dr [p(r) e^{-sr} r^{-m}] = -q(r) e^{-sr} r^{-(m+1)}.

    q = (m + s*r) * p - r * p', degree deg(p) + 1, non-negative whenever p is
    and deg(p) < m.
    """
    p = np.asarray(coeffs, dtype=float)
    q = np.zeros(len(p) + 1)
    q[: len(p)] += m * p
    q[1 : len(p) + 1] += s * p
    for i in range(1, len(p)):
        q[i] -= i * p[i]
    return q


# ---------------------------------------------------------------------------
# adaptive Simpson quadrature with interval-halving convergence control
# ---------------------------------------------------------------------------


def simpson_refine(f, a, b, tol=1e-10, n0=64, max_doublings=16):
    """Composite Simpson on [a, b], doubling the panel count until two
    successive estimates agree within ``tol`` (absolute, componentwise).

    ``f`` maps a node array of shape (n,) to values of shape (..., n).
    Returns the refined estimate; raises QuadratureNotConverged otherwise.
    """
    n = n0
    prev = None
    for _ in range(max_doublings):
        x = np.linspace(a, b, n + 1)
        y = np.asarray(f(x), dtype=float)
        h = (b - a) / n
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        est = (h / 3.0) * (y @ w)
        if prev is not None and np.max(np.abs(est - prev)) <= tol:
            # Richardson correction: Simpson error shrinks 16x per halving.
            return est + (est - prev) / 15.0
        prev = est
        n *= 2
    raise QuadratureNotConverged(
        f"Simpson on [{a}, {b}] did not reach tol={tol} within {max_doublings} doublings"
    )


# ---------------------------------------------------------------------------
# the exact radial eigenfunction family
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LambdaHarmonicRadial:
    """phi(r) = p(r) exp(-sqrt(lam) r) / r^(d-2) with laplacian(phi) = lam*phi for r > 0."""

    d: int
    lam: float
    coeffs: np.ndarray  # ascending, coeffs[0] == 1, length (d-3)/2 + 1

    @property
    def s(self):
        return float(np.sqrt(self.lam))

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return _poly_eval(self.coeffs, r) * np.exp(-self.s * r) / r ** (self.d - 2)

    def phi_deriv(self, r):
        r = np.asarray(r, dtype=float)
        q = _shift_poly(self.coeffs, self.d - 2, self.s)
        return -_poly_eval(q, r) * np.exp(-self.s * r) / r ** (self.d - 1)

    def nth_deriv_poly(self, n):
        """Coefficients q_n with phi^(n)(r) = (-1)^n q_n(r) e^{-s r} / r^{d-2+n}."""
        q = np.asarray(self.coeffs, dtype=float)
        for j in range(n):
            q = _shift_poly(q, self.d - 2 + j, self.s)
        return q

    def ode_residual_coeffs(self):
        """Coefficients of r p'' - (d-3 + 2 s r) p' + s (d-3) p; zero iff eigenrelation holds."""
        p = np.asarray(self.coeffs, dtype=float)
        dp = _poly_deriv(p)
        ddp = _poly_deriv(dp)
        n = len(p) + 1
        res = np.zeros(n)
        res[1 : 1 + len(ddp)] += ddp  # r * p''
        res[: len(dp)] -= (self.d - 3) * dp
        res[1 : 1 + len(dp)] -= 2.0 * self.s * dp  # 2 s r p'
        res[: len(p)] += self.s * (self.d - 3) * p
        return res


def lambda_harmonic_poly(d, lam):
    """Build the degree-(d-3)/2 polynomial factor by the coefficient recurrence.

    a_{i+1} (i+1)(i - (d-3)) = a_i sqrt(lam) (2i - (d-3)), a_0 = 1.
    """
    if d % 2 == 0:
        raise EvenDimension(f"odd dimension required, got d={d}")
    if d < 3:
        raise UnsupportedDimension(f"d >= 3 required, got d={d}")
    s = float(np.sqrt(lam))
    k = (d - 3) // 2
    a = np.zeros(k + 1)
    a[0] = 1.0
    for i in range(k):
        a[i + 1] = a[i] * s * (2 * i - (d - 3)) / ((i + 1) * (i - (d - 3)))
    return LambdaHarmonicRadial(d=d, lam=float(lam), coeffs=a)


def radial_laplacian(f, r, d, h):
    """Central-difference estimate of f''(r) + (d-1)/r * f'(r), error O(h^2).

    Plain arithmetic only, so ``f`` may return any numeric type supporting
    +,-,*,/ (floats, mpmath.mpf, ...).
    """
    if r <= 2 * h:
        raise TooCloseToOrigin(f"need r > 2h, got r={r}, h={h}")
    fp = f(r + h)
    fm = f(r - h)
    f0 = f(r)
    second = (fp - 2 * f0 + fm) / (h * h)
    first = (fp - fm) / (2 * h)
    return second + (d - 1) * first / r


# ---------------------------------------------------------------------------
# ball-overlap base kernel
# ---------------------------------------------------------------------------


def sphere_overlap_potential(t, d, r):
    """Overlap kernel of two radius-t/2 ball indicators at center distance r.

    Returns (value, derivative) with value(0) = 1; value vanishes for r >= t.
    Computed in the scale-free variable u = 2x/t so the quadrature tolerance
    is independent of t.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    power = (d - 1) / 2.0

    def integrand(u):
        return np.clip(1.0 - u * u, 0.0, None) ** power

    norm = simpson_refine(integrand, 0.0, 1.0)
    r_arr = np.asarray(r, dtype=float)
    scalar = r_arr.ndim == 0
    r_arr = np.atleast_1d(r_arr)
    value = np.zeros_like(r_arr)
    deriv = np.zeros_like(r_arr)
    inside = r_arr < t
    for idx in np.nonzero(inside)[0]:
        u0 = r_arr[idx] / t
        value[idx] = simpson_refine(integrand, u0, 1.0) / norm
        deriv[idx] = -((1.0 - u0 * u0) ** power) / (t * norm)
    if scalar:
        return float(value[0]), float(deriv[0])
    return value, deriv


# ---------------------------------------------------------------------------
# the bounded construction: exact eigenfunction outside eps, smooth inside
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    n: int = 4096
    inner_factor: float = 0.01  # first positive knot at eps * inner_factor
    r_max: float = 20.0

    def knots(self, eps):
        pos = np.geomspace(eps * self.inner_factor, self.r_max, self.n)
        # eps must be a knot: the kernel is a Laplacian eigenfunction only on
        # one side of it, and an interpolation interval straddling the seam
        # would blend the two regimes.
        spacing = eps * (np.log(self.r_max / (eps * self.inner_factor)) / (self.n - 1))
        pos = pos[np.abs(pos - eps) > 0.25 * spacing]
        return np.concatenate([[0.0], np.sort(np.append(pos, eps))])

    def as_dict(self):
        return {"n": self.n, "inner_factor": self.inner_factor, "r_max": self.r_max}


def _base_value(x, eps, r):
    """Matched ball-overlap integral kernel value at r <= eps, diameter parameter x >= eps.

    Closed form obtained by twice integrating the piecewise-linear profile
    {(x-eps)/eps * r on [0,eps], x - r on [eps,x], 0 beyond} down from r = x.
    """
    a = x - eps
    return a**3 / 6.0 + a * a * (eps - r) / 2.0 + a / (2.0 * eps) * (
        eps * eps * (eps - r) - (eps**3 - r**3) / 3.0
    )


def _base_deriv(x, eps, r):
    a = x - eps
    return -(a * (eps * eps - r * r) / (2.0 * eps) + a * a / 2.0)


@dataclass
class TabulatedPotential:
    """Radial kernel tabulation: eigenfunction tail, smooth bounded core.

    Values are normalized so value(0) = 1; ``z`` is the un-normalized value at
    the origin. Evaluation interpolates log(value) against log(r) with a cubic
    Hermite using the tabulated exact slopes, falls back to the closed form
    beyond the last knot, and extends constantly below the first positive knot.
    """

    d: int
    eps: float
    lam: float
    r_grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    z: float
    p_coeffs: np.ndarray
    grid_spec: GridSpec
    version: int = SCHEMA_VERSION
    _x: np.ndarray = field(default=None, repr=False, compare=False)
    _c: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        r = self.r_grid[1:]
        v = self.values[1:]
        x = np.log(r)
        y = np.log(v)
        # slope in log-log space: d log(v) / d log(r) = r * v' / v
        dydx = r * self.derivs[1:] / v
        coeffs = self._hermite_coeffs(x, y, dydx)
        probe_t = 0.5 * np.diff(x)
        mid = ((coeffs[3, :] * probe_t + coeffs[2, :]) * probe_t + coeffs[1, :]) * probe_t + coeffs[0, :]
        if np.any(y[:-1] - mid < -1e-12) or np.any(mid - y[1:] < -1e-12):
            # exact-slope Hermite overshot somewhere; fall back to the
            # shape-preserving slopes
            dydx = PchipInterpolator(x, y).derivative()(x)
            coeffs = self._hermite_coeffs(x, y, dydx)
        self._x = x
        self._c = coeffs

    @staticmethod
    def _hermite_coeffs(x, y, m):
        """Per-interval cubic coefficients (ascending in t = x - x_k)."""
        h = np.diff(x)
        dy = np.diff(y) / h
        c0 = y[:-1]
        c1 = m[:-1]
        c2 = (3.0 * dy - 2.0 * m[:-1] - m[1:]) / h
        c3 = (m[:-1] + m[1:] - 2.0 * dy) / (h * h)
        return np.stack([c0, c1, c2, c3])

    def _interp(self, x):
        idx = self._x.searchsorted(x, side="right") - 1
        idx = np.minimum(idx, self._x.size - 2)
        t = x - self._x[idx]
        c0, c1, c2, c3 = self._c[:, idx]
        y = ((c3 * t + c2) * t + c1) * t + c0
        dy = (3.0 * c3 * t + 2.0 * c2) * t + c1
        return y, dy

    def value_and_deriv(self, r):
        """(value, d value / d r) in one interpolation pass."""
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        shape = r_arr.shape
        r_flat = r_arr.ravel()
        val = np.empty_like(r_flat)
        der = np.zeros_like(r_flat)
        r_lo, r_hi = self.r_grid[1], self.r_grid[-1]
        lo = r_flat < r_lo
        hi = r_flat > r_hi
        mid = ~lo & ~hi
        if lo.any():
            val[lo] = self.values[0]
        if mid.any():
            rm = r_flat[mid]
            y, dy = self._interp(np.log(rm))
            v = np.exp(y)
            val[mid] = v
            der[mid] = v * dy / rm
        if hi.any():
            val[hi] = self.radial.phi(r_flat[hi]) / self.z
            der[hi] = self.radial.phi_deriv(r_flat[hi]) / self.z
        if np.ndim(r) == 0:
            return float(val[0]), float(der[0])
        return val.reshape(shape), der.reshape(shape)

    # -- evaluation --------------------------------------------------------

    @property
    def radial(self):
        return LambdaHarmonicRadial(d=self.d, lam=self.lam, coeffs=self.p_coeffs)

    def value(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        shape = r_arr.shape
        r_flat = r_arr.ravel()
        out = np.empty_like(r_flat)
        r_lo, r_hi = self.r_grid[1], self.r_grid[-1]
        lo = r_flat < r_lo
        hi = r_flat > r_hi
        mid = ~lo & ~hi
        out[lo] = self.values[0]
        if mid.any():
            y, _ = self._interp(np.log(r_flat[mid]))
            out[mid] = np.exp(y)
        if hi.any():
            out[hi] = self.radial.phi(r_flat[hi]) / self.z
        if np.ndim(r) == 0:
            return float(out[0])
        return out.reshape(shape)

    def deriv(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        shape = r_arr.shape
        r_flat = r_arr.ravel()
        out = np.zeros_like(r_flat)
        r_lo, r_hi = self.r_grid[1], self.r_grid[-1]
        hi = r_flat > r_hi
        mid = (r_flat >= r_lo) & ~hi
        if mid.any():
            rm = r_flat[mid]
            y, dy = self._interp(np.log(rm))
            out[mid] = np.exp(y) * dy / rm
        if hi.any():
            out[hi] = self.radial.phi_deriv(r_flat[hi]) / self.z
        if np.ndim(r) == 0:
            return float(out[0])
        return out.reshape(shape)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        return {
            "schema_version": self.version,
            "d": self.d,
            "eps": self.eps,
            "lam": self.lam,
            "z": self.z,
            "p_coeffs": self.p_coeffs.tolist(),
            "grid_spec": self.grid_spec.as_dict(),
            "r_grid": self.r_grid.tolist(),
            "values": self.values.tolist(),
            "derivs": self.derivs.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            d=int(data["d"]),
            eps=float(data["eps"]),
            lam=float(data["lam"]),
            r_grid=np.asarray(data["r_grid"], dtype=float),
            values=np.asarray(data["values"], dtype=float),
            derivs=np.asarray(data["derivs"], dtype=float),
            z=float(data["z"]),
            p_coeffs=np.asarray(data["p_coeffs"], dtype=float),
            grid_spec=GridSpec(**data["grid_spec"]),
            version=int(data["schema_version"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _simpson_nodes(a, b, n):
    x = np.linspace(a, b, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return x, w * (b - a) / (3.0 * n)


def build_almost_harmonic(d, eps, lam=1.0, grid=None, tol=1e-10):
    """Tabulate the bounded kernel that is an exact Laplacian eigenfunction for r >= eps.

    Inside [0, eps) the kernel is the weight-(d+1)-derivative mixture of
    matched ball-overlap bases; outside it coincides with
    p(r) e^{-sqrt(lam) r} / r^(d-2) up to the common normalization z.
    """
    if d % 4 != 3:
        raise UnsupportedDimension(f"construction requires d = 3 mod 4, got d={d}")
    if d != 3:
        raise UnsupportedDimension(
            "construction weight uses the closed-form fourth derivative; only d=3 is tabulated"
        )
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    grid = grid or GridSpec()
    radial = lambda_harmonic_poly(d, lam)
    s = radial.s
    q_weight = radial.nth_deriv_poly(d + 1)  # phi^(d+1) = q e^{-sr}/r^{2d-1}, positive

    def weight(x):
        return _poly_eval(q_weight, x) * np.exp(-s * x) / x ** (2 * d - 1)

    # Truncate where the whole integrand (weight times the cubically growing
    # base value) is negligible; thresholding the weight alone would drop
    # O(1e-4) of tail mass.
    def tail_envelope(x):
        return weight(x) * (1.0 + (x - eps) ** 3 / 6.0)

    g_eps = tail_envelope(eps)
    x_hi = 2.0 * eps
    while tail_envelope(x_hi) > 1e-16 * g_eps:
        x_hi *= 2.0
    knots = grid.knots(eps)
    below = knots[knots < eps]  # includes r = 0

    # The weight spikes like x^-(2d-1) at eps, so integrate in u = log x where
    # the integrand is smooth. Panel count is established on cheap probe rows
    # (r = 0 and the seam r = eps, which bracket the integrand shapes), then
    # the full knot matrix is evaluated once at that resolution.
    u_lo, u_hi = np.log(eps), np.log(x_hi)

    def probe(u):
        x = np.exp(u)
        wx = weight(x) * x
        return np.stack([wx * _base_value(x, eps, 0.0), wx * _base_value(x, eps, eps)])

    n = 512
    prev = None
    for _ in range(8):
        u, wq = _simpson_nodes(u_lo, u_hi, n)
        est = probe(u) @ wq
        if prev is not None and np.max(np.abs(est - prev)) <= tol:
            break
        prev = est
        n *= 2
    else:
        raise QuadratureNotConverged("construction integral did not converge")

    u, wq = _simpson_nodes(u_lo, u_hi, n)
    x = np.exp(u)
    wx = weight(x) * x
    vals_below = (wx[None, :] * _base_value(x[None, :], eps, below[:, None])) @ wq
    derivs_below = (wx[None, :] * _base_deriv(x[None, :], eps, below[:, None])) @ wq

    above = knots[knots >= eps]
    vals_above = radial.phi(above)
    derivs_above = radial.phi_deriv(above)

    # seam consistency: the quadrature must reproduce the closed form at eps
    seam = (wx * _base_value(x, eps, eps)) @ wq
    if abs(seam - radial.phi(eps)) > 1e-6 * abs(radial.phi(eps)):
        raise QuadratureNotConverged(
            f"construction seam mismatch at eps: {seam} vs {radial.phi(eps)}"
        )

    z = float(vals_below[0])
    values = np.concatenate([vals_below, vals_above]) / z
    derivs = np.concatenate([derivs_below, derivs_above]) / z
    if np.any(np.diff(values) > 1e-12) or np.any(derivs > 1e-12):
        raise QuadratureNotConverged("tabulated kernel lost monotonicity")
    return TabulatedPotential(
        d=d,
        eps=float(eps),
        lam=float(lam),
        r_grid=knots,
        values=values,
        derivs=derivs,
        z=z,
        p_coeffs=radial.coeffs,
        grid_spec=grid,
    )


# ---------------------------------------------------------------------------
# construction cache
# ---------------------------------------------------------------------------


def cache_dir():
    return os.environ.get(
        "CHARGEFLOW_CACHE_DIR", os.path.join(os.path.expanduser("~"), ".cache", "chargeflow")
    )


def cache_key(d, eps, lam, grid):
    blob = json.dumps(
        {"d": d, "eps": eps, "lam": lam, "grid": grid.as_dict(), "version": SCHEMA_VERSION},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_or_build_almost_harmonic(d, eps, lam=1.0, grid=None, directory=None):
    """Fetch the tabulation from the on-disk cache, building and storing on miss."""
    grid = grid or GridSpec()
    directory = directory or cache_dir()
    path = os.path.join(directory, f"almost_{cache_key(d, eps, lam, grid)}.json")
    if os.path.exists(path):
        return TabulatedPotential.load(path)
    tab = build_almost_harmonic(d, eps, lam, grid)
    os.makedirs(directory, exist_ok=True)
    tmp = path + ".tmp"
    tab.save(tmp)
    os.replace(tmp, path)
    return tab
