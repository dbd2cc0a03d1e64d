"""Closed plane curves and their pointwise geometry.

A curve is stored as ``N`` samples ``f(theta_j)`` with ``theta_j = j / N``.
All parameter derivatives are spectral (FFT) unless the 4th-order
finite-difference route is requested; that route exists so the spectral
numbers can be checked against something independent.

Sign conventions: the normal is the tangent rotated by +pi/2, which is
the inward normal for a counter-clockwise curve, and curvature is
positive on convex counter-clockwise curves.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import math
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import _spectral as sp

__all__ = [
    "CurveError",
    "ClosedCurve",
    "GeometryCache",
    "geometry_of",
    "signed_area",
    "polygon_area",
    "rotation_number",
    "turning_number",
    "is_strictly_convex",
    "is_simple",
    "arclength_spacing",
    "resample_uniform_arclength",
    "make_curve",
    "transform",
    "read_curve_csv",
    "write_curve_csv",
]


class CurveError(ValueError):
    """Raised for invalid or degenerate curve data."""


def _is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclasses.dataclass(frozen=True, eq=False)
class ClosedCurve:
    """``N`` samples of a closed plane curve on a uniform parameter grid.

    Parameters
    ----------
    points : array_like, shape (N, 2)
        Samples ``f(j / N)``; the curve closes from the last sample back
        to the first. ``N`` must be a power of two, at least 16.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise CurveError(f"points must have shape (N, 2), got {pts.shape}")
        n = pts.shape[0]
        if n < 16 or not _is_power_of_two(n):
            raise CurveError(f"sample count must be a power of two >= 16, got {n}")
        if not np.all(np.isfinite(pts)):
            bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
            raise CurveError(f"non-finite sample at index {bad}")
        gaps = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        j = int(np.argmin(gaps))
        if not gaps[j] > 0.0:
            raise CurveError(
                f"repeated point: samples {j} and {(j + 1) % n} coincide")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def z(self) -> np.ndarray:
        """Samples as complex numbers ``x + iy``."""
        return self.points[:, 0] + 1j * self.points[:, 1]

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "ClosedCurve":
        z = np.asarray(z)
        return cls(np.column_stack([z.real, z.imag]))

    def reversed(self) -> "ClosedCurve":
        """Same image traversed the other way, starting at the same point."""
        return ClosedCurve(np.roll(self.points[::-1], 1, axis=0))

    @functools.cached_property
    def geometry(self) -> "GeometryCache":
        return geometry_of(self)


@dataclasses.dataclass(frozen=True, eq=False)
class GeometryCache:
    """Derived fields of one curve.

    ``speed`` is ``|df/dtheta|`` and ``weights`` are the trapezoidal
    weights for integrals in arclength, so ``integrate(g) = sum(g * weights)``.
    """

    L: float
    A: float
    s: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    kappa: np.ndarray
    kappa_dev: np.ndarray
    speed: np.ndarray
    weights: np.ndarray
    method: str = "spectral"
    _dev_derivs: list = dataclasses.field(default_factory=list, repr=False)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values * self.weights))

    def kappa_dev_derivative(self, order: int) -> np.ndarray:
        """``d^order kappa_dev / ds^order``, memoised."""
        if not self._dev_derivs:
            self._dev_derivs.append(self.kappa_dev)
        while len(self._dev_derivs) <= order:
            self._dev_derivs.append(self.d_s(self._dev_derivs[-1], 1))
        return self._dev_derivs[order]

    def d_s(self, values: np.ndarray, order: int = 1) -> np.ndarray:
        """Arclength derivative via the chain rule ``d/ds = (1/|f'|) d/dtheta``."""
        out = np.asarray(values, dtype=float)
        for _ in range(order):
            if self.method == "spectral":
                out = sp.d_theta(out, 1, NOISE_FLOOR) / self.speed
            else:
                out = sp.fd_d1(out) / self.speed
        return out


# Relative size below which Fourier coefficients are treated as rounding
# noise before differentiating (spectral route only).
NOISE_FLOOR = 1e-13


def _parameter_derivatives(z: np.ndarray, method: str):
    if method == "spectral":
        scale = float(np.sqrt(np.mean(np.abs(z - z.mean()) ** 2)))
        zt, ztt = sp.derivatives(z, (1, 2), NOISE_FLOOR, scale)
        return zt, ztt
    if method == "fd":
        return sp.fd_d1(z), sp.fd_d2(z)
    raise ValueError(f"unknown differentiation method {method!r}")


def geometry_of(curve: ClosedCurve, method: str = "spectral") -> GeometryCache:
    """Length, area, frame and curvature of ``curve``.

    Parameters
    ----------
    curve : ClosedCurve
    method : {"spectral", "fd"}
        Parameter derivatives by FFT, or by 4th-order central differences.

    Raises
    ------
    CurveError
        If the parametrisation speed vanishes somewhere.
    """
    z = curve.z
    n = curve.n
    zt, ztt = _parameter_derivatives(z, method)
    speed = np.abs(zt)
    j = int(np.argmin(speed))
    if not speed[j] > 1e-12 * max(float(np.max(speed)), 1e-300):
        raise CurveError(f"degenerate curve: zero speed at sample {j}")
    L = float(np.mean(speed))
    tan = zt / speed
    nrm = 1j * tan
    kappa = np.imag(np.conj(zt) * ztt) / speed**3
    weights = speed / n
    if method == "spectral":
        s = L * np.arange(n) / n + sp.antiderivative(speed)
    else:
        s = np.concatenate([[0.0], np.cumsum(0.5 * (weights + np.roll(weights, -1)))[:-1]])
    mean_kappa = float(np.sum(kappa * weights)) / L
    kappa_dev = kappa - mean_kappa
    if method == "spectral":
        kappa_dev = sp.d_theta(kappa_dev, 0, NOISE_FLOOR, 2 * np.pi / L)
    A = -0.5 * float(np.sum((z.real * nrm.real + z.imag * nrm.imag) * weights))
    return GeometryCache(
        L=L, A=A, s=s,
        tangent=np.column_stack([tan.real, tan.imag]),
        normal=np.column_stack([nrm.real, nrm.imag]),
        kappa=kappa, kappa_dev=kappa_dev,
        speed=speed, weights=weights, method=method,
    )


def signed_area(curve: ClosedCurve) -> float:
    """Signed area enclosed by the trigonometric interpolant of the samples.

    Uses ``A = pi * sum_k k |c_k|^2`` for the Fourier coefficients ``c_k`` of
    ``x + iy``; positive for counter-clockwise curves. The Nyquist mode
    contributes nothing once split symmetrically.
    """
    n = curve.n
    coef = np.fft.fft(curve.z) / n
    k = sp.wavenumbers(n).copy()
    k[n // 2] = 0.0
    return float(np.pi * np.sum(k * np.abs(coef) ** 2))


def polygon_area(curve: ClosedCurve) -> float:
    """Shoelace area of the sample polygon (second-order accurate)."""
    x, y = curve.points[:, 0], curve.points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def turning_number(curve: ClosedCurve) -> float:
    """Unrounded ``(1/2pi) * integral of kappa ds``."""
    g = curve.geometry
    return g.integrate(g.kappa) / (2 * np.pi)


def rotation_number(curve: ClosedCurve, tol: float = 1e-4) -> int:
    """Rotation number of the tangent, rounded to the nearest integer.

    Raises
    ------
    CurveError
        If the raw value is farther than ``tol`` from an integer.
    """
    raw = turning_number(curve)
    rounded = int(round(raw))
    if abs(raw - rounded) > tol:
        raise CurveError(f"non-integral rotation number {raw!r}")
    return rounded


def is_strictly_convex(curve: ClosedCurve) -> tuple[bool, float]:
    """Return ``(min kappa > 0, min kappa)``."""
    kmin = float(np.min(curve.geometry.kappa))
    return kmin > 0.0, kmin


def min_curvature(curve: ClosedCurve, iterations: int = 8) -> float:
    """Minimum of the interpolated curvature, not just of its samples.

    Newton steps on ``kappa'(theta) = 0`` start from the smallest sample;
    the refined value is kept only if it is lower.
    """
    kappa = curve.geometry.kappa
    n = curve.n
    j = int(np.argmin(kappa))
    best = float(kappa[j])
    interp = _Interpolant(sp.d_theta(kappa, 1))
    theta = np.array([j / n])
    for _ in range(iterations):
        d1, d2 = interp.with_derivative(theta)
        if not d2[0] > 0:
            break
        theta = theta - d1 / d2
        if abs(theta[0] - j / n) > 1.0 / n:
            return best
    return min(best, float(_Interpolant(kappa)(theta % 1.0)[0]))


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def is_simple(curve: ClosedCurve) -> bool:
    """Segment-pair scan of the sample polygon for crossings.

    O(N^2) memory and time; adjacent segments are not compared.
    """
    p = curve.points
    q = np.roll(p, -1, axis=0)
    n = p.shape[0]
    ax, ay = p[:, 0][:, None], p[:, 1][:, None]
    bx, by = q[:, 0][:, None], q[:, 1][:, None]
    cx, cy = p[:, 0][None, :], p[:, 1][None, :]
    dx, dy = q[:, 0][None, :], q[:, 1][None, :]
    o1 = _orient(ax, ay, bx, by, cx, cy)
    o2 = _orient(ax, ay, bx, by, dx, dy)
    o3 = _orient(cx, cy, dx, dy, ax, ay)
    o4 = _orient(cx, cy, dx, dy, bx, by)
    cross = (o1 * o2 < 0) & (o3 * o4 < 0)
    idx = np.arange(n)
    diff = (idx[None, :] - idx[:, None]) % n
    cross &= (diff > 1) & (diff < n - 1)
    return not bool(np.any(cross))


def arclength_spacing(curve: ClosedCurve) -> np.ndarray:
    """Arclength between consecutive samples, measured on the interpolant."""
    g = curve.geometry
    s = np.append(g.s, g.L)
    return np.diff(s)


class _Interpolant:
    """Trigonometric interpolant of periodic samples, evaluated off-grid.

    Each query point is expanded in a Taylor series about the nearest node
    of a grid ``factor`` times finer than the data grid; the derivatives on
    that grid come from the FFT, so the result agrees with direct summation
    of the series to rounding. Queries within 2% of a cell of the data grid
    skip the upsampling, and the series is cut once the next term of the
    band-limit bound falls below rounding.
    """

    def __init__(self, values: np.ndarray):
        self.values = values
        self.n = values.shape[0]
        self._coef: dict[int, np.ndarray] = {}
        self._tables: dict[int, list[np.ndarray]] = {}

    def _table(self, factor: int, order: int) -> list[np.ndarray]:
        if factor not in self._tables:
            base = self.values if factor == 1 else sp.upsample(self.values, factor)
            self._coef[factor] = np.fft.fft(base)
            self._tables[factor] = [base]
        table = self._tables[factor]
        coef = self._coef[factor]
        m = coef.shape[0]
        if len(table) <= order:
            new = np.fft.ifft(np.stack([sp.derivative_multiplier(m, o)
                                        for o in range(len(table), order + 1)]) * coef,
                              axis=-1)
            table.extend(new.real if np.isrealobj(self.values) else new)
        return table

    def _order(self, delta_max: float, cap: int, extra: int) -> int:
        # |term_q| <= (pi n |delta|)^q / q! times the largest coefficient
        x = np.pi * self.n * delta_max
        bound, q = 1.0, 0
        while q < cap and bound > 1e-17:
            q += 1
            bound *= x / q
        return q + extra

    def _evaluate(self, theta: np.ndarray, with_derivative: bool):
        near = np.rint(theta * self.n)
        if np.max(np.abs(theta * self.n - near)) < 0.02:
            factor, cap = 1, 7
        else:
            factor, cap = 8, 12
        m = self.n * factor
        idx = np.rint(theta * m)
        delta = theta - idx / m
        idx = idx.astype(np.int64) % m
        order = self._order(float(np.max(np.abs(delta))), cap, 0)
        table = self._table(factor, order + int(with_derivative))
        acc = table[0][idx].astype(table[1].dtype if len(table) > 1 else float)
        dacc = table[1][idx].copy() if with_derivative else None
        term = np.ones_like(delta)
        for k in range(1, order + 1):
            term = term * delta / k
            acc = acc + term * table[k][idx]
            if with_derivative:
                dacc = dacc + term * table[k + 1][idx]
        return acc, dacc

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        return self._evaluate(theta, False)[0]

    def with_derivative(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self._evaluate(theta, True)


def resample_uniform_arclength(curve: ClosedCurve, n: int | None = None,
                               *, max_iter: int = 50) -> ClosedCurve:
    """Resample at equal arclength along the trigonometric interpolant.

    The first sample is kept fixed. Arclength targets ``L j / n`` are
    solved by Newton iteration on the spectrally integrated speed.

    Raises
    ------
    CurveError
        If ``n`` is invalid or the Newton iteration fails to converge.
    """
    n_in = curve.n
    n = n_in if n is None else int(n)
    if n < 16 or not _is_power_of_two(n):
        raise CurveError(f"target sample count must be a power of two >= 16, got {n}")
    z = curve.z
    speed = np.abs(sp.d_theta(z, 1))
    j = int(np.argmin(speed))
    if not speed[j] > 0.0:
        raise CurveError(f"degenerate curve: zero speed at sample {j}")
    L = float(np.mean(speed))
    periodic = sp.antiderivative(speed)
    grid_in = np.arange(n_in) / n_in

    targets = L * np.arange(n) / n
    if n == n_in:
        # s(theta) = L theta + P(theta); one fixed-point sweep on the grid
        theta = grid_in - periodic / L
    else:
        s_grid = L * grid_in + periodic
        theta = np.interp(targets, np.append(s_grid, L), np.append(grid_in, 1.0))

    s_fun = _Interpolant(periodic)
    for _ in range(max_iter):
        p_val, p_der = s_fun.with_derivative(theta)
        step = (L * theta + p_val - targets) / (L + p_der)
        step[0] = 0.0
        theta = theta - step
        if np.max(np.abs(step)) < 1e-15:
            break
    else:
        raise CurveError("arclength resampling did not converge")
    theta[0] = 0.0
    return ClosedCurve.from_complex(_Interpolant(z)(theta))


def transform(curve: ClosedCurve, scale: float = 1.0,
              translation=(0.0, 0.0), rotation: float = 0.0) -> ClosedCurve:
    """Similarity transform ``x -> scale * R(rotation) x + translation``."""
    if not scale > 0:
        raise CurveError(f"scale must be positive, got {scale}")
    w = scale * np.exp(1j * rotation) * curve.z + complex(*translation)
    return ClosedCurve.from_complex(w)


# --- generators ----------------------------------------------------------

_OVERSAMPLE = 4


def _sample_grid(n: int) -> np.ndarray:
    return np.arange(n) / n


def _center(desc) -> complex:
    c = desc.get("center", (0.0, 0.0))
    return complex(float(c[0]), float(c[1]))


def _circle(desc, n):
    r = float(desc.get("radius", 1.0))
    if not r > 0:
        raise CurveError("circle radius must be positive")
    t = 2 * np.pi * _sample_grid(n) + float(desc.get("phase", 0.0))
    return ClosedCurve.from_complex(_center(desc) + r * np.exp(1j * t))


def _ellipse_raw(desc, m):
    a, b = float(desc["a"]), float(desc["b"])
    if not (a > 0 and b > 0):
        raise CurveError("ellipse semi-axes must be positive")
    t = 2 * np.pi * _sample_grid(m) + float(desc.get("phase", 0.0))
    w = (a * np.cos(t) + 1j * b * np.sin(t)) * np.exp(1j * float(desc.get("angle", 0.0)))
    return w + _center(desc)


def _polar_raw(desc, m):
    t = 2 * np.pi * _sample_grid(m) + float(desc.get("phase", 0.0))
    r = np.full(m, float(desc.get("radius", 1.0)))
    for mode in desc.get("modes", []):
        k, ak = int(mode[0]), float(mode[1])
        bk = float(mode[2]) if len(mode) > 2 else 0.0
        r += ak * np.cos(k * t) + bk * np.sin(k * t)
    if np.any(r <= 0):
        raise CurveError("polar radius must stay positive")
    return _center(desc) + r * np.exp(1j * t)


def fourier_points(coeffs: Mapping[int, complex], m: int) -> np.ndarray:
    """Samples of ``sum_k c_k exp(2 pi i k theta)`` on an ``m``-point grid."""
    t = _sample_grid(m)
    z = np.zeros(m, dtype=complex)
    for k, c in coeffs.items():
        z += c * np.exp(2j * np.pi * k * t)
    return z


def _curvature_curve(desc, m):
    length = float(desc.get("length", 2 * np.pi))
    if not length > 0:
        raise CurveError("length must be positive")
    t = _sample_grid(m)
    angle = 2 * np.pi * t + float(desc.get("phase", 0.0))
    for mode in desc.get("modes", []):
        k, ak = int(mode[0]), float(mode[1])
        bk = float(mode[2]) if len(mode) > 2 else 0.0
        if k < 1:
            raise CurveError("curvature modes must have k >= 1")
        w = 2 * np.pi * k
        angle += length * (ak * np.sin(w * t) - bk * np.cos(w * t)) / w
    velocity = length * np.exp(1j * angle)
    gap = abs(velocity.mean())
    if gap > 1e-10 * length:
        raise CurveError(f"prescribed curvature does not close (gap {gap:.3g})")
    pos = np.fft.ifft(np.fft.fft(velocity) * _antiderivative_multiplier(m))
    return _center(desc) + pos - pos[0]


def _antiderivative_multiplier(m):
    k = sp.wavenumbers(m)
    out = np.zeros(m, dtype=complex)
    nz = k != 0
    out[nz] = 1.0 / (2j * np.pi * k[nz])
    out[m // 2] = 0.0
    return out


def _parse_fourier(desc) -> dict[int, complex]:
    out: dict[int, complex] = {}
    for item in desc["coeffs"]:
        k = int(item[0])
        out[k] = out.get(k, 0.0) + complex(float(item[1]), float(item[2]) if len(item) > 2 else 0.0)
    return out


def random_fourier_coeffs(rng: np.random.Generator, kmax: int = 8,
                          amplitude: float = 0.4) -> dict[int, complex]:
    """Draw ``c_1 = 1`` plus modes ``2 <= |k| <= kmax`` of size ``<= amplitude / k^2``."""
    coeffs: dict[int, complex] = {1: 1.0 + 0j}
    for k in range(2, kmax + 1):
        for sign in (1, -1):
            mag = rng.uniform(0.0, amplitude / k**2)
            coeffs[sign * k] = mag * np.exp(2j * np.pi * rng.uniform())
    return coeffs


def make_curve(desc: Mapping[str, Any], *, screen: bool = True) -> ClosedCurve:
    """Build a curve from a JSON-style generator descriptor.

    Descriptor ``type`` is one of ``circle`` (``center``, ``radius``),
    ``ellipse`` (``a``, ``b``, ``center``, ``angle``), ``polar``
    (``radius``, ``modes`` as ``[k, cos_coeff, sin_coeff]`` rows), ``fourier``
    (``coeffs`` as ``[k, re, im]`` rows), ``curvature`` (``length`` and
    ``modes`` as ``[k, cos_coeff, sin_coeff]`` rows added to the curvature
    ``2 pi / length`` as functions of arclength; single modes with
    ``k >= 2`` always close) or ``random_fourier`` (``seed``, ``kmax``,
    ``amplitude``). ``N`` sets the sample count (default 256),
    ``phase`` shifts the start of the parametrisation for circle, ellipse
    and polar curves.

    Circles and prescribed-curvature curves come out at uniform arclength
    directly; the others are sampled at 4N points and resampled to N
    points at uniform arclength.

    Raises
    ------
    CurveError
        For malformed descriptors, or when screening finds a rotation
        number other than 1 or a self-intersection.
    """
    kind = desc.get("type")
    n = int(desc.get("N", 256))
    if n < 16 or not _is_power_of_two(n):
        raise CurveError(f"N must be a power of two >= 16, got {n}")
    m = _OVERSAMPLE * n
    try:
        if kind == "circle":
            curve = _circle(desc, n)
        elif kind == "ellipse":
            curve = resample_uniform_arclength(ClosedCurve.from_complex(_ellipse_raw(desc, m)), n)
        elif kind == "polar":
            curve = resample_uniform_arclength(ClosedCurve.from_complex(_polar_raw(desc, m)), n)
        elif kind == "fourier":
            raw = fourier_points(_parse_fourier(desc), m)
            curve = resample_uniform_arclength(ClosedCurve.from_complex(raw), n)
        elif kind == "curvature":
            curve = ClosedCurve.from_complex(_curvature_curve(desc, m)[::_OVERSAMPLE])
        elif kind == "random_fourier":
            rng = np.random.default_rng(int(desc.get("seed", 0)))
            coeffs = random_fourier_coeffs(rng, int(desc.get("kmax", 8)),
                                           float(desc.get("amplitude", 0.4)))
            curve = resample_uniform_arclength(
                ClosedCurve.from_complex(fourier_points(coeffs, m)), n)
        else:
            raise CurveError(f"unknown generator type {kind!r}")
    except KeyError as exc:
        raise CurveError(f"generator {kind!r} missing field {exc.args[0]!r}") from None
    if screen:
        wn = rotation_number(curve)
        if wn != 1:
            raise CurveError(f"generated curve has rotation number {wn}")
        if not is_simple(curve):
            raise CurveError("generated curve self-intersects")
    return curve


# --- CSV -----------------------------------------------------------------

def write_curve_csv(curve: ClosedCurve, path) -> None:
    """Write ``x,y`` rows with 17 significant digits (round-trips exactly)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("x,y\n")
        for x, y in curve.points:
            fh.write(f"{x:.17g},{y:.17g}\n")


def read_curve_csv(path) -> ClosedCurve:
    """Read a curve written by :func:`write_curve_csv`.

    Raises
    ------
    CurveError
        On a missing header, malformed rows or an invalid sample count.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y"]:
            raise CurveError(f"{path}: expected header 'x,y'")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise CurveError(f"{path}:{lineno}: expected 2 columns")
            try:
                rows.append((float(row[0]), float(row[1])))
            except ValueError:
                raise CurveError(f"{path}:{lineno}: not a number") from None
    if not rows:
        raise CurveError(f"{path}: no samples")
    return ClosedCurve(np.array(rows))


def circle_fit_residual(curve: ClosedCurve) -> float:
    """Max distance of samples from the least-squares circle, relative to its radius."""
    x, y = curve.points[:, 0], curve.points[:, 1]
    mat = np.column_stack([x, y, np.ones_like(x)])
    rhs = x**2 + y**2
    (a, b, c), *_ = np.linalg.lstsq(mat, rhs, rcond=None)
    cx, cy = a / 2, b / 2
    r = math.sqrt(c + cx**2 + cy**2)
    return float(np.max(np.abs(np.hypot(x - cx, y - cy) - r)) / r)
