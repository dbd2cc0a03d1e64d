"""Time integration of the three non-local curvature flows.

Every flow has the form ``df/dt = kappa_vec - lam * nu`` with a scalar
``lam`` that depends on the whole curve:

=================  =========================
kind               lam
=================  =========================
area-preserving    (1/L) int kappa ds
Jiang-Pan          L / (2A)
length-preserving  (1/2pi) int kappa^2 ds
=================  =========================

Written as ``df/dt = f_ss - lam R f_s`` (``R`` the rotation by +pi/2), the
scheme treats ``f_thetatheta / L^2`` implicitly and everything else
explicitly, then puts the samples back at equal arclength. The implicit
solve is diagonal in Fourier space.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import warnings

import numpy as np

from . import _spectral as sp
from .geometry import (
    ClosedCurve,
    CurveError,
    is_simple,
    resample_uniform_arclength,
    rotation_number,
    signed_area,
)

log = logging.getLogger(__name__)

__all__ = [
    "FlowKind",
    "Scheme",
    "FlowState",
    "StepStats",
    "FlowError",
    "BlowUpError",
    "nonlocal_coefficient",
    "initial_state",
    "step",
    "dAdt_residual",
    "run",
]

# max |kappa| * h above which the grid no longer resolves the curve
RESOLUTION_LIMIT = 0.5


class FlowKind(str, enum.Enum):
    AREA_PRESERVING = "area_preserving"
    JIANG_PAN = "jiang_pan"
    LENGTH_PRESERVING = "length_preserving"


class FlowError(RuntimeError):
    """Invalid flow input or a failed step."""


class BlowUpError(FlowError):
    """The curve can no longer be trusted (curvature beyond resolution, drift)."""


def nonlocal_coefficient(kind: FlowKind, curve: ClosedCurve) -> float:
    """The scalar multiplying the normal in the flow law.

    Raises
    ------
    FlowError
        For the Jiang-Pan flow when the signed area is not positive.
    """
    kind = FlowKind(kind)
    g = curve.geometry
    if kind is FlowKind.AREA_PRESERVING:
        return g.integrate(g.kappa) / g.L
    if kind is FlowKind.JIANG_PAN:
        if not g.A > 0:
            raise FlowError(f"Jiang-Pan coefficient needs positive area, got {g.A}")
        return g.L / (2.0 * g.A)
    return g.integrate(g.kappa**2) / (2.0 * np.pi)


@dataclasses.dataclass(frozen=True)
class FlowState:
    curve: ClosedCurve
    t: float
    kind: FlowKind
    lam: float


@dataclasses.dataclass(frozen=True)
class StepStats:
    dt: float
    dL: float
    dA: float
    kappa_h: float
    # largest denominator of the implicit solve, 1 + dt (pi N / L)^2
    implicit_condition: float


def initial_state(curve: ClosedCurve, kind: FlowKind, t: float = 0.0) -> FlowState:
    """Validate initial data and put it at uniform arclength.

    Raises
    ------
    FlowError
        Unless the rotation number is 1 and the signed area is positive.
    """
    kind = FlowKind(kind)
    try:
        wn = rotation_number(curve)
    except CurveError as exc:
        raise FlowError(f"invalid initial curve: {exc}") from None
    if wn != 1:
        raise FlowError(f"initial rotation number must be 1, got {wn}")
    area = signed_area(curve)
    if not area > 0:
        raise FlowError(f"initial signed area must be positive, got {area}")
    curve = resample_uniform_arclength(curve)
    return FlowState(curve, float(t), kind, nonlocal_coefficient(kind, curve))


class Scheme(str, enum.Enum):
    """Time discretisation of one step.

    ``imex_euler`` is first order: backward Euler on the diffusion and
    forward Euler on the rest. ``ars222`` is the two-stage, second-order,
    L-stable IMEX Runge-Kutta pair of Ascher, Ruuth and Spiteri with the
    same splitting.
    """

    IMEX_EULER = "imex_euler"
    ARS222 = "ars222"


DEFAULT_SCHEME = Scheme.ARS222

_GAMMA = 1.0 - 1.0 / np.sqrt(2.0)
_DELTA = 1.0 - 1.0 / (2.0 * _GAMMA)


def _explicit_part(z: np.ndarray, kind: FlowKind, lap: np.ndarray) -> np.ndarray:
    """Flow velocity minus the frozen-metric diffusion ``lap`` applied to ``z``.

    Works on any parametrisation, so intermediate stages need no
    reprojection.
    """
    n = z.shape[0]
    coef = np.fft.fft(z)
    zt, ztt, diffusion = np.fft.ifft(np.stack([sp.derivative_multiplier(n, 1),
                                               sp.derivative_multiplier(n, 2),
                                               lap]) * coef, axis=-1)
    speed = np.abs(zt)
    if not np.min(speed) > 0:
        raise CurveError(f"degenerate stage: zero speed at sample {int(np.argmin(speed))}")
    nrm = 1j * zt / speed
    kappa = np.imag(np.conj(zt) * ztt) / speed**3
    weights = speed / n
    L = float(np.sum(weights))
    if kind is FlowKind.AREA_PRESERVING:
        lam = float(np.sum(kappa * weights)) / L
    elif kind is FlowKind.JIANG_PAN:
        area = -0.5 * float(np.sum((z.real * nrm.real + z.imag * nrm.imag) * weights))
        if not area > 0:
            raise FlowError(f"Jiang-Pan coefficient needs positive area, got {area}")
        lam = L / (2.0 * area)
    else:
        lam = float(np.sum(kappa**2 * weights)) / (2.0 * np.pi)
    return (kappa - lam) * nrm - diffusion


def _advance(curve: ClosedCurve, kind: FlowKind, dt: float, scheme: Scheme) -> np.ndarray:
    """Move the samples by one step of ``scheme``; returns the new ``z``.

    The diffusion ``f_thetatheta / L^2`` uses ``L`` frozen at the start of
    the step and is solved for implicitly, which is diagonal in Fourier
    space. Everything else (metric remainder, non-local term) is explicit.
    """
    z = curve.z
    n = curve.n
    lap = sp.derivative_multiplier(n, 2) / curve.geometry.L ** 2
    coef = np.fft.fft(z)
    e1 = np.fft.fft(_explicit_part(z, kind, lap))
    if scheme is Scheme.IMEX_EULER:
        return np.fft.ifft((coef + dt * e1) / (1.0 - dt * lap))
    solve = 1.0 - dt * _GAMMA * lap
    c2 = (coef + dt * _GAMMA * e1) / solve
    z2 = np.fft.ifft(c2)
    e2 = np.fft.fft(_explicit_part(z2, kind, lap))
    rhs = coef + dt * (_DELTA * e1 + (1.0 - _DELTA) * e2) + dt * (1.0 - _GAMMA) * lap * c2
    return np.fft.ifft(rhs / solve)


def step(state: FlowState, dt: float, *, scheme: Scheme = DEFAULT_SCHEME,
         check_simple: bool = False, renormalize: bool = False) -> tuple[FlowState, StepStats]:
    """Advance by ``dt`` with one IMEX step, then reproject to equal arclength.

    Parameters
    ----------
    scheme : Scheme
        Time discretisation; see :class:`Scheme`.
    check_simple : bool
        Run the O(N^2) self-intersection scan after the step and warn on a
        crossing (the run continues).
    renormalize : bool
        Rescale about the centroid to restore the conserved quantity
        exactly (length for the length-preserving flow, area for the
        area-preserving flow). Off by default so conservation stays a
        property of the scheme.

    Raises
    ------
    BlowUpError
        If ``max |kappa| * h`` exceeds ``RESOLUTION_LIMIT``.
    FlowError
        If a stage degenerates.
    """
    if not dt > 0:
        raise FlowError(f"dt must be positive, got {dt}")
    curve = state.curve
    g0 = curve.geometry
    kh = float(np.max(np.abs(g0.kappa))) * g0.L / curve.n
    if kh > RESOLUTION_LIMIT:
        raise BlowUpError(f"max|kappa|*h = {kh:.3g} exceeds {RESOLUTION_LIMIT} at t={state.t:.6g}")
    try:
        z_new = _advance(curve, state.kind, dt, Scheme(scheme))
        if not np.all(np.isfinite(z_new)):
            raise CurveError("non-finite coordinates")
        new_curve = resample_uniform_arclength(ClosedCurve.from_complex(z_new))
    except CurveError as exc:
        raise FlowError(f"step failed at t={state.t:.6g}: {exc}") from None
    if renormalize:
        new_curve = _renormalize(new_curve, state.kind, g0)
    g1 = new_curve.geometry
    if check_simple and not is_simple(new_curve):
        warnings.warn(f"curve self-intersects at t={state.t + dt:.6g}", RuntimeWarning)
    new_state = FlowState(new_curve, state.t + dt, state.kind,
                          nonlocal_coefficient(state.kind, new_curve))
    cond = 1.0 + dt * (np.pi * curve.n / g0.L) ** 2
    return new_state, StepStats(dt, g1.L - g0.L, g1.A - g0.A, kh, cond)


def _renormalize(curve: ClosedCurve, kind: FlowKind, before) -> ClosedCurve:
    g = curve.geometry
    if kind is FlowKind.LENGTH_PRESERVING:
        factor = before.L / g.L
    elif kind is FlowKind.AREA_PRESERVING:
        factor = float(np.sqrt(before.A / g.A))
    else:
        return curve
    z = curve.z
    c = np.sum(z * g.weights) / g.L
    return ClosedCurve.from_complex(c + factor * (z - c))


def dAdt_residual(state: FlowState, dt_probe: float) -> float:
    """Relative mismatch between a centred difference of ``A`` and ``I_0 / 2pi``.

    ``A`` cannot be integrated backwards, so the difference is centred at
    ``t + dt_probe``: two forward steps give ``A(t + 2 dt_probe)`` and one
    step gives the curve at the midpoint where ``I_0`` is evaluated. With
    the second-order scheme every term is accurate to ``O(dt_probe^2)``.
    """
    if FlowKind(state.kind) is not FlowKind.LENGTH_PRESERVING:
        raise FlowError("the dA/dt identity holds for the length-preserving flow")
    if not dt_probe > 0:
        raise FlowError(f"dt_probe must be positive, got {dt_probe}")
    from .quantities import invariants_of

    a0 = state.curve.geometry.A
    mid, _ = step(state, dt_probe, scheme=Scheme.ARS222)
    end, _ = step(mid, dt_probe, scheme=Scheme.ARS222)
    rate = invariants_of(mid.curve, 0).i[0] / (2 * np.pi)
    fd = (end.curve.geometry.A - a0) / (2 * dt_probe)
    return abs(fd - rate) / max(rate, 1e-14)


# relative length drift that ends a length-preserving run
LENGTH_DRIFT_LIMIT = 0.01


def run(initial: ClosedCurve, kind: FlowKind, T_end: float, dt: float,
        record_every: int = 1, *, scheme: Scheme = DEFAULT_SCHEME,
        renormalize: bool = False, check_simple: bool = False,
        config: dict | None = None):
    """Integrate from ``initial`` to ``T_end``, recording diagnostics.

    Records are taken at ``t = 0``, after every ``record_every`` steps and
    at the end. The last step is shortened to land on ``T_end``. A blow-up
    (curvature beyond resolution, or more than 1% length drift for the
    length-preserving flow) or a failed step ends the run early with the
    series status set to ``"blow_up"`` or ``"failed"``.

    Returns
    -------
    experiments.TimeSeries

    Raises
    ------
    FlowError
        If the initial data are invalid (checked before any step) or the
        step parameters are not positive.
    """
    from .experiments import TimeSeries

    if not dt > 0 or not T_end >= 0:
        raise FlowError(f"need dt > 0 and T_end >= 0, got dt={dt}, T_end={T_end}")
    if int(record_every) < 1:
        raise FlowError(f"record_every must be >= 1, got {record_every}")
    state = initial_state(initial, kind)
    scheme = Scheme(scheme)
    series = TimeSeries(config=dict(config or {}))
    series.record(state.curve, 0.0)
    L0 = state.curve.geometry.L
    n_steps = max(0, int(math.ceil(T_end / dt - 1e-9)))
    for i in range(1, n_steps + 1):
        h = min(dt, T_end - (i - 1) * dt)
        try:
            state, _ = step(state, h, scheme=scheme, check_simple=check_simple,
                            renormalize=renormalize)
            state = dataclasses.replace(state, t=min(i * dt, T_end))
            if state.kind is FlowKind.LENGTH_PRESERVING:
                drift = abs(state.curve.geometry.L - L0) / L0
                if drift > LENGTH_DRIFT_LIMIT:
                    raise BlowUpError(f"length drift {drift:.3g} at t={state.t:.6g}")
        except BlowUpError as exc:
            log.warning("run stopped: %s", exc)
            series.status, series.reason = "blow_up", str(exc)
            break
        except FlowError as exc:
            log.warning("run stopped: %s", exc)
            series.status, series.reason = "failed", str(exc)
            break
        if i % record_every == 0 or i == n_steps:
            series.record(state.curve, state.t)
    return series
