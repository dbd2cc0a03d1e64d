"""FFT helpers for periodic samples on the unit parameter interval."""

from __future__ import annotations

import functools

import numpy as np


@functools.lru_cache(maxsize=None)
def wavenumbers(n: int) -> np.ndarray:
    """Integer wavenumbers in FFT order (Nyquist mode reported as -n/2)."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    k.setflags(write=False)
    return k


@functools.lru_cache(maxsize=None)
def derivative_multiplier(n: int, order: int) -> np.ndarray:
    mult = (2j * np.pi * wavenumbers(n)) ** order
    if order % 2 == 1:
        mult[n // 2] = 0.0
    mult.setflags(write=False)
    return mult


def _filtered_fft(values: np.ndarray, floor: float | None, scale: float | None) -> np.ndarray:
    n = values.shape[0]
    coef = np.fft.fft(values)
    if floor is not None:
        mag = np.abs(coef) / n
        ref = float(mag.max()) if scale is None else scale
        coef[mag < floor * ref] = 0.0
    return coef


def d_theta(values: np.ndarray, order: int = 1, floor: float | None = None,
            scale: float | None = None) -> np.ndarray:
    """Spectral derivative in the parameter theta in [0, 1).

    Real input gives real output; complex input is differentiated as
    the pair (real, imag). With ``floor`` set, coefficients whose size is
    below ``floor * scale`` are dropped first (``scale`` defaults to the
    largest coefficient). Rounding noise sits near 1e-16 relative in every
    mode and is amplified by ``k^order``; dropping it in coefficient space,
    right before the multiplier, keeps it from being regenerated.
    """
    if order == 0 and floor is None:
        return values.copy()
    return derivatives(values, (order,), floor, scale)[0]


def derivatives(values: np.ndarray, orders, floor: float | None = None,
                scale: float | None = None) -> np.ndarray:
    """Several ``d_theta`` orders from one forward transform, stacked by row."""
    n = values.shape[0]
    coef = _filtered_fft(values, floor, scale)
    mult = np.stack([derivative_multiplier(n, o) for o in orders])
    out = np.fft.ifft(mult * coef, axis=-1)
    if np.isrealobj(values):
        return out.real
    return out


def antiderivative(values: np.ndarray) -> np.ndarray:
    """Periodic part of the antiderivative, pinned to 0 at theta = 0.

    The mean of ``values`` is dropped; callers add ``mean * theta``.
    """
    n = values.shape[0]
    k = wavenumbers(n)
    coef = np.fft.fft(values)
    out = np.zeros_like(coef)
    nz = k != 0
    out[nz] = coef[nz] / (2j * np.pi * k[nz])
    out[n // 2] = 0.0
    prim = np.fft.ifft(out).real
    return prim - prim[0]


def eval_series(coef: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant at arbitrary parameters.

    ``coef`` are normalised coefficients (``fft(x) / n``). The Nyquist
    coefficient is split evenly between +n/2 and -n/2 so that real data
    stays real.
    """
    n = coef.shape[0]
    k = wavenumbers(n)
    c = coef.copy()
    phase = np.exp(2j * np.pi * np.outer(theta, k))
    half = n // 2
    nyq = c[half]
    c[half] = 0.0
    out = phase @ c
    out += nyq * np.cos(2 * np.pi * half * theta)
    return out


def upsample(values: np.ndarray, factor: int) -> np.ndarray:
    """Zero-pad the spectrum to evaluate on a grid ``factor`` times finer."""
    n = values.shape[0]
    m = n * factor
    coef = np.fft.fft(values) / n
    padded = np.zeros(m, dtype=complex)
    half = n // 2
    padded[:half] = coef[:half]
    padded[-half + 1:] = coef[half + 1:]
    padded[half] = 0.5 * coef[half]
    padded[-half] = 0.5 * coef[half]
    out = np.fft.ifft(padded) * m
    if np.isrealobj(values):
        return out.real
    return out


# 4th-order central stencils, periodic.
def fd_d1(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    h = 1.0 / n
    return (-np.roll(values, -2) + 8 * np.roll(values, -1)
            - 8 * np.roll(values, 1) + np.roll(values, 2)) / (12 * h)


def fd_d2(values: np.ndarray) -> np.ndarray:
    n = values.shape[0]
    h = 1.0 / n
    return (-np.roll(values, -2) + 16 * np.roll(values, -1) - 30 * values
            + 16 * np.roll(values, 1) - np.roll(values, 2)) / (12 * h * h)

