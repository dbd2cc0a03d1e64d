"""Post-processing of flow runs.

A :class:`TimeSeries` holds one row of diagnostics per recorded instant and
the recorded curves themselves. On top of it this module fits exponential
decay rates, finds the time after which the curve stays convex, extracts
the limit circle and checks, item by item, that the curve converges to it
exponentially. :func:`emit_report` writes everything to disk.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import warnings
from pathlib import Path

import numpy as np
from scipy import stats

from . import _spectral as sp
from .geometry import NOISE_FLOOR, ClosedCurve, CurveError, min_curvature
from .quantities import (
    DiskSpec,
    barycenter,
    fmt17,
    fourier_frame,
    hausdorff_to_disk,
    invariants_of,
)

log = logging.getLogger(__name__)

__all__ = [
    "COLUMNS",
    "TimeSeries",
    "DecayFit",
    "FitRefused",
    "ConvexityTime",
    "LimitCircle",
    "LimitRefused",
    "ItemResult",
    "ConvergenceReport",
    "record_of",
    "default_window",
    "fit_decay",
    "fit_exponential",
    "detect_convexity_time",
    "limit_circle",
    "verify_convergence",
    "emit_report",
]

COLUMNS = ("t", "L", "A", "i_minus1", "i0", "i1", "i2", "i3", "i4",
           "min_kappa", "cx", "cy", "r", "sigma", "dH", "bx", "by")

# log-regression ignores samples at or below this (rounding floor)
FIT_FLOOR = 1e-14
MIN_FIT_SAMPLES = 10


def record_of(curve: ClosedCurve, t: float) -> dict[str, float]:
    """All per-instant diagnostics of ``curve``, keyed by ``COLUMNS``.

    ``dH`` is the Hausdorff distance to the disk of the current Fourier
    frame (centre ``c``, radius ``r``).
    """
    g = curve.geometry
    inv = invariants_of(curve, 4)
    frame = fourier_frame(curve)
    try:
        b = barycenter(curve)
    except CurveError:
        b = np.array([np.nan, np.nan])
    if frame.r > 0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            dh = hausdorff_to_disk(curve, DiskSpec(tuple(frame.c), frame.r))
    else:
        dh = float("nan")
    row = {"t": float(t), "L": g.L, "A": g.A, "i_minus1": inv.i_minus1}
    row.update({f"i{ell}": v for ell, v in enumerate(inv.i)})
    row.update({
        "min_kappa": min_curvature(curve),
        "cx": float(frame.c[0]), "cy": float(frame.c[1]),
        "r": frame.r, "sigma": frame.sigma, "dH": dh,
        "bx": float(b[0]), "by": float(b[1]),
    })
    return row


@dataclasses.dataclass
class TimeSeries:
    """Diagnostics of a run at its recorded instants.

    Attributes
    ----------
    rows : list of dict
        One mapping ``COLUMNS -> float`` per record, ``t`` strictly increasing.
    curves : list of ClosedCurve
        The curve at each record.
    status : str
        ``"healthy"`` for a run that reached its end time; otherwise the
        reason it stopped (``"blow_up"``, ``"failed"``).
    reason : str
        Human-readable detail for a non-healthy status.
    config : dict
        The run configuration, echoed into reports.
    """

    rows: list = dataclasses.field(default_factory=list)
    curves: list = dataclasses.field(default_factory=list)
    status: str = "healthy"
    reason: str = ""
    config: dict = dataclasses.field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def healthy(self) -> bool:
        return self.status == "healthy"

    def append(self, row: dict, curve: ClosedCurve | None = None) -> None:
        missing = set(COLUMNS) - set(row)
        if missing:
            raise ValueError(f"record lacks columns {sorted(missing)}")
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError(f"record times must increase: {row['t']} after {self.rows[-1]['t']}")
        self.rows.append({k: float(row[k]) for k in COLUMNS})
        if curve is not None:
            self.curves.append(curve)

    def record(self, curve: ClosedCurve, t: float) -> None:
        self.append(record_of(curve, t), curve)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(f"unknown column {name!r}")
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(COLUMNS) + "\n")
        for r in self.rows:
            buf.write(",".join(fmt17(r[k]) for k in COLUMNS) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TimeSeries":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != COLUMNS:
            raise ValueError(f"unexpected time-series header {header}")
        ts = cls()
        for line in reader:
            if line:
                ts.append({k: float(v) for k, v in zip(COLUMNS, line)})
        return ts


# --------------------------------------------------------------------- fits


class FitRefused(ValueError):
    """Too few usable samples for a decay fit."""


@dataclasses.dataclass(frozen=True)
class DecayFit:
    """``q(t) ~ C exp(-lam t)`` fitted by least squares on ``log q``."""

    quantity: str
    window: tuple[float, float]
    C: float
    lam: float
    r_squared: float
    samples: int

    def to_dict(self) -> dict:
        return {"quantity": self.quantity, "window": list(self.window), "C": self.C,
                "lambda": self.lam, "r_squared": self.r_squared, "samples": self.samples}


def fit_decay(t: np.ndarray, q: np.ndarray, window: tuple[float, float] | None = None,
              name: str = "q") -> DecayFit:
    """Log-linear regression of ``q`` against ``t`` on ``window``.

    Only samples with ``q > FIT_FLOOR`` take part.

    Raises
    ------
    FitRefused
        With fewer than ``MIN_FIT_SAMPLES`` usable samples.
    """
    t = np.asarray(t, dtype=float)
    q = np.asarray(q, dtype=float)
    if window is None:
        window = (float(t[0]), float(t[-1])) if t.size else (0.0, 0.0)
    lo, hi = window
    use = (t >= lo) & (t <= hi) & np.isfinite(q) & (q > FIT_FLOOR)
    count = int(np.count_nonzero(use))
    if count < MIN_FIT_SAMPLES:
        raise FitRefused(f"{name}: {count} samples above {FIT_FLOOR:g} in "
                         f"[{lo:.6g}, {hi:.6g}], need {MIN_FIT_SAMPLES}")
    res = stats.linregress(t[use], np.log(q[use]))
    r2 = float(min(1.0, max(0.0, res.rvalue**2)))
    return DecayFit(name, (float(lo), float(hi)), float(np.exp(res.intercept)),
                    float(-res.slope), r2, count)


def default_window(series: TimeSeries) -> tuple[float, float]:
    """From ``I_{-1}`` first at half its initial value to it first reaching 1e-10.

    Falls back to the first or last record when a threshold is never met.
    """
    t = series.t
    if t.size == 0:
        raise FitRefused("empty series")
    d = series.column("i_minus1")
    half = np.nonzero(d <= 0.5 * d[0])[0]
    start = t[half[0]] if half.size else t[0]
    tiny = np.nonzero(d <= 1e-10)[0]
    end = t[tiny[0]] if tiny.size else t[-1]
    return float(start), float(end)


def fit_exponential(series: TimeSeries, quantity: str,
                    window: tuple[float, float] | None = None) -> DecayFit:
    """Fit the decay rate of one column on ``window`` (default: :func:`default_window`)."""
    if window is None:
        window = default_window(series)
    return fit_decay(series.t, series.column(quantity), window, quantity)


# --------------------------------------------------------------- convexity


@dataclasses.dataclass(frozen=True)
class ConvexityTime:
    """``t_star`` is None unless the curve is strictly convex from then on.

    ``reason`` is one of ``"convex"``, ``"never_convex"``,
    ``"convexity_lost"``, ``"empty"`` or ``"unhealthy: ..."``.
    """

    t_star: float | None
    reason: str


# min kappa must exceed this fraction of the mean curvature 2 pi / L; a
# curve whose exact minimum is zero samples to a tiny positive value
CONVEXITY_TOL = 1e-8


def detect_convexity_time(series: TimeSeries, tol: float = CONVEXITY_TOL) -> ConvexityTime:
    """First recorded time after which the curve is strictly convex at every later record.

    Strict convexity at a record means ``min kappa > tol * 2 pi / L``.
    """
    if not series.healthy:
        return ConvexityTime(None, f"unhealthy: {series.status}")
    if len(series) == 0:
        return ConvexityTime(None, "empty")
    convex = series.column("min_kappa") * series.column("L") / (2 * np.pi) > tol
    if not convex[-1]:
        return ConvexityTime(None, "convexity_lost" if convex.any() else "never_convex")
    bad = np.nonzero(~convex)[0]
    first = bad[-1] + 1 if bad.size else 0
    return ConvexityTime(float(series.t[first]), "convex")


# ------------------------------------------------------------ limit circle


class LimitRefused(ValueError):
    """The run has not settled enough to read off a limit circle."""


@dataclasses.dataclass(frozen=True)
class LimitCircle:
    c_inf: np.ndarray
    r_inf: float
    sigma_inf: float
    L_inf: float
    A_inf: float
    tail_start: float

    def to_dict(self) -> dict:
        return {"c_inf": [float(v) for v in self.c_inf], "r_inf": self.r_inf,
                "sigma_inf": self.sigma_inf, "L_inf": self.L_inf, "A_inf": self.A_inf,
                "tail_start": self.tail_start}


LIMIT_DEFICIT = 1e-6


def _tail(series: TimeSeries) -> slice:
    n = len(series)
    return slice(n - max(5, n // 20), n)


def limit_circle(series: TimeSeries) -> LimitCircle:
    """Average the last 5% of records (at least 5) into a limit circle.

    ``r_inf = L_inf / 2 pi``; ``sigma_inf`` is the tail mean of the
    unwrapped phase, reported in ``[0, 2 pi)``.

    Raises
    ------
    LimitRefused
        If the series is unhealthy, too short, or the final isoperimetric
        deficit is not below ``LIMIT_DEFICIT``.
    """
    if not series.healthy:
        raise LimitRefused(f"series status is {series.status}")
    if len(series) < 5:
        raise LimitRefused(f"need at least 5 records, have {len(series)}")
    deficit = series.rows[-1]["i_minus1"]
    if not deficit < LIMIT_DEFICIT:
        raise LimitRefused(f"final deficit {deficit:.3g} not below {LIMIT_DEFICIT:g}")
    tail = _tail(series)
    c = np.array([series.column("cx")[tail].mean(), series.column("cy")[tail].mean()])
    sigma = float(np.mean(unwrapped_phase(series)[tail]) % (2 * np.pi))
    L = float(series.column("L")[tail].mean())
    A = float(series.column("A")[tail].mean())
    return LimitCircle(c, L / (2 * np.pi), sigma, L, A, float(series.t[tail.start]))


def unwrapped_phase(series: TimeSeries) -> np.ndarray:
    return np.unwrap(series.column("sigma"))


# ------------------------------------------------------ convergence checks

# a deviation that never exceeds this (relative to r_inf) is rounding noise
FLOOR_RELATIVE = 1e-11
FIT_R2_MIN = 0.95


@dataclasses.dataclass(frozen=True)
class ItemResult:
    """Outcome for one convergence statement.

    ``status`` is ``"pass"``, ``"fail"``, ``"at_floor"`` (the deviation is
    rounding noise throughout, so no rate can be fitted) or
    ``"unverifiable"``.
    """

    item: str
    description: str
    status: str
    fit: DecayFit | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"item": self.item, "description": self.description, "status": self.status,
                "fit": None if self.fit is None else self.fit.to_dict(), "detail": self.detail}


@dataclasses.dataclass(frozen=True)
class ConvergenceReport:
    items: tuple[ItemResult, ...]
    deviations: dict

    def __getitem__(self, item: str) -> ItemResult:
        for r in self.items:
            if r.item == item:
                return r
        raise KeyError(item)

    @property
    def all_passed(self) -> bool:
        return all(r.status == "pass" for r in self.items)

    def to_dict(self) -> list:
        return [r.to_dict() for r in self.items]


def _normalized_distance(curve: ClosedCurve, limit: LimitCircle, sigma: float) -> np.ndarray:
    """Sup-norm distances of ``f(theta - sigma/2pi)`` to the limit circle.

    Returns the ``k = 0, 1, 2`` parameter-derivative distances, each divided
    by ``(2 pi)^k r_inf``. Coefficients below ``NOISE_FLOOR * r_inf`` are
    dropped before differentiating so rounding noise is not amplified.
    """
    n = curve.n
    coef = np.fft.fft(curve.z) * np.exp(-1j * sigma * sp.wavenumbers(n))
    theta = np.arange(n) / n
    ref = complex(*limit.c_inf) + limit.r_inf * np.exp(2j * np.pi * theta)
    diff = np.fft.ifft(coef) - ref
    out = []
    for k in range(3):
        d = diff if k == 0 else sp.d_theta(diff, k, NOISE_FLOOR, limit.r_inf)
        out.append(float(np.max(np.abs(d))) / ((2 * np.pi) ** k * limit.r_inf))
    return np.array(out)


def _deviation_item(item: str, desc: str, t: np.ndarray, dev: np.ndarray, start: float,
                    scale: float) -> ItemResult:
    tail_level = float(np.max(dev[-max(5, dev.size // 20):]))
    if float(np.max(dev)) <= FLOOR_RELATIVE * scale:
        return ItemResult(item, desc, "at_floor",
                          detail=f"max deviation {np.max(dev):.3g} is rounding noise")
    above = np.nonzero(dev > 100 * tail_level)[0]
    end = float(t[above[-1]]) if above.size else start
    try:
        fit = fit_decay(t, dev, (start, end), desc)
    except FitRefused as exc:
        return ItemResult(item, desc, "fail", detail=str(exc))
    ok = fit.lam > 0 and fit.r_squared >= FIT_R2_MIN
    return ItemResult(item, desc, "pass" if ok else "fail", fit,
                      f"rate {fit.lam:.4g}, r^2 {fit.r_squared:.4f}")


def verify_convergence(series: TimeSeries, limit: LimitCircle | None) -> ConvergenceReport:
    """Check exponential convergence of the run to ``limit``, item by item.

    Items, keyed by the labels used in reports:

    * ``"center"``: ``|c(t) - c_inf|``
    * ``"radius"``: ``|r(t) - r_inf|``
    * ``"phase"``: ``|sigma(t) - sigma_inf|`` on the unwrapped phase
    * ``"shape"``: sup-norm distance (``C^0``, ``C^1``, ``C^2``) of the
      phase-normalised curve to the limit-circle parametrisation
    * ``"convexity"``: finite convexification time
    * ``"hausdorff"``: Hausdorff distance of the region to the limit disk
    * ``"barycenter"``: ``A(t) |b(t) - c(t)|``, barycentre against Fourier centre

    A decay item passes when its fitted rate is positive with
    ``r^2 >= 0.95``. The fit runs from :func:`default_window`'s start to
    the last record where the deviation is above 100 times its tail level.
    """
    labels = {
        "center": "|c - c_inf|", "radius": "|r - r_inf|", "phase": "|sigma - sigma_inf|",
        "shape": "C^k distance of normalised curve, k <= 2",
        "convexity": "convexification time",
        "hausdorff": "Hausdorff distance to limit disk", "barycenter": "A |b - c|",
    }
    if limit is None or not series.healthy or len(series) < MIN_FIT_SAMPLES:
        why = "no limit circle" if limit is None else f"series status {series.status}"
        items = tuple(ItemResult(k, v, "unverifiable", detail=why) for k, v in labels.items())
        return ConvergenceReport(items, {})

    t = series.t
    start = default_window(series)[0]
    c = np.column_stack([series.column("cx"), series.column("cy")])
    b = np.column_stack([series.column("bx"), series.column("by")])
    area = series.column("A")
    sigma = unwrapped_phase(series)
    sigma_inf = float(np.mean(sigma[_tail(series)]))
    devs = {
        "center": np.linalg.norm(c - limit.c_inf, axis=1),
        "radius": np.abs(series.column("r") - limit.r_inf),
        "phase": np.abs(sigma - sigma_inf),
        "barycenter": area * np.linalg.norm(b - c, axis=1),
    }
    disk = DiskSpec(tuple(limit.c_inf), limit.r_inf)
    have_curves = len(series.curves) == len(series)
    if have_curves:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            devs["hausdorff"] = np.array([hausdorff_to_disk(cv, disk) for cv in series.curves])
        ck = np.array([_normalized_distance(cv, limit, s)
                       for cv, s in zip(series.curves, series.column("sigma"))])
        for k in range(3):
            devs[f"shape.C{k}"] = ck[:, k]

    scales = {"center": limit.r_inf, "radius": limit.r_inf, "phase": 1.0,
              "hausdorff": limit.r_inf, "barycenter": limit.A_inf * limit.r_inf}
    results = []
    for key in ("center", "radius", "phase"):
        results.append(_deviation_item(key, labels[key], t, devs[key], start, scales[key]))
    if have_curves:
        subs = [_deviation_item("shape", f"C^{k} distance", t, devs[f"shape.C{k}"], start, 1.0)
                for k in range(3)]
        sub_status = {s.status for s in subs}
        if sub_status == {"at_floor"}:
            status = "at_floor"
        else:
            status = "pass" if sub_status <= {"pass", "at_floor"} else "fail"
        detail = "; ".join(f"{s.description}: {s.status} ({s.detail})" for s in subs)
        results.append(ItemResult("shape", labels["shape"], status, subs[0].fit, detail))
    else:
        results.append(ItemResult("shape", labels["shape"], "unverifiable",
                                  detail="curves not stored"))
    conv = detect_convexity_time(series)
    results.append(ItemResult("convexity", labels["convexity"],
                              "pass" if conv.t_star is not None else "fail",
                              detail=f"T* = {conv.t_star} ({conv.reason})"))
    if have_curves:
        results.append(_deviation_item("hausdorff", labels["hausdorff"], t, devs["hausdorff"],
                                       start, scales["hausdorff"]))
    else:
        results.append(ItemResult("hausdorff", labels["hausdorff"], "unverifiable",
                                  detail="curves not stored"))
    results.append(_deviation_item("barycenter", labels["barycenter"], t, devs["barycenter"],
                                   start, scales["barycenter"]))
    return ConvergenceReport(tuple(results), devs)


# ------------------------------------------------------------------ report


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _plot_svgs(series: TimeSeries, out: Path, report: ConvergenceReport | None) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    with matplotlib.rc_context({"svg.hashsalt": "curveflow", "svg.fonttype": "none"}):
        t = series.t
        fig, ax = plt.subplots(figsize=(6, 4))
        for name in ("i_minus1", "i0", "i1", "i2", "i3", "i4"):
            q = series.column(name)
            keep = q > 0
            ax.semilogy(t[keep], q[keep], label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("value")
        ax.legend(fontsize="small")
        paths.append(_save(fig, out / "invariants.svg"))

        fig, ax = plt.subplots(figsize=(5, 5))
        if series.curves:
            picks = np.unique(np.linspace(0, len(series.curves) - 1, 6).round().astype(int))
            for i in picks:
                z = series.curves[i].z
                ax.plot(np.append(z.real, z.real[0]), np.append(z.imag, z.imag[0]),
                        label=f"t={series.t[i]:.3g}")
            ax.legend(fontsize="small")
        ax.set_aspect("equal")
        paths.append(_save(fig, out / "snapshots.svg"))

        fig, ax = plt.subplots(figsize=(6, 4))
        dh = report.deviations.get("hausdorff") if report is not None else None
        if dh is None:
            dh = series.column("dH")
        keep = dh > 0
        ax.semilogy(t[keep], dh[keep])
        ax.set_xlabel("t")
        ax.set_ylabel("Hausdorff distance to disk")
        paths.append(_save(fig, out / "hausdorff.svg"))
    return paths


def _save(fig, path: Path) -> Path:
    import matplotlib.pyplot as plt

    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def emit_report(series: TimeSeries, out_dir: str | Path,
                fits: list[DecayFit] | None = None) -> dict[str, Path]:
    """Write ``timeseries.csv``, ``summary.json`` and three SVG plots.

    With no records only the summary is written. Byte content depends only
    on the inputs.

    Returns
    -------
    dict
        Output name to path.

    Raises
    ------
    OSError
        If the directory cannot be created or written; the message names
        the path.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    written: dict[str, Path] = {}
    summary: dict = {"run_config": series.config, "status": series.status}
    if series.reason:
        summary["reason"] = series.reason
    report = None
    if len(series):
        if fits is None:
            fits = []
            for name in ("i_minus1", "i0", "i1", "i2", "i3", "i4"):
                try:
                    fits.append(fit_exponential(series, name))
                except FitRefused as exc:
                    log.info("fit skipped: %s", exc)
        conv = detect_convexity_time(series)
        try:
            limit = limit_circle(series)
        except LimitRefused as exc:
            limit = None
            summary["limit_circle_refused"] = str(exc)
        report = verify_convergence(series, limit)
        summary.update({
            "fits": [f.to_dict() for f in fits],
            "T_star": conv.t_star,
            "T_star_reason": conv.reason,
            "limit_circle": None if limit is None else limit.to_dict(),
            "convergence_checklist": report.to_dict(),
        })
    try:
        if len(series):
            written["csv"] = out / "timeseries.csv"
            written["csv"].write_text(series.to_csv())
        written["summary"] = out / "summary.json"
        written["summary"].write_text(
            json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")
        if len(series):
            for p in _plot_svgs(series, out, report):
                written[p.stem] = p
    except OSError as exc:
        raise OSError(f"cannot write report in {out}: {exc}") from exc
    return written
