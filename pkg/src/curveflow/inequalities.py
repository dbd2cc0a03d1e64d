"""Checks of the integral inequalities between the scale-invariant quantities.

Every check returns an :class:`InequalityReport` comparing a left-hand side
with a right-hand side, both dimensionless. :func:`fuzz_inequalities` runs a
list of checks over many random curves and records the largest ratio seen.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import math
from pathlib import Path

import numpy as np

from .geometry import ClosedCurve, CurveError, make_curve, write_curve_csv
from .quantities import curvature_bracket, fmt17, invariants_of, j_norm

__all__ = [
    "InequalityReport",
    "ConstantEstimate",
    "FuzzResult",
    "FuzzAbort",
    "CheckSpec",
    "DEFAULT_CHECKS",
    "check_deficit_chain",
    "check_interpolation",
    "check_gn_I",
    "check_gn_J",
    "check_wirtinger",
    "gn_theta",
    "run_check",
    "fuzz_inequalities",
]

TOL = 1e-8
ABS_TOL = 1e-12
FOUR_PI2 = 4.0 * np.pi**2


@dataclasses.dataclass(frozen=True)
class InequalityReport:
    """``lhs <= rhs`` for one curve.

    ``ratio`` is ``lhs / rhs``, with ``0 / 0`` taken as 0 and a positive
    ``lhs`` over a zero ``rhs`` as infinity.
    """

    name: str
    lhs: float
    rhs: float
    satisfied: bool
    params: tuple = ()

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ratio(self) -> float:
        return _ratio(self.lhs, self.rhs)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": list(self.params), "lhs": self.lhs,
                "rhs": self.rhs, "margin": self.margin, "ratio": self.ratio,
                "satisfied": self.satisfied}

    def to_json(self) -> str:
        d = self.to_dict()
        for key in ("lhs", "rhs", "margin", "ratio"):
            d[key] = _json_number(d[key])
        return json.dumps(d)


def _json_number(x: float):
    return x if math.isfinite(x) else str(x)


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    if lhs <= ABS_TOL:
        return 0.0
    return math.inf


def _report(name: str, lhs: float, rhs: float, params: tuple = ()) -> InequalityReport:
    lhs, rhs = float(lhs), float(rhs)
    ok = bool(lhs <= rhs * (1.0 + TOL) + ABS_TOL)
    return InequalityReport(name, lhs, rhs, ok, tuple(params))


# ------------------------------------------------------------------ checks


def check_deficit_chain(curve: ClosedCurve, middle_scale: float = 1.0
                        ) -> tuple[InequalityReport, InequalityReport]:
    """Two-sided bound on the energy ``I_0``.

    ``8 pi^2 I_{-1} <= M`` and ``M <= sqrt(I_{-1} B)`` where
    ``M = I_0 / middle_scale`` and ``B`` is :func:`curvature_bracket`.
    Both sides vanish together exactly on circles.

    With the default ``middle_scale = 1`` both hold for every closed
    curve. ``middle_scale = 8 pi^2`` makes the second bound weaker and the
    first one false in general (a mode-2 perturbation of a circle has
    ``I_0 / I_{-1}`` near ``12 pi^2``).
    """
    inv = invariants_of(curve, 0)
    middle = inv.i[0] / middle_scale
    deficit = max(inv.i_minus1, 0.0)
    bracket = max(curvature_bracket(curve), 0.0)
    params = () if middle_scale == 1.0 else (middle_scale,)
    return (_report("deficit_chain_lower", 8 * np.pi**2 * inv.i_minus1, middle, params),
            _report("deficit_chain_upper", middle, math.sqrt(deficit * bracket), params))


def check_interpolation(curve: ClosedCurve, ell: int, m: int,
                        constant: float | None = None) -> InequalityReport:
    """``I_l`` against ``I_{-1}^((m-l)/2) I_m + I_{-1}^((m-l)/(m+1)) I_m^((l+1)/(m+1))``.

    The constant in front of the right-hand side is not known in closed
    form. With ``constant=None`` the report compares ``I_l`` with the bare
    sum and counts as satisfied whenever the ratio is finite (a valid
    constant exists for this curve); :func:`fuzz_inequalities` then
    estimates the constant as the largest ratio seen. With a number, the
    right-hand side is scaled by it and the usual tolerance applies.
    """
    if ell < 0 or m < ell:
        raise ValueError(f"need 0 <= l <= m, got l={ell}, m={m}")
    inv = invariants_of(curve, m)
    d = max(inv.i_minus1, 0.0)
    im = inv.i[m]
    rhs = d ** ((m - ell) / 2) * im + d ** ((m - ell) / (m + 1)) * im ** ((ell + 1) / (m + 1))
    lhs = inv.i[ell]
    if constant is not None:
        return _report("interpolation", lhs, constant * rhs, (ell, m))
    ok = math.isfinite(_ratio(lhs, rhs))
    return InequalityReport("interpolation", float(lhs), float(rhs), ok, (ell, m))


def check_gn_I(curve: ClosedCurve, ell: int, m: int) -> InequalityReport:
    """``I_l <= I_m^(l/m) I_0^(1 - l/m)`` (constant 1, by Hoelder on Fourier sums)."""
    if m < 1 or ell < 0 or ell > m:
        raise ValueError(f"need 0 <= l <= m and m >= 1, got l={ell}, m={m}")
    inv = invariants_of(curve, m)
    s = ell / m
    rhs = inv.i[m] ** s * inv.i[0] ** (1 - s)
    return _report("gn_I", inv.i[ell], rhs, (ell, m))


def gn_theta(k: int, p: float, m: int) -> float:
    """Interpolation exponent ``(k - 1/p + 1/2) / m``."""
    return (k - 1.0 / p + 0.5) / m


def check_gn_J(curve: ClosedCurve, k: int, p: float, m: int) -> InequalityReport:
    """``J_{k,p} <= J_{m,2}^theta J_{0,2}^(1-theta)`` with ``theta = gn_theta(k, p, m)``.

    The constant is taken as 1; for ``(0, p, 1)`` and ``(1, 3, 2)`` that
    follows from ``sup u^2 <= |u|_2 |u'|_2`` for mean-zero periodic ``u``.

    Raises
    ------
    ValueError
        If ``k > m``, ``p < 2`` or ``theta`` falls outside ``[0, 1]``.
    """
    if k < 0 or m < 1 or k > m:
        raise ValueError(f"need 0 <= k <= m and m >= 1, got k={k}, m={m}")
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")
    theta = gn_theta(k, p, m)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta = {theta:.6g} outside [0, 1] for (k, p, m) = ({k}, {p}, {m})")
    lhs = j_norm(curve, k, p)
    rhs = j_norm(curve, m, 2) ** theta * j_norm(curve, 0, 2) ** (1 - theta)
    return _report("gn_J", lhs, rhs, (k, p, m))


def check_wirtinger(curve: ClosedCurve, ell: int) -> InequalityReport:
    """``4 pi^2 I_l <= I_{l+1}``: the mean-zero Poincare bound with period ``L``."""
    if ell < 0:
        raise ValueError(f"need l >= 0, got {ell}")
    inv = invariants_of(curve, ell + 1)
    return _report("wirtinger", FOUR_PI2 * inv.i[ell], inv.i[ell + 1], (ell,))


# -------------------------------------------------------------------- fuzz

CheckSpec = tuple


DEFAULT_CHECKS: tuple[CheckSpec, ...] = (
    ("deficit_chain",),
    ("interpolation", 0, 1), ("interpolation", 0, 2), ("interpolation", 1, 2),
    ("gn_I", 0, 1), ("gn_I", 0, 2), ("gn_I", 1, 2),
    ("gn_J", 0, 3, 1), ("gn_J", 0, 4, 1), ("gn_J", 1, 3, 2),
    ("wirtinger", 0), ("wirtinger", 1),
)


def parse_check(text: str) -> CheckSpec:
    """``"gn_J:1,3,2"`` -> ``("gn_J", 1, 3, 2)``; ``"deficit_chain"`` -> ``("deficit_chain",)``."""
    name, _, rest = text.partition(":")
    if name not in _CHECKS:
        raise ValueError(f"unknown check {name!r}; choose from {sorted(_CHECKS)}")
    args = tuple(int(v) for v in rest.split(",")) if rest else ()
    return (name, *args)


def check_label(spec: CheckSpec) -> str:
    name, *args = spec
    return name if not args else f"{name}:{','.join(str(a) for a in args)}"


_CHECKS = {
    "deficit_chain": check_deficit_chain,
    "interpolation": check_interpolation,
    "gn_I": check_gn_I,
    "gn_J": check_gn_J,
    "wirtinger": check_wirtinger,
}


def run_check(curve: ClosedCurve, spec: CheckSpec) -> list[InequalityReport]:
    """Run one check; the deficit chain yields two reports, the others one."""
    name, *args = spec
    out = _CHECKS[name](curve, *args)
    return list(out) if isinstance(out, tuple) else [out]


@dataclasses.dataclass(frozen=True)
class ConstantEstimate:
    """Largest ``lhs / rhs`` over the trials of one inequality."""

    check: str
    params: tuple
    trials: int
    sup_ratio: float
    worst_curve: dict | None
    worst_curve_file: str | None = None

    def to_dict(self) -> dict:
        return {"check": self.check, "params": list(self.params), "trials": self.trials,
                "sup_ratio": _json_number(self.sup_ratio), "worst_curve": self.worst_curve,
                "worst_curve_file": self.worst_curve_file}


@dataclasses.dataclass(frozen=True)
class Violation:
    trial: int
    curve: dict
    report: InequalityReport


@dataclasses.dataclass(frozen=True)
class FuzzResult:
    estimates: tuple[ConstantEstimate, ...]
    violations: tuple[Violation, ...]
    trials: int
    failures: int

    def to_json(self) -> str:
        return json.dumps({"trials": self.trials, "generator_failures": self.failures,
                           "violations": len(self.violations),
                           "estimates": [e.to_dict() for e in self.estimates]},
                          indent=2, sort_keys=True) + "\n"

    def violations_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "curve", "check", "params", "lhs", "rhs", "ratio"])
        for v in self.violations:
            r = v.report
            w.writerow([v.trial, json.dumps(v.curve, sort_keys=True), r.name,
                        " ".join(str(p) for p in r.params),
                        fmt17(r.lhs), fmt17(r.rhs), fmt17(r.ratio)])
        return buf.getvalue()


class FuzzAbort(RuntimeError):
    """The curve generator failed on more than half of the draws."""


def trial_descriptor(generator: dict, seed: int, index: int) -> dict:
    """Generator descriptor for one trial, with its own derived seed."""
    desc = dict(generator)
    if desc.get("type") == "random_fourier":
        state = np.random.SeedSequence([int(seed), int(index)]).generate_state(1)
        desc["seed"] = int(state[0])
    return desc


def _evaluate(desc: dict, checks: tuple[CheckSpec, ...]):
    try:
        curve = make_curve(desc)
    except CurveError as exc:
        return None, str(exc)
    return [r for spec in checks for r in run_check(curve, spec)], None


def fuzz_inequalities(generator: dict, trials: int, checks=DEFAULT_CHECKS, seed: int = 0,
                      workers: int = 1, out_dir: str | Path | None = None) -> FuzzResult:
    """Run ``checks`` on ``trials`` generated curves.

    Draw ``i`` uses the descriptor :func:`trial_descriptor` ``(generator,
    seed, i)``, so the result does not depend on ``workers``. Draws the
    generator rejects are replaced by further draws, up to ``2 * trials``
    in total.

    With ``out_dir`` the JSON summary (``fuzz_report.json``), the violation
    log (``violations.csv``) and the worst curve of each inequality
    (``worst_<label>.csv``) are written there.

    Raises
    ------
    ValueError
        If ``trials < 1``.
    FuzzAbort
        If more than half of the draws fail.
    """
    if int(trials) < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    checks = tuple(tuple(c) for c in checks)
    results: list[tuple[int, dict, list[InequalityReport]]] = []
    failures = 0
    next_index = 0
    pool = concurrent.futures.ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while len(results) < trials:
            if next_index >= 2 * trials:
                raise FuzzAbort(f"generator failed on {failures} of {next_index} draws "
                                f"({generator})")
            batch = range(next_index, min(2 * trials, next_index + trials - len(results)))
            descs = [trial_descriptor(generator, seed, i) for i in batch]
            if pool is None:
                outs = [_evaluate(d, checks) for d in descs]
            else:
                outs = list(pool.map(_evaluate, descs, [checks] * len(descs)))
            for i, d, (reports, err) in zip(batch, descs, outs):
                if reports is None:
                    failures += 1
                elif len(results) < trials:
                    results.append((i, d, reports))
            next_index = batch.stop
    finally:
        if pool is not None:
            pool.shutdown()

    estimates = []
    violations = []
    n_reports = len(results[0][2])
    for j in range(n_reports):
        ratios = np.array([rep[j].ratio for _, _, rep in results])
        worst = int(np.argmax(ratios))
        first = results[0][2][j]
        label = check_label((first.name, *first.params))
        estimates.append(ConstantEstimate(label, first.params, len(results),
                                          float(ratios[worst]), results[worst][1]))
    for i, d, reps in results:
        violations.extend(Violation(i, d, r) for r in reps if not r.satisfied)
    result = FuzzResult(tuple(estimates), tuple(violations), len(results), failures)
    if out_dir is not None:
        result = _write_fuzz(result, Path(out_dir))
    return result


def _write_fuzz(result: FuzzResult, out: Path) -> FuzzResult:
    out.mkdir(parents=True, exist_ok=True)
    estimates = []
    for e in result.estimates:
        path = None
        if e.worst_curve is not None:
            name = "worst_" + e.check.replace(":", "_").replace(",", "-").replace(".", "p")
            path = out / f"{name}.csv"
            write_curve_csv(make_curve(e.worst_curve), path)
            path = path.name
        estimates.append(dataclasses.replace(e, worst_curve_file=path))
    result = dataclasses.replace(result, estimates=tuple(estimates))
    (out / "fuzz_report.json").write_text(result.to_json())
    (out / "violations.csv").write_text(result.violations_csv())
    return result
