import json

import numpy as np
import pytest

import oracles
from curveflow.experiments import (
    COLUMNS, FitRefused, LimitRefused, TimeSeries, default_window, detect_convexity_time,
    emit_report, fit_decay, fit_exponential, limit_circle, record_of, verify_convergence,
)
from curveflow.flows import run
from curveflow.geometry import make_curve


def synthetic(t, **cols):
    ts = TimeSeries()
    base = {k: 0.0 for k in COLUMNS}
    base.update(L=2 * np.pi, A=np.pi, r=1.0, min_kappa=1.0)
    for i, ti in enumerate(t):
        row = dict(base, t=float(ti))
        for k, v in cols.items():
            row[k] = float(v[i])
        ts.append(row)
    return ts


class TestFits:
    def test_exact_exponential(self):
        t = np.linspace(0, 2, 41)
        fit = fit_decay(t, 5 * np.exp(-3 * t))
        assert fit.C == pytest.approx(5, abs=1e-6)
        assert fit.lam == pytest.approx(3, abs=1e-6)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.samples == 41

    def test_modulated_exponential(self):
        t = np.linspace(0, 10, 201)
        q = np.exp(-t) * (2 + np.sin(t))
        fit = fit_decay(t, q)
        assert 0.9 <= fit.lam <= 1.1
        assert fit.r_squared < 1
        C, lam, r2 = oracles.brute_fit(t, q)
        assert (fit.C, fit.lam, fit.r_squared) == pytest.approx((C, lam, r2), rel=1e-10)

    def test_window_restricts_samples(self):
        t = np.linspace(0, 2, 41)
        fit = fit_decay(t, 5 * np.exp(-3 * t), (0.5, 1.5))
        assert fit.samples == 21 and fit.window == (0.5, 1.5)

    def test_refused_below_floor(self):
        t = np.linspace(0, 1, 30)
        q = np.where(t < 0.2, 1.0, 1e-16)
        with pytest.raises(FitRefused, match="6 samples"):
            fit_decay(t, q, name="q")

    def test_default_window(self):
        t = np.linspace(0, 10, 101)
        ts = synthetic(t, i_minus1=0.2 * np.exp(-3 * t))
        lo, hi = default_window(ts)
        assert lo == pytest.approx(0.3)  # first sample at or below half
        assert hi == pytest.approx(7.2)  # first sample at or below 1e-10
        fit = fit_exponential(ts, "i_minus1")
        assert fit.lam == pytest.approx(3, rel=1e-10)

    def test_to_dict_keys(self):
        t = np.linspace(0, 1, 20)
        d = fit_decay(t, np.exp(-t)).to_dict()
        assert set(d) == {"quantity", "window", "C", "lambda", "r_squared", "samples"}


class TestTimeSeries:
    def test_requires_columns(self):
        with pytest.raises(ValueError, match="lacks"):
            TimeSeries().append({"t": 0.0})

    def test_requires_increasing_time(self):
        ts = synthetic([0.0, 1.0])
        row = dict(ts.rows[-1])
        with pytest.raises(ValueError, match="increase"):
            ts.append(row)

    def test_csv_round_trip(self, flower):
        ts = TimeSeries()
        ts.record(flower, 0.0)
        ts.record(flower, 0.5)
        back = TimeSeries.from_csv(ts.to_csv())
        assert back.rows == ts.rows
        assert ts.to_csv().splitlines()[0] == ",".join(COLUMNS)

    def test_bad_header(self):
        with pytest.raises(ValueError, match="header"):
            TimeSeries.from_csv("a,b\n1,2\n")

    def test_record_fields(self, ellipse):
        row = record_of(ellipse, 0.0)
        assert set(row) == set(COLUMNS)
        assert row["min_kappa"] == pytest.approx(0.25, rel=1e-6)
        assert row["dH"] > 0


class TestConvexity:
    def test_convex_from_start(self):
        ts = run(make_curve({"type": "ellipse", "a": 1.2, "b": 1 / 1.2}), "length_preserving",
                 0.01, 1e-3, 5)
        res = detect_convexity_time(ts)
        assert res.t_star == 0.0 and res.reason == "convex"

    def test_becomes_convex(self):
        ts = synthetic([0, 1, 2, 3], min_kappa=[-1, 0.5, 1, 1])
        assert detect_convexity_time(ts).t_star == 1.0

    def test_lost(self):
        ts = synthetic([0, 1, 2], min_kappa=[1, 1, -1])
        res = detect_convexity_time(ts)
        assert res.t_star is None and res.reason == "convexity_lost"

    def test_regained(self):
        ts = synthetic([0, 1, 2, 3], min_kappa=[1, -1, 1, 1])
        assert detect_convexity_time(ts).t_star == 2.0

    def test_never(self):
        assert detect_convexity_time(synthetic([0, 1], min_kappa=[-1, -1])).reason == "never_convex"

    def test_borderline_counts_as_not_convex(self):
        ts = synthetic([0, 1], min_kappa=[1e-12, 1])
        assert detect_convexity_time(ts).t_star == 1.0

    def test_unhealthy_and_empty(self):
        ts = synthetic([0, 1])
        ts.status = "blow_up"
        assert detect_convexity_time(ts).reason == "unhealthy: blow_up"
        assert detect_convexity_time(TimeSeries()).reason == "empty"


class TestLimitCircle:
    def test_circle(self):
        c = make_curve({"type": "circle", "radius": 1.5, "center": [0.5, -1]})
        ts = run(c, "area_preserving", 0.01, 1e-3)
        lim = limit_circle(ts)
        np.testing.assert_allclose(lim.c_inf, [0.5, -1], atol=1e-10)
        assert lim.r_inf == pytest.approx(1.5, rel=1e-10)
        assert lim.sigma_inf == pytest.approx(0.0, abs=1e-10)
        assert abs(lim.r_inf - lim.L_inf / (2 * np.pi)) / lim.r_inf < 1e-6

    def test_refuses_undecayed(self, flower):
        ts = run(flower, "length_preserving", 0.01, 1e-3)
        with pytest.raises(LimitRefused, match="deficit"):
            limit_circle(ts)

    def test_refuses_short_or_unhealthy(self):
        with pytest.raises(LimitRefused, match="at least 5"):
            limit_circle(synthetic([0, 1]))
        ts = synthetic(range(6))
        ts.status = "failed"
        with pytest.raises(LimitRefused, match="failed"):
            limit_circle(ts)


class TestConvergenceReport:
    def test_circle_run_is_trivial(self, unit_circle):
        ts = run(unit_circle, "jiang_pan", 0.02, 1e-3)
        rep = verify_convergence(ts, limit_circle(ts))
        statuses = {r.item: r.status for r in rep.items}
        assert statuses.pop("convexity") == "pass"
        assert set(statuses.values()) == {"at_floor"}

    def test_unverifiable_without_limit(self):
        rep = verify_convergence(synthetic(range(20)), None)
        assert {r.status for r in rep.items} == {"unverifiable"}
        assert len(rep.items) == 7

    def test_synthetic_decay(self):
        t = np.linspace(0, 5, 101)
        decay = np.exp(-3 * t)
        ts = synthetic(t, i_minus1=0.1 * decay, cx=0.3 * decay, r=1 + 0.2 * decay,
                       sigma=0.5 * decay, bx=0.6 * decay, L=np.full_like(t, 2 * np.pi))
        rep = verify_convergence(ts, limit_circle(ts))
        for item in ("center", "radius", "phase", "barycenter"):
            assert rep[item].status == "pass"
            assert rep[item].fit.lam == pytest.approx(3, rel=0.05)
        assert rep["shape"].status == "unverifiable"
        assert rep["convexity"].status == "pass"
        with pytest.raises(KeyError):
            rep["gamma"]


class TestEmitReport:
    def test_empty_series(self, tmp_path):
        written = emit_report(TimeSeries(config={"kind": "x"}), tmp_path)
        assert set(written) == {"summary"}
        assert sorted(p.name for p in tmp_path.iterdir()) == ["summary.json"]
        assert json.loads((tmp_path / "summary.json").read_text()) == {
            "run_config": {"kind": "x"}, "status": "healthy"}

    def test_files_and_determinism(self, tmp_path):
        ts = run(make_curve({"type": "ellipse", "a": 1.2, "b": 1 / 1.2, "N": 64}),
                 "length_preserving", 0.05, 1e-3, 5)
        emit_report(ts, tmp_path / "a")
        emit_report(ts, tmp_path / "b")
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == ["hausdorff.svg", "invariants.svg", "snapshots.svg", "summary.json",
                         "timeseries.csv"]
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert {"run_config", "status", "fits", "T_star", "limit_circle",
                "convergence_checklist"} <= set(summary)

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match="file"):
            emit_report(synthetic([0.0]), blocker / "sub")
