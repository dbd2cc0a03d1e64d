import dataclasses

import numpy as np
import pytest

from curveflow.flows import (
    BlowUpError, FlowError, FlowKind, Scheme, dAdt_residual, initial_state,
    nonlocal_coefficient, run, step,
)
from curveflow.geometry import ClosedCurve, make_curve, signed_area
from curveflow.quantities import invariants_of

KINDS = list(FlowKind)
AREA_MATCHED = {"type": "ellipse", "a": 1.2, "b": 1 / 1.2}


class TestCoefficient:
    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("rho", [1.0, 0.5, 4.0])
    def test_circle(self, kind, rho):
        c = make_curve({"type": "circle", "radius": rho})
        assert nonlocal_coefficient(kind, c) == pytest.approx(1 / rho, rel=1e-12)

    def test_length_preserving_two_formulas(self, ellipse512):
        g = ellipse512.geometry
        i0 = invariants_of(ellipse512, 0).i[0]
        via_deviation = (i0 / g.L + 4 * np.pi**2 / g.L) / (2 * np.pi)
        direct = nonlocal_coefficient(FlowKind.LENGTH_PRESERVING, ellipse512)
        assert direct == pytest.approx(via_deviation, rel=1e-8)

    def test_area_preserving_is_mean_curvature(self, flower):
        g = flower.geometry
        assert nonlocal_coefficient("area_preserving", flower) == pytest.approx(
            2 * np.pi / g.L, rel=1e-12)

    def test_jiang_pan_needs_positive_area(self, unit_circle):
        with pytest.raises(FlowError, match="positive area"):
            nonlocal_coefficient(FlowKind.JIANG_PAN, unit_circle.reversed())


class TestInitialState:
    def test_rejects_reversed(self, unit_circle):
        with pytest.raises(FlowError, match="rotation number"):
            initial_state(unit_circle.reversed(), FlowKind.LENGTH_PRESERVING)

    def test_rejects_double_loop(self):
        t = np.arange(64) / 64
        c = ClosedCurve.from_complex(np.exp(4j * np.pi * t))
        with pytest.raises(FlowError, match="rotation number must be 1"):
            initial_state(c, FlowKind.AREA_PRESERVING)

    def test_resamples(self):
        n = 128
        theta = np.arange(n) / n
        phi = 2 * np.pi * theta + 0.3 * np.sin(2 * np.pi * theta)
        st = initial_state(ClosedCurve.from_complex(np.exp(1j * phi)), "jiang_pan")
        np.testing.assert_allclose(st.curve.z, np.exp(2j * np.pi * theta), atol=1e-10)
        assert st.lam == pytest.approx(1.0)


class TestStep:
    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("scheme", list(Scheme))
    def test_circle_is_fixed(self, unit_circle, kind, scheme):
        st = initial_state(unit_circle, kind)
        new, stats = step(st, 1e-3, scheme=scheme)
        np.testing.assert_allclose(new.curve.points, unit_circle.points, atol=1e-8)
        assert new.t == pytest.approx(1e-3)
        assert all(np.isfinite(v) for v in dataclasses.astuple(stats))

    def test_length_conserved_per_step(self):
        st = initial_state(make_curve({"type": "ellipse", "a": 1.5, "b": 2 / 3}),
                           FlowKind.LENGTH_PRESERVING)
        for _ in range(5):
            L0 = st.curve.geometry.L
            st, stats = step(st, 1e-4)
            assert abs(stats.dL) / L0 <= 1e-6

    def test_area_conserved_per_step(self, flower):
        st = initial_state(flower, FlowKind.AREA_PRESERVING)
        for _ in range(5):
            A0 = st.curve.geometry.A
            st, stats = step(st, 1e-4)
            assert abs(stats.dA) / A0 <= 1e-6

    def test_first_order_scheme_available(self, flower):
        st = initial_state(flower, FlowKind.AREA_PRESERVING)
        a, _ = step(st, 1e-4, scheme="imex_euler")
        b, _ = step(st, 1e-4, scheme=Scheme.ARS222)
        gap = np.max(np.abs(a.curve.z - b.curve.z))
        assert 0 < gap < 1e-5

    def test_output_is_uniform_arclength(self):
        # at N=256 the flower's top modes (~4e-10) alias into the spacing
        flower = make_curve({"type": "polar", "modes": [[3, 0.3, 0]], "N": 512})
        st, _ = step(initial_state(flower, "length_preserving"), 1e-3)
        gaps = np.diff(np.append(st.curve.geometry.s, st.curve.geometry.L))
        assert np.std(gaps) / np.mean(gaps) < 1e-8

    def test_resolution_sentinel(self):
        c = make_curve({"type": "polar", "modes": [[3, 0.3, 0]], "N": 16}, screen=False)
        st = dataclasses.replace(initial_state(make_curve({"type": "circle"}), "jiang_pan"),
                                 curve=c)
        with pytest.raises(BlowUpError, match="exceeds"):
            step(st, 1e-3)

    def test_rejects_bad_dt(self, unit_circle):
        with pytest.raises(FlowError, match="positive"):
            step(initial_state(unit_circle, "jiang_pan"), 0.0)

    def test_renormalize_restores_length(self):
        st = initial_state(make_curve({"type": "ellipse", "a": 1.5, "b": 2 / 3}),
                           FlowKind.LENGTH_PRESERVING)
        L0 = st.curve.geometry.L
        new, _ = step(st, 1e-2, renormalize=True)
        assert new.curve.geometry.L == pytest.approx(L0, rel=1e-13)

    def test_self_intersection_warning(self, monkeypatch, flower):
        import curveflow.flows as fl

        monkeypatch.setattr(fl, "is_simple", lambda curve: False)
        with pytest.warns(RuntimeWarning, match="self-intersects"):
            step(initial_state(flower, "area_preserving"), 1e-4, check_simple=True)

    def test_stats_conditioning(self, unit_circle):
        _, stats = step(initial_state(unit_circle, "jiang_pan"), 1e-3)
        assert stats.implicit_condition == pytest.approx(1 + 1e-3 * (256 / 2) ** 2)


class TestAreaRate:
    def test_circle(self, unit_circle):
        st = initial_state(unit_circle, FlowKind.LENGTH_PRESERVING)
        assert dAdt_residual(st, 1e-4) < 1e-6

    def test_ellipse_second_order(self):
        st = initial_state(make_curve({"type": "ellipse", "a": 1.5, "b": 2 / 3, "N": 512}),
                           FlowKind.LENGTH_PRESERVING)
        r1 = dAdt_residual(st, 1e-4)
        r2 = dAdt_residual(st, 5e-5)
        assert r1 < 1e-2
        assert r1 / r2 == pytest.approx(4, rel=0.1)

    def test_only_length_preserving(self, flower):
        with pytest.raises(FlowError, match="length-preserving"):
            dAdt_residual(initial_state(flower, FlowKind.AREA_PRESERVING), 1e-4)


class TestRun:
    @pytest.mark.parametrize("kind", KINDS)
    def test_circle_stays(self, kind, unit_circle):
        ts = run(unit_circle, kind, 0.05, 1e-3, record_every=10)
        assert ts.healthy
        np.testing.assert_allclose(ts.t, [0, 0.01, 0.02, 0.03, 0.04, 0.05], atol=1e-15)
        for name in ("i0", "i1", "i2", "i3", "i4"):
            assert np.all(ts.column(name) < 1e-8)
        np.testing.assert_allclose(ts.column("L"), 2 * np.pi, rtol=1e-10)

    def test_last_step_lands_on_end(self, unit_circle):
        ts = run(unit_circle, "jiang_pan", 0.0105, 1e-3, record_every=4)
        assert ts.t[-1] == 0.0105
        assert list(ts.t[:-1]) == pytest.approx([0, 0.004, 0.008])

    def test_deficit_decreases(self):
        ts = run(make_curve(AREA_MATCHED), FlowKind.LENGTH_PRESERVING, 0.2, 1e-3, 5)
        d = ts.column("i_minus1")
        assert np.all(np.diff(d) <= 1e-10)
        assert d[-1] < d[0]

    def test_rejects_invalid_initial(self, unit_circle):
        with pytest.raises(FlowError):
            run(unit_circle.reversed(), "jiang_pan", 0.1, 1e-3)
        with pytest.raises(FlowError):
            run(unit_circle, "jiang_pan", 0.1, 1e-3, record_every=0)

    def test_blow_up_ends_run(self, monkeypatch, unit_circle):
        import curveflow.flows as fl

        monkeypatch.setattr(fl, "RESOLUTION_LIMIT", 1e-3)
        ts = run(unit_circle, "jiang_pan", 0.1, 1e-3)
        assert ts.status == "blow_up" and "exceeds" in ts.reason
        assert len(ts) == 1

    def test_config_is_stored(self, unit_circle):
        ts = run(unit_circle, "jiang_pan", 0.002, 1e-3, config={"seed": 5})
        assert ts.config == {"seed": 5}
