import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from curveflow.experiments import fit_decay
from curveflow.geometry import (
    CurveError, make_curve, resample_uniform_arclength, rotation_number, signed_area, transform,
    turning_number,
)
from curveflow.inequalities import DEFAULT_CHECKS, run_check
from curveflow.quantities import (
    curvature_bracket, fourier_frame, invariants_of, j_norm, InvariantVector,
)

seeds = st.integers(0, 2**32 - 1)
scales = st.sampled_from([0.1, 0.37, 1.0, 2.5, 10.0])
angles = st.floats(-np.pi, np.pi)
shifts = st.tuples(st.floats(-5, 5), st.floats(-5, 5))


def fuzz_curve(seed, n=256):
    try:
        return make_curve({"type": "random_fourier", "seed": seed, "N": n})
    except CurveError:
        # screened out; the circle keeps the property meaningful but trivial
        return make_curve({"type": "circle", "N": n})


@given(seeds)
def test_turning_number_is_integral(seed):
    c = fuzz_curve(seed)
    assert abs(turning_number(c) - rotation_number(c)) < 1e-4


@given(seeds)
def test_orientation_flip(seed):
    c = fuzz_curve(seed)
    r = c.reversed()
    g, h = c.geometry, r.geometry
    assert h.L == pytest.approx(g.L, rel=1e-12)
    assert h.A == pytest.approx(-g.A, rel=1e-12)
    # reversed() maps sample j to sample -j
    np.testing.assert_allclose(h.kappa, -np.roll(g.kappa[::-1], 1), atol=1e-9 * np.abs(g.kappa).max())


@given(seeds, scales, shifts, angles)
def test_similarity_laws(seed, lam, b, phi):
    c = fuzz_curve(seed)
    g = c.geometry
    h = transform(c, lam, b, phi).geometry
    assert h.L == pytest.approx(lam * g.L, rel=1e-8)
    assert h.A == pytest.approx(lam**2 * g.A, rel=1e-8)
    np.testing.assert_allclose(h.kappa, g.kappa / lam, rtol=1e-8, atol=1e-8 * np.abs(g.kappa / lam).max())


@given(seeds, scales, shifts, angles)
def test_invariants_are_similarity_invariant(seed, lam, b, phi):
    c = fuzz_curve(seed)
    d = transform(c, lam, (lam * b[0], lam * b[1]), phi)
    a, e = invariants_of(c), invariants_of(d)
    assert e.i_minus1 == pytest.approx(a.i_minus1, rel=1e-10, abs=1e-14)
    np.testing.assert_allclose(e.i[:4], a.i[:4], rtol=1e-10, atol=1e-14)
    # five derivatives amplify the rounding of the transformed coordinates
    # to ~1e-10 relative (measured up to 1.4e-10 over 200 curves)
    assert e.i[4] == pytest.approx(a.i[4], rel=3e-10, abs=1e-14)
    assert j_norm(d, 1, 3) == pytest.approx(j_norm(c, 1, 3), rel=1e-10)
    assert curvature_bracket(d) == pytest.approx(curvature_bracket(c), rel=1e-10, abs=1e-12)


@given(seeds, scales, shifts, angles)
def test_frame_equivariance(seed, lam, b, phi):
    c = fuzz_curve(seed)
    f0, f1 = fourier_frame(c), fourier_frame(transform(c, lam, b, phi))
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    np.testing.assert_allclose(f1.c, lam * rot @ f0.c + np.array(b), atol=1e-9 * (1 + lam))
    assert f1.r == pytest.approx(lam * f0.r, rel=1e-10)
    assert f1.residual == pytest.approx(f0.residual, rel=1e-8, abs=1e-14)


@given(seeds)
def test_definitional_identity(seed):
    c = fuzz_curve(seed)
    inv = invariants_of(c)
    for k in range(5):
        assert j_norm(c, k, 2) ** 2 == pytest.approx(inv.i[k], rel=1e-10, abs=1e-14)


@given(seeds)
def test_deficit_nonnegative_and_vector_round_trip(seed):
    inv = invariants_of(fuzz_curve(seed))
    assert 0 <= inv.i_minus1 < 1
    assert all(v >= 0 for v in inv.i)
    assert InvariantVector.from_json(inv.to_json()) == inv


@given(seeds)
def test_resample_idempotent(seed):
    c = fuzz_curve(seed, 512)
    r = resample_uniform_arclength(c)
    np.testing.assert_allclose(r.points, c.points, atol=1e-8 * c.geometry.L)
    assert r.geometry.L == pytest.approx(c.geometry.L, rel=1e-6)
    assert signed_area(r) == pytest.approx(signed_area(c), rel=1e-6)


@given(seeds)
def test_no_inequality_violations(seed):
    c = fuzz_curve(seed)
    for spec in DEFAULT_CHECKS:
        for rep in run_check(c, spec):
            assert rep.satisfied, rep


@given(seeds, st.sampled_from([0.1, 10.0]))
def test_inequality_ratios_scale_free(seed, lam):
    c = fuzz_curve(seed)
    d = transform(c, lam)
    for spec in DEFAULT_CHECKS:
        for a, b in zip(run_check(c, spec), run_check(d, spec)):
            assert b.ratio == pytest.approx(a.ratio, rel=1e-8, abs=1e-14)


@given(st.floats(0.1, 100), st.floats(0.01, 10), st.integers(10, 60))
def test_fit_recovers_exponential(C, lam, n):
    t = np.linspace(0, 2 / lam, n)
    fit = fit_decay(t, C * np.exp(-lam * t))
    assert fit.C == pytest.approx(C, rel=1e-6)
    assert fit.lam == pytest.approx(lam, rel=1e-6)
