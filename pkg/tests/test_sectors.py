import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mezo import sectors
from mezo.errors import DefectiveMatrixError
from mezo.sectors import GrowthMatrix, ShockSchedule

import oracles

GRID = np.round(np.arange(0, 601) * 0.1, 10)


@pytest.fixture(scope="module")
def crossing():
    return sectors.integrate(ShockSchedule.constant(oracles.CROSSING_G, [1.0, 0.01]), GRID)


def test_policy_matrix():
    g = sectors.build_policy_matrix(0.02, -0.05, 0.1)
    np.testing.assert_allclose(g.entries, [[-0.03, 0.05], [0.05, -0.10]], atol=1e-15)
    np.testing.assert_array_equal(sectors.build_policy_matrix(0.3, -0.2, 0).entries, np.diag([0.3, -0.2]))
    with pytest.raises(ValueError):
        sectors.build_policy_matrix(0.02, -0.05, -0.1)


@pytest.mark.parametrize("mu", [0.1, 0.05])
def test_policy_lambda_max(mu):
    lam = sectors.eigen_solve(sectors.build_policy_matrix(0.02, -0.05, mu)).lambda_max
    assert lam == pytest.approx(oracles.POLICY_LAMBDA[mu], abs=1e-12)


def test_growth_matrix_validation():
    with pytest.raises(ValueError, match="square"):
        GrowthMatrix.of([[1, 0, 0], [0, 1, 0]])
    with pytest.raises(ValueError, match="off-diagonal"):
        GrowthMatrix.of([[1, -0.1], [0, 1]])
    with pytest.raises(ValueError):
        GrowthMatrix.of([[np.nan]])


def test_schedule_validation():
    g = oracles.CROSSING_G
    with pytest.raises(ValueError, match="t=0"):
        ShockSchedule(((1.0, g),), [1, 1])
    with pytest.raises(ValueError, match="increasing"):
        ShockSchedule(((0.0, g), (5.0, g), (5.0, g)), [1, 1])
    with pytest.raises(ValueError, match="dimension"):
        ShockSchedule(((0.0, g),), [1, 1, 1])
    with pytest.raises(ValueError, match="> 0"):
        ShockSchedule(((0.0, g),), [1, 0])


def test_crossing_eigenvalues():
    eig = sectors.eigen_solve(GrowthMatrix.of(oracles.CROSSING_G))
    np.testing.assert_allclose(eig.eigenvalues, oracles.CROSSING_LAMBDA, atol=1e-12)
    assert eig.lambda_max == pytest.approx(oracles.CROSSING_LAMBDA[0], abs=1e-12)
    # symmetric G: orthogonal eigenvectors
    assert abs(eig.eigenvectors[:, 0] @ eig.eigenvectors[:, 1]) < 1e-12
    assert eig.analytic


def test_scalar_multiple_of_identity():
    eig = sectors.eigen_solve(GrowthMatrix.of(np.eye(2) * 0.3))
    np.testing.assert_allclose(eig.eigenvalues, [0.3, 0.3])
    k = sectors.analytic_solution(GrowthMatrix.of(np.eye(2) * 0.3), [2.0, 5.0], 4.0)
    np.testing.assert_allclose(k, np.exp(1.2) * np.array([2.0, 5.0]), rtol=1e-14)


def test_zero_generator_keeps_state():
    k = sectors.analytic_solution(GrowthMatrix.of(np.zeros((3, 3))), [1.0, 2.0, 3.0], 7.0)
    np.testing.assert_allclose(k, [1.0, 2.0, 3.0])


def test_defective_matrix_falls_back():
    g = GrowthMatrix.of([[0.1, 1.0], [0.0, 0.1]])
    eig = sectors.eigen_solve(g)
    assert not eig.analytic
    with pytest.raises(DefectiveMatrixError):
        sectors.analytic_solution(g, [1.0, 1.0], 1.0)
    with pytest.raises(DefectiveMatrixError):
        sectors.integrate(ShockSchedule.constant(g, [1.0, 1.0]), [0.0, 1.0], method="analytic")
    tr = sectors.integrate(ShockSchedule.constant(g, [1.0, 1.0]), [0.0, 1.0, 2.0])
    assert tr.method == "numerical"
    # exact: k2 = e^{0.1 t}, k1 = (1 + t) e^{0.1 t}
    np.testing.assert_allclose(tr.k[:, 1], np.exp(0.1 * tr.times), rtol=1e-10)
    np.testing.assert_allclose(tr.k[:, 0], (1 + tr.times) * np.exp(0.1 * tr.times), rtol=1e-10)


def test_general_three_sector_matrix():
    g = GrowthMatrix.of([[-0.2, 0.05, 0.0], [0.1, 0.1, 0.02], [0.0, 0.3, -0.4]])
    eig = sectors.eigen_solve(g)
    assert eig.analytic
    assert np.isreal(eig.lambda_max)
    k0 = np.array([1.0, 0.5, 0.2])
    tr_a = sectors.integrate(ShockSchedule.constant(g, k0), np.linspace(0, 20, 41), method="analytic")
    tr_n = sectors.integrate(ShockSchedule.constant(g, k0), np.linspace(0, 20, 41), method="numerical")
    np.testing.assert_allclose(tr_a.k, tr_n.k, rtol=1e-9)


def test_numerical_matches_analytic(crossing):
    num = sectors.integrate(ShockSchedule.constant(oracles.CROSSING_G, [1.0, 0.01]), GRID, method="numerical")
    assert np.max(np.abs(num.k - crossing.k)) < 1e-8
    np.testing.assert_allclose(crossing.k_tot, crossing.k.sum(axis=1))


def test_crossing_shape(crossing):
    # old sector decays like e^{-0.35 t} early, new sector grows
    early = crossing.times <= 2
    rate_old = np.polyfit(crossing.times[early], np.log(crossing.k[early, 0]), 1)[0]
    assert rate_old == pytest.approx(-0.35, abs=0.03)
    assert crossing.k[-1, 1] > crossing.k[0, 1]
    interior_min = np.argmin(crossing.k_tot)
    assert 0 < interior_min < len(GRID) - 1


def test_frobenius_perron_alignment(crossing):
    np.testing.assert_allclose(crossing.rates[-1], oracles.CROSSING_LAMBDA[0], atol=1e-3)
    assert crossing.k[-1, 0] / crossing.k[-1, 1] == pytest.approx(oracles.CROSSING_RATIO, abs=1e-3)


def test_asymptotic_ratio():
    assert sectors.asymptotic_ratio(GrowthMatrix.of(oracles.CROSSING_G)) == pytest.approx(oracles.CROSSING_RATIO, abs=1e-12)
    assert sectors.asymptotic_ratio(GrowthMatrix.of(np.diag([-1.0, 1.0]))) == 0
    with pytest.raises(ValueError, match="degenerate"):
        sectors.asymptotic_ratio(GrowthMatrix.of(np.eye(2)))
    with pytest.raises(ValueError):
        sectors.asymptotic_ratio(GrowthMatrix.of(np.eye(3)))


def test_negative_average_rate_still_grows(crossing):
    g = np.array(oracles.CROSSING_G)
    assert (g[0, 0] + g[1, 1]) / 2 < 0
    assert sectors.eigen_solve(GrowthMatrix.of(g)).lambda_max > 0
    assert crossing.k_tot[-1] > crossing.k_tot[0]


def test_grid_validation():
    sch = ShockSchedule.constant(oracles.CROSSING_G, [1, 1])
    for bad in ([], [0, 0], [1, 0.5], [-1, 0]):
        with pytest.raises(ValueError):
            sectors.integrate(sch, bad)


metzler = st.lists(st.floats(-1, 1), min_size=4, max_size=4).map(
    lambda v: [[v[0], abs(v[1])], [abs(v[2]), v[3]]])
positive = st.lists(st.floats(0.01, 10), min_size=2, max_size=2)


@settings(max_examples=40, deadline=None)
@given(g=metzler, k0=positive)
def test_positivity(g, k0):
    tr = sectors.integrate(ShockSchedule.constant(g, k0), np.linspace(0, 10, 21))
    assert np.all(tr.k > 0)


@settings(max_examples=40, deadline=None)
@given(g=metzler, k0=positive, k1=positive, a=st.floats(0.1, 5), b=st.floats(0.1, 5))
def test_superposition(g, k0, k1, a, b):
    t = np.linspace(0, 8, 17)
    combo = sectors.integrate(ShockSchedule.constant(g, a * np.array(k0) + b * np.array(k1)), t).k
    parts = a * sectors.integrate(ShockSchedule.constant(g, k0), t).k + b * sectors.integrate(ShockSchedule.constant(g, k1), t).k
    np.testing.assert_allclose(combo, parts, rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(g=metzler, k0=positive, split=st.floats(0.5, 9.5))
def test_segment_split_consistency(g, k0, split):
    t = np.linspace(0, 10, 41)
    whole = sectors.integrate(ShockSchedule.constant(g, k0), t).k
    halves = sectors.integrate(ShockSchedule(((0.0, g), (split, g)), k0), t).k
    np.testing.assert_allclose(halves, whole, rtol=1e-9)


def test_eigen_residual_property():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.integers(2, 6)
        m = rng.normal(size=(n, n))
        m[~np.eye(n, dtype=bool)] = np.abs(m[~np.eye(n, dtype=bool)])
        g = GrowthMatrix.of(m)
        eig = sectors.eigen_solve(g)
        assert np.max(np.abs(m @ eig.eigenvectors - eig.eigenvectors * eig.eigenvalues)) < 1e-10 * np.linalg.norm(m, 2)
        # Metzler: dominant eigenvalue is real
        top = eig.eigenvalues[np.argmax(np.real(eig.eigenvalues))]
        assert abs(np.imag(top)) < 1e-12


def test_cusps_second_shock():
    t = np.round(np.arange(0, 301) * 0.1, 10)
    tr = sectors.integrate(ShockSchedule(((0.0, oracles.CROSSING_G), (8.0, oracles.SECOND_SHOCK_G)), [1.0, 0.1]), t)
    ext = sectors.detect_cusps(tr.k_tot, t)
    cusps = [e for e in ext if e.kind == "cusp-max"]
    assert len(cusps) == 1 and abs(cusps[0].time - 8.0) <= 0.1 + 1e-9
    assert not [e for e in ext if e.kind == "cusp-min"]
    smooth_min = [e.time for e in ext if e.kind == "smooth-min"]
    assert any(m < 8 for m in smooth_min) and any(m > 8 for m in smooth_min)


def test_cusps_single_shock(crossing):
    ext = sectors.detect_cusps(crossing.k_tot, crossing.times)
    assert [e.kind for e in ext] == ["smooth-min"]


def test_cusps_pure_exponential():
    t = np.arange(200) * 0.1
    assert sectors.detect_cusps(np.exp(0.1 * t), t) == []


def test_cusps_scale_free(crossing):
    a = sectors.detect_cusps(crossing.k_tot, crossing.times)
    b = sectors.detect_cusps(1e6 * crossing.k_tot, crossing.times)
    assert [(e.index, e.kind) for e in a] == [(e.index, e.kind) for e in b]


def test_cusp_minimum_detected():
    t = np.arange(200) * 0.1
    v = np.exp(np.abs(t - 10) * 0.3)
    ext = sectors.detect_cusps(v, t)
    assert [e.kind for e in ext] == ["cusp-min"]


def test_cusp_input_validation():
    with pytest.raises(ValueError, match="positive"):
        sectors.detect_cusps(np.r_[np.ones(20), 0.0])
    with pytest.raises(ValueError, match="16"):
        sectors.detect_cusps(np.ones(10))
