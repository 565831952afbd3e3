"""Metric families: norms, duals, Legendre maps, perturbations.

Oracles used here:

* brute-force grid maximization of p.v over the unit circle (dual norm);
* finite-difference vertical gradients of phi^2/2 (Legendre map);
* finite differences of phi* in q and p (flow right-hand side);
* direct evaluation at +-v (reversibility defects).
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finslerlab import (
    FinslerMetric,
    MetricPerturbation,
    SurfacePatch,
    ValidationError,
    conformal_perturb,
    cr_distance,
    dual_norm,
    eval_metric,
    legendre,
    legendre_inverse,
    localized_perturb,
    make_metric,
    unit_vector,
    verify_metric,
)

from conftest import all_families


# ----------------------------------------------------------------- eval


def test_eval_euclidean_is_length(euclid):
    assert eval_metric(euclid, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0, abs=1e-15)


def test_eval_randers_east(randers03):
    # |v| + beta.v at v=(1,0) with beta=(0.3,0)
    assert eval_metric(randers03, [0.2, -0.1], [1.0, 0.0]) == pytest.approx(1.3, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(
    lam=st.floats(min_value=0.01, max_value=100.0),
    ang=st.floats(min_value=0.0, max_value=2 * np.pi),
    qx=st.floats(min_value=-1.5, max_value=1.5),
    qy=st.floats(min_value=-1.5, max_value=1.5),
)
def test_positive_homogeneity_property(lam, ang, qx, qy):
    m = make_metric("katok", alpha=0.3)
    q = np.array([qx, qy])
    v = np.array([np.cos(ang), np.sin(ang)])
    phi = m.eval(q, v)
    assert m.eval(q, lam * v) == pytest.approx(lam * phi, rel=1e-12)


# ----------------------------------------------------------------- dual


def test_dual_euclidean_values(euclid):
    assert dual_norm(euclid, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0, abs=1e-12)
    assert dual_norm(euclid, [0.0, 0.0], [0.0, 0.0]) == 0.0


def test_dual_randers_grid_oracle(randers03):
    # 1e6-point maximization of p.v over the unit circle of the metric.
    p = np.array([1.0, 0.0])
    x = np.zeros(2)
    psi = np.linspace(0.0, 2 * np.pi, 1_000_000, endpoint=False)
    u = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    vals = (u @ p) / randers03.eval(np.zeros((psi.size, 2)), u)
    oracle = np.max(vals)
    assert dual_norm(randers03, x, p) == pytest.approx(oracle, abs=1e-6)


def test_dual_grid_oracle_all_families(euclid, flat, randers03, round1, katok03, rng):
    psi = np.linspace(0.0, 2 * np.pi, 400_000, endpoint=False)
    u = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
    for m in all_families(euclid, flat, randers03, round1, katok03):
        for _ in range(3):
            x = rng.uniform(-0.8, 0.8, 2)
            p = rng.normal(size=2)
            vals = (u @ p) / m.eval(np.broadcast_to(x, u.shape), u)
            assert m.dual(x, p) == pytest.approx(np.max(vals), rel=1e-9, abs=1e-8)


def test_dual_newton_route_matches_closed_form(randers03, katok03, rng):
    for m in (randers03, katok03):
        for _ in range(5):
            x = rng.uniform(-0.7, 0.7, 2)
            p = rng.normal(size=2)
            p /= np.linalg.norm(p)
            assert dual_norm(m, x, p, method="newton") == pytest.approx(
                m.dual(x, p), abs=1e-8
            )


def test_unit_fiber_circle_is_unit(euclid, flat, randers03, round1, katok03, rng):
    thetas = rng.uniform(0, 2 * np.pi, 64)
    for m in all_families(euclid, flat, randers03, round1, katok03):
        x = rng.uniform(-0.6, 0.6, 2)
        p = m.fiber_point(np.broadcast_to(x, (64, 2)), thetas)
        assert np.max(np.abs(m.dual(np.broadcast_to(x, (64, 2)), p) - 1.0)) < 1e-12


# ------------------------------------------------------------- legendre


def test_legendre_euclidean_identity(euclid):
    assert np.allclose(legendre(euclid, [0.0, 0.0], [1.0, 0.0]), [1.0, 0.0])


def test_legendre_unit_covector(euclid, flat, randers03, round1, katok03, rng):
    for m in all_families(euclid, flat, randers03, round1, katok03):
        x = rng.uniform(-0.5, 0.5, 2)
        v = unit_vector(m, x, rng.uniform(0, 2 * np.pi))
        al = legendre(m, x, v)
        assert m.dual(x, al) == pytest.approx(1.0, abs=1e-9)
        assert float(np.dot(al, v)) == pytest.approx(1.0, abs=1e-9)


def test_legendre_matches_vertical_gradient_oracle(randers03):
    # alpha must equal the vertical derivative of phi^2/2 at the unit vector.
    x = np.zeros(2)
    v = np.array([1.0, 0.0]) / 1.3
    al = legendre(randers03, x, v)
    h = 1e-5
    grad = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fp = randers03.eval(x, v + e) ** 2 / 2
        fm = randers03.eval(x, v - e) ** 2 / 2
        grad[k] = (fp - fm) / (2 * h)
    assert np.max(np.abs(al - grad)) < 1e-8


def test_legendre_roundtrip_all_families(euclid, flat, randers03, round1, katok03, rng):
    for m in all_families(euclid, flat, randers03, round1, katok03):
        x = rng.uniform(-0.7, 0.7, (100, 2))
        v = unit_vector(m, x, rng.uniform(0, 2 * np.pi, 100))
        back = m.legendre_inverse(x, m.legendre(x, v))
        assert np.max(np.abs(back - v)) < 1e-8


def test_legendre_inverse_euclidean(euclid):
    assert np.allclose(legendre_inverse(euclid, [0.0, 0.0], [0.0, 1.0]), [0.0, 1.0])


def test_legendre_inverse_katok_grid_argmax(katok03, rng):
    # maximizer direction vs a parabolic-refined grid argmax, to 1e-5 in angle
    for _ in range(4):
        x = rng.uniform(-0.8, 0.8, 2)
        p = rng.normal(size=2)
        psi = np.linspace(0.0, 2 * np.pi, 1 << 20, endpoint=False)
        u = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
        vals = (u @ p) / katok03.eval(np.broadcast_to(x, u.shape), u)
        i = int(np.argmax(vals))
        # parabolic refinement around the discrete argmax
        ym, y0, yp = vals[i - 1], vals[i], vals[(i + 1) % psi.size]
        dpsi = psi[1] - psi[0]
        shift = 0.5 * (ym - yp) / (ym - 2 * y0 + yp)
        ang_oracle = psi[i] + shift * dpsi
        v = katok03.legendre_inverse(x, p)
        ang = np.arctan2(v[1], v[0]) % (2 * np.pi)
        diff = np.abs((ang - ang_oracle + np.pi) % (2 * np.pi) - np.pi)
        assert diff < 1e-5


# ------------------------------------------------------- verify_metric


def test_verify_flat_is_clean(flat):
    rep = verify_metric(flat, n_samples=2000, seed=7)
    assert rep["homogeneity_defect"] < 1e-12
    assert rep["positivity_margin"] > 0.99
    assert rep["reversibility_defect"] < 1e-14
    assert rep["reversible"]


def test_verify_katok_irreversible(katok03):
    rep = verify_metric(katok03, n_samples=10000, seed=3)
    assert rep["reversibility_defect"] > 0.1
    assert rep["min_hessian_eig"] > 0.0
    assert not rep["reversible"]


def test_invalid_randers_rejected():
    with pytest.raises(ValidationError, match="[Hh]essian|beta"):
        make_metric("randers", beta=(1.5, 0.0))


def test_vertical_hessian_matches_fd(katok03, randers03, rng):
    h = 1e-5
    for m in (katok03, randers03):
        x = rng.uniform(-0.5, 0.5, 2)
        v = rng.normal(size=2)
        H = m.vertical_hessian(x, v)
        for i in range(2):
            for j in range(2):
                ei, ej = np.zeros(2), np.zeros(2)
                ei[i], ej[j] = h, h
                fd = (
                    m.eval(x, v + ei + ej) ** 2 / 2
                    - m.eval(x, v + ei - ej) ** 2 / 2
                    - m.eval(x, v - ei + ej) ** 2 / 2
                    + m.eval(x, v - ei - ej) ** 2 / 2
                ) / (4 * h * h)
                assert H[i, j] == pytest.approx(fd, abs=2e-5)


def test_dual_grad_matches_fd(euclid, flat, randers03, round1, katok03, rng):
    # Closed-form flow right-hand side against central differences of phi*.
    h = 1e-5
    for m in all_families(euclid, flat, randers03, round1, katok03):
        for _ in range(3):
            x = rng.uniform(-0.7, 0.7, 2)
            p = rng.normal(size=2)
            dq, dp = m.dual_grad(x, p)
            for k in range(2):
                e = np.zeros(2)
                e[k] = h
                fd_q = (m.dual(x + e, p) - m.dual(x - e, p)) / (2 * h)
                fd_p = (m.dual(x, p + e) - m.dual(x, p - e)) / (2 * h)
                assert dq[k] == pytest.approx(fd_q, abs=5e-6)
                assert dp[k] == pytest.approx(fd_p, abs=5e-6)


# --------------------------------------------------------- perturbations


def test_conformal_support_and_ratio(flat, rng):
    pert = MetricPerturbation("conformal", [((0.5, 0.5), 0.2, 0.04)])
    m2 = conformal_perturb(flat, pert)
    # outside the bump disc: identical values (exact-support profile)
    q_out = np.array([[0.1, 0.1], [0.9, 0.2], [0.5, 0.85]])
    v = rng.normal(size=(3, 2))
    assert np.max(np.abs(m2.eval(q_out, v) - flat.eval(q_out, v))) < 1e-14
    # at the center: ratio is exactly 1 + amplitude
    q_c = np.array([0.5, 0.5])
    vv = np.array([0.3, -0.7])
    assert m2.eval(q_c, vv) / flat.eval(q_c, vv) == pytest.approx(1.04, abs=1e-12)


def test_conformal_gradients_consistent(flat, rng):
    pert = MetricPerturbation("conformal", [((0.4, 0.6), 0.25, 0.03)])
    m2 = conformal_perturb(flat, pert)
    h = 1e-6
    for _ in range(5):
        x = np.array([0.4, 0.6]) + rng.uniform(-0.2, 0.2, 2)
        p = rng.normal(size=2)
        dq, dp = m2.dual_grad(x, p)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd_q = (m2.dual(x + e, p) - m2.dual(x - e, p)) / (2 * h)
            assert dq[k] == pytest.approx(fd_q, abs=1e-5)


def test_conformal_scale_parameter(flat):
    pert = MetricPerturbation("conformal", [((0.5, 0.5), 0.2, 0.04)])
    half = conformal_perturb(flat, pert, scale=0.5)
    q_c, vv = np.array([0.5, 0.5]), np.array([1.0, 0.0])
    assert half.eval(q_c, vv) == pytest.approx(1.02, abs=1e-12)


def test_localized_drift_support_and_validation(flat):
    pert = MetricPerturbation(
        "localized", [((0.3, 0.3), 0.15, 0.2)], direction=(1.0, 0.0)
    )
    m2 = localized_perturb(flat, pert)
    q_out = np.array([[0.7, 0.7], [0.05, 0.6]])
    v = np.array([[1.0, 2.0], [0.5, -0.5]])
    assert np.max(np.abs(m2.eval(q_out, v) - flat.eval(q_out, v))) < 1e-14
    assert not m2.reversible
    with pytest.raises(ValidationError):
        localized_perturb(
            flat,
            MetricPerturbation("localized", [((0.3, 0.3), 0.15, 1.2)],
                               direction=(1.0, 0.0)),
        )


@settings(max_examples=60, deadline=None)
@given(
    qx=st.floats(min_value=0.0, max_value=1.0),
    qy=st.floats(min_value=0.0, max_value=1.0),
    ang=st.floats(min_value=0.0, max_value=2 * np.pi),
)
def test_localized_perturbation_outside_support_property(qx, qy, ang):
    flat_m = make_metric("flat")
    pert = MetricPerturbation("localized", [((0.5, 0.5), 0.1, 0.3)], direction=(0.0, 1.0))
    m2 = localized_perturb(flat_m, pert)
    q = np.array([qx, qy])
    d = q - np.array([0.5, 0.5])
    d -= np.round(d)
    if np.linalg.norm(d) > 0.1 + 1e-9:
        v = np.array([np.cos(ang), np.sin(ang)])
        assert abs(m2.eval(q, v) - flat_m.eval(q, v)) < 1e-14


# ----------------------------------------------------------- cr_distance


def test_cr_distance_zero_for_identical(flat):
    assert cr_distance(flat, flat, r=2) == 0.0


def test_cr_distance_conformal_amplitude(flat):
    amp = 0.02
    pert = MetricPerturbation("conformal", [((0.5, 0.5), 0.3, amp)])
    m2 = conformal_perturb(flat, pert)
    d0 = cr_distance(flat, m2, r=0, n_x=16, n_angle=8)
    # sup of |h|*phi over unit vectors equals the amplitude up to grid error
    assert d0 == pytest.approx(amp, rel=0.08)
    # C^2 distance dominates the C^0 distance
    assert cr_distance(flat, m2, r=2, n_x=8, n_angle=6) >= d0 * 0.99


def test_cr_distance_rejects_large_r(flat):
    with pytest.raises(ValidationError):
        cr_distance(flat, flat, r=5)


def test_describe_strings(katok03, randers03):
    assert "katok" in katok03.describe() and "alpha" in katok03.describe()
    assert "randers" in randers03.describe()
