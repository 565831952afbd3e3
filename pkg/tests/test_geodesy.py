"""Distances and geodesic discs.

Primary oracle here is discrete shortest-path minimization: polygonal
paths with free interior vertices, length by the midpoint rule, refined
with a quasi-Newton optimizer.  Closed forms (flat lifts, radial arcs in
the stereographic chart) pin the easy families to tight tolerances.
"""

import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from finslerlab import NumericError, PhasePoint, ValidationError, make_metric
from finslerlab.geodesy import (
    GeodesicDisc,
    UnitCovector,
    certify_unit,
    distance,
    geodesic_disc,
    safe_radius,
)


def polygonal_length(metric, x, y, n=24):
    """Minimized length of an n-segment polygonal path from x to y."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    t = np.linspace(0.0, 1.0, n + 1)[1:-1]
    init = x + t[:, None] * (y - x)

    def length(flat_pts):
        P = np.vstack([x, flat_pts.reshape(-1, 2), y])
        mid = 0.5 * (P[1:] + P[:-1])
        dP = P[1:] - P[:-1]
        return float(np.sum(metric.eval(mid, dP)))

    res = minimize(length, init.ravel(), method="L-BFGS-B",
                   options=dict(maxiter=2000, ftol=1e-16, gtol=1e-12))
    return res.fun


# ------------------------------------------------------------- distance


def test_flat_torus_basic(flat):
    assert distance(flat, [0.0, 0.0], [0.3, 0.4]) == pytest.approx(0.5, abs=1e-9)
    assert distance(flat, [0.2, 0.2], [0.2, 0.2]) == 0.0


def test_flat_torus_wraps_through_lifts(flat):
    # the short way to (0.9, 0) goes backwards across the seam
    assert distance(flat, [0.0, 0.0], [0.9, 0.0]) == pytest.approx(0.1, abs=1e-9)
    assert distance(flat, [0.1, 0.95], [0.9, 0.1]) == pytest.approx(
        np.hypot(0.2, 0.15), abs=1e-9
    )


def test_randers_distance_vs_polygonal_oracle(randers03):
    d_fwd = distance(randers03, [0.0, 0.0], [1.0, 0.0])
    oracle = polygonal_length(randers03, [0.0, 0.0], [1.0, 0.0])
    assert d_fwd == pytest.approx(oracle, abs=1e-4)
    assert d_fwd == pytest.approx(1.3, abs=1e-8)  # straight line, |v| + b.v
    d_back = distance(randers03, [1.0, 0.0], [0.0, 0.0])
    assert d_back == pytest.approx(0.7, abs=1e-8)
    assert d_fwd != d_back


def test_round_sphere_radial_arc(round1):
    # along a chart ray through the origin: length = 2 atan(r) for R = 1
    assert distance(round1, [0.0, 0.0], [0.8, 0.0]) == pytest.approx(
        2 * np.arctan(0.8), abs=1e-8
    )


def test_katok_asymmetry_and_oracle(katok03):
    x, y = np.array([0.4, 0.0]), np.array([0.0, 0.4])
    d_with = distance(katok03, x, y)   # riding the rotational drift
    d_against = distance(katok03, y, x)
    assert abs(d_with - d_against) > 1e-3
    oracle = polygonal_length(katok03, x, y, n=32)
    assert d_with == pytest.approx(oracle, abs=5e-4)


def test_triangle_inequality_pools(flat, randers03, rng):
    # 1000 ordered triples per metric, drawn from a pooled distance matrix
    for metric, pts in (
        (flat, rng.random((18, 2))),
        (randers03, rng.uniform(-0.6, 0.6, (14, 2))),
    ):
        n = len(pts)
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                if i != j:
                    D[i, j] = distance(metric, pts[i], pts[j])
        triples = [
            (i, j, k)
            for i, j, k in itertools.product(range(n), repeat=3)
            if len({i, j, k}) == 3
        ]
        sel = rng.choice(len(triples), size=1000, replace=False)
        for idx in sel:
            i, j, k = triples[idx]
            assert D[i, k] <= D[i, j] + D[j, k] + 1e-8
        assert np.all(D[~np.eye(n, dtype=bool)] > 0)


def test_near_tie_flagging(flat):
    d, info = distance(flat, [0.0, 0.0], [0.5, 0.0], full_output=True)
    assert d == pytest.approx(0.5, abs=1e-9)
    assert info["near_tie"]
    d2, info2 = distance(flat, [0.0, 0.0], [0.3, 0.4], full_output=True)
    assert not info2["near_tie"]


def test_distance_rejects_points_off_chart():
    m = make_metric("euclidean")  # default plane chart
    far = [1e6, 0.0]
    with pytest.raises(Exception):
        distance(m, [0.0, 0.0], far)


# --------------------------------------------------------- geodesic discs


def test_flat_disc_centers(flat):
    v = (np.zeros(2), np.array([1.0, 0.0]))
    plus = geodesic_disc(flat, v, 0.1, +1)
    minus = geodesic_disc(flat, v, 0.1, -1)
    assert np.allclose(plus.center, [0.1, 0.0], atol=1e-10)
    assert np.allclose(minus.center, [-0.1, 0.0], atol=1e-10)
    assert plus.contains([0.0, 0.0], tol=1e-8)
    assert minus.contains([0.0, 0.0], tol=1e-8)
    assert plus.contains([0.05, 0.0])
    assert not plus.contains([-0.05, 0.0])
    assert not minus.contains([0.05, 0.0])


def test_basepoint_in_both_discs_all_samples(randers03, katok03, rng):
    for m in (randers03, katok03):
        for _ in range(4):
            x = rng.uniform(-0.3, 0.3, 2)
            th = rng.uniform(0, 2 * np.pi)
            r = rng.uniform(0.05, 0.15)
            v = (x, m.fiber_point(x, th))
            for sign in (+1, -1):
                disc = geodesic_disc(m, v, r, sign)
                assert disc.contains(x, tol=1e-7), (m.family, sign)


def test_disc_intersection_is_tangency_point(randers03):
    x = np.zeros(2)
    v = (x, randers03.fiber_point(x, 0.7))
    r = 0.12
    plus = geodesic_disc(randers03, v, r, +1)
    minus = geodesic_disc(randers03, v, r, -1)
    grid = np.stack(
        np.meshgrid(np.linspace(-0.3, 0.3, 9), np.linspace(-0.3, 0.3, 9)),
        axis=-1,
    ).reshape(-1, 2)
    for w in grid:
        if plus.contains(w, tol=1e-9) and minus.contains(w, tol=1e-9):
            assert distance(randers03, w, x) <= 1e-6


def test_disc_radius_cap(flat):
    v = (np.zeros(2), np.array([1.0, 0.0]))
    with pytest.raises(ValidationError):
        geodesic_disc(flat, v, 0.5, +1)  # cap is 0.45 on the unit torus
    assert safe_radius(flat) == pytest.approx(0.45)


def test_disc_requires_unit_covector(flat):
    with pytest.raises(ValidationError, match="unit"):
        geodesic_disc(flat, (np.zeros(2), np.array([2.0, 0.0])), 0.1, +1)
    z = PhasePoint(np.zeros(2), np.array([1.0, 0.0]), surface=flat.surface)
    uc = certify_unit(flat, z)
    assert isinstance(uc, UnitCovector) and uc.certified
