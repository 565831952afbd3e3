"""Chart bookkeeping: transitions, wrapping, lifts, and domains."""

import numpy as np
import pytest

from finslerlab import DomainError, PhasePoint, SurfacePatch


def test_sphere_transition_is_involution(rng):
    sph = SurfacePatch.sphere(radius=1.3)
    q = rng.normal(size=(200, 2)) * 2.0 + 0.1
    back = sph.transition(sph.transition(q))
    assert np.max(np.abs(back - q)) <= 1e-12


def test_transition_jacobian_matches_finite_differences(rng):
    sph = SurfacePatch.sphere(radius=0.9)
    q = rng.normal(size=(50, 2)) + np.array([1.0, 0.5])
    J = sph.transition_jacobian(q)
    h = 1e-6
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = h
        fd = (sph.transition(q + e) - sph.transition(q - e)) / (2 * h)
        assert np.max(np.abs(J[..., :, axis] - fd)) < 1e-6


def test_covector_transport_preserves_pairing(rng):
    # p'.(Dtau w) must equal p.w: the canonical 1-form is chart independent.
    sph = SurfacePatch.sphere()
    q = rng.normal(size=(30, 2)) + np.array([0.8, -0.4])
    p = rng.normal(size=(30, 2))
    w = rng.normal(size=(30, 2))
    q_new = sph.transition(q)
    p_new = sph.push_covector(q_new, p)
    Jq = sph.transition_jacobian(q)
    w_new = np.einsum("...ij,...j->...i", Jq, w)
    assert np.max(np.abs(np.sum(p_new * w_new, -1) - np.sum(p * w, -1))) < 1e-10


def test_embedding_consistency_across_charts(rng):
    sph = SurfacePatch.sphere(radius=2.0)
    q = rng.normal(size=(40, 2)) + 1.0
    e0 = sph.embed(q, chart=0)
    e1 = sph.embed(sph.transition(q), chart=1)
    assert np.max(np.abs(e0 - e1)) < 1e-10
    assert np.max(np.abs(np.linalg.norm(e0, axis=-1) - 2.0)) < 1e-10


def test_torus_wrap_and_lifts():
    tor = SurfacePatch.torus(periods=(1.0, 2.0))
    q = np.array([1.25, -0.5])
    assert np.allclose(tor.wrap(q), [0.25, 1.5])
    lifts = tor.lifts(np.array([0.1, 0.1]), span=1)
    assert lifts.shape == (9, 2)
    # all lifts reduce to the same point
    assert np.max(np.abs(tor.wrap(lifts) - [0.1, 0.1])) < 1e-15


def test_plane_domain_error():
    pl = SurfacePatch.plane(chart_radius=2.0)
    pl.check_domain(np.array([1.0, 1.0]))
    with pytest.raises(DomainError):
        pl.check_domain(np.array([3.0, 0.0]))


def test_phase_point_state_roundtrip():
    z = PhasePoint([0.1, 0.2], [0.3, 0.4], chart=1)
    z2 = PhasePoint.from_state(z.as_state(), chart=z.chart)
    assert np.allclose(z2.q, z.q) and np.allclose(z2.p, z.p)
