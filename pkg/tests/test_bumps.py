"""Bump maps and the perturbation algebra of lens maps.

A bump has four hard promises: it is the identity outside its support
disc (bitwise, not approximately), it preserves area, it carries its
center exactly onto its target, and it stays below the size budget
whenever the displacement satisfies the admissibility inequality.  The
first three are checked directly; the last is checked under the
calibrated constant over a randomized sweep.  On the lens-map side the
perturbed map must agree with the original off the support, keep the
symplectic defect, leave the sweep integral at its unperturbed value,
and -- after symmetrization -- satisfy the reversibility identity to
machine precision.
"""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from finslerlab import make_metric
from finslerlab.bumps import (
    SymplecticBump,
    calibrate_bump_constant,
    make_bump,
    perturb_lens,
    reversible_symmetrize,
    sampled_cr_size,
)
from finslerlab.errors import DomainError, NumericError, ValidationError
from finslerlab.lens import (
    ComposedLensMap,
    SimpleDisc,
    _mod_diff,
    build_lens_grid,
    check_simple,
    consistency_integral,
    invert_map,
    symplectic_defect,
)


# ----------------------------------------------------------- fixtures


@pytest.fixture(scope="module")
def unit_grid(euclid):
    disc = SimpleDisc(euclid, (0.0, 0.0), 1.0)
    check_simple(disc)
    return build_lens_grid(disc, 64, 64)


@pytest.fixture(scope="module")
def drift_grid():
    metric = make_metric("randers", beta=(0.1, 0.0))
    disc = SimpleDisc(metric, (0.0, 0.0), 1.0)
    check_simple(disc)
    return build_lens_grid(disc, 32, 32)


@pytest.fixture(scope="module")
def window_bump(unit_grid):
    """A budget-compliant bump sitting inside the inward window."""
    L = unit_grid.disc.length
    d = 2.0e-4
    return make_bump((1.0, 0.3), (1.0 + 0.8 * d, 0.3 - 0.6 * d),
                     0.1, 1, 0.05, period=L)


@pytest.fixture(scope="module")
def perturbed(unit_grid, window_bump):
    return perturb_lens(unit_grid, window_bump)


@pytest.fixture(scope="module")
def symmetrized(perturbed, unit_grid, window_bump):
    return reversible_symmetrize(perturbed, unit_grid, window_bump)


def rev_residual(sigma, ss, tt, L):
    """Max residual of the reversibility identity -sigma(-sigma(a)) = a."""
    us, ut = sigma.map(ss, tt)
    us = np.asarray(us, dtype=float)
    ut = np.asarray(ut, dtype=float)
    vs, vt = sigma.map(us % L, -ut)
    vs = np.asarray(vs, dtype=float)
    vt = np.asarray(vt, dtype=float)
    return float(np.max(np.hypot(_mod_diff(vs - ss, L), -vt - tt)))


def mixed_samples(bump, L, rng):
    """Scattered points plus a cluster filling the bump support."""
    ss = rng.uniform(0.0, L, 400)
    tt = rng.uniform(-0.9, 0.9, 400)
    cs = bump.center[0] + rng.uniform(-0.095, 0.095, 200)
    ct = bump.center[1] + rng.uniform(-0.095, 0.095, 200)
    keep = np.hypot(cs - bump.center[0], ct - bump.center[1]) < 0.0995
    return (np.concatenate([ss, cs[keep] % L]),
            np.concatenate([tt, ct[keep]]))


# ------------------------------------------------- bump construction


def test_bump_hits_target_exactly():
    x = (0.3, -0.1)
    y = (0.3 + 6e-5, -0.1 + 3e-5)
    bump = make_bump(x, y, 0.1, 1, 0.05)
    hit = bump.apply(np.array(x))
    assert np.hypot(*(hit - np.array(y))) <= 1e-10
    # on the plateau the generator field is constant, so the tuned
    # amplitude is the nominal one
    assert abs(bump.amplitude - 1.0) <= 1e-9


def test_identity_bump_is_bitwise_identity():
    bump = make_bump((1.0, 0.3), (1.0, 0.3), 0.1, 1, 0.05)
    assert bump.amplitude == 0.0
    z = np.array([[1.02, 0.31], [0.5, -0.5], [1.0, 0.3]])
    assert np.array_equal(bump.apply(z), z)
    assert np.array_equal(bump.inverse(z), z)


def test_support_containment_is_exact():
    bump = make_bump((0.3, -0.1), (0.3 + 6e-5, -0.1 + 3e-5), 0.1, 1, 0.05)
    rng = np.random.default_rng(0)
    pts = np.array([0.3, -0.1]) + rng.uniform(-0.3, 0.3, size=(4000, 2))
    outside = ~bump.contains(pts)
    img = bump.apply(pts)
    assert np.array_equal(img[outside], pts[outside])
    # and the interior genuinely moves
    assert np.max(np.abs(img[~outside] - pts[~outside])) > 0


def test_area_preservation_on_support_lattice():
    bump = make_bump((0.3, -0.1), (0.3 + 6e-5, -0.1 + 3e-5), 0.1, 1, 0.05)
    axis = np.linspace(-0.099, 0.099, 50)
    S, T = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([S.ravel() + 0.3, T.ravel() - 0.1], axis=-1)
    dets_fd = np.linalg.det(bump.jacobian(pts, method="fd"))
    assert np.max(np.abs(dets_fd - 1.0)) <= 1e-8
    # the tangent-map integration is the sharper oracle
    dets_var = np.linalg.det(bump.jacobian(pts[::7], method="variational"))
    assert np.max(np.abs(dets_var - 1.0)) <= 1e-12


def test_jacobian_methods_agree():
    bump = make_bump((0.0, 0.0), (1.2e-4, -0.9e-4), 0.1, 1, 0.05)
    rng = np.random.default_rng(5)
    pts = rng.uniform(-0.09, 0.09, size=(40, 2))
    J_fd = bump.jacobian(pts, method="fd")
    J_var = bump.jacobian(pts, method="variational")
    assert np.max(np.abs(J_fd - J_var)) <= 1e-7


@settings(max_examples=25, deadline=None)
@given(
    ux=st.floats(-1.0, 1.0), uy=st.floats(-1.0, 1.0),
    px=st.floats(-0.95, 0.95), py=st.floats(-0.95, 0.95),
)
def test_inverse_undoes_bump(ux, uy, px, py):
    assume(abs(ux) + abs(uy) > 1e-3)
    bump = make_bump((0.0, 0.0), (1e-4 * ux, 1e-4 * uy), 0.1, 1, 0.05)
    z = 0.1 * np.array([px, py])
    assert np.max(np.abs(bump.apply(bump.inverse(z)) - z)) <= 1e-12
    assert np.max(np.abs(bump.inverse(bump.apply(z)) - z)) <= 1e-12


def test_budget_violation_quotes_inequality():
    with pytest.raises(ValidationError) as err:
        make_bump((1.0, 0.3), (1.0 + 1e-4, 0.3), 0.1, 2, 0.05)
    msg = str(err.value)
    assert "c*delta^r*eps" in msg
    assert "2.5e-05" in msg


def test_constructor_guards():
    with pytest.raises(ValidationError):
        SymplecticBump((0, 0), (0, 0), -0.1, 1, 0.05, 0.0)
    with pytest.raises(ValidationError):
        SymplecticBump((0, 0), (0, 0), 0.1, 0, 0.05, 0.0)
    with pytest.raises(ValidationError):
        SymplecticBump((0, 0), (0, 0), 0.1, 1, -0.05, 0.0)
    with pytest.raises(ValidationError):
        make_bump((0, 0), (1e-5, 0), 0.1, 1, 0.05).jacobian(
            np.zeros(2), method="nonsense")


# ---------------------------------------------- sizes and calibration


def test_c0_size_within_budget_under_default_constant():
    # type-level promise: the C^0 size stays under eps whenever the
    # displacement passes the default admissibility check
    bump = make_bump((1.0, 0.3), (1.0 + 1.6e-4, 0.3 - 1.2e-4),
                     0.1, 1, 0.05)
    assert sampled_cr_size(bump, order=0) <= 0.05


def test_calibration_is_scale_invariant():
    # the construction is self-similar in delta, so the measured
    # constant depends only on the order
    c1 = calibrate_bump_constant(0.1, 1)
    c2 = calibrate_bump_constant(0.3, 1)
    assert c1 == pytest.approx(c2, rel=1e-3)
    assert calibrate_bump_constant(0.1, 3) < calibrate_bump_constant(0.1, 2)
    assert calibrate_bump_constant(0.1, 2) < calibrate_bump_constant(0.1, 1)


def test_calibrated_budget_respected_over_random_cases():
    rng = np.random.default_rng(42)
    deltas = [0.1, 0.15]
    orders = [1, 2, 3]
    for _ in range(50):
        delta = deltas[rng.integers(len(deltas))]
        order = orders[rng.integers(len(orders))]
        eps = rng.uniform(0.02, 0.08)
        c = calibrate_bump_constant(delta, order)
        d = rng.uniform(0.1, 0.9) * c * delta ** order * eps
        ang = rng.uniform(0.0, 2.0 * np.pi)
        x = rng.uniform(-1.0, 1.0, 2)
        y = x + d * np.array([np.cos(ang), np.sin(ang)])
        bump = make_bump(x, y, delta, order, eps, c=c)
        hit = bump.apply(bump.center)
        assert np.hypot(*(hit - bump.target)) <= 1e-10
        assert sampled_cr_size(bump) <= eps


# ------------------------------------------------------- perturb_lens


def test_perturbed_map_agrees_off_support(unit_grid, perturbed, window_bump):
    L = unit_grid.disc.length
    rng = np.random.default_rng(7)
    ss = rng.uniform(0.0, L, 10000)
    tt = rng.uniform(-0.95, 0.95, 10000)
    outside = ~window_bump.contains(np.stack([ss, tt], axis=-1))
    a1, b1 = unit_grid.map(ss[outside], tt[outside])
    a2, b2 = perturbed.map(ss[outside], tt[outside])
    assert np.array_equal(np.asarray(a1), np.asarray(a2))
    assert np.array_equal(np.asarray(b1), np.asarray(b2))
    # inside the support the map moves, but only by the bump scale
    a1, b1 = unit_grid.map(ss[~outside], tt[~outside])
    a2, b2 = perturbed.map(ss[~outside], tt[~outside])
    shift = np.max(np.hypot(np.asarray(a1) - np.asarray(a2),
                            np.asarray(b1) - np.asarray(b2)))
    assert 0 < shift < 2e-3


def test_perturb_by_identity_is_bitwise(unit_grid):
    L = unit_grid.disc.length
    ident = make_bump((1.0, 0.3), (1.0, 0.3), 0.1, 1, 0.05, period=L)
    tilde = perturb_lens(unit_grid, ident)
    ss = np.linspace(0.9, 1.1, 50)
    tt = np.linspace(0.2, 0.4, 50)
    a1, b1 = unit_grid.map(ss, tt)
    a2, b2 = tilde.map(ss, tt)
    assert np.array_equal(np.asarray(a1), np.asarray(a2))
    assert np.array_equal(np.asarray(b1), np.asarray(b2))


def test_perturbed_map_keeps_defect(unit_grid, perturbed):
    defect = symplectic_defect(perturbed)
    assert defect <= symplectic_defect(unit_grid) + 1e-6
    assert defect <= 1e-9


def test_perturbed_map_preserves_area_through_chain(perturbed, window_bump,
                                                    unit_grid):
    # honest area preservation, free of finite-difference truncation
    # through the thin plateau shoulder: chain the grid Jacobian at the
    # pre-image with the variational bump Jacobian
    L = unit_grid.disc.length
    rng = np.random.default_rng(11)
    ss = window_bump.center[0] + rng.uniform(-0.09, 0.09, 30)
    tt = window_bump.center[1] + rng.uniform(-0.09, 0.09, 30)
    h = 1e-6
    for s0, t0 in zip(ss, tt):
        z = np.array([s0, t0])
        zi = window_bump.inverse(z)
        J_psi_inv = np.linalg.inv(
            window_bump.jacobian(zi, method="variational"))
        sp, tp = unit_grid.map(zi[0] + h, zi[1])
        sm, tm = unit_grid.map(zi[0] - h, zi[1])
        j11 = _mod_diff(np.asarray(sp - sm).item(), L) / (2 * h)
        j21 = np.asarray(tp - tm).item() / (2 * h)
        sp, tp = unit_grid.map(zi[0], zi[1] + h)
        sm, tm = unit_grid.map(zi[0], zi[1] - h)
        j12 = _mod_diff(np.asarray(sp - sm).item(), L) / (2 * h)
        j22 = np.asarray(tp - tm).item() / (2 * h)
        J = np.array([[j11, j12], [j21, j22]]) @ J_psi_inv
        assert abs(np.linalg.det(J) - 1.0) <= 1e-9


def test_sweep_integral_unmoved_at_untouched_points(unit_grid, perturbed):
    for s_p in (3.0, 5.5):
        base = consistency_integral(unit_grid, s_p)
        pert = consistency_integral(perturbed, s_p)
        assert abs(pert - base) <= 1e-8


def test_sweep_integral_stays_small_at_touched_point(unit_grid, perturbed):
    # the fiber at s_p = 0.999 crosses the bump support; the integrand
    # now has structure at the support scale, which the default panel
    # count cannot resolve -- the refinement guard must notice
    with pytest.raises(NumericError):
        consistency_integral(perturbed, 0.999)
    val = consistency_integral(perturbed, 0.999, n_quad=1536)
    assert abs(val) <= 1e-6
    base = consistency_integral(unit_grid, 0.999, n_quad=1536)
    assert abs(val - base) <= 1e-6


def test_perturb_guards(unit_grid):
    L = unit_grid.disc.length
    # support sticking out of the inward window
    high = make_bump((1.0, 0.93), (1.0, 0.93 + 1e-5), 0.1, 1, 0.05,
                     period=L)
    with pytest.raises(DomainError):
        perturb_lens(unit_grid, high)
    # bump built without the boundary period
    flat = make_bump((1.0, 0.3), (1.0, 0.3 + 1e-5), 0.1, 1, 0.05)
    with pytest.raises(ValidationError):
        perturb_lens(unit_grid, flat)


def test_drift_grid_keeps_integral_under_perturbation(drift_grid):
    L = drift_grid.disc.length
    bump = make_bump((1.0, 0.25), (1.0 + 1.6e-4, 0.25 - 1.2e-4),
                     0.1, 1, 0.05, period=L)
    tilde = perturb_lens(drift_grid, bump)
    assert symplectic_defect(tilde) <= symplectic_defect(drift_grid) + 1e-6
    base = consistency_integral(drift_grid, 3.5)
    pert = consistency_integral(tilde, 3.5)
    assert abs(pert - base) <= 1e-9
    touched = consistency_integral(tilde, 0.98, n_quad=1536)
    assert abs(touched) <= 1e-4
    assert abs(touched) <= 1e-5


# ------------------------------------------------------ symmetrization


def test_symmetrized_map_is_reversible(unit_grid, perturbed, symmetrized,
                                       window_bump, rng):
    L = unit_grid.disc.length
    ss, tt = mixed_samples(window_bump, L, np.random.default_rng(3))
    # the one-sided perturbation breaks reversibility by the bump size
    broken = rev_residual(perturbed, ss, tt, L)
    assert broken >= 0.9 * sampled_cr_size(window_bump, order=0)
    # the symmetrization repairs it to machine precision
    assert rev_residual(symmetrized, ss, tt, L) <= 1e-9


def test_symmetrization_changes_only_reversed_region(unit_grid, perturbed,
                                                     symmetrized,
                                                     window_bump):
    L = unit_grid.disc.length
    ss, tt = mixed_samples(window_bump, L, np.random.default_rng(3))
    us, ut = perturbed.map(ss, tt)
    hs, ht = symmetrized.map(ss, tt)
    diffs = np.hypot(_mod_diff(np.asarray(us) - np.asarray(hs), L),
                     np.asarray(ut) - np.asarray(ht))
    changed = diffs > 0
    assert np.any(changed)
    # every changed point must invert into the bump support, and no
    # unchanged point may do so: membership decided independently here
    for s0, t0, flag in zip(ss[changed], tt[changed], diffs[changed]):
        si, ti = invert_map(perturbed, s0 % L, -t0)
        assert window_bump.contains((si, ti))
    unchanged = np.nonzero(~changed)[0][::25]
    for i in unchanged:
        try:
            si, ti = invert_map(perturbed, ss[i] % L, -tt[i])
        except NumericError:
            continue
        assert not window_bump.contains((si, ti))


def test_symmetrizing_the_unperturbed_map_is_bitwise(unit_grid, window_bump):
    L = unit_grid.disc.length
    hat = reversible_symmetrize(unit_grid, unit_grid, window_bump)
    ss, tt = mixed_samples(window_bump, L, np.random.default_rng(3))
    a1, b1 = unit_grid.map(ss, tt)
    a2, b2 = hat.map(ss, tt)
    assert np.array_equal(np.asarray(a1), np.asarray(a2))
    assert np.array_equal(np.asarray(b1), np.asarray(b2))


def test_symmetrized_map_keeps_defect(perturbed, symmetrized):
    defect = symplectic_defect(symmetrized)
    assert defect <= symplectic_defect(perturbed) + 1e-6
    assert defect <= 5e-7


def test_symmetrize_guards(unit_grid, drift_grid, window_bump):
    # non-reversible base metric
    L = drift_grid.disc.length
    bump = make_bump((1.0, 0.25), (1.0 + 1e-4, 0.25), 0.1, 1, 0.05,
                     period=L)
    tilde = perturb_lens(drift_grid, bump)
    with pytest.raises(ValidationError):
        reversible_symmetrize(tilde, drift_grid, bump)
    # a crafted map whose touched region reverses onto the support
    clash = ComposedLensMap(
        unit_grid,
        post=lambda s, t: (np.full_like(s, window_bump.center[0]),
                           np.full_like(t, -window_bump.center[1])))
    with pytest.raises(DomainError):
        reversible_symmetrize(clash, unit_grid, window_bump)
