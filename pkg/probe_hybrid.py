"""Measurement probes for the hybrid module; numbers get frozen in tests."""
import time

import numpy as np

from finslerlab import SurfacePatch, make_metric
from finslerlab.flow import CallableHamiltonian, integrate_flow
from finslerlab.hybrid import (ComposedSectionMap, DiscOverride, HybridSystem,
                               ReturnMap, Section, SectionOverride,
                               hybrid_orbit, hybrid_section_map,
                               perturb_poincare, poincare_map, section_defect)
from finslerlab.bumps import make_bump, perturb_lens
from finslerlab.lens import SimpleDisc, build_lens_grid, check_simple
from finslerlab.surfaces import PhasePoint

t_all = time.time()

# ---------------------------------------------------------------- flow box
print("== flow box H = p2 ==")
H_box = CallableHamiltonian(
    lambda q, p: p[..., 1],
    grad=lambda q, p: (np.zeros_like(q), np.broadcast_to(
        np.array([0.0, 1.0]), np.shape(q)).copy()))
sec_a = Section(
    "q2=0", lambda q, p: q[..., 1],
    coords=lambda q, p: (q[..., 0], p[..., 0]),
    lift=lambda u1, u2: (np.stack([u1, np.zeros_like(u1)], axis=-1),
                         np.stack([u2, np.ones_like(u2)], axis=-1)))
sec_b = Section(
    "q2=1", lambda q, p: q[..., 1] - 1.0,
    coords=lambda q, p: (q[..., 0], p[..., 0]),
    lift=lambda u1, u2: (np.stack([u1, np.ones_like(u1)], axis=-1),
                         np.stack([u2, np.ones_like(u2)], axis=-1)))
rng = np.random.default_rng(0)
u = rng.uniform(-1, 1, (40, 2))
out = poincare_map(H_box, sec_a, sec_b, u)
print("identity error:", np.max(np.abs(out - u)))

# ------------------------------------------------------------- oscillator
print("== harmonic oscillator ==")
H_osc = CallableHamiltonian(
    lambda q, p: 0.5 * (np.sum(q * q, axis=-1) + np.sum(p * p, axis=-1)),
    grad=lambda q, p: (q.copy(), p.copy()))
sec_0 = Section(
    "q2=0 up", lambda q, p: q[..., 1],
    coords=lambda q, p: (q[..., 0], p[..., 0]),
    lift=lambda u1, u2: (np.stack([u1, np.zeros_like(u1)], axis=-1),
                         np.stack([u2, np.ones_like(u2)], axis=-1)),
    direction=+1)
sec_q = Section(
    "p2=0 down", lambda q, p: p[..., 1],
    coords=lambda q, p: (q[..., 0], p[..., 0]),
    lift=None, direction=-1)
u = rng.uniform(-0.5, 0.5, (40, 2))
out, times = poincare_map(H_osc, sec_0, sec_q, u, return_times=True)
expect = np.stack([u[:, 1], -u[:, 0]], axis=-1)
print("quarter-turn error:", np.max(np.abs(out - expect)),
      "time err:", np.max(np.abs(times - np.pi / 2)))

# --------------------------------------------------- pendulum section map
print("== two-well lattice Hamiltonian ==")
torus = SurfacePatch.torus((1.0, 1.0))


def pend_val(q, p):
    return 0.5 * np.sum(p * p, axis=-1) + 0.05 * (
        np.cos(2 * np.pi * q[..., 0]) + np.cos(2 * np.pi * q[..., 1]))


def pend_grad(q, p):
    gq = -0.1 * np.pi * np.sin(2 * np.pi * q)
    return gq, p.copy()


H_pend = CallableHamiltonian(pend_val, grad=pend_grad, surface=torus)
h_level = 0.6


def lift_at(c):
    def lift(u1, u2):
        v = 0.05 * (np.cos(2 * np.pi * u1) + np.cos(2 * np.pi * c))
        p2 = np.sqrt(2.0 * (h_level - v) - u2 * u2)
        q = np.stack([u1, np.full_like(u1, c)], axis=-1)
        p = np.stack([u2, p2], axis=-1)
        return q, p
    return lift


def wrap_sec(name, c):
    return Section(
        name, lambda q, p, c=c: np.sin(2 * np.pi * (q[..., 1] - c)),
        coords=lambda q, p: (q[..., 0], p[..., 0]),
        lift=lift_at(c), direction=+1)


sec_lo = wrap_sec("q2=0.25", 0.25)
sec_hi = wrap_sec("q2=0.75", 0.75)
P = ReturnMap(H_pend, sec_lo, sec_hi, t_cap=5.0,
              domain=((0.0, 1.0), (-0.4, 0.4)))
u = np.array([[0.3, 0.1], [0.62, -0.2], [0.5, 0.0]])
out, times = P.map(u, return_times=True)
print("sample image:", out, "times:", times)
t0 = time.time()
for h_try in (3e-4, 1e-4, 3e-5):
    d = section_defect(P, n=20, h=h_try)
    print(f"  det defect h={h_try:g}: {d:.3e}  ({time.time()-t0:.1f}s)")
    t0 = time.time()

# ------------------------------------------------ perturbed section map
print("== perturb_poincare ==")
bump = make_bump((0.5, 0.0), (0.5 + 0.6 * 2e-5, -0.8 * 2e-5),
                 0.08, 1, 0.05, period=1.0)
tilde, system = perturb_poincare(P, bump)
u_mix = np.array([[0.5, 0.0], [0.52, 0.02], [0.47, -0.03],  # inside
                  [0.2, 0.1], [0.8, -0.25]])                # outside
direct = tilde.map(u_mix)
via_hybrid = hybrid_section_map(system, sec_lo, sec_hi, u_mix,
                                t_back=0.15, t_cap=5.0)
print("recompute match:", np.max(np.abs(direct - via_hybrid)))
plain = P.map(u_mix)
print("off-support tilde==P:", np.max(np.abs(direct[3:] - plain[3:])),
      " on-support moved:", np.max(np.abs(direct[:3] - plain[:3])))
t0 = time.time()
print("tilde defect:", section_defect(tilde, n=12, h=1e-4),
      f"({time.time()-t0:.1f}s)")
idb = make_bump((0.5, 0.0), (0.5, 0.0), 0.08, 1, 0.05, period=1.0)
tilde_id, _ = perturb_poincare(P, idb)
same = tilde_id.map(u_mix)
print("identity-bump tilde==P bitwise:", np.array_equal(same, plain))

# ------------------------------------------------------- hybrid orbits
print("== hybrid orbit, euclid disc ==")
euclid = make_metric("euclidean")
disc = SimpleDisc(euclid, (0.0, 0.0), 1.0)
check_simple(disc)
t0 = time.time()
grid = build_lens_grid(disc, 64, 64)
print("grid build:", time.time() - t0)

z0 = PhasePoint(np.array([-2.5, -0.37]), np.array([1.0, 0.0]), 0)
sys_id = HybridSystem(euclid, [grid])
t0 = time.time()
orb = hybrid_orbit(sys_id, z0, 5.0)
print("hybrid orbit:", orb, f"({time.time()-t0:.2f}s)")
ref = integrate_flow(type(orb.segments[0]) and __import__(
    "finslerlab.flow", fromlist=["GeodesicHamiltonian"]
).GeodesicHamiltonian(euclid), z0, 5.0)
tf, sf, cf = orb.final
tr, sr, cr = ref.final
print("final time", tf, tr, " state diff:", np.max(np.abs(sf - sr)))
print("events:", orb.event_lines())

orb2 = hybrid_orbit(sys_id, z0, 5.0)
print("deterministic:", orb.event_lines() == orb2.event_lines())

sys_none = HybridSystem(euclid, [])
orb3 = hybrid_orbit(sys_none, z0, 5.0)
print("empty-override diff:", np.max(np.abs(orb3.final[1] - sr)))

# unit-norm exit
ev = orb.events[0]
beta = disc.boundary_covector(ev["s_out"], ev["t_out"], "out")
print("exit dual norm - 1:",
      abs(euclid.dual(beta.point, beta.covector, 0) - 1.0))

print("== hybrid orbit, randers grid ==")
rmetric = make_metric("randers", beta=(0.1, 0.0))
rdisc = SimpleDisc(rmetric, (0.0, 0.0), 1.0)
check_simple(rdisc)
t0 = time.time()
rgrid = build_lens_grid(rdisc, 32, 32)
print("grid build:", time.time() - t0)
from finslerlab.flow import GeodesicHamiltonian
rsys = HybridSystem(rmetric, [rgrid])
q0 = np.array([-2.5, -0.37])
p0 = np.array([1.0, 0.0])
p0 = p0 / rmetric.dual(q0, p0, 0)
zr = PhasePoint(q0, p0, 0)
orbr = hybrid_orbit(rsys, zr, 5.0)
refr = integrate_flow(GeodesicHamiltonian(rmetric), zr, 5.0)
print("final times:", orbr.final[0], refr.final[0])
print("randers hybrid vs direct at T:",
      np.max(np.abs(orbr.final[1] - refr.states[-1])))
print("events:", orbr.event_lines())
evr = orbr.events[0]
br = rdisc.boundary_covector(evr["s_out"], evr["t_out"], "out")
print("randers exit dual norm - 1:",
      abs(rmetric.dual(br.point, br.covector, 0) - 1.0))
# non-unit start must be refused
try:
    hybrid_orbit(rsys, PhasePoint(q0, np.array([1.0, 0.0]), 0), 5.0)
    print("non-unit start: NOT refused")
except Exception as e:
    print("non-unit start:", type(e).__name__, str(e)[:60])

# perturbed override: trajectory off the bumped fiber unchanged
L = disc.length
d = 2e-4
wb = make_bump((1.0, 0.3), (1.0 + 0.8 * d, 0.3 - 0.6 * d), 0.1, 1, 0.05,
               period=L)
tilde_lens = perturb_lens(grid, wb)
sys_pert = HybridSystem(euclid, [tilde_lens])
orbp = hybrid_orbit(sys_pert, z0, 5.0)
print("perturbed-off-support vs id-override diff:",
      np.max(np.abs(orbp.final[1] - orb.final[1])))
evp = orbp.events[0]
print("entry (s,t):", evp["s_in"], evp["t_in"])

# aim straight through the bumped fiber: entry at (s, t) = (1.0, 0.3)
alpha = disc.boundary_covector(1.0, 0.3, "in")
zb = PhasePoint(alpha.point - 1.5 * alpha.covector, alpha.covector, 0)
orb_hit = hybrid_orbit(sys_pert, zb, 5.0)
orb_ref = hybrid_orbit(sys_id, zb, 5.0)
evh = orb_hit.events[0]
print("through-support entry:", evh["s_in"], evh["t_in"],
      " exit shift:", abs(evh["s_out"] - orb_ref.events[0]["s_out"]),
      abs(evh["t_out"] - orb_ref.events[0]["t_out"]))
print("downstream divergence:",
      np.max(np.abs(orb_hit.final[1] - orb_ref.final[1])))
print("time charge diff:", orb_hit.segments[1].times[0]
      - orb_ref.segments[1].times[0])

# truncation: horizon inside the transit
t_entry = orb.events[0]["time"]
orb_tr = hybrid_orbit(sys_id, z0, t_entry + 0.3)
print("truncated:", orb_tr.truncated, " final t:", orb_tr.final[0])

# state_at inside the gap
try:
    orb.state_at(t_entry + 0.5)
    print("gap state_at: NOT refused")
except Exception as e:
    print("gap state_at:", type(e).__name__)
print("state_at(0.5) ok:", orb.state_at(0.5)[0][:2])

print("total probe time:", time.time() - t_all)
