"""Flows whose transit across designated discs is replaced by a map.

Gluing a perturbed scattering map into an otherwise untouched flow gives
the dynamics of a perturbation without ever writing the perturbed metric
down.  A HybridSystem carries the base flow plus a list of overrides;
``hybrid_orbit`` integrates the base field until the orbit crosses into an
override region, applies the replacement map to the entry covector, and
resumes from the outward image.  Every transition is logged, so two runs
with the same inputs produce the same event list byte for byte.

The second half of the module is the section machinery: transversal
sections with Darboux coordinates, first-hit Poincaré maps between them
(batched, so determinant sweeps cost one integration), and the bump
perturbation of a section-to-section map together with a hybrid system
realizing it as an instantaneous kick on the section.
"""

import json

import numpy as np

from .errors import DomainError, TangencyError, ValidationError
from .flow import (FlowEvent, GeodesicHamiltonian, Trajectory,
                   integrate_batch)
from .lens import ComposedLensMap, _root_grid, transit_fan
from .surfaces import PhasePoint

__all__ = [
    "DiscOverride",
    "HybridOrbit",
    "HybridSystem",
    "ReturnMap",
    "ComposedSectionMap",
    "Section",
    "SectionOverride",
    "hybrid_orbit",
    "hybrid_section_map",
    "perturb_poincare",
    "poincare_map",
    "section_defect",
]

# two override boundaries closer than this at a firing time count as one
# ambiguous event and abort the orbit
OVERLAP_TOL = 1e-9
# relative width of the slow-step collar around an override disc: inside
# radius (1 + NEAR_BAND) * rho the integrator caps its steps so that
# grazing chords still change the sign of the boundary function at step
# ends.  Chords shallower than about a third of the tangency margin slip
# through as unreplaced base flow, which the gluing condition makes
# indistinguishable from the replaced dynamics.
NEAR_BAND = 0.05


def _as_hamiltonian(base):
    """Accept a metric or a Hamiltonian object, return the Hamiltonian."""
    if hasattr(base, "rhs") and hasattr(base, "value"):
        return base
    if hasattr(base, "dual") and hasattr(base, "coeffs"):
        return GeodesicHamiltonian(base)
    raise ValidationError(
        "base must be a Finsler metric or a Hamiltonian with rhs/value")


# ---------------------------------------------------------------------------
# sections and Poincaré maps


class Section:
    """A transversal section of a flow, with its own chart coordinates.

    Parameters
    ----------
    name : label used in event logs and error messages.
    event : scalar field g(q, p) whose zero set is the section; must be
        vectorized over stacked (..., 2) arrays.
    coords : (q, p) -> (u1, u2) chart on the section.
    lift : (u1, u2) -> (q, p) inverse chart; for sections inside an
        energy level the lift is where the remaining momentum component
        gets solved from H = h, so it is the caller's closure.
    direction : +1 fires on g crossing upward, -1 downward, 0 on either.
    chart : surface chart the section lives in (sections do not span
        chart handovers).
    """

    def __init__(self, name, event, coords, lift, direction=+1, chart=0):
        self.name = str(name)
        self.event = event
        self.coords = coords
        self.lift = lift
        self.direction = int(direction)
        self.chart = int(chart)
        if self.direction not in (-1, 0, 1):
            raise ValidationError("section direction must be -1, 0 or +1")

    def flow_event(self, arm=True):
        off = -1.0 if self.direction >= 0 else 1.0
        sec_chart = self.chart

        def g(q, p, charts):
            val = np.asarray(self.event(q, p), dtype=float)
            return np.where(np.asarray(charts) == sec_chart, val, off)

        return FlowEvent(g, direction=self.direction, arm=arm)

    def lift_states(self, u):
        """Stack lifted phase states for an (n, 2) array of chart points."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        q, p = self.lift(u[:, 0], u[:, 1])
        return np.concatenate([np.atleast_2d(np.asarray(q, dtype=float)),
                               np.atleast_2d(np.asarray(p, dtype=float))],
                              axis=-1)

    def chart_point(self, state):
        u1, u2 = self.coords(state[..., :2], state[..., 2:])
        return np.stack([np.asarray(u1, dtype=float),
                         np.asarray(u2, dtype=float)], axis=-1)

    def __repr__(self):
        return f"Section({self.name!r}, direction={self.direction:+d})"


def _check_transverse(H, sec, states, charts):
    """The flow must actually cross the section where we stand on it."""
    f = H.rhs(states, charts)
    scale = np.maximum(1.0, np.max(np.abs(states), axis=-1))
    tau = 1e-6
    g_plus = np.asarray(sec.event(states[:, :2] + tau * f[:, :2],
                                  states[:, 2:] + tau * f[:, 2:]))
    g_minus = np.asarray(sec.event(states[:, :2] - tau * f[:, :2],
                                   states[:, 2:] - tau * f[:, 2:]))
    gdot = (g_plus - g_minus) / (2.0 * tau)
    bad = np.abs(gdot) < 1e-8 * scale
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValidationError(
            f"section {sec.name!r} is not transverse to the flow at the "
            f"start point (dg/dt = {gdot[k]:.3e})")


def poincare_map(H, sec0, sec1, z, t_cap=50.0, tol=1e-12, max_step=np.inf,
                 return_times=False):
    """First-hit map from one transversal section to another.

    Lifts z from sec0's chart coordinates, integrates the flow of H and
    stops each orbit at its first directed crossing of sec1 (first
    return, when the sections coincide, because the event must rearm).
    z may be a single (u1, u2) pair or an (..., 2) batch; batches share
    one integration, which is what makes determinant sweeps affordable.

    Raises DomainError when an orbit fails to reach the target section
    within the time cap.
    """
    H = _as_hamiltonian(H)
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 2:
        raise ValidationError("section points must have two coordinates")
    shape = z.shape[:-1]
    u = z.reshape(-1, 2)
    states = sec0.lift_states(u)
    n = states.shape[0]
    charts = np.full(n, sec0.chart)
    _check_transverse(H, sec0, states, charts)

    res = integrate_batch(H, states, charts, t_cap, tol=tol,
                          events=(sec1.flow_event(),), max_step=max_step)
    lost = res.event_index != 0
    if np.any(lost):
        k = int(np.argmax(lost))
        raise DomainError(
            f"{int(np.sum(lost))} of {n} orbits never crossed section "
            f"{sec1.name!r} within t_cap={t_cap:.6g} (first miss started "
            f"at u=({u[k, 0]:.6g}, {u[k, 1]:.6g}))")
    out = sec1.chart_point(res.states)
    out = out.reshape(shape + (2,))
    if return_times:
        return out, res.event_time.reshape(shape)
    return out


class ReturnMap:
    """A Poincaré map between two fixed sections, reusable and immutable.

    domain, when given, is ((u1_lo, u1_hi), (u2_lo, u2_hi)): the box on
    the source section inside which the map is known to be defined.  It
    is what perturbations are checked against, and what determinant
    sweeps sample.
    """

    def __init__(self, H, sec0, sec1, t_cap=50.0, tol=1e-12,
                 max_step=np.inf, domain=None):
        self.H = _as_hamiltonian(H)
        self.sec0 = sec0
        self.sec1 = sec1
        self.t_cap = float(t_cap)
        self.tol = float(tol)
        self.max_step = max_step
        self.domain = None if domain is None else (
            (float(domain[0][0]), float(domain[0][1])),
            (float(domain[1][0]), float(domain[1][1])))

    def map(self, z, return_times=False):
        return poincare_map(self.H, self.sec0, self.sec1, z,
                            t_cap=self.t_cap, tol=self.tol,
                            max_step=self.max_step,
                            return_times=return_times)

    def __call__(self, z):
        return self.map(z)

    def describe(self):
        return (f"return map {self.sec0.name} -> {self.sec1.name}, "
                f"t_cap={self.t_cap:g}")


class ComposedSectionMap:
    """A section map pre-composed with a chart-coordinate map.

    map(u) = base.map(pre(u)).  Mirrors the lens-map composition type;
    pre and pre_inv act on stacked (..., 2) arrays.
    """

    def __init__(self, base, pre=None, pre_inv=None):
        self.base = base
        self.pre = pre
        self.pre_inv = pre_inv

    @property
    def H(self):
        return self.base.H

    @property
    def sec0(self):
        return self.base.sec0

    @property
    def sec1(self):
        return self.base.sec1

    @property
    def domain(self):
        return self.base.domain

    def map(self, z, return_times=False):
        z = np.asarray(z, dtype=float)
        if self.pre is not None:
            z = self.pre(z)
        return self.base.map(z, return_times=return_times)

    def __call__(self, z):
        return self.map(z)


def section_defect(pmap, domain=None, n=20, h=1e-4):
    """Worst |det D - 1| of a section map over an n x n sample grid.

    Jacobians come from Richardson-extrapolated central differences with
    chart steps h and h/2; all 8 n^2 probe points ride one batched
    integration.  The grid is shaved half a cell plus the stencil width
    off the domain edges so every probe stays inside.
    """
    box = domain if domain is not None else getattr(pmap, "domain", None)
    if box is None:
        raise ValidationError(
            "section_defect needs a domain box (none stored on the map)")
    (a0, a1), (b0, b1) = box
    pad0 = 0.5 * (a1 - a0) / n + 2 * h
    pad1 = 0.5 * (b1 - b0) / n + 2 * h
    u1 = np.linspace(a0 + pad0, a1 - pad0, n)
    u2 = np.linspace(b0 + pad1, b1 - pad1, n)
    U1, U2 = np.meshgrid(u1, u2, indexing="ij")
    base = np.stack([U1.ravel(), U2.ravel()], axis=-1)

    probes = []
    for hh in (h, 0.5 * h):
        for k in range(2):
            e = np.zeros(2)
            e[k] = hh
            probes.append(base + e)
            probes.append(base - e)
    out = pmap.map(np.concatenate(probes, axis=0))
    m = base.shape[0]
    blocks = [out[i * m:(i + 1) * m] for i in range(8)]

    def jac(plus1, minus1, plus2, minus2, hh):
        J = np.empty((m, 2, 2))
        J[:, :, 0] = (plus1 - minus1) / (2.0 * hh)
        J[:, :, 1] = (plus2 - minus2) / (2.0 * hh)
        return J

    J_h = jac(blocks[0], blocks[1], blocks[2], blocks[3], h)
    J_h2 = jac(blocks[4], blocks[5], blocks[6], blocks[7], 0.5 * h)
    J = (4.0 * J_h2 - J_h) / 3.0
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    return float(np.max(np.abs(det - 1.0)))


# ---------------------------------------------------------------------------
# overrides


class DiscOverride:
    """A certified disc whose lens map is replaced.

    sigma may be the disc's own tabulated lens map (the do-nothing
    override used for fidelity checks) or any composed perturbation of
    it.  Construction verifies the gluing hypothesis: the replacement
    agrees with the tabulated map along the grazing edges of the inward
    window, and around each recorded support patch when the map carries
    that metadata.
    """

    kind = "disc"

    def __init__(self, sigma, name=None):
        self.sigma = sigma
        self.disc = sigma.disc
        self.name = name
        cert = self.disc.certification
        if cert is None:
            raise ValidationError(
                "override disc has no simplicity certificate; run "
                "check_simple first")
        if not cert.passed:
            raise ValidationError(
                f"override disc failed its certificate: {cert.failed()}")
        self._grid = _root_grid(sigma) if isinstance(
            sigma, ComposedLensMap) else sigma
        self._check_gluing()

    def _check_gluing(self):
        """Replacement = tabulated map near the window boundary."""
        if self.sigma is self._grid:
            return
        disc = self.disc
        L = disc.length
        A = self._grid.A_nodes
        width = A[-1] - A[0]
        ss = np.linspace(0.0, L, 25)[:-1]
        worst = 0.0
        for A_edge in (A[0] + 1e-3 * width, A[-1] - 1e-3 * width):
            lo, hi = disc.admissible_interval(ss)
            tt = 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.cos(A_edge)
            worst = max(worst, self._deviation(ss, tt))
        for (cs, ct), rad in getattr(self.sigma, "support", []):
            ang = np.linspace(0.0, 2.0 * np.pi, 32, endpoint=False)
            ss = (cs + 1.05 * rad * np.cos(ang)) % L
            tt = ct + 1.05 * rad * np.sin(ang)
            worst = max(worst, self._deviation(ss, tt))
        if worst > 1e-7:
            raise ValidationError(
                f"replacement map deviates from the disc lens map by "
                f"{worst:.3e} on the gluing annulus; it cannot be glued "
                f"into the flow continuously")

    def _deviation(self, ss, tt):
        s_a, t_a = self.sigma.map(ss, tt)
        s_b, t_b = self._grid.map(ss, tt)
        L = self.disc.length
        ds = np.abs(np.asarray(s_a) - np.asarray(s_b))
        ds = np.minimum(ds, L - ds)
        return float(max(np.max(ds), np.max(np.abs(
            np.asarray(t_a) - np.asarray(t_b)))))

    def boundary_value(self, q, chart):
        val = self.disc.boundary_field(q)
        if np.ndim(chart) == 0:
            return val if chart == self.disc.chart else 1.0
        return np.where(np.asarray(chart) == self.disc.chart, val, 1.0)

    def flow_event(self):
        return FlowEvent(self._radial(self.disc.radius), direction=-1,
                         arm=True)

    def collar_event(self, direction):
        """Crossing of the slow-step collar circle, either way."""
        return FlowEvent(self._radial(self.disc.radius * (1 + NEAR_BAND)),
                         direction=direction, arm=True)

    @property
    def slow_step(self):
        """Step cap inside the collar, sized to the tangency margin."""
        return self.disc.radius * np.sin(self._grid.A_nodes[0]) / 3.0

    def _radial(self, r):
        disc_chart = self.disc.chart
        c0, c1 = self.disc.center

        def g(q, p, charts):
            val = np.hypot(q[..., 0] - c0, q[..., 1] - c1) - r
            return np.where(np.asarray(charts) == disc_chart, val, 1.0)

        return g


class SectionOverride:
    """A section crossing replaced by an instantaneous bump kick.

    Whenever the orbit crosses the section inside the bump support, the
    crossing point u is moved to psi^{-1}(u) before the flow resumes;
    crossings outside the support pass through untouched.  This realizes
    the section-to-section map P o psi^{-1} without modifying the flow
    anywhere off the section.
    """

    kind = "section"

    def __init__(self, section, bump, name=None):
        self.section = section
        self.bump = bump
        self.name = name

    def boundary_value(self, q, chart):
        # sections are codimension one in the flow direction, not tubes;
        # overlap checks use the raw event value
        return np.asarray(self.section.event(q, np.zeros_like(q)))

    def flow_event(self):
        return self.section.flow_event()

    def support_states(self, n_ring=24):
        """Lifted phase states of the support boundary, for disjointness
        checks against disc overrides."""
        ang = np.linspace(0.0, 2.0 * np.pi, n_ring, endpoint=False)
        u = np.stack([self.bump.center[0] + self.bump.delta * np.cos(ang),
                      self.bump.center[1] + self.bump.delta * np.sin(ang)],
                     axis=-1)
        return self.section.lift_states(u)


class HybridSystem:
    """A base flow with a list of transit overrides.

    base : Finsler metric or Hamiltonian object.
    overrides : DiscOverride / SectionOverride instances; bare lens maps
        (anything with .disc and .map) are wrapped automatically.

    Construction rejects overlapping override regions: two discs whose
    closures intersect on the same chart, two section kicks with
    overlapping supports on the same section, or a section support whose
    lift runs inside an override disc.
    """

    def __init__(self, base, overrides=()):
        self.base = base
        self.H = _as_hamiltonian(base)
        wrapped = []
        for k, ov in enumerate(overrides):
            if isinstance(ov, (DiscOverride, SectionOverride)):
                pass
            elif hasattr(ov, "disc") and hasattr(ov, "map"):
                ov = DiscOverride(ov)
            else:
                raise ValidationError(
                    f"override {k} is neither a lens map nor an override "
                    f"object")
            if ov.name is None:
                ov.name = f"{ov.kind}{k}"
            wrapped.append(ov)
        names = [ov.name for ov in wrapped]
        if len(set(names)) != len(names):
            raise ValidationError(f"override names collide: {names}")
        self.overrides = wrapped
        self._check_disjoint()

    def _check_disjoint(self):
        discs = [ov for ov in self.overrides if ov.kind == "disc"]
        secs = [ov for ov in self.overrides if ov.kind == "section"]
        for i in range(len(discs)):
            for j in range(i + 1, len(discs)):
                a, b = discs[i].disc, discs[j].disc
                if a.chart != b.chart:
                    continue
                gap = np.linalg.norm(a.center - b.center) \
                    - (a.radius + b.radius)
                if gap <= 0:
                    raise ValidationError(
                        f"override discs {discs[i].name!r} and "
                        f"{discs[j].name!r} overlap (gap {gap:.3e})")
        for i in range(len(secs)):
            for j in range(i + 1, len(secs)):
                if secs[i].section is not secs[j].section:
                    continue
                a, b = secs[i].bump, secs[j].bump
                d = a.center - b.center
                if a.period is not None:
                    d[0] = (d[0] + 0.5 * a.period) % a.period \
                        - 0.5 * a.period
                if np.hypot(d[0], d[1]) <= a.delta + b.delta:
                    raise ValidationError(
                        f"section overrides {secs[i].name!r} and "
                        f"{secs[j].name!r} have overlapping supports")
        for sec in secs:
            states = sec.support_states()
            for dv in discs:
                if np.any(dv.boundary_value(states[:, :2],
                                            np.full(len(states),
                                                    dv.disc.chart)) < 0):
                    raise ValidationError(
                        f"support of section override {sec.name!r} lifts "
                        f"into override disc {dv.name!r}")

    def describe(self):
        parts = ", ".join(f"{ov.name}({ov.kind})" for ov in self.overrides)
        return f"hybrid system with overrides [{parts}]"


# ---------------------------------------------------------------------------
# hybrid integration


class HybridOrbit:
    """Piecewise trajectory of a hybrid system, with its event log.

    segments : Trajectory objects in absolute time; consecutive segments
        are separated by the overridden disc transits, whose interiors
        the hybrid flow never visits.
    events : dicts {time, disc_id, s_in, t_in, s_out, t_out}, one per
        transition, in order.
    stopped : name of the stop section if one ended the orbit, else None.
    truncated : True when the horizon fell inside an overridden transit,
        in which case the orbit ends at the entry covector.
    """

    def __init__(self, segments, events, T, stopped=None, truncated=False):
        self.segments = segments
        self.events = events
        self.T = float(T)
        self.stopped = stopped
        self.truncated = truncated

    @property
    def final(self):
        return self.segments[-1].final

    def state_at(self, t):
        """Sampled state nearest to time t within a segment.

        Times inside an overridden transit are not part of the hybrid
        flow; asking for one raises DomainError.
        """
        t = float(t)
        for seg in self.segments:
            if seg.times[0] - 1e-12 <= t <= seg.times[-1] + 1e-12:
                k = int(np.argmin(np.abs(seg.times - t)))
                return seg.states[k].copy(), int(seg.charts[k])
        raise DomainError(
            f"time {t:.6g} falls inside an overridden disc transit")

    def event_lines(self):
        """The event log as JSON lines, one transition per line."""
        lines = []
        for ev in self.events:
            lines.append(json.dumps(
                {"time": ev["time"], "disc_id": ev["disc_id"],
                 "s_in": ev["s_in"], "t_in": ev["t_in"],
                 "s_out": ev["s_out"], "t_out": ev["t_out"]}))
        return "\n".join(lines)

    def export_log(self, path):
        text = self.event_lines()
        with open(path, "w") as fh:
            fh.write(text + ("\n" if text else ""))

    def __repr__(self):
        return (f"HybridOrbit({len(self.segments)} segments, "
                f"{len(self.events)} transitions, T={self.T:g})")


def _segment(H, state, chart, T, tol, max_step, events):
    """One integration leg, recorded and truncated at its first event.

    Returns (times, states, charts, result); the sample arrays end
    exactly at the event state when an event fired.
    """
    times, states, charts = [], [], []

    def rec(t, y, cc, act):
        times.append(t)
        states.append(y[0].copy())
        charts.append(int(cc[0]))

    res = integrate_batch(H, state[None, :], chart, T, tol=tol,
                          events=events, max_step=max_step, record=rec)
    times = np.asarray(times)
    states = np.asarray(states)
    charts = np.asarray(charts, dtype=int)
    if res.event_index[0] >= 0:
        te = res.event_time[0]
        keep = times < te - 1e-15
        times = np.append(times[keep], te)
        states = np.concatenate([states[keep], res.states[:1]], axis=0)
        charts = np.append(charts[keep], res.charts[0])
    return times, states, charts, res


def _to_trajectory(H, times, states, charts, t0, tol):
    energy = np.array([H.value(s[:2], s[2:], c)
                       for s, c in zip(states, charts)])
    return Trajectory(times + t0, states, charts, energy, tol, order=4)


def _claimed_transit(override, s_in, t_in, tol):
    """Flow time of the chord the replacement map claims to follow.

    A composed perturbation sigma o psi^{-1} reroutes the entry covector
    to its bump preimage and then follows the true chord from there, so
    the honest time charge is that chord's transit time.  Replacements
    without a recorded pre-map are charged the entry chord itself.
    """
    disc = override.disc
    pre = getattr(override.sigma, "pre", None)
    if pre is not None:
        s_c, t_c = pre(s_in, t_in)
        s_c, t_c = float(np.squeeze(s_c)), float(np.squeeze(t_c))
    else:
        s_c, t_c = s_in, t_in
    A = float(disc.fan_angle(s_c, t_c))
    res = transit_fan(disc, [s_c], [A], tol=max(tol, 1e-12), graze="raise")
    return float(res["time"][0])


def hybrid_orbit(system, z0, T, tol=1e-10, max_step=np.inf, stop=None):
    """Integrate a hybrid system forward from a phase point.

    The base flow runs until the orbit crosses into an override region:
    a disc override maps the entry boundary covector through its
    replacement lens map and restarts the flow at the outward image,
    charging the transit time of the chord the replacement claims; a
    section override moves the crossing point by the inverse bump when
    it lands in the support.  Each transition appends one event record.

    Near-tangent entries dip so shallowly into a disc that ordinary
    adaptive steps can straddle them, so each disc wears a collar of
    relative width NEAR_BAND inside which steps are capped small enough
    to resolve chords down to a third of the tangency margin.

    stop : optional Section; the orbit ends at its first directed
        crossing (used to build first-return data on hybrid flows).

    Raises TangencyError when an entry covector falls inside the grid's
    tangency margin, and ValidationError when two override boundaries
    fire at the same instant, since the glued dynamics is then ambiguous.
    """
    if not isinstance(system, HybridSystem):
        raise ValidationError("hybrid_orbit expects a HybridSystem")
    if not isinstance(z0, PhasePoint):
        raise ValidationError("hybrid_orbit expects a PhasePoint start")
    T = float(T)
    if T <= 0:
        raise ValidationError(
            "hybrid orbits run forward; T must be positive")
    for ov in system.overrides:
        if ov.kind == "disc" and ov.disc.chart == z0.chart \
                and ov.disc.boundary_field(z0.q) <= 0:
            raise ValidationError(
                f"start point lies inside override disc {ov.name!r}")

    H = system.H
    discs = [k for k, ov in enumerate(system.overrides)
             if ov.kind == "disc"]
    # any pass reaching a disc runs at least 0.64 radius of chord inside
    # its collar, so this cap guarantees the collar crossing is seen even
    # when the base field would let the steps grow without bound
    far_cap = max_step
    for k in discs:
        d = system.overrides[k].disc
        m_lo, _ = d.metric.speed_bounds()
        far_cap = min(far_cap, 0.3 * m_lo * d.radius)

    segments, log = [], []
    state = np.concatenate([z0.q, z0.p]).astype(float)
    chart = int(z0.chart)
    t0 = 0.0
    stopped = None
    truncated = False
    near = None  # index of the disc whose collar the orbit is inside

    while True:
        events, tags = [], []
        for k, ov in enumerate(system.overrides):
            events.append(ov.flow_event())
            tags.append(("override", k))
        if stop is not None:
            events.append(stop.flow_event())
            tags.append(("stop",))
        for k in discs:
            if k == near:
                events.append(system.overrides[k].collar_event(+1))
                tags.append(("collar_out", k))
            else:
                events.append(system.overrides[k].collar_event(-1))
                tags.append(("collar_in", k))
        cap = max_step if near is None else min(
            max_step, system.overrides[near].slow_step)

        times, smp, charts, res = _segment(
            H, state, chart, T - t0, tol, cap, events)
        segments.append(_to_trajectory(H, times, smp, charts, t0, tol))
        if res.event_index[0] < 0:
            break
        tag = tags[int(res.event_index[0])]
        t_ev = t0 + float(res.event_time[0])
        y = res.states[0]
        chart = int(res.charts[0])
        if tag[0] == "stop":
            stopped = stop.name
            break
        if tag[0] in ("collar_in", "collar_out"):
            near = tag[1] if tag[0] == "collar_in" else None
            state = y.copy()
            t0 = t_ev
            if T - t0 <= 1e-13:
                break
            continue
        k = tag[1]
        ov = system.overrides[k]

        # a second boundary at the same state makes the transition order
        # undefined; refuse rather than guess
        for j, other in enumerate(system.overrides):
            if j == k:
                continue
            val = other.boundary_value(y[None, :2], np.array([chart]))
            if np.min(np.abs(val)) < OVERLAP_TOL:
                raise ValidationError(
                    f"overlapping override events at t={t_ev:.6g}: "
                    f"{ov.name!r} and {other.name!r} fire together")

        if ov.kind == "disc":
            disc = ov.disc
            nrm = float(disc.metric.dual(y[:2], y[2:], chart))
            if abs(nrm - 1.0) > 1e-6:
                raise ValidationError(
                    f"lens overrides act on unit covectors, but the orbit "
                    f"entered disc {ov.name!r} with phi* = {nrm:.8g}; "
                    f"normalize the start covector")
            s_in, t_in, _ = disc.exit_data(y[:2], y[2:])
            s_in, t_in = float(s_in), float(t_in)
            A = float(disc.fan_angle(s_in, t_in))
            A_nodes = ov._grid.A_nodes
            if A <= A_nodes[0] or A >= A_nodes[-1]:
                raise TangencyError(
                    f"entry into disc {ov.name!r} at s={s_in:.6g} lies "
                    f"inside the tangency margin (A={A:.4g})")
            so, to = ov.sigma.map(s_in, t_in)
            s_out, t_out = float(np.squeeze(so)), float(np.squeeze(to))
            tau = _claimed_transit(ov, s_in, t_in, tol)
            log.append({"time": t_ev, "disc_id": ov.name, "s_in": s_in,
                        "t_in": t_in, "s_out": s_out, "t_out": t_out})
            if t_ev + tau >= T:
                truncated = True
                break
            beta = disc.boundary_covector(s_out, t_out, "out")
            state = np.concatenate([beta.point, beta.covector])
            chart = disc.chart
            t0 = t_ev + tau
        else:
            u = ov.section.chart_point(y[None, :])[0]
            if ov.bump.contains(u):
                u_new = ov.bump.inverse(u)
                log.append({"time": t_ev, "disc_id": ov.name,
                            "s_in": float(u[0]), "t_in": float(u[1]),
                            "s_out": float(u_new[0]),
                            "t_out": float(u_new[1])})
                state = ov.section.lift_states(u_new[None, :])[0]
            else:
                state = y.copy()
            t0 = t_ev
        if T - t0 <= 1e-13:
            break

    return HybridOrbit(segments, log, T, stopped=stopped,
                       truncated=truncated)


def hybrid_section_map(system, sec0, sec1, u, t_back=0.2, t_cap=50.0,
                       tol=1e-12):
    """Section-to-section map of a hybrid system, by actually flowing.

    The start point is backed up from sec0 along the *base* flow by
    t_back, then the hybrid orbit runs forward until it crosses sec1;
    the forward leg re-crosses sec0 exactly at u, so any section
    override there gets its say.  u may be an (n, 2) batch; rows are
    integrated one orbit at a time (hybrid orbits are sequential).
    """
    single = np.asarray(u, dtype=float).ndim == 1
    u = np.atleast_2d(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    H = system.H
    for i, row in enumerate(u):
        state = sec0.lift_states(row[None, :])[0]
        back = integrate_batch(H, state[None, :], sec0.chart, -t_back,
                               tol=tol)
        z0 = PhasePoint(back.states[0, :2], back.states[0, 2:],
                        int(back.charts[0]))
        orb = hybrid_orbit(system, z0, t_back + t_cap, tol=tol, stop=sec1)
        if orb.stopped != sec1.name:
            raise DomainError(
                f"hybrid orbit from u=({row[0]:.6g}, {row[1]:.6g}) never "
                f"crossed section {sec1.name!r} within t_cap={t_cap:.6g}")
        _, state, _ = orb.final
        out[i] = sec1.chart_point(state[None, :])[0]
    return out[0] if single else out


def perturb_poincare(pmap, bump):
    """Bump-perturb a section map and build the hybrid realizing it.

    Returns (P_tilde, system): P_tilde = P o psi^{-1} as a composed
    section map, and a HybridSystem whose only override kicks crossings
    of the source section by psi^{-1}, so its section-to-section map is
    P_tilde by construction (and by re-computation, which is the test).
    """
    if not hasattr(pmap, "sec0"):
        raise ValidationError(
            "perturb_poincare needs a ReturnMap-like section map")
    box = getattr(pmap, "domain", None)
    if box is not None:
        (a0, a1), (b0, b1) = box
        c, d = bump.center, bump.delta
        inside = (a0 < c[0] - d and c[0] + d < a1
                  and b0 < c[1] - d and c[1] + d < b1)
        if bump.period is not None:
            # a periodic first coordinate cannot escape sideways
            inside = b0 < c[1] - d and c[1] + d < b1
        if not inside:
            raise DomainError(
                "bump support escapes the domain of the section map")

    def pre(z):
        return bump.inverse(z)

    def pre_inv(z):
        return bump.apply(z)

    tilde = ComposedSectionMap(pmap, pre=pre, pre_inv=pre_inv)
    tilde.support = ((float(bump.center[0]), float(bump.center[1])),
                     bump.delta)
    system = HybridSystem(pmap.H, [SectionOverride(pmap.sec0, bump,
                                                   name="kick")])
    return tilde, system
