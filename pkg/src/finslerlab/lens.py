"""Boundary scattering data of simple discs.

A disc with strictly convex boundary cuts every geodesic through it into
chords.  Recording, for each inward unit covector on the boundary, the
outward covector where its chord first leaves the disc gives the
scattering (or lens) map of the disc.  In the boundary coordinates used
throughout this module -- chart arc length s along the boundary circle
and tangential momentum t = p(T(s)) -- the restriction of the canonical
1-form p dq is exactly t ds, so the lens map preserves the area form
ds ^ dt and the sweep integral of the outgoing momentum over all exits
from a fixed entry point vanishes.  Those two identities are the checks
everything downstream leans on.

Discs are round circles in chart coordinates.  That keeps the boundary
field trivially smooth and puts all the metric dependence into the
transit flow, where the batched integrator already does the work.
"""

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import brentq

from .errors import (CertificationError, DomainError, NumericError,
                     TangencyError, ValidationError)
from .flow import FlowEvent, GeodesicHamiltonian, integrate_batch
from .geodesy import distance

__all__ = [
    "BoundaryCovector", "ComposedLensMap", "LensGrid", "SimpleDisc",
    "SimplicityRecord", "build_lens_grid", "check_simple",
    "consistency_integral", "invert_map", "lambda_sigma", "lens_map",
    "load_lens_grid", "p_inv", "p_map", "q_inv", "q_map", "save_lens_grid",
    "simplicity_radius", "symplectic_defect", "transit_fan",
]

# Inward fans are tabulated only where the tangential momentum stays this
# far from its grazing extremes; closer to tangency the exit data has a
# square-root singularity in t (but not in the fan angle A).
TANGENCY_MARGIN = 1e-3
# Below this exit angle (radians, against the boundary tangent) a transit
# counts as tangent and the lens map is not defined.
GRAZE_ANGLE = 1e-6


class BoundaryCovector:
    """Unit covector with foot on a disc boundary.

    s : boundary coordinate (chart arc length, counterclockwise)
    t : tangential momentum p(T(s))
    side : "in" or "out" (which of the two unit covectors with this t)
    point, covector : chart representations, filled by the disc
    """

    __slots__ = ("s", "t", "side", "point", "covector")

    def __init__(self, s, t, side, point=None, covector=None):
        if side not in ("in", "out"):
            raise ValidationError("side must be 'in' or 'out'")
        self.s = float(s)
        self.t = float(t)
        self.side = side
        self.point = point
        self.covector = covector

    def __repr__(self):
        return (f"BoundaryCovector(s={self.s:.6g}, t={self.t:.6g}, "
                f"side={self.side!r})")


class SimplicityRecord:
    """Outcome of a disc certification.

    conditions maps 1, 2, 3 to dicts with at least "passed" and "note";
    failed conditions carry a witness describing where they broke.
    """

    def __init__(self, conditions):
        self.conditions = conditions
        self.passed = all(c["passed"] for c in conditions.values())

    def failed(self):
        return sorted(k for k, c in self.conditions.items() if not c["passed"])

    def __repr__(self):
        bad = self.failed()
        tag = "simple" if self.passed else f"not simple, failed {bad}"
        return f"SimplicityRecord({tag})"


class SimpleDisc:
    """A round chart disc, the stage for a lens map.

    The boundary is parametrized counterclockwise by chart arc length,
    x(s) = center + radius (cos(s/radius), sin(s/radius)), total length
    L = 2 pi radius.  The tangential momentum of a unit covector at x(s)
    ranges over the open interval (c.T - a, c.T + a); its two endpoints
    are the grazing values -phi(-T) and phi(T).

    ``certification`` stays None until ``check_simple`` has been run; the
    grid builder refuses uncertified and failed discs alike.
    """

    def __init__(self, metric, center, radius, chart=0):
        self.metric = metric
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.radius = float(radius)
        self.chart = int(chart)
        if not self.radius > 0:
            raise ValidationError("disc radius must be positive")
        surf = metric.surface
        if surf.kind == "torus" and 2 * self.radius >= min(surf.periods):
            raise ValidationError(
                "disc diameter exceeds a torus period; the boundary circle "
                "would overlap itself")
        if surf.kind == "plane":
            reach = np.linalg.norm(self.center) + self.radius
            if reach > surf.chart_radius:
                raise DomainError(
                    f"disc reaches chart radius {reach:.3g} > "
                    f"{surf.chart_radius:.3g}")
        if surf.kind == "sphere":
            reach = np.linalg.norm(self.center) + self.radius
            if reach >= surf.switch_radius():
                raise ValidationError(
                    "disc crosses the chart handover zone; recenter it")
        self.certification = None

    @property
    def length(self):
        return 2.0 * np.pi * self.radius

    def boundary_point(self, s):
        ang = np.asarray(s, dtype=float) / self.radius
        return self.center + self.radius * np.stack(
            [np.cos(ang), np.sin(ang)], axis=-1)

    def tangent(self, s):
        ang = np.asarray(s, dtype=float) / self.radius
        return np.stack([-np.sin(ang), np.cos(ang)], axis=-1)

    def boundary_field(self, q):
        d = np.asarray(q, dtype=float) - self.center
        return np.hypot(d[..., 0], d[..., 1]) - self.radius

    def admissible_interval(self, s):
        """Open t-interval of unit covectors at x(s), (-phi(-T), phi(T))."""
        x = self.boundary_point(s)
        T = self.tangent(s)
        a, c = self.metric.coeffs(x, self.chart)
        ct = c[..., 0] * T[..., 0] + c[..., 1] * T[..., 1]
        return ct - a, ct + a

    def fan_angle(self, s, t):
        """Fan angle A in (0, pi) of the inward covector with momentum t."""
        lo, hi = self.admissible_interval(s)
        a = 0.5 * (hi - lo)
        u = (np.asarray(t, dtype=float) - 0.5 * (hi + lo)) / a
        if np.any(np.abs(u) >= 1.0):
            raise DomainError("tangential momentum outside the fiber interval")
        return np.arccos(u)

    def covector(self, s, A, side="in"):
        """Chart data (x, p) of the boundary covector with fan angle A.

        A is measured from the boundary tangent toward the inward normal;
        the inward covector sits at fiber angle atan2(T) + A, the outward
        one at atan2(T) - A.
        """
        s = np.asarray(s, dtype=float)
        A = np.asarray(A, dtype=float)
        x = self.boundary_point(s)
        T = self.tangent(s)
        base = np.arctan2(T[..., 1], T[..., 0])
        theta = base + A if side == "in" else base - A
        p = self.metric.fiber_point(x, theta, self.chart)
        return x, p

    def boundary_covector(self, s, t, side="in"):
        A = self.fan_angle(s, t)
        x, p = self.covector(s, A, side)
        return BoundaryCovector(s, t, side, point=x, covector=p)

    def exit_data(self, q, p):
        """Boundary coordinates (s, t) and exit angle of a state on ∂D."""
        rel = np.asarray(q, dtype=float) - self.center
        ang = np.arctan2(rel[..., 1], rel[..., 0]) % (2.0 * np.pi)
        s = ang * self.radius
        T = self.tangent(s)
        t = p[..., 0] * T[..., 0] + p[..., 1] * T[..., 1]
        a, c = self.metric.coeffs(self.boundary_point(s), self.chart)
        n0 = (p[..., 0] - c[..., 0]) / a
        n1 = (p[..., 1] - c[..., 1]) / a
        # sine of the angle between the exit direction and the tangent
        # line; negative means outward-pointing.
        sin_exit = n0 * (-T[..., 1]) + n1 * T[..., 0]
        return s, t, sin_exit

    def describe(self):
        return (f"disc r={self.radius:.6g} at ({self.center[0]:.6g}, "
                f"{self.center[1]:.6g}) in {self.metric.describe()}")


def _unwrap_offset(raw, A, radius, L):
    """Exit offsets r = s_out - s_in mod L, continuous in the fan angle.

    The raw mod-L value can wrap at the grazing ends (r near 0 or L);
    pull it back so r increases continuously from 0 to L as A runs from
    0 to pi.
    """
    r = np.array(raw, dtype=float)
    low = (A < 0.5) & (r > 0.75 * L)
    r[low] -= L
    high = (A > np.pi - 0.5) & (r < 0.25 * L)
    r[high] += L
    return r


def transit_fan(disc, s, A, tol=1e-10, graze="raise", horizon=None):
    """First-exit transit of the fan rays (s_i, A_i) through the disc.

    Parameters
    ----------
    s, A : arrays of entry arc lengths and fan angles in (0, pi).
    graze : "raise" turns tangential exits into TangencyError, "mark"
        records them in the ``graze`` mask instead (used by the grid
        builder and the certification sweep).
    horizon : metric length after which a ray without an exit counts as
        missed; defaults to 12 max-speed radii.

    Returns a dict of arrays: s_out, t_out, t_in, r (continuous exit
    offset), time (metric length of the chord), x_in, p_in, x_out, p_out,
    graze, miss.  Rays are grouped by chord scale so that nearly tangent
    chords, which are short, are resolved by correspondingly small steps.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    A = np.atleast_1d(np.asarray(A, dtype=float))
    s, A = np.broadcast_arrays(s, A)
    s = s.ravel().copy()
    A = A.ravel().copy()
    n = s.size
    if np.any((A <= 0) | (A >= np.pi)):
        raise DomainError("fan angles must lie strictly inside (0, pi)")
    if np.any(np.sin(A) < GRAZE_ANGLE):
        raise TangencyError("entry ray is tangent to the boundary")

    rho = disc.radius
    m_lo, m_hi = disc.metric.speed_bounds()
    x_in, p_in = disc.covector(s, A, "in")
    T_in = disc.tangent(s)
    a_in, c_in = disc.metric.coeffs(x_in, disc.chart)
    t_in = (c_in[..., 0] * T_in[..., 0] + c_in[..., 1] * T_in[..., 1]
            + a_in * np.cos(A))

    H = GeodesicHamiltonian(disc.metric)
    c0, c1 = disc.center

    def g_exit(q, p, charts):
        val = np.hypot(q[..., 0] - c0, q[..., 1] - c1) - rho
        if disc.metric.surface.n_charts > 1:
            val = np.where(charts == disc.chart, val, 1.0)
        return val

    events = [FlowEvent(g_exit, direction=+1, arm=True)]
    if disc.metric.surface.n_charts > 1:
        # a ray that reaches the chart handover has left the disc for
        # good as far as the transit is concerned; kill it there instead
        # of integrating it around the sphere
        events.append(FlowEvent(
            lambda q, p, charts: np.where(charts == disc.chart, -1.0, 1.0),
            direction=+1, arm=False))
    if horizon is None:
        horizon = 12.0 * m_hi * rho

    out_state = np.empty((n, 4))
    out_time = np.full(n, np.nan)
    miss = np.zeros(n, dtype=bool)

    sinA = np.sin(A)
    edges = [0.0, 0.03, 0.15, np.inf]
    for lo_e, hi_e in zip(edges[:-1], edges[1:]):
        band = (sinA > lo_e) & (sinA <= hi_e)
        if not np.any(band):
            continue
        chord_min = 2.0 * rho * max(np.min(sinA[band]), 1e-4)
        max_step = 0.45 * m_lo * min(chord_min, 2.0 * rho)
        states = np.concatenate([x_in[band], p_in[band]], axis=-1)
        res = integrate_batch(H, states, disc.chart, horizon, tol=tol,
                              events=events, max_step=max_step)
        out_state[band] = res.states
        out_time[band] = res.event_time
        miss[band] = res.event_index != 0

    if np.any(miss) and graze == "raise":
        k = int(np.argmax(miss))
        raise NumericError(
            f"transit from s={s[k]:.6g}, A={A[k]:.6g} found no exit within "
            f"metric length {horizon:.3g}")

    q_out = out_state[:, :2]
    p_out = out_state[:, 2:]
    s_out, t_out, sin_exit = disc.exit_data(q_out, p_out)
    grz = (np.abs(sin_exit) < GRAZE_ANGLE) & ~miss
    if np.any(grz) and graze == "raise":
        k = int(np.argmax(grz))
        raise TangencyError(
            f"chord from s={s[k]:.6g}, A={A[k]:.6g} exits tangentially "
            f"(|sin angle| = {abs(sin_exit[k]):.2e})")

    r = _unwrap_offset((s_out - s) % disc.length, A, rho, disc.length)
    bad = miss | grz
    for arr in (s_out, t_out, r, out_time):
        arr[bad] = np.nan
    return {
        "s_in": s, "t_in": t_in, "s_out": s_out, "t_out": t_out, "r": r,
        "time": out_time, "x_in": x_in, "p_in": p_in, "x_out": q_out,
        "p_out": p_out, "graze": grz, "miss": miss,
    }


def lens_map(disc, alpha, tol=1e-10):
    """Lens map of a single inward boundary covector, by direct flow.

    alpha may be a BoundaryCovector or an (s, t) pair.  Returns the
    outward BoundaryCovector at the first exit.
    """
    if isinstance(alpha, BoundaryCovector):
        s, t = alpha.s, alpha.t
    else:
        s, t = float(alpha[0]), float(alpha[1])
    A = disc.fan_angle(s, t)
    res = transit_fan(disc, [s], [float(A)], tol=tol, graze="raise")
    out = BoundaryCovector(res["s_out"][0], res["t_out"][0], "out",
                           point=res["x_out"][0], covector=res["p_out"][0])
    return out


# ---------------------------------------------------------------------------
# certification


def _reentry_fraction(disc, res, tol):
    """Fraction of exit rays that cross back into the disc shortly after
    leaving.  Strictly convex boundaries keep their exit rays outside, so
    any re-entry within half a radius of travel witnesses a convexity or
    interior-tangency failure."""
    ok = ~(res["graze"] | res["miss"])
    if not np.any(ok):
        return 1.0, None
    states = np.concatenate([res["x_out"][ok], res["p_out"][ok]], axis=-1)
    rho = disc.radius
    c0, c1 = disc.center
    m_lo, m_hi = disc.metric.speed_bounds()

    def g_in(q, p, charts):
        val = np.hypot(q[..., 0] - c0, q[..., 1] - c1) - rho
        if disc.metric.surface.n_charts > 1:
            val = np.where(charts == disc.chart, val, 1.0)
        return val

    event = FlowEvent(g_in, direction=-1, arm=True)
    horizon = 0.5 * rho * m_hi
    H = GeodesicHamiltonian(disc.metric)
    reb = integrate_batch(H, states, disc.chart, horizon, tol=tol,
                          events=(event,), max_step=0.1 * rho * m_lo)
    hit = reb.event_index >= 0
    frac = float(np.mean(hit))
    witness = None
    if np.any(hit):
        k = int(np.argmax(hit))
        idx = np.flatnonzero(ok)[k]
        witness = {"s": float(res["s_in"][idx]), "A_index": int(idx),
                   "reentry_time": float(reb.event_time[k])}
    return frac, witness


def check_simple(disc, n_src=12, n_fan=24, n_pairs=8, tol=1e-10, rng=None):
    """Certify the three simplicity conditions of a disc.

    (1) every transit chord is the unique minimizing geodesic between its
        feet: chord length must match the global distance, and the exit
        sweep from each entry point must be strictly monotone (a fold
        would mean two chords with the same feet);
    (2) exits depend smoothly on the ray: the sweep slope ds_out/dA stays
        within a fixed conditioning window;
    (3) the boundary is strictly convex and no chord grazes it from the
        inside: no tangential transits, and no exit ray re-enters the
        disc within half a radius of travel.

    The verdict and witnesses are stored on ``disc.certification`` and
    returned.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    L = disc.length
    rho = disc.radius
    A_lo = 0.08
    src = np.arange(n_src) * (L / n_src)
    fan = np.linspace(A_lo, np.pi - A_lo, n_fan)
    S, AA = np.meshgrid(src, fan, indexing="ij")
    res = transit_fan(disc, S.ravel(), AA.ravel(), tol=tol, graze="mark")
    graze_frac = float(np.mean(res["graze"]))
    miss_frac = float(np.mean(res["miss"]))

    conditions = {}

    # --- (1) uniqueness: monotone sweeps + chord length == distance
    r = res["r"].reshape(n_src, n_fan)
    mono_ok = True
    mono_wit = None
    for i in range(n_src):
        row = r[i][np.isfinite(r[i])]
        if row.size < 3:
            continue
        dr = np.diff(row)
        if np.any(dr <= 0):
            mono_ok = False
            mono_wit = {"s": float(src[i]), "fold_at": int(np.argmin(dr))}
            break

    good = ~(res["graze"] | res["miss"])
    idx_pool = np.flatnonzero(good)
    worst_gap = 0.0
    chord_wit = None
    if idx_pool.size:
        # the chords at risk of losing to an outside path are the long
        # ones, so bias the sample toward them (and toward the largest
        # coordinate spans, which on a torus see the wrap first)
        half = max(1, n_pairs // 2)
        by_time = idx_pool[np.argsort(res["time"][idx_pool])[::-1]]
        span = res["x_out"][idx_pool] - res["x_in"][idx_pool]
        by_dx = idx_pool[np.argsort(np.abs(span[:, 0]))[::-1]]
        by_dy = idx_pool[np.argsort(np.abs(span[:, 1]))[::-1]]
        pick = list(by_time[:half]) + list(by_dx[:2]) + list(by_dy[:2])
        extra = rng.choice(idx_pool, size=min(n_pairs, idx_pool.size),
                           replace=False)
        pick = list(dict.fromkeys(pick + list(extra)))[:n_pairs + half]
        for k in pick:
            xa = res["x_in"][k]
            xb = res["x_out"][k]
            chord = res["time"][k]
            try:
                dist = distance(disc.metric, xa, xb, flow_tol=tol)
            except NumericError:
                continue
            gap = chord - dist
            if gap > worst_gap:
                worst_gap = gap
                chord_wit = {"s": float(res["s_in"][k]),
                             "chord": float(chord), "distance": float(dist)}
    chord_ok = worst_gap <= 1e-4
    conditions[1] = {
        "passed": bool(mono_ok and chord_ok),
        "note": "unique minimizing chords",
        "worst_gap": worst_gap,
        "witness": chord_wit if not chord_ok else mono_wit,
    }

    # --- (2) smooth dependence: sweep slope conditioning
    slope_ok = True
    slope_wit = None
    lo_seen, hi_seen = np.inf, 0.0
    for i in range(n_src):
        row = r[i]
        fin = np.isfinite(row)
        if fin.sum() < 3:
            continue
        dr = np.diff(row[fin]) / (np.diff(fan[fin]))
        lo_seen = min(lo_seen, float(np.min(dr)))
        hi_seen = max(hi_seen, float(np.max(dr)))
    if not np.isfinite(lo_seen):
        slope_ok = False
        slope_wit = {"note": "no finite sweep data"}
    elif lo_seen < 1e-3 * rho or hi_seen > 1e3 * rho:
        slope_ok = False
        slope_wit = {"slope_range": (lo_seen, hi_seen)}
    conditions[2] = {
        "passed": bool(slope_ok),
        "note": "exit sweep slope within conditioning window",
        "slope_range": (lo_seen, hi_seen),
        "witness": slope_wit,
    }

    # --- (3) convexity: near-tangent chords must be short, no grazing
    # chords, no quick re-entry.  A strictly convex boundary of local
    # curvature kappa cuts a chord of metric length about 2 gamma / kappa
    # at incidence angle gamma, comparable to the flat-disc value; a
    # concave stretch lets the tangent geodesic dive inside and transit
    # a length of order the disc itself.
    A_probe = 0.02
    a_p, c_p = disc.metric.coeffs(disc.boundary_point(src), disc.chart)
    expected = 2.0 * rho * A_probe * (a_p + np.hypot(c_p[..., 0],
                                                     c_p[..., 1]))
    # a ray still inside after 15 expected chord lengths has already
    # failed the convexity ratio, so cap the probe horizon there
    probe = transit_fan(disc, src, np.full(n_src, A_probe), tol=tol,
                        graze="mark", horizon=15.0 * float(np.max(expected)))
    with np.errstate(invalid="ignore"):
        ratio = np.where(probe["miss"], np.inf, probe["time"]) / expected
    worst_ratio = float(np.max(ratio))
    tangent_ok = worst_ratio <= 10.0 and not np.any(probe["graze"])

    reentry_frac, re_wit = _reentry_fraction(disc, res, tol)
    convex_ok = (graze_frac == 0.0) and (miss_frac == 0.0) \
        and (reentry_frac == 0.0) and tangent_ok
    conditions[3] = {
        "passed": bool(convex_ok),
        "note": "strictly convex boundary, no interior tangency",
        "graze_fraction": graze_frac,
        "miss_fraction": miss_frac,
        "reentry_fraction": reentry_frac,
        "tangent_chord_ratio": worst_ratio,
        "witness": re_wit if re_wit is not None else (
            None if tangent_ok else
            {"s": float(src[int(np.argmax(ratio))], ),
             "chord_ratio": worst_ratio}),
    }

    record = SimplicityRecord(conditions)
    disc.certification = record
    return record


def simplicity_radius(metric, x, iters=12, tol=1e-10):
    """Bisection estimate of the largest simple-disc radius at x.

    Returns 0.8 times the bisection bracket around the largest radius
    whose disc passes certification.  The upper bisection bound depends
    on the surface: half a period on a torus, the chart handover zone on
    a sphere, five chart units on the plane.  When even the upper bound
    certifies, 0.8 times that bound is returned (the estimate saturated,
    not converged).
    """
    x = np.asarray(x, dtype=float).reshape(2)
    surf = metric.surface
    if surf.kind == "torus":
        r_hi = 0.499 * min(surf.periods)
    elif surf.kind == "sphere":
        r_hi = 0.95 * (surf.switch_radius() - np.linalg.norm(x))
    else:
        r_hi = min(5.0, 0.9 * (surf.chart_radius - np.linalg.norm(x)))
    if r_hi <= 0:
        raise ValidationError("no room for a disc at this base point")

    def passes(r):
        disc = SimpleDisc(metric, x, r)
        try:
            return check_simple(disc, n_src=8, n_fan=16, n_pairs=4,
                                tol=tol).passed
        except (NumericError, TangencyError):
            return False

    if passes(r_hi):
        return 0.8 * r_hi
    r_lo = 0.05 * r_hi
    if not passes(r_lo):
        raise CertificationError(
            f"no simple disc found at {x} down to radius {r_lo:.3g}")
    for _ in range(iters):
        mid = 0.5 * (r_lo + r_hi)
        if passes(mid):
            r_lo = mid
        else:
            r_hi = mid
    return 0.8 * 0.5 * (r_lo + r_hi)


# ---------------------------------------------------------------------------
# tabulated lens maps


class LensGrid:
    """Lens map tabulated on an (s, A)-lattice with bicubic interpolation.

    Nodes are uniform in the entry arc length s (periodic) and in the fan
    angle A inside the admissible interval with the tangency margin
    removed.  A uniform A-lattice concentrates momentum nodes near
    grazing exactly where the exit data varies fastest, and the map
    (s, t) -> (s, A) is closed form, so queries in either variable cost
    the same.

    What is tabulated are the remainders against the flat disc:
    r - 2 radius A (exit offset) and t_out - t_in.  For the Euclidean
    disc both vanish identically and the interpolated map is exact; in
    general they are smooth and small, which is where bicubic patches do
    their best work.
    """

    def __init__(self, disc, s_nodes, A_nodes, r_resid, d_vals,
                 defect=None, excluded=0):
        self.disc = disc
        self.s_nodes = np.asarray(s_nodes, dtype=float)
        self.A_nodes = np.asarray(A_nodes, dtype=float)
        self.r_resid = np.asarray(r_resid, dtype=float)
        self.d_vals = np.asarray(d_vals, dtype=float)
        self.defect = defect
        self.excluded = int(excluded)
        self.node_rows = None
        L = disc.length
        k = 3
        s_ext = np.concatenate([self.s_nodes[-k:] - L, self.s_nodes,
                                self.s_nodes[:k] + L])
        pad = lambda z: np.concatenate([z[-k:], z, z[:k]], axis=0)
        self._spl_r = RectBivariateSpline(s_ext, self.A_nodes,
                                          pad(self.r_resid), kx=3, ky=3)
        self._spl_d = RectBivariateSpline(s_ext, self.A_nodes,
                                          pad(self.d_vals), kx=3, ky=3)

    @property
    def n_s(self):
        return len(self.s_nodes)

    @property
    def n_t(self):
        return len(self.A_nodes)

    def _fan(self, s, t):
        disc = self.disc
        lo, hi = disc.admissible_interval(s)
        a = 0.5 * (hi - lo)
        u = (np.asarray(t, dtype=float) - 0.5 * (hi + lo)) / a
        if np.any(np.abs(u) >= 1.0):
            raise DomainError("momentum outside the fiber interval")
        A = np.arccos(np.clip(u, -1.0, 1.0))
        eps = 1e-9
        if np.any(A < self.A_nodes[0] - eps) \
                or np.any(A > self.A_nodes[-1] + eps):
            raise DomainError(
                "covector inside the tangency margin of the grid")
        return np.clip(A, self.A_nodes[0], self.A_nodes[-1])

    def map_fan(self, s, A):
        """Interpolated exit (s_out, t_out) for entries given by fan angle."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        A = np.atleast_1d(np.asarray(A, dtype=float))
        s, A = (x.ravel() for x in np.broadcast_arrays(s, A))
        L = self.disc.length
        sm = np.mod(s, L)
        r = 2.0 * self.disc.radius * A + self._spl_r(sm, A, grid=False)
        lo, hi = self.disc.admissible_interval(s)
        t_in = 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.cos(A)
        s_out = np.mod(s + r, L)
        t_out = t_in + self._spl_d(sm, A, grid=False)
        return s_out, t_out

    def map(self, s, t):
        """Interpolated lens map in boundary coordinates (s, t)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s, t = np.broadcast_arrays(s, t)
        A = self._fan(s, t)
        return self.map_fan(s, A)

    def exit_offset(self, s, A):
        """Continuous exit offset r(s, A), the unwrapped s_out - s_in."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        A = np.atleast_1d(np.asarray(A, dtype=float))
        s, A = (x.ravel() for x in np.broadcast_arrays(s, A))
        sm = np.mod(s, self.disc.length)
        return 2.0 * self.disc.radius * A + self._spl_r(sm, A, grid=False)

    def to_csv(self, path):
        save_lens_grid(self, path)


def build_lens_grid(disc, n_s=64, n_t=64, tol=1e-10):
    """Tabulate the lens map of a certified disc.

    Requires n_s, n_t >= 16 and a disc whose certification passed.  Rays
    that graze or fail to exit are excluded from the table (their node
    value is filled from fan neighbors) and from the defect statistics;
    more than 5% exclusions aborts with a resolution error.  The built
    grid records its own symplectic defect.
    """
    if n_s < 16 or n_t < 16:
        raise ValidationError("lens grids need at least 16 nodes per axis")
    if disc.certification is None:
        raise ValidationError("certify the disc with check_simple first")
    if not disc.certification.passed:
        raise CertificationError(
            f"disc failed certification: conditions "
            f"{disc.certification.failed()}")

    L = disc.length
    s_nodes = np.arange(n_s) * (L / n_s)
    lo, hi = disc.admissible_interval(s_nodes)
    a_min = float(np.min(0.5 * (hi - lo)))
    u_margin = TANGENCY_MARGIN / a_min
    A_lo = float(np.arccos(1.0 - u_margin))
    A_nodes = np.linspace(A_lo, np.pi - A_lo, n_t)

    S, AA = np.meshgrid(s_nodes, A_nodes, indexing="ij")
    res = transit_fan(disc, S.ravel(), AA.ravel(), tol=tol, graze="mark")
    bad = (res["graze"] | res["miss"]).reshape(n_s, n_t)
    n_bad = int(bad.sum())
    if n_bad > 0.05 * n_s * n_t:
        raise NumericError(
            f"lens grid unresolved: {n_bad} of {n_s * n_t} nodes excluded "
            "(tangency or missed exit); refine the fan or shrink the disc")

    s_out = res["s_out"].reshape(n_s, n_t).copy()
    t_out = res["t_out"].reshape(n_s, n_t).copy()
    t_in = res["t_in"].reshape(n_s, n_t)
    if n_bad:
        # fill excluded nodes along their fan from the good neighbors so
        # the table stays rectangular; they carry no defect statistics
        r_tmp = res["r"].reshape(n_s, n_t)
        for i, j in zip(*np.nonzero(bad)):
            ok = ~bad[i]
            r_fill = np.interp(A_nodes[j], A_nodes[ok], r_tmp[i][ok])
            d_fill = np.interp(A_nodes[j], A_nodes[ok],
                               (t_out[i] - t_in[i])[ok])
            s_out[i, j] = (s_nodes[i] + r_fill) % L
            t_out[i, j] = t_in[i, j] + d_fill

    r_resid, d_vals = _node_values(disc, s_nodes, A_nodes, s_out, t_in, t_out)
    grid = LensGrid(disc, s_nodes, A_nodes, r_resid, d_vals, excluded=n_bad)
    grid.node_rows = np.column_stack([
        np.repeat(s_nodes, n_t), t_in.ravel(), s_out.ravel(), t_out.ravel()])
    grid.defect = symplectic_defect(grid)
    return grid


def _node_values(disc, s_nodes, A_nodes, s_out, t_in, t_out):
    """Spline inputs from stored node exits.

    Both the builder and the CSV loader go through this one function on
    the same doubles, which is what makes a save/load round trip
    reproduce the interpolant bit for bit.
    """
    L = disc.length
    n_s, n_t = s_out.shape
    raw = (s_out - s_nodes[:, None]) % L
    A_tile = np.broadcast_to(A_nodes[None, :], (n_s, n_t))
    r = _unwrap_offset(raw.ravel(), A_tile.ravel(), disc.radius, L)
    r_resid = r.reshape(n_s, n_t) - 2.0 * disc.radius * A_nodes[None, :]
    return r_resid, t_out - t_in


class ComposedLensMap:
    """A lens map pre/post-composed with boundary-coordinate maps.

    map(z) = post(base.map(pre(z))).  The optional inverses are used to
    seed inversions; compositions without them fall back to coarse
    scanning.  The underlying disc geometry is the base map's.
    """

    def __init__(self, base, pre=None, pre_inv=None, post=None,
                 post_inv=None):
        self.base = base
        self.pre = pre
        self.pre_inv = pre_inv
        self.post = post
        self.post_inv = post_inv

    @property
    def disc(self):
        return self.base.disc

    @property
    def A_nodes(self):
        return _root_grid(self).A_nodes

    def map(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.pre is not None:
            s, t = self.pre(s, t)
        so, to = self.base.map(s, t)
        if self.post is not None:
            so, to = self.post(so, to)
        return so, to


def _root_grid(sigma):
    while isinstance(sigma, ComposedLensMap):
        sigma = sigma.base
    return sigma


def _exit_sweep(sigma, s_p, A):
    """Exit offset r(A) of the map object along the fan at s_p."""
    L = sigma.disc.length
    if isinstance(sigma, LensGrid):
        return sigma.exit_offset(s_p, A)
    disc = sigma.disc
    lo, hi = disc.admissible_interval(s_p)
    t = 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.cos(np.asarray(A))
    s_out, _ = sigma.map(np.full_like(np.asarray(A, dtype=float), s_p), t)
    raw = (s_out - s_p) % L
    return _unwrap_offset(raw, np.asarray(A, dtype=float),
                          disc.radius, L)


def p_map(sigma, alpha):
    """Feet pair (entry s, exit s) of an inward covector under sigma."""
    if isinstance(alpha, BoundaryCovector):
        s, t = alpha.s, alpha.t
    else:
        s, t = float(alpha[0]), float(alpha[1])
    s_out, _ = sigma.map(s, t)
    return float(np.asarray(s).reshape(())), float(np.asarray(s_out).reshape(()))


def p_inv(sigma, s_p, s_q):
    """Inward covector at s_p whose chord exits at s_q.

    Solved as a one-dimensional root problem in the fan angle, where the
    exit offset is strictly monotone for a certified disc.  The diagonal
    s_p = s_q has no chord and is rejected.
    """
    disc = sigma.disc
    L = disc.length
    s_p = float(s_p) % L
    r_target = (float(s_q) - s_p) % L
    if r_target < 1e-12 or L - r_target < 1e-12:
        raise ValidationError("p_inv is undefined on the diagonal p = q")
    nodes = _root_grid(sigma).A_nodes
    A_lo, A_hi = nodes[0], nodes[-1]

    f = lambda A: float(_exit_sweep(sigma, s_p, np.atleast_1d(A))[0]) - r_target
    f_lo, f_hi = f(A_lo), f(A_hi)
    if f_lo > 0 or f_hi < 0:
        raise DomainError(
            "exit point unreachable outside the tangency margin")
    A_star = brentq(f, A_lo, A_hi, xtol=1e-13, rtol=8.9e-16)
    lo, hi = disc.admissible_interval(s_p)
    t_star = 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.cos(A_star)
    return disc.boundary_covector(s_p, float(t_star), "in")


def q_inv(sigma, s_p, s_q):
    """Outward covector at s_q of the chord from s_p, q_inv = sigma o p_inv."""
    alpha = p_inv(sigma, s_p, s_q)
    s_out, t_out = sigma.map(alpha.s, alpha.t)
    return sigma.disc.boundary_covector(
        float(np.asarray(s_out).reshape(())),
        float(np.asarray(t_out).reshape(())), "out")


def invert_map(sigma, s_out, t_out, seed=None, tol=1e-12):
    """Inward coordinates (s_in, t_in) with sigma(s_in, t_in) = (s_out, t_out).

    Two-dimensional Newton iteration on the interpolated map, seeded by a
    backward transit of the underlying disc (the composition pieces, when
    present, supply their inverses for the seed).  Raises NumericError if
    the iteration stalls.
    """
    s_b = float(s_out)
    t_b = float(t_out)
    disc = sigma.disc
    L = disc.length

    if seed is None:
        sb0, tb0 = s_b, t_b
        if isinstance(sigma, ComposedLensMap) and sigma.post_inv is not None:
            sb0, tb0 = sigma.post_inv(np.asarray(sb0), np.asarray(tb0))
            sb0, tb0 = float(sb0), float(tb0)
        seed = _backward_seed(disc, sb0, tb0)
        if isinstance(sigma, ComposedLensMap) and sigma.pre_inv is not None:
            s0, t0 = sigma.pre_inv(np.asarray(seed[0]), np.asarray(seed[1]))
            seed = (np.asarray(s0).item(), np.asarray(t0).item())
    s_cur = np.asarray(seed[0]).item() % L
    t_cur = np.asarray(seed[1]).item()

    h_s = 1e-6 * L
    h_t = 1e-6
    for _ in range(12):
        so, to = sigma.map(s_cur, t_cur)
        rs = _mod_diff(float(np.asarray(so).reshape(())) - s_b, L)
        rt = float(np.asarray(to).reshape(())) - t_b
        if abs(rs) < tol * L and abs(rt) < tol:
            return s_cur % L, t_cur
        so_p, to_p = sigma.map(s_cur + h_s, t_cur)
        so_m, to_m = sigma.map(s_cur - h_s, t_cur)
        j11 = _mod_diff(np.asarray(so_p - so_m).item(), L) / (2 * h_s)
        j21 = np.asarray(to_p - to_m).item() / (2 * h_s)
        so_p, to_p = sigma.map(s_cur, t_cur + h_t)
        so_m, to_m = sigma.map(s_cur, t_cur - h_t)
        j12 = _mod_diff(np.asarray(so_p - so_m).item(), L) / (2 * h_t)
        j22 = np.asarray(to_p - to_m).item() / (2 * h_t)
        det = j11 * j22 - j12 * j21
        if abs(det) < 1e-14:
            break
        ds = (-rs * j22 + rt * j12) / det
        dt = (rs * j21 - rt * j11) / det
        s_cur = (s_cur + ds) % L
        t_cur = t_cur + dt
    raise NumericError(
        f"failed to invert the lens map at s={s_b:.6g}, t={t_b:.6g}")


def q_map(sigma, beta, seed=None, tol=1e-12):
    """Feet pair of an outward covector: (entry s of sigma^{-1}(beta), s)."""
    if isinstance(beta, BoundaryCovector):
        s_b, t_b = beta.s, beta.t
    else:
        s_b, t_b = float(beta[0]), float(beta[1])
    s_in, t_in = invert_map(sigma, s_b, t_b, seed=seed, tol=tol)
    alpha = sigma.disc.boundary_covector(s_in, t_in, "in")
    return float(alpha.s), s_b % sigma.disc.length


def _mod_diff(x, L):
    return (x + 0.5 * L) % L - 0.5 * L


def _backward_seed(disc, s_out, t_out):
    """Entry coordinates of the chord reaching (s_out, t_out), by flowing
    backward from the outward covector to the previous boundary crossing."""
    x, p = disc.covector(np.atleast_1d(float(s_out)),
                         np.atleast_1d(float(disc.fan_angle(s_out, t_out))),
                         side="out")
    rho = disc.radius
    c0, c1 = disc.center
    m_lo, m_hi = disc.metric.speed_bounds()

    def g(q, pp, charts):
        val = np.hypot(q[..., 0] - c0, q[..., 1] - c1) - rho
        if disc.metric.surface.n_charts > 1:
            val = np.where(charts == disc.chart, val, 1.0)
        return val

    event = FlowEvent(g, direction=+1, arm=True)
    H = GeodesicHamiltonian(disc.metric)
    states = np.concatenate([x, p], axis=-1)
    res = integrate_batch(H, states, disc.chart, -12.0 * m_hi * rho,
                          tol=1e-10, events=(event,),
                          max_step=0.3 * m_lo * rho)
    if res.event_index[0] < 0:
        raise NumericError("backward transit found no entry point")
    s_in, t_in, _ = disc.exit_data(res.states[0, :2], res.states[0, 2:])
    return float(s_in), float(t_in)


def lambda_sigma(sigma, s_p, s_q):
    """Momentum pair (-t_in, t_out) of the chord from s_p to s_q."""
    alpha = p_inv(sigma, s_p, s_q)
    _, t_out = sigma.map(alpha.s, alpha.t)
    return -alpha.t, float(np.asarray(t_out).reshape(()))


def symplectic_defect(sigma, samples=None, step=(None, 1e-5)):
    """Max |det D(sigma) - 1| over probe points, by central differences
    on the interpolated map.

    Default probes form a lattice strictly inside the tabulated window:
    three fan-lattice cells are shaved off each A-side on top of the
    tangency margin.  The outermost cells are where the spline's end
    conditions degrade its derivatives, and the finite differences must
    never leave the table.
    """
    disc = sigma.disc
    L = disc.length
    A_nodes = _root_grid(sigma).A_nodes
    dA = A_nodes[1] - A_nodes[0]
    if samples is None:
        s_probe = np.linspace(0, L, 25, endpoint=False)
        A_probe = np.linspace(A_nodes[0] + 3 * dA, A_nodes[-1] - 3 * dA, 21)
        S, AA = np.meshgrid(s_probe, A_probe, indexing="ij")
        lo, hi = disc.admissible_interval(S.ravel())
        T = 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.cos(AA.ravel())
        S = S.ravel()
    else:
        samples = np.asarray(samples, dtype=float)
        S, T = samples[:, 0], samples[:, 1]
    h_s = step[0] if step[0] is not None else 1e-5 * L
    h_t = step[1]

    def ev(ss, tt):
        so, to = sigma.map(ss, tt)
        return np.asarray(so), np.asarray(to)

    sp, tp = ev(S + h_s, T)
    sm, tm = ev(S - h_s, T)
    j11 = _mod_diff(sp - sm, L) / (2 * h_s)
    j21 = (tp - tm) / (2 * h_s)
    sp, tp = ev(S, T + h_t)
    sm, tm = ev(S, T - h_t)
    j12 = _mod_diff(sp - sm, L) / (2 * h_t)
    j22 = (tp - tm) / (2 * h_t)
    det = j11 * j22 - j12 * j21
    return float(np.max(np.abs(det - 1.0)))


# ---------------------------------------------------------------------------
# the consistency integral


def _gauss_panels(a, b, n_panels, order=8):
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _sweep_quantities(sigma, s_p, A, h=1e-6):
    """t_out(A) and dr/dA along the fan at s_p, from the map object."""
    disc = sigma.disc
    lo, hi = disc.admissible_interval(s_p)
    t = 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.cos(A)
    if isinstance(sigma, LensGrid):
        _, t_out = sigma.map_fan(np.full_like(A, s_p), A)
    else:
        _, t_out = sigma.map(np.full_like(A, s_p), t)
    r_p = _exit_sweep(sigma, s_p, A + h)
    r_m = _exit_sweep(sigma, s_p, A - h)
    return t_out, (r_p - r_m) / (2 * h)


def _sliver_flow(disc, s_p, A_vals, tol):
    """t_out and r at near-grazing fan angles, by direct transit."""
    res = transit_fan(disc, np.full_like(A_vals, s_p), A_vals, tol=tol,
                      graze="raise")
    return res["t_out"], res["r"]


def _sliver_integral(disc, s_p, A_cut, upper, n_panels, tol):
    """Flow-quadrature of t_out dr over a grazing sliver (0, A_cut].

    ``upper=True`` mirrors to the sliver at pi.  The part below A_deep is
    integrated in closed form: there t_out differs from its grazing limit
    by O(A^2), so t_graze * r(A_deep) is accurate to O(A_deep^3).
    """
    A_deep = 2e-3
    nodes, weights = _gauss_panels(A_deep, A_cut, n_panels)
    h = 1e-5
    stack = np.concatenate([nodes, nodes + h, nodes - h, [A_deep]])
    if upper:
        stack = np.pi - stack
    t_out, r = _sliver_flow(disc, s_p, stack, tol)
    n = nodes.size
    t_mid = t_out[:n]
    drdA = (r[n:2 * n] - r[2 * n:3 * n]) / (2 * h)
    if upper:
        drdA = -drdA
    main = float(np.sum(weights * t_mid * drdA))
    r_deep = r[-1]
    lo, hi = disc.admissible_interval(np.atleast_1d(s_p))
    if not upper:
        tail = float(hi[0]) * float(r_deep)
    else:
        tail = float(lo[0]) * float(disc.length - r_deep)
    return main + tail


def consistency_integral(sigma, s_p, n_quad=192, tol=1e-10):
    """Sweep integral of the outgoing momentum over all exits from s_p.

    Computes the boundary integral of t_out(p, q) in ds_q over q != p by
    substituting the fan angle for the exit point: the integrand
    t_out(A) dr/dA is smooth all the way into the grazing limits, which
    is where the exit-point parametrization has square-root behavior.
    The window covered by the tabulated map is integrated by composite
    Gauss panels (8 nodes each, n_quad nodes in total) on the map
    object; the two grazing slivers outside it are integrated on direct
    transits of the underlying disc (lens perturbations are supported
    away from grazing, so the base flow is the map there).  The result
    is checked against a refinement with doubled panels; disagreement
    beyond 1e-5 raises NumericError.
    """
    if n_quad < 64:
        raise ValidationError("n_quad must be at least 64 quadrature nodes")
    n_panels = max(8, int(n_quad) // 8)
    disc = sigma.disc
    L = disc.length
    s_p = float(s_p) % L
    A_cut = float(_root_grid(sigma).A_nodes[0])

    def main_part(panels):
        nodes, weights = _gauss_panels(A_cut, np.pi - A_cut, panels)
        t_out, drdA = _sweep_quantities(sigma, s_p, nodes)
        return float(np.sum(weights * t_out * drdA))

    lo_sliver = _sliver_integral(disc, s_p, A_cut, False, 2, tol)
    hi_sliver = _sliver_integral(disc, s_p, A_cut, True, 2, tol)
    coarse = main_part(n_panels) + lo_sliver + hi_sliver
    fine = main_part(2 * n_panels) + lo_sliver + hi_sliver
    if abs(fine - coarse) > 1e-5:
        raise NumericError(
            f"consistency integral did not converge: {coarse:.3e} vs "
            f"{fine:.3e} under refinement")
    return fine


# ---------------------------------------------------------------------------
# persistence


def save_lens_grid(grid, path):
    """Write a lens grid as CSV: '#' metadata, then one row per node,
    s_in, t_in, s_out, t_out with 17 significant digits."""
    disc = grid.disc
    met = disc.metric
    lines = [
        f"# metric: {met.describe()}",
        f"# family: {met.family}",
        f"# params: {_metric_params(met)}",
        f"# surface: {_surface_params(met.surface)}",
        f"# center: {disc.center[0]:.17g} {disc.center[1]:.17g}",
        f"# radius: {disc.radius:.17g}",
        f"# chart: {disc.chart}",
        f"# n_s: {grid.n_s}",
        f"# n_t: {grid.n_t}",
        f"# fan: {grid.A_nodes[0]:.17g} {grid.A_nodes[-1]:.17g}",
        f"# defect: {grid.defect:.17g}" if grid.defect is not None
        else "# defect: nan",
        f"# excluded: {grid.excluded}",
        "# columns: s_in,t_in,s_out,t_out",
    ]
    if grid.node_rows is not None:
        rows = grid.node_rows
    else:
        L = disc.length
        S = np.repeat(grid.s_nodes, grid.n_t)
        A = np.tile(grid.A_nodes, grid.n_s)
        lo, hi = disc.admissible_interval(S)
        t_in = 0.5 * (hi + lo) + 0.5 * (hi - lo) * np.cos(A)
        r = 2.0 * disc.radius * A + grid.r_resid.ravel()
        rows = np.column_stack([S, t_in, np.mod(S + r, L),
                                t_in + grid.d_vals.ravel()])
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _metric_params(met):
    if met.family == "randers":
        return f"beta={met.beta[0]:.17g},{met.beta[1]:.17g}"
    if met.family == "katok":
        return f"alpha={met.alpha:.17g}"
    return "-"


def _surface_params(surf):
    if surf.kind == "torus":
        return f"torus {surf.periods[0]:.17g} {surf.periods[1]:.17g}"
    if surf.kind == "sphere":
        return f"sphere {surf.radius:.17g}"
    return f"plane {surf.chart_radius:.17g}"


def load_lens_grid(path, metric=None):
    """Rebuild a lens grid from its CSV.

    The five built-in families reconstruct their metric from the
    metadata; conformal and localized metrics carry perturbation state
    that the file does not, so those must be passed in.  The rebuilt
    interpolant is bit-identical to the saved one: node values are parsed
    from 17-digit decimal (an exact round trip for doubles) and the fan
    lattice is regenerated by the same linspace call that built it.
    """
    from .norms import FinslerMetric
    from .surfaces import SurfacePatch

    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition(":")
                meta[key.strip()] = val.strip()
            else:
                rows.append([float(v) for v in line.split(",")])
    rows = np.asarray(rows, dtype=float)

    if metric is None:
        family = meta["family"]
        sp = meta["surface"].split()
        if sp[0] == "torus":
            surf = SurfacePatch.torus((float(sp[1]), float(sp[2])))
        elif sp[0] == "sphere":
            surf = SurfacePatch.sphere(float(sp[1]))
        else:
            surf = SurfacePatch.plane(float(sp[1]))
        kw = {}
        if family == "randers":
            parts = meta["params"].split("=")[1].split(",")
            kw["beta"] = (float(parts[0]), float(parts[1]))
        elif family == "katok":
            kw["alpha"] = float(meta["params"].split("=")[1])
        elif family not in ("euclidean", "flat", "round"):
            raise ValidationError(
                f"cannot rebuild a {family} metric from metadata; pass "
                "the metric explicitly")
        metric = FinslerMetric(surf, family, **kw)

    center = np.array([float(v) for v in meta["center"].split()])
    radius = float(meta["radius"])
    chart = int(meta["chart"])
    n_s = int(meta["n_s"])
    n_t = int(meta["n_t"])
    A_lo, A_hi = (float(v) for v in meta["fan"].split())
    A_nodes = np.linspace(A_lo, A_hi, n_t)

    disc = SimpleDisc(metric, center, radius, chart)
    disc.certification = SimplicityRecord(
        {k: {"passed": True, "note": "restored from file"} for k in (1, 2, 3)})
    t_in = rows[:, 1].reshape(n_s, n_t)
    s_out = rows[:, 2].reshape(n_s, n_t)
    t_out = rows[:, 3].reshape(n_s, n_t)
    s_nodes = rows[:, 0].reshape(n_s, n_t)[:, 0]
    r_resid, d_vals = _node_values(disc, s_nodes, A_nodes, s_out, t_in, t_out)
    grid = LensGrid(disc, s_nodes, A_nodes, r_resid, d_vals,
                    excluded=int(meta.get("excluded", 0)))
    grid.node_rows = rows
    defect = meta.get("defect", "nan")
    grid.defect = None if defect == "nan" else float(defect)
    return grid
