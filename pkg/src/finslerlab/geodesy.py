"""Quasimetric distances and forward/backward geodesic discs.

``distance`` solves the two-point boundary value problem by shooting:
bracket the initial angle with a coarse fan, bisect the transverse miss,
then polish (angle, time) with a damped Newton iteration.  On the torus
the target is replaced by its sixteen nearest lattice lifts and the
minimum is taken; near-ties between distinct connecting geodesics are
flagged rather than silently resolved.

Because the flow runs on the unit cosphere level at unit phi-speed, the
connecting time *is* the geodesic length, so no quadrature is needed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, ValidationError
from .flow import GeodesicHamiltonian, integrate_batch
from .surfaces import PhasePoint

__all__ = ["GeodesicDisc", "UnitCovector", "certify_unit", "distance",
           "geodesic_disc", "safe_radius"]

TIE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class UnitCovector:
    """A PhasePoint whose covector is certified phi*-unit to 1e-9."""

    point: PhasePoint
    certified: bool = True


def certify_unit(metric, z):
    """Wrap a PhasePoint as a UnitCovector, checking |phi* - 1| <= 1e-9."""
    if isinstance(z, UnitCovector):
        z = z.point
    val = float(metric.dual(z.q, z.p, z.chart))
    if abs(val - 1.0) > 1e-9:
        raise ValidationError(f"covector is not unit: phi* = {val:.12g}")
    return UnitCovector(z, True)


def _endpoints(metric, x, thetas, T, tol=1e-12):
    """Flow a fan of unit covectors from x for time T; returns (q, qdot)."""
    H = GeodesicHamiltonian(metric)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    p = metric.fiber_point(np.broadcast_to(x, thetas.shape + (2,)), thetas)
    states = np.concatenate([np.broadcast_to(x, p.shape), p], axis=-1)
    res = integrate_batch(H, states, 0, T, tol=tol)
    vel = H.rhs(res.states, res.charts)[..., :2]
    return res.states[:, :2], vel


def _newton_polish(metric, x, target, theta, T, tol=1e-12, max_iter=12):
    """2d Newton on (angle, time) for the endpoint residual."""
    scale = max(np.linalg.norm(target - x), 1e-3)
    dth = 1e-7
    # the endpoint inherits the flow accuracy, so do not demand more
    resid_tol = max(1e-12, 10.0 * tol) * max(1.0, scale)
    best = None
    for _ in range(max_iter):
        q, vel = _endpoints(metric, x, [theta, theta + dth], T, tol)
        r = q[0] - target
        rn = np.linalg.norm(r)
        if best is None or rn < best[0]:
            best = (rn, theta, T)
        if rn < resid_tol:
            return theta, T, True
        J = np.column_stack([(q[1] - q[0]) / dth, vel[0]])
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return best[1], best[2], False
        # trust region: never move more than a quarter turn or half of T
        delta[0] = np.clip(delta[0], -0.8, 0.8)
        delta[1] = np.clip(delta[1], -0.5 * T - 0.05, 0.5 * T + 0.05)
        theta += delta[0]
        T = max(T + delta[1], 1e-9)
    return best[1], best[2], False


def _lift_targets(surface, x, y, count=16):
    if surface.kind != "torus":
        return [np.asarray(y, dtype=float)]
    lifts = surface.lifts(y, span=2)
    order = np.argsort(np.linalg.norm(lifts - x, axis=-1))
    return [lifts[i] for i in order[:count]]


def distance(metric, x, y, full_output=False, flow_tol=1e-10):
    """Finsler distance d(x, y) = inf of lengths of connecting paths.

    Parameters
    ----------
    full_output : if True, also return a dict with the connecting data
        (initial angle, time, number of converged candidates, near-tie
        flag set when two distinct geodesics agree within 1e-6).

    Raises
    ------
    NumericError
        When no shooting start converges; the message lists the starts
        that were tried.

    Notes
    -----
    Safe ranges per family (shooting stays single-valley): plane families
    up to about half the chart radius; torus families within a couple of
    fundamental cells (lifts handle homotopy classes); sphere families up
    to roughly pi/2 times the radius from the chart center.  Longer
    distances still work through the multistart fan but may be slow.
    """
    surface = metric.surface
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    surface.check_domain(x)
    surface.check_domain(y)

    if surface.kind == "torus":
        sep = y - x - np.round((y - x) / np.asarray(surface.periods)) \
            * np.asarray(surface.periods)
    else:
        sep = y - x
    if np.linalg.norm(sep) < 1e-13:
        if full_output:
            return 0.0, {"angle": None, "time": 0.0, "candidates": 1,
                         "near_tie": False}
        return 0.0

    solutions = []
    tried = []
    m_speed = metric.speed_bounds()[0] if surface.kind == "torus" else 0.0
    best = np.inf
    for target in _lift_targets(surface, x, y):
        # lifts come sorted by chart length, so once even the fastest
        # possible path to a lift is beaten (with a near-tie margin),
        # every later lift is beaten too
        if m_speed * np.linalg.norm(target - x) > best + 1e-4:
            break
        d_vec = target - x
        th0 = float(np.arctan2(d_vec[1], d_vec[0]))
        T0 = float(metric.eval(x, d_vec))
        # fan around the chord direction; widen on retry
        for spread, nfan in ((0.6, 7), (np.pi, 17)):
            fan = th0 + np.linspace(-spread, spread, nfan)
            q_fan, _ = _endpoints(metric, x, fan, T0, flow_tol)
            rel = q_fan - x
            miss = (rel[..., 0] * d_vec[1] - rel[..., 1] * d_vec[0]) \
                / np.linalg.norm(d_vec)
            found = False
            for i in range(nfan - 1):
                if miss[i] == 0.0 or miss[i] * miss[i + 1] < 0:
                    lo, hi = fan[i], fan[i + 1]
                    mlo = miss[i]
                    for _ in range(7):  # bisection on the transverse miss
                        mid = 0.5 * (lo + hi)
                        qm, _ = _endpoints(metric, x, [mid], T0, flow_tol)
                        rm = qm[0] - x
                        mm = float(rm[0] * d_vec[1] - rm[1] * d_vec[0])
                        if mlo * mm <= 0:
                            hi = mid
                        else:
                            lo, mlo = mid, mm
                    th_b = 0.5 * (lo + hi)
                    qb, _ = _endpoints(metric, x, [th_b], T0, flow_tol)
                    T_b = T0 * np.linalg.norm(d_vec) / max(
                        np.linalg.norm(qb[0] - x), 1e-12)
                    th, T, ok = _newton_polish(
                        metric, x, target, th_b, min(T_b, 3 * T0), flow_tol)
                    tried.append((float(th_b), float(T0)))
                    if ok:
                        solutions.append((T, th, tuple(target)))
                        best = min(best, T)
                        found = True
            # also polish from the plainest start in case no bracket exists
            if not found:
                th, T, ok = _newton_polish(metric, x, target, th0, T0, flow_tol)
                tried.append((float(th0), float(T0)))
                if ok:
                    solutions.append((T, th, tuple(target)))
                    best = min(best, T)
                    found = True
            if found:
                break

    if not solutions:
        raise NumericError(
            f"shooting failed from x={x} to y={y}; starts tried: {tried}"
        )
    solutions.sort(key=lambda s: s[0])
    d = solutions[0][0]
    near_tie = False
    for T, th, tg in solutions[1:]:
        dth = abs((th - solutions[0][1] + np.pi) % (2 * np.pi) - np.pi)
        if abs(T - d) < TIE_TOLERANCE and (dth > 1e-6 or tg != solutions[0][2]):
            near_tie = True
    if full_output:
        return d, {"angle": solutions[0][1], "time": d,
                   "candidates": len(solutions), "near_tie": near_tie}
    return d


def safe_radius(metric):
    """Conservative per-family cap on geodesic-disc radii.

    Plane: a fraction of the chart radius.  Torus: under a quarter of the
    shortest period, so a disc cannot meet its own translates.  Sphere:
    well below the round injectivity radius pi*R.
    """
    surf = metric.surface
    if surf.kind == "torus":
        return 0.45 * float(min(surf.periods))
    if surf.kind == "sphere":
        return 0.75 * surf.radius
    return 0.4 * surf.chart_radius


@dataclass
class GeodesicDisc:
    """One of the two closed discs D^+/D^- attached to a unit covector.

    sign +1: all points from which the forward endpoint pi(g_r v) can be
    reached at cost <= r (a backward ball).  sign -1: all points reachable
    from the backward endpoint pi(g_{-r} v) at cost <= r (a forward ball).
    Membership queries go through ``distance``.
    """

    metric: object
    center: np.ndarray
    radius: float
    sign: int
    chart: int = 0
    basepoint: np.ndarray | None = None

    def member_margin(self, w):
        """radius - (relevant distance); nonnegative inside the disc."""
        if self.sign > 0:
            return self.radius - distance(self.metric, w, self.center)
        return self.radius - distance(self.metric, self.center, w)

    def contains(self, w, tol=1e-9):
        return self.member_margin(w) >= -tol


def geodesic_disc(metric, v, r, sign):
    """Construct D^sign(v, r) for a certified unit covector v.

    ``v`` may be a UnitCovector, a PhasePoint, or a bare (q, p) pair in
    chart 0; certification happens on entry either way.
    """
    if sign not in (-1, 1):
        raise ValidationError("sign must be +1 or -1")
    if isinstance(v, UnitCovector):
        z = v.point
    elif isinstance(v, PhasePoint):
        z = v
    else:
        q, p = v
        z = PhasePoint(np.asarray(q, float), np.asarray(p, float),
                       surface=metric.surface)
    certify_unit(metric, z)
    cap = safe_radius(metric)
    if not 0 < r <= cap:
        raise ValidationError(
            f"disc radius {r} outside (0, {cap:.4g}] for this surface"
        )
    H = GeodesicHamiltonian(metric)
    state = np.concatenate([z.q, z.p])
    res = integrate_batch(H, state[None, :], z.chart, sign * r, tol=1e-12)
    center = res.states[0, :2]
    return GeodesicDisc(metric, center, float(r), sign, int(res.charts[0]),
                        basepoint=z.q.copy())
