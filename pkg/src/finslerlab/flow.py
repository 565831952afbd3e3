"""Hamiltonian flows on charted phase spaces.

The workhorse is a batched Dormand-Prince 5(4) stepper with dense output,
event detection and transparent chart switching.  All trajectories in a
batch share the adaptive step size (the worst active member controls it);
individual trajectories freeze in place when their terminal event fires.
A fixed-step implicit midpoint integrator is provided for long-horizon
runs where symplecticity matters more than local error.

Energy bookkeeping: the controller targets ``tol / ENERGY_SAFETY`` per
step internally so that the advertised relative drift bound of
``100 * tol`` holds on horizons up to 1e3 time units.
"""

import numpy as np
from scipy.optimize import brentq

from .errors import ContactDegeneracyError, NumericError, ValidationError
from .surfaces import PhasePoint, SurfacePatch

__all__ = [
    "CallableHamiltonian",
    "FlowEvent",
    "GeodesicHamiltonian",
    "Trajectory",
    "hamiltonian_vector_field",
    "integrate_batch",
    "integrate_flow",
    "reeb_reparametrize",
]

ENERGY_SAFETY = 20.0
MIN_STEP_FACTOR = 1e-14

# Dormand-Prince 5(4) tableau with the quartic dense-output matrix
# (Hairer--Norsett--Wanner, Solving ODE I, sec. II.5).
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


class GeodesicHamiltonian:
    """H = (phi*)^2 / 2 for a Finsler metric, with closed-form gradients.

    On the unit level set {H = 1/2} the flow runs at unit phi-speed, so
    integration time equals arc length.  Right-hand sides are vectorized
    over a batch of phase points and handle per-trajectory chart ids.
    """

    def __init__(self, metric):
        self.metric = metric
        self.surface = metric.surface

    def value(self, q, p, chart=0):
        d = self.metric.dual(q, p, chart)
        return 0.5 * d * d

    def grad(self, q, p, chart=0):
        """(dH/dq, dH/dp), each shaped like q."""
        d = self.metric.dual(q, p, chart)
        gq, gp = self.metric.dual_grad(q, p, chart)
        return np.asarray(d)[..., None] * gq, np.asarray(d)[..., None] * gp

    def rhs(self, y, charts):
        """Phase velocity (dq/dt, dp/dt) for stacked states y = (q, p)."""
        q, p = y[..., :2], y[..., 2:]
        out = np.empty_like(y)
        if self.surface.n_charts == 1:
            val, gq, gp = self.metric.dual_bundle(q, p, 0)
            val = np.asarray(val)[..., None]
            out[..., :2] = val * gp
            out[..., 2:] = -val * gq
            return out
        charts = np.broadcast_to(charts, y.shape[:-1])
        for ch in range(self.surface.n_charts):
            m = charts == ch
            if np.any(m):
                val, gq, gp = self.metric.dual_bundle(q[m], p[m], ch)
                val = np.asarray(val)[..., None]
                out[m, :2] = val * gp
                out[m, 2:] = -val * gq
        return out


class CallableHamiltonian:
    """Wraps a plain function H(q, p) as a flow generator.

    Gradients come either from a user-supplied ``grad`` callable or from
    Richardson-extrapolated central differences (fourth-order accurate),
    which is plenty for the 1e-8 finite-difference contracts.
    """

    def __init__(self, fn, grad=None, step=1e-4, surface=None):
        self.fn = fn
        self._grad = grad
        self.step = float(step)
        self.surface = surface if surface is not None else SurfacePatch.plane(1e9)

    def value(self, q, p, chart=0):
        return np.asarray(self.fn(np.asarray(q, float), np.asarray(p, float)))

    def _fd(self, q, p, wrt):
        h = self.step
        out = np.zeros_like(q if wrt == "q" else p, dtype=float)
        for k in range(2):
            e = np.zeros(2)
            e[k] = 1.0

            def d(hh):
                if wrt == "q":
                    return (self.fn(q + hh * e, p) - self.fn(q - hh * e, p)) / (2 * hh)
                return (self.fn(q, p + hh * e) - self.fn(q, p - hh * e)) / (2 * hh)

            out[..., k] = (4.0 * d(h / 2) - d(h)) / 3.0
        return out

    def grad(self, q, p, chart=0):
        q = np.asarray(q, float)
        p = np.asarray(p, float)
        if self._grad is not None:
            gq, gp = self._grad(q, p)
            return np.asarray(gq, float), np.asarray(gp, float)
        return self._fd(q, p, "q"), self._fd(q, p, "p")

    def rhs(self, y, charts):
        gq, gp = self.grad(y[..., :2], y[..., 2:])
        return np.concatenate([gp, -gq], axis=-1)


def hamiltonian_vector_field(H, z):
    """X_H(z) = (dH/dp, -dH/dq) in Darboux coordinates.

    Parameters
    ----------
    H : GeodesicHamiltonian or CallableHamiltonian
    z : PhasePoint, or a (q, p) pair, or a (q, p, chart) triple.

    Returns
    -------
    (qdot, pdot) : pair of length-2 arrays.
    """
    if isinstance(z, PhasePoint):
        q, p, chart = z.q, z.p, z.chart
    elif len(z) == 3:
        q, p, chart = z
    else:
        q, p = z
        chart = 0
    gq, gp = H.grad(np.asarray(q, float), np.asarray(p, float), chart)
    return gp, -gq


def reeb_reparametrize(lam, H, z):
    """Rescale X_H by the contact form: R = X_H / lambda(X_H).

    ``lam`` evaluates the 1-form: lam(q, p) -> (l_q, l_p) so that
    lambda = l_q . dq + l_p . dp at the point.  The result satisfies
    lambda(R) = 1 identically (it is enforced by construction).

    Raises
    ------
    ContactDegeneracyError
        If lambda annihilates X_H at z, in which case no Reeb rescaling
        exists there.
    """
    qdot, pdot = hamiltonian_vector_field(H, z)
    if isinstance(z, PhasePoint):
        q, p = z.q, z.p
    else:
        q, p = np.asarray(z[0], float), np.asarray(z[1], float)
    lq, lp = lam(q, p)
    denom = float(np.dot(lq, qdot) + np.dot(lp, pdot))
    scale = max(np.linalg.norm(qdot), np.linalg.norm(pdot), 1.0)
    if abs(denom) < 1e-12 * scale:
        raise ContactDegeneracyError(
            f"lambda(X_H) = {denom:.3e} at q={q}, p={p}; cannot rescale"
        )
    return qdot / denom, pdot / denom


class FlowEvent:
    """Scalar event g(q, p, chart) monitored along a batch of orbits.

    direction : +1 fires on g crossing upward through 0, -1 downward,
        0 on either crossing.
    arm : if True the event must first observe g < 0 (for direction +1;
        mirrored for -1) before it may fire.  This lets rays start exactly
        on a boundary (g = 0) without firing at t = 0.
    terminal : fired trajectories freeze at the crossing.
    """

    def __init__(self, fn, direction=+1, arm=True, terminal=True):
        if direction not in (-1, 0, 1):
            raise ValidationError("event direction must be -1, 0 or +1")
        self.fn = fn
        self.direction = direction
        self.arm = arm
        self.terminal = terminal

    def __call__(self, y, charts):
        return np.asarray(self.fn(y[..., :2], y[..., 2:], charts), dtype=float)


class Trajectory:
    """Samples of one Hamiltonian orbit, immutable once integrated.

    Attributes
    ----------
    times : (n,) strictly increasing sample times.
    states : (n, 4) rows (q1, q2, p1, p2) in the chart of ``charts[i]``.
        On a torus the position coordinates live in the universal cover.
    charts : (n,) chart ids.
    energy : (n,) H along the orbit.
    drift : max |H - H0| / max(|H0|, 1e-300) over the samples.
    order : interpolation order of ``state_at`` (4 for the embedded RK
        pair's dense output, 1 for implicit midpoint).
    """

    def __init__(self, times, states, charts, energy, tol, order, segments=None):
        self.times = np.asarray(times, float)
        self.states = np.asarray(states, float)
        self.charts = np.asarray(charts, int)
        self.energy = np.asarray(energy, float)
        self.tol = float(tol)
        self.order = int(order)
        self._segments = segments
        h0 = self.energy[0]
        self.drift = float(np.max(np.abs(self.energy - h0)) / max(abs(h0), 1e-300))
        if np.any(np.diff(self.times * np.sign(self.times[-1] - self.times[0])) <= 0) \
                and len(self.times) > 1:
            raise ValidationError("trajectory times must be strictly monotone")

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.times[-1], self.states[-1].copy(), int(self.charts[-1])

    def state_at(self, t):
        """Dense-output state at an intermediate time.

        Only available when the integrator recorded dense segments.
        Returns (state, chart) where state = (q1, q2, p1, p2).
        """
        if self._segments is None:
            raise ValidationError("trajectory was integrated without dense output")
        t = float(t)
        for t0, h, y0, Q, chart in self._segments:
            th = (t - t0) / h
            if -1e-12 <= th <= 1 + 1e-12:
                th = min(max(th, 0.0), 1.0)
                pows = np.array([th, th**2, th**3, th**4])
                return y0 + h * (Q @ pows), chart
        raise ValidationError(f"time {t} outside the integrated range")

    def to_csv(self, path):
        """Write t, chart, q1, q2, p1, p2, H with 17 significant digits."""
        cols = np.column_stack(
            [self.times, self.charts, self.states, self.energy]
        )
        np.savetxt(
            path,
            cols,
            delimiter=",",
            header="t,chart,q1,q2,p1,p2,H",
            comments="",
            fmt=["%.17g", "%d", "%.17g", "%.17g", "%.17g", "%.17g", "%.17g"],
        )


def _initial_step(rhs, y, charts, scale, direction):
    f0 = rhs(y, charts)
    d0 = np.max(np.sqrt(np.mean((y / scale) ** 2, axis=-1)))
    d1 = np.max(np.sqrt(np.mean((f0 / scale) ** 2, axis=-1)))
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    y1 = y + h0 * direction * f0
    f1 = rhs(y1, charts)
    d2 = np.max(np.sqrt(np.mean(((f1 - f0) / scale) ** 2, axis=-1))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1), f0


class BatchFlowResult:
    """Outcome of a batched event-terminated integration.

    For each trajectory: ``event_time[i]`` is the (signed) firing time of
    its terminal event (NaN when it ran to the horizon), ``states[i]`` the
    state at that moment (or at the horizon), ``charts[i]`` its chart and
    ``event_index[i]`` which event fired (-1 for none).
    """

    def __init__(self, times, states, charts, event_index):
        self.event_time = times
        self.states = states
        self.charts = charts
        self.event_index = event_index


def integrate_batch(H, states, charts, T, tol=1e-10, events=(), max_step=np.inf,
                    record=None):
    """Advance a batch of phase points simultaneously.

    Parameters
    ----------
    H : Hamiltonian object with ``rhs(y, charts)`` and ``value``.
    states : (n, 4) initial rows (q1, q2, p1, p2).
    charts : (n,) chart ids (or a scalar).
    T : signed horizon; integration runs from 0 to T.
    events : FlowEvent sequence; terminal events freeze a trajectory at
        the refined crossing.
    record : optional callable called after each accepted step with
        (t, y, charts, active); used by single-orbit drivers.

    Returns
    -------
    BatchFlowResult

    Notes
    -----
    The error controller targets ``tol / ENERGY_SAFETY`` per unit step in a
    mixed absolute/relative norm; all active trajectories share the step
    size.  Crossing times are refined on the quartic dense output with a
    bracketing root solve, so event placement inherits the local error of
    the accepted step rather than the step size.
    """
    if not 1e-13 <= tol <= 1e-6:
        raise ValidationError(f"tol={tol} outside [1e-13, 1e-6]")
    y = np.array(states, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    n = y.shape[0]
    charts = np.broadcast_to(np.asarray(charts, int), (n,)).copy()
    direction = 1.0 if T >= 0 else -1.0
    T_abs = abs(float(T))
    surf = H.surface
    switch_r = surf.switch_radius() if surf.n_charts > 1 else None

    rtol = atol = tol / ENERGY_SAFETY
    active = np.ones(n, dtype=bool)
    event_time = np.full(n, np.nan)
    event_index = np.full(n, -1, dtype=int)
    out_states = y.copy()

    def rhs(yy, cc):
        return H.rhs(yy, cc)

    def err_norm(e, y0, y1):
        scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
        return np.sqrt(np.mean((e / scale) ** 2, axis=-1))

    g_old = [ev(y, charts) for ev in events]
    armed = []
    for ev, g in zip(events, g_old):
        if not ev.arm:
            armed.append(np.ones(n, bool))
        elif ev.direction >= 0:
            armed.append(g < 0)
        else:
            armed.append(g > 0)

    scale0 = atol + rtol * np.abs(y)
    h, f_cur = _initial_step(rhs, y, charts, scale0, direction)
    h = min(h, max_step, T_abs if T_abs > 0 else h)
    t = 0.0
    if record is not None:
        record(0.0, y, charts, active)

    K = np.empty((7, n, 4))
    while t < T_abs and np.any(active):
        if h < MIN_STEP_FACTOR * max(1.0, t):
            raise NumericError(
                f"step size underflow at t={direction * t:.6g} "
                f"(h={h:.3e}); last good state {y[active][0]}"
            )
        hs = min(h, max_step, T_abs - t)
        if hs <= 4 * np.finfo(float).eps * max(t, 1.0):
            break  # remaining horizon below time resolution
        # one embedded step for every trajectory (frozen rows just ride
        # along; they are masked out of the error norm and the results)
        K[0] = f_cur
        for s in range(1, 7):
            ys = y + (direction * hs) * np.einsum("s,snk->nk", _A[s], K[:s])
            K[s] = rhs(ys, charts)
        y_new = y + (direction * hs) * np.einsum("s,snk->nk", _B, K)
        y_new[~active] = y[~active]  # frozen rows stay at their event state
        err = err_norm((direction * hs) * np.einsum("s,snk->nk", _E, K), y, y_new)
        worst = np.max(err[active]) if np.any(active) else 0.0

        if worst > 1.0:
            h = hs * max(0.2, 0.9 * worst ** -0.2)
            continue

        t_new = t + hs
        fired_any = False
        for k, ev in enumerate(events):
            g_new = ev(y_new, charts)
            up = armed[k] & (g_old[k] < 0) & (g_new >= 0) if ev.direction >= 0 \
                else np.zeros(n, bool)
            dn = armed[k] & (g_old[k] > 0) & (g_new <= 0) if ev.direction <= 0 \
                else np.zeros(n, bool)
            crossed = (up | dn) & active
            for j in np.nonzero(crossed)[0]:
                Q = K[:, j, :].T @ _P
                yj, hj = y[j], direction * hs

                def g_of(th):
                    pows = np.array([th, th**2, th**3, th**4])
                    yt = yj + hj * (Q @ pows)
                    return float(ev(yt[None, :], charts[j : j + 1])[0])

                ga, gb = float(g_old[k][j]), float(g_new[j])
                if ga == 0.0 or ga * gb > 0:
                    th_star = 1.0
                else:
                    th_star = brentq(g_of, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)
                pows = np.array([th_star, th_star**2, th_star**3, th_star**4])
                y_star = yj + hj * (Q @ pows)
                if ev.terminal:
                    out_states[j] = y_star
                    event_time[j] = direction * (t + th_star * hs)
                    event_index[j] = k
                    active[j] = False
                    y_new[j] = y_star
                    fired_any = True
            # update arming from the freshly observed signs
            if ev.arm:
                if ev.direction >= 0:
                    armed[k] |= g_new < 0
                else:
                    armed[k] |= g_new > 0
            g_old[k] = g_new

        y = y_new
        f_new = rhs(y, charts)  # FSAL would reuse K[6]; events may move rows
        t = t_new

        # chart switching (sphere): after the step, migrate far-out rows
        if switch_r is not None:
            far = active & (np.linalg.norm(y[:, :2], axis=1) > switch_r)
            if np.any(far):
                q2 = surf.transition(y[far, :2])
                p2 = surf.push_covector(q2, y[far, 2:])
                y[far, :2], y[far, 2:] = q2, p2
                charts[far] = 1 - charts[far]
                f_new[far] = rhs(y[far], charts[far])
                for k, ev in enumerate(events):
                    g_old[k][far] = ev(y[far], charts[far])
        f_cur = f_new

        if record is not None:
            record(direction * t, y, charts, active)
        factor = 5.0 if worst == 0.0 else min(5.0, max(0.2, 0.9 * worst ** -0.2))
        if fired_any:
            factor = min(factor, 1.0)
        h = hs * factor

    still = active
    out_states[still] = y[still]
    return BatchFlowResult(event_time, out_states, charts, event_index)


def integrate_flow(H, z0, T, tol=1e-10, max_step=np.inf, method="rk45", dt=None,
                   dense=False):
    """Integrate one orbit of X_H from a PhasePoint over a signed horizon.

    method="rk45" is the adaptive embedded pair; method="midpoint" is
    fixed-step implicit midpoint (symplectic) and requires ``dt``.

    Returns a Trajectory sampled at the accepted steps.
    """
    if not isinstance(z0, PhasePoint):
        raise ValidationError("integrate_flow expects a PhasePoint start")
    if method == "midpoint":
        return _integrate_midpoint(H, z0, T, dt, tol)
    if method != "rk45":
        raise ValidationError(f"unknown method {method!r}")

    times, states, charts = [], [], []
    segments = [] if dense else None

    def rec(t, y, cc, act):
        times.append(t)
        states.append(y[0].copy())
        charts.append(int(cc[0]))

    y0 = np.concatenate([z0.q, z0.p])[None, :]
    integrate_batch(H, y0, z0.chart, T, tol, max_step=max_step, record=rec)
    if dense:
        # The batch driver does not expose its stage values, so dense
        # segments are rebuilt from consecutive samples by Hermite fit.
        times_a = np.asarray(times)
        for i in range(len(times_a) - 1):
            t0, t1 = times_a[i], times_a[i + 1]
            ya, yb = states[i], states[i + 1]
            fa = H.rhs(ya[None, :], np.array([charts[i]]))[0]
            fb = H.rhs(yb[None, :], np.array([charts[i + 1]]))[0]
            h = t1 - t0
            # cubic Hermite in Q-matrix form: y0 + h*(Q @ [th, th^2, th^3, 0])
            c1 = fa * h
            c2 = 3 * (yb - ya) - (2 * fa + fb) * h
            c3 = -2 * (yb - ya) + (fa + fb) * h
            Q = np.column_stack([c1, c2, c3, np.zeros(4)]) / h
            segments.append((t0, h, ya.copy(), Q, charts[i]))

    times = np.asarray(times)
    states = np.asarray(states)
    charts_arr = np.asarray(charts, int)
    energy = np.array(
        [H.value(s[:2], s[2:], c) for s, c in zip(states, charts_arr)]
    )
    order = 3 if dense else 4
    return Trajectory(times, states, charts_arr, energy, tol, order, segments)


def _integrate_midpoint(H, z0, T, dt, tol):
    if dt is None or dt <= 0:
        raise ValidationError("midpoint method needs a positive dt")
    nsteps = int(round(abs(T) / dt))
    sgn = 1.0 if T >= 0 else -1.0
    y = np.concatenate([z0.q, z0.p])
    chart = np.array([z0.chart])
    times = [0.0]
    states = [y.copy()]
    for i in range(nsteps):
        ym = y.copy()
        ok = False
        for _ in range(100):
            f = H.rhs(((y + ym) / 2)[None, :], chart)[0]
            ym_next = y + sgn * dt * f
            if np.max(np.abs(ym_next - ym)) < 1e-14 * max(1.0, np.max(np.abs(ym))):
                ym = ym_next
                ok = True
                break
            ym = ym_next
        if not ok:
            raise NumericError(
                f"implicit midpoint failed to contract at step {i} (dt={dt})"
            )
        y = ym
        times.append(sgn * (i + 1) * dt)
        states.append(y.copy())
    states = np.asarray(states)
    charts = np.full(len(times), z0.chart, dtype=int)
    energy = np.array([H.value(s[:2], s[2:], z0.chart) for s in states])
    return Trajectory(times, states, charts, energy, tol, 1, None)
