"""Compactly supported area-preserving bumps on boundary coordinates.

The basic object moves one prescribed point to another while staying the
identity outside a small disc.  It is realized as the time-1 flow of a
Hamiltonian generator

    G(z) = A * rho(|z - x| / delta) * <J(x - y), z - x>,

where rho is a plateau profile (flat near 0, smooth shoulders, exact
compact support) and J is the quarter turn.  On the flat part of the
plateau the induced field is the constant A*(y - x), so the center
travels on a straight segment and the amplitude A that puts the time-1
image of x exactly on y is found by a secant step that converges in one
iteration.  Being a Hamiltonian flow, the map preserves area; being
driven by a compactly supported field, it is the identity -- bitwise, by
construction -- outside the support disc.

The second half of the module composes such bumps with tabulated lens
maps: pre-composition by the inverse bump perturbs a lens map inside a
chosen window without touching it elsewhere, and a symmetrization step
restores time-reversibility after a one-sided perturbation.
"""

import numpy as np

from .errors import DomainError, NumericError, ValidationError
from .lens import ComposedLensMap, _mod_diff, _root_grid, invert_map
from .profiles import plateau, plateau_d1, plateau_d2

__all__ = [
    "SymplecticBump", "SymmetrizedLensMap", "calibrate_bump_constant",
    "make_bump", "perturb_lens", "reversible_symmetrize", "sampled_cr_size",
]

#: Conservative default for the displacement-budget constant c in the
#: admissibility inequality |y - x| < c * delta**r * eps.
DEFAULT_BUDGET_C = 0.05

#: Calibrated budget constants, keyed by (delta, order).
_CALIBRATION_CACHE = {}


class SymplecticBump:
    """Time-1 map of a compactly supported Hamiltonian generator.

    Parameters
    ----------
    center, target : pair of floats
        The moved point x and its prescribed image y, in (s, t)
        boundary coordinates or any planar Darboux chart.
    delta : float
        Support radius; the map is the identity outside the open disc
        of this radius around ``center``.
    order : int
        Smoothness-budget order r of the admissibility inequality.
    eps : float
        Size budget for the sampled C^r norm of the displacement.
    amplitude : float
        Generator amplitude A.  Zero gives the identity map.
    period : float, optional
        Period of the first coordinate (the boundary arc length) when
        the bump lives on a boundary cylinder.  Displacements in s are
        then taken to the nearest lift.
    budget_c : float
        The constant c under which the displacement was admitted.

    The flow is integrated by a fixed-step fourth-order Runge-Kutta
    scheme.  A fixed step keeps the numerical map a smooth function of
    its argument, so finite differences of ``apply`` measure honest
    derivatives of one well-defined diffeomorphism instead of the noise
    floor of an adaptive integrator.
    """

    def __init__(self, center, target, delta, order, eps, amplitude,
                 period=None, budget_c=DEFAULT_BUDGET_C):
        self.center = np.array(center, dtype=float).reshape(2)
        self.target = np.array(target, dtype=float).reshape(2)
        self.delta = float(delta)
        self.order = int(order)
        self.eps = float(eps)
        self.amplitude = float(amplitude)
        self.period = None if period is None else float(period)
        self.budget_c = float(budget_c)
        if self.delta <= 0.0:
            raise ValidationError("bump support radius must be positive")
        if self.order < 1:
            raise ValidationError("smoothness budget order must be >= 1")
        if self.eps <= 0.0:
            raise ValidationError("size budget eps must be positive")
        w = self._wrap(self.target - self.center)
        self._w = w
        self.displacement = float(np.hypot(w[0], w[1]))
        # J(x - y) with J the quarter turn (a, b) -> (-b, a); on the
        # plateau the Hamiltonian field is then exactly A * (y - x).
        self._jw = np.array([w[1], -w[0]])
        rate = abs(self.amplitude) * self.displacement / self.delta
        self._n_steps = 96 + int(4096 * min(1.0, rate))

    # -- geometry helpers -------------------------------------------------

    def _wrap(self, rel):
        if self.period is not None:
            L = self.period
            rel = np.array(rel, dtype=float)
            rel[..., 0] = (rel[..., 0] + 0.5 * L) % L - 0.5 * L
        return rel

    def _rel(self, z):
        return self._wrap(z - self.center)

    def contains(self, z):
        """Boolean mask of points strictly inside the support disc."""
        rel = self._rel(np.asarray(z, dtype=float))
        return np.hypot(rel[..., 0], rel[..., 1]) < self.delta

    # -- generator and its derivatives ------------------------------------

    def generator(self, z):
        """Value of the generating function G at z."""
        rel = self._rel(np.asarray(z, dtype=float))
        u = np.hypot(rel[..., 0], rel[..., 1]) / self.delta
        q = rel[..., 0] * self._jw[0] + rel[..., 1] * self._jw[1]
        return self.amplitude * plateau(u) * q

    def _field(self, pts):
        """Hamiltonian field J grad G at an (n, 2) block of points."""
        rel = self._rel(pts)
        rr = np.hypot(rel[:, 0], rel[:, 1])
        u = rr / self.delta
        q = rel[:, 0] * self._jw[0] + rel[:, 1] * self._jw[1]
        rho = plateau(u)
        d1 = plateau_d1(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(rr > 0.0, d1 * q / (self.delta * rr), 0.0)
        g1 = self.amplitude * (fac * rel[:, 0] + rho * self._jw[0])
        g2 = self.amplitude * (fac * rel[:, 1] + rho * self._jw[1])
        return np.stack([-g2, g1], axis=1)

    def _field_jacobian(self, pts):
        """Derivative of the field, J Hess G, as an (n, 2, 2) block."""
        rel = self._rel(pts)
        rr = np.hypot(rel[:, 0], rel[:, 1])
        u = rr / self.delta
        q = rel[:, 0] * self._jw[0] + rel[:, 1] * self._jw[1]
        d1 = plateau_d1(u)
        d2 = plateau_d2(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_r = np.where(rr > 0.0, 1.0 / rr, 0.0)
        n1 = rel[:, 0] * inv_r
        n2 = rel[:, 1] * inv_r
        a_rad = d2 * q / self.delta ** 2
        a_tan = d1 * q * inv_r / self.delta
        a_mix = d1 / self.delta
        jw1, jw2 = self._jw
        h11 = a_rad * n1 * n1 + a_tan * (1.0 - n1 * n1) + 2 * a_mix * n1 * jw1
        h22 = a_rad * n2 * n2 + a_tan * (1.0 - n2 * n2) + 2 * a_mix * n2 * jw2
        h12 = (a_rad * n1 * n2 - a_tan * n1 * n2
               + a_mix * (n1 * jw2 + n2 * jw1))
        A = self.amplitude
        out = np.empty(pts.shape[:1] + (2, 2))
        out[:, 0, 0] = -A * h12
        out[:, 0, 1] = -A * h22
        out[:, 1, 0] = A * h11
        out[:, 1, 1] = A * h12
        return out

    # -- flows -------------------------------------------------------------

    def _flow(self, pts, direction):
        """Fixed-step RK4 time-1 flow of an (n, 2) interior block."""
        z = pts.copy()
        h = direction / self._n_steps
        for _ in range(self._n_steps):
            k1 = self._field(z)
            k2 = self._field(z + 0.5 * h * k1)
            k3 = self._field(z + 0.5 * h * k2)
            k4 = self._field(z + h * k3)
            z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return z

    def _flow_variational(self, pts):
        """Flow together with the tangent map, for exact Jacobians."""
        z = pts.copy()
        n = z.shape[0]
        M = np.tile(np.eye(2), (n, 1, 1))
        h = 1.0 / self._n_steps

        def rhs(zc, Mc):
            return self._field(zc), self._field_jacobian(zc) @ Mc

        for _ in range(self._n_steps):
            k1, K1 = rhs(z, M)
            k2, K2 = rhs(z + 0.5 * h * k1, M + 0.5 * h * K1)
            k3, K3 = rhs(z + 0.5 * h * k2, M + 0.5 * h * K2)
            k4, K4 = rhs(z + h * k3, M + h * K3)
            z += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            M += (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        return z, M

    def _masked(self, z, worker):
        """Apply a flow to interior points only, pass the rest through."""
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        pts = np.atleast_2d(z).reshape(-1, 2)
        out = pts.copy()
        if self.amplitude != 0.0:
            inside = self.contains(pts)
            if np.any(inside):
                out[inside] = worker(pts[inside])
        out = out.reshape(np.atleast_2d(z).shape)
        return out[0] if single else out.reshape(z.shape)

    def apply(self, z):
        """Image of z under the bump map; identity outside the support."""
        return self._masked(z, lambda pts: self._flow(pts, +1.0))

    __call__ = apply

    def inverse(self, z):
        """Preimage of z, by the backward flow with a Newton polish."""
        return self._masked(z, self._inverse_block)

    def _inverse_block(self, pts):
        # The backward flow already lands within integrator accuracy;
        # the Newton loop below only fires for violently large bumps.
        cur = self._flow(pts, -1.0)
        for _ in range(4):
            res = self._flow(cur, +1.0) - pts
            if np.max(np.abs(res)) <= 1e-13:
                break
            J = self._fd_jacobian_block(cur)
            cur -= np.linalg.solve(J, res[..., None])[..., 0]
        return cur

    # -- derivatives of the map -------------------------------------------

    def _fd_jacobian_block(self, pts, h=None):
        if h is None:
            h = 1e-5 * self.delta
        cols = []
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            plus = self._flow(pts + e, +1.0)
            minus = self._flow(pts - e, +1.0)
            cols.append((plus - minus) / (2.0 * h))
        return np.stack(cols, axis=-1)

    def jacobian(self, z, h=None, method="fd"):
        """Sampled Jacobian Dpsi at z, shape (..., 2, 2).

        ``method="fd"`` uses central differences of the map itself;
        ``method="variational"`` integrates the tangent map along the
        flow and is the sharper area-preservation oracle.
        """
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        pts = np.atleast_2d(z).reshape(-1, 2)
        out = np.tile(np.eye(2), (pts.shape[0], 1, 1))
        if self.amplitude != 0.0:
            inside = self.contains(pts)
            if np.any(inside):
                if method == "variational":
                    _, M = self._flow_variational(pts[inside])
                elif method == "fd":
                    M = self._fd_jacobian_block(pts[inside], h)
                else:
                    raise ValidationError(
                        f"unknown jacobian method {method!r}")
                out[inside] = M
        return out[0] if single else out.reshape(z.shape[:-1] + (2, 2))

    def describe(self):
        return (f"bump at ({self.center[0]:.4g}, {self.center[1]:.4g}), "
                f"support {self.delta:.4g}, displacement "
                f"{self.displacement:.4g}, order {self.order}")


def _tuned_amplitude(x, y, delta, order, eps, period):
    """Amplitude A with time-1 image of x exactly on y (secant-tuned)."""
    trial = SymplecticBump(x, y, delta, order, eps, 1.0, period=period)
    d = trial.displacement
    if d == 0.0:
        return 0.0
    w_hat = trial._w / d
    A = 1.0
    for _ in range(4):
        trial = SymplecticBump(x, y, delta, order, eps, A, period=period)
        disp = trial._wrap(trial.apply(trial.center) - trial.center)
        f = float(disp @ w_hat)
        if abs(f - d) <= 1e-14 * max(1.0, d):
            return A
        if f == 0.0:
            raise NumericError("bump amplitude tuning stalled")
        A *= d / f
    return A


def make_bump(x, y, delta, order, eps, c=None, period=None):
    """Build the bump moving x to y, after the displacement-budget check.

    The admissibility inequality is d(y, x) < c * delta**order * eps
    with the conservative default c = 0.05; pass the output of
    :func:`calibrate_bump_constant` for the measured constant.  Raises
    ValidationError quoting the inequality when the budget is violated.
    """
    if c is None:
        c = DEFAULT_BUDGET_C
    probe = SymplecticBump(x, y, delta, order, eps, 0.0, period=period,
                           budget_c=c)
    d = probe.displacement
    bound = c * probe.delta ** probe.order * probe.eps
    if not d < bound:
        raise ValidationError(
            f"displacement d(y, x) = {d:.6g} violates the bump budget "
            f"d(y, x) < c*delta^r*eps = {bound:.6g} "
            f"(c = {c:.6g}, delta = {probe.delta:.6g}, r = {probe.order}, "
            f"eps = {probe.eps:.6g})")
    if d == 0.0:
        return probe
    A = _tuned_amplitude(x, y, delta, order, eps, period)
    bump = SymplecticBump(x, y, delta, order, eps, A, period=period,
                          budget_c=c)
    hit = bump.apply(bump.center)
    miss = bump._wrap(hit - bump.target)
    if np.hypot(miss[0], miss[1]) > 1e-10:
        raise NumericError("bump amplitude tuning missed the target")
    return bump


def sampled_cr_size(bump, order=None, n=64):
    """Sampled C^r norm of psi - id on an n-by-n grid over the support.

    Finite differences up to the requested order (default: the bump's
    own smoothness budget) of both displacement components; the norm is
    the largest absolute value over all orders and all partials.
    """
    r = bump.order if order is None else int(order)
    axis = np.linspace(-bump.delta, bump.delta, n)
    h = axis[1] - axis[0]
    S, T = np.meshgrid(axis, axis, indexing="ij")
    Z = np.stack([S + bump.center[0], T + bump.center[1]], axis=-1)
    F = bump.apply(Z.reshape(-1, 2)).reshape(n, n, 2) - Z
    size = float(np.max(np.abs(F)))
    level = [F]
    for _ in range(r):
        nxt = []
        for arr in level:
            nxt.append(np.gradient(arr, h, axis=0, edge_order=2))
            nxt.append(np.gradient(arr, h, axis=1, edge_order=2))
        level = nxt
        size = max(size, float(max(np.max(np.abs(a)) for a in level)))
    return size


def _probe_size(delta, order, d, eps):
    """Worst sampled C^r size over two displacement directions."""
    worst = 0.0
    for ang in (0.0, 0.25 * np.pi):
        y = (d * np.cos(ang), d * np.sin(ang))
        A = _tuned_amplitude((0.0, 0.0), y, delta, order, eps, None)
        bump = SymplecticBump((0.0, 0.0), y, delta, order, eps, A)
        worst = max(worst, sampled_cr_size(bump))
    return worst


def calibrate_bump_constant(delta, order, eps=0.05, safety=0.8,
                            refresh=False):
    """Measured budget constant c for the given support radius and order.

    Finds, by bracketing and bisection, the largest displacement whose
    bump stays within the C^r size budget, and returns the constant
    c = safety * d_star / (delta**order * eps).  Since the sampled size
    is linear in the displacement to high accuracy, the constant does
    not depend on eps and is cached per (delta, order).
    """
    delta = float(delta)
    order = int(order)
    eps = float(eps)
    if delta <= 0.0 or eps <= 0.0 or order < 1:
        raise ValidationError("calibration needs delta > 0, eps > 0, r >= 1")
    key = (delta, order)
    if not refresh and key in _CALIBRATION_CACHE:
        return _CALIBRATION_CACHE[key]

    cap = 0.45 * delta
    d0 = min(1e-3 * delta, 0.1 * cap)
    s0 = _probe_size(delta, order, d0, eps)
    if s0 <= 0.0:
        raise NumericError("calibration probe produced a zero-size bump")
    hi = min(cap, 1.2 * d0 * eps / s0)
    while _probe_size(delta, order, hi, eps) <= eps and hi < cap:
        hi = min(cap, 1.6 * hi)
    if _probe_size(delta, order, hi, eps) <= eps:
        d_star = cap
    else:
        lo = 0.0
        for _ in range(12):
            mid = 0.5 * (lo + hi)
            if _probe_size(delta, order, mid, eps) <= eps:
                lo = mid
            else:
                hi = mid
        d_star = lo
    c = safety * d_star / (delta ** order * eps)
    _CALIBRATION_CACHE[key] = c
    return c


# -- lens-map perturbation algebra ----------------------------------------


def perturb_lens(sigma, bump):
    """Pre-compose a lens map with the inverse bump: sigma_tilde = sigma o psi^{-1}.

    The bump must live on the disc's boundary cylinder (its period equal
    to the boundary length) and its support must stay strictly inside
    the inward window covered by the tabulated fan, at every arc-length
    position it touches; otherwise DomainError.
    """
    disc = sigma.disc
    L = disc.length
    if bump.period is None or abs(bump.period - L) > 1e-9 * L:
        raise ValidationError(
            "bump must be built with the disc boundary period")
    A_lo = _root_grid(sigma).A_nodes[0]
    span = np.cos(A_lo)
    ss = (bump.center[0] + np.linspace(-bump.delta, bump.delta, 33)) % L
    lo, hi = disc.admissible_interval(ss)
    mid = 0.5 * (hi + lo)
    half = 0.5 * (hi - lo) * span
    t_lo = bump.center[1] - bump.delta
    t_hi = bump.center[1] + bump.delta
    if np.any(t_lo <= mid - half) or np.any(t_hi >= mid + half):
        raise DomainError(
            "bump support escapes the inward window of the lens map")

    def pre(s, t):
        z = np.stack([np.asarray(s, dtype=float),
                      np.asarray(t, dtype=float)], axis=-1)
        out = bump.inverse(z)
        return out[..., 0] % L, out[..., 1]

    def pre_inv(s, t):
        z = np.stack([np.asarray(s, dtype=float),
                      np.asarray(t, dtype=float)], axis=-1)
        out = bump.apply(z)
        return out[..., 0] % L, out[..., 1]

    tilde = ComposedLensMap(sigma, pre=pre, pre_inv=pre_inv)
    # where the composition can differ from sigma, as (center, radius)
    # patches in boundary coordinates; samplers downstream (the hybrid
    # gluing checks) ring these patches instead of hunting for them
    tilde.support = [((float(bump.center[0]), float(bump.center[1])),
                      bump.delta)]
    return tilde


class SymmetrizedLensMap(ComposedLensMap):
    """Reversible repair of a one-sided lens-map perturbation.

    On the reversal of the touched region the map is redefined by the
    reversibility identity, sigma_hat(alpha) = -sigma_tilde^{-1}(-alpha);
    everywhere else it coincides with sigma_tilde.  Membership in the
    redefined region and the redefined value come from one inversion:
    alpha lies in the reversal of sigma_tilde(supp psi) exactly when
    sigma_tilde^{-1}(-alpha) lands inside the bump support, and the
    value is then the reversal of that preimage.  The reversibility of
    the unperturbed grid supplies the Newton seed
    sigma_tilde^{-1}(-alpha) ~ reverse(sigma(alpha)), so no backward
    integration is needed here.
    """

    def __init__(self, sigma_tilde, sigma, bump):
        super().__init__(sigma_tilde)
        self.sigma = sigma
        self.bump = bump
        self._image_net()
        L = self.disc.length
        # patches where the map can differ from the unperturbed grid: the
        # bump support itself (inherited from sigma_tilde) and a bounding
        # disc of the reversed image strip, centered at the circular mean
        # of the reversed net
        ang = 2.0 * np.pi * ((-self._net_s) % L) / L
        cs = (L / (2.0 * np.pi)) * np.arctan2(
            np.mean(np.sin(ang)), np.mean(np.cos(ang))) % L
        ct = float(np.mean(-self._net_t))
        rad = float(np.max(np.hypot(_mod_diff(-self._net_s - cs, L),
                                    -self._net_t - ct))) + self._net_pad
        self.support = [((float(bump.center[0]), float(bump.center[1])),
                         bump.delta), ((float(cs), ct), rad)]

    def _image_net(self):
        """Sampled net of the touched region sigma_tilde(supp psi).

        The image of the support ball is a thin sheared strip, so a
        bounding box over-admits badly; instead a polar net of the ball
        is pushed through the map and membership candidates are points
        within a Lipschitz-padded covering distance of the net.  Points
        rejected here are certainly outside the region, and the
        per-point Newton test only runs for the survivors.
        """
        L = self.disc.length
        delta = self.bump.delta
        radii = np.linspace(0.0, 0.999, 14) * delta
        ang = np.linspace(0.0, 2.0 * np.pi, 48, endpoint=False)
        rr, aa = np.meshgrid(radii, ang, indexing="ij")
        bs = (self.bump.center[0] + rr.ravel() * np.cos(aa.ravel())) % L
        bt = self.bump.center[1] + rr.ravel() * np.sin(aa.ravel())
        us, ut = self.base.map(bs, bt)
        self._net_s = np.asarray(us, dtype=float).ravel()
        self._net_t = np.asarray(ut, dtype=float).ravel()
        # covering radius of the polar net inside the ball, and the
        # worst stretch of the map across neighboring net points
        gap = max(radii[1] - radii[0],
                  radii[-1] * (ang[1] - ang[0])) * 0.5
        src = np.stack([bs, bt], axis=-1).reshape(14, 48, 2)
        img = np.stack([self._net_s, self._net_t], axis=-1).reshape(14, 48, 2)
        stretch = 1.0
        for axis in (0, 1):
            ds = np.diff(src, axis=axis)
            di = np.diff(img, axis=axis)
            num = np.hypot(_mod_diff(di[..., 0], L), di[..., 1])
            den = np.hypot(_mod_diff(ds[..., 0], L), ds[..., 1])
            ok = den > 0
            if np.any(ok):
                stretch = max(stretch, float(np.max(num[ok] / den[ok])))
        self._net_pad = 2.0 * stretch * gap + 1e-6

    def _near_image(self, s_neg, t_neg):
        """Mask of points possibly inside the touched region."""
        L = self.disc.length
        ds = _mod_diff(s_neg[:, None] - self._net_s[None, :], L)
        dt = t_neg[:, None] - self._net_t[None, :]
        return np.min(np.hypot(ds, dt), axis=1) <= self._net_pad

    def map(self, s, t):
        L = self.disc.length
        s_arr = np.asarray(s, dtype=float)
        t_arr = np.asarray(t, dtype=float)
        shape = np.broadcast(s_arr, t_arr).shape
        ss = np.ascontiguousarray(
            np.broadcast_to(s_arr, shape), dtype=float).ravel()
        tt = np.ascontiguousarray(
            np.broadcast_to(t_arr, shape), dtype=float).ravel()
        so, to = self.base.map(ss % L, tt)
        out_s = np.atleast_1d(np.asarray(so, dtype=float)).ravel().copy()
        out_t = np.atleast_1d(np.asarray(to, dtype=float)).ravel().copy()
        near = self._near_image(ss % L, -tt)
        if np.any(near):
            idx = np.nonzero(near)[0]
            seed_s, seed_t = self.sigma.map(ss[idx] % L, tt[idx])
            seed_s = np.atleast_1d(np.asarray(seed_s, dtype=float)).ravel()
            seed_t = np.atleast_1d(np.asarray(seed_t, dtype=float)).ravel()
            for k, i in enumerate(idx):
                z = self._member_value(ss[i], tt[i],
                                       (seed_s[k], -seed_t[k]), L)
                if z is not None:
                    out_s[i], out_t[i] = z
        return out_s.reshape(shape), out_t.reshape(shape)

    def _member_value(self, s, t, seed, L):
        """Reversed-branch value at (s, t), or None off the region."""
        base = self.base
        try:
            if (type(base) is ComposedLensMap and base.pre_inv is not None
                    and base.post is None):
                # sigma_tilde = base.base o pre, so its inverse is
                # pre_inv o (base.base)^{-1}: one cheap grid inversion
                # and one forward bump flow.
                si, ti = invert_map(base.base, s % L, -t, seed=seed)
                si, ti = base.pre_inv(np.asarray(si), np.asarray(ti))
                si = float(np.asarray(si).reshape(()))
                ti = float(np.asarray(ti).reshape(()))
            else:
                si, ti = invert_map(base, s % L, -t, seed=seed)
        except NumericError:
            # -alpha outside the range of the perturbed map cannot lie
            # in the touched region; the sigma_tilde value stands.
            return None
        if not bool(self.bump.contains((si, ti))):
            return None
        return si % L, -ti


def reversible_symmetrize(sigma_tilde, sigma, bump):
    """Restore reversibility to a bump-perturbed lens map.

    ``sigma`` is the unperturbed reversible lens map, ``sigma_tilde``
    its perturbation by ``bump`` (as from :func:`perturb_lens`), and the
    touched region is sigma_tilde(supp psi).  Preconditions: the base
    metric is reversible, and the reversal of the touched region stays
    clear of the bump support; violations raise ValidationError and
    DomainError respectively.
    """
    disc = sigma.disc
    if not disc.metric.reversible:
        raise ValidationError(
            "reversible symmetrization needs a reversible base metric")
    L = disc.length
    radii = np.array([0.2, 0.45, 0.7, 0.9, 0.995]) * bump.delta
    angles = np.linspace(0.0, 2.0 * np.pi, 24, endpoint=False)
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    ps = (bump.center[0] + rr * np.cos(aa)).ravel() % L
    pt = (bump.center[1] + rr * np.sin(aa)).ravel()
    us, ut = sigma_tilde.map(ps, pt)
    rel_s = _mod_diff(np.asarray(us, dtype=float) - bump.center[0], L)
    rel_t = -np.asarray(ut, dtype=float) - bump.center[1]
    gap = np.hypot(rel_s, rel_t)
    if np.min(gap) <= bump.delta:
        raise DomainError(
            "the reversal of the touched region meets the bump support")
    return SymmetrizedLensMap(sigma_tilde, sigma, bump)
