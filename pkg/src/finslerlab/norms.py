"""Finsler metrics on surface charts.

Every metric family in the package is realized as a *chart norm*

    phi(q, v) = a(q) |v| + c(q) . v

with a scalar field a > |c| and a covector field c.  This covers the
Euclidean plane and flat torus (a = 1, c = 0), the round sphere in
stereographic coordinates (a = the conformal factor, c = 0), constant-drift
Randers metrics (c = beta), the Katok-type irreversible sphere metric
(c = a rotation one-form), and conformal or localized perturbations of any
of these.  The payoff is that the dual norm, both Legendre maps, the unit
cosphere fibers and all coordinate derivatives have closed forms:

* dual norm      phi*(q, p) = a (S - w) / D,
  with D = a^2 - |c|^2, w = c.p, S = sqrt(D |p|^2 + w^2);
* unit cosphere  {phi* = 1} is the circle |p - c(q)| = a(q);
* Legendre map of a unit vector v:   p = a v/|v| + c;
* inverse map of a unit covector p:  v = n / (p.n), n = (p - c)/a.

The generic numerical routes the contracts ask for (fiber maximization by
Newton with multistarts, finite-difference gradients) are implemented as
well and cross-checked against the closed forms in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NumericError, ValidationError
from .profiles import mollifier, mollifier_d1
from .surfaces import SurfacePatch

__all__ = [
    "FinslerMetric",
    "MetricPerturbation",
    "make_metric",
    "eval_metric",
    "dual_norm",
    "legendre",
    "legendre_inverse",
    "verify_metric",
    "conformal_perturb",
    "localized_perturb",
    "cr_distance",
    "unit_vector",
]


def chart_displacement(surface, q, center):
    """Displacement q - center, shortest representative on the torus."""
    d = np.asarray(q, dtype=float) - np.asarray(center, dtype=float)
    if surface.kind == "torus":
        L = np.asarray(surface.periods)
        d = d - np.round(d / L) * L
    return d


@dataclass
class MetricPerturbation:
    """A finite sum of radial bumps, used conformally or as a drift field.

    Each bump is (center, radius, amplitude); the field value is

        h(q) = sum_i amplitude_i * mollifier(|q - center_i| / radius_i)

    with exact support in the union of the bump discs.  For ``kind ==
    "localized"`` the field multiplies the fixed covector ``direction`` and
    is added to the drift c; for ``kind == "conformal"`` (1 + h) scales the
    whole norm.
    """

    kind: str
    bumps: list
    direction: np.ndarray = None

    def __post_init__(self):
        if self.kind not in ("conformal", "localized"):
            raise ValidationError(f"unknown perturbation kind {self.kind!r}")
        cleaned = []
        for center, radius, amp in self.bumps:
            if radius <= 0:
                raise ValidationError("bump radius must be positive")
            cleaned.append((np.asarray(center, dtype=float), float(radius), float(amp)))
        self.bumps = cleaned
        if self.direction is not None:
            self.direction = np.asarray(self.direction, dtype=float)

    def eval(self, surface, q):
        q = np.asarray(q, dtype=float)
        h = np.zeros(q.shape[:-1])
        for center, radius, amp in self.bumps:
            d = chart_displacement(surface, q, center)
            r = np.sqrt(np.sum(d * d, axis=-1))
            h = h + amp * mollifier(r / radius)
        return h

    def grad(self, surface, q):
        q = np.asarray(q, dtype=float)
        g = np.zeros(q.shape)
        for center, radius, amp in self.bumps:
            d = chart_displacement(surface, q, center)
            r = np.sqrt(np.sum(d * d, axis=-1))
            safe = np.where(r > 1e-300, r, 1.0)
            coef = amp * mollifier_d1(r / radius) / (radius * safe)
            g = g + coef[..., None] * d
        return g

    def total_amplitude(self):
        return sum(abs(amp) for _, _, amp in self.bumps)

    def supports(self):
        """List of (center, radius) support discs."""
        return [(center, radius) for center, radius, _ in self.bumps]


class FinslerMetric:
    """A Finsler metric of chart-norm type on a :class:`SurfacePatch`.

    Construct through :func:`make_metric` or the family-specific helpers;
    the constructor validates family parameters and raises
    :class:`ValidationError` for inconsistent data (for example a Randers
    drift with |beta| >= 1).
    """

    def __init__(self, surface, family, *, beta=None, alpha=None, base=None,
                 perturbation=None, scale=1.0):
        self.surface = surface
        self.family = family
        self.base = base
        self.perturbation = perturbation
        self.scale = float(scale)
        self._speed_cache = None

        if family in ("euclidean", "flat"):
            pass
        elif family == "randers":
            self.beta = np.asarray(beta, dtype=float)
            if np.linalg.norm(self.beta) >= 1.0:
                raise ValidationError(
                    f"randers drift |beta| = {np.linalg.norm(self.beta):.3g} "
                    "must be < 1 for positivity"
                )
        elif family == "round":
            if surface.kind != "sphere":
                raise ValidationError("round metric needs a sphere surface")
        elif family == "katok":
            if surface.kind != "sphere":
                raise ValidationError("katok metric needs a sphere surface")
            self.alpha = float(alpha)
            if not 0.0 < self.alpha * surface.radius < 1.0:
                raise ValidationError(
                    f"katok parameter alpha*R = {self.alpha * surface.radius:.3g} "
                    "must lie in (0, 1)"
                )
        elif family == "conformal":
            if base is None or perturbation is None:
                raise ValidationError("conformal metric needs base and perturbation")
            if self.scale * perturbation.total_amplitude() >= 1.0:
                raise ValidationError(
                    "conformal factor can reach zero: total |amplitude| >= 1"
                )
        elif family == "localized":
            if base is None or perturbation is None or perturbation.direction is None:
                raise ValidationError(
                    "localized metric needs base, perturbation and direction"
                )
            self._validate_localized()
        else:
            raise ValidationError(f"unknown metric family {family!r}")

    def _validate_localized(self):
        """Check a - |c| stays positive on a sample grid over each bump."""
        for center, radius in self.perturbation.supports():
            ts = np.linspace(-1.0, 1.0, 11)
            gx, gy = np.meshgrid(ts, ts)
            pts = center + radius * np.stack([gx, gy], axis=-1).reshape(-1, 2)
            a, c = self.coeffs(pts)
            margin = a - np.linalg.norm(c, axis=-1)
            if np.min(margin) <= 0.0:
                raise ValidationError(
                    f"localized drift destroys positivity (margin "
                    f"{np.min(margin):.3g} at amplitude scale {self.scale:g})"
                )

    # -- chart-norm coefficients --------------------------------------

    def coeffs(self, q, chart=0):
        """Return (a, c) at q: a of shape (...,), c of shape (..., 2)."""
        q = np.asarray(q, dtype=float)
        fam = self.family
        if fam in ("euclidean", "flat"):
            return np.ones(q.shape[:-1]), np.zeros(q.shape)
        if fam == "randers":
            a = np.ones(q.shape[:-1])
            return a, np.broadcast_to(self.beta, q.shape).copy()
        if fam == "round":
            return self._lam(q), np.zeros(q.shape)
        if fam == "katok":
            lam = self._lam(q)
            c = np.empty_like(q)
            al2 = self.alpha * lam * lam
            c[..., 0] = -al2 * q[..., 1]
            c[..., 1] = al2 * q[..., 0]
            return lam, c
        if fam == "conformal":
            a0, c0 = self.base.coeffs(q, chart)
            h = self.scale * self._field_eval(q, chart)
            return (1.0 + h) * a0, (1.0 + h)[..., None] * c0
        if fam == "localized":
            a0, c0 = self.base.coeffs(q, chart)
            h = self.scale * self._field_eval(q, chart)
            return a0, c0 + h[..., None] * self.perturbation.direction
        raise AssertionError(fam)

    def coeff_grads(self, q, chart=0):
        """Return (grad a, Jacobian of c) with Jc[..., i, j] = dc_i/dq_j."""
        q = np.asarray(q, dtype=float)
        shp = q.shape[:-1]
        fam = self.family
        if fam in ("euclidean", "flat", "randers"):
            return np.zeros(q.shape), np.zeros(shp + (2, 2))
        if fam == "round":
            return self._lam_grad(q), np.zeros(shp + (2, 2))
        if fam == "katok":
            lam = self._lam(q)
            dlam = self._lam_grad(q)
            return dlam, self._katok_jc(q, lam, dlam)
        if fam == "conformal":
            a0, c0 = self.base.coeffs(q, chart)
            ga0, Jc0 = self.base.coeff_grads(q, chart)
            h = self.scale * self._field_eval(q, chart)
            gh = self.scale * self._field_grad(q, chart)
            ga = (1.0 + h)[..., None] * ga0 + a0[..., None] * gh
            Jc = (1.0 + h)[..., None, None] * Jc0 + c0[..., :, None] * gh[..., None, :]
            return ga, Jc
        if fam == "localized":
            ga0, Jc0 = self.base.coeff_grads(q, chart)
            gh = self.scale * self._field_grad(q, chart)
            u = self.perturbation.direction
            return ga0, Jc0 + u[:, None] * gh[..., None, :]
        raise AssertionError(fam)

    def _katok_jc(self, q, lam, dlam):
        """Jacobian of c = alpha lam^2 W, W = (-q2, q1), unrolled."""
        lam2 = lam * lam
        d20 = 2.0 * lam * dlam[..., 0]
        d21 = 2.0 * lam * dlam[..., 1]
        Jc = np.empty(q.shape[:-1] + (2, 2))
        Jc[..., 0, 0] = -self.alpha * q[..., 1] * d20
        Jc[..., 0, 1] = self.alpha * (-q[..., 1] * d21 - lam2)
        Jc[..., 1, 0] = self.alpha * (q[..., 0] * d20 + lam2)
        Jc[..., 1, 1] = self.alpha * q[..., 0] * d21
        return Jc

    def coeffs_and_grads(self, q, chart=0):
        """(a, c, grad a, Jc) with shared intermediates on the hot families."""
        q = np.asarray(q, dtype=float)
        fam = self.family
        if fam == "katok":
            lam = self._lam(q)
            dlam = self._lam_grad(q)
            c = np.empty_like(q)
            al2 = self.alpha * lam * lam
            c[..., 0] = -al2 * q[..., 1]
            c[..., 1] = al2 * q[..., 0]
            return lam, c, dlam, self._katok_jc(q, lam, dlam)
        if fam == "round":
            z = np.zeros(q.shape[:-1] + (2, 2))
            return self._lam(q), np.zeros(q.shape), self._lam_grad(q), z
        a, c = self.coeffs(q, chart)
        ga, Jc = self.coeff_grads(q, chart)
        return a, c, ga, Jc

    def _lam(self, q):
        R2 = self.surface.radius**2
        return 2.0 * R2 / (R2 + q[..., 0] * q[..., 0] + q[..., 1] * q[..., 1])

    def _lam_grad(self, q):
        R2 = self.surface.radius**2
        u = R2 + q[..., 0] * q[..., 0] + q[..., 1] * q[..., 1]
        return (-4.0 * R2 / (u * u))[..., None] * q

    def _field_eval(self, q, chart):
        if chart == 1 and self.surface.kind == "sphere":
            q = self.surface.transition(q)
        return self.perturbation.eval(self.surface, q)

    def _field_grad(self, q, chart):
        if chart == 1 and self.surface.kind == "sphere":
            q0 = self.surface.transition(q)
            g0 = self.perturbation.grad(self.surface, q0)
            J = self.surface.transition_jacobian(q)
            return np.einsum("...ji,...j->...i", J, g0)
        return self.perturbation.grad(self.surface, q)

    # -- norm, dual norm, Legendre maps -------------------------------

    @property
    def reversible(self):
        """True when phi(-v) = phi(v) identically (c = 0 families)."""
        if self.family in ("euclidean", "flat", "round"):
            return True
        if self.family == "conformal":
            return self.base.reversible
        return False

    def eval(self, q, v, chart=0):
        """phi(q, v) — positively homogeneous of degree 1 in v."""
        a, c = self.coeffs(q, chart)
        v = np.asarray(v, dtype=float)
        return a * np.linalg.norm(v, axis=-1) + np.sum(c * v, axis=-1)

    def dual(self, q, p, chart=0):
        """phi*(q, p) = max { p.v : phi(q, v) = 1 }, in closed form."""
        a, c = self.coeffs(q, chart)
        p = np.asarray(p, dtype=float)
        D = a * a - np.sum(c * c, axis=-1)
        w = np.sum(c * p, axis=-1)
        S = np.sqrt(D * np.sum(p * p, axis=-1) + w * w)
        # scaling t with p/t on the unit cosphere |p' - c| = a:
        # t^2 D + 2 t w - |p|^2 = 0, positive root.
        return (S - w) / D

    def dual_grad(self, q, p, chart=0):
        """Closed-form gradients (d phi*/d q, d phi*/d p), each (..., 2)."""
        _, dq, dp = self.dual_bundle(q, p, chart)
        return dq, dp

    def dual_bundle(self, q, p, chart=0):
        """(phi*, d phi*/dq, d phi*/dp) in one pass.

        This is the flow right-hand-side hot path, so the two-component
        contractions are unrolled instead of summed over an axis.
        """
        flat_c = self.family in ("euclidean", "flat", "randers")
        if flat_c:
            a, c = self.coeffs(q, chart)
        else:
            a, c, ga, Jc = self.coeffs_and_grads(q, chart)
        p = np.asarray(p, dtype=float)
        p0, p1 = p[..., 0], p[..., 1]
        c0, c1 = c[..., 0], c[..., 1]
        pp = p0 * p0 + p1 * p1
        D = a * a - (c0 * c0 + c1 * c1)
        w = c0 * p0 + c1 * p1
        S = np.sqrt(D * pp + w * w)
        val = (S - w) / D
        invS = 1.0 / S
        invD = 1.0 / D
        dp = np.empty_like(p)
        dp[..., 0] = ((D * p0 + w * c0) * invS - c0) * invD
        dp[..., 1] = ((D * p1 + w * c1) * invS - c1) * invD

        dq = np.empty_like(p)
        if flat_c:
            dq[...] = 0.0
            return val, dq, dp
        ga0, ga1 = ga[..., 0], ga[..., 1]
        J00, J01 = Jc[..., 0, 0], Jc[..., 0, 1]
        J10, J11 = Jc[..., 1, 0], Jc[..., 1, 1]
        Dk0 = 2.0 * (a * ga0 - (c0 * J00 + c1 * J10))
        Dk1 = 2.0 * (a * ga1 - (c0 * J01 + c1 * J11))
        wk0 = p0 * J00 + p1 * J10
        wk1 = p0 * J01 + p1 * J11
        Sk0 = (pp * Dk0 + 2.0 * w * wk0) * (0.5 * invS)
        Sk1 = (pp * Dk1 + 2.0 * w * wk1) * (0.5 * invS)
        dq[..., 0] = (Sk0 - wk0) * invD - val * Dk0 * invD
        dq[..., 1] = (Sk1 - wk1) * invD - val * Dk1 * invD
        return val, dq, dp

    def speed_bounds(self):
        """Sampled bounds (m, M) with m|v| <= phi(q, v) <= M|v| on the chart.

        m comes from min(a - |c|), M from max(a + |c|) over a fixed sample
        of the working region, widened by 5 percent to cover gaps between
        samples.  Used to prune homotopy candidates in distance queries.
        """
        if self._speed_cache is None:
            rng = np.random.default_rng(0)
            pts = _sample_points(self, 4000, rng)
            a, c = self.coeffs(pts)
            nc = np.hypot(c[..., 0], c[..., 1])
            self._speed_cache = (
                0.95 * float(np.min(a - nc)),
                1.05 * float(np.max(a + nc)),
            )
        return self._speed_cache

    def legendre(self, q, v, chart=0):
        """Unit covector of the direction v (any nonzero v)."""
        v = np.asarray(v, dtype=float)
        nv = np.linalg.norm(v, axis=-1)
        if np.any(nv == 0.0):
            raise ValidationError("legendre needs a nonzero vector")
        a, c = self.coeffs(q, chart)
        return a[..., None] * v / nv[..., None] + c

    def legendre_inverse(self, q, p, chart=0):
        """Unit vector v with legendre(v) = p/phi*(p); phi(v) = 1 exactly."""
        p = np.asarray(p, dtype=float)
        ps = self.dual(q, p, chart)
        if np.any(ps <= 0.0):
            raise ValidationError("legendre_inverse needs a nonzero covector")
        pu = p / ps[..., None]
        a, c = self.coeffs(q, chart)
        n = (pu - c) / a[..., None]
        return n / np.sum(pu * n, axis=-1)[..., None]

    def fiber_circle(self, q, chart=0):
        """The unit cosphere at q is the circle |p - center| = radius."""
        a, c = self.coeffs(q, chart)
        return c, a

    def fiber_point(self, q, theta, chart=0):
        """Unit covector c(q) + a(q) (cos theta, sin theta)."""
        c, a = self.fiber_circle(q, chart)
        n = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return c + np.asarray(a)[..., None] * n

    def vertical_hessian(self, q, v, chart=0):
        """Hessian of phi^2/2 in v (closed form), shape (..., 2, 2)."""
        v = np.asarray(v, dtype=float)
        a, c = self.coeffs(q, chart)
        nv = np.linalg.norm(v, axis=-1)
        vh = v / nv[..., None]
        ell = a[..., None] * vh + c
        phi = a * nv + np.sum(c * v, axis=-1)
        P = np.eye(2) - vh[..., :, None] * vh[..., None, :]
        return ell[..., :, None] * ell[..., None, :] \
            + (phi * a / nv)[..., None, None] * P

    # -- misc ----------------------------------------------------------

    def describe(self):
        """Short config-style string identifying the metric (for file headers)."""
        s = self.surface
        surf = {
            "plane": f"plane(chart_radius={s.chart_radius:g})",
            "torus": f"torus(periods=({s.periods[0]:g},{s.periods[1]:g}))",
            "sphere": f"sphere(radius={s.radius:g})",
        }[s.kind]
        if self.family == "randers":
            extra = f",beta=({self.beta[0]:.17g},{self.beta[1]:.17g})"
        elif self.family == "katok":
            extra = f",alpha={self.alpha:.17g}"
        elif self.family in ("conformal", "localized"):
            extra = f",base={self.base.describe()},scale={self.scale:.17g}"
        else:
            extra = ""
        return f"{self.family}[{surf}{extra}]"


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def make_metric(family, surface=None, **params):
    """Factory: build a metric of the given family with a default surface.

    Families and their parameters:

    - ``euclidean``: plane.
    - ``flat``: torus, ``periods``.
    - ``randers``: flat base with constant drift ``beta`` (plane or torus).
    - ``round``: sphere, ``radius``.
    - ``katok``: sphere, ``radius``, rotation coupling ``alpha``.
    """
    if family == "euclidean":
        surface = surface or SurfacePatch.plane()
        return FinslerMetric(surface, "euclidean")
    if family == "flat":
        surface = surface or SurfacePatch.torus(params.pop("periods", (1.0, 1.0)))
        return FinslerMetric(surface, "flat")
    if family == "randers":
        surface = surface or SurfacePatch.plane()
        return FinslerMetric(surface, "randers", beta=params["beta"])
    if family == "round":
        surface = surface or SurfacePatch.sphere(params.pop("radius", 1.0))
        return FinslerMetric(surface, "round")
    if family == "katok":
        surface = surface or SurfacePatch.sphere(params.pop("radius", 1.0))
        return FinslerMetric(surface, "katok", alpha=params["alpha"])
    raise ValidationError(f"unknown metric family {family!r}")


def eval_metric(metric, x, v, chart=0):
    """phi(x, v); raises DomainError outside the chart."""
    metric.surface.check_domain(np.asarray(x, dtype=float), chart)
    return metric.eval(x, v, chart)


def dual_norm(metric, x, p, chart=0, method="closed"):
    """phi*(x, p).

    ``method="closed"`` uses the Randers closed form; ``method="newton"``
    maximizes p.v over the unit circle by Newton iteration from 8 equally
    spaced fiber angles (the generic route; raises NumericError if no start
    converges).  The two agree to near rounding and are cross-checked in
    the test suite.
    """
    if method == "closed":
        return metric.dual(x, p, chart)
    if method != "newton":
        raise ValidationError(f"unknown dual_norm method {method!r}")

    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.ndim != 1:
        raise ValidationError("newton route evaluates one point at a time")

    def value(psi):
        u = np.stack([np.cos(psi), np.sin(psi)], axis=-1)
        phi = metric.eval(np.broadcast_to(x, u.shape), u, chart)
        return np.sum(p * u, axis=-1) / phi

    starts = np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False)
    best, converged = -np.inf, False
    h = 1e-6
    for psi in starts:
        for _ in range(60):
            g0 = value(np.array([psi - h, psi, psi + h]))
            d1 = (g0[2] - g0[0]) / (2.0 * h)
            d2 = (g0[2] - 2.0 * g0[1] + g0[0]) / (h * h)
            if d2 == 0.0:
                break
            step = d1 / d2
            psi -= step
            if abs(step) < 1e-12:
                break
        g0 = value(np.array([psi - h, psi, psi + h]))
        d1 = (g0[2] - g0[0]) / (2.0 * h)
        if abs(d1) < 1e-8 and (g0[2] - 2.0 * g0[1] + g0[0]) < 0.0:
            converged = True
            best = max(best, g0[1])
    if not converged:
        raise NumericError(
            "fiber maximization did not converge from any of 8 starts "
            f"(best value {best:.6g})"
        )
    return best


def legendre(metric, x, v, chart=0):
    """Unit covector of the direction v at x."""
    return metric.legendre(x, v, chart)


def legendre_inverse(metric, x, p, chart=0):
    """Unit vector whose covector is p/phi*(p); phi of the result is 1."""
    return metric.legendre_inverse(x, p, chart)


def unit_vector(metric, x, angle, chart=0):
    """phi-unit vector in the chart direction ``angle`` at x."""
    u = np.stack([np.cos(angle), np.sin(angle)], axis=-1)
    x, u = np.broadcast_arrays(np.asarray(x, dtype=float), u)
    phi = metric.eval(x, u, chart)
    return u / np.asarray(phi)[..., None]


def _sample_points(metric, n, rng):
    surf = metric.surface
    if surf.kind == "torus":
        L = np.asarray(surf.periods)
        return rng.random((n, 2)) * L
    if surf.kind == "plane":
        r_max = min(3.0, 0.5 * surf.chart_radius)
        r = r_max * np.sqrt(rng.random(n))
        th = 2.0 * np.pi * rng.random(n)
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    # sphere chart 0, biased to cover past the equator
    r = 2.0 * surf.radius * np.sqrt(rng.random(n))
    th = 2.0 * np.pi * rng.random(n)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def verify_metric(metric, n_samples=10000, seed=0):
    """Sampled verification report for a metric.

    Returns a dict with the worst positive-homogeneity defect, the
    positivity margin min(a - |c|), the smallest vertical-Hessian
    eigenvalue and the reversibility defect max |phi(-v)-phi(v)|/phi(v)
    over ``n_samples`` random (point, direction) pairs.
    """
    rng = np.random.default_rng(seed)
    q = _sample_points(metric, n_samples, rng)
    ang = 2.0 * np.pi * rng.random(n_samples)
    v = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    lam = 10.0 ** rng.uniform(-1.0, 1.0, n_samples)

    phi = metric.eval(q, v)
    phi_l = metric.eval(q, lam[:, None] * v)
    homog = np.max(np.abs(phi_l - lam * phi) / (lam * phi))

    a, c = metric.coeffs(q)
    margin = np.min(a - np.linalg.norm(c, axis=-1))

    H = metric.vertical_hessian(q, v)
    tr = H[..., 0, 0] + H[..., 1, 1]
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    disc = np.sqrt(np.maximum(tr * tr / 4.0 - det, 0.0))
    min_eig = np.min(tr / 2.0 - disc)

    rev = np.max(np.abs(metric.eval(q, -v) - phi) / phi)

    return {
        "family": metric.family,
        "n_samples": int(n_samples),
        "seed": int(seed),
        "homogeneity_defect": float(homog),
        "positivity_margin": float(margin),
        "min_hessian_eig": float(min_eig),
        "reversibility_defect": float(rev),
        "reversible": bool(metric.reversible),
    }


def conformal_perturb(metric, perturbation, scale=1.0):
    """Scale metric by (1 + scale*h) where h is the perturbation field.

    The result agrees with ``metric`` identically outside the union of the
    bump supports (the profiles are exactly compactly supported).
    """
    if perturbation.kind != "conformal":
        raise ValidationError("conformal_perturb needs a conformal perturbation")
    return FinslerMetric(metric.surface, "conformal", base=metric,
                         perturbation=perturbation, scale=scale)


def localized_perturb(metric, perturbation, scale=1.0):
    """Add the localized drift field h(q)*direction to the drift part c."""
    if perturbation.kind != "localized":
        raise ValidationError("localized_perturb needs a localized perturbation")
    return FinslerMetric(metric.surface, "localized", base=metric,
                         perturbation=perturbation, scale=scale)


_STENCILS = {
    0: (np.array([0]), np.array([1.0])),
    1: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2, -1, 1, 2]), np.array([-0.5, 1.0, -1.0, 0.5])),
    4: (np.array([-2, -1, 0, 1, 2]), np.array([1.0, -4.0, 6.0, -4.0, 1.0])),
}


def cr_distance(m1, m2, r=0, n_x=8, n_angle=12, step=0.02, box=None):
    """Sampled C^r distance between two metrics on the same surface.

    Maximum over a (point, unit-direction) grid of |phi_1 - phi_2| and of
    all mixed central-difference derivatives in (x, v) up to total order
    ``r`` (r <= 4).  Directions are phi_1-unit vectors.  The grid and the
    difference step are adjustable; accuracy is limited by the stencil
    truncation, which is fine for the tolerances this is used with.
    """
    if not 0 <= r <= 4:
        raise ValidationError("cr_distance supports 0 <= r <= 4")
    surf = m1.surface
    if box is None:
        if surf.kind == "torus":
            lo, hi = np.zeros(2), np.asarray(surf.periods)
        else:
            half = 2.0 if surf.kind != "plane" else min(2.0, 0.4 * surf.chart_radius)
            lo, hi = -half * np.ones(2), half * np.ones(2)
    else:
        lo, hi = np.asarray(box[0], dtype=float), np.asarray(box[1], dtype=float)

    xs = np.stack(np.meshgrid(
        np.linspace(lo[0], hi[0], n_x, endpoint=surf.kind != "torus"),
        np.linspace(lo[1], hi[1], n_x, endpoint=surf.kind != "torus"),
    ), axis=-1).reshape(-1, 2)
    angles = np.linspace(0.0, 2.0 * np.pi, n_angle, endpoint=False)

    # Base (x, v) samples: every grid point with every phi_1-unit direction.
    X = np.repeat(xs, n_angle, axis=0)
    V = unit_vector(m1, xs[:, None, :], angles[None, :]).reshape(-1, 2)

    def diff(x, v):
        return m2.eval(x, v) - m1.eval(x, v)

    worst = 0.0
    orders = [
        (k1, k2, k3, k4)
        for k1 in range(r + 1) for k2 in range(r + 1)
        for k3 in range(r + 1) for k4 in range(r + 1)
        if k1 + k2 + k3 + k4 <= r
    ]
    for k in orders:
        offs_axes, coef_axes = zip(*(_STENCILS[ki] for ki in k))
        val = np.zeros(X.shape[0])
        for o1, c1 in zip(offs_axes[0], coef_axes[0]):
            for o2, c2 in zip(offs_axes[1], coef_axes[1]):
                for o3, c3 in zip(offs_axes[2], coef_axes[2]):
                    for o4, c4 in zip(offs_axes[3], coef_axes[3]):
                        dx = np.array([o1, o2]) * step
                        dv = np.array([o3, o4]) * step
                        val += c1 * c2 * c3 * c4 * diff(X + dx, V + dv)
        val /= step ** sum(k)
        worst = max(worst, float(np.max(np.abs(val))))
    return worst
