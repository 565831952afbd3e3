"""Surface patches and chart bookkeeping.

Three kinds of surface are supported, each presented through explicit
planar charts so that all downstream numerics run in R^2 coordinates:

``plane``
    A single disc-like chart of finite radius.  Points outside the chart
    bound raise :class:`~finslerlab.errors.DomainError`.

``torus``
    The square torus R^2 / (L1 Z x L2 Z).  Integration happens in the
    universal cover; positions are reduced modulo the periods only for
    output, and lattice lifts are enumerated for multistart shooting.

``sphere``
    The round 2-sphere of radius R through two stereographic charts
    (projection from either pole onto the equatorial plane).  The chart
    transition is the involution tau(q) = R^2 q / |q|^2; covectors pull
    back through its (symmetric) Jacobian.  Flows switch chart once
    |q| > 1.5 R, arriving at |q'| < 0.67 R, so the switch cannot thrash.

Parameters
----------
Positions ``q`` and covectors ``p`` are numpy arrays of shape (..., 2);
all maps broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

__all__ = ["SurfacePatch", "PhasePoint"]

#: Chart-switch trigger radius, in units of the sphere radius.
SWITCH_OUT = 1.5


@dataclass(frozen=True)
class SurfacePatch:
    """A surface presented through one or two planar charts.

    Use the constructors :meth:`plane`, :meth:`torus` and :meth:`sphere`
    rather than calling the dataclass directly.
    """

    kind: str
    chart_radius: float = np.inf
    periods: tuple = (1.0, 1.0)
    radius: float = 1.0

    # -- constructors -------------------------------------------------

    @staticmethod
    def plane(chart_radius=10.0):
        if chart_radius <= 0:
            raise ValidationError("chart_radius must be positive")
        return SurfacePatch(kind="plane", chart_radius=float(chart_radius))

    @staticmethod
    def torus(periods=(1.0, 1.0)):
        periods = (float(periods[0]), float(periods[1]))
        if min(periods) <= 0:
            raise ValidationError("torus periods must be positive")
        return SurfacePatch(kind="torus", periods=periods)

    @staticmethod
    def sphere(radius=1.0):
        if radius <= 0:
            raise ValidationError("sphere radius must be positive")
        return SurfacePatch(kind="sphere", radius=float(radius))

    # -- chart structure ----------------------------------------------

    @property
    def n_charts(self):
        return 2 if self.kind == "sphere" else 1

    def check_domain(self, q, chart=0):
        """Raise :class:`DomainError` if any point lies outside the chart."""
        q = np.asarray(q, dtype=float)
        if self.kind == "plane":
            r = np.hypot(q[..., 0], q[..., 1])
            if np.any(r >= self.chart_radius):
                raise DomainError(
                    f"point at chart radius {float(np.max(r)):.3g} outside "
                    f"plane chart of radius {self.chart_radius:.3g}"
                )
        elif self.kind == "sphere":
            if chart not in (0, 1):
                raise DomainError(f"sphere has charts 0 and 1, got {chart}")
            # Each stereographic chart covers everything but one pole; we
            # bound it generously so runaway coordinates are caught.
            r = np.hypot(q[..., 0], q[..., 1])
            if np.any(r > 100.0 * self.radius):
                raise DomainError("stereographic coordinate blow-up; switch charts")
        # torus: universal cover, nothing to check

    def wrap(self, q):
        """Reduce positions to the fundamental cell (torus) or pass through."""
        q = np.asarray(q, dtype=float)
        if self.kind != "torus":
            return q
        L = np.asarray(self.periods)
        return q - np.floor(q / L) * L

    def lifts(self, q, span=1):
        """Lattice translates of ``q`` with offsets in [-span, span]^2 (torus).

        Returns an array of shape (n_lifts, ..., 2).  On other surfaces the
        single trivial lift is returned.
        """
        q = np.asarray(q, dtype=float)
        if self.kind != "torus":
            return q[None]
        L = np.asarray(self.periods)
        offs = [
            np.array([i * L[0], j * L[1]])
            for i in range(-span, span + 1)
            for j in range(-span, span + 1)
        ]
        return np.stack([q + o for o in offs])

    # -- sphere transition --------------------------------------------

    def transition(self, q):
        """Map stereographic coordinates to the opposite chart."""
        if self.kind != "sphere":
            raise ValidationError("transition is defined for the sphere only")
        q = np.asarray(q, dtype=float)
        r2 = np.sum(q * q, axis=-1, keepdims=True)
        return self.radius**2 * q / r2

    def transition_jacobian(self, q):
        """Jacobian of :meth:`transition`, shape (..., 2, 2) (symmetric)."""
        q = np.asarray(q, dtype=float)
        R2 = self.radius**2
        r2 = np.sum(q * q, axis=-1)
        eye = np.eye(2)
        outer = q[..., :, None] * q[..., None, :]
        return R2 / r2[..., None, None] * (eye - 2.0 * outer / r2[..., None, None])

    def push_covector(self, q_new, p):
        """Transport covector ``p`` to the chart in which ``q_new`` lives.

        If q' = tau(q) then p' = Dtau(q')^T p, because tau is an involution
        and the canonical 1-form p dq is chart-independent.
        """
        J = self.transition_jacobian(np.asarray(q_new, dtype=float))
        p = np.asarray(p, dtype=float)
        return np.einsum("...ji,...j->...i", J, p)

    def switch_radius(self):
        """Coordinate radius beyond which integration switches chart."""
        return SWITCH_OUT * self.radius

    # -- embeddings (diagnostics only) --------------------------------

    def embed(self, q, chart=0):
        """Embed chart points in R^3 (sphere) or R^2 x {0} for diagnostics."""
        q = np.asarray(q, dtype=float)
        if self.kind != "sphere":
            return np.concatenate([q, np.zeros_like(q[..., :1])], axis=-1)
        R = self.radius
        r2 = np.sum(q * q, axis=-1, keepdims=True)
        den = r2 + R**2
        xy = 2.0 * R**2 * q / den
        z = R * (r2 - R**2) / den
        if chart == 1:
            z = -z
        return np.concatenate([xy, z], axis=-1)


@dataclass
class PhasePoint:
    """A cotangent point (chart, q, p) on a surface patch."""

    q: np.ndarray
    p: np.ndarray
    chart: int = 0
    surface: SurfacePatch = field(default=None, repr=False)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.p = np.asarray(self.p, dtype=float).copy()

    def copy(self):
        return PhasePoint(self.q, self.p, self.chart, self.surface)

    def as_state(self):
        """Flatten to the 4-vector (q1, q2, p1, p2) used by the integrator."""
        return np.concatenate([self.q, self.p])

    @staticmethod
    def from_state(z, chart=0, surface=None):
        z = np.asarray(z, dtype=float)
        return PhasePoint(z[..., :2], z[..., 2:], chart, surface)
