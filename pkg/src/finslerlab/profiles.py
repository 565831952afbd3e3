"""Compactly supported smooth profiles.

Every perturbation in the package is localized through one of the two
radial profiles defined here.  Both are C-infinity, supported exactly on
[-1, 1] (bit-exact zero outside, so perturbed objects agree with their
base *identically* away from the support), and have closed-form first and
second derivatives, which the flow and the symplectic bump machinery need.

``mollifier``
    The classical exp(-1/(1-u^2)) bump, normalized to peak value 1.

``plateau``
    Identically 1 on [-u0, u0] and joined to 0 by a smoothstep.  Used as
    the default bump profile: the flat top makes displacement amplitudes
    exactly computable along the transport segment.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "mollifier",
    "mollifier_d1",
    "mollifier_d2",
    "smoothstep",
    "smoothstep_d1",
    "plateau",
    "plateau_d1",
    "plateau_d2",
    "plateau_mass",
    "PLATEAU_TOP",
]

#: Fraction of the support radius over which the plateau profile is flat.
PLATEAU_TOP = 0.5


def _with_support(u, inner):
    """Evaluate ``inner`` on |u| < 1 and return exact zeros elsewhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    mask = np.abs(u) < 1.0
    if np.any(mask):
        out[mask] = inner(u[mask])
    return out if out.ndim else float(out)


def mollifier(u):
    """exp(1 - 1/(1-u^2)) on (-1, 1), zero outside; peak value 1 at u = 0."""
    return _with_support(u, lambda x: np.exp(1.0 - 1.0 / (1.0 - x * x)))


def mollifier_d1(u):
    """First derivative of :func:`mollifier`."""

    def inner(x):
        w = 1.0 / (1.0 - x * x)
        return np.exp(1.0 - w) * (-2.0 * x * w * w)

    return _with_support(u, inner)


def mollifier_d2(u):
    """Second derivative of :func:`mollifier`."""

    def inner(x):
        w = 1.0 / (1.0 - x * x)
        rho = np.exp(1.0 - w)
        # d/dx (-2 x w^2) = -2 w^2 - 8 x^2 w^3 ; chain the exp factor.
        return rho * ((2.0 * x * w * w) ** 2 - 2.0 * w * w - 8.0 * x * x * w**3)

    return _with_support(u, inner)


def _f(t):
    out = np.zeros_like(t)
    pos = t > 0.0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _fp(t):
    out = np.zeros_like(t)
    pos = t > 0.0
    tp = t[pos]
    out[pos] = np.exp(-1.0 / tp) / (tp * tp)
    return out


def _fpp(t):
    out = np.zeros_like(t)
    pos = t > 0.0
    tp = t[pos]
    out[pos] = np.exp(-1.0 / tp) * (1.0 / tp**4 - 2.0 / tp**3)
    return out


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, strictly increasing between."""
    t = np.asarray(t, dtype=float)
    num = _f(np.clip(t, 0.0, 1.0))
    den = num + _f(1.0 - np.clip(t, 0.0, 1.0))
    out = num / den
    return out if out.ndim else float(out)


def smoothstep_d1(t):
    """Derivative of :func:`smoothstep` (zero outside (0, 1))."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    f1, f2 = _f(tc), _f(1.0 - tc)
    g = f1 + f2
    out = (_fp(tc) * f2 + f1 * _fp(1.0 - tc)) / (g * g)
    out = np.where((t > 0.0) & (t < 1.0), out, 0.0)
    return out if out.ndim else float(out)


def _smoothstep_d2(t):
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, 0.0, 1.0)
    f1, f2 = _f(tc), _f(1.0 - tc)
    g = f1 + f2
    n = _fp(tc) * f2 + f1 * _fp(1.0 - tc)
    npr = _fpp(tc) * f2 - f1 * _fpp(1.0 - tc)
    gp = _fp(tc) - _fp(1.0 - tc)
    out = npr / (g * g) - 2.0 * n * gp / (g**3)
    out = np.where((t > 0.0) & (t < 1.0), out, 0.0)
    return out if out.ndim else float(out)


def plateau(u, top=PLATEAU_TOP):
    """Plateau profile: 1 on [-top, top], smoothstep down to 0 at |u| = 1."""
    u = np.abs(np.asarray(u, dtype=float))
    out = smoothstep((1.0 - u) / (1.0 - top))
    out = np.where(u <= top, 1.0, out)
    out = np.where(u >= 1.0, 0.0, out)
    return out if np.ndim(out) else float(out)


def plateau_d1(u, top=PLATEAU_TOP):
    """d/du of :func:`plateau` (odd; zero on the flat top and outside)."""
    ua = np.asarray(u, dtype=float)
    au = np.abs(ua)
    scale = -1.0 / (1.0 - top)
    out = smoothstep_d1((1.0 - au) / (1.0 - top)) * scale * np.sign(ua)
    out = np.where((au <= top) | (au >= 1.0), 0.0, out)
    return out if np.ndim(out) else float(out)


def plateau_d2(u, top=PLATEAU_TOP):
    """Second derivative of :func:`plateau`."""
    ua = np.asarray(u, dtype=float)
    au = np.abs(ua)
    scale = 1.0 / (1.0 - top) ** 2
    out = _smoothstep_d2((1.0 - au) / (1.0 - top)) * scale
    out = np.where((au <= top) | (au >= 1.0), 0.0, out)
    return out if np.ndim(out) else float(out)


def plateau_mass(top=PLATEAU_TOP):
    """Exact value of the half-line integral of the plateau profile.

    The smoothstep satisfies S(t) + S(1-t) = 1, so its integral over [0, 1]
    is exactly 1/2 and the profile mass is top + (1-top)/2.
    """
    return top + 0.5 * (1.0 - top)
