"""Conservative finite-difference operators on the cell-centered grid.

Zero-flux boundaries are exact: ghost cells copy the adjacent interior value,
so boundary faces carry no diffusive and no chemotactic flux.
"""
from __future__ import annotations

import numpy as np

from ..core import GridDomain


def _spacing(domain) -> tuple:
    if isinstance(domain, GridDomain):
        return domain.spacing
    return tuple(float(h) for h in np.atleast_1d(domain))


def laplacian_neumann(f: np.ndarray, domain) -> np.ndarray:
    """Second-order 3-point (1D) / 5-point (2D) Laplacian with reflected ghosts."""
    f = np.asarray(f, dtype=np.float64)
    out = np.zeros_like(f)
    for axis, h in enumerate(_spacing(domain)):
        pad = [(0, 0)] * f.ndim
        pad[axis] = (1, 1)
        g = np.pad(f, pad, mode="edge")
        n = f.shape[axis]
        left = np.take(g, np.arange(0, n), axis=axis)
        right = np.take(g, np.arange(2, n + 2), axis=axis)
        out += (left - 2.0 * f + right) / (h * h)
    return out


def face_gradients(f: np.ndarray, domain) -> list:
    """Interior-face normal derivatives, one array per axis (``N_k - 1`` faces along axis k)."""
    f = np.asarray(f, dtype=np.float64)
    return [np.diff(f, axis=axis) / h for axis, h in enumerate(_spacing(domain))]


def chemotaxis_divergence(u: np.ndarray, v: np.ndarray, domain, chi: float) -> np.ndarray:
    """``-chi div(u grad v)`` in upwind flux form.

    Face velocity is ``w = chi (v_R - v_L) / h``; the advected density is taken
    from the cell the flow leaves.  Boundary faces carry zero flux.
    """
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    if chi == 0.0:
        return out
    for axis, (g, h) in enumerate(zip(face_gradients(v, domain), _spacing(domain))):
        w = chi * g
        n = u.shape[axis]
        u_left = np.take(u, np.arange(0, n - 1), axis=axis)
        u_right = np.take(u, np.arange(1, n), axis=axis)
        flux = w * np.where(w > 0, u_left, u_right)
        pad = [(0, 0)] * u.ndim
        pad[axis] = (1, 1)
        flux = np.pad(flux, pad, mode="constant")
        out -= np.diff(flux, axis=axis) / h
    return out


def nonlocal_mass(u: np.ndarray, domain: GridDomain) -> float:
    """Midpoint-rule approximation of the integral of ``u`` over the domain."""
    return float(np.sum(u) * domain.cell_volume)


def max_face_speed(v: np.ndarray, domain, chi: float) -> list:
    return [float(np.max(np.abs(chi * g))) if g.size else 0.0 for g in face_gradients(v, domain)]
