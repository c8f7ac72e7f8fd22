"""Quintic smoothstep cutoffs and their derivatives."""

from __future__ import annotations

from math import comb

import numpy as np


def smoothstep(u, order: int = 0):
    """C^2 quintic ramp: 0 for u <= 0, 1 for u >= 1, and its derivatives."""
    u = np.asarray(u, dtype=float)
    c = np.clip(u, 0.0, 1.0)
    inside = (u > 0.0) & (u < 1.0)
    if order == 0:
        return c**3 * (10.0 - 15.0 * c + 6.0 * c * c)
    if order == 1:
        val = 30.0 * c**2 * (1.0 - c) ** 2
    elif order == 2:
        val = 60.0 * c * (1.0 - c) * (1.0 - 2.0 * c)
    elif order == 3:
        val = 60.0 * (1.0 - 6.0 * c + 6.0 * c * c)
    elif order in (4, 5):
        val = 360.0 * (2.0 * c - 1.0) if order == 4 else np.full(c.shape, 720.0)
    else:
        val = np.zeros(c.shape)
    return np.where(inside, val, 0.0)


def plateau(r, inner: float, outer: float, order: int = 0):
    """Radial cutoff equal to 1 on [0, inner] and 0 beyond outer."""
    width = outer - inner
    u = (outer - np.asarray(r, dtype=float)) / width
    return smoothstep(u, order) * (-1.0 / width) ** order


def bump(t, center: float, half_width: float, order: int = 0):
    """Compactly supported C^2 bump on (center - half_width, center + half_width)."""
    t = np.asarray(t, dtype=float)
    h = half_width
    left = smoothstep((t - center + h) / (0.5 * h), order) * (2.0 / h) ** order
    right = smoothstep((center + h - t) / (0.5 * h), order) * (-2.0 / h) ** order
    if order == 0:
        return left * right
    out = np.zeros(t.shape)
    for k in range(order + 1):
        out += comb(order, k) * (smoothstep((t - center + h) / (0.5 * h), k) * (2.0 / h) ** k
                                 * smoothstep((center + h - t) / (0.5 * h), order - k) * (-2.0 / h) ** (order - k))
    return out


def _psi(u, order):
    u = np.asarray(u, dtype=float)
    pos = u > 0
    us = np.where(pos, u, 1.0)
    e = np.where(pos, np.exp(-1.0 / us), 0.0)
    if order == 0:
        return e
    if order == 1:
        return e / us**2
    return e * (1.0 - 2.0 * us) / us**4


def smooth_step(u, order: int = 0):
    """C-infinity ramp built from exp(-1/u); derivatives up to order 2."""
    if order > 2:
        raise ValueError("smooth_step derivatives are available up to order 2")
    u = np.asarray(u, dtype=float)
    A, A1, A2 = (_psi(u, k) for k in range(3))
    B, B1, B2 = (_psi(1.0 - u, k) for k in range(3))
    D = A + B
    D1 = A1 - B1
    D2 = A2 + B2
    if order == 0:
        return A / D
    q1 = (A1 * D - A * D1) / D**2
    if order == 1:
        return q1
    return (A2 * D - A * D2) / D**2 - 2.0 * D1 * q1 / D


def smooth_plateau(r, inner: float, outer: float, order: int = 0):
    """C-infinity radial cutoff equal to 1 on [0, inner] and 0 beyond outer."""
    width = outer - inner
    u = (outer - np.asarray(r, dtype=float)) / width
    return smooth_step(u, order) * (-1.0 / width) ** order
