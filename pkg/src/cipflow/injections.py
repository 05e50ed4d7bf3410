"""Current injections of generators/loads and their derivatives.

All functions broadcast over numpy arrays, so the solvers evaluate every bus
in one call while tests can pass plain floats.  Derivatives are the exact
analytic partials of the injection formulas below.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import DegenerateVoltageError, PvAngleOverflowError

MIN_VSQ = 1e-8


class NetInjection(NamedTuple):
    p_s: float
    q_s: float


class RectVoltage(NamedTuple):
    vx: float
    vy: float


class RectCurrent(NamedTuple):
    ix: float
    iy: float


class PvTerms(NamedTuple):
    """Partials of a PV bus current: a=dIx/dQ, b=dIx/dVy, c=dIy/dQ, d=dIy/dVy."""

    a: float
    b: float
    c: float
    d: float


def net_power(generators=(), loads=()) -> NetInjection:
    p = sum(g.p_g for g in generators) - sum(ld.p_l for ld in loads)
    q = sum(g.q_g for g in generators) - sum(ld.q_l for ld in loads)
    return NetInjection(float(p), float(q))


def _vsq(vx, vy):
    m = np.asarray(vx) ** 2 + np.asarray(vy) ** 2
    if np.any(m <= MIN_VSQ):
        raise DegenerateVoltageError("bus voltage magnitude collapsed to ~0")
    return m


def injection_current(s: NetInjection, v: RectVoltage) -> RectCurrent:
    """I = conj(S / V) in rectangular components."""
    p, q = s
    vx, vy = v
    m = _vsq(vx, vy)
    return RectCurrent((p * vx + q * vy) / m, (p * vy - q * vx) / m)


def injection_jacobian(s: NetInjection, v: RectVoltage) -> np.ndarray:
    """d(ix, iy)/d(vx, vy); shape ``(..., 2, 2)``."""
    p, q = s
    vx, vy = np.asarray(v[0], dtype=float), np.asarray(v[1], dtype=float)
    m2 = _vsq(vx, vy) ** 2
    diff = vx * vx - vy * vy
    cross = 2.0 * vx * vy
    dxx = (-p * diff - q * cross) / m2
    dxy = (q * diff - p * cross) / m2
    out = np.empty(np.broadcast(dxx, dxy).shape + (2, 2))
    out[..., 0, 0] = dxx
    out[..., 0, 1] = dxy
    out[..., 1, 0] = dxy
    out[..., 1, 1] = -dxx
    return out


def pv_vx(v_t, vy):
    """Real voltage component of a bus held at magnitude ``v_t``."""
    rad = np.asarray(v_t, dtype=float) ** 2 - np.asarray(vy, dtype=float) ** 2
    if np.any(rad <= 0.0):
        raise PvAngleOverflowError("|Vy| reached the PV target magnitude")
    out = np.sqrt(rad)
    return float(out) if out.ndim == 0 else out


def pv_injection_current(s: NetInjection, v_t, vy) -> RectCurrent:
    p, q = s
    vx = pv_vx(v_t, vy)
    m = np.asarray(v_t, dtype=float) ** 2
    return RectCurrent((p * vx + q * vy) / m, (p * vy - q * vx) / m)


def pv_update_terms(s: NetInjection, v_t, vy) -> PvTerms:
    """Partials of :func:`pv_injection_current` w.r.t. (Q_s, V_y) at fixed P_s, V_t."""
    p, q = s
    vx = pv_vx(v_t, vy)
    m = np.asarray(v_t, dtype=float) ** 2
    dvx = -np.asarray(vy) / vx
    return PvTerms(
        a=vy / m,
        b=(p * dvx + q) / m,
        c=-vx / m,
        d=(p - q * dvx) / m,
    )


def shunt_current(b_sh, v: RectVoltage) -> RectCurrent:
    """Current through a shunt susceptance, I = jB V."""
    vx, vy = v
    return RectCurrent(-b_sh * vy, b_sh * vx)
