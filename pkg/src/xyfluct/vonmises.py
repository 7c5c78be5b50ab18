"""Exact von Mises draws by Best & Fisher's wrapped-Cauchy rejection."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .rng import CounterRNG, uniform_pair

# Below this concentration the envelope parameter is computed from its
# first-order expansion; the exact formula cancels catastrophically.
_SMALL_KAPPA = 1.2e-4
MAX_ATTEMPTS = 10_000


@njit(cache=True, inline="always")
def wrap_angle(x):
    """Representative of ``x`` in [-pi, pi)."""
    y = (x + math.pi) % (2.0 * math.pi) - math.pi
    if y >= math.pi:
        y -= 2.0 * math.pi
    return y


@njit(cache=True)
def vonmises_draw(mu, kappa, k0, k1, sweep, site):
    """One draw from density ∝ exp(kappa cos(x - mu)) on [-pi, pi).

    Uses counter slots 0, 1, 2, ... of ``(sweep, site)``; two slots per
    rejection attempt.
    """
    if kappa <= 0.0:
        u, _ = uniform_pair(k0, k1, sweep, site, 0)
        return -math.pi + 2.0 * math.pi * u
    if kappa > _SMALL_KAPPA:
        tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
        rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
        r = (1.0 + rho * rho) / (2.0 * rho)
    else:
        r = 1.0 / kappa
    slot = 0
    for _ in range(MAX_ATTEMPTS):
        u1, u2 = uniform_pair(k0, k1, sweep, site, slot)
        u3, _ = uniform_pair(k0, k1, sweep, site, slot + 1)
        slot += 2
        z = math.cos(math.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        v = 1.0 - u2  # in (0, 1]
        if c * (2.0 - c) - v > 0.0 or math.log(c / v) + 1.0 - c >= 0.0:
            f = min(1.0, max(-1.0, f))
            ang = math.acos(f)
            if u3 < 0.5:
                ang = -ang
            return wrap_angle(mu + ang)
    return wrap_angle(mu)  # unreachable in practice: acceptance rate exceeds 0.65


@njit(cache=True)
def _draw_many(mu, kappa, k0, k1, block, out):
    for i in range(out.size):
        out[i] = vonmises_draw(mu, kappa, k0, k1, block, i)


def sample_vonmises(mu: float, kappa: float, size: int, rng: CounterRNG) -> np.ndarray:
    """``size`` i.i.d. von Mises(mu, kappa) draws from a counter stream."""
    out = np.empty(int(size))
    _draw_many(float(mu), float(kappa), rng.key[0], rng.key[1], rng._next_block(), out)
    return out
