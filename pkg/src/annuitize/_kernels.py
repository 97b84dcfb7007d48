"""Compiled inner loops of the Monte Carlo routines.

Stopping regions are passed as an integer code and a threshold:
0 everywhere, 1 below (x <= b), 2 above (x >= b), 3 only at zero, 4 never.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

REGION_CODES = {"everywhere": 0, "below": 1, "above": 2, "zero": 3, "never": 4}


@njit(cache=True, nogil=True)
def in_region(x, code, b):
    if code == 0:
        return True
    if code == 1:
        return x <= b
    if code == 2:
        return x >= b
    if code == 3:
        return x == 0.0
    return False


@njit(cache=True, nogil=True)
def eval_piecewise(x, bps, closed, offs, pows, coefs, scales):
    i = 0
    nb = bps.shape[0]
    while i < nb and (x > bps[i] or (x == bps[i] and not closed[i])):
        i += 1
    s = 0.0
    for j in range(offs[i], offs[i + 1]):
        p = pows[j]
        if p == 0.0:
            s += coefs[j]
        else:
            s += coefs[j] * (x / scales[j]) ** p
    return s


@njit(cache=True, nogil=True)
def value_chunk(idx, x, acc, alive, z, k0, final, code, b, delta, K, a, lin, r, dt,
                mu_dt, sd_dt, lam, use_extra, bps, closed, offs, pows, coefs, scales):
    """Advance the paths listed in ``idx`` through steps ``k0 .. k0 + m``.

    Row ``ii`` of ``z`` drives path ``idx[ii]``.  When ``final`` is set, a
    last stopping check is made at step ``k0 + m``.
    """
    m = z.shape[1]
    step_disc = math.exp(-r * dt)
    for ii in range(idx.shape[0]):
        i = idx[ii]
        xi = x[i]
        s = acc[i]
        disc = math.exp(-r * dt * k0)
        e0 = eval_piecewise(xi, bps, closed, offs, pows, coefs, scales) if use_extra else 0.0
        stopped = False
        for j in range(m):
            if in_region(xi, code, b):
                s += disc * delta * (xi - K)
                stopped = True
                break
            xn = xi * math.exp(mu_dt + sd_dt * z[ii, j])
            nxt = disc * step_disc
            s += disc * a * lin * xi
            if use_extra:
                e1 = eval_piecewise(xn, bps, closed, offs, pows, coefs, scales)
                s += 0.5 * dt * lam * (disc * e0 + nxt * e1)
                e0 = e1
            xi = xn
            disc = nxt
        if not stopped and final and in_region(xi, code, b):
            s += disc * delta * (xi - K)
            stopped = True
        x[i] = xi
        acc[i] = s
        if stopped:
            alive[i] = False


@njit(cache=True, nogil=True)
def crossing_chunk(idx, x, alive, stop_step, stop_state, xi_step, z, k0, final,
                   code_l, b_l, code_h, b_h, mu_dt, sd_dt):
    """First grid step at which wealth enters the active state's region.

    Row ``ii`` of ``z`` drives path ``idx[ii]``.  ``xi_step[i]`` is the first
    grid step on or after the shock time; ``stop_state`` records 0 for
    pre-shock and 1 for post-shock entry.
    """
    m = z.shape[1]
    for ii in range(idx.shape[0]):
        i = idx[ii]
        xv = x[i]
        for j in range(m + (1 if final else 0)):
            k = k0 + j
            post = k >= xi_step[i]
            hit = in_region(xv, code_h, b_h) if post else in_region(xv, code_l, b_l)
            if hit:
                alive[i] = False
                stop_step[i] = k
                stop_state[i] = 1 if post else 0
                break
            if j < m:
                xv = xv * math.exp(mu_dt + sd_dt * z[ii, j])
        x[i] = xv
