"""Compiled path kernels for the refracted diffusion.

Random numbers come from a counter-based SplitMix64 stream keyed by
(seed, path index), turned into normals with a 256-layer ziggurat, so a
path's noise never depends on how paths are split across workers.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, uint64, int64

EULER = 0
PIECEWISE = 1

RUN_NONE = 0
RUN_DIVIDENDS = 1
RUN_STATE = 2

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_PATH_SALT = uint64(0xD1B54A32D192ED03)
_BRIDGE_SALT = uint64(0x8CB92BA72F3D8DD7)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


def _ziggurat_tables(layers: int = 256) -> tuple[np.ndarray, np.ndarray]:
    # Marsaglia & Tsang constants for 256 layers
    r = 3.6541528853610088
    v = 0.00492867323399
    x = np.zeros(layers + 1)
    x[0] = v / math.exp(-0.5 * r * r)
    x[1] = r
    for i in range(2, layers):
        x[i] = math.sqrt(-2.0 * math.log(v / x[i - 1] + math.exp(-0.5 * x[i - 1] ** 2)))
    return x, np.exp(-0.5 * x * x)


ZIG_X, ZIG_F = _ziggurat_tables()
_ZIG_R = ZIG_X[1]


@njit(inline="always")
def _mix(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(inline="always")
def path_key(seed, path):
    return _mix(uint64(seed) ^ _mix(uint64(path) * _PATH_SALT + _GOLDEN))


@njit(inline="always")
def _unit(ctr):
    ctr += _GOLDEN
    return (_mix(ctr) >> uint64(11)) * _TO_UNIT, ctr


@njit(inline="always")
def std_normal(ctr):
    """One N(0, 1) draw; returns (value, advanced counter)."""
    while True:
        ctr += _GOLDEN
        u = _mix(ctr)
        idx = int64(u & uint64(255))
        negative = (u >> uint64(8)) & uint64(1)
        x = (u >> uint64(11)) * _TO_UNIT * ZIG_X[idx]
        if x < ZIG_X[idx + 1]:
            break
        if idx == 0:
            while True:
                a, ctr = _unit(ctr)
                c, ctr = _unit(ctr)
                xx = -math.log(1.0 - a) / _ZIG_R
                yy = -math.log(1.0 - c)
                if 2.0 * yy > xx * xx:
                    break
            x = _ZIG_R + xx
            break
        w, ctr = _unit(ctr)
        if ZIG_F[idx + 1] + w * (ZIG_F[idx] - ZIG_F[idx + 1]) < math.exp(-0.5 * x * x):
            break
    if negative:
        x = -x
    return x, ctr


@njit
def normals(seed, path, n):
    out = np.empty(n)
    ctr = path_key(seed, path)
    for i in range(n):
        out[i], ctr = std_normal(ctr)
    return out


@njit(inline="always")
def _bridge_crossed(d0, d1, inv_var, bkey, n):
    # P(Brownian bridge from d0 to d1 touches 0) = exp(-2 d0 d1 / (sigma^2 h))
    arg = d0 * d1 * inv_var
    if arg > 40.0:
        return False
    u = (_mix(bkey + uint64(n) * _GOLDEN) >> uint64(11)) * _TO_UNIT
    return u < math.exp(-arg)


@njit(inline="always")
def _ex(r, s):
    # int_0^s e^{-r u} du
    if r == 0.0:
        return s
    return -math.expm1(-r * s) / r


@njit(inline="always")
def _ex1(r, s):
    # int_0^s u e^{-r u} du
    if r == 0.0:
        return 0.5 * s * s
    return (1.0 - math.exp(-r * s) * (1.0 + r * s)) / (r * r)


@njit
def _flow_general(y, h, mu, k, b, q, running):
    """Frozen-noise flow dy = (mu - k y 1{y > b}) ds over [0, h].

    Returns the end state and int_0^h e^{-q s} rate(s) ds, where rate is the
    dividend rate (running == 1) or the state (running == 2). When the OU
    level mu/k sits below b the flow slides along b with payout rate mu.
    """
    t = 0.0
    acc = 0.0
    while True:
        rem = h - t
        if rem <= 0.0:
            return y, acc
        disc = math.exp(-q * t)
        if k > 0.0 and y > b:
            m = mu / k
            s = rem
            hit = False
            if m < b:
                s_hit = math.log((y - m) / (b - m)) / k
                if s_hit < rem:
                    s = s_hit
                    hit = True
            if running != RUN_NONE:
                part = m * _ex(q, s) + (y - m) * _ex(q + k, s)
                acc += disc * (k * part if running == RUN_DIVIDENDS else part)
            t += s
            if not hit:
                return m + (y - m) * math.exp(-k * s), acc
            y = b
            if mu > 0.0:
                rem = h - t
                if running == RUN_DIVIDENDS:
                    acc += math.exp(-q * t) * mu * _ex(q, rem)
                elif running == RUN_STATE:
                    acc += math.exp(-q * t) * b * _ex(q, rem)
                return b, acc
            # mu <= 0: the lower branch takes over from y == b
        else:
            s = rem
            crossing = False
            if k > 0.0 and mu > 0.0 and y + mu * rem > b:
                s = (b - y) / mu
                crossing = True
            if running == RUN_STATE:
                acc += disc * (y * _ex(q, s) + mu * _ex1(q, s))
            t += s
            if not crossing:
                return y + mu * s, acc
            m = mu / k
            rem = h - t
            disc = math.exp(-q * t)
            if m >= b:
                if running != RUN_NONE:
                    part = m * _ex(q, rem) + (b - m) * _ex(q + k, rem)
                    acc += disc * (k * part if running == RUN_DIVIDENDS else part)
                return m + (b - m) * math.exp(-k * rem), acc
            if running == RUN_DIVIDENDS:
                acc += disc * mu * _ex(q, rem)
            elif running == RUN_STATE:
                acc += disc * b * _ex(q, rem)
            return b, acc


@njit(inline="always")
def _rate(x, k, b, running):
    if running == RUN_DIVIDENDS:
        return k * x if x > b else 0.0
    if running == RUN_STATE:
        return x
    return 0.0


@njit(nogil=True, cache=True)
def estimate_paths(out, first, seed, scheme, x0, mu, sigma, k, b, q, h, nsteps,
                   lo, lo_pays, hi, hi_pays, running, bridge):
    """Per-path discounted payoff for paths first .. first + len(out) - 1."""
    sq = sigma * math.sqrt(h)
    decay = math.exp(-q * h)
    inv_var = 2.0 / (sigma * sigma * h)
    ekh = math.exp(-k * h)
    e_q = _ex(q, h)
    e_qk = _ex(q + k, h)
    e1_q = _ex1(q, h)
    lo_on = lo > -np.inf
    hi_on = hi < np.inf
    for j in range(out.shape[0]):
        pid = first + j
        ctr = path_key(seed, pid)
        bkey = _mix(ctr ^ _BRIDGE_SALT)
        x = x0
        if lo_on and x <= lo:
            out[j] = 1.0 if lo_pays else 0.0
            continue
        if hi_on and x >= hi:
            out[j] = 1.0 if hi_pays else 0.0
            continue
        disc = 1.0
        acc = 0.0
        f_prev = _rate(x, k, b, running)
        for n in range(nsteps):
            z, ctr = std_normal(ctr)
            integ = 0.0
            if scheme == EULER:
                drift = mu - k * x if x > b else mu
                xn = x + drift * h + sq * z
            else:
                # fast paths cover a cell spent in one regime
                if k > 0.0 and x > b and mu >= k * b:
                    m = mu / k
                    y_end = m + (x - m) * ekh
                    if running == RUN_DIVIDENDS:
                        integ = k * (m * e_q + (x - m) * e_qk)
                    elif running == RUN_STATE:
                        integ = m * e_q + (x - m) * e_qk
                elif (x <= b or k == 0.0) and (k == 0.0 or mu <= 0.0 or x + mu * h <= b):
                    y_end = x + mu * h
                    if running == RUN_STATE:
                        integ = x * e_q + mu * e1_q
                else:
                    y_end, integ = _flow_general(x, h, mu, k, b, q, running)
                xn = y_end + sq * z
                if (lo_on and y_end <= lo) or (hi_on and y_end >= hi):
                    xn = y_end
            disc_next = disc * decay
            stop = 0
            if lo_on and (xn <= lo or (bridge and _bridge_crossed(x - lo, xn - lo, inv_var, bkey, n))):
                stop = 1
            elif hi_on and (xn >= hi or (bridge and _bridge_crossed(hi - x, hi - xn, inv_var, bkey, n))):
                stop = 2
            if running != RUN_NONE:
                if scheme == EULER:
                    f_next = 0.0 if stop == 1 else disc_next * _rate(xn, k, b, running)
                    acc += 0.5 * h * (f_prev + f_next)
                    f_prev = f_next
                else:
                    acc += disc * integ
            if stop == 1:
                if lo_pays:
                    acc += disc_next
                break
            if stop == 2:
                if hi_pays:
                    acc += disc_next
                break
            x = xn
            disc = disc_next
        out[j] = acc


@njit(cache=True)
def record_path(seed, path, scheme, x0, mu, sigma, k, b, h, nsteps, stop_kind, level):
    """States on the time grid until the stop rule fires.

    stop_kind: 0 horizon only, 1 ruin (state < 0), 2 crossing of ``level``.
    """
    states = np.empty(nsteps + 1)
    states[0] = x0
    sq = sigma * math.sqrt(h)
    ctr = path_key(seed, path)
    x = x0
    side = x0 >= level
    used = nsteps + 1
    for n in range(nsteps):
        z, ctr = std_normal(ctr)
        if scheme == EULER:
            drift = mu - k * x if x > b else mu
            x = x + drift * h + sq * z
        else:
            y_end, _ = _flow_general(x, h, mu, k, b, 0.0, RUN_NONE)
            x = y_end + sq * z
        states[n + 1] = x
        if stop_kind == 1 and x < 0.0:
            used = n + 2
            break
        if stop_kind == 2 and (x >= level) != side:
            used = n + 2
            break
    return states[:used]


@njit(inline="always")
def _advance(x, h, mu, k, b, sq, z, scheme):
    if scheme == EULER:
        drift = mu - k * x if x > b else mu
        return x + drift * h + sq * z
    y_end, _ = _flow_general(x, h, mu, k, b, 0.0, RUN_NONE)
    return y_end + sq * z


@njit(nogil=True, cache=True)
def coupled_sup_distances(dist, cross, first, seed, scheme, x0, mu, sigma, k, b,
                          h_ref, n_ref, ratios):
    """Sup over coarse nodes of |U^mesh - U^ref| for coupled noise.

    ``ratios[i]`` is the number of reference steps per coarse step of mesh i.
    ``cross[j, i]`` holds the sup distance between the two schemes run on the
    same coarse increments.
    """
    n_mesh = ratios.shape[0]
    ref = np.empty(n_ref + 1)
    other = EULER if scheme == PIECEWISE else PIECEWISE
    for j in range(dist.shape[0]):
        z = normals(seed, first + j, n_ref)
        sq = sigma * math.sqrt(h_ref)
        x = x0
        ref[0] = x
        for n in range(n_ref):
            x = _advance(x, h_ref, mu, k, b, sq, z[n], scheme)
            ref[n + 1] = x
        for i in range(n_mesh):
            r = ratios[i]
            h = h_ref * r
            sq_c = sigma * math.sqrt(h)
            scale = 1.0 / math.sqrt(r)
            xa = x0
            xb = x0
            worst = 0.0
            worst_cross = 0.0
            for n in range(n_ref // r):
                zc = 0.0
                for s in range(n * r, (n + 1) * r):
                    zc += z[s]
                zc *= scale
                xa = _advance(xa, h, mu, k, b, sq_c, zc, scheme)
                xb = _advance(xb, h, mu, k, b, sq_c, zc, other)
                d = abs(xa - ref[(n + 1) * r])
                if d > worst:
                    worst = d
                d = abs(xa - xb)
                if d > worst_cross:
                    worst_cross = d
            dist[j, i] = worst
            cross[j, i] = worst_cross


@njit(inline="always")
def _ou_lane(x, f_prev, acc, z, disc, disc_next, scheme, mu, k, h, sq, m, ekh, e_q, e_qk):
    if scheme == EULER:
        xn = x + (mu - k * x) * h + sq * z
        f_next = disc_next * xn
        return xn, f_next, acc + 0.5 * h * (f_prev + f_next)
    integ = m * e_q + (x - m) * e_qk
    return m + (x - m) * ekh + sq * z, f_prev, acc + disc * integ


@njit(nogil=True, cache=True)
def ou_state_paths(out, first, seed, scheme, x0, mu, sigma, k, q, h, nsteps):
    """int_0^T e^{-qt} U_t dt for the unbarriered OU (k > 0), four paths at a
    time so independent dependency chains overlap. Same arithmetic as
    ``estimate_paths`` with b = -inf and no barriers."""
    sq = sigma * math.sqrt(h)
    decay = math.exp(-q * h)
    ekh = math.exp(-k * h)
    e_q = _ex(q, h)
    e_qk = _ex(q + k, h)
    m = mu / k
    n_out = out.shape[0]
    full = n_out - n_out % 4
    for j in range(0, full, 4):
        c0 = path_key(seed, first + j)
        c1 = path_key(seed, first + j + 1)
        c2 = path_key(seed, first + j + 2)
        c3 = path_key(seed, first + j + 3)
        x_0 = x0
        x_1 = x0
        x_2 = x0
        x_3 = x0
        f_0 = x0
        f_1 = x0
        f_2 = x0
        f_3 = x0
        a_0 = 0.0
        a_1 = 0.0
        a_2 = 0.0
        a_3 = 0.0
        disc = 1.0
        for n in range(nsteps):
            z0, c0 = std_normal(c0)
            z1, c1 = std_normal(c1)
            z2, c2 = std_normal(c2)
            z3, c3 = std_normal(c3)
            dn = disc * decay
            x_0, f_0, a_0 = _ou_lane(x_0, f_0, a_0, z0, disc, dn, scheme, mu, k, h, sq, m, ekh, e_q, e_qk)
            x_1, f_1, a_1 = _ou_lane(x_1, f_1, a_1, z1, disc, dn, scheme, mu, k, h, sq, m, ekh, e_q, e_qk)
            x_2, f_2, a_2 = _ou_lane(x_2, f_2, a_2, z2, disc, dn, scheme, mu, k, h, sq, m, ekh, e_q, e_qk)
            x_3, f_3, a_3 = _ou_lane(x_3, f_3, a_3, z3, disc, dn, scheme, mu, k, h, sq, m, ekh, e_q, e_qk)
            disc = dn
        out[j] = a_0
        out[j + 1] = a_1
        out[j + 2] = a_2
        out[j + 3] = a_3
    if full < n_out:
        estimate_paths(out[full:], first + full, seed, scheme, x0, mu, sigma, k, -np.inf, q,
                       h, nsteps, -np.inf, False, np.inf, False, RUN_STATE, False)
