"""Hot numeric kernels.

Every kernel is a plain-Python loop compiled with numba when it is enabled.
Batched box tests also have a vectorized numpy implementation that is used
when numba is off (``COTDRIVE_DISABLE_NUMBA=1``); sequential rollouts have no
vectorized form and simply run un-jitted.

Box rows are ``(x, y, yaw, half_length, half_width)``.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

PI = math.pi
TWO_PI = 2.0 * math.pi


@njit
def wrap_angle(a):
    # inputs are near-range yaw sums; for |a| < 4*pi this equals fmod-based wrapping
    w = a
    while w > PI:
        w -= TWO_PI
    while w <= -PI:
        w += TWO_PI
    return w


@njit
def bicycle_update(x, y, yaw, v, steer, accel, wheelbase, max_steer, dt):
    """One explicit-Euler bicycle step; returns the new (x, y, yaw, v)."""
    if steer > max_steer:
        steer = max_steer
    elif steer < -max_steer:
        steer = -max_steer
    nx = x + v * math.cos(yaw) * dt
    ny = y + v * math.sin(yaw) * dt
    nyaw = wrap_angle(yaw + (v / wheelbase) * math.tan(steer) * dt)
    nv = v + accel * dt
    if nv < 0.0:
        nv = 0.0
    return nx, ny, nyaw, nv


@njit
def rollout_constant_action(x, y, yaw, v, steer, accel, wheelbase, max_steer, dt, frames):
    out = np.empty((frames, 4))
    for k in range(frames):
        x, y, yaw, v = bicycle_update(x, y, yaw, v, steer, accel, wheelbase, max_steer, dt)
        out[k, 0] = x
        out[k, 1] = y
        out[k, 2] = yaw
        out[k, 3] = v
    return out


# --- oriented boxes ----------------------------------------------------------


@njit
def _overlap_one(ax, ay, ayaw, ahl, ahw, bx, by, byaw, bhl, bhw):
    ca, sa = math.cos(ayaw), math.sin(ayaw)
    cb, sb = math.cos(byaw), math.sin(byaw)
    dx, dy = bx - ax, by - ay
    # candidate axes: both boxes' length and width directions
    for k in range(4):
        if k == 0:
            ux, uy = ca, sa
        elif k == 1:
            ux, uy = -sa, ca
        elif k == 2:
            ux, uy = cb, sb
        else:
            ux, uy = -sb, cb
        ra = ahl * abs(ca * ux + sa * uy) + ahw * abs(-sa * ux + ca * uy)
        rb = bhl * abs(cb * ux + sb * uy) + bhw * abs(-sb * ux + cb * uy)
        if abs(dx * ux + dy * uy) > ra + rb:
            return False
    return True


@njit
def _corners(x, y, yaw, hl, hw, out):
    c, s = math.cos(yaw), math.sin(yaw)
    signs = ((1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0))
    for i in range(4):
        dx = signs[i][0] * hl
        dy = signs[i][1] * hw
        out[i, 0] = x + c * dx - s * dy
        out[i, 1] = y + s * dx + c * dy


@njit
def _point_segment_d2(px, py, ax, ay, bx, by):
    ex, ey = bx - ax, by - ay
    ll = ex * ex + ey * ey
    t = ((px - ax) * ex + (py - ay) * ey) / ll
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    qx, qy = ax + t * ex - px, ay + t * ey - py
    return qx * qx + qy * qy


@njit
def _min_distance_one(a, b):
    if _overlap_one(a[0], a[1], a[2], a[3], a[4], b[0], b[1], b[2], b[3], b[4]):
        return 0.0
    ca = np.empty((4, 2))
    cb = np.empty((4, 2))
    _corners(a[0], a[1], a[2], a[3], a[4], ca)
    _corners(b[0], b[1], b[2], b[3], b[4], cb)
    best = np.inf
    for i in range(4):
        for j in range(4):
            j2 = (j + 1) % 4
            d = _point_segment_d2(ca[i, 0], ca[i, 1], cb[j, 0], cb[j, 1], cb[j2, 0], cb[j2, 1])
            if d < best:
                best = d
            d = _point_segment_d2(cb[i, 0], cb[i, 1], ca[j, 0], ca[j, 1], ca[j2, 0], ca[j2, 1])
            if d < best:
                best = d
    return math.sqrt(best)


@njit
def _overlap_rows_loop(a, b):
    n = a.shape[0]
    out = np.empty(n, dtype=np.bool_)
    for i in range(n):
        out[i] = _overlap_one(a[i, 0], a[i, 1], a[i, 2], a[i, 3], a[i, 4],
                              b[i, 0], b[i, 1], b[i, 2], b[i, 3], b[i, 4])
    return out


@njit
def _min_distance_rows_loop(a, b):
    n = a.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _min_distance_one(a[i], b[i])
    return out


def _overlap_rows_numpy(a, b):
    ca, sa = np.cos(a[:, 2]), np.sin(a[:, 2])
    cb, sb = np.cos(b[:, 2]), np.sin(b[:, 2])
    dx, dy = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    separated = np.zeros(a.shape[0], dtype=bool)
    for ux, uy in ((ca, sa), (-sa, ca), (cb, sb), (-sb, cb)):
        ra = a[:, 3] * np.abs(ca * ux + sa * uy) + a[:, 4] * np.abs(-sa * ux + ca * uy)
        rb = b[:, 3] * np.abs(cb * ux + sb * uy) + b[:, 4] * np.abs(-sb * ux + cb * uy)
        separated |= np.abs(dx * ux + dy * uy) > ra + rb
    return ~separated


_SIGNS = np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, -1.0], [-1.0, 1.0]])


def _corners_numpy(rows):
    c, s = np.cos(rows[:, 2])[:, None], np.sin(rows[:, 2])[:, None]
    dx = _SIGNS[None, :, 0] * rows[:, 3:4]
    dy = _SIGNS[None, :, 1] * rows[:, 4:5]
    return np.stack([rows[:, 0:1] + c * dx - s * dy, rows[:, 1:2] + s * dx + c * dy], axis=-1)


def _points_to_edges_d2(pts, poly):
    # pts (n, 4, 2) against the 4 edges of poly (n, 4, 2) -> (n,)
    a = poly
    b = np.roll(poly, -1, axis=1)
    e = b - a  # (n, 4, 2)
    ll = np.sum(e * e, axis=-1)  # (n, 4)
    rel = pts[:, :, None, :] - a[:, None, :, :]  # (n, 4pts, 4edges, 2)
    t = np.clip(np.sum(rel * e[:, None], axis=-1) / ll[:, None], 0.0, 1.0)
    q = rel - t[..., None] * e[:, None]
    return np.min(np.sum(q * q, axis=-1), axis=(1, 2))


def _min_distance_rows_numpy(a, b):
    out = np.zeros(a.shape[0])
    hit = _overlap_rows_numpy(a, b)
    idx = np.flatnonzero(~hit)
    if idx.size:
        ca, cb = _corners_numpy(a[idx]), _corners_numpy(b[idx])
        d2 = np.minimum(_points_to_edges_d2(ca, cb), _points_to_edges_d2(cb, ca))
        out[idx] = np.sqrt(d2)
    return out


def overlap_rows(a, b):
    """Row-wise closed-box overlap of two ``(n, 5)`` box arrays."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 5)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 5)
    if USE_NUMBA:
        return _overlap_rows_loop(a, b)
    return _overlap_rows_numpy(a, b)


def min_distance_rows(a, b):
    """Row-wise minimum boundary gap (0 when overlapping) of two box arrays."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1, 5)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1, 5)
    if USE_NUMBA:
        return _min_distance_rows_loop(a, b)
    return _min_distance_rows_numpy(a, b)


def overlap_rows_loop(a, b):
    return _overlap_rows_loop(np.ascontiguousarray(a, dtype=np.float64), np.ascontiguousarray(b, dtype=np.float64))


def overlap_rows_numpy(a, b):
    return _overlap_rows_numpy(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


# --- route geometry ----------------------------------------------------------


@njit
def project_on_route(route, px, py, s_prev, window):
    """Arc position of the closest polyline point at or after ``s_prev``.

    ``route`` is a dense polyline with unit arc spacing, so arc length equals
    the fractional index. Only segments within ``window`` of ``s_prev`` are
    searched; the result never moves backward.
    """
    n = route.shape[0]
    first = int(math.floor(s_prev))
    if first > n - 2:
        first = n - 2
    if first < 0:
        first = 0
    last = first + window
    if last > n - 2:
        last = n - 2
    best_d2 = np.inf
    best_s = s_prev
    for i in range(first, last + 1):
        ax, ay = route[i, 0], route[i, 1]
        ex, ey = route[i + 1, 0] - ax, route[i + 1, 1] - ay
        ll = ex * ex + ey * ey
        t = ((px - ax) * ex + (py - ay) * ey) / ll
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        qx, qy = ax + t * ex - px, ay + t * ey - py
        d2 = qx * qx + qy * qy
        if d2 < best_d2:
            best_d2 = d2
            best_s = i + t
    if best_s < s_prev:
        best_s = s_prev
    return best_s


@njit
def point_at_arc(route, s):
    """Point at arc position ``s``; past the end, extend along the last segment."""
    n = route.shape[0]
    if s >= n - 1:
        ex, ey = route[n - 1, 0] - route[n - 2, 0], route[n - 1, 1] - route[n - 2, 1]
        ll = math.sqrt(ex * ex + ey * ey)
        extra = s - (n - 1)
        return route[n - 1, 0] + ex / ll * extra, route[n - 1, 1] + ey / ll * extra
    if s <= 0.0:
        return route[0, 0], route[0, 1]
    i = int(math.floor(s))
    t = s - i
    return (route[i, 0] + t * (route[i + 1, 0] - route[i, 0]),
            route[i, 1] + t * (route[i + 1, 1] - route[i, 1]))


@njit
def lookahead_distance(speed_kmh):
    if speed_kmh < 20.0:
        return 4.0
    return 0.5 * (speed_kmh / 3.6) + 2.0


@njit
def _pid(buf, count, head, err, kp, ki, kd, dt):
    # returns (output, new_count, new_head); chronological mean matches a deque
    n = buf.shape[0]
    prev = 0.0
    has_prev = count > 0
    if has_prev:
        prev = buf[(head - 1) % n]
    buf[head] = err
    head = (head + 1) % n
    if count < n:
        count += 1
    total = 0.0
    start = (head - count) % n
    for j in range(count):
        total += buf[(start + j) % n]
    deriv = 0.0
    if has_prev:
        deriv = (err - prev) / dt
    return kp * err + ki * (total / count) + kd * deriv, count, head


@njit
def ego_virtual_rollout(route, s0, x, y, yaw, v, target_kmh,
                        lon_buf, lon_count, lon_head, lon_gains,
                        lat_buf, lat_count, lat_head, lat_gains,
                        wheelbase, max_steer, max_accel, max_brake, dt, frames, window):
    """Roll the ego forward while both PID controllers track the route.

    Buffers are modified in place; pass copies. Gains are ``(kp, ki, kd)``.
    """
    out = np.empty((frames, 4))
    s = s0
    for k in range(frames):
        s = project_on_route(route, x, y, s, window)
        v_kmh = v * 3.6
        tx, ty = point_at_arc(route, s + lookahead_distance(v_kmh))
        dx, dy = tx - x, ty - y
        c, sn = math.cos(yaw), math.sin(yaw)
        angle = wrap_angle(math.atan2(-sn * dx + c * dy, c * dx + sn * dy))
        raw, lat_count, lat_head = _pid(lat_buf, lat_count, lat_head, angle,
                                        lat_gains[0], lat_gains[1], lat_gains[2], dt)
        steer = min(max(raw, -1.0), 1.0)
        throttle = 0.0
        brake = 0.0
        if target_kmh <= 0.0:
            brake = 1.0
        else:
            raw, lon_count, lon_head = _pid(lon_buf, lon_count, lon_head, target_kmh - v_kmh,
                                            lon_gains[0], lon_gains[1], lon_gains[2], dt)
            if raw >= 0.0:
                throttle = min(raw, 1.0)
            else:
                brake = min(-raw, 1.0)
        accel = throttle * max_accel - brake * max_brake
        x, y, yaw, v = bicycle_update(x, y, yaw, v, steer * max_steer, accel, wheelbase, max_steer, dt)
        out[k, 0] = x
        out[k, 1] = y
        out[k, 2] = yaw
        out[k, 3] = v
    return out
