"""Compiled inner loops for the cloth engine, cutting, and rasterization.

Layout.  Vertex ``v = r * C + c``.  Positions are structure-of-arrays,
shape ``(3, n)``.  Every constraint family is stored in a padded array with
one slot per vertex, the slot holding the edge that *starts* at that vertex:

=====  ======================  =====================
fam    edge for slot ``v``      valid when
=====  ======================  =====================
0      ``v -> v + 1``           ``c < C - 1``
1      ``v -> v + C``           ``r < R - 1``
2      ``v -> v + C + 1``       ``r < R - 1, c < C - 1``
3      ``v + 1 -> v + C``       ``r < R - 1, c < C - 1``
=====  ======================  =====================

Invalid slots carry ``act == 0`` so they contribute nothing, which lets every
loop run over the full flat range with unit stride.  Per-edge state:

* ``act``  1.0 for an intact spring, 0.0 once cut (or padding)
* ``kw``   Jacobi weight ``act / (w_i + w_j)``; rebuilt by
  :func:`refresh_weights` whenever pins or cuts change

All kernels are ``nogil`` so independent episodes can share a thread pool.
"""

import numpy as np
from numba import njit

STAY, PLUS_X, MINUS_X, PLUS_Y, MINUS_Y = 0, 1, 2, 3, 4
ACTION_DX = np.array([0.0, 1.0, -1.0, 0.0, 0.0])
ACTION_DY = np.array([0.0, 0.0, 0.0, 1.0, -1.0])

_TINY = 1e-12


@njit(cache=True, nogil=True)
def edge_endpoints(fam, v, cols):
    if fam == 0:
        return v, v + 1
    if fam == 1:
        return v, v + cols
    if fam == 2:
        return v, v + cols + 1
    return v + 1, v + cols


@njit(cache=True, nogil=True)
def refresh_weights(free, act, kw, cols):
    n = free.shape[0]
    for fam in range(4):
        for v in range(n):
            if act[fam, v] == 0.0:
                kw[fam, v] = 0.0
                continue
            i, j = edge_endpoints(fam, v, cols)
            w = free[i] + free[j]
            kw[fam, v] = act[fam, v] / w if w > 0.0 else 0.0


@njit(cache=True, nogil=True, fastmath=True)
def _terms(P, a, b, count, rest, gain, out):
    # out[:, v] = gain[v] * (L - rest[v]) / L * (P[:, v+b] - P[:, v+a])
    for v in range(count):
        dx = P[0, v + b] - P[0, v + a]
        dy = P[1, v + b] - P[1, v + a]
        dz = P[2, v + b] - P[2, v + a]
        length = max(np.sqrt(dx * dx + dy * dy + dz * dz), _TINY)
        s = gain[v] * (length - rest[v]) / length
        out[0, v] = s * dx
        out[1, v] = s * dy
        out[2, v] = s * dz


@njit(cache=True, nogil=True, fastmath=True)
def _stencil(T, k, cols, diagonals, out):
    # out[v] = sum of +term over edges starting at v, -term over edges ending
    # at v.  Padding slots of T are never written and stay zero.
    n = out.shape[0]
    h = T[0, k]
    vt = T[1, k]
    for v in range(n):
        out[v] = h[v] + vt[v]
    for v in range(1, n):
        out[v] -= h[v - 1]
    for v in range(cols, n):
        out[v] -= vt[v - cols]
    if diagonals:
        d1 = T[2, k]
        d2 = T[3, k]
        for v in range(n):
            out[v] += d1[v]
        for v in range(cols + 1, n):
            out[v] -= d1[v - cols - 1]
        for v in range(1, n):
            out[v] += d2[v - 1]
        for v in range(cols, n):
            out[v] -= d2[v - cols]


@njit(cache=True, nogil=True, fastmath=True)
def _all_terms(P, rest, gain, T, cols, diagonals):
    n = P.shape[1]
    _terms(P, 0, 1, n - 1, rest[0], gain[0], T[0])
    _terms(P, 0, cols, n - cols, rest[1], gain[1], T[1])
    if diagonals:
        _terms(P, 0, cols + 1, n - cols - 1, rest[2], gain[2], T[2])
        _terms(P, 1, cols, n - cols - 1, rest[3], gain[3], T[3])


@njit(cache=True, nogil=True, fastmath=True)
def step_n(P, Q, free, pin, rest, act, kw, cols, diagonals,
           gravity, alpha, delta, tau, dt, iterations, nsteps, acc, T):
    """Advance the mesh ``nsteps`` steps in place.

    ``acc`` (n,) and ``T`` (4, 3, n) are scratch buffers; ``T`` must start
    zeroed (its padding slots are never written).
    """
    n = P.shape[1]
    dt2 = dt * dt
    force_scale = tau * (1.0 - delta) * dt2
    for _ in range(nsteps):
        _all_terms(P, rest, act, T, cols, diagonals)
        # damped Verlet; pinned vertices are overwritten with their pin point
        for k in range(3):
            _stencil(T, k, cols, diagonals, acc)
            g = gravity[k] * dt2
            for v in range(n):
                p = P[k, v]
                f = free[v]
                nxt = p + alpha * (p - Q[k, v]) + g + force_scale * acc[v]
                P[k, v] = f * nxt + (1.0 - f) * pin[k, v]
                Q[k, v] = f * p + (1.0 - f) * pin[k, v]
        # Jacobi relaxation toward rest length; order independent so mirror
        # symmetric inputs stay mirror symmetric
        for _it in range(iterations):
            _all_terms(P, rest, kw, T, cols, diagonals)
            for k in range(3):
                _stencil(T, k, cols, diagonals, acc)
                for v in range(n):
                    P[k, v] += 0.5 * free[v] * acc[v]


@njit(cache=True, nogil=True)
def locate(P, material, rows, cols, wx, wy):
    """Find the mesh point lying under world (wx, wy).

    Searches the two triangles of every grid quad in the xy projection and
    keeps the topmost hit.  Returns (found, z, mat_x, mat_y, nearest vertex).
    """
    best_z = -np.inf
    found = False
    mx = 0.0
    my = 0.0
    nearest = -1
    for r in range(rows - 1):
        for c in range(cols - 1):
            a = r * cols + c
            for tri in range(2):
                if tri == 0:
                    i, j, k = a, a + 1, a + cols + 1
                else:
                    i, j, k = a, a + cols + 1, a + cols
                x0 = P[0, i]
                y0 = P[1, i]
                e1x = P[0, j] - x0
                e1y = P[1, j] - y0
                e2x = P[0, k] - x0
                e2y = P[1, k] - y0
                det = e1x * e2y - e2x * e1y
                if abs(det) < 1e-14:
                    continue
                px = wx - x0
                py = wy - y0
                u = (px * e2y - e2x * py) / det
                w = (e1x * py - px * e1y) / det
                if u < -1e-12 or w < -1e-12 or u + w > 1.0 + 1e-12:
                    continue
                b0 = 1.0 - u - w
                z = b0 * P[2, i] + u * P[2, j] + w * P[2, k]
                if z > best_z:
                    best_z = z
                    found = True
                    mx = b0 * material[0, i] + u * material[0, j] + w * material[0, k]
                    my = b0 * material[1, i] + u * material[1, j] + w * material[1, k]
                    if b0 >= u and b0 >= w:
                        nearest = i
                    elif u >= w:
                        nearest = j
                    else:
                        nearest = k
    return found, best_z, mx, my, nearest


@njit(cache=True, nogil=True)
def sever_vertex(v, rows, cols, act, kw, severed):
    """Cut every constraint incident to ``v``.  Returns True if newly severed."""
    if severed[v]:
        return False
    severed[v] = True
    r = v // cols
    c = v % cols
    slots = np.empty((8, 2), dtype=np.int64)
    m = 0
    if c < cols - 1:
        slots[m, 0] = 0
        slots[m, 1] = v
        m += 1
    if c > 0:
        slots[m, 0] = 0
        slots[m, 1] = v - 1
        m += 1
    if r < rows - 1:
        slots[m, 0] = 1
        slots[m, 1] = v
        m += 1
    if r > 0:
        slots[m, 0] = 1
        slots[m, 1] = v - cols
        m += 1
    if r < rows - 1 and c < cols - 1:
        slots[m, 0] = 2
        slots[m, 1] = v
        m += 1
    if r > 0 and c > 0:
        slots[m, 0] = 2
        slots[m, 1] = v - cols - 1
        m += 1
    if r < rows - 1 and c > 0:
        slots[m, 0] = 3
        slots[m, 1] = v - 1
        m += 1
    if r > 0 and c < cols - 1:
        slots[m, 0] = 3
        slots[m, 1] = v - cols
        m += 1
    for q in range(m):
        act[slots[q, 0], slots[q, 1]] = 0.0
        kw[slots[q, 0], slots[q, 1]] = 0.0
    return True


@njit(cache=True, nogil=True)
def sever_ball(P, rows, cols, wx, wy, wz, radius, act, kw, severed, out):
    """Sever every not-yet-severed vertex within ``radius`` of the point.

    Newly severed ids are written to ``out``; returns how many.
    """
    n = P.shape[1]
    r2 = radius * radius
    m = 0
    for v in range(n):
        dx = P[0, v] - wx
        dy = P[1, v] - wy
        dz = P[2, v] - wz
        if dx * dx + dy * dy + dz * dz <= r2:
            if sever_vertex(v, rows, cols, act, kw, severed):
                out[m] = v
                m += 1
    return m


@njit(cache=True, nogil=True)
def cut_at(P, material, rows, cols, wx, wy, radius, act, kw, severed, out):
    """Scissors closing at world (wx, wy) on the cloth surface.

    Returns (hit, z, mat_x, mat_y, n_severed).  A miss (point not over the
    cloth) leaves the state untouched.  On a hit with no vertex inside the
    blade radius the closest vertex of the containing triangle is taken, so
    consecutive cuts always remove material.
    """
    found, z, mx, my, nearest = locate(P, material, rows, cols, wx, wy)
    if not found:
        return False, 0.0, 0.0, 0.0, 0
    m = sever_ball(P, rows, cols, wx, wy, z, radius, act, kw, severed, out)
    if m == 0:
        dx = P[0, nearest] - wx
        dy = P[1, nearest] - wy
        dz = P[2, nearest] - z
        if dx * dx + dy * dy + dz * dz > radius * radius:
            if sever_vertex(nearest, rows, cols, act, kw, severed):
                out[0] = nearest
                m = 1
    return True, z, mx, my, m


@njit(cache=True, nogil=True)
def run_episode(P, Q, free, pin, rest, act, kw, severed, material, rows, cols,
                diagonals, gravity, alpha, delta, tau, dt, iterations,
                grasp, actions, waypoints, settle_steps, radius, d_max,
                move_mm, acc, T, out_mat, out_hit, out_disp, out_nsev, out_when):
    """Full cut episode in place: tension move, settle, cut, per waypoint.

    ``out_when[v]`` receives the step at which vertex ``v`` was severed
    (entries for vertices left intact are not touched).
    """
    # grasp < 0 runs the episode with no tensioning arm at all
    bx = 0.0
    by = 0.0
    if grasp >= 0:
        free[grasp] = 0.0
        for k in range(3):
            pin[k, grasp] = P[k, grasp]
        bx = pin[0, grasp]
        by = pin[1, grasp]
    refresh_weights(free, act, kw, cols)
    buf = np.empty(P.shape[1], dtype=np.int64)
    dx = 0.0
    dy = 0.0
    lim = d_max + 1e-9
    for step in range(actions.shape[0]):
        a = actions[step]
        ndx = dx + ACTION_DX[a] * move_mm
        ndy = dy + ACTION_DY[a] * move_mm
        if abs(ndx) <= lim and abs(ndy) <= lim:
            dx = ndx
            dy = ndy
        if grasp >= 0:
            pin[0, grasp] = bx + dx
            pin[1, grasp] = by + dy
        out_disp[step, 0] = dx
        out_disp[step, 1] = dy
        step_n(P, Q, free, pin, rest, act, kw, cols, diagonals, gravity,
               alpha, delta, tau, dt, iterations, settle_steps, acc, T)
        hit, z, mx, my, m = cut_at(P, material, rows, cols, waypoints[step, 0],
                                   waypoints[step, 1], radius, act, kw,
                                   severed, buf)
        out_hit[step] = hit
        out_mat[step, 0] = mx
        out_mat[step, 1] = my
        out_nsev[step] = m
        for q in range(m):
            out_when[buf[q]] = step


@njit(cache=True, nogil=True)
def toggle_polygon(mask, xs, ys):
    """XOR the even-odd interior of a closed polygon into ``mask``.

    ``mask`` is (res, res) over the unit square, row index = y.  A cell is
    inside iff its center has an odd number of edge crossings strictly to
    its right (half-open rule in y).
    """
    res = mask.shape[0]
    m = xs.shape[0]
    cross = np.empty(m, dtype=np.float64)
    for row in range(res):
        yc = (row + 0.5) / res
        cnt = 0
        for e in range(m):
            x0 = xs[e]
            y0 = ys[e]
            x1 = xs[(e + 1) % m]
            y1 = ys[(e + 1) % m]
            if (y0 <= yc) != (y1 <= yc):
                cross[cnt] = x0 + (yc - y0) * (x1 - x0) / (y1 - y0)
                cnt += 1
        if cnt < 2:
            continue
        sub = np.sort(cross[:cnt])
        for p in range(0, cnt - 1, 2):
            lo = int(np.ceil(sub[p] * res - 0.5))
            hi = int(np.ceil(sub[p + 1] * res - 0.5))
            lo = max(lo, 0)
            hi = min(hi, res)
            for col in range(lo, hi):
                mask[row, col] = not mask[row, col]
