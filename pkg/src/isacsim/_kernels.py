"""Compiled geometry kernels used by the scene queries and the ray tracer.

Everything here works on plain float64/int64 arrays so it can be jitted
without object mode. Triangles are stored as ``v0`` plus the two edge
vectors ``e1 = v1 - v0`` and ``e2 = v2 - v0``.
"""

import math

import numpy as np
from numba import njit

# interaction kind codes; must match raytracer.InteractionKind values
EMIT = 0
REFLECT = 1
SCATTER = 2
PENETRATE = 3
DIFFRACT = 4
BACKSCATTER = 5
RECEIVE = 6

_DET_EPS = 1e-14
_BARY_EPS = 1e-12


@njit(cache=True)
def _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, i):
    # Moller-Trumbore, two sided; returns inf on miss
    px = dy * e2[i, 2] - dz * e2[i, 1]
    py = dz * e2[i, 0] - dx * e2[i, 2]
    pz = dx * e2[i, 1] - dy * e2[i, 0]
    det = e1[i, 0] * px + e1[i, 1] * py + e1[i, 2] * pz
    if abs(det) < _DET_EPS:
        return math.inf
    inv = 1.0 / det
    tx = ox - v0[i, 0]
    ty = oy - v0[i, 1]
    tz = oz - v0[i, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
        return math.inf
    qx = ty * e1[i, 2] - tz * e1[i, 1]
    qy = tz * e1[i, 0] - tx * e1[i, 2]
    qz = tx * e1[i, 1] - ty * e1[i, 0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
        return math.inf
    return (e2[i, 0] * qx + e2[i, 1] * qy + e2[i, 2] * qz) * inv


@njit(cache=True)
def _nearest(ox, oy, oz, dx, dy, dz, v0, e1, e2, tmin):
    best = math.inf
    best_i = -1
    for i in range(v0.shape[0]):
        t = _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, i)
        if t > tmin and t < best:
            best = t
            best_i = i
    return best, best_i


@njit(cache=True)
def nearest_hits(origins, dirs, v0, e1, e2, tmin):
    """Nearest triangle hit per ray; ``t = inf`` and ``tri = -1`` on miss."""
    n = origins.shape[0]
    t_out = np.full(n, math.inf)
    tri_out = np.full(n, -1, dtype=np.int64)
    for r in range(n):
        t, i = _nearest(origins[r, 0], origins[r, 1], origins[r, 2],
                        dirs[r, 0], dirs[r, 1], dirs[r, 2], v0, e1, e2, tmin)
        t_out[r] = t
        tri_out[r] = i
    return t_out, tri_out


@njit(cache=True)
def _cube_entry(ox, oy, oz, dx, dy, dz, cx, cy, cz, half):
    # slab test; 0 when the origin is already inside, inf on miss
    t0 = -math.inf
    t1 = math.inf
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    c = (cx, cy, cz)
    for a in range(3):
        lo = c[a] - half
        hi = c[a] + half
        if d[a] == 0.0:
            if o[a] < lo or o[a] > hi:
                return math.inf
        else:
            ta = (lo - o[a]) / d[a]
            tb = (hi - o[a]) / d[a]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 < 0.0:
        t0 = 0.0
    if t1 < t0:
        return math.inf
    return t0


@njit(cache=True)
def cube_entries(origins, dirs, center, half):
    n = origins.shape[0]
    out = np.empty(n)
    for r in range(n):
        out[r] = _cube_entry(origins[r, 0], origins[r, 1], origins[r, 2],
                             dirs[r, 0], dirs[r, 1], dirs[r, 2],
                             center[0], center[1], center[2], half)
    return out


@njit(cache=True)
def edge_proximity(points, obj, edge_a, edge_b, edge_start):
    """Distance from each point to the closest feature edge of its object.

    ``edge_start`` is a CSR-style offset array: edges of object ``k`` are
    ``edge_start[k]:edge_start[k + 1]``. Returns distances and the unit
    direction of the closest edge.
    """
    n = points.shape[0]
    dist = np.full(n, math.inf)
    edir = np.zeros((n, 3))
    for h in range(n):
        k = obj[h]
        for e in range(edge_start[k], edge_start[k + 1]):
            ax = edge_a[e, 0]
            ay = edge_a[e, 1]
            az = edge_a[e, 2]
            sx = edge_b[e, 0] - ax
            sy = edge_b[e, 1] - ay
            sz = edge_b[e, 2] - az
            ll = sx * sx + sy * sy + sz * sz
            wx = points[h, 0] - ax
            wy = points[h, 1] - ay
            wz = points[h, 2] - az
            s = (wx * sx + wy * sy + wz * sz) / ll
            if s < 0.0:
                s = 0.0
            elif s > 1.0:
                s = 1.0
            rx = wx - s * sx
            ry = wy - s * sy
            rz = wz - s * sz
            dd = math.sqrt(rx * rx + ry * ry + rz * rz)
            if dd < dist[h]:
                dist[h] = dd
                nl = math.sqrt(ll)
                edir[h, 0] = sx / nl
                edir[h, 1] = sy / nl
                edir[h, 2] = sz / nl
    return dist, edir


@njit(cache=True, inline="always")
def _unit(x, y, z):
    n = math.sqrt(x * x + y * y + z * z)
    return x / n, y / n, z / n


@njit(cache=True, inline="always")
def _cone_basis(rx, ry, rz):
    # deterministic orthonormal pair perpendicular to r
    if abs(rz) < 0.9:
        ax, ay, az = 0.0, 0.0, 1.0
    else:
        ax, ay, az = 1.0, 0.0, 0.0
    ux = ry * az - rz * ay
    uy = rz * ax - rx * az
    uz = rx * ay - ry * ax
    ux, uy, uz = _unit(ux, uy, uz)
    wx = ry * uz - rz * uy
    wy = rz * ux - rx * uz
    wz = rx * uy - ry * ux
    return ux, uy, uz, wx, wy, wz


@njit(cache=True)
def _tables(cone_theta, cone_psi, fan):
    """Trig tables: cone rows (theta, cos theta, sin theta cos psi,
    sin theta sin psi); fan rows (gamma, cos gamma, sin gamma)."""
    cone = np.empty((cone_theta.shape[0], 4))
    for j in range(cone_theta.shape[0]):
        st = math.sin(cone_theta[j])
        cone[j, 0] = cone_theta[j]
        cone[j, 1] = math.cos(cone_theta[j])
        cone[j, 2] = st * math.cos(cone_psi[j])
        cone[j, 3] = st * math.sin(cone_psi[j])
    ft = np.empty((fan.shape[0], 3))
    for j in range(fan.shape[0]):
        ft[j, 0] = fan[j]
        ft[j, 1] = math.cos(fan[j])
        ft[j, 2] = math.sin(fan[j])
    return cone, ft


@njit(cache=True)
def hit_frames(d, ng, edge_dir, near_edge):
    """Per-hit quantities shared by every child direction.

    Columns: 0-2 facing normal, 3-5 specular direction, 6-11 cone basis
    (u, w), 12 entering flag (1.0/0.0), 13-15 diffraction rotation axis
    (zero when the hit is not near an edge or the axis is undefined).
    """
    n = d.shape[0]
    fr = np.zeros((n, 16))
    for h in range(n):
        dx, dy, dz = d[h, 0], d[h, 1], d[h, 2]
        nx, ny, nz = ng[h, 0], ng[h, 1], ng[h, 2]
        cosdn = dx * nx + dy * ny + dz * nz
        entering = cosdn < 0.0
        if not entering:
            nx, ny, nz = -nx, -ny, -nz
            cosdn = -cosdn
        rx, ry, rz = _unit(dx - 2.0 * cosdn * nx, dy - 2.0 * cosdn * ny,
                           dz - 2.0 * cosdn * nz)
        ux, uy, uz, wx, wy, wz = _cone_basis(rx, ry, rz)
        fr[h, 0] = nx
        fr[h, 1] = ny
        fr[h, 2] = nz
        fr[h, 3] = rx
        fr[h, 4] = ry
        fr[h, 5] = rz
        fr[h, 6] = ux
        fr[h, 7] = uy
        fr[h, 8] = uz
        fr[h, 9] = wx
        fr[h, 10] = wy
        fr[h, 11] = wz
        fr[h, 12] = 1.0 if entering else 0.0
        if near_edge[h]:
            ex, ey, ez = edge_dir[h, 0], edge_dir[h, 1], edge_dir[h, 2]
            ed = ex * dx + ey * dy + ez * dz
            px = ex - ed * dx
            py = ey - ed * dy
            pz = ez - ed * dz
            pn = math.sqrt(px * px + py * py + pz * pz)
            if pn < 1e-9:
                # incidence along the edge: fall back to the plane of d and n
                px = dy * nz - dz * ny
                py = dz * nx - dx * nz
                pz = dx * ny - dy * nx
                pn = math.sqrt(px * px + py * py + pz * pz)
            if pn >= 1e-9:
                fr[h, 13] = px / pn
                fr[h, 14] = py / pn
                fr[h, 15] = pz / pn
    return fr


@njit(cache=True, inline="always")
def _scatter_dir(fr, h, cone, j):
    ct = cone[j, 1]
    sa = cone[j, 2]
    sb = cone[j, 3]
    qx = ct * fr[h, 3] + sa * fr[h, 6] + sb * fr[h, 9]
    qy = ct * fr[h, 4] + sa * fr[h, 7] + sb * fr[h, 10]
    qz = ct * fr[h, 5] + sa * fr[h, 8] + sb * fr[h, 11]
    qx, qy, qz = _unit(qx, qy, qz)
    # scattered energy stays on the incident side of the surface
    ok = qx * fr[h, 0] + qy * fr[h, 1] + qz * fr[h, 2] > 1e-9
    return ok, qx, qy, qz


@njit(cache=True, inline="always")
def _refract_dir(d, fr, h, index):
    dx, dy, dz = d[h, 0], d[h, 1], d[h, 2]
    nx, ny, nz = fr[h, 0], fr[h, 1], fr[h, 2]
    eta = 1.0 / index if fr[h, 12] > 0.5 else index
    cosi = -(dx * nx + dy * ny + dz * nz)
    k = 1.0 - eta * eta * (1.0 - cosi * cosi)
    if k < 0.0:  # total internal reflection: no transmitted ray
        return False, 0.0, 0.0, 0.0
    f = eta * cosi - math.sqrt(k)
    tx, ty, tz = _unit(eta * dx + f * nx, eta * dy + f * ny, eta * dz + f * nz)
    return True, tx, ty, tz


@njit(cache=True, inline="always")
def _fan_dir(d, fr, h, ftab, j):
    dx, dy, dz = d[h, 0], d[h, 1], d[h, 2]
    ax, ay, az = fr[h, 13], fr[h, 14], fr[h, 15]
    cg = ftab[j, 1]
    sg = ftab[j, 2]
    # the axis is perpendicular to d, so Rodrigues reduces to two terms
    cx = ay * dz - az * dy
    cy = az * dx - ax * dz
    cz = ax * dy - ay * dx
    return _unit(cg * dx + sg * cx, cg * dy + sg * cy, cg * dz + sg * cz)


@njit(cache=True, inline="always")
def _has_axis(fr, h):
    return fr[h, 13] != 0.0 or fr[h, 14] != 0.0 or fr[h, 15] != 0.0


@njit(cache=True, inline="always")
def _put(parent, kind, offset, out, k, h, kd, off, x, y, z):
    parent[k] = h
    kind[k] = kd
    offset[k] = off
    out[k, 0] = x
    out[k, 1] = y
    out[k, 2] = z


@njit(cache=True)
def generate_children(d, ng, edge_dir, near_edge, penetrable, index,
                      cone_theta, cone_psi, fan, flags):
    """All child rays of a batch of hits.

    Children of one hit are emitted in the fixed order backscatter,
    reflect, scatter cone, penetrate, diffraction fan. ``flags`` enables
    the kinds in that same order.
    """
    n = d.shape[0]
    n_cone = cone_theta.shape[0]
    n_fan = fan.shape[0]
    total = n * (3 + n_cone + n_fan)
    parent = np.empty(total, dtype=np.int64)
    kind = np.empty(total, dtype=np.int64)
    offset = np.empty(total)
    out = np.empty((total, 3))
    cone, ftab = _tables(cone_theta, cone_psi, fan)
    fr = hit_frames(d, ng, edge_dir, near_edge)
    k = 0
    for h in range(n):
        if flags[0]:
            _put(parent, kind, offset, out, k, h, BACKSCATTER, 0.0,
                 -d[h, 0], -d[h, 1], -d[h, 2])
            k += 1
        if flags[1]:
            _put(parent, kind, offset, out, k, h, REFLECT, 0.0,
                 fr[h, 3], fr[h, 4], fr[h, 5])
            k += 1
        if flags[2]:
            for j in range(n_cone):
                ok, x, y, z = _scatter_dir(fr, h, cone, j)
                if ok:
                    _put(parent, kind, offset, out, k, h, SCATTER, cone[j, 0], x, y, z)
                    k += 1
        if flags[3] and penetrable[h]:
            ok, x, y, z = _refract_dir(d, fr, h, index[h])
            if ok:
                _put(parent, kind, offset, out, k, h, PENETRATE, 0.0, x, y, z)
                k += 1
        if flags[4] and _has_axis(fr, h):
            for j in range(n_fan):
                x, y, z = _fan_dir(d, fr, h, ftab, j)
                _put(parent, kind, offset, out, k, h, DIFFRACT, abs(ftab[j, 0]), x, y, z)
                k += 1
    return parent[:k], kind[:k], offset[:k], out[:k]


@njit(cache=True, inline="always")
def _reaches(px, py, pz, x, y, z, center, half, v0, e1, e2, tmin):
    tc = _cube_entry(px, py, pz, x, y, z, center[0], center[1], center[2], half)
    if tc == math.inf:
        return False
    tg, _ = _nearest(px, py, pz, x, y, z, v0, e1, e2, tmin)
    return tc < tg


@njit(cache=True)
def terminal_children(points, d, ng, edge_dir, near_edge, penetrable, index,
                      cone_theta, cone_psi, fan, flags, center, half,
                      v0, e1, e2, tmin, capacity):
    """Children of last-interaction hits that reach the RX cube unobstructed.

    Equivalent to :func:`generate_children` followed by keeping the rays
    whose cube entry precedes every geometry hit (same directions, same
    order), but candidates that cannot meet the cube's bounding sphere are
    skipped before the direction is even formed. Returns ``count`` greater
    than ``capacity`` if the output buffers were too small.
    """
    n = points.shape[0]
    n_cone = cone_theta.shape[0]
    n_fan = fan.shape[0]
    parent = np.empty(capacity, dtype=np.int64)
    kind = np.empty(capacity, dtype=np.int64)
    offset = np.empty(capacity)
    out = np.empty((capacity, 3))
    cone, ftab = _tables(cone_theta, cone_psi, fan)
    fr = hit_frames(d, ng, edge_dir, near_edge)
    spread = 0.0
    for j in range(n_cone):
        spread = max(spread, cone_theta[j])
    bound = 1.01 * math.sqrt(3.0) * half  # bounding-sphere radius of the cube
    count = 0
    for h in range(n):
        px, py, pz = points[h, 0], points[h, 1], points[h, 2]
        vx = center[0] - px
        vy = center[1] - py
        vz = center[2] - pz
        dist = math.sqrt(vx * vx + vy * vy + vz * vz)
        inside = dist <= bound
        alpha = math.pi
        if not inside:
            alpha = math.asin(bound / dist)
            vx /= dist
            vy /= dist
            vz /= dist
        cos_alpha = math.cos(alpha)
        sin_alpha = math.sin(alpha)
        for c in range(2):
            if not flags[c]:
                continue
            if c == 0:
                kd, x, y, z = BACKSCATTER, -d[h, 0], -d[h, 1], -d[h, 2]
            else:
                kd, x, y, z = REFLECT, fr[h, 3], fr[h, 4], fr[h, 5]
            if not inside and x * vx + y * vy + z * vz < cos_alpha - 1e-12:
                continue
            if _reaches(px, py, pz, x, y, z, center, half, v0, e1, e2, tmin):
                if count < capacity:
                    _put(parent, kind, offset, out, count, h, kd, 0.0, x, y, z)
                count += 1
        if flags[2] and n_cone > 0:
            rx, ry, rz = fr[h, 3], fr[h, 4], fr[h, 5]
            theta_u = 0.0
            if not inside:
                cr = rx * vx + ry * vy + rz * vz
                sr = math.sqrt((ry * vz - rz * vy) ** 2 + (rz * vx - rx * vz) ** 2
                               + (rx * vy - ry * vx) ** 2)
                theta_u = math.atan2(sr, cr)
            if inside or theta_u <= spread + alpha:
                for j in range(n_cone):
                    if not inside and abs(cone[j, 0] - theta_u) > alpha:
                        continue
                    ok, x, y, z = _scatter_dir(fr, h, cone, j)
                    if not ok:
                        continue
                    if not inside and x * vx + y * vy + z * vz < cos_alpha - 1e-12:
                        continue
                    if _reaches(px, py, pz, x, y, z, center, half, v0, e1, e2, tmin):
                        if count < capacity:
                            _put(parent, kind, offset, out, count, h, SCATTER,
                                 cone[j, 0], x, y, z)
                        count += 1
        if flags[3] and penetrable[h]:
            ok, x, y, z = _refract_dir(d, fr, h, index[h])
            if ok and (inside or x * vx + y * vy + z * vz >= cos_alpha - 1e-12):
                if _reaches(px, py, pz, x, y, z, center, half, v0, e1, e2, tmin):
                    if count < capacity:
                        _put(parent, kind, offset, out, count, h, PENETRATE, 0.0, x, y, z)
                    count += 1
        if flags[4] and _has_axis(fr, h):
            # the fan lies in the plane perpendicular to the axis; skip it
            # when that plane misses the bounding sphere
            if not inside:
                if abs(fr[h, 13] * vx + fr[h, 14] * vy + fr[h, 15] * vz) > sin_alpha * 1.0001:
                    continue
            for j in range(n_fan):
                x, y, z = _fan_dir(d, fr, h, ftab, j)
                if not inside and x * vx + y * vy + z * vz < cos_alpha - 1e-12:
                    continue
                if _reaches(px, py, pz, x, y, z, center, half, v0, e1, e2, tmin):
                    if count < capacity:
                        _put(parent, kind, offset, out, count, h, DIFFRACT,
                             abs(ftab[j, 0]), x, y, z)
                    count += 1
    return count, parent, kind, offset, out
