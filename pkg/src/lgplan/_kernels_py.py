"""Pure Python geometry kernels, the fallback for lgplan._kernels.

Arithmetic is kept line for line equivalent to the compiled version so the
two backends are interchangeable.
"""

import math

import numpy as np

BACKEND = "python"


def transform_polygon(verts, x, y, cos_t, sin_t):
    """Rotate local vertices by (cos_t, sin_t) and translate by (x, y)."""
    n = verts.shape[0]
    out = np.empty((n, 2), dtype=np.float64)
    for i in range(n):
        vx = verts[i, 0]
        vy = verts[i, 1]
        out[i, 0] = cos_t * vx - sin_t * vy + x
        out[i, 1] = sin_t * vx + cos_t * vy + y
    return out


def _separated_on_edges(a, b, shrink):
    n = a.shape[0]
    m = b.shape[0]
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        ex = a[j, 0] - a[i, 0]
        ey = a[j, 1] - a[i, 1]
        ln = math.sqrt(ex * ex + ey * ey)
        if ln < 1e-12:
            continue
        nx = -ey / ln
        ny = ex / ln
        lo_a = a[0, 0] * nx + a[0, 1] * ny
        hi_a = lo_a
        for k in range(1, n):
            d = a[k, 0] * nx + a[k, 1] * ny
            if d < lo_a:
                lo_a = d
            elif d > hi_a:
                hi_a = d
        lo_b = b[0, 0] * nx + b[0, 1] * ny
        hi_b = lo_b
        for k in range(1, m):
            d = b[k, 0] * nx + b[k, 1] * ny
            if d < lo_b:
                lo_b = d
            elif d > hi_b:
                hi_b = d
        if hi_a - lo_b <= shrink or hi_b - lo_a <= shrink:
            return True
    return False


def polys_overlap(a, b, eps):
    """Separating-axis overlap test for convex polygons.

    Both polygons are notionally shrunk by eps, so contacts shallower than
    2*eps on some axis count as non-overlapping.
    """
    shrink = 2.0 * eps
    if _separated_on_edges(a, b, shrink):
        return False
    if _separated_on_edges(b, a, shrink):
        return False
    return True


def poly_in_bounds(v, x_min, x_max, y_min, y_max):
    """True iff every vertex lies inside the box, boundary inclusive."""
    for i in range(v.shape[0]):
        if v[i, 0] < x_min or v[i, 0] > x_max:
            return False
        if v[i, 1] < y_min or v[i, 1] > y_max:
            return False
    return True


def collide_indices(poly, flat, offsets, aabbs, eps):
    """Indices of packed polygons that overlap `poly`.

    `flat` concatenates polygon vertices, `offsets[i]:offsets[i+1]` delimits
    polygon i and `aabbs[i]` holds (x_min, x_max, y_min, y_max).
    """
    shrink = 2.0 * eps
    count = offsets.shape[0] - 1
    px_min = poly[0, 0]
    px_max = px_min
    py_min = poly[0, 1]
    py_max = py_min
    for k in range(1, poly.shape[0]):
        if poly[k, 0] < px_min:
            px_min = poly[k, 0]
        elif poly[k, 0] > px_max:
            px_max = poly[k, 0]
        if poly[k, 1] < py_min:
            py_min = poly[k, 1]
        elif poly[k, 1] > py_max:
            py_max = poly[k, 1]
    hits = []
    for i in range(count):
        # exact prefilter: the axis-aligned gap is itself a separating axis
        if px_max - aabbs[i, 0] <= shrink or aabbs[i, 1] - px_min <= shrink:
            continue
        if py_max - aabbs[i, 2] <= shrink or aabbs[i, 3] - py_min <= shrink:
            continue
        sub = flat[offsets[i]:offsets[i + 1]]
        if _separated_on_edges(poly, sub, shrink):
            continue
        if _separated_on_edges(sub, poly, shrink):
            continue
        hits.append(i)
    return np.asarray(hits, dtype=np.int64)
