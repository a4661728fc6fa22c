# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels: rigid transforms, SAT overlap, bounds checks.

Mirrors lgplan._kernels_py exactly; both backends must return identical
values for identical inputs.
"""

from libc.math cimport sqrt

import numpy as np

BACKEND = "compiled"


def transform_polygon(const double[:, ::1] verts, double x, double y,
                      double cos_t, double sin_t):
    """Rotate local vertices by (cos_t, sin_t) and translate by (x, y)."""
    cdef Py_ssize_t n = verts.shape[0]
    cdef Py_ssize_t i
    out = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double vx, vy
    for i in range(n):
        vx = verts[i, 0]
        vy = verts[i, 1]
        o[i, 0] = cos_t * vx - sin_t * vy + x
        o[i, 1] = sin_t * vx + cos_t * vy + y
    return out


cdef bint _separated_on_edges(const double[:, ::1] a, const double[:, ::1] b,
                              double shrink) noexcept nogil:
    # True if a unit normal of one of a's edges separates the polygons
    # once both have been shrunk by half of `shrink` along every axis.
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double ex, ey, ln, nx, ny, d, lo_a, hi_a, lo_b, hi_b
    for i in range(n):
        j = i + 1
        if j == n:
            j = 0
        ex = a[j, 0] - a[i, 0]
        ey = a[j, 1] - a[i, 1]
        ln = sqrt(ex * ex + ey * ey)
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


def polys_overlap(const double[:, ::1] a, const double[:, ::1] b, double eps):
    """Separating-axis overlap test for convex polygons.

    Both polygons are notionally shrunk by eps, so contacts shallower than
    2*eps on some axis count as non-overlapping.
    """
    cdef double shrink = 2.0 * eps
    if _separated_on_edges(a, b, shrink):
        return False
    if _separated_on_edges(b, a, shrink):
        return False
    return True


def poly_in_bounds(const double[:, ::1] v, double x_min, double x_max,
                   double y_min, double y_max):
    """True iff every vertex lies inside the box, boundary inclusive."""
    cdef Py_ssize_t i
    for i in range(v.shape[0]):
        if v[i, 0] < x_min or v[i, 0] > x_max:
            return False
        if v[i, 1] < y_min or v[i, 1] > y_max:
            return False
    return True


def collide_indices(const double[:, ::1] poly, const double[:, ::1] flat,
                    const long long[::1] offsets, const double[:, ::1] aabbs,
                    double eps):
    """Indices of packed polygons that overlap `poly`.

    `flat` concatenates polygon vertices, `offsets[i]:offsets[i+1]` delimits
    polygon i and `aabbs[i]` holds (x_min, x_max, y_min, y_max).
    """
    cdef double shrink = 2.0 * eps
    cdef Py_ssize_t count = offsets.shape[0] - 1
    cdef Py_ssize_t i, k, lo, hi
    cdef double px_min, px_max, py_min, py_max
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
    hits = np.empty(count, dtype=np.int64)
    cdef long long[::1] h = hits
    cdef Py_ssize_t n_hits = 0
    for i in range(count):
        # exact prefilter: the axis-aligned gap is itself a separating axis
        if px_max - aabbs[i, 0] <= shrink or aabbs[i, 1] - px_min <= shrink:
            continue
        if py_max - aabbs[i, 2] <= shrink or aabbs[i, 3] - py_min <= shrink:
            continue
        lo = offsets[i]
        hi = offsets[i + 1]
        if _separated_on_edges(poly, flat[lo:hi], shrink):
            continue
        if _separated_on_edges(flat[lo:hi], poly, shrink):
            continue
        h[n_hits] = i
        n_hits += 1
    return hits[:n_hits].copy()
