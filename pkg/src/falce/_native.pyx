# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel kernels.

Mirrors ``falce._reference`` operation for operation.  Expression trees
and evaluation order match the NumPy code exactly, and the build forces
``-ffp-contract=off``, so outputs are bit-identical to the fallback.
"""

import numpy as np


def resize_bilinear(const double[:, ::1] src, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t in_h = src.shape[0]
    cdef Py_ssize_t in_w = src.shape[1]
    cdef double scale_y = <double>in_h / <double>out_h
    cdef double scale_x = <double>in_w / <double>out_w

    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    x0_arr = np.empty(out_w, dtype=np.intp)
    x1_arr = np.empty(out_w, dtype=np.intp)
    fx_arr = np.empty(out_w, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t[::1] x0s = x0_arr
    cdef Py_ssize_t[::1] x1s = x1_arr
    cdef double[::1] fxs = fx_arr

    cdef Py_ssize_t y, x, y0, y1, x0, x1
    cdef double sy, sx, fy, fx, top, bot, v

    for x in range(out_w):
        sx = (<double>x + 0.5) * scale_x - 0.5
        if sx < 0.0:
            sx = 0.0
        elif sx > <double>(in_w - 1):
            sx = <double>(in_w - 1)
        x0 = <Py_ssize_t>sx
        x1 = x0 + 1
        if x1 > in_w - 1:
            x1 = in_w - 1
        x0s[x] = x0
        x1s[x] = x1
        fxs[x] = sx - <double>x0

    for y in range(out_h):
        sy = (<double>y + 0.5) * scale_y - 0.5
        if sy < 0.0:
            sy = 0.0
        elif sy > <double>(in_h - 1):
            sy = <double>(in_h - 1)
        y0 = <Py_ssize_t>sy
        y1 = y0 + 1
        if y1 > in_h - 1:
            y1 = in_h - 1
        fy = sy - <double>y0
        for x in range(out_w):
            x0 = x0s[x]
            x1 = x1s[x]
            fx = fxs[x]
            top = (1.0 - fx) * src[y0, x0] + fx * src[y0, x1]
            bot = (1.0 - fx) * src[y1, x0] + fx * src[y1, x1]
            v = (1.0 - fy) * top + fy * bot
            if v < 0.0:
                v = 0.0
            elif v > 1.0:
                v = 1.0
            out[y, x] = v
    return out_arr


def blend_tile_maps(const int[:, ::1] bins_idx, const double[:, ::1] vals,
                    const double[:, ::1] luts, const unsigned char[::1] degen,
                    const int[::1] ty0, const double[::1] wy,
                    const int[::1] tx0, const double[::1] wx,
                    Py_ssize_t tiles_y, Py_ssize_t tiles_x):
    cdef Py_ssize_t h = bins_idx.shape[0]
    cdef Py_ssize_t w = bins_idx.shape[1]
    out_arr = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    cdef Py_ssize_t y, x, ry0, ry1, cx0, cx1, b
    cdef Py_ssize_t t00, t01, t10, t11
    cdef double v, m00, m01, m10, m11, top, bot, res, wyv, wxv
    cdef bint d00, d01, d10, d11

    for y in range(h):
        ry0 = ty0[y]
        ry1 = ry0 + 1
        if ry1 > tiles_y - 1:
            ry1 = tiles_y - 1
        wyv = wy[y]
        for x in range(w):
            cx0 = tx0[x]
            cx1 = cx0 + 1
            if cx1 > tiles_x - 1:
                cx1 = tiles_x - 1
            wxv = wx[x]
            b = bins_idx[y, x]
            v = vals[y, x]
            t00 = ry0 * tiles_x + cx0
            t01 = ry0 * tiles_x + cx1
            t10 = ry1 * tiles_x + cx0
            t11 = ry1 * tiles_x + cx1
            d00 = degen[t00]
            d01 = degen[t01]
            d10 = degen[t10]
            d11 = degen[t11]
            if d00 and d01 and d10 and d11:
                res = v
            else:
                m00 = v if d00 else luts[t00, b]
                m01 = v if d01 else luts[t01, b]
                m10 = v if d10 else luts[t10, b]
                m11 = v if d11 else luts[t11, b]
                top = (1.0 - wxv) * m00 + wxv * m01
                bot = (1.0 - wxv) * m10 + wxv * m11
                res = (1.0 - wyv) * top + wyv * bot
            if res < 0.0:
                res = 0.0
            elif res > 1.0:
                res = 1.0
            out[y, x] = res
    return out_arr


def erode(const unsigned char[:, ::1] mask, const int[:, ::1] offsets):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef Py_ssize_t k = offsets.shape[0]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, i, yy, xx
    cdef bint keep
    for y in range(h):
        for x in range(w):
            keep = True
            for i in range(k):
                yy = y + offsets[i, 0]
                xx = x + offsets[i, 1]
                if yy < 0 or yy >= h or xx < 0 or xx >= w or mask[yy, xx] == 0:
                    keep = False
                    break
            out[y, x] = 1 if keep else 0
    return out_arr


def dilate(const unsigned char[:, ::1] mask, const int[:, ::1] offsets):
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    cdef Py_ssize_t k = offsets.shape[0]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, i, yy, xx
    cdef bint hit
    for y in range(h):
        for x in range(w):
            hit = False
            for i in range(k):
                yy = y + offsets[i, 0]
                xx = x + offsets[i, 1]
                if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] != 0:
                    hit = True
                    break
            out[y, x] = 1 if hit else 0
    return out_arr


def largest_component(const unsigned char[:, ::1] mask):
    """Largest 8-connected component; area ties keep the earliest one."""
    cdef Py_ssize_t h = mask.shape[0]
    cdef Py_ssize_t w = mask.shape[1]
    labels_arr = np.full((h, w), -1, dtype=np.intp)
    stack_arr = np.empty(h * w, dtype=np.intp)
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef Py_ssize_t[:, ::1] labels = labels_arr
    cdef Py_ssize_t[::1] stack = stack_arr
    cdef unsigned char[:, ::1] out = out_arr

    cdef Py_ssize_t y, x, yy, xx, ny, nx, top, label, best_label
    cdef Py_ssize_t area, best_area
    cdef Py_ssize_t dy, dx

    label = 0
    best_label = -1
    best_area = 0
    for y in range(h):
        for x in range(w):
            if mask[y, x] == 0 or labels[y, x] >= 0:
                continue
            area = 0
            top = 0
            stack[top] = y * w + x
            top += 1
            labels[y, x] = label
            while top > 0:
                top -= 1
                yy = stack[top] // w
                xx = stack[top] % w
                area += 1
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        if dy == 0 and dx == 0:
                            continue
                        ny = yy + dy
                        nx = xx + dx
                        if (0 <= ny < h and 0 <= nx < w
                                and mask[ny, nx] != 0 and labels[ny, nx] < 0):
                            labels[ny, nx] = label
                            stack[top] = ny * w + nx
                            top += 1
            if area > best_area:
                best_area = area
                best_label = label
            label += 1
    if best_label >= 0:
        for y in range(h):
            for x in range(w):
                if labels[y, x] == best_label:
                    out[y, x] = 1
    return out_arr
