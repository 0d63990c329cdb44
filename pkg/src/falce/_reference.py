"""NumPy implementations of the per-pixel kernels.

These are the fallback used when the compiled extension is unavailable
(or disabled via ``FALCE_PURE_PYTHON=1``).  The compiled module mirrors
each routine operation for operation: both backends evaluate the same
IEEE-754 expression trees in the same order, so their outputs are
bit-identical, not merely close.
"""

import numpy as np


def resize_bilinear(src, out_h, out_w):
    """Bilinear resample with half-pixel centre alignment and edge clamp.

    Sample positions follow ``s = (d + 0.5) * (in / out) - 0.5`` per axis,
    clamped to the valid index range before interpolation.
    """
    in_h, in_w = src.shape
    scale_y = in_h / out_h
    scale_x = in_w / out_w
    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5
    np.clip(sy, 0.0, float(in_h - 1), out=sy)
    np.clip(sx, 0.0, float(in_w - 1), out=sx)
    y0 = sy.astype(np.int64)
    x0 = sx.astype(np.int64)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    p00 = src[np.ix_(y0, x0)]
    p01 = src[np.ix_(y0, x1)]
    p10 = src[np.ix_(y1, x0)]
    p11 = src[np.ix_(y1, x1)]
    top = (1.0 - fx) * p00 + fx * p01
    bot = (1.0 - fx) * p10 + fx * p11
    out = (1.0 - fy) * top + fy * bot
    return np.clip(out, 0.0, 1.0)


def blend_tile_maps(bins_idx, vals, luts, degen, ty0, wy, tx0, wx, tiles_y, tiles_x):
    """Blend per-tile transfer functions bilinearly at every pixel.

    ``luts`` holds one lookup table per tile (row-major tile order); a
    tile flagged in ``degen`` contributes the untouched pixel value
    instead of a table lookup.  ``ty0``/``wy`` give, per image row, the
    lower bracketing tile row and the fractional weight of the upper one
    (``tx0``/``wx`` likewise per column).
    """
    ty1 = np.minimum(ty0 + 1, tiles_y - 1)
    tx1 = np.minimum(tx0 + 1, tiles_x - 1)
    t00 = ty0[:, None] * tiles_x + tx0[None, :]
    t01 = ty0[:, None] * tiles_x + tx1[None, :]
    t10 = ty1[:, None] * tiles_x + tx0[None, :]
    t11 = ty1[:, None] * tiles_x + tx1[None, :]
    d = degen.astype(bool)
    b = bins_idx
    m00 = np.where(d[t00], vals, luts[t00, b])
    m01 = np.where(d[t01], vals, luts[t01, b])
    m10 = np.where(d[t10], vals, luts[t10, b])
    m11 = np.where(d[t11], vals, luts[t11, b])
    wyc = wy[:, None]
    wxc = wx[None, :]
    top = (1.0 - wxc) * m00 + wxc * m01
    bot = (1.0 - wxc) * m10 + wxc * m11
    out = (1.0 - wyc) * top + wyc * bot
    all_deg = d[t00] & d[t01] & d[t10] & d[t11]
    out = np.where(all_deg, vals, out)
    return np.clip(out, 0.0, 1.0)


def _padded(mask, pad):
    h, w = mask.shape
    buf = np.zeros((h + 2 * pad, w + 2 * pad), dtype=np.uint8)
    buf[pad:pad + h, pad:pad + w] = mask
    return buf


def erode(mask, offsets):
    """Binary erosion; pixels outside the image count as background."""
    h, w = mask.shape
    pad = int(np.abs(offsets).max()) if len(offsets) else 0
    buf = _padded(mask, pad)
    out = np.ones((h, w), dtype=bool)
    for dy, dx in offsets:
        out &= buf[pad + dy:pad + dy + h, pad + dx:pad + dx + w].astype(bool)
    return out.astype(np.uint8)


def dilate(mask, offsets):
    """Binary dilation by a symmetric structuring element."""
    h, w = mask.shape
    pad = int(np.abs(offsets).max()) if len(offsets) else 0
    buf = _padded(mask, pad)
    out = np.zeros((h, w), dtype=bool)
    for dy, dx in offsets:
        out |= buf[pad + dy:pad + dy + h, pad + dx:pad + dx + w].astype(bool)
    return out.astype(np.uint8)


def largest_component(mask):
    """Keep only the largest 8-connected foreground component.

    Ties on area go to the component whose first pixel in row-major scan
    order comes earliest.  Implemented with run-based union-find.
    """
    h, w = mask.shape
    out = np.zeros((h, w), dtype=np.uint8)
    parent = []

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            if rb < ra:
                ra, rb = rb, ra
            parent[rb] = ra

    runs = []          # (row, start, end, run_id) in scan order
    prev_row = []
    for y in range(h):
        row = mask[y].astype(bool)
        if not row.any():
            prev_row = []
            continue
        edges = np.flatnonzero(np.diff(np.concatenate(([0], row.view(np.uint8), [0]))))
        cur_row = []
        for s, e in zip(edges[::2], edges[1::2]):
            rid = len(parent)
            parent.append(rid)
            runs.append((y, int(s), int(e), rid))
            cur_row.append((int(s), int(e), rid))
            # 8-connectivity: the previous-row run may touch diagonally
            for ps, pe, pid in prev_row:
                if ps <= e and pe >= s:
                    union(rid, pid)
        prev_row = cur_row
    if not runs:
        return out

    area = {}
    first = {}
    for y, s, e, rid in runs:
        root = find(rid)
        area[root] = area.get(root, 0) + (e - s)
        if root not in first:
            first[root] = (y, s)
    best = min(area, key=lambda r: (-area[r], first[r]))
    for y, s, e, rid in runs:
        if find(rid) == best:
            out[y, s:e] = 1
    return out
