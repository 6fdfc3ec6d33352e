"""Exact s-t min cut on pixel grid graphs via Dinic's algorithm.

The solver works on a forward-star residual representation (paired arcs, so
arc ``e ^ 1`` is the reverse of ``e``). Saturation tests use strict ``> 0``:
the bottleneck arc of every augmenting path is driven to exactly 0.0 by IEEE
subtraction, which guarantees termination without an epsilon.

The kernels are plain Python functions compiled with numba when available;
without numba the same code runs interpreted (slow but identical results).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _build_forward_star(n_nodes, src, dst, cap_fwd, cap_rev):
    m = 2 * src.shape[0]
    head = np.full(n_nodes, -1, dtype=np.int64)
    nxt = np.empty(m, dtype=np.int64)
    to = np.empty(m, dtype=np.int64)
    cap = np.empty(m, dtype=np.float64)
    for i in range(src.shape[0]):
        e = 2 * i
        to[e] = dst[i]
        cap[e] = cap_fwd[i]
        nxt[e] = head[src[i]]
        head[src[i]] = e
        to[e + 1] = src[i]
        cap[e + 1] = cap_rev[i]
        nxt[e + 1] = head[dst[i]]
        head[dst[i]] = e + 1
    return head, nxt, to, cap


def _dinic(head, nxt, to, cap, n, s, t, level):
    total = 0.0
    it = np.empty(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    stack_v = np.empty(n + 1, dtype=np.int64)
    stack_e = np.empty(n + 1, dtype=np.int64)
    while True:
        for v in range(n):
            level[v] = -1
        level[s] = 0
        queue[0] = s
        qh, qt = 0, 1
        while qh < qt:
            v = queue[qh]
            qh += 1
            e = head[v]
            while e != -1:
                w = to[e]
                if cap[e] > 0.0 and level[w] < 0:
                    level[w] = level[v] + 1
                    queue[qt] = w
                    qt += 1
                e = nxt[e]
        if level[t] < 0:
            return total
        for v in range(n):
            it[v] = head[v]
        while True:
            top = 0
            stack_v[0] = s
            found = False
            while top >= 0:
                v = stack_v[top]
                if v == t:
                    found = True
                    break
                e = it[v]
                advanced = False
                while e != -1:
                    w = to[e]
                    if cap[e] > 0.0 and level[w] == level[v] + 1:
                        stack_e[top] = e
                        top += 1
                        stack_v[top] = w
                        advanced = True
                        break
                    e = nxt[e]
                    it[v] = e
                if not advanced:
                    level[v] = -1
                    top -= 1
            if not found:
                break
            bott = np.inf
            for i in range(top):
                if cap[stack_e[i]] < bott:
                    bott = cap[stack_e[i]]
            for i in range(top):
                e = stack_e[i]
                cap[e] -= bott
                cap[e ^ 1] += bott
            total += bott


try:  # pragma: no cover - exercised implicitly wherever numba is installed
    from numba import njit

    _build_forward_star = njit(cache=True, nogil=True)(_build_forward_star)
    _dinic = njit(cache=True, nogil=True)(_dinic)
except ImportError:  # pragma: no cover
    pass


@dataclass
class GridGraph:
    """Pixel grid flow network: per-pixel terminal capacities plus undirected n-links.

    ``t_source[y, x]`` is the capacity of the source->pixel arc (charged when
    the pixel ends background-side); ``t_sink`` the pixel->sink arc (charged
    when foreground-side). ``nlink_pairs`` holds flat pixel index pairs with
    symmetric weights ``nlink_weights``.
    """

    width: int
    height: int
    t_source: np.ndarray
    t_sink: np.ndarray
    nlink_pairs: np.ndarray
    nlink_weights: np.ndarray

    def __post_init__(self):
        shape = (self.height, self.width)
        if self.t_source.shape != shape or self.t_sink.shape != shape:
            raise ValueError("terminal capacity grids must match width/height")
        if self.nlink_pairs.shape[0] != self.nlink_weights.shape[0]:
            raise ValueError("n-link pair/weight length mismatch")
        for arr in (self.t_source, self.t_sink, self.nlink_weights):
            if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0):
                raise ValueError("capacities must be finite and >= 0")

    @property
    def n_pixels(self) -> int:
        return self.width * self.height


def grid_nlink_pairs(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """8-connected neighbor pairs (flat indices) and their geometric distances.

    Each undirected pair appears once, in scan order over the directions
    right, down, down-right, down-left.
    """
    idx = np.arange(width * height, dtype=np.int64).reshape(height, width)
    pairs = []
    dists = []
    for dy, dx, dist in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, np.sqrt(2.0)), (1, -1, np.sqrt(2.0))):
        ys = slice(0, height - dy)
        xs = slice(max(0, -dx), width - max(0, dx))
        a = idx[ys, xs]
        b = idx[dy:height, max(0, dx) : width + min(0, dx)]
        pairs.append(np.stack([a.ravel(), b.ravel()], axis=1))
        dists.append(np.full(a.size, dist))
    return np.concatenate(pairs, axis=0), np.concatenate(dists)


def min_cut(g: GridGraph, return_value: bool = False):
    """Exact minimum s-t cut; returns the foreground (source-side) pixel map.

    For graphs with a unique minimum cut the labeling does not depend on node
    ordering: it is the set of pixels residual-reachable from the source.
    """
    npix = g.n_pixels
    s = npix
    t = npix + 1
    src_caps = g.t_source.ravel().astype(np.float64)
    snk_caps = g.t_sink.ravel().astype(np.float64)

    pix = np.arange(npix, dtype=np.int64)
    zeros = np.zeros(npix)
    src = np.concatenate([np.full(npix, s, dtype=np.int64), pix, g.nlink_pairs[:, 0]])
    dst = np.concatenate([pix, np.full(npix, t, dtype=np.int64), g.nlink_pairs[:, 1]])
    cap_fwd = np.concatenate([src_caps, snk_caps, g.nlink_weights.astype(np.float64)])
    cap_rev = np.concatenate([zeros, zeros, g.nlink_weights.astype(np.float64)])

    head, nxt, to, cap = _build_forward_star(npix + 2, src, dst, cap_fwd, cap_rev)
    level = np.empty(npix + 2, dtype=np.int64)
    flow = _dinic(head, nxt, to, cap, npix + 2, s, t, level)
    fg = (level[:npix] >= 0).reshape(g.height, g.width)
    if return_value:
        return fg, float(flow)
    return fg
