"""Hot inner loops, compiled with numba when available.

Setting the environment variable ``QPIS_NO_NUMBA=1`` (before import)
selects pure numpy/scipy fallbacks. Both paths implement the same
contracts; ``benchmarks/bench_kernels.py`` compares their throughput.
Results are deterministic within a path; across paths, floating-point
summation order may differ at the last few ulps.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("QPIS_NO_NUMBA", "0") not in ("", "0")

if not _DISABLE:
    try:
        import numba
        from numba import njit, prange

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAS_NUMBA = False
else:
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# 8-connected component labeling (two-pass union-find)
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _find(parent, x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            nxt = parent[x]
            parent[x] = root
            x = nxt
        return root

    @njit(cache=True)
    def _union(parent, a, b):
        ra = _find(parent, a)
        rb = _find(parent, b)
        if ra == rb:
            return ra
        if ra < rb:
            parent[rb] = ra
            return ra
        parent[ra] = rb
        return rb

    @njit(cache=True)
    def _label_components_8_numba(mask):
        h, w = mask.shape
        labels = np.zeros((h, w), dtype=np.int32)
        # new provisional labels form an independent set of the 8-neighborhood
        max_labels = (h // 2 + 1) * (w // 2 + 1) + 2
        parent = np.arange(max_labels, dtype=np.int32)
        nxt = 1
        for i in range(h):
            for j in range(w):
                if not mask[i, j]:
                    continue
                best = 0
                if j > 0 and mask[i, j - 1]:
                    best = labels[i, j - 1]
                if i > 0:
                    if j > 0 and mask[i - 1, j - 1]:
                        cand = labels[i - 1, j - 1]
                        best = cand if best == 0 else _union(parent, best, cand)
                    if mask[i - 1, j]:
                        cand = labels[i - 1, j]
                        best = cand if best == 0 else _union(parent, best, cand)
                    if j < w - 1 and mask[i - 1, j + 1]:
                        cand = labels[i - 1, j + 1]
                        best = cand if best == 0 else _union(parent, best, cand)
                if best == 0:
                    labels[i, j] = nxt
                    nxt += 1
                else:
                    labels[i, j] = best
        for i in range(h):
            for j in range(w):
                if labels[i, j] != 0:
                    labels[i, j] = _find(parent, labels[i, j])
        return labels

    def _label_components_8_raw(mask: np.ndarray) -> np.ndarray:
        return _label_components_8_numba(np.ascontiguousarray(mask, dtype=np.bool_))

else:

    def _label_components_8_raw(mask: np.ndarray) -> np.ndarray:
        from scipy import ndimage

        labels, _ = ndimage.label(mask, structure=np.ones((3, 3), dtype=np.int32))
        return labels.astype(np.int32)


def relabel_raster_order(labels: np.ndarray) -> np.ndarray:
    """Remap component ids to 1..n in raster-scan discovery order."""
    flat = labels.ravel()
    nonzero = flat[flat != 0]
    if nonzero.size == 0:
        return np.zeros_like(labels, dtype=np.int32)
    # first occurrence order of each id in the flat scan
    _, first_idx = np.unique(nonzero, return_index=True)
    order = np.argsort(np.argsort(first_idx))  # rank of each unique id by discovery
    mapping = np.zeros(int(flat.max()) + 1, dtype=np.int32)
    unique_ids = np.unique(nonzero)
    mapping[unique_ids] = order.astype(np.int32) + 1
    return mapping[labels]


def label_components_8(mask: np.ndarray) -> np.ndarray:
    """Label 8-connected components of a boolean mask.

    Ids are assigned 1..n in raster-scan discovery order; background is 0.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("label_components_8 expects a 2-D mask")
    return relabel_raster_order(_label_components_8_raw(mask))


# ---------------------------------------------------------------------------
# Spectral accumulation of moving Gaussian sources
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True, parallel=True)
    def _accumulate_moving_sources_numba(out, qy, qx, envelope, xy0, vel, dt):
        n_frames = out.shape[0]
        h = qy.shape[0]
        w = qx.shape[0]
        n = xy0.shape[0]
        for t in range(n_frames):
            tt = t * dt
            for i in prange(h):
                for j in range(w):
                    acc_re = 0.0
                    acc_im = 0.0
                    for p in range(n):
                        ph = -(qx[j] * (xy0[p, 0] + vel[p, 0] * tt)
                               + qy[i] * (xy0[p, 1] + vel[p, 1] * tt))
                        acc_re += np.cos(ph)
                        acc_im += np.sin(ph)
                    out[t, i, j] = envelope[i, j] * complex(acc_re, acc_im)

    def accumulate_moving_sources(qy, qx, envelope, xy0, vel, dt, n_frames):
        out = np.empty((n_frames, qy.size, qx.size), dtype=np.complex128)
        _accumulate_moving_sources_numba(
            out,
            np.ascontiguousarray(qy), np.ascontiguousarray(qx),
            np.ascontiguousarray(envelope, dtype=np.float64),
            np.ascontiguousarray(xy0, dtype=np.float64),
            np.ascontiguousarray(vel, dtype=np.float64),
            float(dt),
        )
        return out

else:

    def accumulate_moving_sources(qy, qx, envelope, xy0, vel, dt, n_frames):
        """Sum envelope * exp(-i q . (p0 + v t)) over sources, per frame.

        The phase is separable in (qy, qx), so each source contributes an
        outer product of two 1-D complex exponentials.
        """
        out = np.zeros((n_frames, qy.size, qx.size), dtype=np.complex128)
        for t in range(n_frames):
            tt = t * dt
            for p in range(xy0.shape[0]):
                ey = np.exp(-1j * qy * (xy0[p, 1] + vel[p, 1] * tt))
                ex = np.exp(-1j * qx * (xy0[p, 0] + vel[p, 0] * tt))
                out[t] += np.multiply.outer(ey, ex)
            out[t] *= envelope
        return out


# ---------------------------------------------------------------------------
# Radial binning accumulation
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _radial_bin_numba(q, values, q_max, n_bins):
        sums = np.zeros(n_bins, dtype=np.float64)
        qsums = np.zeros(n_bins, dtype=np.float64)
        counts = np.zeros(n_bins, dtype=np.int64)
        step = q_max / n_bins
        for k in range(q.size):
            qk = q[k]
            if qk <= 0.0 or qk > q_max:
                continue
            idx = int(np.ceil(qk / step)) - 1
            if idx < 0:
                idx = 0
            elif idx >= n_bins:
                idx = n_bins - 1
            sums[idx] += values[k]
            qsums[idx] += qk
            counts[idx] += 1
        return sums, qsums, counts

    def radial_bin_accumulate(q, values, q_max, n_bins):
        return _radial_bin_numba(
            np.ascontiguousarray(q, dtype=np.float64),
            np.ascontiguousarray(values, dtype=np.float64),
            float(q_max), int(n_bins),
        )

else:

    def radial_bin_accumulate(q, values, q_max, n_bins):
        """Per-bin (sum, q-sum, count) over bins ((i)*d, (i+1)*d], d = q_max/n."""
        q = np.asarray(q, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        keep = (q > 0.0) & (q <= q_max)
        q, values = q[keep], values[keep]
        step = q_max / n_bins
        idx = np.clip(np.ceil(q / step).astype(np.int64) - 1, 0, n_bins - 1)
        sums = np.bincount(idx, weights=values, minlength=n_bins)
        qsums = np.bincount(idx, weights=q, minlength=n_bins)
        counts = np.bincount(idx, minlength=n_bins)
        return sums, qsums, counts
