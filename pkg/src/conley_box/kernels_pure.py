"""Pure NumPy/Python implementations of the hot kernels.

Drop-in fallback for the compiled extension ``_kernels``; the two must
stay behaviorally identical (the benchmark and the backend parity test
compare them).
"""

from __future__ import annotations

import numpy as np

BACKEND = "pure"


def enclose_batch(points, radii, lo, width, resolution, strides, strict):
    """Boxes within ``radii`` of each point (distance to the closed box).

    Parameters are flat ``float64``/``int64`` arrays; ``strict`` selects
    ``dist < r`` (chain-edge rule) versus ``dist <= r`` (closed
    pad-neighborhood).  Returns ``(targets, starts, outside)`` where
    ``targets[starts[i]:starts[i+1]]`` are the flat box indices for point
    ``i`` and ``outside[i]`` flags points beyond the window.
    """
    pts = np.asarray(points, dtype=float)
    rad = np.asarray(radii, dtype=float)
    n, d = pts.shape
    hi = lo + width * resolution
    outside = (np.any(pts < lo, axis=1) | np.any(pts > hi, axis=1)).astype(np.uint8)

    counts = np.zeros(n, dtype=np.int64)
    chunks: list[np.ndarray] = []

    # Fast path: zero radius, closed matching, point inside the window.
    # The containing box is floor((q - lo)/w); a coordinate exactly on a
    # shared face also touches the lower neighbor.
    simple = (rad == 0.0) & (~strict) & (outside == 0) if not strict else np.zeros(n, dtype=bool)
    if not strict:
        u = (pts - lo) / width
        base = np.floor(u).astype(np.int64)
        np.clip(base, 0, resolution - 1, out=base)
        on_face = (u == base) & (base > 0)
        multi_face = np.any(on_face, axis=1)
        plain = simple & ~multi_face
        flat = base @ strides
        for i in np.nonzero(plain)[0]:
            chunks.append((int(i), np.array([flat[i]], dtype=np.int64)))
            counts[i] = 1
        rest = np.nonzero(~plain)[0]
    else:
        rest = np.arange(n)

    for i in rest:
        q = pts[i]
        r = rad[i]
        i_min = np.floor((q - r - lo) / width).astype(np.int64)
        i_max = np.floor((q + r - lo) / width).astype(np.int64)
        np.clip(i_min, 0, resolution - 1, out=i_min)
        np.clip(i_max, 0, resolution - 1, out=i_max)
        found = []
        idx = i_min.copy()
        while True:
            blo = lo + idx * width
            gap = np.maximum(np.maximum(blo - q, q - (blo + width)), 0.0)
            dist = float(np.sqrt(np.sum(gap * gap)))
            ok = dist < r if strict else dist <= r
            if ok:
                found.append(int(idx @ strides))
            # advance the per-dimension counter
            k = d - 1
            while k >= 0:
                idx[k] += 1
                if idx[k] <= i_max[k]:
                    break
                idx[k] = i_min[k]
                k -= 1
            if k < 0:
                break
        if found:
            found.sort()
            chunks.append((int(i), np.asarray(found, dtype=np.int64)))
            counts[i] = len(found)

    starts = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    targets = np.empty(int(starts[-1]), dtype=np.int64)
    for i, arr in chunks:
        targets[starts[i]:starts[i] + arr.size] = arr
    return targets, starts, outside


def tarjan_scc(indptr, indices, n):
    """Iterative Tarjan over a CSR graph.

    Returns ``(labels, n_components)``.  Components are labeled in
    completion order, which is reverse topological on the condensation:
    every successor component of ``c`` has a smaller label than ``c``.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    UNSET = -1
    order = np.full(n, UNSET, dtype=np.int64)
    low = np.zeros(n, dtype=np.int64)
    onstack = np.zeros(n, dtype=bool)
    labels = np.full(n, UNSET, dtype=np.int64)
    comp_stack: list[int] = []
    counter = 0
    n_comp = 0

    for root in range(n):
        if order[root] != UNSET:
            continue
        work = [(root, indptr[root])]
        order[root] = low[root] = counter
        counter += 1
        comp_stack.append(root)
        onstack[root] = True
        while work:
            v, ptr = work[-1]
            if ptr < indptr[v + 1]:
                work[-1] = (v, ptr + 1)
                w = int(indices[ptr])
                if order[w] == UNSET:
                    order[w] = low[w] = counter
                    counter += 1
                    comp_stack.append(w)
                    onstack[w] = True
                    work.append((w, indptr[w]))
                elif onstack[w]:
                    if order[w] < low[v]:
                        low[v] = order[w]
            else:
                work.pop()
                if work:
                    parent = work[-1][0]
                    if low[v] < low[parent]:
                        low[parent] = low[v]
                if low[v] == order[v]:
                    while True:
                        w = comp_stack.pop()
                        onstack[w] = False
                        labels[w] = n_comp
                        if w == v:
                            break
                    n_comp += 1
    return labels, n_comp
