"""Compiled Fincke-Pohst enumeration kernels.

All kernels take a (reduced) basis ``B`` whose *columns* generate the lattice
and a coefficient shift ``t``; the enumerated set is ``{B (z + t) : z in Z^l}``.
Pruning uses the R factor of ``B = QR``; membership decisions are made on the
point ``B (z + t)`` recomputed from the basis.
"""

import numpy as np
from numba import njit

# Relative slack on the pruning radius; final decisions are exact on doubles.
PRUNE_SLACK = 1e-9


@njit(cache=True)
def _triangular(B):
    Q, R = np.linalg.qr(B)
    return R


@njit(cache=True)
def _center(R, z, t, i, l):
    acc = 0.0
    for j in range(i + 1, l):
        acc += R[i, j] * (z[j] + t[j])
    return -acc / R[i, i] - t[i]


@njit(cache=True)
def _level_sq(R, z, t, i, l):
    acc = 0.0
    for j in range(i, l):
        acc += R[i, j] * (z[j] + t[j])
    return acc * acc


@njit(cache=True)
def count_cell(B, t, m, c, u, u_even, y_lo2, y_hi2, hi_closed, tol, max_nodes):
    """Count points with ``y_lo2 <= |y|^2 < y_hi2`` and ``|x_i| |y|^{u_i} < c_i``.

    With ``hi_closed`` the upper bound is inclusive.  Returns
    ``(count, sensitive, nodes)``; ``sensitive`` counts enumerated points whose
    membership would change under a relative perturbation ``tol`` of any
    inequality, and ``nodes == -1`` signals that ``max_nodes`` was exceeded.
    """
    l = B.shape[0]
    R = _triangular(B)
    R2 = 0.0
    for i in range(m):
        R2 += c[i] * c[i]
    R2 = (R2 + y_hi2) * (1.0 + PRUNE_SLACK)
    z = np.zeros(l)
    hi = np.zeros(l)
    partial = np.zeros(l + 1)
    v = np.zeros(l)
    count = 0
    sensitive = 0
    nodes = 0
    i = l - 1
    ctr = -t[i]
    rad = np.sqrt(R2) / abs(R[i, i])
    z[i] = np.ceil(ctr - rad)
    hi[i] = np.floor(ctr + rad)
    while True:
        if z[i] > hi[i]:
            i += 1
            if i == l:
                break
            z[i] += 1.0
            continue
        p = partial[i + 1] + _level_sq(R, z, t, i, l)
        if p > R2:
            z[i] += 1.0
            continue
        nodes += 1
        if nodes > max_nodes:
            return count, sensitive, -1
        if i > 0:
            partial[i] = p
            i -= 1
            ctr = _center(R, z, t, i, l)
            rad = np.sqrt(max(R2 - partial[i + 1], 0.0)) / abs(R[i, i])
            z[i] = np.ceil(ctr - rad)
            hi[i] = np.floor(ctr + rad)
            continue
        # leaf
        for a in range(l):
            acc = 0.0
            for b in range(l):
                acc += B[a, b] * (z[b] + t[b])
            v[a] = acc
        ny2 = 0.0
        for a in range(m, l):
            ny2 += v[a] * v[a]
        if hi_closed:
            inside = ny2 >= y_lo2 and ny2 <= y_hi2
        else:
            inside = ny2 >= y_lo2 and ny2 < y_hi2
        loose = ny2 >= y_lo2 * (1.0 - tol) and ny2 <= y_hi2 * (1.0 + tol)
        tight = ny2 >= y_lo2 * (1.0 + tol) and ny2 < y_hi2 * (1.0 - tol)
        for a in range(m):
            if u_even[a] > 0:
                w = 1.0
                for _ in range(u_even[a]):
                    w *= ny2
            else:
                w = ny2 ** (u[a] / 2.0)
            s = abs(v[a]) * w
            inside = inside and s < c[a]
            loose = loose and s < c[a] * (1.0 + tol)
            tight = tight and s < c[a] * (1.0 - tol)
        if inside:
            count += 1
        if loose and not tight:
            sensitive += 1
        z[0] += 1.0
    return count, sensitive, nodes


@njit(cache=True)
def list_ball(B, t, r2, out):
    """Write coefficient vectors ``z`` with ``|B (z + t)|^2 <= r2`` into ``out``.

    Returns the number of points found; when it exceeds ``out.shape[0]`` only
    the count is meaningful (call again with a larger buffer).
    """
    l = B.shape[0]
    R = _triangular(B)
    R2 = r2 * (1.0 + PRUNE_SLACK) + 1e-300
    z = np.zeros(l)
    hi = np.zeros(l)
    partial = np.zeros(l + 1)
    found = 0
    cap = out.shape[0]
    i = l - 1
    ctr = -t[i]
    rad = np.sqrt(R2) / abs(R[i, i])
    z[i] = np.ceil(ctr - rad)
    hi[i] = np.floor(ctr + rad)
    while True:
        if z[i] > hi[i]:
            i += 1
            if i == l:
                break
            z[i] += 1.0
            continue
        p = partial[i + 1] + _level_sq(R, z, t, i, l)
        if p > R2:
            z[i] += 1.0
            continue
        if i > 0:
            partial[i] = p
            i -= 1
            ctr = _center(R, z, t, i, l)
            rad = np.sqrt(max(R2 - partial[i + 1], 0.0)) / abs(R[i, i])
            z[i] = np.ceil(ctr - rad)
            hi[i] = np.floor(ctr + rad)
            continue
        n2 = 0.0
        for a in range(l):
            acc = 0.0
            for b in range(l):
                acc += B[a, b] * (z[b] + t[b])
            n2 += acc * acc
        if n2 <= r2:
            if found < cap:
                for a in range(l):
                    out[found, a] = z[a]
            found += 1
        z[0] += 1.0
    return found
