"""Pure numpy fallback for the exact squared distance transform.

Same lower-envelope construction as the compiled kernel, but each pass runs
all lines of an axis in lockstep so the Python loop count is proportional to
the line length rather than to the number of voxels.
"""

import numpy as np


def _envelope_lines(f: np.ndarray, w2: float) -> np.ndarray:
    n_lines, n = f.shape
    rows = np.arange(n_lines)
    v = np.zeros((n_lines, n), dtype=np.intp)
    z = np.full((n_lines, n + 1), np.inf)
    k = np.full(n_lines, -1, dtype=np.intp)
    s = np.empty(n_lines)
    for q in range(n):
        fq = f[:, q]
        active = fq != np.inf
        if not active.any():
            continue
        first = active & (k < 0)
        cont = rows[active & (k >= 0)]
        idx = cont
        while idx.size:
            vk = v[idx, k[idx]]
            s_idx = ((fq[idx] + w2 * float(q * q)) - (f[idx, vk] + w2 * (vk * vk).astype(np.float64))) / (
                (2.0 * w2) * (q - vk).astype(np.float64)
            )
            pop = s_idx <= z[idx, k[idx]]
            keep = ~pop
            s[idx[keep]] = s_idx[keep]
            idx = idx[pop]
            k[idx] -= 1
        k[cont] += 1
        v[cont, k[cont]] = q
        z[cont, k[cont]] = s[cont]
        z[cont, k[cont] + 1] = np.inf
        r = rows[first]
        k[r] = 0
        v[r, 0] = q
        z[r, 0] = -np.inf
        z[r, 1] = np.inf

    out = np.full((n_lines, n), np.inf)
    valid = rows[k >= 0]
    if not valid.size:
        return out
    kk = np.zeros(valid.size, dtype=np.intp)
    fv = f[valid]
    for q in range(n):
        while True:
            adv = z[valid, kk + 1] < q
            if not adv.any():
                break
            kk[adv] += 1
        vk = v[valid, kk]
        d = q - vk
        out[valid, q] = w2 * (d * d).astype(np.float64) + fv[np.arange(valid.size), vk]
    return out


def edt_sq(mask, spacing) -> np.ndarray:
    """Squared distance (mm^2) from every voxel to the nearest ``True`` voxel."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 3:
        raise ValueError("mask must be 3D")
    out = np.where(m, 0.0, np.inf)
    if out.size == 0:
        return out
    for axis in (2, 1, 0):
        moved = np.moveaxis(out, axis, -1)
        shape = moved.shape
        lines = np.ascontiguousarray(moved).reshape(-1, shape[-1])
        done = _envelope_lines(lines, float(spacing[axis]) ** 2)
        out = np.moveaxis(done.reshape(shape), -1, axis)
    return np.ascontiguousarray(out)
