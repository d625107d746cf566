"""Brute-force reference implementations, independent of the library's code paths."""

import math

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


def voxel_dice(a: np.ndarray, b: np.ndarray) -> float:
    a_idx = {tuple(v) for v in np.argwhere(a)}
    b_idx = {tuple(v) for v in np.argwhere(b)}
    if not a_idx and not b_idx:
        return 1.0
    return 2 * len(a_idx & b_idx) / (len(a_idx) + len(b_idx))


def surface(fg: np.ndarray) -> np.ndarray:
    fg = fg.astype(bool)
    eroded = ndimage.binary_erosion(fg, structure=SIX_CONNECTED, border_value=0)
    return fg & ~eroded


def all_pairs_min(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """For each True voxel of ``src``, the distance (mm) to the nearest True voxel of ``dst``."""
    sp = np.asarray(spacing, dtype=float)
    a = np.argwhere(src) * sp
    b = np.argwhere(dst) * sp
    return cdist(a, b).min(axis=1)


def edt_brute(fg: np.ndarray, spacing) -> np.ndarray:
    if not fg.any():
        return np.full(fg.shape, np.inf)
    everything = np.ones(fg.shape, dtype=bool)
    return all_pairs_min(everything, fg, spacing).reshape(fg.shape)


def sorted_percentile(values, p: float) -> float:
    v = sorted(float(x) for x in values)
    r = p / 100.0 * (len(v) - 1)
    lo = math.floor(r)
    if lo + 1 >= len(v):
        return v[-1]
    return v[lo] + (r - lo) * (v[lo + 1] - v[lo])


def hausdorff_brute(a: np.ndarray, b: np.ndarray, spacing, p: float) -> float:
    sa, sb = surface(a), surface(b)
    return max(
        sorted_percentile(all_pairs_min(sa, sb, spacing), p),
        sorted_percentile(all_pairs_min(sb, sa, spacing), p),
    )


def random_pair(rng: np.random.Generator, max_side: int = 16):
    shape = tuple(int(n) for n in rng.integers(2, max_side + 1, size=3))
    spacing = tuple(float(s) for s in rng.uniform(0.3, 5.0, size=3))
    pa, pb = rng.uniform(0.05, 0.6, size=2)
    a = rng.random(shape) < pa
    b = rng.random(shape) < pb
    # blobby variants too, not only salt-and-pepper
    if rng.random() < 0.5:
        a = ndimage.binary_dilation(rng.random(shape) < 0.03, iterations=int(rng.integers(1, 3)))
        b = ndimage.binary_dilation(rng.random(shape) < 0.03, iterations=int(rng.integers(1, 3)))
    if not a.any():
        a[tuple(rng.integers(0, n) for n in shape)] = True
    if not b.any():
        b[tuple(rng.integers(0, n) for n in shape)] = True
    return a, b, spacing
