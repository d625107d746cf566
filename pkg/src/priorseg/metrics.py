"""Overlap and surface-distance metrics between ground-truth and predicted masks.

Distances are measured between voxel centres in millimetres, using the grid
spacing from the header. Surfaces are the 6-connected boundary voxels of a
mask, where the space outside the grid counts as background.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._kernels import edt_sq
from .errors import EmptyMask
from .nifti_io import LabelMap, Volume3D, check_aligned

PERCENTILE_RULE = "linear interpolation, rank = p/100 * (n - 1) on sorted values"
HD_DIRECTION_RULE = "max of the two directed percentile distances"


@dataclass(frozen=True, eq=False)
class SurfaceSet:
    voxels: np.ndarray  # (K, 3) integer indices
    spacing: tuple[float, float, float]

    def __len__(self) -> int:
        return len(self.voxels)


@dataclass(frozen=True)
class MetricResult:
    dsc: float
    hd_mm: float | None
    hd95_mm: float | None
    voxel_counts: tuple[int, int, int]  # |gt|, |pred|, |gt & pred|
    percentile: float = 95.0


def _dice_counts(x: np.ndarray, y: np.ndarray) -> tuple[float, tuple[int, int, int]]:
    nx, ny = int(np.count_nonzero(x)), int(np.count_nonzero(y))
    both = int(np.count_nonzero(x & y))
    if nx + ny == 0:
        return 1.0, (0, 0, 0)
    return 2.0 * both / (nx + ny), (nx, ny, both)


def dice(gt: LabelMap, pred: LabelMap) -> float:
    check_aligned(gt, pred)
    return _dice_counts(gt.foreground, pred.foreground)[0]


def surface_mask(fg: np.ndarray) -> np.ndarray:
    """Boolean mask of foreground voxels with at least one background face neighbour."""
    fg = np.asarray(fg, dtype=bool)
    interior = fg.copy()
    for axis in range(3):
        n = fg.shape[axis]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, n - 1)
        hi[axis] = slice(1, n)
        interior[tuple(hi)] &= fg[tuple(lo)]
        interior[tuple(lo)] &= fg[tuple(hi)]
        edge = [slice(None)] * 3
        edge[axis] = 0
        interior[tuple(edge)] = False
        edge[axis] = n - 1
        interior[tuple(edge)] = False
    return fg & ~interior


def extract_surface(mask: LabelMap) -> SurfaceSet:
    return SurfaceSet(np.argwhere(surface_mask(mask.foreground)), mask.spacing)


def edt(mask: LabelMap) -> Volume3D:
    """Distance in mm from each voxel to the nearest foreground voxel (inf if none)."""
    dist = np.sqrt(edt_sq(mask.foreground, mask.spacing))
    return Volume3D(replace(mask.header, datatype="float32"), dist)


def _bbox(a: np.ndarray, b: np.ndarray) -> tuple[slice, ...]:
    out = []
    for axis in range(3):
        other = tuple(i for i in range(3) if i != axis)
        hit = np.flatnonzero(a.any(axis=other) | b.any(axis=other))
        out.append(slice(int(hit[0]), int(hit[-1]) + 1))
    return tuple(out)


def directed_distances(src: np.ndarray, dst: np.ndarray, spacing) -> np.ndarray:
    """Distance from every ``src`` surface voxel to the nearest ``dst`` surface voxel.

    Both inputs are surface masks. The transform runs only over their joint
    bounding box, which holds every site and every query point.
    """
    box = _bbox(src, dst)
    sq = edt_sq(dst[box], spacing)
    return np.sqrt(sq[src[box]])


def percentile_of(values: np.ndarray, percentile: float) -> float:
    if percentile >= 100.0:
        return float(np.max(values))
    return float(np.percentile(values, percentile, method="linear"))


def _surfaces(gt: LabelMap, pred: LabelMap) -> tuple[np.ndarray, np.ndarray]:
    check_aligned(gt, pred)
    fx, fy = gt.foreground, pred.foreground
    if not fx.any():
        raise EmptyMask("ground truth mask is empty; Hausdorff distance undefined")
    if not fy.any():
        raise EmptyMask("predicted mask is empty; Hausdorff distance undefined")
    box = _bbox(fx, fy)
    return surface_mask(fx[box]), surface_mask(fy[box])


def hausdorff(gt: LabelMap, pred: LabelMap, percentile: float = 100.0) -> float:
    """Percentile Hausdorff distance in mm; ``percentile=100`` is the classic HD."""
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must lie in (0, 100], got {percentile}")
    sx, sy = _surfaces(gt, pred)
    spacing = gt.spacing
    return max(
        percentile_of(directed_distances(sx, sy, spacing), percentile),
        percentile_of(directed_distances(sy, sx, spacing), percentile),
    )


def evaluate_pair(gt: LabelMap, pred: LabelMap, percentile: float = 95.0) -> MetricResult:
    """DSC, HD and percentile HD in one go; HD fields are ``None`` when a mask is empty."""
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must lie in (0, 100], got {percentile}")
    check_aligned(gt, pred)
    fx, fy = gt.foreground, pred.foreground
    if not (fx.any() or fy.any()):
        return MetricResult(1.0, None, None, (0, 0, 0), percentile)
    # nothing outside the joint bounding box touches any of the metrics
    box = _bbox(fx, fy)
    fx, fy = fx[box], fy[box]
    dsc, counts = _dice_counts(fx, fy)
    sx, sy = surface_mask(fx), surface_mask(fy)
    if not (sx.any() and sy.any()):
        return MetricResult(dsc, None, None, counts, percentile)
    d_xy = directed_distances(sx, sy, gt.spacing)
    d_yx = directed_distances(sy, sx, gt.spacing)
    hd = max(float(d_xy.max()), float(d_yx.max()))
    hdp = max(percentile_of(d_xy, percentile), percentile_of(d_yx, percentile))
    return MetricResult(dsc, hd, hdp, counts, percentile)
