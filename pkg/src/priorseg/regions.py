"""Axial body-region partition (HN / THX / ABDM / PELV) from three landmark masks.

Boundaries, in superior-to-inferior order:

* ``b1``: most superior slice of vertebra T1  (HN | THX)
* ``b2``: most superior slice of the stomach  (THX | ABDM)
* ``b3``: most inferior slice of vertebra L4  (ABDM | PELV)

Using "height" ``h`` (slice index counted upward from the feet), the regions
are HN = (b1, top], THX = (b2, b1], ABDM = [b3, b2], PELV = [bottom, b3).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyLandmark, GridMismatch, NonMonotonicLandmarks
from .nifti_io import LabelMap, check_aligned

REGIONS = ("HN", "THX", "ABDM", "PELV")
BOUNDARY_RULE = (
    "b1 = most superior T1 slice, b2 = most superior stomach slice, b3 = most inferior L4 slice; "
    "HN=(b1,top], THX=(b2,b1], ABDM=[b3,b2], PELV=[bottom,b3)"
)


@dataclass(frozen=True)
class LandmarkSet:
    vertebra_T1: LabelMap
    stomach: LabelMap
    vertebra_L4: LabelMap

    def items(self):
        return (("vertebra_T1", self.vertebra_T1), ("stomach", self.stomach), ("vertebra_L4", self.vertebra_L4))


@dataclass(frozen=True)
class RegionBounds:
    b1: int
    b2: int
    b3: int
    n_slices: int
    # region -> half-open [lo, hi) interval of slice indices
    intervals: dict[str, tuple[int, int]]
    superior: int = 1

    def slices(self, region: str) -> range:
        lo, hi = self.intervals[region]
        return range(lo, hi)

    def region_of(self, z: int) -> str:
        for region in REGIONS:
            lo, hi = self.intervals[region]
            if lo <= z < hi:
                return region
        raise IndexError(f"slice {z} outside 0..{self.n_slices - 1}")

    def to_json(self, patient_id: str | None = None) -> dict:
        out = {"b1": self.b1, "b2": self.b2, "b3": self.b3, "n_slices": self.n_slices}
        if patient_id is not None:
            out = {"patient_id": patient_id, **out}
        return out


def slice_span(mask: LabelMap) -> tuple[int, int]:
    """First and last slice index holding foreground; raises EmptyLandmark if none."""
    hit = np.flatnonzero((mask.data > 0).any(axis=(0, 1)))
    if hit.size == 0:
        raise EmptyLandmark("landmark mask is empty")
    return int(hit[0]), int(hit[-1])


def _intervals(h1: int, h2: int, h3: int, n: int) -> dict[str, tuple[int, int]]:
    # in height coordinates
    return {
        "HN": (h1 + 1, n),
        "THX": (h2 + 1, h1 + 1),
        "ABDM": (h3, h2 + 1),
        "PELV": (0, h3),
    }


def bounds_from_spans(spans: dict[str, tuple[int, int]], n_slices: int, superior: int = 1) -> RegionBounds:
    """Region bounds from each landmark's (first, last) slice index."""
    if superior not in (1, -1):
        raise ValueError("superior must be +1 or -1")
    n = n_slices

    def height(z: int) -> int:
        return z if superior == 1 else n - 1 - z

    def span_h(name: str) -> tuple[int, int]:
        a, b = (height(z) for z in spans[name])
        return min(a, b), max(a, b)

    h1 = span_h("vertebra_T1")[1]
    h2 = span_h("stomach")[1]
    h3 = span_h("vertebra_L4")[0]
    if h1 < h2 or h2 < h3:
        raise NonMonotonicLandmarks(
            f"expected T1 top ({h1}) >= stomach top ({h2}) >= L4 bottom ({h3}) in superior order"
        )
    intervals = {}
    for region, (lo, hi) in _intervals(h1, h2, h3, n).items():
        intervals[region] = (lo, hi) if superior == 1 else (n - hi, n - lo)
    return RegionBounds(height(h1), height(h2), height(h3), n, intervals, superior)


def compute_bounds(landmarks: LandmarkSet, superior: int = 1) -> RegionBounds:
    """``superior=+1`` means higher slice index is more superior; ``-1`` flips it."""
    items = landmarks.items()
    ref = items[0][1]
    spans = {}
    for name, m in items:
        try:
            check_aligned(ref, m)
        except GridMismatch as exc:
            raise GridMismatch(f"landmark {name}: {exc}") from exc
        try:
            spans[name] = slice_span(m)
        except EmptyLandmark:
            raise EmptyLandmark(f"landmark {name} is empty") from None
    return bounds_from_spans(spans, ref.dims[2], superior)


def crop_to_region(mask: LabelMap, bounds: RegionBounds, region: str) -> LabelMap:
    """Zero every voxel outside ``region``; the grid shape is unchanged."""
    if mask.dims[2] != bounds.n_slices:
        raise GridMismatch(f"mask has {mask.dims[2]} slices, bounds cover {bounds.n_slices}")
    lo, hi = bounds.intervals[region]
    data = np.zeros_like(mask.data)
    data[:, :, lo:hi] = mask.data[:, :, lo:hi]
    return mask.with_data(data)


def region_slab(mask: LabelMap, bounds: RegionBounds, region: str) -> LabelMap:
    """The slices of ``region`` as a shorter grid sharing ``mask``'s memory.

    Overlap and surface-distance metrics on a slab equal those on the
    zero-filled :func:`crop_to_region` output, since the zeroed slices and
    the space past a grid edge both count as background.
    """
    if mask.dims[2] != bounds.n_slices:
        raise GridMismatch(f"mask has {mask.dims[2]} slices, bounds cover {bounds.n_slices}")
    lo, hi = bounds.intervals[region]
    data = mask.data[:, :, lo:hi]
    return LabelMap(replace(mask.header, dims=data.shape), data)
