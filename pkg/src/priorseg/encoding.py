"""Turn organ masks into auxiliary input channels for a segmentation network.

Five strategies are supported:

``MI_Z``    one channel, a distinct intensity per structure, z-scored
``EQ_Z``    one channel, every structure at 255, z-scored
``CROP_Z``  two channels of CT intensities inside the structures, with the
            outside filled by 0 (first) or 255 (second), each z-scored
``MI``      as ``MI_Z`` without normalization
``MI_TS``   as ``MI`` over the TotalSegmentator structure vocabulary
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cohort import GT_STRUCTURES, TS_STRUCTURES, PatientRecord
from .errors import MissingStructure, TooManyStructures
from .nifti_io import LabelMap, Volume3D, check_aligned, read_labelmap, read_volume, write_volume

ZSCORE_SCOPE = "all voxels of the channel; population std; std == 0 gives all zeros"
OVERLAP_RULE = "smallest structure (fewest voxels) wins; ties go to the earlier structure"
CROP_FILL_VALUES = (0.0, 255.0)


class Strategy(str, Enum):
    MI_Z = "MI_Z"
    EQ_Z = "EQ_Z"
    CROP_Z = "CROP_Z"
    MI = "MI"
    MI_TS = "MI_TS"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        key = text.strip().upper().replace("-", "_")
        if key == "EI_Z":  # alternate label for the equal-intensity strategy
            key = "EQ_Z"
        return cls(key)

    @property
    def slug(self) -> str:
        return self.value.lower().replace("_", "-")

    @property
    def zscore(self) -> bool:
        return self in (Strategy.MI_Z, Strategy.EQ_Z, Strategy.CROP_Z)

    @property
    def uses_ts(self) -> bool:
        return self is Strategy.MI_TS


@dataclass(frozen=True)
class EncodingStrategy:
    kind: Strategy
    structure_set: tuple[str, ...]

    def __post_init__(self):
        if not self.structure_set:
            raise ValueError("structure_set must not be empty")

    @property
    def zscore(self) -> bool:
        return self.kind.zscore

    @classmethod
    def default(cls, kind: Strategy | str) -> "EncodingStrategy":
        kind = Strategy.parse(kind) if isinstance(kind, str) else kind
        return cls(kind, TS_STRUCTURES if kind.uses_ts else GT_STRUCTURES)


@dataclass(frozen=True)
class IntensityCode:
    assignments: dict[str, int]
    background: int = 0


@dataclass(frozen=True)
class NormalizationStats:
    mean: float
    std: float


def assign_intensities(structures: Sequence[str], mode: str = "distinct") -> IntensityCode:
    """Structure ``i`` of ``N`` (1-based) gets ``round(255 * i / N)``; ``equal`` mode gives 255 to all."""
    n = len(structures)
    if n > 255:
        raise TooManyStructures(f"{n} structures; at most 255 fit in 8-bit intensity codes")
    if n == 0:
        raise ValueError("need at least one structure")
    if mode == "equal":
        return IntensityCode({s: 255 for s in structures})
    if mode != "distinct":
        raise ValueError(f"unknown mode {mode!r}")
    # integer round-half-up of 255*i/n
    return IntensityCode({s: (510 * i + n) // (2 * n) for i, s in enumerate(structures, start=1)})


def rasterize_channel(
    masks: Mapping[str, LabelMap], code: IntensityCode, like: LabelMap | Volume3D | None = None
) -> Volume3D:
    """Paint each structure's code into one channel; background stays 0.

    ``masks`` order is the tie-break order. ``like`` supplies the grid when
    ``masks`` is empty.
    """
    items = [(name, m) for name, m in masks.items()]
    ref = like if like is not None else (items[0][1] if items else None)
    if ref is None:
        raise ValueError("empty mask list needs a reference grid")
    for _, m in items:
        check_aligned(ref, m)
    out = np.zeros(ref.dims, dtype=np.float64)
    sized = [(int(np.count_nonzero(m.foreground)), order, name, m) for order, (name, m) in enumerate(items)]
    # paint lowest priority first so higher-priority structures overwrite
    for _, _, name, m in sorted(sized, key=lambda t: (t[0], t[1]), reverse=True):
        out[m.foreground] = code.assignments[name]
    return _channel(ref, out)


def _channel(ref: LabelMap | Volume3D, data: np.ndarray, datatype: str = "float32") -> Volume3D:
    return Volume3D(replace(ref.header, datatype=datatype, scl_slope=1.0, scl_inter=0.0), data)


def zscore(channel: Volume3D) -> tuple[Volume3D, NormalizationStats]:
    data = channel.data
    if data.size == 0:
        raise ValueError("channel has no voxels")
    mean = float(data.mean())
    std = float(data.std())
    if std == 0.0:
        out = np.zeros_like(data)
    else:
        out = (data - mean) / std
    return _channel(channel, out), NormalizationStats(mean, std)


def crop_channels(ct: Volume3D, masks: Sequence[LabelMap]) -> tuple[Volume3D, Volume3D]:
    """CT intensities inside the union of ``masks``; outside set to 0 and 255 respectively."""
    union = np.zeros(ct.dims, dtype=bool)
    for m in masks:
        check_aligned(ct, m)
        union |= m.foreground
    inside = ct.data
    a = np.where(union, inside, CROP_FILL_VALUES[0])
    b = np.where(union, inside, CROP_FILL_VALUES[1])
    return _channel(ct, a), _channel(ct, b)


def encode_crop(ct: Volume3D, masks: Sequence[LabelMap]) -> tuple[Volume3D, Volume3D]:
    a, b = crop_channels(ct, masks)
    return zscore(a)[0], zscore(b)[0]


@dataclass(frozen=True, eq=False)
class Encoding:
    strategy: EncodingStrategy
    channels: list[Volume3D]
    code: IntensityCode | None
    stats: list[NormalizationStats | None]

    def sidecar(self, patient_id: str) -> dict:
        return {
            "patient_id": patient_id,
            "strategy": self.strategy.kind.value,
            "structures": list(self.strategy.structure_set),
            "n_channels": len(self.channels),
            "intensity_code": None if self.code is None else dict(self.code.assignments),
            "normalization": [None if s is None else {"mean": s.mean, "std": s.std} for s in self.stats],
            "conventions": {
                "zscore_scope": ZSCORE_SCOPE if self.strategy.zscore else None,
                "overlap_rule": OVERLAP_RULE if self.code is not None else None,
                "crop_fill_values": list(CROP_FILL_VALUES) if self.strategy.kind is Strategy.CROP_Z else None,
            },
        }


def _structure_masks(strategy: EncodingStrategy, patient: PatientRecord) -> dict[str, LabelMap]:
    paths = dict(patient.structure_paths)
    if strategy.kind.uses_ts and patient.ts_structure_paths:
        paths = dict(patient.ts_structure_paths)
    missing = [s for s in strategy.structure_set if s not in paths]
    if missing:
        raise MissingStructure(f"patient {patient.patient_id}: missing structure(s) {', '.join(missing)}")
    return {s: read_labelmap(paths[s]) for s in strategy.structure_set}


def encode_volumes(strategy: EncodingStrategy, ct: Volume3D, masks: Mapping[str, LabelMap]) -> Encoding:
    for m in masks.values():
        check_aligned(ct, m)
    kind = strategy.kind
    if kind is Strategy.CROP_Z:
        raw = crop_channels(ct, list(masks.values()))
        normed = [zscore(c) for c in raw]
        return Encoding(strategy, [c for c, _ in normed], None, [s for _, s in normed])
    mode = "equal" if kind is Strategy.EQ_Z else "distinct"
    code = assign_intensities(strategy.structure_set, mode)
    channel = rasterize_channel(masks, code, like=ct)
    if strategy.zscore:
        channel, stats = zscore(channel)
        return Encoding(strategy, [channel], code, [stats])
    return Encoding(strategy, [_channel(channel, channel.data, "uint8")], code, [None])


def encode(strategy: EncodingStrategy, patient: PatientRecord, out_dir=None) -> list[Volume3D]:
    """Encode one patient; with ``out_dir`` also write channels and a JSON sidecar."""
    masks = _structure_masks(strategy, patient)
    ct = read_volume(patient.ct_path)
    enc = encode_volumes(strategy, ct, masks)
    if out_dir is not None:
        write_encoding(enc, patient.patient_id, out_dir)
    return enc.channels


def channel_paths(patient_id: str, kind: Strategy, n: int, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    return [out_dir / f"{patient_id}_{kind.value}_{k}.nii.gz" for k in range(n)]


def write_encoding(enc: Encoding, patient_id: str, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = channel_paths(patient_id, enc.strategy.kind, len(enc.channels), out_dir)
    for channel, path in zip(enc.channels, paths):
        write_volume(channel, path, channel.header.datatype)
    sidecar = out_dir / f"{patient_id}_{enc.strategy.kind.value}.json"
    sidecar.write_text(json.dumps(enc.sidecar(patient_id), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
