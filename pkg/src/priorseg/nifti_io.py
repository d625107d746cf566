"""Reader and writer for single-file NIfTI-1 volumes (``.nii`` / ``.nii.gz``).

Only the subset the pipeline needs is supported: little-endian, 3D,
axis-aligned grids stored as uint8, int16, uint16 or float32. Orientation
fields are carried through untouched so a read/write cycle does not lose them.

Arrays are indexed ``[x, y, z]`` (the on-disk x-fastest layout read in
Fortran order), so ``data[:, :, k]`` is axial slice ``k``.
"""

from __future__ import annotations

import gzip
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    BadMagic,
    ByteOrderError,
    DimOutOfRange,
    GridMismatch,
    InvalidHeaderField,
    IoFailure,
    NonFiniteData,
    TruncatedFile,
    UnsupportedDatatype,
    ValueOverflow,
)

HEADER_SIZE = 348
MIN_VOX_OFFSET = 352
MAX_DIM = 4096
SPACING_TOL_MM = 1e-4

DATATYPES: dict[str, tuple[int, np.dtype]] = {
    "uint8": (2, np.dtype("<u1")),
    "int16": (4, np.dtype("<i2")),
    "uint16": (512, np.dtype("<u2")),
    "float32": (16, np.dtype("<f4")),
}
_CODE_TO_NAME = {code: name for name, (code, _) in DATATYPES.items()}

_MAGIC = b"n+1\x00"
_F32_MAX = float(np.finfo(np.float32).max)


@dataclass(frozen=True)
class NiftiHeader:
    dims: tuple[int, int, int]
    pixdim: tuple[float, float, float]
    datatype: str = "float32"
    scl_slope: float = 1.0
    scl_inter: float = 0.0
    vox_offset: int = MIN_VOX_OFFSET
    # Orientation and bookkeeping fields, stored only for round-tripping.
    qfac: float = 1.0
    xyzt_units: int = 2
    qform_code: int = 0
    sform_code: int = 0
    quatern: tuple[float, float, float] = (0.0, 0.0, 0.0)
    qoffset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    srow: tuple[tuple[float, ...], ...] = field(
        default=((0.0,) * 4, (0.0,) * 4, (0.0,) * 4)
    )
    descrip: bytes = b""

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    @classmethod
    def for_grid(cls, dims, spacing, datatype: str = "float32") -> "NiftiHeader":
        dims = tuple(int(d) for d in dims)
        spacing = tuple(float(s) for s in spacing)
        srow = (
            (spacing[0], 0.0, 0.0, 0.0),
            (0.0, spacing[1], 0.0, 0.0),
            (0.0, 0.0, spacing[2], 0.0),
        )
        return cls(dims=dims, pixdim=spacing, datatype=datatype, sform_code=1, srow=srow)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Volume3D:
    """Real-valued scalar grid (CT intensities or encoded channels)."""

    header: NiftiHeader
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != self.header.dims:
            raise GridMismatch(f"data shape {data.shape} != header dims {self.header.dims}")
        if data.flags.writeable:
            data = data.copy()
        object.__setattr__(self, "data", _freeze(data))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.header.dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.header.pixdim

    @classmethod
    def from_array(cls, data, spacing=(1.0, 1.0, 1.0), datatype: str = "float32") -> "Volume3D":
        data = np.asarray(data, dtype=np.float64)
        return cls(NiftiHeader.for_grid(data.shape, spacing, datatype), data)

    def with_data(self, data, datatype: str | None = None) -> "Volume3D":
        header = self.header if datatype is None else replace(self.header, datatype=datatype)
        return Volume3D(replace(header, scl_slope=1.0, scl_inter=0.0), data)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Small-integer mask grid; any value > 0 counts as foreground."""

    header: NiftiHeader
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.shape != self.header.dims:
            raise GridMismatch(f"data shape {data.shape} != header dims {self.header.dims}")
        if data.dtype != np.uint8:
            if data.size and (data.min() < 0 or data.max() > 255):
                raise ValueOverflow("label values must lie in 0..255")
            data = data.astype(np.uint8)
        elif data.flags.writeable:
            data = data.copy()
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "header", replace(self.header, datatype="uint8"))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.header.dims

    @property
    def spacing(self) -> tuple[float, float, float]:
        return self.header.pixdim

    @property
    def foreground(self) -> np.ndarray:
        return self.data > 0

    @classmethod
    def from_array(cls, data, spacing=(1.0, 1.0, 1.0)) -> "LabelMap":
        data = np.asarray(data)
        return cls(NiftiHeader.for_grid(data.shape, spacing, "uint8"), data)

    def with_data(self, data) -> "LabelMap":
        return LabelMap(self.header, data)


Grid = Union[Volume3D, LabelMap]


# -- header codec --------------------------------------------------------------


def parse_header(raw: bytes) -> NiftiHeader:
    """Decode and validate the fixed 348-byte header at the start of ``raw``."""
    if len(raw) < HEADER_SIZE:
        raise TruncatedFile(f"header: need {HEADER_SIZE} bytes, got {len(raw)}")
    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr != HEADER_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == HEADER_SIZE:
            raise ByteOrderError("sizeof_hdr: big-endian files are not supported")
        raise InvalidHeaderField(f"sizeof_hdr: expected 348, got {sizeof_hdr}")
    magic = raw[344:348]
    if magic != _MAGIC:
        raise BadMagic(f"magic: expected {_MAGIC!r}, got {magic!r}")

    dim = struct.unpack_from("<8h", raw, 40)
    ndim = dim[0]
    if not 3 <= ndim <= 7:
        raise DimOutOfRange(f"dim[0]: expected 3..7, got {ndim}")
    if any(d != 1 for d in dim[4 : ndim + 1]):
        raise DimOutOfRange(f"dim[4..{ndim}]: only 3D volumes are supported, got {dim[1:ndim + 1]}")
    dims = tuple(int(d) for d in dim[1:4])
    for axis, d in enumerate(dims):
        if not 1 <= d <= MAX_DIM:
            raise DimOutOfRange(f"dim[{axis + 1}]: {d} outside 1..{MAX_DIM}")

    (code,) = struct.unpack_from("<h", raw, 70)
    if code not in _CODE_TO_NAME:
        raise UnsupportedDatatype(f"datatype: code {code} not in {sorted(_CODE_TO_NAME)}")

    pix = struct.unpack_from("<8f", raw, 76)
    pixdim = tuple(float(p) for p in pix[1:4])
    for axis, p in enumerate(pixdim):
        if not (np.isfinite(p) and p > 0):
            raise InvalidHeaderField(f"pixdim[{axis + 1}]: must be positive and finite, got {p}")
    qfac = -1.0 if pix[0] == -1.0 else 1.0

    vox_offset, slope, inter = struct.unpack_from("<3f", raw, 108)
    if not np.isfinite(vox_offset) or vox_offset < MIN_VOX_OFFSET or vox_offset != int(vox_offset):
        raise InvalidHeaderField(f"vox_offset: expected integer >= {MIN_VOX_OFFSET}, got {vox_offset}")
    if np.isinf(slope) or np.isinf(inter):
        raise InvalidHeaderField(f"scl_slope/scl_inter: infinite scaling ({slope}, {inter})")
    if np.isnan(slope) or slope == 0:
        slope, inter = 1.0, 0.0
    if np.isnan(inter):
        inter = 0.0

    qform_code, sform_code = struct.unpack_from("<2h", raw, 252)
    quatern = struct.unpack_from("<3f", raw, 256)
    qoffset = struct.unpack_from("<3f", raw, 268)
    srow = tuple(struct.unpack_from("<4f", raw, 280 + 16 * i) for i in range(3))
    descrip = raw[148:228].split(b"\x00", 1)[0]

    return NiftiHeader(
        dims=dims,
        pixdim=pixdim,
        datatype=_CODE_TO_NAME[code],
        scl_slope=float(slope),
        scl_inter=float(inter),
        vox_offset=int(vox_offset),
        qfac=qfac,
        xyzt_units=raw[123],
        qform_code=qform_code,
        sform_code=sform_code,
        quatern=tuple(float(q) for q in quatern),
        qoffset=tuple(float(q) for q in qoffset),
        srow=tuple(tuple(float(v) for v in row) for row in srow),
        descrip=descrip,
    )


def encode_header(h: NiftiHeader) -> bytes:
    """Serialize ``h`` into 348 header bytes plus a zero extension flag."""
    buf = bytearray(MIN_VOX_OFFSET)
    code, dtype = DATATYPES[h.datatype]
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    buf[38] = ord("r")
    struct.pack_into("<8h", buf, 40, 3, *h.dims, 1, 1, 1, 1)
    struct.pack_into("<hh", buf, 70, code, dtype.itemsize * 8)
    struct.pack_into("<8f", buf, 76, h.qfac, *h.pixdim, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<3f", buf, 108, float(h.vox_offset), h.scl_slope, h.scl_inter)
    buf[123] = h.xyzt_units & 0xFF
    buf[148 : 148 + min(len(h.descrip), 79)] = h.descrip[:79]
    struct.pack_into("<2h", buf, 252, h.qform_code, h.sform_code)
    struct.pack_into("<3f", buf, 256, *h.quatern)
    struct.pack_into("<3f", buf, 268, *h.qoffset)
    for i, row in enumerate(h.srow):
        struct.pack_into("<4f", buf, 280 + 16 * i, *row)
    buf[344:348] = _MAGIC
    return bytes(buf)


# -- file level ----------------------------------------------------------------


def _load_bytes(path) -> bytes:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise TruncatedFile(f"{path}: gzip container corrupt or truncated ({exc})") from exc
    return raw


def decode(raw: bytes) -> tuple[NiftiHeader, np.ndarray]:
    """Parse an uncompressed NIfTI byte string into header and stored array."""
    header = parse_header(raw)
    dtype = DATATYPES[header.datatype][1]
    nbytes = header.n_voxels * dtype.itemsize
    end = header.vox_offset + nbytes
    if len(raw) < end:
        raise TruncatedFile(f"payload: need {end} bytes, got {len(raw)}")
    stored = np.frombuffer(raw, dtype=dtype, count=header.n_voxels, offset=header.vox_offset)
    stored = stored.reshape(header.dims, order="F")
    if header.datatype == "float32" and not np.isfinite(stored).all():
        raise NonFiniteData("payload: float32 data contains NaN or infinity")
    return header, stored


def _scaled(header: NiftiHeader, stored: np.ndarray) -> np.ndarray:
    data = stored.astype(np.float64)
    if header.scl_slope != 1.0 or header.scl_inter != 0.0:
        data = data * header.scl_slope + header.scl_inter
        if not np.isfinite(data).all():
            raise NonFiniteData("scl_slope/scl_inter: scaled data not finite")
    return data


def read_volume(path) -> Volume3D:
    header, stored = decode(_load_bytes(path))
    # freshly allocated, so freezing it in place avoids a second copy
    return Volume3D(header, _freeze(_scaled(header, stored)))


def read_labelmap(path) -> LabelMap:
    header, stored = decode(_load_bytes(path))
    unscaled = header.scl_slope == 1.0 and header.scl_inter == 0.0
    if unscaled and stored.dtype.kind in "iu":
        # integer payload: range check only, no float round trip
        if stored.size and (stored.min() < 0 or stored.max() > 255):
            raise ValueOverflow(f"{path}: label values must be integers in 0..255")
        data = stored if stored.dtype == np.uint8 else stored.astype(np.uint8)
        return LabelMap(header, _freeze(data))
    data = _scaled(header, stored)
    if data.size and (data.min() < 0 or data.max() > 255 or not np.array_equal(data, np.round(data))):
        raise ValueOverflow(f"{path}: label values must be integers in 0..255")
    return LabelMap(header, _freeze(data.astype(np.uint8)))


def _to_stored(data: np.ndarray, datatype: str) -> np.ndarray:
    dtype = DATATYPES[datatype][1]
    if datatype == "float32":
        if data.size and np.abs(data).max() > _F32_MAX:
            raise ValueOverflow(f"value {np.abs(data).max():g} exceeds float32 range")
        return data.astype(dtype)
    if data.dtype.kind == "f" and not np.array_equal(data, np.round(data)):
        raise ValueOverflow(f"non-integer values cannot be stored as {datatype}")
    info = np.iinfo(dtype)
    if data.size and (data.min() < info.min or data.max() > info.max):
        raise ValueOverflow(
            f"values in [{data.min():g}, {data.max():g}] exceed {datatype} range [{info.min}, {info.max}]"
        )
    return data.astype(dtype)


def encode(v: Grid, datatype: str | None = None) -> bytes:
    datatype = datatype or v.header.datatype
    if datatype not in DATATYPES:
        raise UnsupportedDatatype(f"datatype: {datatype!r} not in {sorted(DATATYPES)}")
    data = np.asarray(v.data)
    if data.dtype.kind == "f" and not np.isfinite(data).all():
        raise ValueOverflow("cannot store NaN or infinite values")
    stored = _to_stored(data, datatype)
    header = replace(v.header, datatype=datatype, scl_slope=1.0, scl_inter=0.0, vox_offset=MIN_VOX_OFFSET)
    return encode_header(header) + stored.tobytes(order="F")


def write_volume(v: Grid, path, datatype: str | None = None) -> None:
    """Write ``v``; a ``.gz`` suffix selects a gzip container (mtime pinned to 0)."""
    payload = encode(v, datatype)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if path.suffix == ".gz":
            with open(path, "wb") as fh, gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0, compresslevel=6) as gz:
                gz.write(payload)
        else:
            path.write_bytes(payload)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def check_aligned(a: Grid, b: Grid) -> None:
    problems = []
    for axis, (da, db) in enumerate(zip(a.header.dims, b.header.dims)):
        if da != db:
            problems.append(f"axis {axis}: dims {da} != {db}")
    for axis, (pa, pb) in enumerate(zip(a.header.pixdim, b.header.pixdim)):
        if abs(pa - pb) > SPACING_TOL_MM:
            problems.append(f"axis {axis}: spacing {pa:g} != {pb:g} mm")
    if problems:
        raise GridMismatch("; ".join(problems))
