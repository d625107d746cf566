"""Synthetic CT cohorts with organ masks, landmarks, a CTV and degraded predictions.

Every shape is an ellipsoid or elliptic cylinder with an integer voxel centre
and a radius in millimetres, tested voxel by voxel, so masks are reproducible
bit for bit. The prediction is the ground-truth CTV eroded or dilated by a
per-sex radius, which plants a known gender gap in the metrics.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._kernels import edt_sq
from .cohort import GT_STRUCTURES, LANDMARKS, SEXES, TS_STRUCTURES, CohortManifest, parse_manifest
from .nifti_io import LabelMap, NiftiHeader, Volume3D, write_volume

# name -> (HU, [(centre as fraction of the grid, radii in mm), ...])
ORGANS: dict[str, tuple[int, list[tuple[tuple[float, float, float], tuple[float, float, float]]]]] = {
    "eyes": (15, [((0.39, 0.30, 0.94), (12, 12, 12)), ((0.61, 0.30, 0.94), (12, 12, 12))]),
    "heart": (40, [((0.55, 0.40, 0.71), (50, 42, 45))]),
    "liver": (60, [((0.36, 0.45, 0.62), (62, 48, 50))]),
    "spleen": (50, [((0.72, 0.60, 0.62), (22, 24, 38))]),
    "stomach": (10, [((0.60, 0.38, 0.62), (36, 28, 32))]),
    "kidneys": (35, [((0.36, 0.68, 0.52), (20, 20, 42)), ((0.64, 0.68, 0.52), (20, 20, 42))]),
    "femurs": (700, [((0.38, 0.50, 0.10), (18, 18, 80)), ((0.62, 0.50, 0.10), (18, 18, 80))]),
    "humeri": (700, [((0.14, 0.50, 0.76), (14, 14, 75)), ((0.86, 0.50, 0.76), (14, 14, 75))]),
    "scapulae": (600, [((0.30, 0.76, 0.76), (30, 8, 40)), ((0.70, 0.76, 0.76), (30, 8, 40))]),
    "clavicles": (600, [((0.36, 0.30, 0.84), (40, 8, 8)), ((0.64, 0.30, 0.84), (40, 8, 8))]),
    "hips": (600, [((0.34, 0.55, 0.26), (36, 24, 36)), ((0.66, 0.55, 0.26), (36, 24, 36))]),
    "sacrum": (600, [((0.50, 0.72, 0.28), (24, 18, 32))]),
    "urinary_bladder": (5, [((0.50, 0.36, 0.21), (28, 22, 22))]),
    "pancreas": (45, [((0.52, 0.55, 0.56), (40, 10, 12))]),
    "iliopsoas": (55, [((0.42, 0.64, 0.38), (16, 16, 60)), ((0.58, 0.64, 0.38), (16, 16, 60))]),
}
ALL_STRUCTURES = tuple(dict.fromkeys(GT_STRUCTURES + TS_STRUCTURES))

# in-plane landmark cross-sections: (centre fraction, radii mm, HU)
LANDMARK_SHAPES = {
    "vertebra_T1": ((0.50, 0.70), (14, 12), 650),
    "stomach": ((0.60, 0.38), (36, 28), 10),
    "vertebra_L4": ((0.50, 0.70), (18, 15), 650),
}

BODY = ((0.50, 0.50), (0.44, 0.34))  # centre and semi-axes as grid fractions
CTV_TUBE = ((0.50, 0.56), 14.0, (0.04, 0.97))  # centre, radius mm, z range
CTV_BULGES = [
    ((0.40, 0.50, 0.90), (12, 12, 36)),
    ((0.60, 0.50, 0.90), (12, 12, 36)),
    ((0.50, 0.45, 0.72), (24, 20, 40)),
    ((0.55, 0.50, 0.50), (20, 16, 40)),
    ((0.40, 0.55, 0.22), (14, 14, 42)),
    ((0.60, 0.55, 0.22), (14, 14, 42)),
]


@dataclass(frozen=True)
class SexError:
    op: str = "erode"  # "erode" or "dilate"
    radius: int = 1

    def __post_init__(self):
        if self.op not in ("erode", "dilate"):
            raise ValueError(f"error op must be 'erode' or 'dilate', got {self.op!r}")
        if self.radius < 0:
            raise ValueError("error radius must be >= 0")


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (96, 96, 128)
    spacing: tuple[float, float, float] = (3.0, 3.0, 5.0)
    n_female: int = 10
    n_male: int = 10
    sex_size_ratio: float = 0.9
    female_error: SexError = SexError("erode", 2)
    male_error: SexError = SexError("erode", 1)
    seed: int = 0
    jitter_voxels: int = 0
    landmark_spans: dict = field(
        default_factory=lambda: {"vertebra_T1": (0.80, 0.82), "stomach": (0.58, 0.66), "vertebra_L4": (0.30, 0.32)}
    )

    def __post_init__(self):
        if min(self.dims) < 32:
            raise ValueError("phantom grids need at least 32 voxels per axis")
        if self.sex_size_ratio <= 0:
            raise ValueError("sex_size_ratio must be positive")
        if min(self.n_female, self.n_male) < 0:
            raise ValueError("patient counts must be >= 0")

    def error_for(self, sex: str) -> SexError:
        return self.female_error if sex == "female" else self.male_error

    def landmark_slices(self) -> dict[str, tuple[int, int]]:
        nz = self.dims[2]
        return {k: (int(lo * nz), int(hi * nz)) for k, (lo, hi) in self.landmark_spans.items()}

    @classmethod
    def from_json(cls, payload: dict) -> "PhantomSpec":
        payload = dict(payload)
        kwargs = {}
        for key in ("dims", "spacing"):
            if key in payload:
                kwargs[key] = tuple(payload.pop(key))
        errors = payload.pop("error_model", {})
        if "seed" in errors:
            kwargs["seed"] = int(errors["seed"])
        if "female" in errors:
            kwargs["female_error"] = SexError(**errors["female"])
        if "male" in errors:
            kwargs["male_error"] = SexError(**errors["male"])
        if "n_patients" in payload:
            n = payload.pop("n_patients")
            kwargs["n_female"], kwargs["n_male"] = int(n["female"]), int(n["male"])
        if "landmark_spans" in payload:
            kwargs["landmark_spans"] = {k: tuple(v) for k, v in payload.pop("landmark_spans").items()}
        for key in ("sex_size_ratio", "jitter_voxels", "seed"):
            if key in payload:
                kwargs[key] = payload.pop(key)
        if payload:
            raise ValueError(f"unknown phantom spec fields: {sorted(payload)}")
        return cls(**kwargs)

    def to_json(self) -> dict:
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "n_patients": {"female": self.n_female, "male": self.n_male},
            "sex_size_ratio": self.sex_size_ratio,
            "error_model": {"female": asdict(self.female_error), "male": asdict(self.male_error), "seed": self.seed},
            "jitter_voxels": self.jitter_voxels,
            "landmark_spans": {k: list(v) for k, v in self.landmark_spans.items()},
        }


# -- rasterization -------------------------------------------------------------


def _centre(frac, dims) -> tuple[int, ...]:
    return tuple(int(round(f * (n - 1))) for f, n in zip(frac, dims))


def ellipsoid(dims, spacing, centre, radii_mm) -> np.ndarray:
    """Voxels whose centre satisfies sum(((i - c) * s / r)^2) <= 1."""
    out = np.zeros(dims, dtype=bool)
    lo, hi = [], []
    for c, s, r, n in zip(centre, spacing, radii_mm, dims):
        reach = int(np.floor(r / s))
        lo.append(max(c - reach, 0))
        hi.append(min(c + reach, n - 1) + 1)
    if any(a >= b for a, b in zip(lo, hi)):
        return out
    axes = [((np.arange(a, b) - c) * s / r) ** 2 for a, b, c, s, r in zip(lo, hi, centre, spacing, radii_mm)]
    inside = axes[0][:, None, None] + axes[1][None, :, None] + axes[2][None, None, :] <= 1.0
    out[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = inside
    return out


def cylinder(dims, spacing, centre_xy, radii_mm, z_lo: int, z_hi: int) -> np.ndarray:
    """Elliptic cylinder along z covering slices ``z_lo..z_hi`` inclusive."""
    out = np.zeros(dims, dtype=bool)
    x = ((np.arange(dims[0]) - centre_xy[0]) * spacing[0] / radii_mm[0]) ** 2
    y = ((np.arange(dims[1]) - centre_xy[1]) * spacing[1] / radii_mm[1]) ** 2
    disc = x[:, None] + y[None, :] <= 1.0
    out[:, :, max(z_lo, 0) : min(z_hi, dims[2] - 1) + 1] = disc[:, :, None]
    return out


def dilate(fg: np.ndarray, radius: int) -> np.ndarray:
    """Voxels within ``radius`` voxel units of the foreground."""
    if radius == 0:
        return fg.copy()
    return edt_sq(fg, (1.0, 1.0, 1.0)) <= radius * radius


def erode(fg: np.ndarray, radius: int) -> np.ndarray:
    """Foreground voxels farther than ``radius`` voxel units from any background voxel."""
    if radius == 0:
        return fg.copy()
    return ~dilate(~fg, radius)


def apply_error(fg: np.ndarray, err: SexError) -> np.ndarray:
    return erode(fg, err.radius) if err.op == "erode" else dilate(fg, err.radius)


# -- patients ------------------------------------------------------------------


def patient_id(sex: str, index: int) -> str:
    return f"{sex[0].upper()}{index:03d}"


def _rng(spec: PhantomSpec, sex: str, index: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, SEXES.index(sex), index])


def build_landmarks(spec: PhantomSpec) -> dict[str, np.ndarray]:
    """``landmark_<name>`` cylinders over spec.landmark_spans."""
    spans = spec.landmark_slices()
    out = {}
    for name in LANDMARKS:
        (cx, cy), radii, _ = LANDMARK_SHAPES[name]
        centre = _centre((cx, cy), spec.dims[:2])
        out[f"landmark_{name}"] = cylinder(spec.dims, spec.spacing, centre, radii, *spans[name])
    return out


def build_ctv(spec: PhantomSpec, shift=None) -> np.ndarray:
    """Ground-truth CTV: a tube along the body axis plus nodal bulges."""
    dims, spacing = spec.dims, spec.spacing
    (tx, ty), tube_r, (z0, z1) = CTV_TUBE
    ctv = cylinder(dims, spacing, _centre((tx, ty), dims[:2]), (tube_r, tube_r), int(z0 * dims[2]), int(z1 * dims[2]))
    for frac, radii in CTV_BULGES:
        offset = shift() if shift is not None else (0, 0, 0)
        centre = tuple(int(c + o) for c, o in zip(_centre(frac, dims), offset))
        ctv |= ellipsoid(dims, spacing, centre, radii)
    return ctv


def build_patient(spec: PhantomSpec, sex: str, index: int) -> dict[str, np.ndarray]:
    """All arrays for one patient.

    Keys: ``ct``, ``gt_ctv``, ``pred_ctv``, every structure name, and
    ``landmark_<name>`` for the three landmarks.
    """
    dims, spacing = spec.dims, spec.spacing
    rng = _rng(spec, sex, index)
    scale = spec.sex_size_ratio if sex == "female" else 1.0
    j = spec.jitter_voxels

    def shift() -> np.ndarray:
        return rng.integers(-j, j + 1, size=3) if j else np.zeros(3, dtype=np.int64)

    arrays: dict[str, np.ndarray] = {}
    for name in ALL_STRUCTURES:
        _, parts = ORGANS[name]
        mask = np.zeros(dims, dtype=bool)
        offset = shift()
        for frac, radii in parts:
            centre = tuple(int(c + o) for c, o in zip(_centre(frac, dims), offset))
            mask |= ellipsoid(dims, spacing, centre, tuple(r * scale for r in radii))
        arrays[name] = mask

    arrays.update(build_landmarks(spec))
    arrays["gt_ctv"] = build_ctv(spec, shift)
    arrays["pred_ctv"] = apply_error(arrays["gt_ctv"], spec.error_for(sex))

    # CT: air outside an elliptic body, soft tissue with a cranio-caudal ramp, organ constants, noise
    (bx, by), (ax, ay) = BODY
    x = ((np.arange(dims[0]) - bx * (dims[0] - 1)) / (ax * dims[0])) ** 2
    y = ((np.arange(dims[1]) - by * (dims[1] - 1)) / (ay * dims[1])) ** 2
    body = (x[:, None] + y[None, :] <= 1.0)[:, :, None]
    ramp = (np.arange(dims[2], dtype=np.int64) * 20) // dims[2]
    ct = np.where(body, 20 + ramp[None, None, :], -1000).astype(np.int64)
    for name in ALL_STRUCTURES:
        ct[arrays[name]] = ORGANS[name][0]
    for name in ("vertebra_T1", "vertebra_L4"):
        ct[arrays[f"landmark_{name}"]] = LANDMARK_SHAPES[name][2]
    noise = rng.integers(-15, 16, size=dims)
    arrays["ct"] = np.where(body, ct + noise, ct)
    return arrays


def _rel(path: Path, root: Path) -> str:
    return path.relative_to(root).as_posix()


def generate_patient(spec: PhantomSpec, sex: str, index: int, out_dir) -> dict:
    """Write one patient's files under ``out_dir/<id>/`` and return its manifest entry."""
    out_dir = Path(out_dir)
    pid = patient_id(sex, index)
    pdir = out_dir / pid
    arrays = build_patient(spec, sex, index)
    header = NiftiHeader.for_grid(spec.dims, spec.spacing, "uint8")

    def save_mask(name: str, sub: str = "", key: str | None = None) -> str:
        path = pdir / sub / f"{name}.nii.gz"
        write_volume(LabelMap(header, arrays[key or name].astype(np.uint8)), path)
        return _rel(path, out_dir)

    ct_path = pdir / "ct.nii.gz"
    write_volume(Volume3D(NiftiHeader.for_grid(spec.dims, spec.spacing, "int16"), arrays["ct"]), ct_path, "int16")
    structures = {name: save_mask(name, "structures") for name in ALL_STRUCTURES}
    return {
        "id": pid,
        "sex": sex,
        "ct": _rel(ct_path, out_dir),
        "gt_ctv": save_mask("gt_ctv"),
        "pred_ctv": save_mask("pred_ctv"),
        "structures": {name: structures[name] for name in GT_STRUCTURES},
        "ts_structures": {name: structures[name] for name in TS_STRUCTURES},
        "landmarks": {name: save_mask(name, "landmarks", f"landmark_{name}") for name in LANDMARKS},
    }


def generate_cohort(spec: PhantomSpec, out_dir, threads: int = 1) -> CohortManifest:
    """Write a full cohort plus ``manifest.json`` and ``phantom_spec.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [("female", i) for i in range(spec.n_female)] + [("male", i) for i in range(spec.n_male)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        entries = list(pool.map(lambda job: generate_patient(spec, job[0], job[1], out_dir), jobs))
    entries.sort(key=lambda e: e["id"])
    manifest = {"structures": list(ALL_STRUCTURES), "patients": entries}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "phantom_spec.json").write_text(json.dumps(spec.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return parse_manifest(manifest, out_dir)
