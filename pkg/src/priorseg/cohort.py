"""Cohort manifests: which files belong to which patient, and each patient's sex."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import DuplicatePatientId, MissingFile, SchemaError, UnknownStructureName

SEXES = ("female", "male")
LANDMARKS = ("vertebra_T1", "stomach", "vertebra_L4")

GT_STRUCTURES = ("spleen", "liver", "eyes", "kidneys", "femurs", "stomach", "heart")
TS_STRUCTURES = (
    "humeri",
    "scapulae",
    "clavicles",
    "femurs",
    "hips",
    "sacrum",
    "spleen",
    "liver",
    "stomach",
    "urinary_bladder",
    "pancreas",
    "kidneys",
    "iliopsoas",
)


def canonical_name(name: str) -> str:
    """``"Urinary Bladder "`` -> ``"urinary_bladder"``."""
    return re.sub(r"[\s\-]+", "_", name.strip()).lower()


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    sex: str
    ct_path: Path
    gt_ctv_path: Path
    pred_ctv_path: Path | None = None
    structure_paths: Mapping[str, Path] = field(default_factory=dict)
    landmark_paths: Mapping[str, Path] = field(default_factory=dict)
    # TotalSegmentator-derived masks; falls back to structure_paths when absent.
    ts_structure_paths: Mapping[str, Path] = field(default_factory=dict)


@dataclass(frozen=True)
class CohortManifest:
    records: tuple[PatientRecord, ...]
    structure_vocabulary: tuple[str, ...]
    # +1: increasing slice index points toward the head; -1: toward the feet.
    superior: int = 1

    def record(self, patient_id: str) -> PatientRecord:
        for r in self.records:
            if r.patient_id == patient_id:
                return r
        raise KeyError(patient_id)


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise SchemaError(f"{where}: field {key!r} must be {getattr(kind, '__name__', kind)}")
    return value


def _resolve(base: Path, value, where: str, check: bool) -> Path:
    if not isinstance(value, str) or not value:
        raise SchemaError(f"{where}: path must be a non-empty string")
    path = Path(value)
    if not path.is_absolute():
        path = base / path
    if check and not path.exists():
        raise MissingFile(f"{where}: {path} does not exist")
    return path


def _structure_map(raw, vocab: set[str], base: Path, where: str, check: bool) -> dict[str, Path]:
    if not isinstance(raw, dict):
        raise SchemaError(f"{where}: must be an object")
    out = {}
    for key, value in raw.items():
        name = canonical_name(key)
        if name not in vocab:
            raise UnknownStructureName(f"{where}: {key!r} is not in the structure vocabulary")
        out[name] = _resolve(base, value, f"{where}.{name}", check)
    return dict(sorted(out.items()))


def parse_manifest(payload: dict, base: Path, check_files: bool = True) -> CohortManifest:
    if not isinstance(payload, dict):
        raise SchemaError("manifest: top level must be an object")
    structures = _require(payload, "structures", list, "manifest")
    vocabulary: list[str] = []
    for s in structures:
        if not isinstance(s, str):
            raise SchemaError("manifest.structures: entries must be strings")
        name = canonical_name(s)
        if name in vocabulary:
            raise SchemaError(f"manifest.structures: duplicate structure {name!r}")
        vocabulary.append(name)
    vocab = set(vocabulary)

    superior = payload.get("superior", 1)
    if superior not in (1, -1):
        raise SchemaError("manifest.superior: must be 1 or -1")

    patients = _require(payload, "patients", list, "manifest")
    records: dict[str, PatientRecord] = {}
    for i, p in enumerate(patients):
        if not isinstance(p, dict):
            raise SchemaError(f"patients[{i}]: must be an object")
        pid = _require(p, "id", str, f"patients[{i}]")
        where = f"patient {pid!r}"
        sex = _require(p, "sex", str, where)
        if sex not in SEXES:
            raise SchemaError(f"{where}: sex must be one of {SEXES}, got {sex!r}")
        if pid in records:
            raise DuplicatePatientId(f"{where}: id appears more than once")
        pred = p.get("pred_ctv")
        landmarks_raw = p.get("landmarks", {})
        if not isinstance(landmarks_raw, dict):
            raise SchemaError(f"{where}.landmarks: must be an object")
        landmarks = {}
        for key, value in landmarks_raw.items():
            if key not in LANDMARKS:
                raise SchemaError(f"{where}.landmarks: unknown landmark {key!r}")
            landmarks[key] = _resolve(base, value, f"{where}.landmarks.{key}", check_files)
        records[pid] = PatientRecord(
            patient_id=pid,
            sex=sex,
            ct_path=_resolve(base, _require(p, "ct", str, where), f"{where}.ct", check_files),
            gt_ctv_path=_resolve(base, _require(p, "gt_ctv", str, where), f"{where}.gt_ctv", check_files),
            pred_ctv_path=None if pred is None else _resolve(base, pred, f"{where}.pred_ctv", check_files),
            structure_paths=_structure_map(p.get("structures", {}), vocab, base, f"{where}.structures", check_files),
            landmark_paths=landmarks,
            ts_structure_paths=_structure_map(
                p.get("ts_structures", {}), vocab, base, f"{where}.ts_structures", check_files
            ),
        )
    ordered = tuple(records[k] for k in sorted(records))
    return CohortManifest(records=ordered, structure_vocabulary=tuple(vocabulary), superior=superior)


def load_manifest(path, check_files: bool = True) -> CohortManifest:
    """Load and validate a manifest; relative paths resolve against its directory."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise MissingFile(f"{path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return parse_manifest(payload, path.parent, check_files)


def stratify(manifest: CohortManifest) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {sex: [] for sex in SEXES}
    for r in manifest.records:
        groups[r.sex].append(r.patient_id)
    return groups
