import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from priorseg.cohort import canonical_name, load_manifest, parse_manifest, stratify
from priorseg.errors import DuplicatePatientId, MissingFile, SchemaError, UnknownStructureName


def _patient(pid, sex="female", **extra):
    p = {"id": pid, "sex": sex, "ct": f"{pid}/ct.nii.gz", "gt_ctv": f"{pid}/gt.nii.gz"}
    p.update(extra)
    return p


def _write(tmp_path, payload, touch=True):
    if touch:
        for p in payload.get("patients", []):
            for key in ("ct", "gt_ctv", "pred_ctv"):
                if key in p:
                    f = tmp_path / p[key]
                    f.parent.mkdir(parents=True, exist_ok=True)
                    f.touch()
            for v in list(p.get("structures", {}).values()) + list(p.get("landmarks", {}).values()):
                f = tmp_path / v
                f.parent.mkdir(parents=True, exist_ok=True)
                f.touch()
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(payload))
    return path


def test_two_patients_sorted_by_id(tmp_path):
    payload = {"structures": ["liver"], "patients": [_patient("P2", "male"), _patient("P1")]}
    m = load_manifest(_write(tmp_path, payload))
    assert [r.patient_id for r in m.records] == ["P1", "P2"]
    assert m.records[0].ct_path == tmp_path / "P1" / "ct.nii.gz"
    assert m.records[1].sex == "male"


def test_missing_sex_names_record(tmp_path):
    p = _patient("P7")
    del p["sex"]
    with pytest.raises(SchemaError, match="P7"):
        load_manifest(_write(tmp_path, {"structures": [], "patients": [p]}))


def test_bad_sex_value(tmp_path):
    with pytest.raises(SchemaError):
        load_manifest(_write(tmp_path, {"structures": [], "patients": [_patient("A", "other")]}))


def test_structure_key_canonicalized(tmp_path):
    p = _patient("A", structures={"Liver ": "A/liver.nii.gz"})
    m = load_manifest(_write(tmp_path, {"structures": ["liver"], "patients": [p]}))
    assert list(m.records[0].structure_paths) == ["liver"]
    assert canonical_name("Urinary Bladder ") == "urinary_bladder"


def test_unknown_structure(tmp_path):
    p = _patient("A", structures={"brain": "A/brain.nii.gz"})
    with pytest.raises(UnknownStructureName):
        load_manifest(_write(tmp_path, {"structures": ["liver"], "patients": [p]}))


def test_duplicate_id(tmp_path):
    with pytest.raises(DuplicatePatientId):
        load_manifest(_write(tmp_path, {"structures": [], "patients": [_patient("A"), _patient("A", "male")]}))


def test_missing_file(tmp_path):
    path = _write(tmp_path, {"structures": [], "patients": [_patient("A")]}, touch=False)
    with pytest.raises(MissingFile):
        load_manifest(path)
    assert load_manifest(path, check_files=False).records[0].patient_id == "A"


def test_missing_manifest(tmp_path):
    with pytest.raises(MissingFile):
        load_manifest(tmp_path / "nope.json")


def test_bad_json(tmp_path):
    (tmp_path / "m.json").write_text("{")
    with pytest.raises(SchemaError):
        load_manifest(tmp_path / "m.json")


def test_unknown_landmark(tmp_path):
    p = _patient("A", landmarks={"vertebra_T2": "A/t2.nii.gz"})
    with pytest.raises(SchemaError):
        load_manifest(_write(tmp_path, {"structures": [], "patients": [p]}))


def test_superior_field(tmp_path):
    m = load_manifest(_write(tmp_path, {"structures": [], "patients": [], "superior": -1}))
    assert m.superior == -1
    with pytest.raises(SchemaError):
        load_manifest(_write(tmp_path, {"structures": [], "patients": [], "superior": 0}))


def test_loading_is_deterministic(tmp_path):
    payload = {"structures": ["liver", "Spleen"], "patients": [_patient(f"P{i}", "male" if i % 2 else "female") for i in range(5)]}
    path = _write(tmp_path, payload)
    assert load_manifest(path) == load_manifest(path)


def _manifest(n_male, n_female):
    patients = [_patient(f"M{i:02d}", "male") for i in range(n_male)] + [
        _patient(f"F{i:02d}", "female") for i in range(n_female)
    ]
    return parse_manifest({"structures": [], "patients": patients}, Path("."), check_files=False)


def test_stratify_cohort_sizes():
    g = stratify(_manifest(25, 19))
    assert (len(g["male"]), len(g["female"])) == (25, 19)


def test_stratify_all_male():
    g = stratify(_manifest(3, 0))
    assert g["female"] == [] and len(g["male"]) == 3


def test_stratify_empty():
    assert stratify(_manifest(0, 0)) == {"female": [], "male": []}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(["female", "male"]), max_size=30))
def test_stratify_partitions(sexes):
    patients = [_patient(f"P{i:03d}", s) for i, s in enumerate(sexes)]
    m = parse_manifest({"structures": [], "patients": patients}, Path("."), check_files=False)
    g = stratify(m)
    assert sorted(g["female"] + g["male"]) == sorted(p["id"] for p in patients)
    assert not set(g["female"]) & set(g["male"])
    assert all(m.record(pid).sex == "female" for pid in g["female"])
