import json

import numpy as np
import pytest
from scipy import ndimage

import oracles
from conftest import SMALL_SPEC
from priorseg.cohort import LANDMARKS, load_manifest
from priorseg.metrics import evaluate_pair
from priorseg.nifti_io import read_labelmap
from priorseg.phantom import (
    ALL_STRUCTURES,
    PhantomSpec,
    SexError,
    build_patient,
    cylinder,
    dilate,
    erode,
    generate_cohort,
)


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_erosion_of_small_tube():
    tube = cylinder((16, 16, 16), (1, 1, 1), (8, 8), (4, 4), 3, 12)
    eroded = erode(tube, 1)
    # oracle: erosion by the 6-connected unit ball; voxels past the grid edge count as foreground
    ref = ndimage.binary_erosion(tube, oracles.SIX_CONNECTED, border_value=1)
    np.testing.assert_array_equal(eroded, ref)
    # frozen from the voxel-count oracle: 2 * 232 / (490 + 232)
    assert (int(tube.sum()), int(eroded.sum())) == (490, 232)
    assert oracles.voxel_dice(tube, eroded) == pytest.approx(464 / 722, abs=1e-15)


def test_dilate_erode_radius_zero_is_identity():
    rng = np.random.default_rng(1)
    fg = rng.random((8, 8, 8)) < 0.3
    np.testing.assert_array_equal(dilate(fg, 0), fg)
    np.testing.assert_array_equal(erode(fg, 0), fg)


def test_dilate_matches_ball_oracle():
    fg = np.zeros((11, 11, 11), bool)
    fg[5, 5, 5] = True
    idx = np.indices(fg.shape) - 5
    ball = (idx**2).sum(axis=0) <= 4
    np.testing.assert_array_equal(dilate(fg, 2), ball)


def test_zero_error_gives_perfect_predictions(tmp_path):
    spec = PhantomSpec(**SMALL_SPEC, female_error=SexError("erode", 0), male_error=SexError("dilate", 0))
    m = generate_cohort(spec, tmp_path)
    assert len(m.records) == 4
    for rec in m.records:
        r = evaluate_pair(read_labelmap(rec.gt_ctv_path), read_labelmap(rec.pred_ctv_path))
        assert (r.dsc, r.hd95_mm) == (1.0, 0.0)


def test_same_seed_byte_identical(tmp_path):
    spec = PhantomSpec(**SMALL_SPEC, jitter_voxels=2, seed=3)
    generate_cohort(spec, tmp_path / "a", threads=1)
    generate_cohort(spec, tmp_path / "b", threads=3)
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_seed_changes_files_not_schema(tmp_path):
    generate_cohort(PhantomSpec(**SMALL_SPEC, seed=1), tmp_path / "a")
    generate_cohort(PhantomSpec(**SMALL_SPEC, seed=2), tmp_path / "b")
    a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
    assert a.keys() == b.keys()
    assert a["F000/ct.nii.gz"] != b["F000/ct.nii.gz"]
    ma = json.loads(a["manifest.json"])
    mb = json.loads(b["manifest.json"])
    assert ma == mb  # paths only; contents differ


def test_size_ratio():
    spec = PhantomSpec(sex_size_ratio=0.8)
    f, m = build_patient(spec, "female", 0), build_patient(spec, "male", 0)
    target = 0.8**3
    total_f = total_m = 0
    for name in ALL_STRUCTURES:
        nf, nm = int(f[name].sum()), int(m[name].sum())
        total_f += nf
        total_m += nm
        # organs under ~1000 voxels are too coarse for a 5% bound
        if nm >= 1000:
            assert nf / nm == pytest.approx(target, rel=0.05), name
    assert total_f / total_m == pytest.approx(target, rel=0.02)


def test_landmarks_are_monotone_and_nonempty(small_cohort):
    m = load_manifest(small_cohort)
    for rec in m.records:
        tops, bottoms = {}, {}
        for name in LANDMARKS:
            z = np.flatnonzero(read_labelmap(rec.landmark_paths[name]).foreground.any(axis=(0, 1)))
            assert z.size
            tops[name], bottoms[name] = z[-1], z[0]
        assert tops["vertebra_T1"] >= tops["stomach"] >= bottoms["vertebra_L4"]


def test_spec_json_round_trip():
    spec = PhantomSpec(dims=(40, 40, 50), n_female=3, n_male=1, female_error=SexError("dilate", 2), seed=9)
    assert PhantomSpec.from_json(spec.to_json()) == spec
    with pytest.raises(ValueError):
        PhantomSpec.from_json({"colour": "blue"})
    with pytest.raises(ValueError):
        PhantomSpec(dims=(16, 64, 64))


def test_empty_cohort(tmp_path):
    m = generate_cohort(PhantomSpec(n_female=0, n_male=0), tmp_path)
    assert m.records == ()
    assert json.loads((tmp_path / "manifest.json").read_text())["patients"] == []
