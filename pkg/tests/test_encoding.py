from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import mask
from priorseg.cohort import GT_STRUCTURES, TS_STRUCTURES, load_manifest
from priorseg.encoding import (
    EncodingStrategy,
    IntensityCode,
    Strategy,
    assign_intensities,
    channel_paths,
    crop_channels,
    encode,
    encode_crop,
    rasterize_channel,
    zscore,
)
from priorseg.errors import MissingStructure, TooManyStructures
from priorseg.nifti_io import Volume3D, read_volume


def _ct(data, spacing=(1.0, 1.0, 1.0)):
    return Volume3D.from_array(np.asarray(data, dtype=np.float64), spacing, "float32")


class TestIntensityCodes:
    def test_seven_structures(self):
        code = assign_intensities(GT_STRUCTURES)
        # round-half-up of 255*i/7, evaluated with exact fractions
        expected = [int(Fraction(255 * i, 7) + Fraction(1, 2)) for i in range(1, 8)]
        assert expected == [36, 73, 109, 146, 182, 219, 255]
        assert list(code.assignments.values()) == expected
        assert code.background == 0

    def test_equal_mode(self):
        assert set(assign_intensities(GT_STRUCTURES, "equal").assignments.values()) == {255}

    def test_single_structure(self):
        assert assign_intensities(["liver"]).assignments == {"liver": 255}

    def test_too_many(self):
        with pytest.raises(TooManyStructures):
            assign_intensities([f"s{i}" for i in range(256)])

    @given(st.integers(1, 255))
    def test_codes_distinct_and_in_range(self, n):
        vals = list(assign_intensities([f"s{i}" for i in range(n)]).assignments.values())
        assert len(set(vals)) == n and vals == sorted(vals)
        assert 1 <= vals[0] and vals[-1] == 255


class TestRasterize:
    def test_disjoint_voxels(self):
        a = np.zeros((3, 3, 3)); a[0, 0, 0] = 1
        b = np.zeros((3, 3, 3)); b[2, 2, 2] = 1
        ch = rasterize_channel({"a": mask(a), "b": mask(b)}, IntensityCode({"a": 100, "b": 200}))
        expected = np.zeros((3, 3, 3)); expected[0, 0, 0] = 100; expected[2, 2, 2] = 200
        np.testing.assert_array_equal(ch.data, expected)

    @pytest.mark.parametrize("order", [("big", "small"), ("small", "big")])
    def test_smaller_structure_wins(self, order):
        big = np.zeros((10, 1, 1)); big[:] = 1
        small = np.zeros((10, 1, 1)); small[4:7] = 1
        masks = {"big": mask(big), "small": mask(small)}
        code = IntensityCode({"big": 100, "small": 200})
        ch = rasterize_channel({k: masks[k] for k in order}, code)
        # direct enumeration: overlap voxels 4,5,6 carry the small structure's code
        expected = [200 if 4 <= i <= 6 else 100 for i in range(10)]
        assert ch.data[:, 0, 0].tolist() == expected

    def test_equal_size_tie_goes_to_earlier(self):
        a = np.zeros((4, 1, 1)); a[0:2] = 1
        b = np.zeros((4, 1, 1)); b[1:3] = 1
        ch = rasterize_channel({"a": mask(a), "b": mask(b)}, IntensityCode({"a": 10, "b": 20}))
        assert ch.data[:, 0, 0].tolist() == [10, 10, 20, 0]

    def test_empty_mask_list(self):
        ref = mask(np.zeros((3, 4, 5)))
        ch = rasterize_channel({}, IntensityCode({}), like=ref)
        assert ch.dims == (3, 4, 5) and not ch.data.any()


class TestZscore:
    def test_constant(self):
        out, stats = zscore(_ct(np.full((3, 3, 3), 7.0)))
        assert not out.data.any()
        assert (stats.mean, stats.std) == (7.0, 0.0)

    def test_two_point(self):
        data = np.zeros((2, 2, 2)); data[0] = 255
        out, stats = zscore(_ct(data))
        assert (stats.mean, stats.std) == (127.5, 127.5)
        assert set(out.data.ravel().tolist()) == {-1.0, 1.0}

    @settings(max_examples=50, deadline=None)
    @given(hnp.arrays(np.float64, (3, 4, 5), elements=st.floats(-1000, 1000, allow_nan=False)))
    def test_normalized(self, data):
        out, stats = zscore(_ct(data))
        if stats.std > 1e-6:
            assert abs(out.data.mean()) < 1e-6
            assert abs(out.data.std() - 1) < 1e-6
            again, s2 = zscore(out)
            np.testing.assert_allclose(again.data, out.data, atol=1e-9)


class TestCrop:
    def test_full_union(self, rng):
        ct = _ct(rng.normal(size=(4, 4, 4)))
        a, b = encode_crop(ct, [mask(np.ones((4, 4, 4)))])
        z, _ = zscore(ct)
        np.testing.assert_array_equal(a.data, z.data)
        np.testing.assert_array_equal(b.data, z.data)

    def test_empty_union(self, rng):
        ct = _ct(rng.normal(size=(4, 4, 4)))
        a, b = crop_channels(ct, [mask(np.zeros((4, 4, 4)))])
        assert (a.data == 0).all() and (b.data == 255).all()
        za, zb = encode_crop(ct, [mask(np.zeros((4, 4, 4)))])
        assert not za.data.any() and not zb.data.any()

    def test_exterior_fill(self):
        ct = _ct(np.full((2, 1, 1), 40.0))
        m = np.zeros((2, 1, 1)); m[0] = 1
        a, b = crop_channels(ct, [mask(m)])
        assert a.data[:, 0, 0].tolist() == [40.0, 0.0]
        assert b.data[:, 0, 0].tolist() == [40.0, 255.0]


class TestEncodePatient:
    @pytest.fixture
    def patient(self, small_cohort):
        return load_manifest(small_cohort).records[0]

    def test_mi_has_n_plus_one_values(self, patient):
        (ch,) = encode(EncodingStrategy.default("MI"), patient)
        assert ch.header.datatype == "uint8"
        assert len(np.unique(ch.data)) == len(GT_STRUCTURES) + 1

    def test_mi_ts_has_thirteen_codes(self, patient):
        (ch,) = encode(EncodingStrategy.default(Strategy.MI_TS), patient)
        nonzero = set(np.unique(ch.data).tolist()) - {0.0}
        assert len(TS_STRUCTURES) == 13 and len(nonzero) == 13

    def test_eq_z_values(self, patient):
        (ch,) = encode(EncodingStrategy.default("eq-z"), patient)
        assert len(np.unique(ch.data)) == 2
        assert abs(ch.data.mean()) < 1e-6

    def test_crop_z_two_channels(self, patient):
        assert len(encode(EncodingStrategy.default("crop-z"), patient)) == 2

    def test_alias(self):
        assert Strategy.parse("ei-z") is Strategy.EQ_Z

    def test_missing_structure(self, small_cohort):
        rec = load_manifest(small_cohort).records[0]
        paths = dict(rec.structure_paths)
        del paths["liver"]
        with pytest.raises(MissingStructure, match="liver"):
            encode(EncodingStrategy.default("MI"), replace(rec, structure_paths=paths))

    def test_written_files_deterministic_and_aligned(self, patient, tmp_path):
        strategy = EncodingStrategy.default("mi-z")
        encode(strategy, patient, tmp_path / "a")
        encode(strategy, patient, tmp_path / "b")
        for pa, pb in zip(channel_paths(patient.patient_id, strategy.kind, 1, tmp_path / "a"),
                          channel_paths(patient.patient_id, strategy.kind, 1, tmp_path / "b")):
            assert pa.read_bytes() == pb.read_bytes()
            ch = read_volume(pa)
            ct = read_volume(patient.ct_path)
            assert ch.dims == ct.dims and ch.spacing == ct.spacing
        sidecar = tmp_path / "a" / f"{patient.patient_id}_MI_Z.json"
        assert sidecar.read_bytes() == (tmp_path / "b" / sidecar.name).read_bytes()
