import json

import numpy as np
import pytest

from gpdeform import io_formats as io
from gpdeform.affine import AffineTransform
from gpdeform.core_types import GridSpec
from gpdeform.errors import FormatError
from gpdeform.evaluate import SyntheticSpec, generate_synthetic_case
from gpdeform.field import DenseField, UncertaintyMap, Volume, generate_dense_field
from gpdeform.gp import KernelSpec, fit_axis_models
from gpdeform.core_types import compute_displacements

from conftest import make_landmark_set


class TestLandmarkFiles:
    def test_round_trip(self, tmp_path, rng):
        pre = rng.uniform(0, 50, (10, 3))
        post = pre + rng.normal(0, 1, (10, 3))
        ls = make_landmark_set(pre, post)
        path = tmp_path / "lm.json"
        io.write_landmarks(ls, path)
        back = io.read_landmarks(path)
        assert back.ids() == ls.ids()
        np.testing.assert_array_equal(back.pre_array(), ls.pre_array())
        np.testing.assert_array_equal(back.post_array(), ls.post_array())

    def test_duplicate_id_named(self, tmp_path):
        doc = {"version": 1, "pairs": [
            {"id": 7, "pre": [0, 0, 0], "post": [0, 0, 0], "source": "file"},
            {"id": 7, "pre": [1, 0, 0], "post": [1, 0, 0], "source": "file"},
        ]}
        p = tmp_path / "dup.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="duplicate id 7"):
            io.read_landmarks(p)

    def test_unknown_field_rejected_with_key(self, tmp_path):
        doc = {"version": 1, "pairs": [], "extra_stuff": 1}
        p = tmp_path / "x.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="extra_stuff"):
            io.read_landmarks(p)

    def test_unknown_pair_field_rejected(self, tmp_path):
        doc = {"version": 1, "pairs": [
            {"id": 0, "pre": [0, 0, 0], "post": [0, 0, 0], "weight": 2}]}
        p = tmp_path / "x.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="weight"):
            io.read_landmarks(p)

    def test_malformed_json_diagnostic(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(FormatError, match="line 1"):
            io.read_landmarks(p)

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "v9.json"
        p.write_text(json.dumps({"version": 9, "pairs": []}))
        with pytest.raises(FormatError, match="version"):
            io.read_landmarks(p)

    def test_71_pairs_load(self, tmp_path, rng):
        pre = rng.uniform(0, 80, (71, 3))
        ls = make_landmark_set(pre, pre)
        io.write_landmarks(ls, tmp_path / "many.json")
        assert len(io.read_landmarks(tmp_path / "many.json")) == 71


class TestRawVolumes:
    def test_payload_size_2x2x2(self, tmp_path):
        grid = GridSpec([0, 0, 0], [1, 1, 1], (2, 2, 2))
        vol = Volume(grid, np.arange(8, dtype=np.float32).reshape(2, 2, 2))
        raw, hdr = io.write_volume(vol, tmp_path / "v")
        assert raw.stat().st_size == 32  # 8 voxels * 4 bytes

    def test_round_trip_bit_exact(self, tmp_path, rng):
        grid = GridSpec([-4, 2, 0], [0.5, 1, 2], (16, 16, 16))
        field = DenseField(grid, rng.normal(0, 2, grid.dims + (3,)).astype(np.float32))
        io.write_field(field, tmp_path / "f")
        back = io.read_field(tmp_path / "f")
        np.testing.assert_array_equal(back.vectors.astype(np.float32),
                                      field.vectors.astype(np.float32))
        assert back.grid == field.grid

    def test_x_fastest_payload_order(self, tmp_path):
        grid = GridSpec([0, 0, 0], [1, 1, 1], (2, 2, 1))
        vals = np.zeros((2, 2, 1), dtype=np.float32)
        vals[0, 0, 0] = 1.0
        vals[1, 0, 0] = 2.0
        vals[0, 1, 0] = 3.0
        vals[1, 1, 0] = 4.0
        raw, _ = io.write_volume(Volume(grid, vals), tmp_path / "o")
        flat = np.frombuffer(raw.read_bytes(), dtype="<f4")
        np.testing.assert_array_equal(flat, [1.0, 2.0, 3.0, 4.0])

    def test_size_mismatch_reports_expected(self, tmp_path):
        grid = GridSpec([0, 0, 0], [1, 1, 1], (4, 4, 4))
        vol = Volume(grid, np.zeros(grid.dims, dtype=np.float32))
        raw, hdr = io.write_volume(vol, tmp_path / "t")
        raw.write_bytes(raw.read_bytes()[:-1])  # truncate to 255 bytes
        with pytest.raises(FormatError, match="expected 256"):
            io.read_volume(tmp_path / "t")

    def test_missing_sidecar(self, tmp_path):
        (tmp_path / "lone.raw").write_bytes(b"\x00" * 4)
        with pytest.raises(FormatError, match="sidecar"):
            io.read_volume(tmp_path / "lone")

    def test_uncertainty_round_trip(self, tmp_path, rng):
        grid = GridSpec([0, 0, 0], [1, 1, 1], (4, 4, 4))
        unc = UncertaintyMap(grid, rng.uniform(0, 2, grid.dims + (3,)).astype(np.float32))
        io.write_uncertainty(unc, tmp_path / "u")
        back = io.read_uncertainty(tmp_path / "u")
        np.testing.assert_array_equal(back.variance.astype(np.float32),
                                      unc.variance.astype(np.float32))


class TestModelBundle:
    def _bundle(self, rng):
        case = generate_synthetic_case(SyntheticSpec(seed=5, n_landmarks=12))
        from gpdeform.affine import fit_affine

        affine = fit_affine(case.train)
        kernels = (KernelSpec("gaussian", 1.0, 50.0, 0.01),) * 3
        grid = GridSpec([0, 0, 0], [10, 10, 10], (6, 6, 6))
        return io.ModelBundle(affine=affine, kernels=kernels, landmarks=case.train,
                              grid=grid, kernel_source="grid")

    def test_save_load_regenerate_field(self, tmp_path, rng):
        bundle = self._bundle(rng)
        path = tmp_path / "bundle.json"
        io.write_model_bundle(bundle, path)
        back = io.read_model_bundle(path)

        def field_of(b):
            obs = compute_displacements(b.landmarks, b.affine)
            models = fit_axis_models(b.kernels, obs)
            return generate_dense_field(models, b.grid)

        f1 = field_of(bundle)
        f2 = field_of(back)
        assert np.max(np.abs(f1.vectors - f2.vectors)) < 1e-9

    def test_bundle_without_variograms(self, tmp_path, rng):
        bundle = self._bundle(rng)
        path = tmp_path / "b.json"
        io.write_model_bundle(bundle, path)
        back = io.read_model_bundle(path)
        assert back.variograms is None
        assert back.cv is None

    def test_tampered_kernel_rejected(self, tmp_path, rng):
        path = tmp_path / "b.json"
        io.write_model_bundle(self._bundle(rng), path)
        doc = json.loads(path.read_text())
        doc["kernels"]["x"]["sill"] = -1.0
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="sill"):
            io.read_model_bundle(path)

    def test_version_mismatch(self, tmp_path, rng):
        path = tmp_path / "b.json"
        io.write_model_bundle(self._bundle(rng), path)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(FormatError, match="version"):
            io.read_model_bundle(path)


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = io.ProjectConfig(
            grid=GridSpec([0, 0, 0], [1, 1, 1], (8, 8, 8)),
            kernel_grid=(KernelSpec("gaussian", 1.0, 30.0),),
            variogram_delta=2.0,
            variogram_min_landmarks=40,
            cv_seed=9,
        )
        path = tmp_path / "cfg.json"
        io.write_config(cfg, path)
        back = io.read_config(path)
        assert back.grid == cfg.grid
        assert back.kernel_grid == cfg.kernel_grid
        assert back.variogram_delta == 2.0
        assert back.variogram_min_landmarks == 40
        assert back.cv_seed == 9

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"cv_seed": 1, "bogus": True}))
        with pytest.raises(FormatError, match="bogus"):
            io.read_config(p)

    def test_arbitrary_bytes_structured_error(self, tmp_path):
        p = tmp_path / "junk.json"
        p.write_bytes(bytes(range(256)))
        with pytest.raises(FormatError):
            io.read_config(p)
