import json

import numpy as np
import pytest

from spfrecon import forward, io
from spfrecon.exceptions import ConfigError, DataError, FormatError, LengthError, MissingFileError
from spfrecon.so3 import Orientation, Pose

# "SPFV1\0", nx=2, ny=1, nz=3 then six little-endian float32 values, x fastest
GOLDEN = bytes.fromhex(
    "535046563100" "02000000" "01000000" "03000000"
    "0000803f" "000020c0" "00000000" "00000040" "0000a0c0" "00004040"
)
GOLDEN_VALUES = np.array([1.0, -2.5, 0.0, 2.0, -5.0, 3.0]).reshape(3, 1, 2)


def test_golden_bytes(tmp_path):
    path = tmp_path / "g.spfv"
    io.write_volume(GOLDEN_VALUES, path)
    assert path.read_bytes() == GOLDEN


def test_golden_read(tmp_path):
    path = tmp_path / "g.spfv"
    path.write_bytes(GOLDEN)
    v = io.read_volume(path)
    assert v.shape == (3, 1, 2)
    np.testing.assert_array_equal(v, GOLDEN_VALUES)


def test_length_formula(tmp_path, rng):
    path = tmp_path / "v.spfv"
    io.write_volume(rng.normal(size=(5, 4, 3)), path)
    assert path.stat().st_size == 18 + 4 * 60


def test_round_trip_is_bit_exact(tmp_path, rng):
    v = rng.normal(size=(6, 7, 8)).astype(np.float32)
    path = tmp_path / "v.spfv"
    io.write_volume(v, path)
    back = io.read_volume(path, dtype=np.float32)
    assert back.tobytes() == v.tobytes()
    io.write_volume(back, tmp_path / "w.spfv")
    assert (tmp_path / "w.spfv").read_bytes() == path.read_bytes()


def test_bad_magic(tmp_path, rng):
    path = tmp_path / "v.spfv"
    io.write_volume(rng.normal(size=(2, 2, 2)), path)
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError):
        io.read_volume(path)


def test_truncated_payload(tmp_path, rng):
    path = tmp_path / "v.spfv"
    io.write_volume(rng.normal(size=(2, 2, 2)), path)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(LengthError):
        io.read_volume(path)
    path.write_bytes(b"SPF")
    with pytest.raises(LengthError):
        io.read_volume(path)


def test_nan_payload_rejected(tmp_path):
    path = tmp_path / "v.spfv"
    path.write_bytes(GOLDEN[:18] + np.array([1, np.nan, 0, 0, 0, 0], "<f4").tobytes())
    with pytest.raises(DataError):
        io.read_volume(path)


def test_write_rejects_bad_volumes(tmp_path):
    with pytest.raises(DataError):
        io.write_volume(np.full((2, 2, 2), np.inf), tmp_path / "a.spfv")
    with pytest.raises(DataError):
        io.write_volume(np.full((2, 2, 2), 1e39), tmp_path / "b.spfv")
    with pytest.raises(FormatError):
        io.write_volume(np.zeros((2, 2)), tmp_path / "c.spfv")
    assert not list(tmp_path.iterdir())


def test_missing_file(tmp_path):
    with pytest.raises(MissingFileError):
        io.read_volume(tmp_path / "nope.spfv")
    with pytest.raises(MissingFileError):
        io.load_dataset(tmp_path)


def _small_dataset(n=8, n_views=3):
    gt = forward.make_phantom(n, seed=0)
    return forward.generate_dataset(gt, forward.SimConfig.scaled(n, n_views=n_views, seed=5))


def test_dataset_round_trip(tmp_path):
    vs = _small_dataset()
    path = io.save_dataset(vs, tmp_path, seed=5, sim_config={"noise_sigma": 0.2})
    back = io.load_dataset(path)
    assert len(back.views) == 3
    for a, b in zip(vs.views, back.views):
        np.testing.assert_array_equal(b, a.astype(np.float32))
    np.testing.assert_array_equal(back.psf, vs.psf.astype(np.float32))
    assert back.true_poses == vs.true_poses
    assert back.info["seed"] == 5
    assert back.info["sim_config"] == {"noise_sigma": 0.2}
    assert back.info["padded_views"] == []
    # directory or manifest path both work
    assert io.load_dataset(tmp_path).true_poses == vs.true_poses


def test_dataset_pads_to_common_cube(tmp_path, rng):
    views = [rng.normal(size=(50, 50, 50)), rng.normal(size=(48, 48, 48))]
    for k, v in enumerate(views):
        io.write_volume(v, tmp_path / f"view_{k}.spfv")
    io.write_volume(np.ones((50, 50, 50)), tmp_path / "psf.spfv")
    manifest = {"format": io.MANIFEST_FORMAT, "version": 1, "views": ["view_0.spfv", "view_1.spfv"], "psf": "psf.spfv"}
    (tmp_path / io.MANIFEST_NAME).write_text(json.dumps(manifest))
    back = io.load_dataset(tmp_path)
    assert all(v.shape == (50, 50, 50) for v in back.views)
    assert back.info["padded_views"] == [1]
    np.testing.assert_array_equal(back.views[1][1:49, 1:49, 1:49], views[1].astype(np.float32))
    assert not np.any(back.views[1][0]) and not np.any(back.views[1][49])


def test_dataset_errors(tmp_path):
    vs = _small_dataset()
    path = io.save_dataset(vs, tmp_path)
    manifest = json.loads(path.read_text())
    (tmp_path / manifest["views"][1]).unlink()
    with pytest.raises(MissingFileError):
        io.load_dataset(path)
    path.write_text("{not json")
    with pytest.raises(FormatError):
        io.load_dataset(path)
    path.write_text(json.dumps({"format": "other"}))
    with pytest.raises(FormatError):
        io.load_dataset(path)


def test_pose_dict_round_trip():
    p = Pose(Orientation(0.1, 2.0, 3.0), (1.5, -2.0, 0.25))
    assert io.pose_from_dict(json.loads(json.dumps(io.pose_to_dict(p)))) == p
    with pytest.raises(FormatError):
        io.pose_from_dict({"phi1": 0.0})


def test_poses_csv_round_trip(tmp_path):
    poses = [Pose(Orientation(0.1 * k, 0.2 * k, 0.3 * k), (k, -k, 0.5)) for k in range(4)]
    io.write_poses_csv(tmp_path / "p.csv", poses)
    assert io.read_poses_csv(tmp_path / "p.csv") == poses


def test_config_parse_and_format(tmp_path):
    text = "# comment\nepochs = 5\nmu = 0.25  # trailing\nnoise-sigma = none\nspots = 1, 2\nflag = true\nname = abc\n"
    cfg = io.parse_config_text(text)
    assert cfg == {"epochs": 5, "mu": 0.25, "noise_sigma": None, "spots": [1, 2], "flag": True, "name": "abc"}
    io.write_config(cfg, tmp_path / "c.txt")
    assert io.read_config(tmp_path / "c.txt") == cfg


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        io.parse_config_text("just words")
    with pytest.raises(ConfigError):
        io.parse_config_text(" = 3")
    with pytest.raises(MissingFileError):
        io.read_config(tmp_path / "none.txt")


def test_write_json_handles_numpy(tmp_path):
    io.write_json(tmp_path / "m.json", {"a": np.float64(1.5), "b": np.arange(3), "c": np.int64(2)})
    assert json.loads((tmp_path / "m.json").read_text()) == {"a": 1.5, "b": [0, 1, 2], "c": 2}
