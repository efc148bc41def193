import json
from pathlib import Path

import numpy as np
import pytest

from semcom import cli
from semcom.config import RunConfig, load_config
from semcom.errors import ConfigError

SMALL = {
    "dataset": {"per_class": 60},
    "transceiver": {"m": 8, "encoder_hidden": [16], "decoder_hidden": [16], "epochs": 3},
    "ib": {"iters": 5, "num_samples": 16},
    "channel": {"s": 4, "capacity": 2},
    "sweep": {"snr_points_db": [0.0], "realizations_per_point": 2},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(SMALL))
    return p


def run(*argv):
    return cli.main([*map(str, argv), "-q"])


@pytest.fixture
def trained_dir(tmp_path, cfg_path):
    out = tmp_path / "out"
    for stage in ("gen-data", "train", "mask"):
        assert run(stage, "--config", cfg_path, "--out", out) == 0
    return out


def test_full_pipeline(tmp_path, cfg_path):
    out = tmp_path / "run"
    assert run("run", "--config", cfg_path, "--out", out) == 0
    for name in ("dataset.csv", "model.bin", "mask.json", "csi.csv", "plan.csv", "sweep.csv",
                 "halfsplit.json", "halfsplit_coords.csv"):
        assert (out / name).exists()
        meta = json.loads((out / (name + ".meta.json")).read_text())
        assert meta["config"]["transceiver"]["m"] == 8


def test_gen_data_deterministic(tmp_path, cfg_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gen-data", "--config", cfg_path, "--out", a) == 0
    assert run("gen-data", "--config", cfg_path, "--out", b) == 0
    assert (a / "dataset.csv").read_bytes() == (b / "dataset.csv").read_bytes()


def test_invalid_class_count(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"dataset": {"num_classes": 1}}))
    assert cli.main(["gen-data", "--config", str(p), "--out", str(tmp_path)]) == 3
    assert "dataset.num_classes" in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"ib": {"betta": 0.1}}))
    assert run("mask", "--config", p, "--out", tmp_path) == 3


class TestSeedPrecedence:
    def test_flag_beats_env_beats_file(self, cfg_path):
        data = dict(SMALL, seed=5)
        cfg_path.write_text(json.dumps(data))
        assert load_config(cfg_path, env={}).seed == 5
        assert load_config(cfg_path, env={"SEMCOM_SEED": "7"}).seed == 7
        cfg = load_config(cfg_path, seed_override=9, env={"SEMCOM_SEED": "7"})
        assert cfg.seed == cfg.transceiver.seed == cfg.ib.seed == cfg.sweep.seed == 9

    def test_bad_env(self, cfg_path):
        with pytest.raises(ConfigError):
            load_config(cfg_path, env={"SEMCOM_SEED": "x"})

    def test_seed_changes_dataset(self, tmp_path, cfg_path, monkeypatch):
        monkeypatch.setenv("SEMCOM_SEED", "3")
        assert run("gen-data", "--config", cfg_path, "--out", tmp_path / "e") == 0
        assert run("gen-data", "--config", cfg_path, "--out", tmp_path / "f", "--seed", 4) == 0
        monkeypatch.delenv("SEMCOM_SEED")
        assert run("gen-data", "--config", cfg_path, "--out", tmp_path / "g", "--seed", 3) == 0
        e, f, g = ((tmp_path / d / "dataset.csv").read_bytes() for d in "efg")
        assert e == g and e != f


class TestArtifacts:
    def test_missing_upstream(self, tmp_path, cfg_path):
        assert run("train", "--config", cfg_path, "--out", tmp_path / "empty") == 2

    def test_corrupt_model(self, trained_dir, cfg_path):
        p = trained_dir / "model.bin"
        raw = bytearray(p.read_bytes())
        raw[40] ^= 0xFF
        p.write_bytes(bytes(raw))
        assert run("sweep", "--config", cfg_path, "--out", trained_dir) == 2

    def test_edited_mask(self, trained_dir, cfg_path):
        p = trained_dir / "mask.json"
        p.write_text(p.read_text().replace('"m": 8', '"m":  8'))
        assert run("allocate", "--config", cfg_path, "--out", trained_dir) == 2

    def test_mask_idempotent(self, trained_dir, cfg_path):
        first = (trained_dir / "mask.json").read_bytes()
        first_meta = (trained_dir / "mask.json.meta.json").read_bytes()
        assert run("mask", "--config", cfg_path, "--out", trained_dir) == 0
        assert (trained_dir / "mask.json").read_bytes() == first
        assert (trained_dir / "mask.json.meta.json").read_bytes() == first_meta


class TestAllocateWithCsi:
    def test_hand_check(self, trained_dir, cfg_path, tmp_path):
        csi = tmp_path / "csi.csv"
        csi.write_text("subchannel_index,snr_db\n0,-3.0\n1,12.0\n2,4.5\n3,8.0\n")
        assert run("allocate", "--config", cfg_path, "--out", trained_dir, "--csi", csi) == 0
        mask = json.loads((trained_dir / "mask.json").read_text())
        rows = (trained_dir / "plan.csv").read_text().splitlines()[1:]
        assign = np.array([int(r.split(",")[1]) for r in rows])
        order = np.lexsort((np.arange(8), np.array(mask["r"])))  # least robust first
        # subchannel order by SNR: 1 (12), 3 (8), 2 (4.5), 0 (-3), two units each
        expected = np.empty(8, dtype=int)
        expected[order] = np.repeat([1, 3, 2, 0], 2)
        np.testing.assert_array_equal(assign, expected)
        assert (trained_dir / "csi.csv").read_text() == csi.read_text()

    def test_missing_csi(self, trained_dir, cfg_path, tmp_path):
        assert run("allocate", "--config", cfg_path, "--out", trained_dir, "--csi", tmp_path / "no.csv") == 2

    def test_malformed_csi(self, trained_dir, cfg_path, tmp_path):
        csi = tmp_path / "csi.csv"
        csi.write_text("subchannel_index,snr_db\n0,abc\n")
        assert run("allocate", "--config", cfg_path, "--out", trained_dir, "--csi", csi) == 2

    def test_too_few_subchannels(self, trained_dir, cfg_path, tmp_path):
        csi = tmp_path / "csi.csv"
        csi.write_text("subchannel_index,snr_db\n0,1.0\n1,2.0\n")
        assert run("allocate", "--config", cfg_path, "--out", trained_dir, "--csi", csi) == 3


def test_divergence_exit_code(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(dict(SMALL, transceiver=dict(SMALL["transceiver"], lr=1e6, epochs=2))))
    out = tmp_path / "o"
    assert run("gen-data", "--config", p, "--out", out) == 0
    assert run("train", "--config", p, "--out", out) == 4


def test_shipped_config_matches_defaults():
    path = Path(__file__).resolve().parent.parent / "configs" / "default.json"
    assert load_config(path, env={}).to_dict() == RunConfig().validate().to_dict()
