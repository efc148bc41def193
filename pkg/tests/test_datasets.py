import struct

import numpy as np
import pytest

from semcom.datasets import (Dataset, SplitSpec, from_csv, gen_gaussian_mixture, load_idx, split,
                             to_csv, write_idx)
from semcom.errors import DataError, FormatError, LengthError, PairingError, ParameterError


def nearest_mean_accuracy(train, test):
    means = np.stack([train.inputs[train.labels == c].mean(axis=0) for c in range(train.num_classes)])
    d = ((test.inputs[:, None, :] - means[None]) ** 2).sum(axis=2)
    return float(np.mean(d.argmin(axis=1) == test.labels))


class TestGaussianMixture:
    def test_tiny_spread_is_separable(self):
        ds = gen_gaussian_mixture(5, 4, 50, 1e-6, seed=3)
        assert nearest_mean_accuracy(ds, ds) == 1.0

    def test_two_class_oracle(self):
        ds = gen_gaussian_mixture(2, 2, 100, 0.1, seed=0)
        assert nearest_mean_accuracy(ds, ds) >= 0.99

    def test_deterministic(self):
        a = gen_gaussian_mixture(3, 5, 20, 1.0, seed=9)
        b = gen_gaussian_mixture(3, 5, 20, 1.0, seed=9)
        assert a.inputs.tobytes() == b.inputs.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_class_means_converge(self):
        spread, per_class = 0.5, 400
        ds = gen_gaussian_mixture(3, 4, per_class, spread, seed=1)
        tight = gen_gaussian_mixture(3, 4, 1, 1e-9, seed=1)  # same means, no spread
        for c in range(3):
            emp = ds.inputs[ds.labels == c].mean(axis=0)
            assert np.all(np.abs(emp - tight.inputs[c]) < 3 * spread / np.sqrt(per_class))
        np.testing.assert_allclose(np.linalg.norm(tight.inputs, axis=1), 3.0, rtol=1e-6)

    @pytest.mark.parametrize("kw", [dict(num_classes=1), dict(dim=1), dict(per_class=0), dict(spread=0.0)])
    def test_invalid(self, kw):
        args = dict(num_classes=3, dim=3, per_class=2, spread=1.0, seed=0)
        args.update(kw)
        with pytest.raises(ParameterError):
            gen_gaussian_mixture(**args)


class TestIdx:
    def test_scaling(self, tmp_path):
        write_idx(np.array([[[0, 255], [128, 0]]]), [7], tmp_path / "i", tmp_path / "l")
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        np.testing.assert_allclose(ds.inputs[0], [0.0, 1.0, 128 / 255, 0.0])
        assert ds.labels.tolist() == [7]

    def test_empty(self, tmp_path):
        write_idx(np.zeros((0, 3, 3)), [], tmp_path / "i", tmp_path / "l")
        ds = load_idx(tmp_path / "i", tmp_path / "l", num_classes=10)
        assert len(ds) == 0

    def test_truncated(self, tmp_path):
        (tmp_path / "i").write_bytes(b"\x00\x00\x08\x03" + struct.pack(">III", 10, 1, 1) + bytes(9))
        write_idx(np.zeros((10, 1, 1)), [0] * 10, tmp_path / "x", tmp_path / "l")
        with pytest.raises(LengthError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_bad_magic(self, tmp_path):
        write_idx(np.zeros((1, 1, 1)), [0], tmp_path / "i", tmp_path / "l")
        with pytest.raises(FormatError):
            load_idx(tmp_path / "l", tmp_path / "i")

    def test_count_mismatch(self, tmp_path):
        write_idx(np.zeros((2, 1, 1)), [0], tmp_path / "i", tmp_path / "l")
        with pytest.raises(PairingError):
            load_idx(tmp_path / "i", tmp_path / "l")

    def test_roundtrip(self, tmp_path):
        pix = np.arange(4 * 3 * 5, dtype=np.uint8).reshape(4, 3, 5) * 4
        write_idx(pix, [1, 0, 2, 1], tmp_path / "i", tmp_path / "l")
        ds = load_idx(tmp_path / "i", tmp_path / "l")
        np.testing.assert_array_equal(np.round(ds.inputs * 255).astype(np.uint8), pix.reshape(4, -1))


class TestSplit:
    def test_sizes_and_disjointness(self):
        ds = Dataset(np.arange(100, dtype=float)[:, None] * [1, 1], np.arange(100) % 2, 2)
        tr, te = split(ds, SplitSpec(0.8, seed=4))
        assert (len(tr), len(te)) == (80, 20)
        assert not set(tr.inputs[:, 0]) & set(te.inputs[:, 0])

    def test_deterministic(self):
        ds = gen_gaussian_mixture(2, 2, 30, 1.0, seed=0)
        a = split(ds, SplitSpec(0.7, seed=2))
        b = split(ds, SplitSpec(0.7, seed=2))
        assert a[0].inputs.tobytes() == b[0].inputs.tobytes()

    def test_union_is_original_multiset(self):
        ds = gen_gaussian_mixture(3, 2, 20, 1.0, seed=5)
        tr, te = split(ds, SplitSpec(0.5, seed=1))
        rows = lambda d: sorted(map(tuple, np.column_stack([d.inputs, d.labels]).tolist()))
        assert rows(tr) + rows(te) and sorted(rows(tr) + rows(te)) == rows(ds)

    def test_empty(self):
        with pytest.raises(DataError):
            split(Dataset(np.zeros((0, 2)), [], 2), SplitSpec())

    def test_bad_fraction(self):
        with pytest.raises(ParameterError):
            SplitSpec(1.0)


def test_csv_roundtrip(tmp_path):
    ds = gen_gaussian_mixture(3, 4, 5, 1.0, seed=0)
    to_csv(ds, tmp_path / "d.csv")
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "label,x0,x1,x2,x3"
    back = from_csv(tmp_path / "d.csv", num_classes=3)
    assert back.inputs.tobytes() == ds.inputs.tobytes()
    assert back.labels.tolist() == ds.labels.tolist()
