import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semcom.allocation import AllocationPlan
from semcom.channel import (ChannelRealization, SubchannelSet, csi_from_csv, csi_to_csv, realize,
                            sample_subchannels, snr_to_noise_std, transmit)
from semcom.errors import AllocationError, FormatError, ShapeError
from semcom.nn_core import Rng


class TestSampleSubchannels:
    def test_zero_variance(self):
        subs = sample_subchannels(8, 2, 7.5, 0.0, seed=1)
        assert np.all(subs.snr_db == 7.5)

    def test_variance_moment(self):
        subs = sample_subchannels(10_000, 1, 0.0, 15.0, seed=2)
        # clamping at 3 std removes ~0.3% of the mass and ~3% of the variance
        assert abs(subs.snr_db.var() - 15.0) < 1.5

    def test_clamped(self):
        subs = sample_subchannels(10_000, 1, 5.0, 4.0, seed=3)
        assert subs.snr_db.min() >= 5.0 - 6.0 and subs.snr_db.max() <= 5.0 + 6.0

    def test_std_interpretation(self):
        subs = sample_subchannels(10_000, 1, 0.0, 2.0, seed=3, dispersion="std")
        assert abs(subs.snr_db.std() - 2.0) < 0.1

    def test_deterministic(self):
        a = sample_subchannels(16, 2, 0.0, 15.0, seed=4)
        b = sample_subchannels(16, 2, 0.0, 15.0, seed=4)
        assert a.snr_db.tobytes() == b.snr_db.tobytes()


class TestSnrToNoiseStd:
    def test_zero_db(self):
        assert snr_to_noise_std(0.0, 1.0) == 1.0

    def test_ten_db(self):
        assert snr_to_noise_std(10.0, 1.0) == pytest.approx(0.316228, abs=1e-6)

    def test_negative_db(self):
        assert snr_to_noise_std(-10.0, 4.0) == pytest.approx(np.sqrt(40.0), rel=1e-12)
        assert snr_to_noise_std(-10.0, 4.0) == pytest.approx(6.32456, abs=1e-5)


class TestRealize:
    def test_uniform(self):
        subs = SubchannelSet([3.0, 3.0], capacity=2)
        real = realize(AllocationPlan([0, 1, 1, 0], "random"), subs, 1.0)
        assert np.all(real.per_unit_noise_std == real.per_unit_noise_std[0])

    def test_high_snr_is_noiseless(self):
        subs = SubchannelSet([300.0, 0.0], capacity=1)
        real = realize(AllocationPlan([0, 1], "proposed"), subs, 1.0)
        assert real.per_unit_noise_std[0] < 1e-12

    def test_hand_computation(self):
        subs = SubchannelSet([0.0, 10.0], capacity=2)
        real = realize(AllocationPlan([1, 0, 0, 1], "proposed"), subs, 2.0)
        expected = [np.sqrt(2.0 * 0.1), np.sqrt(2.0), np.sqrt(2.0), np.sqrt(2.0 * 0.1)]
        np.testing.assert_allclose(real.per_unit_noise_std, expected, rtol=1e-14)

    def test_infeasible(self):
        subs = SubchannelSet([0.0, 10.0], capacity=1)
        with pytest.raises(AllocationError):
            realize(AllocationPlan([1, 1], "proposed"), subs, 1.0)
        with pytest.raises(AllocationError):
            realize(AllocationPlan([0, 2], "proposed"), subs, 1.0)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-20, 30), min_size=2, max_size=6), st.integers(0, 5), st.floats(0.1, 20))
    def test_monotone_in_snr(self, snrs, which, bump):
        subs = SubchannelSet(snrs, capacity=2)
        which %= len(snrs)
        plan = AllocationPlan(np.repeat(np.arange(len(snrs)), 2), "random")
        better = np.array(snrs)
        better[which] += bump
        a = realize(plan, subs, 1.0).per_unit_noise_std
        b = realize(plan, SubchannelSet(better, capacity=2), 1.0).per_unit_noise_std
        assert np.all(b <= a)


class TestTransmit:
    def test_noiseless(self):
        z = np.array([1.0, -2.0, 3.0])
        out = transmit(z, ChannelRealization(np.zeros(3)), Rng(0))
        np.testing.assert_array_equal(out, z)

    def test_moments(self):
        z = np.array([1.0, -2.0, 0.5])
        std = np.array([0.5, 1.0, 2.0])
        out = transmit(np.tile(z, (100_000, 1)), ChannelRealization(std), Rng(1))
        np.testing.assert_allclose(out.mean(axis=0), z, atol=4 * std.max() / np.sqrt(100_000))
        np.testing.assert_allclose(out.var(axis=0), std ** 2, rtol=0.02)

    def test_deterministic(self):
        z = np.ones(4)
        real = ChannelRealization(np.full(4, 0.3))
        assert transmit(z, real, Rng(5, 2)).tobytes() == transmit(z, real, Rng(5, 2)).tobytes()

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            transmit(np.ones(3), ChannelRealization(np.ones(2)), Rng(0))

    def test_exchangeable_under_uniform_csi(self):
        subs = SubchannelSet([4.0, 4.0, 4.0], capacity=1)
        a = realize(AllocationPlan([0, 1, 2], "random"), subs, 1.0)
        b = realize(AllocationPlan([2, 0, 1], "random"), subs, 1.0)
        z = np.array([0.1, 0.2, 0.3])
        assert transmit(z, a, Rng(3)).tobytes() == transmit(z, b, Rng(3)).tobytes()


def test_csi_csv_roundtrip(tmp_path):
    subs = sample_subchannels(5, 2, 1.0, 15.0, seed=0)
    csi_to_csv(subs, tmp_path / "csi.csv")
    assert (tmp_path / "csi.csv").read_text().startswith("subchannel_index,snr_db\n")
    back = csi_from_csv(tmp_path / "csi.csv", capacity=2)
    assert back.snr_db.tobytes() == subs.snr_db.tobytes()


def test_csi_csv_requires_header(tmp_path):
    (tmp_path / "csi.csv").write_text("0,1.0\n1,2.0\n")
    with pytest.raises(FormatError):
        csi_from_csv(tmp_path / "csi.csv")
