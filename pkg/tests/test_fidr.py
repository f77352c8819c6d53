"""Binary record format round trips and validation."""

import numpy as np
import pytest

from fidmag import fidr, signalsim as ss
from fidmag.errors import ValidationError


def make_record(rng, bit_depth=16):
    phi = np.cumsum(np.full(20_000, 0.7))
    phase = ss.PhaseSeries(phi=phi, fs=5e6)
    return ss.synthesize_polarimeter_record(
        phase, ss.DecayModel(a0=1.0, lifetime=0.3), sigma=0.4, phi_0=0.9,
        bit_depth=bit_depth, segments=ss.SegmentSpec(0.001, 0.001), rng=rng,
    )


class TestRoundTrip:
    def test_quantised(self, tmp_path, rng):
        rec = make_record(rng)
        path = fidr.write_record(rec, tmp_path / "shot.fidr")
        back = fidr.read_record(path)
        assert np.array_equal(back.codes, rec.codes)
        assert back.fs == rec.fs
        assert back.bit_depth == rec.bit_depth
        assert back.scale == rec.scale
        assert back.probe_start == rec.probe_start
        assert back.fid_start == rec.fid_start
        assert back.phi_0 == rec.phi_0
        assert back.metadata["lifetime"] == rec.metadata["lifetime"]

    def test_float_mode(self, tmp_path, rng):
        rec = make_record(rng, bit_depth=None)
        path = fidr.write_record(rec, tmp_path / "shot_float.fidr")
        back = fidr.read_record(path)
        assert back.bit_depth is None
        np.testing.assert_array_equal(back.volts, rec.volts)

    def test_volts_agree(self, tmp_path, rng):
        rec = make_record(rng)
        back = fidr.read_record(fidr.write_record(rec, tmp_path / "s.fidr"))
        np.testing.assert_allclose(back.volts, rec.volts, rtol=0, atol=0)

    def test_csv_export(self, tmp_path, rng):
        rec = make_record(rng)
        path = fidr.write_record_csv(rec, tmp_path / "shot.csv")
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (len(rec.codes), 2)
        np.testing.assert_allclose(data[:, 1], rec.volts, rtol=1e-6)


class TestValidation:
    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.fidr"
        p.write_bytes(b"NOPE" + b"\x00" * 100)
        with pytest.raises(ValidationError):
            fidr.read_record(p)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "short.fidr"
        p.write_bytes(b"FIDR\x01")
        with pytest.raises(ValidationError):
            fidr.read_record(p)

    def test_truncated_payload(self, tmp_path, rng):
        rec = make_record(rng)
        path = fidr.write_record(rec, tmp_path / "trunc.fidr")
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ValidationError):
            fidr.read_record(path)
