import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

from diracflow.io import FieldFormatError, field_bytes, file_digest, parse_field, read_field, write_field


def test_real_field_round_trip(tmp_path):
    f = np.linspace(-1, 1, 256)
    path = write_field(f, tmp_path / "f.dfield", extents=[32.0], t=0.5, label="rho")
    back, header = read_field(path)
    assert back.dtype == np.float64 and np.array_equal(back, f)
    assert header["shape"] == [256] and header["t"] == 0.5 and header["label"] == "rho"
    (n,) = struct.unpack("<Q", path.read_bytes()[:8])
    assert path.stat().st_size == 8 + n + 256 * 8


def test_complex_payload_is_interleaved():
    z = np.array([1 + 2j, -3 - 4j])
    blob = field_bytes(z)
    (n,) = struct.unpack("<Q", blob[:8])
    assert np.array_equal(np.frombuffer(blob[8 + n:], "<f8"), [1, 2, -3, -4])
    back, _ = parse_field(blob)
    assert np.array_equal(back, z)


@settings(max_examples=40, deadline=None)
@given(a=arrays(np.complex128, (4, 8)))
def test_round_trip_bit_exact(a):
    back, _ = parse_field(field_bytes(a))
    # compare bytes so NaN payloads and signed zeros count too
    assert back.tobytes() == a.tobytes()


def test_truncated_file_names_byte_counts(tmp_path):
    path = write_field(np.ones(16), tmp_path / "f.dfield")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FieldFormatError, match=r"expected 128 payload bytes.*found 120"):
        read_field(path)


def test_checksum_mismatch():
    blob = bytearray(field_bytes(np.arange(4.0)))
    blob[-1] ^= 0x01
    with pytest.raises(FieldFormatError, match="checksum"):
        parse_field(bytes(blob))


def test_short_or_foreign_header():
    with pytest.raises(FieldFormatError):
        parse_field(b"\x01\x00")
    hdr = json.dumps({"format": "other"}).encode()
    with pytest.raises(FieldFormatError):
        parse_field(struct.pack("<Q", len(hdr)) + hdr)


def test_file_digest(tmp_path):
    p = tmp_path / "x"
    p.write_bytes(b"abc")
    sha, size = file_digest(p)
    assert size == 3 and sha.startswith("ba7816bf")
