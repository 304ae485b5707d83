import struct

import numpy as np
import pytest

from prism_mil.errors import PrismIOError
from prism_mil.tensorio import decode_tensors, encode_tensor, load_tensors, save_tensors


def test_header_layout():
    blob = encode_tensor(np.array([[1.0, 2.0, 3.0]]))
    assert blob[:4] == b"PRSM"
    version, code, rank = struct.unpack("<HHH", blob[4:10])
    assert (version, code, rank) == (1, 1, 2)
    assert struct.unpack("<2Q", blob[10:26]) == (1, 3)
    assert np.frombuffer(blob[26:], "<f8").tolist() == [1.0, 2.0, 3.0]


def test_roundtrip_multi(tmp_path):
    rng = np.random.default_rng(0)
    arrays = [rng.standard_normal((4, 3)), np.arange(5, dtype=np.int64), rng.standard_normal((2, 2, 2))]
    path = tmp_path / "x.bin"
    save_tensors(path, arrays)
    back = load_tensors(path)
    assert len(back) == 3
    for a, b in zip(arrays, back):
        assert a.dtype == b.dtype
        assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:-3],
    lambda b: b[:4] + struct.pack("<H", 9) + b[6:],
])
def test_corrupt(mutate):
    blob = encode_tensor(np.ones((2, 2)))
    with pytest.raises(PrismIOError):
        decode_tensors(mutate(blob))


def test_missing_file(tmp_path):
    with pytest.raises(PrismIOError, match="nope.bin"):
        load_tensors(tmp_path / "nope.bin")
