"""Binary container formats and image round trips."""

import struct

import numpy as np
import pytest

from padeblur.errors import DataError
from padeblur.tensorio import (load_checkpoint, load_image, load_plan,
                               load_tensor, save_checkpoint, save_image,
                               save_plan, save_tensor, tensor_from_bytes,
                               tensor_to_bytes)


def test_tensor_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    for shape in [(3,), (2, 5), (3, 4, 5), (1, 2, 3, 4)]:
        arr = rng.standard_normal(shape).astype(np.float32)
        p = tmp_path / "t.tnsr"
        save_tensor(p, arr)
        np.testing.assert_array_equal(load_tensor(p), arr)


def test_tensor_header_layout():
    """Magic, little-endian u32 rank and dims precede the f32 payload."""
    arr = np.arange(6, dtype=np.float32).reshape(2, 3)
    buf = tensor_to_bytes(arr)
    assert buf[:4] == b"TNSR"
    assert struct.unpack_from("<I", buf, 4)[0] == 2
    assert struct.unpack_from("<II", buf, 8) == (2, 3)
    assert np.frombuffer(buf, "<f4", 6, 16).tolist() == arr.ravel().tolist()


def test_tensor_bad_magic():
    with pytest.raises(DataError):
        tensor_from_bytes(b"NOPE" + b"\x00" * 16)


def test_plan_roundtrip(tmp_path):
    rows = np.array([0, 3, 7], dtype=np.int64)
    cols = np.array([1, 2, 5], dtype=np.int64)
    p = tmp_path / "p.spln"
    save_plan(p, 8, 9, rows, cols)
    H, W, r2, c2 = load_plan(p)
    assert (H, W) == (8, 9)
    np.testing.assert_array_equal(r2, rows)
    np.testing.assert_array_equal(c2, cols)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    params = {
        "stage0.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        "stage0.b": np.zeros(4, np.float32),
        "policy.w1": rng.standard_normal((8, 16)).astype(np.float32),
    }
    p = tmp_path / "m.ckpt"
    save_checkpoint(p, params)
    loaded = load_checkpoint(p)
    assert list(loaded) == list(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])


def test_image_roundtrip_is_quantized_identity(tmp_path):
    """PNG round trip reproduces any image already on the 8-bit grid."""
    rng = np.random.default_rng(2)
    img = (rng.integers(0, 256, (3, 16, 20)) / 255.0).astype(np.float32)
    p = tmp_path / "img.png"
    save_image(p, img)
    np.testing.assert_allclose(load_image(p), img, atol=1e-7)
