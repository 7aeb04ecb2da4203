import numpy as np
import pytest

from lbccn import autodiff as ad
from lbccn._errors import (CheckpointFormatError, CheckpointTruncatedError,
                           CheckpointVersionError, VariantMismatchError)
from lbccn.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from lbccn.model import LbccnModel, toy_config
from lbccn.optim import AdamState, adam_step


def trained_toy(dtype=np.complex128):
    model = LbccnModel(toy_config(), seed=4, dtype=dtype)
    rng = np.random.default_rng(0)
    spec = rng.standard_normal((2, 33, 6)) + 1j * rng.standard_normal((2, 33, 6))
    opt = AdamState(lr=1e-2, lr_scale={".freq_bias": 5.0})
    for _ in range(2):
        model.zero_grad()
        loss = ad.tsum(ad.abs2(model.predict_low(spec)))
        ad.backward(loss)
        adam_step(model.named_parameters(), None, opt)
    return model, opt, spec


@pytest.mark.parametrize("dtype", [np.complex128, np.complex64])
def test_roundtrip_bit_exact(tmp_path, dtype):
    model, opt, spec = trained_toy(dtype)
    path = save_checkpoint(model, tmp_path / "m.ckpt", opt, {"note": "x"})
    back, opt2, meta = load_checkpoint(path, with_optimizer=True)
    assert meta == {"note": "x"} and back.dtype == np.dtype(dtype)
    for name, p in model.named_parameters().items():
        assert np.array_equal(back.named_parameters()[name].value, p.value), name
    for name in opt.m:
        assert np.array_equal(opt2.m[name], opt.m[name])
        assert np.array_equal(opt2.v[name], opt.v[name])
    assert opt2.step == opt.step and opt2.lr_scale == opt.lr_scale
    assert np.array_equal(back.enhance_spectrum(spec), model.enhance_spectrum(spec))


def test_config_embedded(tmp_path):
    model, _, _ = trained_toy()
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    cfg, info, tensors = read_checkpoint(path)
    assert cfg == model.config and info["variant"] == "ratfs"
    assert not any(k.startswith("adam.") for k in tensors)


def test_errors(tmp_path):
    model, _, _ = trained_toy()
    path = save_checkpoint(model, tmp_path / "m.ckpt")
    raw = path.read_bytes()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(bad)
    bad.write_bytes(raw[:len(raw) // 2])
    with pytest.raises(CheckpointTruncatedError):
        load_checkpoint(bad)
    bad.write_bytes(raw[:8] + (99).to_bytes(4, "little") + raw[12:])
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(bad)
    flipped = bytearray(raw)
    flipped[len(raw) - 20] ^= 0xFF
    bad.write_bytes(bytes(flipped))
    with pytest.raises(CheckpointFormatError, match="checksum"):
        load_checkpoint(bad)
    with pytest.raises(VariantMismatchError):
        load_checkpoint(path, config=toy_config(predictor_variant="masks"))
