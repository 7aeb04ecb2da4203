import numpy as np
import pytest

from lbccn._errors import InputError, ShapeError
from lbccn.bench import PassthroughModel
from lbccn.dsp import BinauralWaveform, StftConfig, istft, stft
from lbccn.model import VARIANTS, LbccnConfig, LbccnModel, toy_config
from lbccn.streaming import (StreamingEnhancer, enhance_streaming, init_stream,
                             latency_samples, stream_enhance)


def test_default_latency():
    model = LbccnModel(LbccnConfig(), dtype=np.complex64)
    assert latency_samples(model) == 128
    assert StreamingEnhancer(model).latency == 128


@pytest.mark.parametrize("variant", VARIANTS)
def test_matches_offline_toy(rng, variant):
    model = LbccnModel(toy_config(predictor_variant=variant), seed=1)
    x = rng.standard_normal((2, 1000)) * 0.3
    off = model.enhance(BinauralWaveform.from_array(x)).as_array()
    on = stream_enhance(model, x).as_array()
    assert np.max(np.abs(on - off)) < 1e-9


def test_matches_offline_default(rng):
    model = LbccnModel(LbccnConfig(), seed=0)
    x = rng.standard_normal((2, 8000)) * 0.1
    off = model.enhance(BinauralWaveform.from_array(x)).as_array()
    on = stream_enhance(model, x).as_array()
    assert np.max(np.abs(on - off)) < 1e-5


def test_passthrough_reconstructs(rng):
    x = rng.standard_normal((2, 3000))
    out = stream_enhance(PassthroughModel(), x).as_array()
    np.testing.assert_allclose(out, x, atol=1e-12)


def test_output_is_delayed_offline(rng):
    # emitted sample m corresponds to offline sample m - latency
    model = LbccnModel(toy_config(), seed=2)
    cfg = model.config.stft
    x = rng.standard_normal((2, 32 * 20))
    enh = StreamingEnhancer(model)
    chunks = [enh.process(x[:, i:i + enh.hop]) for i in range(0, x.shape[1], enh.hop)]
    chunks.append(enh.flush())
    out = np.concatenate(chunks, axis=1)
    off = model.enhance(BinauralWaveform.from_array(x)).as_array()
    np.testing.assert_allclose(out[:, enh.latency:enh.latency + x.shape[1]], off, atol=1e-9)
    assert cfg.lead_pad == enh.latency


def test_errors(rng):
    model = LbccnModel(toy_config(), seed=0)
    state = init_stream(model)
    with pytest.raises(InputError):
        enhance_streaming(state, np.zeros((2, 10)))
    with pytest.raises(ShapeError):
        stream_enhance(model, np.zeros((2, 10)))
    with pytest.raises(InputError):
        stream_enhance(model, BinauralWaveform(np.zeros(100), np.zeros(100), 8000))
