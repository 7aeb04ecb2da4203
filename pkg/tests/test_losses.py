import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lbccn import autodiff as ad
from lbccn._errors import ConfigError, ShapeError, ZeroReferenceError
from lbccn.dataset import synth_speech
from lbccn.dsp import StftConfig, istft, stft
from lbccn.gradcheck import grad_check
from lbccn.losses import (LossWeights, Signals, loss_composite, loss_ild, loss_ipd, loss_snr,
                          loss_stoi, loss_total, residual)


def pair(left, right):
    return np.array([[[left]], [[right]]], dtype=complex)


def speech(seed=0, seconds=1.2):
    return synth_speech(seconds, np.random.default_rng(seed))


def binaural_signals(seed=0, q=None):
    rng = np.random.default_rng(seed)
    s = speech(seed)
    x = np.stack([s, 0.7 * np.roll(s, 3)])
    cfg = StftConfig()
    spec = stft(x, cfg)
    if q is not None:
        spec[:, q:] = 0
        x = istft(spec, cfg, x.shape[-1])
        spec = spec[:, :q]
    return Signals(x, spec), rng


def test_weight_defaults():
    w = LossWeights()
    assert (w.k, w.w_snr, w.w_stoi, w.w_ipd, w.w_ild) == (0.5, 1.0, 10.0, 1.0, 10.0)
    with pytest.raises(ConfigError):
        LossWeights(k=1.5)


def test_ild_single_bin_fixture():
    assert float(loss_ild(pair(1, 1), pair(10, 1)).value) == pytest.approx(20.0, abs=1e-6)
    assert float(loss_ild(pair(10, 1), pair(1, 1)).value) == pytest.approx(20.0, abs=1e-6)


def test_ipd_single_bin_fixture():
    expected = abs(np.arctan(10.0) - np.arctan(1.0))
    assert float(loss_ipd(pair(1, 1), pair(10, 1)).value) == pytest.approx(expected, abs=1e-6)
    assert expected == pytest.approx(0.6857, abs=1e-4)


def test_ipd_phase_variant():
    a, b = pair(1, 1), pair(1j, 1)
    assert float(loss_ipd(a, b).value) == 0.0
    assert float(loss_ipd(a, b, phase=True).value) == pytest.approx(np.pi / 2)


def test_snr_fixtures(rng):
    x = rng.standard_normal((2, 500))
    assert float(loss_snr(2 * x, x).value) == pytest.approx(0.0, abs=1e-9)
    noise = rng.standard_normal((2, 500))
    noise *= np.sqrt(np.sum(x ** 2, -1, keepdims=True) / np.sum(noise ** 2, -1, keepdims=True) / 10)
    assert float(loss_snr(x + noise, x).value) == pytest.approx(-10.0, abs=1e-6)
    perfect = float(loss_snr(x, x).value)
    assert np.isfinite(perfect) and perfect < -100
    with pytest.raises(ZeroReferenceError):
        loss_snr(x, np.zeros_like(x))
    with pytest.raises(ShapeError):
        loss_snr(x[:, :10], x)


def test_stoi_loss_self():
    sig, _ = binaural_signals()
    assert float(loss_stoi(sig.wave, sig.wave).value) == pytest.approx(-1.0, abs=1e-12)


def test_composite_perfect_is_minus_ten():
    sig, _ = binaural_signals(q=40)
    cfg = StftConfig()
    val = loss_composite(sig, sig, LossWeights(w_snr=0.0), cfg, n_bins=40)
    assert float(val.value) == pytest.approx(-10.0, abs=1e-9)


def test_composite_linear_in_weights(rng):
    sig, _ = binaural_signals(q=40)
    est = Signals(sig.wave + 0.1 * rng.standard_normal(sig.wave.shape),
                  sig.spec * (1 + 0.2 * rng.standard_normal(sig.spec.shape)))
    base = LossWeights(w_snr=0, w_stoi=0, w_ipd=0, w_ild=1.0)
    one = float(loss_composite(est, sig, base, n_bins=40).value)
    two = float(loss_composite(est, sig, LossWeights(w_snr=0, w_stoi=0, w_ipd=0, w_ild=2.0),
                               n_bins=40).value)
    assert two == pytest.approx(2 * one)


def test_total_k_boundary_and_affine(rng):
    sig, _ = binaural_signals(q=40)
    noise = Signals(0.3 * rng.standard_normal(sig.wave.shape), None)
    noise.spec = stft(noise.wave)[:, :40]
    y = Signals(sig.wave + noise.wave, sig.spec + noise.spec)
    est = Signals(sig.wave + 0.05 * noise.wave, sig.spec + 0.05 * noise.spec)
    kw = dict(n_bins=40)
    A = float(loss_composite(est, sig, LossWeights(), **kw).value)
    B = float(loss_composite(residual(y, est), noise, LossWeights(), **kw).value)
    k1 = float(loss_total(est, y, sig, noise, LossWeights(k=1.0), **kw).value)
    assert k1 == A
    for k in (0.0, 0.3, 0.5):
        got = float(loss_total(est, y, sig, noise, LossWeights(k=k), **kw).value)
        assert got == pytest.approx(k * A + (1 - k) * B, rel=1e-12)


def test_residual_identity_bit_exact(rng):
    y = rng.standard_normal((2, 1000)).astype(np.float32)
    x_hat = (y * 0.7 + rng.standard_normal((2, 1000)) * 0.1).astype(np.float32)
    n_hat = residual(y.astype(np.float64), x_hat.astype(np.float64)).value
    assert np.array_equal(x_hat.astype(np.float64) + n_hat, y.astype(np.float64))


finite = st.floats(0.01, 100)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 2, 3, 4), elements=finite),
       arrays(np.float64, (2, 2, 3, 4), elements=st.floats(-np.pi, np.pi)),
       st.floats(0.1, 10), st.floats(0.1, 10))
def test_ild_ipd_properties(mags, phases, s1, s2):
    X = mags[0] * np.exp(1j * phases[0])
    Y = mags[1] * np.exp(1j * phases[1])
    for fn in (loss_ild, loss_ipd):
        v = float(fn(X, Y).value)
        assert v >= 0
        assert v == pytest.approx(float(fn(Y, X).value))
        assert v == pytest.approx(float(fn(s1 * X, s2 * Y).value), rel=1e-9, abs=1e-12)
        assert float(fn(X, X).value) == 0.0
    assert float(loss_ipd(X, Y).value) <= np.pi / 2


def test_loss_gradients(rng):
    # one grad check across every component on a short band-limited signal
    cfg = StftConfig(64, 32)
    x = rng.standard_normal((2, 640))
    X = stft(x, cfg)[:, :12]
    w = ad.DiffTensor(x + 0.3 * rng.standard_normal(x.shape), requires_grad=True)
    S = ad.DiffTensor(X * (1 + 0.3 * rng.standard_normal(X.shape)), requires_grad=True)
    weights = LossWeights(w_snr=1, w_stoi=10, w_ipd=1, w_ild=10)

    def fn():
        return loss_composite(Signals(w, S), Signals(x, X), weights, cfg, n_bins=12,
                              seg_frames=8)
    report = grad_check(fn, {"wave": w, "spec": S}, h=1e-5, tolerance=1e-4)
    assert report.passed, report.summary()
