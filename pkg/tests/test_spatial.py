import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lbccn._errors import (HrirManifestError, InconsistentHrirError, InputError,
                           MissingHrirFileError, ShapeError, ZeroReferenceError)
from lbccn.dsp import BinauralWaveform
from lbccn.spatial import (HrirCatalog, HrirEntry, default_directions, diffuse_noise,
                           load_hrir_catalog, measure_snr, mix_at_snr, spatialize,
                           synth_spherical_hrir, woodworth_itd)
from lbccn.wavio import write_wav


def naive_conv(s, h):
    out = np.zeros(len(s))
    for n in range(len(s)):
        for k in range(len(h)):
            if 0 <= n - k < len(s):
                out[n] += h[k] * s[n - k]
    return out


def write_catalog(tmp_path, directions, rate=16000, length=32, seed=0):
    rng = np.random.default_rng(seed)
    items = []
    for i, (az, el) in enumerate(directions):
        name = f"ir_{i}.wav"
        write_wav(tmp_path / name, rng.standard_normal((length, 2)).astype(np.float32) * 0.1,
                  rate)
        items.append({"azimuth": az, "elevation": el, "file": name})
    path = tmp_path / "hrir.json"
    path.write_text(json.dumps({"entries": items, "source_tag": "fixture"}))
    return path


def test_load_four_direction_catalog(tmp_path):
    cat = load_hrir_catalog(write_catalog(tmp_path, [(0, 0), (90, 0), (180, 0), (-90, 0)]))
    assert len(cat) == 4 and cat.source_tag == "fixture" and cat.ir_length == 32


def test_load_resamples_to_16k(tmp_path):
    cat = load_hrir_catalog(write_catalog(tmp_path, [(0, 0)], rate=48000, length=96))
    assert cat.sample_rate == 16000 and cat.ir_length == 32


def test_cipic_shaped_grid(tmp_path):
    cat = load_hrir_catalog(write_catalog(tmp_path, default_directions(), length=8))
    assert len(cat) == 1250 and cat.grid_shape() == (25, 50)


def test_load_errors(tmp_path):
    path = write_catalog(tmp_path, [(0, 0)])
    (tmp_path / "ir_0.wav").unlink()
    with pytest.raises(MissingHrirFileError, match="ir_0.wav"):
        load_hrir_catalog(path)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(HrirManifestError):
        load_hrir_catalog(bad)
    bad.write_text(json.dumps([{"azimuth": 0}]))
    with pytest.raises(HrirManifestError):
        load_hrir_catalog(bad)
    with pytest.raises(MissingHrirFileError):
        load_hrir_catalog(tmp_path / "absent.json")
    write_wav(tmp_path / "a.wav", np.zeros((16, 2), np.float32), 16000)
    write_wav(tmp_path / "b.wav", np.zeros((20, 2), np.float32), 16000)
    bad.write_text(json.dumps([{"azimuth": 0, "elevation": 0, "file": "a.wav"},
                               {"azimuth": 5, "elevation": 0, "file": "b.wav"}]))
    with pytest.raises(InconsistentHrirError):
        load_hrir_catalog(bad)


def test_spherical_head_symmetry():
    cat = synth_spherical_hrir([(0, 0), (30, 0), (-30, 0), (90, 0)])
    front, r30, l30, _ = cat.entries
    assert np.array_equal(front.left, front.right)
    assert np.array_equal(r30.left, l30.right) and np.array_equal(r30.right, l30.left)
    with pytest.raises(InputError):
        synth_spherical_hrir([(0, 0)], head_radius=0)


def test_spherical_head_itd():
    expected = 0.0875 / 343 * (math.pi / 2 + 1) * 16000
    assert expected == pytest.approx(10.5, abs=0.05)
    assert woodworth_itd(math.pi / 2, 0.0875) * 16000 == pytest.approx(expected)
    e = synth_spherical_hrir([(90, 0)], head_shadow=False).entries[0]
    # peak of the cross-correlation between ears gives the lag
    xc = np.correlate(np.pad(e.left, 64), e.right, "valid")
    lag = np.argmax(xc) - 64
    assert abs(lag - expected) < 1.0
    # far (left) ear is delayed for a source on the right
    assert np.argmax(np.abs(e.left)) > np.argmax(np.abs(e.right))


def test_spatialize_oracles(rng):
    s = rng.standard_normal(300)
    h = HrirEntry(0, 0, rng.standard_normal(20), rng.standard_normal(20))
    out = spatialize(s, h)
    np.testing.assert_allclose(out.left, naive_conv(s, h.left), atol=1e-10)
    np.testing.assert_allclose(out.right, naive_conv(s, h.right), atol=1e-10)
    unit = np.zeros(8)
    unit[0] = 1
    ident = spatialize(s, HrirEntry(0, 0, unit, unit))
    np.testing.assert_allclose(ident.left, s, atol=1e-12)
    shift = np.zeros(8)
    shift[5] = 1
    moved = spatialize(s, HrirEntry(0, 0, shift, shift))
    np.testing.assert_allclose(moved.left[5:], s[:-5], atol=1e-12)
    with pytest.raises(InputError):
        spatialize(s, h, source_rate=8000)
    with pytest.raises(ShapeError):
        spatialize(np.zeros((2, 3)), h)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 1000))
def test_spatialize_linear(a, seed):
    rng = np.random.default_rng(seed)
    h = HrirEntry(0, 0, rng.standard_normal(16), rng.standard_normal(16))
    s1, s2 = rng.standard_normal(200), rng.standard_normal(200)
    lhs = spatialize(a * s1 + s2, h).as_array()
    rhs = a * spatialize(s1, h).as_array() + spatialize(s2, h).as_array()
    np.testing.assert_allclose(lhs, rhs, atol=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 64), st.integers(0, 1000))
def test_diffuse_fast_equals_slow(d, seed):
    rng = np.random.default_rng(seed)
    cat = HrirCatalog([HrirEntry(i, 0, rng.standard_normal(24), rng.standard_normal(24))
                       for i in range(d)])
    noise = rng.standard_normal(800)
    fast = diffuse_noise(noise, cat).as_array()
    slow = diffuse_noise(noise, cat, fast=False).as_array()
    assert np.max(np.abs(fast - slow)) <= 1e-6 * np.max(np.abs(slow))


def test_diffuse_single_and_symmetric(rng, small_catalog):
    e = small_catalog.entries[5]
    noise = rng.standard_normal(500)
    single = diffuse_noise(noise, HrirCatalog([e])).as_array()
    np.testing.assert_allclose(single, spatialize(noise, e).as_array(), atol=1e-12)
    sym = diffuse_noise(noise, small_catalog)
    np.testing.assert_allclose(sym.left, sym.right, atol=1e-12)


def test_mix_at_snr(rng):
    t = BinauralWaveform.from_array(rng.standard_normal((2, 4000)))
    n = BinauralWaveform.from_array(rng.standard_normal((2, 4000)) * 3)
    m0 = mix_at_snr(t, n, 0.0, dtype=np.float64)
    p_t = np.mean(m0.target.as_array() ** 2)
    p_n = np.mean(m0.noise.as_array() ** 2)
    assert p_n == pytest.approx(p_t, rel=1e-10)
    m10 = mix_at_snr(t, n, 10.0)
    assert measure_snr(m10.target, m10.noise) == pytest.approx(10.0, abs=0.01)
    assert np.array_equal(m10.noisy.as_array(), m10.target.as_array() + m10.noise.as_array())
    lower = mix_at_snr(t, n, -20 * math.log10(2))
    assert lower.gain == pytest.approx(2 * m0.gain, rel=1e-12)
    with pytest.raises(ZeroReferenceError):
        mix_at_snr(t, BinauralWaveform.from_array(np.zeros((2, 4000))), 0.0)
    with pytest.raises(InputError):
        mix_at_snr(t, n, float("nan"))
    with pytest.raises(ShapeError):
        mix_at_snr(t, BinauralWaveform.from_array(np.ones((2, 10))), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 10), st.integers(0, 10_000))
def test_mix_snr_property(snr, seed):
    rng = np.random.default_rng(seed)
    t = BinauralWaveform.from_array(rng.standard_normal((2, 2000)))
    n = BinauralWaveform.from_array(rng.standard_normal((2, 2000)))
    m = mix_at_snr(t, n, snr)
    assert abs(measure_snr(m.target, m.noise) - snr) < 0.01
    assert np.array_equal(m.noisy.as_array(), m.target.as_array() + m.noise.as_array())
