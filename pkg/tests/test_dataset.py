import json

import numpy as np
import pytest

from lbccn._errors import DatasetError
from lbccn.dataset import (NOISE_KINDS, DatasetSpec, SourcePool, assign_splits,
                           generate_dataset, load_manifest, load_split, make_triple,
                           synth_noise, synth_speech)
from lbccn.spatial import measure_snr
from lbccn.dsp import BinauralWaveform
from lbccn.wavio import write_wav


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, small_catalog):
    out = tmp_path_factory.mktemp("ds")
    return generate_dataset(out, DatasetSpec(count=20, seed=7), small_catalog), out


def test_splits_and_manifest(dataset):
    manifest, out = dataset
    counts = {s: len(manifest.split(s)) for s in ("train", "test", "validation")}
    assert counts == {"train": 16, "test": 2, "validation": 2}
    assert all(-10 <= r.snr_db <= 10 for r in manifest.samples)
    assert all(r.azimuth == 30.0 or r.azimuth == 60.0 for r in manifest.samples)
    doc = json.loads((out / "manifest.json").read_text())
    assert set(doc["samples"][0]) >= {"id", "split", "snr_db", "azimuth", "elevation", "seed",
                                      "paths"}


def test_every_sample_is_exact(dataset):
    manifest, out = dataset
    for split in ("train", "test", "validation"):
        for t in load_split(load_manifest(out), split):
            assert t.noisy.dtype == np.float32 and t.noisy.shape == (2, 32000)
            assert np.array_equal(t.noisy, t.clean + t.noise)
            snr = measure_snr(BinauralWaveform.from_array(t.clean),
                              BinauralWaveform.from_array(t.noise))
            assert abs(snr - t.record.snr_db) < 0.01


def test_reproducible(tmp_path, small_catalog, dataset):
    manifest, _ = dataset
    again = generate_dataset(tmp_path, DatasetSpec(count=20, seed=7), small_catalog)
    assert [r.snr_db for r in again.samples] == [r.snr_db for r in manifest.samples]
    a = load_split(again, "test")[0]
    b = load_split(manifest, "test")[0]
    assert np.array_equal(a.noisy, b.noisy)


def test_manifest_errors(tmp_path, small_catalog):
    with pytest.raises(DatasetError):
        load_manifest(tmp_path)
    (tmp_path / "manifest.json").write_text("{}")
    with pytest.raises(DatasetError):
        load_manifest(tmp_path)
    with pytest.raises(DatasetError):
        generate_dataset(tmp_path, DatasetSpec(count=0), small_catalog)
    with pytest.raises(DatasetError):
        generate_dataset(tmp_path, DatasetSpec(count=2, snr_range=(5, -5)), small_catalog)


def test_assign_splits_ratio():
    labels = assign_splits(100)
    assert labels.count("train") == 80 and labels.count("test") == 10


def test_sources(rng, tmp_path):
    s = synth_speech(2.0, rng)
    assert s.shape == (32000,) and np.max(np.abs(s)) == pytest.approx(0.5)
    for kind in NOISE_KINDS:
        n = synth_noise(1.0, rng, kind)
        assert n.shape == (16000,) and np.all(np.isfinite(n)) and np.std(n) > 0
    write_wav(tmp_path / "a.wav", (rng.standard_normal(40000) * 0.1).astype(np.float32), 16000)
    drawn = SourcePool(tmp_path, "speech").draw(2.0, rng)
    assert drawn.shape == (32000,)
    with pytest.raises(DatasetError):
        SourcePool(tmp_path / "empty", "speech").draw(2.0, rng)


def test_make_triple(small_catalog):
    t = make_triple(1.0, 0.0, seed=1, catalog=small_catalog)
    assert np.array_equal(t.noisy, t.clean + t.noise)
    # diffuse noise from a symmetric catalog is identical at both ears
    np.testing.assert_allclose(t.noise[0], t.noise[1], atol=1e-6 * np.max(np.abs(t.noise)))
