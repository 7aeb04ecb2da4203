"""Desk-scale binaural dataset generation and manifest handling.

Each sample is a directional speech-like target plus diffuse noise, mixed at
a random SNR and written as three float32 stereo WAV files (noisy, clean,
noise) with ``noisy == clean + noise`` holding bit-exactly.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from ._errors import DatasetError
from .dsp import SAMPLE_RATE, BinauralWaveform
from .spatial import (HrirCatalog, diffuse_noise, measure_snr, mix_at_snr, spatialize,
                      synth_spherical_hrir)
from .wavio import read_binaural, read_wav, write_binaural

MANIFEST_VERSION = 1
SPLITS = ("train", "test", "validation")


# ---------------------------------------------------------------- sources

_VOWELS = [(730, 1090, 2440), (270, 2290, 3010), (530, 1840, 2480), (660, 1720, 2410),
           (570, 840, 2410), (440, 1020, 2240), (300, 870, 2240), (640, 1190, 2390)]


def _formant_filter(x, freqs, fs, bw=90.0):
    y = np.zeros_like(x)
    for i, f in enumerate(freqs):
        r = math.exp(-math.pi * bw * (1 + i) / fs)
        theta = 2 * math.pi * f / fs
        a = [1.0, -2 * r * math.cos(theta), r * r]
        y += lfilter([1.0 - r], a, x) / (1 + i)
    return y


def synth_speech(seconds: float, rng: np.random.Generator, fs: int = SAMPLE_RATE) -> np.ndarray:
    """Speech-like source: voiced syllables with gliding pitch and formants, plus pauses.

    Syllables last 120-350 ms with raised-cosine envelopes; some are
    replaced by fricative-like high-passed noise.  Output peak is 0.5.
    """
    n = int(round(seconds * fs))
    out = np.zeros(n)
    pos = int(rng.uniform(0, 0.1) * fs)
    f0_base = rng.uniform(95, 230)
    while pos < n:
        dur = int(rng.uniform(0.12, 0.35) * fs)
        seg = min(dur, n - pos)
        t = np.arange(seg) / fs
        if rng.random() < 0.2:
            sos = butter(4, rng.uniform(2500, 4500), "high", fs=fs, output="sos")
            src = sosfilt(sos, rng.standard_normal(seg)) * 0.3
        else:
            f0 = f0_base * (1 + rng.uniform(-0.15, 0.15)) * (1 + rng.uniform(-0.1, 0.1) * t / max(t[-1], 1e-3))
            phase = 2 * np.pi * np.cumsum(f0) / fs
            n_harm = int(min(40, (fs / 2 - 200) // f0_base))
            src = np.zeros(seg)
            for h in range(1, n_harm + 1):
                src += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
            src = _formant_filter(src, _VOWELS[rng.integers(len(_VOWELS))], fs)
        env = np.sin(np.pi * np.arange(seg) / max(seg, 1)) ** 2
        out[pos:pos + seg] += src * env * rng.uniform(0.4, 1.0)
        pos += seg + int(rng.uniform(0.02, 0.25) * fs)
    peak = np.max(np.abs(out))
    return out * (0.5 / peak) if peak > 0 else out


NOISE_KINDS = ("white", "pink", "brown", "babble", "modulated")


def synth_noise(seconds: float, rng: np.random.Generator, kind: str | None = None,
                fs: int = SAMPLE_RATE) -> np.ndarray:
    """Stationary-ish noise: white, pink, brown, speech babble or AM-modulated pink."""
    n = int(round(seconds * fs))
    kind = kind or NOISE_KINDS[rng.integers(len(NOISE_KINDS))]
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind in ("pink", "brown", "modulated"):
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.arange(len(spec))
        f[0] = 1
        spec /= np.sqrt(f) if kind != "brown" else f
        x = np.fft.irfft(spec, n)
        if kind == "modulated":
            rate = rng.uniform(1, 6)
            x *= 1 + 0.8 * np.sin(2 * np.pi * rate * np.arange(n) / fs + rng.uniform(0, 6.3))
    elif kind == "babble":
        x = sum(synth_speech(seconds, rng, fs) for _ in range(6))
    else:
        raise DatasetError(f"unknown noise kind {kind!r}")
    peak = np.max(np.abs(x))
    return x * (0.5 / peak) if peak > 0 else x


class SourcePool:
    """Mono source material from a directory of WAV files, or synthesized on demand."""

    def __init__(self, directory=None, kind: str = "speech", min_seconds: float = 2.0):
        self.kind = kind
        self.files = []
        if directory is not None:
            d = Path(directory)
            if not d.is_dir():
                raise DatasetError(f"{kind} corpus directory not found: {d}")
            self.files = sorted(d.rglob("*.wav"))
            if not self.files:
                raise DatasetError(f"no .wav files in {kind} corpus {d}")
        self.min_seconds = min_seconds

    def draw(self, seconds: float, rng: np.random.Generator) -> np.ndarray:
        if not self.files:
            return synth_speech(seconds, rng) if self.kind == "speech" else synth_noise(seconds, rng)
        n = int(round(seconds * SAMPLE_RATE))
        order = rng.permutation(len(self.files))
        for i in order:
            wav = read_wav(self.files[i])
            x = wav.samples if wav.channels == 1 else wav.samples.mean(axis=1)
            if wav.sample_rate != SAMPLE_RATE:
                from scipy.signal import resample_poly
                g = math.gcd(wav.sample_rate, SAMPLE_RATE)
                x = resample_poly(x, SAMPLE_RATE // g, wav.sample_rate // g)
            if len(x) >= n and np.any(x):
                start = rng.integers(0, len(x) - n + 1)
                return np.asarray(x[start:start + n], dtype=np.float64)
        raise DatasetError(f"no {self.kind} file holds {seconds} s of non-silent audio")


# ---------------------------------------------------------------- generation

@dataclass
class DatasetSpec:
    count: int = 200
    seconds: float = 2.0
    snr_range: tuple = (-10.0, 10.0)
    azimuth: float = 45.0
    elevation: float = 0.0
    seed: int = 0
    split_ratio: tuple = (8, 1, 1)
    speech_dir: str | None = None
    noise_dir: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_range"] = list(self.snr_range)
        d["split_ratio"] = list(self.split_ratio)
        return d


@dataclass
class SampleRecord:
    id: str
    split: str
    snr_db: float
    azimuth: float
    elevation: float
    seed: int
    paths: dict = field(default_factory=dict)
    measured_snr_db: float | None = None


@dataclass
class Manifest:
    spec: DatasetSpec
    samples: list
    catalog_tag: str = ""
    root: Path | None = None
    version: int = MANIFEST_VERSION

    def split(self, name: str) -> list:
        return [s for s in self.samples if s.split == name]

    def to_json(self) -> str:
        doc = {"version": self.version, "catalog": self.catalog_tag,
               "params": self.spec.to_dict(),
               "samples": [asdict(s) for s in self.samples]}
        return json.dumps(doc, indent=1, sort_keys=True)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() or self.root is None else self.root / p


def assign_splits(count: int, ratio=(8, 1, 1), rng: np.random.Generator | None = None) -> list:
    """Split labels in ``SPLITS`` order with sizes proportional to ``ratio``."""
    total = sum(ratio)
    n_train = int(round(count * ratio[0] / total))
    n_test = int(round(count * ratio[1] / total))
    labels = (["train"] * n_train + ["test"] * n_test
              + ["validation"] * (count - n_train - n_test))
    if rng is not None:
        labels = [labels[i] for i in rng.permutation(count)]
    return labels


def _sample_seeds(seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(c.generate_state(1)[0]) for c in ss.spawn(count)]


def _make_sample(args):
    (idx, sample_seed, split, spec_d, catalog, out_dir) = args
    spec = DatasetSpec(**spec_d)
    rng = np.random.default_rng(sample_seed)
    speech = SourcePool(spec.speech_dir, "speech").draw(spec.seconds, rng)
    noise = SourcePool(spec.noise_dir, "noise").draw(spec.seconds, rng)
    snr = float(rng.uniform(*spec.snr_range))
    target = spatialize(speech, catalog.nearest(spec.azimuth, spec.elevation))
    diffuse = diffuse_noise(noise, catalog)
    mix = mix_at_snr(target, diffuse, snr)
    sid = f"s{idx:06d}"
    paths = {}
    for key, wave in (("noisy", mix.noisy), ("clean", mix.target), ("noise", mix.noise)):
        rel = f"{split}/{sid}_{key}.wav"
        write_binaural(Path(out_dir) / rel, wave)
        paths[key] = rel
    entry = catalog.nearest(spec.azimuth, spec.elevation)
    return SampleRecord(sid, split, snr, entry.azimuth, entry.elevation, sample_seed, paths,
                        round(measure_snr(mix.target, mix.noise), 6))


def generate_dataset(out_dir, spec: DatasetSpec = DatasetSpec(),
                     catalog: HrirCatalog | None = None, workers: int = 1) -> Manifest:
    """Synthesize ``spec.count`` samples under ``out_dir`` and write ``manifest.json``."""
    if spec.count < 1:
        raise DatasetError("count must be positive")
    lo, hi = spec.snr_range
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise DatasetError(f"invalid SNR range {spec.snr_range}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DatasetError(f"cannot create output directory {out_dir}: {exc}") from exc
    if catalog is None:
        from .spatial import default_directions
        catalog = synth_spherical_hrir(default_directions())
    seeds = _sample_seeds(spec.seed, spec.count)
    splits = assign_splits(spec.count, spec.split_ratio, np.random.default_rng(spec.seed))
    jobs = [(i, seeds[i], splits[i], spec.to_dict(), catalog, str(out_dir))
            for i in range(spec.count)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_make_sample, jobs, chunksize=4))
    else:
        records = [_make_sample(j) for j in jobs]
    manifest = Manifest(spec, records, catalog.source_tag, out_dir)
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def load_manifest(path) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DatasetError(f"manifest not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"cannot parse manifest {path}: {exc}") from exc
    if doc.get("version") != MANIFEST_VERSION:
        raise DatasetError(f"unsupported manifest version {doc.get('version')!r}")
    params = doc["params"]
    params["snr_range"] = tuple(params["snr_range"])
    params["split_ratio"] = tuple(params["split_ratio"])
    samples = [SampleRecord(**s) for s in doc["samples"]]
    return Manifest(DatasetSpec(**params), samples, doc.get("catalog", ""), path.parent)


@dataclass
class Triple:
    noisy: np.ndarray    # (2, L) float32
    clean: np.ndarray
    noise: np.ndarray
    record: SampleRecord | None = None


def load_triple(manifest: Manifest, record: SampleRecord) -> Triple:
    arrs = {k: read_binaural(manifest.resolve(record.paths[k])).as_array()
            for k in ("noisy", "clean", "noise")}
    return Triple(arrs["noisy"], arrs["clean"], arrs["noise"], record)


def load_split(manifest: Manifest, split: str) -> list[Triple]:
    return [load_triple(manifest, r) for r in manifest.split(split)]


def make_triple(seconds: float = 2.0, snr_db: float = 0.0, seed: int = 0,
                azimuth: float = 45.0, catalog: HrirCatalog | None = None) -> Triple:
    """One in-memory sample, generated exactly as :func:`generate_dataset` would."""
    if catalog is None:
        from .spatial import default_directions
        catalog = synth_spherical_hrir(default_directions())
    rng = np.random.default_rng(seed)
    speech = synth_speech(seconds, rng)
    noise = synth_noise(seconds, rng)
    target = spatialize(speech, catalog.nearest(azimuth, 0.0))
    mix = mix_at_snr(target, diffuse_noise(noise, catalog), snr_db)
    return Triple(mix.noisy.as_array(), mix.target.as_array(), mix.noise.as_array())


def default_data_dir() -> Path:
    return Path(os.environ.get("LBCCN_DATA_DIR", "data"))
