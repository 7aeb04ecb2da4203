"""Binaural scene synthesis: HRIR catalogs, spatialisation, diffuse noise, SNR mixing."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import bilinear, lfilter, oaconvolve, resample_poly

from ._errors import (HrirManifestError, InconsistentHrirError, InputError,
                      MissingHrirFileError, ShapeError, ZeroReferenceError)
from .dsp import SAMPLE_RATE, BinauralWaveform

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class HrirEntry:
    azimuth: float
    elevation: float
    left: np.ndarray
    right: np.ndarray


@dataclass
class HrirCatalog:
    entries: list
    sample_rate: int = SAMPLE_RATE
    source_tag: str = ""

    def __post_init__(self):
        if not self.entries:
            raise InconsistentHrirError("an HRIR catalog needs at least one entry")
        n = len(self.entries[0].left)
        for e in self.entries:
            if len(e.left) != n or len(e.right) != n:
                raise InconsistentHrirError(
                    f"impulse responses differ in length at az={e.azimuth}, el={e.elevation}"
                )
            if not (np.all(np.isfinite(e.left)) and np.all(np.isfinite(e.right))):
                raise InconsistentHrirError(f"non-finite HRIR at az={e.azimuth}")

    def __len__(self):
        return len(self.entries)

    @property
    def ir_length(self) -> int:
        return len(self.entries[0].left)

    def grid_shape(self) -> tuple[int, int]:
        """(distinct azimuths, distinct elevations)."""
        az = {round(e.azimuth, 6) for e in self.entries}
        el = {round(e.elevation, 6) for e in self.entries}
        return len(az), len(el)

    def nearest(self, azimuth: float, elevation: float = 0.0) -> HrirEntry:
        def dist(e):
            return (e.azimuth - azimuth) ** 2 + (e.elevation - elevation) ** 2
        return min(self.entries, key=dist)

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.stack([e.left for e in self.entries]),
                np.stack([e.right for e in self.entries]))


# ---------------------------------------------------------------- catalogs

def load_hrir_catalog(path) -> HrirCatalog:
    """Read a JSON manifest listing ``{azimuth, elevation, file}`` stereo IR files.

    The manifest is either a list of entries or an object with an
    ``entries`` list (and optional ``source_tag``).  Files are resolved
    relative to the manifest and resampled to 16 kHz.
    """
    from .wavio import read_wav

    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise MissingHrirFileError(f"HRIR manifest not found: {path}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise HrirManifestError(f"cannot parse HRIR manifest {path}: {exc}") from exc
    items = doc.get("entries") if isinstance(doc, dict) else doc
    if not isinstance(items, list) or not items:
        raise HrirManifestError(f"{path}: manifest must list at least one entry")
    entries = []
    for i, item in enumerate(items):
        try:
            az, el, name = float(item["azimuth"]), float(item["elevation"]), item["file"]
        except (KeyError, TypeError, ValueError) as exc:
            raise HrirManifestError(f"{path}: entry {i} lacks azimuth/elevation/file") from exc
        file = (path.parent / name).resolve()
        if not file.exists():
            raise MissingHrirFileError(f"HRIR file missing: {file}")
        wav = read_wav(file)
        if wav.channels != 2:
            raise InconsistentHrirError(f"{file}: HRIR files must be stereo")
        data = wav.samples.astype(np.float64)
        if wav.sample_rate != SAMPLE_RATE:
            g = math.gcd(wav.sample_rate, SAMPLE_RATE)
            data = resample_poly(data, SAMPLE_RATE // g, wav.sample_rate // g, axis=0)
        entries.append(HrirEntry(az, el, data[:, 0].copy(), data[:, 1].copy()))
    tag = doc.get("source_tag", str(path)) if isinstance(doc, dict) else str(path)
    return HrirCatalog(entries, SAMPLE_RATE, tag)


def _fractional_delay(delay: float, length: int, half_width: int = 16) -> np.ndarray:
    """Hann-windowed sinc impulse centred at ``delay`` samples."""
    n = np.arange(length)
    x = n - delay
    h = np.sinc(x)
    win = np.where(np.abs(x) <= half_width, 0.5 + 0.5 * np.cos(np.pi * x / half_width), 0.0)
    return h * win


def _head_shadow(ir: np.ndarray, theta: float, radius: float, fs: int) -> np.ndarray:
    """First-order head-shadow shelf for an ear at angle ``theta`` from the source.

    alpha(theta) = 1 + cos(theta) spans 2 (facing) to 0 (fully shadowed);
    H(s) = (alpha s / (2 w0) + 1) / (s / (2 w0) + 1) with w0 = c / r.
    """
    w0 = SPEED_OF_SOUND / radius
    alpha = max(1.0 + math.cos(theta), 0.1)
    b, a = bilinear([alpha / (2 * w0), 1.0], [1.0 / (2 * w0), 1.0], fs)
    return lfilter(b, a, ir)


def woodworth_itd(lateral: float, radius: float) -> float:
    """Interaural time difference (s) of a rigid sphere for a lateral angle (rad)."""
    lateral = abs(lateral)
    return radius / SPEED_OF_SOUND * (lateral + math.sin(lateral))


def synth_spherical_hrir(directions, head_radius: float = 0.0875, ir_length: int = 128,
                         sample_rate: int = SAMPLE_RATE, head_shadow: bool = True,
                         ) -> HrirCatalog:
    """Spherical-head approximation for ``(azimuth, elevation)`` pairs in degrees.

    Positive azimuth is to the right.  The near ear gets a plain fractional
    delay; the far ear is delayed by the Woodworth ITD and passed through a
    first-order shadowing shelf.  Mirrored azimuths give swapped ears.
    """
    if not head_radius > 0:
        raise InputError("head_radius must be positive")
    base = ir_length / 4
    entries = []
    for az, el in directions:
        lateral = math.asin(max(-1.0, min(1.0, math.sin(math.radians(az))
                                          * math.cos(math.radians(el)))))
        itd = woodworth_itd(lateral, head_radius) * sample_rate
        near = _fractional_delay(base, ir_length)
        far = _fractional_delay(base + itd, ir_length)
        if head_shadow:
            theta_near = math.pi / 2 - abs(lateral)
            theta_far = math.pi / 2 + abs(lateral)
            near = _head_shadow(near, theta_near, head_radius, sample_rate)
            far = _head_shadow(far, theta_far, head_radius, sample_rate)
        if lateral >= 0:
            left, right = far, near
        else:
            left, right = near, far
        if lateral == 0:
            right = left.copy()
        entries.append(HrirEntry(float(az), float(el), left, right))
    return HrirCatalog(entries, sample_rate, f"spherical-head r={head_radius}")


def default_directions() -> list[tuple[float, float]]:
    """25 azimuths x 50 elevations on the interaural-polar grid of CIPIC."""
    az = [-80, -65, -55, -45, -40, -35, -30, -25, -20, -15, -10, -5, 0,
          5, 10, 15, 20, 25, 30, 35, 40, 45, 55, 65, 80]
    el = [-45 + 5.625 * i for i in range(50)]
    return [(a, e) for a in az for e in el]


# ---------------------------------------------------------------- synthesis

def _conv(source: np.ndarray, ir: np.ndarray) -> np.ndarray:
    return oaconvolve(source, ir)[: len(source)]


def spatialize(source, hrir: HrirEntry, source_rate: int = SAMPLE_RATE,
               hrir_rate: int = SAMPLE_RATE) -> BinauralWaveform:
    """Convolve a mono source with a left/right IR pair, keeping ``len(source)``."""
    if source_rate != hrir_rate:
        raise InputError(f"source at {source_rate} Hz but HRIR at {hrir_rate} Hz")
    s = np.asarray(source, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ShapeError("source must be a non-empty mono signal")
    return BinauralWaveform(_conv(s, hrir.left), _conv(s, hrir.right), source_rate)


def diffuse_noise(noise, catalog: HrirCatalog, fast: bool = True) -> BinauralWaveform:
    """Average of the noise convolved with every catalog direction.

    ``fast`` convolves once with the direction-averaged IR pair (equal by
    linearity); the slow path averages the individual convolutions.
    """
    n = np.asarray(noise, dtype=np.float64)
    lefts, rights = catalog.stacked()
    if fast:
        return BinauralWaveform(_conv(n, lefts.mean(axis=0)), _conv(n, rights.mean(axis=0)),
                                catalog.sample_rate)
    acc_l = np.zeros(len(n))
    acc_r = np.zeros(len(n))
    for e in catalog.entries:
        acc_l += _conv(n, e.left)
        acc_r += _conv(n, e.right)
    d = len(catalog)
    return BinauralWaveform(acc_l / d, acc_r / d, catalog.sample_rate)


@dataclass
class Mixture:
    noisy: BinauralWaveform
    target: BinauralWaveform
    noise: BinauralWaveform
    gain: float
    snr_db: float = field(default=0.0)


def mean_power(wave: BinauralWaveform) -> float:
    a = wave.as_array().astype(np.float64)
    return float(np.mean(a * a))


def measure_snr(target: BinauralWaveform, noise: BinauralWaveform) -> float:
    return 10.0 * math.log10(mean_power(target) / mean_power(noise))


def mix_at_snr(target: BinauralWaveform, noise: BinauralWaveform, snr_db: float,
               dtype=np.float32) -> Mixture:
    """Scale ``noise`` so the two-ear mean-power SNR equals ``snr_db``.

    Components are rounded to ``dtype`` first and the mixture is their sum in
    that dtype, so ``noisy == target + noise`` holds exactly.
    """
    if len(target) != len(noise):
        raise ShapeError(f"target and noise lengths differ: {len(target)} vs {len(noise)}")
    if not math.isfinite(snr_db):
        raise InputError("snr_db must be finite")
    p_t, p_n = mean_power(target), mean_power(noise)
    if p_t <= 0 or p_n <= 0:
        raise ZeroReferenceError("target and noise need non-zero energy")
    gain = math.sqrt(p_t / (p_n * 10 ** (snr_db / 10)))
    x = target.as_array().astype(dtype)
    n = (noise.as_array() * gain).astype(dtype)
    y = x + n
    sr = target.sample_rate
    return Mixture(BinauralWaveform.from_array(y, sr), BinauralWaveform.from_array(x, sr),
                   BinauralWaveform.from_array(n, sr), gain, snr_db)
