"""Short-time Fourier analysis/synthesis and low/high band handling.

Framing convention: ``fft_size - hop`` zeros are prepended to the signal and
enough zeros are appended that every kept sample is covered by
``fft_size / hop`` frames.  :func:`istft` trims the same amounts, so
``istft(stft(x), length=len(x))`` reproduces ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._errors import ConfigError, InputError, LengthError, ShapeError

SAMPLE_RATE = 16000


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 256
    hop: int = 128
    window: str = "hann"
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ConfigError(f"fft_size must be a power of two >= 2, got {n}")
        if self.hop < 1 or n % self.hop:
            raise ConfigError(f"hop ({self.hop}) must divide fft_size ({n})")
        if self.window not in ("hann", "rect"):
            raise ConfigError(f"unknown window kind {self.window!r}")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def lead_pad(self) -> int:
        return self.fft_size - self.hop

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def analysis_window(self) -> np.ndarray:
        n = np.arange(self.fft_size)
        if self.window == "rect":
            return np.ones(self.fft_size)
        # periodic Hann
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.fft_size)

    def synthesis_window(self) -> np.ndarray:
        w = self.analysis_window()
        cola = np.zeros(self.hop)
        for j in range(self.fft_size // self.hop):
            cola += w[j * self.hop:(j + 1) * self.hop] ** 2
        return w / np.tile(cola, self.fft_size // self.hop)

    def padding(self, length: int) -> tuple[int, int]:
        """Return (prepended, appended) zero counts for a signal of ``length``."""
        tail = self.fft_size - self.hop + (-length) % self.hop
        return self.lead_pad, tail

    def n_frames(self, length: int) -> int:
        if length < self.fft_size:
            raise LengthError(
                f"signal of {length} samples is shorter than one frame ({self.fft_size})"
            )
        head, tail = self.padding(length)
        return 1 + (head + length + tail - self.fft_size) // self.hop

    def to_dict(self) -> dict:
        return {"fft_size": self.fft_size, "hop": self.hop, "window": self.window,
                "sample_rate": self.sample_rate}


@dataclass(frozen=True)
class BandSplitConfig:
    q: int = 40
    f_total: int = 129

    def __post_init__(self):
        if not 1 <= self.q <= self.f_total:
            raise ConfigError(f"q must lie in [1, {self.f_total}], got {self.q}")


@dataclass(frozen=True)
class BinauralWaveform:
    left: np.ndarray
    right: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        if left.ndim != 1 or right.ndim != 1:
            raise ShapeError("left and right must be 1-D sample sequences")
        if left.shape != right.shape:
            raise ShapeError(f"left/right lengths differ: {left.shape[0]} vs {right.shape[0]}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def from_array(cls, data, sample_rate: int = SAMPLE_RATE) -> "BinauralWaveform":
        data = np.asarray(data)
        if data.ndim != 2 or data.shape[0] != 2:
            raise ShapeError(f"expected a (2, n) array, got {data.shape}")
        return cls(data[0], data[1], sample_rate)

    def as_array(self) -> np.ndarray:
        return np.stack([self.left, self.right])

    def __len__(self):
        return self.left.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class ComplexSpectrogram:
    data: np.ndarray
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"spectrogram must be (channels, F, T), got {data.shape}")
        if data.shape[1] != self.config.n_bins:
            raise ShapeError(
                f"{data.shape[1]} bins do not match fft_size {self.config.fft_size}"
            )
        if not np.all(np.isfinite(data)):
            raise InputError("spectrogram contains non-finite entries")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[2]


def frame_signal(padded: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """View ``(..., L)`` as ``(..., T, fft_size)`` overlapping frames."""
    n_frames = 1 + (padded.shape[-1] - fft_size) // hop
    idx = np.arange(fft_size)[None, :] + hop * np.arange(n_frames)[:, None]
    return padded[..., idx]


def overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    """Inverse of :func:`frame_signal` with summation over overlaps."""
    *lead, n_frames, size = frames.shape
    out = np.zeros((*lead, (n_frames - 1) * hop + size), dtype=frames.dtype)
    for j in range(size // hop):
        # frames sliced into hop-wide chunks; chunk j of frame t lands at (t + j) * hop
        chunk = frames[..., :, j * hop:(j + 1) * hop]
        view = out[..., j * hop: j * hop + n_frames * hop]
        view += chunk.reshape(*lead, n_frames * hop)
    return out


def stft(wave, config: StftConfig = StftConfig()) -> np.ndarray:
    """Windowed STFT of ``(..., L)`` real samples, returned as ``(..., F, T)``."""
    x = np.asarray(wave, dtype=np.float64)
    length = x.shape[-1]
    config.n_frames(length)
    head, tail = config.padding(length)
    pad = [(0, 0)] * (x.ndim - 1) + [(head, tail)]
    frames = frame_signal(np.pad(x, pad), config.fft_size, config.hop)
    spec = np.fft.rfft(frames * config.analysis_window(), axis=-1)
    return np.swapaxes(spec, -1, -2)


def istft(spec, config: StftConfig = StftConfig(), length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`.

    ``length`` defaults to the largest signal length consistent with the
    frame count, i.e. ``(T - 1) * hop``.
    """
    spec = np.asarray(spec)
    if spec.ndim < 2 or spec.shape[-2] != config.n_bins:
        raise ShapeError(
            f"expected {config.n_bins} frequency bins, got shape {spec.shape}"
        )
    n_frames = spec.shape[-1]
    if length is None:
        length = (n_frames - 1) * config.hop
    if length >= config.fft_size and config.n_frames(length) != n_frames:
        raise ShapeError(f"{n_frames} frames cannot produce {length} samples")
    frames = np.fft.irfft(np.swapaxes(spec, -1, -2), n=config.fft_size, axis=-1)
    signal = overlap_add(frames * config.synthesis_window(), config.hop)
    head = config.lead_pad
    return signal[..., head:head + length]


def band_split(spec, bands: BandSplitConfig) -> tuple[np.ndarray, np.ndarray]:
    data = spec.data if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)
    if data.shape[-2] != bands.f_total:
        raise ConfigError(
            f"band config expects {bands.f_total} bins, spectrogram has {data.shape[-2]}"
        )
    return data[..., :bands.q, :].copy(), data[..., bands.q:, :].copy()


def band_merge(low, high, config: StftConfig | None = None):
    """Concatenate low and high bins along frequency.

    Returns a :class:`ComplexSpectrogram` when ``config`` is given (and the
    parts are 3-D), else a plain array.
    """
    low = np.asarray(low)
    high = np.asarray(high)
    if low.shape[:-2] != high.shape[:-2]:
        raise ShapeError(f"channel layout differs: {low.shape} vs {high.shape}")
    if low.shape[-1] != high.shape[-1]:
        raise ShapeError(f"frame counts differ: {low.shape[-1]} vs {high.shape[-1]}")
    merged = np.concatenate([low, high], axis=-2)
    if config is not None:
        return ComplexSpectrogram(merged, config)
    return merged


# ---------------------------------------------------------------- differentiable wrappers

def stft_diff(wave, config: StftConfig = StftConfig()):
    """:func:`stft` as a tape operation on a real DiffTensor ``(..., L)``."""
    from . import autodiff as ad

    wave = ad.as_tensor(wave)
    length = wave.shape[-1]
    head, _ = config.padding(length)
    window = config.analysis_window()
    n = config.fft_size
    half = np.full(config.n_bins, 0.5)
    half[0] = half[-1] = 1.0

    def adjoint(g):
        # dL/dframe_n = Re sum_k g_k e^{+i 2 pi k n / N}
        g_frames = n * np.fft.irfft(np.swapaxes(g, -1, -2) * half, n=n, axis=-1)
        padded = overlap_add(g_frames * window, config.hop)
        return padded[..., head:head + length]

    return ad.linear_op(wave, lambda v: stft(v, config), adjoint)


def istft_diff(spec, config: StftConfig = StftConfig(), length: int | None = None):
    """:func:`istft` as a tape operation on a complex DiffTensor ``(..., F, T)``."""
    from . import autodiff as ad

    spec = ad.as_tensor(spec)
    n_frames = spec.shape[-1]
    if length is None:
        length = (n_frames - 1) * config.hop
    head = config.lead_pad
    n = config.fft_size
    synth = config.synthesis_window()
    scale = np.full(config.n_bins, 2.0 / n)
    scale[0] = scale[-1] = 1.0 / n
    total = (n_frames - 1) * config.hop + n

    def adjoint(g):
        padded = np.zeros(g.shape[:-1] + (total,), dtype=np.float64)
        padded[..., head:head + length] = g
        frames = frame_signal(padded, n, config.hop) * synth
        grad = np.fft.rfft(frames, axis=-1) * scale
        return np.swapaxes(grad, -1, -2)

    return ad.linear_op(spec, lambda v: istft(v, config, length), adjoint)
