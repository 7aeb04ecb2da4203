"""Short-time objective intelligibility (the standard, non-differentiable form)."""
from __future__ import annotations

import numpy as np
from scipy.signal import resample_poly

from ._errors import LengthError, ShapeError

FS = 10000
N_FRAME = 256
NFFT = 512
NUM_BANDS = 15
MIN_FREQ = 150
SEG = 30
BETA = -15.0
DYN_RANGE = 40.0
_EPS = np.finfo(np.float64).eps


def third_octave_bands(fs=FS, nfft=NFFT, num_bands=NUM_BANDS, min_freq=MIN_FREQ):
    """Band matrix over ``nfft // 2 + 1`` bins with edges snapped to bins."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(num_bands)
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6)
    obm = np.zeros((num_bands, len(f)))
    for i in range(num_bands):
        lo_bin = np.argmin((f - lo[i]) ** 2)
        hi_bin = np.argmin((f - hi[i]) ** 2)
        obm[i, lo_bin:hi_bin] = 1
    return obm


def _hann(n):
    return np.hanning(n + 2)[1:-1]


def _frames(x, n, hop):
    count = 1 + (len(x) - n) // hop
    idx = np.arange(n)[None, :] + hop * np.arange(count)[:, None]
    return x[idx]


def remove_silent_frames(x, y, dyn_range=DYN_RANGE, n=N_FRAME, hop=N_FRAME // 2):
    """Drop frames more than ``dyn_range`` dB below the loudest frame of ``x``."""
    w = _hann(n)
    fx = _frames(x, n, hop) * w
    fy = _frames(y, n, hop) * w
    energy = 20 * np.log10(np.linalg.norm(fx, axis=1) + _EPS)
    keep = energy > energy.max() - dyn_range
    fx, fy = fx[keep], fy[keep]
    if len(fx) == 0:
        return np.zeros(0), np.zeros(0)
    out_len = (len(fx) - 1) * hop + n
    xs = np.zeros(out_len)
    ys = np.zeros(out_len)
    for i in range(len(fx)):
        xs[i * hop:i * hop + n] += fx[i]
        ys[i * hop:i * hop + n] += fy[i]
    return xs, ys


def _spectrum(x):
    frames = _frames(x, N_FRAME, N_FRAME // 2) * _hann(N_FRAME)
    return np.fft.rfft(frames, n=NFFT, axis=1).T  # (bins, frames)


def stoi(clean, processed, fs_sig: int = 16000) -> float:
    """Intelligibility of ``processed`` relative to ``clean`` in [0, 1]."""
    x = np.asarray(clean, dtype=np.float64)
    y = np.asarray(processed, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError("clean and processed must be 1-D signals of equal length")
    if len(x) < fs_sig:
        raise LengthError(f"STOI needs at least 1 s of audio, got {len(x) / fs_sig:.3f} s")
    if fs_sig != FS:
        g = np.gcd(int(fs_sig), FS)
        x = resample_poly(x, FS // g, int(fs_sig) // g)
        y = resample_poly(y, FS // g, int(fs_sig) // g)
    x, y = remove_silent_frames(x, y)
    if len(x) < N_FRAME:
        raise LengthError("too little non-silent audio for STOI")
    obm = third_octave_bands()
    x_env = np.sqrt(obm @ np.abs(_spectrum(x)) ** 2)
    y_env = np.sqrt(obm @ np.abs(_spectrum(y)) ** 2)
    n_frames = x_env.shape[1]
    if n_frames < SEG:
        raise LengthError(f"{n_frames} non-silent frames; STOI needs at least {SEG}")
    clip = 10 ** (-BETA / 20)
    scores = []
    for m in range(SEG, n_frames + 1):
        xs = x_env[:, m - SEG:m]
        ys = y_env[:, m - SEG:m]
        alpha = np.linalg.norm(xs, axis=1, keepdims=True) / (
            np.linalg.norm(ys, axis=1, keepdims=True) + _EPS)
        ys = np.minimum(ys * alpha, xs * (1 + clip))
        xs = xs - xs.mean(axis=1, keepdims=True)
        ys = ys - ys.mean(axis=1, keepdims=True)
        xs = xs / (np.linalg.norm(xs, axis=1, keepdims=True) + _EPS)
        ys = ys / (np.linalg.norm(ys, axis=1, keepdims=True) + _EPS)
        scores.append(np.sum(xs * ys, axis=1))
    return float(np.clip(np.mean(scores), 0.0, 1.0))
