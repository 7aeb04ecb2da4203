"""Training objectives: waveform SNR, smooth STOI surrogate, ILD and IPD errors.

Every loss accepts plain arrays or DiffTensors and returns a real scalar
DiffTensor.  Binaural waveforms are ``(..., 2, L)``; binaural spectra are
``(..., 2, F, T)``.  Leading batch axes are averaged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from ._errors import ConfigError, LengthError, ShapeError, ZeroReferenceError
from .autodiff import DiffTensor
from .dsp import StftConfig, stft_diff

SNR_EPS = 1e-8
MAG_FLOOR = 1e-8


@dataclass(frozen=True)
class LossWeights:
    k: float = 0.5
    w_snr: float = 1.0
    w_stoi: float = 10.0
    w_ipd: float = 1.0
    w_ild: float = 10.0

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ConfigError(f"k must lie in [0, 1], got {self.k}")


@dataclass
class Signals:
    """A binaural signal seen both as waveform and as (band-limited) spectrum."""

    wave: object
    spec: object

    def __sub__(self, other: "Signals") -> "Signals":
        return Signals(ad.sub(self.wave, other.wave), ad.sub(self.spec, other.spec))


def _ears(x, axis):
    x = ad.as_tensor(x)
    if x.shape[axis] != 2:
        raise ShapeError(f"expected 2 ears on axis {axis}, got shape {x.shape}")
    lead = (slice(None),) * (x.ndim + axis)
    return x[lead + (0,)], x[lead + (1,)]


def _floored_mag(z):
    mag = ad.tabs(z)
    low = mag.value < MAG_FLOOR
    if low.any():
        mag = ad.where(low, MAG_FLOOR, mag)
    return mag


def loss_snr(x_hat, x) -> DiffTensor:
    """-(1/2) sum over ears of 10 log10(|x|^2 / (|x_hat - x|^2 + eps))."""
    x_hat, x = ad.as_tensor(x_hat), ad.as_tensor(x)
    if x_hat.shape != x.shape:
        raise ShapeError(f"length mismatch: {x_hat.shape} vs {x.shape}")
    ref = ad.tsum(ad.abs2(x), axis=-1)
    if np.any(ref.value <= 0):
        raise ZeroReferenceError("reference signal has zero energy")
    err = ad.tsum(ad.abs2(ad.sub(x_hat, x)), axis=-1)
    per_ear = 10.0 * ad.log10(ref / (err + SNR_EPS))
    return -0.5 * ad.mean(ad.tsum(per_ear, axis=-1))


def third_octave_matrix(config: StftConfig, n_bins: int | None = None,
                        n_bands: int = 15, min_freq: float = 150.0) -> np.ndarray:
    """0/1 band-membership matrix over the first ``n_bins`` STFT bins.

    Bands without any member bin are dropped.
    """
    n_bins = config.n_bins if n_bins is None else n_bins
    freqs = np.arange(n_bins) * config.sample_rate / config.fft_size
    centres = min_freq * 2.0 ** (np.arange(n_bands) / 3.0)
    lo, hi = centres * 2.0 ** (-1 / 6), centres * 2.0 ** (1 / 6)
    obm = ((freqs[None, :] >= lo[:, None]) & (freqs[None, :] < hi[:, None])).astype(np.float64)
    return obm[obm.sum(axis=1) > 0]


def stoi_surrogate(x, y, config: StftConfig = StftConfig(), n_bins: int | None = None,
                   seg_frames: int = 30, seg_hop: int | None = None,
                   delta: float = 1e-10) -> DiffTensor:
    """Smooth intelligibility score of ``y`` against reference ``x``.

    Third-octave envelopes of both signals are cut into ``seg_frames``-long
    segments; the score is the mean correlation of mean-removed envelope
    segments, with no clipping and no silent-frame removal.  ``delta``
    regularises numerator and denominator alike, so identical inputs score 1.
    Returns one score per leading index, shape ``x.shape[:-1]``.
    """
    x, y = ad.as_tensor(x), ad.as_tensor(y)
    obm = third_octave_matrix(config, n_bins)
    if obm.shape[0] == 0:
        raise ConfigError("no third-octave band falls inside the selected bins")
    nb = obm.shape[1]
    seg_hop = seg_hop or max(1, seg_frames // 2)

    def envelopes(w):
        spec = stft_diff(w, config)[..., :nb, :]
        return ad.sqrt(ad.matmul(obm, ad.abs2(spec)) + delta)

    ex, ey = envelopes(x), envelopes(y)
    n_frames = ex.shape[-1]
    if n_frames < seg_frames:
        raise LengthError(f"{n_frames} frames are fewer than one {seg_frames}-frame segment")
    starts = np.arange(0, n_frames - seg_frames + 1, seg_hop)
    idx = starts[:, None] + np.arange(seg_frames)[None, :]
    sx, sy = ex[..., idx], ey[..., idx]
    sx = sx - ad.mean(sx, axis=-1, keepdims=True)
    sy = sy - ad.mean(sy, axis=-1, keepdims=True)
    num = ad.tsum(sx * sy, axis=-1) + delta
    den = ad.sqrt((ad.tsum(ad.abs2(sx), axis=-1) + delta) * (ad.tsum(ad.abs2(sy), axis=-1) + delta))
    corr = num / den
    return ad.mean(ad.mean(corr, axis=-1), axis=-1)


def loss_stoi(x_hat, x, config: StftConfig = StftConfig(), n_bins: int | None = None,
              seg_frames: int = 30) -> DiffTensor:
    """-(1/2) sum over ears of the smooth STOI surrogate."""
    scores = stoi_surrogate(x, x_hat, config, n_bins, seg_frames)
    return -0.5 * ad.mean(ad.tsum(scores, axis=-1))


def _ratio_terms(spec):
    left, right = _ears(spec, -3)
    return _floored_mag(left), _floored_mag(right)


def loss_ild(X_hat, X) -> DiffTensor:
    """(20 / TF) sum |log10(|X_L|/|X_R|) - log10(|X^_L|/|X^_R|)| over bins."""
    X_hat, X = ad.as_tensor(X_hat), ad.as_tensor(X)
    if X_hat.shape != X.shape:
        raise ShapeError(f"shape mismatch: {X_hat.shape} vs {X.shape}")
    ref_l, ref_r = _ratio_terms(X)
    est_l, est_r = _ratio_terms(X_hat)
    diff = ad.log10(ref_l / ref_r) - ad.log10(est_l / est_r)
    return 20.0 * ad.mean(ad.tabs(diff))


def loss_ipd(X_hat, X, phase: bool = False) -> DiffTensor:
    """(1 / TF) sum |arctan(|X_L|/|X_R|) - arctan(|X^_L|/|X^_R|)| over bins.

    With ``phase=True`` the interaural phase difference ``angle(X_L conj X_R)``
    is compared instead, wrapped to (-pi, pi].
    """
    X_hat, X = ad.as_tensor(X_hat), ad.as_tensor(X)
    if X_hat.shape != X.shape:
        raise ShapeError(f"shape mismatch: {X_hat.shape} vs {X.shape}")
    if phase:
        diff = _interaural_angle(X) - _interaural_angle(X_hat)
        wrap = 2 * np.pi * np.round(diff.value / (2 * np.pi))
        diff = diff - wrap
    else:
        ref_l, ref_r = _ratio_terms(X)
        est_l, est_r = _ratio_terms(X_hat)
        diff = ad.arctan(ref_l / ref_r) - ad.arctan(est_l / est_r)
    return ad.mean(ad.tabs(diff))


def _interaural_angle(spec):
    left, right = _ears(spec, -3)
    cross = left * ad.conj(right)
    return angle(cross)


def angle(z) -> DiffTensor:
    """Argument of a complex tensor (zero gradient at the origin)."""
    z = ad.as_tensor(z)
    zv = z.value
    r2 = zv.real ** 2 + zv.imag ** 2
    safe = np.where(r2 > 0, r2, 1.0)

    def bw(g):
        return (np.where(r2 > 0, g * 1j * zv / safe, 0),)
    return ad._record(np.angle(zv), (z,), bw)


def loss_composite(est: Signals, ref: Signals, weights: LossWeights = LossWeights(),
                   config: StftConfig = StftConfig(), n_bins: int | None = None,
                   seg_frames: int = 30) -> DiffTensor:
    """Weighted SNR + STOI + IPD + ILD loss of ``est`` against ``ref``.

    ``ref.spec``/``est.spec`` hold the bins in scope (the selected low band
    during training); the waveforms are their band-limited resyntheses.
    """
    total = DiffTensor(0.0)
    if weights.w_snr:
        total = total + weights.w_snr * loss_snr(est.wave, ref.wave)
    if weights.w_stoi:
        total = total + weights.w_stoi * loss_stoi(est.wave, ref.wave, config, n_bins,
                                                   seg_frames)
    if weights.w_ipd:
        total = total + weights.w_ipd * loss_ipd(est.spec, ref.spec)
    if weights.w_ild:
        total = total + weights.w_ild * loss_ild(est.spec, ref.spec)
    return total


def _widen(a):
    # single-precision arrays are promoted so their difference is exact
    if isinstance(a, DiffTensor):
        return a
    a = np.asarray(a)
    return a.astype(np.promote_types(a.dtype, np.float64), copy=False)


def residual(y, x_hat):
    """Predicted noise ``n^ = y - x^``.

    Plain arrays are subtracted in double precision.  For float32 inputs
    whose magnitudes lie within 2**29 of each other the difference is then
    exact, so ``x^ + n^ == y`` holds bit for bit.
    """
    if isinstance(y, Signals):
        return Signals(residual(y.wave, x_hat.wave), residual(y.spec, x_hat.spec))
    return ad.sub(_widen(y), _widen(x_hat))


def loss_total(x_hat: Signals, y: Signals, x: Signals, n: Signals,
               weights: LossWeights = LossWeights(), **kwargs) -> DiffTensor:
    """k * L(x^, x) + (1 - k) * L(y - x^, n)."""
    k = weights.k
    total = DiffTensor(0.0)
    if k:
        total = total + k * loss_composite(x_hat, x, weights, **kwargs)
    if k < 1:
        total = total + (1.0 - k) * loss_composite(residual(y, x_hat), n, weights, **kwargs)
    return total
