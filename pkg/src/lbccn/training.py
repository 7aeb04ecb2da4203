"""Training loop: low-band objective, Adam updates, early stopping helpers."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from ._errors import ConfigError, NumericError
from .dsp import istft, istft_diff, stft
from .losses import LossWeights, Signals, loss_total
from .model import LbccnModel
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    k: float = 0.5
    lr: float = 1e-4
    epochs: int = 20
    batch_size: int = 4
    seed: int = 0
    max_steps: int | None = None
    target_gain_db: float | None = None   # stop once low-band SNR gain reaches this
    check_every: int = 25
    weights: LossWeights | None = None
    freq_bias_lr_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ConfigError(f"k must lie in [0, 1], got {self.k}")
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("lr, epochs and batch_size must be positive")

    def loss_weights(self) -> LossWeights:
        w = self.weights or LossWeights()
        return LossWeights(self.k, w.w_snr, w.w_stoi, w.w_ipd, w.w_ild)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = asdict(self.loss_weights())
        return d


@dataclass
class TrainResult:
    epoch_losses: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)
    steps: int = 0
    stopped_early: bool = False
    seconds: float = 0.0
    gain_db: float | None = None
    optimizer: AdamState | None = None


@dataclass
class Batch:
    """Precomputed targets for one mini-batch; every array is (B, 2, ...)."""

    Y: np.ndarray           # full-band noisy spectra
    y_low: Signals          # low-band noisy waveform/spectrum
    x_low: Signals
    n_low: Signals
    length: int
    ids: list


def _low_wave(spec_low, config, n_bins, length):
    full = np.zeros(spec_low.shape[:-2] + (n_bins, spec_low.shape[-1]), dtype=spec_low.dtype)
    full[..., :spec_low.shape[-2], :] = spec_low
    return istft(full, config, length)


def make_batch(noisy, clean, noise, model: LbccnModel, ids=None) -> Batch:
    """Turn ``(B, 2, L)`` waveforms into low-band training targets."""
    cfg = model.config
    st, q = cfg.stft, cfg.q
    noisy, clean, noise = (np.asarray(a, dtype=np.float64) for a in (noisy, clean, noise))
    if noisy.ndim == 2:
        noisy, clean, noise = noisy[None], clean[None], noise[None]
    length = noisy.shape[-1]
    specs = [stft(a, st) for a in (noisy, clean, noise)]
    sig = [Signals(_low_wave(s[..., :q, :], st, st.n_bins, length), s[..., :q, :]) for s in specs]
    return Batch(specs[0], sig[0], sig[1], sig[2], length, list(ids or range(noisy.shape[0])))


def estimate_signals(model: LbccnModel, batch: Batch) -> Signals:
    """Low-band estimate as spectrum and as its band-limited resynthesis."""
    st = model.config.stft
    x_hat = model.predict_low(batch.Y)
    pad = [(0, 0)] * (x_hat.ndim - 2) + [(0, st.n_bins - model.config.q), (0, 0)]
    wave = istft_diff(ad.pad(x_hat, pad), st, batch.length)
    return Signals(wave, x_hat)


def batch_loss(model: LbccnModel, batch: Batch, weights: LossWeights) -> ad.DiffTensor:
    est = estimate_signals(model, batch)
    return loss_total(est, batch.y_low, batch.x_low, batch.n_low, weights,
                      config=model.config.stft, n_bins=model.config.q)


def low_band_snr(est, ref) -> float:
    """Mean over ears and batch of 10 log10(|ref|^2 / |est - ref|^2)."""
    est, ref = np.asarray(est), np.asarray(ref)
    num = np.sum(np.abs(ref) ** 2, axis=-1)
    den = np.sum(np.abs(est - ref) ** 2, axis=-1)
    return float(np.mean(10 * np.log10(num / np.maximum(den, 1e-30))))


def snr_gain_db(model: LbccnModel, batch: Batch) -> float:
    """Low-band SNR improvement of the estimate over the noisy input."""
    with ad.no_grad():
        est = estimate_signals(model, batch).wave.value
    ref = batch.x_low.wave
    return low_band_snr(est, ref) - low_band_snr(batch.y_low.wave, ref)


def train_step(model: LbccnModel, batch: Batch, weights: LossWeights, opt: AdamState) -> float:
    params = model.named_parameters()
    model.zero_grad()
    try:
        loss = batch_loss(model, batch, weights)
    except NumericError as exc:
        raise NumericError(f"{exc} (batch {batch.ids})") from exc
    value = float(loss.value)
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss {value} on batch {batch.ids}")
    ad.backward(loss)
    adam_step(params, None, opt)
    return value


def train(model: LbccnModel, data, config: TrainConfig = TrainConfig(),
          monitor=None, optimizer: AdamState | None = None) -> TrainResult:
    """Minimise the weighted signal/noise objective over ``data``.

    ``data`` is a list of objects with ``noisy``, ``clean`` and ``noise``
    ``(2, L)`` arrays (see :mod:`lbccn.dataset`).  Batches are drawn in a
    seeded order each epoch.  ``monitor`` is a batch on which the
    low-band SNR gain is checked every ``check_every`` steps when
    ``target_gain_db`` is set.
    """
    if not data:
        raise ConfigError("training data is empty")
    weights = config.loss_weights()
    opt = optimizer or AdamState(lr=config.lr)
    opt.lr = config.lr
    if config.freq_bias_lr_scale != 1.0:
        opt.lr_scale[".freq_bias"] = config.freq_bias_lr_scale
    rng = np.random.default_rng(config.seed)
    result = TrainResult(optimizer=opt)
    if config.target_gain_db is not None and monitor is None:
        monitor = make_batch(data[0].noisy, data[0].clean, data[0].noise, model)
    start = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        losses = []
        for b0 in range(0, len(order), config.batch_size):
            idx = tuple(order[b0:b0 + config.batch_size])
            items = [data[i] for i in idx]
            ids = [getattr(getattr(it, "record", None), "id", i) for it, i in zip(items, idx)]
            batch = make_batch(np.stack([it.noisy for it in items]),
                               np.stack([it.clean for it in items]),
                               np.stack([it.noise for it in items]), model, ids)
            value = train_step(model, batch, weights, opt)
            losses.append(value)
            result.step_losses.append(value)
            result.steps += 1
            if (config.target_gain_db is not None and result.steps % config.check_every == 0):
                result.gain_db = snr_gain_db(model, monitor)
                log.info("step %d loss %.4f gain %.2f dB", result.steps, value, result.gain_db)
                if result.gain_db >= config.target_gain_db:
                    result.stopped_early = True
            if result.stopped_early or (config.max_steps and result.steps >= config.max_steps):
                break
        result.epoch_losses.append(float(np.mean(losses)))
        log.info("epoch %d mean loss %.4f", epoch + 1, result.epoch_losses[-1])
        if result.stopped_early or (config.max_steps and result.steps >= config.max_steps):
            break
    if monitor is not None:
        result.gain_db = snr_gain_db(model, monitor)
    result.seconds = time.perf_counter() - start
    return result


def overfit_single(model: LbccnModel, sample, steps: int = 2000, lr: float = 1e-3,
                   target_gain_db: float = 5.0, check_every: int = 25, k: float = 0.5,
                   seed: int = 0, freq_bias_lr_scale: float = 1.0) -> TrainResult:
    """Repeatedly fit one sample until the low-band SNR gain reaches the target."""
    cfg = TrainConfig(k=k, lr=lr, epochs=steps, batch_size=1, seed=seed, max_steps=steps,
                      target_gain_db=target_gain_db, check_every=check_every,
                      freq_bias_lr_scale=freq_bias_lr_scale)
    return train(model, [sample], cfg)
