"""The LBCCN network, its three predictor variants and offline enhancement."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from ._errors import ConfigError, InputError, NumericError, ShapeError
from .autodiff import DiffTensor
from .dsp import (BandSplitConfig, BinauralWaveform, ComplexSpectrogram, StftConfig,
                  band_merge, istft, stft)
from .nn import ComplexConvParams, LightBlock, LightBlockConfig

VARIANTS = ("ratfs", "masks", "mask-ratf")
_VARIANT_ALIASES = {"ratfs": "ratfs", "masks": "masks", "mask-ratf": "mask-ratf",
                    "maskplusratf": "mask-ratf", "mask+ratf": "mask-ratf"}


def normalize_variant(name: str) -> str:
    key = str(name).lower().replace("_", "-")
    if key not in _VARIANT_ALIASES:
        raise ConfigError(f"unknown predictor variant {name!r}; expected one of {VARIANTS}")
    return _VARIANT_ALIASES[key]


@dataclass(frozen=True)
class LbccnConfig:
    q: int = 40
    extractor_blocks: int = 2
    predictor_blocks: int = 3
    extractor_channels: tuple = (40, 40, 40, 40)
    dualpath_channels: tuple = (16,)
    predictor_channels: tuple = (16, 16, 1)
    kernel_sizes: tuple = (5, 9, 9)
    extractor_dilations: tuple = (1, 1, 2, 4)
    dualpath_dilations: tuple = (1,)
    predictor_dilations: tuple = (1, 2, 4)
    predictor_variant: str = "ratfs"
    ratf_eps: float = 1e-3
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        for name in ("extractor_channels", "dualpath_channels", "predictor_channels",
                     "kernel_sizes", "extractor_dilations", "dualpath_dilations",
                     "predictor_dilations"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if isinstance(self.stft, dict):
            object.__setattr__(self, "stft", StftConfig(**self.stft))
        object.__setattr__(self, "predictor_variant", normalize_variant(self.predictor_variant))
        problems = self.violations()
        if problems:
            raise ConfigError("invalid LBCCN config: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        f_total = self.stft.n_bins
        if not 1 <= self.q <= f_total:
            out.append(f"q={self.q} outside [1, {f_total}]")
        if self.extractor_blocks < 1:
            out.append(f"extractor_blocks must be >= 1, got {self.extractor_blocks}")
        if self.predictor_blocks < 1:
            out.append(f"predictor_blocks must be >= 1, got {self.predictor_blocks}")
        if len(self.extractor_channels) != 2 + self.extractor_blocks:
            out.append("extractor_channels needs 2 split-path entries plus one per extractor block")
        elif self.extractor_channels[0] != self.extractor_channels[1]:
            out.append("low and high path blocks must output the same channel count")
        if len(self.extractor_dilations) != len(self.extractor_channels):
            out.append("extractor_dilations length must match extractor_channels")
        if len(self.dualpath_channels) < 1:
            out.append("at least one dual-path block is required")
        if len(self.dualpath_dilations) != len(self.dualpath_channels):
            out.append("dualpath_dilations length must match dualpath_channels")
        if len(self.predictor_channels) != self.predictor_blocks:
            out.append("predictor_channels length must equal predictor_blocks")
        elif self.predictor_channels[-1] != 1:
            out.append("last predictor channel count must be 1")
        if len(self.predictor_dilations) != len(self.predictor_channels):
            out.append("predictor_dilations length must match predictor_channels")
        if len(self.kernel_sizes) != 3:
            out.append("kernel_sizes holds (extractor, dual-path, predictor)")
        elif any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            out.append("kernel sizes must be odd and >= 1")
        if any(d < 1 for d in self.extractor_dilations + self.dualpath_dilations
               + self.predictor_dilations):
            out.append("dilations must be >= 1")
        if not self.ratf_eps > 0:
            out.append("ratf_eps must be positive")
        return out

    @property
    def bands(self) -> BandSplitConfig:
        return BandSplitConfig(self.q, self.stft.n_bins)

    def replace(self, **changes) -> "LbccnConfig":
        data = self.to_dict()
        data.update(changes)
        return LbccnConfig.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stft"] = self.stft.to_dict()
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "LbccnConfig":
        data = dict(data)
        if "stft" in data and isinstance(data["stft"], dict):
            data["stft"] = StftConfig(**data["stft"])
        return cls(**data)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def toy_config(**overrides) -> LbccnConfig:
    """Small configuration for gradient checks and fast tests."""
    base = dict(q=8, extractor_channels=(4, 4, 4, 4), dualpath_channels=(4,),
                predictor_channels=(4, 4, 1), stft=StftConfig(64, 32))
    base.update(overrides)
    return LbccnConfig(**base)


class LbccnModel:
    """Band-compressed complex convolutional network with two prediction heads."""

    def __init__(self, config: LbccnConfig = LbccnConfig(), seed: int = 0,
                 dtype=np.complex128):
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        cfg = config
        k_ext, k_dp, k_pred = cfg.kernel_sizes
        ch, dil = cfg.extractor_channels, cfg.extractor_dilations
        f_high = cfg.stft.n_bins - cfg.q

        def block(name, cin, cout, k, d, axis, norm=True, act=True):
            conf = LightBlockConfig(ComplexConvParams(cin, cout, k, d, axis), norm, act)
            return LightBlock(conf, rng, self.dtype, name)

        self.low_block = block("extractor.low", 2, ch[0], k_ext, dil[0], "frequency")
        self.high_block = block("extractor.high", 2, ch[1], k_ext, dil[1], "frequency")
        bound = 1.0 / np.sqrt(max(f_high, 1))
        proj = (rng.uniform(-bound, bound, (cfg.q, f_high))
                + 1j * rng.uniform(-bound, bound, (cfg.q, f_high))).astype(self.dtype)
        self.projection = DiffTensor(proj, requires_grad=True, name="extractor.projection")
        self.shared = [block(f"extractor.shared{i}", ch[1 + i], ch[2 + i], k_ext, dil[2 + i],
                             "frequency") for i in range(cfg.extractor_blocks)]
        self.dualpath = []
        cin = ch[-1]
        for i, (cout, d) in enumerate(zip(cfg.dualpath_channels, cfg.dualpath_dilations)):
            self.dualpath.append(block(f"dualpath{i}", cin, cout, k_dp, d, "time-frequency"))
            cin = cout
        self.heads = []
        for name in ("head_a", "head_b"):
            blocks, hin = [], cin
            n = len(cfg.predictor_channels)
            for i, (cout, d) in enumerate(zip(cfg.predictor_channels, cfg.predictor_dilations)):
                blocks.append(block(f"{name}{i}", hin, cout, k_pred, d, "time-frequency",
                                    norm=False, act=i < n - 1))
                hin = cout
            self.heads.append(blocks)
        # per-frequency output offsets; their start values put the untrained
        # model near a harmless estimate for each variant
        start = {"ratfs": (1.0, -1.0), "masks": (1.0, 1.0), "mask-ratf": (1.0, 1.0)}
        self.head_bias = [
            DiffTensor(np.full(cfg.q, v, dtype=self.dtype), requires_grad=True,
                       name=f"{name}.freq_bias")
            for name, v in zip(("head_a", "head_b"), start[cfg.predictor_variant])
        ]

    # -- parameters ----------------------------------------------------------

    @property
    def blocks(self) -> list[LightBlock]:
        return [self.low_block, self.high_block, *self.shared, *self.dualpath,
                *self.heads[0], *self.heads[1]]

    def named_parameters(self) -> dict[str, DiffTensor]:
        out = {}
        for blk in self.blocks[:2]:
            out.update(blk.named_parameters())
        out["extractor.projection"] = self.projection
        for blk in self.blocks[2:]:
            out.update(blk.named_parameters())
        for p in self.head_bias:
            out[p.name] = p
        return out

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.zero_grad()

    def n_complex_params(self) -> int:
        return int(sum(p.value.size for p in self.named_parameters().values()))

    @property
    def variant(self) -> str:
        return self.config.predictor_variant

    # -- network -------------------------------------------------------------

    def _check_input(self, noisy) -> np.ndarray:
        data = noisy.data if isinstance(noisy, ComplexSpectrogram) else (
            noisy.value if isinstance(noisy, DiffTensor) else np.asarray(noisy))
        if data.ndim == 3:
            data = data[None]
        if data.ndim != 4 or data.shape[1] != 2:
            raise ShapeError(f"expected (2, F, T) or (B, 2, F, T) spectra, got {data.shape}")
        if data.shape[2] != self.config.stft.n_bins:
            raise ShapeError(f"expected {self.config.stft.n_bins} bins, got {data.shape[2]}")
        return data

    def heads_forward(self, noisy) -> tuple[DiffTensor, DiffTensor]:
        """Run the trunk and both heads; each output is ``(B, q, T)``."""
        y = DiffTensor(self._check_input(noisy).astype(self.dtype, copy=False))
        q = self.config.q
        low = y[:, :, :q, :]
        if self.config.stft.n_bins > q:
            high = ad.matmul(self.projection, y[:, :, q:, :])
        else:
            high = DiffTensor(np.zeros(low.shape, dtype=self.dtype))
        z = self.low_block(low) + self.high_block(high)
        for blk in self.shared:
            z = blk(z)
        for blk in self.dualpath:
            z = blk(z)
        outs = []
        for head, bias in zip(self.heads, self.head_bias):
            h = z
            for blk in head:
                h = blk(h)
            outs.append(h[:, 0] + ad.reshape(bias, (self.config.q, 1)))
        return outs[0], outs[1]

    def forward(self, noisy) -> tuple[DiffTensor, DiffTensor]:
        """Head outputs for a single ``(2, F, T)`` input or a batch."""
        single = self._check_input(noisy).shape[0] == 1 and np.ndim(
            getattr(noisy, "data", getattr(noisy, "value", noisy))) == 3
        a, b = self.heads_forward(noisy)
        if single:
            return a[0], b[0]
        return a, b

    def predict_low(self, noisy) -> DiffTensor:
        """Low-band estimate ``(B, 2, q, T)`` of the clean binaural spectra."""
        data = self._check_input(noisy)
        y_low = data[:, :, :self.config.q, :]
        a, b = self.heads_forward(data)
        return reconstruct(self.variant, y_low, a, b, self.config.ratf_eps)

    def enhance_spectrum(self, noisy) -> np.ndarray:
        """Enhanced spectra: predicted low bins, untouched high bins."""
        data = self._check_input(noisy)
        with ad.no_grad():
            low = self.predict_low(data).value
        out = band_merge(low, data[:, :, self.config.q:, :])
        return out[0] if np.ndim(getattr(noisy, "data", noisy)) == 3 else out

    def enhance(self, noisy: BinauralWaveform) -> BinauralWaveform:
        if not isinstance(noisy, BinauralWaveform):
            noisy = BinauralWaveform.from_array(noisy)
        if noisy.sample_rate != self.config.stft.sample_rate:
            raise InputError(
                f"expected {self.config.stft.sample_rate} Hz input, got {noisy.sample_rate} Hz"
            )
        wave = noisy.as_array()
        spec = stft(wave, self.config.stft)
        out = istft(self.enhance_spectrum(spec), self.config.stft, wave.shape[-1])
        return BinauralWaveform(out[0], out[1], noisy.sample_rate)


def build(config: LbccnConfig = LbccnConfig(), seed: int = 0, dtype=np.complex128) -> LbccnModel:
    return LbccnModel(config, seed, dtype)


def forward(model: LbccnModel, noisy_spec) -> tuple[DiffTensor, DiffTensor]:
    return model.forward(noisy_spec)


def enhance(model: LbccnModel, noisy: BinauralWaveform) -> BinauralWaveform:
    return model.enhance(noisy)


# ---------------------------------------------------------------- predictors

def _ears(y):
    y = ad.as_tensor(y)
    if y.shape[-3] != 2:
        raise ShapeError(f"expected a left/right channel axis of size 2, got {y.shape}")
    return y[..., 0, :, :], y[..., 1, :, :]


def _same_shape(*items):
    shapes = {ad.as_tensor(t).shape for t in items}
    if len(shapes) != 1:
        raise ShapeError(f"shape mismatch: {sorted(shapes)}")


def restore(y_low, w_x, w_n, eps: float = 1e-3):
    """Recover (X_L, X_R) from noisy low bins and the target/noise RATFs.

    X_R = (Y_L - W_n Y_R) / (W_x - W_n) and X_L = W_x X_R, with the
    denominator's magnitude floored at ``eps`` (phase kept).
    """
    if not eps > 0:
        raise ConfigError("eps must be positive")
    y_l, y_r = _ears(y_low)
    w_x, w_n = ad.as_tensor(w_x), ad.as_tensor(w_n)
    _same_shape(y_l, w_x, w_n)
    for t in (y_l, y_r, w_x, w_n):
        if np.isnan(t.value).any():
            raise NumericError("NaN in restore() input")
    denom = w_x - w_n
    mag = np.abs(denom.value)
    small = mag < eps
    if small.any():
        safe = np.where(small & (mag > 0), mag, 1.0)
        floored = denom * (eps / safe)
        floored = ad.where(mag == 0, DiffTensor(np.full(mag.shape, eps, denom.dtype)), floored)
        denom = ad.where(small, floored, denom)
    x_r = (y_l - w_n * y_r) / denom
    x_l = w_x * x_r
    return x_l, x_r


def apply_masks(y, m_l, m_r):
    y_l, y_r = _ears(y)
    _same_shape(y_l, m_l, m_r)
    return ad.mul(m_l, y_l), ad.mul(m_r, y_r)


def apply_mask_plus_ratf(y, m_r, w_x):
    _, y_r = _ears(y)
    _same_shape(y_r, m_r, w_x)
    x_r = ad.mul(m_r, y_r)
    return ad.mul(w_x, x_r), x_r


def reconstruct(variant: str, y_low, head_a, head_b, eps: float = 1e-3) -> DiffTensor:
    """Stack the variant's (left, right) estimates on the ear axis."""
    variant = normalize_variant(variant)
    if variant == "ratfs":
        x_l, x_r = restore(y_low, head_a, head_b, eps)
    elif variant == "masks":
        x_l, x_r = apply_masks(y_low, head_a, head_b)
    else:
        x_l, x_r = apply_mask_plus_ratf(y_low, head_a, head_b)
    return ad.stack([x_l, x_r], axis=-3)
