"""Complex-valued lightweight convolution blocks.

Tensors flowing through the network use the layout ``(batch, channels, F, T)``.
Frequency-axis convolutions are symmetric ("same"); time-axis convolutions
are causal (left padding followed by a causal chomp of the surplus tail).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import autodiff as ad
from ._errors import ConfigError, NumericError, ShapeError
from .autodiff import DiffTensor

FREQ_AXIS = 2
TIME_AXIS = 3


@dataclass(frozen=True)
class ComplexConvParams:
    """Geometry of a depthwise-separable complex convolution.

    ``axis`` is ``"frequency"`` (LightConv1D) or ``"time-frequency"``
    (LightConv2D, realised as a frequency depthwise pass followed by a causal
    time depthwise pass).
    """

    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int = 1
    axis: str = "frequency"

    def __post_init__(self):
        problems = []
        if self.in_channels < 1 or self.out_channels < 1:
            problems.append("channel counts must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            problems.append(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        if self.dilation < 1:
            problems.append(f"dilation must be >= 1, got {self.dilation}")
        if self.axis not in ("frequency", "time-frequency"):
            problems.append(f"unknown conv axis {self.axis!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    @property
    def depthwise_passes(self) -> int:
        return 2 if self.axis == "time-frequency" else 1

    @property
    def time_pad(self) -> int:
        return (self.kernel_size - 1) * self.dilation if self.axis == "time-frequency" else 0

    def complex_param_count(self) -> int:
        k = self.kernel_size * self.depthwise_passes
        return self.in_channels * k + self.out_channels * self.in_channels + self.out_channels


@dataclass(frozen=True)
class LightBlockConfig:
    conv: ComplexConvParams
    use_norm: bool = True
    use_activation: bool = True

    @property
    def causal_in_time(self) -> bool:
        return self.conv.axis == "time-frequency"


# ---------------------------------------------------------------- functional ops

def _depthwise_valid(x: DiffTensor, w: DiffTensor, axis: int, dilation: int) -> DiffTensor:
    """Per-channel dilated correlation without padding along ``axis``.

    ``x`` is (B, C, F, T); ``w`` is (C, k).  Output length along ``axis`` is
    ``n - (k - 1) * dilation``.
    """
    xv, wv = x.value, w.value
    k = wv.shape[1]
    n_out = xv.shape[axis] - (k - 1) * dilation
    if n_out < 1:
        raise ShapeError("input shorter than the dilated kernel span")
    dtype = np.result_type(xv, wv)
    xc = np.ascontiguousarray(xv, dtype=dtype)
    wc = np.ascontiguousarray(wv, dtype=dtype)
    out = _kernels.dw_forward(xc, wc, axis, dilation, n_out)

    def bw(g):
        g = np.ascontiguousarray(g, dtype=dtype)
        gx, gw = _kernels.dw_backward(xc, wc, g, axis, dilation,
                                      x.requires_grad, w.requires_grad)
        return (gx if x.requires_grad else None), (gw if w.requires_grad else None)
    return ad._record(out, (x, w), bw)


def causal_chomp(x: DiffTensor, pad_amount: int) -> DiffTensor:
    """Drop the trailing ``pad_amount`` frames along time."""
    x = ad.as_tensor(x)
    n = x.shape[TIME_AXIS]
    if pad_amount < 0 or pad_amount >= n:
        raise ShapeError(f"cannot chomp {pad_amount} frames from a length-{n} sequence")
    if pad_amount == 0:
        return x
    return x[:, :, :, :n - pad_amount]


def depthwise_conv(x, w, axis: int, dilation: int = 1, causal: bool = False) -> DiffTensor:
    """Dilated depthwise convolution keeping the length along ``axis``."""
    x, w = ad.as_tensor(x), ad.as_tensor(w)
    span = (w.shape[1] - 1) * dilation
    if span == 0:
        return _depthwise_valid(x, w, axis, dilation)
    widths = [(0, 0)] * x.ndim
    if causal:
        # torch-style TCN: pad both ends, convolve, chomp the future-looking tail
        widths[axis] = (span, span)
        y = _depthwise_valid(ad.pad(x, widths), w, axis, dilation)
        return causal_chomp(y, span)
    widths[axis] = (span // 2, span - span // 2)
    return _depthwise_valid(ad.pad(x, widths), w, axis, dilation)


def pointwise_conv(x, weight, bias=None) -> DiffTensor:
    """1x1 channel mixing: ``weight`` is (out, in), ``bias`` is (out,)."""
    x = ad.as_tensor(x)
    b, c, f, t = x.shape
    mixed = ad.matmul(weight, ad.reshape(x, (b, c, f * t)))
    out = ad.reshape(mixed, (b, -1, f, t))
    if bias is not None:
        out = out + ad.reshape(ad.as_tensor(bias), (1, -1, 1, 1))
    return out


def complex_conv(x, params: ComplexConvParams, depthwise, pointwise, bias=None,
                 depthwise_time=None) -> DiffTensor:
    """Depthwise-separable complex convolution.

    ``depthwise`` is (in, k) along frequency; for ``time-frequency`` layers
    ``depthwise_time`` (in, k) is applied causally along time afterwards.
    """
    x = ad.as_tensor(x)
    if x.ndim != 4:
        raise ShapeError(f"expected (B, C, F, T) input, got {x.shape}")
    if x.shape[1] != params.in_channels:
        raise ShapeError(f"layer expects {params.in_channels} channels, got {x.shape[1]}")
    for t in (depthwise, pointwise, bias, depthwise_time):
        if t is not None and not np.all(np.isfinite(ad.as_tensor(t).value)):
            raise NumericError("non-finite convolution weights")
    h = depthwise_conv(x, depthwise, FREQ_AXIS, params.dilation)
    if params.axis == "time-frequency":
        if depthwise_time is None:
            raise ConfigError("time-frequency conv needs time depthwise weights")
        h = depthwise_conv(h, depthwise_time, TIME_AXIS, params.dilation, causal=True)
    return pointwise_conv(h, pointwise, bias)


def complex_prelu(x, slope_re=0.25, slope_im=None) -> DiffTensor:
    """Split PReLU: real and imaginary parts each get their own slope.

    Slopes may be passed as two real scalars or as one complex DiffTensor
    whose real part drives the real branch and imaginary part the imaginary
    branch.  At exactly zero the negative-side slope is used.
    """
    x = ad.as_tensor(x)
    if slope_im is None and isinstance(slope_re, DiffTensor):
        slope = slope_re
    else:
        slope = DiffTensor(complex(slope_re, slope_re if slope_im is None else slope_im))
    a, b = slope.value.real, slope.value.imag
    if not (np.isfinite(a) and np.isfinite(b)):
        raise NumericError("PReLU slopes must be finite")
    xv = np.ascontiguousarray(x.value)
    if not np.iscomplexobj(xv):
        xv = xv.astype(np.complex128)
    ad.note_branch(xv.real > 0)
    ad.note_branch(xv.imag > 0)
    out = _kernels.prelu_forward(xv, float(a), float(b))

    def bw(g):
        g = np.ascontiguousarray(g, dtype=xv.dtype)
        gx, sa, sb = _kernels.prelu_backward(xv, g, float(a), float(b))
        return gx, np.reshape(np.asarray(complex(sa, sb), dtype=slope.dtype), slope.shape)
    return ad._record(out, (x, slope), bw)


def complex_instance_norm(x, gain, bias, eps: float = 1e-5, axes=(FREQ_AXIS,)) -> DiffTensor:
    """Normalise each (sample, channel, frame) over ``axes`` with complex stats.

    ``x - mean`` is divided by ``sqrt(mean(|x - mean|^2) + eps)`` and then
    mapped through ``gain * . + bias`` (both per channel).
    """
    x = ad.as_tensor(x)
    mu = ad.mean(x, axis=axes, keepdims=True)
    centred = x - mu
    var = ad.mean(ad.abs2(centred), axis=axes, keepdims=True)
    normed = centred / ad.sqrt(var + eps)
    shape = (1, -1) + (1,) * (x.ndim - 2)
    return normed * ad.reshape(ad.as_tensor(gain), shape) + ad.reshape(ad.as_tensor(bias), shape)


# ---------------------------------------------------------------- blocks

def _uniform(rng, shape, bound, dtype):
    re = rng.uniform(-bound, bound, size=shape)
    im = rng.uniform(-bound, bound, size=shape)
    return (re + 1j * im).astype(dtype)


class LightBlock:
    """Depthwise-separable complex conv, optional instance norm, optional PReLU."""

    def __init__(self, config: LightBlockConfig, rng: np.random.Generator,
                 dtype=np.complex128, name: str = "block"):
        self.config = config
        self.name = name
        c = config.conv
        k = c.kernel_size
        self.params: dict[str, DiffTensor] = {}
        self._add("dw_freq", _uniform(rng, (c.in_channels, k), 1.0 / np.sqrt(k), dtype))
        if c.axis == "time-frequency":
            self._add("dw_time", _uniform(rng, (c.in_channels, k), 1.0 / np.sqrt(k), dtype))
        self._add("pw", _uniform(rng, (c.out_channels, c.in_channels),
                                 1.0 / np.sqrt(c.in_channels), dtype))
        self._add("bias", np.zeros(c.out_channels, dtype=dtype))
        if config.use_norm:
            self._add("norm_gain", np.ones(c.out_channels, dtype=dtype))
            self._add("norm_bias", np.zeros(c.out_channels, dtype=dtype))
        if config.use_activation:
            self._add("slope", np.array(0.25 + 0.25j, dtype=dtype))

    def _add(self, key, value):
        self.params[key] = DiffTensor(value, requires_grad=True, name=f"{self.name}.{key}")

    def named_parameters(self):
        for key, p in self.params.items():
            yield f"{self.name}.{key}", p

    def __call__(self, x) -> DiffTensor:
        p = self.params
        h = complex_conv(x, self.config.conv, p["dw_freq"], p["pw"], p["bias"],
                         p.get("dw_time"))
        if self.config.use_norm:
            h = complex_instance_norm(h, p["norm_gain"], p["norm_bias"])
        if self.config.use_activation:
            h = complex_prelu(h, p["slope"])
        return h

    # -- frame-by-frame inference (numpy only) --------------------------------

    def init_state(self, n_bins: int, dtype=None):
        c = self.config.conv
        if c.axis != "time-frequency":
            return None
        dtype = dtype or self.params["pw"].dtype
        return np.zeros((c.in_channels, n_bins, c.time_pad), dtype=dtype)

    def step(self, frame: np.ndarray, state):
        """Process one frame ``(C, F)``; returns ``(out, new_state)``.

        ``state`` is updated in place for time-frequency blocks.
        """
        c = self.config.conv
        p = {k: v.value for k, v in self.params.items()}
        dtype = p["pw"].dtype
        frame = np.ascontiguousarray(frame, dtype=dtype)
        h = _kernels.frame_freq_conv(frame, p["dw_freq"], c.dilation)
        if c.axis == "time-frequency":
            h = _kernels.frame_time_conv(h, state, p["dw_time"], c.dilation)
        out = p["pw"] @ h + p["bias"][:, None]
        if self.config.use_norm:
            mu = out.mean(axis=1, keepdims=True)
            cen = out - mu
            var = (cen.real ** 2 + cen.imag ** 2).mean(axis=1, keepdims=True)
            out = cen / np.sqrt(var + 1e-5) * p["norm_gain"][:, None] + p["norm_bias"][:, None]
        if self.config.use_activation:
            s = p["slope"]
            out = (np.where(out.real > 0, out.real, s.real * out.real)
                   + 1j * np.where(out.imag > 0, out.imag, s.imag * out.imag)).astype(out.dtype)
        return out, state
