"""Parameter, MAC and real-time-factor accounting.

Conventions: one complex weight is two real parameters; one complex
multiply-accumulate is four real MACs.  MACs cover convolutions and the
high-band projection; bias adds, normalisation, activations and the
variant's per-bin reconstruction are not counted.
"""
from __future__ import annotations

import json
import os
import platform
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .model import LbccnConfig, LbccnModel
from .nn import ComplexConvParams, LightBlockConfig

REAL_MACS_PER_COMPLEX = 4


# ---------------------------------------------------------------- parameters

def block_param_count(config: LightBlockConfig) -> int:
    """Complex parameters of one light block (conv + norm affine + PReLU slope)."""
    c = config.conv
    n = c.complex_param_count()
    if config.use_norm:
        n += 2 * c.out_channels
    if config.use_activation:
        n += 1
    return n


@dataclass
class ParamCounts:
    complex_params: int
    real_params: int
    per_layer: dict = field(default_factory=dict)


def count_params(model) -> ParamCounts:
    """Analytic count from layer geometry (no weight arrays are inspected)."""
    per = {}
    for blk in getattr(model, "blocks", []):
        per[blk.name] = block_param_count(blk.config)
    cfg = getattr(model, "config", None)
    if isinstance(cfg, LbccnConfig) and hasattr(model, "projection"):
        per["extractor.projection"] = cfg.q * (cfg.stft.n_bins - cfg.q)
        per["head_bias"] = 2 * cfg.q
    total = sum(per.values())
    return ParamCounts(total, 2 * total, per)


def brute_force_params(model) -> ParamCounts:
    """Element count of every stored weight tensor."""
    per, total_real = {}, 0
    for name, p in model.named_parameters().items():
        per[name] = int(p.value.size)
        total_real += per[name] * (2 if np.iscomplexobj(p.value) else 1)
    total = sum(per.values())
    return ParamCounts(total, total_real, per)


# ---------------------------------------------------------------- MACs

def pointwise_macs(in_channels: int, out_channels: int, n_bins: int) -> int:
    """Complex MACs of a plain 1x1 channel mix over one frame."""
    return out_channels * in_channels * n_bins


def conv_macs_per_frame(conv: ComplexConvParams, n_bins: int) -> int:
    """Complex MACs of one depthwise-separable conv on one frame of ``n_bins``.

    Zero-padded taps are counted, as a dense implementation would execute them.
    """
    depthwise = conv.in_channels * conv.kernel_size * conv.depthwise_passes * n_bins
    return depthwise + pointwise_macs(conv.in_channels, conv.out_channels, n_bins)


def complex_macs_per_frame(config: LbccnConfig) -> dict:
    q = config.q
    per = {"extractor.projection": 2 * q * (config.stft.n_bins - q)}
    skeleton = LbccnModel(config, seed=0, dtype=np.complex64)
    for blk in skeleton.blocks:
        per[blk.name] = conv_macs_per_frame(blk.config.conv, q)
    return per


@dataclass
class MacCount:
    real_macs: int
    complex_macs_per_frame: int
    frames: float
    seconds: float
    frame_rate: float
    per_layer: dict = field(default_factory=dict)

    @property
    def real_macs_per_second(self) -> float:
        return self.real_macs / self.seconds


def count_macs(model_or_config, audio_seconds: float = 1.0) -> MacCount:
    """Real MACs for ``audio_seconds`` of audio at the STFT frame rate."""
    if audio_seconds <= 0:
        raise ValueError("audio_seconds must be positive")
    cfg = model_or_config.config if isinstance(model_or_config, LbccnModel) else model_or_config
    per = complex_macs_per_frame(cfg)
    per_frame = sum(per.values())
    frames = cfg.stft.frame_rate * audio_seconds
    real = int(round(per_frame * REAL_MACS_PER_COMPLEX * frames))
    return MacCount(real, per_frame, frames, audio_seconds, cfg.stft.frame_rate, per)


# ---------------------------------------------------------------- timing

def hardware_tag() -> str:
    cpu = platform.processor() or platform.machine()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    cpu = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return (f"{cpu} | {os.cpu_count()} logical cpu | {platform.system()} "
            f"| python {platform.python_version()} | numpy {np.__version__}")


@dataclass
class RtfStats:
    median: float
    samples: list
    audio_seconds: float


class PassthroughModel:
    """Streams the STFT analysis/synthesis chain with no network in between."""

    passthrough = True

    def __init__(self, config: LbccnConfig = LbccnConfig()):
        self.config = config
        self.blocks = []
        self.dtype = np.dtype(np.complex128)


def measure_rtf(model, audio_seconds: float = 2.0, repetitions: int = 5,
                seed: int = 0) -> RtfStats:
    """Median wall time / audio duration on the streaming path, one thread.

    One warm-up pass (which also triggers kernel compilation) is excluded.
    """
    from .streaming import stream_enhance

    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    sr = model.config.stft.sample_rate
    x = np.random.default_rng(seed).standard_normal((2, int(round(audio_seconds * sr)))) * 0.1
    with threadpool_limits(limits=1):
        stream_enhance(model, x)
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            stream_enhance(model, x)
            times.append((time.perf_counter() - t0) / audio_seconds)
    return RtfStats(statistics.median(times), times, audio_seconds)


# ---------------------------------------------------------------- report

@dataclass
class ComplexityReport:
    real_params: int
    complex_params: int
    real_macs_per_second_audio: float
    real_macs: int
    audio_seconds: float
    rtf: float
    rtf_samples: list
    hardware_tag: str
    config_hash: str
    bases: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    def lines(self) -> list[str]:
        return [
            f"parameters: {self.real_params} real ({self.complex_params} complex)",
            f"MACs: {self.real_macs / 1e6:.1f} M real for {self.audio_seconds:g} s audio "
            f"({self.real_macs_per_second_audio / 1e6:.1f} M/s)",
            f"RTF: {self.rtf:.4f} (median of {len(self.rtf_samples)}, streaming, 1 thread)",
            f"hardware: {self.hardware_tag}",
            f"config: {self.config_hash}",
        ]


def complexity_report(model: LbccnModel, audio_seconds: float = 2.0,
                      repetitions: int = 5, with_rtf: bool = True) -> ComplexityReport:
    params = count_params(model)
    macs = count_macs(model, audio_seconds)
    rtf = measure_rtf(model, audio_seconds, repetitions) if with_rtf else None
    bases = {
        "params": "complex weights counted twice (real + imaginary)",
        "macs": (f"complex MAC = {REAL_MACS_PER_COMPLEX} real MACs; "
                 f"{macs.frame_rate:g} frames/s x {audio_seconds:g} s; convolutions and "
                 "projection only"),
        "rtf": "streaming path, warm-up excluded, median wall time / audio time",
    }
    return ComplexityReport(params.real_params, params.complex_params,
                            macs.real_macs_per_second, macs.real_macs, audio_seconds,
                            rtf.median if rtf else float("nan"), rtf.samples if rtf else [],
                            hardware_tag(), model.config.digest(), bases)
