"""Frame-by-frame enhancement with bounded latency.

One hop of stereo input is consumed per call and one hop of output is
emitted.  Output sample ``m`` equals offline output sample ``m - latency``
where ``latency = fft_size - hop``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from ._errors import InputError, ShapeError
from .dsp import BinauralWaveform
from .model import LbccnModel, reconstruct


@dataclass
class StreamState:
    model: LbccnModel
    buffer: np.ndarray            # (2, fft_size) most recent input samples
    ola: np.ndarray               # (2, fft_size) overlap-add accumulator
    block_states: list = field(default_factory=list)
    frames: int = 0

    @property
    def latency(self) -> int:
        return self.model.config.stft.lead_pad


def init_stream(model: LbccnModel) -> StreamState:
    st = model.config.stft
    states = [blk.init_state(model.config.q) for blk in model.blocks]
    return StreamState(model, np.zeros((2, st.fft_size)), np.zeros((2, st.fft_size)), states)


def latency_samples(model: LbccnModel) -> int:
    return model.config.stft.lead_pad


def _enhance_frame(state: StreamState, spec: np.ndarray) -> np.ndarray:
    """Enhance one ``(2, F)`` spectral frame, advancing the causal block states."""
    model = state.model
    if getattr(model, "passthrough", False):
        return spec
    q = model.config.q
    y = spec.astype(model.dtype)
    low = y[:, :q]
    z, s0 = model.low_block.step(low, state.block_states[0])
    if spec.shape[1] > q:
        high = y[:, q:] @ model.projection.value.T
    else:
        high = np.zeros_like(low)
    h, s1 = model.high_block.step(high, state.block_states[1])
    z = z + h
    new_states = [s0, s1]
    i = 2
    for blk in [*model.shared, *model.dualpath]:
        z, s = blk.step(z, state.block_states[i])
        new_states.append(s)
        i += 1
    heads = []
    for head, bias in zip(model.heads, model.head_bias):
        h = z
        for blk in head:
            h, s = blk.step(h, state.block_states[i])
            new_states.append(s)
            i += 1
        heads.append(h[0] + bias.value)
    state.block_states = new_states
    with ad.no_grad():
        est = reconstruct(model.variant, spec[:, :q, None], heads[0][:, None],
                          heads[1][:, None], model.config.ratf_eps).value[..., 0]
    out = spec.copy()
    out[:, :q] = est
    return out


def enhance_streaming(state: StreamState, frame) -> np.ndarray:
    """Consume ``(2, hop)`` samples and return ``(2, hop)`` enhanced samples."""
    st = state.model.config.stft
    chunk = np.asarray(frame, dtype=np.float64)
    if chunk.shape != (2, st.hop):
        raise InputError(f"expected a (2, {st.hop}) frame, got {chunk.shape}")
    hop, n = st.hop, st.fft_size
    buf = state.buffer
    buf[:, :-hop] = buf[:, hop:]
    buf[:, -hop:] = chunk
    spec = np.fft.rfft(buf * st.analysis_window(), axis=-1)
    spec = _enhance_frame(state, spec)
    out_frame = np.fft.irfft(spec, n=n, axis=-1) * st.synthesis_window()
    state.ola += out_frame
    emitted = state.ola[:, :hop].copy()
    state.ola[:, :-hop] = state.ola[:, hop:]
    state.ola[:, -hop:] = 0.0
    state.frames += 1
    return emitted


def flush(state: StreamState) -> np.ndarray:
    """Feed silence until every buffered sample has been emitted."""
    st = state.model.config.stft
    blocks = st.lead_pad // st.hop
    zero = np.zeros((2, st.hop))
    if not blocks:
        return np.zeros((2, 0))
    return np.concatenate([enhance_streaming(state, zero) for _ in range(blocks)], axis=1)


def stream_enhance(model: LbccnModel, noisy) -> BinauralWaveform:
    """Run a whole signal through the streaming path, aligned to the input.

    The signal is zero-padded to a whole number of hops, processed hop by
    hop, flushed, and the leading ``latency`` samples are dropped.
    """
    if not isinstance(noisy, BinauralWaveform):
        noisy = BinauralWaveform.from_array(noisy)
    st = model.config.stft
    if noisy.sample_rate != st.sample_rate:
        raise InputError(f"expected {st.sample_rate} Hz input, got {noisy.sample_rate} Hz")
    wave = noisy.as_array()
    length = wave.shape[-1]
    if length < st.fft_size:
        raise ShapeError(f"signal of {length} samples is shorter than one frame")
    padded = np.pad(wave, ((0, 0), (0, (-length) % st.hop)))
    state = init_stream(model)
    outs = [enhance_streaming(state, padded[:, i:i + st.hop])
            for i in range(0, padded.shape[1], st.hop)]
    outs.append(flush(state))
    out = np.concatenate(outs, axis=1)[:, state.latency:state.latency + length]
    return BinauralWaveform(out[0], out[1], noisy.sample_rate)


class StreamingEnhancer:
    """Stateful wrapper: ``process`` one hop at a time, ``flush`` at the end."""

    def __init__(self, model: LbccnModel):
        self.model = model
        self.reset()

    def reset(self):
        self.state = init_stream(self.model)

    @property
    def latency(self) -> int:
        return self.state.latency

    @property
    def hop(self) -> int:
        return self.model.config.stft.hop

    def process(self, frame) -> np.ndarray:
        return enhance_streaming(self.state, frame)

    def flush(self) -> np.ndarray:
        return flush(self.state)
