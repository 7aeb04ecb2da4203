"""RIFF/WAVE reading and writing for 16-bit PCM and 32-bit float audio.

Sample data goes through ``scipy.io.wavfile``; the header is walked here
first so malformed files, foreign codecs and truncated payloads raise
distinct errors.
"""
from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from ._errors import UnsupportedCodecError, WavFormatError, WavTruncatedError

PCM = 0x0001
IEEE_FLOAT = 0x0003
EXTENSIBLE = 0xFFFE
_CODEC_NAMES = {0x0002: "MS-ADPCM", 0x0006: "A-law", 0x0007: "mu-law", 0x0011: "IMA-ADPCM",
                0x0031: "GSM 6.10", 0x0055: "MPEG layer 3"}


@dataclass
class WavFile:
    samples: np.ndarray       # (N,) or (N, channels); float in [-1, 1) for PCM16
    sample_rate: int
    bit_depth: int = 32       # 16 (integer PCM) or 32 (IEEE float)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim not in (1, 2):
            raise WavFormatError(f"samples must be (N,) or (N, channels), got {s.shape}")
        if s.ndim == 2 and s.shape[1] not in (1, 2):
            raise WavFormatError(f"only mono or stereo supported, got {s.shape[1]} channels")
        if self.bit_depth not in (16, 32):
            raise WavFormatError(f"bit depth must be 16 or 32, got {self.bit_depth}")
        self.samples = s

    @property
    def channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def n_frames(self) -> int:
        return self.samples.shape[0]


@dataclass
class _Header:
    format_tag: int
    channels: int
    sample_rate: int
    bits: int
    data_offset: int
    data_size: int


def _parse_header(raw: bytes, name: str) -> _Header:
    if len(raw) < 12 or raw[:4] not in (b"RIFF", b"RIFX") or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{name}: not a RIFF/WAVE file")
    if raw[:4] == b"RIFX":
        raise UnsupportedCodecError(f"{name}: big-endian RIFX files are not supported")
    pos, fmt = 12, None
    while pos + 8 <= len(raw):
        cid, size = raw[pos:pos + 4], struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + size > len(raw):
                raise WavFormatError(f"{name}: malformed fmt chunk")
            tag, ch, rate, _, _, bits = struct.unpack("<HHIIHH", raw[body:body + 16])
            if tag == EXTENSIBLE and size >= 40:
                tag = struct.unpack("<H", raw[body + 24:body + 26])[0]
            fmt = (tag, ch, rate, bits)
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError(f"{name}: data chunk precedes fmt chunk")
            tag, ch, rate, bits = fmt
            if tag not in (PCM, IEEE_FLOAT):
                label = _CODEC_NAMES.get(tag, f"format tag 0x{tag:04x}")
                raise UnsupportedCodecError(f"{name}: unsupported codec {label}")
            if (tag, bits) not in ((PCM, 16), (IEEE_FLOAT, 32)):
                raise UnsupportedCodecError(
                    f"{name}: only 16-bit PCM and 32-bit float are supported, got "
                    f"{'float' if tag == IEEE_FLOAT else 'PCM'} {bits}-bit")
            if ch not in (1, 2) or rate <= 0:
                raise WavFormatError(f"{name}: {ch} channels at {rate} Hz is not supported")
            available = len(raw) - body
            frame = ch * bits // 8
            if size > available or size % frame:
                raise WavTruncatedError(
                    f"{name}: data chunk declares {size} bytes, {available} present")
            return _Header(tag, ch, rate, bits, body, size)
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"{name}: no fmt chunk")
    raise WavTruncatedError(f"{name}: no data chunk")


def read_wav(path) -> WavFile:
    """Read a WAV file; 16-bit samples are divided by 32768."""
    path = Path(path)
    raw = path.read_bytes()
    head = _parse_header(raw, str(path))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", wavfile.WavFileWarning)
        rate, data = wavfile.read(io.BytesIO(raw))
    if head.bits == 16:
        data = data.astype(np.float64) / 32768.0
    return WavFile(data, int(rate), head.bits)


def write_wav(path, wav: WavFile | np.ndarray, sample_rate: int | None = None,
              bit_depth: int | None = None) -> Path:
    """Write ``wav`` (or a raw ``(N,)``/``(N, ch)`` array) as float32 or PCM16.

    PCM16 conversion multiplies by 32768, rounds and clips to int16.
    """
    if not isinstance(wav, WavFile):
        if sample_rate is None:
            raise WavFormatError("sample_rate is required when writing a raw array")
        wav = WavFile(np.asarray(wav), sample_rate, bit_depth or 32)
    elif bit_depth is not None:
        wav = WavFile(wav.samples, wav.sample_rate, bit_depth)
    if wav.bit_depth == 16:
        data = np.clip(np.round(np.asarray(wav.samples, np.float64) * 32768.0),
                       -32768, 32767).astype(np.int16)
    else:
        data = np.asarray(wav.samples, dtype=np.float32)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(path, wav.sample_rate, data)
    return path


def read_binaural(path):
    """Read a stereo file as a :class:`BinauralWaveform` keeping the sample dtype."""
    from .dsp import BinauralWaveform
    from ._errors import InputError

    wav = read_wav(path)
    if wav.channels != 2:
        raise InputError(f"{path}: expected a stereo file, got {wav.channels} channel(s)")
    return BinauralWaveform.from_array(wav.samples.T, wav.sample_rate)


def write_binaural(path, wave, bit_depth: int = 32) -> Path:
    return write_wav(path, WavFile(wave.as_array().T, wave.sample_rate, bit_depth))
