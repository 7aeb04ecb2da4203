"""Binary checkpoint format.

Layout (little-endian)::

    b"LBCCNCKP"                    8-byte magic
    u32 version
    u32 n, n bytes                 canonical config JSON
    u32 n, n bytes                 metadata JSON (variant, dtype, seed, training info)
    u32 count                      tensor records follow
      u16 n, n bytes               name
      u8  width                    4 (float32 planes) or 8 (float64 planes)
      u8  ndim, u32 * ndim         shape
      real plane, imag plane       C order
    u32 crc32                      of every preceding byte

Optimizer moments are stored as extra records named ``adam.m/<param>`` and
``adam.v/<param>`` with the (re, im) pair packed into one complex plane.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ._errors import (CheckpointError, CheckpointFormatError, CheckpointTruncatedError,
                      CheckpointVersionError, VariantMismatchError)
from .model import LbccnConfig, LbccnModel
from .optim import AdamState

MAGIC = b"LBCCNCKP"
VERSION = 1
_WIDTH_DTYPE = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def _pack_blob(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def _pack_tensor(name: str, value: np.ndarray) -> bytes:
    value = np.asarray(value)
    width = 4 if value.dtype in (np.complex64, np.float32) else 8
    dt = _WIDTH_DTYPE[width]
    enc = name.encode()
    head = struct.pack("<H", len(enc)) + enc + struct.pack("<BB", width, value.ndim)
    head += struct.pack(f"<{value.ndim}I", *value.shape)
    re = np.ascontiguousarray(np.real(value), dtype=dt)
    im = np.ascontiguousarray(np.imag(value), dtype=dt)
    return head + re.tobytes() + im.tobytes()


def save_checkpoint(model: LbccnModel, path, optimizer: AdamState | None = None,
                    meta: dict | None = None) -> Path:
    """Write weights (and optionally Adam moments) so they reload bit-exactly."""
    info = {"variant": model.variant, "dtype": model.dtype.name, "seed": model.seed,
            "training": meta or {}}
    tensors = [(n, p.value) for n, p in model.named_parameters().items()]
    if optimizer is not None:
        info["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1,
                             "beta2": optimizer.beta2, "eps": optimizer.eps,
                             "step": optimizer.step, "lr_scale": dict(optimizer.lr_scale)}
        for key in sorted(optimizer.m):
            for tag, store in (("m", optimizer.m), ("v", optimizer.v)):
                arr = store[key]
                packed = arr[0] + 1j * arr[1] if arr.shape[0] == 2 else arr[0].astype(complex)
                tensors.append((f"adam.{tag}/{key}", packed))
    body = MAGIC + struct.pack("<I", VERSION)
    body += _pack_blob(model.config.canonical().encode())
    body += _pack_blob(json.dumps(info, sort_keys=True).encode())
    body += struct.pack("<I", len(tensors))
    body += b"".join(_pack_tensor(n, v) for n, v in tensors)
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(body)
    return path


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointTruncatedError(
                f"checkpoint ends at byte {len(self.raw)}, needed {self.pos + n}")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))

    def blob(self) -> bytes:
        (n,) = self.unpack("I")
        return self.take(n)


def read_checkpoint(path) -> tuple[LbccnConfig, dict, dict]:
    """Parse a checkpoint into (config, metadata, {name: array})."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[:len(MAGIC)] != MAGIC:
        if len(raw) < len(MAGIC) and MAGIC.startswith(raw):
            raise CheckpointTruncatedError(f"{path}: file too short for a checkpoint header")
        raise CheckpointFormatError(f"{path}: bad magic bytes, not an LBCCN checkpoint")
    r = _Reader(raw)
    r.take(len(MAGIC))
    (version,) = r.unpack("I")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, expected {VERSION}")
    try:
        config = LbccnConfig.from_dict(json.loads(r.blob()))
        info = json.loads(r.blob())
    except (ValueError, TypeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointFormatError(f"{path}: unreadable config or metadata: {exc}") from exc
    (count,) = r.unpack("I")
    tensors = {}
    for _ in range(count):
        (n,) = r.unpack("H")
        name = r.take(n).decode()
        width, ndim = r.unpack("BB")
        if width not in _WIDTH_DTYPE:
            raise CheckpointFormatError(f"{path}: tensor {name} has unknown width {width}")
        shape = r.unpack(f"{ndim}I") if ndim else ()
        size = int(np.prod(shape)) * width
        dt = _WIDTH_DTYPE[width]
        re = np.frombuffer(r.take(size), dtype=dt).reshape(shape)
        im = np.frombuffer(r.take(size), dtype=dt).reshape(shape)
        cdt = np.complex64 if width == 4 else np.complex128
        arr = np.empty(shape, dtype=cdt)
        arr.real, arr.imag = re, im
        tensors[name] = arr
    (crc,) = r.unpack("I")
    if r.pos != len(raw):
        raise CheckpointFormatError(f"{path}: {len(raw) - r.pos} trailing bytes")
    if crc != zlib.crc32(raw[:r.pos - 4]) & 0xFFFFFFFF:
        raise CheckpointFormatError(f"{path}: checksum mismatch, file is corrupt")
    return config, info, tensors


def load_checkpoint(path, config: LbccnConfig | None = None,
                    with_optimizer: bool = False):
    """Rebuild the model stored at ``path``.

    If ``config`` is given, its predictor variant must match the stored one.
    Returns the model, or ``(model, optimizer, metadata)`` with
    ``with_optimizer=True``.
    """
    stored, info, tensors = read_checkpoint(path)
    if config is not None and config.predictor_variant != stored.predictor_variant:
        raise VariantMismatchError(
            f"checkpoint holds a {stored.predictor_variant!r} model, "
            f"requested {config.predictor_variant!r}")
    model = LbccnModel(stored, seed=info.get("seed", 0), dtype=np.dtype(info["dtype"]))
    params = model.named_parameters()
    missing = sorted(set(params) - set(tensors))
    if missing:
        raise CheckpointFormatError(f"{path}: missing tensors {missing[:5]}")
    for name, p in params.items():
        arr = tensors[name]
        if arr.shape != p.shape:
            raise CheckpointFormatError(f"{path}: tensor {name} has shape {arr.shape}, "
                                        f"expected {p.shape}")
        p.value = arr.astype(model.dtype)
    if not with_optimizer:
        return model
    opt = None
    if "optimizer" in info:
        o = info["optimizer"]
        opt = AdamState(o["lr"], o["beta1"], o["beta2"], o["eps"], o["step"],
                        lr_scale=dict(o.get("lr_scale", {})))
        for name, p in params.items():
            m = tensors.get(f"adam.m/{name}")
            if m is None:
                continue
            v = tensors[f"adam.v/{name}"]
            split = (lambda z: np.stack([z.real, z.imag])) if p.is_complex else (
                lambda z: z.real[None])
            opt.m[name], opt.v[name] = split(m), split(v)
    return model, opt, info.get("training", {})
