"""Utterance-level evaluation: per-ear SNR and STOI, full-band ILD/IPD errors."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._errors import ShapeError
from .dsp import BinauralWaveform, StftConfig, stft
from .losses import loss_ild, loss_ipd
from .stoi import stoi

EARS = ("left", "right")


def _arr(w) -> np.ndarray:
    a = w.as_array() if isinstance(w, BinauralWaveform) else np.asarray(w)
    if a.ndim != 2 or a.shape[0] != 2:
        raise ShapeError(f"expected a (2, n) binaural signal, got {a.shape}")
    return a.astype(np.float64)


def snr_db(est: np.ndarray, ref: np.ndarray) -> float:
    err = np.sum((est - ref) ** 2)
    sig = np.sum(ref ** 2)
    if err == 0:
        return math.inf
    return float(10 * np.log10(sig / err)) if sig > 0 else -math.inf


@dataclass
class SignalScores:
    snr_db: dict
    stoi: dict
    ild_error: float
    ipd_error: float


@dataclass
class MetricsReport:
    id: str
    enhanced: SignalScores
    noisy: SignalScores
    delta: dict = field(default_factory=dict)

    # flattened accessors
    @property
    def snr_db(self) -> dict:
        return self.enhanced.snr_db

    @property
    def stoi(self) -> dict:
        return self.enhanced.stoi

    @property
    def ild_error(self) -> float:
        return self.enhanced.ild_error

    @property
    def ipd_error(self) -> float:
        return self.enhanced.ipd_error

    def to_dict(self) -> dict:
        return {"id": self.id, "enhanced": asdict(self.enhanced), "noisy": asdict(self.noisy),
                "delta": self.delta}

    def to_json(self) -> str:
        """One canonical JSON line (sorted keys, no whitespace)."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          allow_nan=True)

    @classmethod
    def from_json(cls, line: str) -> "MetricsReport":
        d = json.loads(line)
        return cls(d["id"], SignalScores(**d["enhanced"]), SignalScores(**d["noisy"]),
                   d["delta"])


def score(clean, est, config: StftConfig = StftConfig(), with_stoi: bool = True) -> SignalScores:
    c, e = _arr(clean), _arr(est)
    if c.shape != e.shape:
        raise ShapeError(f"length mismatch: {c.shape} vs {e.shape}")
    C, E = stft(c, config), stft(e, config)
    st = {ear: (stoi(c[i], e[i], config.sample_rate) if with_stoi else float("nan"))
          for i, ear in enumerate(EARS)}
    return SignalScores({ear: snr_db(e[i], c[i]) for i, ear in enumerate(EARS)}, st,
                        float(loss_ild(E, C).value), float(loss_ipd(E, C).value))


def evaluate(clean, noisy, enhanced, id: str = "", config: StftConfig = StftConfig(),
             with_stoi: bool = True) -> MetricsReport:
    """Score ``enhanced`` and ``noisy`` against ``clean``; deltas are enhanced - noisy."""
    c, y, e = _arr(clean), _arr(noisy), _arr(enhanced)
    if not (c.shape == y.shape == e.shape):
        raise ShapeError(f"length mismatch: {c.shape}, {y.shape}, {e.shape}")
    enh = score(c, e, config, with_stoi)
    base = score(c, y, config, with_stoi)
    delta = {f"snr_db_{ear}": enh.snr_db[ear] - base.snr_db[ear] for ear in EARS}
    delta.update({f"stoi_{ear}": enh.stoi[ear] - base.stoi[ear] for ear in EARS})
    delta["ild_error"] = enh.ild_error - base.ild_error
    delta["ipd_error"] = enh.ipd_error - base.ipd_error
    return MetricsReport(id, enh, base, delta)


def summarize(reports: list[MetricsReport]) -> dict:
    """Mean of every enhanced, noisy and delta field over ``reports``."""
    if not reports:
        return {}
    out = {}
    for part in ("enhanced", "noisy"):
        for key in ("ild_error", "ipd_error"):
            out[f"{part}.{key}"] = float(np.mean([getattr(getattr(r, part), key) for r in reports]))
        for key in ("snr_db", "stoi"):
            for ear in EARS:
                out[f"{part}.{key}.{ear}"] = float(np.mean(
                    [getattr(getattr(r, part), key)[ear] for r in reports]))
    for key in reports[0].delta:
        out[f"delta.{key}"] = float(np.mean([r.delta[key] for r in reports]))
    return out


def format_table(summary: dict) -> str:
    width = max(len(k) for k in summary) if summary else 0
    return "\n".join(f"{k.ljust(width)}  {v: .4f}" for k, v in sorted(summary.items()))
