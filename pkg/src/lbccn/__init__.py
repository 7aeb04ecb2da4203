"""Lightweight binaural complex convolutional network for low-band speech enhancement."""
from ._errors import *  # noqa: F401,F403
from .dsp import (BandSplitConfig, BinauralWaveform, ComplexSpectrogram, StftConfig,
                  band_merge, band_split, istft, stft)
from .model import (VARIANTS, LbccnConfig, LbccnModel, apply_mask_plus_ratf, apply_masks,
                    build, enhance, forward, restore, toy_config)
from .losses import (LossWeights, Signals, loss_composite, loss_ild, loss_ipd, loss_snr,
                     loss_stoi, loss_total, residual)
from .stoi import stoi
from .metrics import MetricsReport, evaluate
from .optim import AdamState, adam_step
from .gradcheck import grad_check
from .streaming import StreamingEnhancer, StreamState, enhance_streaming, stream_enhance
from .training import TrainConfig, train
from .checkpoint import load_checkpoint, save_checkpoint
from .spatial import (HrirCatalog, diffuse_noise, load_hrir_catalog, mix_at_snr, spatialize,
                      synth_spherical_hrir)
from .dataset import DatasetSpec, generate_dataset, load_manifest
from .bench import ComplexityReport, count_macs, count_params, measure_rtf
from .wavio import WavFile, read_wav, write_wav

__version__ = "0.1.0"
