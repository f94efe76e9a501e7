"""End-to-end steps: kernel learning, feature extraction, CNN training, classification."""
import logging
from dataclasses import dataclass

import numpy as np

from .cnn import classify_field, train
from .kernels import KernelBank, learn_kernel_bank
from .polsar import diagonal_loading
from .rcm import RcmConfig, flatten, rcm_forward_field

log = logging.getLogger(__name__)


@dataclass
class PipelineModel:
    bank: KernelBank
    rcm_layers: int
    cnn: object
    loading: float = 1e-6


def prepare_pixels(pixels, loading):
    return diagonal_loading(pixels, loading) if loading > 0 else np.asarray(pixels)


def extract_features(pixels, bank, rcm_layers, epsilon=None, workers=None):
    """Per-pixel features: RCM branches, or the raw 9-D flatten when ``rcm_layers == 0``."""
    if rcm_layers == 0:
        return flatten(pixels)
    return rcm_forward_field(pixels, bank, RcmConfig(rcm_layers, epsilon), workers)


def train_pipeline(field, labels, cfg, workers=None):
    """Learn kernels, compute features and fit the CNN head.

    Returns ``(PipelineModel, TrainReport)``.
    """
    pixels = prepare_pixels(field.pixels, cfg.loading)
    bank = None
    if cfg.rcm_layers > 0:
        bank = learn_kernel_bank(pixels, labels, cfg.sample_fraction, cfg.seed,
                                 cfg.rcm_layers, cfg.epsilon)
        log.info("learned %d kernel(s) per layer, epsilon=%.6g", bank.num_classes, bank.epsilon)
    feats = extract_features(pixels, bank, cfg.rcm_layers, workers=workers)
    cnn, report = train(feats, labels, cfg.cnn_config())
    return PipelineModel(bank, cfg.rcm_layers, cnn, cfg.loading), report


def classify_pipeline(model, field, workers=None):
    pixels = prepare_pixels(field.pixels, model.loading)
    feats = extract_features(pixels, model.bank, model.rcm_layers, workers=workers)
    return classify_field(model.cnn, feats, workers)
