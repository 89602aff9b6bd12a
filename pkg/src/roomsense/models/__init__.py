"""Model zoo: builders, parameter accounting, and checkpoint restore."""

from __future__ import annotations

from pathlib import Path

from ..errors import ConfigError, IntegrityError
from ..nn.checkpoint import load_checkpoint, restore_into, save_checkpoint
from .autoencoder import (
    EncoderClassifier,
    RecurrentAutoencoder,
    build_autoencoder,
    build_encoder_classifier,
)
from .config import (
    AutoencoderConfig,
    FcnConfig,
    HeadConfig,
    InceptionConfig,
    LstmConfig,
    config_from_arch,
)
from .fcn import FcnClassifier, build_fcn
from .inception import (
    InceptionNetwork,
    build_inception,
    build_inception_ensemble,
    ensemble_predict,
)
from .lstm import LstmClassifier, build_lstm_classifier

__all__ = [
    "AutoencoderConfig", "FcnConfig", "HeadConfig", "InceptionConfig", "LstmConfig",
    "FcnClassifier", "LstmClassifier", "InceptionNetwork",
    "RecurrentAutoencoder", "EncoderClassifier",
    "build_fcn", "build_lstm_classifier", "build_inception",
    "build_inception_ensemble", "ensemble_predict",
    "build_autoencoder", "build_encoder_classifier",
    "build_model", "model_from_checkpoint", "param_count", "save_model",
    "config_from_arch",
]


def build_model(arch: dict, seed: int = 0):
    """Instantiate a model from its architecture dict."""
    kind = arch.get("kind")
    cfg = config_from_arch(arch)
    if kind == "fcn":
        return FcnClassifier(cfg, seed)
    if kind == "lstm":
        return LstmClassifier(cfg, seed)
    if kind == "inception":
        return InceptionNetwork(cfg, seed)
    if kind == "autoencoder":
        return RecurrentAutoencoder(cfg, seed)
    if kind == "encoder_classifier":
        ae_cfg, head_cfg = cfg
        return EncoderClassifier(ae_cfg, head_cfg, seed)
    raise ConfigError(f"unknown architecture kind {kind!r}")


def save_model(model, path: str | Path, step: int = 0) -> None:
    save_checkpoint(path, model.arch(), model.store, seed=model.seed, step=step)


def model_from_checkpoint(path: str | Path, expect_fingerprint: str | None = None):
    ckpt = load_checkpoint(path)
    if expect_fingerprint is not None and ckpt.fingerprint != expect_fingerprint:
        raise IntegrityError(
            f"architecture fingerprint mismatch: checkpoint {ckpt.fingerprint[:12]}..., "
            f"expected {expect_fingerprint[:12]}...")
    model = build_model(ckpt.arch, seed=ckpt.seed)
    restore_into(model.store, ckpt)
    return model


def param_count(model_or_store) -> int:
    """Trainable parameter count under the engine's conventions."""
    store = getattr(model_or_store, "store", model_or_store)
    return store.trainable_count()
