"""Recurrent autoencoder and the frozen-encoder classifier built from it.

Encoder: three stacked sequence-to-sequence LSTM layers; the latent code is
the last-step hidden state of the third. Decoder: the latent vector repeated
across the window feeds three stacked LSTM layers in mirrored sizes, followed
by a per-step dense map back to the input channels.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..nn import Dense, Lstm, ParamStore
from ..nn.checkpoint import Checkpoint
from ..nn.layers import Relu, sigmoid, softmax_over_classes
from ..rng import Rng
from .config import AutoencoderConfig, HeadConfig

_ENCODER_PREFIX = "enc"


def _build_encoder(store: ParamStore, config: AutoencoderConfig, rng: Rng) -> list[Lstm]:
    layers = []
    in_ch = config.in_channels
    sizes = config.encoder_sizes
    for i, h in enumerate(sizes):
        last = i == len(sizes) - 1
        layers.append(Lstm(store, f"{_ENCODER_PREFIX}{i}", in_ch, h, rng,
                           return_sequence=not last))
        in_ch = h
    return layers


class RecurrentAutoencoder:
    kind = "autoencoder"

    def __init__(self, config: AutoencoderConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.store = ParamStore()
        rng = Rng(seed)
        self.encoder = _build_encoder(self.store, config, rng)
        self.decoder: list[Lstm] = []
        in_ch = config.latent
        for i, h in enumerate(config.decoder_sizes):
            self.decoder.append(Lstm(self.store, f"dec{i}", in_ch, h, rng,
                                     return_sequence=True))
            in_ch = h
        self.out_dense = Dense(self.store, "out", in_ch, config.in_channels, rng)
        self._length: int | None = None
        self._latent: np.ndarray | None = None

    def arch(self) -> dict:
        return self.config.to_arch()

    def set_rng(self, rng: Rng) -> None:
        pass

    def encode(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.encoder[:-1]:
            x = layer.forward(x)
        return self.encoder[-1].forward(x)

    def decode(self, z: np.ndarray, length: int) -> np.ndarray:
        x = np.repeat(z[:, :, None], length, axis=2)
        for layer in self.decoder:
            x = layer.forward(x)
        n, c, _ = x.shape
        flat = np.ascontiguousarray(np.moveaxis(x, 1, 2)).reshape(n * length, c)
        out = self.out_dense.forward(flat)
        return np.moveaxis(out.reshape(n, length, -1), 2, 1)

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._length = x.shape[2]
        self._latent = self.encode(x, train)
        return self.decode(self._latent, self._length)

    def backward(self, drecon: np.ndarray) -> np.ndarray:
        n, _, length = drecon.shape
        dflat = np.ascontiguousarray(np.moveaxis(drecon, 1, 2)).reshape(n * length, -1)
        dx = self.out_dense.backward(dflat)
        dx = np.moveaxis(dx.reshape(n, length, -1), 2, 1)
        for layer in reversed(self.decoder):
            dx = layer.backward(dx)
        dz = dx.sum(axis=2)  # repeated latent collects gradient from every step
        dx = self.encoder[-1].backward(dz)
        for layer in reversed(self.encoder[:-1]):
            dx = layer.backward(dx)
        return dx

    def feature_space(self, x: np.ndarray) -> np.ndarray:
        return self.encode(x)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        raise ConfigError("an autoencoder has no classification head")


class EncoderClassifier:
    """Frozen stacked-LSTM encoder with a trainable two-layer head."""

    kind = "encoder_classifier"

    def __init__(self, ae_config: AutoencoderConfig, head: HeadConfig, seed: int = 0,
                 encoder_buffers: dict[str, np.ndarray] | None = None):
        self.ae_config = ae_config
        self.head_config = head
        self.config = head  # head_mode lives here
        self.seed = seed
        self.store = ParamStore()
        rng = Rng(seed)
        self.encoder = _build_encoder(self.store, ae_config, rng)
        if encoder_buffers is not None:
            for name, value in encoder_buffers.items():
                if name in self.store:
                    self.store[name].value[...] = value
        self.store.set_trainable(False, prefix=_ENCODER_PREFIX)
        self.fc1 = Dense(self.store, "head.fc1", ae_config.latent, head.hidden, rng)
        self.act = Relu()
        self.fc2 = Dense(self.store, "head.fc2", head.hidden, head.classes, rng)
        self._latent: np.ndarray | None = None

    def arch(self) -> dict:
        return {"kind": "encoder_classifier",
                "autoencoder": self.ae_config.to_arch(),
                "head": self.head_config.to_arch()}

    def set_rng(self, rng: Rng) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        z = x
        for layer in self.encoder[:-1]:
            z = layer.forward(z)
        self._latent = self.encoder[-1].forward(z)
        return self.fc2.forward(self.act.forward(self.fc1.forward(self._latent)))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        # encoder is frozen; gradient stops at the latent code
        return self.fc1.backward(self.act.backward(self.fc2.backward(dlogits)))

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits = self.forward(x, train=False)
        if self.head_config.head_mode == "single_label":
            return softmax_over_classes(logits)
        return sigmoid(logits)

    def feature_space(self, x: np.ndarray) -> np.ndarray:
        self.forward(x, train=False)
        return self._latent


def build_autoencoder(config: AutoencoderConfig, seed: int = 0) -> RecurrentAutoencoder:
    return RecurrentAutoencoder(config, seed)


def build_encoder_classifier(source: RecurrentAutoencoder | Checkpoint,
                             head: HeadConfig, seed: int = 0) -> EncoderClassifier:
    """Copy a trained encoder (model or checkpoint) under a trainable head."""
    if isinstance(source, RecurrentAutoencoder):
        ae_config = source.config
        buffers = {p.name: p.value for p in source.store
                   if p.name.startswith(_ENCODER_PREFIX)}
    else:
        if source.arch.get("kind") != "autoencoder":
            raise ConfigError(
                f"encoder classifier needs an autoencoder checkpoint, got {source.arch.get('kind')!r}")
        a = source.arch
        ae_config = AutoencoderConfig(a["in_channels"], tuple(a["encoder_hidden"]),
                                      a["latent"], a["window"])
        buffers = {name: value for name, value in source.buffers.items()
                   if name.startswith(_ENCODER_PREFIX)}
    return EncoderClassifier(ae_config, head, seed=seed, encoder_buffers=buffers)
