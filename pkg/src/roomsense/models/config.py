"""Declarative architecture configs and their JSON forms."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError

HEAD_MODES = ("multi_label", "single_label")


def _check_head_mode(mode: str) -> None:
    if mode not in HEAD_MODES:
        raise ConfigError(f"head_mode must be one of {HEAD_MODES}, got {mode!r}")


@dataclass(frozen=True)
class FcnConfig:
    """Stack of conv+batchnorm+relu blocks, global average pooling, linear head."""

    in_channels: int
    filters: tuple[int, ...] = (128, 256, 128)
    kernels: tuple[int, ...] = (8, 5, 3)
    classes: int = 2
    head_mode: str = "multi_label"

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if len(self.filters) != len(self.kernels) or not self.filters:
            raise ConfigError("filters and kernels must have equal length >= 1")
        _check_head_mode(self.head_mode)

    def to_arch(self) -> dict:
        return {"kind": "fcn", "in_channels": self.in_channels,
                "filters": list(self.filters), "kernels": list(self.kernels),
                "classes": self.classes, "head_mode": self.head_mode}


@dataclass(frozen=True)
class LstmConfig:
    """Single recurrent layer, last-step readout, dropout, linear head."""

    in_channels: int
    hidden: int = 100
    bidirectional: bool = False
    dropout: float = 0.0
    classes: int = 2
    head_mode: str = "multi_label"

    def __post_init__(self):
        if self.hidden < 1:
            raise ConfigError("hidden size must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError("dropout must be in [0, 1)")
        _check_head_mode(self.head_mode)

    def to_arch(self) -> dict:
        return {"kind": "lstm", "in_channels": self.in_channels, "hidden": self.hidden,
                "bidirectional": self.bidirectional, "dropout": self.dropout,
                "classes": self.classes, "head_mode": self.head_mode}


@dataclass(frozen=True)
class InceptionConfig:
    """Bottlenecked multi-scale conv modules with residual shortcuts every 3."""

    in_channels: int
    filters: int = 32
    bottleneck: int = 32
    branch_kernels: tuple[int, ...] = (10, 20, 40)
    depth: int = 6
    ensemble: int = 5
    classes: int = 2
    head_mode: str = "multi_label"

    def __post_init__(self):
        object.__setattr__(self, "branch_kernels", tuple(self.branch_kernels))
        if self.depth % 3 != 0 or self.depth < 3:
            raise ConfigError("depth must be a positive multiple of 3")
        if self.ensemble < 1:
            raise ConfigError("ensemble size must be >= 1")
        _check_head_mode(self.head_mode)

    def to_arch(self) -> dict:
        return {"kind": "inception", "in_channels": self.in_channels,
                "filters": self.filters, "bottleneck": self.bottleneck,
                "branch_kernels": list(self.branch_kernels), "depth": self.depth,
                "ensemble": self.ensemble, "classes": self.classes,
                "head_mode": self.head_mode}


@dataclass(frozen=True)
class AutoencoderConfig:
    """Stacked-LSTM encoder {h1, h2, latent}; decoder mirrors {latent, h2, h1}."""

    in_channels: int = 17
    encoder_hidden: tuple[int, ...] = (128, 64)
    latent: int = 10
    window: int = 7

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden", tuple(self.encoder_hidden))
        if self.latent < 1 or any(h < 1 for h in self.encoder_hidden):
            raise ConfigError("hidden and latent sizes must be >= 1")
        if self.window < 1:
            raise ConfigError("window length must be >= 1")

    @property
    def encoder_sizes(self) -> tuple[int, ...]:
        return (*self.encoder_hidden, self.latent)

    @property
    def decoder_sizes(self) -> tuple[int, ...]:
        return (self.latent, *reversed(self.encoder_hidden))

    def to_arch(self) -> dict:
        return {"kind": "autoencoder", "in_channels": self.in_channels,
                "encoder_hidden": list(self.encoder_hidden), "latent": self.latent,
                "window": self.window}


@dataclass(frozen=True)
class HeadConfig:
    """Shallow classifier on top of a frozen encoder."""

    hidden: int = 100
    classes: int = 2
    head_mode: str = "multi_label"

    def __post_init__(self):
        if self.hidden < 1:
            raise ConfigError("head hidden size must be >= 1")
        _check_head_mode(self.head_mode)

    def to_arch(self) -> dict:
        return {"hidden": self.hidden, "classes": self.classes,
                "head_mode": self.head_mode}


def config_from_arch(arch: dict):
    kind = arch.get("kind")
    if kind == "fcn":
        return FcnConfig(arch["in_channels"], tuple(arch["filters"]),
                         tuple(arch["kernels"]), arch["classes"], arch["head_mode"])
    if kind == "lstm":
        return LstmConfig(arch["in_channels"], arch["hidden"], arch["bidirectional"],
                          arch["dropout"], arch["classes"], arch["head_mode"])
    if kind == "inception":
        return InceptionConfig(arch["in_channels"], arch["filters"], arch["bottleneck"],
                               tuple(arch["branch_kernels"]), arch["depth"],
                               arch["ensemble"], arch["classes"], arch["head_mode"])
    if kind == "autoencoder":
        return AutoencoderConfig(arch["in_channels"], tuple(arch["encoder_hidden"]),
                                 arch["latent"], arch["window"])
    if kind == "encoder_classifier":
        return (
            AutoencoderConfig(arch["autoencoder"]["in_channels"],
                              tuple(arch["autoencoder"]["encoder_hidden"]),
                              arch["autoencoder"]["latent"],
                              arch["autoencoder"]["window"]),
            HeadConfig(arch["head"]["hidden"], arch["head"]["classes"],
                       arch["head"]["head_mode"]),
        )
    raise ConfigError(f"unknown architecture kind {kind!r}")
