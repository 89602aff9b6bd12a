"""Inception-style multi-scale convolutional classifier.

Each module pushes its input through a kernel-1 bottleneck, applies three
parallel convolutions of different kernel sizes to the bottleneck output plus
a maxpool->kernel-1-conv branch on the raw input, concatenates the four
branches, and finishes with batch norm and relu. Every third module the block
input is added to the module output (through a kernel-1 conv when channel
counts differ); the sum passes through unchanged, so zeroed module weights
leave only the shortcut signal.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..nn import BatchNorm1d, Conv1d, Dense, GlobalAvgPool, MaxPool1dSame, ParamStore, Relu
from ..nn.layers import sigmoid, softmax_over_classes
from ..rng import Rng, derive_seed
from .config import InceptionConfig


class _InceptionModule:
    def __init__(self, store: ParamStore, name: str, in_channels: int, nf: int,
                 bottleneck: int, branch_kernels: tuple[int, ...], rng: Rng):
        self.bottleneck = Conv1d(store, f"{name}.bottleneck", in_channels, bottleneck, 1, rng)
        self.branches = [
            Conv1d(store, f"{name}.branch{i}", bottleneck, nf, k, rng)
            for i, k in enumerate(branch_kernels)
        ]
        self.pool = MaxPool1dSame()
        self.pool_conv = Conv1d(store, f"{name}.pool_conv", in_channels, nf, 1, rng)
        self.bn = BatchNorm1d(store, f"{name}.bn", nf * (len(branch_kernels) + 1))
        self.act = Relu()
        self.nf = nf

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        b = self.bottleneck.forward(x)
        outs = [conv.forward(b) for conv in self.branches]
        outs.append(self.pool_conv.forward(self.pool.forward(x)))
        cat = np.concatenate(outs, axis=1)
        return self.act.forward(self.bn.forward(cat, train))

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dcat = self.bn.backward(self.act.backward(dout))
        nf = self.nf
        db = None
        for i, conv in enumerate(self.branches):
            piece = conv.backward(dcat[:, i * nf:(i + 1) * nf])
            db = piece if db is None else db + piece
        k = len(self.branches)
        dx_pool = self.pool.backward(self.pool_conv.backward(dcat[:, k * nf:(k + 1) * nf]))
        return self.bottleneck.backward(db) + dx_pool


class InceptionNetwork:
    kind = "inception"

    def __init__(self, config: InceptionConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.store = ParamStore()
        rng = Rng(seed)
        width = config.filters * (len(config.branch_kernels) + 1)
        self.modules: list[_InceptionModule] = []
        self.shortcuts: dict[int, Conv1d | None] = {}
        in_ch = config.in_channels
        block_in = config.in_channels
        for d in range(config.depth):
            self.modules.append(_InceptionModule(
                self.store, f"module{d}", in_ch, config.filters,
                config.bottleneck, config.branch_kernels, rng))
            in_ch = width
            if d % 3 == 2:
                if block_in != width:
                    self.shortcuts[d] = Conv1d(self.store, f"shortcut{d}",
                                               block_in, width, 1, rng)
                else:
                    self.shortcuts[d] = None
                block_in = width
        self.gap = GlobalAvgPool()
        self.head = Dense(self.store, "head", width, config.classes, rng)
        self._features: np.ndarray | None = None

    def arch(self) -> dict:
        return self.config.to_arch()

    def set_rng(self, rng: Rng) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"inception expected {self.config.in_channels} channels, got {x.shape[1]}")
        res = x
        for d, mod in enumerate(self.modules):
            x = mod.forward(x, train)
            if d % 3 == 2:
                sc = self.shortcuts[d]
                x = x + (res if sc is None else sc.forward(res))
                res = x
        self._features = self.gap.forward(x)
        return self.head.forward(self._features)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        dx = self.gap.backward(self.head.backward(dlogits))
        pending: list[np.ndarray] = []
        for d in range(self.config.depth - 1, -1, -1):
            if d % 3 == 2:
                sc = self.shortcuts[d]
                pending.append(dx if sc is None else sc.backward(dx))
            dx = self.modules[d].backward(dx)
            if d % 3 == 0:
                dx = dx + pending.pop()
        return dx

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits = self.forward(x, train=False)
        if self.config.head_mode == "single_label":
            return softmax_over_classes(logits)
        return sigmoid(logits)

    def feature_space(self, x: np.ndarray) -> np.ndarray:
        self.forward(x, train=False)
        return self._features


def build_inception(config: InceptionConfig, seed: int = 0) -> InceptionNetwork:
    return InceptionNetwork(config, seed)


def build_inception_ensemble(config: InceptionConfig, seed: int = 0) -> list[InceptionNetwork]:
    """Independently initialized member networks (derived seeds)."""
    return [InceptionNetwork(config, derive_seed(seed, i)) for i in range(config.ensemble)]


def ensemble_predict(models: list, x: np.ndarray) -> np.ndarray:
    """Average the head probabilities of the member networks."""
    probs = [m.predict_proba(x) for m in models]
    return np.mean(probs, axis=0)
