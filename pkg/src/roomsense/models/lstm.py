"""Recurrent classifier: one LSTM layer, last-step readout, dropout, linear head."""

from __future__ import annotations

import numpy as np

from ..nn import Dense, Dropout, Lstm, ParamStore
from ..nn.layers import sigmoid, softmax_over_classes
from ..rng import Rng
from .config import LstmConfig


class LstmClassifier:
    kind = "lstm"

    def __init__(self, config: LstmConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.store = ParamStore()
        rng = Rng(seed)
        self.lstm = Lstm(self.store, "lstm", config.in_channels, config.hidden, rng,
                         bidirectional=config.bidirectional, return_sequence=False)
        width = config.hidden * (2 if config.bidirectional else 1)
        self.dropout = Dropout(config.dropout, rng.spawn(1))
        self.head = Dense(self.store, "head", width, config.classes, rng)
        self._hidden: np.ndarray | None = None

    def arch(self) -> dict:
        return self.config.to_arch()

    def set_rng(self, rng: Rng) -> None:
        self.dropout.rng = rng

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._hidden = self.lstm.forward(x)
        return self.head.forward(self.dropout.forward(self._hidden, train))

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        dh = self.dropout.backward(self.head.backward(dlogits))
        return self.lstm.backward(dh)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits = self.forward(x, train=False)
        if self.config.head_mode == "single_label":
            return softmax_over_classes(logits)
        return sigmoid(logits)

    def feature_space(self, x: np.ndarray) -> np.ndarray:
        """Last hidden state (concatenated over directions), eval mode."""
        self.forward(x, train=False)
        return self._hidden


def build_lstm_classifier(config: LstmConfig, seed: int = 0) -> LstmClassifier:
    return LstmClassifier(config, seed)
