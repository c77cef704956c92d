"""Model hyperparameters with the defaults used for distance-3 training."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs for :class:`~windec_trainer.model.WindowDecoder`.

    ``d_model`` must be divisible by ``n_head`` so attention heads split
    the feature dimension evenly.
    """

    d_model: int = 192          # feature width per lattice site
    n_head: int = 8             # attention heads
    rnn_layers: int = 3         # transformer layers applied per round
    ff_mult: int = 5            # feedforward hidden width multiplier
    conv_depth: int = 3         # dilated-convolution stack depth
    pooling: str = "mean"       # readout pooling over the collapsed axis

    def __post_init__(self):
        if self.d_model <= 0 or self.n_head <= 0:
            raise ValueError("d_model and n_head must be positive")
        if self.d_model % self.n_head:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_head {self.n_head}")
        if self.rnn_layers < 1 or self.conv_depth < 0 or self.ff_mult < 1:
            raise ValueError("layer counts out of range")
        if self.pooling not in ("mean", "max"):
            raise ValueError(f"unknown pooling mode {self.pooling!r}")
