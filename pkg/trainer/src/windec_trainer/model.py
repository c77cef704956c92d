"""Recurrent transformer over detector-event lattices.

One model instance is built for a single code distance ``d``.  Each
syndrome round is a (d+1) x (d+1) bit image; sites are flattened
row-major into a length ``(d+1)**2`` token sequence.  Per round the
embedder lifts bits to ``d_model`` features, a fixed sinusoidal code
marks the site position, and the recurrent core mixes the new round
into the running decoder state.  The readout turns the final state into
one logit for the window's logical-flip bit.

All BatchNorm layers run with ``track_running_stats=False``: nothing is
carried between calls, so a forward pass is a pure function of its
batch, while normalization statistics always come from the batch at
hand (in eval mode too).
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .config import ModelConfig

SQRT_HALF = math.sqrt(0.5)


def sinusoidal_encoding(length: int, d_model: int,
                        dtype=torch.float32) -> torch.Tensor:
    """(length, d_model) table: sin at even features, cos at odd ones.

    Feature pair ``2i, 2i+1`` oscillates with angle
    ``t / 10000**(2i / d_model)`` at position ``t``.
    """
    pe = torch.zeros(length, d_model, dtype=torch.float64)
    t = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    i2 = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = t / torch.pow(10000.0, i2 / d_model)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : d_model // 2])
    return pe.to(dtype)


class StabilizerEmbedder(nn.Module):
    """Per-site lift to d_model, a Conv1d residual block, then the
    positional code (the residual block runs before the code is added)."""

    def __init__(self, cfg: ModelConfig, grid: int):
        super().__init__()
        dm = cfg.d_model
        self.grid = grid
        self.lift = nn.Linear(1, dm)
        self.conv1 = nn.Conv1d(dm, dm, kernel_size=3, padding=1)
        self.bn1 = nn.BatchNorm1d(dm, track_running_stats=False)
        self.conv2 = nn.Conv1d(dm, dm, kernel_size=3, padding=1)
        self.bn2 = nn.BatchNorm1d(dm, track_running_stats=False)
        self.register_buffer(
            "pos", sinusoidal_encoding(grid * grid, dm), persistent=False)

    def forward(self, events: torch.Tensor) -> torch.Tensor:
        w = self.grid * self.grid
        if events.dim() == 3:
            events = events.reshape(events.shape[0], w)
        if events.dim() != 2 or events.shape[1] != w:
            raise ValueError(
                f"expected (batch, {w}) events, got {tuple(events.shape)}")
        x = self.lift(events.to(self.pos.dtype).unsqueeze(-1))  # (B, W, dm)
        h = x.transpose(1, 2)                                   # (B, dm, W)
        r = self.bn2(self.conv2(torch.relu(self.bn1(self.conv1(h)))))
        h = torch.relu(h + r).transpose(1, 2)
        return h + self.pos


class SyndromeTransformer(nn.Module):
    """Attention over sites, a widened feedforward, then a stack of
    dilated 2-D convolutions over the lattice image."""

    def __init__(self, cfg: ModelConfig, grid: int):
        super().__init__()
        dm = cfg.d_model
        self.grid = grid
        self.norm_attn = nn.LayerNorm(dm)
        self.attn = nn.MultiheadAttention(dm, cfg.n_head, batch_first=True)
        self.norm_ff = nn.LayerNorm(dm)
        self.ff = nn.Sequential(
            nn.Linear(dm, cfg.ff_mult * dm),
            nn.ReLU(),
            nn.Linear(cfg.ff_mult * dm, dm),
        )
        convs, norms = [], []
        for j in range(cfg.conv_depth):
            dil = 2 ** j
            convs.append(nn.Conv2d(dm, dm, kernel_size=3,
                                   padding=dil, dilation=dil))
            norms.append(nn.BatchNorm2d(dm, track_running_stats=False))
        self.convs = nn.ModuleList(convs)
        self.conv_norms = nn.ModuleList(norms)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm_attn(x)
        a, _ = self.attn(h, h, h, need_weights=False)
        x = x + a
        x = x + self.ff(self.norm_ff(x))
        b, w, dm = x.shape
        g = x.transpose(1, 2).reshape(b, dm, self.grid, self.grid)
        for conv, norm in zip(self.convs, self.conv_norms):
            g = torch.relu(g + norm(conv(g)))
        return g.reshape(b, dm, w).transpose(1, 2)


class RNNCore(nn.Module):
    """The per-round state update: a fixed stack of syndrome transformers
    applied to the scaled sum of the new round and the previous state."""

    def __init__(self, cfg: ModelConfig, grid: int):
        super().__init__()
        self.layers = nn.ModuleList(
            SyndromeTransformer(cfg, grid) for _ in range(cfg.rnn_layers))

    def forward(self, s: torch.Tensor, d_prev: torch.Tensor) -> torch.Tensor:
        x = (s + d_prev) * SQRT_HALF
        for layer in self.layers:
            x = layer(x)
        return x


class Readout(nn.Module):
    """Shrink the lattice by an unpadded 2x2 convolution, collapse the
    axis perpendicular to the logical operator, and project to one logit.

    The logical operator runs along a data row, so the row axis is the
    one collapsed, leaving ``d`` column positions of ``d_model`` features.
    """

    def __init__(self, cfg: ModelConfig, grid: int):
        super().__init__()
        dm = cfg.d_model
        self.grid = grid
        self.pooling = cfg.pooling
        self.conv = nn.Conv2d(dm, dm, kernel_size=2)
        self.norm = nn.BatchNorm2d(dm, track_running_stats=False)
        self.lin = nn.Linear((grid - 1) * dm, 1)

    def forward(self, state: torch.Tensor) -> torch.Tensor:
        b, w, dm = state.shape
        if w != self.grid * self.grid:
            raise ValueError(
                f"expected {self.grid * self.grid} sites, got {w}")
        g = state.transpose(1, 2).reshape(b, dm, self.grid, self.grid)
        g = torch.relu(self.norm(self.conv(g)))        # (B, dm, d, d)
        if self.pooling == "mean":
            pooled = g.mean(dim=2)                     # collapse rows
        else:
            pooled = g.amax(dim=2)
        return self.lin(pooled.transpose(1, 2).flatten(1)).squeeze(-1)


class WindowDecoder(nn.Module):
    """Full decoder for one window: embed each round, update the state
    recurrently, read the final (or any requested) state out as a logit."""

    def __init__(self, cfg: ModelConfig, distance: int):
        super().__init__()
        if distance < 3 or distance % 2 == 0:
            raise ValueError(f"distance must be odd and >= 3, got {distance}")
        self.cfg = cfg
        self.distance = distance
        self.grid = distance + 1
        self.embed = StabilizerEmbedder(cfg, self.grid)
        self.core = RNNCore(cfg, self.grid)
        self.readout = Readout(cfg, self.grid)

    def init_state(self, batch: int, like: torch.Tensor) -> torch.Tensor:
        w = self.grid * self.grid
        return torch.zeros(batch, w, self.cfg.d_model,
                           dtype=self.embed.pos.dtype, device=like.device)

    def rnn_step(self, s: torch.Tensor, d_prev: torch.Tensor) -> torch.Tensor:
        if s.shape != d_prev.shape:
            raise ValueError(
                f"round {tuple(s.shape)} vs state {tuple(d_prev.shape)}")
        return self.core(s, d_prev)

    def forward(self, windows: torch.Tensor,
                readout_steps=None) -> torch.Tensor:
        """Logits for a batch of windows shaped (B, depth, d+1, d+1).

        With ``readout_steps`` (1-indexed round numbers, ascending) the
        result is (B, len(steps)): the state is read out after consuming
        each requested round.  Otherwise the final state alone is read,
        giving shape (B,).
        """
        if windows.dim() != 4 or windows.shape[2] != self.grid \
                or windows.shape[3] != self.grid:
            raise ValueError(
                f"expected (B, depth, {self.grid}, {self.grid}), "
                f"got {tuple(windows.shape)}")
        depth = windows.shape[1]
        if readout_steps is not None:
            steps = list(readout_steps)
            if not steps or steps != sorted(steps) or steps[0] < 1 \
                    or steps[-1] > depth:
                raise ValueError(f"bad readout steps {steps} for depth {depth}")
        state = self.init_state(windows.shape[0], windows)
        outs = []
        for n in range(1, depth + 1):
            s = self.embed(windows[:, n - 1])
            state = self.rnn_step(s, state)
            if readout_steps is not None and n in steps:
                outs.append(self.readout(state))
        if readout_steps is None:
            return self.readout(state)
        return torch.stack(outs, dim=1)

    @torch.no_grad()
    def predict_proba(self, windows: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.forward(windows))


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
