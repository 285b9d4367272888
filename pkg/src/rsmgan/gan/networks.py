"""Convolutional-recurrent encoders, decoder and critic."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import ConfigurationError, NetworkConfig


class ConvLSTMCell(nn.Module):
    def __init__(self, in_channels: int, hidden_channels: int, kernel_size: int = 3):
        super().__init__()
        self.hidden_channels = hidden_channels
        self.gates = nn.Conv2d(in_channels + hidden_channels, 4 * hidden_channels, kernel_size, padding=kernel_size // 2)

    def forward(self, x, state):
        h, c = state
        i, f, o, g = self.gates(torch.cat([x, h], dim=1)).chunk(4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c


def attention_fuse(hidden: torch.Tensor, bits: torch.Tensor | None, rescale: float = 5.0):
    """Similarity attention of every stacked state against the last (current) one.

    ``hidden`` is (B, N, ...) with the current step last; ``bits`` is (B, N)
    with 0 marking steps to exclude. Weights are a softmax of
    ``<H_t, H_i> / rescale`` renormalized over the kept steps; if nothing is
    kept the current step gets all the weight. Returns (fused, weights).
    """
    flat = hidden.flatten(2)
    scores = torch.einsum("bd,bnd->bn", flat[:, -1], flat) / rescale
    if bits is not None:
        keep = bits.to(torch.bool).clone()
        none = ~keep.any(dim=1)
        keep[none, -1] = True
        scores = scores.masked_fill(~keep, float("-inf"))
    weights = torch.softmax(scores, dim=1)
    fused = torch.einsum("bn,bnd->bd", weights, flat).view(hidden.shape[:1] + hidden.shape[2:])
    return fused, weights


class RecurrentEncoder(nn.Module):
    """Per-level convolution followed by a convLSTM over the stacked steps."""

    def __init__(self, in_channels: int, config: NetworkConfig):
        super().__init__()
        self.rescale = config.attention_rescale
        self.convs = nn.ModuleList()
        self.cells = nn.ModuleList()
        prev = in_channels
        for filters, kernel, stride in config.conv_layers:
            self.convs.append(nn.Conv2d(prev, filters, kernel, stride, padding=kernel // 2))
            self.cells.append(ConvLSTMCell(filters, filters, config.recurrent_kernel))
            prev = filters

    def forward(self, seq: torch.Tensor, bits: torch.Tensor | None = None):
        """``seq`` is (B, N, c, n, n). Returns (latent, fused per level, hidden sequences per level)."""
        B, N = seq.shape[:2]
        x = seq.flatten(0, 1)
        fused, hiddens = [], []
        for conv, cell in zip(self.convs, self.cells):
            x = F.selu(conv(x))
            feats = x.view(B, N, *x.shape[1:])
            h = feats.new_zeros((B, cell.hidden_channels) + feats.shape[3:])
            c = torch.zeros_like(h)
            outs = []
            for t in range(N):
                h, c = cell(feats[:, t], (h, c))
                outs.append(h)
            H = torch.stack(outs, dim=1)
            hiddens.append(H)
            fused.append(attention_fuse(H, bits, self.rescale)[0])
        return fused[-1].flatten(1), fused, hiddens


class Decoder(nn.Module):
    """Transposed convolutions from the deepest level up, each joined with the matching fused state."""

    def __init__(self, out_channels: int, n: int, config: NetworkConfig):
        super().__init__()
        sizes = config.level_sizes(n)
        filters = [f for f, _, _ in config.conv_layers]
        self.levels = len(filters)
        self.top_shape = (filters[-1], sizes[-1], sizes[-1])
        self.deconvs = nn.ModuleList()
        for lvl in reversed(range(self.levels)):
            _, kernel, stride = config.conv_layers[lvl]
            in_ch = filters[lvl] * (1 if lvl == self.levels - 1 else 2)
            out_ch = filters[lvl - 1] if lvl > 0 else out_channels
            target = sizes[lvl - 1] if lvl > 0 else n
            pad = kernel // 2
            extra = target - ((sizes[lvl] - 1) * stride - 2 * pad + kernel)
            if not 0 <= extra < max(stride, 1):
                raise ConfigurationError(f"decoder level {lvl + 1} cannot map size {sizes[lvl]} back to {target}")
            self.deconvs.append(nn.ConvTranspose2d(in_ch, out_ch, kernel, stride, pad, output_padding=extra))

    def forward(self, latent: torch.Tensor, fused: list[torch.Tensor]) -> torch.Tensor:
        x = latent.view(latent.shape[0], *self.top_shape)
        for i, deconv in enumerate(self.deconvs):
            lvl = self.levels - 1 - i
            x = deconv(x)
            if lvl > 0:
                x = torch.cat([F.selu(x), fused[lvl - 1]], dim=1)
        return x


class Critic(nn.Module):
    """Convolutional critic; ``features`` is the last convolutional activation."""

    def __init__(self, in_channels: int, n: int, config: NetworkConfig):
        super().__init__()
        layers = []
        prev, size = in_channels, n
        for i, filters in enumerate(config.critic_filters):
            stride = 1 if i == 0 else 2
            layers += [nn.Conv2d(prev, filters, 3, stride, padding=1), nn.LeakyReLU(0.2)]
            prev = filters
            size = (size - 1) // stride + 1
        self.body = nn.Sequential(*layers)
        self.head = nn.Linear(prev * size * size, 1)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.features(x).flatten(1)).squeeze(1)


class RSMGAN(nn.Module):
    """Generator (encoder + decoder), second encoder and critic for one data shape.

    Inputs are divided by a per-channel ``scale`` buffer before entering the
    networks; reconstructions come back in the same scaled units.
    """

    def __init__(self, n: int, c: int, steps: int, config: NetworkConfig):
        super().__init__()
        self.n, self.c, self.steps = n, c, steps
        self.config = config
        self.generator_encoder = RecurrentEncoder(c, config)
        self.generator_decoder = Decoder(c, n, config)
        self.encoder = RecurrentEncoder(c, config)
        self.critic = Critic(c, n, config)
        self.register_buffer("scale", torch.ones(c))

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim(self.n)

    def generator_parameters(self):
        yield from self.generator_encoder.parameters()
        yield from self.generator_decoder.parameters()
        yield from self.encoder.parameters()

    def check_input(self, seq: torch.Tensor, bits: torch.Tensor | None = None) -> None:
        expected = (self.steps, self.c, self.n, self.n)
        if seq.dim() != 5:
            raise ConfigurationError(f"expected a (batch, steps, c, n, n) tensor, got shape {tuple(seq.shape)}")
        for name, got, want in zip(("steps", "channels", "rows", "columns"), seq.shape[1:], expected):
            if got != want:
                raise ConfigurationError(f"input {name} = {got}, model expects {want}")
        if bits is not None and tuple(bits.shape) != tuple(seq.shape[:2]):
            raise ConfigurationError(f"holiday bits shape {tuple(bits.shape)} does not match {tuple(seq.shape[:2])}")

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        return x / self.scale.view(-1, 1, 1)

    def effective_bits(self, bits):
        return bits if self.config.use_holiday_bits else None

    def encode(self, seq, bits=None):
        """Latent vector, fused states and hidden sequences of G_E for a normalized stack."""
        return self.generator_encoder(seq, self.effective_bits(bits))

    def decode(self, latent, fused):
        return self.generator_decoder(latent, fused)

    def generate(self, seq, bits=None):
        """Reconstruction of the current step and the latent code, both from a normalized stack."""
        latent, fused, _ = self.encode(seq, bits)
        return self.decode(latent, fused), latent

    def reencode(self, seq, x_hat, bits=None):
        """Second encoder applied to the stack with its current step replaced by ``x_hat``."""
        swapped = torch.cat([seq[:, :-1], x_hat.unsqueeze(1)], dim=1)
        return self.encoder(swapped, self.effective_bits(bits))[0]
