"""Text encoders mapping (batch, n, d) features to (batch, n, h) hidden states.

Every encoder takes an optional boolean ``mask`` (batch, n); padded positions
never influence real ones.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .config import EncoderConfig


def _full_mask(x: torch.Tensor) -> torch.Tensor:
    return torch.ones(x.shape[:2], dtype=torch.bool, device=x.device)


def xavier_(module: nn.Module):
    for name, p in module.named_parameters():
        if p.dim() >= 2:
            nn.init.xavier_uniform_(p)
        elif "bias" in name:
            nn.init.zeros_(p)


class CNNEncoder(nn.Module):
    """One convolution per window width over the token axis, zero padded so
    that every token gets an output; per-width features are concatenated."""

    def __init__(self, input_dim: int, cfg: EncoderConfig):
        super().__init__()
        self.widths = tuple(cfg.cnn_filter_widths)
        self.convs = nn.ModuleList(nn.Conv1d(input_dim, cfg.cnn_channels, w) for w in self.widths)
        self.output_dim = cfg.cnn_channels * len(self.widths)
        xavier_(self)

    def pre_activation(self, x, mask=None):
        mask = _full_mask(x) if mask is None else mask
        x = (x * mask.unsqueeze(-1).to(x.dtype)).transpose(1, 2)  # (b, d, n)
        outs = []
        for w, conv in zip(self.widths, self.convs):
            # window for token i covers [i - (w-1)//2, i + w//2]
            padded = F.pad(x, ((w - 1) // 2, w // 2))
            outs.append(conv(padded))
        return torch.cat(outs, dim=1).transpose(1, 2)

    def forward(self, x, mask=None):
        return torch.tanh(self.pre_activation(x, mask))


class SelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x, mask):
        b, n, dim = x.shape
        hd = dim // self.heads

        def split(t):
            return t.view(b, n, self.heads, hd).transpose(1, 2)  # (b, heads, n, hd)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        scores = scores.masked_fill(~mask[:, None, None, :], float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, n, dim)
        return self.out(ctx), attn


class TransformerLayer(nn.Module):
    """Post-norm encoder layer: attention and ReLU feed-forward sublayers."""

    def __init__(self, dim: int, heads: int, ff_dim: int, dropout: float):
        super().__init__()
        self.attn = SelfAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.ReLU(), nn.Linear(ff_dim, dim))
        self.norm2 = nn.LayerNorm(dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, mask):
        a, weights = self.attn(x, mask)
        x = self.norm1(x + self.drop(a))
        x = self.norm2(x + self.drop(self.ff(x)))
        return x, weights


class TransformerEncoder(nn.Module):
    def __init__(self, input_dim: int, cfg: EncoderConfig):
        super().__init__()
        self.proj = nn.Linear(input_dim, cfg.hidden_dim)
        self.layers = nn.ModuleList(
            TransformerLayer(cfg.hidden_dim, cfg.transformer_heads, cfg.transformer_ff_dim, cfg.transformer_dropout)
            for _ in range(cfg.transformer_layers))
        self.output_dim = cfg.hidden_dim
        xavier_(self)
        for m in self.modules():
            if isinstance(m, nn.LayerNorm):
                nn.init.ones_(m.weight)

    def forward(self, x, mask=None, return_attention: bool = False):
        mask = _full_mask(x) if mask is None else mask
        h = self.proj(x)
        attentions = []
        for layer in self.layers:
            h, w = layer(h, mask)
            attentions.append(w)
        h = h * mask.unsqueeze(-1).to(h.dtype)
        return (h, attentions) if return_attention else h


def _init_lstm_bias(bias: torch.Tensor, hidden: int, forget_slice: slice):
    with torch.no_grad():
        bias.zero_()
        bias[forget_slice] = 1.0


class BiLSTMEncoder(nn.Module):
    def __init__(self, input_dim: int, cfg: EncoderConfig):
        super().__init__()
        h = cfg.hidden_dim
        self.lstm = nn.LSTM(input_dim, h, batch_first=True, bidirectional=True)
        self.output_dim = 2 * h
        xavier_(self)
        # gate order in torch is (input, forget, cell, output); one bias per direction gets the +1
        for suffix in ("", "_reverse"):
            _init_lstm_bias(getattr(self.lstm, "bias_ih_l0" + suffix), h, slice(h, 2 * h))
            nn.init.zeros_(getattr(self.lstm, "bias_hh_l0" + suffix))

    def forward(self, x, mask=None):
        mask = _full_mask(x) if mask is None else mask
        lengths = mask.sum(1).cpu()
        packed = pack_padded_sequence(x, lengths, batch_first=True, enforce_sorted=False)
        out, _ = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        return out


def cumax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return torch.cumsum(torch.softmax(x, dim=dim), dim=dim)


class ONLSTMCell(nn.Module):
    """Ordered-neurons LSTM cell.

    Master forget/input gates live at chunk resolution (hidden/chunk_size
    entries) and are repeated over the units of each chunk.
    """

    def __init__(self, input_dim: int, hidden: int, chunk_size: int):
        super().__init__()
        if hidden % chunk_size:
            raise ValueError(f"chunk size {chunk_size} does not divide hidden size {hidden}")
        self.hidden = hidden
        self.chunk_size = chunk_size
        self.n_chunks = hidden // chunk_size
        out = 4 * hidden + 2 * self.n_chunks
        self.ih = nn.Linear(input_dim, out)
        self.hh = nn.Linear(hidden, out, bias=False)
        xavier_(self)
        with torch.no_grad():
            c = self.n_chunks
            self.ih.bias[2 * c + hidden: 2 * c + 2 * hidden] = 1.0  # forget gate

    def gates(self, x, h):
        g = self.ih(x) + self.hh(h)
        c, hid = self.n_chunks, self.hidden
        master_f = cumax(g[:, :c])
        master_i = 1.0 - cumax(g[:, c:2 * c])
        i, f, o, cell = g[:, 2 * c:].split(hid, dim=1)
        expand = lambda t: t.repeat_interleave(self.chunk_size, dim=1)  # noqa: E731
        return expand(master_f), expand(master_i), torch.sigmoid(i), torch.sigmoid(f), torch.sigmoid(o), torch.tanh(cell)

    def forward(self, x, state):
        h, c_prev = state
        mf, mi, i, f, o, cand = self.gates(x, h)
        overlap = mf * mi
        f_hat = f * overlap + (mf - overlap)
        i_hat = i * overlap + (mi - overlap)
        c = f_hat * c_prev + i_hat * cand
        h = o * torch.tanh(c)
        return h, c


def reverse_padded(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Reverse each sequence within its own length; padding stays at the end."""
    n = x.shape[1]
    lengths = mask.sum(1, keepdim=True)
    pos = torch.arange(n, device=x.device).unsqueeze(0)
    idx = torch.where(pos < lengths, lengths - 1 - pos, pos)
    return x.gather(1, idx.unsqueeze(-1).expand_as(x))


class ONLSTMEncoder(nn.Module):
    def __init__(self, input_dim: int, cfg: EncoderConfig):
        super().__init__()
        self.fwd = ONLSTMCell(input_dim, cfg.hidden_dim, cfg.onlstm_chunk_size)
        self.bwd = ONLSTMCell(input_dim, cfg.hidden_dim, cfg.onlstm_chunk_size)
        self.output_dim = 2 * cfg.hidden_dim

    @staticmethod
    def _run(cell, x, mask):
        b, n, _ = x.shape
        h = x.new_zeros(b, cell.hidden)
        c = x.new_zeros(b, cell.hidden)
        outs = []
        for t in range(n):
            h_new, c_new = cell(x[:, t], (h, c))
            m = mask[:, t].unsqueeze(-1).to(x.dtype)
            h = m * h_new + (1 - m) * h
            c = m * c_new + (1 - m) * c
            outs.append(h_new * m)
        return torch.stack(outs, dim=1)

    def forward(self, x, mask=None):
        mask = _full_mask(x) if mask is None else mask
        forward = self._run(self.fwd, x, mask)
        backward = reverse_padded(self._run(self.bwd, reverse_padded(x, mask), mask), mask)
        return torch.cat([forward, backward], dim=-1)


ENCODERS = {
    "cnn": CNNEncoder,
    "transformer": TransformerEncoder,
    "bilstm": BiLSTMEncoder,
    "onlstm": ONLSTMEncoder,
}


def build_encoder(cfg: EncoderConfig, input_dim: int) -> nn.Module:
    cfg.validate()
    return ENCODERS[cfg.kind](input_dim, cfg)


def encode(encoder: nn.Module, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Apply an encoder to a single (n, d) matrix or a (batch, n, d) tensor."""
    single = x.dim() == 2
    if single:
        x = x.unsqueeze(0)
        mask = None if mask is None else mask.unsqueeze(0)
    h = encoder(x, mask)
    return h[0] if single else h
