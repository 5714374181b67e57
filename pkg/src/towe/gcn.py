"""Residual graph convolution over dependency trees: H' = ReLU(A H W) + H."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .corpus import ROOT, Instance, PreconditionError


def build_adjacency(instance: Instance) -> np.ndarray:
    """Symmetric 0/1 matrix of undirected dependency edges with self-loops."""
    heads = instance.heads
    if any(h is None for h in heads):
        raise PreconditionError("instance has no dependency heads")
    n = len(heads)
    a = np.eye(n, dtype=np.float32)
    for i, h in enumerate(heads):
        if h != ROOT:
            a[i, h] = a[h, i] = 1.0
    return a


def batch_adjacency(instances, n: int, dtype=torch.float32) -> torch.Tensor:
    """Stack adjacency matrices zero-padded to ``n`` tokens."""
    out = torch.zeros(len(instances), n, n, dtype=dtype)
    for k, inst in enumerate(instances):
        a = build_adjacency(inst)
        out[k, : len(a), : len(a)] = torch.from_numpy(a)
    return out


def normalize_adjacency(a: torch.Tensor) -> torch.Tensor:
    """D^-1/2 A D^-1/2; not used by default."""
    deg = a.sum(-1).clamp(min=1.0)
    inv = deg.rsqrt()
    return inv.unsqueeze(-1) * a * inv.unsqueeze(-2)


def gcn_layer(h: torch.Tensor, a: torch.Tensor, w: torch.Tensor) -> torch.Tensor:
    if h.shape[-2] != a.shape[-1] or a.shape[-1] != a.shape[-2] or w.shape != (h.shape[-1], h.shape[-1]):
        raise ValueError(f"shape mismatch: H {tuple(h.shape)}, A {tuple(a.shape)}, W {tuple(w.shape)}")
    return torch.relu(a @ h @ w) + h


class GCN(nn.Module):
    def __init__(self, dim: int, layers: int, normalize: bool = False):
        super().__init__()
        self.normalize = normalize
        self.weights = nn.ParameterList(nn.Parameter(torch.empty(dim, dim)) for _ in range(layers))
        for w in self.weights:
            nn.init.xavier_uniform_(w)

    @property
    def layers(self) -> int:
        return len(self.weights)

    def forward(self, h, a):
        if self.normalize:
            a = normalize_adjacency(a)
        for w in self.weights:
            h = gcn_layer(h, a, w)
        return h


def gcn_stack(h0: torch.Tensor, a: torch.Tensor, weights) -> torch.Tensor:
    """K sequential residual layers; an empty weight list returns ``h0``."""
    h = h0
    for w in weights:
        h = gcn_layer(h, a, w)
    return h
