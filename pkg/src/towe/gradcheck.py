"""Central-difference gradient checking for modules and functions."""

from __future__ import annotations

from typing import Callable, Iterable

import torch


def numeric_grad(f: Callable[[], torch.Tensor], t: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    g = torch.zeros_like(t)
    flat, gflat = t.data.view(-1), g.view(-1)
    with torch.no_grad():
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + eps
            plus = f().item()
            flat[i] = old - eps
            minus = f().item()
            flat[i] = old
            gflat[i] = (plus - minus) / (2 * eps)
    return g


def relative_error(a: torch.Tensor, b: torch.Tensor, floor: float = 1e-4) -> float:
    """||a - b|| / max(||a|| + ||b||, floor).

    The floor keeps gradients that vanish analytically (e.g. attention key
    biases, which softmax ignores) from turning round-off into a relative error of 1.
    """
    denom = max((a.norm() + b.norm()).item(), floor)
    return (a - b).norm().item() / denom


def check_gradients(f: Callable[[], torch.Tensor], tensors: Iterable[tuple[str, torch.Tensor]],
                    eps: float = 1e-6) -> dict[str, float]:
    """Relative error between autograd and central differences for each named tensor.

    ``f`` recomputes a scalar from the current tensor values; tensors should be
    float64 leaves with ``requires_grad`` set.
    """
    tensors = list(tensors)
    for _, t in tensors:
        t.grad = None
    f().backward()
    errors = {}
    for name, t in tensors:
        analytic = t.grad.detach().clone() if t.grad is not None else torch.zeros_like(t)
        errors[name] = relative_error(analytic, numeric_grad(f, t, eps))
    return errors


def check_module(module: torch.nn.Module, x: torch.Tensor, forward: Callable | None = None,
                 eps: float = 1e-6) -> dict[str, float]:
    """Gradient check of sum(module(x)) w.r.t. every trainable parameter and ``x``."""
    module = module.double()
    x = x.double().detach().requires_grad_(True)
    forward = forward or module
    named = [(n, p) for n, p in module.named_parameters() if p.requires_grad] + [("input", x)]
    return check_gradients(lambda: forward(x).sum(), named, eps)
