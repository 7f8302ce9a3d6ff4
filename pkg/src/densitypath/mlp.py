"""MLP with explicitly flattened parameters.

The network weights live in a single flat vector so that spline-interpolated
parameters stay inside the differentiation graph: the forward pass slices the
vector into layers on the fly instead of owning its weights. Layout, in order:
W1 (w x d_in), b1 (w), then L-2 hidden pairs W (w x w), b (w), then the output
pair W_L (d x w), b_L (d). d_in = d+1 when the field is time-varying (tau is
appended to every row as a raw coordinate). No activation on the output layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .errors import ConfigurationError, ShapeMismatchError

DTYPE = torch.float64

_ACTIVATIONS = {
    "tanh": torch.tanh,
    "silu": torch.nn.functional.silu,
}


@dataclass(frozen=True)
class Architecture:
    """MLP shape descriptor: [input_dim, hidden_width, num_layers] plus flags.

    num_layers counts weight matrices, so the smallest legal net (L=2) is
    input layer + output layer with no hidden block. The activation must be
    smooth: the score channel differentiates the velocity field twice.
    """

    input_dim: int
    hidden_width: int
    num_layers: int
    time_varying: bool = True
    activation: str = "tanh"

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_width < 1 or self.num_layers < 2:
            raise ConfigurationError(
                f"invalid architecture [{self.input_dim},{self.hidden_width},{self.num_layers}]:"
                " need d >= 1, w >= 1, L >= 2"
            )
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(
                f"unknown activation {self.activation!r}; choose from {sorted(_ACTIVATIONS)}"
            )

    @property
    def d_in(self) -> int:
        return self.input_dim + 1 if self.time_varying else self.input_dim


def param_count(arch: Architecture) -> int:
    """Total number of scalar parameters implied by the slicing layout."""
    d, w, L = arch.input_dim, arch.hidden_width, arch.num_layers
    return w * arch.d_in + w + (L - 2) * (w * w + w) + d * w + d


def _layer_shapes(arch: Architecture) -> list[tuple[tuple[int, int], tuple[int]]]:
    d, w = arch.input_dim, arch.hidden_width
    shapes = [((w, arch.d_in), (w,))]
    shapes += [((w, w), (w,))] * (arch.num_layers - 2)
    shapes.append(((d, w), (d,)))
    return shapes


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector bound to its architecture."""

    values: torch.Tensor
    arch: Architecture = field(compare=False)

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ShapeMismatchError(f"parameter vector must be 1-D, got shape {tuple(self.values.shape)}")
        expected = param_count(self.arch)
        if self.values.numel() != expected:
            raise ShapeMismatchError(
                f"parameter vector has {self.values.numel()} entries, architecture needs {expected}"
            )
        if not torch.isfinite(self.values.detach()).all():
            raise ShapeMismatchError("parameter vector contains non-finite entries")

    @property
    def dim(self) -> int:
        return self.values.numel()


def zeros_params(arch: Architecture) -> ParamVector:
    return ParamVector(torch.zeros(param_count(arch), dtype=DTYPE), arch)


def init_params(arch: Architecture, generator: torch.Generator | None = None) -> ParamVector:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
    chunks = []
    for (w_shape, b_shape) in _layer_shapes(arch):
        fan_in = w_shape[1]
        bound = 1.0 / math.sqrt(fan_in)
        for shape in (w_shape, b_shape):
            n = math.prod(shape)
            u = torch.rand(n, dtype=DTYPE, generator=generator)
            chunks.append((2.0 * u - 1.0) * bound)
    return ParamVector(torch.cat(chunks), arch)


def unflatten_layers(values: torch.Tensor, arch: Architecture) -> list[tuple[torch.Tensor, torch.Tensor]]:
    """Slice a flat vector (or a batch of them, shape (B, D)) into (W, b) pairs."""
    batched = values.ndim == 2
    layers = []
    offset = 0
    for (w_shape, b_shape) in _layer_shapes(arch):
        nw, nb = w_shape[0] * w_shape[1], b_shape[0]
        if batched:
            W = values[:, offset:offset + nw].reshape(-1, *w_shape)
            b = values[:, offset + nw:offset + nw + nb]
        else:
            W = values[offset:offset + nw].reshape(w_shape)
            b = values[offset + nw:offset + nw + nb]
        layers.append((W, b))
        offset += nw + nb
    if offset != values.shape[-1]:
        raise ShapeMismatchError(
            f"flat vector has {values.shape[-1]} entries, layout consumes {offset}"
        )
    return layers


def flatten_layers(layers: list[tuple[torch.Tensor, torch.Tensor]]) -> torch.Tensor:
    """Inverse of unflatten_layers for unbatched layer lists."""
    parts = []
    for W, b in layers:
        parts.append(W.reshape(-1))
        parts.append(b.reshape(-1))
    return torch.cat(parts)


def mlp_forward(x: torch.Tensor, tau, theta: ParamVector) -> torch.Tensor:
    """Forward pass f(x, tau; theta) for a batch x of shape (n, d).

    tau is a scalar in [0,1] (or a per-row vector of times), appended to every
    row when the architecture is time-varying; pass None for time-invariant
    nets. Differentiable in both x and theta.values.
    """
    arch = theta.arch
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise ShapeMismatchError(
            f"expected x of shape (n, {arch.input_dim}), got {tuple(x.shape)}"
        )
    if arch.time_varying:
        if tau is None:
            raise ShapeMismatchError("time-varying architecture needs tau")
        tcol = torch.as_tensor(tau, dtype=x.dtype)
        tcol = tcol.reshape(-1, 1) if tcol.ndim > 0 else tcol.expand(x.shape[0], 1)
        if tcol.shape[0] == 1 and x.shape[0] != 1:
            tcol = tcol.expand(x.shape[0], 1)
        h = torch.cat([x, tcol.to(x.dtype)], dim=1)
    else:
        h = x
    act = _ACTIVATIONS[arch.activation]
    layers = unflatten_layers(theta.values, arch)
    for W, b in layers[:-1]:
        h = act(h @ W.T + b)
    W, b = layers[-1]
    return h @ W.T + b


def mlp_forward_stacked(x: torch.Tensor, taus: torch.Tensor, values: torch.Tensor,
                        arch: Architecture) -> torch.Tensor:
    """Forward pass under B independent parameter vectors at once.

    x: (B, n, d); taus: (B,); values: (B, D). Row block b is evaluated under
    values[b] at time taus[b]. Equivalent to looping mlp_forward over b but
    issues one matmul per layer, which is what makes evaluating a whole time
    grid affordable.
    """
    if x.ndim != 3 or x.shape[2] != arch.input_dim:
        raise ShapeMismatchError(f"expected x of shape (B, n, {arch.input_dim}), got {tuple(x.shape)}")
    if values.ndim != 2 or values.shape[0] != x.shape[0]:
        raise ShapeMismatchError("values must be (B, D) with B matching x")
    if arch.time_varying:
        tcol = taus.to(x.dtype).reshape(-1, 1, 1).expand(x.shape[0], x.shape[1], 1)
        h = torch.cat([x, tcol], dim=2)
    else:
        h = x
    act = _ACTIVATIONS[arch.activation]
    layers = unflatten_layers(values, arch)
    for W, b in layers[:-1]:
        h = act(torch.einsum("bnk,bwk->bnw", h, W) + b.unsqueeze(1))
    W, b = layers[-1]
    return torch.einsum("bnk,bwk->bnw", h, W) + b.unsqueeze(1)
