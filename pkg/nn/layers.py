"""
Residual MLP with hand-written backward passes.

Topology: input projection, n residual blocks, output projection. A block maps
h to h + relu(layer_norm(h W + b)). All functions operate on batches of row
vectors; a 1-D input is treated as a batch of one.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigurationError, InternalError, NumericError
from nn.params import ParamLayout, Params

LAYER_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ResidualMlpSpec:
    input_dim: int
    output_dim: int
    hidden_width: int = 64
    n_blocks: int = 4

    def __post_init__(self):
        if min(self.input_dim, self.output_dim, self.hidden_width) < 1:
            raise ConfigurationError(f"layer widths must be positive: {self}")
        if self.n_blocks < 1:
            raise ConfigurationError("n_blocks must be >= 1")


def linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def linear_backward(x: np.ndarray, w: np.ndarray, grad_y: np.ndarray):
    """Returns (grad_x, grad_w, grad_b)."""
    return grad_y @ w.T, x.T @ grad_y, grad_y.sum(axis=0)


def layer_norm_forward(z: np.ndarray, gain: np.ndarray, offset: np.ndarray, eps: float = LAYER_NORM_EPS):
    mean = z.mean(axis=-1, keepdims=True)
    centered = z - mean
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    return normed * gain + offset, (normed, inv_std, gain)


def layer_norm_backward(grad_y: np.ndarray, cache):
    """Returns (grad_z, grad_gain, grad_offset)."""
    normed, inv_std, gain = cache
    width = normed.shape[-1]
    grad_normed = grad_y * gain
    grad_z = (inv_std / width) * (
        width * grad_normed
        - grad_normed.sum(axis=-1, keepdims=True)
        - normed * (grad_normed * normed).sum(axis=-1, keepdims=True)
    )
    return grad_z, (grad_y * normed).sum(axis=0), grad_y.sum(axis=0)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    return grad_y * (x > 0)


@dataclass
class Tape:
    """Intermediates of one forward pass."""

    x: np.ndarray
    single: bool
    block_inputs: List[np.ndarray] = field(default_factory=list)
    block_caches: List[tuple] = field(default_factory=list)
    last_hidden: Optional[np.ndarray] = None


def build_layout(spec: ResidualMlpSpec) -> ParamLayout:
    layout = ParamLayout()
    layout.add("input/w", (spec.input_dim, spec.hidden_width))
    layout.add("input/b", (spec.hidden_width,))
    for i in range(spec.n_blocks):
        layout.add(f"block{i}/w", (spec.hidden_width, spec.hidden_width))
        layout.add(f"block{i}/b", (spec.hidden_width,))
        layout.add(f"block{i}/ln_gain", (spec.hidden_width,))
        layout.add(f"block{i}/ln_offset", (spec.hidden_width,))
    layout.add("output/w", (spec.hidden_width, spec.output_dim))
    layout.add("output/b", (spec.output_dim,))
    return layout


def init_params(spec: ResidualMlpSpec, rng: np.random.Generator, output_scale: float = 1.0) -> Params:
    """Fan-in scaled uniform weights, zero biases, unit layer-norm gains."""
    params = Params(build_layout(spec))
    for name in params.layout.names():
        view = params.view(name)
        if name.endswith("/w"):
            bound = 1.0 / np.sqrt(view.shape[0])
            if name == "output/w":
                bound *= output_scale
            view[...] = rng.uniform(-bound, bound, size=view.shape)
        elif name.endswith("/ln_gain"):
            view[...] = 1.0
    return params


def forward(spec: ResidualMlpSpec, params: Params, x: np.ndarray) -> Tuple[np.ndarray, Tape]:
    """
    Run the network.

    Args:
        spec: network shape
        params: parameters laid out by build_layout(spec)
        x: (input_dim,) or (B, input_dim)

    Returns:
        (output, tape); output keeps the batch-ness of x
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    if batch.shape[-1] != spec.input_dim:
        raise ConfigurationError(f"input dimension {batch.shape[-1]} does not match spec {spec.input_dim}")
    if not np.all(np.isfinite(batch)):
        raise NumericError("network input contains non-finite values")

    tape = Tape(x=batch, single=single)
    h = linear_forward(batch, params.view("input/w"), params.view("input/b"))
    for i in range(spec.n_blocks):
        tape.block_inputs.append(h)
        z = linear_forward(h, params.view(f"block{i}/w"), params.view(f"block{i}/b"))
        u, ln_cache = layer_norm_forward(z, params.view(f"block{i}/ln_gain"), params.view(f"block{i}/ln_offset"))
        tape.block_caches.append((ln_cache, u))
        h = h + relu_forward(u)
    tape.last_hidden = h
    out = linear_forward(h, params.view("output/w"), params.view("output/b"))
    return (out[0] if single else out), tape


def backward(spec: ResidualMlpSpec, params: Params, tape: Tape, output_gradient: np.ndarray, return_input_grad: bool = False):
    """
    Reverse-mode gradient of the forward map.

    Returns:
        flat parameter gradient (same layout as params), plus the input
        gradient when return_input_grad is set
    """
    grad_out = np.atleast_2d(np.asarray(output_gradient, dtype=np.float64))
    if grad_out.shape != (tape.x.shape[0], spec.output_dim):
        raise InternalError(f"output gradient shape {grad_out.shape} does not match tape")

    grads = params.zeros_like()
    dh, dw, db = linear_backward(tape.last_hidden, params.view("output/w"), grad_out)
    params.view("output/w", grads)[...] = dw
    params.view("output/b", grads)[...] = db

    for i in reversed(range(spec.n_blocks)):
        ln_cache, u = tape.block_caches[i]
        h = tape.block_inputs[i]
        du = relu_backward(u, dh)
        dz, dgain, doffset = layer_norm_backward(du, ln_cache)
        dh_block, dw, db = linear_backward(h, params.view(f"block{i}/w"), dz)
        params.view(f"block{i}/w", grads)[...] = dw
        params.view(f"block{i}/b", grads)[...] = db
        params.view(f"block{i}/ln_gain", grads)[...] = dgain
        params.view(f"block{i}/ln_offset", grads)[...] = doffset
        dh = dh + dh_block

    dx, dw, db = linear_backward(tape.x, params.view("input/w"), dh)
    params.view("input/w", grads)[...] = dw
    params.view("input/b", grads)[...] = db
    if return_input_grad:
        return grads, (dx[0] if tape.single else dx)
    return grads


def activation_pattern(tape: Tape) -> np.ndarray:
    """Signs of every rectifier input; finite differences are only valid where this does not change."""
    if not tape.block_caches:
        return np.zeros(0, dtype=bool)
    return np.concatenate([(u > 0).ravel() for _, u in tape.block_caches])
