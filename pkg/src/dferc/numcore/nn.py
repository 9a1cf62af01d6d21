"""Parameter containers for MLP heads and a bidirectional LSTM."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclass
class Layer:
    W: Tensor
    b: Tensor
    activation: str = "identity"

    @property
    def in_dim(self) -> int:
        return self.W.shape[0]

    @property
    def out_dim(self) -> int:
        return self.W.shape[1]


def affine(x: Tensor, layer: Layer) -> Tensor:
    """``x @ W + b`` for a batch of row vectors."""
    if x.shape[-1] != layer.in_dim:
        raise DimensionError(f"affine expects input width {layer.in_dim}, got {x.shape[-1]}")
    return T.add(T.matmul(x, layer.W), layer.b)


@dataclass
class MlpParams:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(f"MLP layers do not chain: {a.out_dim} -> {b.in_dim}")

    @classmethod
    def init(cls, rng, in_dim: int, out_dim: int, hidden: int | None = None, depth: int = 1,
             hidden_activation: str = "tanh", out_activation: str = "identity") -> "MlpParams":
        hidden = out_dim if hidden is None else hidden
        dims = [in_dim] + [hidden] * depth + [out_dim]
        layers = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            act = out_activation if i == len(dims) - 2 else hidden_activation
            layers.append(Layer(uniform_init(rng, a, (a, b)), uniform_init(rng, a, (b,)), act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = T.ACTIVATIONS[layer.activation](affine(x, layer))
        return x

    def named_parameters(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield f"{prefix}.{i}.W", layer.W
            yield f"{prefix}.{i}.b", layer.b


@dataclass
class LstmCell:
    """Gate order along the 4h axis: input, forget, output, candidate."""

    Wx: Tensor
    Wh: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.Wh.shape[0]

    @classmethod
    def init(cls, rng, in_dim: int, hidden: int) -> "LstmCell":
        return cls(uniform_init(rng, hidden, (in_dim, 4 * hidden)),
                   uniform_init(rng, hidden, (hidden, 4 * hidden)),
                   uniform_init(rng, hidden, (4 * hidden,)))

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        H = self.hidden
        gates = T.add(T.add(T.matmul(x, self.Wx), T.matmul(h, self.Wh)), self.b)
        i = T.sigmoid(gates[..., 0:H])
        f = T.sigmoid(gates[..., H:2 * H])
        o = T.sigmoid(gates[..., 2 * H:3 * H])
        g = T.tanh(gates[..., 3 * H:4 * H])
        c = T.add(T.mul(f, c), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
        return h, c


@dataclass
class BiLstmParams:
    fwd: LstmCell
    bwd: LstmCell

    def __post_init__(self):
        if self.fwd.hidden != self.bwd.hidden:
            raise DimensionError("forward and backward cells need the same hidden size")

    @classmethod
    def init(cls, rng, in_dim: int, hidden: int) -> "BiLstmParams":
        return cls(LstmCell.init(rng, in_dim, hidden), LstmCell.init(rng, in_dim, hidden))

    @property
    def hidden(self) -> int:
        return self.fwd.hidden

    def named_parameters(self, prefix: str):
        for tag, cell in (("fwd", self.fwd), ("bwd", self.bwd)):
            yield f"{prefix}.{tag}.Wx", cell.Wx
            yield f"{prefix}.{tag}.Wh", cell.Wh
            yield f"{prefix}.{tag}.b", cell.b


def bilstm_forward(seq: Tensor, p: BiLstmParams) -> Tensor:
    """Run one sequence ``[n, d]`` through both directions; returns ``[n, 2h]``."""
    n = seq.shape[0]
    if n < 1:
        raise ValueError("bilstm_forward needs a non-empty sequence")
    return bilstm_forward_padded(seq, p, [n], np.arange(n).reshape(n, 1))


def bilstm_forward_padded(flat: Tensor, p: BiLstmParams, lengths, index) -> Tensor:
    """Run a padded batch of sequences stored back to back in ``flat``.

    ``index[t, b]`` is the row of ``flat`` holding step ``t`` of sequence ``b``
    (any valid row for padded steps). Returns ``[sum(lengths), 2h]`` in the
    row order of ``flat``.
    """
    lengths = np.asarray(lengths)
    if lengths.size == 0 or lengths.min() < 1:
        raise ValueError("bilstm_forward needs non-empty sequences")
    steps, batch = index.shape
    H = p.hidden
    zeros = Tensor(np.zeros((batch, H)))
    xs = [T.take_rows(flat, index[t]) for t in range(steps)]

    h, c = zeros, zeros
    fwd_out = []
    for t in range(steps):
        h, c = p.fwd.step(xs[t], h, c)
        fwd_out.append(h)

    # padding sits at the tail, so masked steps keep the zero initial state
    # until the backward cell reaches the last real element
    h, c = zeros, zeros
    bwd_out = [None] * steps
    for t in reversed(range(steps)):
        live = (t < lengths).astype(float)[:, None]
        h_new, c_new = p.bwd.step(xs[t], h, c)
        if live.all():
            h, c = h_new, c_new
        else:
            h, c = T.mul(h_new, live), T.mul(c_new, live)
        bwd_out[t] = h

    stacked = T.concat([T.stack(fwd_out, axis=0), T.stack(bwd_out, axis=0)], axis=-1)
    rows = T.reshape(stacked, (steps * batch, 2 * H))
    gather = np.empty(int(lengths.sum()), dtype=np.intp)
    for b in range(batch):
        for t in range(int(lengths[b])):
            gather[index[t, b]] = t * batch + b
    return T.take_rows(rows, gather)
