"""Fully connected networks and the structured output heads.

Hidden layers are affine-then-tanh, the output layer is affine only; the
activation choice keeps every vector field C-infinity, which matters because
the fields are differentiated again inside the dynamics.  Evaluation is
generic over plain arrays, tape nodes and duals (see :mod:`.diffkit`), and
batch aware: an input of shape ``(B, in)`` gives ``(B, out)``.

Weight initialization is uniform in ``±sqrt(6/(fan_in+fan_out))`` with zero
biases; the source experiments do not pin an initialization, so this is an
artifact default (documented here and in the README).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import diffkit as dk
from .errors import ContractError


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths, input and output included: ``(in, h1, ..., out)``."""

    widths: tuple[int, ...]

    def __post_init__(self):
        if len(self.widths) < 3:
            raise ContractError("MlpSpec needs at least one hidden layer")
        if any(w < 1 for w in self.widths):
            raise ContractError("MlpSpec widths must be >= 1")

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def n_params(self) -> int:
        return sum((i + 1) * o for i, o in zip(self.widths[:-1], self.widths[1:]))


@dataclass
class MlpParams:
    """Per-layer weight matrices ``(fan_in, fan_out)`` and bias vectors.

    Entries are numpy arrays in normal use; the trainer substitutes tape
    nodes of the same shapes when differentiating.
    """

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @property
    def widths(self) -> tuple[int, ...]:
        ws = [np.shape(w)[0] for w in self.weights]
        ws.append(np.shape(self.weights[-1])[1])
        return tuple(ws)

    def n_params(self) -> int:
        return sum(int(np.size(w)) + int(np.size(b))
                   for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpParams":
        return MlpParams([np.array(w) for w in self.weights],
                         [np.array(b) for b in self.biases])

    def arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @staticmethod
    def from_arrays(arrays: list) -> "MlpParams":
        return MlpParams(list(arrays[0::2]), list(arrays[1::2]))


def init_params(spec: MlpSpec, seed: int) -> MlpParams:
    """Deterministic fan-based uniform init (biases zero)."""
    rng = np.random.default_rng(seed)
    params = MlpParams()
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.biases.append(np.zeros(fan_out))
    return params


def mlp_eval(params: MlpParams, x):
    """Run the net on ``x`` of shape ``(..., in)``; returns ``(..., out)``."""
    w0 = params.weights[0]
    in_dim = (w0.value if isinstance(w0, dk.ADValue) else np.asarray(w0)).shape[0]
    x_dim = _last_dim(x)
    if x_dim != in_dim:
        raise ContractError(f"mlp input width {x_dim} != expected {in_dim}")
    n_layers = len(params.weights)
    h = x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = dk.matmul(h, w) + b
        if i < n_layers - 1:
            h = dk.tanh(h)
    return h


def _last_dim(x) -> int:
    if isinstance(x, dk.Dual):
        return _last_dim(x.primal)
    if isinstance(x, dk.ADValue):
        return x.value.shape[-1]
    return np.shape(np.asarray(x))[-1]


def scalar_eval(params: MlpParams, coords):
    """Scalar-output net: shape ``(..., 1)`` squeezed to ``(...,)``."""
    y = mlp_eval(params, coords)
    return _squeeze_scalar(y)


def _squeeze_scalar(y):
    shape = _shape_of(y)
    if shape[-1] != 1:
        raise ContractError(f"expected single-output net, got width {shape[-1]}")
    return dk.reshape(y, shape[:-1])


def _shape_of(y):
    if isinstance(y, dk.Dual):
        return _shape_of(y.primal)
    if isinstance(y, dk.ADValue):
        return y.value.shape
    return np.shape(np.asarray(y))


potential_eval = scalar_eval


def input_matrix_eval(params: MlpParams, coords, n: int, m: int):
    """Net output ``(..., n*m)`` reshaped row-major into ``(..., n, m)``."""
    y = mlp_eval(params, coords)
    shape = _shape_of(y)
    if shape[-1] != n * m:
        raise ContractError(f"input-matrix net emits {shape[-1]} values, need {n * m}")
    return dk.reshape(y, shape[:-1] + (n, m))


@dataclass
class MassInvHead:
    """Cholesky-parametrized inverse mass matrix: ``L L^T + eps I``.

    The backing net emits the ``n(n+1)/2`` lower-triangle entries; the
    epsilon shift keeps every eigenvalue at least ``epsilon`` so the matrix
    stays invertible whatever the net does.
    """

    net: MlpParams
    dim: int
    epsilon: float = 0.01

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ContractError("MassInvHead epsilon must be > 0")


def mass_inv(head: MassInvHead, coords):
    """Evaluate the head at ``coords``; returns ``(..., n, n)``, SPD."""
    n = head.dim
    raw = mlp_eval(head.net, coords)
    shape = _shape_of(raw)
    if shape[-1] != n * (n + 1) // 2:
        raise ContractError(
            f"mass-inv net emits {shape[-1]} values, need {n * (n + 1) // 2}")
    L = dk.fill_lower_triangular(raw, n)
    return dk.matmul(L, dk.transpose_last(L)) + np.eye(n) * head.epsilon


# -- flatten helpers (grad checks, statistics) ------------------------------


def flatten_params(params: MlpParams) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in params.arrays()])


def unflatten_params(template: MlpParams, flat) -> MlpParams:
    out = MlpParams()
    pos = 0
    for w, b in zip(template.weights, template.biases):
        wn = np.size(w)
        out.weights.append(np.reshape(np.asarray(flat[pos:pos + wn]), np.shape(w)))
        pos += wn
        bn = np.size(b)
        out.biases.append(np.reshape(np.asarray(flat[pos:pos + bn]), np.shape(b)))
        pos += bn
    return out


# -- checkpoints -------------------------------------------------------------
# JSON with repr-style floats: round-trips finite doubles exactly (shortest
# decimal representation, <= 17 significant digits).


def params_to_dict(params: MlpParams) -> dict:
    return {
        "widths": list(params.widths),
        "layers": [{"w": w.tolist(), "b": b.tolist()}
                   for w, b in zip(params.weights, params.biases)],
    }


def params_from_dict(d: dict) -> MlpParams:
    params = MlpParams()
    for layer in d["layers"]:
        params.weights.append(np.asarray(layer["w"], dtype=float))
        params.biases.append(np.asarray(layer["b"], dtype=float))
    return params


def save_checkpoint(path, params: MlpParams, seed=None, head: dict | None = None,
                    epsilon: float | None = None):
    doc = {"spec": list(params.widths), "seed": seed}
    if head is not None:
        doc["head"] = head
    if epsilon is not None:
        doc["epsilon"] = epsilon
    doc.update(params_to_dict(params))
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path) -> MlpParams:
    with open(path) as fh:
        doc = json.load(fh)
    return params_from_dict(doc)
