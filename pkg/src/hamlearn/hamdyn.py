"""Right-hand-side vector fields for every model variant.

Variants
--------
``sym_rn``        structured model on (q, p): three nets (inverse mass,
                  potential, input matrix), symplectic-gradient dynamics.
``sym_embedded``  same structure, angles observed as (cos q, sin q, q_dot).
``sym_hybrid``    translations + angles: state (r, cos phi, sin phi, r_dot,
                  phi_dot).
``unstructured``  monolithic Hamiltonian net on the same geometric
                  scaffolding (embedded tasks keep an inverse-mass head just
                  for the momentum <-> velocity conversion).
``naive``         monolithic net (state, u) -> state derivative.
``geometric``     net emits (q_dot, p_dot); the embedding chain rule and the
                  inverse-mass head map those onto the observed state.

All coordinate partials are taken in forward mode with duals seeded over the
coordinate inputs; because ``H = 1/2 p^T Minv(q) p + V(q)`` for structured
variants, the momentum partial is the closed form ``Minv p``.  The time
derivative of the inverse mass matrix is the jvp along the already-computed
embedded-coordinate velocities, assembled by linearity from the same basis
tangents (no extra network pass, no symbolic expansion).

States are flat vectors, shape ``(d,)`` or batched ``(B, d)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import diffkit as dk
from . import netcore as nc
from .errors import ContractError, UnsupportedQueryError

SYM_RN = "sym_rn"
SYM_EMBEDDED = "sym_embedded"
SYM_HYBRID = "sym_hybrid"
UNSTRUCTURED = "unstructured"
NAIVE = "naive"
GEOMETRIC = "geometric"

VARIANTS = (SYM_RN, SYM_EMBEDDED, SYM_HYBRID, UNSTRUCTURED, NAIVE, GEOMETRIC)

# model families selectable per task (the structured family resolves to the
# rn/embedded/hybrid variant matching the task's coordinate type)
FAMILIES = ("symoden", "unstructured", "naive", "geometric")


@dataclass(frozen=True)
class Dims:
    """n translational coordinates, m angles, k control channels."""

    n: int
    m: int
    k: int

    @property
    def nq(self) -> int:
        return self.n + self.m

    def state_dim(self, variant: str) -> int:
        if variant in (SYM_RN,) or (variant in (UNSTRUCTURED, NAIVE) and self.m == 0):
            return 2 * self.n
        return self.n + 2 * self.m + self.nq


@dataclass
class NetComponent:
    """A trainable net plus the head transform applied to its output."""

    params: nc.MlpParams
    head: str                 # "mass_inv" | "scalar" | "matrix" | "raw"
    epsilon: float = 0.01     # mass_inv only
    rows: int = 0             # matrix only
    cols: int = 0


@dataclass
class AnalyticComponent:
    """Closed-form stand-in satisfying a net component's interface.

    ``fn`` must be written with :mod:`.diffkit` generic ops so it evaluates
    under plain arrays, duals and tape nodes alike.  Not serializable; these
    are oracles and truth wrappers, not learnable models.
    """

    fn: Callable


class ModelBundle:
    """A tagged set of components constituting one dynamics model."""

    def __init__(self, variant: str, dims: Dims, components: dict):
        if variant not in VARIANTS:
            raise ContractError(f"unknown variant {variant!r}")
        _check_components(variant, dims, components)
        self.variant = variant
        self.dims = dims
        self.components = components

    # -- parameters ---------------------------------------------------------

    def _net_names(self) -> list[str]:
        return sorted(name for name, c in self.components.items()
                      if isinstance(c, NetComponent))

    def parameter_arrays(self) -> list[np.ndarray]:
        out = []
        for name in self._net_names():
            out.extend(self.components[name].params.arrays())
        return out

    def set_parameter_arrays(self, arrays: list):
        arrays = list(arrays)
        pos = 0
        for name in self._net_names():
            comp = self.components[name]
            count = 2 * len(comp.params.weights)
            comp.params = nc.MlpParams.from_arrays(arrays[pos:pos + count])
            pos += count
        if pos != len(arrays):
            raise ContractError("parameter array count mismatch")

    def n_params(self) -> int:
        return sum(self.components[n].params.n_params() for n in self._net_names())

    def copy(self) -> "ModelBundle":
        comps = {}
        for name, c in self.components.items():
            if isinstance(c, NetComponent):
                comps[name] = NetComponent(c.params.copy(), c.head, c.epsilon,
                                           c.rows, c.cols)
            else:
                comps[name] = c
        return ModelBundle(self.variant, self.dims, comps)

    def lifted(self, tape: dk.Tape) -> tuple["ModelBundle", list[dk.ADValue]]:
        """Copy whose net parameters are tape leaves (canonical order)."""
        leaves = []
        comps = {}
        for name in sorted(self.components):
            c = self.components[name]
            if isinstance(c, NetComponent):
                lifted_arrays = [tape.leaf(a, label=f"{name}[{i}]")
                                 for i, a in enumerate(c.params.arrays())]
                leaves.extend(lifted_arrays)
                comps[name] = NetComponent(nc.MlpParams.from_arrays(lifted_arrays),
                                           c.head, c.epsilon, c.rows, c.cols)
            else:
                comps[name] = c
        return ModelBundle(self.variant, self.dims, comps), leaves

    # -- component evaluation ------------------------------------------------

    def _eval(self, name: str, x):
        comp = self.components[name]
        if isinstance(comp, AnalyticComponent):
            return comp.fn(x)
        if comp.head == "mass_inv":
            head = nc.MassInvHead(comp.params, self.dims.nq, comp.epsilon)
            return nc.mass_inv(head, x)
        if comp.head == "scalar":
            return nc.scalar_eval(comp.params, x)
        if comp.head == "matrix":
            return nc.input_matrix_eval(comp.params, x, comp.rows, comp.cols)
        return nc.mlp_eval(comp.params, x)

    def mass_inv(self, coords):
        return self._eval("mass_inv", coords)

    def potential(self, coords):
        return self._eval("potential", coords)

    def input_matrix(self, coords):
        return self._eval("input", coords)

    def hamiltonian_net(self, z):
        return self._eval("hamiltonian", z)

    def fnet(self, z):
        return self._eval("fnet", z)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        comps = {}
        for name, c in self.components.items():
            if isinstance(c, AnalyticComponent):
                raise ContractError("analytic components are not serializable")
            comps[name] = dict(nc.params_to_dict(c.params), head=c.head,
                               epsilon=c.epsilon, rows=c.rows, cols=c.cols)
        return {"variant": self.variant,
                "dims": {"n": self.dims.n, "m": self.dims.m, "k": self.dims.k},
                "components": comps}

    @staticmethod
    def from_dict(doc: dict) -> "ModelBundle":
        dims = Dims(**doc["dims"])
        comps = {}
        for name, c in doc["components"].items():
            comps[name] = NetComponent(nc.params_from_dict(c), c["head"],
                                       c.get("epsilon", 0.01),
                                       c.get("rows", 0), c.get("cols", 0))
        return ModelBundle(doc["variant"], dims, comps)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)

    @staticmethod
    def load(path) -> "ModelBundle":
        with open(path) as fh:
            return ModelBundle.from_dict(json.load(fh))


_REQUIRED = {
    SYM_RN: {"mass_inv", "potential", "input"},
    SYM_EMBEDDED: {"mass_inv", "potential", "input"},
    SYM_HYBRID: {"mass_inv", "potential", "input"},
    NAIVE: {"fnet"},
    GEOMETRIC: {"mass_inv", "fnet"},
}


def _check_components(variant, dims, components):
    if variant == UNSTRUCTURED:
        need = {"hamiltonian", "input"} | ({"mass_inv"} if dims.m > 0 else set())
    else:
        need = _REQUIRED[variant]
    have = set(components)
    if have != need:
        raise ContractError(
            f"variant {variant} needs components {sorted(need)}, got {sorted(have)}")


# -- vector fields -----------------------------------------------------------


def _as_dual(x) -> dk.Dual:
    return x if isinstance(x, dk.Dual) else dk.Dual(x, None)


def _dirs_to_vec(stack):
    """(k_dirs, ...) tangent stack -> (..., k_dirs) coordinate vector."""
    shape = dk._val_of(stack).shape
    if len(shape) == 1:
        return stack
    if len(shape) == 2:
        return dk.transpose_last(stack)
    raise ContractError("states must be (d,) or (B, d)")


def _quad_tangent(minv_tangent, p):
    """d/d(dir_i) of p^T Minv p at fixed p, for each direction i."""
    if minv_tangent is None:
        return 0.0
    mp = dk.matvec(minv_tangent, p)           # (k, ..., n)
    return dk.asum(mp * p, axis=-1)           # (k, ...)


def _contract_dirs(tangent_stack, weights):
    """Sum_i weights[..., i] * tangent_stack[i] -> jvp along ``weights``."""
    if tangent_stack is None:
        return None
    w = _dirs_to_vec_inv(weights)             # (k, ...) from (..., k)
    wshape = dk._val_of(w).shape
    w = dk.reshape(w, wshape + (1, 1))
    return dk.asum(tangent_stack * w, axis=0)


def _dirs_to_vec_inv(vec):
    shape = dk._val_of(vec).shape
    if len(shape) == 1:
        return vec
    if len(shape) == 2:
        return dk.transpose_last(vec)
    raise ContractError("states must be (d,) or (B, d)")


def _coord_partials(model, coords):
    """Dual-evaluate the mass-inv head and potential over coordinate basis
    directions; returns (minv dual, potential dual)."""
    cd = dk.seed_duals(coords)
    return _as_dual(model.mass_inv(cd)), _as_dual(model.potential(cd))


def _hamiltonian_coord_grad(minv_d, pot_d, p, coords):
    pt = pot_d.tangent
    if minv_d.tangent is None and pt is None:
        # fully constant stand-in: flat energy landscape
        return np.zeros(dk._val_of(coords).shape)
    dH = 0.5 * _quad_tangent(minv_d.tangent, p) + (pt if pt is not None else 0.0)
    return _dirs_to_vec(dH)


def vector_field_rn(model: ModelBundle, q, p, u):
    """Structured field on (q, p): returns ``(q_dot, p_dot)``."""
    if model.variant != SYM_RN:
        raise ContractError(f"vector_field_rn needs {SYM_RN}, got {model.variant}")
    _check_widths(q, p, u, model.dims.n, model.dims.n, model.dims.k)
    minv_d, pot_d = _coord_partials(model, q)
    minv = minv_d.primal
    dHdq = _hamiltonian_coord_grad(minv_d, pot_d, p, q)
    qdot = dk.matvec(minv, p)
    gu = dk.matvec(model.input_matrix(q), u)
    return qdot, -dHdq + gu


def vector_field_embedded(model: ModelBundle, x1, x2, x3, u):
    """Structured field on (cos q, sin q, q_dot): returns the three slots."""
    if model.variant != SYM_EMBEDDED:
        raise ContractError(
            f"vector_field_embedded needs {SYM_EMBEDDED}, got {model.variant}")
    m = model.dims.m
    _check_widths(x1, x2, x3, m, m, m)
    coords = dk.concat([x1, x2], -1)
    minv_d, pot_d = _coord_partials(model, coords)
    minv = minv_d.primal
    p = dk.solve_spd(minv, x3)                 # p = M x3 via the PD factor
    qdot = dk.matvec(minv, p)
    x1dot = -(x2 * qdot)
    x2dot = x1 * qdot
    dH = _hamiltonian_coord_grad(minv_d, pot_d, p, coords)
    dHdx1 = dH[..., :m]
    dHdx2 = dH[..., m:]
    gu = dk.matvec(model.input_matrix(coords), u)
    pdot = x2 * dHdx1 - x1 * dHdx2 + gu
    cdot = dk.concat([x1dot, x2dot], -1)
    dminv_dt = _contract_dirs(minv_d.tangent, cdot)
    x3dot = dk.matvec(minv, pdot)
    if dminv_dt is not None:
        x3dot = dk.matvec(dminv_dt, p) + x3dot
    return x1dot, x2dot, x3dot


def vector_field_hybrid(model: ModelBundle, x1, x2, x3, x4, x5, u):
    """Structured field on (r, cos phi, sin phi, r_dot, phi_dot)."""
    if model.variant != SYM_HYBRID:
        raise ContractError(
            f"vector_field_hybrid needs {SYM_HYBRID}, got {model.variant}")
    n, m = model.dims.n, model.dims.m
    _check_widths(x1, x2, x3, n, m, m)
    _check_widths(x4, x5, u, n, m, model.dims.k)
    coords = dk.concat([x1, x2, x3], -1)
    vel = dk.concat([x4, x5], -1)
    minv_d, pot_d = _coord_partials(model, coords)
    minv = minv_d.primal
    p = dk.solve_spd(minv, vel)
    qdot = dk.matvec(minv, p)
    rdot = qdot[..., :n]
    phidot = qdot[..., n:]
    x2dot = -(x3 * phidot)
    x3dot = x2 * phidot
    dH = _hamiltonian_coord_grad(minv_d, pot_d, p, coords)
    dHdx1 = dH[..., :n]
    dHdx2 = dH[..., n:n + m]
    dHdx3 = dH[..., n + m:]
    gu = dk.matvec(model.input_matrix(coords), u)
    pdot = dk.concat([-dHdx1 + gu[..., :n],
                      x3 * dHdx2 - x2 * dHdx3 + gu[..., n:]], -1)
    cdot = dk.concat([rdot, x2dot, x3dot], -1)
    dminv_dt = _contract_dirs(minv_d.tangent, cdot)
    veldot = dk.matvec(minv, pdot)
    if dminv_dt is not None:
        veldot = dk.matvec(dminv_dt, p) + veldot
    return rdot, x2dot, x3dot, veldot


def vector_field_unstructured(model: ModelBundle, state, u):
    """Monolithic-Hamiltonian field on the task's state layout."""
    if model.variant != UNSTRUCTURED:
        raise ContractError(
            f"vector_field_unstructured needs {UNSTRUCTURED}, got {model.variant}")
    n, m = model.dims.n, model.dims.m
    if m == 0:
        q = state[..., :n]
        p = state[..., n:]
        zd = dk.seed_duals(dk.concat([q, p], -1))
        H_d = _as_dual(model.hamiltonian_net(zd))
        dH = _dirs_to_vec(H_d.tangent)
        dHdq = dH[..., :n]
        dHdp = dH[..., n:]
        gu = dk.matvec(model.input_matrix(q), u)
        return dk.concat([dHdp, -dHdq + gu], -1)

    parts = split_state(model.dims, state)
    coords = dk.concat(parts[:-1] if n == 0 else parts[:3], -1)
    vel = parts[-1] if n == 0 else dk.concat(parts[3:], -1)
    if n == 0:
        x1, x2 = parts[0], parts[1]
    else:
        x2, x3 = parts[1], parts[2]
    cd = dk.seed_duals(coords)
    minv_d = _as_dual(model.mass_inv(cd))
    minv = minv_d.primal
    p = dk.solve_spd(minv, vel)
    zd = dk.seed_duals(dk.concat([coords, p], -1))
    H_d = _as_dual(model.hamiltonian_net(zd))
    dH = _dirs_to_vec(H_d.tangent)
    nc_ = n + 2 * m
    dHc = dH[..., :nc_]
    dHdp = dH[..., nc_:]
    qdot = dHdp
    gu = dk.matvec(model.input_matrix(coords), u)
    if n == 0:
        dHdx1 = dHc[..., :m]
        dHdx2 = dHc[..., m:]
        x1dot = -(x2 * qdot)
        x2dot = x1 * qdot
        pdot = x2 * dHdx1 - x1 * dHdx2 + gu
        cdot = dk.concat([x1dot, x2dot], -1)
        emb = [x1dot, x2dot]
    else:
        dHdx1 = dHc[..., :n]
        dHdx2 = dHc[..., n:n + m]
        dHdx3 = dHc[..., n + m:]
        rdot = qdot[..., :n]
        phidot = qdot[..., n:]
        x2dot = -(x3 * phidot)
        x3dot = x2 * phidot
        pdot = dk.concat([-dHdx1 + gu[..., :n],
                          x3 * dHdx2 - x2 * dHdx3 + gu[..., n:]], -1)
        cdot = dk.concat([rdot, x2dot, x3dot], -1)
        emb = [rdot, x2dot, x3dot]
    dminv_dt = _contract_dirs(minv_d.tangent, cdot)
    veldot = dk.matvec(minv, pdot)
    if dminv_dt is not None:
        veldot = dk.matvec(dminv_dt, p) + veldot
    return dk.concat(emb + [veldot], -1)


def vector_field_naive(model: ModelBundle, state, u):
    if model.variant != NAIVE:
        raise ContractError(f"vector_field_naive needs {NAIVE}, got {model.variant}")
    return model.fnet(dk.concat(_common_batch([state, u]), -1))


def vector_field_geometric(model: ModelBundle, state, u):
    """Net q_dot/p_dot estimates pushed through the embedding chain rule."""
    if model.variant != GEOMETRIC:
        raise ContractError(
            f"vector_field_geometric needs {GEOMETRIC}, got {model.variant}")
    n, m = model.dims.n, model.dims.m
    parts = split_state(model.dims, state)
    coords = dk.concat(parts[:-1] if n == 0 else parts[:3], -1)
    vel = parts[-1] if n == 0 else dk.concat(parts[3:], -1)
    out = model.fnet(dk.concat(_common_batch([state, u]), -1))
    nq = n + m
    qdot_hat = out[..., :nq]
    pdot_hat = out[..., nq:]
    cd = dk.seed_duals(coords)
    minv_d = _as_dual(model.mass_inv(cd))
    minv = minv_d.primal
    p = dk.solve_spd(minv, vel)
    if n == 0:
        x1, x2 = parts[0], parts[1]
        x1dot = -(x2 * qdot_hat)
        x2dot = x1 * qdot_hat
        cdot = dk.concat([x1dot, x2dot], -1)
        emb = [x1dot, x2dot]
    else:
        x2, x3 = parts[1], parts[2]
        rdot = qdot_hat[..., :n]
        phidot = qdot_hat[..., n:]
        x2dot = -(x3 * phidot)
        x3dot = x2 * phidot
        cdot = dk.concat([rdot, x2dot, x3dot], -1)
        emb = [rdot, x2dot, x3dot]
    dminv_dt = _contract_dirs(minv_d.tangent, cdot)
    veldot = dk.matvec(minv, pdot_hat)
    if dminv_dt is not None:
        veldot = dk.matvec(dminv_dt, p) + veldot
    return dk.concat(emb + [veldot], -1)


def split_state(dims: Dims, state) -> list:
    """Cut a flat state into its layout parts (excluding control)."""
    n, m = dims.n, dims.m
    if m == 0:
        return [state[..., :n], state[..., n:]]
    if n == 0:
        return [state[..., :m], state[..., m:2 * m], state[..., 2 * m:]]
    c = [n, m, m, n, m]
    offs = np.cumsum([0] + c)
    return [state[..., lo:hi] for lo, hi in zip(offs[:-1], offs[1:])]


def vector_field(model: ModelBundle) -> Callable:
    """The flat field ``f(state, u) -> state_dot`` for any variant."""
    variant = model.variant

    def f(state, u):
        if variant == SYM_RN:
            q, p = split_state(model.dims, state)
            qdot, pdot = vector_field_rn(model, q, p, u)
            return dk.concat(_common_batch([qdot, pdot]), -1)
        if variant == SYM_EMBEDDED:
            x1, x2, x3 = split_state(model.dims, state)
            parts = vector_field_embedded(model, x1, x2, x3, u)
            return dk.concat(_common_batch(list(parts)), -1)
        if variant == SYM_HYBRID:
            x1, x2, x3, x4, x5 = split_state(model.dims, state)
            parts = vector_field_hybrid(model, x1, x2, x3, x4, x5, u)
            return dk.concat(_common_batch(list(parts)), -1)
        if variant == UNSTRUCTURED:
            return vector_field_unstructured(model, state, u)
        if variant == NAIVE:
            return vector_field_naive(model, state, u)
        return vector_field_geometric(model, state, u)

    return f


def _common_batch(parts):
    """Broadcast leading batch dims so concat lines up (analytic stand-ins
    with constant components may not materialize the batch axis)."""
    shapes = [dk._val_of(p).shape for p in parts]
    if len({s[:-1] for s in shapes}) == 1:
        return parts
    lead = np.broadcast_shapes(*[s[:-1] for s in shapes])
    out = []
    for p, s in zip(parts, shapes):
        target = tuple(lead) + (s[-1],)
        out.append(p if s == target else dk._broadcast_one(p, s, target))
    return out


def augment_with_control(f: Callable, control_dim: int) -> Callable:
    """Lift ``f(x, u)`` to the constant-control augmented field on (x, u)."""

    def augmented(z):
        x = z[..., :-control_dim] if control_dim else z
        u = z[..., -control_dim:] if control_dim else z[..., :0]
        xdot = f(x, u)
        return dk.concat(_common_batch([xdot, u * 0.0]), -1)

    return augmented


def energy_of(model: ModelBundle, state):
    """The model's own Hamiltonian at ``state`` (its coordinate convention)."""
    variant = model.variant
    if variant in (NAIVE, GEOMETRIC):
        raise UnsupportedQueryError(f"{variant} models carry no energy function")
    n, m = model.dims.n, model.dims.m
    if variant == SYM_RN:
        q, p = split_state(model.dims, state)
        minv = model.mass_inv(q)
        return 0.5 * dk.asum(p * dk.matvec(minv, p), axis=-1) + model.potential(q)
    if variant in (SYM_EMBEDDED, SYM_HYBRID):
        parts = split_state(model.dims, state)
        coords = dk.concat(parts[:-1] if n == 0 else parts[:3], -1)
        vel = parts[-1] if n == 0 else dk.concat(parts[3:], -1)
        minv = model.mass_inv(coords)
        p = dk.solve_spd(minv, vel)
        kinetic = 0.5 * dk.asum(p * dk.matvec(minv, p), axis=-1)
        return kinetic + model.potential(coords)
    # unstructured
    if m == 0:
        return model.hamiltonian_net(state)
    parts = split_state(model.dims, state)
    coords = dk.concat(parts[:-1] if n == 0 else parts[:3], -1)
    vel = parts[-1] if n == 0 else dk.concat(parts[3:], -1)
    minv = model.mass_inv(coords)
    p = dk.solve_spd(minv, vel)
    return model.hamiltonian_net(dk.concat(_common_batch([coords, p]), -1))


def _check_widths(a, b, c, wa, wb, wc):
    for x, w, label in ((a, wa, "first"), (b, wb, "second"), (c, wc, "third")):
        got = dk._val_of(x).shape[-1]
        if got != w:
            raise ContractError(f"{label} argument has width {got}, expected {w}")


# -- architectures (full-scale widths; desk scale divides hidden widths by 4)


_ARCH = {
    ("task1", "naive"): {"fnet": (3, 600, 600, 2)},
    ("task1", "unstructured"): {"hamiltonian": (2, 400, 400, 1),
                                "input": (1, 200, 200, 1)},
    ("task1", "symoden"): {"mass_inv": (1, 300, 300, 1),
                           "potential": (1, 50, 50, 1),
                           "input": (1, 200, 200, 1)},
    ("task2", "naive"): {"fnet": (4, 800, 800, 3)},
    ("task2", "geometric"): {"mass_inv": (2, 300, 300, 300, 1),
                             "fnet": (4, 600, 600, 2)},
    ("task2", "unstructured"): {"mass_inv": (2, 300, 300, 300, 1),
                                "hamiltonian": (3, 500, 500, 1),
                                "input": (2, 200, 200, 1)},
    ("task2", "symoden"): {"mass_inv": (2, 300, 300, 300, 1),
                           "potential": (2, 50, 50, 1),
                           "input": (2, 200, 200, 1)},
    ("task3", "naive"): {"fnet": (6, 1000, 1000, 5)},
    ("task3", "geometric"): {"mass_inv": (3, 400, 400, 400, 3),
                             "fnet": (6, 700, 700, 4)},
    ("task3", "unstructured"): {"mass_inv": (3, 400, 400, 400, 3),
                                "hamiltonian": (5, 500, 500, 1),
                                "input": (3, 300, 300, 2)},
    ("task3", "symoden"): {"mass_inv": (3, 400, 400, 400, 3),
                           "potential": (3, 300, 300, 1),
                           "input": (3, 300, 300, 2)},
    ("task4", "naive"): {"fnet": (7, 1200, 1200, 6)},
    ("task4", "geometric"): {"mass_inv": (4, 400, 400, 400, 3),
                             "fnet": (7, 800, 800, 4)},
    ("task4", "unstructured"): {"mass_inv": (4, 400, 400, 400, 3),
                                "hamiltonian": (6, 600, 600, 1),
                                "input": (4, 300, 300, 2)},
    ("task4", "symoden"): {"mass_inv": (4, 400, 400, 400, 3),
                           "potential": (4, 300, 300, 1),
                           "input": (4, 300, 300, 2)},
}

TASK_DIMS = {
    "task1": Dims(1, 0, 1),
    "task2": Dims(0, 1, 1),
    "task3": Dims(1, 1, 1),
    "task4": Dims(0, 2, 1),
    "task3-fa": Dims(1, 1, 2),
    "task4-fa": Dims(0, 2, 2),
}


def architecture(task: str, family: str, scale: str = "desk") -> dict[str, tuple]:
    """Net widths for (task, family); ``desk`` divides hidden widths by 4."""
    base = task[:-3] if task.endswith("-fa") else task
    key = (base, family)
    if key not in _ARCH:
        raise ContractError(f"no architecture for task {task!r} family {family!r}")
    if scale not in ("desk", "full"):
        raise ContractError(f"scale must be desk or full, got {scale!r}")
    dims = TASK_DIMS[task]
    out = {}
    for name, widths in _ARCH[key].items():
        w = list(widths)
        if name == "input":
            w[-1] = dims.nq * dims.k
        elif name == "fnet" and family == "naive":
            w[0] = dims.state_dim(NAIVE) + dims.k
        elif name == "fnet" and family == "geometric":
            w[0] = dims.state_dim(GEOMETRIC) + dims.k
        if scale == "desk":
            w[1:-1] = [max(1, h // 4) for h in w[1:-1]]
        out[name] = tuple(w)
    return out


def variant_for(task: str, family: str) -> str:
    dims = TASK_DIMS[task]
    if family == "symoden":
        if dims.m == 0:
            return SYM_RN
        return SYM_EMBEDDED if dims.n == 0 else SYM_HYBRID
    if family in (UNSTRUCTURED, NAIVE, GEOMETRIC):
        return family
    raise ContractError(f"unknown model family {family!r}")


def build_model(task: str, family: str, scale: str = "desk", seed: int = 0,
                epsilon: float = 0.01) -> ModelBundle:
    """Fresh bundle with the published architecture for (task, family)."""
    if task not in TASK_DIMS:
        raise ContractError(f"unknown task {task!r}")
    dims = TASK_DIMS[task]
    variant = variant_for(task, family)
    arch = architecture(task, family, scale)
    comps = {}
    for i, (name, widths) in enumerate(sorted(arch.items())):
        params = nc.init_params(nc.MlpSpec(tuple(widths)), seed * 1000 + i)
        if name == "mass_inv":
            comps[name] = NetComponent(params, "mass_inv", epsilon=epsilon)
        elif name in ("potential", "hamiltonian"):
            comps[name] = NetComponent(params, "scalar")
        elif name == "input":
            comps[name] = NetComponent(params, "matrix", rows=dims.nq, cols=dims.k)
        else:
            comps[name] = NetComponent(params, "raw")
    return ModelBundle(variant, dims, comps)
