"""Fixed-step RK4 integration and training through the unrolled solver.

Training is discretize-then-optimize: the loss is built from the actual RK4
iterates, and one reverse sweep over the unrolled computation yields exact
gradients of that discrete loss.  (A continuous-adjoint solver would trade
exactness for O(1) memory; with horizons of a few steps the unrolled tape is
tiny, so exactness wins.)

Minibatching follows the constant-control structure of the datasets: each
epoch visits one minibatch per control level (so a 5-level dataset gives 5
Adam steps per epoch), each containing every trajectory at that level.  The
whole pipeline is deterministic given the dataset: batch order is the sorted
control levels and no RNG is consumed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import diffkit as dk
from . import hamdyn as hd
from .errors import ContractError, NumericFaultError

LOSS_KINDS = ("trajectory", "gradient-matching")


@dataclass
class TrainConfig:
    """Hyperparameters for :func:`train`.

    ``tau`` is the prediction horizon: each window contributes the squared
    error of ``tau`` integrator steps against the recorded states.  ``loss``
    selects the integrated trajectory loss or the finite-difference
    gradient-matching ablation.  Adam moments/eps are the usual defaults; the
    source experiments name only the optimizer, so these are pinned here.
    """

    tau: int = 3
    epochs: int = 300
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "trajectory"

    def __post_init__(self):
        if self.tau < 1:
            raise ContractError("tau must be >= 1")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")
        if self.loss not in LOSS_KINDS:
            raise ContractError(f"loss must be one of {LOSS_KINDS}")


@dataclass
class LossReport:
    """Per-epoch training record.

    ``train_errors[e]`` is the 20-step per-trajectory train error (sum over
    recorded steps of state MSE, averaged over trajectories) measured after
    epoch ``e``; ``wall_times[e]`` is cumulative seconds.
    """

    train_errors: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_errors)


class Windows(NamedTuple):
    """Sliding prediction windows: roots ``(W, d)``, targets ``(W, tau, d)``,
    constant controls ``(W, k)``."""

    roots: np.ndarray
    targets: np.ndarray
    controls: np.ndarray


def rk4_step(f: Callable, x, h: float, u):
    """One classical Runge-Kutta step of ``x' = f(x, u)`` with ``u`` held.

    Works on plain arrays and on tape nodes (the step is differentiable).
    Raises :class:`NumericFaultError` carrying the stage index if a stage
    evaluates non-finite.
    """
    if h <= 0:
        raise ContractError("rk4_step requires h > 0")
    k1 = f(x, u)
    _check_stage(k1, 1)
    k2 = f(x + (h / 2.0) * k1, u)
    _check_stage(k2, 2)
    k3 = f(x + (h / 2.0) * k2, u)
    _check_stage(k3, 3)
    k4 = f(x + h * k3, u)
    _check_stage(k4, 4)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_stage(k, idx: int):
    if not np.isfinite(dk._val_of(k)).all():
        raise NumericFaultError("non-finite RK4 stage value", stage=idx)


def rollout(f: Callable, x0, u, steps: int, h: float) -> np.ndarray:
    """``x0`` plus ``steps`` successive RK4 states, stacked on a new first
    axis.  ``u`` is constant for the whole trajectory."""
    if steps < 1:
        raise ContractError("rollout requires steps >= 1")
    x = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 2 and u.ndim == 1:
        u = np.broadcast_to(u, (x.shape[0], u.shape[0]))
    states = [x]
    for i in range(steps):
        try:
            x = rk4_step(f, x, h, u)
        except NumericFaultError as err:
            raise NumericFaultError(str(err).split(" (")[0],
                                    step=i, **err.context) from None
        states.append(x)
    return np.stack([dk._val_of(s) for s in states], axis=0)


def make_windows(states: np.ndarray, tau: int) -> Windows:
    """All length-``tau`` windows of one trajectory (controls left empty).

    For ``n+1`` recorded states there are ``n - tau + 1`` windows, one rooted
    at every index from 0 through ``n - tau``.
    """
    states = np.asarray(states, dtype=float)
    n = states.shape[0] - 1
    if tau < 1 or tau > n:
        raise ContractError(f"tau={tau} needs a trajectory of length >= tau+1")
    w = n - tau + 1
    roots = states[:w]
    targets = np.stack([states[i + 1: i + 1 + tau] for i in range(w)], axis=0)
    return Windows(roots, targets, np.zeros((w, 0)))


def stack_windows(trajectories, tau: int) -> Windows:
    """Windows of several trajectories stacked into one batch, each window
    tagged with its trajectory's constant control."""
    roots, targets, controls = [], [], []
    for traj in trajectories:
        w = make_windows(traj.states, tau)
        roots.append(w.roots)
        targets.append(w.targets)
        controls.append(np.broadcast_to(traj.control,
                                        (w.roots.shape[0], len(traj.control))))
    return Windows(np.concatenate(roots), np.concatenate(targets),
                   np.concatenate(controls))


def trajectory_loss(f: Callable, windows: Windows, h: float):
    """Mean over windows of the summed squared ``tau``-step prediction error."""
    n_windows, tau = windows.targets.shape[0], windows.targets.shape[1]
    x = windows.roots
    total = 0.0
    for t in range(tau):
        x = rk4_step(f, x, h, windows.controls)
        d = x - windows.targets[:, t, :]
        total = total + dk.asum(d * d)
    return total / float(n_windows)


def gradient_matching_loss(f: Callable, states: np.ndarray, u, h: float):
    """MSE between the field at recorded states and finite-difference
    derivatives (centered inside, one-sided at the ends)."""
    if h <= 0:
        raise ContractError("gradient_matching_loss requires h > 0")
    states = np.asarray(states, dtype=float)
    if states.shape[0] < 2:
        raise ContractError("need at least two recorded states")
    fd = finite_difference_derivatives(states, h)
    u = np.asarray(u, dtype=float)
    ub = np.broadcast_to(u, (states.shape[0], u.shape[-1]))
    d = f(states, ub) - fd
    return dk.asum(d * d) / float(fd.size)


def finite_difference_derivatives(states: np.ndarray, h: float) -> np.ndarray:
    fd = np.empty_like(states)
    fd[1:-1] = (states[2:] - states[:-2]) / (2.0 * h)
    fd[0] = (states[1] - states[0]) / h
    fd[-1] = (states[-1] - states[-2]) / h
    return fd


def adam_step(params: list, grads: list, m: list, v: list, t: int,
              config: TrainConfig):
    """Bias-corrected Adam update; returns new (params, m, v)."""
    if t < 1:
        raise ContractError("adam step index starts at 1")
    if not (len(params) == len(grads) == len(m) == len(v)):
        raise ContractError("adam state length mismatch")
    b1, b2 = config.beta1, config.beta2
    out_p, out_m, out_v = [], [], []
    for p, g, mi, vi in zip(params, grads, m, v):
        mi = b1 * mi + (1.0 - b1) * g
        vi = b2 * vi + (1.0 - b2) * (g * g)
        mhat = mi / (1.0 - b1 ** t)
        vhat = vi / (1.0 - b2 ** t)
        out_p.append(p - config.learning_rate * mhat / (np.sqrt(vhat) + config.eps))
        out_m.append(mi)
        out_v.append(vi)
    return out_p, out_m, out_v


def trajectory_metric(f: Callable, target_states: np.ndarray,
                      controls: np.ndarray, h: float) -> np.ndarray:
    """Per-trajectory error of full-horizon rollouts from each initial state:
    sum over recorded steps of the state MSE.  ``target_states`` is
    ``(T, S+1, d)``; returns ``(T,)``."""
    target_states = np.asarray(target_states, dtype=float)
    t_count, s_plus_1, d = target_states.shape
    x = target_states[:, 0, :]
    err = np.zeros(t_count)
    for step in range(1, s_plus_1):
        x = rk4_step(f, x, h, controls)
        err += np.mean((dk._val_of(x) - target_states[:, step, :]) ** 2, axis=-1)
    return err


def train(model: hd.ModelBundle, dataset, config: TrainConfig):
    """Fit ``model`` to ``dataset`` (one minibatch per control level per
    epoch); returns ``(trained model, LossReport)``.

    Deterministic given the dataset and config.  Numeric faults abort with
    the epoch/batch added to the error context.
    """
    trajectories = dataset.train
    if not trajectories:
        raise ContractError("dataset has no training trajectories")
    h = trajectories[0].dt
    n_steps = trajectories[0].states.shape[0] - 1
    if config.loss == "trajectory" and config.tau > n_steps:
        raise ContractError(f"tau={config.tau} exceeds trajectory length {n_steps}")

    by_control: dict[tuple, list] = {}
    for traj in trajectories:
        by_control.setdefault(tuple(np.asarray(traj.control)), []).append(traj)
    batches = []
    for key in sorted(by_control):
        group = by_control[key]
        if config.loss == "trajectory":
            batches.append(stack_windows(group, config.tau))
        else:
            batches.append(_fd_batch(group, h))

    model = model.copy()
    # full-horizon eval tensors for the per-epoch train-error metric
    all_states = np.stack([t.states for t in trajectories])
    all_controls = np.stack([np.asarray(t.control, dtype=float)
                             for t in trajectories])

    params = [np.array(a) for a in model.parameter_arrays()]
    m_state = [np.zeros_like(a) for a in params]
    v_state = [np.zeros_like(a) for a in params]
    report = LossReport()
    t_step = 0
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        for b_idx, batch in enumerate(batches):
            tape = dk.Tape()
            lifted, leaves = model.lifted(tape)
            f = hd.vector_field(lifted)
            try:
                if config.loss == "trajectory":
                    loss = trajectory_loss(f, batch, h)
                else:
                    states, controls, fd = batch
                    d = f(states, controls) - fd
                    loss = dk.asum(d * d) / float(fd.size)
                tape.backward(loss)
            except NumericFaultError as err:
                raise NumericFaultError(str(err).split(" (")[0], epoch=epoch,
                                        batch=b_idx, **err.context) from None
            grads = [leaf.adjoint if leaf.adjoint is not None
                     else np.zeros_like(leaf.value) for leaf in leaves]
            t_step += 1
            params, m_state, v_state = adam_step(params, grads, m_state,
                                                 v_state, t_step, config)
            model.set_parameter_arrays(params)
        f_eval = hd.vector_field(model)
        per_traj = trajectory_metric(f_eval, all_states, all_controls, h)
        report.train_errors.append(float(per_traj.mean()))
        report.wall_times.append(time.perf_counter() - t0)
    return model, report


def _fd_batch(trajectories, h):
    """Flatten a trajectory group into (states, controls, fd targets)."""
    states, controls, fds = [], [], []
    for traj in trajectories:
        s = np.asarray(traj.states, dtype=float)
        states.append(s)
        fds.append(finite_difference_derivatives(s, h))
        controls.append(np.broadcast_to(traj.control,
                                        (s.shape[0], len(traj.control))))
    return (np.concatenate(states), np.concatenate(controls),
            np.concatenate(fds))


def write_history(path, report: LossReport):
    """Training history CSV: epoch, train_error, wall_time_s."""
    with open(path, "w") as fh:
        fh.write("epoch,train_error,wall_time_s\n")
        for e, (err, wt) in enumerate(zip(report.train_errors, report.wall_times)):
            fh.write(f"{e},{err!r},{wt!r}\n")
