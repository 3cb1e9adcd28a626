"""Ground-truth dynamics, dataset generation and evaluation metrics.

Tasks
-----
``task1``    pendulum observed as (q, p):  q' = 3p,  p' = -5 sin q + u.
``task2``    same pendulum observed as (cos q, sin q, q_dot); the angle zero
             is the hanging (stable) equilibrium, so the inverted target is
             q* = pi.
``task3``    cartpole, state (x, cos th, sin th, x_dot, th_dot); th = 0 is
             the upright pole.  CartPole-v1 constants, continuous force.
``task4``    acrobot, state (cos q1, sin q1, cos q2, sin q2, q1_dot,
             q2_dot); q1 = 0 hangs down.  Acrobot-v1 ("book") constants,
             continuous elbow torque.
``task3-fa`` / ``task4-fa``   fully actuated variants: control enters every
             momentum slot (u has two channels).

The cartpole/acrobot equations are implemented in manipulator form
``M(q) qdd + bias(q, qd) = B u`` so the fully-actuated variants come from the
same dynamics with ``B = I``; tests cross-check the underactuated cases
against the environments' published closed forms.

Generation integrates the task's observed-state field with the same RK4
stepper the models use, so a truth model wrapped as an analytic bundle
reproduces the data to round-off.  (Embedded states therefore drift off the
unit circle by the RK4 circle-error (q_dot*h)^6/144 per step, about 1e-5
at pendulum speeds; this is inherent to integrating the embedded field.)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import diffkit as dk
from . import hamdyn as hd
from . import odeflow as of
from .errors import ContractError

CONTROL_LEVELS = (-2.0, -1.0, 0.0, 1.0, 2.0)
CIRCLE_TOL = 1e-9  # tolerance for the public checked field entry points


@dataclass
class Trajectory:
    states: np.ndarray      # (steps+1, state_dim)
    control: np.ndarray     # (k,), constant over the trajectory
    dt: float
    task: str

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.control = np.asarray(self.control, dtype=float)
        if not np.isfinite(self.states).all():
            raise ContractError("trajectory contains non-finite states")


@dataclass
class Dataset:
    train: list
    test: list
    task: str
    metadata: dict = field(default_factory=dict)


# -- systems -----------------------------------------------------------------


class PendulumRn:
    """Pendulum in (q, p) coordinates; H(q, p) = 1.5 p^2 + 5 (1 - cos q)."""

    name = "task1"
    dims = hd.Dims(1, 0, 1)
    dt = 0.05
    state_dim = 2
    params = {"mass_inv": 3.0, "gravity_scale": 5.0, "input_gain": 1.0}

    def field(self, state, u):
        q, p = state[..., 0], state[..., 1]
        return np.stack([3.0 * p, -5.0 * np.sin(q) + u[..., 0]], axis=-1)

    def energy(self, states):
        states = np.asarray(states, dtype=float)
        return 1.5 * states[..., 1] ** 2 + 5.0 * (1.0 - np.cos(states[..., 0]))

    def sample(self, rng, count, mode="uniform"):
        if mode == "annulus":
            # ablation-style sampling: radius in phase space instead of a box
            r = rng.uniform(0.5, 2.0, count)
            phi = rng.uniform(-np.pi, np.pi, count)
            return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
        q = rng.uniform(-np.pi, 3 * np.pi, count)
        p = rng.uniform(-1.0, 1.0, count)
        return np.stack([q, p], axis=-1)

    def truth_bundle(self):
        return hd.ModelBundle(hd.SYM_RN, self.dims, {
            "mass_inv": hd.AnalyticComponent(lambda q: np.array([[3.0]])),
            "potential": hd.AnalyticComponent(
                lambda q: 5.0 - 5.0 * dk.cos(q[..., 0])),
            "input": hd.AnalyticComponent(lambda q: np.array([[1.0]])),
        })


class PendulumEmbedded:
    """Pendulum observed as (cos q, sin q, q_dot); qdd = -15 sin q + 3 u."""

    name = "task2"
    dims = hd.Dims(0, 1, 1)
    dt = 0.05
    state_dim = 3
    params = {"accel_gravity": 15.0, "accel_gain": 3.0}

    def field(self, state, u):
        c, s, qd = state[..., 0], state[..., 1], state[..., 2]
        return np.stack([-s * qd, c * qd, -15.0 * s + 3.0 * u[..., 0]], axis=-1)

    def energy(self, states):
        states = np.asarray(states, dtype=float)
        return states[..., 2] ** 2 / 6.0 + 5.0 * (1.0 - states[..., 0])

    def sample(self, rng, count, mode="uniform"):
        th = rng.uniform(-np.pi, np.pi, count)
        qd = rng.uniform(-1.0, 1.0, count)
        return np.stack([np.cos(th), np.sin(th), qd], axis=-1)

    def truth_bundle(self):
        # the alpha = 1/3 parametrization: Minv = 3, V = 5 (1 - cos q), g = 1
        return hd.ModelBundle(hd.SYM_EMBEDDED, self.dims, {
            "mass_inv": hd.AnalyticComponent(lambda c: np.array([[3.0]])),
            "potential": hd.AnalyticComponent(
                lambda c: 5.0 - 5.0 * c[..., 0]),
            "input": hd.AnalyticComponent(lambda c: np.array([[1.0]])),
        })

    def chart_field(self, z, u):
        q, qd = z[..., 0], z[..., 1]
        return np.stack([qd, -15.0 * np.sin(q) + 3.0 * u[..., 0]], axis=-1)

    def embed(self, z):
        q = z[..., 0]
        return np.stack([np.cos(q), np.sin(q), z[..., 1]], axis=-1)


class Cartpole:
    """Cartpole with CartPole-v1 constants; pole is a uniform rod."""

    dt = 0.02
    params = {"cart_mass": 1.0, "pole_mass": 0.1, "pole_half_length": 0.5,
              "gravity": 9.8}

    def __init__(self, fully_actuated=False):
        self.fully_actuated = fully_actuated
        self.name = "task3-fa" if fully_actuated else "task3"
        self.dims = hd.Dims(1, 1, 2 if fully_actuated else 1)
        self.state_dim = 5

    def _mass_entries(self, c):
        mc, mp = self.params["cart_mass"], self.params["pole_mass"]
        l = self.params["pole_half_length"]
        a = mc + mp + 0.0 * c
        b = mp * l * c
        d = (4.0 / 3.0) * mp * l * l + 0.0 * c
        return a, b, d

    def field(self, state, u):
        mp = self.params["pole_mass"]
        l = self.params["pole_half_length"]
        grav = self.params["gravity"]
        c, s = state[..., 1], state[..., 2]
        xd, thd = state[..., 3], state[..., 4]
        a, b, d = self._mass_entries(c)
        u_x = u[..., 0]
        u_th = u[..., 1] if self.fully_actuated else 0.0
        rhs1 = u_x + mp * l * s * thd ** 2
        rhs2 = u_th + mp * grav * l * s
        det = a * d - b * b
        xdd = (d * rhs1 - b * rhs2) / det
        thdd = (a * rhs2 - b * rhs1) / det
        return np.stack([xd, -s * thd, c * thd, xdd, thdd], axis=-1)

    def energy(self, states):
        states = np.asarray(states, dtype=float)
        mp = self.params["pole_mass"]
        l = self.params["pole_half_length"]
        c = states[..., 1]
        xd, thd = states[..., 3], states[..., 4]
        a, b, d = self._mass_entries(c)
        kinetic = 0.5 * (a * xd ** 2 + 2 * b * xd * thd + d * thd ** 2)
        return kinetic + mp * self.params["gravity"] * l * c

    def sample(self, rng, count, mode="uniform"):
        x = rng.uniform(-1.0, 1.0, count)
        th = rng.uniform(-np.pi, np.pi, count)
        xd = rng.uniform(-1.0, 1.0, count)
        thd = rng.uniform(-1.0, 1.0, count)
        return np.stack([x, np.cos(th), np.sin(th), xd, thd], axis=-1)

    def input_matrix(self):
        if self.fully_actuated:
            return np.eye(2)
        return np.array([[1.0], [0.0]])

    def truth_bundle(self):
        mp = self.params["pole_mass"]
        l = self.params["pole_half_length"]
        grav = self.params["gravity"]
        mc = self.params["cart_mass"]

        def minv_fn(coords):
            c = coords[..., 1]
            a = mc + mp + 0.0 * c
            b = mp * l * c
            d = (4.0 / 3.0) * mp * l * l + 0.0 * c
            det = a * d - b * b
            row0 = dk.stack([d / det, -(b / det)], axis=-1)
            row1 = dk.stack([-(b / det), a / det], axis=-1)
            return dk.stack([row0, row1], axis=-2)

        gmat = self.input_matrix()
        return hd.ModelBundle(hd.SYM_HYBRID, self.dims, {
            "mass_inv": hd.AnalyticComponent(minv_fn),
            "potential": hd.AnalyticComponent(
                lambda coords: mp * grav * l * coords[..., 1]),
            "input": hd.AnalyticComponent(lambda coords: gmat),
        })

    def chart_field(self, z, u):
        th = z[..., 1]
        state = np.stack([z[..., 0], np.cos(th), np.sin(th),
                          z[..., 2], z[..., 3]], axis=-1)
        d = self.field(state, u)
        return np.stack([d[..., 0], z[..., 3], d[..., 3], d[..., 4]], axis=-1)

    def embed(self, z):
        th = z[..., 1]
        return np.stack([z[..., 0], np.cos(th), np.sin(th),
                         z[..., 2], z[..., 3]], axis=-1)


class Acrobot:
    """Acrobot with Acrobot-v1 constants ("book" dynamics)."""

    dt = 0.2
    params = {"m1": 1.0, "m2": 1.0, "l1": 1.0, "lc1": 0.5, "lc2": 0.5,
              "I1": 1.0, "I2": 1.0, "gravity": 9.8}

    def __init__(self, fully_actuated=False):
        self.fully_actuated = fully_actuated
        self.name = "task4-fa" if fully_actuated else "task4"
        self.dims = hd.Dims(0, 2, 2 if fully_actuated else 1)
        self.state_dim = 6

    def _mass_entries(self, c2):
        p = self.params
        d11 = (p["m1"] * p["lc1"] ** 2
               + p["m2"] * (p["l1"] ** 2 + p["lc2"] ** 2
                            + 2 * p["l1"] * p["lc2"] * c2)
               + p["I1"] + p["I2"])
        d12 = p["m2"] * (p["lc2"] ** 2 + p["l1"] * p["lc2"] * c2) + p["I2"]
        d22 = p["m2"] * p["lc2"] ** 2 + p["I2"] + 0.0 * c2
        return d11, d12, d22

    def field(self, state, u):
        # state layout groups the embeddings: (c1, c2, s1, s2, w1, w2)
        p = self.params
        c1, c2 = state[..., 0], state[..., 1]
        s1, s2 = state[..., 2], state[..., 3]
        w1, w2 = state[..., 4], state[..., 5]
        d11, d12, d22 = self._mass_entries(c2)
        s12 = s1 * c2 + c1 * s2
        coupling = p["m2"] * p["l1"] * p["lc2"]
        h1 = -coupling * (2 * w1 * w2 + w2 ** 2) * s2
        h2 = coupling * w1 ** 2 * s2
        g1 = ((p["m1"] * p["lc1"] + p["m2"] * p["l1"]) * p["gravity"] * s1
              + p["m2"] * p["lc2"] * p["gravity"] * s12)
        g2 = p["m2"] * p["lc2"] * p["gravity"] * s12
        u1 = u[..., 0] if self.fully_actuated else 0.0
        u2 = u[..., 1] if self.fully_actuated else u[..., 0]
        rhs1 = u1 - h1 - g1
        rhs2 = u2 - h2 - g2
        det = d11 * d22 - d12 ** 2
        a1 = (d22 * rhs1 - d12 * rhs2) / det
        a2 = (d11 * rhs2 - d12 * rhs1) / det
        return np.stack([-s1 * w1, -s2 * w2, c1 * w1, c2 * w2, a1, a2], axis=-1)

    def potential(self, c1, s1, c2, s2):
        p = self.params
        c12 = c1 * c2 - s1 * s2
        return (-(p["m1"] * p["lc1"] + p["m2"] * p["l1"]) * p["gravity"] * c1
                - p["m2"] * p["lc2"] * p["gravity"] * c12)

    def energy(self, states):
        states = np.asarray(states, dtype=float)
        c2 = states[..., 2]
        w1, w2 = states[..., 4], states[..., 5]
        d11, d12, d22 = self._mass_entries(c2)
        kinetic = 0.5 * (d11 * w1 ** 2 + 2 * d12 * w1 * w2 + d22 * w2 ** 2)
        return kinetic + self.potential(states[..., 0], states[..., 1],
                                        c2, states[..., 3])

    def sample(self, rng, count, mode="uniform"):
        th1 = rng.uniform(-np.pi, np.pi, count)
        th2 = rng.uniform(-np.pi, np.pi, count)
        w = rng.uniform(-1.0, 1.0, (count, 2))
        return np.stack([np.cos(th1), np.sin(th1), np.cos(th2), np.sin(th2),
                         w[:, 0], w[:, 1]], axis=-1)

    def input_matrix(self):
        if self.fully_actuated:
            return np.eye(2)
        return np.array([[0.0], [1.0]])

    def truth_bundle(self):
        p = self.params

        def minv_fn(coords):
            c2 = coords[..., 2]
            d11, d12, d22 = self._mass_entries(c2)
            det = d11 * d22 - d12 * d12
            row0 = dk.stack([d22 / det, -(d12 / det)], axis=-1)
            row1 = dk.stack([-(d12 / det), d11 / det], axis=-1)
            return dk.stack([row0, row1], axis=-2)

        def pot_fn(coords):
            c1, s1 = coords[..., 0], coords[..., 1]
            c2, s2 = coords[..., 2], coords[..., 3]
            c12 = c1 * c2 - s1 * s2
            return (-(p["m1"] * p["lc1"] + p["m2"] * p["l1"]) * p["gravity"] * c1
                    - p["m2"] * p["lc2"] * p["gravity"] * c12)

        gmat = self.input_matrix()
        return hd.ModelBundle(hd.SYM_EMBEDDED, self.dims, {
            "mass_inv": hd.AnalyticComponent(minv_fn),
            "potential": hd.AnalyticComponent(pot_fn),
            "input": hd.AnalyticComponent(lambda coords: gmat),
        })

    def chart_field(self, z, u):
        th1, th2 = z[..., 0], z[..., 1]
        state = np.stack([np.cos(th1), np.sin(th1), np.cos(th2), np.sin(th2),
                          z[..., 2], z[..., 3]], axis=-1)
        d = self.field(state, u)
        return np.stack([z[..., 2], z[..., 3], d[..., 4], d[..., 5]], axis=-1)

    def embed(self, z):
        th1, th2 = z[..., 0], z[..., 1]
        return np.stack([np.cos(th1), np.sin(th1), np.cos(th2), np.sin(th2),
                         z[..., 2], z[..., 3]], axis=-1)


SYSTEMS = {
    "task1": PendulumRn(),
    "task2": PendulumEmbedded(),
    "task3": Cartpole(),
    "task4": Acrobot(),
    "task3-fa": Cartpole(fully_actuated=True),
    "task4-fa": Acrobot(fully_actuated=True),
}


def get_system(task: str):
    if task not in SYSTEMS:
        raise ContractError(f"unknown task {task!r}")
    return SYSTEMS[task]


def truth_bundle(task: str) -> hd.ModelBundle:
    return get_system(task).truth_bundle()


# -- checked public field entry points ---------------------------------------


def _check_circle(*pairs):
    for c, s in pairs:
        err = np.abs(np.asarray(c) ** 2 + np.asarray(s) ** 2 - 1.0)
        if np.any(err > CIRCLE_TOL):
            raise ContractError(
                f"embedded angle off the unit circle by {float(np.max(err)):.3e}")


def pendulum_rn_field(q, p, u):
    """(q, p) pendulum right-hand side: (3p, -5 sin q + u)."""
    q, p, u = (np.asarray(v, dtype=float) for v in (q, p, u))
    return 3.0 * p, -5.0 * np.sin(q) + u


def pendulum_embedded_field(cos_q, sin_q, q_dot, u):
    """Embedded pendulum right-hand side; rejects off-circle inputs."""
    cos_q, sin_q, q_dot, u = (np.asarray(v, dtype=float)
                              for v in (cos_q, sin_q, q_dot, u))
    _check_circle((cos_q, sin_q))
    return -sin_q * q_dot, cos_q * q_dot, -15.0 * sin_q + 3.0 * u


def cartpole_field(state, u, fully_actuated=False):
    """Cartpole right-hand side on (x, cos th, sin th, x_dot, th_dot)."""
    state = np.asarray(state, dtype=float)
    _check_circle((state[..., 1], state[..., 2]))
    sys = get_system("task3-fa" if fully_actuated else "task3")
    return sys.field(state, np.atleast_1d(np.asarray(u, dtype=float)))


def acrobot_field(state, u, fully_actuated=False):
    """Acrobot right-hand side on (cos q1, sin q1, cos q2, sin q2, w1, w2)."""
    state = np.asarray(state, dtype=float)
    _check_circle((state[..., 0], state[..., 1]), (state[..., 2], state[..., 3]))
    sys = get_system("task4-fa" if fully_actuated else "task4")
    return sys.field(state, np.atleast_1d(np.asarray(u, dtype=float)))


# -- dataset generation -------------------------------------------------------


def generate_dataset(task: str, n_init: int, controls=CONTROL_LEVELS,
                     steps: int = 20, dt: float | None = None, seed: int = 0,
                     sampling: str = "uniform") -> Dataset:
    """RK4 trajectories from ``n_init`` fresh starts per split, one
    trajectory per (start, control level); deterministic in ``seed``."""
    if n_init < 1:
        raise ContractError("n_init must be >= 1")
    sys = get_system(task)
    dt = sys.dt if dt is None else float(dt)
    controls = [float(c) for c in controls]
    rng = np.random.default_rng(seed)
    train_ics = sys.sample(rng, n_init, sampling)
    test_ics = sys.sample(rng, n_init, sampling)

    def make_split(ics):
        out = []
        for c in controls:
            u = np.full(sys.dims.k, c)
            states = of.rollout(sys.field, ics, u, steps, dt)  # (S+1, n, d)
            for j in range(ics.shape[0]):
                out.append(Trajectory(states[:, j, :], u, dt, task))
        return out

    metadata = {
        "task": task, "n_init": n_init, "controls": controls, "steps": steps,
        "dt": dt, "seed": seed, "sampling": sampling, "params": sys.params,
        "ranges": "positions/angles task-bounded, rates uniform [-1, 1]",
    }
    return Dataset(make_split(train_ics), make_split(test_ics), task, metadata)


def save_dataset(path, dataset: Dataset):
    """JSON-lines: metadata header, then one trajectory per line."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"kind": "metadata", **dataset.metadata},
                            sort_keys=True) + "\n")
        for split, trajs in (("train", dataset.train), ("test", dataset.test)):
            for t in trajs:
                fh.write(json.dumps({
                    "split": split, "task": t.task, "dt": t.dt,
                    "u": t.control.tolist(), "states": t.states.tolist(),
                }, sort_keys=True) + "\n")


def load_dataset(path) -> Dataset:
    train, test, metadata, task = [], [], {}, None
    with open(path) as fh:
        for line in fh:
            doc = json.loads(line)
            if doc.get("kind") == "metadata":
                metadata = {k: v for k, v in doc.items() if k != "kind"}
                task = metadata.get("task")
                continue
            traj = Trajectory(np.asarray(doc["states"], dtype=float),
                              np.asarray(doc["u"], dtype=float),
                              float(doc["dt"]), doc["task"])
            (train if doc["split"] == "train" else test).append(traj)
            task = task or doc["task"]
    if task is None:
        raise ContractError(f"no trajectories in {path}")
    return Dataset(train, test, task, metadata)


# -- metrics ------------------------------------------------------------------


def _split_errors(model: hd.ModelBundle, trajectories, h: float) -> np.ndarray:
    f = hd.vector_field(model)
    states = np.stack([t.states for t in trajectories])
    controls = np.stack([np.asarray(t.control, dtype=float)
                         for t in trajectories])
    return of.trajectory_metric(f, states, controls, h)


def train_error(model: hd.ModelBundle, dataset: Dataset) -> float:
    """Mean over train trajectories of the full-horizon rollout error."""
    return float(_split_errors(model, dataset.train, dataset.train[0].dt).mean())


def test_error(model: hd.ModelBundle, dataset: Dataset) -> float:
    """Same metric on the held-out initial conditions."""
    return float(_split_errors(model, dataset.test, dataset.test[0].dt).mean())


def unique_initial_states(trajectories) -> np.ndarray:
    """First-seen-order unique trajectory starts (exact duplicates only)."""
    seen, out = set(), []
    for t in trajectories:
        key = t.states[0].tobytes()
        if key not in seen:
            seen.add(key)
            out.append(t.states[0])
    return np.stack(out)


def prediction_errors(model: hd.ModelBundle, dataset: Dataset,
                      steps: int = 40) -> np.ndarray:
    """Per-initial-condition unforced long-horizon errors vs the truth."""
    sys = get_system(dataset.task)
    h = dataset.train[0].dt
    ics = unique_initial_states(dataset.train)
    u = np.zeros(sys.dims.k)
    truth = of.rollout(sys.field, ics, u, steps, h)        # (S+1, T, d)
    targets = np.swapaxes(truth, 0, 1)                     # (T, S+1, d)
    controls = np.broadcast_to(u, (ics.shape[0], sys.dims.k))
    f = hd.vector_field(model)
    return of.trajectory_metric(f, targets, controls, h)


def prediction_error(model: hd.ModelBundle, dataset: Dataset,
                     steps: int = 40) -> float:
    return float(prediction_errors(model, dataset, steps).mean())


def error_stats(model: hd.ModelBundle, dataset: Dataset,
                pred_steps: int = 40) -> dict:
    """The eval-table row: mean and std of train/test/prediction errors."""
    h = dataset.train[0].dt
    tr = _split_errors(model, dataset.train, h)
    te = _split_errors(model, dataset.test, h)
    pr = prediction_errors(model, dataset, pred_steps)
    return {
        "train_error": float(tr.mean()), "train_std": float(tr.std()),
        "test_error": float(te.mean()), "test_std": float(te.std()),
        "prediction_error": float(pr.mean()), "prediction_std": float(pr.std()),
    }


def prediction_rollout(model: hd.ModelBundle, task: str, x0,
                       steps: int = 40, dt: float | None = None) -> np.ndarray:
    """Unforced model rollout from ``x0`` (for figures and energy checks)."""
    sys = get_system(task)
    dt = sys.dt if dt is None else dt
    u = np.zeros(sys.dims.k)
    return of.rollout(hd.vector_field(model), np.asarray(x0, dtype=float),
                      u, steps, dt)


def truth_energy(task: str, states) -> np.ndarray:
    """The physical total energy of observed states (truth Hamiltonian)."""
    return np.asarray(get_system(task).energy(states))
