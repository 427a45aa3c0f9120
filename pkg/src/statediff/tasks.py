"""Synthetic one-to-many inference tasks and the toy grid world.

Two data sources feed training and evaluation:

* :class:`ConditionalGMM` — a conditional Gaussian mixture with affine mode
  means, the ground truth against which the error bounds are checked (every
  moment of p(s|x) is available in closed form);
* :class:`GridWorld` — a partially observable multi-agent grid whose agents
  random-walk while observing only entities within a Chebyshev sight
  radius.  It supplies the two auxiliary-observation constructions: a
  per-agent history window (:func:`build_history_aux`) and the joint
  observation across agents (:func:`build_joint_aux`).

Datasets of (x, s) pairs are reproducible: pair i draws from the stream
(seed, "data", i), so generation order (or parallelism) cannot change the
result.  Files are JSON Lines with a metadata header line.
"""

import json
from dataclasses import dataclass

import numpy as np

from .streams import rng_stream

MASK_SENTINEL = 0.0  # hidden entity coordinates are zeroed, visibility bit says so


# ---------------------------------------------------------------------------
# conditional Gaussian mixtures


@dataclass(frozen=True)
class ConditionalGMM:
    """Mixture of N Gaussians over states with affine condition-to-mean maps.

    Mode i has weight ``weights[i]``, mean ``mean_mats[i] @ x +
    mean_offsets[i]`` and diagonal covariance ``cov_diags[i]``.
    """

    weights: np.ndarray
    mean_mats: tuple
    mean_offsets: tuple
    cov_diags: tuple
    state_dim: int
    cond_dim: int

    def __post_init__(self):
        w = self.weights
        if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mode weights must be positive and sum to 1")
        if not len(w) == len(self.mean_mats) == len(self.mean_offsets) == len(self.cov_diags):
            raise ValueError("per-mode field lengths disagree")
        for mat, off, cov in zip(self.mean_mats, self.mean_offsets, self.cov_diags):
            if mat.shape != (self.state_dim, self.cond_dim) or off.shape != (self.state_dim,):
                raise ValueError("mode mean map has wrong shape")
            if cov.shape != (self.state_dim,) or np.any(cov <= 0.0):
                raise ValueError("covariance diagonals must be positive")

    @property
    def num_modes(self) -> int:
        return len(self.weights)


def mode_means(task: ConditionalGMM, x) -> np.ndarray:
    """All mode means at condition x, shape (N, state_dim)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (task.cond_dim,):
        raise ValueError(f"condition shape {x.shape}, expected ({task.cond_dim},)")
    return np.stack([m @ x + b for m, b in zip(task.mean_mats, task.mean_offsets)])


def min_mode_distance(task: ConditionalGMM, x) -> float:
    """Minimum pairwise distance D between mode means at x (inf if N = 1)."""
    means = mode_means(task, x)
    if len(means) == 1:
        return float("inf")
    dists = [
        float(np.linalg.norm(means[i] - means[j]))
        for i in range(len(means))
        for j in range(i + 1, len(means))
    ]
    return min(dists)


def make_bimodal_task(c: float, sigma: float, d: int) -> ConditionalGMM:
    """Two equal-weight modes at x +/- c*e (e the unit diagonal direction),
    isotropic sigma^2 covariance; mode separation D = 2c at every x."""
    if c <= 0.0:
        raise ValueError("mode offset c must be > 0 (modes would coincide)")
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    e = np.ones(d) / np.sqrt(d)
    eye = np.eye(d)
    cov = np.full(d, sigma**2)
    return ConditionalGMM(
        weights=np.array([0.5, 0.5]),
        mean_mats=(eye, eye.copy()),
        mean_offsets=(c * e, -c * e),
        cov_diags=(cov, cov.copy()),
        state_dim=d,
        cond_dim=d,
    )


def make_unimodal_task(sigma: float, d: int) -> ConditionalGMM:
    """Single mode at mu(x) = x with isotropic sigma^2 covariance."""
    if sigma <= 0.0:
        raise ValueError("sigma must be > 0")
    return ConditionalGMM(
        weights=np.array([1.0]),
        mean_mats=(np.eye(d),),
        mean_offsets=(np.zeros(d),),
        cov_diags=(np.full(d, sigma**2),),
        state_dim=d,
        cond_dim=d,
    )


def gmm_sample(task: ConditionalGMM, x, rng: np.random.Generator) -> np.ndarray:
    """Draw s ~ p(s|x): pick a mode by weight, then sample its Gaussian."""
    means = mode_means(task, x)
    idx = int(rng.choice(task.num_modes, p=task.weights))
    return means[idx] + np.sqrt(task.cov_diags[idx]) * rng.standard_normal(task.state_dim)


# ---------------------------------------------------------------------------
# grid world


@dataclass(frozen=True)
class GridWorld:
    """Square grid with random-walking agents and static landmarks.

    The global state concatenates every agent position then every landmark
    position (integer cell coordinates as floats).  An agent observes its
    own position exactly; every other entity appears as a
    (visible, x, y) triple where hidden entities carry visible = 0 and
    sentinel coordinates, so masking is lossless to detect.
    """

    size: int = 5
    n_agents: int = 3
    sight: int = 1
    n_landmarks: int = 2

    def __post_init__(self):
        if self.size < 1 or self.n_agents < 1 or self.sight < 0 or self.n_landmarks < 0:
            raise ValueError("invalid grid world parameters")

    @property
    def state_dim(self) -> int:
        return 2 * (self.n_agents + self.n_landmarks)

    @property
    def obs_dim(self) -> int:
        return 2 + 3 * (self.n_agents - 1 + self.n_landmarks)


def grid_state(agent_pos: np.ndarray, landmark_pos: np.ndarray) -> np.ndarray:
    return np.concatenate([agent_pos.ravel(), landmark_pos.ravel()]).astype(np.float64)


def grid_observe(world: GridWorld, agent_pos, landmark_pos, agent: int) -> np.ndarray:
    """Deterministic observation of one agent: own position, then masked
    (visible, x, y) triples for the other agents and all landmarks."""
    own = agent_pos[agent]
    parts = [own.astype(np.float64)]
    others = [agent_pos[j] for j in range(world.n_agents) if j != agent]
    for pos in others + list(landmark_pos):
        visible = np.max(np.abs(pos - own)) <= world.sight
        if visible:
            parts.append(np.array([1.0, float(pos[0]), float(pos[1])]))
        else:
            parts.append(np.array([0.0, MASK_SENTINEL, MASK_SENTINEL]))
    return np.concatenate(parts)


def grid_rollout(world: GridWorld, steps: int, rng: np.random.Generator):
    """Scripted random-walk episode.

    Returns (states, observations): states is (steps, state_dim),
    observations is (n_agents, steps, obs_dim).
    """
    agent_pos = rng.integers(0, world.size, size=(world.n_agents, 2))
    landmark_pos = rng.integers(0, world.size, size=(world.n_landmarks, 2))
    moves = np.array([[0, 0], [0, 1], [0, -1], [1, 0], [-1, 0]])
    states = np.empty((steps, world.state_dim))
    obs = np.empty((world.n_agents, steps, world.obs_dim))
    for t in range(steps):
        states[t] = grid_state(agent_pos, landmark_pos)
        for i in range(world.n_agents):
            obs[i, t] = grid_observe(world, agent_pos, landmark_pos, i)
        step = moves[rng.integers(0, len(moves), size=world.n_agents)]
        agent_pos = np.clip(agent_pos + step, 0, world.size - 1)
    return states, obs


# ---------------------------------------------------------------------------
# auxiliary observation constructions


def build_history_aux(observations, t: int, m: int) -> np.ndarray:
    """Stack one agent's observations over the window t-m..t into one vector.

    Timesteps before the episode start are zero-padded.
    """
    observations = np.asarray(observations, dtype=np.float64)
    if observations.ndim != 2:
        raise ValueError("observations must be (timesteps, obs_dim)")
    if t < 0 or t >= observations.shape[0]:
        raise ValueError(f"timestep {t} outside 0..{observations.shape[0] - 1}")
    if m < 0:
        raise ValueError("window length m must be >= 0")
    obs_dim = observations.shape[1]
    parts = []
    for step in range(t - m, t + 1):
        parts.append(observations[step] if step >= 0 else np.zeros(obs_dim))
    return np.concatenate(parts)


def build_joint_aux(observations) -> np.ndarray:
    """Concatenate all agents' observations at one timestep, in agent order."""
    observations = [np.asarray(o, dtype=np.float64) for o in observations]
    if not observations:
        raise ValueError("need at least one agent observation")
    dim = observations[0].shape
    for o in observations[1:]:
        if o.shape != dim:
            raise ValueError(f"per-agent observation dims disagree: {o.shape} vs {dim}")
    return np.concatenate(observations)


# ---------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class RolloutSpec:
    """How to turn grid-world episodes into (x, s) pairs."""

    world: GridWorld
    episode_len: int = 50
    aux_mode: str = "history"  # "history" | "joint"
    window: int = 3

    def __post_init__(self):
        if self.aux_mode not in ("history", "joint"):
            raise ValueError(f"aux_mode must be 'history' or 'joint', got {self.aux_mode!r}")
        if self.episode_len < 1:
            raise ValueError("episode_len must be >= 1")
        if self.window < 0:
            raise ValueError("window must be >= 0")


@dataclass
class Dataset:
    xs: np.ndarray
    ss: np.ndarray
    meta: dict

    def __len__(self) -> int:
        return self.xs.shape[0]


def task_descriptor(source) -> dict:
    if isinstance(source, ConditionalGMM):
        return {
            "kind": "gmm",
            "num_modes": source.num_modes,
            "state_dim": source.state_dim,
            "cond_dim": source.cond_dim,
        }
    if isinstance(source, RolloutSpec):
        w = source.world
        return {
            "kind": "gridworld",
            "size": w.size,
            "agents": w.n_agents,
            "sight": w.sight,
            "landmarks": w.n_landmarks,
            "episode_len": source.episode_len,
            "aux_mode": source.aux_mode,
            "window": source.window,
        }
    raise ValueError(f"unknown dataset source {type(source).__name__}")


def generate_dataset(source, n_pairs: int, seed: int, extra_meta=None) -> Dataset:
    """Draw n_pairs (x, s) pairs from a GMM task or grid-world rollouts.

    GMM conditions are uniform on [-1, 1]^cond_dim.  Grid-world pairs come
    from consecutive rollout episodes: in history mode one pair per
    (timestep, agent), in joint mode one per timestep.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if isinstance(source, ConditionalGMM):
        xs = np.empty((n_pairs, source.cond_dim))
        ss = np.empty((n_pairs, source.state_dim))
        for i in range(n_pairs):
            rng = rng_stream(seed, "data", i)
            xs[i] = rng.uniform(-1.0, 1.0, size=source.cond_dim)
            ss[i] = gmm_sample(source, xs[i], rng)
    elif isinstance(source, RolloutSpec):
        xs_list, ss_list = [], []
        episode = 0
        while len(xs_list) < n_pairs:
            rng = rng_stream(seed, "episode", episode)
            states, obs = grid_rollout(source.world, source.episode_len, rng)
            for t in range(source.episode_len):
                if source.aux_mode == "history":
                    for agent in range(source.world.n_agents):
                        xs_list.append(build_history_aux(obs[agent], t, source.window))
                        ss_list.append(states[t])
                else:
                    xs_list.append(build_joint_aux([obs[a, t] for a in range(source.world.n_agents)]))
                    ss_list.append(states[t])
            episode += 1
        xs = np.stack(xs_list[:n_pairs])
        ss = np.stack(ss_list[:n_pairs])
    else:
        raise ValueError(f"unknown dataset source {type(source).__name__}")

    meta = {
        "task": task_descriptor(source),
        "seed": int(seed),
        "dims": {"x": int(xs.shape[1]), "s": int(ss.shape[1])},
        "n": int(n_pairs),
    }
    if extra_meta:
        meta["task"].update(extra_meta)
    return Dataset(xs, ss, meta)


def save_dataset(dataset: Dataset, path) -> None:
    """JSON Lines: one metadata header line, then one {"x", "s"} record per pair."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(dataset.meta, sort_keys=True, separators=(",", ":")) + "\n")
        for x, s in zip(dataset.xs, dataset.ss):
            record = {"x": [float(v) for v in x], "s": [float(v) for v in s]}
            fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def load_dataset(path) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        meta = json.loads(fh.readline())
        xs, ss = [], []
        for line in fh:
            record = json.loads(line)
            xs.append(record["x"])
            ss.append(record["s"])
    return Dataset(np.asarray(xs, dtype=np.float64), np.asarray(ss, dtype=np.float64), meta)
