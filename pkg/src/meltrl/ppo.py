"""Proximal policy optimization over the melt-pool environment.

Clipped-surrogate updates of a Gaussian policy (tanh-squashed MLP mean,
global learnable log-std) and a separate value MLP, trained from
synchronous full-episode rollouts across several environments.  All
gradients are the hand-written reverse-mode passes from :mod:`meltrl.mlp`.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .mlp import MLP, Adam, init_mlp, mlp_backward, mlp_forward, sgd_step

__all__ = [
    "PPOConfig",
    "PolicyParams",
    "RolloutBuffer",
    "policy_forward",
    "sample_action",
    "gae",
    "clipped_surrogate",
    "ppo_update",
    "collect_rollouts",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "LengthMismatch",
    "NonFiniteActivation",
    "NonFiniteGradient",
]

LOG_STD_MIN = np.log(1e-3)
LOG_STD_MAX = np.log(2.0)
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class LengthMismatch(Exception):
    pass


class NonFiniteActivation(Exception):
    """Network produced NaN/Inf; training should abort with diagnostics."""


class NonFiniteGradient(Exception):
    """Update produced NaN/Inf gradients; abort keeping the last good params."""


@dataclass
class PPOConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 10
    minibatch: int = 64
    lr: float = 3e-4
    n_envs: int = 8
    n_updates: int = 15000
    seed: int = 0
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    log_std_init: float = float(np.log(0.5))
    optimizer: str = "adam"  # or "sgd"
    hidden: int = 64
    checkpoint_every: int = 50

    def __post_init__(self):
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError("clip_eps must be in (0, 1)")
        for name in ("gamma", "lam"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        if self.n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class PolicyParams:
    """Policy mean network, value network and the global log-std."""

    policy: MLP
    value: MLP
    log_std: np.ndarray  # shape ()

    @classmethod
    def init(cls, obs_dim: int, cfg: PPOConfig, rng: np.random.Generator) -> "PolicyParams":
        dims = [obs_dim, cfg.hidden, cfg.hidden, 1]
        return cls(
            policy=init_mlp(dims, rng, out_scale=0.01),
            value=init_mlp(dims, rng),
            log_std=np.array(float(cfg.log_std_init)),
        )

    def arrays(self) -> list[np.ndarray]:
        return self.policy.arrays() + [self.log_std] + self.value.arrays()

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.policy.copy(), self.value.copy(), self.log_std.copy())


def policy_forward(params: PolicyParams, obs: np.ndarray):
    """Deterministic forward pass: (mean in [-1,1], log_std, value)."""
    single = np.ndim(obs) == 1
    mean, _ = mlp_forward(params.policy, obs, out_tanh=True)
    value, _ = mlp_forward(params.value, obs, out_tanh=False)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(value))):
        raise NonFiniteActivation("non-finite network output")
    log_std = float(params.log_std)
    if single:
        return float(mean[0]), log_std, float(value[0])
    return mean, log_std, value


def gaussian_log_prob(a: np.ndarray, mean: np.ndarray, log_std: float) -> np.ndarray:
    z = (a - mean) * np.exp(-log_std)
    return -0.5 * z * z - log_std - HALF_LOG_2PI


def sample_action(mean, log_std: float, rng: np.random.Generator):
    """Gaussian draw clamped to [-1, 1]; log-prob of the pre-clamp sample."""
    mean = np.asarray(mean, dtype=float)
    raw = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    logp = gaussian_log_prob(raw, mean, log_std)
    return np.clip(raw, -1.0, 1.0), logp


def gae(rewards, values, dones, gamma: float, lam: float, bootstrap=0.0):
    """Generalized advantage estimation over (T,) or (T, n_envs) arrays.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t, accumulated with
    factor gamma * lam; returns (advantages, returns-to-go).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if not (r.shape == v.shape == d.shape):
        raise LengthMismatch(f"shapes differ: {r.shape}, {v.shape}, {d.shape}")
    squeeze = r.ndim == 1
    if squeeze:
        r, v, d = r[:, None], v[:, None], d[:, None]
    T, n = r.shape
    boot = np.broadcast_to(np.asarray(bootstrap, dtype=float), (n,))
    adv = np.zeros_like(r)
    nxt = np.zeros(n)
    v_next = boot.copy()
    for t in range(T - 1, -1, -1):
        keep = 1.0 - d[t]
        delta = r[t] + gamma * v_next * keep - v[t]
        nxt = delta + gamma * lam * keep * nxt
        adv[t] = nxt
        v_next = v[t]
    ret = adv + v
    if squeeze:
        return adv[:, 0], ret[:, 0]
    return adv, ret


def clipped_surrogate(logp_new, logp_old, adv, eps: float):
    """Per-sample loss -min(r*A, clip(r)*A) and its gradient w.r.t. logp_new."""
    ratio = np.exp(np.asarray(logp_new) - np.asarray(logp_old))
    adv = np.asarray(adv, dtype=float)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    loss = -np.minimum(surr1, surr2)
    grad = np.where(surr1 <= surr2, -surr1, 0.0)
    return loss, grad


@dataclass
class RolloutBuffer:
    """Synchronous full-episode experience: arrays shaped (T, n_envs, ...)."""

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray = field(default=None)
    returns: np.ndarray = field(default=None)

    def __post_init__(self):
        T, n = self.rewards.shape
        for name in ("actions", "log_probs", "values", "dones"):
            if getattr(self, name).shape != (T, n):
                raise LengthMismatch(f"{name} shape {getattr(self, name).shape} != {(T, n)}")
        if self.obs.shape[:2] != (T, n):
            raise LengthMismatch("obs leading shape mismatch")

    @property
    def n_samples(self) -> int:
        return self.rewards.size

    def finalize(self, gamma: float, lam: float) -> None:
        self.advantages, self.returns = gae(self.rewards, self.values, self.dones, gamma, lam)

    def flat(self):
        T, n = self.rewards.shape
        return (
            self.obs.reshape(T * n, -1),
            self.actions.reshape(-1),
            self.log_probs.reshape(-1),
            self.advantages.reshape(-1),
            self.returns.reshape(-1),
        )


def collect_rollouts(envs: list, params: PolicyParams, seeds: list[int], rngs: list[np.random.Generator]):
    """Run one full episode in every env in lockstep with the given policy.

    Returns the rollout buffer plus each env's episodic reward sum.
    """
    n = len(envs)
    obs = np.stack([env.reset(seeds[i]) for i, env in enumerate(envs)])
    T = envs[0].n_steps
    obs_buf = np.empty((T, n, obs.shape[1]))
    act_buf = np.empty((T, n))
    logp_buf = np.empty((T, n))
    rew_buf = np.empty((T, n))
    val_buf = np.empty((T, n))
    done_buf = np.zeros((T, n))
    for t in range(T):
        mean, log_std, value = policy_forward(params, obs)
        obs_buf[t] = obs
        val_buf[t] = value
        for i, env in enumerate(envs):
            a, logp = sample_action(mean[i], log_std, rngs[i])
            o, r, done = env.step(float(a))
            act_buf[t, i] = a
            logp_buf[t, i] = logp
            rew_buf[t, i] = r
            done_buf[t, i] = float(done)
            obs[i] = o
    buf = RolloutBuffer(obs_buf, act_buf, logp_buf, rew_buf, val_buf, done_buf)
    return buf, rew_buf.sum(axis=0)


def ppo_update(
    params: PolicyParams,
    buffer: RolloutBuffer,
    cfg: PPOConfig,
    rng: np.random.Generator,
    opt: Adam | None = None,
) -> dict:
    """Clipped-surrogate epochs over shuffled minibatches, in place.

    Advantages are normalized once per update.  The total loss per
    minibatch is surrogate + value_coef * (V - R)^2 - entropy_coef * H.
    """
    if buffer.advantages is None:
        buffer.finalize(cfg.gamma, cfg.lam)
    obs, actions, logp_old, adv, ret = buffer.flat()
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(adv)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "n_minibatches": 0}
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch):
            idx = order[lo : lo + cfg.minibatch]
            o = obs[idx]
            B = len(idx)

            mean, p_cache = mlp_forward(params.policy, o, out_tanh=True)
            value, v_cache = mlp_forward(params.value, o, out_tanh=False)
            log_std = float(params.log_std)
            logp = gaussian_log_prob(actions[idx], mean, log_std)

            loss_vec, dlogp = clipped_surrogate(logp, logp_old[idx], adv[idx], cfg.clip_eps)
            dlogp = dlogp / B
            inv_var = np.exp(-2.0 * log_std)
            d_mean = dlogp * (actions[idx] - mean) * inv_var
            d_log_std = float(np.sum(dlogp * (((actions[idx] - mean) ** 2) * inv_var - 1.0)))
            d_log_std -= cfg.entropy_coef  # dH/dlog_std = 1
            g_policy = mlp_backward(params.policy, p_cache, d_mean, out_tanh=True)

            verr = value - ret[idx]
            d_value = cfg.value_coef * 2.0 * verr / B
            g_value = mlp_backward(params.value, v_cache, d_value, out_tanh=False)

            grads = g_policy.arrays() + [np.asarray(d_log_std)] + g_value.arrays()
            if not all(np.all(np.isfinite(g)) for g in grads):
                raise NonFiniteGradient("non-finite gradient in update")
            arrays = params.arrays()
            if opt is not None and cfg.optimizer == "adam":
                opt.step(arrays, grads)
            else:
                sgd_step(arrays, grads, cfg.lr)
            params.log_std[...] = np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX)

            stats["policy_loss"] += float(loss_vec.mean())
            stats["value_loss"] += float(np.mean(verr**2))
            stats["n_minibatches"] += 1
    for k in ("policy_loss", "value_loss"):
        stats[k] /= max(stats["n_minibatches"], 1)
    return stats


def ppo_loss(params: PolicyParams, obs, actions, logp_old, adv, ret, cfg: PPOConfig) -> float:
    """Scalar full-batch loss (used by the finite-difference gradient checks)."""
    mean, _ = mlp_forward(params.policy, obs, out_tanh=True)
    value, _ = mlp_forward(params.value, obs, out_tanh=False)
    logp = gaussian_log_prob(actions, mean, float(params.log_std))
    loss_vec, _ = clipped_surrogate(logp, logp_old, adv, cfg.clip_eps)
    entropy = float(params.log_std) + 0.5 * np.log(2.0 * np.pi * np.e)
    return (
        float(loss_vec.mean())
        + cfg.value_coef * float(np.mean((value - ret) ** 2))
        - cfg.entropy_coef * entropy
    )


def train(
    envs: list,
    cfg: PPOConfig,
    *,
    params: PolicyParams | None = None,
    start_update: int = 0,
    on_update=None,
    checkpoint_cb=None,
):
    """Synchronous PPO driver: one full episode per env per update.

    ``on_update(record)`` receives per-update metrics; ``checkpoint_cb``
    is called periodically and always with the last good parameters if an
    update aborts on non-finite gradients.
    """
    ss = np.random.SeedSequence(cfg.seed)
    children = ss.spawn(cfg.n_envs + 2)
    rngs = [np.random.default_rng(c) for c in children[: cfg.n_envs]]
    shuffle_rng = np.random.default_rng(children[cfg.n_envs])
    init_rng = np.random.default_rng(children[cfg.n_envs + 1])

    if params is None:
        params = PolicyParams.init(envs[0].obs_dim, cfg, init_rng)
    opt = Adam(params.arrays(), cfg.lr) if cfg.optimizer == "adam" else None

    records = []
    for update in range(start_update, cfg.n_updates):
        seeds = [cfg.seed * 1000003 + update * 131 + i for i in range(cfg.n_envs)]
        last_good = params.copy()
        try:
            buf, ep_rewards = collect_rollouts(envs, params, seeds, rngs)
            stats = ppo_update(params, buf, cfg, shuffle_rng, opt)
        except (NonFiniteActivation, NonFiniteGradient):
            if checkpoint_cb is not None:
                checkpoint_cb(update, last_good)
            raise
        depths = np.concatenate([env.trace.depths() for env in envs])
        rec = {
            "update": update,
            "mean_episode_reward": float(ep_rewards.mean()),
            "depth_std_um": float(depths.std()),
            "depth_mean_um": float(depths.mean()),
            **stats,
        }
        records.append(rec)
        if on_update is not None:
            on_update(rec)
        if checkpoint_cb is not None and (
            (update + 1) % cfg.checkpoint_every == 0 or update + 1 == cfg.n_updates
        ):
            checkpoint_cb(update + 1, params)
    return params, records


CHECKPOINT_MAGIC = b"PPOC"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: PolicyParams, *, update: int = 0, cfg: PPOConfig | None = None, seed: int = 0):
    """Binary checkpoint: magic, version, layer-dim table, all params f64.

    Parameter order: policy W1,b1,W2,b2,W3,b3, log_std, value W1..b3; a
    sidecar JSON (same path + ``.meta.json``) records update count, config
    and seed.
    """
    dims = params.policy.dims
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for arr in params.arrays():
            fh.write(np.asarray(arr, dtype="<f8").ravel().tobytes())
    meta = {"update": update, "seed": seed, "config": asdict(cfg) if cfg else None}
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError("not a policy checkpoint")
        version, ndims = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        dims = list(struct.unpack(f"<{ndims}I", fh.read(4 * ndims)))

        def read_arr(shape):
            count = int(np.prod(shape))
            return np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()

        def read_mlp():
            ws, bs = [], []
            for i in range(len(dims) - 1):
                ws.append(read_arr((dims[i], dims[i + 1])))
                bs.append(read_arr((dims[i + 1],)))
            return MLP(ws, bs)

        policy = read_mlp()
        log_std = read_arr(()).reshape(())
        value = read_mlp()
    params = PolicyParams(policy, value, np.array(float(log_std)))
    meta = {}
    try:
        with open(str(path) + ".meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        pass
    return params, meta
