"""Soft Actor-Critic with twin critics, twin targets and learned temperature."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigError, NumericError
from .nn import Adam, Network, mlp

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class SacConfig:
    gamma: float = 0.95
    tau: float = 0.005
    actor_lr: float = 0.0005
    critic_lr: float = 0.001
    alpha_lr: float = 0.001
    buffer_size: int = 500
    batch_size: int = 64
    init_alpha: float = 0.1
    # None means -(action dimension)
    target_entropy: float | None = None
    gradient_steps: int = 1
    warmup_steps: int = 500
    hidden: tuple = (64, 64)

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        for name in ("actor_lr", "critic_lr", "alpha_lr", "init_alpha"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ConfigError("need 1 <= batch_size <= buffer_size")
        if self.gradient_steps < 0 or self.warmup_steps < 0:
            raise ConfigError("gradient_steps and warmup_steps must be >= 0")

    @classmethod
    def large_buffer(cls, **kw):
        """Large-replay preset (1e6 buffer, batch 256, gamma 0.99)."""
        base = dict(gamma=0.99, buffer_size=1_000_000, batch_size=256, actor_lr=0.0005, critic_lr=0.0005)
        base.update(kw)
        return cls(**base)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions."""

    def __init__(self, capacity, obs_dim, act_dim):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.act = np.zeros((capacity, act_dim))
        self.raw = np.zeros((capacity, act_dim))
        self.rew = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def add(self, obs, act, rew, next_obs, done, raw=None):
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.act[i] = act
        self.raw[i] = np.arctanh(np.clip(act, -1 + 1e-12, 1 - 1e-12)) if raw is None else raw
        self.rew[i] = rew
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.inserted += 1

    def _order(self):
        n = len(self)
        start = self.inserted - n
        return (np.arange(start, start + n)) % self.capacity

    def contents(self):
        """Stored transitions oldest first, as a dict of arrays."""
        idx = self._order()
        return self._take(idx)

    def _take(self, idx):
        return {
            "obs": self.obs[idx],
            "act": self.act[idx],
            "raw": self.raw[idx],
            "rew": self.rew[idx],
            "next_obs": self.next_obs[idx],
            "done": self.done[idx],
        }

    def sample(self, batch_size, rng):
        n = len(self)
        if n == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self._take(rng.integers(0, n, size=batch_size))

    def state_dict(self):
        idx = self._order()
        d = {k: v.tolist() for k, v in self._take(idx).items()}
        d["inserted"] = self.inserted
        return d

    def load_state_dict(self, d):
        n = len(d["rew"])
        self.inserted = int(d["inserted"])
        idx = (np.arange(self.inserted - n, self.inserted)) % self.capacity
        for key in ("obs", "act", "raw", "rew", "next_obs", "done"):
            getattr(self, key)[idx] = np.asarray(d[key], dtype=np.float64).reshape(
                (n,) + getattr(self, key).shape[1:]
            )


def squashed_gaussian_log_prob(u, mean, log_std):
    """log density of a = tanh(u) with u ~ N(mean, exp(log_std)), summed over the last axis."""
    std = np.exp(log_std)
    z = (u - mean) / std
    a = np.tanh(u)
    per_dim = -0.5 * z * z - log_std - 0.5 * LOG_2PI - np.log(1.0 - a * a + SQUASH_EPS)
    return per_dim.sum(axis=-1)


class SacAgent:
    def __init__(self, obs_dim, act_dim, config=None, seed=0):
        self.config = config or SacConfig()
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        cfg = self.config
        seeds = np.random.SeedSequence(seed).generate_state(4)
        hidden = list(cfg.hidden)
        self.actor = mlp([obs_dim] + hidden + [2 * act_dim], seed=int(seeds[0]))
        self.critic1 = mlp([obs_dim + act_dim] + hidden + [1], seed=int(seeds[1]))
        self.critic2 = mlp([obs_dim + act_dim] + hidden + [1], seed=int(seeds[2]))
        self.target1 = self.critic1.copy()
        self.target2 = self.critic2.copy()
        self.log_alpha = np.array([math.log(cfg.init_alpha)])
        self.target_entropy = -float(act_dim) if cfg.target_entropy is None else float(cfg.target_entropy)
        self.actor_opt = Adam(self.actor.params, cfg.actor_lr)
        self.critic1_opt = Adam(self.critic1.params, cfg.critic_lr)
        self.critic2_opt = Adam(self.critic2.params, cfg.critic_lr)
        self.alpha_opt = Adam([self.log_alpha], cfg.alpha_lr)
        self.rng = np.random.default_rng(int(seeds[3]))
        self.buffer = ReplayBuffer(cfg.buffer_size, obs_dim, act_dim)
        self.env_steps = 0
        self.updates = 0

    @property
    def alpha(self):
        return float(math.exp(self.log_alpha[0]))

    # -- policy -------------------------------------------------------------

    def policy_params(self, obs):
        out = self.actor.forward(obs)
        mean = out[..., : self.act_dim]
        raw_log_std = out[..., self.act_dim:]
        return mean, np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX), raw_log_std

    def select_action(self, obs, deterministic=False):
        """Return ``(action, log_prob)`` for one observation (or a batch)."""
        obs = np.asarray(obs, dtype=np.float64)
        if not np.all(np.isfinite(obs)):
            raise NumericError("non-finite state passed to select_action")
        mean, log_std, _ = self.policy_params(obs)
        if deterministic:
            u = mean
        else:
            u = mean + np.exp(log_std) * self.rng.standard_normal(mean.shape)
        logp = squashed_gaussian_log_prob(u, mean, log_std)
        return np.tanh(u), logp

    def random_action(self):
        a = self.rng.uniform(-1.0, 1.0, size=self.act_dim)
        return a, -self.act_dim * math.log(2.0)

    # -- losses -------------------------------------------------------------

    def _q(self, net, obs, act):
        return net.forward(np.concatenate([obs, act], axis=1))[:, 0]

    def compute_target(self, batch):
        """Bootstrapped soft target y for a batch; no gradient is tracked."""
        next_act, next_logp = self.select_action(batch["next_obs"])
        q1 = self._q(self.target1, batch["next_obs"], next_act)
        q2 = self._q(self.target2, batch["next_obs"], next_act)
        return soft_target(batch["rew"], batch["done"], q1, q2, next_logp, self.alpha, self.config.gamma)

    def update_critics(self, batch, y=None):
        if y is None:
            y = self.compute_target(batch)
        losses = []
        n = len(y)
        for net, opt in ((self.critic1, self.critic1_opt), (self.critic2, self.critic2_opt)):
            q = self._q(net, batch["obs"], batch["act"])
            resid = q - y
            losses.append(float(np.mean(resid * resid)))
            grads, _ = net.backward((2.0 * resid / n)[:, None])
            opt.step(grads)
        return losses

    def actor_loss_and_grads(self, obs, noise):
        """Actor objective with frozen reparameterisation noise.

        Returns ``(loss, grads, log_prob)`` where grads are aligned with the
        actor parameters and the critics are left untouched.
        """
        n = obs.shape[0]
        alpha = self.alpha
        out = self.actor.forward(obs)
        mean = out[:, : self.act_dim]
        raw_log_std = out[:, self.act_dim:]
        log_std = np.clip(raw_log_std, LOG_STD_MIN, LOG_STD_MAX)
        std = np.exp(log_std)
        u = mean + std * noise
        a = np.tanh(u)
        logp = squashed_gaussian_log_prob(u, mean, log_std)

        x = np.concatenate([obs, a], axis=1)
        q1 = self.critic1.forward(x)[:, 0]
        q2 = self.critic2.forward(x)[:, 0]
        pick1 = q1 <= q2
        q_min = np.where(pick1, q1, q2)
        loss = float(np.mean(alpha * logp - q_min))

        _, dx1 = self.critic1.backward((-pick1.astype(float) / n)[:, None])
        _, dx2 = self.critic2.backward((-(~pick1).astype(float) / n)[:, None])
        d_a = dx1[:, self.obs_dim:] + dx2[:, self.obs_dim:]
        d_a += (alpha / n) * 2.0 * a / (1.0 - a * a + SQUASH_EPS)
        d_u = d_a * (1.0 - a * a)
        d_mean = d_u
        d_log_std = d_u * std * noise - alpha / n
        d_log_std = d_log_std * ((raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX))
        grads, _ = self.actor.backward(np.concatenate([d_mean, d_log_std], axis=1))
        return loss, grads, logp

    def update_actor(self, batch):
        obs = batch["obs"]
        noise = self.rng.standard_normal((obs.shape[0], self.act_dim))
        loss, grads, logp = self.actor_loss_and_grads(obs, noise)
        self.actor_opt.step(grads)
        return loss, logp

    def update_temperature(self, logp):
        grad = temperature_gradient(self.alpha, logp, self.target_entropy)
        self.alpha_opt.step([np.array([grad])])
        return self.alpha

    def soft_update(self):
        tau = self.config.tau
        for critic, target in ((self.critic1, self.target1), (self.critic2, self.target2)):
            soft_update(target.params, critic.params, tau)

    def update(self):
        """One gradient step of the full algorithm; returns diagnostics."""
        batch = self.buffer.sample(self.config.batch_size, self.rng)
        y = self.compute_target(batch)
        c1, c2 = self.update_critics(batch, y)
        actor_loss, logp = self.update_actor(batch)
        alpha = self.update_temperature(logp)
        self.soft_update()
        self.updates += 1
        stats = {"critic_loss": 0.5 * (c1 + c2), "actor_loss": actor_loss, "alpha": alpha}
        if not all(math.isfinite(v) for v in stats.values()):
            raise NumericError("non-finite loss during SAC update", snapshot=dict(stats, updates=self.updates))
        return stats

    def soft_value_estimate(self, obs, samples=16):
        """Monte-Carlo soft state value E_a[min Q(s,a) - alpha log pi(a|s)] (diagnostic only)."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        vals = np.zeros(obs.shape[0])
        for _ in range(samples):
            a, logp = self.select_action(obs)
            q = np.minimum(self._q(self.critic1, obs, a), self._q(self.critic2, obs, a))
            vals += q - self.alpha * logp
        return vals / samples

    # -- checkpoints --------------------------------------------------------

    def state_dict(self):
        return {
            "config": asdict(self.config),
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "log_alpha": float(self.log_alpha[0]),
            "env_steps": self.env_steps,
            "updates": self.updates,
            "rng_state": self.rng.bit_generator.state,
            "networks": {name: getattr(self, name).to_dict() for name in _NETS},
            "optimizers": {name: getattr(self, name).state_dict() for name in _OPTS},
            "buffer": self.buffer.state_dict(),
        }

    @classmethod
    def from_state_dict(cls, d):
        known = {f.name for f in fields(SacConfig)}
        cfg = SacConfig(**{k: v for k, v in d["config"].items() if k in known})
        agent = cls(d["obs_dim"], d["act_dim"], cfg)
        for name in _NETS:
            src = Network.from_dict(d["networks"][name])
            for dst, s in zip(getattr(agent, name).params, src.params):
                dst[...] = s
        for name in _OPTS:
            getattr(agent, name).load_state_dict(d["optimizers"][name])
        agent.log_alpha[0] = d["log_alpha"]
        agent.env_steps = d["env_steps"]
        agent.updates = d["updates"]
        agent.rng.bit_generator.state = d["rng_state"]
        agent.buffer.load_state_dict(d["buffer"])
        return agent

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.state_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_state_dict(json.load(fh))


_NETS = ("actor", "critic1", "critic2", "target1", "target2")
_OPTS = ("actor_opt", "critic1_opt", "critic2_opt", "alpha_opt")


def soft_target(rew, done, q1_next, q2_next, next_logp, alpha, gamma):
    return rew + gamma * (1.0 - done) * (np.minimum(q1_next, q2_next) - alpha * next_logp)


def temperature_gradient(alpha, logp, target_entropy):
    """d/d(log alpha) of mean(-alpha * log_pi - alpha * H0)."""
    return -alpha * float(np.mean(logp + target_entropy))


def soft_update(target_params, source_params, tau):
    for t, s in zip(target_params, source_params):
        if t.shape != s.shape:
            raise ValueError(f"soft update shape mismatch {t.shape} vs {s.shape}")
        if tau == 1.0:
            t[...] = s
        elif tau != 0.0:
            t *= 1.0 - tau
            t += tau * s


# -- training loop ---------------------------------------------------------


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    entropy_term: float
    alpha: float
    critic_loss: float
    actor_loss: float
    info: dict = field(default_factory=dict)

    @property
    def objective(self):
        return self.ret + self.entropy_term


CURVE_HEADER = ["episode", "return", "entropy_term", "alpha", "critic_loss", "actor_loss"]


def train(env, episodes, config=None, seed=0, agent=None, env_seeds=None, on_episode=None):
    """Run the interleaved collect/update loop.

    ``env`` must provide ``obs_dim``, ``act_dim``, ``reset(seed) -> obs`` and
    ``step(action) -> (obs, reward, done, info)`` with actions in (-1, 1).
    Episode ``k`` resets the environment with ``env_seeds[k]`` (default
    ``seed + k``). Returns ``(agent, curve)``.
    """
    if agent is None:
        agent = SacAgent(env.obs_dim, env.act_dim, config, seed=seed)
    cfg = agent.config
    curve = []
    for ep in range(episodes):
        env_seed = env_seeds[ep] if env_seeds is not None else seed + ep
        obs = env.reset(seed=env_seed)
        done = False
        ret = ent = 0.0
        closs, aloss = [], []
        while not done:
            alpha = agent.alpha
            if agent.env_steps < cfg.warmup_steps:
                act, logp = agent.random_action()
            else:
                act, logp = agent.select_action(obs)
            next_obs, rew, done, info = env.step(act)
            agent.buffer.add(obs, act, rew, next_obs, done)
            agent.env_steps += 1
            ret += rew
            ent += alpha * -float(logp)
            obs = next_obs
            if agent.env_steps >= cfg.warmup_steps and len(agent.buffer) >= cfg.batch_size:
                for _ in range(cfg.gradient_steps):
                    stats = agent.update()
                    closs.append(stats["critic_loss"])
                    aloss.append(stats["actor_loss"])
        log = EpisodeLog(
            episode=ep,
            ret=float(ret),
            entropy_term=float(ent),
            alpha=agent.alpha,
            critic_loss=float(np.mean(closs)) if closs else 0.0,
            actor_loss=float(np.mean(aloss)) if aloss else 0.0,
        )
        curve.append(log)
        if on_episode is not None:
            on_episode(log)
    return agent, curve


def write_curve(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_HEADER)
        for log in curve:
            w.writerow([log.episode, repr(log.ret), repr(log.entropy_term), repr(log.alpha),
                        repr(log.critic_loss), repr(log.actor_loss)])
