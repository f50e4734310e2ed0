"""Interval-stepped discrete-event simulation of sensor tasks on edge nodes.

Each decision interval the policy supplies routing shares ``w`` and compute
fractions ``f``. Tasks arriving during the interval are dispatched to a node
by inverse-CDF lookup of a pre-drawn uniform against ``w`` (so paired seeds
see common random numbers across policies), travel over the node's link,
then wait in that node's FIFO queue served at ``f_j * F_j`` cycles/s.

A task *resolves* exactly once: on completion if it finished within its
deadline, otherwise at the moment its deadline passes. Processing accuracy
is on-time resolutions over all resolutions.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, StateError


@dataclass
class EdgeNodeSpec:
    id: int
    capacity: float = 700.0
    cpu_hz: float = 3.5e9
    memory_bytes: float = 16 * 2**30
    bandwidth_bps: float = 1e9

    def __post_init__(self):
        if self.cpu_hz <= 0 or self.bandwidth_bps <= 0:
            raise ConfigError(f"node {self.id}: cpu_hz and bandwidth_bps must be positive")
        if self.capacity <= 0:
            raise ConfigError(f"node {self.id}: capacity must be positive")


def default_nodes(n=5):
    caps = np.linspace(400.0, 1000.0, n) if n > 1 else [700.0]
    return [EdgeNodeSpec(id=i, capacity=float(c)) for i, c in enumerate(caps)]


@dataclass
class WorkloadConfig:
    athletes: int = 10
    rate_per_athlete: float = 1.2
    size_log_mean: float = math.log(4e5)
    size_log_sigma: float = 0.5
    cycles_per_bit: float = 2000.0
    deadline_s: float = 1.0
    episode_s: float = 300.0
    interval_s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.athletes < 1:
            raise ConfigError("athletes must be >= 1")
        if self.rate_per_athlete <= 0:
            raise ConfigError("rate_per_athlete must be > 0")
        if self.episode_s <= 0 or self.interval_s <= 0 or self.deadline_s <= 0:
            raise ConfigError("episode_s, interval_s and deadline_s must be > 0")
        if self.size_log_sigma < 0 or self.cycles_per_bit <= 0:
            raise ConfigError("invalid size or cycle parameters")

    @property
    def n_intervals(self):
        return int(math.ceil(self.episode_s / self.interval_s - 1e-9))


@dataclass
class EnvParams:
    kappa: float = 1e-28
    idle_power_w: float = 1.0
    w_latency: float = 1.0
    w_accuracy: float = 1.0
    w_energy: float = 0.2
    w_utilization: float = 0.2
    # latency penalty saturates at this many deadlines
    latency_cap: float = 5.0
    f_min: float = 0.1
    routing_gain: float = 3.0
    # raw action value at which a compute fraction reaches 1 (1.0 gives a plain linear map)
    full_speed_at: float = 0.0
    admission_cap: bool = False
    # discard queued tasks whose deadline passed before service started
    drop_expired: bool = True
    queue_norm: float = 20.0
    backlog_horizon_s: float = 2.0
    history_window: int = 10

    def __post_init__(self):
        if not 0.0 < self.f_min <= 1.0:
            raise ConfigError("f_min must be in (0, 1]")
        if not -1.0 < self.full_speed_at <= 1.0:
            raise ConfigError("full_speed_at must be in (-1, 1]")
        if self.kappa < 0 or self.idle_power_w < 0:
            raise ConfigError("kappa and idle_power_w must be >= 0")


@dataclass
class Scenario:
    nodes: list = field(default_factory=default_nodes)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    params: EnvParams = field(default_factory=EnvParams)

    def __post_init__(self):
        if not self.nodes:
            raise ConfigError("scenario needs at least one edge node")

    def to_dict(self):
        return {
            "nodes": [asdict(n) for n in self.nodes],
            "workload": asdict(self.workload),
            "params": asdict(self.params),
        }


@dataclass
class AllocationAction:
    shares: np.ndarray
    fractions: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.shares, dtype=np.float64)
        f = np.asarray(self.fractions, dtype=np.float64)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(f))):
            raise NumericError("allocation action has non-finite components")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("routing shares must be non-negative with positive sum")
        if np.any(f <= 0) or np.any(f > 1):
            raise ValueError("compute fractions must lie in (0, 1]")
        self.shares = w / w.sum()
        self.fractions = f


def action_from_raw(raw, n_nodes, f_min=0.1, routing_gain=3.0, full_speed_at=0.0):
    """Map an agent output in [-1, 1]^(2N) to a valid allocation.

    First N components are routing logits (softmax with ``routing_gain``),
    the last N become compute fractions rising linearly from ``f_min`` at
    a = -1 to 1 at ``a = full_speed_at`` and staying at 1 above it. With
    ``full_speed_at = 1`` this is ``f_min + (1 - f_min) * (a + 1) / 2``.
    """
    raw = np.asarray(raw, dtype=np.float64).reshape(-1)
    if raw.shape[0] != 2 * n_nodes:
        raise ValueError(f"expected {2 * n_nodes} action components, got {raw.shape[0]}")
    if not np.all(np.isfinite(raw)):
        raise NumericError("non-finite action components")
    raw = np.clip(raw, -1.0, 1.0)
    z = routing_gain * raw[:n_nodes]
    e = np.exp(z - z.max())
    f = f_min + (1.0 - f_min) * np.minimum((raw[n_nodes:] + 1.0) / (1.0 + full_speed_at), 1.0)
    return AllocationAction(e / e.sum(), np.clip(f, f_min, 1.0))


@dataclass
class MetricsRecord:
    mean_response_ms: float
    accuracy_pct: float
    energy_j: float
    utilization_pct: float

    FIELDS = ("mean_response_ms", "accuracy_pct", "energy_j", "utilization_pct")

    def as_array(self):
        return np.array([getattr(self, k) for k in self.FIELDS])


class EdgeEnv:
    """Reset/step environment over a :class:`Scenario`."""

    def __init__(self, scenario=None):
        self.scenario = scenario or Scenario()
        self.n = len(self.scenario.nodes)
        self.obs_dim = 3 * self.n + 2
        self.act_dim = 2 * self.n
        self._done = True
        self.cpu = np.array([nd.cpu_hz for nd in self.scenario.nodes])
        self.bw = np.array([nd.bandwidth_bps for nd in self.scenario.nodes])
        self.caps = np.array([nd.capacity for nd in self.scenario.nodes])

    # -- schedule -----------------------------------------------------------

    def sample_schedule(self, seed):
        wl = self.scenario.workload
        rng = np.random.default_rng(seed)
        counts = rng.poisson(wl.rate_per_athlete * wl.episode_s, size=wl.athletes)
        times = rng.uniform(0.0, wl.episode_s, size=int(counts.sum()))
        athlete = np.repeat(np.arange(wl.athletes), counts)
        order = np.lexsort((athlete, times))
        times, athlete = times[order], athlete[order]
        size = rng.lognormal(wl.size_log_mean, wl.size_log_sigma, size=times.shape[0])
        u = rng.uniform(0.0, 1.0, size=times.shape[0])
        return {
            "arrival": times,
            "athlete": athlete,
            "size": size,
            "cycles": size * wl.cycles_per_bit,
            "route_u": u,
        }

    # -- contract -----------------------------------------------------------

    def reset(self, seed=None):
        wl = self.scenario.workload
        if seed is None:
            seed = wl.seed
        self.seed = seed
        self.sched = self.sample_schedule(seed)
        m = self.sched["arrival"].shape[0]
        self.n_tasks = m
        # 0 pending, 1 on time, 2 late, 3 rejected, 4 dropped
        self.status = np.zeros(m, dtype=np.int8)
        self.node_of = np.full(m, -1, dtype=np.int64)
        self.ready = np.full(m, np.inf)
        self.remaining = self.sched["cycles"].copy()
        self.completion = np.full(m, np.nan)
        self.queues = [deque() for _ in range(self.n)]
        self.t = 0.0
        self.k = 0
        self.next_task = 0
        self.next_deadline = 0
        self.last_util = np.zeros(self.n)
        self.last_arrivals = 0
        self._done = False
        self.totals = {
            "response_sum": 0.0,
            "completed": 0,
            "on_time": 0,
            "resolved": 0,
            "energy": 0.0,
            "util_sum": 0.0,
            "intervals": 0,
        }
        return self.observe()

    @property
    def done(self):
        return self._done

    def observe(self):
        wl = self.scenario.workload
        p = self.scenario.params
        qlen = np.array([len(q) for q in self.queues], dtype=np.float64)
        backlog = np.array([sum(self.remaining[i] for i in q) for q in self.queues])
        expected = wl.athletes * wl.rate_per_athlete * wl.interval_s
        return np.concatenate([
            np.minimum(qlen / p.queue_norm, 1.0),
            self.last_util,
            np.minimum(backlog / (self.cpu * p.backlog_horizon_s), 1.0),
            [self.last_arrivals / expected, min(self.t / wl.episode_s, 1.0)],
        ])

    def idle_energy(self):
        return self.n * self.scenario.params.idle_power_w * self.scenario.workload.interval_s

    def step(self, action):
        """Advance one decision interval.

        ``action`` is an :class:`AllocationAction` or a raw agent vector in
        [-1, 1]^(2N). Returns ``(state, reward, done, info)``; ``info``
        carries the interval :class:`MetricsRecord` and per-node counters.
        """
        if self._done:
            raise StateError("step called on a finished episode; call reset first")
        p = self.scenario.params
        wl = self.scenario.workload
        if not isinstance(action, AllocationAction):
            action = action_from_raw(action, self.n, p.f_min, p.routing_gain, p.full_speed_at)
        if action.shares.shape[0] != self.n:
            raise ValueError("action size does not match node count")
        t0 = self.t
        t1 = min(t0 + wl.interval_s, wl.episode_s)
        dt = t1 - t0
        s = self.sched

        # dispatch arrivals of this interval
        lo = self.next_task
        hi = int(np.searchsorted(s["arrival"], t1, side="left"))
        if self.k == wl.n_intervals - 1:
            hi = self.n_tasks
        cum = np.cumsum(action.shares)
        cum[-1] = 1.0
        admitted = np.zeros(self.n, dtype=np.int64)
        cap = np.floor(self.caps / 100.0)
        for i in range(lo, hi):
            j = min(int(np.searchsorted(cum, s["route_u"][i], side="right")), self.n - 1)
            if p.admission_cap and admitted[j] >= cap[j]:
                self.status[i] = 3
                continue
            admitted[j] += 1
            self.node_of[i] = j
            self.ready[i] = s["arrival"][i] + s["size"][i] / self.bw[j]
            self.queues[j].append(i)
        self.next_task = hi
        self.last_arrivals = hi - lo

        # serve queues
        rates = action.fractions * self.cpu
        busy = np.zeros(self.n)
        executed = np.zeros(self.n)
        completed_per_node = np.zeros(self.n, dtype=np.int64)
        dropped_per_node = np.zeros(self.n, dtype=np.int64)
        resp_sum = 0.0
        n_done = 0
        on_time = 0
        for j in range(self.n):
            q = self.queues[j]
            if len(q) > 1:
                # keep FIFO by link-arrival time; transmission delays can reorder slightly
                q = deque(sorted(q, key=lambda i: (self.ready[i], i)))
                self.queues[j] = q
            clock = t0
            rate = rates[j]
            while q:
                i = q[0]
                start = max(clock, self.ready[i])
                if start >= t1:
                    break
                if (p.drop_expired and start > s["arrival"][i] + wl.deadline_s
                        and self.remaining[i] == s["cycles"][i]):
                    q.popleft()
                    self.status[i] = 4
                    dropped_per_node[j] += 1
                    continue
                need = self.remaining[i] / rate
                if start + need <= t1:
                    finish = start + need
                    busy[j] += need
                    executed[j] += self.remaining[i]
                    self.remaining[i] = 0.0
                    q.popleft()
                    clock = finish
                    resp = finish - s["arrival"][i]
                    self.completion[i] = finish
                    if resp <= wl.deadline_s:
                        self.status[i] = 1
                        on_time += 1
                    else:
                        self.status[i] = 2
                    completed_per_node[j] += 1
                    resp_sum += resp
                    n_done += 1
                else:
                    work = (t1 - start) * rate
                    busy[j] += t1 - start
                    executed[j] += work
                    self.remaining[i] -= work
                    break

        # deadline expiries falling in this interval
        last = self.k == wl.n_intervals - 1
        dl_hi = int(np.searchsorted(s["arrival"] + wl.deadline_s, t1, side="left"))
        if last:
            dl_hi = int(np.searchsorted(s["arrival"] + wl.deadline_s, t1, side="right"))
        expired = dl_hi - self.next_deadline
        failed = int(np.count_nonzero(self.status[self.next_deadline:dl_hi] != 1))
        self.next_deadline = dl_hi
        resolved = on_time + failed

        util = np.clip(busy / dt, 0.0, 1.0)
        energy = float(np.sum(p.kappa * rates ** 2 * executed)) + self.n * p.idle_power_w * dt
        mean_resp = resp_sum / n_done if n_done else 0.0
        acc = on_time / resolved if resolved else 0.0
        energy_norm = self.idle_energy() * 10.0
        reward = (
            -p.w_latency * min(mean_resp / wl.deadline_s, p.latency_cap)
            + p.w_accuracy * acc
            - p.w_energy * (energy / energy_norm)
            + p.w_utilization * float(util.mean())
        )

        tot = self.totals
        tot["response_sum"] += resp_sum
        tot["completed"] += n_done
        tot["on_time"] += on_time
        tot["resolved"] += resolved
        tot["energy"] += energy
        tot["util_sum"] += float(util.mean())
        tot["intervals"] += 1

        self.t = t1
        self.k += 1
        self.last_util = util
        self._done = self.k >= wl.n_intervals
        metrics = MetricsRecord(
            mean_response_ms=1000.0 * mean_resp,
            accuracy_pct=100.0 * acc,
            energy_j=energy,
            utilization_pct=100.0 * float(util.mean()),
        )
        info = {
            "metrics": metrics,
            "completed_per_node": completed_per_node,
            "dropped_per_node": dropped_per_node,
            "cycles_executed": executed,
            "busy_s": busy,
            "utilization": util,
            "arrivals": hi - lo,
            "expired": expired,
            "resolved": resolved,
            "on_time": on_time,
            "action": action,
        }
        return self.observe(), float(reward), self._done, info

    def episode_metrics(self):
        tot = self.totals
        return MetricsRecord(
            mean_response_ms=1000.0 * tot["response_sum"] / tot["completed"] if tot["completed"] else 0.0,
            accuracy_pct=100.0 * tot["on_time"] / tot["resolved"] if tot["resolved"] else 0.0,
            energy_j=tot["energy"],
            utilization_pct=100.0 * tot["util_sum"] / tot["intervals"] if tot["intervals"] else 0.0,
        )

    def task_outcomes(self):
        """Counts of arrived tasks by final state: on_time, late, dropped, queued, rejected."""
        arrived = self.status[: self.next_task]
        return {
            "arrived": int(self.next_task),
            "on_time": int(np.count_nonzero(arrived == 1)),
            "late": int(np.count_nonzero(arrived == 2)),
            "dropped": int(np.count_nonzero(arrived == 4)),
            "queued": int(sum(len(q) for q in self.queues)),
            "rejected": int(np.count_nonzero(arrived == 3)),
        }


# -- allocation policies ----------------------------------------------------


def baseline_average(state, n_nodes):
    """Uniform routing, full compute on every node."""
    return AllocationAction(np.full(n_nodes, 1.0 / n_nodes), np.ones(n_nodes))


def baseline_frequency(state, history, n_nodes, window=10):
    """Route in proportion to 1 + completed tasks per node over the last ``window`` intervals."""
    counts = np.zeros(n_nodes)
    for row in list(history)[-window:]:
        row = np.asarray(row, dtype=np.float64)
        if np.any(row < 0):
            raise ValueError("history counts must be non-negative")
        counts += row
    w = 1.0 + counts
    return AllocationAction(w / w.sum(), np.ones(n_nodes))


class Policy:
    name = "policy"

    def reset(self, env):
        self.n = env.n

    def act(self, state):
        raise NotImplementedError

    def observe(self, info):
        pass


class AveragePolicy(Policy):
    name = "average"

    def act(self, state):
        return baseline_average(state, self.n)


class FrequencyPolicy(Policy):
    name = "frequency"

    def __init__(self, window=10):
        self.window = window

    def reset(self, env):
        super().reset(env)
        self.history = deque(maxlen=self.window)

    def act(self, state):
        return baseline_frequency(state, self.history, self.n, self.window)

    def observe(self, info):
        self.history.append(info["completed_per_node"])


class AgentPolicy(Policy):
    """Deterministic SAC actor (a = tanh(mean)) driving the environment."""

    name = "sac"

    def __init__(self, agent):
        self.agent = agent

    def reset(self, env):
        super().reset(env)
        self.params = env.scenario.params

    def act(self, state):
        a, _ = self.agent.select_action(state, deterministic=True)
        return action_from_raw(a, self.n, self.params.f_min, self.params.routing_gain,
                               self.params.full_speed_at)


class FixedPolicy(Policy):
    """Replays one allocation every interval."""

    name = "fixed"

    def __init__(self, action, name="fixed"):
        self.action = action
        self.name = name

    def act(self, state):
        return self.action


@dataclass
class Evaluation:
    policy: str
    mean: MetricsRecord
    std: MetricsRecord
    episodes: list
    seeds: list


def run_episode(env, policy, seed):
    state = env.reset(seed=seed)
    policy.reset(env)
    done = False
    ret = 0.0
    while not done:
        state, r, done, info = env.step(policy.act(state))
        policy.observe(info)
        ret += r
    return env.episode_metrics(), ret


def evaluate(policy, scenario, seeds):
    """Run ``policy`` once per seed and aggregate the episode metrics."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("evaluate needs at least one episode seed")
    env = EdgeEnv(scenario)
    records = [run_episode(env, policy, s)[0] for s in seeds]
    arr = np.array([r.as_array() for r in records])
    return Evaluation(
        policy=policy.name,
        mean=MetricsRecord(*arr.mean(axis=0)),
        std=MetricsRecord(*arr.std(axis=0)),
        episodes=records,
        seeds=seeds,
    )


EPISODE_HEADER = ["episode", "mean_response_ms", "accuracy_pct", "energy_j", "utilization_pct", "policy_name", "seed"]


def append_episode_rows(path, evaluation, write_header=False):
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if write_header:
            w.writerow(EPISODE_HEADER)
        for k, (rec, seed) in enumerate(zip(evaluation.episodes, evaluation.seeds)):
            w.writerow([k] + [repr(float(v)) for v in rec.as_array()] + [evaluation.policy, seed])
