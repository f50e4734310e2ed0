"""One-dimensional tracking task used to sanity-check the learner."""

import numpy as np


class TrackingEnv:
    """Observe s ~ U(-1, 1); reward -(a - (slope*s + offset))**2.

    States are drawn independently each step, so the optimal policy is the
    deterministic map a = slope*s + offset.
    """

    obs_dim = 1
    act_dim = 1

    def __init__(self, horizon=50, slope=0.5, offset=0.2):
        self.horizon = horizon
        self.slope = slope
        self.offset = offset
        self._rng = None
        self._t = 0
        self._s = None

    def target(self, s):
        return self.slope * s + self.offset

    def reset(self, seed=0):
        self._rng = np.random.default_rng(seed)
        self._t = 0
        self._s = self._rng.uniform(-1.0, 1.0, size=1)
        return self._s.copy()

    def step(self, action):
        a = float(np.asarray(action).reshape(-1)[0])
        reward = -(a - self.target(float(self._s[0]))) ** 2
        self._t += 1
        self._s = self._rng.uniform(-1.0, 1.0, size=1)
        done = self._t >= self.horizon
        return self._s.copy(), reward, done, {}
