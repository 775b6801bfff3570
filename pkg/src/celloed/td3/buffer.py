"""FIFO replay buffer with lazy capacity growth."""

import numpy as np

from ..errors import UsageError


class ReplayBuffer:
    """Ring buffer over (obs, action, reward, next_obs, done) transitions.

    Storage grows by doubling up to ``capacity`` so a nominal 2e7-transition
    cap costs nothing until actually filled.
    """

    def __init__(self, capacity, obs_dim=2, initial=4096):
        self.capacity = int(capacity)
        self._alloc = min(int(initial), self.capacity)
        self._obs = np.empty((self._alloc, obs_dim))
        self._act = np.empty(self._alloc)
        self._rew = np.empty(self._alloc)
        self._next_obs = np.empty((self._alloc, obs_dim))
        self._done = np.empty(self._alloc)
        self._size = 0
        self._head = 0

    def __len__(self):
        return self._size

    def _grow(self):
        new_alloc = min(self._alloc * 2, self.capacity)
        for name in ("_obs", "_act", "_rew", "_next_obs", "_done"):
            old = getattr(self, name)
            shape = (new_alloc,) + old.shape[1:]
            fresh = np.empty(shape)
            fresh[: self._size] = old[: self._size]
            setattr(self, name, fresh)
        self._alloc = new_alloc

    def add(self, obs, action, reward, next_obs, done):
        if self._size == self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self._head
        self._obs[i] = obs
        self._act[i] = action
        self._rew[i] = reward
        self._next_obs[i] = next_obs
        self._done[i] = float(done)
        self._head = (i + 1) % self._alloc
        self._size = min(self._size + 1, self._alloc)

    def sample(self, batch_size, rng):
        if self._size == 0:
            raise UsageError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self._size, batch_size)
        return (
            self._obs[idx],
            self._act[idx],
            self._rew[idx],
            self._next_obs[idx],
            self._done[idx],
        )
