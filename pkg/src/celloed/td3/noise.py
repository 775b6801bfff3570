"""Ornstein-Uhlenbeck exploration noise."""

import math

import numpy as np


class OuNoise:
    """Mean-reverting noise: dx = theta (mu - x) dt + sigma sqrt(dt) dW."""

    def __init__(self, sigma=9.0, theta=0.15, dt=1.0, mu=0.0):
        self.sigma = sigma
        self.theta = theta
        self.dt = dt
        self.mu = mu
        self.state = mu

    def reset(self):
        self.state = self.mu

    def sample(self, rng: np.random.Generator):
        self.state += (
            self.theta * (self.mu - self.state) * self.dt
            + self.sigma * math.sqrt(self.dt) * rng.standard_normal()
        )
        return self.state
