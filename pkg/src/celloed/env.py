"""Episodic excitation-design environment.

Wraps the simulator as an MDP: the observation is (terminal voltage,
normalized cathode surface concentration), the action is the applied
current, and the reward is the squared voltage sensitivity of the target
rate constant, with a penalty and early termination on a voltage-bound
violation. Surface-concentration saturation is treated as a violation of
the same kind (the state transition would be unphysical, so the previous
state is kept).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import model
from .errors import DomainError, UsageError
from .params import CellParameters
from .sensitivity import PARAMETERS, FisherSummary, SensitivityTrace, fisher_information


@dataclasses.dataclass
class EnvConfig:
    target: str = "k_p"
    i_min: float = -150.0
    i_max: float = 150.0
    v_min: float = 2.8
    v_max: float = 4.2
    penalty_M: float = -5.0
    episode_len: int = 1800
    dt: float = 1.0
    soc0: float = 1.0
    temperature: float = 298.15

    def __post_init__(self):
        if self.target not in PARAMETERS:
            raise DomainError(f"target must be one of {PARAMETERS}")
        if not self.i_min < self.i_max:
            raise DomainError("i_min must be below i_max")
        if not self.v_min < self.v_max:
            raise DomainError("v_min must be below v_max")
        if self.episode_len <= 0:
            raise DomainError("episode_len must be positive")


@dataclasses.dataclass
class Observation:
    v: float
    c_bar_se_p: float

    def as_array(self):
        return np.array([self.v, self.c_bar_se_p])


@dataclasses.dataclass
class StepOutcome:
    observation: Observation
    reward: float
    terminated: bool
    truncated: bool
    info: dict


class OedEnv:
    """One environment instance per logical worker; no shared mutable state."""

    def __init__(self, config: EnvConfig, params: CellParameters, seed=0):
        self.config = config
        self.params = params
        self.seed = seed
        self._model = model.discrete_model(params, config.dt, config.temperature)
        self._x = None
        self._v = None
        self._steps = 0
        self._done = True

    def _observation(self):
        c_bar = (self._x[model.IDX_P] + self._x[model.IDX_P + 3]) / self.params.positive.c_max
        return Observation(v=float(self._v), c_bar_se_p=float(c_bar))

    def reset(self, seed=None) -> Observation:
        if seed is not None:
            self.seed = seed
        state = model.init_state(self.config.soc0, self.params)
        self._x = state.to_vector()
        self._v = state.v
        self._steps = 0
        self._done = False
        return self._observation()

    @property
    def state(self) -> model.CellState:
        return model.CellState.from_vector(self._x, self._v)

    @property
    def steps_taken(self):
        return self._steps

    def step(self, action) -> StepOutcome:
        if self._done:
            raise UsageError("episode finished; call reset() before stepping")
        cfg = self.config
        applied = float(np.clip(action, cfg.i_min, cfg.i_max))
        info = {"applied_current": applied, "clipped": applied != float(action)}

        states, v, sens_p, sens_n, n_done, flag = self._model.simulate_partial(
            self._x, np.array([applied])
        )
        self._steps += 1
        terminated = False
        if flag:
            # unphysical transition: keep the previous state, terminate
            reward = cfg.penalty_M
            terminated = True
            info["violation"] = "concentration"
        else:
            self._x = states[0]
            self._v = float(v[0])
            sens = float(sens_p[0] if cfg.target == "k_p" else sens_n[0])
            info["sensitivity"] = sens
            if cfg.v_min <= self._v <= cfg.v_max:
                reward = sens * sens
            else:
                reward = cfg.penalty_M
                terminated = True
                info["violation"] = "voltage_low" if self._v < cfg.v_min else "voltage_high"
        truncated = self._steps >= cfg.episode_len
        self._done = terminated or truncated
        info["soc"] = model.soc(self.state, self.params)
        info["v"] = self._v
        return StepOutcome(self._observation(), float(reward), terminated, truncated, info)


@dataclasses.dataclass
class EpisodeLog:
    currents: np.ndarray
    voltages: np.ndarray
    soc: np.ndarray
    rewards: np.ndarray
    sensitivities: np.ndarray
    terminated: bool
    violation: str


def rollout(policy, config: EnvConfig, params: CellParameters, seed=0):
    """Deterministic (noise-free) rollout of ``policy``.

    Returns the realized profile, the Fisher summary of its non-penalty
    steps, and the per-step log.
    """
    env = OedEnv(config, params, seed=seed)
    obs = env.reset()
    currents, voltages, socs, rewards, senss = [], [], [], [], []
    terminated = False
    violation = ""
    while True:
        out = env.step(policy(obs))
        currents.append(out.info["applied_current"])
        voltages.append(out.info["v"])
        socs.append(out.info["soc"])
        rewards.append(out.reward)
        senss.append(out.info.get("sensitivity", 0.0))
        obs = out.observation
        if out.terminated or out.truncated:
            terminated = out.terminated
            violation = out.info.get("violation", "")
            break
    currents = np.array(currents)
    profile = model.ExcitationProfile(
        dt=config.dt, currents=currents, temperature=config.temperature,
        label=f"rollout_{config.target}",
    )
    # the penalized step is always the terminating one
    clean_sens = np.array(senss[:-1] if terminated else senss)
    fi = fisher_information(
        SensitivityTrace(config.target, clean_sens, config.dt), params.sigma_y
    )
    log = EpisodeLog(
        currents=currents,
        voltages=np.array(voltages),
        soc=np.array(socs),
        rewards=np.array(rewards),
        sensitivities=np.array(senss),
        terminated=terminated,
        violation=violation,
    )
    return profile, fi, log
