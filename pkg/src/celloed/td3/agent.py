"""Twin-delayed deterministic actor-critic designer.

Twin critics with clipped-double-Q bootstrapping, delayed policy and target
updates, target-policy smoothing, OU exploration, and a FIFO replay buffer.
The twin critics are held in one stacked network (see ``networks.TwinMlp``)
so an update pair costs a handful of batched matmuls. Rewards are scaled
internally for critic conditioning (squared-sensitivity magnitudes span
many orders across parameter sets); the environment and the training log
keep raw units.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np
from threadpoolctl import threadpool_limits

from .. import __version__
from ..env import EnvConfig, OedEnv, rollout
from ..errors import DomainError, UsageError
from ..params import CellParameters
from .buffer import ReplayBuffer
from .networks import Adam, Mlp, TwinMlp
from .noise import OuNoise


@dataclasses.dataclass
class Td3Config:
    gamma: float = 0.99
    buffer_capacity: int = 20_000_000
    batch_size: int = 256
    max_episodes: int = 10_000
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    exploration_sigma: float = 9.0  # A
    ou_theta: float = 0.15
    ou_dt: float = 1.0
    policy_delay: int = 2
    tau: float = 0.005
    target_smoothing_sigma: float = 0.2  # fraction of the action half-range
    target_noise_clip: float = 0.5  # fraction of the action half-range
    hidden_sizes: tuple = (64, 64)
    warmup_episodes: int = 5
    eval_every: int = 10
    epsilon_uniform: float = 0.05  # chance of starting a uniform-action burst
    epsilon_burst_max: int = 3  # burst length drawn from {1..max}
    uniform_episode_every: int = 20  # every Nth episode explores uniformly
    rail_disambiguation: bool = True  # critics choose between +/-actor(s)
    pretanh_penalty: float = 1e-3  # keeps the actor head out of deep saturation
    reward_scale: float = 0.0  # 0 -> auto from warmup data
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise DomainError("gamma must lie in (0, 1)")
        if self.batch_size > self.buffer_capacity:
            raise DomainError("batch_size cannot exceed buffer capacity")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise DomainError("learning rates must be positive")
        if self.policy_delay < 1 or self.warmup_episodes < 0:
            raise DomainError("invalid schedule settings")


class Td3Agent:
    """Designer state: actor, stacked twin critics, targets, optimizers."""

    def __init__(self, env_config: EnvConfig, config: Td3Config):
        self.env_config = env_config
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.action_center = 0.5 * (env_config.i_min + env_config.i_max)
        self.action_half = 0.5 * (env_config.i_max - env_config.i_min)

        obs_dim, act_dim = 2, 1
        hs = list(config.hidden_sizes)
        self.actor = Mlp([obs_dim] + hs + [act_dim], "tanh", self.rng)
        self.critics = TwinMlp([obs_dim + act_dim] + hs + [1], self.rng)
        self.actor_target = self.actor.clone()
        self.critic_targets = self.critics.clone()

        self.actor_opt = Adam([self.actor.theta], config.actor_lr)
        self.critics_opt = Adam([self.critics.theta], config.critic_lr)

        self.noise = OuNoise(config.exploration_sigma, config.ou_theta, config.ou_dt)
        self.buffer = ReplayBuffer(config.buffer_capacity, obs_dim)
        self.reward_scale = config.reward_scale
        self.n_critic_updates = 0
        b = config.batch_size
        self._qin = np.empty((b, obs_dim + act_dim))
        self._qin2 = np.empty((b, obs_dim + act_dim))

    # -- observation / action coordinates ---------------------------------
    def normalize_obs(self, obs_arr):
        cfg = self.env_config
        out = np.empty_like(obs_arr, dtype=float)
        out[..., 0] = 2.0 * (obs_arr[..., 0] - cfg.v_min) / (cfg.v_max - cfg.v_min) - 1.0
        out[..., 1] = 2.0 * obs_arr[..., 1] - 1.0
        return out

    def normalize_action(self, a):
        return (a - self.action_center) / self.action_half

    def denormalize_action(self, a_norm):
        return self.action_center + self.action_half * a_norm

    def critic_features(self, s_norm, a_norm):
        """Stack the critic input block from normalized obs and action."""
        a_norm = np.asarray(a_norm, dtype=float).reshape(len(s_norm), -1)
        return np.concatenate([s_norm, a_norm], axis=1)

    # -- policy ------------------------------------------------------------
    def select_action(self, obs, explore=False):
        """Actor action, rail-disambiguated by critic 1, plus OU noise.

        The squared-sensitivity reward is even in current, so Q is bimodal
        in the action with the pulse sign carrying only bootstrap value; a
        deterministic policy gradient cannot migrate between the two rails
        (every path crosses the low-reward valley at 0 A). The critics know
        which rail is worth more, so the deployed action is the better of
        +/- actor(s); the actor itself keeps shaping the magnitude profile.
        """
        x = self.normalize_obs(obs.as_array()[None, :])
        a_norm = float(self.actor(x)[0, 0])
        if self.config.rail_disambiguation and a_norm != 0.0:
            qin = self.critic_features(np.vstack([x, x]), np.array([a_norm, -a_norm]))
            q = self.critics.forward_single(qin, 0)[0]
            if q[1, 0] > q[0, 0]:
                a_norm = -a_norm
        a = float(self.denormalize_action(a_norm))
        if explore:
            a += self.noise.sample(self.rng)
        return float(np.clip(a, self.env_config.i_min, self.env_config.i_max))

    # -- updates -----------------------------------------------------------
    def _scaled(self, rewards):
        """Critic-space rewards: squared sensitivities shrink by the scale,
        the violation penalty keeps its raw magnitude so termination stays
        a real deterrent next to O(1) step rewards."""
        if self.reward_scale <= 0:
            return rewards
        return np.where(rewards >= 0.0, rewards * self.reward_scale, rewards)

    def critic_update(self, batch):
        """Regress both critics toward the clipped double-Q target."""
        obs, act, rew, next_obs, done = batch
        n = len(obs)
        if n == 0:
            raise UsageError("empty batch")
        cfg = self.config
        qin, qin2 = (self._qin, self._qin2) if n == self._qin.shape[0] else (
            np.empty((n, 3)), np.empty((n, 3)))
        qin[:, :2] = self.normalize_obs(obs)
        qin[:, 2] = self.normalize_action(act)
        qin2[:, :2] = self.normalize_obs(next_obs)

        a2 = self.actor_target(qin2[:, :2]).copy()
        if cfg.rail_disambiguation:
            # bootstrap through the deployed (rail-disambiguated) policy,
            # picking the pessimistic-value rail per row
            both = self.critic_features(
                np.vstack([qin2[:, :2], qin2[:, :2]]),
                np.concatenate([a2[:, 0], -a2[:, 0]]),
            )
            qb = self.critic_targets(both)
            qmin = np.minimum(qb[0], qb[1])[:, 0]
            flip = qmin[n:] > qmin[:n]
            a2[flip, 0] = -a2[flip, 0]
        eps = self.rng.normal(0.0, cfg.target_smoothing_sigma, (n, 1))
        np.clip(eps, -cfg.target_noise_clip, cfg.target_noise_clip, out=eps)
        a2 += eps
        np.clip(a2, -1.0, 1.0, out=a2)
        qin2[:, 2] = a2[:, 0]
        qt = self.critic_targets(qin2)
        y = self._scaled(rew)[:, None] + cfg.gamma * (1.0 - done[:, None]) * np.minimum(
            qt[0], qt[1]
        )

        q, cache = self.critics.forward(qin)
        err = q - y  # broadcasts over the twin axis
        losses = (float(np.mean(err[0] ** 2)), float(np.mean(err[1] ** 2)))
        self.critics.backward(cache, err * (2.0 / n))
        self.critics_opt.step([self.critics.grad])
        self.n_critic_updates += 1
        if not all(math.isfinite(l) for l in losses):
            raise RuntimeError(
                f"non-finite critic loss {losses} after {self.n_critic_updates} updates; "
                f"check reward scale {self.reward_scale:g}"
            )
        return losses

    def actor_update(self, batch):
        """One deterministic policy-gradient step, then soft target updates."""
        obs = batch[0]
        n = len(obs)
        cfg = self.config
        s = self.normalize_obs(obs)
        a, cache_a = self.actor.forward(s)
        qin = self._qin if n == self._qin.shape[0] else np.empty((n, 3))
        qin[:, :2] = s
        qin[:, 2] = a[:, 0]
        q, cache_c = self.critics.forward_single(qin, 0)
        pre = cache_a[1][-1]  # actor head pre-activation
        lam = cfg.pretanh_penalty
        loss = -float(np.mean(q)) + lam * float(np.mean(pre * pre))
        dq = np.full_like(q, -1.0 / n)
        d_in = self.critics.backward_single_input(cache_c, dq, 0)
        self.actor.backward(cache_a, d_in[:, 2:3], input_grad=False,
                            dout_pre=(2.0 * lam / n) * pre)
        self.actor_opt.step([self.actor.grad])
        if not math.isfinite(loss):
            raise RuntimeError(f"non-finite actor loss after {self.n_critic_updates} updates")

        self.actor_target.soft_update_from(self.actor, cfg.tau)
        self.critic_targets.soft_update_from(self.critics, cfg.tau)
        return loss

    # -- persistence ---------------------------------------------------------
    def weights_dict(self, fingerprint=""):
        cfg = self.env_config
        return {
            "format_version": 1,
            "package_version": __version__,
            "fingerprint": fingerprint,
            "hidden_sizes": list(self.config.hidden_sizes),
            "activations": {"hidden": "relu", "actor_out": "tanh"},
            "normalization": {
                "v_range": [cfg.v_min, cfg.v_max],
                "c_bar_range": [0.0, 1.0],
                "action_center_A": self.action_center,
                "action_half_A": self.action_half,
            },
            "reward_scale": self.reward_scale,
            "target": cfg.target,
            "rail_disambiguation": self.config.rail_disambiguation,
            "networks": {
                "actor": self.actor.state_list(),
                "actor_target": self.actor_target.state_list(),
                "critic1": self.critics.single(0).state_list(),
                "critic2": self.critics.single(1).state_list(),
                "critic1_target": self.critic_targets.single(0).state_list(),
                "critic2_target": self.critic_targets.single(1).state_list(),
            },
        }

    def save(self, path, fingerprint=""):
        with open(path, "w") as f:
            json.dump(self.weights_dict(fingerprint), f)
        return path

    def load_weights_dict(self, data):
        nets = data["networks"]
        self.actor.load_state_list(nets["actor"])
        self.actor_target.load_state_list(nets["actor_target"])

        def as_mlp(name):
            net = Mlp(self.critics.sizes, "linear")
            net.load_state_list(nets[name])
            return net

        self.critics.load_from_pair(as_mlp("critic1"), as_mlp("critic2"))
        self.critic_targets.load_from_pair(as_mlp("critic1_target"), as_mlp("critic2_target"))
        self.reward_scale = float(data.get("reward_scale", self.reward_scale))

    @classmethod
    def load(cls, path, env_config: EnvConfig, config: Td3Config = None):
        with open(path) as f:
            data = json.load(f)
        cfg = config or Td3Config(hidden_sizes=tuple(data["hidden_sizes"]))
        agent = cls(env_config, cfg)
        agent.load_weights_dict(data)
        return agent

    def snapshot(self):
        return {
            "actor": self.actor.theta.copy(),
            "actor_target": self.actor_target.theta.copy(),
            "critics": self.critics.theta.copy(),
            "critic_targets": self.critic_targets.theta.copy(),
        }

    def restore(self, snap):
        self.actor.theta[...] = snap["actor"]
        self.actor_target.theta[...] = snap["actor_target"]
        self.critics.theta[...] = snap["critics"]
        self.critic_targets.theta[...] = snap["critic_targets"]


@dataclasses.dataclass
class TrainingLog:
    episodes: list = dataclasses.field(default_factory=list)

    def add(self, **row):
        self.episodes.append(row)

    def returns(self):
        return np.array([row["return"] for row in self.episodes])

    def eval_history(self):
        return [(row["episode"], row["eval_fi_raw"]) for row in self.episodes
                if not math.isnan(row["eval_fi_raw"])]


def train(env_config: EnvConfig, params: CellParameters, config: Td3Config,
          progress=None):
    """Run the training loop; returns (agent with best-evaluation weights, log).

    The agent explores with uniform random actions for the warmup episodes
    (OU noise alone under-covers a +/-150 A range), then with OU-perturbed
    policy actions; one critic update per environment step once the buffer
    holds a full batch, actor and targets every ``policy_delay`` updates.
    Evaluation rollouts are noise-free; the best-FI snapshot is restored
    before returning.

    BLAS pools are pinned to one thread for the duration: the update's
    matrices are too small to parallelize and multi-threaded kernels lose
    several-fold to core ping-pong.
    """
    with threadpool_limits(limits=1):
        return _train_loop(env_config, params, config, progress)


def _train_loop(env_config: EnvConfig, params: CellParameters, config: Td3Config,
                progress):
    agent = Td3Agent(env_config, config)
    env = OedEnv(env_config, params, seed=config.seed)
    log = TrainingLog()
    best_fi = -math.inf
    best_snap = agent.snapshot()

    def evaluate():
        _, fi, _ = rollout(lambda o: agent.select_action(o, explore=False),
                           env_config, params, seed=config.seed)
        return fi.fi_raw

    for ep in range(config.max_episodes):
        obs = env.reset()
        agent.noise.reset()
        ep_return = 0.0
        steps = 0
        violations = 0
        warmup = ep < config.warmup_episodes
        if config.uniform_episode_every > 0:
            # a periodic all-random episode keeps the buffer fed with long,
            # diverse trajectories even if the current policy dies instantly
            warmup = warmup or (ep + 1) % config.uniform_episode_every == 0
        burst_left, burst_action = 0, 0.0
        while True:
            if burst_left > 0:
                action = burst_action
                burst_left -= 1
            elif warmup or agent.rng.random() < config.epsilon_uniform:
                # OU jitter alone never covers the far side of the action
                # range once the policy saturates; held uniform bursts let
                # the critics see sustained counterfactual actions
                action = float(agent.rng.uniform(env_config.i_min, env_config.i_max))
                if not warmup and config.epsilon_burst_max > 1:
                    burst_left = int(agent.rng.integers(0, config.epsilon_burst_max))
                    burst_action = action
            else:
                action = agent.select_action(obs, explore=True)
            out = env.step(action)
            agent.buffer.add(obs.as_array(), out.info["applied_current"], out.reward,
                             out.observation.as_array(), out.terminated)
            obs = out.observation
            ep_return += out.reward
            steps += 1
            if out.terminated:
                violations += 1
            if not warmup and len(agent.buffer) >= config.batch_size:
                if agent.reward_scale <= 0:
                    agent.reward_scale = _auto_reward_scale(agent.buffer)
                batch = agent.buffer.sample(config.batch_size, agent.rng)
                agent.critic_update(batch)
                if agent.n_critic_updates % config.policy_delay == 0:
                    agent.actor_update(batch)
            if out.terminated or out.truncated:
                break
        eval_fi = math.nan
        if (ep + 1) % config.eval_every == 0 or ep + 1 == config.max_episodes:
            eval_fi = evaluate()
            if eval_fi > best_fi:
                best_fi = eval_fi
                best_snap = agent.snapshot()
        log.add(episode=ep, **{"return": ep_return}, steps=steps,
                violations=violations, eval_fi_raw=eval_fi)
        if progress is not None:
            progress(ep, log.episodes[-1])

    agent.restore(best_snap)
    return agent, log


def _auto_reward_scale(buffer: ReplayBuffer):
    """1 / (95th percentile positive reward) over the warmup transitions;
    keeps scaled returns O(100) even though raw rewards span decades."""
    rewards = buffer._rew[: len(buffer)]
    positive = rewards[rewards > 0]
    if positive.size == 0:
        return 1.0
    return 1.0 / float(np.percentile(positive, 95))


def save_training_log_csv(log: TrainingLog, path, fingerprint=""):
    with open(path, "w") as f:
        if fingerprint:
            f.write(f"# fingerprint={fingerprint}\n")
        f.write("episode,return,eval_fi_raw,steps,violations\n")
        for row in log.episodes:
            f.write(
                f"{row['episode']},{row['return']:.10g},{row['eval_fi_raw']:.10g},"
                f"{row['steps']},{row['violations']}\n"
            )
    return path
