"""Designer tests: gradients, buffer, noise, updates, and a toy training run."""

import math

import numpy as np
import pytest

from celloed import env, td3
from celloed.errors import UsageError


def _fd_grad(f, params, h=1e-6):
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + h
            fp = f()
            p[idx] = old - h
            fm = f()
            p[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


@pytest.mark.parametrize("out_act", ["linear", "tanh"])
def test_mlp_gradients_match_finite_differences(out_act, rng):
    net = td3.Mlp([3, 5, 4, 2], out_act, rng, final_scale=0.5)
    x = rng.normal(size=(6, 3))
    w = rng.normal(size=(6, 2))  # fixed projection so the loss is scalar

    def loss():
        return float(np.sum(net(x) * w))

    out, cache = net.forward(x)
    grads, dx = net.backward(cache, w)
    fd = _fd_grad(loss, net.parameters())
    for g, gfd in zip(grads, fd):
        assert np.allclose(g, gfd, rtol=1e-4, atol=1e-8)
    # input gradient as well (needed for the actor-through-critic chain)
    gx = np.zeros_like(x)
    h = 1e-6
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            old = x[i, j]
            x[i, j] = old + h
            fp = loss()
            x[i, j] = old - h
            fm = loss()
            x[i, j] = old
            gx[i, j] = (fp - fm) / (2 * h)
    assert np.allclose(dx, gx, rtol=1e-4, atol=1e-8)


def test_adam_minimizes_quadratic(rng):
    p = [rng.normal(size=(4,))]
    target = np.array([1.0, -2.0, 0.5, 3.0])
    opt = td3.Adam(p, lr=0.05)
    for _ in range(2000):
        opt.step([2 * (p[0] - target)])
    assert np.allclose(p[0], target, atol=1e-4)


def test_replay_buffer_fifo_eviction(rng):
    buf = td3.ReplayBuffer(capacity=8, obs_dim=2, initial=2)
    for i in range(5):
        buf.add([i, i], i, float(i), [i, i], False)
    assert len(buf) == 5
    for i in range(5, 12):
        buf.add([i, i], i, float(i), [i, i], False)
    assert len(buf) == 8  # capped
    kept = sorted(buf._act[: len(buf)])
    assert kept == [4, 5, 6, 7, 8, 9, 10, 11]  # oldest evicted first


def test_replay_buffer_empty_sample_raises(rng):
    buf = td3.ReplayBuffer(capacity=4)
    with pytest.raises(UsageError):
        buf.sample(2, rng)


def test_ou_noise_mean_reverts(rng):
    noise = td3.OuNoise(sigma=9.0, theta=0.9, dt=1.0)
    noise.state = 50.0
    samples = [noise.sample(rng) for _ in range(300)]
    assert abs(np.mean(samples[100:])) < 10.0
    assert abs(samples[-1]) < 40.0


@pytest.fixture
def small_agent(params):
    env_cfg = env.EnvConfig(target="k_p", episode_len=50)
    cfg = td3.Td3Config(hidden_sizes=(16, 16), seed=3, buffer_capacity=10_000)
    return td3.Td3Agent(env_cfg, cfg), env_cfg


def test_select_action_deterministic_and_bounded(small_agent, rng):
    agent, env_cfg = small_agent
    obs = env.Observation(v=3.7, c_bar_se_p=0.5)
    a1 = agent.select_action(obs, explore=False)
    a2 = agent.select_action(obs, explore=False)
    assert a1 == a2
    for _ in range(50):
        o = env.Observation(v=float(rng.uniform(2.0, 5.0)), c_bar_se_p=float(rng.uniform(0, 1)))
        a = agent.select_action(o, explore=True)
        assert env_cfg.i_min <= a <= env_cfg.i_max


def _random_batch(rng, n):
    obs = np.column_stack([rng.uniform(2.8, 4.2, n), rng.uniform(0.1, 0.9, n)])
    next_obs = np.column_stack([rng.uniform(2.8, 4.2, n), rng.uniform(0.1, 0.9, n)])
    return (obs, rng.uniform(-150, 150, n), rng.uniform(0, 2, n), next_obs, np.zeros(n))


def test_critic_update_gamma_zero_loss_is_reward_residual(params):
    env_cfg = env.EnvConfig(target="k_p")
    cfg = td3.Td3Config(hidden_sizes=(8, 8), seed=1, gamma=1e-12, reward_scale=1.0)
    agent = td3.Td3Agent(env_cfg, cfg)
    rng = np.random.default_rng(0)
    batch = _random_batch(rng, 32)
    s = agent.normalize_obs(batch[0])
    qin = agent.critic_features(s, agent.normalize_action(batch[1]))
    q_before = agent.critics(qin)[0, :, 0].copy()
    l1, _ = agent.critic_update(batch)
    # with gamma ~ 0 the regression target is the reward itself
    assert l1 == pytest.approx(float(np.mean((q_before - batch[2]) ** 2)), rel=1e-9)


def test_critic_update_all_done_drops_bootstrap(params):
    env_cfg = env.EnvConfig(target="k_p")
    cfg = td3.Td3Config(hidden_sizes=(8, 8), seed=1, reward_scale=1.0)
    agent = td3.Td3Agent(env_cfg, cfg)
    rng = np.random.default_rng(0)
    obs, act, rew, nobs, _ = _random_batch(rng, 16)
    batch = (obs, act, rew, nobs, np.ones(16))
    s = agent.normalize_obs(obs)
    qin = agent.critic_features(s, agent.normalize_action(act))
    q_before = agent.critics(qin)[0, :, 0].copy()
    l1, _ = agent.critic_update(batch)
    assert l1 == pytest.approx(float(np.mean((q_before - rew) ** 2)), rel=1e-9)


def test_critic_overfits_single_repeated_transition(params):
    env_cfg = env.EnvConfig(target="k_p")
    cfg = td3.Td3Config(hidden_sizes=(16, 16), seed=2, gamma=1e-12, reward_scale=1.0)
    agent = td3.Td3Agent(env_cfg, cfg)
    batch = (np.tile([3.7, 0.5], (8, 1)), np.full(8, 42.0), np.full(8, 1.3),
             np.tile([3.7, 0.5], (8, 1)), np.zeros(8))
    losses = [agent.critic_update(batch)[0] for _ in range(100)]
    # monotone trend with slack for optimizer noise
    assert losses[-1] < losses[0] * 0.2
    worsenings = sum(1 for a, b in zip(losses, losses[1:]) if b > a * 1.05)
    assert worsenings <= 5
    losses += [agent.critic_update(batch)[0] for _ in range(400)]
    assert losses[-1] < 1e-12


def test_twin_mlp_matches_two_mlps(rng):
    twin = td3.TwinMlp([3, 6, 5, 1], rng, final_scale=0.5)
    net0 = twin.single(0)
    net1 = twin.single(1)
    x = rng.normal(size=(9, 3))
    q = twin(x)
    assert np.allclose(q[0], net0(x))
    assert np.allclose(q[1], net1(x))
    # stacked backward == per-net backward
    dout = rng.normal(size=(2, 9, 1))
    _, cache = twin.forward(x)
    twin.backward(cache, dout)
    g0, _ = net0.backward(net0.forward(x)[1], dout[0])
    for i in range(len(net0.W)):
        assert np.allclose(twin.gW[i][0], g0[i])
    # input gradient of a single twin
    out_s, cache_s = twin.forward_single(x, 1)
    assert np.allclose(out_s, q[1])
    dx = twin.backward_single_input(cache_s, dout[1], 1)
    _, dx_ref = net1.backward(net1.forward(x)[1], dout[1])
    assert np.allclose(dx, dx_ref)


def test_twin_critic_pessimism(small_agent, rng):
    agent, _ = small_agent
    s2 = agent.normalize_obs(rng.uniform(size=(64, 2)))
    a2 = np.clip(agent.actor_target(s2), -1, 1)
    qt = agent.critic_targets(agent.critic_features(s2, a2))
    qmin = np.minimum(qt[0], qt[1])
    assert np.all(qmin <= qt[0] + 1e-15) and np.all(qmin <= qt[1] + 1e-15)


def test_soft_update_tau_extremes(params):
    env_cfg = env.EnvConfig(target="k_n")
    agent = td3.Td3Agent(env_cfg, td3.Td3Config(hidden_sizes=(8, 8), seed=2))
    agent.actor.W[0] += 1.0
    agent.actor_target.soft_update_from(agent.actor, tau=1.0)
    assert np.array_equal(agent.actor_target.W[0], agent.actor.W[0])
    before = agent.critic_targets.theta.copy()
    agent.critics.W[0] += 1.0
    agent.critic_targets.soft_update_from(agent.critics, tau=0.0)
    assert np.array_equal(before, agent.critic_targets.theta)


def test_actor_climbs_handcrafted_critic_to_optimum(params):
    """Install critic-1 weights implementing Q(s,a) = -|a - a*| (exactly
    representable with ReLU units); the actor must steer its normalized
    output to the closed-form optimum a*."""
    env_cfg = env.EnvConfig(target="k_p")
    cfg = td3.Td3Config(hidden_sizes=(16, 16), seed=4, actor_lr=3e-3, tau=0.0,
                        rail_disambiguation=False)
    agent = td3.Td3Agent(env_cfg, cfg)
    a_star = 0.6
    c = agent.critics
    c.theta[...] = 0.0
    # unit 0: relu(a - a*), unit 1: relu(a* - a); pass through layer 2; sum negated
    c.W[0][0, 2, 0] = 1.0
    c.b[0][0, 0, 0] = -a_star
    c.W[0][0, 2, 1] = -1.0
    c.b[0][0, 0, 1] = a_star
    c.W[1][0, 0, 0] = 1.0
    c.W[1][0, 1, 1] = 1.0
    c.W[2][0, 0, 0] = -1.0
    c.W[2][0, 1, 0] = -1.0
    rng = np.random.default_rng(1)
    obs = np.column_stack([rng.uniform(2.8, 4.2, 64), rng.uniform(0.1, 0.9, 64)])
    batch = (obs, None, None, None, None)
    for _ in range(3000):
        agent.actor_update(batch)
    out = agent.actor(agent.normalize_obs(obs))
    assert np.allclose(out, a_star, atol=1e-2)


def test_weights_roundtrip(tmp_path, small_agent):
    agent, env_cfg = small_agent
    path = tmp_path / "w.json"
    agent.save(path, fingerprint="deadbeef")
    loaded = td3.Td3Agent.load(path, env_cfg)
    obs = env.Observation(v=3.9, c_bar_se_p=0.4)
    assert loaded.select_action(obs) == agent.select_action(obs)
    data = agent.weights_dict()
    assert data["normalization"]["action_half_A"] == 150.0


def test_train_zero_episodes_returns_initial(params):
    env_cfg = env.EnvConfig(target="k_p", episode_len=20)
    cfg = td3.Td3Config(max_episodes=0, hidden_sizes=(8, 8), seed=0)
    agent, log = td3.train(env_cfg, params, cfg)
    assert log.episodes == []


def test_train_short_run_is_deterministic(params):
    env_cfg = env.EnvConfig(target="k_p", episode_len=30)
    cfg = td3.Td3Config(max_episodes=8, hidden_sizes=(8, 8), seed=11,
                        warmup_episodes=2, eval_every=4, buffer_capacity=10_000)
    _, log_a = td3.train(env_cfg, params, cfg)
    _, log_b = td3.train(env_cfg, params, cfg)
    assert log_a.episodes == log_b.episodes
    assert len(log_a.episodes) == 8
    assert all(r["steps"] <= 30 for r in log_a.episodes)
