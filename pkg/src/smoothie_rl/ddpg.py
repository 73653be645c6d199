"""Deterministic-policy-gradient baseline with Ornstein-Uhlenbeck exploration.

The critic regresses on stored actions (no phantom resampling) and the actor
ascends the critic's action gradient at the deterministic action.  With the
policy covariance of the smoothed trainer frozen at a negligible value the
two mean updates coincide; this baseline keeps its own code path so that
equivalence stays a real check.
"""

from __future__ import annotations

import copy
import time

import numpy as np

from .deriv_net import (
    AdamState,
    DerivNet,
    DivergenceError,
    actor_net,
    adam_step,
    clip_global_norm,
    critic_net,
    huber,
    polyak_update,
)
from .replay import ReplayBuffer, Transition, stack_batch
from .smoothie import TrainLog, TrainerConfig, _seed_streams, shift_output_bias


class OuNoise:
    """Discrete Ornstein-Uhlenbeck process x += -damping * x + stddev * noise."""

    def __init__(self, dim: int, damping: float, stddev: float):
        if damping <= 0.0 or stddev < 0.0:
            raise ValueError("bad OU parameters")
        self.dim = dim
        self.damping = float(damping)
        self.stddev = float(stddev)
        self.x = np.zeros(dim)

    def reset(self) -> None:
        self.x = np.zeros(self.dim)

    def step(self, rng: np.random.Generator) -> np.ndarray:
        self.x = self.x - self.damping * self.x + self.stddev * rng.standard_normal(self.dim)
        return self.x.copy()

    def stationary_std(self) -> float:
        return self.stddev / np.sqrt(self.damping * (2.0 - self.damping))


def ddpg_critic_update(
    critic: DerivNet,
    critic_target: DerivNet,
    actor_target: DerivNet,
    batch,
    cfg: TrainerConfig,
    opt: AdamState,
) -> float:
    """Huber Bellman regression on stored actions; returns the pre-step loss."""
    S, A, R, S2, D, _ = stack_batch(batch)
    mu2 = actor_target.forward(S2)
    q2 = critic_target.forward(S2, mu2)[:, 0]
    y = R + cfg.gamma * (1.0 - D) * q2
    q = critic.forward(S, A)[:, 0]
    resid = q - y
    hval, hder = huber(resid, cfg.huber_clip)
    loss = float(np.mean(hval))
    if not np.isfinite(loss):
        raise DivergenceError("non-finite critic loss")
    cot = (hder / len(batch))[:, None]
    grad = critic.param_gradient(S, A, cot)
    grad = clip_global_norm(grad, cfg.q_grad_clip)
    critic.set_params(adam_step(critic.get_params(), grad, cfg.critic_lr, opt))
    return loss


def actor_ascent_direction(actor: DerivNet, critic: DerivNet, states) -> np.ndarray:
    """(1/B) sum_k dmu/dtheta^T dQ/da at a = mu(s_k)."""
    S = np.asarray(states, dtype=float)
    mu = actor.forward(S)
    trip = critic.forward_with_action_derivs(S, mu)
    g = trip.jacobian[:, 0, :]
    if not np.all(np.isfinite(g)):
        raise DivergenceError("non-finite action gradient in actor update")
    return actor.param_gradient(S, None, g / S.shape[0])


def ddpg_actor_update(
    actor: DerivNet, critic: DerivNet, batch, cfg: TrainerConfig, opt: AdamState
) -> float:
    S, _, _, _, _, _ = stack_batch(batch)
    direction = actor_ascent_direction(actor, critic, S)
    actor.set_params(adam_step(actor.get_params(), -direction, cfg.actor_lr, opt))
    return float(np.linalg.norm(direction))


class DdpgTrainer:
    """Collection with OU exploration, one critic and one actor update per step."""

    def __init__(self, env, cfg: TrainerConfig):
        cfg.validate()
        self.env = env
        self.cfg = cfg
        self.rngs = _seed_streams(cfg.seed)
        d_s, d_a = env.spec.obs_dim, env.spec.action_dim
        self.actor = actor_net(d_s, d_a, cfg.hidden, self.rngs["init"])
        if cfg.mu_init is not None:
            ref = env.reset(np.random.default_rng(0))
            shift_output_bias(self.actor, ref, np.full(d_a, cfg.mu_init))
        self.critic = critic_net(d_s, d_a, cfg.hidden, self.rngs["init"])
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.noise = OuNoise(d_a, cfg.ou_damping, cfg.ou_stddev)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.opt_actor = AdamState.for_params(self.actor.n_params)
        self.opt_critic = AdamState.for_params(self.critic.n_params)
        self.episode_returns: list[float] = []
        self.eval_returns: list[tuple[int, float]] = []
        self.log = TrainLog()

    def _eval_episode(self) -> float:
        env = copy.deepcopy(self.env)
        rng = self.rngs["eval"]
        obs = env.reset(rng)
        total = 0.0
        for _ in range(env.spec.horizon):
            sr = env.step(self.actor.forward(obs), rng)
            total += sr.reward
            if sr.done:
                break
            obs = sr.next_observation
        return total

    def train(self) -> TrainLog:
        cfg = self.cfg
        env, rngs = self.env, self.rngs
        obs = env.reset(rngs["env"])
        ep_return = 0.0
        window: list[float] = []
        last_return = 0.0
        last_td = 0.0
        sigma = cfg.ou_stddev
        t0 = time.perf_counter()
        try:
            for step in range(1, cfg.total_steps + 1):
                action = self.actor.forward(obs) + self.noise.step(rngs["act"])
                sr = env.step(action, rngs["env"])
                self.buffer.push(
                    Transition(
                        state=obs,
                        action=action,
                        reward=cfg.reward_scale * sr.reward,
                        next_state=sr.next_observation,
                        done=sr.done,
                    )
                )
                ep_return += sr.reward
                if sr.done:
                    window.append(ep_return)
                    self.episode_returns.append(ep_return)
                    ep_return = 0.0
                    obs = env.reset(rngs["env"])
                else:
                    obs = sr.next_observation
                if len(self.buffer) >= cfg.batch_size:
                    batch = self.buffer.sample(cfg.batch_size, rngs["replay"])
                    ddpg_actor_update(self.actor, self.critic, batch, cfg, self.opt_actor)
                    batch = self.buffer.sample(cfg.batch_size, rngs["replay"])
                    last_td = ddpg_critic_update(
                        self.critic, self.critic_target, self.actor_target, batch, cfg,
                        self.opt_critic,
                    )
                    self.actor_target.set_params(
                        polyak_update(self.actor_target.get_params(), self.actor.get_params(), cfg.tau)
                    )
                    self.critic_target.set_params(
                        polyak_update(self.critic_target.get_params(), self.critic.get_params(), cfg.tau)
                    )
                if step % cfg.eval_interval == 0:
                    self.eval_returns.append((step, self._eval_episode()))
                if step % cfg.record_interval == 0:
                    if window:
                        last_return = float(np.mean(window))
                        window.clear()
                    ms = (time.perf_counter() - t0) * 1e3 if cfg.wallclock else 0.0
                    self.log.append(step, last_return, sigma, sigma, sigma, 0.0, last_td, ms)
        except DivergenceError as err:
            err.partial_log = self.log  # type: ignore[attr-defined]
            raise
        return self.log


def train_ddpg(env, cfg: TrainerConfig) -> TrainLog:
    return DdpgTrainer(env, cfg).train()
