"""Simulation driver, regret accounting and MDP analysis reports."""
from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import mdp_core
from .agents import AgentConfig, episode_count_bound, make_agent, theorem_bound_evaluators
from .envs import env_from_dict
from .errors import InvalidConfig
from .mdp_core import TabularMdp

N_CHECKPOINTS = 100
_BLOCK = 1 << 14

ANALYZE_COLUMNS = ("S", "psi", "v_max", "psi_sqrt_SA", "sqrt_sum_V")
AGGREGATE_COLUMNS = ("t", "regret_mean", "regret_std")


def run_stream(seed: int) -> np.random.Generator:
    """Counter-based stream owned by one run."""
    return np.random.Generator(np.random.Philox(key=int(seed)))


def checkpoints(T: int, n: int = N_CHECKPOINTS) -> np.ndarray:
    """``min(n, T)`` strictly increasing, roughly geometric steps from 1 to ``T``."""
    if T <= n:
        return np.arange(1, T + 1, dtype=np.int64)
    target = np.round(np.geomspace(1, T, n)).astype(np.int64)
    grid = np.empty(n, dtype=np.int64)
    prev = 0
    for i, x in enumerate(target):
        # leave room for the remaining points below T
        prev = min(max(int(x), prev + 1), T - (n - 1 - i))
        grid[i] = prev
    return grid


@dataclass
class RegretTrace:
    horizon: int
    seed: int
    gain_opt: float
    rewards: np.ndarray = field(repr=False)
    episode_starts: list
    checkpoints: np.ndarray = field(repr=False)
    regret: np.ndarray = field(repr=False)
    env_config: Optional[dict] = None
    agent_config: Optional[dict] = None

    @property
    def n_episodes(self) -> int:
        return len(self.episode_starts)

    @property
    def final_regret(self) -> float:
        return float(self.regret[-1])

    def recompute(self) -> np.ndarray:
        cum = np.cumsum(self.rewards)
        return self.checkpoints * self.gain_opt - cum[self.checkpoints - 1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t", "regret"))
            for t, r in zip(self.checkpoints, self.regret):
                w.writerow((int(t), repr(float(r))))


def _resolve_env(env) -> tuple[TabularMdp, Optional[dict]]:
    if isinstance(env, TabularMdp):
        return env, None
    return env_from_dict(env), dict(env)


def _resolve_agent(agent) -> AgentConfig:
    return agent if isinstance(agent, AgentConfig) else AgentConfig.from_dict(agent)


def run_simulation(env, agent, T: int, seed: int, initial_state: int = 0,
                   gain_opt: Optional[float] = None) -> RegretTrace:
    """Run one agent for ``T`` steps and return its effective-regret trace."""
    if T < 1:
        raise InvalidConfig("T must be at least 1")
    mdp, env_echo = _resolve_env(env)
    config = _resolve_agent(agent)
    if gain_opt is None:
        gain_opt = mdp_core.solve_bellman_optimality(mdp)[0].gain
    S, A = mdp.n_states, mdp.n_actions
    if not 0 <= initial_state < S:
        raise InvalidConfig(f"initial_state {initial_state} outside [0, {S})")
    learner = make_agent(config, mdp, T)

    rng = run_stream(seed)
    cdf = [[list(np.cumsum(mdp.transition[s, a])) for a in range(A)] for s in range(S)]
    mu = mdp.mean_reward.tolist()
    bern = mdp.bernoulli_mask.tolist()
    last = S - 1
    rewards = np.empty(T)

    s = initial_state
    learner.reset(s)
    act, observe = learner.act, learner.observe
    for start in range(0, T, _BLOCK):
        n = min(_BLOCK, T - start)
        draws = rng.random((n, 2)).tolist()
        for i in range(n):
            a = act(s)
            u_next, u_rew = draws[i]
            s_next = bisect_right(cdf[s][a], u_next)
            if s_next > last:
                s_next = last
            r = float(u_rew < mu[s][a]) if bern[s][a] else mu[s][a]
            rewards[start + i] = r
            observe(s, a, r, s_next)
            s = s_next

    starts = list(learner.episode_starts)
    if T >= S * A and len(starts) > episode_count_bound(S, A, T):
        raise AssertionError(f"{len(starts)} episodes exceed the doubling bound at T={T}")
    grid = checkpoints(T)
    cum = np.cumsum(rewards)
    regret = grid * gain_opt - cum[grid - 1]
    return RegretTrace(T, int(seed), float(gain_opt), rewards, starts, grid, regret,
                       env_echo, config.to_dict())


@dataclass
class BatchResult:
    checkpoints: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    traces: dict

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(AGGREGATE_COLUMNS)
            for row in zip(self.checkpoints, self.mean, self.std):
                w.writerow((int(row[0]), repr(float(row[1])), repr(float(row[2]))))


def batch_run(env, agent, T: int, seeds: Iterable[int], initial_state: int = 0) -> BatchResult:
    """Independent runs, one per seed, aggregated in seed order."""
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise InvalidConfig("batch_run needs at least one seed")
    mdp, echo = _resolve_env(env)
    g = mdp_core.solve_bellman_optimality(mdp)[0].gain
    traces = {}
    for seed in seeds:
        trace = run_simulation(mdp, agent, T, seed, initial_state, gain_opt=g)
        trace.env_config = echo
        traces[seed] = trace
    curves = np.stack([traces[s].regret for s in seeds])
    return BatchResult(traces[seeds[0]].checkpoints, curves.mean(axis=0), curves.std(axis=0), traces)


def analyze_mdp(env, T: float = 1e5, delta: float = 0.05, mixing_cap: int = mdp_core.DEFAULT_POLICY_CAP):
    """Profile plus bound report for one environment; returns ``(profile, report)``."""
    mdp, _ = _resolve_env(env)
    profile = mdp_core.mdp_profile(mdp, mixing_cap=mixing_cap)
    S, A = mdp.n_states, mdp.n_actions
    bounds = theorem_bound_evaluators(profile, S, A, T, delta)
    report = {
        "n_states": S,
        "n_actions": A,
        "profile": profile.to_dict(),
        "bounds": {"T": T, "delta": delta, **bounds},
        "row": table_row(profile, S, A),
    }
    return profile, report


def table_row(profile, S: int, A: int) -> dict:
    return {
        "S": S,
        "psi": profile.span_bias,
        "v_max": profile.v_max,
        "psi_sqrt_SA": profile.span_bias * math.sqrt(S * A),
        "sqrt_sum_V": math.sqrt(float(np.sum(profile.bias_variance))),
    }


def write_rows_csv(target, rows: Sequence[dict], columns=ANALYZE_COLUMNS) -> None:
    """Write rows to a path or an open text stream."""
    if hasattr(target, "write"):
        w = csv.DictWriter(target, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
        return
    with open(target, "w", newline="") as fh:
        write_rows_csv(fh, rows, columns)


def write_json(path, payload: Any) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, allow_nan=True) + "\n")
