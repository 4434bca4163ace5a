"""Optimistic learners (KL-UCRL, UCRL2) and a planning oracle.

All agents share one interface: ``reset(s0)``, ``act(s) -> a`` and
``observe(s, a, r, s_next)``. The optimistic agents proceed in episodes
whose planning step is extended value iteration over a confidence set of
transition rows; they differ only in the shape of that set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import mdp_core
from .errors import DomainError, InvalidConfig, NoConvergence
from .kl_geometry import (
    ConfidenceConstants,
    confidence_constants,
    max_expectation_kl_ball_batch,
    max_expectation_l1_ball_batch,
    ucrl2_radii,
)
from .mdp_core import MdpProfile, TabularMdp

DEFAULT_MAX_SWEEPS = 10**6
MONOTONE_SLACK = 1e-12


# -- sufficient statistics ----------------------------------------------------

@dataclass
class CountsTable:
    """Visit statistics frozen at the current episode start plus in-episode counts.

    ``visits``, ``transitions`` and ``reward_sum`` hold ``N_k``; the
    ``local_*`` arrays hold what was observed since ``episode_start``.
    """

    n_states: int
    n_actions: int
    visits: np.ndarray = None
    transitions: np.ndarray = None
    reward_sum: np.ndarray = None
    local_visits: np.ndarray = None
    local_transitions: np.ndarray = None
    local_reward: np.ndarray = None
    episode: int = 1
    episode_start: int = 1
    t: int = 1  # index of the next step to be played

    def __post_init__(self):
        S, A = self.n_states, self.n_actions
        for name, shape, dtype in (("visits", (S, A), np.int64),
                                   ("transitions", (S, A, S), np.int64),
                                   ("reward_sum", (S, A), float),
                                   ("local_visits", (S, A), np.int64),
                                   ("local_transitions", (S, A, S), np.int64),
                                   ("local_reward", (S, A), float)):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(shape, dtype=dtype))

    def record(self, s: int, a: int, r: float, s_next: int) -> None:
        self.local_visits[s, a] += 1
        self.local_transitions[s, a, s_next] += 1
        self.local_reward[s, a] += r
        self.t += 1

    def start_episode(self) -> None:
        self.visits += self.local_visits
        self.transitions += self.local_transitions
        self.reward_sum += self.local_reward
        self.local_visits[:] = 0
        self.local_transitions[:] = 0
        self.local_reward[:] = 0.0
        self.episode += 1
        self.episode_start = self.t

    def n_plus(self) -> np.ndarray:
        return np.maximum(self.visits, 1)

    def empirical(self):
        """``(mu_hat, p_hat)`` at the episode start; rows of unvisited pairs are zero."""
        n = self.n_plus()
        return self.reward_sum / n, self.transitions / n[:, :, None]

    def total_visits(self) -> np.ndarray:
        return self.visits + self.local_visits

    def total_transitions(self) -> np.ndarray:
        return self.transitions + self.local_transitions


def episode_should_end(counts: CountsTable, s: int, a: int) -> bool:
    """Doubling rule for the pair about to be played; folds counts when it fires."""
    if counts.local_visits[s, a] >= max(1, counts.visits[s, a]):
        counts.start_episode()
        return True
    return False


def episode_count_bound(S: int, A: int, T: int) -> float:
    return S * A * math.log2(8.0 * T / (S * A))


# -- extended value iteration -------------------------------------------------

@dataclass(frozen=True, eq=False)
class OptimisticPlan:
    policy: np.ndarray
    gain: float
    u: np.ndarray
    evi_accuracy: float
    sweeps: int
    transitions: np.ndarray = field(repr=False, default=None)
    span_history: list = field(repr=False, default_factory=list)


InnerMax = Callable[[np.ndarray, np.ndarray], tuple]


def _extended_value_iteration(rewards: np.ndarray, inner: InnerMax, accuracy: float,
                              max_sweeps: int, u0: Optional[np.ndarray]) -> OptimisticPlan:
    S, A = rewards.shape
    if not accuracy > 0:
        raise DomainError("accuracy must be positive")
    u = np.zeros(S) if u0 is None else np.asarray(u0, dtype=float) - np.min(u0)
    history = []
    for n in range(1, max_sweeps + 1):
        q, vals = inner(u)
        Q = rewards + vals.reshape(S, A)
        u_next = Q.max(axis=1)
        diff = u_next - u
        sp = float(diff.max() - diff.min())
        if history and sp > history[-1] + MONOTONE_SLACK * max(1.0, history[-1]):
            raise AssertionError(f"EVI span increased: {history[-1]!r} -> {sp!r}")
        history.append(sp)
        if sp <= accuracy:
            policy = np.argmax(Q, axis=1)  # lowest index among ties
            rows = np.arange(S)
            chosen = q.reshape(S, A, S)[rows, policy]
            return OptimisticPlan(policy, 0.5 * float(diff.max() + diff.min()), u_next - u_next.min(),
                                  sp, n, chosen, history)
        u = u_next - u_next.min()
    raise NoConvergence(f"extended value iteration: span above {accuracy} after {max_sweeps} sweeps")


def _optimistic_rewards(mu_hat, bonus):
    return np.minimum(mu_hat + bonus, 1.0)


def extended_value_iteration_kl(counts: CountsTable, constants: ConfidenceConstants, accuracy: float,
                                max_sweeps: int = DEFAULT_MAX_SWEEPS,
                                u0: Optional[np.ndarray] = None) -> OptimisticPlan:
    """Optimistic plan over KL confidence balls of radius ``C_p / N+``."""
    S, A = counts.n_states, counts.n_actions
    mu_hat, p_hat = counts.empirical()
    n_plus = counts.n_plus()
    rewards = _optimistic_rewards(mu_hat, np.sqrt(constants.C_mu / n_plus))
    centers = p_hat.reshape(S * A, S)
    radii = (constants.C_p / n_plus).reshape(-1)
    return _extended_value_iteration(
        rewards, lambda u: max_expectation_kl_ball_batch(centers, u, radii), accuracy, max_sweeps, u0)


@dataclass(frozen=True)
class L1Constants:
    n_states: int
    n_actions: int
    delta: float
    t: int


def extended_value_iteration_l1(counts: CountsTable, constants: L1Constants, accuracy: float,
                                max_sweeps: int = DEFAULT_MAX_SWEEPS,
                                u0: Optional[np.ndarray] = None) -> OptimisticPlan:
    """Optimistic plan over L1 balls with UCRL2 radii at time ``constants.t``."""
    S, A = counts.n_states, counts.n_actions
    mu_hat, p_hat = counts.empirical()
    n_plus = counts.n_plus()
    p_rad, r_rad = ucrl2_radii(S, A, constants.t, constants.delta, n_plus)
    rewards = _optimistic_rewards(mu_hat, r_rad)
    centers = p_hat.reshape(S * A, S).copy()
    radii = p_rad.reshape(-1)
    empty = counts.visits.reshape(-1) == 0
    radii = np.where(empty, 2.0, radii)
    # an unvisited row has no centre; any law is plausible, so anchor it anywhere
    centers[empty] = np.eye(S)[0]

    return _extended_value_iteration(
        rewards, lambda u: max_expectation_l1_ball_batch(centers, u, radii), accuracy, max_sweeps, u0)


# -- agents -------------------------------------------------------------------

ALGOS = ("kl_ucrl", "ucrl2", "oracle")
ACCURACY_MODES = ("one_over_sqrt_tk", "fixed")


@dataclass(frozen=True)
class AgentConfig:
    algo: str = "kl_ucrl"
    delta: float = 0.05
    horizon_T: Optional[int] = None
    evi_accuracy_mode: str = "one_over_sqrt_tk"
    evi_accuracy: float = 1e-2
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    warm_start: bool = True

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise InvalidConfig(f"algo: {self.algo!r} not one of {ALGOS}")
        if not 0 < self.delta <= 1:
            raise InvalidConfig(f"delta: {self.delta} outside (0, 1]")
        if self.evi_accuracy_mode not in ACCURACY_MODES:
            raise InvalidConfig(f"evi_accuracy_mode: {self.evi_accuracy_mode!r} not one of {ACCURACY_MODES}")
        if not self.evi_accuracy > 0:
            raise InvalidConfig("evi_accuracy: must be positive")
        if self.horizon_T is not None and self.horizon_T < 1:
            raise InvalidConfig("horizon_T: must be positive")
        if self.max_sweeps < 1:
            raise InvalidConfig("max_sweeps: must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        if not isinstance(d, dict):
            raise InvalidConfig("agent config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidConfig(f"agent: unknown field(s) {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidConfig(f"agent: {exc}") from None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def accuracy_at(self, t_k: int) -> float:
        if self.evi_accuracy_mode == "fixed":
            return self.evi_accuracy
        return 1.0 / math.sqrt(t_k)


class OracleAgent:
    """Plays a b*-improving action of the true MDP."""

    def __init__(self, mdp: TabularMdp):
        _, policy = mdp_core.solve_bellman_optimality(mdp)
        self.policy = [int(a) for a in policy.actions]
        self.episode_starts = [1]

    def reset(self, s0: int) -> None:
        pass

    def act(self, s: int) -> int:
        return self.policy[s]

    def observe(self, s: int, a: int, r: float, s_next: int) -> None:
        pass


class _OptimisticAgent:
    def __init__(self, n_states: int, n_actions: int, config: AgentConfig, horizon: int):
        self.config = config
        self.horizon = int(config.horizon_T or horizon)
        self.counts = CountsTable(n_states, n_actions)
        self.plan: Optional[OptimisticPlan] = None
        self.plans_made = 0
        self.episode_starts: list[int] = []
        self._policy: list[int] = []

    def _plan(self) -> OptimisticPlan:
        raise NotImplementedError

    def _replan(self) -> None:
        self.plan = self._plan()
        self._policy = self.plan.policy.tolist()
        self.episode_starts.append(self.counts.episode_start)
        self.plans_made += 1

    def _warm(self):
        return self.plan.u if (self.config.warm_start and self.plan is not None) else None

    def reset(self, s0: int) -> None:
        self._replan()

    def act(self, s: int) -> int:
        a = self._policy[s]
        c = self.counts
        if c.local_visits[s, a] >= max(1, c.visits[s, a]):
            c.start_episode()
            self._replan()
            a = self._policy[s]
        return a

    def observe(self, s: int, a: int, r: float, s_next: int) -> None:
        self.counts.record(s, a, r, s_next)


class KlUcrlAgent(_OptimisticAgent):
    def __init__(self, n_states: int, n_actions: int, config: AgentConfig, horizon: int):
        super().__init__(n_states, n_actions, config, horizon)
        self.constants = confidence_constants(n_states, n_actions, max(self.horizon, 3), config.delta)

    def _plan(self) -> OptimisticPlan:
        c = self.counts
        return extended_value_iteration_kl(c, self.constants, self.config.accuracy_at(c.episode_start),
                                           self.config.max_sweeps, self._warm())


class Ucrl2Agent(_OptimisticAgent):
    def _plan(self) -> OptimisticPlan:
        c = self.counts
        consts = L1Constants(c.n_states, c.n_actions, self.config.delta, c.episode_start)
        return extended_value_iteration_l1(c, consts, self.config.accuracy_at(c.episode_start),
                                           self.config.max_sweeps, self._warm())


def make_agent(config: AgentConfig, mdp: TabularMdp, horizon: int):
    """Instantiate the agent named by ``config.algo``; only the oracle reads ``mdp``'s dynamics."""
    if config.algo == "oracle":
        return OracleAgent(mdp)
    cls = KlUcrlAgent if config.algo == "kl_ucrl" else Ucrl2Agent
    return cls(mdp.n_states, mdp.n_actions, config, horizon)


# -- bound evaluators ---------------------------------------------------------

def theorem_bound_evaluators(profile: MdpProfile, S: int, A: int, T: float, delta: float) -> dict:
    """Numeric values of the variance-aware regret upper bound and the lower bound."""
    B = confidence_constants(S, A, T, delta).B
    sum_v = float(np.sum(profile.bias_variance))
    lead = 31.0 * math.sqrt(S * sum_v * T * B)
    full = lead + (35.0 * S * math.sqrt(A) + math.sqrt(2.0) * profile.diameter + 1.0) * math.sqrt(T * B)
    return {
        "B": B,
        "ub_leading": lead,
        "ub_full": full,
        "lb": 0.0123 * math.sqrt(profile.v_max * S * A * T),
        "psi_sqrt_SA": profile.span_bias * math.sqrt(S * A),
        "sqrt_sum_V": math.sqrt(sum_v),
    }
