"""Exact analytics on known tabular average-reward MDPs.

Gain and bias come from the fundamental matrix of the induced chain, the
optimal pair from relative value iteration polished by policy iteration,
the diameter from per-target stochastic-shortest-path policy iteration.
"""
from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    InvalidConfig,
    NoConvergence,
    NotCommunicating,
    ReducibleChain,
    SingularSystem,
)

SIMPLEX_TOL = 1e-12
RESIDUAL_TOL = 1e-9
GAP_TOL = 1e-9
DEFAULT_VI_MAX_ITER = 10**6
STALL_WINDOW = 1000
DEFAULT_POLICY_CAP = 4096


class RewardNoise(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    BERNOULLI = "bernoulli"


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP: ``transition[s, a, s']``, ``mean_reward[s, a]`` and a
    per-pair reward-noise kind."""

    transition: np.ndarray
    mean_reward: np.ndarray
    reward_noise: np.ndarray = None

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        mu = np.asarray(self.mean_reward, dtype=float)
        if P.ndim != 3 or P.shape[0] < 1 or P.shape[1] < 1 or P.shape[2] != P.shape[0]:
            raise InvalidConfig(f"transition: expected shape (S, A, S), got {P.shape}")
        S, A = P.shape[:2]
        if mu.shape != (S, A):
            raise InvalidConfig(f"mean_reward: expected shape {(S, A)}, got {mu.shape}")
        noise = self.reward_noise
        if noise is None:
            noise = RewardNoise.DETERMINISTIC.value
        noise = np.broadcast_to(np.asarray(noise, dtype=object), (S, A))
        try:
            noise = np.vectorize(lambda x: RewardNoise(x).value, otypes=[object])(noise)
        except ValueError as exc:
            raise InvalidConfig(f"reward_noise: {exc}") from None
        _validate(P, mu)
        object.__setattr__(self, "transition", _frozen(P))
        object.__setattr__(self, "mean_reward", _frozen(mu))
        object.__setattr__(self, "reward_noise", _frozen(noise, dtype=object))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def bernoulli_mask(self) -> np.ndarray:
        return self.reward_noise == RewardNoise.BERNOULLI.value

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "mean_reward": self.mean_reward.tolist(),
            "reward_noise": self.reward_noise.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        for key in ("transition", "mean_reward"):
            if key not in d:
                raise InvalidConfig(f"{key}: missing field")
        try:
            P = np.array(d["transition"], dtype=float)
            mu = np.array(d["mean_reward"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"transition/mean_reward: not a numeric array ({exc})") from None
        for key, expected in (("n_states", P.shape[0] if P.ndim else None),
                              ("n_actions", P.shape[1] if P.ndim > 1 else None)):
            if key in d and d[key] != expected:
                raise InvalidConfig(f"{key}: declared {d[key]} but transition has {expected}")
        return cls(P, mu, d.get("reward_noise"))


def _validate(P: np.ndarray, mu: np.ndarray) -> None:
    if not np.all(np.isfinite(P)):
        raise InvalidConfig("transition: non-finite entries")
    bad = np.argwhere(P < 0)
    if len(bad):
        s, a, y = bad[0]
        raise InvalidConfig(f"transition[{s}][{a}][{y}]: negative probability {P[s, a, y]}")
    sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > SIMPLEX_TOL)
    if len(bad):
        s, a = bad[0]
        raise InvalidConfig(f"transition[{s}][{a}]: row sums to {sums[s, a]!r}, expected 1")
    bad = np.argwhere(~((mu >= 0) & (mu <= 1)))
    if len(bad):
        s, a = bad[0]
        raise InvalidConfig(f"mean_reward[{s}][{a}]: {mu[s, a]} outside [0, 1]")


def loads_mdp(text: str) -> TabularMdp:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(d, dict):
        raise InvalidConfig("top level: expected a JSON object")
    return TabularMdp.from_dict(d)


def load_mdp(path) -> TabularMdp:
    return loads_mdp(Path(path).read_text())


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    action_dist: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.action_dist, dtype=float)
        if pi.ndim != 2:
            raise InvalidConfig(f"action_dist: expected shape (S, A), got {pi.shape}")
        if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise InvalidConfig("action_dist: rows must be probability vectors")
        object.__setattr__(self, "action_dist", _frozen(pi))

    @classmethod
    def deterministic(cls, actions, n_actions: int) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=int)
        pi = np.zeros((len(actions), n_actions))
        pi[np.arange(len(actions)), actions] = 1.0
        return cls(pi)

    @property
    def actions(self) -> np.ndarray:
        """Greedy action per state (the action itself for deterministic policies)."""
        return np.argmax(self.action_dist, axis=1)


@dataclass(frozen=True, eq=False)
class GainBias:
    gain: float
    bias: np.ndarray
    bellman_residual: float


@dataclass(frozen=True, eq=False)
class MdpProfile:
    diameter: float
    span_bias: float
    gain_opt: float
    bias_variance: np.ndarray
    gaps: np.ndarray
    v_max: float
    mixing_time: Optional[float] = None
    bias: np.ndarray = field(default=None, repr=False)
    policy: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "diameter": self.diameter,
            "span_bias": self.span_bias,
            "gain_opt": self.gain_opt,
            "v_max": self.v_max,
            "sum_bias_variance": float(self.bias_variance.sum()),
            "mixing_time": self.mixing_time,
            "bias_variance": self.bias_variance.tolist(),
            "gaps": self.gaps.tolist(),
            "bias": None if self.bias is None else self.bias.tolist(),
            "policy": None if self.policy is None else self.policy.tolist(),
        }


def span(f) -> float:
    f = np.asarray(f, dtype=float)
    return float(f.max() - f.min())


def induced_chain(mdp: TabularMdp, policy: StationaryPolicy):
    """Return ``(P_pi, mu_pi)`` for a stationary policy."""
    pi = policy.action_dist
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidConfig(f"policy shape {pi.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}")
    P = np.einsum("sa,say->sy", pi, mdp.transition)
    r = np.einsum("sa,sa->s", pi, mdp.mean_reward)
    return P, r


def closed_classes(P: np.ndarray) -> list[np.ndarray]:
    """Closed communicating classes of the chain with transition matrix ``P``."""
    adj = P > 0
    n, labels = connected_components(adj, directed=True, connection="strong")
    leaves = np.ones(n, dtype=bool)
    src, dst = np.nonzero(adj)
    leaves[labels[src][labels[src] != labels[dst]]] = False
    return [np.flatnonzero(labels == c) for c in range(n) if leaves[c]]


def is_irreducible(P: np.ndarray) -> bool:
    n, _ = connected_components(P > 0, directed=True, connection="strong")
    return n == 1


def _chain_stationary(P: np.ndarray) -> np.ndarray:
    if len(closed_classes(P)) != 1:
        raise ReducibleChain("induced chain has more than one closed class")
    S = P.shape[0]
    # nu (I - P + 11^T) = 1^T has a unique solution for unichain P
    M = np.eye(S) - P + 1.0
    try:
        nu = np.linalg.solve(M.T, np.ones(S))
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


def stationary_distribution(mdp: TabularMdp, policy: StationaryPolicy) -> np.ndarray:
    P, _ = induced_chain(mdp, policy)
    return _chain_stationary(P)


def _chain_gain_bias(P: np.ndarray, r: np.ndarray):
    nu = _chain_stationary(P)
    S = P.shape[0]
    g = float(nu @ r)
    Pbar = np.outer(np.ones(S), nu)
    try:
        b = np.linalg.solve(np.eye(S) - P + Pbar, r - g)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    # one refinement step against the centering condition nu.b = 0
    b = b - nu @ b
    return g, b


def policy_gain_bias(mdp: TabularMdp, policy: StationaryPolicy) -> GainBias:
    P, r = induced_chain(mdp, policy)
    g, b = _chain_gain_bias(P, r)
    resid = float(np.max(np.abs(b + g - r - P @ b)))
    return GainBias(g, _frozen(b), resid)


def bellman_optimality_residual(mdp: TabularMdp, gain: float, bias) -> float:
    q = mdp.mean_reward + mdp.transition @ np.asarray(bias)
    return float(np.max(np.abs(bias + gain - q.max(axis=1))))


def _greedy(q: np.ndarray, current: Optional[np.ndarray] = None, tol: float = 0.0) -> np.ndarray:
    """Argmax per row, lowest index among ties; keeps ``current`` unless beaten by more than tol."""
    best = q.max(axis=1)
    scale = 1.0 + np.abs(best)
    new = np.argmax(q >= (best - tol * scale)[:, None], axis=1)
    if current is not None:
        keep = q[np.arange(len(q)), current] >= best - tol * scale
        new = np.where(keep, current, new)
    return new


def relative_value_iteration(mdp: TabularMdp, epsilon: float, max_iter: int = DEFAULT_VI_MAX_ITER,
                             stall_window: Optional[int] = None):
    """Value iteration with span stopping rule; returns ``(u_n, u_{n+1} - u_n, greedy, n)``.

    With ``stall_window`` set, give up early once the span has not shrunk
    at all over that many sweeps, as happens on periodic chains.
    """
    P, mu = mdp.transition, mdp.mean_reward
    u = np.zeros(mdp.n_states)
    checkpoint = np.inf
    for n in range(1, max_iter + 1):
        q = mu + P @ u
        u_next = q.max(axis=1)
        diff = u_next - u
        sp = diff.max() - diff.min()
        if sp <= epsilon:
            return u, diff, _greedy(q), n
        if stall_window and n % stall_window == 0:
            if sp >= checkpoint * (1.0 - 1e-9):
                raise NoConvergence(f"value iteration stalled at span {sp} after {n} sweeps")
            checkpoint = sp
        u = u_next - u_next.min()
    raise NoConvergence(f"value iteration did not reach span {epsilon} in {max_iter} sweeps")


def aperiodic_transform(mdp: TabularMdp) -> TabularMdp:
    """Blend every row with a self-loop, ``P <- (P + I)/2``; gains are unchanged."""
    eye = np.eye(mdp.n_states)[:, None, :]
    return TabularMdp(0.5 * (mdp.transition + eye), mdp.mean_reward, mdp.reward_noise)


def solve_bellman_optimality(mdp: TabularMdp, epsilon: float = 1e-10,
                             max_iter: int = DEFAULT_VI_MAX_ITER):
    """Optimal gain, bias and a b*-improving deterministic policy.

    Value iteration locates an epsilon-optimal greedy policy; policy
    iteration then polishes it so the returned bias solves the optimality
    equation to machine precision. The bias is centered so that it has zero
    mean under the stationary law of the returned policy.
    """
    if epsilon <= 0:
        raise InvalidConfig("epsilon must be positive")
    try:
        u, diff, pi, _ = relative_value_iteration(mdp, epsilon, max_iter, STALL_WINDOW)
    except NoConvergence:
        u, diff, pi, _ = relative_value_iteration(aperiodic_transform(mdp), epsilon, max_iter)
        u = 0.5 * u  # the lazy chain's bias is twice the original one
    A = mdp.n_actions
    try:
        for _ in range(1000):
            policy = StationaryPolicy.deterministic(pi, A)
            gb = policy_gain_bias(mdp, policy)
            q = mdp.mean_reward + mdp.transition @ gb.bias
            new = _greedy(q, pi, tol=1e-13)
            if np.array_equal(new, pi):
                break
            pi = new
        else:
            raise NoConvergence("policy iteration polish did not stabilise")
        gain, bias = gb.gain, np.array(gb.bias)
    except ReducibleChain:
        # multichain greedy policy: fall back to the value-iteration estimate
        gain = 0.5 * (diff.max() + diff.min())
        bias = u - u.mean()
        policy = StationaryPolicy.deterministic(pi, A)
    resid = bellman_optimality_residual(mdp, gain, bias)
    return GainBias(float(gain), _frozen(bias), resid), policy


def _reach_layers(P: np.ndarray, target: int) -> np.ndarray:
    """BFS distance (in steps, best action) from every state to ``target``."""
    S = P.shape[0]
    can = P > 0
    dist = np.full(S, -1)
    dist[target] = 0
    frontier = [target]
    d = 0
    while frontier:
        d += 1
        hit = can[:, :, frontier].any(axis=(1, 2)) & (dist < 0)
        frontier = list(np.flatnonzero(hit))
        dist[frontier] = d
    return dist


def min_hitting_times(mdp: TabularMdp, target: int) -> np.ndarray:
    """Minimal expected hitting time of ``target`` from every state (0 at target)."""
    P = mdp.transition
    S, A = mdp.n_states, mdp.n_actions
    dist = _reach_layers(P, target)
    if np.any(dist < 0):
        raise NotCommunicating(f"state {target} unreachable from states {np.flatnonzero(dist < 0).tolist()}")
    # initial proper policy: move one BFS layer closer with positive probability
    closer = (P > 0) & (dist[None, None, :] < dist[:, None, None])
    pi = np.argmax(closer.any(axis=2), axis=1)
    others = np.array([s for s in range(S) if s != target], dtype=int)
    h = np.zeros(S)
    for _ in range(10 * S * A + 100):
        Ppi = P[others, pi[others]][:, others]
        try:
            h[others] = np.linalg.solve(np.eye(S - 1) - Ppi, np.ones(S - 1))
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(str(exc)) from None
        q = 1.0 + P[others] @ h
        cur = q[np.arange(S - 1), pi[others]]
        best = q.min(axis=1)
        improve = best < cur - 1e-12 * (1.0 + np.abs(cur))
        if not improve.any():
            return h
        pi[others[improve]] = np.argmin(q[improve], axis=1)
    raise NoConvergence("hitting-time policy iteration did not stabilise")


def diameter(mdp: TabularMdp) -> float:
    S = mdp.n_states
    if S == 1:
        return 0.0
    return float(max(min_hitting_times(mdp, y).max() for y in range(S)))


def chain_hitting_times(P: np.ndarray) -> np.ndarray:
    """Expected first hitting times ``H[s, y]`` of an irreducible chain (inf if reducible)."""
    S = P.shape[0]
    if not is_irreducible(P):
        H = np.full((S, S), np.inf)
        np.fill_diagonal(H, 0.0)
        return H
    nu = _chain_stationary(P)
    Z = np.linalg.inv(np.eye(S) - P + np.outer(np.ones(S), nu))
    return (np.diag(Z)[None, :] - Z) / nu[None, :]


def mixing_time(mdp: TabularMdp, policy_cap: int = DEFAULT_POLICY_CAP) -> Optional[float]:
    """Worst pairwise expected hitting time over all deterministic policies.

    Returns None when ``A**S`` exceeds ``policy_cap``.
    """
    S, A = mdp.n_states, mdp.n_actions
    if A ** S > policy_cap:
        return None
    if S == 1:
        return 0.0
    worst = 0.0
    rows = np.arange(S)
    for actions in itertools.product(range(A), repeat=S):
        H = chain_hitting_times(mdp.transition[rows, list(actions)])
        worst = max(worst, float(H.max()))
    return worst


def bias_variance_table(mdp: TabularMdp, bias) -> np.ndarray:
    b = np.asarray(bias, dtype=float)
    b = b - b.min()
    mean = mdp.transition @ b
    dev = b[None, None, :] - mean[:, :, None]
    return np.einsum("say,say->sa", mdp.transition, dev * dev)


def suboptimality_gaps(mdp: TabularMdp, gain_bias: GainBias, opt_policy: StationaryPolicy) -> np.ndarray:
    b = np.asarray(gain_bias.bias, dtype=float)
    b = b - b.min()
    q = mdp.mean_reward + mdp.transition @ b
    star = opt_policy.actions
    phi = q[np.arange(mdp.n_states), star][:, None] - q
    # rounding noise only; genuinely negative entries mean opt_policy is not optimal
    phi[(phi < 0) & (phi >= -GAP_TOL)] = 0.0
    return phi


def mdp_profile(mdp: TabularMdp, mixing_cap: int = DEFAULT_POLICY_CAP,
                epsilon: float = 1e-10) -> MdpProfile:
    gb, policy = solve_bellman_optimality(mdp, epsilon)
    V = bias_variance_table(mdp, gb.bias)
    return MdpProfile(
        diameter=diameter(mdp),
        span_bias=span(gb.bias),
        gain_opt=gb.gain,
        bias_variance=_frozen(V),
        gaps=_frozen(suboptimality_gaps(mdp, gb, policy)),
        v_max=float(V.max()),
        mixing_time=mixing_time(mdp, mixing_cap) if mixing_cap else None,
        bias=gb.bias,
        policy=_frozen(policy.actions, dtype=int),
    )
