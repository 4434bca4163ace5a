"""Benchmark and hard-instance MDP constructors, plus a transition sampler."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import mdp_core
from .errors import InvalidConfig
from .mdp_core import StationaryPolicy, TabularMdp

CLOSED_FORM_TOL = 1e-9


@dataclass(frozen=True)
class RiverSwimConfig:
    """Ergodic RiverSwim.

    Swimming right moves forward/stays/drifts back with ``p_forward``,
    ``p_stay`` and ``p_back`` at interior states. At the left bank the
    current cannot push back, so the right action moves forward with
    ``p_start_forward`` and stays otherwise. At the right bank the swimmer
    stays with ``p_end_stay`` and is swept back otherwise.

    Swimming left succeeds with probability ``1 - left_stay - left_slip``,
    stays with ``left_stay`` and slips one state right with ``left_slip``.
    The slip keeps every policy's chain irreducible.

    The defaults are calibrated so that the span/variance profile lands
    close to the reference profile for this benchmark.
    """

    n_states: int = 6
    p_forward: float = 0.35
    p_stay: float = 0.6
    p_back: float = 0.05
    p_start_forward: float = 0.6
    p_end_stay: float = 0.6
    left_stay: float = 0.05
    left_slip: float = 0.001
    reward_left: float = 0.05
    reward_right: float = 1.0

    def __post_init__(self):
        if not isinstance(self.n_states, (int, np.integer)) or self.n_states < 3:
            raise InvalidConfig(f"n_states: must be an integer >= 3, got {self.n_states!r}")
        probs = {f.name: getattr(self, f.name) for f in fields(self)
                 if f.name.startswith(("p_", "left_"))}
        for name, value in probs.items():
            if not 0.0 <= value <= 1.0:
                raise InvalidConfig(f"{name}: {value} outside [0, 1]")
        if abs(self.p_forward + self.p_stay + self.p_back - 1.0) > 1e-12:
            raise InvalidConfig("p_forward + p_stay + p_back must equal 1")
        if not self.left_slip > 0:
            raise InvalidConfig("left_slip: must be positive to keep the chain ergodic")
        if self.left_stay + self.left_slip > 1.0:
            raise InvalidConfig("left_stay + left_slip must not exceed 1")
        for name in ("reward_left", "reward_right"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name}: outside [0, 1]")


LEFT, RIGHT = 0, 1


def make_ergodic_riverswim(config: RiverSwimConfig = RiverSwimConfig()) -> TabularMdp:
    N = config.n_states
    P = np.zeros((N, 2, N))
    R = np.zeros((N, 2))
    go_left = 1.0 - config.left_stay - config.left_slip
    for s in range(N):
        lo, hi = max(s - 1, 0), min(s + 1, N - 1)
        P[s, LEFT, lo] += go_left
        P[s, LEFT, s] += config.left_stay
        P[s, LEFT, hi] += config.left_slip
        if s == 0:
            P[s, RIGHT, 1] += config.p_start_forward
            P[s, RIGHT, 0] += 1.0 - config.p_start_forward
        elif s == N - 1:
            P[s, RIGHT, s] += config.p_end_stay
            P[s, RIGHT, s - 1] += 1.0 - config.p_end_stay
        else:
            P[s, RIGHT, s + 1] += config.p_forward
            P[s, RIGHT, s] += config.p_stay
            P[s, RIGHT, s - 1] += config.p_back
    R[0, LEFT] = config.reward_left
    R[N - 1, RIGHT] = config.reward_right
    return TabularMdp(P, R)


@dataclass(frozen=True)
class TwoStateHardConfig:
    """Two-state lower-bound instance.

    Every action leaves ``s1`` with probability ``delta``. From ``s0`` the
    distinguished action 0 reaches ``s1`` with probability ``delta + eps``
    and the others with ``delta``. Rewards are 0 in ``s0`` and 1 in ``s1``.
    """

    delta: float = 0.2
    eps: float = 0.05
    n_actions: int = 2

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0 / 3.0:
            raise InvalidConfig(f"delta: {self.delta} outside (0, 1/3)")
        if not 0.0 <= self.eps <= self.delta / 2.0:
            raise InvalidConfig(f"eps: {self.eps} outside [0, delta/2]")
        if not isinstance(self.n_actions, (int, np.integer)) or self.n_actions < 1:
            raise InvalidConfig("n_actions: must be a positive integer")


@dataclass(frozen=True)
class TwoStateProfile:
    gain_opt: float
    span_bias: float
    v_max: float
    diameter: float
    gap: float  # of every non-distinguished action at s0


def two_state_closed_form(config: TwoStateHardConfig) -> TwoStateProfile:
    d, e = config.delta, config.eps
    psi = 1.0 / (2 * d + e)
    return TwoStateProfile(
        gain_opt=(d + e) / (2 * d + e),
        span_bias=psi,
        v_max=(d + e) * (1 - d - e) * psi**2,
        diameter=1.0 / d,
        gap=e * psi,
    )


def make_two_state_hard(config: TwoStateHardConfig = TwoStateHardConfig()):
    """Build the instance and return it with its closed-form profile.

    The closed forms are cross-checked against the numerical solvers.
    """
    d, e, A = config.delta, config.eps, config.n_actions
    P = np.zeros((2, A, 2))
    P[0, :, 1] = d
    P[0, 0, 1] = d + e
    P[0, :, 0] = 1.0 - P[0, :, 1]
    P[1, :, 0] = d
    P[1, :, 1] = 1.0 - d
    R = np.zeros((2, A))
    R[1, :] = 1.0
    mdp = TabularMdp(P, R)

    closed = two_state_closed_form(config)
    gb, policy = mdp_core.solve_bellman_optimality(mdp)
    V = mdp_core.bias_variance_table(mdp, gb.bias)
    numeric = (gb.gain, mdp_core.span(gb.bias), V.max(), mdp_core.diameter(mdp))
    expected = (closed.gain_opt, closed.span_bias, closed.v_max, closed.diameter)
    for name, got, want in zip(("gain", "span", "v_max", "diameter"), numeric, expected):
        if abs(got - want) > CLOSED_FORM_TOL * max(1.0, abs(want)):
            raise AssertionError(f"two-state {name}: solver {got!r} vs closed form {want!r}")
    return mdp, closed


def make_random_ergodic(S: int, A: int, seed: int, min_prob: float = 0.01,
                        reward_noise: str = "deterministic") -> TabularMdp:
    """Random MDP whose transition entries are all at least ``min_prob``."""
    if S < 1 or A < 1:
        raise InvalidConfig("S and A must be positive")
    if min_prob < 0 or min_prob * S > 1.0 + 1e-12:
        raise InvalidConfig(f"min_prob: need 0 <= min_prob*S <= 1, got {min_prob}*{S}")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    P = min_prob + (1.0 - min_prob * S) * P
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(0.0, 1.0, size=(S, A))
    return TabularMdp(P, R, reward_noise)


def sample_step(mdp: TabularMdp, s: int, a: int, rng: np.random.Generator):
    """Draw ``(next_state, reward)`` for the pair ``(s, a)``."""
    row = mdp.transition[s, a]
    nxt = int(np.searchsorted(np.cumsum(row), rng.random(), side="right"))
    nxt = min(nxt, mdp.n_states - 1)
    mu = float(mdp.mean_reward[s, a])
    if mdp.bernoulli_mask[s, a]:
        reward = float(rng.random() < mu)
    else:
        reward = mu
    return nxt, reward


# -- JSON configs -------------------------------------------------------------

FAMILIES = ("riverswim", "two_state_hard", "random", "explicit")


@dataclass(frozen=True)
class EnvSpec:
    family: str
    params: dict

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, **self.params}


def _build(cls, params: dict, family: str):
    known = {f.name for f in fields(cls)}
    extra = set(params) - known
    if extra:
        raise InvalidConfig(f"{family}: unknown field(s) {sorted(extra)}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise InvalidConfig(f"{family}: {exc}") from None


def env_from_dict(d: dict) -> TabularMdp:
    """Construct an MDP from a config dict carrying a ``family`` key.

    A dict with no ``family`` key is read as an explicit MDP.
    """
    if not isinstance(d, dict):
        raise InvalidConfig("environment config must be a JSON object")
    params = dict(d)
    family = params.pop("family", "explicit")
    if family == "riverswim":
        return make_ergodic_riverswim(_build(RiverSwimConfig, params, family))
    if family == "two_state_hard":
        return make_two_state_hard(_build(TwoStateHardConfig, params, family))[0]
    if family == "random":
        allowed = {"n_states", "n_actions", "seed", "min_prob", "reward_noise"}
        if set(params) - allowed:
            raise InvalidConfig(f"random: unknown field(s) {sorted(set(params) - allowed)}")
        try:
            return make_random_ergodic(int(params["n_states"]), int(params["n_actions"]),
                                       int(params.get("seed", 0)),
                                       float(params.get("min_prob", 0.01)),
                                       params.get("reward_noise", "deterministic"))
        except KeyError as exc:
            raise InvalidConfig(f"random: missing field {exc}") from None
    if family == "explicit":
        return TabularMdp.from_dict(params)
    raise InvalidConfig(f"family: unknown value {family!r}, expected one of {FAMILIES}")


def load_env(path) -> TabularMdp:
    text = Path(path).read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return env_from_dict(d)


def riverswim_config_dict(config: RiverSwimConfig) -> dict:
    return {"family": "riverswim", **asdict(config)}
