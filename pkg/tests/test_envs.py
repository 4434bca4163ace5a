import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from klucrl import envs, mdp_core
from klucrl.envs import RiverSwimConfig, TwoStateHardConfig
from klucrl.errors import InvalidConfig
from klucrl.mdp_core import StationaryPolicy, TabularMdp


def _all_policies_irreducible(mdp):
    S, A = mdp.n_states, mdp.n_actions
    for actions in np.ndindex(*(A,) * S):
        P, _ = mdp_core.induced_chain(mdp, StationaryPolicy.deterministic(list(actions), A))
        if not mdp_core.is_irreducible(P):
            return False
    return True


class TestRiverSwim:
    def test_default_is_ergodic(self):
        mdp = envs.make_ergodic_riverswim()
        assert (mdp.n_states, mdp.n_actions) == (6, 2)
        assert np.allclose(mdp.transition.sum(axis=2), 1.0)
        assert _all_policies_irreducible(mdp)

    def test_rewards_only_at_the_banks(self):
        cfg = RiverSwimConfig(n_states=9)
        R = envs.make_ergodic_riverswim(cfg).mean_reward
        assert R[0, envs.LEFT] == cfg.reward_left
        assert R[-1, envs.RIGHT] == cfg.reward_right
        mask = np.ones_like(R, dtype=bool)
        mask[0, envs.LEFT] = mask[-1, envs.RIGHT] = False
        assert np.all(R[mask] == 0)

    def test_transition_structure(self):
        cfg = RiverSwimConfig(n_states=5)
        P = envs.make_ergodic_riverswim(cfg).transition
        assert P[2, envs.RIGHT, 3] == cfg.p_forward
        assert P[2, envs.RIGHT, 2] == cfg.p_stay
        assert P[2, envs.RIGHT, 1] == cfg.p_back
        assert P[2, envs.LEFT, 3] == cfg.left_slip
        assert P[0, envs.LEFT, 0] == pytest.approx(1 - cfg.left_slip)
        assert P[4, envs.LEFT, 4] == pytest.approx(cfg.left_stay + cfg.left_slip)

    @pytest.mark.parametrize("kw", [
        {"n_states": 2}, {"n_states": 4.0}, {"p_forward": 0.5}, {"left_slip": 0.0},
        {"left_stay": 0.999, "left_slip": 0.01}, {"reward_right": 1.5}, {"p_end_stay": -0.1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfig):
            RiverSwimConfig(**kw)

    def test_profile_matches_reference_row(self):
        profile = mdp_core.mdp_profile(envs.make_ergodic_riverswim(), mixing_cap=0)
        assert profile.span_bias == pytest.approx(6.3, rel=0.15)
        assert np.sqrt(profile.bias_variance.sum()) == pytest.approx(1.8, rel=0.15)
        assert profile.v_max == pytest.approx(0.6322, rel=0.15)

    def test_span_grows_and_vmax_flat(self):
        profiles = [mdp_core.mdp_profile(envs.make_ergodic_riverswim(RiverSwimConfig(N)), mixing_cap=0)
                    for N in (6, 12, 20, 40)]
        psi = [p.span_bias for p in profiles]
        assert all(a < b for a, b in zip(psi, psi[1:]))
        vmax = [p.v_max for p in profiles]
        assert max(vmax) - min(vmax) <= 1e-3


class TestTwoStateHard:
    def test_reference_values(self):
        mdp, closed = envs.make_two_state_hard(TwoStateHardConfig(0.2, 0.05))
        assert closed.gain_opt == pytest.approx(0.5556, abs=1e-4)
        assert closed.span_bias == pytest.approx(2.2222, abs=1e-4)
        assert closed.v_max == pytest.approx(0.9259, abs=1e-4)
        assert closed.diameter == 5.0
        assert closed.gap == pytest.approx(0.1111, abs=1e-4)
        assert mdp.mean_reward.tolist() == [[0.0, 0.0], [1.0, 1.0]]

    @pytest.mark.parametrize("delta", np.linspace(0.05, 0.3, 5))
    @pytest.mark.parametrize("frac", np.linspace(0.1, 0.5, 5))
    def test_closed_forms_on_grid(self, delta, frac):
        mdp, closed = envs.make_two_state_hard(TwoStateHardConfig(delta, frac * delta))
        profile = mdp_core.mdp_profile(mdp)
        assert abs(profile.gain_opt - closed.gain_opt) <= 1e-9
        assert abs(profile.span_bias - closed.span_bias) <= 1e-9
        assert abs(profile.v_max - closed.v_max) <= 1e-9
        assert abs(profile.diameter - closed.diameter) <= 1e-9
        assert profile.gaps[0, 1] == pytest.approx(closed.gap, abs=1e-9)

    def test_no_advantage_means_no_gaps(self):
        mdp, _ = envs.make_two_state_hard(TwoStateHardConfig(0.2, 0.0, n_actions=3))
        assert np.all(mdp_core.mdp_profile(mdp).gaps == 0)

    def test_many_actions(self):
        mdp, closed = envs.make_two_state_hard(TwoStateHardConfig(0.1, 0.02, n_actions=5))
        gaps = mdp_core.mdp_profile(mdp).gaps
        assert gaps[0, 0] == 0
        assert gaps[0, 1:] == pytest.approx([closed.gap] * 4, abs=1e-9)

    @pytest.mark.parametrize("kw", [
        {"delta": 0.0}, {"delta": 1 / 3}, {"delta": 0.2, "eps": 0.11}, {"eps": -0.01},
        {"n_actions": 0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfig):
            TwoStateHardConfig(**kw)

    def test_eps_at_half_delta_is_allowed(self):
        envs.make_two_state_hard(TwoStateHardConfig(0.2, 0.1))


class TestRandomErgodic:
    def test_single_state(self):
        mdp = envs.make_random_ergodic(1, 1, seed=0)
        gb, _ = mdp_core.solve_bellman_optimality(mdp)
        assert gb.gain == pytest.approx(mdp.mean_reward[0, 0])

    def test_deterministic_in_seed(self):
        a = envs.make_random_ergodic(5, 3, seed=42)
        b = envs.make_random_ergodic(5, 3, seed=42)
        c = envs.make_random_ergodic(5, 3, seed=43)
        assert np.array_equal(a.transition, b.transition)
        assert np.array_equal(a.mean_reward, b.mean_reward)
        assert not np.array_equal(a.transition, c.transition)

    def test_communicating(self):
        mdp = envs.make_random_ergodic(5, 3, seed=7, min_prob=0.01)
        assert np.isfinite(mdp_core.diameter(mdp))
        assert _all_policies_irreducible(mdp)

    @given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 10**6), st.floats(0.0, 1.0))
    def test_min_prob_respected(self, S, A, seed, frac):
        min_prob = frac / S
        mdp = envs.make_random_ergodic(S, A, seed, min_prob)
        assert mdp.transition.min() >= min_prob * (1 - 1e-12)
        assert np.all((mdp.mean_reward >= 0) & (mdp.mean_reward <= 1))

    @pytest.mark.parametrize("args", [(0, 2, 0), (2, 0, 0), (4, 2, 0, 0.3), (4, 2, 0, -0.1)])
    def test_invalid(self, args):
        with pytest.raises(InvalidConfig):
            envs.make_random_ergodic(*args)


class TestSampleStep:
    def test_deterministic_row(self):
        P = np.zeros((3, 1, 3))
        P[:, 0, 2] = 1.0
        mdp = TabularMdp(P, np.full((3, 1), 0.4))
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert envs.sample_step(mdp, 1, 0, rng) == (2, 0.4)

    def test_frequencies_within_three_sigma(self):
        P = np.array([[[0.3, 0.7]], [[0.3, 0.7]]])
        mdp = TabularMdp(P, np.zeros((2, 1)))
        rng = np.random.default_rng(1)
        n = 10**6
        hits = sum(envs.sample_step(mdp, 0, 0, rng)[0] for _ in range(n))
        assert abs(hits / n - 0.7) <= 3 * np.sqrt(0.21 / n)

    def test_bernoulli_rewards(self):
        mdp = TabularMdp(np.ones((1, 1, 1)), np.array([[0.25]]), "bernoulli")
        rng = np.random.default_rng(2)
        n = 20000
        r = np.array([envs.sample_step(mdp, 0, 0, rng)[1] for _ in range(n)])
        assert set(np.unique(r)) <= {0.0, 1.0}
        assert abs(r.mean() - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / n)


class TestConfigs:
    def test_families(self):
        assert envs.env_from_dict({"family": "riverswim", "n_states": 8}).n_states == 8
        assert envs.env_from_dict({"family": "two_state_hard", "delta": 0.1, "eps": 0.02,
                                   "n_actions": 3}).n_actions == 3
        rnd = envs.env_from_dict({"family": "random", "n_states": 4, "n_actions": 2, "seed": 5})
        assert np.array_equal(rnd.transition, envs.make_random_ergodic(4, 2, 5).transition)

    def test_explicit_is_the_default(self):
        mdp = envs.make_random_ergodic(3, 2, seed=1)
        back = envs.env_from_dict(mdp.to_dict())
        assert np.array_equal(back.transition, mdp.transition)

    @pytest.mark.parametrize("d, match", [
        ({"family": "riverswim", "n_state": 6}, "unknown field"),
        ({"family": "random", "n_states": 3}, "missing field"),
        ({"family": "random", "n_states": 3, "n_actions": 1, "colour": 1}, "unknown field"),
        ({"family": "pond"}, "unknown value"),
        ({"family": "riverswim", "n_states": 2}, "n_states"),
        ([1, 2], "JSON object"),
    ])
    def test_errors(self, d, match):
        with pytest.raises(InvalidConfig, match=match):
            envs.env_from_dict(d)

    def test_load_env_reports_syntax_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"family": "riverswim",\n  "n_states": }')
        with pytest.raises(InvalidConfig, match="line 2 column"):
            envs.load_env(path)

    def test_riverswim_dict_roundtrip(self, tmp_path):
        cfg = RiverSwimConfig(n_states=7, left_slip=0.01)
        path = tmp_path / "rs.json"
        path.write_text(json.dumps(envs.riverswim_config_dict(cfg)))
        a = envs.load_env(path)
        assert np.array_equal(a.transition, envs.make_ergodic_riverswim(cfg).transition)
