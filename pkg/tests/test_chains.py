"""Core chain machinery: generators, classes, stationary states, transitions."""

import json

import numpy as np
import pytest

from metarate import (
    ChainSpec,
    Generator,
    build_generator,
    classify_states,
    extreme_stationary_states,
    hitting_probability,
    simulate_empirical_measure,
    stationary_distribution,
    transition_matrix,
)
from metarate.asymptotic import asym
from metarate.chains import chain_spec_from_jsonable, load_chain_spec, save_chain_spec
from metarate.errors import (
    MissingBetaError,
    NotIrreducibleError,
    RateOverflowError,
    StepCapError,
    UnreachableError,
    ValidationError,
)

from conftest import random_chain, random_irreducible


class TestChainSpec:
    def test_rejects_self_loop(self):
        with pytest.raises(ValidationError):
            ChainSpec(states=("a", "b"), edges=(("a", "a", 1.0),))

    def test_rejects_duplicate_edge(self):
        with pytest.raises(ValidationError):
            ChainSpec(states=("a", "b"), edges=(("a", "b", 1.0), ("a", "b", 2.0)))

    def test_rejects_negative_rate(self):
        with pytest.raises(ValidationError):
            ChainSpec(states=("a", "b"), edges=(("a", "b", -1.0),))

    def test_rejects_unknown_state(self):
        with pytest.raises(ValidationError):
            ChainSpec(states=("a", "b"), edges=(("a", "z", 1.0),))

    def test_json_round_trip(self, tmp_path):
        spec = ChainSpec(
            states=("a", "b"),
            edges=(("a", "b", 1.5), ("b", "a", asym(2, "-3/2"))),
        )
        path = tmp_path / "spec.json"
        save_chain_spec(spec, str(path))
        loaded = load_chain_spec(str(path))
        assert loaded.states == spec.states
        assert loaded.edges[0][2] == 1.5
        assert loaded.edges[1][2] == asym(2, "-3/2")

    def test_exp_parses_rational_string(self):
        spec = chain_spec_from_jsonable(
            {"states": ["a", "b"], "edges": [{"from": "a", "to": "b", "coeff": 1, "exp": "-1/2"}]}
        )
        assert str(spec.edges[0][2].exp) == "-1/2"


class TestBuildGenerator:
    def test_numeric_holding(self):
        spec = ChainSpec(states=("a", "b"), edges=(("a", "b", 1.0), ("b", "a", 2.0)))
        gen = build_generator(spec)
        assert gen.holding.tolist() == [1.0, 2.0]

    def test_symbolic_at_beta_zero(self):
        spec = ChainSpec(states=("a", "b"), edges=(("a", "b", asym(2, -1)),))
        assert build_generator(spec, beta=0.0).rates[0, 1] == 2.0

    def test_symbolic_at_beta_ln4(self):
        spec = ChainSpec(states=("a", "b"), edges=(("a", "b", asym(1, -1)),))
        gen = build_generator(spec, beta=float(np.log(4.0)))
        assert gen.rates[0, 1] == pytest.approx(0.25, abs=1e-15)

    def test_missing_beta(self):
        spec = ChainSpec(states=("a", "b"), edges=(("a", "b", asym(1, -1)),))
        with pytest.raises(MissingBetaError):
            build_generator(spec)

    def test_overflow_names_edge(self):
        spec = ChainSpec(states=("a", "b"), edges=(("a", "b", asym(1, 2)),))
        with pytest.raises(RateOverflowError) as err:
            build_generator(spec, beta=1000.0)
        assert err.value.edge == ("a", "b")


class TestClassify:
    def test_absorbing_chain(self):
        gen = Generator([[0, 1], [0, 0]])
        dec = classify_states(gen)
        assert dec.classes == ((0,), (1,))
        assert dec.closed_flags == (False, True)
        assert dec.transient_states == (0,)

    def test_irreducible_two_state(self):
        dec = classify_states(Generator([[0, 1], [1, 0]]))
        assert dec.classes == ((0, 1),)
        assert dec.is_irreducible

    def test_isolated_state_is_closed(self):
        gen = Generator([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        dec = classify_states(gen)
        assert dec.classes == ((0, 1), (2,))
        assert dec.closed_flags == (True, True)

    def test_permutation_equivariance(self):
        # state k of the permuted chain is state perm[k] of the original
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(3, 7))
            gen = random_chain(n, rng)
            perm = rng.permutation(n)
            permuted = Generator(gen.rates[np.ix_(perm, perm)])
            base = classify_states(gen)
            mapped = classify_states(permuted)
            base_sets = {frozenset(cls): fl for cls, fl in zip(base.classes, base.closed_flags)}
            got_sets = {
                frozenset(int(perm[i]) for i in cls): fl
                for cls, fl in zip(mapped.classes, mapped.closed_flags)
            }
            assert base_sets == got_sets


class TestStationary:
    def test_two_state_closed_form_exact(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            a, b = rng.uniform(0.1, 5.0, size=2)
            pi = stationary_distribution(Generator([[0, a], [b, 0]]))
            assert abs(pi[0] - b / (a + b)) <= 1e-14
            assert abs(pi[1] - a / (a + b)) <= 1e-14

    def test_symmetric_half(self):
        pi = stationary_distribution(Generator([[0, 1], [1, 0]]))
        assert pi.weights.tolist() == [0.5, 0.5]

    def test_birth_death_uniform(self):
        # detailed balance with equal rates gives the uniform measure
        gen = Generator([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        pi = stationary_distribution(gen)
        assert np.abs(pi.weights - 1 / 3).max() <= 1e-15

    def test_residual_invariant(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            gen = random_irreducible(int(rng.integers(2, 8)), rng)
            pi = stationary_distribution(gen)
            residual = np.abs(pi.weights @ gen.q_matrix()).max()
            assert residual <= 1e-12 * gen.rates.max()

    def test_not_irreducible(self):
        with pytest.raises(NotIrreducibleError):
            stationary_distribution(Generator([[0, 1], [0, 0]]))

    def test_extreme_states(self):
        # two isolated states
        out = extreme_stationary_states(Generator(np.zeros((2, 2))))
        assert [m.weights.tolist() for _, m in out] == [[1, 0], [0, 1]]
        # absorbing chain
        out = extreme_stationary_states(Generator([[0, 1], [0, 0]]))
        assert [(c, m.weights.tolist()) for c, m in out] == [((1,), [0, 1])]
        # two disjoint loops
        R = np.zeros((4, 4))
        R[0, 1], R[1, 0], R[2, 3], R[3, 2] = 1, 2, 3, 3
        out = extreme_stationary_states(Generator(R))
        assert np.allclose(out[0][1].weights, [2 / 3, 1 / 3, 0, 0])
        assert np.allclose(out[1][1].weights, [0, 0, 0.5, 0.5])


class TestTransitionMatrix:
    def test_time_zero_identity(self):
        gen = Generator([[0, 1], [2, 0]])
        assert np.array_equal(transition_matrix(gen, 0.0), np.eye(2))

    def test_two_state_closed_form(self):
        gen = Generator([[0, 1], [1, 0]])
        p = transition_matrix(gen, 1.0)
        assert p[0, 0] == pytest.approx((1 + np.exp(-2)) / 2, abs=1e-12)

    def test_ergodic_limit(self):
        gen = Generator([[0, 1], [1, 0]])
        p = transition_matrix(gen, 50.0)
        assert np.abs(p - 0.5).max() <= 1e-10

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            gen = random_irreducible(5, rng)
            p = transition_matrix(gen, float(rng.uniform(0, 20)))
            assert np.abs(p.sum(axis=1) - 1).max() <= 1e-10
            assert p.min() >= -1e-15

    def test_semigroup_property(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            gen = random_irreducible(5, rng)
            s, t = rng.uniform(0, 5, size=2)
            lhs = transition_matrix(gen, s + t)
            rhs = transition_matrix(gen, s) @ transition_matrix(gen, t)
            assert np.abs(lhs - rhs).max() <= 1e-9

    def test_rows_converge_to_stationary(self):
        # doubling trial for the relaxation time, then a 1e-6 l1 gate
        rng = np.random.default_rng(6)
        for _ in range(5):
            gen = random_irreducible(5, rng)
            pi = stationary_distribution(gen).weights
            T = 1.0
            for _ in range(60):
                p = transition_matrix(gen, T)
                if np.abs(p - pi[None, :]).sum(axis=1).max() <= 1e-6:
                    break
                T *= 2
            assert np.abs(p - pi[None, :]).sum(axis=1).max() <= 1e-6

    def test_large_mean_window(self):
        # uniformization switches to a windowed Poisson sum for large lam*t
        rng = np.random.default_rng(8)
        gen = random_irreducible(4, rng)
        t = 200.0 / gen.holding.max()
        p = transition_matrix(gen, t)
        pi = stationary_distribution(gen).weights
        assert np.abs(p.sum(axis=1) - 1).max() <= 1e-10
        assert np.abs(p - pi[None, :]).max() <= 1e-8

    def test_step_cap(self):
        gen = Generator([[0, 1], [1, 0]])
        with pytest.raises(StepCapError):
            transition_matrix(gen, 1e9, max_steps=10**6)


class TestHitting:
    def test_forced_values(self):
        gen = Generator([[0, 1], [1, 0]])
        assert hitting_probability(gen, [0], [1], 0) == 1.0
        assert hitting_probability(gen, [0], [1], 1) == 0.0

    def test_symmetric_path(self):
        gen = Generator([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        assert hitting_probability(gen, [0], [2], 1) == pytest.approx(0.5, abs=1e-14)

    def test_one_step_analysis(self):
        gen = Generator([[0, 1, 0], [2, 0, 1], [0, 1, 0]])
        assert hitting_probability(gen, [0], [2], 1) == pytest.approx(2 / 3, abs=1e-14)

    def test_unreachable_is_flagged(self):
        # state 2 has no outgoing edges, so it can reach nothing
        gen = Generator([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
        with pytest.raises(UnreachableError):
            hitting_probability(gen, [0], [1], 2)

    def test_overlap_rejected(self):
        gen = Generator([[0, 1], [1, 0]])
        with pytest.raises(ValidationError):
            hitting_probability(gen, [0], [0], 1)


class TestSimulate:
    def test_absorbed_state(self):
        gen = Generator([[0, 0], [1, 0]])
        m = simulate_empirical_measure(gen, 0, 5.0, seed=1)
        assert m.weights.tolist() == [1.0, 0.0]

    def test_deterministic_for_seed(self):
        gen = Generator([[0, 1], [1, 0]])
        m1 = simulate_empirical_measure(gen, 0, 100.0, seed=42)
        m2 = simulate_empirical_measure(gen, 0, 100.0, seed=42)
        assert np.array_equal(m1.weights, m2.weights)

    def test_ergodic_average(self):
        gen = Generator([[0, 1], [1, 0]])
        m = simulate_empirical_measure(gen, 0, 1e4, seed=7)
        assert np.abs(m.weights - 0.5).max() <= 0.05

    def test_short_time_holding_law(self):
        # initial mass bounded below by the no-jump probability, on average
        gen = Generator([[0, 1], [1, 0]])
        t = 0.1
        values = [simulate_empirical_measure(gen, 0, t, seed=s)[0] for s in range(100)]
        mean = float(np.mean(values))
        sem = float(np.std(values) / 10)
        assert mean + 3 * sem >= np.exp(-gen.holding[0] * t)
