"""Acceptance suite: one test per criterion, one printed line per criterion.

Every tolerance below is pinned from the criterion it implements; run with
``pytest tests/test_acceptance.py -v -s`` to see the per-criterion lines.
"""

import functools
import time

import numpy as np
import pytest

from metarate import (
    Generator,
    build_generator,
    extreme_stationary_states,
    gamma_liminf_probe,
    gamma_limsup_table,
    harmonic_extension,
    rate,
    rate_irreducible,
    simulate_empirical_measure,
    stationary_distribution,
    t1_check,
    tilt,
    trace,
)
from metarate.asymptotic import ZERO, asym, symbolic_stationary

from conftest import (
    make_bd3_family,
    make_two_state_family,
    make_wells5_family,
    random_chain,
    random_full_support_measure,
    random_irreducible,
    random_symbolic,
)
from test_rate import grid_search_value, mixed_support_instance


def criterion(num, description):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"ACCEPTANCE {num:2d} FAIL  {description}")
                raise
            print(f"ACCEPTANCE {num:2d} PASS  {description}")

        return wrapper

    return decorate


@criterion(1, "two-state closed form to 1e-8 on 20 random triples, under 1 s")
def test_criterion_01_two_state_closed_form():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    for _ in range(20):
        a, b = rng.uniform(0.1, 5.0, size=2)
        p = float(rng.uniform(0.05, 0.95))
        mu = np.array([p, 1.0 - p])
        gen = Generator([[0, a], [b, 0]])
        expected = (np.sqrt(mu[0] * a) - np.sqrt(mu[1] * b)) ** 2
        assert abs(rate_irreducible(gen, mu).value - expected) <= 1e-8
    assert time.perf_counter() - start < 1.0


@criterion(2, "zero set: rate <= 1e-9 iff stationary, both directions, 50 chains")
def test_criterion_02_zero_set():
    rng = np.random.default_rng(1002)
    for _ in range(50):
        n = int(rng.integers(2, 7))
        gen = random_chain(n, rng)
        Q = gen.q_matrix()

        extremes = extreme_stationary_states(gen)
        weights = rng.dirichlet(np.ones(len(extremes)))
        mu = sum(w * m.weights for w, (_, m) in zip(weights, extremes))
        samples = [mu]
        for _ in range(30):  # a measure far from every stationary state
            nu = rng.dirichlet(np.ones(n))
            if np.abs(nu @ Q).max() > 1e-2:
                samples.append(nu)
                break
        for sample in samples:
            stationary = np.abs(sample @ Q).max() <= 1e-9
            small = rate(gen, sample).value <= 1e-9
            assert stationary == small


@criterion(3, "K-decomposition matches boxed grid search to 1e-3 on 30 chains")
def test_criterion_03_brute_force():
    rng = np.random.default_rng(1003)
    for _ in range(30):
        gen, mu = mixed_support_instance(rng)
        assert abs(rate(gen, mu).value - grid_search_value(gen.rates, mu)) <= 1e-3


@criterion(4, "operator identities: elimination, commutation, nesting, transfer")
def test_criterion_04_operator_identities():
    start = time.perf_counter()
    # hand case of the one-state elimination rule, exact
    gen = Generator([[0, 0, 1], [0, 0, 0], [2, 2, 0]])
    assert trace(gen, [0, 1]).rates[0, 1] == 0.5

    rng = np.random.default_rng(1004)
    for _ in range(30):
        n = int(rng.integers(4, 7))
        g = random_irreducible(n, rng)
        k = int(rng.integers(2, n))
        A = sorted(rng.choice(n, size=k, replace=False).tolist())
        u = rng.uniform(0.5, 2.0, size=k)
        v = harmonic_extension(g, A, u)

        # elimination-order independence
        elim = [z for z in range(n) if z not in A]
        t1 = trace(g, A, elimination_order=elim).rates
        t2 = trace(g, A, elimination_order=elim[::-1]).rates
        assert np.abs(t1 - t2).max() <= 1e-12

        # trace generator applied to u vs full generator applied to the extension
        assert np.abs(trace(g, A).q_matrix() @ u - (g.q_matrix() @ v)[A]).max() <= 1e-10

        # nested harmonic extensions agree on intermediate sets
        extra = [z for z in range(n) if z not in A][:1]
        if extra:
            B = sorted(A + extra)
            inner = harmonic_extension(trace(g, B), [B.index(a) for a in A], u)
            assert np.abs(v[B] - inner).max() <= 1e-10

        # trace/tilt commutation through the harmonic extension
        lhs = trace(tilt(g, np.log(v)), A).rates
        rhs = tilt(trace(g, A), np.log(u)).rates
        assert np.abs(lhs - rhs).max() <= 1e-10

        # transfer: trace value below the full value; identity via the lift
        mu_A = random_full_support_measure(k, rng)
        mu_full = np.zeros(n)
        mu_full[A] = mu_A
        traced_report = rate(trace(g, A), mu_A)
        assert traced_report.value <= rate(g, mu_full).value + 1e-8
        w = np.exp(traced_report.optimizer.values)
        lift = harmonic_extension(g, A, w)
        nu = stationary_distribution(tilt(g, np.log(lift)))
        lhs_value = traced_report.value * float(nu.weights[A].sum())
        assert abs(lhs_value - rate(g, nu.weights).value) <= 1e-8
    assert time.perf_counter() - start < 10.0


@criterion(5, "semiring laws exact on 1e4 scalars; matrix-tree vs numeric at beta=30")
def test_criterion_05_semiring_and_matrix_tree():
    from fractions import Fraction

    rng = np.random.default_rng(1005)

    def scalar():
        if rng.random() < 0.08:
            return ZERO
        return asym(
            Fraction(int(rng.integers(1, 30)), int(rng.integers(1, 12))),
            Fraction(int(rng.integers(-6, 7)), int(rng.integers(1, 4))),
        )

    one = asym(1, 0)
    for _ in range(10_000 // 3):
        a, b, c = scalar(), scalar(), scalar()
        assert a + b == b + a
        assert (a + b) + c == a + (b + c)
        assert a * b == b * a
        assert (a * b) * c == a * (b * c)
        assert a * (b + c) == a * b + a * c
        assert a + ZERO == a and a * ZERO == ZERO and a * one == a

    for _ in range(20):
        fam = random_symbolic(int(rng.integers(2, 6)), rng)
        sym = symbolic_stationary(fam)
        pi = stationary_distribution(build_generator(fam.spec, 30.0)).weights
        evaluated = np.array([s.evaluate_at_beta(30.0) for s in sym])
        assert np.abs((evaluated - pi) / pi).max() <= 1e-3


@criterion(6, "canonical birth-death tree: depth, scales, limit rates, top measure")
def test_criterion_06_canonical_tree():
    from metarate import build_tree

    start = time.perf_counter()
    tree = build_tree(make_bd3_family())
    assert tree.q == 2
    assert str(tree.level(1).theta.exp) == "1"
    assert str(tree.level(2).theta.exp) == "2"
    lvl1 = tree.level(1).limit_rates
    assert lvl1[0][1] == 1.0 and lvl1[1][0] == 1.0
    assert lvl1[0][2] == 0.0 and lvl1[2][0] == 0.0 and lvl1[1][2] == 0.0 and lvl1[2][1] == 0.0
    lvl2 = tree.level(2).limit_rates
    assert lvl2[0][1] == 0.5 and lvl2[1][0] == 1.0
    assert np.abs(tree.level(3).measures[0] - 1 / 3).max() <= 1e-12
    assert time.perf_counter() - start < 5.0


@criterion(7, "transition-probability limits: l1 deviation <= 0.05, decreasing in beta")
def test_criterion_07_transition_limits():
    from metarate import build_tree

    fam = make_bd3_family()
    tree = build_tree(fam)
    for p in (1, 2):
        for x in range(3):
            rows = t1_check(fam, tree, p, 1.0, x, [6.0, 9.0, 12.0])
            devs = [r["deviation"] for r in rows]
            assert devs[-1] <= 0.05
            assert all(b <= a + 1e-12 for a, b in zip(devs, devs[1:]))


@criterion(8, "recovery-sequence tables within 5% of the closed-form targets")
def test_criterion_08_gamma_limsup():
    from metarate import build_tree

    start = time.perf_counter()
    fam = make_bd3_family()
    tree = build_tree(fam)
    table = gamma_limsup_table(fam, tree, 2, [0.5, 0.5], [8, 12, 16, 20])
    target = 0.75 - 1 / np.sqrt(2.0)
    assert abs(table.target - target) <= 1e-12
    assert abs(table.rows[-1].value - target) <= 0.05 * target
    errors = [r.error for r in table.rows]
    assert all(b <= a + 1e-9 for a, b in zip(errors, errors[1:]))
    assert table.verdict == "PASS"

    fam2 = make_two_state_family()
    tree2 = build_tree(fam2)
    table2 = gamma_limsup_table(fam2, tree2, 1, [0.5, 0.5], [8, 12, 16, 20])
    target2 = (np.sqrt(0.5) - 1.0) ** 2
    assert abs(table2.rows[-1].value - target2) <= 0.05 * target2
    errors2 = [r.error for r in table2.rows]
    assert all(b <= a + 1e-9 for a, b in zip(errors2, errors2[1:]))
    assert table2.verdict == "PASS"
    assert time.perf_counter() - start < 60.0


@criterion(9, "liminf probes: geometric divergence off the mixtures, 0.9 bound on them")
def test_criterion_09_liminf():
    from metarate import build_tree

    wells = make_wells5_family()
    wtree = build_tree(wells)
    diverging = gamma_liminf_probe(wells, wtree, 1, [0, 0, 1, 0, 0], [8, 12, 16, 20])
    assert diverging["verdict"] == "DIVERGES"
    values = [r["value"] for r in diverging["rows"]]
    assert all(b >= 2.0 * a for a, b in zip(values, values[1:]))

    fam = make_bd3_family()
    tree = build_tree(fam)
    mu = 0.5 * tree.level(2).measures[0] + 0.5 * tree.level(2).measures[1]
    bounded = gamma_liminf_probe(fam, tree, 2, mu, [8, 12, 16, 20])
    assert bounded["verdict"] == "BOUNDED-BELOW"
    assert bounded["rows"][-1]["value"] >= 0.9 * bounded["target"]


@criterion(10, "perturbed-rate convergence: gap <= 1e-3 at n=1e4 with decreasing trend")
def test_criterion_10_perturbation_convergence():
    rng = np.random.default_rng(1010)

    def block_chain():
        sizes = [int(rng.integers(1, 4)) for _ in range(int(rng.integers(2, 4)))]
        n = sum(sizes)
        R = np.zeros((n, n))
        offset = 0
        for s in sizes:
            if s > 1:
                R[offset : offset + s, offset : offset + s] = random_irreducible(s, rng).rates
            offset += s
        return Generator(R)

    for _ in range(10):
        gen = block_chain()
        n = gen.n_states
        mu = random_full_support_measure(n, rng)
        target = rate(gen, mu).value
        off_diag = np.ones((n, n)) - np.eye(n)
        gaps = [
            abs(rate(Generator(gen.rates + off_diag / k), mu).value - target)
            for k in (10, 100, 1000, 10000)
        ]
        assert gaps[-1] <= 1e-3
        assert all(b <= a + 1e-12 for a, b in zip(gaps, gaps[1:]))


@criterion(11, "ergodic sanity of the path sampler over 200 seeds")
def test_criterion_11_ergodic_sampling():
    gen = Generator([[0, 1.0], [1.0, 0]])
    deviations = []
    for seed in range(200):
        m = simulate_empirical_measure(gen, 0, 1e4, seed=seed)
        deviations.append(m.weights[0] - 0.5)
        assert np.abs(m.weights - 0.5).max() <= 0.05
    deviations = np.array(deviations)
    sigma = deviations.std(ddof=1) / np.sqrt(len(deviations))
    assert abs(deviations.mean()) <= 3 * sigma

    # short-time mass bounded below by the no-jump probability, on average
    t = 0.1
    values = np.array(
        [simulate_empirical_measure(gen, 0, t, seed=s)[0] for s in range(100)]
    )
    sem = values.std(ddof=1) / 10.0
    assert values.mean() + 3 * sem >= np.exp(-gen.holding[0] * t)
