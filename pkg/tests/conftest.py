"""Shared fixtures: the canonical test families and random chain factories."""

from fractions import Fraction

import numpy as np
import pytest

from metarate import ChainSpec, Generator, RateFamily, build_tree
from metarate.asymptotic import asym


def make_bd3_family() -> RateFamily:
    """Three-state birth-death ladder: inner pair decays like e^-beta,
    outer pair like e^-2beta.  Two separated time scales, no transients."""
    spec = ChainSpec(
        states=("s1", "s2", "s3"),
        edges=(
            ("s1", "s2", asym(1, -1)),
            ("s2", "s1", asym(1, -1)),
            ("s2", "s3", asym(1, -2)),
            ("s3", "s2", asym(1, -2)),
        ),
    )
    return RateFamily(spec)


def make_two_state_family() -> RateFamily:
    """Both rates decay like e^-beta with coefficients 1 and 2."""
    spec = ChainSpec(
        states=("a", "b"),
        edges=(("a", "b", asym(1, -1)), ("b", "a", asym(2, -1))),
    )
    return RateFamily(spec)


def make_wells5_family() -> RateFamily:
    """Two order-one wells {a,b} and {d,e} joined through a gate state c,
    with bridges decaying at different speeds.  One transient state at
    level 1, a transient class at level 2."""
    spec = ChainSpec(
        states=("a", "b", "c", "d", "e"),
        edges=(
            ("a", "b", asym(1, 0)),
            ("b", "a", asym(2, 0)),
            ("d", "e", asym(1, 0)),
            ("e", "d", asym(1, 0)),
            ("c", "a", asym(1, 0)),
            ("c", "d", asym(2, 0)),
            ("b", "c", asym(1, -1)),
            ("e", "c", asym(1, -2)),
        ),
    )
    return RateFamily(spec)


@pytest.fixture(scope="session")
def bd3_family():
    return make_bd3_family()


@pytest.fixture(scope="session")
def bd3_tree(bd3_family):
    return build_tree(bd3_family)


@pytest.fixture(scope="session")
def two_state_family():
    return make_two_state_family()


@pytest.fixture(scope="session")
def two_state_tree(two_state_family):
    return build_tree(two_state_family)


@pytest.fixture(scope="session")
def wells5_family():
    return make_wells5_family()


@pytest.fixture(scope="session")
def wells5_tree(wells5_family):
    return build_tree(wells5_family)


# ---------------------------------------------------------------------------
# Random instance factories (always seeded by the caller)
# ---------------------------------------------------------------------------


def random_irreducible(n: int, rng, lo=0.2, hi=2.0, extra=0.5) -> Generator:
    """A random cycle through all states plus extra random edges."""
    R = np.zeros((n, n))
    perm = rng.permutation(n)
    for i in range(n):
        R[perm[i], perm[(i + 1) % n]] = rng.uniform(lo, hi)
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < extra:
                R[i, j] = rng.uniform(lo, hi)
    return Generator(R)


def random_chain(n: int, rng, p_edge=0.4, lo=0.2, hi=2.0) -> Generator:
    """A random digraph; may be reducible and may have zero-holding states."""
    R = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < p_edge:
                R[i, j] = rng.uniform(lo, hi)
    return Generator(R)


def random_symbolic(n: int, rng, max_depth=4, denom=2, extra=0.3) -> RateFamily:
    """A random irreducible family with exponents on the grid (1/denom)Z <= 0."""
    states = tuple(f"s{i}" for i in range(n))
    rates = {}
    perm = rng.permutation(n)
    for i in range(n):
        key = (int(perm[i]), int(perm[(i + 1) % n]))
        rates[key] = asym(
            float(rng.uniform(0.5, 2.0)),
            Fraction(-int(rng.integers(0, max_depth + 1)), denom),
        )
    for i in range(n):
        for j in range(n):
            if i != j and (i, j) not in rates and rng.random() < extra:
                rates[(i, j)] = asym(
                    float(rng.uniform(0.5, 2.0)),
                    Fraction(-int(rng.integers(0, max_depth + 1)), denom),
                )
    edges = tuple((states[i], states[j], r) for (i, j), r in sorted(rates.items()))
    return RateFamily(ChainSpec(states=states, edges=edges))


def random_full_support_measure(n: int, rng, floor=0.05) -> np.ndarray:
    w = rng.dirichlet(np.ones(n) * 2.0)
    w = np.maximum(w, floor)
    return w / w.sum()
