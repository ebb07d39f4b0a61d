"""Finite-state continuous-time Markov chains.

Chain specifications (labelled states plus numeric or asymptotic edge
rates), dense generators, communicating-class structure, stationary states,
transition matrices by uniformization, hitting probabilities, and exact
path simulation.  Everything is dense and deterministic: the artifact
targets small state spaces where clarity and exactness beat scale.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .asymptotic import AsymptoticScalar
from .errors import (
    EmptySubsetError,
    MissingBetaError,
    NotIrreducibleError,
    RateOverflowError,
    StepCapError,
    UnreachableError,
    ValidationError,
)

__all__ = [
    "ChainSpec",
    "Generator",
    "ClassDecomposition",
    "ProbabilityMeasure",
    "SUPPORT_THRESHOLD",
    "build_generator",
    "classify_states",
    "stationary_distribution",
    "extreme_stationary_states",
    "transition_matrix",
    "hitting_probability",
    "simulate_empirical_measure",
    "load_chain_spec",
    "save_chain_spec",
]

SUPPORT_THRESHOLD = 1e-12


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainSpec:
    """A labelled state set with one rate per directed edge.

    Rates are either nonnegative floats or :class:`AsymptoticScalar` values
    (a one-parameter family evaluated later at some beta).  No self loops,
    at most one edge per ordered pair.
    """

    states: tuple[str, ...]
    edges: tuple[tuple[str, str, float | AsymptoticScalar], ...]

    def __post_init__(self):
        if len(set(self.states)) != len(self.states):
            raise ValidationError("state labels must be unique")
        if not self.states:
            raise ValidationError("state set is empty")
        known = set(self.states)
        seen = set()
        for frm, to, rate in self.edges:
            if frm not in known or to not in known:
                raise ValidationError(f"edge {frm}->{to} references an unknown state")
            if frm == to:
                raise ValidationError(f"self-loop edge on state {frm}")
            if (frm, to) in seen:
                raise ValidationError(f"duplicate edge {frm}->{to}")
            seen.add((frm, to))
            if isinstance(rate, AsymptoticScalar):
                if rate.is_zero:
                    raise ValidationError(f"edge {frm}->{to} carries the asymptotic zero")
            else:
                r = float(rate)
                if not math.isfinite(r) or r < 0:
                    raise ValidationError(f"edge {frm}->{to} has invalid rate {rate}")

    @property
    def is_symbolic(self) -> bool:
        return any(isinstance(rate, AsymptoticScalar) for _, _, rate in self.edges)

    def index(self, label: str) -> int:
        return self.states.index(label)

    def to_jsonable(self) -> dict:
        edges = []
        for frm, to, rate in self.edges:
            if isinstance(rate, AsymptoticScalar):
                edges.append({"from": frm, "to": to, "coeff": float(rate.coeff), "exp": str(rate.exp)})
            else:
                edges.append({"from": frm, "to": to, "coeff": float(rate)})
        return {"states": list(self.states), "edges": edges}


class Generator:
    """Dense generator of a CTMC: jump rates ``R(x,y)``, zero diagonal.

    ``holding`` is the vector of total exit rates and ``jump_probs`` the
    embedded jump matrix ``R(x,y)/holding(x)`` (rows of zero-holding states
    are left at zero).
    """

    __slots__ = ("rates", "labels", "holding", "jump_probs")

    def __init__(self, rates, labels: Sequence[str] | None = None):
        rates = np.array(rates, dtype=float)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValidationError("rates must be a square matrix")
        if not np.all(np.isfinite(rates)) or np.any(rates < 0):
            raise ValidationError("rates must be finite and nonnegative")
        if np.any(np.diag(rates) != 0):
            raise ValidationError("diagonal of the rate matrix must be zero")
        n = rates.shape[0]
        if labels is None:
            labels = tuple(str(i) for i in range(n))
        else:
            labels = tuple(labels)
            if len(labels) != n:
                raise ValidationError("label count does not match the matrix size")
        holding = rates.sum(axis=1)
        jump = np.zeros_like(rates)
        positive = holding > 0
        jump[positive] = rates[positive] / holding[positive, None]
        for arr in (rates, holding, jump):
            arr.setflags(write=False)
        self.rates = rates
        self.labels = labels
        self.holding = holding
        self.jump_probs = jump

    @property
    def n_states(self) -> int:
        return self.rates.shape[0]

    def q_matrix(self) -> np.ndarray:
        """Generator matrix Q = R - diag(holding)."""
        return self.rates - np.diag(self.holding)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def __repr__(self):
        return f"Generator(n={self.n_states}, labels={self.labels!r})"


@dataclass(frozen=True)
class ClassDecomposition:
    """Communicating classes of the positive-rate digraph.

    Classes are ordered by their smallest contained state index; a class is
    closed when no positive-rate edge leaves it.  States with zero holding
    rate form closed singletons.
    """

    classes: tuple[tuple[int, ...], ...]
    closed_flags: tuple[bool, ...]

    @property
    def transient_states(self) -> tuple[int, ...]:
        out = []
        for cls, closed in zip(self.classes, self.closed_flags):
            if not closed:
                out.extend(cls)
        return tuple(sorted(out))

    @property
    def closed_classes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(c for c, f in zip(self.classes, self.closed_flags) if f)

    @property
    def is_irreducible(self) -> bool:
        return len(self.classes) == 1 and self.closed_flags[0]


class ProbabilityMeasure:
    """A distribution over the states of a chain."""

    __slots__ = ("weights",)

    def __init__(self, weights, *, require_normalized: bool = True):
        weights = np.array(weights, dtype=float)
        if weights.ndim != 1:
            raise ValidationError("measure weights must be a vector")
        if np.any(weights < -SUPPORT_THRESHOLD):
            raise ValidationError("measure weights must be nonnegative")
        weights = np.clip(weights, 0.0, None)
        if require_normalized and abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(f"measure weights sum to {weights.sum()}, not 1")
        weights.setflags(write=False)
        self.weights = weights

    def support(self, threshold: float = SUPPORT_THRESHOLD) -> tuple[int, ...]:
        return tuple(int(i) for i in np.nonzero(self.weights > threshold)[0])

    def __getitem__(self, i) -> float:
        return float(self.weights[i])

    def __len__(self):
        return len(self.weights)

    def __repr__(self):
        return f"ProbabilityMeasure({np.array2string(self.weights, precision=6)})"


def as_weights(mu, n: int | None = None) -> np.ndarray:
    """Accept a ProbabilityMeasure or array-like; return a float vector."""
    w = mu.weights if isinstance(mu, ProbabilityMeasure) else np.asarray(mu, dtype=float)
    if n is not None and len(w) != n:
        raise ValidationError(f"measure has {len(w)} entries, chain has {n} states")
    return w


# ---------------------------------------------------------------------------
# Construction and structure
# ---------------------------------------------------------------------------


def build_generator(spec: ChainSpec, beta: float | None = None) -> Generator:
    """Evaluate a chain spec into a numeric generator.

    Symbolic edges become ``coeff * e**(exp*beta)`` and require ``beta``;
    numeric edges are copied through unchanged.
    """
    n = len(spec.states)
    index = {s: i for i, s in enumerate(spec.states)}
    rates = np.zeros((n, n))
    for frm, to, rate in spec.edges:
        if isinstance(rate, AsymptoticScalar):
            if beta is None:
                raise MissingBetaError(
                    f"edge {frm}->{to} is symbolic; a beta value is required"
                )
            try:
                value = rate.evaluate_at_beta(float(beta))
            except RateOverflowError as err:
                raise RateOverflowError(
                    f"edge {frm}->{to}: {err}", edge=(frm, to)
                ) from err
        else:
            value = float(rate)
        rates[index[frm], index[to]] = value
    return Generator(rates, spec.states)


def classify_states(gen: Generator) -> ClassDecomposition:
    """Communicating classes via strongly connected components.

    Deterministic: classes are sorted by smallest contained state index.
    """
    n = gen.n_states
    adj = [[int(y) for y in np.nonzero(gen.rates[x] > 0)[0]] for x in range(n)]
    sccs = _strongly_connected_components(adj, n)
    sccs = sorted((tuple(sorted(int(i) for i in c)) for c in sccs), key=lambda c: c[0])
    closed = []
    for cls in sccs:
        members = set(cls)
        closed.append(all(y in members for x in cls for y in adj[x]))
    return ClassDecomposition(classes=tuple(sccs), closed_flags=tuple(closed))


def _strongly_connected_components(adj: Sequence[Sequence[int]], n: int) -> list[list[int]]:
    """Iterative Tarjan SCC."""
    index = [0] * n
    low = [0] * n
    on_stack = [False] * n
    visited = [False] * n
    stack: list[int] = []
    result: list[list[int]] = []
    counter = [1]

    for root in range(n):
        if visited[root]:
            continue
        work = [(root, iter(adj[root]))]
        visited[root] = True
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if not visited[w]:
                    visited[w] = True
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(adj[w])))
                    advanced = True
                    break
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                result.append(comp)
    return result


# ---------------------------------------------------------------------------
# Stationary states
# ---------------------------------------------------------------------------


def _gth_stationary(rates: np.ndarray) -> np.ndarray:
    """Stationary vector by state elimination without subtraction.

    Eliminating the last state replaces ``R(x,y)`` by
    ``R(x,y) + R(x,z) R(z,y)/lambda(z)`` (the trace rates on the remaining
    states); back-substitution then rebuilds the stationary weights.  Every
    operation adds, multiplies or divides nonnegative numbers, which keeps
    each component accurate in relative terms even when the weights span
    many orders of magnitude.
    """
    W = rates.astype(float).copy()
    n = W.shape[0]
    if n == 1:
        return np.array([1.0])
    scale = np.empty(n)
    for k in range(n - 1, 0, -1):
        s = W[k, :k].sum()
        if s <= 0:
            raise NotIrreducibleError("state elimination hit a state with no exit")
        scale[k] = s
        for i in range(k):
            if W[i, k] > 0:
                row = W[i, k] * (W[k, :k] / s)
                row[i] = 0.0
                W[i, :k] += row
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = float(np.dot(pi[:k], W[:k, k])) / scale[k]
    return pi / pi.sum()


def stationary_distribution(gen: Generator) -> ProbabilityMeasure:
    """Unique stationary state of an irreducible chain.

    Solved by dense state elimination; the residual satisfies
    ``max |pi^T Q| <= 1e-12 * max rate``.
    """
    decomp = classify_states(gen)
    if not decomp.is_irreducible:
        raise NotIrreducibleError("stationary_distribution needs an irreducible chain")
    pi = _gth_stationary(gen.rates)
    residual = float(np.max(np.abs(pi @ gen.q_matrix()))) if gen.n_states > 1 else 0.0
    max_rate = float(gen.rates.max()) if gen.n_states > 1 else 1.0
    if max_rate > 0 and residual > 1e-12 * max_rate:
        raise NotIrreducibleError(
            f"stationary solve residual {residual:.3e} exceeds 1e-12 * max rate"
        )
    return ProbabilityMeasure(pi)


def extreme_stationary_states(gen: Generator) -> list[tuple[tuple[int, ...], ProbabilityMeasure]]:
    """One stationary state per closed class, supported exactly on it."""
    out = []
    for cls in classify_states(gen).closed_classes:
        idx = np.array(cls, dtype=int)
        sub = gen.rates[np.ix_(idx, idx)]
        pi_sub = _gth_stationary(sub) if len(cls) > 1 else np.array([1.0])
        full = np.zeros(gen.n_states)
        full[idx] = pi_sub
        out.append((cls, ProbabilityMeasure(full)))
    return out


# ---------------------------------------------------------------------------
# Transition matrices
# ---------------------------------------------------------------------------


def transition_matrix(
    gen: Generator,
    t: float,
    *,
    tol: float = 1e-12,
    max_steps: int = 10**8,
) -> np.ndarray:
    """Row-stochastic ``p_t = e**(tQ)`` by uniformization.

    Poisson-weighted powers of the uniformized jump matrix, truncated so the
    neglected probability mass per row is at most ``tol``.  Raises
    :class:`StepCapError` when the needed number of matrix powers exceeds
    ``max_steps``.
    """
    if t < 0:
        raise ValidationError(f"time must be nonnegative, got {t}")
    n = gen.n_states
    lam = float(gen.holding.max()) if n else 0.0
    mean = lam * t
    if mean == 0.0:
        return np.eye(n)

    U = gen.rates / lam + np.diag(1.0 - gen.holding / lam)
    k_lo, weights = _poisson_window(mean, tol, max_steps)

    # start at U**k_lo by binary powering, then sweep the window
    result = np.zeros((n, n))
    power = _matrix_power(U, k_lo)
    for w in weights:
        result += w * power
        power = power @ U
    return result


def _matrix_power(U: np.ndarray, k: int) -> np.ndarray:
    result = np.eye(U.shape[0])
    base = U
    while k:
        if k & 1:
            result = result @ base
        base = base @ base
        k >>= 1
    return result


def _poisson_window(mean: float, tol: float, max_steps: int):
    """Index of the first kept Poisson term and the kept weights."""
    if mean > max_steps:
        raise StepCapError(
            f"uniformization needs about {mean:.3e} steps (cap {max_steps:.0e})",
            steps_needed=mean,
        )
    if mean <= 30.0:
        weights = [math.exp(-mean)]
        k = 0
        total = weights[0]
        while total < 1.0 - tol:
            k += 1
            weights.append(weights[-1] * mean / k)
            total += weights[-1]
            if k > max_steps:
                raise StepCapError("Poisson window exceeded the step cap", steps_needed=k)
        return 0, weights

    sigma = math.sqrt(mean)
    spread = 8.0
    while True:
        k_lo = max(0, int(math.floor(mean - spread * sigma)))
        k_hi = int(math.ceil(mean + spread * sigma))
        if k_hi > max_steps:
            raise StepCapError(
                f"uniformization needs {k_hi} steps (cap {max_steps:.0e})",
                steps_needed=k_hi,
            )
        ks = np.arange(k_lo, k_hi + 1, dtype=float)
        logw = ks * math.log(mean) - mean - np.array([math.lgamma(k + 1.0) for k in ks])
        weights = np.exp(logw)
        if math.fsum(weights) >= 1.0 - tol:
            return k_lo, list(weights)
        spread *= 1.5
        if spread > 2000:
            raise StepCapError("Poisson window failed to capture the required mass")


# ---------------------------------------------------------------------------
# Hitting probabilities
# ---------------------------------------------------------------------------


def _reachable_from(adj: Sequence[Sequence[int]], sources: Iterable[int]) -> set[int]:
    seen = set(sources)
    stack = list(seen)
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def hitting_probability(
    gen: Generator,
    target: Iterable[int],
    avoid: Iterable[int],
    x: int,
) -> float:
    """Probability of entering ``target`` before ``avoid`` starting from x.

    Solved through the absorbing-chain linear system.  States that can reach
    neither set contribute zero; if x itself is such a state the problem is
    flagged as ill-posed.
    """
    n = gen.n_states
    target = frozenset(int(i) for i in target)
    avoid = frozenset(int(i) for i in avoid)
    if target & avoid:
        raise ValidationError("target and avoid sets overlap")
    if not (target | avoid):
        raise EmptySubsetError("target and avoid sets are both empty")
    if x in target:
        return 1.0
    if x in avoid:
        return 0.0

    adj = [list(np.nonzero(gen.rates[u] > 0)[0]) for u in range(n)]
    # states from which target/avoid can be reached (walk the reversed graph)
    rev = [[] for _ in range(n)]
    for u in range(n):
        for v in adj[u]:
            rev[v].append(u)
    can_reach = _reachable_from(rev, target | avoid)
    if x not in can_reach:
        raise UnreachableError(
            f"neither set is reachable from state {gen.labels[x]}; "
            "the hitting problem is ill-posed"
        )

    interior = [u for u in range(n) if u not in target and u not in avoid]
    solvable = [u for u in interior if u in can_reach and gen.holding[u] > 0]
    h = np.zeros(n)
    for u in target:
        h[u] = 1.0
    if solvable:
        idx = {u: i for i, u in enumerate(solvable)}
        P = gen.jump_probs
        A = np.eye(len(solvable))
        b = np.zeros(len(solvable))
        for u in solvable:
            for v in np.nonzero(P[u] > 0)[0]:
                if v in idx:
                    A[idx[u], idx[v]] -= P[u, v]
                elif v in target:
                    b[idx[u]] += P[u, v]
                # transitions into avoid or dead states contribute zero
        sol = np.linalg.solve(A, b)
        for u in solvable:
            h[u] = sol[idx[u]]
    return float(h[x])


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def simulate_empirical_measure(
    gen: Generator,
    x0: int,
    t_max: float,
    seed: int,
) -> ProbabilityMeasure:
    """Time-average occupation vector of a Gillespie-sampled path.

    Deterministic for a fixed seed.
    """
    if t_max <= 0:
        raise ValidationError("t_max must be positive")
    rng = np.random.default_rng(seed)
    n = gen.n_states
    cum = np.cumsum(gen.jump_probs, axis=1)
    occupation = np.zeros(n)
    t = 0.0
    x = int(x0)
    while True:
        lam = gen.holding[x]
        if lam <= 0:
            occupation[x] += t_max - t
            break
        dt = rng.exponential(1.0 / lam)
        if t + dt >= t_max:
            occupation[x] += t_max - t
            break
        occupation[x] += dt
        t += dt
        x = int(np.searchsorted(cum[x], rng.random(), side="right"))
        x = min(x, n - 1)
    return ProbabilityMeasure(occupation / t_max)


# ---------------------------------------------------------------------------
# Chain spec file format
# ---------------------------------------------------------------------------


def _edge_from_json(obj: dict) -> tuple[str, str, float | AsymptoticScalar]:
    frm, to = obj["from"], obj["to"]
    coeff = obj["coeff"]
    if "exp" in obj and obj["exp"] is not None:
        exp = obj["exp"]
        if isinstance(exp, str):
            exp = Fraction(exp)
        return (frm, to, AsymptoticScalar(coeff, exp))
    return (frm, to, float(coeff))


def chain_spec_from_jsonable(data: dict) -> ChainSpec:
    try:
        states = tuple(str(s) for s in data["states"])
        edges = tuple(_edge_from_json(e) for e in data["edges"])
    except (KeyError, TypeError) as err:
        raise ValidationError(f"malformed chain spec: {err}") from err
    return ChainSpec(states=states, edges=edges)


def load_chain_spec(path: str) -> ChainSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return chain_spec_from_jsonable(json.load(fh))


def save_chain_spec(spec: ChainSpec, path: str) -> None:
    """Atomic write (temp file + rename) of the JSON chain spec."""
    payload = json.dumps(spec.to_jsonable(), indent=2, sort_keys=True) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
