"""Generator transformations: reflection, tilting, trace, harmonic extension.

The three operations commute in the precise sense used throughout the
package: tracing a tilted chain equals tilting the traced chain when the
tilt is harmonic off the kept set, and the trace rates obey the one-state
elimination rule ``R'(x,y) = R(x,y) + R(x,z) p(z,y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .chains import Generator
from .errors import (
    AbsorbedOutsideError,
    EmptySubsetError,
    UnreachableBoundaryError,
    ValidationError,
)

__all__ = ["TiltPotential", "reflect", "tilt", "trace", "harmonic_extension"]


@dataclass(frozen=True)
class TiltPotential:
    """A gauge-fixed tilt function H with H(gauge_state) = 0."""

    values: np.ndarray
    gauge_state: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise ValidationError("tilt values must be a finite vector")
        values = values - values[self.gauge_state]
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def shifted_to_gauge(self, gauge_state: int) -> "TiltPotential":
        return TiltPotential(self.values, gauge_state=gauge_state)


def _as_index_subset(gen: Generator, subset: Iterable[int]) -> list[int]:
    A = sorted({int(i) for i in subset})
    if not A:
        raise EmptySubsetError("state subset is empty")
    if A[0] < 0 or A[-1] >= gen.n_states:
        raise ValidationError("state subset references unknown states")
    return A


def _tilt_values(gen: Generator, H) -> np.ndarray:
    values = H.values if isinstance(H, TiltPotential) else np.asarray(H, dtype=float)
    if len(values) != gen.n_states:
        raise ValidationError("tilt potential must be defined on every state")
    return values


def reflect(gen: Generator, A: Iterable[int]) -> Generator:
    """Chain restricted to A: all edges leaving A are dropped."""
    idx = _as_index_subset(gen, A)
    sub = gen.rates[np.ix_(idx, idx)]
    return Generator(sub, [gen.labels[i] for i in idx])


def tilt(gen: Generator, H) -> Generator:
    """Tilted generator with rates ``R(x,y) * e**(H(y)-H(x))``."""
    values = _tilt_values(gen, H)
    delta = values[None, :] - values[:, None]
    return Generator(gen.rates * np.exp(delta), gen.labels)


def trace(gen: Generator, A: Iterable[int], elimination_order: Sequence[int] | None = None) -> Generator:
    """Trace of the chain on A: excursions off A are excised.

    Computed by eliminating the complement one state at a time with
    ``R'(x,y) = R(x,y) + R(x,z) p(z,y)``.  The default elimination order is
    descending state index; any order gives the same rates.
    """
    idx = _as_index_subset(gen, A)
    keep = set(idx)
    if elimination_order is None:
        elimination_order = sorted((z for z in range(gen.n_states) if z not in keep), reverse=True)
    else:
        elimination_order = [int(z) for z in elimination_order]
        if sorted(elimination_order) != sorted(set(range(gen.n_states)) - keep):
            raise ValidationError("elimination order must list exactly the dropped states")

    W = gen.rates.copy()
    alive = np.ones(gen.n_states, dtype=bool)
    for z in elimination_order:
        cols = np.nonzero(alive)[0]
        cols = cols[cols != z]
        lam = W[z, cols].sum()
        if lam <= 0:
            raise AbsorbedOutsideError(
                f"state {gen.labels[z]} has zero holding rate at elimination time; "
                "the walk would be absorbed outside the kept set"
            )
        p_row = W[z, cols] / lam
        W[np.ix_(cols, cols)] += np.outer(W[cols, z], p_row)
        W[cols, cols] = 0.0
        alive[z] = False
        W[z, :] = 0.0
        W[:, z] = 0.0
    return Generator(W[np.ix_(idx, idx)], [gen.labels[i] for i in idx])


def harmonic_extension(gen: Generator, A: Iterable[int], u) -> np.ndarray:
    """Extend ``u > 0`` on A to V so the extension is harmonic off A.

    Solves ``L v = 0`` off A with ``v = u`` on A; the solution is the
    expected boundary value at the hitting point of A, so it stays between
    ``min u`` and ``max u`` and in particular positive.
    """
    idx = _as_index_subset(gen, A)
    u = np.asarray(u, dtype=float)
    if len(u) != len(idx):
        raise ValidationError("boundary values must match the subset size")
    if np.any(u <= 0) or not np.all(np.isfinite(u)):
        raise ValidationError("boundary values must be positive and finite")

    n = gen.n_states
    interior = [x for x in range(n) if x not in set(idx)]
    v = np.zeros(n)
    v[idx] = u
    if not interior:
        return v

    # every interior state must be able to reach A
    adj_rev = [[] for _ in range(n)]
    for x in range(n):
        for y in np.nonzero(gen.rates[x] > 0)[0]:
            adj_rev[y].append(x)
    seen = set(idx)
    stack = list(idx)
    while stack:
        y = stack.pop()
        for x in adj_rev[y]:
            if x not in seen:
                seen.add(x)
                stack.append(x)
    missing = [x for x in interior if x not in seen]
    if missing:
        raise UnreachableBoundaryError(
            f"states {[gen.labels[x] for x in missing]} cannot reach the boundary set"
        )

    pos = {x: i for i, x in enumerate(interior)}
    R = gen.rates
    lam = gen.holding
    M = np.zeros((len(interior), len(interior)))
    b = np.zeros(len(interior))
    for x in interior:
        i = pos[x]
        M[i, i] = lam[x]
        for y in np.nonzero(R[x] > 0)[0]:
            if y in pos:
                M[i, pos[y]] -= R[x, y]
            else:
                b[i] += R[x, y] * v[y]
    v[interior] = np.linalg.solve(M, b)
    return v
