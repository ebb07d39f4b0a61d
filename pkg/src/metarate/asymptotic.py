"""Exact one-term asymptotic arithmetic and symbolic chain computations.

An :class:`AsymptoticScalar` is a quantity of the form ``c * e**(k*beta)``
with a positive coefficient ``c`` and an exact rational exponent ``k``, plus
a distinguished exact zero.  Sums keep the dominant exponent, products add
exponents, and quotients subtract them, so every monomial built from a family
of such rates has a well-defined asymptotic order by construction.

On top of the scalar semiring the module provides the symbolic chain
algorithms that never need subtraction: stationary weights through spanning
in-tree (arborescence) enumeration, trace rates through single-state
elimination, and mean inter-class jump rates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Sequence

from .errors import NotIrreducibleError, RateOverflowError, TooLargeError, ValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .chains import ChainSpec

__all__ = [
    "AsymptoticScalar",
    "ZERO",
    "asym",
    "scalar_sum",
    "scalar_product",
    "RateFamily",
    "symbolic_stationary",
    "symbolic_trace",
    "mean_interclass_rates",
    "ARBORESCENCE_STATE_CAP",
]

ARBORESCENCE_STATE_CAP = 12


def _coerce_coeff(value):
    """Keep exact rationals exact; everything else becomes a float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return float(value)


def _coerce_exp(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, float):
        # floats are snapped to the nearest small rational ("-1.5" means -3/2)
        return Fraction(value).limit_denominator(10**9)
    raise ValidationError(f"cannot interpret exponent {value!r} as an exact rational")


class AsymptoticScalar:
    """Single-term asymptotic quantity ``coeff * e**(exp * beta)``.

    ``coeff`` is a positive :class:`~fractions.Fraction` or float; ``exp`` is
    an exact :class:`~fractions.Fraction`.  The canonical zero is the class
    attribute :data:`ZERO`; it carries no exponent.
    """

    __slots__ = ("coeff", "exp")

    def __init__(self, coeff, exp=0, *, _allow_zero=False):
        coeff = _coerce_coeff(coeff)
        if coeff == 0:
            if not _allow_zero:
                raise ValidationError("coefficient must be positive; use ZERO for the zero element")
            self.coeff = Fraction(0)
            self.exp = None
            return
        if coeff < 0:
            raise ValidationError(f"coefficient must be positive, got {coeff}")
        if isinstance(coeff, float) and not math.isfinite(coeff):
            raise ValidationError(f"coefficient must be finite, got {coeff}")
        self.coeff = coeff
        self.exp = _coerce_exp(exp)

    @property
    def is_zero(self) -> bool:
        return self.exp is None

    # -- semiring operations ------------------------------------------------

    def __add__(self, other: "AsymptoticScalar") -> "AsymptoticScalar":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if self.exp > other.exp:
            return self
        if self.exp < other.exp:
            return other
        return AsymptoticScalar(self.coeff + other.coeff, self.exp)

    def __mul__(self, other: "AsymptoticScalar") -> "AsymptoticScalar":
        if self.is_zero or other.is_zero:
            return ZERO
        return AsymptoticScalar(self.coeff * other.coeff, self.exp + other.exp)

    def __truediv__(self, other: "AsymptoticScalar") -> "AsymptoticScalar":
        if other.is_zero:
            raise ZeroDivisionError("division by the asymptotic zero")
        if self.is_zero:
            return ZERO
        return AsymptoticScalar(self.coeff / other.coeff, self.exp - other.exp)

    # -- comparisons ---------------------------------------------------------

    def order(self, other: "AsymptoticScalar"):
        """Compare asymptotic orders.

        Returns ``("precedes", None)`` when self/other -> 0,
        ``("dominates", None)`` when the ratio diverges, and
        ``("same", ratio)`` when the ratio converges to a positive limit
        (or both are zero, in which case the ratio is ``None``).
        """
        if self.is_zero and other.is_zero:
            return ("same", None)
        if self.is_zero:
            return ("precedes", None)
        if other.is_zero:
            return ("dominates", None)
        if self.exp < other.exp:
            return ("precedes", None)
        if self.exp > other.exp:
            return ("dominates", None)
        return ("same", self.coeff / other.coeff)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AsymptoticScalar):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return self.is_zero and other.is_zero
        return self.exp == other.exp and self.coeff == other.coeff

    def __hash__(self):
        return hash((self.coeff, self.exp))

    # -- evaluation and display ----------------------------------------------

    def evaluate_at_beta(self, beta: float) -> float:
        """Numeric value ``coeff * e**(exp*beta)``; zero evaluates to 0."""
        if self.is_zero:
            return 0.0
        try:
            value = float(self.coeff) * math.exp(float(self.exp) * beta)
        except OverflowError as err:
            raise RateOverflowError(
                f"e**({self.exp}*{beta}) exceeds the double range"
            ) from err
        if math.isinf(value):
            raise RateOverflowError(f"{self!r} overflows at beta={beta}")
        return value

    def exp_str(self) -> str:
        """Exponent as an exact rational string, e.g. ``\"-3/2\"``."""
        if self.is_zero:
            return "zero"
        return str(self.exp)

    def __repr__(self):
        if self.is_zero:
            return "AsymptoticScalar.ZERO"
        return f"AsymptoticScalar({self.coeff}, exp={self.exp})"


ZERO = AsymptoticScalar(0, _allow_zero=True)
AsymptoticScalar.ZERO = ZERO


def asym(coeff, exp=0) -> AsymptoticScalar:
    """Shorthand constructor used throughout tests and specs."""
    return AsymptoticScalar(coeff, exp)


def scalar_sum(values: Iterable[AsymptoticScalar]) -> AsymptoticScalar:
    total = ZERO
    for v in values:
        total = total + v
    return total


def scalar_product(values: Iterable[AsymptoticScalar]) -> AsymptoticScalar:
    total = AsymptoticScalar(1, 0)
    for v in values:
        total = total * v
    return total


# ---------------------------------------------------------------------------
# Rate families: chains whose every edge carries an AsymptoticScalar.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFamily:
    """A one-parameter family of chains with rates ``c(x,y) * e**(k(x,y)*beta)``.

    Exponents must be <= 0 so every rate stays bounded as beta grows; the
    limit chain keeps the coefficient of each exponent-zero edge and drops
    the rest.
    """

    spec: "ChainSpec"

    def __post_init__(self):
        for edge in self.spec.edges:
            rate = edge[2]
            if not isinstance(rate, AsymptoticScalar):
                raise ValidationError(
                    f"edge {edge[0]}->{edge[1]} carries a numeric rate; a rate family "
                    "needs asymptotic rates on every edge"
                )
            if rate.is_zero:
                raise ValidationError(f"edge {edge[0]}->{edge[1]} carries the zero rate")
            if rate.exp > 0:
                raise ValidationError(
                    f"edge {edge[0]}->{edge[1]} has exponent {rate.exp} > 0; "
                    "rates must stay bounded as beta grows"
                )

    @property
    def n_states(self) -> int:
        return len(self.spec.states)

    def rate_matrix(self) -> list[list[AsymptoticScalar]]:
        """Dense matrix of asymptotic rates with ZERO for absent edges."""
        n = self.n_states
        index = {s: i for i, s in enumerate(self.spec.states)}
        mat = [[ZERO] * n for _ in range(n)]
        for frm, to, rate in self.spec.edges:
            mat[index[frm]][index[to]] = rate
        return mat

    def limit_rates(self) -> list[list[float]]:
        """Numeric limit-chain rates: coefficient where exp == 0, else 0."""
        out = []
        for row in self.rate_matrix():
            out.append([float(r.coeff) if (not r.is_zero and r.exp == 0) else 0.0 for r in row])
        return out


def _symbolic_holding(mat: Sequence[Sequence[AsymptoticScalar]], alive: Sequence[int], z: int):
    return scalar_sum(mat[z][y] for y in alive if y != z)


def symbolic_stationary(fam: RateFamily) -> list[AsymptoticScalar]:
    """Leading-order stationary weights via the Markov-chain tree theorem.

    ``pi(x)`` is proportional to the sum, over spanning in-trees rooted at
    ``x``, of the product of edge rates; the semiring keeps the dominant term
    of each sum exactly.  The result is normalized so the weights sum (in the
    semiring) to one, which places the dominant exponent at zero.
    """
    n = fam.n_states
    if n > ARBORESCENCE_STATE_CAP:
        raise TooLargeError(
            f"{n} states exceeds the arborescence enumeration cap {ARBORESCENCE_STATE_CAP}"
        )
    mat = fam.rate_matrix()
    out_edges = [[y for y in range(n) if not mat[x][y].is_zero] for x in range(n)]
    if not _is_strongly_connected(out_edges, n):
        raise NotIrreducibleError("symbolic stationary weights need an irreducible family")

    weights = [_in_tree_weight(mat, out_edges, root, n) for root in range(n)]
    total = scalar_sum(weights)
    return [w / total for w in weights]


def _is_strongly_connected(out_edges: Sequence[Sequence[int]], n: int) -> bool:
    if n <= 1:
        return True
    rev = [[] for _ in range(n)]
    for x in range(n):
        for y in out_edges[x]:
            rev[y].append(x)

    def reaches_all(adj):
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == n

    return reaches_all(out_edges) and reaches_all(rev)


def _in_tree_weight(mat, out_edges, root: int, n: int) -> AsymptoticScalar:
    """Sum of in-tree weights rooted at ``root``: every other vertex keeps one
    outgoing edge and all paths lead to the root, with no cycles."""
    vertices = [v for v in range(n) if v != root]
    parent = [-1] * n
    total = ZERO

    def walk(idx: int, product: AsymptoticScalar):
        nonlocal total
        if idx == len(vertices):
            total = total + product
            return
        v = vertices[idx]
        for u in out_edges[v]:
            # following assigned parents from u must not loop back to v
            w = u
            while w != -1 and w != v:
                w = parent[w]
            if w == v:
                continue
            parent[v] = u
            walk(idx + 1, product * mat[v][u])
            parent[v] = -1

    walk(0, AsymptoticScalar(1, 0))
    return total


def symbolic_trace(fam: RateFamily, keep: Iterable[int]) -> RateFamily:
    """Trace rates on a subset, eliminating the complement one state at a time.

    Elimination of ``z`` maps ``R(x,y)`` to ``R(x,y) + R(x,z) R(z,y)/lambda(z)``;
    only sums, products and quotients of positive terms appear, so the result
    is the exact leading-order trace rate, independent of elimination order.
    """
    from .chains import ChainSpec
    from .errors import AbsorbedOutsideError, EmptySubsetError

    keep = sorted(set(keep))
    n = fam.n_states
    if not keep:
        raise EmptySubsetError("trace target set is empty")
    if any(k < 0 or k >= n for k in keep):
        raise ValidationError("trace target set references unknown states")

    mat = [row[:] for row in fam.rate_matrix()]
    alive = list(range(n))
    for z in sorted(set(range(n)) - set(keep), reverse=True):
        lam = _symbolic_holding(mat, alive, z)
        if lam.is_zero:
            raise AbsorbedOutsideError(
                f"state {fam.spec.states[z]} has zero holding rate at elimination time"
            )
        alive.remove(z)
        for x in alive:
            rxz = mat[x][z]
            if rxz.is_zero:
                continue
            for y in alive:
                if y == x:
                    continue
                rzy = mat[z][y]
                if rzy.is_zero:
                    continue
                mat[x][y] = mat[x][y] + rxz * rzy / lam

    labels = [fam.spec.states[i] for i in keep]
    edges = []
    for i, x in enumerate(keep):
        for j, y in enumerate(keep):
            if i != j and not mat[x][y].is_zero:
                edges.append((labels[i], labels[j], mat[x][y]))
    return RateFamily(ChainSpec(states=tuple(labels), edges=tuple(edges)))


def mean_interclass_rates(
    pi: Sequence[AsymptoticScalar],
    traced: RateFamily,
    partition: Sequence[Sequence[int]],
    traced_state_index: dict[int, int],
) -> list[list[AsymptoticScalar]]:
    """Mean jump rate of the traced chain between partition blocks.

    ``r(i,j) = (1/pi(B_i)) * sum_{x in B_i} pi(x) * sum_{y in B_j} R(x,y)``
    with every operation in the semiring.  ``pi`` is indexed by the full
    state set, ``partition`` holds full-state indices, and
    ``traced_state_index`` maps them into the traced family.
    """
    mat = traced.rate_matrix()
    m = len(partition)
    covered = sorted(itertools.chain.from_iterable(partition))
    if covered != sorted(traced_state_index):
        raise ValidationError("partition must cover exactly the traced state set")

    out = [[ZERO] * m for _ in range(m)]
    for i, block_i in enumerate(partition):
        pi_block = scalar_sum(pi[x] for x in block_i)
        for j, block_j in enumerate(partition):
            if i == j:
                continue
            flow = ZERO
            for x in block_i:
                row = mat[traced_state_index[x]]
                rate_to_j = scalar_sum(row[traced_state_index[y]] for y in block_j)
                flow = flow + pi[x] * rate_to_j
            if not flow.is_zero:
                out[i][j] = flow / pi_block
    return out
