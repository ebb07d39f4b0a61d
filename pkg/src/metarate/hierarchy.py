"""Metastable hierarchy of time scales for a one-parameter rate family.

The construction runs from the leaves to the root.  The leaves are the
closed classes of the limit chain (the exponent-zero edges).  At each level
the family is traced onto the union of the current classes, the mean
inter-class jump rates are computed symbolically, and the least-negative
exponent sets the time scale theta of the level.  Rescaled by theta, the
inter-class rates converge to a small Markov chain on the class set; its
recurrent classes merge into the next level's partition, and their
stationary weights push the class measures one level up.  The recursion
stops when a single recurrent class remains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .asymptotic import (
    AsymptoticScalar,
    RateFamily,
    mean_interclass_rates,
    symbolic_stationary,
    symbolic_trace,
)
from .chains import (
    Generator,
    ProbabilityMeasure,
    build_generator,
    classify_states,
    extreme_stationary_states,
    hitting_probability,
    transition_matrix,
)
from .errors import DegenerateLevelError, NotIrreducibleError, StepCapError, ValidationError

__all__ = ["HierarchyLevel", "HierarchyTree", "build_tree", "a_coefficients", "t1_check"]


@dataclass(frozen=True)
class HierarchyLevel:
    """One level of the tree: the partition, and (below the top) the scale,
    the limit chain on the classes, and its recurrent structure."""

    p: int
    classes: tuple[tuple[int, ...], ...]
    transient: tuple[int, ...]
    measures: tuple[np.ndarray, ...]
    theta: AsymptoticScalar | None = None
    symbolic_rates: tuple[tuple[AsymptoticScalar, ...], ...] | None = None
    limit_rates: np.ndarray | None = None
    recurrent_classes: tuple[tuple[int, ...], ...] | None = None
    transient_classes: tuple[int, ...] | None = None
    M: tuple[np.ndarray, ...] | None = None

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_of_state(self, x: int) -> int | None:
        for j, cls in enumerate(self.classes):
            if x in cls:
                return j
        return None


@dataclass(frozen=True)
class HierarchyTree:
    """All levels p = 1..q+1 of the metastable hierarchy."""

    family: RateFamily
    q: int
    levels: dict[int, HierarchyLevel] = field(default_factory=dict)
    symbolic_pi: tuple[AsymptoticScalar, ...] = ()
    diagnostic: str | None = None

    @property
    def labels(self) -> tuple[str, ...]:
        return self.family.spec.states

    @property
    def n_states(self) -> int:
        return len(self.labels)

    def level(self, p: int) -> HierarchyLevel:
        if p not in self.levels:
            raise ValidationError(f"level {p} not in tree (q = {self.q})")
        return self.levels[p]

    def limit_chain(self, p: int) -> Generator:
        """The class-valued chain of level p with the rescaled limit rates."""
        lv = self.level(p)
        if lv.limit_rates is None:
            raise ValidationError(f"level {p} has no limit chain (top of the tree)")
        labels = ["+".join(self.labels[i] for i in cls) for cls in lv.classes]
        return Generator(lv.limit_rates, labels)

    def theta_value(self, p: int, beta: float) -> float:
        if p == 0:
            return 1.0
        return self.level(p).theta.evaluate_at_beta(beta)

    def measure_on_states(self, p: int, j: int) -> ProbabilityMeasure:
        return ProbabilityMeasure(self.level(p).measures[j])

    def to_jsonable(self) -> dict:
        def sig12(x: float) -> float:
            return float(f"{x:.12g}")

        levels = []
        for p in sorted(self.levels):
            lv = self.levels[p]
            entry = {
                "p": p,
                "classes": [[self.labels[i] for i in cls] for cls in lv.classes],
                "transient": [self.labels[i] for i in lv.transient],
                "measures": [
                    {self.labels[i]: sig12(m[i]) for i in np.nonzero(m > 0)[0]}
                    for m in lv.measures
                ],
            }
            if lv.theta is not None:
                entry["theta_exponent"] = str(lv.theta.exp)
                entry["limit_rates"] = [[sig12(v) for v in row] for row in lv.limit_rates]
                entry["symbolic_rate_exponents"] = [
                    [r.exp_str() for r in row] for row in lv.symbolic_rates
                ]
                entry["recurrent_classes"] = [list(c) for c in lv.recurrent_classes]
                entry["transient_classes"] = list(lv.transient_classes)
                entry["M"] = [[sig12(v) for v in m] for m in lv.M]
            levels.append(entry)

        # root-to-leaves view: generation g holds level q+2-g, generation 0 is V
        generations = [{"generation": 0, "sets": [list(self.labels)], "omega": []}]
        for g in range(1, self.q + 2):
            lv = self.levels.get(self.q + 2 - g)
            if lv is None:
                continue
            generations.append(
                {
                    "generation": g,
                    "sets": [[self.labels[i] for i in cls] for cls in lv.classes],
                    "omega": [self.labels[i] for i in lv.transient],
                }
            )
        return {
            "q": self.q,
            "states": list(self.labels),
            "diagnostic": self.diagnostic,
            "levels": levels,
            "generations": generations,
        }


def _finite_beta_irreducible(fam: RateFamily) -> bool:
    n = fam.n_states
    presence = np.zeros((n, n))
    index = {s: i for i, s in enumerate(fam.spec.states)}
    for frm, to, _ in fam.spec.edges:
        presence[index[frm], index[to]] = 1.0
    return classify_states(Generator(presence, fam.spec.states)).is_irreducible


def build_tree(fam: RateFamily) -> HierarchyTree:
    """Build the full hierarchy of a rate family.

    Returns a depth-zero tree with a diagnostic when the limit chain has
    fewer than two closed classes (no metastable separation to resolve).
    """
    if not _finite_beta_irreducible(fam):
        raise NotIrreducibleError("the rate family must be irreducible at finite beta")

    labels = fam.spec.states
    n = len(labels)
    limit = Generator(fam.limit_rates(), labels)
    decomp = classify_states(limit)
    closed = decomp.closed_classes
    if len(closed) < 2:
        return HierarchyTree(
            family=fam,
            q=0,
            diagnostic=(
                "the limit chain has a single closed class; the rate functionals "
                "converge without rescaling and the hierarchy is trivial"
            ),
        )

    symbolic_pi = tuple(symbolic_stationary(fam))

    measures1 = []
    for cls, pi in extreme_stationary_states(limit):
        measures1.append(pi.weights)
    levels: dict[int, HierarchyLevel] = {
        1: HierarchyLevel(
            p=1,
            classes=closed,
            transient=decomp.transient_states,
            measures=tuple(measures1),
        )
    }

    p = 1
    q = None
    prev_kappa = None
    while q is None:
        lv = levels[p]
        classes = lv.classes
        kept = sorted(i for cls in classes for i in cls)
        traced = symbolic_trace(fam, kept)
        traced_index = {x: i for i, x in enumerate(kept)}
        sym = mean_interclass_rates(symbolic_pi, traced, classes, traced_index)

        m = len(classes)
        exponents = [
            sym[i][j].exp for i in range(m) for j in range(m) if i != j and not sym[i][j].is_zero
        ]
        if not exponents:
            raise DegenerateLevelError(
                f"level {p}: no positive inter-class rate; the family violates the "
                "non-degeneracy of the construction"
            )
        kappa = max(exponents)
        if kappa >= 0:
            raise DegenerateLevelError(
                f"level {p}: inter-class rates do not vanish (exponent {kappa}); "
                "the level-1 classes were not closed in the limit chain"
            )
        if prev_kappa is not None and not kappa < prev_kappa:
            raise DegenerateLevelError(
                f"level {p}: time scale failed to increase strictly "
                f"(exponent {-kappa} after {-prev_kappa})"
            )
        prev_kappa = kappa
        theta = AsymptoticScalar(1, -kappa)
        limit_rates = np.array(
            [
                [
                    float(sym[i][j].coeff)
                    if (i != j and not sym[i][j].is_zero and sym[i][j].exp == kappa)
                    else 0.0
                    for j in range(m)
                ]
                for i in range(m)
            ]
        )

        class_labels = ["+".join(labels[i] for i in cls) for cls in classes]
        chain_p = Generator(limit_rates, class_labels)
        dec_p = classify_states(chain_p)
        recurrent = dec_p.closed_classes
        transient_cls = dec_p.transient_states
        if len(recurrent) >= m:
            raise DegenerateLevelError(
                f"level {p}: the class chain did not merge any classes"
            )

        M = []
        for cls, pi in extreme_stationary_states(chain_p):
            M.append(pi.weights)

        levels[p] = HierarchyLevel(
            p=p,
            classes=classes,
            transient=lv.transient,
            measures=lv.measures,
            theta=theta,
            symbolic_rates=tuple(tuple(row) for row in sym),
            limit_rates=limit_rates,
            recurrent_classes=recurrent,
            transient_classes=transient_cls,
            M=tuple(M),
        )

        next_classes = []
        next_measures = []
        for mi, rec in enumerate(recurrent):
            merged = tuple(sorted(i for j in rec for i in classes[j]))
            next_classes.append(merged)
            weights = np.zeros(n)
            for j in rec:
                weights += M[mi][j] * lv.measures[j]
            next_measures.append(weights)
        dropped = sorted(
            set(lv.transient) | {i for j in transient_cls for i in classes[j]}
        )
        levels[p + 1] = HierarchyLevel(
            p=p + 1,
            classes=tuple(next_classes),
            transient=tuple(dropped),
            measures=tuple(next_measures),
        )
        if len(recurrent) == 1:
            q = p
        else:
            p += 1

    tree = HierarchyTree(family=fam, q=q, levels=levels, symbolic_pi=symbolic_pi)
    _assert_tree_invariants(tree)
    return tree


def _assert_tree_invariants(tree: HierarchyTree) -> None:
    n = tree.n_states
    all_states = set(range(n))
    prev_n_classes = None
    prev_exp = None
    for p in range(1, tree.q + 2):
        lv = tree.level(p)
        flat = [i for cls in lv.classes for i in cls]
        if sorted(flat + list(lv.transient)) != sorted(all_states) or len(set(flat)) != len(flat):
            raise DegenerateLevelError(f"level {p}: classes and transients do not partition V")
        if prev_n_classes is not None and not lv.n_classes < prev_n_classes:
            raise DegenerateLevelError(f"level {p}: class count did not strictly decrease")
        prev_n_classes = lv.n_classes
        if p > 1:
            below = tree.level(p - 1)
            for cls in lv.classes:
                members = set(cls)
                parts = [c for c in below.classes if set(c) <= members]
                if sorted(i for c in parts for i in c) != sorted(cls):
                    raise DegenerateLevelError(
                        f"level {p}: class {cls} is not a union of level-{p - 1} classes"
                    )
            if not set(below.transient) <= set(lv.transient):
                raise DegenerateLevelError(f"level {p}: transient set shrank")
        for cls, meas in zip(lv.classes, lv.measures):
            support = set(int(i) for i in np.nonzero(meas > 1e-13)[0])
            if support != set(cls):
                raise DegenerateLevelError(
                    f"level {p}: measure support {support} differs from class {set(cls)}"
                )
            if abs(meas.sum() - 1.0) > 1e-9:
                raise DegenerateLevelError(f"level {p}: class measure is not normalized")
        if lv.theta is not None:
            if lv.theta.exp <= 0:
                raise DegenerateLevelError(f"level {p}: theta exponent must be positive")
            if prev_exp is not None and not lv.theta.exp > prev_exp:
                raise DegenerateLevelError(f"level {p}: theta exponents must increase")
            prev_exp = lv.theta.exp
            if not np.any(lv.limit_rates > 0):
                raise DegenerateLevelError(f"level {p}: limit chain has no positive rate")
            # recurrent classes must be closed for the limit rates, exactly
            for rec in lv.recurrent_classes:
                inside = set(rec)
                for j in rec:
                    for k in range(lv.n_classes):
                        if k not in inside and lv.limit_rates[j, k] != 0.0:
                            raise DegenerateLevelError(
                                f"level {p}: limit rate leaks out of a recurrent class"
                            )
    top = tree.level(tree.q)
    if top.recurrent_classes is None or len(top.recurrent_classes) != 1:
        raise DegenerateLevelError("the top level must have exactly one recurrent class")


# ---------------------------------------------------------------------------
# Finite-beta hitting coefficients and the transition-probability limits
# ---------------------------------------------------------------------------


def a_coefficients(fam: RateFamily, tree: HierarchyTree, p: int, beta: float) -> np.ndarray:
    """Finite-beta approximation of the entry distribution over level-p classes.

    Row x gives, for each class j, the probability of hitting class j before
    the other classes.  States inside a class get Kronecker rows, and when a
    level has a single class (the top of the tree) the one column is all ones.
    """
    if not 1 <= p <= tree.q + 1:
        raise ValidationError(f"level must be in 1..{tree.q + 1}")
    n = tree.n_states
    lv = tree.level(p)
    m = lv.n_classes
    if m == 1:
        return np.ones((n, 1))
    gen = build_generator(fam.spec, beta)
    out = np.zeros((n, m))
    for x in range(n):
        k = lv.class_of_state(x)
        if k is not None:
            out[x, k] = 1.0
            continue
        for j in range(m):
            target = lv.classes[j]
            avoid = [i for jj, cls in enumerate(lv.classes) if jj != j for i in cls]
            out[x, j] = hitting_probability(gen, target, avoid, x)
    return out


def t1_check(
    fam: RateFamily,
    tree: HierarchyTree,
    p: int,
    t: float,
    x: int,
    beta_grid: Sequence[float],
    *,
    max_steps: int = 10**8,
) -> list[dict]:
    """Distance between the rescaled transition row and its predicted limit.

    For each beta, compares ``p_{t * theta_p(beta)}(x, .)`` against
    ``sum_j omega_t(x, j) pi_j`` where the weights combine the finite-beta
    entry coefficients with the transition matrix of the level-p limit
    chain.  Also reports the intermediate-scale variant at the geometric
    mean of consecutive time scales, whose limit drops the chain factor.
    """
    if not 1 <= p <= tree.q:
        raise ValidationError(f"level must be in 1..{tree.q}")
    if t <= 0:
        raise ValidationError("t must be positive")
    lv = tree.level(p)
    chain_p = tree.limit_chain(p)
    p_small = transition_matrix(chain_p, t)
    measures = np.stack(lv.measures)  # (m, n)

    rows = []
    for beta in beta_grid:
        gen = build_generator(fam.spec, float(beta))
        theta = tree.theta_value(p, beta)
        coeffs = a_coefficients(fam, tree, p, beta)
        omega = coeffs[x] @ p_small  # weights over classes
        predicted = omega @ measures
        row: dict = {"beta": float(beta), "theta": theta, "x": tree.labels[x]}
        try:
            big = transition_matrix(gen, t * theta, max_steps=max_steps)
            row["deviation"] = float(np.abs(big[x] - predicted).sum())
            row["cap_hit"] = False
        except StepCapError as err:
            row["deviation"] = float("nan")
            row["cap_hit"] = True
            row["cap_detail"] = str(err)

        # intermediate scale between theta_{p-1} and theta_p (item 3.a)
        theta_lo = tree.theta_value(p - 1, beta)
        mid_time = float(np.sqrt(theta_lo * theta))
        predicted_mid = coeffs[x] @ measures
        try:
            big_mid = transition_matrix(gen, mid_time, max_steps=max_steps)
            row["deviation_intermediate"] = float(np.abs(big_mid[x] - predicted_mid).sum())
        except StepCapError:
            row["deviation_intermediate"] = float("nan")
        rows.append(row)
    return rows
