"""Level functionals, recovery sequences, and the expansion harness.

The level-p functional assigns to a measure the rate value of the level-p
limit chain when the measure is a mixture of the level-p class measures,
and +infinity otherwise.  The recovery construction produces, for each
beta, an explicit measure (a mixture of stationary states of tilted,
reflected trace chains) along which the rescaled full-chain functional
converges to the level value from above; the liminf probe bounds it from
below along user-specified sequences.  Together the two sides certify the
expansion of the rate functional over the hierarchy's time scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chains import (
    Generator,
    ProbabilityMeasure,
    as_weights,
    build_generator,
    classify_states,
    stationary_distribution,
)
from .errors import ValidationError
from .hierarchy import HierarchyTree
from .operators import harmonic_extension, reflect, tilt, trace
from .rate import RateReport, rate, rate_irreducible

__all__ = [
    "LevelFunctionalInput",
    "LevelValue",
    "GammaRow",
    "GammaTable",
    "decompose_measure",
    "level_functional",
    "recovery_sequence",
    "gamma_limsup_table",
    "gamma_liminf_probe",
    "expansion_residual",
]

REPRESENTABLE_ATOL = 1e-9
PASS_RTOL = 0.05
TREND_SLACK = 1e-9
LIMINF_GROWTH_FACTOR = 2.0
LIMINF_LOWER_FRACTION = 0.9


@dataclass(frozen=True)
class LevelFunctionalInput:
    """Mixture weights of a measure over the level-p classes, if they exist."""

    p: int
    representable: bool
    omega: np.ndarray | None = None
    defect: float = 0.0  # largest violation found while matching the mixture

    def __post_init__(self):
        if self.representable and self.omega is None:
            raise ValidationError("representable input needs mixture weights")


@dataclass(frozen=True)
class LevelValue:
    """Extended-real level functional value with its certificate."""

    p: int
    value: float
    input: LevelFunctionalInput
    report: RateReport | None = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def decompose_measure(tree: HierarchyTree, p: int, mu) -> LevelFunctionalInput:
    """Try to write mu as a mixture of the level-p class measures.

    The candidate weight of class j is the mass mu gives it; the measure is
    representable when no mass sits on the transient set and, within each
    class, mu is proportional to the class measure.
    """
    if not 1 <= p <= tree.q:
        raise ValidationError(f"level must be in 1..{tree.q}")
    w = as_weights(mu, tree.n_states)
    lv = tree.level(p)
    omega = np.array([w[list(cls)].sum() for cls in lv.classes])
    defect = float(sum(w[i] for i in lv.transient))
    for j, cls in enumerate(lv.classes):
        if omega[j] <= 0:
            continue
        idx = list(cls)
        defect = max(defect, float(np.abs(w[idx] - omega[j] * lv.measures[j][idx]).max()))
    if defect > REPRESENTABLE_ATOL:
        return LevelFunctionalInput(p=p, representable=False, defect=defect)
    omega = omega / omega.sum()
    return LevelFunctionalInput(p=p, representable=True, omega=omega, defect=defect)


def level_functional(tree: HierarchyTree, p: int, mu) -> LevelValue:
    """The level-p functional: the limit-chain rate value of the mixture
    weights, or +infinity when the measure is not a class mixture."""
    inp = decompose_measure(tree, p, mu)
    if not inp.representable:
        return LevelValue(p=p, value=math.inf, input=inp)
    report = rate(tree.limit_chain(p), inp.omega)
    return LevelValue(p=p, value=report.value, input=inp, report=report)


# ---------------------------------------------------------------------------
# Recovery sequences
# ---------------------------------------------------------------------------


def _level_subset(tree: HierarchyTree, p: int) -> list[int]:
    return sorted(i for cls in tree.level(p).classes for i in cls)


def recovery_sequence(
    fam,
    tree: HierarchyTree,
    p: int,
    omega,
    beta: float,
) -> ProbabilityMeasure:
    """The explicit measure achieving the limsup bound at one beta.

    Per communicating class of the level-p limit chain: solve the reduced
    optimization on the reflected class chain, lift the optimizer to a
    potential constant on each state class, and take the stationary state
    of the correspondingly tilted, reflected trace of the full chain.
    Singleton classes contribute the plain reflected-trace stationary
    states.  The mixture uses the requested weights.
    """
    if not 1 <= p <= tree.q:
        raise ValidationError(f"level must be in 1..{tree.q}")
    lv = tree.level(p)
    omega = np.asarray(omega, dtype=float)
    if len(omega) != lv.n_classes:
        raise ValidationError("omega must weight every level-p class")
    if np.any(omega <= 0):
        raise ValidationError("recovery sequences need strictly positive class weights")
    omega = omega / omega.sum()

    chain_p = tree.limit_chain(p)
    classes_S = classify_states(chain_p).classes  # equivalence classes of S_p

    kept = _level_subset(tree, p)
    pos_in_trace = {x: i for i, x in enumerate(kept)}
    gen = build_generator(fam.spec, beta)
    traced = trace(gen, kept)

    mu = np.zeros(tree.n_states)
    for block in classes_S:
        if len(block) >= 2:
            sub = reflect(chain_p, block)
            block_sorted = sorted(block)
            w_block = omega[block_sorted]
            mass = w_block.sum()
            h = rate_irreducible(sub, w_block / mass).optimizer.values
            group = sorted(i for j in block_sorted for i in lv.classes[j])
            H_group = np.zeros(len(group))
            for pos, x in enumerate(group):
                j = lv.class_of_state(x)
                H_group[pos] = h[block_sorted.index(j)]
            refl = reflect(traced, [pos_in_trace[x] for x in group])
            pi = stationary_distribution(tilt(refl, H_group))
            mu[group] += mass * pi.weights
        else:
            j = block[0]
            group = sorted(lv.classes[j])
            refl = reflect(traced, [pos_in_trace[x] for x in group])
            pi = stationary_distribution(refl)
            mu[group] += omega[j] * pi.weights
    return ProbabilityMeasure(mu)


# ---------------------------------------------------------------------------
# The limsup table and liminf probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaRow:
    beta: float
    theta: float
    value: float          # theta * trace-level functional at the recovery measure
    value_full: float     # theta * full-chain functional at the lifted measure
    nu_mass: float        # mass the lifted measure leaves on the traced set
    error: float
    recovery: tuple[float, ...]


@dataclass(frozen=True)
class GammaTable:
    p: int
    omega: tuple[float, ...]
    target: float
    theta_exponent: str
    rows: tuple[GammaRow, ...]
    verdict: str
    tolerances: dict = field(default_factory=dict)

    def to_jsonable(self) -> dict:
        return {
            "p": self.p,
            "omega": list(self.omega),
            "target": self.target,
            "theta_exponent": self.theta_exponent,
            "verdict": self.verdict,
            "tolerances": dict(self.tolerances),
            "rows": [
                {
                    "beta": r.beta,
                    "theta": r.theta,
                    "value": r.value,
                    "value_full": r.value_full,
                    "nu_mass": r.nu_mass,
                    "target": self.target,
                    "ratio": (r.value / self.target) if self.target > 0 else None,
                    "error": r.error,
                    "recovery_measure": list(r.recovery),
                }
                for r in self.rows
            ],
        }

    def csv_rows(self) -> list[list]:
        head = ["beta", "value", "target", "ratio", "verdict", "value_full", "nu_mass"]
        body = [
            [
                r.beta,
                r.value,
                self.target,
                (r.value / self.target) if self.target > 0 else "",
                self.verdict,
                r.value_full,
                r.nu_mass,
            ]
            for r in self.rows
        ]
        return [head] + body


def _within_target(value: float, target: float, rtol: float = PASS_RTOL) -> bool:
    if target > 0:
        return abs(value - target) <= rtol * target
    return value <= rtol


def _non_increasing(errors: Sequence[float], slack: float) -> bool:
    return all(b <= a + slack for a, b in zip(errors, errors[1:]))


def gamma_limsup_table(
    fam,
    tree: HierarchyTree,
    p: int,
    omega,
    beta_grid: Sequence[float],
) -> GammaTable:
    """Evaluate the rescaled functionals along the recovery sequence.

    Two columns per beta: the trace-level value at the recovery measure,
    and the full-chain value at its lift (the stationary state of the full
    chain tilted by the harmonic extension of the trace optimizer).  PASS
    requires the final trace-level row within 5 percent of the target with
    non-increasing error over the last three rows.
    """
    beta_grid = [float(b) for b in beta_grid]
    if len(beta_grid) < 3 or any(b2 <= b1 for b1, b2 in zip(beta_grid, beta_grid[1:])):
        raise ValidationError("beta grid must be strictly increasing with at least 3 points")
    omega = np.asarray(omega, dtype=float)
    omega = omega / omega.sum()
    target = rate(tree.limit_chain(p), omega).value
    kept = _level_subset(tree, p)

    rows = []
    for beta in beta_grid:
        gen = build_generator(fam.spec, beta)
        theta = tree.theta_value(p, beta)
        mu = recovery_sequence(fam, tree, p, omega, beta)
        mu_trace = mu.weights[kept]
        traced = trace(gen, kept)
        trace_report = rate(traced, mu_trace)
        value = theta * trace_report.value

        if trace_report.optimizer is not None and len(kept) < tree.n_states:
            u = np.exp(trace_report.optimizer.values)
            v = harmonic_extension(gen, kept, u)
            nu = stationary_distribution(tilt(gen, np.log(v)))
            value_full = theta * rate(gen, nu.weights).value
            nu_mass = float(nu.weights[kept].sum())
        else:
            # the trace is the whole chain: the lift is the measure itself
            value_full = theta * rate(gen, mu.weights).value
            nu_mass = 1.0
        rows.append(
            GammaRow(
                beta=beta,
                theta=theta,
                value=value,
                value_full=value_full,
                nu_mass=nu_mass,
                error=abs(value - target),
                recovery=tuple(float(v) for v in mu.weights),
            )
        )

    slack = TREND_SLACK * (1.0 + abs(target))
    errors = [r.error for r in rows]
    ok = _within_target(rows[-1].value, target) and _non_increasing(errors[-3:], slack)
    table = GammaTable(
        p=p,
        omega=tuple(float(w) for w in omega),
        target=target,
        theta_exponent=str(tree.level(p).theta.exp),
        rows=tuple(rows),
        verdict="PASS" if ok else "FAIL",
        tolerances={
            "relative_tolerance": PASS_RTOL,
            "trend_slack": slack,
            "note": (
                "certifies the constructive recovery sequence only; the limit "
                "statement quantifies over all sequences"
            ),
        },
    )
    return table


def gamma_liminf_probe(
    fam,
    tree: HierarchyTree,
    p: int,
    mu,
    beta_grid: Sequence[float],
    *,
    smoothing: bool = False,
) -> dict:
    """Lower-bound probe: the rescaled full-chain functional along a fixed
    or uniformly smoothed measure sequence.

    Verdict DIVERGES when the level value is infinite and the last three
    rows grow at least geometrically; BOUNDED-BELOW when the largest-beta
    row reaches 90 percent of the finite level value.
    """
    beta_grid = [float(b) for b in beta_grid]
    if len(beta_grid) < 3 or any(b2 <= b1 for b1, b2 in zip(beta_grid, beta_grid[1:])):
        raise ValidationError("beta grid must be strictly increasing with at least 3 points")
    w = as_weights(mu, tree.n_states)
    target = level_functional(tree, p, w).value

    n = tree.n_states
    uniform = np.full(n, 1.0 / n)
    rows = []
    for beta in beta_grid:
        w_beta = (1.0 - 1.0 / beta) * w + (1.0 / beta) * uniform if smoothing else w
        gen = build_generator(fam.spec, beta)
        theta = tree.theta_value(p, beta)
        value = theta * rate(gen, w_beta).value
        rows.append({"beta": beta, "theta": theta, "value": value})

    values = [r["value"] for r in rows]
    verdict = "INCONCLUSIVE"
    if math.isinf(target):
        tail = values[-3:]
        if all(b >= LIMINF_GROWTH_FACTOR * a for a, b in zip(tail, tail[1:])):
            verdict = "DIVERGES"
    else:
        if values[-1] >= LIMINF_LOWER_FRACTION * target - TREND_SLACK * (1 + target):
            verdict = "BOUNDED-BELOW"
    return {
        "p": p,
        "measure": [float(v) for v in w],
        "smoothing": smoothing,
        "target": target if math.isfinite(target) else "inf",
        "verdict": verdict,
        "rows": rows,
        "tolerances": {
            "growth_factor": LIMINF_GROWTH_FACTOR,
            "lower_fraction": LIMINF_LOWER_FRACTION,
        },
    }


# ---------------------------------------------------------------------------
# The expansion report
# ---------------------------------------------------------------------------


def expansion_residual(fam, tree: HierarchyTree, mu, beta: float) -> dict:
    """Compare the finite-beta functional against the expansion terms.

    The pointwise partial sum over levels is reported as a heuristic; the
    provable comparison rescales the functional at the finest representable
    level's recovery measure and compares it with the level value there.
    """
    w = as_weights(mu, tree.n_states)
    beta = float(beta)
    gen = build_generator(fam.spec, beta)

    limit = Generator(fam.limit_rates(), fam.spec.states)
    level_values: dict[int, float] = {0: rate(limit, w).value}
    omegas: dict[int, np.ndarray] = {}
    for p in range(1, tree.q + 1):
        lvalue = level_functional(tree, p, w)
        level_values[p] = lvalue.value
        if lvalue.finite:
            omegas[p] = lvalue.input.omega
    p_star = max((p for p, v in level_values.items() if math.isfinite(v)), default=0)

    partial = level_values[0] + sum(
        level_values[p] / tree.theta_value(p, beta)
        for p in range(1, p_star + 1)
    )
    full_value = rate(gen, w).value
    heuristic_ratio = full_value / partial if partial > 0 else None

    # the provable form: rescale at the finest representable level
    honest: dict = {"p_star": p_star}
    if p_star == 0:
        honest["value"] = full_value
        honest["target"] = level_values[0]
        honest["smoothed_omega"] = False
    else:
        omega = omegas[p_star]
        smoothed = bool(np.any(omega <= 0))
        if smoothed:
            m = len(omega)
            omega = (1.0 - 1.0 / beta) * omega + (1.0 / beta) * np.full(m, 1.0 / m)
        target = rate(tree.limit_chain(p_star), omega).value
        mu_beta = recovery_sequence(fam, tree, p_star, omega, beta)
        theta = tree.theta_value(p_star, beta)
        kept = _level_subset(tree, p_star)
        traced = trace(gen, kept)
        # the provable rescaled object is the trace-level functional at the
        # recovery measure; on the full chain the escape flow to transient
        # states enters at the same scale and overcounts
        honest["value"] = theta * rate(traced, mu_beta.weights[kept]).value
        honest["value_kind"] = "trace-level"
        honest["target"] = target
        honest["smoothed_omega"] = smoothed
        honest["omega"] = [float(v) for v in omega]
        honest["recovery_measure"] = [float(v) for v in mu_beta.weights]
    if honest["target"] <= 1e-12:
        honest["ratio"] = 1.0 if honest["value"] <= PASS_RTOL else None
        honest["ratio_convention"] = "target is zero; ratio 1 declared when the value is small"
    else:
        honest["ratio"] = honest["value"] / honest["target"]

    return {
        "beta": beta,
        "measure": [float(v) for v in w],
        "level_values": {
            str(p): (v if math.isfinite(v) else "inf") for p, v in sorted(level_values.items())
        },
        "theta_values": {str(p): tree.theta_value(p, beta) for p in range(1, tree.q + 1)},
        "partial_sum_heuristic": partial,
        "full_value": full_value,
        "heuristic_ratio": heuristic_ratio,
        "honest": honest,
        "note": (
            "the expansion is an asymptotic identity along recovery sequences; "
            "the pointwise partial sum is reported as a heuristic only"
        ),
    }
