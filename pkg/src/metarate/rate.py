"""The level-2 occupation-measure rate functional.

For a generator with rates R and a probability measure mu, the functional is

    I(mu) = sup_H  J_H(mu),
    J_H(mu) = - sum_{x,y} mu(x) R(x,y) (e^{H(y)-H(x)} - 1),

with the supremum over all potentials H (defined up to an additive
constant).  On an irreducible chain with a fully supported measure the
supremum is attained at the unique gauge-fixed H that makes mu stationary
for the tilted chain; this module finds it by damped Newton ascent.

For general measures and reducible chains the supremum decomposes: restrict
to the states with positive holding rate (adding the rate of mass leaking to
the dead states), restrict to the support of mu (adding the escape rate from
the support), split the support into communicating classes of the reflected
chain (adding the inter-class flow), and solve each multi-state class as an
irreducible problem with the conditioned measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chains import SUPPORT_THRESHOLD, Generator, as_weights, classify_states
from .errors import ConvergenceError, NotFullSupportError, NotIrreducibleError
from .operators import TiltPotential

__all__ = ["RateReport", "ClassTerm", "j_functional", "rate_irreducible", "rate"]

EL_RESIDUAL_RTOL = 1e-10
DECREMENT_RTOL = 1e-12
VALUE_CROSSCHECK_RTOL = 1e-8
TILT_CLAMP = 40.0
MAX_ITERATIONS = 10_000


def j_functional(gen: Generator, H, mu) -> float:
    """Evaluate J_H(mu) for a potential H given on every state."""
    w = as_weights(mu, gen.n_states)
    values = H.values if isinstance(H, TiltPotential) else np.asarray(H, dtype=float)
    if len(values) != gen.n_states:
        raise ValueError("potential must be defined on every state")
    delta = values[None, :] - values[:, None]
    return -float((w[:, None] * gen.rates * np.expm1(delta)).sum())


@dataclass(frozen=True)
class ClassTerm:
    """Contribution of one communicating class of the reflected chain."""

    states: tuple[int, ...]
    weight: float            # mu mass of the class
    value: float             # conditioned-rate value I of the class
    potential: TiltPotential  # optimizer on the class states
    residual: float

    @property
    def contribution(self) -> float:
        return self.weight * self.value


@dataclass(frozen=True)
class RateReport:
    """Value of the rate functional together with its certificate."""

    value: float
    method: str              # irreducible-direct | K-decomposition | degenerate-restriction
    el_residual: float
    class_terms: tuple[ClassTerm, ...] = ()
    escape_term: float = 0.0
    flow_term: float = 0.0
    boundary_term: float = 0.0
    labels: tuple[str, ...] = field(default=(), repr=False)

    @property
    def optimizer(self) -> TiltPotential | None:
        """The global optimizer, available when a single class spans the support."""
        if self.method == "irreducible-direct" and len(self.class_terms) == 1:
            return self.class_terms[0].potential
        return None

    @property
    def decomposition(self) -> list[tuple[str, float]]:
        items = []
        for term in self.class_terms:
            names = ",".join(self.labels[i] for i in term.states) if self.labels else str(term.states)
            items.append((f"class[{names}]", term.contribution))
        items.append(("escape-from-support", self.escape_term))
        items.append(("inter-class-flow", self.flow_term))
        items.append(("degenerate-boundary", self.boundary_term))
        return items

    def to_jsonable(self) -> dict:
        return {
            "value": self.value,
            "method": self.method,
            "el_residual": self.el_residual,
            "decomposition": [[name, value] for name, value in self.decomposition],
            "optimizer": None
            if self.optimizer is None
            else [float(v) for v in self.optimizer.values],
        }


# ---------------------------------------------------------------------------
# Concave maximization for the irreducible, fully supported case
# ---------------------------------------------------------------------------


def _j_value(rates: np.ndarray, w: np.ndarray, H: np.ndarray, clamp: float | None) -> float:
    delta = H[None, :] - H[:, None]
    if clamp is not None:
        delta = np.clip(delta, -clamp, clamp)
    return -float((w[:, None] * rates * np.expm1(delta)).sum())


def _tilted_rates(rates: np.ndarray, H: np.ndarray, clamp: float | None) -> np.ndarray:
    delta = H[None, :] - H[:, None]
    if clamp is not None:
        delta = np.clip(delta, -clamp, clamp)
    return rates * np.exp(delta)


def _stationarity_residual(rates_H: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Defect of mu under the tilted chain: mu(z)*lam_H(z) - inflow_H(z)."""
    weighted = w[:, None] * rates_H
    return weighted.sum(axis=1) - weighted.sum(axis=0)


def _balance_defect(rates_H: np.ndarray, w: np.ndarray):
    """Stationarity defect of each state and its probability turnover."""
    weighted = w[:, None] * rates_H
    out = weighted.sum(axis=1)
    inflow = weighted.sum(axis=0)
    return out - inflow, out + inflow


def _maximize_tilt(
    rates: np.ndarray,
    w: np.ndarray,
    *,
    start: np.ndarray | None = None,
    gauge: int = 0,
    max_iterations: int = MAX_ITERATIONS,
):
    """Damped Newton ascent of H -> J_H(mu) on gauge-fixed coordinates.

    Two-part stopping rule, both scale-aware.  The error contract asks
    every state's stationarity defect under the tilted chain to be small
    relative to that state's own probability turnover (a global scale would
    declare victory while slow states are still off balance).  But on
    multi-scale chains that defect can pass long before the value has
    converged -- a slow-flow imbalance is invisible next to fast turnover
    while the optimal value lives entirely in the slow flows -- so the
    iteration also runs the Newton decrement (the predicted remaining gain)
    down to a small fraction of the value itself, or to the rounding floor.
    Steps are accepted on J-ascent while J-differences are resolvable, then
    on defect decrease once they sink below noise.

    Returns ``(H, value, residual, iterations)`` with the final value and
    residual evaluated without the exponential clamp.
    """
    n = len(w)
    if n == 1:
        return np.zeros(1), 0.0, 0.0, 0
    scale = float(rates.max())
    if scale <= 0:
        return np.zeros(n), 0.0, 0.0, 0
    Rn = rates / scale
    flow_scale = float((w * Rn.sum(axis=1)).sum())

    def merit(Hvec: np.ndarray):
        g, turnover = _balance_defect(_tilted_rates(Rn, Hvec, TILT_CLAMP), w)
        rel = np.abs(g) / np.maximum(turnover, 1e-300)
        return g, float(rel.max())

    H = np.zeros(n) if start is None else np.asarray(start, dtype=float).copy()
    H -= H[gauge]
    free = [i for i in range(n) if i != gauge]
    j_cur = _j_value(Rn, w, H, TILT_CLAMP)
    g, rel_cur = merit(H)

    iterations = 0
    for iterations in range(1, max_iterations + 1):
        rates_H = _tilted_rates(Rn, H, TILT_CLAMP)
        weighted = w[:, None] * rates_H
        hess = weighted + weighted.T
        diag = -(weighted.sum(axis=1) + weighted.sum(axis=0))
        np.fill_diagonal(hess, diag)
        reduced = hess[np.ix_(free, free)]
        direction = np.zeros(n)
        try:
            direction[free] = np.linalg.solve(reduced, -g[free])
        except np.linalg.LinAlgError:
            direction[free] = g[free] / max(1e-300, float(np.abs(diag).max()))
        decrement = float(g @ direction)
        if decrement <= 0:
            direction = np.zeros(n)
            direction[free] = g[free] / max(1e-300, float(np.abs(diag).max()))
            decrement = float(g @ direction)

        if rel_cur <= EL_RESIDUAL_RTOL and decrement <= 2.0 * DECREMENT_RTOL * abs(j_cur):
            break

        step_norm = float(np.abs(direction).max())
        if step_norm > 10.0:
            direction *= 10.0 / step_norm

        improved = False
        alpha = 1.0
        for _ in range(60):
            candidate = H + alpha * direction
            candidate -= candidate[gauge]
            j_new = _j_value(Rn, w, candidate, TILT_CLAMP)
            if j_new > j_cur:
                g, rel_cur = merit(candidate)
                H, j_cur = candidate, j_new
                improved = True
                break
            alpha *= 0.5
        if not improved:
            # J-differences are below rounding noise; polish on the defect
            alpha = 1.0
            for _ in range(60):
                candidate = H + alpha * direction
                candidate -= candidate[gauge]
                g_new, rel_new = merit(candidate)
                if rel_new < rel_cur:
                    H = candidate
                    j_cur = _j_value(Rn, w, H, TILT_CLAMP)
                    g, rel_cur = g_new, rel_new
                    improved = True
                    break
                alpha *= 0.5
        if not improved:
            break

    g_final, _ = _balance_defect(_tilted_rates(Rn, H, None), w)
    final_residual = float(np.max(np.abs(g_final)))
    value = _j_value(Rn, w, H, None)
    if rel_cur > EL_RESIDUAL_RTOL:
        raise ConvergenceError(
            f"tilt maximization stalled after {iterations} iterations "
            f"(relative defect {rel_cur:.3e}, tolerance {EL_RESIDUAL_RTOL:.1e})",
            value=value * scale,
            residual=final_residual * scale,
            potential=TiltPotential(H, gauge_state=gauge),
        )

    # independent recomputation of the optimal value from the optimizer:
    # I = sum mu R [ (dH) e^{dH} - e^{dH} + 1 ]
    delta = H[None, :] - H[:, None]
    check = float((w[:, None] * Rn * (delta * np.exp(delta) - np.expm1(delta))).sum())
    if abs(check - value) > VALUE_CROSSCHECK_RTOL * (flow_scale + abs(value)):
        raise ConvergenceError(
            f"optimal-value cross-check failed: {value * scale!r} vs {check * scale!r}",
            value=value * scale,
            residual=final_residual * scale,
            potential=TiltPotential(H, gauge_state=gauge),
        )
    return H, value * scale, final_residual * scale, iterations


def rate_irreducible(gen: Generator, mu, *, start=None) -> RateReport:
    """I(mu) for an irreducible chain and a fully supported measure.

    The optimizer is the unique gauge-fixed potential whose tilted chain has
    mu as stationary state; the report carries it together with the final
    stationarity residual.
    """
    w = as_weights(mu, gen.n_states)
    if gen.n_states > 1 and not classify_states(gen).is_irreducible:
        raise NotIrreducibleError("rate_irreducible needs an irreducible chain")
    if np.any(w <= SUPPORT_THRESHOLD):
        raise NotFullSupportError("rate_irreducible needs a fully supported measure")
    H, value, residual, _ = _maximize_tilt(gen.rates, w, start=start)
    term = ClassTerm(
        states=tuple(range(gen.n_states)),
        weight=1.0,
        value=value,
        potential=TiltPotential(H),
        residual=residual,
    )
    return RateReport(
        value=max(value, 0.0),
        method="irreducible-direct",
        el_residual=residual,
        class_terms=(term,),
        labels=gen.labels,
    )


# ---------------------------------------------------------------------------
# The general decomposition
# ---------------------------------------------------------------------------


def _scc_on_subset(rates: np.ndarray, subset: list[int]) -> list[tuple[int, ...]]:
    """Communicating classes of the chain reflected at ``subset``."""
    if not subset:
        return []
    sub = Generator(
        np.ascontiguousarray(rates[np.ix_(subset, subset)]),
        [str(i) for i in subset],
    )
    classes = classify_states(sub).classes
    return [tuple(subset[i] for i in cls) for cls in classes]


def rate(gen: Generator, mu) -> RateReport:
    """I(mu) for any finite-state generator and any measure.

    Decision tree: drop zero-holding states (their outgoing flow is zero and
    mass there costs nothing), restrict to the support of mu, decompose the
    support into communicating classes of the reflected chain, solve each
    multi-state class by concave maximization, and add the two boundary sums
    (escape from the support, inter-class flow) plus the leak to the dropped
    states.
    """
    n = gen.n_states
    w = as_weights(mu, n)
    R = gen.rates
    lam = gen.holding

    alive = [x for x in range(n) if lam[x] > 0]
    dead = [x for x in range(n) if lam[x] <= 0]
    boundary = float(sum(w[x] * R[x, y] for x in alive for y in dead)) if dead else 0.0

    support = [x for x in alive if w[x] > SUPPORT_THRESHOLD]
    if not support:
        return RateReport(
            value=boundary,
            method="degenerate-restriction" if dead else "K-decomposition",
            el_residual=0.0,
            boundary_term=boundary,
            labels=gen.labels,
        )

    support_set = set(support)
    escape = float(
        sum(w[x] * R[x, y] for x in support for y in alive if y not in support_set)
    )

    classes = _scc_on_subset(R, support)
    membership = {}
    for a, cls in enumerate(classes):
        for x in cls:
            membership[x] = a
    flow = float(
        sum(
            w[x] * R[x, y]
            for x in support
            for y in support
            if membership[x] != membership[y]
        )
    )

    terms = []
    for cls in classes:
        if len(cls) < 2:
            continue
        idx = list(cls)
        sub = Generator(np.ascontiguousarray(R[np.ix_(idx, idx)]), [gen.labels[i] for i in idx])
        weight = float(w[idx].sum())
        conditioned = w[idx] / weight
        H, value, residual, _ = _maximize_tilt(sub.rates, conditioned)
        terms.append(
            ClassTerm(
                states=tuple(idx),
                weight=weight,
                value=value,
                potential=TiltPotential(H),
                residual=residual,
            )
        )

    total = sum(t.contribution for t in terms) + escape + flow + boundary
    if dead:
        method = "degenerate-restriction"
    elif len(classes) == 1 and len(support) == n:
        method = "irreducible-direct"
    else:
        method = "K-decomposition"
    return RateReport(
        value=max(float(total), 0.0),
        method=method,
        el_residual=max((t.residual for t in terms), default=0.0),
        class_terms=tuple(terms),
        escape_term=escape,
        flow_term=flow,
        boundary_term=boundary,
        labels=gen.labels,
    )
