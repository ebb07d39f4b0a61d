"""Command-line front end.

Eight subcommands over JSON chain specs: ``analyze`` (build the hierarchy),
``rate`` (one functional evaluation), ``gamma-check`` (recovery-sequence
table), ``liminf-probe``, ``t1-check``, ``expansion``, ``simulate``, and
``trace``.  Reports are deterministic JSON (plus CSV for the tables) with
figures rendered alongside; all writes are atomic.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from . import figures
from .asymptotic import RateFamily
from .chains import (
    ChainSpec,
    build_generator,
    chain_spec_from_jsonable,
    simulate_empirical_measure,
    stationary_distribution,
    classify_states,
)
from .errors import ConvergenceError, MetarateError, ValidationError
from .gamma import expansion_residual, gamma_liminf_probe, gamma_limsup_table
from .hierarchy import build_tree, t1_check
from .operators import trace as trace_op
from .asymptotic import symbolic_trace
from .rate import rate

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3

TOLERANCES = {
    "el_residual_rtol": 1e-10,
    "value_crosscheck_rtol": 1e-8,
    "representable_atol": 1e-9,
    "gamma_pass_rtol": 0.05,
    "support_threshold": 1e-12,
}


@dataclass
class RunConfig:
    """Fully resolved run parameters; embedded verbatim in every report."""

    command: str
    input_path: str
    beta: float | None = None
    beta_grid: list[float] = field(default_factory=list)
    measure: str | None = None
    level: int | None = None
    seed: int = 0
    out: str | None = None
    format: str = "json"
    t: float = 1.0
    t_max: float = 1.0
    x0: str | None = None
    keep: list[str] = field(default_factory=list)
    figures: bool = True
    smooth: bool = False

    def out_prefix(self) -> str:
        return self.out if self.out else f"{self.command.replace('-', '_')}_report"


def _parse_beta_grid(text: str) -> list[float]:
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError as err:
        raise ValidationError(f"beta grid must look like 'a:b:step', got {text!r}") from err
    if step <= 0 or hi < lo:
        raise ValidationError(f"bad beta grid {text!r}")
    grid = []
    v = lo
    while v <= hi + 1e-9 * max(1.0, abs(hi)):
        grid.append(round(v, 12))
        v += step
    if len(grid) < 2 or any(b2 <= b1 for b1, b2 in zip(grid, grid[1:])):
        raise ValidationError(f"beta grid {text!r} is not strictly increasing")
    return grid


def _load_spec(path: str) -> ChainSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as err:
        raise ValidationError(f"cannot read input file: {err}") from err
    except json.JSONDecodeError as err:
        raise ValidationError(f"input file is not valid JSON: {err}") from err
    if isinstance(data, dict) and "states" not in data and "result" in data:
        data = data["result"]  # re-ingesting a trace report
    return chain_spec_from_jsonable(data)


def _parse_measure(text: str | None, spec: ChainSpec, tree=None) -> np.ndarray:
    """Measure argument: comma floats, a JSON file, inline JSON vector, or a
    mixture spec {"pi": [[p, j, weight], ...]} resolved against the tree."""
    if text is None:
        raise ValidationError("this command needs --measure")
    data = None
    if os.path.exists(text):
        with open(text, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            try:
                data = [float(v) for v in text.split(",")]
            except ValueError as err:
                raise ValidationError(f"cannot parse measure {text!r}") from err
    if isinstance(data, dict) and "pi" in data:
        if tree is None:
            raise ValidationError("a pi-mixture measure needs a built hierarchy")
        weights = np.zeros(len(spec.states))
        for p, j, w in data["pi"]:
            lv = tree.level(int(p))
            if not 1 <= int(j) <= lv.n_classes:
                raise ValidationError(f"mixture references class {j} at level {p}")
            weights += float(w) * lv.measures[int(j) - 1]
        data = weights
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 1:
        raise ValidationError("measure must be a vector")
    if abs(arr.sum() - 1.0) > 1e-9:
        raise ValidationError(f"measure sums to {arr.sum()}, not 1 (tolerance 1e-9)")
    if np.any(arr < 0):
        raise ValidationError("measure entries must be nonnegative")
    return arr / arr.sum()


def _atomic_write(path: str, payload: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _csv_text(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def _envelope(config: RunConfig, result) -> dict:
    return {"config": asdict(config), "tolerances": TOLERANCES, "result": result}


def _require_symbolic(spec: ChainSpec) -> RateFamily:
    if not spec.is_symbolic:
        raise ValidationError(
            "this command needs a symbolic rate family (edges with an 'exp' field)"
        )
    return RateFamily(spec)


def _maybe_figure(config: RunConfig, fig) -> list[str]:
    if not config.figures or fig is None:
        return []
    path = config.out_prefix() + ".png"
    figures.save_figure(fig, path)
    return [path]


def run(config: RunConfig) -> int:
    """Execute one resolved command; returns the process exit code."""
    spec = _load_spec(config.input_path)
    prefix = config.out_prefix()
    written: list[str] = []
    csv_rows: list[list] | None = None
    fig = None

    try:
        if config.command == "analyze":
            tree = build_tree(_require_symbolic(spec))
            result = tree.to_jsonable()
            if tree.q >= 1:
                fig = figures.tree_figure(tree)

        elif config.command == "rate":
            gen = build_generator(spec, config.beta)
            mu = _parse_measure(config.measure, spec)
            report = rate(gen, mu)
            result = report.to_jsonable()
            result["beta"] = config.beta
            fig = figures.rate_figure(report)

        elif config.command == "gamma-check":
            fam = _require_symbolic(spec)
            tree = build_tree(fam)
            if tree.q < 1:
                raise ValidationError("gamma-check needs a nontrivial hierarchy: " + str(tree.diagnostic))
            p = config.level or tree.q
            if not 1 <= p <= tree.q:
                raise ValidationError(f"--level must be in 1..{tree.q}")
            m = tree.level(p).n_classes
            if config.measure:
                omega = _omega_argument(config.measure, spec, tree, p)
            else:
                omega = np.full(m, 1.0 / m)
            table = gamma_limsup_table(fam, tree, p, omega, config.beta_grid)
            result = table.to_jsonable()
            csv_rows = table.csv_rows()
            fig = figures.gamma_figure(table)

        elif config.command == "liminf-probe":
            fam = _require_symbolic(spec)
            tree = build_tree(fam)
            if tree.q < 1:
                raise ValidationError("liminf-probe needs a nontrivial hierarchy")
            p = config.level or tree.q
            mu = _parse_measure(config.measure, spec, tree)
            result = gamma_liminf_probe(
                fam, tree, p, mu, config.beta_grid, smoothing=config.smooth
            )
            csv_rows = [["beta", "theta", "value", "target", "verdict"]] + [
                [r["beta"], r["theta"], r["value"], result["target"], result["verdict"]]
                for r in result["rows"]
            ]
            fig = figures.liminf_figure(result)

        elif config.command == "t1-check":
            fam = _require_symbolic(spec)
            tree = build_tree(fam)
            if tree.q < 1:
                raise ValidationError("t1-check needs a nontrivial hierarchy")
            p = config.level or tree.q
            rows = []
            for x in range(len(spec.states)):
                rows.extend(t1_check(fam, tree, p, config.t, x, config.beta_grid))
            for r in rows:  # cap-hit rows carry NaN; keep the JSON strict
                for key in ("deviation", "deviation_intermediate"):
                    if key in r and not np.isfinite(r[key]):
                        r[key] = None
            result = {"p": p, "t": config.t, "rows": rows}
            csv_rows = [["x", "beta", "theta", "deviation", "deviation_intermediate", "cap_hit"]] + [
                [
                    r["x"],
                    r["beta"],
                    r["theta"],
                    r["deviation"],
                    r["deviation_intermediate"],
                    r.get("cap_hit", False),
                ]
                for r in rows
            ]
            fig = figures.t1_figure(rows, p)

        elif config.command == "expansion":
            fam = _require_symbolic(spec)
            tree = build_tree(fam)
            if tree.q < 1:
                raise ValidationError("expansion needs a nontrivial hierarchy")
            mu = _parse_measure(config.measure, spec, tree)
            if config.beta is None:
                raise ValidationError("expansion needs --beta")
            result = expansion_residual(fam, tree, mu, config.beta)
            fig = figures.expansion_figure(result)

        elif config.command == "simulate":
            gen = build_generator(spec, config.beta)
            x0 = spec.index(config.x0) if config.x0 else 0
            measure = simulate_empirical_measure(gen, x0, config.t_max, config.seed)
            result = {
                "empirical": [float(v) for v in measure.weights],
                "states": list(spec.states),
                "t_max": config.t_max,
                "seed": config.seed,
            }
            reference = None
            if classify_states(gen).is_irreducible:
                reference = stationary_distribution(gen).weights
                result["stationary"] = [float(v) for v in reference]
            fig = figures.measure_figure(measure.weights, spec.states, reference)

        elif config.command == "trace":
            if not config.keep:
                raise ValidationError("trace needs --keep with a comma-separated state list")
            for label in config.keep:
                if label not in spec.states:
                    raise ValidationError(f"--keep references unknown state {label!r}")
            keep_idx = sorted(spec.index(s) for s in config.keep)
            if spec.is_symbolic and config.beta is None:
                traced = symbolic_trace(RateFamily(spec), keep_idx).spec
            else:
                gen = build_generator(spec, config.beta)
                traced_gen = trace_op(gen, keep_idx)
                edges = []
                for i, frm in enumerate(traced_gen.labels):
                    for j, to in enumerate(traced_gen.labels):
                        if i != j and traced_gen.rates[i, j] > 0:
                            edges.append((frm, to, float(traced_gen.rates[i, j])))
                traced = ChainSpec(states=traced_gen.labels, edges=tuple(edges))
            result = traced.to_jsonable()

        else:
            raise ValidationError(f"unknown command {config.command!r}")

    except ConvergenceError as err:
        diagnostics = {
            "error": str(err),
            "best_value": err.value,
            "best_residual": err.residual,
        }
        _atomic_write(prefix + ".json", _dump_json(_envelope(config, diagnostics)))
        print(f"numerical non-convergence: {err}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE

    payload = _dump_json(_envelope(config, result))
    _atomic_write(prefix + ".json", payload)
    written.append(prefix + ".json")
    if csv_rows is not None:
        _atomic_write(prefix + ".csv", _csv_text(csv_rows))
        written.append(prefix + ".csv")
    written.extend(_maybe_figure(config, fig))

    if config.format == "csv" and csv_rows is not None:
        sys.stdout.write(_csv_text(csv_rows))
    else:
        sys.stdout.write(payload)
    print("wrote: " + ", ".join(written), file=sys.stderr)
    return EXIT_OK


def _omega_argument(text: str, spec: ChainSpec, tree, p: int) -> np.ndarray:
    """gamma-check measure: either class weights over S_p or a measure on V."""
    from .gamma import decompose_measure

    m = tree.level(p).n_classes
    try:
        candidate = np.asarray([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        candidate = None
    if candidate is not None and len(candidate) == m and m != len(spec.states):
        if abs(candidate.sum() - 1.0) > 1e-9 or np.any(candidate < 0):
            raise ValidationError("class weights must be nonnegative and sum to 1")
        return candidate / candidate.sum()
    mu = _parse_measure(text, spec, tree)
    inp = decompose_measure(tree, p, mu)
    if not inp.representable:
        raise ValidationError(
            f"measure is not a mixture of the level-{p} class measures "
            f"(defect {inp.defect:.3e})"
        )
    return inp.omega


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metarate",
        description="Rate functionals and metastable hierarchies of finite-state chains.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, *, grid=False, beta=False, measure=False, level=False):
        sp.add_argument("--input", required=True, help="chain spec JSON file")
        sp.add_argument("--out", default=None, help="output path prefix")
        sp.add_argument("--format", choices=["json", "csv"], default="json")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument(
            "--figures", action=argparse.BooleanOptionalAction, default=True,
            help="render a PNG figure alongside the report",
        )
        if beta:
            sp.add_argument("--beta", type=float, default=None)
        if grid:
            sp.add_argument("--beta-grid", default="8:20:4", help="a:b:step, inclusive")
        if measure:
            sp.add_argument("--measure", default=None, help="vector, JSON file, or pi-mixture")
        if level:
            sp.add_argument("--level", type=int, default=None)

    common(sub.add_parser("analyze", help="build and report the hierarchy tree"))
    common(sub.add_parser("rate", help="rate functional at one beta and measure"),
           beta=True, measure=True)
    common(sub.add_parser("gamma-check", help="recovery-sequence convergence table"),
           grid=True, measure=True, level=True)
    sp = sub.add_parser("liminf-probe", help="lower-bound probe along a measure sequence")
    common(sp, grid=True, measure=True, level=True)
    sp.add_argument(
        "--smooth", action="store_true",
        help="blend the measure toward uniform at rate 1/beta",
    )
    sp = sub.add_parser("t1-check", help="transition-probability limits on a beta grid")
    common(sp, grid=True, level=True)
    sp.add_argument("--t", type=float, default=1.0)
    sp = sub.add_parser("simulate", help="empirical occupation measure of one path")
    common(sp, beta=True)
    sp.add_argument("--t-max", type=float, default=1000.0)
    sp.add_argument("--x0", default=None, help="starting state label")
    sp = sub.add_parser("trace", help="trace the chain onto a state subset")
    common(sp, beta=True)
    sp.add_argument("--keep", required=True, help="comma-separated labels to keep")
    common(sub.add_parser("expansion", help="expansion residual report at one beta"),
           beta=True, measure=True)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command, input_path=args.input)
    cfg.out = args.out
    cfg.format = args.format
    cfg.seed = args.seed
    cfg.figures = args.figures
    for name in ("beta", "measure", "level", "t", "x0", "smooth"):
        if hasattr(args, name) and getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if hasattr(args, "t_max"):
        cfg.t_max = args.t_max
    if hasattr(args, "beta_grid"):
        cfg.beta_grid = _parse_beta_grid(args.beta_grid)
    if hasattr(args, "keep") and args.keep:
        cfg.keep = [s.strip() for s in args.keep.split(",") if s.strip()]
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        return run(config)
    except (ValidationError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except MetarateError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
