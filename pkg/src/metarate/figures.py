"""Matplotlib rendering of the report tables.

Every figure-producing command of the CLI routes through here; figures are
written next to the delimited output with the same path stem.
"""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 9,
    "lines.linewidth": 1.6,
    "lines.markersize": 5,
}


def save_figure(fig, path: str) -> None:
    """Atomic figure write: render to a temp file, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, bbox_inches="tight")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def gamma_figure(table) -> "plt.Figure":
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
        betas = [r.beta for r in table.rows]
        ax1.plot(betas, [r.value for r in table.rows], "o-", label="trace level")
        ax1.plot(betas, [r.value_full for r in table.rows], "s--", label="full chain (lift)")
        ax1.axhline(table.target, color="k", lw=1, ls=":", label="target")
        ax1.set_xlabel(r"$\beta$")
        ax1.set_ylabel("rescaled functional")
        ax1.set_title(f"level {table.p} recovery values [{table.verdict}]")
        ax1.legend()
        errors = [max(r.error, 1e-18) for r in table.rows]
        ax2.semilogy(betas, errors, "o-")
        ax2.set_xlabel(r"$\beta$")
        ax2.set_ylabel("|value - target|")
        ax2.set_title("convergence")
        fig.tight_layout()
    return fig


def liminf_figure(report: dict) -> "plt.Figure":
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        betas = [r["beta"] for r in report["rows"]]
        values = [max(r["value"], 1e-18) for r in report["rows"]]
        ax.semilogy(betas, values, "o-", label="rescaled value")
        if report["target"] != "inf" and report["target"] > 0:
            ax.axhline(report["target"], color="k", lw=1, ls=":", label="level value")
            ax.axhline(
                0.9 * report["target"], color="r", lw=1, ls="--", label="0.9 x level value"
            )
        ax.set_xlabel(r"$\beta$")
        ax.set_ylabel("value")
        ax.set_title(f"liminf probe, level {report['p']} [{report['verdict']}]")
        ax.legend()
        fig.tight_layout()
    return fig


def t1_figure(rows: list[dict], p: int) -> "plt.Figure":
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        by_x: dict[str, list] = {}
        for r in rows:
            by_x.setdefault(r["x"], []).append(r)
        plotted = False
        for x, group in sorted(by_x.items()):
            pairs = [
                (g["beta"], max(g["deviation"], 1e-18))
                for g in group
                if not g.get("cap_hit") and g["deviation"] is not None
            ]
            if pairs:
                ax.semilogy(*zip(*pairs), "o-", label=f"x = {x}")
                plotted = True
        ax.set_xlabel(r"$\beta$")
        ax.set_ylabel(r"$\ell^1$ deviation")
        ax.set_title(f"transition-probability limit at level {p}")
        if plotted:
            ax.legend()
        fig.tight_layout()
    return fig


def tree_figure(tree) -> "plt.Figure":
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
        ps = list(range(1, tree.q + 1))
        exps = [float(tree.level(p).theta.exp) for p in ps]
        ax1.step(ps, exps, "o-", where="mid")
        ax1.set_xlabel("level p")
        ax1.set_ylabel("time-scale exponent")
        ax1.set_title("separation of time scales")
        ax1.set_xticks(ps)

        for p in range(1, tree.q + 2):
            lv = tree.level(p)
            offset = 0
            for j, cls in enumerate(lv.classes):
                ax2.barh(p, len(cls), left=offset, height=0.6, edgecolor="k")
                ax2.text(offset + len(cls) / 2, p, str(j + 1), ha="center", va="center")
                offset += len(cls)
            if lv.transient:
                ax2.barh(p, len(lv.transient), left=offset, height=0.6, color="0.85", edgecolor="k")
        ax2.set_xlabel("states")
        ax2.set_ylabel("level p")
        ax2.set_title("partitions (grey: transient)")
        ax2.set_yticks(range(1, tree.q + 2))
        fig.tight_layout()
    return fig


def rate_figure(report) -> "plt.Figure":
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        names = [name for name, _ in report.decomposition]
        values = [value for _, value in report.decomposition]
        ax.bar(range(len(values)), values)
        ax.set_xticks(range(len(values)))
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel("contribution")
        ax.set_title(f"rate value {report.value:.6g} ({report.method})")
        fig.tight_layout()
    return fig


def measure_figure(weights, labels, reference=None) -> "plt.Figure":
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        x = np.arange(len(labels))
        width = 0.4 if reference is not None else 0.7
        ax.bar(x - (width / 2 if reference is not None else 0), weights, width, label="empirical")
        if reference is not None:
            ax.bar(x + width / 2, reference, width, label="stationary")
            ax.legend()
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
        ax.set_ylabel("mass")
        ax.set_title("occupation measure")
        fig.tight_layout()
    return fig


def expansion_figure(report: dict) -> "plt.Figure":
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        names, values = [], []
        for p, v in report["level_values"].items():
            names.append(f"level {p}")
            values.append(np.nan if v == "inf" else max(float(v), 1e-300))
        ax.bar(range(len(values)), values)
        ax.set_yscale("log")
        ax.set_xticks(range(len(values)))
        ax.set_xticklabels(names)
        ax.set_ylabel("level functional value")
        ratio = report["honest"].get("ratio")
        ax.set_title(
            f"expansion at beta={report['beta']:g}; honest ratio "
            f"{'n/a' if ratio is None else format(ratio, '.4g')}"
        )
        fig.tight_layout()
    return fig
