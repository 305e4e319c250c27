"""Matplotlib renderings of figure CSV rows."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLES = ("-", "--", ":", "-.")


def _finite(v) -> bool:
    return v is not None and isinstance(v, (int, float)) and math.isfinite(v)


def _groups(rows, keys):
    out = {}
    for r in rows:
        out.setdefault(tuple(r.get(k) for k in keys), []).append(r)
    return out


def plot_rows(rows, hint, path, title: str = "", figsize=(7.0, 4.5)):
    """One line per group and y column; ``sim`` columns become markers with error bars."""
    fig, ax = plt.subplots(figsize=figsize)
    groups = _groups(rows, hint.group)
    cmap = plt.get_cmap("tab10" if len(groups) <= 10 else "tab20")
    for gi, (key, grp) in enumerate(groups.items()):
        color = cmap(gi % cmap.N)
        label = ", ".join(f"{k}={v}" for k, v in zip(hint.group, key))
        grp = sorted(grp, key=lambda r: r[hint.x])
        for yi, y in enumerate(hint.ys):
            pts = [(r[hint.x], r.get(y)) for r in grp if _finite(r.get(y))]
            if hint.logy:
                pts = [p for p in pts if p[1] > 0]
            if not pts:
                continue
            xs, ys = zip(*pts)
            name = f"{label} {y}".strip() if len(hint.ys) > 1 else (label or y)
            if y == "sim":
                err = [r.get("sim_se", 0.0) for r in grp if _finite(r.get(y))
                       and (not hint.logy or r[y] > 0)]
                ax.errorbar(xs, ys, yerr=err, fmt="^", ms=4, color=color, label=name)
            else:
                ax.plot(xs, ys, STYLES[yi % len(STYLES)], color=color, label=name)
    if hint.logy:
        ax.set_yscale("log")
    if hint.logx:
        ax.set_xscale("log")
    ax.set_xlabel(hint.xlabel or hint.x)
    ax.set_ylabel(hint.ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    handles, _ = ax.get_legend_handles_labels()
    if handles:
        ax.legend(fontsize=6, ncol=2 if len(handles) > 8 else 1, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
