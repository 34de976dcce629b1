"""Figure rendering for sweep output.

Everything here draws from the frontier rows that `sweep_gamma2`
produces, so the plots can be rebuilt from the CSV alone.  The Agg
backend is forced because pricing runs are headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import FrontierRow

STATIC_SCHEMES = ("cma", "hist")

_MARKERS = ["o", "s", "^", "D", "v", "P", "X"]


def _by_scheme(rows: list[FrontierRow]) -> dict[str, list[FrontierRow]]:
    grouped: dict[str, list[FrontierRow]] = {}
    for row in rows:
        if row.error:
            continue
        grouped.setdefault(row.scheme, []).append(row)
    for scheme_rows in grouped.values():
        scheme_rows.sort(key=lambda r: r.gamma2)
    return grouped


def render_frontier(rows: list[FrontierRow], out_dir,
                    static=STATIC_SCHEMES) -> list[Path]:
    """Draw the surplus/insolvency trade-off plots; returns written paths.

    Swept schemes appear as curves over the band-width grid; schemes in
    `static` do not depend on it and are drawn as dashed reference
    lines.  Cells that failed to price are left out.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grouped = _by_scheme(rows)
    if not grouped:
        raise ValueError("no successful frontier rows to plot")
    written = []
    static = set(static)

    fig, ax = plt.subplots(figsize=(7, 5))
    for i, (scheme, scheme_rows) in enumerate(sorted(grouped.items())):
        xs = [r.insolvent_count for r in scheme_rows]
        ys = [r.surplus for r in scheme_rows]
        if scheme in static:
            ax.scatter(xs[:1], ys[:1], marker="*", s=140, label=scheme,
                       zorder=3)
        else:
            ax.plot(xs, ys, marker=_MARKERS[i % len(_MARKERS)],
                    label=scheme)
            for r in scheme_rows:
                ax.annotate(f"{r.gamma2:g}",
                            (r.insolvent_count, r.surplus),
                            textcoords="offset points", xytext=(4, 4),
                            fontsize=8)
    ax.set_xlabel("states ever insolvent")
    ax.set_ylabel("aggregate surplus")
    ax.set_title("Solvency/surplus frontier")
    ax.legend()
    ax.grid(True, alpha=0.3)
    frontier_path = out_dir / "frontier.png"
    fig.savefig(frontier_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(frontier_path)

    fig, (ax_s, ax_i) = plt.subplots(1, 2, figsize=(11, 4.5))
    for i, (scheme, scheme_rows) in enumerate(sorted(grouped.items())):
        gs = [r.gamma2 for r in scheme_rows]
        if scheme in static:
            ax_s.axhline(scheme_rows[0].surplus, linestyle="--",
                         color=f"C{i}", label=scheme)
            ax_i.axhline(scheme_rows[0].insolvent_count, linestyle="--",
                         color=f"C{i}", label=scheme)
        else:
            ax_s.plot(gs, [r.surplus for r in scheme_rows],
                      marker=_MARKERS[i % len(_MARKERS)], color=f"C{i}",
                      label=scheme)
            ax_i.plot(gs, [r.insolvent_count for r in scheme_rows],
                      marker=_MARKERS[i % len(_MARKERS)], color=f"C{i}",
                      label=scheme)
    ax_s.set_xlabel("band width multiplier")
    ax_s.set_ylabel("aggregate surplus")
    ax_i.set_xlabel("band width multiplier")
    ax_i.set_ylabel("states ever insolvent")
    for ax in (ax_s, ax_i):
        ax.legend()
        ax.grid(True, alpha=0.3)
    fig.suptitle("Backtest outcomes across band widths")
    curves_path = out_dir / "sweep_curves.png"
    fig.savefig(curves_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(curves_path)
    return written
