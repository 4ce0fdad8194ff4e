"""Report figures for fitted models.

Two displays: the per-model panel combining a covariate histogram (overall
and per MAP cluster) with the response scatter and per-cluster regression
lines, and the selection-criteria traces (BIC/ICL against G) across the
whole sweep.  ``cwplot_payload`` assembles the underlying numbers in a
JSON-serializable form so the same data can be exported for external
plotting tools.
"""

from __future__ import annotations

import numpy as np
import matplotlib.pyplot as plt

from .errors import IndexOutOfRange
from .selection import map_classify
from .types import Dataset, FitResult

_CLUSTER_CMAP = "tab10"


def sturges_bin_edges(x: np.ndarray) -> np.ndarray:
    """Histogram bin edges over the range of ``x`` with ceil(log2 N)+1 bins."""
    x = np.asarray(x, dtype=float).ravel()
    k = int(np.ceil(np.log2(x.size))) + 1 if x.size > 1 else 1
    return np.histogram_bin_edges(x, bins=max(k, 1))


def cwplot_payload(fit: FitResult, data: Dataset, covariate_index: int) -> dict:
    """All numbers behind the per-model display, keyed and documented.

    Contains the Sturges histogram of the chosen covariate (overall and per
    MAP cluster), the per-cluster regression line restricted to that
    covariate, and one (x, y, MAP label, max posterior) record per
    observation.  Parameter values are passed through untouched.
    """
    if not 0 <= covariate_index < data.d:
        raise IndexOutOfRange(
            f"covariate_index {covariate_index} outside [0, {data.d})"
        )
    x = data.X[:, covariate_index]
    labels = map_classify(fit.latent.tau)
    tau_max = fit.latent.tau.max(axis=1)

    edges = sturges_bin_edges(x)
    overall, _ = np.histogram(x, bins=edges)
    per_cluster = {}
    for g in range(1, fit.G + 1):
        counts, _ = np.histogram(x[labels == g], bins=edges)
        per_cluster[str(g)] = counts.tolist()

    lines = []
    for g in range(fit.G):
        ci = fit.params.cond_idx(g)
        lines.append({
            "cluster": g + 1,
            "intercept": float(fit.params.beta0[ci]),
            "slope": float(fit.params.beta1[ci][covariate_index]),
        })

    return {
        "header": {
            "model": "canonical model name",
            "G": "number of mixture components",
            "covariate_index": "0-based column of X shown on the x axis",
            "histogram": "Sturges-rule bin edges (data units of the covariate) "
                         "with counts overall and per 1-based MAP cluster",
            "lines": "per-cluster regression intercept/slope restricted to "
                     "the chosen covariate (response units per covariate unit)",
            "points": "per observation: covariate value x, response y, "
                      "1-based MAP cluster label, posterior of that cluster",
        },
        "model": fit.spec.name,
        "G": fit.G,
        "n": data.n,
        "covariate_index": covariate_index,
        "histogram": {
            "edges": edges.tolist(),
            "overall": overall.tolist(),
            "per_cluster": per_cluster,
        },
        "lines": lines,
        "points": [
            {
                "x": float(xi),
                "y": float(yi),
                "map": int(li),
                "tau_max": float(ti),
            }
            for xi, yi, li, ti in zip(x, data.y, labels, tau_max)
        ],
    }


def cwplot_figure(fit: FitResult, data: Dataset, covariate_index: int = 0):
    """Histogram-over-scatter panel for one fitted model."""
    payload = cwplot_payload(fit, data, covariate_index)
    hist = payload["histogram"]
    edges = np.asarray(hist["edges"])
    cmap = plt.get_cmap(_CLUSTER_CMAP)

    fig, (ax_hist, ax_scatter) = plt.subplots(
        2, 1, sharex=True, figsize=(7.0, 7.0),
        gridspec_kw={"height_ratios": [1.0, 2.4]},
    )

    bottom = np.zeros(len(hist["overall"]))
    for g in range(1, payload["G"] + 1):
        counts = np.asarray(hist["per_cluster"][str(g)], dtype=float)
        ax_hist.bar(
            edges[:-1], counts, width=np.diff(edges), bottom=bottom,
            align="edge", color=cmap((g - 1) % 10), alpha=0.65,
            edgecolor="white", linewidth=0.3,
        )
        bottom += counts
    ax_hist.stairs(hist["overall"], edges, color="black", linewidth=1.0)
    ax_hist.set_ylabel("count")

    pts = payload["points"]
    px = np.array([p["x"] for p in pts])
    py = np.array([p["y"] for p in pts])
    plab = np.array([p["map"] for p in pts])
    for g in range(1, payload["G"] + 1):
        sel = plab == g
        color = cmap((g - 1) % 10)
        ax_scatter.scatter(
            px[sel], py[sel], s=12, color=color, alpha=0.7,
            label=f"cluster {g}",
        )
        line = payload["lines"][g - 1]
        span = px[sel] if np.any(sel) else px
        xs = np.linspace(span.min(), span.max(), 2)
        ax_scatter.plot(
            xs, line["intercept"] + line["slope"] * xs,
            color=color, linewidth=1.8,
        )
    ax_scatter.set_xlabel(f"covariate {covariate_index}")
    ax_scatter.set_ylabel("response")
    ax_scatter.legend(frameon=False, fontsize=8)
    fig.suptitle(f"{payload['model']}, G={payload['G']}")
    fig.tight_layout()
    return fig


def save_cwplot(
    fit: FitResult, data: Dataset, covariate_index: int, path, dpi: int = 150
) -> None:
    fig = cwplot_figure(fit, data, covariate_index)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)


def criteria_figure(records):
    """BIC and ICL against G, one trace per model, best points starred."""
    fig, axes = plt.subplots(1, 2, figsize=(11.0, 4.2), sharex=True)
    model_names = sorted({r.model for r in records})
    cmap = plt.get_cmap("tab20")
    for ax, crit in zip(axes, ("bic", "icl")):
        for i, name in enumerate(model_names):
            rows = sorted(
                ((r.G, getattr(r, crit)) for r in records if r.model == name)
            )
            ax.plot(
                [g for g, _ in rows], [v for _, v in rows],
                marker="o", markersize=3.5, linewidth=1.1,
                color=cmap(i % 20), label=name,
            )
        best = max(records, key=lambda r: getattr(r, crit))
        ax.scatter(
            [best.G], [getattr(best, crit)], marker="*", s=140,
            color="black", zorder=5,
        )
        ax.set_title(crit.upper())
        ax.set_xlabel("G")
        ax.xaxis.get_major_locator().set_params(integer=True)
    axes[0].set_ylabel("criterion value")
    axes[1].legend(fontsize=7, ncol=2, frameon=False)
    fig.tight_layout()
    return fig


def save_criteria(records, path, dpi: int = 150) -> None:
    fig = criteria_figure(records)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
