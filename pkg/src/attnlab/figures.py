"""Figure rendering for experiment reports.

Each renderer consumes the same payload that went into the CSV/JSON outputs
and writes a PNG next to them. Figures are a convenience layer: the
delimited files remain the canonical, byte-compared artifacts.
"""

from __future__ import annotations

from pathlib import Path

_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _plt():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    plt.rcParams.update(_STYLE)
    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    _plt().close(fig)
    return path


def render_collision_histogram(path, reports: dict) -> Path:
    """Grouped bars of queries per collision-count bin, one group per variant."""
    plt = _plt()
    fig, ax = plt.subplots()
    variants = list(reports)
    n_var = max(len(variants), 1)
    width = 0.8 / n_var
    labels = None
    for vi, name in enumerate(variants):
        rep = reports[name]
        bins = rep["histogram_bins"]
        labels = [f"{lo}" if lo == hi else f"{lo}-{hi}" for lo, hi in bins]
        xs = [i + vi * width for i in range(len(bins))]
        ax.bar(xs, rep["histogram_counts"], width=width, label=name)
    if labels:
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(labels))])
        ax.set_xticklabels(labels)
    ax.set_xlabel("collisions per query")
    ax.set_ylabel("queries")
    ax.set_yscale("symlog")
    ax.legend()
    return _save(fig, path)


def render_local_mass(path, rows: list[dict], baseline: float) -> Path:
    """Local-mass-by-layer lines per score source, with the uniform baseline."""
    plt = _plt()
    fig, ax = plt.subplots()
    sources = sorted({r["source"] for r in rows})
    for src in sources:
        pts = [(r["layer"], r["local_mass"]) for r in rows if r["source"] == src]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=src)
    ax.axhline(baseline, color="k", linestyle="--", linewidth=1,
               label=f"uniform baseline {baseline:.4f}")
    ax.set_xlabel("layer")
    ax.set_ylabel("mean 3x3 neighborhood mass")
    ax.legend()
    return _save(fig, path)


def render_mask_accuracy(path, rows: list[dict]) -> Path:
    """Mean accuracy per mask spec with per-seed scatter."""
    plt = _plt()
    fig, ax = plt.subplots()
    specs = []
    for r in rows:
        if r["mask"] not in specs:
            specs.append(r["mask"])
    means = []
    for i, spec in enumerate(specs):
        accs = [r["accuracy"] for r in rows if r["mask"] == spec]
        means.append(sum(accs) / len(accs))
        ax.plot([i] * len(accs), accs, "o", color="gray", markersize=3)
    ax.bar(range(len(specs)), means, alpha=0.6)
    ax.set_xticks(range(len(specs)))
    ax.set_xticklabels(specs, rotation=30)
    ax.set_ylabel("accuracy")
    return _save(fig, path)


def render_training_curves(path, curves: dict) -> Path:
    """Loss curves per (variant, seed)."""
    plt = _plt()
    fig, ax = plt.subplots()
    for label, pts in curves.items():
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label, linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("training loss")
    ax.set_yscale("log")
    if len(curves) <= 12:
        ax.legend(fontsize=7)
    return _save(fig, path)


def render_scaling(path, records: list[dict], fits: list[dict]) -> Path:
    """Log-log runtime vs N with fitted power laws."""
    plt = _plt()
    fig, ax = plt.subplots()
    variants = sorted({r["variant"] for r in records})
    for var in variants:
        pts = [(r["n"], r["median_seconds"]) for r in records
               if r["variant"] == var and not r.get("skipped")]
        pts.sort()
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-", label=var)
    for fit in fits:
        ax.plot([], [], " ",
                label=f"{fit['variant']}: slope {fit['slope']:.2f} "
                      f"(r2 {fit['r_squared']:.3f})")
    ax.set_xlabel("sequence length N")
    ax.set_ylabel("median seconds")
    ax.legend(fontsize=7)
    return _save(fig, path)


def render_window_sweep(path, records: list[dict]) -> Path:
    """Runtime vs window side at fixed N."""
    plt = _plt()
    fig, ax = plt.subplots()
    variants = sorted({r["variant"] for r in records})
    for var in variants:
        pts = [(r["window"], r["median_seconds"]) for r in records
               if r["variant"] == var]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=var)
    ax.set_yscale("log")
    ax.set_xlabel("window side")
    ax.set_ylabel("median seconds")
    ax.legend()
    return _save(fig, path)
