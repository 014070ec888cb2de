"""Delimited report files, training traces, and their rendered figures.

All text reports are UTF-8, tab-separated with a header row and LF line
endings. Machine-facing values are written with repr(), which round-trips
float64 exactly, so identical runs produce byte-identical files. Figures are
rendered next to the delimited output they illustrate.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import ParseError
from .interactions import eligible_users
from .metrics import ndcg_at, rank_items

DEFAULT_ROWS = (("map", 10), ("ndcg", 10), ("recall", 50), ("ndcg", 50))
_EXTRA_METRIC_ORDER = ("precision", "recall", "ndcg", "map")

_FIG_DPI = 110


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_columns(val_k: int):
    return ("epoch", "hinge_loss_mean", "drm_loss_mean", "cov_loss",
            f"recall@{val_k}_val", "ndcg@10_val")


def write_trace(path, records, val_k: int) -> None:
    cols = trace_columns(val_k)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(cols) + "\n")
        for rec in records:
            fh.write("\t".join([
                str(rec.epoch), _fmt(rec.hinge_loss_mean),
                _fmt(rec.drm_loss_mean), _fmt(rec.cov_loss),
                _fmt(rec.val_recall), _fmt(rec.val_ndcg)]) + "\n")


def read_trace(path):
    """Return (column names, list of per-epoch dicts of floats)."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("trace file is empty", path=path)
    cols = lines[0].split("\t")
    rows = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != len(cols):
            raise ParseError("trace row width does not match header",
                             path=path, line=lineno)
        try:
            rows.append({c: float(v) for c, v in zip(cols, parts)})
        except ValueError as exc:
            raise ParseError(f"bad numeric value: {exc}", path=path,
                             line=lineno) from exc
    return cols, rows


def report_rows(cutoffs):
    """Default metric rows plus all four metrics at any non-default cutoff."""
    rows = list(DEFAULT_ROWS)
    for k in sorted(set(cutoffs) - {10, 50}):
        rows.extend((m, k) for m in _EXTRA_METRIC_ORDER)
    return rows


def write_eval_report(out_dir, report, rows, stem: str = "metrics") -> None:
    """One evaluation: metrics.tsv (machine), metrics.txt (human), plus a
    bar-chart figure of the means."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / f"{stem}.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric\tk\tmean\tstd\tn_users\n")
        for metric, k in rows:
            v = report.get(metric, k)
            fh.write(f"{metric}\t{k}\t{_fmt(v.mean)}\t{_fmt(v.std)}"
                     f"\t{report.n_users}\n")
    with open(out_dir / f"{stem}.txt", "w", encoding="utf-8", newline="\n") as fh:
        for metric, k in rows:
            v = report.get(metric, k)
            fh.write(f"{metric}@{k} = {v.mean:.6f} ± {v.std:.6f}, "
                     f"n_users={report.n_users}\n")
    labels = [f"{m}@{k}" for m, k in rows]
    means = [report.get(m, k).mean for m, k in rows]
    stds = [report.get(m, k).std for m, k in rows]
    fig, ax = plt.subplots(figsize=(1.2 + 0.9 * len(rows), 3.2), dpi=_FIG_DPI)
    ax.bar(range(len(rows)), means, yerr=stds, capsize=3, color="#4878a8")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("mean over users")
    ax.set_title(f"ranking metrics ({report.n_users} users)")
    fig.tight_layout()
    fig.savefig(out_dir / f"{stem}.png")
    plt.close(fig)


def write_run_report(out_dir, rows, per_run, fingerprint: str) -> None:
    """Aggregate of repeated runs.

    Args:
        rows: list of (metric, k) report rows.
        per_run: list of run dicts with keys "seed", "status" and, for
            finished runs, "values" mapping (metric, k) -> float and
            "n_users".
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    done = [r for r in per_run if r["status"] == "ok"]
    with open(out_dir / "report.tsv", "w", encoding="utf-8", newline="\n") as fh:
        run_cols = "\t".join(f"run{idx}" for idx in range(len(per_run)))
        fh.write(f"metric\tk\tmean\tstd\tn_runs\t{run_cols}\n")
        for metric, k in rows:
            vals = [r["values"][(metric, k)] for r in done]
            mean = float(np.mean(vals)) if vals else float("nan")
            std = float(np.std(vals)) if vals else float("nan")
            cells = [r["values"][(metric, k)] if r["status"] == "ok" else None
                     for r in per_run]
            cell_text = "\t".join("NA" if c is None else _fmt(c) for c in cells)
            fh.write(f"{metric}\t{k}\t{_fmt(mean)}\t{_fmt(std)}\t{len(done)}"
                     f"\t{cell_text}\n")
    with open(out_dir / "report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"config_fingerprint = {fingerprint}\n")
        fh.write(f"runs = {len(per_run)}, finished = {len(done)}\n")
        for r in per_run:
            fh.write(f"  seed {r['seed']}: {r['status']}\n")
        for metric, k in rows:
            vals = [r["values"][(metric, k)] for r in done]
            if vals:
                fh.write(f"{metric}@{k} = {np.mean(vals):.6f} "
                         f"± {np.std(vals):.6f}, n_runs={len(done)}\n")
            else:
                fh.write(f"{metric}@{k} = NA (no finished run)\n")


def plot_training_curves(out_dir, traces, val_k: int) -> None:
    """Loss and validation-metric curves for every run on shared axes."""
    out_dir = Path(out_dir)
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.2), dpi=_FIG_DPI)
    panels = (("hinge_loss_mean", "hinge loss"),
              ("drm_loss_mean", "ranking loss"),
              (f"recall@{val_k}_val", f"validation recall@{val_k}"))
    for ax, (col, label) in zip(axes, panels):
        for idx, (_cols, rows) in enumerate(traces):
            xs = [r["epoch"] for r in rows]
            ys = [r[col] for r in rows]
            ax.plot(xs, ys, label=f"run{idx}", linewidth=1.2)
        ax.set_xlabel("epoch")
        ax.set_title(label)
        if not traces or not traces[0][1]:
            ax.text(0.5, 0.5, "no epochs", ha="center", va="center",
                    transform=ax.transAxes)
    if traces and traces[0][1]:
        axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / "training_curves.png")
    plt.close(fig)


def pearson(xs, ys):
    """Pearson correlation, or None when either side is constant."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 2:
        return None
    sx = float(xs.std())
    sy = float(ys.std())
    if sx == 0.0 or sy == 0.0:
        return None
    cov = float(((xs - xs.mean()) * (ys - ys.mean())).mean())
    return cov / (sx * sy)


def correlation_matrix(traces, skip_epochs: int = 2):
    """Mean per-trace Pearson correlation of every loss column against every
    validation-metric column, skipping the first `skip_epochs` rows.

    Returns (loss_cols, metric_cols, matrix) where matrix entries are floats
    or None when the correlation is undefined in every trace.
    """
    if not traces:
        raise ValueError("need at least one trace")
    cols = traces[0][0]
    for other_cols, _ in traces[1:]:
        if list(other_cols) != list(cols):
            raise ValueError("traces do not share a column schema")
    metric_cols = [c for c in cols if c.endswith("_val")]
    loss_cols = [c for c in cols if c != "epoch" and not c.endswith("_val")]
    matrix = {}
    for lc in loss_cols:
        for mc in metric_cols:
            vals = []
            for _, rows in traces:
                usable = rows[skip_epochs:]
                if len(usable) < 3:
                    raise ValueError(
                        "need at least 3 usable epochs after the skip")
                r = pearson([row[lc] for row in usable],
                            [row[mc] for row in usable])
                if r is not None:
                    vals.append(r)
            matrix[(lc, mc)] = float(np.mean(vals)) if vals else None
    return loss_cols, metric_cols, matrix


def write_correlation_report(out_dir, traces, skip_epochs: int = 2) -> None:
    """correlation.tsv (losses x metrics) plus loss-vs-metric scatter plots."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    loss_cols, metric_cols, matrix = correlation_matrix(traces, skip_epochs)
    with open(out_dir / "correlation.tsv", "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("loss\t" + "\t".join(metric_cols) + "\n")
        for lc in loss_cols:
            cells = []
            for mc in metric_cols:
                r = matrix[(lc, mc)]
                cells.append("undefined" if r is None else _fmt(r))
            fh.write(lc + "\t" + "\t".join(cells) + "\n")
    fig, axes = plt.subplots(len(loss_cols), len(metric_cols),
                             figsize=(3.4 * len(metric_cols),
                                      2.8 * len(loss_cols)),
                             dpi=_FIG_DPI, squeeze=False)
    for li, lc in enumerate(loss_cols):
        for mi, mc in enumerate(metric_cols):
            ax = axes[li][mi]
            for _, rows in traces:
                usable = rows[skip_epochs:]
                ax.scatter([row[lc] for row in usable],
                           [row[mc] for row in usable], s=8, alpha=0.6)
            r = matrix[(lc, mc)]
            title = "undefined" if r is None else f"r = {r:.3f}"
            ax.set_title(f"{lc} vs {mc} ({title})", fontsize=8)
            ax.set_xlabel(lc, fontsize=7)
            ax.set_ylabel(mc, fontsize=7)
            ax.tick_params(labelsize=6)
    fig.tight_layout()
    fig.savefig(out_dir / "correlation_scatter.png")
    plt.close(fig)


def group_buckets(boundaries):
    """Half-open buckets from inner boundaries: (-inf, b1), [b1, b2), ...,
    [bm, inf)."""
    bounds = sorted(set(int(b) for b in boundaries))
    if not bounds:
        raise ValueError("need at least one boundary")
    edges = [None] + bounds + [None]
    return [(edges[i], edges[i + 1]) for i in range(len(edges) - 1)]


def _bucket_label(lo, hi):
    if lo is None:
        return f"<{hi}"
    if hi is None:
        return f">={lo}"
    return f"[{lo},{hi})"


def group_ndcg(model, train, test, boundaries, min_train: int = 5, k: int = 10):
    """Mean NDCG@k per train-interaction-count bucket over eligible users."""
    users = eligible_users(train, test, min_train)
    buckets = group_buckets(boundaries)
    grouped = [[] for _ in buckets]
    for u in users:
        count = train.items_of(int(u)).size
        ranked = rank_items(model.score_all(int(u)), exclude=train.items_of(int(u)))
        value = ndcg_at(ranked, test.items_of(int(u)), k)
        for idx, (lo, hi) in enumerate(buckets):
            if (lo is None or count >= lo) and (hi is None or count < hi):
                grouped[idx].append(value)
                break
    out = []
    for (lo, hi), vals in zip(buckets, grouped):
        mean = float(np.mean(vals)) if vals else None
        out.append({"label": _bucket_label(lo, hi), "lo": lo, "hi": hi,
                    "n_users": len(vals), "ndcg_mean": mean})
    return out


def write_group_report(out_dir, groups, k: int = 10) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "groups.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"bucket\tn_users\tndcg@{k}_mean\n")
        for g in groups:
            val = "NA" if g["ndcg_mean"] is None else _fmt(g["ndcg_mean"])
            fh.write(f"{g['label']}\t{g['n_users']}\t{val}\n")
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(groups), 3.2), dpi=_FIG_DPI)
    xs = range(len(groups))
    ax.bar(xs, [g["ndcg_mean"] or 0.0 for g in groups], color="#6a9a58")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([f"{g['label']}\n({g['n_users']})" for g in groups],
                       fontsize=8)
    ax.set_xlabel("training interactions per user (bucket size)")
    ax.set_ylabel(f"mean ndcg@{k}")
    fig.tight_layout()
    fig.savefig(out_dir / "group_ndcg.png")
    plt.close(fig)
