"""SVG charts of session outcomes and the stride/cadence fit."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..slc_model import SlcRel, TargetSpec, write_training_csv  # noqa: E402
from .metrics import SessionMetrics, write_metrics_csv  # noqa: E402


def _ensure_dir(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc


def _bar(path: Path, labels: list[str], values: list[float], ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(range(len(values)), values, color="0.45")
    ax.set_xticks(range(len(values)), labels, rotation=15)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.axhline(0.0, color="k", lw=0.6)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_plots(
    metrics: SessionMetrics | None,
    out_dir: str | Path,
    rel: SlcRel | None = None,
    targets: TargetSpec | None = None,
    training: Sequence[tuple[float, float, float]] = (),
) -> list[Path]:
    """Write per-condition charts, the SLC scatter and their CSVs. Returns chart paths."""
    out = Path(out_dir)
    _ensure_dir(out)
    charts: list[Path] = []
    write_metrics_csv(out / "metrics.csv", metrics)
    conds = list(metrics.conditions) if metrics is not None else []
    if conds:
        conds.sort(key=lambda c: (c.strategy, c.secondary_task))
        labels = [c.label() for c in conds]
        for name, attr, unit in (
            ("delta_stride", "delta_stride", "stride change vs baseline (m)"),
            ("percent_on", "percent_on", "cue on-time (%)"),
        ):
            path = out / f"{name}.svg"
            _bar(path, labels, [getattr(c, attr) for c in conds], unit, name.replace("_", " "))
            charts.append(path)

    if rel is not None:
        write_training_csv(out / "slc_points.csv", training)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if training:
            pts = np.array([(c, l) for c, l, _ in training])
            ax.scatter(pts[:, 0], pts[:, 1], s=8, color="0.5", label="training strides")
        lo, hi = rel.domain
        if targets is not None:
            lo = min(lo, targets.f_target, targets.f_baseline)
            hi = max(hi, targets.f_target, targets.f_baseline)
        f = np.linspace(lo, hi, 200)
        ax.plot(f, rel(f), color="k", lw=1.2, label=f"fit (degree {rel.degree})")
        if targets is not None:
            (out / "slc_target.csv").write_text(
                f"#gaitloop-v1\nf_baseline,f_target,l_target\n"
                f"{targets.f_baseline!r},{targets.f_target!r},{targets.l_target!r}\n"
            )
            ax.plot([targets.f_target], [targets.l_target], marker="*", ms=12, color="C3", ls="", label="target")
            ax.axvline(targets.f_baseline, color="0.6", ls="--", lw=0.8, label="baseline cadence")
        ax.set_xlabel("cadence (Hz)")
        ax.set_ylabel("stride length (m)")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out / "slc.svg"
        fig.savefig(path, format="svg")
        plt.close(fig)
        charts.append(path)
    return charts
