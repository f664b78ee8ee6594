"""Error metrics, aggregation over repeats, and report emission."""
import csv
import json
from dataclasses import dataclass

import numpy as np

from .spectral import mae  # noqa: F401  (re-exported alongside rmse)


def rmse(x_g: np.ndarray, x_hat: np.ndarray) -> float:
    """Root mean squared error sqrt((1/N) sum (x_g - x_hat)^2)."""
    x_g = np.asarray(x_g, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x_g.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x_g.shape} vs {x_hat.shape}")
    return float(np.sqrt(np.mean((x_g - x_hat) ** 2)))


def aggregate(values) -> tuple:
    """Mean and unbiased sample std over repeats (std 0 for one repeat)."""
    values = np.asarray(list(values), dtype=np.float64)
    if values.size < 1:
        raise ValueError("at least one repeat is required")
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return mean, std


@dataclass(frozen=True, eq=False)
class RunReport:
    """Per-step error traces plus aggregates over repeats for one run.

    ``per_t_*`` vectors span the test horizon (averaged across repeats
    when there is more than one). ``method_aggregates`` holds the
    (mean, std) pairs for the primary method and any baselines run in the
    same harness; the ``*_missing`` aggregates restrict the error to
    unobserved nodes.
    """
    method: str
    per_t_mae: np.ndarray
    per_t_rmse: np.ndarray
    aggregate_mae: tuple
    aggregate_rmse: tuple
    aggregate_mae_missing: tuple
    aggregate_rmse_missing: tuple
    method_aggregates: dict
    config_snapshot: dict
    transcript_path: str | None = None
    token_estimate: int = 0

    def __post_init__(self):
        per_t_mae = np.asarray(self.per_t_mae, dtype=np.float64)
        per_t_rmse = np.asarray(self.per_t_rmse, dtype=np.float64)
        if per_t_mae.shape != per_t_rmse.shape or per_t_mae.ndim != 1:
            raise ValueError("per-step metric vectors must be 1-D and equal length")
        for pair in (
            self.aggregate_mae,
            self.aggregate_rmse,
            self.aggregate_mae_missing,
            self.aggregate_rmse_missing,
        ):
            if not all(np.isfinite(v) for v in pair):
                raise ValueError("aggregates must be finite")
        object.__setattr__(self, "per_t_mae", per_t_mae)
        object.__setattr__(self, "per_t_rmse", per_t_rmse)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "per_t_mae": [float(v) for v in self.per_t_mae],
            "per_t_rmse": [float(v) for v in self.per_t_rmse],
            "aggregate_mae": list(self.aggregate_mae),
            "aggregate_rmse": list(self.aggregate_rmse),
            "aggregate_mae_missing": list(self.aggregate_mae_missing),
            "aggregate_rmse_missing": list(self.aggregate_rmse_missing),
            "method_aggregates": {
                name: {metric: list(pair) for metric, pair in metrics.items()}
                for name, metrics in self.method_aggregates.items()
            },
            "config_snapshot": self.config_snapshot,
            "transcript_path": self.transcript_path,
            "token_estimate": self.token_estimate,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RunReport":
        return cls(
            method=payload["method"],
            per_t_mae=np.asarray(payload["per_t_mae"]),
            per_t_rmse=np.asarray(payload["per_t_rmse"]),
            aggregate_mae=tuple(payload["aggregate_mae"]),
            aggregate_rmse=tuple(payload["aggregate_rmse"]),
            aggregate_mae_missing=tuple(payload["aggregate_mae_missing"]),
            aggregate_rmse_missing=tuple(payload["aggregate_rmse_missing"]),
            method_aggregates={
                name: {metric: tuple(pair) for metric, pair in metrics.items()}
                for name, metrics in payload["method_aggregates"].items()
            },
            config_snapshot=payload["config_snapshot"],
            transcript_path=payload.get("transcript_path"),
            token_estimate=int(payload.get("token_estimate", 0)),
        )


def format_aggregate(pair) -> str:
    """Render (mean, std) the way result tables do, e.g. ``4.05 ± 1.6e-01``."""
    mean, std = pair
    return f"{mean:.2f} ± {std:.1e}"


def _noise_label(report: RunReport) -> str:
    obs = report.config_snapshot.get("observation", {})
    return str(obs.get("noise_variance", "?"))


def render_markdown_table(reports, metric: str = "rmse") -> str:
    """Methods-by-noise-variance table over one or more reports.

    Rows are methods, columns are the noise variances found in the
    reports' config snapshots; cells are ``mean ± std``.
    """
    if metric not in ("rmse", "mae"):
        raise ValueError("metric must be 'rmse' or 'mae'")
    variances = sorted({_noise_label(r) for r in reports}, key=lambda s: (len(s), s))
    methods = []
    cells = {}
    for report in reports:
        label = _noise_label(report)
        for name, metrics in report.method_aggregates.items():
            if name not in methods:
                methods.append(name)
            if metric in metrics:
                cells[(name, label)] = format_aggregate(metrics[metric])
    lines = [
        f"| Method ({metric.upper()}) | " + " | ".join(variances) + " |",
        "|" + "---|" * (len(variances) + 1),
    ]
    for name in methods:
        row = [cells.get((name, v), "-") for v in variances]
        lines.append(f"| {name} | " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, fmt: str, path) -> None:
    """Write a report file: full JSON, per-step CSV, or a markdown table."""
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "mae", "rmse"])
            for k, (m, r) in enumerate(zip(report.per_t_mae, report.per_t_rmse)):
                writer.writerow([k, repr(float(m)), repr(float(r))])
    elif fmt == "markdown-table":
        text = render_markdown_table([report], "rmse") + "\n" + render_markdown_table([report], "mae")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
