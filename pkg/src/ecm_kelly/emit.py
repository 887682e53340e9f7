"""Writers for result tables, histogram bins and run manifests.

Floats are written with 17 significant digits so that reading a file back
reproduces every value exactly. Column orders are fixed:

* sweep rows: ``harness.ROW_COLUMNS``
* comparison tables: one row per metric (``metrics.METRIC_LABELS``), one
  column per strategy
* histogram bins: ``strategy, bin_lo, bin_hi, count``; markers:
  ``strategy, mean, median, negative_mean, positive_mean, included``
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import re
from importlib import metadata

from .harness import ROW_COLUMNS, SweepResult
from .metrics import METRIC_FIELDS, METRIC_LABELS


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".17g")
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def _write(path: str, header: list, rows) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_rows(result: SweepResult, path: str) -> str:
    """One row per grid cell and strategy variant."""
    return _write(path, ROW_COLUMNS, ([r[c] for c in ROW_COLUMNS] for r in result.rows()))


def table_rows(result: SweepResult, grid_value) -> tuple[list, list]:
    cells = [c for c in result.cells if c.grid_value == grid_value and c.report is not None]
    if not cells:
        raise ValueError(f"no metric reports at {grid_value}")
    header = ["metric"] + [c.strategy for c in cells]
    rows = [[METRIC_LABELS[f]] + [getattr(c.report, f) for c in cells] for f in METRIC_FIELDS]
    return header, rows


def write_table(result: SweepResult, grid_value, path: str) -> str:
    """Comparison table: nine metric rows, one column per strategy."""
    header, rows = table_rows(result, grid_value)
    return _write(path, header, rows)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_")


def write_histograms(result: SweepResult, grid_value, directory: str) -> list[str]:
    cells = [c for c in result.cells if c.grid_value == grid_value and c.histogram is not None]
    bins, markers = [], []
    for c in cells:
        h = c.histogram
        for lo, hi, n in zip(h.edges[:-1], h.edges[1:], h.counts):
            bins.append([c.strategy, float(lo), float(hi), int(n)])
        markers.append([c.strategy, h.mean, h.median, h.negative_mean, h.positive_mean, int(h.counts.sum())])
    tag = _slug(f"{result.plan.grid_name}{grid_value}")
    return [
        _write(os.path.join(directory, f"histogram_{tag}.csv"), ["strategy", "bin_lo", "bin_hi", "count"], bins),
        _write(
            os.path.join(directory, f"histogram_markers_{tag}.csv"),
            ["strategy", "mean", "median", "negative_mean", "positive_mean", "included"],
            markers,
        ),
    ]


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(path: str, *, command: str, config, seed: int, wall_time: float, outputs: list, extra=None) -> str:
    manifest = {
        "command": command,
        "master_seed": seed,
        "config_sha256": config.digest(),
        "config": config.to_dict(),
        "version": package_version(),
        "python": platform.python_version(),
        "wall_time_s": wall_time,
        "outputs": [os.path.basename(p) for p in outputs],
    }
    if extra:
        manifest.update(extra)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_path_table(path: str, sims, log_price, log_normal, jump, lam_by_strategy: dict, log_wealth_by_strategy: dict) -> str:
    """Long-format path file: one row per simulation and time step."""
    labels = list(lam_by_strategy)
    header = ["sim", "t", "price", "normal_price", "q", "jump"]
    header += [f"lambda_{l}" for l in labels] + [f"wealth_{l}" for l in labels]

    def rows():
        for s, sim in enumerate(sims):
            T = log_price.shape[1] - 1
            for t in range(T + 1):
                row = [int(sim), t, math.exp(log_price[s, t]), math.exp(log_normal[s, t]),
                       math.exp(log_normal[s, t] - log_price[s, t]), bool(jump[s, t - 1]) if t else False]
                row += [float(lam_by_strategy[l][s, t]) if t < T else None for l in labels]
                row += [math.exp(log_wealth_by_strategy[l][s, t]) for l in labels]
                yield row

    return _write(path, header, rows())
