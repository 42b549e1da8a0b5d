"""Result-table formatting: mean +/- sd per method, as text and CSV."""

from __future__ import annotations

import csv
from pathlib import Path

from .experiment import ResultRow, aggregate, read_results_csv


def load_result_rows(paths) -> list[ResultRow]:
    """Aggregate one or more results.csv files into per-method rows."""
    records = []
    for path in paths:
        records.extend(read_results_csv(path))
    records.sort(key=lambda r: (r["method"], r["seed"]))
    return aggregate(records)


def format_entry(mean: float, sd: float) -> str:
    return f"{mean:.2f}±{sd:.2f}"


def render_table(rows: list[ResultRow]) -> str:
    """Fixed-width text table with one line per method."""
    header = f"{'Method':<12} {'Bias':>12} {'BA':>12} {'Seeds':>6} {'Failed':>7}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(
            f"{row.method:<12} {format_entry(row.bias_mean, row.bias_sd):>12} "
            f"{format_entry(row.ba_mean, row.ba_sd):>12} {len(row.records):>6} "
            f"{row.failures:>7}")
    return "\n".join(lines) + "\n"


def write_table_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "bias", "ba", "n_seeds", "n_failed"])
        for row in rows:
            writer.writerow([row.method, format_entry(row.bias_mean, row.bias_sd),
                             format_entry(row.ba_mean, row.ba_sd),
                             len(row.records), row.failures])


def write_report(result_paths, out_dir, figures: bool = True) -> str:
    """Render the aggregate table (text + CSV) and, optionally, the comparison
    and trajectory figures next to them. Returns the text table."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = load_result_rows(result_paths)
    text = render_table(rows)
    (out / "report.txt").write_text(text, encoding="utf-8")
    write_table_csv(rows, out / "report.csv")
    if figures:
        from . import figures as figmod
        figmod.summary_figure(rows, out / "summary.png")
        for path in result_paths:
            traj_dir = Path(path).parent / "trajectories"
            if traj_dir.is_dir():
                for traj in sorted(traj_dir.glob("*.jsonl")):
                    figmod.trajectory_figure(traj, out / f"{traj.stem}.png")
    return text
