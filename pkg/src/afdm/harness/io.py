"""CSV and SVG output for sweep results."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .sweep import SweepResult, SweepRow

CSV_HEADER = ("snr_db", "metric", "value", "trials", "errors", "ci95")


class OutputError(OSError):
    pass


def format_csv(result: SweepResult) -> str:
    """CSV text: one ``#`` provenance line, the header, one row per SNR point.

    Floats are written with ``repr`` so parsing gives back the exact values.
    """
    buf = io.StringIO()
    buf.write(f"# seed={result.seed} config_digest={result.config_digest}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in sorted(result.rows, key=lambda r: r.snr_db):
        writer.writerow([repr(float(r.snr_db)), r.metric, repr(float(r.value)),
                         r.trials, r.errors, repr(float(r.ci95))])
    return buf.getvalue()


def emit_csv(result: SweepResult, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.write_text(format_csv(result), newline="")
    except OSError as exc:
        raise OutputError(f"cannot write CSV to {path}: {exc}") from exc
    return path


def parse_csv(text: str) -> tuple[dict[str, str], list[SweepRow]]:
    """Provenance fields and rows from text produced by :func:`format_csv`."""
    lines = text.splitlines()
    meta: dict[str, str] = {}
    while lines and lines[0].startswith("#"):
        for tok in lines.pop(0).lstrip("#").split():
            key, _, val = tok.partition("=")
            meta[key] = val
    reader = csv.reader(lines)
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    rows = [SweepRow(float(s), m, float(v), int(t), int(e), float(c))
            for s, m, v, t, e, c in reader]
    return meta, rows


def read_csv(path: str | Path) -> tuple[dict[str, str], list[SweepRow]]:
    return parse_csv(Path(path).read_text())


def emit_plot(results: SweepResult | list[SweepResult], path: str | Path) -> Path:
    """Log-scale metric versus SNR as SVG, one line per result."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(results, SweepResult):
        results = [results]
    if not results:
        raise ValueError("nothing to plot")
    path = Path(path)
    # fixed ids keep the SVG byte-stable between runs
    matplotlib.rcParams["svg.hashsalt"] = "afdm"
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for res in results:
        snr = res.snrs()
        val = res.values()
        ok = val > 0
        ax.semilogy(snr[ok], val[ok], marker="o", label=res.label or res.metric)
    metric = results[0].metric
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel(metric.upper())
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    provenance = "; ".join(f"seed={r.seed} config_digest={r.config_digest}" for r in results)
    ax.set_title(provenance, fontsize=7)
    try:
        fig.savefig(path, format="svg", metadata={"Date": None, "Description": provenance})
    except OSError as exc:
        raise OutputError(f"cannot write plot to {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path
