# core/artifacts.py
"""CSV tables and SVG charts written by the experiments"""

import csv
import hashlib
import logging
import math
import os
from typing import Dict, Iterable, Mapping, Optional, Sequence

import matplotlib
matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

SVG_RC = {"svg.hashsalt": "ddpm-inversion", "svg.fonttype": "none"}


def format_value(value) -> str:
    """Exact text for a CSV cell; floats use repr so rows reproduce bitwise"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "" if math.isnan(value) else repr(value)
    return str(value)


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """
    Write a header row plus data rows and return the file's SHA-256.

    Raises:
        ValueError: if a row's width differs from the header's
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"{path}: row {count} has {len(row)} cells, header has {len(header)}")
            writer.writerow([format_value(value) for value in row])
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return sha256_file(path)


def read_csv(path: str) -> list:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def _save(figure: Figure, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        figure.savefig(path, format="svg", metadata={"Date": None})
    logger.debug(f"Wrote plot {path}")


def line_plot(path: str, x: Sequence[float], series: Mapping[str, Sequence[float]],
              xlabel: str, ylabel: str, title: str = "",
              errors: Optional[Mapping[str, Sequence[float]]] = None,
              reference: Optional[float] = None) -> None:
    """One line per series, optional +/- error bands and a horizontal reference line"""
    figure = Figure(figsize=(6.0, 4.0))
    axes = figure.subplots()
    for label, values in series.items():
        values = np.asarray(values, dtype=np.float64)
        axes.plot(x, values, label=label, linewidth=1.2)
        if errors and label in errors:
            band = np.asarray(errors[label], dtype=np.float64)
            axes.fill_between(x, values - band, values + band, alpha=0.2)
    if reference is not None:
        axes.axhline(reference, color="grey", linestyle="--", linewidth=0.8)
    axes.set_xlabel(xlabel)
    axes.set_ylabel(ylabel)
    if title:
        axes.set_title(title)
    axes.legend()
    figure.tight_layout()
    _save(figure, path)


def bar_plot(path: str, edges: Sequence[float], counts: Dict[str, Sequence[float]],
             xlabel: str, ylabel: str, title: str = "") -> None:
    """Side-by-side histogram bars over shared bin edges"""
    edges = np.asarray(edges, dtype=np.float64)
    widths = np.diff(edges)
    figure = Figure(figsize=(6.0, 4.0))
    axes = figure.subplots()
    groups = max(len(counts), 1)
    for index, (label, values) in enumerate(counts.items()):
        offsets = edges[:-1] + widths * index / groups
        axes.bar(offsets, values, width=widths / groups, align="edge", label=label)
    axes.set_xlim(edges[0], edges[-1])
    axes.set_xlabel(xlabel)
    axes.set_ylabel(ylabel)
    if title:
        axes.set_title(title)
    axes.legend()
    figure.tight_layout()
    _save(figure, path)
