"""Plain-text report files.

Every report is UTF-8, tab separated, and starts with ``#`` comment lines
carrying the config digest and seed list. A report holds one or more
sections, each introduced by a ``[name]`` line followed by a column header.

``[rates]``       window_size, class, det_mean, det_ci95, fp_mean, fp_ci95, nodes
                  (cascade reports prepend a ``block`` column: F2, f0 or cascade)
``[weights]``     feature, then one column per window size; entries below the
                  report threshold are written as ``-``
``[invocation]``  window_size, all_mean, all_ci95, normal_mean, normal_ci95, nodes
                  (percentage of windows routed to the second stage, over all
                  rows and over normal rows only)
"""
from __future__ import annotations

import math
from pathlib import Path

from .evaluation import (CLASS_ORDER, WEIGHT_REPORT_THRESHOLD, CascadeResult, RateCI,
                         SingleResult)
from .features import feature_names

RATE_COLUMNS = ("window_size", "class", "det_mean", "det_ci95", "fp_mean", "fp_ci95", "nodes")
INVOCATION_COLUMNS = ("window_size", "all_mean", "all_ci95", "normal_mean", "normal_ci95", "nodes")
BLOCKS = {"stage1": "F2", "stage2": "f0", "cascade": "cascade"}


class ReportError(ValueError):
    """A report file is missing, malformed or lacks a required section."""


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.4f}"


def _rate_cells(w: float, cls: str, det: RateCI, fp: RateCI) -> list[str]:
    return [f"{w:g}", cls, _num(det.mean), _num(det.halfwidth), _num(fp.mean), _num(fp.halfwidth),
            str(det.nodes)]


def _section(name, columns, rows) -> list[str]:
    return [f"[{name}]", "\t".join(columns)] + ["\t".join(r) for r in rows]


def single_report(results: list[SingleResult], provenance: list[str]) -> str:
    """Per-class detection/FP table and feature weights for one feature set."""
    if not results:
        raise ValueError("no results to report")
    set_id = results[0].set_id
    results = sorted(results, key=lambda r: r.window_size)
    rates = []
    for r in results:
        summary = r.summary()
        rates += [_rate_cells(r.window_size, c, *summary[c]) for c in CLASS_ORDER if c in summary]
    weights = []
    per_window = [r.weights() for r in results]
    for name in feature_names(set_id):
        cells = [f"{w[name]:.2f}" if w[name] >= WEIGHT_REPORT_THRESHOLD else "-" for w in per_window]
        weights.append([name] + cells)
    lines = list(provenance) + [f"# feature_set {set_id}"]
    lines += _section("rates", RATE_COLUMNS, rates)
    lines += _section("weights", ["feature"] + [f"w{r.window_size:g}" for r in results], weights)
    return "\n".join(lines) + "\n"


def cascade_report(results: list[CascadeResult], provenance: list[str]) -> str:
    """First stage, second stage and cascade blocks plus second-stage invocation rates."""
    if not results:
        raise ValueError("no results to report")
    results = sorted(results, key=lambda r: r.window_size)
    rates, invocation = [], []
    for attr, block in BLOCKS.items():
        for r in results:
            summary = r.summary()[attr]
            rates += [[block] + _rate_cells(r.window_size, c, *summary[c])
                      for c in CLASS_ORDER if c in summary]
    for r in results:
        overall, normal = r.invocation()
        invocation.append([f"{r.window_size:g}", _num(overall.mean), _num(overall.halfwidth),
                           _num(normal.mean), _num(normal.halfwidth), str(overall.nodes)])
    lines = list(provenance) + ["# cascade F2 -> f0"]
    lines += _section("rates", ("block",) + RATE_COLUMNS, rates)
    lines += _section("invocation", INVOCATION_COLUMNS, invocation)
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> tuple[list[str], dict[str, list[dict]]]:
    """``(comment_lines, {section: [row dicts]})``; numeric cells stay strings."""
    comments, sections = [], {}
    current, columns = None, None
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            comments.append(line)
        elif line.startswith("[") and line.endswith("]"):
            current, columns = line[1:-1], None
            sections[current] = []
        elif current is None:
            raise ReportError(f"line {lineno}: row outside any section")
        elif columns is None:
            columns = line.split("\t")
        else:
            cells = line.split("\t")
            if len(cells) != len(columns):
                raise ReportError(f"line {lineno}: expected {len(columns)} cells, got {len(cells)}")
            sections[current].append(dict(zip(columns, cells)))
    return comments, sections


def read_report(path) -> tuple[list[str], dict[str, list[dict]]]:
    p = Path(path)
    if not p.is_file():
        raise ReportError(f"report not found: {p}")
    return parse_report(p.read_text(encoding="utf-8"))


def measured_fp_rates(path) -> dict[float, float]:
    """Second-stage invocation fraction on normal windows, per window size,
    read from a cascade report; this is the rate the energy model charges."""
    _, sections = read_report(path)
    rows = sections.get("invocation")
    if not rows:
        raise ReportError(f"{path}: no [invocation] section; is this a cascade report?")
    out = {}
    for row in rows:
        value = float(row["normal_mean"])
        if math.isnan(value):
            raise ReportError(f"{path}: no normal windows at window size {row['window_size']}")
        out[float(row["window_size"])] = value / 100.0
    return out
