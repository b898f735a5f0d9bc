"""Distributional statistics of a trace: top-1 logits, logit ratios, probability ratios.

Probabilities are softmax values at each record's stored temperature,
normalized over the record's stored top-k candidates (the full vocabulary is
not recorded). The probability RATIO p2/p1 = exp((z2 - z1)/T) is exact and
independent of that normalization; it is what the decoupling statistics use.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .logits import logit_ratio, softmax
from .trace import TraceFile

DEFAULT_BINS = 40


@dataclass(frozen=True)
class Histogram:
    edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def total(self) -> int:
        return int(sum(self.counts))


@dataclass(frozen=True)
class ScatterPoint:
    step: int
    z1: float
    z2: float
    p1: float
    p2: float
    ratio: float | None


@dataclass(frozen=True)
class AnalysisReport:
    theta: float
    record_count: int
    ratio_defined_count: int
    relaxation_fraction: float
    top1_hist: Histogram
    ratio_hist: Histogram
    prob_ratio_hist: Histogram
    scatter: tuple[ScatterPoint, ...]


def _histogram(values, bins: int) -> Histogram:
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins)
    return Histogram(edges=tuple(float(e) for e in edges), counts=tuple(int(c) for c in counts))


def analyze_trace(trace: TraceFile, theta: float, bins: int = DEFAULT_BINS) -> AnalysisReport:
    """Build the report for one trace at relaxation threshold theta."""
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must be in (0, 1], got {theta}")
    if not trace.records:
        raise ValueError("cannot analyze an empty trace")
    top1s: list[float] = []
    ratios: list[float] = []
    prob_ratios: list[float] = []
    scatter: list[ScatterPoint] = []
    in_zone = 0
    for rec in trace.records:
        (_, z1), (_, z2) = rec.top_k[0], rec.top_k[1]
        r = logit_ratio(z1, z2)
        top1s.append(z1)
        if r is not None:
            ratios.append(r)
            if r > theta:
                in_zone += 1
        prob_ratios.append(math.exp((z2 - z1) / rec.temperature))
        probs = softmax([z for _, z in rec.top_k], rec.temperature)
        scatter.append(
            ScatterPoint(
                step=rec.step,
                z1=z1,
                z2=z2,
                p1=float(probs[0]),
                p2=float(probs[1]),
                ratio=r,
            )
        )
    n = len(trace.records)
    return AnalysisReport(
        theta=theta,
        record_count=n,
        ratio_defined_count=len(ratios),
        relaxation_fraction=in_zone / n,
        top1_hist=_histogram(top1s, bins),
        ratio_hist=_histogram(ratios, bins) if ratios else Histogram((), ()),
        prob_ratio_hist=_histogram(prob_ratios, bins),
        scatter=tuple(scatter),
    )


def _write_hist(hist: Histogram, path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for left, right, count in zip(hist.edges, hist.edges[1:], hist.counts):
            w.writerow([left, right, count])


def write_report(report: AnalysisReport, outdir: str | Path) -> list[Path]:
    """Write the CSV set (three histograms + scatter) into outdir."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        out / "top1_hist.csv",
        out / "ratio_hist.csv",
        out / "prob_ratio_hist.csv",
        out / "scatter.csv",
    ]
    _write_hist(report.top1_hist, paths[0])
    _write_hist(report.ratio_hist, paths[1])
    _write_hist(report.prob_ratio_hist, paths[2])
    with paths[3].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "z1", "z2", "p1", "p2", "ratio"])
        for p in report.scatter:
            w.writerow([p.step, p.z1, p.z2, p.p1, p.p2, "" if p.ratio is None else p.ratio])
    return paths


def summarize(report: AnalysisReport) -> str:
    lines = [
        f"records analyzed       : {report.record_count}",
        f"ratio defined (z1 > 0) : {report.ratio_defined_count}",
        f"relaxation zone r > {report.theta:g}: "
        f"{report.relaxation_fraction:.4f} of records",
    ]
    return "\n".join(lines)
