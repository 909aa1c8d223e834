"""Report assembly, atomic file emission, and report comparison."""

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from cage.shapley import ExplanationResult

REPORT_FILE = "report.json"
PHI_FILE = "phi.csv"
TRACE_FILE = "trace.csv"
RANKING_FILE = "ranking.txt"
CHART_FILE = "phi.svg"


def fmt(x):
    """Shortest round-tripping decimal; the one formatter for every emitted number."""
    return repr(float(x))


@dataclass
class Report:
    config: dict
    results: list = field(default_factory=list)
    properties: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def result(self, method):
        for r in self.results:
            if r.method == method:
                return r
        raise KeyError(method)

    def rankings(self):
        """Per method: features sorted by decreasing importance."""
        out = {}
        for r in self.results:
            order = sorted(range(len(r.features)), key=lambda i: (-r.phi[i], r.features[i]))
            out[r.method] = [(r.features[i], r.phi[i], r.stderr[i]) for i in order]
        return out

    def deltas(self):
        """CAGE minus SAGE per feature, when both were run."""
        try:
            a, b = self.result("cage"), self.result("sage")
        except KeyError:
            return {}
        return {f: float(a.phi[i] - b.phi[b.features.index(f)]) for i, f in enumerate(a.features)}

    def to_dict(self):
        return {
            "config": self.config,
            "results": [r.as_dict() for r in self.results],
            "rankings": {m: [{"feature": f, "phi": float(p), "stderr": float(s)} for f, p, s in rows]
                         for m, rows in self.rankings().items()},
            "cage_minus_sage": self.deltas(),
            "properties": [p if isinstance(p, dict) else p.as_dict() for p in self.properties],
            "timings": self.timings,
            "extras": self.extras,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(config=d["config"],
                   results=[ExplanationResult.from_dict(r) for r in d.get("results", [])],
                   properties=d.get("properties", []), timings=d.get("timings", {}),
                   extras=d.get("extras", {}))


def phi_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "method", "phi", "stderr"])
    for r in report.results:
        for f, p, s in zip(r.features, r.phi, r.stderr):
            w.writerow([f, r.method, fmt(p), fmt(s)])
    return buf.getvalue()


def trace_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "iteration", "feature", "phi"])
    for r in report.results:
        for it, phi in r.trace:
            for f, p in zip(r.features, phi):
                w.writerow([r.method, it, f, fmt(p)])
    return buf.getvalue()


def ranking_text(report):
    lines = []
    for method, rows in report.rankings().items():
        lines.append(f"{method}")
        lines.append(f"  {'rank':>4}  {'feature':<12} {'phi':>24} {'stderr':>24}")
        for k, (f, p, s) in enumerate(rows, start=1):
            lines.append(f"  {k:>4}  {f:<12} {fmt(p):>24} {fmt(s):>24}")
        lines.append("")
    deltas = report.deltas()
    if deltas:
        lines.append("cage - sage")
        for f, dlt in deltas.items():
            lines.append(f"  {f:<12} {fmt(dlt):>24}")
        lines.append("")
    for p in report.properties:
        p = p if isinstance(p, dict) else p.as_dict()
        status = "PASS" if p["passed"] else "FAIL"
        lines.append(f"[{status}] {p['name']}: measured {fmt(p['measured'])} vs {fmt(p['threshold'])}")
    return "\n".join(lines).rstrip() + "\n"


_PALETTE = ("#3b6ea8", "#d08a2e", "#5a9e5a", "#a8473b")


def bar_chart_svg(report, width=640, bar_h=18):
    """Grouped horizontal bars of phi per feature, one colour per method."""
    if not report.results:
        return '<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"/>\n'
    features = list(report.results[0].features)
    methods = [r.method for r in report.results]
    vals = np.array([[r.phi[r.features.index(f)] for f in features] for r in report.results])
    lo, hi = min(0.0, float(vals.min())), max(0.0, float(vals.max()))
    span = hi - lo if hi > lo else 1.0
    left, right, top = 90, 20, 30
    plot_w = width - left - right
    group_h = bar_h * len(methods) + 10
    height = top + group_h * len(features) + 30
    x0 = left + (0.0 - lo) / span * plot_w
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="12">']
    for k, m in enumerate(methods):
        parts.append(f'<rect x="{left + 110 * k}" y="8" width="12" height="12" '
                     f'fill="{_PALETTE[k % len(_PALETTE)]}"/>')
        parts.append(f'<text x="{left + 110 * k + 16}" y="18">{escape(m)}</text>')
    for i, f in enumerate(features):
        y = top + i * group_h
        parts.append(f'<text x="{left - 8}" y="{y + group_h / 2}" text-anchor="end">{escape(f)}</text>')
        for k, m in enumerate(methods):
            v = vals[k, i]
            x1 = left + (v - lo) / span * plot_w
            parts.append(f'<rect x="{min(x0, x1):.2f}" y="{y + k * bar_h}" width="{abs(x1 - x0):.2f}" '
                         f'height="{bar_h - 2}" fill="{_PALETTE[k % len(_PALETTE)]}">'
                         f'<title>{escape(m)} {escape(f)}: {fmt(v)}</title></rect>')
    parts.append(f'<line x1="{x0:.2f}" y1="{top}" x2="{x0:.2f}" y2="{height - 25}" stroke="black"/>')
    parts.append(f'<text x="{left}" y="{height - 8}">{fmt(lo)}</text>')
    parts.append(f'<text x="{width - right}" y="{height - 8}" text-anchor="end">{fmt(hi)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(report, directory):
    """Write every report file via temp-file-then-rename; nothing is left behind on failure."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {directory}: {exc}") from exc
    payloads = {
        REPORT_FILE: json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
        PHI_FILE: phi_csv(report),
        TRACE_FILE: trace_csv(report),
        RANKING_FILE: ranking_text(report),
        CHART_FILE: bar_chart_svg(report),
    }
    staged = []
    try:
        for name, text in payloads.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=directory)
            staged.append((tmp, directory / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for tmp, final in staged:
            os.replace(tmp, final)
    except OSError as exc:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise OSError(f"failed to write report to {directory}: {exc}") from exc
    return [directory / name for name in payloads]


def load_report(path):
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    with path.open(encoding="utf-8") as fh:
        return Report.from_dict(json.load(fh))


def compare_reports(a, b):
    """Feature-by-feature phi differences (b minus a) for methods present in both reports."""
    rows = []
    for ra in a.results:
        try:
            rb = b.result(ra.method)
        except KeyError:
            continue
        for i, f in enumerate(ra.features):
            if f not in rb.features:
                continue
            j = rb.features.index(f)
            se = float(np.hypot(ra.stderr[i], rb.stderr[j]))
            diff = float(rb.phi[j] - ra.phi[i])
            rows.append({"method": ra.method, "feature": f, "phi_a": float(ra.phi[i]),
                         "phi_b": float(rb.phi[j]), "diff": diff,
                         "z": diff / se if se > 0 else float("inf") if diff else 0.0})
    return rows
