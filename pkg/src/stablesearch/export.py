"""Artifact writers: CSV tables, annotated DOT graphs, SVG charts, JSON.

All writers are deterministic: fixed row orderings, repr() for floats, and
LF line endings, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InvalidPrior
from .stability import CAUSAL_PATH, EDGE, AnnotatedCausalGraph, StabilityGraph


def _csv_field(value) -> str:
    text = str(value)
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _csv_line(fields) -> str:
    return ",".join(_csv_field(f) for f in fields) + "\n"


def stability_csv(sg: StabilityGraph) -> str:
    """Long-format table: kind, from, to, complexity, probability, imputed."""
    out = [_csv_line(["kind", "from", "to", "complexity", "probability", "imputed"])]
    for key in sorted(sg.probabilities):
        a, b = key
        curve = sg.probabilities[key]
        for j, prob in enumerate(curve):
            out.append(
                _csv_line(
                    [
                        sg.kind,
                        sg.labels[a],
                        sg.labels[b],
                        j,
                        repr(float(prob)),
                        "true" if sg.imputed[j] else "false",
                    ]
                )
            )
    return "".join(out)


def effects_csv(estimates, labels) -> str:
    """One row per estimated causal path."""
    out = [_csv_line(["source", "target", "median", "standardized", "n_values"])]
    ordered = sorted(estimates, key=lambda e: (e.source, e.target))
    for est in ordered:
        out.append(
            _csv_line(
                [
                    labels[est.source],
                    labels[est.target],
                    repr(float(est.median)),
                    "" if est.standardized is None else repr(float(est.standardized)),
                    est.n_values,
                ]
            )
        )
    return "".join(out)


def roc_csv(points) -> str:
    out = [_csv_line(["fpr", "tpr"])]
    for fpr, tpr in points:
        out.append(_csv_line([repr(float(fpr)), repr(float(tpr))]))
    return "".join(out)


def _edge_label(reliability: float, effect: float | None) -> str:
    text = f"{reliability:g}"
    if effect is not None:
        text += f"/{effect:.2f}"
    return text


def annotated_dot(graph: AnnotatedCausalGraph) -> str:
    """DOT text with reliability/effect labels, e.g. ``label="1/0.71"``."""
    lines = ["digraph G {"]
    for name in graph.labels:
        lines.append(f'  "{name}";')
    for a, b in sorted(graph.directed):
        label = _edge_label(graph.directed[(a, b)], graph.effects.get((a, b)))
        lines.append(
            f'  "{graph.labels[a]}" -> "{graph.labels[b]}" [label="{label}"];'
        )
    for a, b in sorted(graph.undirected):
        label = _edge_label(graph.undirected[(a, b)], None)
        lines.append(
            f'  "{graph.labels[a]}" -- "{graph.labels[b]}" '
            f'[dir=none, label="{label}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_dict(graph: AnnotatedCausalGraph) -> dict:
    return {
        "labels": list(graph.labels),
        "directed": [
            [a, b, rel] for (a, b), rel in sorted(graph.directed.items())
        ],
        "undirected": [
            [a, b, rel] for (a, b), rel in sorted(graph.undirected.items())
        ],
        "effects": [
            [a, b, val] for (a, b), val in sorted(graph.effects.items())
        ],
    }


def graph_from_dict(obj: dict) -> AnnotatedCausalGraph:
    labels = tuple(obj["labels"])
    return AnnotatedCausalGraph(
        len(labels),
        labels,
        {(int(a), int(b)): float(r) for a, b, r in obj["directed"]},
        {(int(a), int(b)): float(r) for a, b, r in obj["undirected"]},
        {(int(a), int(b)): float(v) for a, b, v in obj["effects"]},
    )


PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
)


def stability_svg(
    sg: StabilityGraph,
    pi_sel: float,
    pi_bic: int,
    width: int = 720,
    height: int = 440,
) -> str:
    """Self-contained line chart of every stability curve.

    The shaded box marks the acceptance region: complexities up to the BIC
    pick, probability at or above the selection threshold.  Curves that
    enter it are colored and labeled, the rest stay gray.
    """
    left, right, top, bottom = 60, 150, 30, 50
    plot_w = width - left - right
    plot_h = height - top - bottom
    max_j = sg.max_complexity

    def x(j: float) -> float:
        return left + (j / max_j) * plot_w if max_j else left + plot_w / 2

    def y(p: float) -> float:
        return top + (1.0 - p) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    window_j = min(pi_bic, max_j)
    parts.append(
        f'<rect x="{x(0):.1f}" y="{y(1.0):.1f}" '
        f'width="{x(window_j) - x(0):.1f}" '
        f'height="{y(pi_sel) - y(1.0):.1f}" fill="#dce9f5"/>'
    )
    # axes and ticks
    parts.append(
        f'<line x1="{left}" y1="{y(0):.1f}" x2="{left + plot_w}" '
        f'y2="{y(0):.1f}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{left}" y1="{y(0):.1f}" x2="{left}" y2="{top}" stroke="black"/>'
    )
    for tick in np.linspace(0.0, 1.0, 6):
        parts.append(
            f'<text x="{left - 8}" y="{y(tick) + 4:.1f}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{tick:.1f}</text>'
        )
        parts.append(
            f'<line x1="{left - 4}" y1="{y(tick):.1f}" x2="{left}" '
            f'y2="{y(tick):.1f}" stroke="black"/>'
        )
    step = 1 if max_j <= 20 else max(1, max_j // 10)
    for j in range(0, max_j + 1, step):
        parts.append(
            f'<text x="{x(j):.1f}" y="{y(0) + 16:.1f}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{j}</text>'
        )
        parts.append(
            f'<line x1="{x(j):.1f}" y1="{y(0):.1f}" x2="{x(j):.1f}" '
            f'y2="{y(0) + 4:.1f}" stroke="black"/>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 12}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif">model complexity</text>'
    )
    parts.append(
        f'<text x="16" y="{top + plot_h / 2:.1f}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif" '
        f'transform="rotate(-90 16 {top + plot_h / 2:.1f})">selection probability</text>'
    )
    parts.append(
        f'<line x1="{x(0):.1f}" y1="{y(pi_sel):.1f}" x2="{x(max_j):.1f}" '
        f'y2="{y(pi_sel):.1f}" stroke="#888888" stroke-dasharray="4 3"/>'
    )

    window = slice(0, window_j + 1)
    color_i = 0
    labeled_y = []
    for key in sorted(sg.probabilities):
        curve = sg.probabilities[key]
        relevant = float(np.max(curve[window])) >= pi_sel
        pts = " ".join(f"{x(j):.1f},{y(v):.1f}" for j, v in enumerate(curve))
        if relevant:
            color = PALETTE[color_i % len(PALETTE)]
            color_i += 1
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="2"/>'
            )
            a, b = key
            sep = "-" if sg.kind == EDGE else ">"
            label_y = y(curve[-1])
            while any(abs(label_y - other) < 12 for other in labeled_y):
                label_y += 12
            labeled_y.append(label_y)
            parts.append(
                f'<text x="{left + plot_w + 6}" y="{label_y + 4:.1f}" '
                f'font-size="11" font-family="sans-serif" fill="{color}">'
                f"{sg.labels[a]}{sep}{sg.labels[b]}</text>"
            )
        else:
            parts.append(
                f'<polyline points="{pts}" fill="none" stroke="#cccccc" '
                f'stroke-width="1"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def dataset_csv(names, values) -> str:
    out = [_csv_line(names)]
    for row in values:
        out.append(_csv_line([repr(float(v)) for v in row]))
    return "".join(out)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def prior_from_dict(obj) -> list[tuple[str, str]]:
    """Parse ``{"forbidden": [["A", "B"], ...]}`` into name pairs."""
    if not isinstance(obj, dict) or "forbidden" not in obj:
        raise InvalidPrior("prior file needs a 'forbidden' list")
    out = []
    for entry in obj["forbidden"]:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise InvalidPrior(f"bad prior entry: {entry!r}")
        out.append((str(entry[0]), str(entry[1])))
    return out


def prior_to_dict(prior) -> dict:
    return {"forbidden": [[a, b] for a, b in prior]}
