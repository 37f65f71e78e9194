"""Documented JSON schemas for machine-readable outputs, plus figure
rendering for the bench CSVs."""

from __future__ import annotations

import csv
import io
from pathlib import Path

#: One record per peer, as produced by CommStats.to_json().
STATS_RECORD_SCHEMA = {
    "type": "object",
    "required": ["party", "peer", "bytes_sent", "frames",
                 "frame_overhead_bytes", "rounds"],
    "properties": {
        "party": {"type": "integer", "minimum": 1, "maximum": 3},
        "peer": {"type": "integer", "minimum": 1, "maximum": 3},
        "bytes_sent": {"type": "integer", "minimum": 0},
        "frames": {"type": "integer", "minimum": 0},
        "frame_overhead_bytes": {"type": "integer", "minimum": 0},
        "rounds": {"type": "integer", "minimum": 0},
        "transcript_sha256": {"type": "string"},
    },
    "additionalProperties": False,
}

#: Per-inference report from engine.infer_with_stats().
REPORT_SCHEMA = {
    "type": "object",
    "required": ["party", "k", "mode", "label", "bytes", "frames", "rounds",
                 "rounds_budget", "wall_ms", "layers"],
    "properties": {
        "party": {"type": "integer"},
        "k": {"type": "integer"},
        "mode": {"enum": ["exact", "prob"]},
        "label": {"type": "integer"},
        "bytes": {"type": "integer", "minimum": 0},
        "frames": {"type": "integer", "minimum": 0},
        "rounds": {"type": "integer", "minimum": 0},
        "rounds_budget": {"type": "integer", "minimum": 0},
        "wall_ms": {"type": "number", "minimum": 0},
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["layer", "kind", "bytes", "frames", "rounds",
                             "wall_ms"],
                "properties": {
                    "layer": {"type": "integer"},
                    "kind": {"type": "string"},
                    "bytes": {"type": "integer"},
                    "frames": {"type": "integer"},
                    "rounds": {"type": "integer"},
                    "wall_ms": {"type": "number"},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}

#: Error envelope printed to stderr on CLI failure.
ERROR_SCHEMA = {
    "type": "object",
    "required": ["error", "message", "exit_code"],
    "properties": {
        "error": {"type": "string"},
        "message": {"type": "string"},
        "exit_code": {"type": "integer"},
    },
    "additionalProperties": False,
}


def rows_to_csv(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({h: r[h] for h in header})
    return buf.getvalue()


def render_figure(rows: list[dict], x: str, ys: list[str], group_by: str | None,
                  title: str, path: Path) -> None:
    """One PNG next to the delimited output: ys against x, one line per
    group value."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(ys), figsize=(5.2 * len(ys), 3.8))
    if len(ys) == 1:
        axes = [axes]
    groups: dict[object, list[dict]] = {}
    for r in rows:
        groups.setdefault(r[group_by] if group_by else "", []).append(r)
    for ax, y in zip(axes, ys):
        for key, grp in sorted(groups.items(), key=lambda kv: str(kv[0])):
            grp = sorted(grp, key=lambda r: r[x])
            label = f"{group_by}={key}" if group_by else None
            ax.plot([r[x] for r in grp], [r[y] for r in grp],
                    marker="o", label=label)
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        ax.grid(True, alpha=0.3)
        if group_by:
            ax.legend()
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
