"""Report records and figures.

A record is five whitespace-free fields, ``kind stage value gap cert-hash``.
Text form writes them space separated, one per line; structured form writes one
JSON object per line.  Both parse back to identical records.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

FIELDS = ("kind", "stage", "value", "gap", "cert")


def fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    s = str(v)
    return s.replace(" ", "") or "-"


@dataclass(frozen=True)
class Record:
    kind: str
    stage: str
    value: str
    gap: str = "-"
    cert: str = "-"

    @classmethod
    def of(cls, kind, stage, value, gap=None, cert=None) -> "Record":
        return cls(fmt(kind), fmt(stage), fmt(value), fmt(gap), fmt(cert))

    def text(self) -> str:
        return " ".join(getattr(self, f) for f in FIELDS)

    def structured(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def emit(records: Iterable[Record], style: str = "text") -> str:
    if style not in ("text", "structured"):
        raise ValueError(f"unknown output format {style!r}")
    return "".join((r.text() if style == "text" else r.structured()) + "\n" for r in records)


def parse(text: str, style: str = "text") -> list[Record]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if style == "structured":
            d = json.loads(line)
            out.append(Record(*(d[f] for f in FIELDS)))
        else:
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
            out.append(Record(*parts))
    return out


def plot_streams(path: str | Path, title: str, series: Sequence[tuple[str, Sequence[float]]],
                 hlines: Sequence[tuple[str, float]] = ()) -> Path:
    """Bound streams against emission index, saved as a PNG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, vals in series:
        vals = [v for v in vals if v is not None and math.isfinite(v)]
        if vals:
            ax.step(range(1, len(vals) + 1), vals, where="post", marker="o", label=label)
    for label, y in hlines:
        ax.axhline(y, linestyle="--", linewidth=0.8, color="grey")
        ax.annotate(label, (0.99, y), xycoords=("axes fraction", "data"), ha="right", va="bottom", fontsize=8)
    ax.set_xlabel("emission")
    ax.set_ylabel("bound")
    ax.set_title(title)
    ax.legend(loc="best")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
