"""CSV ingestion and emission, and deterministic SVG line charts."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mezo import __version__


@dataclass(frozen=True)
class Provenance:
    """Header fields stamped into every output file."""

    seed: int
    scenario_hash: str
    version: str = __version__

    def lines(self) -> list[str]:
        return [f"mezo {self.version}", f"seed={self.seed}", f"scenario_sha256={self.scenario_hash}"]


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else str(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], prov: Provenance) -> Path:
    """Write ``rows`` under a ``#``-comment provenance block.

    Floats use ``repr`` so values round-trip exactly and output is byte-stable.
    """
    path = Path(path)
    buf = _io.StringIO()
    for line in prov.lines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise ValueError(f"{path}: file not found")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.lstrip().startswith("#")) if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [c.strip().lower() for c in rows[0]]
    body = rows[1:]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ValueError(f"{path}: ragged row {i}: expected {len(header)} fields, got {len(r)}")
    return header, body


def _floats(path, rows, col: int, name: str) -> np.ndarray:
    out = np.empty(len(rows))
    for i, r in enumerate(rows):
        try:
            out[i] = float(r[col])
        except ValueError:
            raise ValueError(f"{path}: row {i + 2}: {name} {r[col]!r} is not a number") from None
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{path}: {name} values must be finite")
    return out


def load_series(path, positive: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``time,value`` CSV; returns (times, values) sorted by time."""
    header, rows = _read_rows(path)
    if header != ["time", "value"]:
        raise ValueError(f"{path}: expected header 'time,value', got {','.join(header)!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    t = _floats(path, rows, 0, "time")
    v = _floats(path, rows, 1, "value")
    order = np.argsort(t, kind="stable")
    t, v = t[order], v[order]
    dup = np.flatnonzero(np.diff(t) == 0)
    if dup.size:
        raise ValueError(f"{path}: duplicate time {t[dup[0]]:g}")
    if positive and np.any(v <= 0):
        raise ValueError(f"{path}: values must be > 0 (first offending time {t[np.argmax(v <= 0)]:g})")
    return t, v


def load_wealth_list(path) -> np.ndarray:
    """Read ``size`` or ``rank,size`` rows; returns sizes sorted descending."""
    header, rows = _read_rows(path)
    if header == ["size"]:
        sizes = _floats(path, rows, 0, "size")
    elif header == ["rank", "size"]:
        ranks = _floats(path, rows, 0, "rank")
        sizes = _floats(path, rows, 1, "size")[np.argsort(ranks, kind="stable")]
    else:
        raise ValueError(f"{path}: expected header 'size' or 'rank,size', got {','.join(header)!r}")
    if sizes.size == 0:
        raise ValueError(f"{path}: no data rows")
    if np.any(sizes <= 0):
        raise ValueError(f"{path}: sizes must be > 0")
    return np.sort(sizes)[::-1]


def write_svg(
    path,
    series: dict[str, tuple[np.ndarray, np.ndarray]],
    prov: Provenance,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logy: bool = False,
    logx: bool = False,
) -> Path | None:
    """Line chart; any plotting failure becomes a warning and returns None."""
    path = Path(path)
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with matplotlib.rc_context({"svg.hashsalt": "mezo", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(6, 4))
            for label, (x, y) in series.items():
                ax.plot(x, y, label=label, lw=1.2)
            if logy:
                ax.set_yscale("log")
            if logx:
                ax.set_xscale("log")
            ax.set_title(title)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if len(series) > 1:
                ax.legend(fontsize=8)
            fig.tight_layout()
            buf = _io.StringIO()
            fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
            plt.close(fig)
        text = buf.getvalue()
        comment = "<!-- " + " | ".join(prov.lines()) + " -->\n"
        head, sep, rest = text.partition("?>\n")
        path.write_text(head + sep + comment + rest if sep else comment + text)
        return path
    except Exception as exc:  # plotting must never fail a data run
        warnings.warn(f"plot {path.name} skipped: {exc}", stacklevel=2)
        return None
