"""Reference power signals: synthetic generators and CSV import."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


def random_walk(steps: int, band: Sequence[float], seed: int = 0, hold: int = 5,
                step: Optional[float] = None, start: Optional[float] = None) -> np.ndarray:
    """Seeded random walk that holds each level for ``hold`` steps.

    Each new level moves by a uniform draw in ``[-step, step]`` (a quarter
    of the band by default) and is clamped to ``band``.
    """
    lo, hi = float(band[0]), float(band[1])
    if lo > hi:
        raise ValueError("band must be [low, high]")
    if hold < 1:
        raise ValueError("hold must be at least one step")
    rng = np.random.default_rng(seed)
    step = 0.25 * (hi - lo) if step is None else float(step)
    level = 0.5 * (lo + hi) if start is None else float(start)
    out = np.empty(steps)
    for t in range(steps):
        if t > 0 and t % hold == 0:
            level += rng.uniform(-step, step)
        level = min(max(level, lo), hi)
        out[t] = level
    return out


def sine(steps: int, band: Sequence[float], period: float = 60.0,
         phase: float = 0.0) -> np.ndarray:
    lo, hi = float(band[0]), float(band[1])
    t = np.arange(steps)
    return lo + 0.5 * (hi - lo) * (1.0 + np.sin(2.0 * np.pi * t / period + phase))


def read_csv_column(path: Union[str, Path], column: Union[int, str] = 0) -> np.ndarray:
    """Numeric values of one CSV column, verbatim.

    ``column`` is an index or a header name; rows whose cell is not a
    number (for example a header line) are skipped.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        return np.zeros(0)
    idx = column
    if isinstance(column, str):
        if column not in rows[0]:
            raise ValueError(f"column {column!r} not in header {rows[0]}")
        idx = rows[0].index(column)
        rows = rows[1:]
    values = []
    for r in rows:
        try:
            values.append(float(r[idx]))
        except (ValueError, IndexError):
            continue
    return np.asarray(values)


def generate_reference(params: dict, steps: int, base_dir: Union[str, Path] = ".") -> np.ndarray:
    """Reference series in kW from a scenario's reference block.

    Keys: ``csv`` (+ ``column``, ``shift``, ``scale``) imports a file as
    ``shift + scale * value``; otherwise ``generator`` is ``constant``
    (``value``), ``random-walk`` (``band``, ``seed``, ``hold``, ``step``,
    ``start``) or ``sine`` (``band``, ``period``, ``phase``). Generated
    series have ``steps`` entries; imported ones keep their length.
    """
    if "csv" in params:
        path = Path(params["csv"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        raw = read_csv_column(path, params.get("column", 0))
        return float(params.get("shift", 0.0)) + float(params.get("scale", 1.0)) * raw
    kind = params.get("generator", "random-walk")
    band = params.get("band", (0.0, 1.0))
    if kind == "constant":
        return np.full(steps, float(params.get("value", 0.5 * (band[0] + band[1]))))
    if kind == "random-walk":
        return random_walk(steps, band, seed=int(params.get("seed", 0)),
                           hold=int(params.get("hold", 5)), step=params.get("step"),
                           start=params.get("start"))
    if kind == "sine":
        return sine(steps, band, period=float(params.get("period", 60.0)),
                    phase=float(params.get("phase", 0.0)))
    raise ValueError(f"unknown reference generator {kind!r}")
