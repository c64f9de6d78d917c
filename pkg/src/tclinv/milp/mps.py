"""Fixed-column MPS writer for debugging dumps.

Field layout (1-based columns) follows the classic fixed format::

    field 1: columns  2-3   (row type / bound type)
    field 2: columns  5-12  (name)
    field 3: columns 15-22  (name)
    field 4: columns 25-36  (number)
    field 5: columns 40-47  (name)
    field 6: columns 50-61  (number)

Only fields 1-4 are written; numbers use ``%12.6g`` so they fit field 4.
Integer columns are bracketed by ``MARKER`` lines.
"""

from __future__ import annotations

from typing import TextIO

from .model import BIG, EQ, GE, LE, MilpModel

_ROW_TYPE = {LE: "L", GE: "G", EQ: "E"}


def _line(f1: str = "", f2: str = "", f3: str = "", f4: str = "") -> str:
    return f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}".rstrip()


def _num(v: float) -> str:
    return f"{v:12.6g}".strip()


def write_mps(model: MilpModel, out: TextIO, name: str = "MODEL") -> None:
    rows = [f"R{i}" for i in range(len(model.constraints))]
    cols = [f"C{j}" for j in range(model.num_vars)]
    out.write(f"NAME          {name}\n")
    if model.sense == "max":
        out.write("OBJSENSE\n    MAX\n")
    out.write("ROWS\n")
    out.write(_line("N", "COST") + "\n")
    for r, con in zip(rows, model.constraints):
        out.write(_line(_ROW_TYPE[con.rel], r) + "\n")

    by_col: dict = {j: [] for j in range(model.num_vars)}
    for i, con in enumerate(model.constraints):
        for j, v in con.coeffs.items():
            by_col[j].append((rows[i], v))
    out.write("COLUMNS\n")
    in_int = False
    marker = 0
    for j in range(model.num_vars):
        if model.integrality[j] != in_int:
            kind = "'INTORG'" if not in_int else "'INTEND'"
            out.write(f"    MARKER{marker:<4}  'MARKER'                 {kind}\n")
            marker += 1
            in_int = not in_int
        if model.objective[j] != 0.0:
            out.write(_line("", cols[j], "COST", _num(model.objective[j])) + "\n")
        for r, v in by_col[j]:
            out.write(_line("", cols[j], r, _num(v)) + "\n")
        if model.objective[j] == 0.0 and not by_col[j]:
            out.write(_line("", cols[j], "COST", "0") + "\n")
    if in_int:
        out.write(f"    MARKER{marker:<4}  'MARKER'                 'INTEND'\n")

    out.write("RHS\n")
    for r, con in zip(rows, model.constraints):
        if con.rhs != 0.0:
            out.write(_line("", "RHS", r, _num(con.rhs)) + "\n")

    out.write("BOUNDS\n")
    for j in range(model.num_vars):
        lo, hi = model.lo[j], model.hi[j]
        if lo == hi:
            out.write(_line("FX", "BND", cols[j], _num(lo)) + "\n")
            continue
        if lo <= -BIG:
            out.write(_line("MI", "BND", cols[j]) + "\n")
        elif lo != 0.0:
            out.write(_line("LO", "BND", cols[j], _num(lo)) + "\n")
        if hi < BIG:
            out.write(_line("UP", "BND", cols[j], _num(hi)) + "\n")
    out.write("ENDATA\n")
