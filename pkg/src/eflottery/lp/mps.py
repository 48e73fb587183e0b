"""MPS dump of a :class:`LinearProgram` for cross-checking with external solvers.

Layout: fixed field positions (name fields start at columns 5, 15 and 40,
numeric fields are 20 characters wide), which any free-format MPS reader
also accepts. Rows are ``R0000000..`` in LP order, columns ``C0000000..``
in variable order, the objective row is ``OBJ``. Numbers carry 12
significant digits.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .model import LinearProgram

_SENSE_CODE = {"<=": "L", ">=": "G", "=": "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


def _num(x: float) -> str:
    return f"{x:.12g}"


def _line(code: str, name: str, name2: str, value: float) -> str:
    return f" {code:<2} {name:<8}  {name2:<8}  {_num(value):>20}"


def write_mps(lp: LinearProgram, target=None, name: str = "EFLOTTERY") -> str:
    """Return the MPS text; also write it to ``target`` when given."""
    rows = [f"R{r:07d}" for r in range(lp.num_rows)]
    cols = [f"C{j:07d}" for j in range(lp.num_vars)]
    A, b, senses = lp.dense()

    out = io.StringIO()
    out.write(f"NAME          {name}\n")
    out.write("OBJSENSE\n")
    out.write(f"    {'MAX' if lp.sense == 'max' else 'MIN'}\n")
    out.write("ROWS\n")
    out.write(" N  OBJ\n")
    for r, s in zip(rows, senses):
        out.write(f" {_SENSE_CODE[s]}  {r}\n")
    out.write("COLUMNS\n")
    for j, cname in enumerate(cols):
        if lp.objective[j] != 0.0:
            out.write(_line("", cname, "OBJ", lp.objective[j]) + "\n")
        for r in np.nonzero(A[:, j])[0]:
            out.write(_line("", cname, rows[r], A[r, j]) + "\n")
    out.write("RHS\n")
    for r, rname in enumerate(rows):
        if b[r] != 0.0:
            out.write(_line("", "RHS", rname, b[r]) + "\n")
    out.write("BOUNDS\n")
    for j, cname in enumerate(cols):
        lo, up = lp.lower[j], lp.upper[j]
        if lo == up:
            out.write(_line("FX", "BND", cname, lo) + "\n")
            continue
        if lo != 0.0:
            out.write(_line("LO", "BND", cname, lo) + "\n")
        if np.isfinite(up):
            out.write(_line("UP", "BND", cname, up) + "\n")
        else:
            out.write(f" PL BND       {cname}\n")
    out.write("ENDATA\n")
    text = out.getvalue()
    if target is not None:
        Path(target).write_text(text)
    return text


def read_mps(source) -> LinearProgram:
    """Parse the subset of MPS emitted by :func:`write_mps`."""
    text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
    section = None
    sense = "max"
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_index: dict[str, int] = {}
    entries: dict[str, dict[int, float]] = {}
    obj: dict[int, float] = {}
    rhs: dict[str, float] = {}
    bounds: dict[int, list[float]] = {}

    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" "):
            section = raw.split()[0]
            continue
        f = raw.split()
        if section == "OBJSENSE":
            sense = "max" if f[0].upper().startswith("MAX") else "min"
        elif section == "ROWS":
            if f[0] != "N":
                row_sense[f[1]] = _CODE_SENSE[f[0]]
                row_order.append(f[1])
                entries[f[1]] = {}
        elif section == "COLUMNS":
            j = col_index.setdefault(f[0], len(col_index))
            for rname, val in zip(f[1::2], f[2::2]):
                if rname == "OBJ":
                    obj[j] = float(val)
                else:
                    entries[rname][j] = float(val)
        elif section == "RHS":
            for rname, val in zip(f[1::2], f[2::2]):
                rhs[rname] = float(val)
        elif section == "BOUNDS":
            code, cname = f[0], f[2]
            j = col_index.setdefault(cname, len(col_index))
            lo_up = bounds.setdefault(j, [0.0, np.inf])
            if code == "UP":
                lo_up[1] = float(f[3])
            elif code == "LO":
                lo_up[0] = float(f[3])
            elif code == "FX":
                lo_up[0] = lo_up[1] = float(f[3])
            elif code == "PL":
                lo_up[1] = np.inf

    n = len(col_index)
    lower = np.zeros(n)
    upper = np.full(n, np.inf)
    for j, (lo, up) in bounds.items():
        lower[j], upper[j] = lo, up
    objective = np.zeros(n)
    for j, v in obj.items():
        objective[j] = v
    lp = LinearProgram(n, objective, lower, upper, sense=sense)
    for rname in row_order:
        idx = np.array(sorted(entries[rname]), dtype=np.int64)
        lp.add_row(idx, [entries[rname][j] for j in idx], row_sense[rname], rhs.get(rname, 0.0), rname)
    return lp
