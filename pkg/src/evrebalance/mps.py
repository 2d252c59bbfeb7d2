"""Free-format MPS export and import.

Integer columns sit between ``MARKER INTORG`` / ``MARKER INTEND`` lines and
always carry an explicit bound (``UP 1`` for binaries, ``PL`` otherwise) so
readers that default integer columns to ``[0, 1]`` see the same model.
Numbers are written with ``repr`` (shortest round-tripping form), which
makes export -> parse -> export byte-identical.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

from .model import FAMILIES, LinearModel

OBJ = "OBJ"
_FAM = {f: k for k, f in enumerate(FAMILIES)}
_BOUND_KINDS = ("UP", "LO", "FX", "FR", "MI", "PL", "BV", "LI", "UI")


class MpsError(ValueError):
    pass


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _names(model: LinearModel, count: int, getter) -> list[str]:
    return [getter(k) for k in range(count)]


def write_mps(model: LinearModel, out: TextIO) -> None:
    row_names = _names(model, model.n_rows, model.row_name)
    col_names = _names(model, model.n_cols, model.col_name)
    out.write(f"NAME {model.name}\n")
    out.write("ROWS\n")
    out.write(f" N {OBJ}\n")
    for name, s in zip(row_names, model.senses):
        out.write(f" {s} {name}\n")

    out.write("COLUMNS\n")
    A = model.matrix.tocsc()
    A.sum_duplicates()
    A.sort_indices()
    in_int = False
    marker = 0
    for k in range(model.n_cols):
        is_int = bool(model.integer[k])
        if is_int != in_int:
            tag = "INTORG" if is_int else "INTEND"
            out.write(f" MARKER{marker} 'MARKER' '{tag}'\n")
            marker += 1
            in_int = is_int
        name = col_names[k]
        start, end = A.indptr[k], A.indptr[k + 1]
        wrote = False
        if model.c[k] != 0 or start == end:
            out.write(f" {name} {OBJ} {_num(model.c[k])}\n")
            wrote = True
        for r, v in zip(A.indices[start:end], A.data[start:end]):
            out.write(f" {name} {row_names[r]} {_num(v)}\n")
            wrote = True
        assert wrote
    if in_int:
        out.write(f" MARKER{marker} 'MARKER' 'INTEND'\n")

    out.write("RHS\n")
    for r in np.nonzero(model.rhs)[0]:
        out.write(f" RHS {row_names[r]} {_num(model.rhs[r])}\n")
    out.write("RANGES\n")
    out.write("BOUNDS\n")
    for k in range(model.n_cols):
        lo, hi, name = model.lb[k], model.ub[k], col_names[k]
        if lo == hi:
            out.write(f" FX BND {name} {_num(lo)}\n")
            continue
        if lo == -np.inf and hi == np.inf:
            out.write(f" FR BND {name}\n")
            continue
        if lo == -np.inf:
            out.write(f" MI BND {name}\n")
        elif lo != 0:
            out.write(f" LO BND {name} {_num(lo)}\n")
        if hi != np.inf:
            out.write(f" UP BND {name} {_num(hi)}\n")
        elif model.integer[k] and lo != -np.inf:
            out.write(f" PL BND {name}\n")
    out.write("ENDATA\n")


def export_mps(model: LinearModel) -> str:
    buf = io.StringIO()
    write_mps(model, buf)
    return buf.getvalue()


def save_mps(model: LinearModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        write_mps(model, fh)


def _family_of(name: str) -> int:
    return _FAM.get(name.split("_", 1)[0], -1)


def parse_mps(text: str | Iterable[str]) -> LinearModel:
    """Parse free-format MPS into a LinearModel (row families recovered from row names)."""
    lines = text.splitlines() if isinstance(text, str) else text
    name = "MODEL"
    section = None
    obj_row = None
    row_index: dict[str, int] = {}
    row_names, senses = [], []
    col_index: dict[str, int] = {}
    col_names, integer = [], []
    c: list[float] = []
    trip_r, trip_c, trip_v = [], [], []
    rhs: dict[int, float] = {}
    bounds: list[tuple[str, int, float]] = []
    in_int = False

    def col(nm: str) -> int:
        if nm not in col_index:
            col_index[nm] = len(col_names)
            col_names.append(nm)
            integer.append(in_int)
            c.append(0.0)
        return col_index[nm]

    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("*"):
            continue
        tok = line.split()
        if not line[0].isspace():
            head = tok[0].upper()
            if head == "NAME":
                name = tok[1] if len(tok) > 1 else name
                continue
            if head == "ENDATA":
                break
            if head not in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "OBJSENSE"):
                raise MpsError(f"line {lineno}: unknown section {tok[0]!r}")
            section = head
            continue
        try:
            if section == "ROWS":
                s, nm = tok[0].upper(), tok[1]
                if s == "N":
                    if obj_row is None:
                        obj_row = nm
                    continue
                if s not in ("L", "E", "G"):
                    raise MpsError(f"line {lineno}: bad row type {tok[0]!r}")
                row_index[nm] = len(row_names)
                row_names.append(nm)
                senses.append(s)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1].strip("'").upper() == "MARKER":
                    tag = tok[2].strip("'").upper()
                    in_int = tag == "INTORG"
                    continue
                k = col(tok[0])
                for rn, val in zip(tok[1::2], tok[2::2]):
                    v = float(val)
                    if rn == obj_row:
                        c[k] = v
                    else:
                        if rn not in row_index:
                            raise MpsError(f"line {lineno}: unknown row {rn!r}")
                        trip_r.append(row_index[rn])
                        trip_c.append(k)
                        trip_v.append(v)
            elif section == "RHS":
                pairs = tok[1:] if len(tok) % 2 == 1 else tok
                for rn, val in zip(pairs[::2], pairs[1::2]):
                    if rn == obj_row:
                        continue
                    if rn not in row_index:
                        raise MpsError(f"line {lineno}: unknown row {rn!r}")
                    rhs[row_index[rn]] = float(val)
            elif section == "RANGES":
                raise MpsError(f"line {lineno}: ranged rows are not supported")
            elif section == "BOUNDS":
                kind = tok[0].upper()
                if kind not in _BOUND_KINDS:
                    raise MpsError(f"line {lineno}: unknown bound type {tok[0]!r}")
                cn = tok[2]
                if cn not in col_index:
                    raise MpsError(f"line {lineno}: unknown column {cn!r}")
                val = float(tok[3]) if len(tok) > 3 else 0.0
                bounds.append((kind, col_index[cn], val))
            elif section == "OBJSENSE":
                if tok[0].upper() not in ("MIN", "MINIMIZE"):
                    raise MpsError(f"line {lineno}: only minimization is supported")
            else:
                raise MpsError(f"line {lineno}: data outside any section")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MpsError):
                raise
            raise MpsError(f"line {lineno}: malformed entry {line.strip()!r}") from None

    n, m = len(col_names), len(row_names)
    lb, ub = np.zeros(n), np.full(n, np.inf)
    for kind, k, val in bounds:
        if kind == "UP":
            ub[k] = val
        elif kind == "LO":
            lb[k] = val
        elif kind == "FX":
            lb[k] = ub[k] = val
        elif kind == "FR":
            lb[k], ub[k] = -np.inf, np.inf
        elif kind == "MI":
            lb[k] = -np.inf
        elif kind == "PL":
            ub[k] = np.inf
        elif kind in ("LI", "UI"):
            integer[k] = True
            if kind == "LI":
                lb[k] = val
            else:
                ub[k] = val
        else:
            lb[k], ub[k] = 0.0, 1.0  # BV
            integer[k] = True
    rhs_arr = np.zeros(m)
    for r, v in rhs.items():
        rhs_arr[r] = v
    return LinearModel(
        c=np.array(c, dtype=float),
        rows=np.array(trip_r, dtype=np.int64), cols=np.array(trip_c, dtype=np.int64),
        vals=np.array(trip_v, dtype=float),
        senses=np.array(senses, dtype="<U1"), rhs=rhs_arr, lb=lb, ub=ub,
        integer=np.array(integer, dtype=bool),
        row_family=np.array([_family_of(r) for r in row_names], dtype=np.int8),
        row_names=row_names, col_names=col_names, name=name,
    )


def load_mps(path: str | Path) -> LinearModel:
    return parse_mps(Path(path).read_text())


def models_equal(a: LinearModel, b: LinearModel) -> bool:
    """Same names, coefficients, senses, right-hand sides, bounds and integrality."""
    if (a.n_rows, a.n_cols) != (b.n_rows, b.n_cols):
        return False
    names = all(a.row_name(r) == b.row_name(r) for r in range(a.n_rows)) and all(
        a.col_name(k) == b.col_name(k) for k in range(a.n_cols)
    )
    Aa, Ab = a.matrix.tocsc(), b.matrix.tocsc()
    for M in (Aa, Ab):
        M.sum_duplicates()
        M.sort_indices()
    return (
        names
        and np.array_equal(a.c, b.c)
        and np.array_equal(a.senses, b.senses)
        and np.array_equal(a.rhs, b.rhs)
        and np.array_equal(a.lb, b.lb)
        and np.array_equal(a.ub, b.ub)
        and np.array_equal(a.integer, b.integer)
        and np.array_equal(a.row_family, b.row_family)
        and np.array_equal(Aa.indptr, Ab.indptr)
        and np.array_equal(Aa.indices, Ab.indices)
        and np.array_equal(Aa.data, Ab.data)
    )
