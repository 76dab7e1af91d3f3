"""Fixed-field MPS and CPLEX LP-text serialization of a :class:`LinearProgram`.

Both writers are deterministic: columns and rows are emitted in index order
and numbers use a fixed format. The readers accept the subset the writers
produce, which is enough to hand a program to an external solver and back.
Fixed-field MPS rounds every number to its 12-character field, so an MPS
round trip is approximate; LP text carries 17 significant digits and is exact.
"""
import logging
import re
from typing import Dict, List, Literal

import numpy as np
import scipy.sparse as sp

from multitax.src.exceptions import ArgumentError
from multitax.src.models.lp import LinearProgram
from multitax.src.services.lp_service import validate_lp

logger = logging.getLogger(__name__)

MPS_NAME_WIDTH = 8
MPS_NUMBER_WIDTH = 12
_LP_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")
_LP_SENSE = {"G": ">=", "L": "<=", "E": "="}


def lp_export(lp: LinearProgram, fmt: Literal["mps", "lp-text"] = "mps") -> bytes:
    """
    Serializes a program.

    Args:
        lp (LinearProgram): Program to write.
        fmt (str): "mps" (fixed fields) or "lp-text" (CPLEX LP subset).

    Returns:
        bytes: ASCII text ending in a newline.
    """
    validate_lp(lp)
    if fmt == "mps":
        text = write_mps(lp)
    elif fmt == "lp-text":
        text = write_lp_text(lp)
    else:
        raise ArgumentError(f"unknown LP format '{fmt}'")
    return text.encode("ascii")


def lp_import(data: bytes, fmt: Literal["mps", "lp-text"] = "mps") -> LinearProgram:
    text = data.decode("ascii")
    if fmt == "mps":
        return read_mps(text)
    if fmt == "lp-text":
        return read_lp_text(text)
    raise ArgumentError(f"unknown LP format '{fmt}'")


# ─────────────────────────────────────────────────────────────
# 📄 MPS
# ─────────────────────────────────────────────────────────────
def mps_number(value: float) -> str:
    """
    Most precise ``%g`` rendering that fits the 12-character MPS field.

    Lossy: moderate magnitudes keep about 10 significant digits, and negative
    or small values with a two-digit exponent keep no fewer than 6.
    """
    for digits in range(12, 0, -1):
        text = f"{value:.{digits}g}"
        if len(text) <= MPS_NUMBER_WIDTH:
            return text
    raise ArgumentError(f"cannot fit {value!r} into an MPS number field")


def mps_line(f1: str = "", f2: str = "", f3: str = "", f4: str = "", f5: str = "", f6: str = "") -> str:
    """Data line with fields starting at columns 2, 5, 15, 25, 40 and 50."""
    line = (" " + f1.ljust(2) + " " + f2.ljust(8) + "  " + f3.ljust(8) + "  "
            + f4.ljust(12) + "   " + f5.ljust(8) + "  " + f6)
    return line.rstrip()


def _check_mps_name(name: str) -> str:
    if not name or len(name) > MPS_NAME_WIDTH or any(ch.isspace() for ch in name):
        raise ArgumentError(f"'{name}' is not a valid fixed-MPS name (1-8 characters, no spaces)")
    return name


def write_mps(lp: LinearProgram) -> str:
    for name in (*lp.var_names, *lp.row_names, lp.name):
        _check_mps_name(name)
    if "OBJ" in lp.row_names:
        raise ArgumentError("row name 'OBJ' is reserved for the objective")
    lines: List[str] = [f"NAME          {lp.name}", "ROWS", mps_line("N", "OBJ")]
    lines += [mps_line(sense, name) for sense, name in zip(lp.senses, lp.row_names)]

    lines.append("COLUMNS")
    csc = lp.matrix.tocsc()
    for j, var in enumerate(lp.var_names):
        if lp.objective[j] != 0:
            lines.append(mps_line("", var, "OBJ", mps_number(lp.objective[j])))
        start, end = csc.indptr[j], csc.indptr[j + 1]
        order = np.argsort(csc.indices[start:end], kind="stable")
        for i, v in zip(csc.indices[start:end][order], csc.data[start:end][order]):
            if v != 0:
                lines.append(mps_line("", var, lp.row_names[i], mps_number(v)))

    lines.append("RHS")
    for i in np.flatnonzero(lp.rhs):
        lines.append(mps_line("", "RHS", lp.row_names[i], mps_number(lp.rhs[i])))

    lines.append("BOUNDS")
    for var, lo, hi in zip(lp.var_names, lp.lower, lp.upper):
        if lo == hi:
            lines.append(mps_line("FX", "BND", var, mps_number(lo)))
            continue
        if np.isinf(lo) and np.isinf(hi):
            lines.append(mps_line("FR", "BND", var))
            continue
        if np.isinf(lo):
            lines.append(mps_line("MI", "BND", var))
        elif lo != 0:
            lines.append(mps_line("LO", "BND", var, mps_number(lo)))
        if np.isfinite(hi):
            lines.append(mps_line("UP", "BND", var, mps_number(hi)))
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def read_mps(text: str) -> LinearProgram:
    name = "MULTITAX"
    section = None
    senses: Dict[str, str] = {}
    row_order: List[str] = []
    var_order: List[str] = []
    entries: Dict[str, Dict[str, float]] = {}
    objective: Dict[str, float] = {}
    rhs: Dict[str, float] = {}
    lower: Dict[str, float] = {}
    upper: Dict[str, float] = {}
    obj_row = None

    for number, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0]
            if section == "NAME" and len(head) > 1:
                name = head[1]
            elif section == "ENDATA":
                break
            elif section not in ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS"):
                raise ArgumentError(f"line {number}: unsupported MPS section '{section}'")
            continue
        fields = raw.split()
        if section == "ROWS":
            kind, row = fields
            if kind == "N":
                obj_row = obj_row or row
                continue
            if kind not in _LP_SENSE:
                raise ArgumentError(f"line {number}: unknown row type '{kind}'")
            senses[row] = kind
            row_order.append(row)
        elif section == "COLUMNS":
            var = fields[0]
            if var not in entries:
                entries[var] = {}
                var_order.append(var)
            for row, value in zip(fields[1::2], fields[2::2]):
                if row == obj_row:
                    objective[var] = float(value)
                elif row in senses:
                    entries[var][row] = float(value)
                else:
                    raise ArgumentError(f"line {number}: unknown row '{row}'")
        elif section == "RHS":
            for row, value in zip(fields[1::2], fields[2::2]):
                if row != obj_row:
                    rhs[row] = float(value)
        elif section == "BOUNDS":
            kind, var = fields[0], fields[2]
            value = float(fields[3]) if len(fields) > 3 else None
            if kind == "FX":
                lower[var] = upper[var] = value
            elif kind == "FR":
                lower[var], upper[var] = -np.inf, np.inf
            elif kind == "MI":
                lower[var] = -np.inf
            elif kind == "LO":
                lower[var] = value
            elif kind == "UP":
                upper[var] = value
            else:
                raise ArgumentError(f"line {number}: unsupported bound type '{kind}'")
        else:
            raise ArgumentError(f"line {number}: data outside a section")

    row_index = {row: i for i, row in enumerate(row_order)}
    rows, cols, vals = [], [], []
    for j, var in enumerate(var_order):
        for row, value in entries[var].items():
            rows.append(row_index[row])
            cols.append(j)
            vals.append(value)
    return _assemble(name, var_order, row_order, [senses[r] for r in row_order],
                     [rhs.get(r, 0.0) for r in row_order], objective, lower, upper, rows, cols, vals)


# ─────────────────────────────────────────────────────────────
# 📝 LP TEXT
# ─────────────────────────────────────────────────────────────
def _num(value: float) -> str:
    return f"{value:.17g}"


def _terms(coefs, names) -> List[str]:
    out = []
    for v, name in zip(coefs, names):
        out.append(f"{'-' if v < 0 else '+'} {_num(abs(v))} {name}")
    return out


def _wrap(head: str, terms: List[str], tail: str = "", per_line: int = 6) -> List[str]:
    lines = []
    for k in range(0, max(len(terms), 1), per_line):
        chunk = " ".join(terms[k:k + per_line])
        lines.append((f" {head} " if k == 0 else "   ") + chunk)
    if tail:
        lines[-1] += " " + tail
    return lines


def write_lp_text(lp: LinearProgram) -> str:
    for name in (*lp.var_names, *lp.row_names):
        if not _LP_NAME.match(name):
            raise ArgumentError(f"'{name}' is not a valid LP-text name")
    if "obj" in lp.row_names:
        raise ArgumentError("row name 'obj' is reserved for the objective")
    lines = [f"\\ {lp.name}", "Minimize"]
    # every column is listed so the column order survives a round trip
    lines += _wrap("obj:", _terms(lp.objective, lp.var_names))
    lines.append("Subject To")
    csr = lp.matrix.tocsr()
    for i, row in enumerate(lp.row_names):
        start, end = csr.indptr[i], csr.indptr[i + 1]
        order = np.argsort(csr.indices[start:end], kind="stable")
        idx, vals = csr.indices[start:end][order], csr.data[start:end][order]
        if idx.size == 0:
            idx, vals = np.array([0]), np.array([0.0])
        lines += _wrap(f"{row}:", _terms(vals, [lp.var_names[j] for j in idx]),
                       f"{_LP_SENSE[lp.senses[i]]} {_num(lp.rhs[i])}")
    lines.append("Bounds")
    for var, lo, hi in zip(lp.var_names, lp.lower, lp.upper):
        if lo == hi:
            lines.append(f" {var} = {_num(lo)}")
        elif np.isinf(lo) and np.isinf(hi):
            lines.append(f" {var} free")
        elif np.isinf(lo):
            lines.append(f" -inf <= {var} <= {_num(hi)}")
        elif np.isfinite(hi):
            lines.append(f" {_num(lo)} <= {var} <= {_num(hi)}")
        elif lo != 0:
            lines.append(f" {var} >= {_num(lo)}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def _parse_number(token: str) -> float:
    lowered = token.lower()
    if lowered in ("inf", "+inf", "infinity"):
        return np.inf
    if lowered in ("-inf", "-infinity"):
        return -np.inf
    return float(token)


def _parse_terms(tokens: List[str]):
    names, coefs = [], []
    k = 0
    while k + 2 < len(tokens) and tokens[k] in ("+", "-"):
        sign = -1.0 if tokens[k] == "-" else 1.0
        coefs.append(sign * float(tokens[k + 1]))
        names.append(tokens[k + 2])
        k += 3
    return names, coefs, tokens[k:]


def read_lp_text(text: str) -> LinearProgram:
    name = "MULTITAX"
    section = None
    entries: List[List[str]] = []
    bounds: List[str] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("\\"):
            if number == 1 and stripped[1:].strip():
                name = stripped[1:].strip()
            continue
        lowered = stripped.lower()
        if lowered in ("minimize", "subject to", "bounds", "end"):
            section = lowered
            if section == "end":
                break
            continue
        if section in ("minimize", "subject to"):
            tokens = stripped.split()
            if tokens[0].endswith(":"):
                entries.append([section, str(number)] + tokens)
            elif entries:
                entries[-1].extend(tokens)
            else:
                raise ArgumentError(f"line {number}: continuation without a row")
        elif section == "bounds":
            bounds.append(stripped)
        else:
            raise ArgumentError(f"line {number}: text outside a section")

    objective: Dict[str, float] = {}
    var_order: List[str] = []
    row_order: List[str] = []
    senses: List[str] = []
    rhs: List[float] = []
    rows, cols, vals = [], [], []
    col_of: Dict[str, int] = {}

    def column(var: str) -> int:
        if var not in col_of:
            col_of[var] = len(var_order)
            var_order.append(var)
        return col_of[var]

    inverse_sense = {v: k for k, v in _LP_SENSE.items()}
    for entry in entries:
        section, number, label, tokens = entry[0], int(entry[1]), entry[2][:-1], entry[3:]
        names, coefs, rest = _parse_terms(tokens)
        if section == "minimize":
            for var, v in zip(names, coefs):
                objective[var] = objective.get(var, 0.0) + v
                column(var)
            continue
        if len(rest) != 2 or rest[0] not in inverse_sense:
            raise ArgumentError(f"line {number}: expected '<sense> <rhs>' after the terms of '{label}'")
        i = len(row_order)
        row_order.append(label)
        senses.append(inverse_sense[rest[0]])
        rhs.append(_parse_number(rest[1]))
        for var, v in zip(names, coefs):
            rows.append(i)
            cols.append(column(var))
            vals.append(v)

    lower: Dict[str, float] = {}
    upper: Dict[str, float] = {}
    for line in bounds:
        tokens = line.split()
        if len(tokens) == 2 and tokens[1].lower() == "free":
            lower[tokens[0]], upper[tokens[0]] = -np.inf, np.inf
        elif len(tokens) == 3 and tokens[1] == "=":
            lower[tokens[0]] = upper[tokens[0]] = _parse_number(tokens[2])
        elif len(tokens) == 3 and tokens[1] == ">=":
            lower[tokens[0]] = _parse_number(tokens[2])
        elif len(tokens) == 3 and tokens[1] == "<=":
            upper[tokens[0]] = _parse_number(tokens[2])
        elif len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
            lower[tokens[2]] = _parse_number(tokens[0])
            upper[tokens[2]] = _parse_number(tokens[4])
        else:
            raise ArgumentError(f"unsupported bound line '{line}'")
    return _assemble(name, var_order, row_order, senses, rhs, objective, lower, upper, rows, cols, vals)


def _assemble(name, var_order, row_order, senses, rhs, objective, lower, upper, rows, cols, vals) -> LinearProgram:
    matrix = sp.coo_matrix(
        (np.asarray(vals, dtype=float), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(row_order), len(var_order)),
    ).tocsr()
    matrix.sum_duplicates()
    matrix.eliminate_zeros()
    lp = LinearProgram(
        objective=np.array([objective.get(v, 0.0) for v in var_order], dtype=float),
        matrix=matrix,
        senses=np.array(senses, dtype="<U1"),
        rhs=np.array(rhs, dtype=float),
        lower=np.array([lower.get(v, 0.0) for v in var_order], dtype=float),
        upper=np.array([upper.get(v, np.inf) for v in var_order], dtype=float),
        var_names=tuple(var_order),
        row_names=tuple(row_order),
        name=name,
    )
    logger.debug(f"📂 parsed LP '{name}' with {lp.n_vars} columns and {lp.n_rows} rows")
    return lp
