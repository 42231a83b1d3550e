"""MPS ingestion and conversion to standard equality form.

Accepts fixed- and free-format MPS (whitespace-tokenized, case
sensitive): NAME, OBJSENSE, ROWS, COLUMNS, RHS, RANGES, BOUNDS, ENDATA.
The first N row is the objective; integer markers and integer bound
types are rejected outright.  Conversion produces the maximization
standard form ``max c^T x, A x = b, x >= 0`` (minimization inputs are
negated) together with an affine map back to the original variables, so
objective values can be reported in original units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lp import LpProblem
from .sparse_linalg import SparseMatrix

__all__ = [
    "MpsModel",
    "MpsParseError",
    "StandardFormMap",
    "parse_mps",
    "to_standard_form",
]

_SECTIONS = ("NAME", "OBJSENSE", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA")
_SECTION_RANK = {name: i for i, name in enumerate(_SECTIONS)}
_SUPPORTED_BOUNDS = ("UP", "LO", "FX", "FR", "MI", "PL")
_REJECTED_BOUNDS = ("BV", "LI", "UI")


class MpsParseError(ValueError):
    """Malformed MPS input; the message carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass
class MpsModel:
    """Parsed MPS data, still in row/column record form."""

    name: str = ""
    minimize: bool = True
    objective_name: str = ""
    row_types: dict[str, str] = field(default_factory=dict)  # name -> E/L/G
    row_order: list[str] = field(default_factory=list)
    columns: list[str] = field(default_factory=list)
    entries: dict[str, dict[str, float]] = field(default_factory=dict)  # col -> row -> val
    objective: dict[str, float] = field(default_factory=dict)
    rhs: dict[str, float] = field(default_factory=dict)
    ranges: dict[str, float] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    objective_constant: float = 0.0


def _tokens(line: str) -> list[str]:
    return line.split()


def parse_mps(text: str) -> MpsModel:
    """Parse MPS text into an :class:`MpsModel`.

    Sections must appear in standard order and the file must end with
    ENDATA.  Duplicate row names, duplicate matrix entries, integer
    markers, and unsupported bound types are rejected with the line
    number.
    """
    model = MpsModel()
    section = None
    rank = -1
    saw_endata = False
    rhs_set_name = None
    range_set_name = None
    bound_set_name = None
    ignored_free_rows: set[str] = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        is_header = not raw[0].isspace()
        toks = _tokens(raw)

        if is_header:
            keyword = toks[0]
            if keyword not in _SECTION_RANK:
                raise MpsParseError(f"unknown section {keyword!r}", line_no)
            if _SECTION_RANK[keyword] <= rank:
                raise MpsParseError(f"section {keyword} out of order", line_no)
            rank = _SECTION_RANK[keyword]
            section = keyword
            if keyword == "NAME":
                model.name = toks[1] if len(toks) > 1 else ""
            elif keyword == "OBJSENSE" and len(toks) > 1:
                model.minimize = toks[1].upper() != "MAX"
            elif keyword == "ENDATA":
                saw_endata = True
                break
            continue

        if section is None:
            raise MpsParseError("data before any section header", line_no)

        if section == "OBJSENSE":
            model.minimize = toks[0].upper() != "MAX"

        elif section == "ROWS":
            if len(toks) != 2:
                raise MpsParseError("ROWS record needs a type and a name", line_no)
            rtype, rname = toks[0].upper(), toks[1]
            if rname in model.row_types or rname == model.objective_name or rname in ignored_free_rows:
                raise MpsParseError(f"duplicate row name {rname!r}", line_no)
            if rtype == "N":
                if not model.objective_name:
                    model.objective_name = rname
                else:
                    ignored_free_rows.add(rname)  # extra free rows are dropped
            elif rtype in ("E", "L", "G"):
                model.row_types[rname] = rtype
                model.row_order.append(rname)
            else:
                raise MpsParseError(f"unknown row type {rtype!r}", line_no)

        elif section == "COLUMNS":
            if len(toks) >= 3 and toks[1] == "'MARKER'":
                raise MpsParseError("integer variable markers are not supported", line_no)
            if len(toks) < 3 or len(toks) % 2 == 0:
                raise MpsParseError("COLUMNS record needs row/value pairs", line_no)
            col = toks[0]
            if col not in model.entries:
                model.entries[col] = {}
                model.columns.append(col)
            for rname, val in zip(toks[1::2], toks[2::2]):
                value = _parse_float(val, line_no)
                if rname == model.objective_name:
                    if col in model.objective:
                        raise MpsParseError(f"duplicate objective entry for {col!r}", line_no)
                    model.objective[col] = value
                elif rname in ignored_free_rows:
                    continue
                elif rname in model.row_types:
                    if rname in model.entries[col]:
                        raise MpsParseError(
                            f"duplicate entry ({col!r}, {rname!r})", line_no
                        )
                    model.entries[col][rname] = value
                else:
                    raise MpsParseError(f"entry references unknown row {rname!r}", line_no)

        elif section in ("RHS", "RANGES"):
            if len(toks) < 3 or len(toks) % 2 == 0:
                raise MpsParseError(f"{section} record needs row/value pairs", line_no)
            set_name = toks[0]
            if section == "RHS":
                if rhs_set_name is None:
                    rhs_set_name = set_name
                elif set_name != rhs_set_name:
                    continue  # only the first RHS vector is used
            else:
                if range_set_name is None:
                    range_set_name = set_name
                elif set_name != range_set_name:
                    continue
            for rname, val in zip(toks[1::2], toks[2::2]):
                value = _parse_float(val, line_no)
                if rname == model.objective_name:
                    if section == "RHS":
                        model.objective_constant = -value
                    continue
                if rname in ignored_free_rows:
                    continue
                if rname not in model.row_types:
                    raise MpsParseError(f"{section} references unknown row {rname!r}", line_no)
                target = model.rhs if section == "RHS" else model.ranges
                target[rname] = value

        elif section == "BOUNDS":
            if len(toks) < 3:
                raise MpsParseError("BOUNDS record too short", line_no)
            btype = toks[0].upper()
            if btype in _REJECTED_BOUNDS:
                raise MpsParseError(f"integer bound type {btype} is not supported", line_no)
            if btype not in _SUPPORTED_BOUNDS:
                raise MpsParseError(f"unknown bound type {btype!r}", line_no)
            set_name = toks[1]
            if bound_set_name is None:
                bound_set_name = set_name
            elif set_name != bound_set_name:
                continue
            col = toks[2]
            if col not in model.entries:
                raise MpsParseError(f"bound references unknown column {col!r}", line_no)
            lo, up = model.bounds.get(col, (0.0, math.inf))
            if btype in ("UP", "LO", "FX"):
                if len(toks) < 4:
                    raise MpsParseError(f"bound type {btype} needs a value", line_no)
                value = _parse_float(toks[3], line_no)
                if btype == "UP":
                    up = value
                elif btype == "LO":
                    lo = value
                else:
                    lo = up = value
            elif btype == "FR":
                lo, up = -math.inf, math.inf
            elif btype == "MI":
                lo = -math.inf
            elif btype == "PL":
                up = math.inf
            model.bounds[col] = (lo, up)

        else:  # pragma: no cover - sections are exhaustive
            raise MpsParseError(f"data in unexpected section {section}", line_no)

    if not saw_endata:
        raise MpsParseError("file ended without ENDATA")
    if not model.objective_name:
        raise MpsParseError("no objective (N) row declared")
    return model


def _parse_float(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MpsParseError(f"bad numeric literal {token!r}", line_no) from None
    if not math.isfinite(value):
        raise MpsParseError(f"non-finite value {token!r}", line_no)
    return value


@dataclass
class StandardFormMap:
    """Affine map between standard-form and original variables.

    Each original variable is ``offset + sum(coeff * x_std[col])``.
    ``original_objective`` evaluates the model's objective (in its own
    min/max sense and units, including the constant) at a standard-form
    point.
    """

    minimize: bool
    objective_constant: float
    original_names: list[str]
    terms: list[tuple[float, list[tuple[int, float]]]]
    original_coefficients: np.ndarray
    n_std: int
    _forward: callable = None

    def to_original(self, x_std: np.ndarray) -> np.ndarray:
        x_std = np.asarray(x_std, dtype=np.float64)
        out = np.empty(len(self.terms))
        for i, (offset, parts) in enumerate(self.terms):
            out[i] = offset + sum(coef * x_std[col] for col, coef in parts)
        return out

    def to_standard(self, x_orig: np.ndarray) -> np.ndarray:
        return self._forward(np.asarray(x_orig, dtype=np.float64))

    def original_objective(self, x_std: np.ndarray) -> float:
        x_orig = self.to_original(x_std)
        return float(self.original_coefficients @ x_orig) + self.objective_constant


def to_standard_form(model: MpsModel) -> tuple[LpProblem, StandardFormMap]:
    """Convert a parsed model to ``max c^T x, A x = b, x >= 0``.

    Inequalities gain slacks, ranged rows gain bounded slacks, bounded
    variables are shifted (with an extra bound row when two-sided), and
    free variables are split into differences of nonnegatives.  Columns
    that end up absent from every constraint are fixed at zero and
    dropped (they cannot carry a bounded optimum in max form unless
    their reduced objective is nonpositive, which is verified).
    """
    std_cols: list[tuple[str, int]] = []  # bookkeeping label, original index or -1
    col_obj: list[float] = []
    terms: list[tuple[float, list[tuple[int, float]]]] = []
    orig_coeffs = np.array([model.objective.get(c, 0.0) for c in model.columns])
    sense = -1.0 if model.minimize else 1.0

    # matrix assembled as (row, col, value) triplets over expanded rows
    tri_rows: list[int] = []
    tri_cols: list[int] = []
    tri_vals: list[float] = []

    n_rows = len(model.row_order)
    row_index = {name: i for i, name in enumerate(model.row_order)}
    rhs_vals = [0.0] * n_rows

    def new_col(label: str, obj_coef: float) -> int:
        std_cols.append((label, -1))
        col_obj.append(obj_coef)
        return len(std_cols) - 1

    forward_ops: list[tuple] = []  # recipe to rebuild x_std from x_orig

    # variable substitutions
    var_cols: dict[str, list[tuple[int, float]]] = {}
    var_offsets: dict[str, float] = {}
    bound_rows: list[tuple[int, float, float]] = []  # (std col, width, offset?) -> row added later
    for name in model.columns:
        lo, up = model.bounds.get(name, (0.0, math.inf))
        c_orig = sense * model.objective.get(name, 0.0)
        if lo == -math.inf and up == math.inf:
            p = new_col(f"{name}+", c_orig)
            q = new_col(f"{name}-", -c_orig)
            var_cols[name] = [(p, 1.0), (q, -1.0)]
            var_offsets[name] = 0.0
            forward_ops.append(("split", name, p, q))
        elif lo == -math.inf:
            j = new_col(f"{name}~", -c_orig)
            var_cols[name] = [(j, -1.0)]
            var_offsets[name] = up
            forward_ops.append(("mirror", name, j, up))
        else:
            j = new_col(name, c_orig)
            var_cols[name] = [(j, 1.0)]
            var_offsets[name] = lo
            forward_ops.append(("shift", name, j, lo))
            if up != math.inf:
                if up < lo:
                    raise MpsParseError(f"variable {name!r} has upper bound below lower")
                bound_rows.append((j, up - lo, 0.0))

    for name in model.columns:
        offset = var_offsets[name]
        terms.append((offset, var_cols[name]))

    # constraint rows with slacks
    for rname in model.row_order:
        rtype = model.row_types[rname]
        rhs = model.rhs.get(rname, 0.0)
        rng = model.ranges.get(rname)
        lo, hi = _row_interval(rtype, rhs, rng)
        r = row_index[rname]
        if lo == hi:
            rhs_vals[r] = lo
        elif hi < math.inf and lo == -math.inf:
            s = new_col(f"slack:{rname}", 0.0)
            tri_rows.append(r), tri_cols.append(s), tri_vals.append(1.0)
            rhs_vals[r] = hi
            forward_ops.append(("slack", rname, s, "le", hi))
        elif lo > -math.inf and hi == math.inf:
            s = new_col(f"surplus:{rname}", 0.0)
            tri_rows.append(r), tri_cols.append(s), tri_vals.append(-1.0)
            rhs_vals[r] = lo
            forward_ops.append(("slack", rname, s, "ge", lo))
        else:
            s = new_col(f"slack:{rname}", 0.0)
            tri_rows.append(r), tri_cols.append(s), tri_vals.append(1.0)
            rhs_vals[r] = hi
            bound_rows.append((s, hi - lo, 0.0))
            forward_ops.append(("slack", rname, s, "le", hi))

    # matrix entries of original variables, shifted through substitutions
    for name in model.columns:
        offset = var_offsets[name]
        for rname, coef in model.entries[name].items():
            r = row_index[rname]
            for col, factor in var_cols[name]:
                tri_rows.append(r), tri_cols.append(col), tri_vals.append(coef * factor)
            if offset != 0.0:
                rhs_vals[r] -= coef * offset

    # bound rows x_j + t = width
    for col, width, _ in bound_rows:
        r = len(rhs_vals)
        rhs_vals.append(width)
        t = new_col(f"bound:{std_cols[col][0]}", 0.0)
        tri_rows += [r, r]
        tri_cols += [col, t]
        tri_vals += [1.0, 1.0]
        forward_ops.append(("bound", col, t, width))

    n_std = len(std_cols)
    m_std = len(rhs_vals)
    A = SparseMatrix.from_coo(m_std, n_std, tri_rows, tri_cols, tri_vals)
    b = np.asarray(rhs_vals)
    c = np.asarray(col_obj)

    # drop columns that touch no constraint; a positive objective there
    # would make the problem unbounded
    counts = np.diff(A.csc.indptr)
    empty = np.where(counts == 0)[0]
    kept = np.where(counts > 0)[0]
    if empty.size:
        if np.any(c[empty] > 0.0):
            raise MpsParseError("unconstrained column with positive objective (unbounded)")
        remap = -np.ones(n_std, dtype=np.int64)
        remap[kept] = np.arange(kept.size)
        A = A.cols(kept)
        c = c[kept]
        terms = [
            (off, [(int(remap[col]), coef) for col, coef in parts if remap[col] >= 0])
            for off, parts in terms
        ]
        forward_ops = [op for op in forward_ops if _op_col(op) is None or remap[_op_col(op)] >= 0]
        forward_ops = [_remap_op(op, remap) for op in forward_ops]
        n_std = kept.size

    problem = LpProblem(A, b, c)
    fmap = StandardFormMap(
        minimize=model.minimize,
        objective_constant=model.objective_constant,
        original_names=list(model.columns),
        terms=terms,
        original_coefficients=orig_coeffs,
        n_std=n_std,
        _forward=_make_forward(model, forward_ops, row_index, n_std),
    )
    return problem, fmap


def _row_interval(rtype: str, rhs: float, rng: float | None) -> tuple[float, float]:
    # standard RANGES semantics: the row becomes two-sided with width |R|
    # (sign of R picks the side for E rows)
    if rng is None:
        if rtype == "E":
            return rhs, rhs
        if rtype == "L":
            return -math.inf, rhs
        return rhs, math.inf
    r = rng
    if rtype == "E":
        return (rhs, rhs + r) if r >= 0 else (rhs + r, rhs)
    if rtype == "L":
        return rhs - abs(r), rhs
    return rhs, rhs + abs(r)


def _op_col(op) -> int | None:
    # the std column whose removal invalidates the op (slack columns
    # always carry a constraint entry, so they are never dropped; a
    # split pair is dropped or kept as a whole)
    kind = op[0]
    if kind in ("split", "mirror", "shift"):
        return op[2]
    if kind == "bound":
        return op[1]
    return None


def _remap_op(op, remap):
    kind = op[0]
    if kind == "split":
        return (kind, op[1], int(remap[op[2]]), int(remap[op[3]]))
    if kind in ("mirror", "shift"):
        return (kind, op[1], int(remap[op[2]]), op[3])
    if kind == "slack":
        return (kind, op[1], int(remap[op[2]]), op[3], op[4])
    if kind == "bound":
        return (kind, int(remap[op[1]]), int(remap[op[2]]), op[3])
    return op


def _make_forward(model: MpsModel, ops, row_index, n_std):
    names = list(model.columns)
    name_pos = {n: i for i, n in enumerate(names)}
    row_entries: dict[str, list[tuple[int, float]]] = {r: [] for r in model.row_order}
    for cname in names:
        for rname, coef in model.entries[cname].items():
            row_entries[rname].append((name_pos[cname], coef))

    def forward(x_orig: np.ndarray) -> np.ndarray:
        if x_orig.shape != (len(names),):
            raise ValueError(f"expected {len(names)} original values")
        x_std = np.zeros(n_std)
        row_value = {
            r: sum(coef * x_orig[i] for i, coef in row_entries[r]) for r in row_entries
        }
        for op in ops:
            kind = op[0]
            if kind == "split":
                _, name, p, q = op
                val = x_orig[name_pos[name]]
                x_std[p] = max(val, 0.0)
                x_std[q] = max(-val, 0.0)
            elif kind == "mirror":
                _, name, j, up = op
                x_std[j] = up - x_orig[name_pos[name]]
            elif kind == "shift":
                _, name, j, lo = op
                x_std[j] = x_orig[name_pos[name]] - lo
            elif kind == "slack":
                _, rname, s, side, bnd = op
                val = row_value[rname]
                x_std[s] = (bnd - val) if side == "le" else (val - bnd)
            elif kind == "bound":
                _, col, t, width = op
                x_std[t] = width - x_std[col]
        return x_std

    return forward
