"""Problem and solution containers for the LP/MILP solver."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    TIME_LIMIT = "time-limit"

    def __str__(self):
        return self.value


class MilpProblem:
    """Sparse LP/MILP in the form  max/min c'x  s.t.  Ax {<=,=,>=} b,  l <= x <= u.

    Variables are added one at a time and referenced by their integer
    column id; constraints are sparse {column: coefficient} maps.
    """

    def __init__(self, sense: str = "max", name: str = "problem"):
        if sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")
        self.sense = sense
        self.name = name
        self.obj: list[float] = []
        self.lower: list[float] = []
        self.upper: list[float] = []
        self.is_integer: list[bool] = []
        self.var_names: list[str] = []
        self.rows: list[dict[int, float]] = []
        self.row_senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []

    # -- construction -------------------------------------------------------

    def add_variable(
        self,
        name: str | None = None,
        obj: float = 0.0,
        lb: float = 0.0,
        ub: float = np.inf,
        integer: bool = False,
    ) -> int:
        if lb > ub:
            raise ValueError(f"variable {name or len(self.obj)}: lower {lb} > upper {ub}")
        j = len(self.obj)
        self.obj.append(float(obj))
        self.lower.append(float(lb))
        self.upper.append(float(ub))
        self.is_integer.append(bool(integer))
        self.var_names.append(name if name is not None else f"x{j}")
        return j

    def add_constraint(self, coefs: dict[int, float], sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSES:
            raise ValueError(f"row sense must be one of {_SENSES}, got {sense!r}")
        k = len(self.rows)
        for j in coefs:
            if not 0 <= j < len(self.obj):
                raise ValueError(f"constraint {name or k} references unknown variable {j}")
        self.rows.append({int(j): float(v) for j, v in coefs.items() if v != 0.0})
        self.row_senses.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name if name is not None else f"c{k}")
        return k

    # -- views --------------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.obj)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def matrix(self) -> sp.csr_matrix:
        """Constraint matrix as CSR, shape (n_rows, n_vars)."""
        data, indices, indptr = [], [], [0]
        for row in self.rows:
            for j in sorted(row):
                indices.append(j)
                data.append(row[j])
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
            shape=(self.n_rows, self.n_vars),
        )

    def objective_value(self, x: np.ndarray) -> float:
        return float(np.dot(self.obj, x))

    def constraint_violation(self, x: np.ndarray) -> float:
        """Max violation of rows and bounds at x (0 means feasible)."""
        worst = 0.0
        ax = self.matrix() @ x
        for k, sense in enumerate(self.row_senses):
            r = ax[k] - self.rhs[k]
            if sense == LE:
                worst = max(worst, r)
            elif sense == GE:
                worst = max(worst, -r)
            else:
                worst = max(worst, abs(r))
        worst = max(worst, float(np.max(np.asarray(self.lower) - x, initial=0.0)))
        worst = max(worst, float(np.max(x - np.asarray(self.upper), initial=0.0)))
        return worst


@dataclass
class MilpSolution:
    status: SolveStatus
    x: np.ndarray
    objective: float = np.nan
    best_bound: float = np.nan
    node_count: int = 0
    iterations: int = 0
    wall_time: float = 0.0

    @property
    def is_optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    @property
    def has_solution(self) -> bool:
        return self.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE)


# ---------------------------------------------------------------------------
# LP text format dump (CPLEX-style), for cross-checking with external solvers.
# ---------------------------------------------------------------------------


def _lp_safe(name: str) -> str:
    out = []
    for ch in name:
        out.append(ch if ch.isalnum() or ch in "_.!#$%&" else "_")
    s = "".join(out)
    return s if s and not s[0].isdigit() else "v_" + s


def _lp_expr(coefs: dict[int, float], names: list[str]) -> str:
    terms = []
    for j in sorted(coefs):
        v = coefs[j]
        sign = "-" if v < 0 else "+"
        terms.append(f"{sign} {abs(v):.17g} {names[j]}")
    if not terms:
        return "0"
    first = terms[0]
    first = first[2:] if first.startswith("+ ") else "-" + first[2:]
    return " ".join([first] + terms[1:])


def write_lp(problem: MilpProblem, path: str | Path) -> None:
    """Dump the problem in LP text format."""
    names = [_lp_safe(n) for n in problem.var_names]
    lines = [f"\\ {problem.name}", "Maximize" if problem.sense == "max" else "Minimize"]
    obj = {j: v for j, v in enumerate(problem.obj) if v != 0.0}
    lines.append(" obj: " + _lp_expr(obj, names))
    lines.append("Subject To")
    for k, row in enumerate(problem.rows):
        op = {LE: "<=", EQ: "=", GE: ">="}[problem.row_senses[k]]
        lines.append(f" {_lp_safe(problem.row_names[k])}: {_lp_expr(row, names)} {op} {problem.rhs[k]:.17g}")
    lines.append("Bounds")
    for j in range(problem.n_vars):
        lb, ub = problem.lower[j], problem.upper[j]
        lo = "-inf" if np.isneginf(lb) else f"{lb:.17g}"
        hi = "+inf" if np.isposinf(ub) else f"{ub:.17g}"
        lines.append(f" {lo} <= {names[j]} <= {hi}")
    generals = [names[j] for j in range(problem.n_vars) if problem.is_integer[j]]
    if generals:
        lines.append("Generals")
        for k in range(0, len(generals), 8):
            lines.append(" " + " ".join(generals[k : k + 8]))
    lines.append("End")
    Path(path).write_text("\n".join(lines) + "\n")
