"""Solver-agnostic assembly and solution of the convex subproblems.

Programs are declared through :class:`ConicProgram` (named scalar/vector
blocks, Hermitian PSD blocks, affine and cone constraints) and solved with
:func:`solve`, which owns the backend choice, tolerance policy, and status
mapping.  Callers never talk to a solver directly, so the same program can
be cross-checked on independent backends.

Complex Hermitian semidefinite blocks are realized for real-only conic
solvers through the standard doubling [[Re, -Im], [Im, Re]] (see
:func:`embed_hermitian` / :func:`extract_hermitian`); the modeling layer
applies exactly this reduction when lowering a Hermitian variable.
"""

from __future__ import annotations

import logging
import os
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

__all__ = [
    "cp",
    "ConicProgram",
    "ConicSolution",
    "solve",
    "embed_hermitian",
    "extract_hermitian",
    "trace_inner",
    "default_tolerance",
]

log = logging.getLogger(__name__)

_TOL_ENV_VAR = "IRSUAV_SOLVER_TOL"

# Subproblem callers treat objective changes below 1e-6 as converged; the
# solver itself runs one order tighter than that by default.
DEFAULT_TOL = 1e-8

# Interior-point backend is fastest and most accurate on small cones but
# scales poorly on big PSD blocks, where the first-order backend wins.
_PSD_DIM_FOR_FIRST_ORDER = 24


def default_tolerance() -> float:
    env = os.environ.get(_TOL_ENV_VAR)
    if env:
        return float(env)
    return DEFAULT_TOL


def embed_hermitian(M: np.ndarray) -> np.ndarray:
    """Real 2n x 2n embedding [[Re, -Im], [Im, Re]] of a complex matrix.

    For Hermitian M the embedding is symmetric, and M is PSD iff the
    embedding is PSD.
    """
    M = np.asarray(M)
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def extract_hermitian(S: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian`, averaging the redundant blocks."""
    S = np.asarray(S, dtype=float)
    m = S.shape[0]
    if S.shape != (m, m) or m % 2 != 0:
        raise ValueError(f"expected an even square matrix, got shape {S.shape}")
    n = m // 2
    re = 0.5 * (S[:n, :n] + S[n:, n:])
    im = 0.5 * (S[n:, :n] - S[:n, n:])
    return re + 1j * im


def trace_inner(C: np.ndarray, X) -> cp.Expression:
    """Re tr(C^H X) as an affine expression, for constant C and variable X."""
    C = np.asarray(C)
    return cp.real(cp.sum(cp.multiply(np.conj(C), X)))


@dataclass
class ConicSolution:
    """Outcome of one conic solve."""

    status: str  # optimal | infeasible | unbounded | numerical_failure
    values: dict | None
    objective: float | None
    tolerance_achieved: float | None
    solver: str | None = None
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    def __getitem__(self, name: str):
        if self.values is None:
            raise KeyError(f"no values on a {self.status} solution")
        return self.values[name]


class ConicProgram:
    """A convex program with named variable blocks.

    Variables are declared through the factory methods so that solutions can
    be read back by name; constraints and the objective are affine/cone
    expressions over those blocks.
    """

    def __init__(self, name: str = "") -> None:
        self.name = name
        self.variables: dict[str, cp.Variable] = {}
        self.constraints: list[cp.Constraint] = []
        self.objective: cp.problems.objective.Objective | None = None
        self.meta: dict = {}
        self._max_psd_dim = 0

    # -- variable factories -------------------------------------------------

    def _register(self, name: str, var: cp.Variable) -> cp.Variable:
        if name in self.variables:
            raise ValueError(f"variable {name!r} already declared")
        self.variables[name] = var
        return var

    def scalar(self, name: str, nonneg: bool = False) -> cp.Variable:
        return self._register(name, cp.Variable(name=name, nonneg=nonneg))

    def vector(self, name: str, n: int, nonneg: bool = False) -> cp.Variable:
        return self._register(name, cp.Variable(n, name=name, nonneg=nonneg))

    def hermitian_psd(self, name: str, n: int) -> cp.Variable:
        """An n x n complex Hermitian block constrained PSD.

        Lowered to real-only solvers via the 2n x 2n real embedding.
        """
        var = self._register(name, cp.Variable((n, n), name=name, hermitian=True))
        self.constraints.append(var >> 0)
        self._max_psd_dim = max(self._max_psd_dim, 2 * n)
        return var

    # -- program assembly ----------------------------------------------------

    def subject_to(self, *constraints) -> None:
        for c in constraints:
            if isinstance(c, (list, tuple)):
                self.constraints.extend(c)
            else:
                self.constraints.append(c)

    def add_psd(self, expr) -> None:
        """Constrain a symmetric affine matrix expression to be PSD."""
        self.constraints.append(expr >> 0)
        self._max_psd_dim = max(self._max_psd_dim, int(expr.shape[0]))

    def maximize(self, expr) -> None:
        self.objective = cp.Maximize(expr)

    def minimize(self, expr) -> None:
        self.objective = cp.Minimize(expr)

    def validate(self) -> list[str]:
        """Check that every constraint/objective references declared blocks."""
        problems: list[str] = []
        declared = {v.id for v in self.variables.values()}
        if self.objective is None:
            problems.append("no objective set")
        exprs = list(self.constraints)
        if self.objective is not None:
            exprs.append(self.objective.expr)
        for e in exprs:
            for v in e.variables():
                if v.id not in declared:
                    problems.append(f"undeclared variable {v.name()!r} referenced")
        return problems


_CLARABEL_STALL = (cp.settings.OPTIMAL_INACCURATE, cp.settings.SOLVER_ERROR)


def _attempt(problem: cp.Problem, solver: str, tol: float) -> str:
    if solver == "SCS":
        problem.solve(solver="SCS", eps=tol, max_iters=100_000)
    elif solver == "CLARABEL":
        problem.solve(
            solver="CLARABEL",
            tol_gap_abs=tol,
            tol_gap_rel=tol,
            tol_feas=tol,
            max_iter=300,
        )
    else:
        problem.solve(solver=solver)
    return problem.status


def solve(
    prog: ConicProgram,
    tol: float | None = None,
    solver: str | None = None,
) -> ConicSolution:
    """Solve a program to the requested tolerance.

    Tries the preferred backend at `tol`, relaxing tolerances and finally
    switching backends if the solver stalls; the tolerance actually accepted
    is reported back.  Statuses are mapped to {optimal, infeasible,
    unbounded, numerical_failure} and never raised as exceptions.
    """
    bad = prog.validate()
    if bad:
        raise ValueError(f"malformed program {prog.name!r}: {bad}")
    if tol is None:
        tol = default_tolerance()
    if solver is None:
        solver = "SCS" if prog._max_psd_dim >= _PSD_DIM_FOR_FIRST_ORDER else "CLARABEL"
    fallback = "SCS" if solver == "CLARABEL" else "CLARABEL"

    problem = cp.Problem(prog.objective, prog.constraints)
    ladder = [(solver, tol), (solver, tol * 100), (fallback, max(tol, 1e-9))]
    status = None
    used: tuple[str, float] | None = None
    message = ""
    for s, t in ladder:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                status = _attempt(problem, s, t)
        except cp.SolverError as exc:
            message = str(exc)
            log.debug("solver %s failed on %s: %s", s, prog.name, exc)
            continue
        used = (s, t)
        if status == cp.settings.OPTIMAL:
            break
        if status in (cp.settings.INFEASIBLE, cp.settings.UNBOUNDED):
            break

    if status is None:
        return ConicSolution("numerical_failure", None, None, None, None, message)

    solver_used, tol_used = used
    if status == cp.settings.OPTIMAL:
        values = {}
        for name, var in prog.variables.items():
            val = var.value
            if val is not None and np.ndim(val) == 0:
                val = float(val)
            values[name] = val
        return ConicSolution(
            "optimal", values, float(problem.value), tol_used, solver_used
        )
    if status == cp.settings.INFEASIBLE:
        return ConicSolution("infeasible", None, None, tol_used, solver_used)
    if status == cp.settings.UNBOUNDED:
        return ConicSolution("unbounded", None, None, tol_used, solver_used)
    return ConicSolution(
        "numerical_failure", None, None, tol_used, solver_used, str(status)
    )
