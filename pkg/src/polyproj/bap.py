"""Regularized nonsmooth Newton solver for projection onto a polyhedron.

Solves ``min 0.5*||x - v||^2  s.t.  A x = b, x_i >= 0`` on the
sign-constrained coordinates (coordinates may also be flagged free).
The entire KKT system collapses, through the Moreau decomposition of
``v + A^T y``, into the single residual equation

    F(y) = A * pi(v + A^T y) - b = 0,

where ``pi`` clamps sign-constrained coordinates at zero and passes free
coordinates through.  A Newton step on F uses a selected generalized
Jacobian ``V = sum_i u_i A_i A_i^T`` (u_i = 1 on the active set, a
norm-scaled weight on an independent subset of the boundary set) with a
Levenberg-Marquardt style shift ``lambda*I``.  No line search is used
and the residual is not monotone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sparse_linalg import (
    SparseMatrix,
    as_vector,
    assemble_normal_matrix,
    cholesky_shifted,
    conjugate_gradient,
    independent_columns,
)

__all__ = [
    "BapProblem",
    "IndexSets",
    "BapSolution",
    "RnnmConfig",
    "InvalidStateError",
    "residual",
    "moreau_split",
    "classify_indices",
    "generalized_jacobian",
    "regularization_lambda",
    "solve_rnnm",
    "dual_objective",
    "kkt_report",
    "is_vertex",
    "CONVERGED",
    "MAX_ITER",
    "STALLED",
    "NONDEGENERATE_VERTEX",
    "DEGENERATE_VERTEX",
    "NON_VERTEX",
]

CONVERGED = "converged"
MAX_ITER = "max_iter"
STALLED = "stalled"

NONDEGENERATE_VERTEX = "nondegenerate_vertex"
DEGENERATE_VERTEX = "degenerate_vertex"
NON_VERTEX = "non_vertex"


class InvalidStateError(RuntimeError):
    """An operation was asked of a solution in the wrong state."""


@dataclass(frozen=True, eq=False)
class BapProblem:
    """Projection instance: anchor ``v``, constraints ``A x = b``.

    ``free`` flags coordinates exempt from the nonnegativity constraint
    (all-constrained when None).  ``A`` must have no all-zero columns;
    feasibility is not checked and surfaces as non-convergence.
    """

    A: SparseMatrix
    b: np.ndarray
    v: np.ndarray
    free: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "b", as_vector(self.b, self.A.nrows, "b"))
        object.__setattr__(self, "v", as_vector(self.v, self.A.ncols, "v"))
        if self.free is None:
            free = np.zeros(self.A.ncols, dtype=bool)
        else:
            free = np.asarray(self.free, dtype=bool)
            if free.shape != (self.A.ncols,):
                raise ValueError("free mask must have one flag per column")
        object.__setattr__(self, "free", free)
        if self.A.has_zero_column():
            raise ValueError("constraint matrix has an all-zero column")
        object.__setattr__(self, "_col_norms", self.A.column_norms())

    @property
    def m(self) -> int:
        return self.A.nrows

    @property
    def n(self) -> int:
        return self.A.ncols

    @property
    def n_free(self) -> int:
        return int(np.count_nonzero(self.free))

    @property
    def column_norms(self) -> np.ndarray:
        return self._col_norms


@dataclass(frozen=True)
class IndexSets:
    """Sign partition of the constrained coordinates of ``v + A^T y``.

    ``i_zero_bar`` is a maximal linearly independent subset of the
    columns indexed by ``i_zero``.  Free coordinates are not listed;
    they always count as active for Jacobian purposes.
    """

    i_plus: np.ndarray
    i_zero: np.ndarray
    i_minus: np.ndarray
    i_zero_bar: np.ndarray


@dataclass
class BapSolution:
    """Primal-dual certificate ``(x, y, z)`` with solve diagnostics.

    By construction ``x - z = v + A^T y`` holds exactly and
    ``z^T x = 0`` exactly (disjoint supports).
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    rel_residual: float
    iterations: int
    status: str
    trace: list[tuple[int, float, float]] | None = None


@dataclass(frozen=True)
class RnnmConfig:
    """Newton solver parameters.

    ``mode`` selects the linear solve: "exact" factors the shifted
    Jacobian with Cholesky, "inexact" runs preconditioned CG to the
    residual bound ``theta * ||F_k||^nu``.  ``regularization`` selects
    the shift rule: "adaptive" uses the residual/direction/anchor mean,
    "fixed" uses min(1e-3, stopcrit) in exact mode and stopcrit**delta
    in inexact mode.  Damping halves steps once the iteration count
    passes ``damping_onset``.  On hitting ``max_iter`` the best iterate
    is accepted if it meets ``10 * tol`` (one-shot relaxed retry).
    """

    tol: float = 1e-14
    max_iter: int = 2000
    mode: str = "exact"
    delta: float = 1.0
    nu: float = 2.0
    theta: float = 0.5
    cg_max_iter: int = 0
    regularization: str = "adaptive"
    damping: bool = True
    damping_onset: int = 500
    zero_tol: float | None = None
    relax_on_max_iter: bool = True
    collect_trace: bool = False

    def __post_init__(self):
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")
        if self.mode not in ("exact", "inexact"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.regularization not in ("adaptive", "fixed"):
            raise ValueError(f"unknown regularization {self.regularization!r}")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if not 1.0 + self.delta / 2.0 <= self.nu <= 2.0:
            raise ValueError("nu must lie in [1 + delta/2, 2]")
        if not 0.0 <= self.theta < 1.0:
            raise ValueError("theta must lie in [0, 1)")


def _inner_point(problem: BapProblem, y: np.ndarray) -> np.ndarray:
    # Single canonical evaluation of v + A^T y; every consumer reuses it
    # so the Moreau identities hold bitwise across the module.
    return problem.v + problem.A.rmatvec(y)


def moreau_split(problem: BapProblem, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(x, z, p)`` with ``p = v + A^T y`` and ``x - z = p`` exact."""
    y = as_vector(y, problem.m, "y")
    p = _inner_point(problem, y)
    x = np.where(problem.free, p, np.maximum(p, 0.0))
    z = x - p
    return x, z, p


def residual(problem: BapProblem, y) -> np.ndarray:
    """Newton residual ``F(y) = A * pi(v + A^T y) - b``."""
    x, _, _ = moreau_split(problem, y)
    return problem.A.matvec(x) - problem.b


def default_zero_tol(p: np.ndarray) -> float:
    """Scale-relative threshold deciding membership of the boundary set."""
    scale = float(np.max(np.abs(p))) if p.size else 0.0
    return 1e-11 * (1.0 + scale)


def classify_indices(problem: BapProblem, y, zero_tol: float | None = None) -> IndexSets:
    """Partition constrained coordinates by the sign of ``v + A^T y``.

    Entries within ``zero_tol`` of zero land in the boundary set (ties
    at exactly zero are boundary, never active); the independent subset
    is extracted by rank-revealing QR.
    """
    y = as_vector(y, problem.m, "y")
    p = _inner_point(problem, y)
    if zero_tol is None:
        zero_tol = default_zero_tol(p)
    constrained = ~problem.free
    zero = constrained & (np.abs(p) <= zero_tol)
    plus = constrained & (p > zero_tol)
    minus = constrained & ~zero & ~plus
    i_zero = np.where(zero)[0]
    i_zero_bar = independent_columns(problem.A, i_zero) if i_zero.size else i_zero
    return IndexSets(np.where(plus)[0], i_zero, np.where(minus)[0], i_zero_bar)


def generalized_jacobian(problem: BapProblem, sets: IndexSets) -> SparseMatrix:
    """Selected generalized Jacobian ``V = sum u_i A_i A_i^T``.

    Active and free columns carry weight one; columns of the independent
    boundary subset carry ``min(1, 1/||A_i||^2)``, the diagonal scaling
    that conditions the chosen Jacobian.
    """
    free_idx = np.where(problem.free)[0]
    support = np.concatenate([sets.i_plus, free_idx, sets.i_zero_bar])
    weights = np.ones(problem.n)
    if sets.i_zero_bar.size:
        norms = problem.column_norms[sets.i_zero_bar]
        weights[sets.i_zero_bar] = np.minimum(1.0, 1.0 / norms**2)
    return assemble_normal_matrix(problem.A, weights, support)


def regularization_lambda(
    config: RnnmConfig,
    rel_residual: float,
    newton_dir_norm: float,
    v_norm: float,
) -> float:
    """Shift parameter for the current iteration.

    Fixed rule: ``min(1e-3, r)`` (exact mode) or ``r**delta`` (inexact).
    Adaptive rule: arithmetic mean of ``1e-2*r*max(1, log10 ||d||)``,
    ``1e-3*r*max(1, log10 ||v||)`` and ``1e-3*r``; the log terms floor
    at one, which also covers the first iteration where no direction
    norm exists yet.
    """
    r = float(rel_residual)
    if config.regularization == "fixed":
        if config.mode == "exact":
            return min(1e-3, r)
        return r**config.delta
    log_d = max(1.0, np.log10(newton_dir_norm)) if newton_dir_norm > 0.0 else 1.0
    log_v = max(1.0, np.log10(v_norm)) if v_norm > 0.0 else 1.0
    terms = (1e-2 * r * log_d, 1e-3 * r * log_v, 1e-3 * r)
    return float(sum(terms) / 3.0)


def solve_rnnm(
    problem: BapProblem,
    y0=None,
    config: RnnmConfig | None = None,
) -> BapSolution:
    """Run the regularized nonsmooth Newton iteration from ``y0``.

    Each step solves ``(V_k + lambda I) d = -F_k`` (Cholesky in exact
    mode, Jacobi-preconditioned CG to ``theta*||F_k||^nu`` in inexact
    mode) and sets ``y <- y + d``; no line search.  Stops when
    ``||F(y)|| / (1 + ||b||) <= tol``, the step no longer changes ``y``
    at machine precision (stalled), or ``max_iter`` is hit, in which
    case the best iterate seen is returned (accepted as converged if it
    meets ``10 * tol``).
    """
    cfg = config if config is not None else RnnmConfig()
    y = np.zeros(problem.m) if y0 is None else as_vector(y0, problem.m, "y0").copy()

    x, z, p = moreau_split(problem, y)
    F = problem.A.matvec(x) - problem.b
    nb = 1.0 + float(np.linalg.norm(problem.b))
    stopcrit = float(np.linalg.norm(F)) / nb
    v_norm = float(np.linalg.norm(problem.v))

    best_res, best_y, best_k = stopcrit, y.copy(), 0
    trace: list[tuple[int, float, float]] = []
    d_norm = 0.0
    k = 0
    status = CONVERGED if stopcrit <= cfg.tol else MAX_ITER

    while stopcrit > cfg.tol and k < cfg.max_iter:
        sets = classify_indices(problem, y, cfg.zero_tol)
        V = generalized_jacobian(problem, sets)
        lam = regularization_lambda(cfg, stopcrit, d_norm, v_norm)
        if cfg.mode == "exact":
            d = cholesky_shifted(V, lam).solve(-F)
        else:
            cg_iters = cfg.cg_max_iter if cfg.cg_max_iter > 0 else max(10 * problem.m, 50)
            tol_cg = cfg.theta * float(np.linalg.norm(F)) ** cfg.nu
            csc = V.csc
            d, _ = conjugate_gradient(
                lambda q, _csc=csc, _lam=lam: _csc @ q + _lam * q,
                -F,
                tol_cg,
                cg_iters,
                diag=V.diagonal() + lam,
            )
        if cfg.damping and k >= cfg.damping_onset:
            d = 0.5 * d
        y_next = y + d
        if np.array_equal(y_next, y):
            status = STALLED
            break
        y = y_next
        d_norm = float(np.linalg.norm(d))
        x, z, p = moreau_split(problem, y)
        F = problem.A.matvec(x) - problem.b
        stopcrit = float(np.linalg.norm(F)) / nb
        k += 1
        if cfg.collect_trace:
            trace.append((k, stopcrit, lam))
        if stopcrit < best_res:
            best_res, best_y, best_k = stopcrit, y.copy(), k
        if stopcrit <= cfg.tol:
            status = CONVERGED
            break
    else:
        if stopcrit <= cfg.tol:
            status = CONVERGED

    if status != CONVERGED:
        # fall back to the best iterate; accept it at the relaxed
        # tolerance (the one-shot 10*tol retry, without re-running)
        y = best_y
        x, z, p = moreau_split(problem, y)
        F = problem.A.matvec(x) - problem.b
        stopcrit = float(np.linalg.norm(F)) / nb
        if cfg.relax_on_max_iter and status == MAX_ITER and stopcrit <= 10.0 * cfg.tol:
            status = CONVERGED

    return BapSolution(
        x=x,
        y=y,
        z=z,
        rel_residual=stopcrit,
        iterations=k,
        status=status,
        trace=trace if cfg.collect_trace else None,
    )


def dual_objective(problem: BapProblem, y, z) -> float:
    """Dual functional ``-0.5||z + A^T y||^2 + y^T(b - A v) - z^T v``.

    Equals the primal value at a converged certificate (strong duality);
    below it at any feasible ``(y, z)``.
    """
    y = as_vector(y, problem.m, "y")
    z = as_vector(z, problem.n, "z")
    zay = z + problem.A.rmatvec(y)
    av = problem.A.matvec(problem.v)
    return float(-0.5 * (zay @ zay) + y @ (problem.b - av) - z @ problem.v)


def kkt_report(problem: BapProblem, sol: BapSolution) -> tuple[float, float, float]:
    """Relative KKT residuals ``(primal, dual, complementarity)``.

    Dual feasibility and complementary slackness vanish to machine
    precision for Moreau-constructed certificates; the primal residual
    is the convergence measure.
    """
    p = _inner_point(problem, sol.y)
    primal = float(np.linalg.norm(problem.A.matvec(sol.x) - problem.b))
    primal /= 1.0 + float(np.linalg.norm(problem.b))
    dual_vec = (sol.x - sol.z) - p
    dual = float(np.linalg.norm(dual_vec)) / (1.0 + float(np.linalg.norm(problem.v)))
    comp = abs(float(sol.z @ sol.x))
    comp /= 1.0 + max(float(np.linalg.norm(sol.x)), float(np.linalg.norm(sol.z)))
    return primal, dual, comp


def is_vertex(problem: BapProblem, sol: BapSolution, zero_tol: float | None = None) -> str:
    """Classify the converged optimum as a vertex of the feasible set.

    A vertex requires full column rank of A on the active coordinates;
    nondegeneracy additionally requires the basic count ``m - n_free``
    of strictly positive constrained coordinates and an empty boundary
    set (strict complementarity).
    """
    if sol.status != CONVERGED:
        raise InvalidStateError("vertex classification requires a converged solution")
    sets = classify_indices(problem, sol.y, zero_tol)
    free_idx = np.where(problem.free)[0]
    active = np.concatenate([sets.i_plus, free_idx])
    kept = independent_columns(problem.A, active)
    if kept.size < active.size:
        return NON_VERTEX
    basic_count = problem.m - problem.n_free
    if sets.i_plus.size == basic_count and sets.i_zero.size == 0:
        return NONDEGENERATE_VERTEX
    return DEGENERATE_VERTEX
