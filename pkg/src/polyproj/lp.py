"""External path-following LP solver built on parametrized projections.

For ``max c^T x  s.t.  A x = b, x >= 0`` the projection of ``R*c`` onto
the feasible set equals the LP optimum once ``R`` is large enough.  The
solver works with the equivalent scaled subproblem (anchor ``c``, right
hand side ``b/R``), whose solution ``w`` satisfies ``x(R) = R*w``.  A
sensitivity ratio test on the support sets of ``(w, z)`` yields the
largest ``R_n`` at which the support partition survives; jumping just
past these stepping stones, with warm-started multipliers, walks the
path in a handful of projection solves.  ``R_n = inf`` certifies LP
optimality.  Primal/dual bound certificates come from a companion
free-variable projection onto the nearest dual-feasible point.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bap import BapProblem, BapSolution, CONVERGED, RnnmConfig, solve_rnnm
from .sparse_linalg import (
    SparseMatrix,
    as_vector,
    least_squares_solve,
    nullspace_basis,
)

__all__ = [
    "LpProblem",
    "BasisPartition",
    "SsepfState",
    "LpCertificate",
    "LpConfig",
    "StoneRecord",
    "LpResult",
    "NextStone",
    "InconsistentCertificateError",
    "SensitivityFailureError",
    "SubproblemFailureError",
    "initial_radius",
    "scaled_subproblem",
    "classify_bases",
    "ratio_test",
    "next_stone",
    "lp_bounds",
    "solve_lp",
]


class InconsistentCertificateError(ValueError):
    """w and z overlap after thresholding; the subproblem did not converge."""


class SensitivityFailureError(RuntimeError):
    """The sensitivity least-squares system is inconsistent beyond tolerance."""


class SubproblemFailureError(RuntimeError):
    """A projection subproblem stayed unconverged through the retry ladder."""

    def __init__(self, stone: int, rel_residual: float):
        super().__init__(
            f"subproblem at stone {stone} unconverged (rel residual {rel_residual:.3e})"
        )
        self.stone = stone
        self.rel_residual = rel_residual


@dataclass(frozen=True, eq=False)
class LpProblem:
    """Maximization LP data ``max c^T x  s.t.  A x = b, x >= 0``.

    Full row rank and a finite optimal value are assumed, not verified.
    """

    A: SparseMatrix
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "b", as_vector(self.b, self.A.nrows, "b"))
        object.__setattr__(self, "c", as_vector(self.c, self.A.ncols, "c"))
        if self.A.has_zero_column():
            raise ValueError("constraint matrix has an all-zero column")

    @property
    def m(self) -> int:
        return self.A.nrows

    @property
    def n(self) -> int:
        return self.A.ncols


@dataclass(frozen=True)
class BasisPartition:
    """Support sets: B where w > 0, N where z > 0, Z where both vanish."""

    B: np.ndarray
    N: np.ndarray
    Z: np.ndarray


@dataclass
class SsepfState:
    """Converged scaled-subproblem certificate at the current stone."""

    R: float
    w: np.ndarray
    y: np.ndarray
    z: np.ndarray
    bases: BasisPartition
    stone_count: int


@dataclass
class NextStone:
    """Ratio-test output: next stone and warm-start steps (zero on Z)."""

    R_n: float
    dy: np.ndarray
    dw_B: np.ndarray
    dz_N: np.ndarray


@dataclass
class LpCertificate:
    x: np.ndarray
    y_lp: np.ndarray
    z_lp: np.ndarray
    lower: float
    upper: float
    rel_residual_triplet: tuple[float, float, float]
    warning: str | None = None


@dataclass(frozen=True)
class LpConfig:
    """Path-following controls.

    ``subproblem_tols`` is the retry ladder for each projection solve.
    The nudge past a stone is relative, ``max(1e-8, 1e-2/stone)``.  When
    the stone advance stays below ``1e-12 * R`` for three consecutive
    stones the solver escapes degeneracy by multiplying R by ten.
    """

    tol_gap: float = 1e-8
    max_stones: int = 100
    subproblem_tols: tuple[float, ...] = (1e-14, 1e-13)
    subproblem_max_iter: int = 2000
    regularization: str = "adaptive"
    include_zero_set_in_basis: bool = False
    debug_checks: bool = False
    collect_stones: bool = True


@dataclass
class StoneRecord:
    index: int
    R: float
    lower: float
    upper: float
    gap: float
    w_norm: float
    z_count: int
    subproblem_iterations: int
    subproblem_status: str


@dataclass
class LpResult:
    certificate: LpCertificate
    status: str
    stones: list[StoneRecord] = field(default_factory=list)
    degenerate: bool = False

    @property
    def gap(self) -> float:
        return _relative_gap(self.certificate.lower, self.certificate.upper)

    def report(self) -> dict:
        """Machine-readable solve report for the CLI and the harness."""
        return {
            "status": self.status,
            "degenerate": self.degenerate,
            "stones": len(self.stones),
            "R_sequence": [_round6(s.R) for s in self.stones],
            "gaps": [_round6(s.gap) for s in self.stones],
            "lower": _round6(self.certificate.lower),
            "upper": _round6(self.certificate.upper),
            "gap": _round6(self.gap),
            "residual_triplet": [_round6(t) for t in self.certificate.rel_residual_triplet],
        }


def _round6(x: float) -> float:
    if math.isinf(x) or math.isnan(x):
        return x
    return float(f"{x:.5e}")


def _relative_gap(lower: float, upper: float) -> float:
    if math.isinf(upper):
        return math.inf
    return (upper - lower) / (1.0 + (abs(upper) + abs(lower)) / 2.0)


def initial_radius(problem: LpProblem) -> float:
    """Starting radius ``min(50, sqrt(m n) ||b|| / (1 + ||c||))``.

    Falls back to 1 when b = 0 (the formula degenerates to zero and any
    positive radius works on a homogeneous right hand side).
    """
    nb = float(np.linalg.norm(problem.b))
    if nb == 0.0:
        return 1.0
    nc = float(np.linalg.norm(problem.c))
    return min(50.0, math.sqrt(problem.m * problem.n) * nb / (1.0 + nc))


def scaled_subproblem(problem: LpProblem, R: float) -> BapProblem:
    """Projection subproblem with anchor ``c`` and right hand side ``b/R``."""
    if not R > 0.0:
        raise ValueError("R must be positive")
    return BapProblem(problem.A, problem.b / R, problem.c)


def classify_bases(w, z, zero_tol: float) -> BasisPartition:
    """Threshold ``(w, z)`` into the support partition (B, N, Z).

    A coordinate exceeding the tolerance in both vectors means the
    subproblem certificate is inconsistent.  Nonempty Z flags failure of
    strict complementarity (degeneracy).
    """
    w = np.asarray(w, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    pos_w = w > zero_tol
    pos_z = z > zero_tol
    if np.any(pos_w & pos_z):
        raise InconsistentCertificateError(
            "w and z are simultaneously positive after thresholding"
        )
    B = np.where(pos_w)[0]
    N = np.where(pos_z)[0]
    Z = np.where(~pos_w & ~pos_z)[0]
    return BasisPartition(B, N, Z)


# Relative cancellation floor for the ratio test: entries of e are
# differences of same-scale terms, so anything below this times the
# summand scale is treated as zero (robust R_n = inf detection).
_RATIO_EPS = 1e-9


def ratio_test(e: np.ndarray, f: np.ndarray, scale: np.ndarray | None = None) -> float:
    """``min f_i/e_i`` over entries with e_i > 0 and f_i > 0 (inf if none).

    ``scale`` supplies the cancellation floor below which an e entry is
    treated as zero; omit it for the bare rule.
    """
    e = np.asarray(e, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    floor = _RATIO_EPS * scale if scale is not None else 0.0
    eligible = (e > floor) & (f > 0.0)
    if not np.any(eligible):
        return math.inf
    return float(np.min(f[eligible] / e[eligible]))


def next_stone(
    problem: LpProblem,
    state: SsepfState,
    include_zero_set_in_basis: bool = False,
    debug_checks: bool = False,
) -> NextStone:
    """Sensitivity ratio test for the largest R preserving the bases.

    Solves ``(A_B A_B^T V_Z) xi = b`` in the least-squares sense with
    ``V_Z`` spanning null(A_Z^T) (identity when strict complementarity
    holds), forms the bound vectors e, f on the B and N blocks, and
    returns ``R_n = min f_i/e_i`` over entries with both positive
    (infinite over the empty set) together with the warm-start steps.
    """
    A = problem.A
    R = state.R
    B, N, Z = state.bases.B, state.bases.N, state.bases.Z
    if include_zero_set_in_basis and Z.size:
        B = np.sort(np.concatenate([B, Z]))
        Z = np.empty(0, dtype=np.int64)

    AB = A.cols(B)
    gram = (AB.csc @ AB.csc.T).toarray()
    if Z.size:
        Vz = nullspace_basis(A.cols(Z).toarray().T)
        system = gram @ Vz
    else:
        Vz = None
        system = gram
    xi = least_squares_solve(system, problem.b)
    res = float(np.linalg.norm(system @ xi - problem.b))
    if res > 1e-6 * (1.0 + float(np.linalg.norm(problem.b))):
        raise SensitivityFailureError(
            f"sensitivity system inconsistent (residual {res:.3e})"
        )
    dyp = Vz @ xi if Vz is not None else xi

    bB = AB.rmatvec(dyp)
    bN = A.cols(N).rmatvec(dyp)
    wB = state.w[B]
    zN = state.z[N]

    eB = bB - R * wB
    fB = R * bB
    eN = -(bN + R * zN)
    fN = -R * bN

    e = np.concatenate([eB, eN])
    f = np.concatenate([fB, fN])
    scale = np.concatenate([np.abs(bB) + R * np.abs(wB), np.abs(bN) + R * np.abs(zN)])
    R_n = ratio_test(e, f, scale)
    if math.isfinite(R_n):
        R_n = max(R_n, R)

    if debug_checks:
        neg = (e < -_RATIO_EPS * scale) & (f < 0.0)
        if np.any(neg):
            max_side = float(np.max(f[neg] / e[neg]))
            if max_side > R_n * (1.0 + 1e-9):
                warnings.warn(
                    f"ratio-test lower bound {max_side:.6e} exceeds R_n {R_n:.6e}",
                    RuntimeWarning,
                    stacklevel=2,
                )

    factor = ((R - R_n) / (R * R_n)) if math.isfinite(R_n) else (-1.0 / R)
    dy = factor * dyp
    dw_B = factor * bB
    dz_N = -factor * bN
    return NextStone(R_n=R_n, dy=dy, dw_B=dw_B, dz_N=dz_N)


def _dual_feasibility_bap(
    problem: LpProblem, state: SsepfState, pin_basic: bool
) -> tuple[BapProblem, np.ndarray]:
    """Nearest dual-feasible system as a free-variable projection.

    Variables (y_lp, z_B, z_N); constraints A_B^T y - z_B = c_B and
    A_N^T y - z_N = c_N; anchor (-y, 0, z_N).  With ``pin_basic`` the
    z_B block is fixed at zero (dropped), the equality case of the
    upper-bound lemma: at the final basis this forces the exact dual
    optimum.  Columns of the y block that vanish on B union N (possible
    under degeneracy) are pinned to their anchor value and dropped,
    since they are unconstrained.
    """
    B, N = state.bases.B, state.bases.N
    m = problem.m
    nB, nN = B.size, N.size
    ABt = problem.A.cols(B).csc.T.tocsc()
    ANt = problem.A.cols(N).csc.T.tocsc()
    if pin_basic:
        blocks = [
            [ABt, None],
            [ANt, -sp.eye_array(nN, format="csc")],
        ]
        anchor = np.concatenate([-state.y, state.z[N]])
        free = np.zeros(m + nN, dtype=bool)
    else:
        blocks = [
            [ABt, -sp.eye_array(nB, format="csc"), None],
            [ANt, None, -sp.eye_array(nN, format="csc")],
        ]
        anchor = np.concatenate([-state.y, np.zeros(nB), state.z[N]])
        free = np.zeros(m + nB + nN, dtype=bool)
    M = sp.bmat(blocks, format="csc")
    rhs = np.concatenate([problem.c[B], problem.c[N]])
    free[:m] = True

    col_counts = np.diff(M.indptr)
    keep = col_counts > 0
    pinned = np.where(~keep)[0]  # only y-block columns can be empty
    if pinned.size:
        M = M[:, np.where(keep)[0]]
        sub = BapProblem(SparseMatrix(M), rhs, anchor[keep], free[keep])
        return sub, pinned
    return BapProblem(SparseMatrix(M), rhs, anchor, free), pinned


def lp_bounds(
    problem: LpProblem,
    state: SsepfState,
    config: LpConfig | None = None,
    pin_basic: bool = False,
) -> LpCertificate:
    """Primal/dual LP bounds from the current stone.

    Lower bound: ``c^T (R w)`` (feasible point).  Upper bound:
    ``b^T y_lp`` where ``(y_lp, z_lp)`` is the projection of the current
    multipliers onto the dual-feasible set; the two coincide whenever
    the projected ``z_lp`` vanishes on B.  ``pin_basic`` requests the
    z_B = 0 equality case directly (used once the basis is final).  A
    failed dual projection is reported with an infinite upper bound and
    a warning flag.
    """
    cfg = config if config is not None else LpConfig()
    x = state.R * state.w
    lower = float(problem.c @ x)

    m = problem.m
    B, N, Z = state.bases.B, state.bases.N, state.bases.Z
    warning = None
    if B.size + N.size == 0:
        # no support constraints at all (homogeneous instance); the
        # dual projection is unconstrained and returns its anchor
        y_lp = -state.y.copy()
        z_lp = np.maximum(problem.A.rmatvec(y_lp) - problem.c, 0.0)
    else:
        sub, pinned = _dual_feasibility_bap(problem, state, pin_basic)
        sol = _solve_with_ladder(sub, None, cfg)
        if sol.status != CONVERGED:
            warning = f"dual-feasibility projection ended {sol.status}"
        nz_b = 0 if pin_basic else B.size
        total = m + nz_b + N.size
        mask = np.ones(total, dtype=bool)
        mask[pinned] = False
        full = np.empty(total)
        full[mask] = sol.x
        full[~mask] = -state.y[pinned]
        y_lp = full[:m]
        z_lp = np.zeros(problem.n)
        if not pin_basic:
            z_lp[B] = full[m : m + B.size]
        z_lp[N] = full[m + nz_b :]
        if Z.size:
            z_lp[Z] = np.maximum(problem.A.cols(Z).rmatvec(y_lp) - problem.c[Z], 0.0)

    upper = math.inf if warning else float(problem.b @ y_lp)

    nb = 1.0 + float(np.linalg.norm(problem.b))
    nc = 1.0 + float(np.linalg.norm(problem.c))
    primal = float(np.linalg.norm(problem.A.matvec(x) - problem.b)) / nb
    dual = float(np.linalg.norm(z_lp - problem.A.rmatvec(y_lp) + problem.c)) / nc
    comp = abs(float(x @ z_lp)) / (
        1.0 + max(float(np.linalg.norm(x)), float(np.linalg.norm(z_lp)))
    )
    return LpCertificate(
        x=x,
        y_lp=y_lp,
        z_lp=z_lp,
        lower=lower,
        upper=upper,
        rel_residual_triplet=(primal, dual, comp),
        warning=warning,
    )


def _solve_with_ladder(sub: BapProblem, y0, cfg: LpConfig) -> BapSolution:
    sol = None
    for tol in cfg.subproblem_tols:
        rc = RnnmConfig(
            tol=tol,
            max_iter=cfg.subproblem_max_iter,
            regularization=cfg.regularization,
        )
        sol = solve_rnnm(sub, y0, rc)
        if sol.status == CONVERGED:
            return sol
    return sol


def _basis_zero_tol(w: np.ndarray, z: np.ndarray) -> float:
    scale = 1.0
    if w.size:
        scale += float(np.max(np.abs(w)))
    if z.size:
        scale += float(np.max(np.abs(z)))
    return 1e-11 * scale


def solve_lp(problem: LpProblem, config: LpConfig | None = None) -> LpResult:
    """Stepping-stone solve loop.

    Starting from the radius estimate, each round solves the scaled
    projection subproblem (warm-started from the previous multipliers
    plus the sensitivity step), classifies the supports, computes bound
    certificates, and advances R just past the next stone.  Stops when
    the relative gap meets ``tol_gap`` or the ratio test certifies the
    basis is final; a stalled stone advance triggers the multiplicative
    degeneracy escape.
    """
    cfg = config if config is not None else LpConfig()
    R = initial_radius(problem)
    y_start = None
    stones: list[StoneRecord] = []
    best: tuple[float, LpCertificate] | None = None
    degenerate = False
    tiny_advances = 0

    for stone in range(1, cfg.max_stones + 1):
        sub = scaled_subproblem(problem, R)
        sol = _solve_with_ladder(sub, y_start, cfg)
        if sol.status != CONVERGED:
            raise SubproblemFailureError(stone, sol.rel_residual)
        w, z = sol.x, sol.z
        bases = classify_bases(w, z, _basis_zero_tol(w, z))
        if bases.Z.size:
            degenerate = True
        state = SsepfState(
            R=R, w=w, y=sol.y, z=z, bases=bases, stone_count=stone
        )
        cert = lp_bounds(problem, state, cfg)
        gap = _relative_gap(cert.lower, cert.upper)
        if cfg.collect_stones:
            stones.append(
                StoneRecord(
                    index=stone,
                    R=R,
                    lower=cert.lower,
                    upper=cert.upper,
                    gap=gap,
                    w_norm=float(np.linalg.norm(w)),
                    z_count=int(bases.Z.size),
                    subproblem_iterations=sol.iterations,
                    subproblem_status=sol.status,
                )
            )
        if best is None or gap < best[0]:
            best = (gap, cert)
        if gap <= cfg.tol_gap:
            return LpResult(cert, "solved", stones, degenerate)

        try:
            step = next_stone(
                problem,
                state,
                include_zero_set_in_basis=cfg.include_zero_set_in_basis,
                debug_checks=cfg.debug_checks,
            )
        except SensitivityFailureError:
            degenerate = True
            y_start = sol.y
            R = 10.0 * R
            continue

        if math.isinf(step.R_n):
            # basis is final; certify the gap through the z_B = 0
            # equality case, which pins the exact dual optimum
            tight = lp_bounds(problem, state, cfg, pin_basic=True)
            tight_gap = _relative_gap(tight.lower, tight.upper)
            if tight_gap < gap:
                cert, gap = tight, tight_gap
                if stones:
                    stones[-1].upper = tight.upper
                    stones[-1].gap = tight_gap
            if best is None or gap < best[0]:
                best = (gap, cert)
            if gap <= cfg.tol_gap:
                return LpResult(cert, "solved", stones, degenerate)
            # certificate still loose: grow R so the multipliers
            # approach dual feasibility and retry
            degenerate = degenerate or bases.Z.size > 0
            y_start = sol.y
            R = 10.0 * R
            continue

        if step.R_n - R < 1e-12 * R:
            tiny_advances += 1
        else:
            tiny_advances = 0
        if tiny_advances >= 3:
            degenerate = True
            tiny_advances = 0
            y_start = sol.y
            R = 10.0 * R
            continue

        nudge = max(1e-8, 1e-2 / stone)
        y_start = sol.y + step.dy
        R = step.R_n * (1.0 + nudge)

    assert best is not None
    return LpResult(best[1], "stone_budget", stones, degenerate)
