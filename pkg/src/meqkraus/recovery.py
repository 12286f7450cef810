"""Recovering a time-local generator from an evolution-map trajectory.

Given ``F(t)`` and ``dF/dt``, the generator solves ``dF/dt = L F``. When
``F`` is invertible the solution ``L = dF/dt F^-1`` is unique. Otherwise the
Moore-Penrose inverse gives ``L = dF/dt pinv(F)``, which

* solves the equation exactly iff ``dF/dt K = 0`` (``K`` the projector on
  ``ker F``) and kernels are nested in time, and
* in every case minimises ``||dF/dt - L F||`` and, among minimisers, ``||L||``.

Any ``L + M`` with ``M F = 0`` produces the same residual.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import HermitianBasis, dim_from_superop
from .generators import ChoiFormGenerator
from .propagator import Trajectory, differentiate_trajectory
from .superop import hs_norm, transfer_to_choi

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
RES_TOL = 1e-8
DIVERGENCE_CEILING = 1e8


class PhiDotUndefined(ArithmeticError):
    """The time derivative of the evolution map is not finite."""


class InadmissibleMatrix(ValueError):
    """``M F != 0``: adding ``M`` would change the generated evolution."""


@dataclass
class SVDFactors:
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray
    rank: int

    @property
    def P(self) -> np.ndarray:
        p = np.zeros(len(self.singular_values))
        p[: self.rank] = 1.0
        return np.diag(p)

    @property
    def s1(self) -> float:
        return float(self.singular_values[0]) if len(self.singular_values) else 0.0


def svd_factors(F, rank_tol: float = RANK_TOL) -> SVDFactors:
    """``F = U diag(s) V^T`` with the numerical rank ``#{s_i >= rank_tol * s_1}``."""
    F = np.asarray(F, dtype=float)
    U, s, Vt = np.linalg.svd(F)
    rank = int(np.count_nonzero(s >= rank_tol * s[0])) if s[0] > 0 else 0
    return SVDFactors(U, s, Vt.T, rank)


def pseudo_inverse(F, rank_tol: float = RANK_TOL) -> tuple[np.ndarray, SVDFactors]:
    """Moore-Penrose inverse ``V D~ U^T`` and the SVD it was built from.

    ``F = 0`` gives the zero matrix (rank 0).
    """
    svd = svd_factors(F, rank_tol)
    r = svd.rank
    d_inv = np.zeros_like(svd.singular_values)
    d_inv[:r] = 1.0 / svd.singular_values[:r]
    F_tilde = (svd.V * d_inv) @ svd.U.T
    return F_tilde, svd


def kernel_projector(svd: SVDFactors) -> np.ndarray:
    """Orthogonal projector ``I - V P V^T`` onto ``ker F``."""
    V_null = svd.V[:, svd.rank:]
    return V_null @ V_null.T


def left_null_basis(svd: SVDFactors) -> np.ndarray:
    """Columns span ``{u : u^T F = 0}``; admissible ``M`` are ``C @ basis.T``."""
    return svd.U[:, svd.rank:]


@dataclass
class ConsistencyReport:
    times: np.ndarray
    kernel_dim: np.ndarray
    K: np.ndarray
    kernel_residual: np.ndarray  # ||F(t_i) K(t_{i-1})||, 0 at the first point
    residual_FdotK: np.ndarray
    condition1_holds: bool
    condition2_holds: bool
    kernel_monotone: bool
    first_violation_time: float | None

    @property
    def consistent(self) -> bool:
        return self.condition1_holds and self.condition2_holds


def _check_finite(Fdot):
    bad = ~np.isfinite(Fdot)
    if np.any(bad):
        index = int(np.argwhere(bad.reshape(len(Fdot), -1).any(axis=1))[0, 0])
        raise PhiDotUndefined(f"phi-dot undefined: non-finite derivative at grid index {index}")


def check_consistency(traj: Trajectory, Fdot, rank_tol: float = RANK_TOL, res_tol: float = RES_TOL) -> ConsistencyReport:
    """Test nested kernels and ``dF/dt K = 0`` along a trajectory.

    Kernel nesting is checked between consecutive grid points only, as
    ``||F(t) K(t')|| <= res_tol * max(1, s_1(t))``. Violations are reported,
    never raised.
    """
    F = traj.F
    Fdot = np.asarray(Fdot, dtype=float)
    if Fdot.shape != F.shape:
        raise ValueError(f"derivative shape {Fdot.shape} does not match trajectory {F.shape}")
    n_pts = len(F)
    kernel_dim = np.zeros(n_pts, dtype=int)
    Ks = np.zeros_like(F)
    s1 = np.zeros(n_pts)
    res2 = np.zeros(n_pts)
    for i in range(n_pts):
        svd = svd_factors(F[i], rank_tol)
        Ks[i] = kernel_projector(svd)
        kernel_dim[i] = F.shape[1] - svd.rank
        s1[i] = svd.s1
        res2[i] = hs_norm(Fdot[i] @ Ks[i])

    res1 = np.zeros(n_pts)
    for i in range(1, n_pts):
        if kernel_dim[i - 1]:
            res1[i] = hs_norm(F[i] @ Ks[i - 1])
    bad1 = res1 > res_tol * np.maximum(1.0, s1)
    bad2 = res2 > res_tol
    bad = bad1 | bad2
    first = float(traj.times[np.argmax(bad)]) if bad.any() else None
    return ConsistencyReport(
        times=traj.times,
        kernel_dim=kernel_dim,
        K=Ks,
        kernel_residual=res1,
        residual_FdotK=res2,
        condition1_holds=not bad1.any(),
        condition2_holds=not bad2.any(),
        kernel_monotone=bool(np.all(np.diff(kernel_dim) >= 0)),
        first_violation_time=first,
    )


@dataclass
class RecoveryResult:
    times: np.ndarray
    L: np.ndarray
    branch: list[str]
    residual: np.ndarray
    report: ConsistencyReport
    exact: bool
    F: np.ndarray = field(repr=False)
    Fdot: np.ndarray = field(repr=False)
    F_tilde: np.ndarray = field(repr=False)
    rank_tol: float = RANK_TOL
    res_tol: float = RES_TOL

    @property
    def label(self) -> str:
        return "exact" if self.exact else "best-possible"


def recover_generator(traj: Trajectory, Fdot=None, rank_tol: float = RANK_TOL, res_tol: float = RES_TOL) -> RecoveryResult:
    """Least-squares generator ``L = dF/dt pinv(F)`` at every grid point.

    ``Fdot`` defaults to finite differences of the trajectory; an analytic
    derivative can be passed instead. The grid must be fine enough for the
    finite differences to be meaningful.

    The result is flagged ``exact`` when every residual ``||dF/dt - L F||``
    is below ``res_tol`` and kernels are nested; otherwise it is the best
    possible time-local approximation.
    """
    if Fdot is None:
        Fdot = differentiate_trajectory(traj)
    Fdot = np.asarray(Fdot, dtype=float)
    _check_finite(Fdot)
    F = traj.F
    n = F.shape[1]
    Ls = np.zeros_like(F)
    F_tilde = np.zeros_like(F)
    residual = np.zeros(len(F))
    branch = []
    for i in range(len(F)):
        Ft, svd = pseudo_inverse(F[i], rank_tol)
        F_tilde[i] = Ft
        if svd.rank == n:
            Ls[i] = np.linalg.solve(F[i].T, Fdot[i].T).T
            branch.append("exact_inverse")
        else:
            Ls[i] = Fdot[i] @ Ft
            branch.append("pseudo_inverse")
        residual[i] = hs_norm(Fdot[i] - Ls[i] @ F[i])
    report = check_consistency(traj, Fdot, rank_tol, res_tol)
    exact = bool(np.all(residual <= res_tol) and report.condition1_holds)
    if not exact:
        logger.info("no exact time-local generator; returning the best-possible one")
    return RecoveryResult(traj.times, Ls, branch, residual, report, exact, F, Fdot, F_tilde, rank_tol, res_tol)


def solution_family_member(base: RecoveryResult, M, t_index: int) -> np.ndarray:
    """Generator ``dF/dt pinv(F) + M`` at one grid point.

    ``M`` must annihilate ``F`` (``||M F|| <= res_tol * max(1, ||M||) * s_1``),
    otherwise :class:`InadmissibleMatrix` is raised.
    """
    M = np.asarray(M, dtype=float)
    F = base.F[t_index]
    s1 = np.linalg.norm(F, 2)
    if hs_norm(M @ F) > base.res_tol * max(1.0, hs_norm(M)) * s1:
        raise InadmissibleMatrix("M not in admissible family: M F != 0")
    return base.Fdot[t_index] @ base.F_tilde[t_index] + M


def admissible_family_basis(F, rank_tol: float = RANK_TOL) -> list[np.ndarray]:
    """Matrix basis of ``{M : M F = 0}`` (``e_i u_j^T`` for left-null ``u_j``)."""
    U_null = left_null_basis(svd_factors(F, rank_tol))
    n = np.shape(F)[0]
    out = []
    for i in range(n):
        for j in range(U_null.shape[1]):
            M = np.zeros((n, n))
            M[i] = U_null[:, j]
            out.append(M)
    return out


def generator_to_choi_R(L, basis: HermitianBasis | None = None) -> tuple[np.ndarray, ChoiFormGenerator]:
    """Choi coefficient matrix ``R`` of the generator and its operator form.

    ``Lambda(X) = sum_ab R_ab tau_a X tau_b^+`` reproduces ``L``.
    """
    R = transfer_to_choi(L, basis)
    return R, ChoiFormGenerator(dim_from_superop(L), R)


@dataclass
class DiagnosticRecord:
    t: float
    residual: float
    residual_FdotK: float
    norm_L: float
    diverging: bool


def best_possible_diagnostics(traj: Trajectory, Fdot, result: RecoveryResult, ceiling: float = DIVERGENCE_CEILING) -> list[DiagnosticRecord]:
    """Per-point residual, ``||L||`` and a blow-up flag (``||L|| > ceiling``)."""
    Fdot = np.asarray(Fdot, dtype=float)
    out = []
    for i, t in enumerate(traj.times):
        norm_L = hs_norm(result.L[i])
        out.append(
            DiagnosticRecord(
                t=float(t),
                residual=float(result.residual[i]),
                residual_FdotK=hs_norm(Fdot[i] @ result.report.K[i]),
                norm_L=norm_L,
                diverging=bool(norm_L > ceiling or not np.isfinite(norm_L)),
            )
        )
    return out
