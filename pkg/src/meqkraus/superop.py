"""Transfer matrices, Choi matrices and signed Kraus decompositions.

Conventions
-----------
``F`` is real and acts on coherence vectors in a :class:`HermitianBasis`.
The Choi matrix is indexed by composite matrix-unit indices,
``S[(a1, a2), (b1, b2)] = <a1| phi(|a2><b2|) |b1>``, flattened row-major, so
that ``phi(rho) = sum_ab S_ab tau_a rho tau_b^+`` and the Kraus operator of an
eigenvector ``X`` is simply ``X.reshape(N, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .basis import (
    DimensionError,
    HermitianBasis,
    build_basis,
    coefficients,
    devectorize,
    dim_from_superop,
    superop_matrix,
)

DEFAULT_TOL = 1e-10


@dataclass
class KrausDecomposition:
    """``phi(rho) = sum_k signs[k] * A_k rho A_k^+``."""

    operators: list[np.ndarray]
    signs: list[int]
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        self.operators = [np.asarray(A, dtype=complex) for A in self.operators]
        self.signs = [int(s) for s in self.signs]
        if len(self.operators) != len(self.signs):
            raise ValueError("need one sign per Kraus operator")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("Kraus signs must be +1 or -1")

    @property
    def dim(self) -> int:
        return self.operators[0].shape[0]

    def __len__(self):
        return len(self.operators)

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho)
        out = np.zeros_like(rho, dtype=complex)
        for s, A in zip(self.signs, self.operators):
            out += s * (A @ rho @ A.conj().T)
        return out

    def completeness(self) -> np.ndarray:
        """``sum_k eps_k A_k^+ A_k``; the identity for trace-preserving maps."""
        return sum(s * (A.conj().T @ A) for s, A in zip(self.signs, self.operators))

    @property
    def completely_positive(self) -> bool:
        return all(s > 0 for s in self.signs)


def _basis_for(F, basis: HermitianBasis | None) -> HermitianBasis:
    N = dim_from_superop(F)
    if basis is None:
        return build_basis(N)
    if basis.dim != N:
        raise DimensionError(f"matrix of size {np.shape(F)} does not match basis dimension {basis.dim}")
    return basis


def hermitian_residue(S) -> float:
    S = np.asarray(S)
    return float(np.max(np.abs(S - S.conj().T))) if S.size else 0.0


def apply_transfer(F, rho, basis: HermitianBasis | None = None) -> np.ndarray:
    """Image ``phi(rho)`` of an operator under the map with transfer matrix ``F``.

    Non-Hermitian operators are handled by the complex-linear extension.
    """
    basis = _basis_for(F, basis)
    return devectorize(np.asarray(F) @ coefficients(rho, basis), basis)


def _choi_tensor(M, basis: HermitianBasis) -> np.ndarray:
    # S[i, a, j, b] = sum_rs M_sr (G_r)_{b a} (G_s)_{i j}
    G = basis.elements
    N = basis.dim
    S = np.einsum("sr,rba,sij->iajb", np.asarray(M, dtype=float), G, G)
    return S.reshape(N * N, N * N)


def transfer_to_choi(F, basis: HermitianBasis | None = None) -> np.ndarray:
    """Choi matrix from the transfer matrix, ``S_ab = sum_rs F_sr tr[G_r tau_a^+ G_s tau_b]``."""
    return _choi_tensor(F, _basis_for(F, basis))


def choi_to_transfer(S, basis: HermitianBasis | None = None) -> np.ndarray:
    """Inverse of :func:`transfer_to_choi`."""
    S = np.asarray(S)
    N = dim_from_superop(S)
    basis = basis or build_basis(N)
    act = lambda X: choi_apply(S, X)
    return superop_matrix(act, basis)


def choi_apply(S, X) -> np.ndarray:
    """``sum_ab S_ab tau_a X tau_b^+``."""
    S = np.asarray(S)
    N = dim_from_superop(S)
    return np.einsum("ijkl,jl->ik", S.reshape(N, N, N, N), np.asarray(X))


def choi_in_basis(F, H_basis: Sequence[np.ndarray], basis: HermitianBasis | None = None, tol: float = DEFAULT_TOL):
    """Choi matrix with respect to another orthonormal operator basis ``{H_a}``.

    Returns ``(W, S_W)`` with ``W[:, a] = vec(H_a)`` (row-major) so that
    ``S_W = W^+ S W`` and ``phi(rho) = sum_ab S_W[a, b] H_a rho H_b^+``.
    """
    basis = _basis_for(F, basis)
    H = np.asarray(H_basis, dtype=complex)
    N = basis.dim
    if H.shape != (N * N, N, N):
        raise DimensionError(f"expected {N * N} operators of shape {(N, N)}, got {H.shape}")
    W = H.reshape(N * N, N * N).T
    gram = W.conj().T @ W
    if np.max(np.abs(gram - np.eye(N * N))) > tol:
        raise ValueError("H_basis is not orthonormal under the Hilbert-Schmidt inner product")
    S = transfer_to_choi(F, basis)
    return W, W.conj().T @ S @ W


def choi_to_kraus(S, tol: float = DEFAULT_TOL) -> KrausDecomposition:
    """Signed Kraus decomposition from the eigendecomposition of ``S``.

    Eigenvalues with ``|lambda| < tol * max(1, max|lambda|)`` are dropped;
    the remaining terms are ordered by descending eigenvalue and carry
    ``sign(lambda)``.
    """
    S = np.asarray(S, dtype=complex)
    N = dim_from_superop(S)
    residue = hermitian_residue(S)
    if residue > tol:
        raise ValueError(f"Choi matrix is not Hermitian (residue {residue:.3e})")
    evals, evecs = np.linalg.eigh(0.5 * (S + S.conj().T))
    order = np.argsort(evals)[::-1]
    cutoff = tol * max(1.0, np.max(np.abs(evals)))
    ops, signs = [], []
    for i in order:
        lam = evals[i]
        if abs(lam) < cutoff:
            continue
        ops.append(np.sqrt(abs(lam)) * evecs[:, i].reshape(N, N))
        signs.append(1 if lam > 0 else -1)
    if not ops:
        ops, signs = [np.zeros((N, N), dtype=complex)], [1]
    return KrausDecomposition(ops, signs, tol)


def kraus_to_choi(K: KrausDecomposition) -> np.ndarray:
    """``S = sum_i eps_i V(i) V(i)^+`` with ``V(i) = vec(A_i)``."""
    N = K.dim
    S = np.zeros((N * N, N * N), dtype=complex)
    for s, A in zip(K.signs, K.operators):
        v = A.reshape(-1)
        S += s * np.outer(v, v.conj())
    return S


def kraus_to_transfer(K: KrausDecomposition, basis: HermitianBasis | None = None) -> np.ndarray:
    basis = basis or build_basis(K.dim)
    return superop_matrix(K.apply, basis)


def transfer_to_kraus(F, basis: HermitianBasis | None = None, tol: float = DEFAULT_TOL) -> KrausDecomposition:
    return choi_to_kraus(transfer_to_choi(F, basis), tol)


def is_completely_positive(S, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
    """``(lambda_min(S) >= -tol, lambda_min(S))``."""
    S = np.asarray(S, dtype=complex)
    if hermitian_residue(S) > tol:
        raise ValueError("Choi matrix is not Hermitian")
    lam_min = float(np.linalg.eigvalsh(0.5 * (S + S.conj().T))[0])
    return lam_min >= -tol, lam_min


class IntermediateMap(NamedTuple):
    F: np.ndarray
    valid: bool
    kernel_residual: float


def intermediate_map(F_t2, F_t1, rank_tol: float = DEFAULT_TOL, tol: float = 1e-9) -> IntermediateMap:
    """Map taking ``rho(t1)`` to ``rho(t2)``: ``F(t2) pinv(F(t1))``.

    ``valid`` is False when ``ker F(t1)`` is not contained in ``ker F(t2)``,
    in which case no map between the two times exists and the returned
    matrix is only a least-squares surrogate.
    """
    from .recovery import kernel_projector, pseudo_inverse

    F_t2 = np.asarray(F_t2, dtype=float)
    F_tilde, svd = pseudo_inverse(F_t1, rank_tol)
    K = kernel_projector(svd)
    s1 = np.linalg.norm(F_t2, 2)
    residual = float(np.linalg.norm(F_t2 @ K))
    return IntermediateMap(F_t2 @ F_tilde, residual <= tol * max(1.0, s1), residual)


def hs_norm(M) -> float:
    """Hilbert-Schmidt (Frobenius) norm ``sqrt(tr[M^+ M])``."""
    return float(np.linalg.norm(np.asarray(M), "fro"))


def channel_from_kraus(operators, signs=None) -> KrausDecomposition:
    """Build a :class:`KrausDecomposition`, defaulting all signs to ``+1``."""
    operators = list(operators)
    return KrausDecomposition(operators, signs if signs is not None else [1] * len(operators))

