"""Operator bases and coherence-vector (de)vectorization.

Two bases are used throughout the package:

* a Hermitian, Hilbert-Schmidt orthonormal basis ``G_0 .. G_{N^2-1}`` built
  from generalized Gell-Mann matrices, with ``G_0 = 1/sqrt(N)``;
* the matrix-unit basis ``tau_a = |a1><a2|`` with the composite index
  flattened row-major, ``a = a1 * N + a2`` (zero based).

Sign convention: the diagonal traceless elements put the *negative* weight
on the lower levels, so for ``N = 2`` the last element is
``(|2><2| - |1><1|) / sqrt(2)``, i.e. ``sigma_3`` has the excited state at
``+1``. This is the opposite of the usual ``diag(1, -1)`` convention.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-10


class DimensionError(ValueError):
    """Raised for an invalid Hilbert-space dimension or mismatched shapes."""


@dataclass(frozen=True, eq=False)
class HermitianBasis:
    """Orthonormal Hermitian operator basis.

    ``elements`` has shape ``(N**2, N, N)``; ``elements[0]`` is the scaled
    identity.
    """

    dim: int
    elements: np.ndarray

    def __post_init__(self):
        self.elements.setflags(write=False)

    def __len__(self):
        return self.elements.shape[0]

    def __getitem__(self, a):
        return self.elements[a]

    def __iter__(self):
        return iter(self.elements)

    def gram(self) -> np.ndarray:
        """Matrix of ``tr[G_a G_b]``."""
        return np.einsum("aij,bji->ab", self.elements, self.elements)


def _check_dim(N) -> int:
    if int(N) != N or N < 2:
        raise DimensionError(f"dimension must be an integer >= 2, got {N!r}")
    return int(N)


@lru_cache(maxsize=16)
def _gell_mann(N: int) -> np.ndarray:
    elements = [np.eye(N, dtype=complex) / np.sqrt(N)]
    pairs = [(j, k) for j in range(N) for k in range(j + 1, N)]
    for j, k in pairs:
        g = np.zeros((N, N), dtype=complex)
        g[j, k] = g[k, j] = 1.0
        elements.append(g / np.sqrt(2))
    for j, k in pairs:
        g = np.zeros((N, N), dtype=complex)
        g[j, k] = -1j
        g[k, j] = 1j
        elements.append(g / np.sqrt(2))
    for l in range(1, N):
        d = np.zeros(N)
        d[:l] = -1.0
        d[l] = l
        elements.append(np.diag(d).astype(complex) / np.sqrt(l * (l + 1)))
    return np.array(elements)


def build_basis(N: int) -> HermitianBasis:
    """Generalized Gell-Mann basis of unit Hilbert-Schmidt norm.

    Ordering: scaled identity, symmetric off-diagonal pairs, antisymmetric
    off-diagonal pairs, diagonal traceless elements; each group in
    lexicographic index order. For ``N = 2`` this is
    ``(1, sigma_1, sigma_2, sigma_3) / sqrt(2)`` with
    ``sigma_3 = |2><2| - |1><1|``.
    """
    N = _check_dim(N)
    return HermitianBasis(N, _gell_mann(N).copy())


def pauli_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(1, sigma_1, sigma_2, sigma_3)`` in the package's sign convention."""
    return tuple(np.sqrt(2) * g for g in _gell_mann(2))


def tau_basis(N: int) -> np.ndarray:
    """Matrix units ``tau_a = |a1><a2|`` with ``a = a1 * N + a2``.

    Returns an array of shape ``(N**2, N, N)``.
    """
    N = _check_dim(N)
    return np.eye(N * N, dtype=complex).reshape(N * N, N, N)


def dim_from_superop(M) -> int:
    """Hilbert-space dimension ``N`` of an ``N^2 x N^2`` superoperator matrix."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    N = int(round(np.sqrt(M.shape[0])))
    if N * N != M.shape[0]:
        raise DimensionError(f"size {M.shape[0]} is not a perfect square")
    return _check_dim(N)


def _check_operator(X, basis: HermitianBasis) -> np.ndarray:
    X = np.asarray(X)
    if X.shape != (basis.dim, basis.dim):
        raise DimensionError(
            f"operator of shape {X.shape} does not match basis dimension {basis.dim}"
        )
    return X


def coefficients(X, basis: HermitianBasis) -> np.ndarray:
    """Complex expansion coefficients ``x_a = tr[G_a X]`` of any operator."""
    X = _check_operator(X, basis)
    return np.einsum("aij,ji->a", basis.elements, X)


def vectorize(rho, basis: HermitianBasis) -> np.ndarray:
    """Real coherence vector ``r_a = tr[G_a rho]``.

    Non-Hermitian input is not rejected: a warning reports the size of the
    imaginary residue and only the real part is kept.
    """
    r = coefficients(rho, basis)
    residue = np.max(np.abs(r.imag)) if r.size else 0.0
    if residue > HERMITIAN_TOL:
        warnings.warn(
            f"vectorize: input is not Hermitian (imaginary residue {residue:.3e}); "
            "keeping the real part",
            RuntimeWarning,
            stacklevel=2,
        )
    return r.real.copy()


def devectorize(r, basis: HermitianBasis) -> np.ndarray:
    """Operator ``sum_a r_a G_a``; ``r`` may be real or complex."""
    r = np.asarray(r)
    if r.shape != (len(basis),):
        raise DimensionError(
            f"vector of shape {r.shape} does not match basis of size {len(basis)}"
        )
    return np.einsum("a,aij->ij", r, basis.elements)


def superop_matrix(action, basis: HermitianBasis, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Real matrix ``M_kl = tr[G_k action(G_l)]`` of a Hermiticity-preserving map.

    Raises ``ValueError`` if the imaginary residue exceeds ``tol``.
    """
    images = np.array([action(g) for g in basis.elements])
    M = np.einsum("kij,lji->kl", basis.elements, images)
    residue = np.max(np.abs(M.imag))
    if residue > tol:
        raise ValueError(
            f"map is not Hermiticity preserving (imaginary residue {residue:.3e})"
        )
    return M.real.copy()
