"""Time-local generators and their real matrix representation ``L(t)``.

A generator ``Lambda_t`` can be supplied in three forms:

``LindbladGenerator``
    ``-i[H, rho] + sum_j gamma_j(t) (C_j rho C_j^+ - {C_j^+ C_j, rho} / 2)``.
    Rates may be negative.
``TabulatedGenerator``
    ``L`` matrices sampled on a time grid, linearly interpolated in between.
``ChoiFormGenerator``
    ``sum_ab R_ab(t) tau_a X tau_b^+`` for a Hermitian coefficient matrix ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .basis import (
    HERMITIAN_TOL,
    DimensionError,
    HermitianBasis,
    build_basis,
    superop_matrix,
)

Scalar = Union[float, Callable[[float], float]]
OperatorLike = Union[np.ndarray, Callable[[float], np.ndarray]]


def _at(value, t):
    return value(t) if callable(value) else value


@dataclass
class LindbladGenerator:
    """Hamiltonian part plus jump terms with (possibly negative) rates.

    ``hamiltonian`` is an ``N x N`` Hermitian matrix or a function of ``t``
    returning one; ``jumps`` is a sequence of ``(C_j, gamma_j)`` pairs where
    ``gamma_j`` is a float or a function of ``t``.
    """

    dim: int
    hamiltonian: OperatorLike | None = None
    jumps: Sequence[tuple[np.ndarray, Scalar]] = field(default_factory=list)

    def __post_init__(self):
        self.jumps = [(np.asarray(C, dtype=complex), g) for C, g in self.jumps]
        for C, _ in self.jumps:
            if C.shape != (self.dim, self.dim):
                raise DimensionError(f"jump operator has shape {C.shape}, expected {(self.dim,) * 2}")

    @property
    def time_dependent(self) -> bool:
        return callable(self.hamiltonian) or any(callable(g) for _, g in self.jumps)

    def hamiltonian_at(self, t: float) -> np.ndarray:
        if self.hamiltonian is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        H = np.asarray(_at(self.hamiltonian, t), dtype=complex)
        if H.shape != (self.dim, self.dim):
            raise DimensionError(f"Hamiltonian has shape {H.shape}")
        if np.max(np.abs(H - H.conj().T)) > HERMITIAN_TOL:
            raise ValueError(f"Hamiltonian is not Hermitian at t={t}")
        return H

    def rates_at(self, t: float) -> list[float]:
        rates = []
        for _, g in self.jumps:
            value = complex(_at(g, t))
            if abs(value.imag) > HERMITIAN_TOL or not np.isfinite(value.real):
                raise ValueError(f"rate must be real and finite, got {value} at t={t}")
            rates.append(value.real)
        return rates

    def action(self, t: float) -> Callable[[np.ndarray], np.ndarray]:
        H = self.hamiltonian_at(t)
        terms = [(C, C.conj().T, C.conj().T @ C, g) for (C, _), g in zip(self.jumps, self.rates_at(t))]

        def apply(X):
            out = -1j * (H @ X - X @ H)
            for C, Cd, CdC, g in terms:
                out = out + g * (C @ X @ Cd - 0.5 * (CdC @ X + X @ CdC))
            return out

        return apply


@dataclass
class TabulatedGenerator:
    """Generator matrices ``L`` sampled at increasing ``times``."""

    times: np.ndarray
    matrices: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.matrices.ndim != 3 or len(self.matrices) != len(self.times):
            raise DimensionError("need one L matrix per time point")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("tabulated times must be strictly increasing")
        self.dim = int(round(np.sqrt(self.matrices.shape[1])))

    @property
    def time_dependent(self) -> bool:
        return bool(np.any(self.matrices != self.matrices[0]))

    def matrix_at(self, t: float) -> np.ndarray:
        times = self.times
        slack = 1e-12 * max(1.0, abs(times[-1]))
        if t < times[0] - slack or t > times[-1] + slack:
            raise ValueError(f"t={t} lies outside the tabulated range [{times[0]}, {times[-1]}]")
        if len(times) == 1:
            return self.matrices[0].copy()
        t = min(max(t, times[0]), times[-1])
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2))
        w = (t - times[i]) / (times[i + 1] - times[i])
        return (1 - w) * self.matrices[i] + w * self.matrices[i + 1]


@dataclass
class ChoiFormGenerator:
    """``Lambda_t(X) = sum_ab R_ab(t) tau_a X tau_b^+``."""

    dim: int
    R: OperatorLike

    @property
    def time_dependent(self) -> bool:
        return callable(self.R)

    def action(self, t: float) -> Callable[[np.ndarray], np.ndarray]:
        N = self.dim
        R = np.asarray(_at(self.R, t), dtype=complex).reshape(N, N, N, N)
        return lambda X: np.einsum("ijkl,jl->ik", R, X)


GeneratorSpec = Union[LindbladGenerator, TabulatedGenerator, ChoiFormGenerator]


def generator_to_matrix(spec: GeneratorSpec, basis: HermitianBasis | None = None, t: float = 0.0) -> np.ndarray:
    """Real matrix ``L_kl = tr[G_k Lambda_t(G_l)]``.

    The first row is checked to vanish (trace preservation); a violation
    raises ``ValueError``.
    """
    if basis is None:
        basis = build_basis(spec.dim)
    if basis.dim != spec.dim:
        raise DimensionError(f"basis dimension {basis.dim} != generator dimension {spec.dim}")
    if isinstance(spec, TabulatedGenerator):
        L = spec.matrix_at(t)
    else:
        L = superop_matrix(spec.action(t), basis)
    if np.max(np.abs(L[0])) > HERMITIAN_TOL:
        raise ValueError("generator is not trace preserving: first row of L is nonzero")
    return L


def generator_matrix_function(spec: GeneratorSpec, basis: HermitianBasis | None = None) -> Callable[[float], np.ndarray]:
    """Convenience closure ``t -> L(t)``."""
    if basis is None:
        basis = build_basis(spec.dim)
    return lambda t: generator_to_matrix(spec, basis, t)
