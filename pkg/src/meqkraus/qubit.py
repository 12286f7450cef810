"""Closed-form qubit channel families.

Two families are covered:

* unital dephasing-type evolution with Pauli rates ``gamma_1..3`` and
  transfer matrix ``diag(1, Gamma_1, Gamma_2, Gamma_3)``;
* the two-level atom with excited-state survival probability ``p(t)`` and
  coherence factor ``f(t)`` (``p = |f|^2`` for minimal decoherence).

Levels are labelled ``|1>`` (ground, index 0) and ``|2>`` (excited, index 1);
``sigma_- = |1><2|`` and ``sigma_3 = |2><2| - |1><1|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.integrate import quad

from .basis import build_basis, pauli_matrices
from .generators import LindbladGenerator, generator_to_matrix
from .superop import KrausDecomposition

Rate = Union[float, Callable[[float], float]]

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.conj().T
EXCITED = SIGMA_PLUS @ SIGMA_MINUS  # |2><2|

QUAD_TOL = 1e-10


class NotCompletelyPositive(ValueError):
    pass


@dataclass
class UnitalRates:
    """Pauli decay rates; each a constant or a function of time.

    ``Gamma`` may be given as a closed form ``t -> (G1, G2, G3)`` to bypass
    quadrature.
    """

    gamma1: Rate = 0.0
    gamma2: Rate = 0.0
    gamma3: Rate = 0.0
    Gamma: Callable[[float], tuple[float, float, float]] | None = None

    @property
    def rates(self) -> tuple[Rate, Rate, Rate]:
        return (self.gamma1, self.gamma2, self.gamma3)

    def integrated(self, t: float) -> np.ndarray:
        """``int_0^t gamma_j(s) ds`` for ``j = 1, 2, 3``."""
        out = np.empty(3)
        for j, g in enumerate(self.rates):
            if callable(g):
                value, err = quad(g, 0.0, t, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
                if not np.isfinite(value) or err > 10 * QUAD_TOL * max(1.0, abs(value)):
                    raise ArithmeticError(f"quadrature of gamma_{j + 1} failed (error estimate {err:.2e})")
                out[j] = value
            else:
                out[j] = g * t
        return out

    def generator(self) -> LindbladGenerator:
        return pauli_rates_generator(*self.rates)


def pauli_rates_generator(gamma1: Rate, gamma2: Rate, gamma3: Rate) -> LindbladGenerator:
    """Generator with matrix ``diag(0, -g2-g3, -g1-g3, -g1-g2)``.

    Written as ``sum_j gamma_j (G_j rho G_j - rho / 2)`` with ``G_j =
    sigma_j / sqrt(2)``, i.e. ``(1/2) sum_j gamma_j (sigma_j rho sigma_j - rho)``.
    """
    G = build_basis(2).elements
    return LindbladGenerator(2, None, [(G[1], gamma1), (G[2], gamma2), (G[3], gamma3)])


def unital_gammas(rates: UnitalRates, t: float) -> np.ndarray:
    if rates.Gamma is not None:
        return np.asarray(rates.Gamma(t), dtype=float)
    I = rates.integrated(t)
    total = I.sum()
    return np.exp(-(total - I))


def unital_transfer(rates: UnitalRates, t: float) -> np.ndarray:
    """``diag(1, Gamma_1, Gamma_2, Gamma_3)`` with ``Gamma_i = exp(-int gamma_j + gamma_k)``."""
    return np.diag(np.concatenate([[1.0], unital_gammas(rates, t)]))


def unital_choi_diagonal(Gamma) -> np.ndarray:
    """Diagonal of the Choi matrix in the normalized Pauli basis."""
    G1, G2, G3 = Gamma
    return 0.5 * np.array(
        [1 + G1 + G2 + G3, 1 + G1 - G2 - G3, 1 - G1 + G2 - G3, 1 - G1 - G2 + G3]
    )


def unital_cp_check(Gamma, tol: float = 0.0) -> bool:
    """``Gamma_i + Gamma_j <= 1 + Gamma_k`` over cyclic permutations."""
    G1, G2, G3 = Gamma
    return (
        G1 + G2 <= 1 + G3 + tol
        and G2 + G3 <= 1 + G1 + tol
        and G3 + G1 <= 1 + G2 + tol
    )


def unital_kraus(Gamma, tol: float = 1e-10) -> KrausDecomposition:
    """Kraus operators ``c_j sigma_j``, all signs ``+1``.

    ``c_0 = sqrt(1 + G1 + G2 + G3) / 2`` and likewise for the other sign
    patterns, i.e. ``c_j = sqrt(S_jj / 2)`` for the normalized-Pauli Choi diagonal.
    """
    if not unital_cp_check(Gamma, tol):
        raise NotCompletelyPositive(
            f"Gamma={tuple(Gamma)} is outside the CP polytope; "
            "use choi_to_kraus for a signed decomposition"
        )
    weights = np.clip(unital_choi_diagonal(Gamma), 0.0, None)
    ops = [np.sqrt(0.5 * w) * s for w, s in zip(weights, pauli_matrices())]
    return KrausDecomposition(ops, [1, 1, 1, 1], tol)


@dataclass
class DecoherencePair:
    """Survival probability ``p(t)`` and coherence factor ``f(t)``.

    ``p=None`` selects minimal decoherence, ``p = |f|^2``. Derivatives are
    optional; when missing they are estimated by central differences.
    """

    f: Callable[[float], complex]
    p: Callable[[float], float] | None = None
    fdot: Callable[[float], complex] | None = None
    pdot: Callable[[float], float] | None = None

    @property
    def minimal(self) -> bool:
        return self.p is None

    def values(self, t: float, tol: float = 1e-12) -> tuple[complex, float]:
        f = complex(self.f(t))
        p = abs(f) ** 2 if self.p is None else float(self.p(t))
        if not (-tol <= p <= 1 + tol) or abs(f) ** 2 > p + tol:
            raise ValueError(f"invalid decoherence pair at t={t}: p={p}, |f|^2={abs(f) ** 2}")
        return f, p

    def derivatives(self, t: float, h: float = 1e-5) -> tuple[complex, float]:
        if self.fdot is not None:
            fd = complex(self.fdot(t))
        else:
            fd = (complex(self.f(t + h)) - complex(self.f(t - h))) / (2 * h)
        if self.p is None:
            f = complex(self.f(t))
            pd = 2 * (fd * f.conjugate()).real
        elif self.pdot is not None:
            pd = float(self.pdot(t))
        else:
            pd = (float(self.p(t + h)) - float(self.p(t - h))) / (2 * h)
        return fd, pd


def _transfer_from(f: complex, p: float) -> np.ndarray:
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, f.real, -f.imag, 0.0],
            [0.0, f.imag, f.real, 0.0],
            [p - 1.0, 0.0, 0.0, p],
        ]
    )


def min_dec_transfer(pair: DecoherencePair, t: float) -> np.ndarray:
    """Transfer matrix of the two-level-atom map.

    For real ``f`` and ``p = f^2``:
    ``[[1,0,0,0],[0,f,0,0],[0,0,f,0],[f^2-1,0,0,f^2]]``. A complex ``f`` turns
    the ``sigma_1/sigma_2`` block into ``|f|`` times a rotation by ``arg f``.
    """
    f, p = pair.values(t)
    return _transfer_from(f, p)


def min_dec_transfer_derivative(pair: DecoherencePair, t: float) -> np.ndarray:
    fd, pd = pair.derivatives(t)
    D = _transfer_from(fd, pd)
    D[0, 0] = 0.0
    D[3, 0] = pd
    return D


def min_dec_kraus(pair: DecoherencePair, t: float) -> KrausDecomposition:
    """``A_1 = |1><1| + f |2><2|``, ``A_2 = sqrt(1 - |f|^2) |1><2|`` (minimal decoherence)."""
    if not pair.minimal:
        raise ValueError("the two-operator Kraus form requires p = |f|^2")
    f, _ = pair.values(t)
    A1 = np.diag([1.0, f]).astype(complex)
    A2 = np.sqrt(max(0.0, 1.0 - abs(f) ** 2)) * SIGMA_MINUS
    return KrausDecomposition([A1, A2], [1, 1])


class QubitGenerator(NamedTuple):
    L: np.ndarray
    decay: float  # -(fdot f* + f fdot*) / (2|f|^2)
    hamiltonian_coeff: complex  # (fdot f* - f fdot*) / (2|f|^2), purely imaginary
    anti_lindblad: bool
    spec: LindbladGenerator


def min_dec_generator(pair: DecoherencePair, t: float, rank_tol: float = 1e-10) -> QubitGenerator:
    """Generator of the minimal-decoherence map at time ``t``.

    ``rho' = decay (2 s- rho s+ - {s+ s-, rho}) + hamiltonian_coeff [s+ s-, rho]``.
    ``anti_lindblad`` marks a negative effective decay rate (recoherence).
    """
    if not pair.minimal:
        raise ValueError("closed-form generator is only provided for p = |f|^2")
    f, _ = pair.values(t)
    if abs(f) < rank_tol:
        raise ZeroDivisionError(
            "f(t) = 0: F is singular here; use recovery.recover_generator for the "
            "pseudo-inverse branch"
        )
    fd, _ = pair.derivatives(t)
    abs2 = abs(f) ** 2
    decay = -(fd * f.conjugate() + f * fd.conjugate()).real / (2 * abs2)
    ham = (fd * f.conjugate() - f * fd.conjugate()) / (2 * abs2)
    # ham [s+s-, rho] == -i [H, rho] with H = i * ham * s+s-
    H = (1j * ham * EXCITED)
    H = 0.5 * (H + H.conj().T)
    spec = LindbladGenerator(2, H, [(SIGMA_MINUS, 2 * decay)])
    L = generator_to_matrix(spec, build_basis(2))
    return QubitGenerator(L, float(decay), complex(ham), bool(decay < 0), spec)


def real_f_generator(c: float) -> np.ndarray:
    """Real-``f`` generator matrix with ``c = fdot / f``."""
    L = np.diag([0.0, c, c, 2 * c])
    L[3, 0] = 2 * c
    return L


def coefficients_from_generator(L) -> tuple[float, complex]:
    """Read ``(decay, hamiltonian_coeff)`` back from a two-level-atom ``L``."""
    L = np.asarray(L)
    return float(-0.5 * (L[1, 1] + L[2, 2])), complex(0.5j * (L[2, 1] - L[1, 2]))
