"""Solving ``dF/dt = L(t) F`` with ``F(t0) = I`` on a uniform grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .basis import HermitianBasis, build_basis
from .generators import GeneratorSpec, generator_to_matrix

METHODS = ("exact_expm", "magnus2", "rk4")


class IntegrationError(ArithmeticError):
    pass


class TimeDependentGeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t_final: float
    steps: int

    def __post_init__(self):
        if not self.t_final > self.t0:
            raise ValueError("t_final must exceed t0")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")

    @property
    def h(self) -> float:
        return (self.t_final - self.t0) / self.steps

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.t0, self.t_final, self.steps + 1)


@dataclass
class Trajectory:
    """Transfer matrices ``F[i]`` at ``times[i]``."""

    times: np.ndarray
    F: np.ndarray
    method: str = "tabulated"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if self.F.ndim != 3 or len(self.F) != len(self.times):
            raise ValueError("need one square matrix per time point")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self):
        return len(self.times)


def _normalize_method(method: str) -> str:
    m = method.replace("-", "_").lower()
    if m not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return m


def _is_constant(Lfun, points) -> bool:
    mids = 0.5 * (points[1:] + points[:-1])
    L0 = Lfun(points[0])
    return all(np.max(np.abs(Lfun(t) - L0)) < 1e-12 for t in mids)


def propagate(spec: GeneratorSpec, grid: TimeGrid, method: str = "magnus2", basis: HermitianBasis | None = None) -> Trajectory:
    """Transfer-matrix trajectory of a generator.

    ``exact_expm`` evaluates ``expm(L (t - t0))`` directly and requires a
    time-independent generator. ``magnus2`` applies
    ``expm(h L(t + h/2))`` per step; ``rk4`` is the classical fourth-order
    Runge-Kutta scheme on the matrix equation.
    """
    method = _normalize_method(method)
    basis = basis or build_basis(spec.dim)
    Lfun = lambda t: generator_to_matrix(spec, basis, t)
    pts = grid.points
    h = grid.h
    n = len(basis)
    out = np.empty((len(pts), n, n))
    out[0] = np.eye(n)

    if method == "exact_expm":
        if not _is_constant(Lfun, pts):
            raise TimeDependentGeneratorError("exact_expm requires a time-independent generator")
        L = Lfun(pts[0])
        for i, t in enumerate(pts[1:], start=1):
            out[i] = expm(L * (t - grid.t0))
    else:
        F = np.eye(n)
        for i in range(grid.steps):
            t = pts[i]
            if method == "magnus2":
                F = expm(h * Lfun(t + 0.5 * h)) @ F
            else:
                L_mid = Lfun(t + 0.5 * h)
                k1 = Lfun(t) @ F
                k2 = L_mid @ (F + 0.5 * h * k1)
                k3 = L_mid @ (F + 0.5 * h * k2)
                k4 = Lfun(t + h) @ (F + h * k3)
                F = F + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(F)):
                raise IntegrationError(f"non-finite transfer matrix at step {i + 1}")
            out[i + 1] = F
    return Trajectory(pts, out, method)


def differentiate_trajectory(traj: Trajectory) -> np.ndarray:
    """Second-order finite-difference ``dF/dt`` at every grid point.

    Central differences inside, three-point one-sided stencils at the ends.
    """
    if len(traj) < 3:
        raise ValueError("need at least 3 grid points to differentiate")
    return np.gradient(traj.F, traj.times, axis=0, edge_order=2)
