"""Classical equilibrium configuration of the trapped interacting chain.

The dimensionless potential (coupling scaled out) is

    V(b) = 1/2 sum_i b_i^2 + sum_{i>j} |b_i - b_j|^{-d},

and the physical equilibrium at coupling g is b_i * g^{1/(2+d)}. The minimum
is found by a damped Newton iteration with analytic gradient and Hessian,
symmetrizing every iterate so the mirror antisymmetry b_i = -b_{N-i+1} holds
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError, NotAMinimumError


@dataclass(frozen=True)
class SystemSpec:
    """Particle count, interaction exponent and (optional) coupling strength."""

    n: int
    d: float
    g: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 particles, got n={self.n}")
        if self.d <= 0:
            raise ValueError(f"interaction exponent must be positive, got d={self.d}")
        if self.g is not None and self.g <= 0:
            raise ValueError(f"coupling must be positive when given, got g={self.g}")


@dataclass(frozen=True)
class EquilibriumConfig:
    """Ordered stationary point of the scaled potential.

    beta is strictly increasing, sums to zero and is mirror antisymmetric.
    gradient_norm is the max-norm stationarity residual at beta.
    """

    beta: np.ndarray
    gradient_norm: float

    @property
    def n(self) -> int:
        return self.beta.size


def _pair_distances(positions: np.ndarray) -> np.ndarray:
    """Signed pairwise differences x_k - x_j; raises on coincidence."""
    diffs = positions[:, None] - positions[None, :]
    off = ~np.eye(positions.size, dtype=bool)
    if np.any(diffs[off] == 0.0):
        raise DomainError("coincident positions: interaction potential diverges")
    return diffs


def potential_energy(positions, d: float, g: float = 1.0) -> float:
    """Trap plus pairwise inverse-power repulsion at the given positions."""
    x = np.asarray(positions, dtype=float)
    diffs = _pair_distances(x)
    iu = np.triu_indices(x.size, 1)
    return 0.5 * float(np.sum(x * x)) + g * float(np.sum(np.abs(diffs[iu]) ** (-d)))


def potential_gradient(positions, d: float, g: float = 1.0) -> np.ndarray:
    """Analytic gradient of `potential_energy` w.r.t. each position."""
    x = np.asarray(positions, dtype=float)
    diffs = _pair_distances(x)
    absd = np.abs(diffs)
    np.fill_diagonal(absd, 1.0)
    inv = absd ** (-(d + 1))
    np.fill_diagonal(inv, 0.0)
    return x - g * d * np.sum(np.sign(diffs) * inv, axis=1)


def potential_hessian(positions, d: float, g: float = 1.0) -> np.ndarray:
    """Analytic Hessian of `potential_energy`; symmetric by construction."""
    x = np.asarray(positions, dtype=float)
    diffs = _pair_distances(x)
    absd = np.abs(diffs)
    np.fill_diagonal(absd, 1.0)
    curv = g * d * (d + 1) * absd ** (-(d + 2))
    np.fill_diagonal(curv, 0.0)
    h = -curv
    h[np.diag_indices_from(h)] = 1.0 + np.sum(curv, axis=1)
    return h


def evaluate_potential(spec: SystemSpec, positions) -> float:
    """Potential of `spec` (g defaults to 1) at the given positions."""
    g = 1.0 if spec.g is None else spec.g
    x = np.asarray(positions, dtype=float)
    if x.size != spec.n:
        raise ValueError(f"expected {spec.n} positions, got {x.size}")
    return potential_energy(x, spec.d, g)


def _mirror_project(beta: np.ndarray) -> np.ndarray:
    return 0.5 * (beta - beta[::-1])


def solve_equilibrium(spec: SystemSpec, tol: float = 1e-12, max_iter: int = 200) -> EquilibriumConfig:
    """Damped Newton minimization of the scaled potential.

    Starts from unit-spaced points centered at the origin; each iterate is
    projected onto the mirror-antisymmetric sector, which the minimum obeys.
    Raises ConvergenceError (carrying the last iterate) if the stationarity
    residual does not reach `tol` within `max_iter` iterations.
    """
    n, d = spec.n, spec.d
    beta = np.arange(n, dtype=float) - 0.5 * (n - 1)
    for _ in range(max_iter):
        beta = _mirror_project(beta)
        grad = potential_gradient(beta, d)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= tol:
            hess = potential_hessian(beta, d)
            try:
                np.linalg.cholesky(hess)
            except np.linalg.LinAlgError:
                raise NotAMinimumError("stationary point has a non-positive Hessian direction")
            return EquilibriumConfig(beta=beta, gradient_norm=gnorm)
        step = np.linalg.solve(potential_hessian(beta, d), grad)
        t = 1.0
        while t > 2.0 ** -40:
            cand = beta - t * step
            if np.all(np.diff(cand) > 0):
                cnorm = float(np.max(np.abs(potential_gradient(cand, d))))
                if cnorm < gnorm:
                    break
            t *= 0.5
        else:
            raise ConvergenceError("Newton step stalled", last_iterate=beta)
        beta = cand
    raise ConvergenceError(
        f"equilibrium not converged after {max_iter} iterations", last_iterate=beta
    )


def scale_positions(config: EquilibriumConfig, spec: SystemSpec) -> np.ndarray:
    """Equilibrium positions at coupling spec.g: beta * g^{1/(2+d)}."""
    if spec.g is None:
        raise ValueError("spec.g is required to scale equilibrium positions")
    return config.beta * spec.g ** (1.0 / (2.0 + spec.d))
