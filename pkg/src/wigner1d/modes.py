"""Normal-mode analysis of the crystal: Hessian build and Jacobi eigensolve.

The Hessian of the scaled potential at equilibrium is independent of the
coupling. Its eigenvalues are the squared mode frequencies, the lowest being
exactly 1 (center-of-mass mode); every eigenvector is mirror symmetric or
antisymmetric because the equilibrium chain is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crystal import EquilibriumConfig, potential_hessian
from .errors import ConvergenceError, NotAMinimumError

SYMMETRIC = "symmetric"
ANTISYMMETRIC = "antisymmetric"

_PARITY_TOL = 1e-8
_DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class NormalModes:
    """Squared frequencies (ascending), eigenvector rows and parity labels."""

    omega_sq: np.ndarray
    u: np.ndarray
    parity: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.omega_sq.size


def hessian(config: EquilibriumConfig, d: float) -> np.ndarray:
    """Hessian of the scaled potential at the equilibrium configuration."""
    return potential_hessian(config.beta, d, g=1.0)


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvectors as columns). Converged when
    the off-diagonal Frobenius norm drops below tol * max(1, ||A||_F).
    Deterministic: fixed sweep order, no pivoting choices.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12):
        raise ValueError("jacobi_eigh expects a symmetric square matrix")
    v = np.eye(n)
    target = tol * max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 0.1 * target / (n * n):
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    else:
        raise ConvergenceError("Jacobi sweeps exhausted before convergence")
    vals = np.diag(a).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], v[:, order]


def _parity_of(row: np.ndarray) -> str | None:
    flipped = row[::-1]
    if np.max(np.abs(row - flipped)) <= _PARITY_TOL:
        return SYMMETRIC
    if np.max(np.abs(row + flipped)) <= _PARITY_TOL:
        return ANTISYMMETRIC
    return None


def _remix_degenerate(rows: np.ndarray, omega_sq: np.ndarray) -> np.ndarray:
    """Re-mix rows of (near-)degenerate eigenvalue groups onto parity sectors.

    Not expected to trigger for this Hessian family at finite N, but guards
    parity labeling against accidental degeneracies.
    """
    rows = rows.copy()
    start = 0
    while start < omega_sq.size:
        stop = start + 1
        while stop < omega_sq.size and omega_sq[stop] - omega_sq[stop - 1] <= _DEGENERACY_TOL:
            stop += 1
        if stop - start > 1:
            block = rows[start:stop]
            candidates = np.vstack([(block + block[:, ::-1]) / 2.0, (block - block[:, ::-1]) / 2.0])
            picked = []
            for cand in candidates:
                vec = cand.copy()
                for prev in picked:
                    vec -= np.dot(vec, prev) * prev
                nrm = np.linalg.norm(vec)
                if nrm > 1e-8:
                    picked.append(vec / nrm)
                if len(picked) == stop - start:
                    break
            rows[start:stop] = np.array(picked)
        start = stop
    return rows


def _fix_signs(rows: np.ndarray) -> np.ndarray:
    rows = rows.copy()
    for i, row in enumerate(rows):
        nz = np.nonzero(np.abs(row) > 1e-12)[0]
        if nz.size and row[nz[0]] < 0:
            rows[i] = -row
    return rows


def decompose(h: np.ndarray) -> NormalModes:
    """Diagonalize a positive-definite Hessian into NormalModes.

    Raises NotAMinimumError if any eigenvalue is non-positive. Row signs are
    fixed (first nonzero entry positive) so downstream results reproduce
    bit-for-bit across runs.
    """
    vals, vecs = jacobi_eigh(h)
    if vals[0] <= 0:
        raise NotAMinimumError(f"non-positive Hessian eigenvalue {vals[0]:.3e}: not a minimum")
    rows = _remix_degenerate(vecs.T, vals)
    rows = _fix_signs(rows)
    parity = []
    for i, row in enumerate(rows):
        label = _parity_of(row)
        if label is None:
            raise ConvergenceError(f"mode {i} violates mirror parity beyond tolerance")
        parity.append(label)
    return NormalModes(omega_sq=vals, u=rows, parity=tuple(parity))
