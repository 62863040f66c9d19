"""Hermite function and orthonormal Hermite polynomial evaluation.

All evaluators use the three-term recurrence on the *normalized* family, so
no factorials or binomials appear and levels up to a few hundred stay finite.
"""

from __future__ import annotations

import numpy as np


def hermite_functions(u, lmax: int) -> np.ndarray:
    """Normalized harmonic-oscillator eigenfunctions h_0..h_lmax at points u.

    h_l(u) = (2^l l! sqrt(pi))^{-1/2} e^{-u^2/2} H_l(u), orthonormal on the
    real line. Returns an array of shape (lmax+1,) + u.shape.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty((lmax + 1,) + u.shape, dtype=float)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * u * u)
    if lmax >= 1:
        out[1] = np.sqrt(2.0) * u * out[0]
    for l in range(1, lmax):
        out[l + 1] = np.sqrt(2.0 / (l + 1)) * u * out[l] - np.sqrt(l / (l + 1.0)) * out[l - 1]
    return out


def hermite_polynomials(u, lmax: int) -> np.ndarray:
    """Orthonormal Hermite polynomials P_0..P_lmax (no Gaussian weight).

    P_l(u) = H_l(u)/sqrt(2^l l! sqrt(pi)), so that h_l(u) = e^{-u^2/2} P_l(u).
    Satisfies P_l' = sqrt(2 l) P_{l-1}.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty((lmax + 1,) + u.shape, dtype=float)
    out[0] = np.full(u.shape, np.pi ** -0.25)
    if lmax >= 1:
        out[1] = np.sqrt(2.0) * u * out[0]
    for l in range(1, lmax):
        out[l + 1] = np.sqrt(2.0 / (l + 1)) * u * out[l] - np.sqrt(l / (l + 1.0)) * out[l - 1]
    return out
