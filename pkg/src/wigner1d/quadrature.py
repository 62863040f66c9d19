"""Gauss-Legendre helpers used by the integral pipelines."""

from __future__ import annotations

import numpy as np


def gauss_legendre(n: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [lo, hi]."""
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return mid + half * x, half * w


def tensor_rule(nodes: np.ndarray, weights: np.ndarray, dims: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product rule over `dims` copies of a 1D rule.

    Returns points of shape (n**dims, dims) and the matching weight products.
    """
    grids = np.meshgrid(*([nodes] * dims), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([weights] * dims), indexing="ij")
    wts = np.ones(points.shape[0])
    for g in wgrids:
        wts = wts * g.ravel()
    return points, wts
