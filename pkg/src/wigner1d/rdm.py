"""Strong-repulsion one-particle density matrix in closed form.

In the crystal limit the ground state is a product of normal-mode Gaussians,
and integrating out all but one particle can be done with block linear
algebra. Writing the squared ground state as exp(-z^T M z) with
M = U^T diag(omega) U, the marginal kernel of site i is

    rho_i(x, y) = A exp(-a (x^2 + y^2) - b x y)

with, after splitting M into the site scalar m, coupling vector u and
remainder block K (s = u^T K^{-1} u):

    a = m/2 - s/4,   b = -s/2,   A = (1/N) sqrt(prod omega / (pi det K)).

Mehler's identity then gives the spectral ladder of each kernel explicitly:
a geometric occupancy sequence lambda_l = lambda_0 y^l with oscillator
eigenfunctions of width w as natural orbitals. Mirror-partner sites share a
kernel, so every ladder is two-fold degenerate except the middle site of an
odd chain; the sum and difference combinations of the two displaced partner
orbitals give an alternative orthogonal eigenbasis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crystal import SystemSpec, solve_equilibrium
from .errors import InvalidKernelError
from .hermite import hermite_functions
from .modes import NormalModes, decompose, hessian

KIND_SITE = "site"
KIND_SUM = "sum"
KIND_DIFFERENCE = "difference"


@dataclass(frozen=True)
class GaussianKernel:
    """Per-site marginal kernel A exp(-a(x^2+y^2) - b x y), in site frame."""

    site: int
    amplitude: float
    diag_coeff: float
    cross_coeff: float

    def __post_init__(self):
        a, b = self.diag_coeff, self.cross_coeff
        if not (self.amplitude > 0 and a > 0 and b < 0 and 2 * a > abs(b)):
            raise InvalidKernelError(
                f"invalid kernel parameters A={self.amplitude}, a={a}, b={b}"
            )

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return self.amplitude * np.exp(
            -self.diag_coeff * (x * x + y * y) - self.cross_coeff * x * y
        )


@dataclass(frozen=True)
class SchmidtSite:
    """Spectral data of one site kernel: geometric ladder lambda_0 y^l."""

    site: int
    amplitude: float
    width: float
    ratio: float
    lambda0: float
    site_trace: float

    def occupancies(self, lmax: int) -> np.ndarray:
        return self.lambda0 * self.ratio ** np.arange(lmax + 1)

    def truncation_level(self, tail: float = 1e-12) -> int:
        """Smallest level count whose discarded geometric tail is <= tail."""
        y = self.ratio
        if y <= 0.0:
            return 2
        lmax = int(np.ceil(np.log(tail * (1.0 - y) / self.lambda0) / np.log(y)))
        return max(2, lmax)


@dataclass(frozen=True)
class Orbital:
    """Evaluable natural orbital; kind is site, sum or difference.

    A site orbital is an oscillator eigenfunction of the kernel width centered
    on the site. Sum/difference orbitals combine the two mirror-partner copies
    with 1/sqrt(2) weights.
    """

    kind: str
    site: int
    level: int
    width: float
    centers: tuple[float, ...]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        parts = [self._single(x, c) for c in self.centers]
        if self.kind == KIND_SITE:
            return parts[0]
        if self.kind == KIND_SUM:
            return (parts[0] + parts[1]) / np.sqrt(2.0)
        return (parts[0] - parts[1]) / np.sqrt(2.0)

    def _single(self, x, center):
        u = np.sqrt(self.width) * (x - center)
        return self.width ** 0.25 * hermite_functions(u, self.level)[self.level]


def site_kernel(modes: NormalModes, site: int) -> GaussianKernel:
    """Marginalize the crystal ground state onto one site by block algebra.

    site is 1-based. Uses a Cholesky factor of the remainder block, so the
    result is exact to rounding; no numerical integration is involved.
    """
    n = modes.n
    if not 1 <= site <= n:
        raise ValueError(f"site must be in 1..{n}, got {site}")
    omega = np.sqrt(modes.omega_sq)
    m_full = modes.u.T @ np.diag(omega) @ modes.u
    idx = site - 1
    rest = [j for j in range(n) if j != idx]
    m = m_full[idx, idx]
    u_vec = m_full[idx, rest]
    k_block = m_full[np.ix_(rest, rest)]
    chol = np.linalg.cholesky(k_block)
    t = np.linalg.solve(chol, u_vec)
    s = float(t @ t)
    det_k = float(np.prod(np.diag(chol)) ** 2)
    a = 0.5 * m - 0.25 * s
    b = -0.5 * s
    amplitude = (1.0 / n) * np.sqrt(np.prod(omega) / (np.pi * det_k))
    return GaussianKernel(site=site, amplitude=amplitude, diag_coeff=a, cross_coeff=b)


def mehler_schmidt(kernel: GaussianKernel) -> SchmidtSite:
    """Closed-form Schmidt data of a Gaussian kernel via Mehler's formula."""
    a, b = kernel.diag_coeff, kernel.cross_coeff
    if 2 * a + b <= 0:
        raise InvalidKernelError(f"2a + b = {2 * a + b:.3e} <= 0: kernel is not trace class")
    sm = np.sqrt(2 * a - b)
    sp = np.sqrt(2 * a + b)
    w = sm * sp
    y = (sm - sp) / (sm + sp)
    lambda0 = kernel.amplitude * np.sqrt(np.pi * (1.0 - y * y) / w)
    return SchmidtSite(
        site=kernel.site,
        amplitude=kernel.amplitude,
        width=w,
        ratio=y,
        lambda0=lambda0,
        site_trace=lambda0 / (1.0 - y),
    )


def natural_orbital(schmidt: SchmidtSite, level: int, center: float = 0.0) -> Orbital:
    """Natural orbital of one site at the given level, optionally re-centered."""
    if level < 0:
        raise ValueError("orbital level must be non-negative")
    return Orbital(
        kind=KIND_SITE, site=schmidt.site, level=level, width=schmidt.width, centers=(center,)
    )


def degenerate_pair(
    schmidt: SchmidtSite, n: int, level: int, centers: tuple[float, float]
) -> tuple[Orbital, Orbital]:
    """Sum and difference orbitals of a mirror-degenerate site pair.

    centers are the scaled equilibrium positions of site i and its partner
    N-i+1. The two returned orbitals are orthogonal by construction; their
    norms differ from 1 by the displaced-orbital overlap, which decays
    Gaussian-fast with the separation.
    """
    partner = n - schmidt.site + 1
    if partner == schmidt.site:
        raise ValueError(f"site {schmidt.site} of a {n}-chain is unpaired (middle site)")
    common = dict(site=schmidt.site, level=level, width=schmidt.width, centers=tuple(centers))
    return Orbital(kind=KIND_SUM, **common), Orbital(kind=KIND_DIFFERENCE, **common)


@dataclass(frozen=True)
class AsymptoticRDM:
    """Truncated strong-repulsion density matrix as an evaluable kernel."""

    sites: tuple[SchmidtSite, ...]
    centers: tuple[float, ...]
    levels: tuple[int, ...]

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        total = np.zeros(np.broadcast(x, y).shape)
        for schmidt, center, lmax in zip(self.sites, self.centers, self.levels):
            sw = np.sqrt(schmidt.width)
            hx = hermite_functions(sw * (x - center), lmax)
            hy = hermite_functions(sw * (y - center), lmax)
            lam = schmidt.occupancies(lmax)
            total = total + sw * np.einsum("l,l...,l...->...", lam, hx, hy)
        return total

    def matrix(self, nodes: np.ndarray) -> np.ndarray:
        """Kernel sampled on a 1D grid: entry (i, j) is rho(nodes_i, nodes_j)."""
        out = np.zeros((nodes.size, nodes.size))
        for schmidt, center, lmax in zip(self.sites, self.centers, self.levels):
            sw = np.sqrt(schmidt.width)
            h = hermite_functions(sw * (nodes - center), lmax)
            lam = schmidt.occupancies(lmax)
            out += sw * (h.T * lam) @ h
        return out


def assemble_asymptotic_rdm(
    sites: list[SchmidtSite], centers, tail: float = 1e-12
) -> AsymptoticRDM:
    """Sum of per-site spectral ladders, truncated by the geometric tail bound."""
    centers = tuple(float(c) for c in np.asarray(centers, dtype=float))
    if len(centers) != len(sites):
        raise ValueError("need one center per site")
    levels = tuple(s.truncation_level(tail) for s in sites)
    return AsymptoticRDM(sites=tuple(sites), centers=centers, levels=levels)


@dataclass(frozen=True)
class AsymptoticSolution:
    """Bundle of everything the strong-repulsion analysis produces."""

    spec: SystemSpec
    config: object
    modes: NormalModes
    kernels: tuple[GaussianKernel, ...]
    sites: tuple[SchmidtSite, ...]


def asymptotic_sites(n: int, d: float) -> AsymptoticSolution:
    """Full chain: equilibrium -> modes -> per-site kernels -> Schmidt data."""
    spec = SystemSpec(n=n, d=d)
    config = solve_equilibrium(spec)
    nm = decompose(hessian(config, d))
    kernels = tuple(site_kernel(nm, i) for i in range(1, n + 1))
    sites = tuple(mehler_schmidt(k) for k in kernels)
    return AsymptoticSolution(spec=spec, config=config, modes=nm, kernels=kernels, sites=sites)
