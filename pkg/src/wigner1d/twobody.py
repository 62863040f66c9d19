"""Two-particle relative motion: exact polynomial states and Rayleigh-Ritz.

For the 1/|x| relative problem there is a countable set of couplings at which
the even ground state is a finite polynomial times a Gaussian,

    phi(x) = |x| e^{-x^2/2} sum_{k=0}^{n} a_k |x|^k,

with the coefficients obeying a three-term recurrence and the energy pinned
to (3 + 2n)/2. At generic coupling the lowest odd state is found variationally
in a basis of odd oscillator eigenfunctions. Either solution yields the pair
correlation factor f(x) = e^{x^2/2} phi(|x|) used by the many-body ansatz; in
the free-singular limit f reduces to |x|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SearchFailureError, UnsupportedError
from .hermite import hermite_functions, hermite_polynomials
from .quadrature import gauss_legendre

TONKS = "tonks"

_SCAN_HI = 100.0
_SCAN_STEP = 0.25


@dataclass(frozen=True)
class OddSeries:
    """Terminating series solution: coupling, energy and coefficients a_0..a_n."""

    n: int
    g_magic: float
    e_rel: float
    coeffs: np.ndarray


@dataclass(frozen=True)
class RelativeSolution:
    """Variational lowest odd state: expansion over odd oscillator functions."""

    g: float
    basis_size: int
    coeffs: np.ndarray
    e_rel: float


@dataclass(frozen=True)
class CorrelationFactor:
    """Even pair factor with f(0) = 0; derivative defined away from the kink."""

    provenance: str
    g: float | None
    _value: object
    _deriv: object
    _value_deriv: object = None
    _value_deriv2: object = None

    def __call__(self, x):
        return self._value(np.asarray(x, dtype=float))

    def deriv(self, x):
        return self._deriv(np.asarray(x, dtype=float))

    def value_and_deriv(self, x):
        """Both f and f' in one pass (shared recurrences where available)."""
        x = np.asarray(x, dtype=float)
        if self._value_deriv is not None:
            return self._value_deriv(x)
        return self._value(x), self._deriv(x)

    def value_deriv2(self, x):
        """f, f' and f'' away from the kink (Monte Carlo local energies)."""
        x = np.asarray(x, dtype=float)
        return self._value_deriv2(x)


def series_coefficients(n: int, g: float, terms: int | None = None) -> np.ndarray:
    """Coefficients a_0..a_terms of the even series at energy (3+2n)/2.

    Recurrence: (2k - 2n - 4) a_{k-2} + sqrt(2) g a_{k-1} = k (k+1) a_k,
    normalized so a_0 = 1. By default returns through a_{n+1}, whose zero is
    the termination condition.
    """
    if terms is None:
        terms = n + 1
    a = np.empty(terms + 1)
    a[0] = 1.0
    for k in range(1, terms + 1):
        prev2 = a[k - 2] if k >= 2 else 0.0
        a[k] = ((2 * k - 2 * n - 4) * prev2 + np.sqrt(2.0) * g * a[k - 1]) / (k * (k + 1))
    return a


def _termination_residual(n: int, g: float) -> float:
    return float(series_coefficients(n, g)[n + 1])


def magic_g(n: int) -> OddSeries:
    """Coupling at which the order-n series terminates with positive coefficients.

    The termination residual is a degree n+1 polynomial in g; brackets are
    located by a sign scan with step 0.25 over (0, 100] and refined by
    bisection. Among all positive roots only the one with an all-positive
    coefficient sequence describes the nodeless ground state; smaller roots
    with sign changes belong to excited states.
    """
    if n < 1:
        raise ValueError(f"series order must be >= 1, got n={n}")
    grid = np.arange(_SCAN_STEP / 25.0, _SCAN_HI + _SCAN_STEP, _SCAN_STEP)
    values = np.array([_termination_residual(n, g) for g in grid])
    accepted = []
    for i in range(grid.size - 1):
        if np.sign(values[i]) == np.sign(values[i + 1]):
            continue
        lo, hi = grid[i], grid[i + 1]
        flo = values[i]
        while hi - lo > 1e-14 * max(1.0, hi):
            mid = 0.5 * (lo + hi)
            fmid = _termination_residual(n, mid)
            if np.sign(fmid) == np.sign(flo):
                lo, flo = mid, fmid
            else:
                hi = mid
        root = 0.5 * (lo + hi)
        coeffs = series_coefficients(n, root)[: n + 1]
        if np.all(coeffs > 0):
            accepted.append((root, coeffs))
    if not accepted:
        raise SearchFailureError(f"no all-positive termination root found for n={n}")
    root, coeffs = accepted[-1]
    return OddSeries(n=n, g_magic=root, e_rel=(3.0 + 2.0 * n) / 2.0, coeffs=coeffs)


def _interaction_matrix(basis_size: int) -> np.ndarray:
    """<odd m | 1/|x| | odd n> by adaptive Gauss-Legendre on (0, 20], doubled.

    The integrand is smooth: odd x odd / x vanishes linearly at the origin.
    Refines the node count by x1.5 until successive levels agree to 1e-10.
    """
    lmax = 2 * basis_size - 1
    prev = None
    npts = 192
    for _ in range(8):
        x, wts = gauss_legendre(npts, 0.0, 20.0)
        h = hermite_functions(x, lmax)[1::2]
        mat = 2.0 * (h * (wts / x)) @ h.T
        if prev is not None and np.max(np.abs(mat - prev)) <= 1e-10:
            return mat
        prev = mat
        npts = int(npts * 1.5)
    raise SearchFailureError("interaction matrix elements did not converge")


def relative_ground_odd(g: float, basis_size: int = 10, d: float = 1.0) -> RelativeSolution:
    """Rayleigh-Ritz lowest odd eigenpair of the relative Hamiltonian at d=1.

    Basis: the `basis_size` lowest odd oscillator eigenfunctions. The trap
    part is diagonal (index + 1/2); the 1/|x| part comes from quadrature.
    Other exponents are rejected: matrix elements of steeper singularities
    diverge in this basis.
    """
    if d != 1.0:
        raise UnsupportedError(f"variational relative solver supports d=1 only, got d={d}")
    if g <= 0:
        raise ValueError(f"coupling must be positive, got g={g}")
    indices = 2 * np.arange(basis_size) + 1
    h = np.diag(indices + 0.5) + (g / np.sqrt(2.0)) * _interaction_matrix(basis_size)
    vals, vecs = np.linalg.eigh(h)
    coeffs = vecs[:, 0]
    if coeffs[0] < 0:
        coeffs = -coeffs
    return RelativeSolution(g=g, basis_size=basis_size, coeffs=coeffs, e_rel=float(vals[0]))


def _series_factor(series: OddSeries) -> CorrelationFactor:
    poly = series.coeffs
    orders = np.arange(poly.size)
    dpoly = poly * (orders + 1.0)
    d2poly = (poly * (orders + 1.0) * orders)[1:]  # |x|^{k-1} terms, k >= 1

    def value(x):
        ax = np.abs(x)
        return ax * np.polynomial.polynomial.polyval(ax, poly)

    def deriv(x):
        return np.sign(x) * np.polynomial.polynomial.polyval(np.abs(x), dpoly)

    def both2(x):
        ax = np.abs(x)
        f = ax * np.polynomial.polynomial.polyval(ax, poly)
        df = np.sign(x) * np.polynomial.polynomial.polyval(ax, dpoly)
        if d2poly.size:
            d2f = np.polynomial.polynomial.polyval(ax, d2poly)
        else:
            d2f = np.zeros_like(ax)
        return f, df, d2f

    return CorrelationFactor(
        provenance="magic-series", g=series.g_magic, _value=value, _deriv=deriv,
        _value_deriv2=both2,
    )


def _ritz_factor(solution: RelativeSolution) -> CorrelationFactor:
    coeffs = solution.coeffs
    basis = solution.basis_size
    lmax = 2 * basis - 1
    odd = 2 * np.arange(basis) + 1
    dscale = coeffs * np.sqrt(2.0 * odd)  # P_n' = sqrt(2 n) P_{n-1}
    d2scale = (coeffs * np.sqrt(2.0 * odd) * np.sqrt(2.0 * (odd - 1)))[1:]

    def both(x):
        p = hermite_polynomials(x, lmax)
        s = np.einsum("k,k...->...", coeffs, p[1::2])
        ds = np.einsum("k,k...->...", dscale, p[0::2])
        return np.abs(s), np.sign(s) * ds

    def value(x):
        return np.abs(np.einsum("k,k...->...", coeffs, hermite_polynomials(x, lmax)[1::2]))

    def deriv(x):
        return both(x)[1]

    def both2(x):
        p = hermite_polynomials(x, lmax)
        s = np.einsum("k,k...->...", coeffs, p[1::2])
        ds = np.einsum("k,k...->...", dscale, p[0::2])
        d2s = np.einsum("k,k...->...", d2scale, p[1::2][: basis - 1])
        sign = np.sign(s)
        return np.abs(s), sign * ds, sign * d2s

    return CorrelationFactor(
        provenance="rayleigh-ritz", g=solution.g, _value=value, _deriv=deriv,
        _value_deriv=both, _value_deriv2=both2,
    )


def tonks_factor() -> CorrelationFactor:
    """Exact pair factor of the free-singular limit: f(x) = |x|."""
    return CorrelationFactor(
        provenance=TONKS, g=None, _value=np.abs, _deriv=np.sign,
        _value_deriv2=lambda x: (np.abs(x), np.sign(x), np.zeros_like(x)),
    )


def make_correlation_factor(source) -> CorrelationFactor:
    """Pair factor f(x) = e^{x^2/2} phi(|x|) from any relative-motion solution.

    For a terminating series the Gaussian cancels and f is the polynomial
    |x| sum a_k |x|^k; for a variational solution f is the absolute value of
    the odd orthonormal-Hermite-polynomial combination; the string "tonks"
    selects f = |x|.
    """
    if isinstance(source, OddSeries):
        return _series_factor(source)
    if isinstance(source, RelativeSolution):
        return _ritz_factor(source)
    if source == TONKS:
        return tonks_factor()
    raise TypeError(f"cannot build a correlation factor from {type(source).__name__}")
