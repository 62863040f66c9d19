"""Finite-coupling pipeline: Jastrow trial state, variational scale, Nystrom.

The trial state is a product of single-particle Gaussians times pair factors,

    chi(x_1..x_N) = prod_k e^{-x_k^2/2} prod_{i>j} f(alpha (x_i - x_j)/sqrt(2)),

with the scale alpha fixed by minimizing the energy functional in gradient
form, E = [int (1/2 |grad chi|^2 + V chi^2)] / [int chi^2]. The gradient form
avoids distributional second derivatives at the |x|-type kinks of f; the
chi^2 weight vanishes on every coincidence hyperplane.

The one-particle density matrix is sampled on a uniform grid and the integral
eigenproblem is replaced by the matrix B = [dy * rho(m_i, m_j)], whose
eigenvalues approximate the largest occupancies. For N <= 3 the marginal
integrals are tensor Gauss-Legendre quadratures; for N >= 4 they are Metropolis
Monte Carlo averages (estimator documented at `rdm_monte_carlo`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .crystal import SystemSpec, solve_equilibrium, scale_positions
from .errors import BoundaryWarning, NystromWarning, PrecisionError, UnsupportedError
from .quadrature import gauss_legendre
from .twobody import (
    TONKS,
    CorrelationFactor,
    magic_g,
    make_correlation_factor,
    relative_ground_odd,
)

_SQRT2 = math.sqrt(2.0)
_EIGENVALUE_FLOOR = -1e-8
_OCCUPANCY_CUTOFF = 1e-12


@dataclass(frozen=True)
class JastrowAnsatz:
    """Trial state: particle count, variational scale and pair factor."""

    n: int
    alpha: float
    f: CorrelationFactor


@dataclass(frozen=True)
class NystromGrid:
    """Uniform symmetric grid m_i = -c + dy*i used to discretize the kernel."""

    half_extent: float
    points: int

    def __post_init__(self):
        if self.points < 3:
            raise ValueError("grid needs at least 3 points")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / (self.points - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.half_extent, self.half_extent, self.points)


@dataclass(frozen=True)
class RDMatrix:
    """Discretized density matrix; `b` is trace-normalized, raw trace kept."""

    b: np.ndarray
    trace_raw: float
    grid: NystromGrid

    @property
    def raw(self) -> np.ndarray:
        return self.b * self.trace_raw


@dataclass(frozen=True)
class QuadratureIntegrator:
    """Deterministic Gauss-Legendre settings (N <= 3 only).

    Energy integrals run over the ordered sector x_1 < ... < x_N (times N!),
    where every pair factor has a fixed sign and the integrand is smooth, so
    convergence is spectral despite the |x|-type kinks. Marginal integrals
    for the grid kernel panelize each dummy coordinate at the grid nodes
    (all fixed kink locations) and order the dummy pair.
    """

    base_points: int = 64
    pad: float = 2.0
    refine_factor: float = 1.5
    energy_tol: float = 1e-5
    max_refinements: int = 3
    panel_points: int = 8
    search_points: int = 40


@dataclass(frozen=True)
class MonteCarloIntegrator:
    """Metropolis settings; identical seed and samples give identical output.

    `samples` counts chi^2-distributed configurations used by the estimator
    (walkers x accumulation steps); the chain advances `stride` Metropolis
    steps between accumulations. The proposal width is tuned to roughly 50%
    acceptance during thermalization and then frozen.
    """

    seed: int = 0
    samples: int = 10_000_000
    walkers: int = 512
    thermalization: int = 2000
    stride: int = 2
    blocks: int = 20
    # scale-optimization knobs: a re-weighted local scan plus a parabola fit
    # needs far fewer samples than the kernel estimate
    opt_samples: int = 300_000
    opt_walkers: int = 256
    opt_thermalization: int = 600
    opt_step: float = 0.04


def default_grid(max_center: float, dy: float = 0.25, pad: float = 4.0) -> NystromGrid:
    """Grid reaching `pad` beyond the outermost site, with exact spacing dy."""
    c0 = abs(max_center) + pad
    k = int(np.ceil(2.0 * c0 / dy)) + 1
    return NystromGrid(half_extent=0.5 * (k - 1) * dy, points=k)


def _pair_indices(n: int):
    return np.triu_indices(n, 1)


def jastrow_chi(points: np.ndarray, alpha: float, f: CorrelationFactor) -> np.ndarray:
    """Trial-state values on an (M, N) array of configurations."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    iu, jl = _pair_indices(points.shape[1])
    gauss = np.exp(-0.5 * np.sum(points * points, axis=1))
    fv = f((alpha / _SQRT2) * (points[:, iu] - points[:, jl]))
    return gauss * np.prod(fv, axis=1)


def jastrow_chi_grad(points: np.ndarray, alpha: float, f: CorrelationFactor):
    """Values and full gradient of chi, finite on coincidence hyperplanes.

    The pair-product derivative uses leave-one-out products rather than the
    logarithmic derivative, so configurations with one vanishing pair factor
    (tensor grids hit them exactly) produce the correct finite gradient.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, n = points.shape
    iu, jl = _pair_indices(n)
    s = alpha / _SQRT2
    diffs = points[:, iu] - points[:, jl]
    fv, fd = f.value_and_deriv(s * diffs)
    gauss = np.exp(-0.5 * np.sum(points * points, axis=1))

    zero = fv == 0.0
    nzero = zero.sum(axis=1)
    prod_nonzero = np.prod(np.where(zero, 1.0, fv), axis=1)
    pair_prod = np.where(nzero == 0, prod_nonzero, 0.0)
    chi = gauss * pair_prod

    loo = np.zeros_like(fv)
    m0 = nzero == 0
    if np.any(m0):
        loo[m0] = prod_nonzero[m0, None] / fv[m0]
    m1 = nzero == 1
    if np.any(m1):
        loo[m1] = np.where(zero[m1], prod_nonzero[m1, None], 0.0)

    grad = -points * chi[:, None]
    for p in range(iu.size):
        term = gauss * s * fd[:, p] * loo[:, p]
        grad[:, iu[p]] += term
        grad[:, jl[p]] -= term
    return chi, grad


def _potential_chi2(points: np.ndarray, chi: np.ndarray, d: float, g: float) -> np.ndarray:
    """V * chi^2 with the coincidence limit (zero for d=1) applied."""
    iu, jl = _pair_indices(points.shape[1])
    chi2 = chi * chi
    out = 0.5 * np.sum(points * points, axis=1) * chi2
    if g != 0.0:
        absd = np.abs(points[:, iu] - points[:, jl])
        inter = np.zeros_like(absd)
        mask = absd > 0.0
        inter[mask] = absd[mask] ** (-d)
        out += g * np.sum(inter, axis=1) * chi2
    return out


def _sector_rule(n: int, half: float, npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature over the ordered sector -half < x_1 < ... < x_n < half.

    x_1 gets a Gauss-Legendre rule on [-half, half]; each further coordinate
    is stretched over [previous, half]. Weights carry the Jacobians but not
    the n! symmetry factor (it cancels in every ratio we form).
    """
    u, wu = gauss_legendre(npts, -half, half)
    coords = [u]
    weights = wu
    for _ in range(n - 1):
        t, wt = gauss_legendre(npts, 0.0, 1.0)
        prev = coords[-1]
        shape = prev.shape + (npts,)
        prev_b = prev[..., None]
        new = prev_b + (half - prev_b) * t
        coords = [np.broadcast_to(c[..., None], shape) for c in coords[:-1]] + [
            np.broadcast_to(prev_b, shape),
            new,
        ]
        weights = weights[..., None] * ((half - prev_b) * wt)
    pts = np.stack([c.ravel() for c in coords], axis=-1)
    return pts, weights.ravel()


def _energy_quadrature(
    n: int, d: float, g: float, f: CorrelationFactor, alpha: float, half: float, npts: int,
    chunk: int = 1 << 18,
) -> float:
    pts, wts = _sector_rule(n, half, npts)
    num = 0.0
    den = 0.0
    for start in range(0, pts.shape[0], chunk):
        p = pts[start : start + chunk]
        w = wts[start : start + chunk]
        chi, grad = jastrow_chi_grad(p, alpha, f)
        kin = 0.5 * np.sum(grad * grad, axis=1)
        num += float(w @ (kin + _potential_chi2(p, chi, d, g)))
        den += float(w @ (chi * chi))
    return num / den


def _energy_quadrature_refined(
    n: int, d: float, g: float, f: CorrelationFactor, alpha: float, half: float,
    quad: QuadratureIntegrator,
) -> float:
    npts = quad.base_points
    energies = []
    for _ in range(quad.max_refinements + 1):
        energies.append(_energy_quadrature(n, d, g, f, alpha, half, npts))
        if len(energies) >= 2 and abs(energies[-1] - energies[-2]) <= quad.energy_tol:
            break
        npts = int(np.ceil(npts * quad.refine_factor))
    return energies[-1]


class _Metropolis:
    """Vectorized Metropolis chain over independent walkers."""

    def __init__(self, n, alpha, f, rng, walkers, start, step_scale=0.5):
        self.n = n
        self.alpha = alpha
        self.f = f
        self.rng = rng
        self.x = start + 0.3 * rng.standard_normal((walkers, n))
        self.sigma = step_scale
        self.chi2 = jastrow_chi(self.x, alpha, f) ** 2

    def step(self, tune: bool = False):
        prop = self.x + self.sigma * self.rng.standard_normal(self.x.shape)
        chi2_prop = jastrow_chi(prop, self.alpha, self.f) ** 2
        u = self.rng.random(self.x.shape[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self.chi2 > 0, chi2_prop / self.chi2, 1.0)
        accept = u < ratio
        self.x[accept] = prop[accept]
        self.chi2[accept] = chi2_prop[accept]
        if tune:
            rate = float(accept.mean())
            self.sigma = float(np.clip(self.sigma * np.exp(rate - 0.5), 0.05, 5.0))

    def thermalize(self, steps: int):
        for _ in range(steps):
            self.step(tune=True)


def _start_positions(n: int, d: float, g: float) -> np.ndarray:
    if g > 0:
        spec = SystemSpec(n=n, d=d, g=g)
        return scale_positions(solve_equilibrium(spec), spec)
    return np.linspace(-np.sqrt(n), np.sqrt(n), n)


def _local_energy(x: np.ndarray, alpha: float, f: CorrelationFactor, d: float, g: float):
    """Laplacian-form local energy -1/2 (lap chi)/chi + V per configuration.

    Valid almost everywhere (samples never sit on a kink), and unbiased: the
    distributional part of the Laplacian lives on hyperplanes where chi
    vanishes, so it drops out of the chi^2 average. For a good trial state
    this estimator has far lower variance than the gradient form.
    """
    w, n = x.shape
    s = alpha / _SQRT2
    diffs = x[:, :, None] - x[:, None, :]
    off = ~np.eye(n, dtype=bool)
    ratio = np.zeros_like(diffs)
    curve = np.zeros_like(diffs)
    fv, fd, fdd = f.value_deriv2(s * diffs[:, off])
    ratio[:, off] = fd / fv
    curve[:, off] = fdd / fv - (fd / fv) ** 2
    drift = -x + s * np.sum(ratio, axis=2)
    # each unordered pair appears twice in the off-diagonal sum, matching the
    # two second derivatives it contributes
    lap_log = -n + s * s * np.sum(curve, axis=(1, 2))
    energy = -0.5 * (lap_log + np.sum(drift * drift, axis=1)) + 0.5 * np.sum(x * x, axis=1)
    if g != 0.0:
        iu, jl = _pair_indices(n)
        energy += g * np.sum(np.abs(x[:, iu] - x[:, jl]) ** (-d), axis=1)
    return energy


def _energy_mc(
    n: int, d: float, g: float, f: CorrelationFactor, alpha: float,
    mc: MonteCarloIntegrator, samples: int, walkers: int | None = None,
    thermalization: int | None = None,
) -> float:
    walkers = mc.walkers if walkers is None else walkers
    thermalization = mc.thermalization if thermalization is None else thermalization
    rng = np.random.default_rng(mc.seed)
    chain = _Metropolis(n, alpha, f, rng, walkers, _start_positions(n, d, g))
    chain.thermalize(thermalization)
    steps = max(1, int(np.ceil(samples / walkers)))
    total = 0.0
    used = 0
    for _ in range(steps):
        chain.step()
        total += float(np.sum(_local_energy(chain.x, alpha, f, d, g)))
        used += walkers
    return total / used


def _mc_alpha_curve(
    n: int, d: float, g: float, f: CorrelationFactor, alpha_ref: float,
    alphas: np.ndarray, mc: MonteCarloIntegrator,
) -> np.ndarray:
    """E(alpha) near alpha_ref by correlated re-weighting of one sample set.

    One chain is run at alpha_ref; each requested alpha is evaluated on the
    same configurations with weights (chi_alpha / chi_ref)^2. Sharing samples
    makes the curve smooth in alpha, so its argmin is far less noisy than
    independently estimated points would allow. Only trustworthy close to
    alpha_ref: the weight spread grows with |alpha - alpha_ref| and the
    effective sample size collapses far away.
    """
    rng = np.random.default_rng(mc.seed)
    chain = _Metropolis(n, alpha_ref, f, rng, mc.opt_walkers, _start_positions(n, d, g))
    chain.thermalize(mc.opt_thermalization)
    steps = max(1, int(np.ceil(mc.opt_samples / mc.opt_walkers)))
    batches = []
    for _ in range(steps):
        for _ in range(mc.stride):
            chain.step()
        batches.append(chain.x.copy())
    x = np.concatenate(batches)

    iu, jl = _pair_indices(n)
    diffs = x[:, iu] - x[:, jl]
    log_f_ref = np.sum(np.log(f((alpha_ref / _SQRT2) * diffs)), axis=1)

    energies = np.empty(alphas.size)
    for k, alpha in enumerate(alphas):
        s = alpha / _SQRT2
        local = _local_energy(x, alpha, f, d, g)
        logw = 2.0 * (np.sum(np.log(f(s * diffs)), axis=1) - log_f_ref)
        w = np.exp(logw - logw.max())
        energies[k] = float(np.sum(w * local) / np.sum(w))
    return energies


def _golden_minimize(fn, lo: float, hi: float, xtol: float):
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    e = a + invphi * (b - a)
    fc, fe = fn(c), fn(e)
    while b - a > xtol:
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, e, fe
            e = a + invphi * (b - a)
            fe = fn(e)
    return 0.5 * (a + b)


def optimize_alpha(
    spec: SystemSpec,
    f: CorrelationFactor,
    search: tuple[float, float] = (0.5, 1.2),
    integrator: QuadratureIntegrator | MonteCarloIntegrator | None = None,
    xtol: float = 1e-3,
) -> tuple[float, float]:
    """Minimize the trial energy over the pair-factor scale.

    Deterministic quadrature mode (N <= 3) uses golden-section search at the
    base resolution, then refines the reported energy; all quadrature errors
    vary smoothly with alpha, so the argmin is stable at base resolution.
    Monte Carlo mode evaluates a fixed alpha grid with common random numbers
    (same seed per evaluation) and refines the best point parabolically.
    Raises a BoundaryWarning when the minimizer sits on the search edge.
    """
    if spec.d != 1.0:
        raise UnsupportedError("energy optimization implemented for d=1 only")
    if spec.g is None:
        raise ValueError("spec.g is required")
    n, d, g = spec.n, spec.d, spec.g
    if integrator is None:
        integrator = QuadratureIntegrator() if n <= 3 else MonteCarloIntegrator()
    lo, hi = search

    if isinstance(integrator, QuadratureIntegrator):
        if n > 3:
            raise UnsupportedError("tensor quadrature is limited to N <= 3; use Monte Carlo")
        centers = scale_positions(solve_equilibrium(spec), spec)
        half = float(np.max(np.abs(centers))) + 4.0 + integrator.pad

        # the sector rule is spectral, so a lighter rule locates the argmin;
        # the reported energy is refined at full resolution afterwards
        def energy_at(a):
            return _energy_quadrature(n, d, g, f, a, half, integrator.search_points)

        alpha_star = _golden_minimize(energy_at, lo, hi, xtol)
        if min(alpha_star - lo, hi - alpha_star) <= 2 * xtol:
            warnings.warn(
                f"optimal alpha {alpha_star:.4f} sits on the search boundary "
                f"[{lo}, {hi}]; widen the interval",
                BoundaryWarning,
            )
        energy_star = _energy_quadrature_refined(n, d, g, f, alpha_star, half, integrator)
        return alpha_star, energy_star

    # trust-region scan: re-weighting is only reliable near the chain's own
    # alpha, so re-center the window until the minimum is interior; near the
    # free-singular limit the true curve is almost flat in alpha and any
    # point of the plateau is as good as another
    step = integrator.opt_step
    alpha_ref = 0.5 * (lo + hi)
    for _ in range(5):
        offsets = step * np.arange(-3, 4)
        alphas = np.clip(alpha_ref + offsets, lo, hi)
        energies = _mc_alpha_curve(n, d, g, f, alpha_ref, alphas, integrator)
        best = int(np.argmin(energies))
        at_lo = alphas[best] <= lo + 1e-12
        at_hi = alphas[best] >= hi - 1e-12
        if at_lo or at_hi:
            warnings.warn(
                f"optimal alpha {alphas[best]:.4f} sits on the search boundary "
                f"[{lo}, {hi}]; widen the interval",
                BoundaryWarning,
            )
            return float(alphas[best]), float(energies[best])
        if best in (0, alphas.size - 1):
            alpha_ref = float(alphas[best])
            continue
        window = slice(max(0, best - 2), min(alphas.size, best + 3))
        coeffs = np.polyfit(alphas[window], energies[window], 2)
        if coeffs[0] > 0:
            alpha_star = float(np.clip(-0.5 * coeffs[1] / coeffs[0],
                                       alphas[window][0], alphas[window][-1]))
        else:
            alpha_star = float(alphas[best])
        return alpha_star, float(energies[best])
    return float(alphas[best]), float(energies[best])


def _marginal_rule(
    grid: NystromGrid, pad: float, n_panel: int, dims: int
) -> tuple[np.ndarray, np.ndarray]:
    """Panelized rule over the dummy coordinates of the marginal integrals.

    Every pair factor involving a grid argument has a kink where a dummy
    coordinate crosses a grid node, so each 1D integration is split into
    panels with edges at all grid nodes (plus tail panels reaching `pad`
    beyond). For two dummies the pair is ordered (x2 < x3, weights doubled):
    within one panel-by-panel cell all signs are then fixed and the integrand
    is smooth, giving spectral convergence per panel.
    """
    nodes = grid.nodes
    half = grid.half_extent + pad
    edges = np.concatenate(([-half], nodes, [half]))
    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        npts = n_panel + 4 if (hi - lo) > 1.5 * grid.spacing else n_panel
        panels.append(gauss_legendre(npts, lo, hi))

    if dims == 1:
        pts = np.concatenate([p[0] for p in panels])
        wts = np.concatenate([p[1] for p in panels])
        return pts[:, None], wts

    if dims != 2:
        raise UnsupportedError("marginal quadrature implemented for 1 or 2 dummies")
    pts_list = []
    wts_list = []
    for p, (px, pw) in enumerate(panels):
        hi_edge = edges[p + 1]
        for x2, w2 in zip(px, pw):
            tx, tw = gauss_legendre(n_panel, x2, hi_edge)
            pts_list.append(np.column_stack((np.full(tx.size, x2), tx)))
            wts_list.append(w2 * tw)
            for qx, qw in panels[p + 1 :]:
                pts_list.append(np.column_stack((np.full(qx.size, x2), qx)))
                wts_list.append(w2 * qw)
    # ordered sector x2 < x3 of a symmetric integrand: double the weights
    return np.concatenate(pts_list), 2.0 * np.concatenate(wts_list)


def rdm_quadrature(
    ansatz: JastrowAnsatz,
    grid: NystromGrid,
    quad: QuadratureIntegrator = QuadratureIntegrator(),
    inner_order: tuple[int, ...] | None = None,
) -> RDMatrix:
    """Grid kernel B = dy * rho(m_i, m_j) by panelized Gauss-Legendre marginals.

    rho is normalized by a separate full-dimensional quadrature of chi^2, so
    the raw trace of B measures discretization quality; B itself is then
    rescaled to unit trace. `inner_order` permutes the dummy integration
    coordinates (a symmetry diagnostic; the result must not depend on it).
    """
    n = ansatz.n
    if n > 3:
        raise UnsupportedError("tensor quadrature is limited to N <= 3; use Monte Carlo")
    inner_pts, inner_w = _marginal_rule(grid, quad.pad, quad.panel_points, n - 1)
    if inner_order is not None:
        inner_pts = inner_pts[:, list(inner_order)]

    m = grid.nodes
    values = np.empty((m.size, inner_pts.shape[0]))
    block = np.empty((inner_pts.shape[0], n))
    block[:, 1:] = inner_pts
    for i, mi in enumerate(m):
        block[:, 0] = mi
        values[i] = jastrow_chi(block, ansatz.alpha, ansatz.f)
    rho_raw = (values * inner_w) @ values.T

    sector_pts, sector_w = _sector_rule(n, grid.half_extent + quad.pad, quad.base_points)
    chi = jastrow_chi(sector_pts, ansatz.alpha, ansatz.f)
    norm = math.factorial(n) * float(sector_w @ (chi * chi))

    b_raw = grid.spacing * rho_raw / norm
    b_raw = 0.5 * (b_raw + b_raw.T)
    trace_raw = float(np.trace(b_raw))
    return RDMatrix(b=b_raw / trace_raw, trace_raw=trace_raw, grid=grid)


def rdm_monte_carlo(
    ansatz: JastrowAnsatz, grid: NystromGrid, mc: MonteCarloIntegrator, d: float, g: float
) -> RDMatrix:
    """Grid kernel by Metropolis sampling with a re-weighted swap estimator.

    For a configuration drawn from chi^2 and each coordinate k, let
    phi_k(s) = chi with coordinate k moved to s (all other factors fixed).
    With t = x_k falling in the bin of grid node m_i, the quantity

        phi_k(m_i) phi_k(m_j) / phi_k(t)^2

    has expectation  dy * rho(m_i, m_j)  when accumulated over samples and
    divided by (samples * dy): evaluating both numerator orbitals at the bin
    *center* cancels the t-dependence inside the bin exactly, so the binning
    introduces no systematic width bias. All N coordinates are used, which
    multiplies the statistics by N. Samples falling outside the grid are
    counted in the normalization but contribute nothing (negligible mass by
    construction of the grid).

    The relative blocking error of the raw trace must stay below 1%;
    otherwise a PrecisionError suggests increasing `samples`.
    """
    n = ansatz.n
    rng = np.random.default_rng(mc.seed)
    chain = _Metropolis(n, ansatz.alpha, ansatz.f, rng, mc.walkers, _start_positions(n, d, g))
    chain.thermalize(mc.thermalization)

    nodes = grid.nodes
    k_pts = grid.points
    dy = grid.spacing
    s = ansatz.alpha / _SQRT2
    gauss_grid = np.exp(-0.5 * nodes * nodes)

    acc = np.zeros((k_pts, k_pts))
    steps = max(1, int(np.ceil(mc.samples / mc.walkers)))
    block_edges = np.linspace(0, steps, mc.blocks + 1).astype(int)
    block_trace = np.zeros(mc.blocks)
    block_id = 0
    used = 0
    for step in range(steps):
        while block_id + 1 < mc.blocks and step >= block_edges[block_id + 1]:
            block_id += 1
        for _ in range(mc.stride):
            chain.step()
        x = chain.x
        for k in range(n):
            others = np.delete(x, k, axis=1)
            t = x[:, k]
            phi_t = np.exp(-0.5 * t * t) * np.prod(
                ansatz.f(s * (t[:, None] - others)), axis=1
            )
            phi_m = gauss_grid[None, :] * np.prod(
                ansatz.f(s * (nodes[None, :, None] - others[:, None, :])), axis=2
            )
            idx = np.rint((t + grid.half_extent) / dy).astype(int)
            valid = (idx >= 0) & (idx < k_pts) & (phi_t != 0.0)
            u = phi_m[valid] / phi_t[valid, None]
            rows = idx[valid]
            picked = u[np.arange(rows.size), rows]
            np.add.at(acc, rows, picked[:, None] * u)
            block_trace[block_id] += float(np.sum(picked * picked))
        used += mc.walkers

    b_raw = acc / (used * n)
    b_raw = 0.5 * (b_raw + b_raw.T)
    trace_raw = float(np.trace(b_raw))

    block_counts = np.diff(block_edges) * mc.walkers * n
    block_est = block_trace / np.where(block_counts > 0, block_counts, 1)
    stderr = float(np.std(block_est, ddof=1) / np.sqrt(mc.blocks))
    if stderr / trace_raw > 0.01:
        raise PrecisionError(
            f"raw-trace relative error {stderr / trace_raw:.2%} exceeds 1%; "
            f"increase samples (used {mc.samples})"
        )
    return RDMatrix(b=b_raw / trace_raw, trace_raw=trace_raw, grid=grid)


def rdm_matrix(
    ansatz: JastrowAnsatz,
    spec: SystemSpec | None,
    grid: NystromGrid,
    integrator: QuadratureIntegrator | MonteCarloIntegrator,
) -> RDMatrix:
    """Dispatch to the quadrature or Monte Carlo kernel builder."""
    if isinstance(integrator, QuadratureIntegrator):
        return rdm_quadrature(ansatz, grid, integrator)
    d = spec.d if spec is not None else 1.0
    g = spec.g if spec is not None and spec.g is not None else 0.0
    return rdm_monte_carlo(ansatz, grid, integrator, d, g)


def rdm_from_kernel(kernel, grid: NystromGrid) -> RDMatrix:
    """Discretize an analytic kernel rho(x, y) on the grid (Nystrom matrix)."""
    nodes = grid.nodes
    b_raw = grid.spacing * kernel(nodes[:, None], nodes[None, :])
    b_raw = 0.5 * (b_raw + b_raw.T)
    trace_raw = float(np.trace(b_raw))
    return RDMatrix(b=b_raw / trace_raw, trace_raw=trace_raw, grid=grid)


def diagonalize_rdm(rdm: RDMatrix, use_raw: bool = False):
    """Occupancies (descending) and grid natural orbitals of the kernel matrix.

    Orbitals are columns scaled by 1/sqrt(dy) so they approximate unit-norm
    continuum functions. Eigenvalues below -1e-8 trigger a NystromWarning.
    """
    matrix = rdm.raw if use_raw else rdm.b
    vals, vecs = np.linalg.eigh(matrix)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    if vals.min() < _EIGENVALUE_FLOOR:
        warnings.warn(
            f"negative Nystrom eigenvalue {vals.min():.3e}: grid not converged",
            NystromWarning,
        )
    return vals, vecs / np.sqrt(rdm.grid.spacing)


def finite_report(occupancies: np.ndarray) -> tuple[float, float]:
    """Linear and von Neumann (bits) entropies over retained occupancies."""
    lam = np.asarray(occupancies, dtype=float)
    lam = lam[lam >= _OCCUPANCY_CUTOFF]
    linear = 1.0 - float(np.sum(lam * lam))
    vn_bits = float(-np.sum(lam * np.log2(lam)))
    return linear, vn_bits


@dataclass(frozen=True)
class FiniteRunResult:
    """Everything one finite-coupling run produced, plus its configuration."""

    n: int
    d: float
    g: float
    magic_n: int | None
    provenance: str
    alpha: float
    energy: float | None
    occupancies: np.ndarray
    linear_entropy: float
    vn_entropy_bits: float
    trace_raw: float
    grid: NystromGrid
    integrator: str
    seed: int | None
    samples: int | None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "g": self.g,
            "magic_n": self.magic_n,
            "correlation_factor": self.provenance,
            "alpha": self.alpha,
            "energy": self.energy,
            "occupancies": [float(v) for v in self.occupancies],
            "linear_entropy": self.linear_entropy,
            "vn_entropy_bits": self.vn_entropy_bits,
            "trace_raw": self.trace_raw,
            "grid_half_extent": self.grid.half_extent,
            "grid_points": self.grid.points,
            "grid_spacing": self.grid.spacing,
            "integrator": self.integrator,
            "seed": self.seed,
            "samples": self.samples,
        }


def _resolve_grid(
    n: int, d: float, g: float, dy: float, grid_c: float | None, grid_k: int | None
) -> NystromGrid:
    if g > 0:
        spec = SystemSpec(n=n, d=d, g=g)
        max_center = float(np.max(np.abs(scale_positions(solve_equilibrium(spec), spec))))
        c0 = max_center + 4.0
    else:
        # free-singular limit: density reaches roughly the Fermi radius
        c0 = math.sqrt(2.0 * n + 1.0) + 3.0
    if grid_c is not None and grid_k is not None:
        return NystromGrid(half_extent=grid_c, points=grid_k)
    if grid_c is not None:
        k = int(np.ceil(2.0 * grid_c / dy)) + 1
        return NystromGrid(half_extent=0.5 * (k - 1) * dy, points=k)
    if grid_k is not None:
        return NystromGrid(half_extent=c0, points=grid_k)
    return default_grid(c0 - 4.0, dy=dy)


def run_finite(
    n: int,
    g: float | None = None,
    magic_n: int | None = None,
    d: float = 1.0,
    dy: float = 0.25,
    grid_c: float | None = None,
    grid_k: int | None = None,
    seed: int = 0,
    samples: int | None = None,
    alpha: float | None = None,
    search: tuple[float, float] = (0.5, 1.2),
    basis_size: int = 10,
    integrator: QuadratureIntegrator | MonteCarloIntegrator | None = None,
    compute_energy: bool = True,
) -> FiniteRunResult:
    """Full finite-coupling run: pair factor, optimal scale, kernel, spectrum.

    The pair factor comes from the terminating series when `magic_n` is
    given, from the variational relative solution for g > 0, and is |x| for
    g = 0 (the exact free-singular limit, where alpha drops out entirely).
    """
    if d != 1.0:
        raise UnsupportedError(f"finite-coupling pipeline supports d=1 only, got d={d}")
    if magic_n is not None:
        series = magic_g(magic_n)
        g = series.g_magic
        factor = make_correlation_factor(series)
    elif g is None:
        raise ValueError("either g or magic_n is required")
    elif g == 0.0:
        factor = make_correlation_factor(TONKS)
    else:
        factor = make_correlation_factor(relative_ground_odd(g, basis_size=basis_size))

    grid = _resolve_grid(n, d, g, dy, grid_c, grid_k)
    if integrator is None:
        if n <= 3:
            integrator = QuadratureIntegrator()
        else:
            integrator = MonteCarloIntegrator(
                seed=seed, samples=samples if samples is not None else 10_000_000
            )

    energy = None
    if factor.provenance == TONKS:
        # alpha multiplies chi by a constant for f = |x|: nothing to optimize
        alpha_star = 1.0 if alpha is None else alpha
        if compute_energy and n <= 3 and isinstance(integrator, QuadratureIntegrator):
            half = grid.half_extent + integrator.pad
            energy = _energy_quadrature_refined(n, d, g, factor, alpha_star, half, integrator)
    elif alpha is not None:
        alpha_star = alpha
    else:
        spec = SystemSpec(n=n, d=d, g=g)
        alpha_star, energy = optimize_alpha(spec, factor, search=search, integrator=integrator)

    ansatz = JastrowAnsatz(n=n, alpha=alpha_star, f=factor)
    if isinstance(integrator, QuadratureIntegrator):
        rdm = rdm_quadrature(ansatz, grid, integrator)
        integ_name = "quadrature"
        used_seed = None
        used_samples = None
    else:
        rdm = rdm_monte_carlo(ansatz, grid, integrator, d, g)
        integ_name = "monte-carlo"
        used_seed = integrator.seed
        used_samples = integrator.samples
    occupancies, _ = diagonalize_rdm(rdm)
    linear, vn_bits = finite_report(occupancies)
    return FiniteRunResult(
        n=n,
        d=d,
        g=float(g),
        magic_n=magic_n,
        provenance=factor.provenance,
        alpha=float(alpha_star),
        energy=energy,
        occupancies=occupancies,
        linear_entropy=linear,
        vn_entropy_bits=vn_bits,
        trace_raw=rdm.trace_raw,
        grid=grid,
        integrator=integ_name,
        seed=used_seed,
        samples=used_samples,
    )
