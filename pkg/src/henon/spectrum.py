"""Linearized spectrum at the radial solution and the degenerate exponents.

Linearizing at v_p gives, for each spherical-harmonic mode k, the radial
equation

    a'' + (N-1)/r a' + V(r) a - lambda_k a / r^2 = 0,   V = p r^alpha v_p^(p-1),

and v_p is degenerate in mode k exactly when this has a regular solution
with a(1) = 0.  Equivalently, -lambda_k is an eigenvalue of the radial
operator r^2 (-Lap - V) on L^2(B, |x|^-2 dx), whose lowest eigenvalue is
nu(p).  Two independent discretizations of nu(p) are provided:

* :func:`nu_schrodinger` uses t = -log r, psi = r^(-(N-2)/2) chi, which turns
  the singular weighted problem into -chi'' + [((N-2)/2)^2 - Q(t)] chi = nu chi
  on [0, T_max] with Q(t) = r^2 V(r); second-order finite differences.
* :func:`nu_direct` keeps the radius r and assembles the weighted quadratic
  form with piecewise-linear finite elements on a geometrically graded mesh,
  giving a generalized tridiagonal pencil.

Both are Richardson-extrapolated from two resolutions.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .eigen import TridiagonalPencil
from .errors import HenonError, InvalidConfigError, SolverError
from .problem import (ProblemParams, SphericalSpectrum, critical_exponent,
                      spherical_eigenvalue)
from .profile import RadialProfile
from .radial import solve_henon_radial

log = logging.getLogger(__name__)

T_MAX = 40.0
SCHRODINGER_NODES = 4000
DIRECT_ELEMENTS = 2000
DIRECT_R_MIN = 1e-14
DEGENERACY_THRESHOLD = 1e-6


def potential(vp: RadialProfile, r):
    """V(r) = p r^alpha |v_p(r)|^(p-1)."""
    r = np.asarray(r, float)
    v, _ = vp(r)
    return vp.p * r**vp.weight_alpha * np.abs(v) ** (vp.p - 1)


def _richardson(coarse, fine):
    return (4.0 * fine - coarse) / 3.0


# --------------------------------------------------------------------------
# log-radius formulation


def _schrodinger_pencil(vp, T_max, n):
    h = T_max / n
    t = h * np.arange(1, n)
    c2 = ((vp.dimension - 2) / 2) ** 2
    r = np.exp(-t)
    q = c2 - r**2 * potential(vp, r)
    diag = 2.0 / h**2 + q
    off = np.full(n - 2, -1.0 / h**2)
    return TridiagonalPencil(diag, off), c2, float(np.max(r**2 * potential(vp, r)))


def schrodinger_eigenvalue(vp, T_max=T_MAX, n_nodes=SCHRODINGER_NODES, index=0):
    """Eigenvalue ``index`` of the log-radius problem with ``n_nodes`` intervals (no extrapolation)."""
    pencil, c2, qmax = _schrodinger_pencil(vp, T_max, n_nodes)
    return pencil.eigenvalue(index)


def nu_schrodinger(vp: RadialProfile, T_max=T_MAX, n_nodes=SCHRODINGER_NODES,
                   extrapolate=True) -> float:
    """Lowest eigenvalue nu(p) via the log-radius reduction.

    Dirichlet conditions are imposed at t = 0 (r = 1) and t = T_max.  With
    ``extrapolate`` the result combines ``n_nodes`` and ``2 n_nodes``
    intervals, removing the O(h^2) error term.
    """
    if T_max <= 0:
        raise InvalidConfigError("T_max must be positive")
    if n_nodes < 100:
        raise InvalidConfigError("n_nodes must be at least 100")
    coarse = schrodinger_eigenvalue(vp, T_max, n_nodes)
    if not extrapolate:
        return coarse
    return _richardson(coarse, schrodinger_eigenvalue(vp, T_max, 2 * n_nodes))


# --------------------------------------------------------------------------
# direct weighted formulation

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


def _direct_pencil(vp, n_elements, r_min):
    N = vp.dimension
    x = np.linspace(0.0, 1.0, n_elements + 1)
    nodes = r_min ** (1.0 - x)
    nodes[-1] = 1.0
    lo, hi = nodes[:-1], nodes[1:]
    h = hi - lo
    rq = 0.5 * (lo + hi)[:, None] + 0.5 * h[:, None] * _GAUSS_X[None, :]
    wq = 0.5 * h[:, None] * _GAUSS_W[None, :]
    phi_lo = (hi[:, None] - rq) / h[:, None]
    phi_hi = (rq - lo[:, None]) / h[:, None]
    grad = wq * rq ** (N - 1) / h[:, None] ** 2
    pot = wq * rq ** (N - 1) * potential(vp, rq)
    mass = wq * rq ** (N - 3)

    k_ll = np.sum(grad - pot * phi_lo**2, axis=1)
    k_hh = np.sum(grad - pot * phi_hi**2, axis=1)
    k_lh = np.sum(-grad - pot * phi_lo * phi_hi, axis=1)
    m_ll = np.sum(mass * phi_lo**2, axis=1)
    m_hh = np.sum(mass * phi_hi**2, axis=1)
    m_lh = np.sum(mass * phi_lo * phi_hi, axis=1)

    kd = np.zeros(n_elements + 1)
    md = np.zeros(n_elements + 1)
    kd[:-1] += k_ll
    kd[1:] += k_hh
    md[:-1] += m_ll
    md[1:] += m_hh
    # Dirichlet at r_min (regular branch, truncated) and at r = 1
    return TridiagonalPencil(kd[1:-1], k_lh[1:-1], md[1:-1], m_lh[1:-1])


def direct_eigenvalues(vp: RadialProfile, count=2, n_elements=DIRECT_ELEMENTS,
                       r_min=DIRECT_R_MIN, extrapolate=True):
    """The ``count`` lowest eigenvalues of the weighted radial problem."""
    coarse = _direct_pencil(vp, n_elements, r_min)
    vals = np.array([coarse.eigenvalue(i) for i in range(count)])
    if not extrapolate:
        return vals
    fine = _direct_pencil(vp, 2 * n_elements, r_min)
    return _richardson(vals, np.array([fine.eigenvalue(i) for i in range(count)]))


def nu_direct(vp: RadialProfile, n_nodes=DIRECT_ELEMENTS, r_min=DIRECT_R_MIN,
              extrapolate=True) -> float:
    """Lowest eigenvalue of -psi'' - (N-1)/r psi' - V psi = nu psi / r^2 on (0, 1).

    Galerkin P1 elements on the nodes r_min^(1 - j/n), j = 0..n, with
    psi(r_min) = psi(1) = 0; the truncation at r_min selects the regular
    branch at the origin.
    """
    if n_nodes < 100:
        raise InvalidConfigError("n_nodes must be at least 100")
    return float(direct_eigenvalues(vp, 1, n_nodes, r_min, extrapolate)[0])


def rayleigh_quotient(vp: RadialProfile, trial=None, n_panels=4096):
    """(int |grad psi|^2 - V psi^2) / int psi^2 |x|^-2 for a radial trial function.

    ``trial`` maps r to (psi, psi'); the default is v_p itself.
    """
    trial = vp if trial is None else trial
    N = vp.dimension
    edges = np.linspace(0.0, 1.0, n_panels + 1)
    gx, gw = np.polynomial.legendre.leggauss(6)
    rq = (0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * np.diff(edges)[:, None] * gx).ravel()
    wq = (0.5 * np.diff(edges)[:, None] * gw).ravel()
    psi, dpsi = trial(rq)
    num = np.sum(wq * rq ** (N - 1) * (dpsi**2 - potential(vp, rq) * psi**2))
    den = np.sum(wq * rq ** (N - 3) * psi**2)
    return float(num / den)


# --------------------------------------------------------------------------
# mode shooting


@dataclass(frozen=True)
class ModeShot:
    k: int
    lambda_k: float
    boundary_value: float
    """a_k(1) with the shot normalised to max |a_k| = 1 on [0, 1]."""
    profile: RadialProfile
    raw_boundary_value: float


def mode_shoot(vp: RadialProfile, k: int, tol=1e-10, eps=1e-6, n_grid=2001) -> ModeShot:
    """Shoot mode k of the linearized equation from the regular branch a ~ r^k.

    Writes a = r^k b, so that b'' + (2k + N - 1)/r b' + V b = 0 with
    b(0) = 1, b'(0) = 0; this removes the r^k underflow for large k.
    """
    if k < 0:
        raise InvalidConfigError("mode index must be >= 0")
    N, alpha, p = vp.dimension, vp.weight_alpha, vp.p
    lam = spherical_eigenvalue(N, k)
    d = 2 * k + N
    v0 = abs(vp.central_value)
    V0 = p * v0 ** (p - 1)
    if V0 > 0:
        eps = min(eps, 1e-3 * V0 ** (-1.0 / (2 + alpha)))
    b0 = 1 - V0 * eps ** (alpha + 2) / ((alpha + 2) * (alpha + d))
    db0 = -V0 * eps ** (alpha + 1) / (alpha + d)

    # v_p is integrated alongside b; calling the profile evaluator per step is slow
    vs, dvs = vp(np.array([eps]))

    def rhs(r, y):
        v, dv, b, db = y
        pot = p * r**alpha * abs(v) ** (p - 1)
        return (dv, -(N - 1) / r * dv - r**alpha * abs(v) ** (p - 1) * v,
                db, -(d - 1) / r * db - pot * b)

    rtol = max(tol * 1e-2, 3e-14)
    sol = solve_ivp(rhs, (eps, 1.0), (vs[0], dvs[0], b0, db0), method="DOP853", rtol=rtol,
                    atol=rtol * 1e-2 * np.array([max(v0, 1.0), max(v0, 1.0), 1.0, 1.0]), dense_output=True,
                    first_step=eps * 1e-2)
    if sol.status != 0:
        raise SolverError(f"mode-{k} shot failed: {sol.message}")

    grid = np.linspace(0.0, 1.0, n_grid)
    inner = grid < eps
    b = np.empty_like(grid)
    db = np.empty_like(grid)
    b[inner], db[inner] = 1.0, 0.0
    y = sol.sol(grid[~inner])
    b[~inner], db[~inner] = y[2], y[3]
    a = grid**k * b
    with np.errstate(invalid="ignore"):
        da = np.where(grid > 0, k * grid ** max(k - 1, 0) * b, 1.0 * (k == 1)) + grid**k * db
    # sample extrema also at the integrator's own nodes
    nodes = sol.t
    scale = max(np.max(np.abs(a)), np.max(np.abs(nodes**k * sol.y[2])))
    raw = float(sol.y[2, -1])
    profile = RadialProfile(grid=grid, values=a / scale, dvalues=da / scale, dimension=N,
                            weight_alpha=alpha, p=p, central_value=float(a[0] / scale))
    return ModeShot(k=k, lambda_k=float(lam), boundary_value=raw / scale,
                    profile=profile, raw_boundary_value=raw)


# --------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SpectralSample:
    p: float
    nu: float
    nu_direct: float
    second_direct: float
    potential_max: float
    """max over r of r^2 V(r)."""
    mode0_boundary: float
    error: str | None = None

    @property
    def gap(self):
        return abs(self.nu - self.nu_direct)

    @property
    def failed(self):
        return self.error is not None


@dataclass(frozen=True)
class SpectralCurve:
    N: int
    alpha: float
    samples: tuple
    method: str = "schrodinger"

    @property
    def ok(self):
        return [s for s in self.samples if not s.failed]

    @property
    def p(self):
        return np.array([s.p for s in self.ok])

    @property
    def nu(self):
        return np.array([s.nu for s in self.ok])

    @property
    def nu_direct(self):
        return np.array([s.nu_direct for s in self.ok])


@dataclass(frozen=True)
class SpectralOptions:
    T_max: float = T_MAX
    schrodinger_nodes: int = SCHRODINGER_NODES
    direct_elements: int = DIRECT_ELEMENTS
    with_direct: bool = True
    with_mode0: bool = True


def _sample(N, alpha, p, opts: SpectralOptions) -> SpectralSample:
    try:
        vp = solve_henon_radial(ProblemParams(N, alpha, p))
        nu = nu_schrodinger(vp, opts.T_max, opts.schrodinger_nodes)
        if opts.with_direct:
            nd, second = direct_eigenvalues(vp, 2, opts.direct_elements)
        else:
            nd = second = math.nan
        qmax = scaled_potential_max(vp)
        m0 = mode_shoot(vp, 0).boundary_value if opts.with_mode0 else math.nan
        return SpectralSample(p, nu, float(nd), float(second), qmax, m0)
    except HenonError as exc:
        log.warning("sample p=%r failed: %s", p, exc)
        nan = math.nan
        return SpectralSample(p, nan, nan, nan, nan, nan, error=str(exc))


def default_workers():
    return max(1, int(os.environ.get("HENON_WORKERS", "1")))


def default_p_grid(N, alpha, n_samples=400, margin=1e-3):
    params = ProblemParams(N, alpha, 2.0)
    return np.linspace(params.sobolev_exponent, critical_exponent(params) - margin, n_samples)


def sweep_nu(N, alpha, p_grid=None, opts: SpectralOptions | None = None, workers=None) -> SpectralCurve:
    """Evaluate nu(p) (both discretizations) on a grid of exponents.

    Samples are independent and may run in a process pool; results are kept
    in grid order.
    """
    opts = opts or SpectralOptions()
    p_grid = default_p_grid(N, alpha) if p_grid is None else np.asarray(p_grid, float)
    pc = critical_exponent(ProblemParams(N, alpha, 2.0))
    if np.any(p_grid <= 1) or np.any(p_grid >= pc):
        raise InvalidConfigError(f"sweep grid must lie inside (1, {pc})")
    workers = default_workers() if workers is None else workers
    args = [(N, alpha, float(p), opts) for p in p_grid]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(_sample, *zip(*args)))
    else:
        samples = [_sample(*a) for a in args]
    return SpectralCurve(N=N, alpha=alpha, samples=tuple(samples))


# --------------------------------------------------------------------------
# degenerate exponents


def nu_at(N, alpha, p, opts: SpectralOptions | None = None) -> float:
    opts = opts or SpectralOptions()
    vp = solve_henon_radial(ProblemParams(N, alpha, p))
    return nu_schrodinger(vp, opts.T_max, opts.schrodinger_nodes)


@dataclass(frozen=True)
class DegeneracyEntry:
    k: int
    lambda_k: float
    p_k: float
    bracket: tuple
    crosscheck_residual: float


@dataclass(frozen=True)
class DegeneracyTable:
    N: int
    alpha: float
    entries: tuple

    @property
    def roots(self):
        return [e.p_k for e in self.entries]


class AmbiguousBracketError(SolverError):
    pass


def _sign_changes(ps, gs):
    return [(i, i + 1) for i in range(len(ps) - 1) if gs[i] * gs[i + 1] < 0]


def _resolve_cell(g, lo, hi, glo, ghi, depth=0, max_depth=4):
    """Split [lo, hi] until every sub-bracket holds a single sign change."""
    mids = np.linspace(lo, hi, 5)
    vals = [glo] + [g(x) for x in mids[1:-1]] + [ghi]
    cells = _sign_changes(mids, vals)
    if len(cells) <= 1:
        i, j = cells[0] if cells else (0, 4)
        return [(mids[i], mids[j], vals[i], vals[j])]
    if depth >= max_depth:
        raise AmbiguousBracketError(f"multiple crossings in [{lo}, {hi}] could not be separated")
    out = []
    for i, j in cells:
        out += _resolve_cell(g, mids[i], mids[j], vals[i], vals[j], depth + 1, max_depth)
    return out


def find_pk(curve: SpectralCurve, spectrum: SphericalSpectrum | None = None, k_max=None,
            opts: SpectralOptions | None = None, xtol=1e-10, p_floor=None) -> DegeneracyTable:
    """Locate the exponents where nu(p) = -lambda_k, k >= 1.

    Sign changes of g_k(p) = nu(p) + lambda_k on the sampled curve are
    refined (sub-sampling each cell to separate multiple crossings) and
    then polished by a bracketing root finder on freshly computed nu(p).
    Each root is cross-checked by a mode-k shot.  Roots below ``p_floor``
    (default (N+2)/(N-2)) are dropped.
    """
    N, alpha = curve.N, curve.alpha
    ps, nus = curve.p, curve.nu
    if len(ps) < 2:
        return DegeneracyTable(N, alpha, ())
    if spectrum is None:
        kcap = k_max if k_max is not None else 64
        spectrum = SphericalSpectrum(N, kcap)
    if k_max is None:
        k_max = spectrum.kmax
    if p_floor is None:
        p_floor = (N + 2) / (N - 2)
    pc = critical_exponent(ProblemParams(N, alpha, 2.0))
    entries = []
    for k in range(1, k_max + 1):
        lam = spectrum.eigenvalue(k)
        if lam > -np.min(nus) + 1e-12 and lam > -np.max(nus):
            # g_k > 0 everywhere, and larger k only make it larger
            break
        gs = nus + lam

        def g(x, lam=lam):
            return nu_at(N, alpha, x, opts) + lam

        for i, j in _sign_changes(ps, gs):
            for lo, hi, glo, ghi in _resolve_cell(g, ps[i], ps[j], gs[i], gs[j]):
                root = brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
                if not (p_floor <= root < pc):
                    continue
                vp = solve_henon_radial(ProblemParams(N, alpha, root))
                shot = mode_shoot(vp, k)
                entries.append(DegeneracyEntry(k, float(lam), float(root), (float(lo), float(hi)),
                                               float(abs(shot.boundary_value))))
    entries.sort(key=lambda e: e.p_k)
    return DegeneracyTable(N, alpha, tuple(entries))


# --------------------------------------------------------------------------
# nondegeneracy certificate


@dataclass(frozen=True)
class DegeneracyReport:
    params: ProblemParams
    K: int
    """Highest mode checked; modes above it are positive definite."""
    boundary_values: tuple
    witness_mode: int
    min_boundary: float
    threshold: float

    @property
    def degenerate(self):
        return self.min_boundary <= self.threshold

    @property
    def verdict(self):
        return "degenerate" if self.degenerate else "nondegenerate"


def scaled_potential_max(vp: RadialProfile, n=4001) -> float:
    """max_r r^2 V(r), sampled on uniform and log-spaced radii."""
    # the log-spaced part sees potentials concentrated near the origin
    r = np.concatenate([np.linspace(0.0, 1.0, n), np.logspace(-16, 0, n)])
    return float(np.max(r**2 * potential(vp, r)))


def mode_cutoff(vp: RadialProfile) -> int:
    """Smallest k with lambda_k >= max_r r^2 V(r)."""
    qmax = scaled_potential_max(vp)
    N = vp.dimension
    k = 0
    while spherical_eigenvalue(N, k) < qmax:
        k += 1
    return k


def nondegeneracy_certificate(params: ProblemParams, vp: RadialProfile | None = None,
                              threshold=DEGENERACY_THRESHOLD, k_max=None) -> DegeneracyReport:
    """Shoot every mode that could vanish and report the smallest |a_k(1)|.

    Beyond K = :func:`mode_cutoff` the mode operator is positive and its
    shot cannot vanish, so modes 0..K decide the verdict.
    """
    vp = solve_henon_radial(params) if vp is None else vp
    K = mode_cutoff(vp) if k_max is None else k_max
    values = tuple(abs(mode_shoot(vp, k).boundary_value) for k in range(K + 1))
    witness = int(np.argmin(values))
    return DegeneracyReport(params=params, K=K, boundary_values=values, witness_mode=witness,
                            min_boundary=float(values[witness]), threshold=threshold)
