"""Positive solutions on perturbed balls by a contraction iteration.

On Omega_t = {x + t psi(x) : x in B} the pulled-back function v(x) = u(y)
solves -Lap v - L_t(v) = |x + t psi(x)|^alpha |v|^(p-1) v in B, v = 0 on the
boundary.  Writing v = v_p + phi,

    L phi := -Lap phi - p |x|^alpha v_p^(p-1) phi = L_t(v_p + phi) + H_t(phi),
    H_t(phi) = |x + t psi|^alpha |v_p + phi|^(p-1)(v_p + phi)
               - |x|^alpha v_p^p - p |x|^alpha v_p^(p-1) phi,

and phi is the fixed point of T(phi) = L^{-1}[L_t(v_p + phi) + H_t(phi)].

Fields are axisymmetric in three dimensions and stored as Legendre-mode
coefficients a_k(r) on the staggered radial grid r_i = (i - 1/2) h,
h = 1/(n + 1/2), so that r = 1 is the first node past the grid.  L is
inverted mode by mode with the same fourth-order differences that enter
L_t and the residual (a second-order finite-volume variant is available).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import solve_banded

from .domain_map import DomainMapSpec, InverseMapField, assemble_Lt, inverse_field_on_ball
from .errors import (ConvergenceError, ForbiddenExponentError, InvalidConfigError,
                     TrustBallError)
from .problem import ProblemParams
from .profile import RadialProfile
from .radial import solve_henon_radial
from .spectrum import nondegeneracy_certificate, potential

log = logging.getLogger(__name__)

DEFAULT_KMAX = 32
DEFAULT_RNODES = 1024
SOLVE_NORM_LIMIT = 1e3
TRUST_RADIUS = 0.25


@dataclass(frozen=True)
class BallGrid:
    """Collocation grid (r_i, mu_j) with Gauss-Legendre nodes mu_j = cos theta_j."""

    n: int
    kmax: int
    n_angles: int

    @property
    def h(self):
        return 1.0 / (self.n + 0.5)

    @property
    def r(self):
        return (np.arange(1, self.n + 1) - 0.5) * self.h

    def _gauss(self):
        cached = self.__dict__.get("_gl")
        if cached is None:
            cached = legendre.leggauss(self.n_angles)
            object.__setattr__(self, "_gl", cached)
        return cached

    @property
    def mu(self):
        return self._gauss()[0]

    @property
    def weights(self):
        return self._gauss()[1]

    @property
    def theta(self):
        return np.arccos(self.mu)

    def legendre_tables(self):
        """P_k, P_k', P_k'' at the nodes, each of shape (kmax + 1, n_angles)."""
        cached = self.__dict__.get("_tables")
        if cached is None:
            eye = np.eye(self.kmax + 1)
            p0 = legendre.legval(self.mu, eye)
            p1 = legendre.legval(self.mu, legendre.legder(eye, 1))
            p2 = legendre.legval(self.mu, legendre.legder(eye, 2))
            cached = (p0, p1, p2)
            object.__setattr__(self, "_tables", cached)
        return cached

    def points(self):
        """Cartesian points in the x1-x3 half plane, shape (n * n_angles, 3)."""
        r = self.r[:, None]
        s = np.sqrt(1 - self.mu**2)[None, :]
        x = np.stack([r * s, np.zeros_like(r * s), r * self.mu[None, :]], axis=-1)
        return x.reshape(-1, 3)


def make_grid(kmax=DEFAULT_KMAX, rnodes=DEFAULT_RNODES) -> BallGrid:
    if kmax < 0 or rnodes < 16:
        raise InvalidConfigError("need kmax >= 0 and at least 16 radial nodes")
    return BallGrid(n=rnodes, kmax=kmax, n_angles=kmax + 8)


@dataclass(frozen=True)
class HarmonicField:
    """An axisymmetric function on the ball as Legendre coefficients a_k(r_i).

    ``coeffs`` has shape (kmax + 1, n).  The boundary value at r = 1 is zero
    by construction of the grid.
    """

    grid: BallGrid
    coeffs: np.ndarray

    @property
    def kmax(self):
        return self.grid.kmax

    @property
    def r(self):
        return self.grid.r

    def values(self):
        """Values on the collocation grid, shape (n, n_angles)."""
        p0, _, _ = self.grid.legendre_tables()
        return self.coeffs.T @ p0

    def evaluate(self, mu):
        """Values at the radial nodes and arbitrary mu = cos(theta), shape (n, len(mu))."""
        mu = np.atleast_1d(np.asarray(mu, float))
        table = np.polynomial.legendre.legvander(mu, self.grid.kmax).T
        return self.coeffs.T @ table

    def sup_norm(self) -> float:
        cached = self.__dict__.get("_sup")
        if cached is None:
            cached = float(np.max(np.abs(self.values()))) if self.coeffs.size else 0.0
            object.__setattr__(self, "_sup", cached)
        return cached

    def __add__(self, other):
        return HarmonicField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return HarmonicField(self.grid, self.coeffs - other.coeffs)

    def scaled(self, s):
        return HarmonicField(self.grid, s * self.coeffs)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros((grid.kmax + 1, grid.n)))

    @classmethod
    def from_values(cls, grid, values):
        """Project grid values (n, n_angles) onto the Legendre modes."""
        p0, _, _ = grid.legendre_tables()
        k = np.arange(grid.kmax + 1)[:, None]
        proj = (2 * k + 1) / 2 * p0 * grid.weights[None, :]
        return cls(grid, proj @ np.asarray(values, float).T)


# --------------------------------------------------------------------------
# radial differentiation


def _extend(coeffs, sign):
    """Append parity ghosts at the origin and the r = 1 value plus one ghost."""
    kk = coeffs.shape[0]
    left = sign * coeffs[:, 1::-1]
    ext = np.hstack([left, coeffs, np.zeros((kk, 1))])
    # sixth-order extrapolation for the second ghost beyond r = 1
    ghost = (6 * ext[:, -1] - 15 * ext[:, -2] + 20 * ext[:, -3] - 15 * ext[:, -4]
             + 6 * ext[:, -5] - ext[:, -6])
    return np.hstack([ext, ghost[:, None]])


def _differentiate(coeffs, h, sign):
    ext = _extend(coeffs, sign)
    fm2, fm1, f0, fp1, fp2 = (ext[:, j:j + coeffs.shape[1]] for j in range(5))
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h**2)
    return d1, d2


def radial_derivatives(coeffs, h):
    """First and second r-derivatives of each mode, fourth order.

    Mode k has parity (-1)^k under r -> -r, which supplies the ghost values
    at the origin; at r = 1 the Dirichlet value 0 and one extrapolated ghost
    are appended.
    """
    sign = (-1.0) ** np.arange(coeffs.shape[0])[:, None]
    return _differentiate(coeffs, h, sign)


def derivative_matrices(n, h, parity):
    """Dense matrices of :func:`radial_derivatives` for modes of the given parity (+1 or -1)."""
    d1t, d2t = _differentiate(np.eye(n), h, float(parity))
    return d1t.T, d2t.T


@dataclass(frozen=True)
class PolarDerivatives:
    """f and its (r, mu) derivatives on the collocation grid, each (n, n_angles)."""

    f: np.ndarray
    fr: np.ndarray
    fmu: np.ndarray
    frr: np.ndarray
    frmu: np.ndarray
    fmumu: np.ndarray


def field_derivatives(phi: HarmonicField) -> PolarDerivatives:
    p0, p1, p2 = phi.grid.legendre_tables()
    a = phi.coeffs
    d1, d2 = radial_derivatives(a, phi.grid.h)
    return PolarDerivatives(a.T @ p0, d1.T @ p0, a.T @ p1, d2.T @ p0, d1.T @ p1, a.T @ p2)


def radial_profile_derivatives(vp: RadialProfile, grid: BallGrid) -> PolarDerivatives:
    """v_p on the collocation grid; v_p'' comes from the radial equation."""
    r = grid.r
    v, dv = vp(r)
    d2v = vp.second_derivative(r)
    shape = (grid.n, grid.n_angles)
    z = np.zeros(shape)

    def spread(col):
        return np.broadcast_to(col[:, None], shape).copy()

    return PolarDerivatives(spread(v), spread(dv), z, spread(d2v), z, z.copy())


def cartesian_derivatives(d: PolarDerivatives, x):
    """Gradient (M, 3) and Hessian (M, 3, 3) from (r, mu) derivatives.

    Uses r = |x|, mu = x_3 / r and the chain rule with
    d_i mu = delta_i3 / r - x_3 x_i / r^3, d_ij r = delta_ij / r - x_i x_j / r^3.
    """
    fr, fmu = d.fr.reshape(-1), d.fmu.reshape(-1)
    frr, frmu, fmumu = d.frr.reshape(-1), d.frmu.reshape(-1), d.fmumu.reshape(-1)
    r = np.linalg.norm(x, axis=1)
    x3 = x[:, 2]
    e3 = np.array([0.0, 0.0, 1.0])
    eye = np.eye(3)
    xh = x / r[:, None]
    dmu = e3[None, :] / r[:, None] - (x3 / r**3)[:, None] * x
    grad = fr[:, None] * xh + fmu[:, None] * dmu
    d2r = eye[None] / r[:, None, None] - np.einsum("mi,mj->mij", x, x) / r[:, None, None] ** 3
    d2mu = (-(np.einsum("i,mj->mij", e3, x) + np.einsum("mi,j->mij", x, e3)) / r[:, None, None] ** 3
            - (x3 / r**3)[:, None, None] * eye[None]
            + 3 * (x3 / r**5)[:, None, None] * np.einsum("mi,mj->mij", x, x))
    hess = (frr[:, None, None] * np.einsum("mi,mj->mij", xh, xh)
            + frmu[:, None, None] * (np.einsum("mi,mj->mij", xh, dmu) + np.einsum("mi,mj->mij", dmu, xh))
            + fmumu[:, None, None] * np.einsum("mi,mj->mij", dmu, dmu)
            + fr[:, None, None] * d2r + fmu[:, None, None] * d2mu)
    return grad, hess


# --------------------------------------------------------------------------
# the linearized operator


def _to_banded(A, lower, upper):
    n = A.shape[0]
    ab = np.zeros((lower + upper + 1, n))
    for d in range(-lower, upper + 1):
        diag = np.diagonal(A, offset=d)
        if d >= 0:
            ab[upper - d, d:] = diag
        else:
            ab[upper - d, :n + d] = diag
    return ab


class ModeSolver:
    """Mode-wise inverse of L = -Lap - p r^alpha v_p^(p-1) with Dirichlet data at r = 1.

    For mode k the operator is -(a'' + 2a'/r) + k(k+1) a/r^2 - V a.

    ``order=4`` (default) uses the fourth-order stencils of
    :func:`radial_derivatives`, so that the solve, L_t and the residual share
    one discretization; the bands are (4, 2) because of the extrapolated
    ghost at r = 1.  ``order=2`` is the conservative finite-volume scheme
    -(r^2 a')'/r^2 with a zero-flux face at the origin.
    """

    def __init__(self, vp: RadialProfile, grid: BallGrid, order=4):
        if vp.dimension != 3:
            raise InvalidConfigError("the perturbed solver is implemented for N = 3")
        if order not in (2, 4):
            raise InvalidConfigError("order must be 2 or 4")
        self.grid = grid
        self.order = order
        h, r = grid.h, grid.r
        self.V = potential(vp, r)
        self._r = r
        if order == 2:
            self._lu = (1, 1)
            faces = np.arange(grid.n + 1) * h
            vol = (faces[1:] ** 3 - faces[:-1] ** 3) / 3
            self._lo = faces[:-1] ** 2 / (h * vol)
            self._hi = faces[1:] ** 2 / (h * vol)
            # cell average of lambda a / r^2 against the r^2 dr measure
            self._inv_r2 = h / vol
        else:
            self._lu = (4, 2)
            self._lap = {}
            for parity in (1, -1):
                d1, d2 = derivative_matrices(grid.n, h, parity)
                self._lap[parity] = d2 + 2 * d1 / r[:, None]
        self._bands = [self._banded(k) for k in range(grid.kmax + 1)]

    def _banded(self, k):
        lam = k * (k + 1)
        if self.order == 2:
            ab = np.zeros((3, self.grid.n))
            ab[0, 1:] = -self._hi[:-1]
            ab[1] = self._lo + self._hi + lam * self._inv_r2 - self.V
            ab[2, :-1] = -self._lo[1:]
            return ab
        A = -self._lap[1 if k % 2 == 0 else -1].copy()
        A[np.diag_indices_from(A)] += lam / self._r**2 - self.V
        return _to_banded(A, *self._lu)

    def apply(self, phi: HarmonicField) -> HarmonicField:
        """The discrete L applied mode-wise (used by manufactured-solution tests)."""
        lower, upper = self._lu
        n = self.grid.n
        out = np.zeros_like(phi.coeffs)
        for k, ab in enumerate(self._bands):
            a = phi.coeffs[k]
            for d in range(-lower, upper + 1):
                row = ab[upper - d]
                if d >= 0:
                    out[k, :n - d] += row[d:] * a[d:]
                else:
                    out[k, -d:] += row[:n + d] * a[:n + d]
        return HarmonicField(phi.grid, out)

    def solve(self, rhs: HarmonicField) -> HarmonicField:
        out = np.empty_like(rhs.coeffs)
        for k, ab in enumerate(self._bands):
            out[k] = solve_banded(self._lu, ab, rhs.coeffs[k], check_finite=False)
        return HarmonicField(rhs.grid, out)

    def inverse_norm(self, k) -> float:
        """Max-norm of the inverse of the mode-k matrix (max absolute row sum)."""
        inv = solve_banded(self._lu, self._bands[k], np.eye(self.grid.n), check_finite=False)
        return float(np.max(np.sum(np.abs(inv), axis=1)))

    def inverse_norms(self, modes=None):
        modes = range(self.grid.kmax + 1) if modes is None else modes
        return {k: self.inverse_norm(k) for k in modes}


def apply_Linv(rhs: HarmonicField, vp: RadialProfile, solver: ModeSolver | None = None) -> HarmonicField:
    """Solve L phi = rhs mode by mode (phi = 0 at r = 1, regular at 0)."""
    solver = ModeSolver(vp, rhs.grid) if solver is None else solver
    return solver.solve(rhs)


# --------------------------------------------------------------------------
# nonlinear remainder


@dataclass
class PerturbedProblem:
    """Everything that does not change during the iteration."""

    params: ProblemParams
    spec: DomainMapSpec
    vp: RadialProfile
    grid: BallGrid
    field: InverseMapField
    solver: ModeSolver
    x: np.ndarray = field(repr=False)
    vp_polar: PolarDerivatives = field(repr=False)
    vp_values: np.ndarray = field(repr=False)
    weight_r: np.ndarray = field(repr=False)
    weight_mapped: np.ndarray = field(repr=False)
    Lt_vp: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, params, spec, vp=None, kmax=DEFAULT_KMAX, rnodes=DEFAULT_RNODES, order=4):
        if params.N != 3:
            raise InvalidConfigError("the perturbed solver is implemented for N = 3")
        if not spec.axisymmetric:
            raise InvalidConfigError("the perturbed solver needs a map symmetric about the x_3 axis")
        vp = solve_henon_radial(params) if vp is None else vp
        grid = make_grid(kmax, rnodes)
        x = grid.points()
        fld = inverse_field_on_ball(spec, x)
        solver = ModeSolver(vp, grid, order)
        polar = radial_profile_derivatives(vp, grid)
        r = np.linalg.norm(x, axis=1)
        alpha = params.alpha
        weight_r = (r**alpha).reshape(grid.n, grid.n_angles)
        mapped = np.linalg.norm(x + spec.t * spec.psi(x), axis=1)
        weight_mapped = (mapped**alpha).reshape(grid.n, grid.n_angles)
        grad, hess = cartesian_derivatives(polar, x)
        Lt_vp = assemble_Lt(fld, grad, hess).reshape(grid.n, grid.n_angles)
        return cls(params, spec, vp, grid, fld, solver, x, polar, polar.f, weight_r,
                   weight_mapped, Lt_vp)

    def Lt(self, phi: HarmonicField):
        """L_t(phi) on the collocation grid."""
        if self.spec.t == 0:
            return np.zeros((self.grid.n, self.grid.n_angles))
        grad, hess = cartesian_derivatives(field_derivatives(phi), self.x)
        return assemble_Lt(self.field, grad, hess).reshape(self.grid.n, self.grid.n_angles)

    def Ht_values(self, phi_values):
        p = self.params.p
        vp = self.vp_values
        v = vp + phi_values
        # the same signed power for v and v_p, so that H_t(0) cancels exactly at t = 0
        vp_pm1 = np.abs(vp) ** (p - 1)
        return (self.weight_mapped * np.abs(v) ** (p - 1) * v - self.weight_r * vp_pm1 * vp
                - p * self.weight_r * vp_pm1 * phi_values)

    def trust_ratio(self, phi: HarmonicField) -> float:
        """sup |phi / v_p| on the grid."""
        return float(np.max(np.abs(phi.values() / self.vp_values)))

    def T(self, phi: HarmonicField) -> HarmonicField:
        vals = phi.values()
        rhs = self.Lt_vp + self.Lt(phi) + self.Ht_values(vals)
        return self.solver.solve(HarmonicField.from_values(self.grid, rhs))


def eval_Ht(phi: HarmonicField, problem: PerturbedProblem, check_trust=True) -> HarmonicField:
    """H_t(x, phi) projected onto the Legendre modes.

    Raises :class:`TrustBallError` when sup |phi / v_p| >= 1/4.
    """
    if check_trust and problem.trust_ratio(phi) >= TRUST_RADIUS:
        raise TrustBallError("iterate left the trust ball |phi / v_p| < 1/4")
    return HarmonicField.from_values(problem.grid, problem.Ht_values(phi.values()))


# --------------------------------------------------------------------------
# iteration


@dataclass(frozen=True)
class ContractionReport:
    increments: tuple
    kappa: float
    iters: int
    residual_sup: float
    positivity_margin: float
    solve_norms: dict = field(default_factory=dict)

    @property
    def positive(self):
        return self.positivity_margin > 0

    def summary(self):
        return {"kappa": self.kappa, "iters": self.iters, "residual_sup": self.residual_sup,
                "positivity_margin": self.positivity_margin}


@dataclass(frozen=True)
class ContractionOptions:
    kmax: int = DEFAULT_KMAX
    rnodes: int = DEFAULT_RNODES
    maxiter: int = 200
    tol: float = 1e-10
    check_forbidden: bool = True
    solve_norm_limit: float = SOLVE_NORM_LIMIT
    order: int = 4


def estimate_kappa(increments, floor=1e-13):
    """Largest ratio of successive increments above the round-off floor."""
    inc = np.asarray(increments, float)
    ratios = [inc[i + 1] / inc[i] for i in range(len(inc) - 1) if inc[i + 1] > floor and inc[i] > 0]
    return float(max(ratios)) if ratios else 0.0


def check_solvable(problem: PerturbedProblem, limit=SOLVE_NORM_LIMIT):
    """Refuse exponents where some mode of L is (numerically) singular."""
    cert = nondegeneracy_certificate(problem.params, problem.vp)
    if cert.degenerate:
        raise ForbiddenExponentError(
            f"p = {problem.params.p} is a degenerate exponent (mode {cert.witness_mode}, "
            f"|a_k(1)| = {cert.min_boundary:.3g})", mode=cert.witness_mode, value=cert.min_boundary)
    modes = range(min(cert.K, problem.grid.kmax) + 1)
    norms = problem.solver.inverse_norms(modes)
    worst = max(norms, key=norms.get)
    if norms[worst] >= limit:
        raise ForbiddenExponentError(
            f"p = {problem.params.p} is numerically degenerate: mode-{worst} solve norm "
            f"{norms[worst]:.3g} >= {limit:g}", mode=worst, value=norms[worst])
    return norms


def contraction_solve(params: ProblemParams, spec: DomainMapSpec,
                      opts: ContractionOptions | None = None, vp=None, problem=None):
    """Iterate phi_{n+1} = T(phi_n) from phi_0 = 0.

    Returns ``(phi, report, problem)``; the solution on the ball is v_p + phi.

    Raises
    ------
    ForbiddenExponentError
        p is degenerate or a mode solve norm reaches ``opts.solve_norm_limit``.
    TrustBallError
        An iterate leaves |phi / v_p| < 1/4.
    ConvergenceError
        The increments do not fall below ``opts.tol`` within ``opts.maxiter``.
    """
    opts = opts or ContractionOptions()
    if problem is None:
        problem = PerturbedProblem.build(params, spec, vp, opts.kmax, opts.rnodes, opts.order)
    norms = check_solvable(problem, opts.solve_norm_limit) if opts.check_forbidden else {}
    phi = HarmonicField.zeros(problem.grid)
    increments = []
    for it in range(1, opts.maxiter + 1):
        new = problem.T(phi)
        inc = (new - phi).sup_norm()
        increments.append(inc)
        phi = new
        log.debug("iteration %d: increment %.3e", it, inc)
        if not np.isfinite(inc) or problem.trust_ratio(phi) >= TRUST_RADIUS:
            raise TrustBallError(
                f"iterate {it} left the trust ball |phi / v_p| < 1/4 (measured kappa "
                f"{estimate_kappa(increments):.3g})", kappa=estimate_kappa(increments))
        if inc <= opts.tol:
            break
    else:
        kappa = estimate_kappa(increments)
        raise ConvergenceError(f"no convergence in {opts.maxiter} iterations (kappa {kappa:.3g})",
                               kappa=kappa)
    v = problem.vp_values + phi.values()
    report = ContractionReport(
        increments=tuple(increments), kappa=estimate_kappa(increments), iters=len(increments),
        residual_sup=residual_on_ball(phi, problem), positivity_margin=float(np.min(v)),
        solve_norms=norms)
    return phi, report, problem


def residual_grid(phi: HarmonicField, problem: PerturbedProblem):
    """-Lap v - L_t(v) - |x + t psi|^alpha |v|^(p-1) v on the collocation grid, v = v_p + phi.

    -Lap v_p = |x|^alpha v_p^p is used for the radial part; phi is
    differentiated mode-wise with fourth-order differences.
    """
    grid = problem.grid
    r = grid.r
    d1, d2 = radial_derivatives(phi.coeffs, grid.h)
    k = np.arange(grid.kmax + 1)[:, None]
    lap_modes = d2 + 2 * d1 / r - k * (k + 1) * phi.coeffs / r**2
    p0, _, _ = grid.legendre_tables()
    lap_phi = lap_modes.T @ p0
    p = problem.params.p
    v = problem.vp_values + phi.values()
    return (problem.weight_r * problem.vp_values**p - lap_phi - problem.Lt_vp - problem.Lt(phi)
            - problem.weight_mapped * np.abs(v) ** (p - 1) * v)


def residual_on_ball(phi: HarmonicField, problem: PerturbedProblem) -> float:
    """Sup norm of :func:`residual_grid`."""
    return float(np.max(np.abs(residual_grid(phi, problem))))


def dilation_correction(vp: RadialProfile, t, r):
    """Exact phi for the dilation map: ((1 + t)^(-(2+alpha)/(p-1)) - 1) v_p(r)."""
    factor = (1 + t) ** (-(2 + vp.weight_alpha) / (vp.p - 1)) - 1
    return factor * vp(np.asarray(r, float))[0]
