"""Pohozaev diagnostics and Kelvin-transformed exterior solutions.

For a radial solution of -Lap v = r^alpha v^p on the unit ball the Pohozaev
identity reads, after dividing out the measure of the unit sphere,

    c_poh * int_0^1 r^(N-1+alpha) v^(p+1) dr + (1/2) v'(1)^2 = 0,
    c_poh = (N-2)/2 - (N+alpha)/(p+1),

and c_poh < 0 exactly when p < p_alpha(N).  The Kelvin transform
w(s) = s^(2-N) v(1/s) maps it to an exterior solution of
-Lap w = s^beta w^p on |x| > 1 with beta = (N-2)p - N - 2 - alpha.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .domain_map import DomainMapSpec
from .errors import ForbiddenExponentError, InvalidConfigError
from .problem import ProblemParams, alpha_for_fast_decay, kelvin_beta, spherical_eigenvalue
from .profile import RadialProfile
from .radial import fd_second_derivative, solve_henon_radial
from .spectrum import nondegeneracy_certificate, nu_at

log = logging.getLogger(__name__)

POHOZAEV_PANELS = 4096
S_MAX = 1000.0


# --------------------------------------------------------------------------
# Pohozaev identity


@dataclass(frozen=True)
class PohozaevReport:
    volume_term: float
    boundary_term: float
    residual: float
    c_poh: float
    panels: int
    nodes_per_panel: int

    @property
    def relative_residual(self):
        scale = abs(self.volume_term) + abs(self.boundary_term)
        return abs(self.residual) / scale if scale > 0 else abs(self.residual)


def pohozaev_coefficient(params: ProblemParams) -> float:
    N, alpha, p = params.N, params.alpha, params.p
    return (N - 2) / 2 - (N + alpha) / (p + 1)


def _panel_edges(vp, panels):
    """Panels on [0, 1], graded towards the origin when v_p is concentrated.

    Half the panels are geometric on [r_c 1e-6, r_c], r_c the radius where
    v_p drops to half its central value, the rest uniform on [r_c, 1]; for
    spread-out profiles (r_c > 0.05) all panels are uniform.
    """
    r = np.logspace(-12, 0, 2001)
    v, _ = vp(r)
    r_c = float(r[np.argmax(v < 0.5 * vp.central_value)])
    if r_c > 0.05:
        return np.linspace(0.0, 1.0, panels + 1)
    half = panels // 2
    inner = np.concatenate([[0.0], np.geomspace(r_c * 1e-6, r_c, half)])
    outer = np.linspace(r_c, 1.0, panels - half + 1)[1:]
    return np.concatenate([inner, outer])


def pohozaev_residual(vp: RadialProfile, params: ProblemParams | None = None,
                      panels=POHOZAEV_PANELS, nodes=8) -> PohozaevReport:
    """Evaluate both sides of the radial Pohozaev identity.

    The volume integral uses composite Gauss-Legendre quadrature on
    ``panels`` panels with ``nodes`` points each, evaluated through the
    profile's dense evaluator.
    """
    if params is None:
        params = ProblemParams(int(round(vp.dimension)), vp.weight_alpha, vp.p)
    N, alpha, p = params.N, params.alpha, params.p
    c = pohozaev_coefficient(params)
    edges = _panel_edges(vp, panels)
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    rq = (mid[:, None] + half[:, None] * gx).ravel()
    wq = (half[:, None] * gw).ravel()
    v, _ = vp(rq)
    integral = float(np.sum(wq * rq ** (N - 1 + alpha) * np.abs(v) ** (p + 1)))
    _, dv1 = vp(np.array([1.0]))
    volume = c * integral
    boundary = 0.5 * float(dv1[0]) ** 2
    return PohozaevReport(volume_term=volume, boundary_term=boundary, residual=volume + boundary,
                          c_poh=c, panels=len(edges) - 1, nodes_per_panel=nodes)


# --------------------------------------------------------------------------
# nonexistence certificate


@dataclass(frozen=True)
class NonexistenceCertificate:
    verdict: str
    margin: float
    """min over the grid of (N-2)/2 - N/(p+1) - eps/(p+1)."""
    sup_eps: float
    gamma: float
    star_margin: float
    """min over the boundary grid of y . n (>= 0 for star-shaped domains)."""

    @property
    def certified(self):
        return self.verdict == "CERTIFIED-NONEXISTENCE"


def shift_weight_distortion(x, alpha, gamma, z=(0.0, 0.0, 1.0)):
    """eps(x) = x . grad(|z + gamma x|^alpha) / |z + gamma x|^alpha.

    In closed form alpha gamma (x . z + gamma |x|^2) / |z + gamma x|^2.
    """
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    shifted = z + gamma * x
    return alpha * gamma * (x @ z + gamma * np.sum(x * x, axis=-1)) / np.sum(shifted**2, axis=-1)


def _domain_samples(spec: DomainMapSpec | None, n_r=24, n_theta=24, n_phi=24):
    """Interior points and boundary (point, outward normal) pairs of the mapped ball."""
    th = np.linspace(0.0, np.pi, n_theta)
    ph = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
    T, F = np.meshgrid(th, ph, indexing="ij")
    sphere = np.stack([np.sin(T) * np.cos(F), np.sin(T) * np.sin(F), np.cos(T)], axis=-1).reshape(-1, 3)
    radii = np.linspace(0.0, 1.0, n_r)
    interior = (radii[:, None, None] * sphere[None]).reshape(-1, 3)
    if spec is None:
        return interior, sphere, sphere.copy()
    # tangent plane of the sphere maps through I + t D psi; its normal through the cofactor
    jac = np.eye(3) + spec.t * spec.jacobian(sphere)
    normals = np.einsum("mji,mj->mi", np.linalg.inv(jac), sphere)
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    return spec.forward(interior), spec.forward(sphere), normals


def nonexistence_certificate(N, alpha, p, shift, spec: DomainMapSpec | None = None,
                             direction=(0.0, 0.0, 1.0)) -> NonexistenceCertificate:
    """One-sided certificate that no positive solution concentrates at distance ``shift``.

    With gamma = 1/shift (gamma = 0 for an infinite shift) the rescaled
    Pohozaev identity has no positive solution on a star-shaped domain when
    (N-2)/2 - N/(p+1) - eps(x)/(p+1) > 0 on the whole domain.  Failure of the
    test gives INCONCLUSIVE, never an existence claim.
    """
    params = ProblemParams(N, alpha, p)
    if p <= params.sobolev_exponent:
        raise InvalidConfigError(f"p must exceed (N+2)/(N-2) = {params.sobolev_exponent}")
    if N != 3:
        raise InvalidConfigError("the domain sampler is three-dimensional; use N = 3")
    if not shift > 0:
        raise InvalidConfigError("shift magnitude must be positive")
    gamma = 0.0 if math.isinf(shift) else 1.0 / shift
    interior, boundary, normals = _domain_samples(spec)
    star = float(np.min(np.sum(boundary * normals, axis=1)))
    if star < -1e-12:
        raise InvalidConfigError(f"domain is not star-shaped about the origin (min x.n = {star:.3g})")
    if gamma * np.max(np.linalg.norm(interior, axis=1)) >= 1:
        raise InvalidConfigError("shift too small: the weight's zero lies inside the domain")
    eps = shift_weight_distortion(interior, alpha, gamma, direction)
    base = (N - 2) / 2 - N / (p + 1)
    margin = float(np.min(base - eps / (p + 1)))
    verdict = "CERTIFIED-NONEXISTENCE" if margin > 0 else "INCONCLUSIVE"
    return NonexistenceCertificate(verdict=verdict, margin=margin,
                                   sup_eps=float(np.max(np.abs(eps))), gamma=gamma, star_margin=star)


# --------------------------------------------------------------------------
# Kelvin transform


@dataclass(frozen=True)
class ExteriorProfile:
    s: np.ndarray
    values: np.ndarray
    dvalues: np.ndarray
    dimension: int
    p: float
    beta: float
    decay_exponent: float
    fit_window: tuple
    residual_sup: float
    source: RadialProfile | None = field(default=None, repr=False, compare=False)

    @property
    def boundary_value(self):
        return float(self.values[0])


def kelvin_values(vp: RadialProfile, s):
    """w(s) = s^(2-N) v(1/s) and w'(s)."""
    s = np.asarray(s, float)
    N = vp.dimension
    v, dv = vp(1.0 / s)
    w = s ** (2 - N) * v
    dw = (2 - N) * s ** (1 - N) * v - s ** (-N) * dv
    return w, dw


def exterior_residual(s, w, dw, N, beta, p, trim=4):
    """sup |w'' + (N-1) w'/s + s^beta |w|^(p-1) w| on a log-spaced grid (w'' by differences in log s)."""
    sigma = np.log(s)
    d2w = fd_second_derivative(sigma, dw) / s
    res = d2w + (N - 1) / s * dw + s**beta * np.abs(w) ** (p - 1) * w
    return float(np.nanmax(np.abs(res[trim:-trim])))


def fit_decay_exponent(s, w, window):
    lo, hi = window
    mask = (s >= lo) & (s <= hi)
    slope, _ = np.polyfit(np.log(s[mask]), np.log(w[mask]), 1)
    return float(-slope)


def kelvin_exterior(vp: RadialProfile, params: ProblemParams | None = None, s_max=S_MAX,
                    n=2001) -> ExteriorProfile:
    """Kelvin-transform v_p to the exterior of the unit ball.

    The residual of -w'' - (N-1)w'/s = s^beta w^p is measured on ``n``
    log-spaced radii in [1, s_max]; the decay exponent is the negated
    least-squares slope of log w against log s on [s_max/4, s_max].
    """
    if params is None:
        params = ProblemParams(int(round(vp.dimension)), vp.weight_alpha, vp.p)
    if s_max <= 4:
        raise InvalidConfigError("s_max must exceed 4")
    N, p = params.N, params.p
    beta = kelvin_beta(params)
    s = np.geomspace(1.0, s_max, n)
    w, dw = kelvin_values(vp, s)
    window = (s_max / 4, s_max)
    return ExteriorProfile(s=s, values=w, dvalues=dw, dimension=N, p=p, beta=beta,
                           decay_exponent=fit_decay_exponent(s, w, window), fit_window=window,
                           residual_sup=exterior_residual(s, w, dw, N, beta, p), source=vp)


def inverse_kelvin(ext: ExteriorProfile, r):
    """v(r) = r^(2-N) w(1/r) for r in [1/s_max, 1], by cubic Hermite interpolation of w."""
    from scipy.interpolate import CubicHermiteSpline

    r = np.asarray(r, float)
    spline = CubicHermiteSpline(np.log(ext.s), ext.values, ext.dvalues * ext.s)
    return r ** (2 - ext.dimension) * spline(np.log(1.0 / r))


# --------------------------------------------------------------------------
# fast-decay pipeline


@dataclass(frozen=True)
class FastDecayReport:
    N: int
    p: float
    alpha_star: float
    beta: float
    exterior: ExteriorProfile
    interior_params: ProblemParams
    nu_window: tuple
    perturbed: object = None
    """(ContractionReport, exterior residual, decay exponent) for the perturbed variant."""

    def summary(self):
        out = {"N": self.N, "p": self.p, "alpha_star": self.alpha_star, "beta": self.beta,
               "decay_exponent": self.exterior.decay_exponent,
               "residual_sup": self.exterior.residual_sup,
               "boundary_value": self.exterior.boundary_value}
        if self.perturbed is not None:
            report, res, decay = self.perturbed
            out.update({"perturbed_kappa": report.kappa, "perturbed_iters": report.iters,
                        "perturbed_exterior_residual": res, "perturbed_decay_exponent": decay})
        return out


def check_fast_decay_exponent(N, p, window=1e-3):
    """Raise if p is within ``window`` of a degenerate exponent of (N, alpha*(q)).

    Along the family alpha = alpha*(q) the degenerate exponents are the
    roots of nu(q) + lambda_k; a root in [p - window, p + window] shows up
    as some -lambda_k between the end values of nu.  The nondegeneracy
    certificate at p itself is run as well.
    """
    lo, hi = p - window, p + window
    sob = (N + 2) / (N - 2)
    lo = max(lo, sob + 1e-9)
    nus = [nu_at(N, alpha_for_fast_decay(N, q), q) for q in (lo, hi)]
    a, b = min(nus), max(nus)
    k = 1
    while spherical_eigenvalue(N, k) <= -a:
        if a <= -spherical_eigenvalue(N, k) <= b:
            raise ForbiddenExponentError(
                f"p = {p} is within {window:g} of a degenerate exponent (mode {k}) of the "
                f"fast-decay family", mode=k, value=-spherical_eigenvalue(N, k))
        k += 1
    params = ProblemParams(N, alpha_for_fast_decay(N, p), p)
    cert = nondegeneracy_certificate(params)
    if cert.degenerate:
        raise ForbiddenExponentError(f"p = {p} is degenerate (mode {cert.witness_mode})",
                                     mode=cert.witness_mode, value=cert.min_boundary)
    return tuple(nus)


def fast_decay_pipeline(N, p, s_max=S_MAX, spec: DomainMapSpec | None = None, opts=None,
                        check_forbidden=True) -> FastDecayReport:
    """Fast-decay solution of -Lap w = w^p outside a (perturbed) ball.

    Solves the weighted interior problem with alpha* = p(N-2) - N - 2, for
    which the Kelvin weight beta vanishes, and transforms it.  With ``spec``
    the interior problem is first solved on the perturbed ball by the
    contraction iteration, and the exterior residual on the Kelvin image of
    the collocation points is reported.
    """
    alpha = alpha_for_fast_decay(N, p)
    params = ProblemParams(N, alpha, p)
    nus = check_fast_decay_exponent(N, p) if check_forbidden else (math.nan, math.nan)
    vp = solve_henon_radial(params)
    ext = kelvin_exterior(vp, params, s_max=s_max)
    perturbed = None
    if spec is not None:
        from .perturbed import contraction_solve

        phi, report, problem = contraction_solve(params, spec, opts, vp=vp)
        perturbed = (report,) + perturbed_exterior(phi, problem, s_max)
    return FastDecayReport(N=N, p=p, alpha_star=alpha, beta=kelvin_beta(params), exterior=ext,
                           interior_params=params, nu_window=nus, perturbed=perturbed)


def perturbed_exterior(phi, problem, s_max=S_MAX):
    """Exterior residual and decay exponent for the Kelvin image of a perturbed solution.

    At z = y/|y|^2 with y = x + t psi(x) the exterior residual equals
    |z|^(-N-2) times the interior residual at x; the decay exponent is
    fitted to w(z) = |z|^(2-N) (v_p + phi)(x) over the collocation points
    with |z| in [s_max/4, s_max].
    """
    from .perturbed import residual_grid

    N = problem.params.N
    res = residual_grid(phi, problem).reshape(-1)
    y = problem.spec.forward(problem.x)
    zn = 1.0 / np.linalg.norm(y, axis=1)
    ext_res = float(np.max(zn ** (-N - 2) * np.abs(res)))
    v = (problem.vp_values + phi.values()).reshape(-1)
    w = zn ** (2 - N) * v
    mask = (zn >= s_max / 4) & (zn <= s_max)
    if np.count_nonzero(mask) < 3:
        raise InvalidConfigError("too few collocation points in the decay window; raise rnodes")
    slope, _ = np.polyfit(np.log(zn[mask]), np.log(w[mask]), 1)
    return ext_res, float(-slope)
