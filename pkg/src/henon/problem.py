"""Problem parameters and the closed-form exponent and transform formulas.

Everything here is algebra on (N, alpha, p).  The radial change of variables
that trades the weight |x|^alpha for a fractional dimension

    N(alpha) = 2 (N + alpha) / (2 + alpha)

is implemented by :func:`to_lane_emden_form` and :func:`from_lane_emden_form`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .profile import RadialProfile


@dataclass(frozen=True)
class ProblemParams:
    N: int
    alpha: float
    p: float

    def __post_init__(self):
        if int(self.N) != self.N:
            raise InvalidConfigError(f"N must be an integer, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        if self.N < 3:
            raise InvalidConfigError(f"N must be >= 3, got {self.N}")
        if self.alpha <= -2:
            raise InvalidConfigError(f"alpha must exceed -2, got {self.alpha}")
        if self.p <= 1:
            raise InvalidConfigError(f"p must exceed 1, got {self.p}")

    @property
    def p_crit_alpha(self) -> float:
        return critical_exponent(self)

    @property
    def N_alpha(self) -> float:
        return fractional_dimension(self)

    @property
    def beta(self) -> float:
        return kelvin_beta(self)

    @property
    def sobolev_exponent(self) -> float:
        return (self.N + 2) / (self.N - 2)

    def require_pipeline_range(self, allow_zero_alpha=True):
        """Raise unless alpha > 0 (or alpha == 0 when allowed)."""
        if self.alpha < 0 or (self.alpha == 0 and not allow_zero_alpha):
            raise InvalidConfigError(f"alpha must be positive here, got {self.alpha}")


def critical_exponent(params: ProblemParams) -> float:
    """(N + 2 + 2 alpha) / (N - 2)."""
    N = params.N
    if N < 3:
        raise InvalidConfigError("critical exponent needs N >= 3")
    return (N + 2 + 2 * params.alpha) / (N - 2)


def fractional_dimension(params: ProblemParams) -> float:
    alpha = params.alpha
    if alpha <= -2:
        raise InvalidConfigError("fractional dimension needs alpha > -2")
    return 2 * (params.N + alpha) / (2 + alpha)


def kelvin_beta(params: ProblemParams) -> float:
    """Weight exponent picked up under the Kelvin transform."""
    return (params.N - 2) * params.p - params.N - 2 - params.alpha


def alpha_for_fast_decay(N: int, p: float) -> float:
    """The weight exponent p (N - 2) - N - 2 for which the Kelvin weight vanishes.

    The corresponding weighted problem is subcritical at p, so its radial
    solution Kelvin-transforms into a fast-decay exterior solution of
    -Lap v = v^p.
    """
    if N < 3:
        raise InvalidConfigError("N must be >= 3")
    if p <= (N + 2) / (N - 2):
        raise InvalidConfigError(
            f"p = {p} must exceed the Sobolev exponent {(N + 2) / (N - 2)}")
    return p * (N - 2) - N - 2


@dataclass(frozen=True)
class SphericalSpectrum:
    """Laplace-Beltrami eigenvalues k (k + N - 2) on S^{N-1} with multiplicities."""

    N: int
    kmax: int

    @property
    def entries(self):
        return [(k, spherical_eigenvalue(self.N, k), harmonic_multiplicity(self.N, k))
                for k in range(self.kmax + 1)]

    def eigenvalue(self, k):
        return spherical_eigenvalue(self.N, k)


def spherical_eigenvalue(N, k):
    if k < 0:
        raise ValueError("mode index must be >= 0")
    return k * (k + N - 2)


def harmonic_multiplicity(N, k):
    """Dimension of the degree-k spherical harmonics on S^{N-1}."""
    from math import comb
    if k == 0:
        return 1
    if k == 1:
        return N
    return comb(k + N - 1, N - 1) - comb(k + N - 3, N - 1)


def _stretch(alpha):
    if alpha <= -2:
        raise InvalidConfigError("the change of variables needs alpha > -2")
    return 1 + alpha / 2


def to_lane_emden_form(profile: RadialProfile, grid=None) -> RadialProfile:
    """Map a weighted radial profile (dimension N, weight alpha) to weight 0.

    Returns u~(s) = g**(-2/(p-1)) u(s**(1/g)) with g = 1 + alpha/2, which
    lives in dimension N(alpha).  Values are resampled on ``grid`` (default:
    the input grid).
    """
    alpha, p, N = profile.weight_alpha, profile.p, profile.dimension
    g = _stretch(alpha)
    scale = g ** (-2 / (p - 1))
    grid = profile.grid if grid is None else np.asarray(grid, float)

    def evaluate(s):
        s = np.asarray(s, float)
        u, du = profile(s ** (1 / g))
        with np.errstate(divide="ignore", invalid="ignore"):
            dds = np.where(s > 0, du * s ** (1 / g - 1) / g, du * (g == 1))
        return scale * u, scale * dds

    u, du = evaluate(grid)
    m = 2 * (N + alpha) / (2 + alpha)
    return RadialProfile(
        grid=grid, values=u, dvalues=du, dimension=m, weight_alpha=0.0, p=p,
        central_value=scale * profile.central_value,
        first_zero_R0=profile.first_zero_R0,
        evaluator=evaluate if profile.evaluator is not None else None,
    )


def from_lane_emden_form(profile: RadialProfile, alpha: float, grid=None) -> RadialProfile:
    """Inverse of :func:`to_lane_emden_form`.

    Takes an unweighted profile in dimension m and returns
    u(r) = g**(2/(p-1)) u~(r**g), g = 1 + alpha/2, a weighted profile in
    dimension N = m (2 + alpha)/2 - alpha.
    """
    if profile.weight_alpha != 0:
        raise InvalidConfigError("expected an unweighted profile")
    p, m = profile.p, profile.dimension
    g = _stretch(alpha)
    scale = g ** (2 / (p - 1))
    grid = profile.grid if grid is None else np.asarray(grid, float)

    def evaluate(r):
        r = np.asarray(r, float)
        u, du = profile(r**g)
        with np.errstate(divide="ignore", invalid="ignore"):
            chain = np.where(r > 0, g * r ** (g - 1), 1.0 if g == 1 else 0.0)
        return scale * u, scale * du * chain

    u, du = evaluate(grid)
    N = m * (2 + alpha) / 2 - alpha
    if abs(N - round(N)) < 1e-12:
        N = float(round(N))
    return RadialProfile(
        grid=grid, values=u, dvalues=du, dimension=N, weight_alpha=alpha, p=p,
        central_value=scale * profile.central_value,
        first_zero_R0=profile.first_zero_R0,
        evaluator=evaluate if profile.evaluator is not None else None,
    )
