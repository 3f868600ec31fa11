"""Perturbations of the unit ball, y = x + t psi(x), and their inverses.

A solution u on the perturbed domain is pulled back to the ball as
v(x) = u(x + t psi(x)).  Writing the inverse map as x = y + t psi~(y), the
Laplacian transforms as

    -Lap_y u = -Lap_x v - L_t(v),

with

    L_t(v) = 2t sum_{i,k} v_{x_i x_k} d_i psi~_k
           + t sum_{i,k} v_{x_k} d_ii psi~_k
           + t^2 sum_{i,j,k} v_{x_j x_k} d_i psi~_j d_i psi~_k,

all derivatives of psi~ taken in y and evaluated at y = x + t psi(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, SolverError

FAMILIES = ("dilation", "translation", "bump")
SECOND_DERIVATIVE_STEP = 1e-5


@dataclass(frozen=True)
class DomainMapSpec:
    """A map family with its scale.

    Parameters
    ----------
    family : {"dilation", "translation", "bump"}
        ``dilation``: psi(x) = x.  ``translation``: psi(x) = e.
        ``bump``: psi(x) = eta(|x|) g(cos theta) x/|x| with
        eta(r) = r^2 (3 - 2r) and g(mu) = sum_j coeffs[j] mu^j (degree <= 4),
        theta measured from the x_3 axis.
    t : float
        Perturbation scale, t >= 0.
    direction : tuple
        Unit vector e of the translation family.
    coeffs : tuple
        c0..c4 of the bump family.
    """

    family: str
    t: float
    direction: tuple = (0.0, 0.0, 1.0)
    coeffs: tuple = (0.0, 0.0, 1.0, 0.0, 0.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidConfigError(f"unknown map family {self.family!r}; use one of {FAMILIES}")
        if not self.t >= 0:
            raise InvalidConfigError(f"t must be >= 0, got {self.t}")
        e = np.asarray(self.direction, float)
        if e.shape != (3,) or not np.isclose(np.linalg.norm(e), 1.0, atol=1e-12):
            raise InvalidConfigError("translation direction must be a unit 3-vector")
        if len(self.coeffs) > 5:
            raise InvalidConfigError("bump profile g has degree at most 4")
        object.__setattr__(self, "direction", tuple(float(c) for c in e))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        lip = self.lipschitz()
        if self.t * lip >= 1:
            raise InvalidConfigError(
                f"perturbation too large: t * Lip(psi) = {self.t * lip:.3g} >= 1")

    @property
    def axisymmetric(self) -> bool:
        """Invariant under rotations about the x_3 axis."""
        if self.family == "translation":
            return np.allclose(self.direction[:2], 0.0)
        return True

    @property
    def reflection_symmetric(self) -> bool:
        """Invariant under x_3 -> -x_3."""
        if self.family == "dilation":
            return True
        if self.family == "translation":
            return False
        return all(c == 0 for c in self.coeffs[1::2])

    def _g(self, mu):
        poly = np.polynomial.Polynomial(self.coeffs)
        return poly(mu), poly.deriv()(mu)

    def psi(self, x):
        """psi at points ``x`` of shape (..., 3)."""
        x = np.asarray(x, float)
        if self.family == "dilation":
            return x.copy()
        if self.family == "translation":
            return np.broadcast_to(np.asarray(self.direction), x.shape).copy()
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            mu = np.where(r > 0, x[..., 2] / r, 0.0)
        g, _ = self._g(mu)
        # eta(r) g x / r = (3r - 2r^2) g x
        return ((3 * r - 2 * r**2) * g)[..., None] * x

    def jacobian(self, x):
        """D psi with entry [..., k, j] = d psi_k / d x_j."""
        x = np.asarray(x, float)
        eye = np.broadcast_to(np.eye(3), x.shape + (3,)).copy()
        if self.family == "dilation":
            return eye
        if self.family == "translation":
            return np.zeros_like(eye)
        r = np.linalg.norm(x, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        mu = np.where(r > 0, x[..., 2] / safe, 0.0)
        g, dg = self._g(mu)
        s = (3 * r - 2 * r**2) * g
        xhat = x / safe[..., None]
        dmu = (eye[..., 2, :] - mu[..., None] * xhat) / safe[..., None]
        ds = ((3 - 4 * r) * g)[..., None] * xhat + ((3 * r - 2 * r**2) * dg)[..., None] * dmu
        ds = np.where((r > 0)[..., None], ds, 0.0)
        return x[..., :, None] * ds[..., None, :] + s[..., None, None] * eye

    def lipschitz(self, n=41) -> float:
        """Max spectral norm of D psi over a grid of the closed ball."""
        if self.family == "dilation":
            return 1.0
        if self.family == "translation":
            return 0.0
        g = np.linspace(-1.0, 1.0, n)
        pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        pts = pts[np.linalg.norm(pts, axis=1) <= 1.0]
        # the ball boundary carries the largest values; add it explicitly
        th = np.linspace(0.0, np.pi, 4 * n)
        rim = np.stack([np.sin(th), np.zeros_like(th), np.cos(th)], axis=1)
        pts = np.vstack([pts, rim])
        return float(np.max(np.linalg.norm(self.jacobian(pts), ord=2, axis=(-2, -1))))

    def forward(self, x):
        """y = x + t psi(x)."""
        x = np.asarray(x, float)
        return x + self.t * self.psi(x)


@dataclass(frozen=True)
class InverseMapField:
    """psi~ and its derivatives at the points y = x + t psi(x).

    ``d1[m, k, i]`` is d psi~_k / d y_i and ``d2[m, k, i]`` is
    d^2 psi~_k / d y_i^2, both at ``points[m]``.
    """

    spec: DomainMapSpec
    points: np.ndarray
    preimages: np.ndarray
    psi_tilde: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def t(self):
        return self.spec.t

    @property
    def laplacian(self):
        """sum_i d_ii psi~_k, shape (M, 3)."""
        return self.d2.sum(axis=-1)

    def roundtrip_error(self) -> float:
        """max |(y + t psi~(y)) - x|."""
        back = self.points + self.t * self.psi_tilde
        return float(np.max(np.abs(back - self.preimages))) if len(back) else 0.0


def _solve_preimage(spec, y, tol=1e-14, maxiter=50):
    """Newton iteration for x + t psi(x) = y, started from y - t psi(y)."""
    t = spec.t
    x = y - t * spec.psi(y)
    if t == 0:
        return x
    eye = np.eye(3)
    for _ in range(maxiter):
        res = x + t * spec.psi(x) - y
        err = np.max(np.abs(res)) if res.size else 0.0
        if not np.isfinite(err) or err > 1e3:
            raise SolverError("perturbation too large: map inversion diverged")
        if err <= tol:
            return x
        jac = eye + t * spec.jacobian(x)
        x = x - np.linalg.solve(jac, res[..., None])[..., 0]
    res = x + t * spec.psi(x) - y
    if np.max(np.abs(res)) > 1e-12:
        raise SolverError("perturbation too large: map inversion did not converge")
    return x


def _inverse_jacobian(spec, x):
    """[..., k, i] = d psi~_k / d y_i = -(D psi (I + t D psi)^{-1})_{ki}."""
    dpsi = spec.jacobian(x)
    m = np.eye(3) + spec.t * dpsi
    # D psi M^{-1} = (M^{-T} D psi^T)^T
    return -np.swapaxes(np.linalg.solve(np.swapaxes(m, -1, -2), np.swapaxes(dpsi, -1, -2)), -1, -2)


def invert_map(spec: DomainMapSpec, points, step=SECOND_DERIVATIVE_STEP) -> InverseMapField:
    """Invert y = x + t psi(x) at ``points`` (shape (M, 3)).

    psi~(y) is returned as -psi(x), which equals (x - y)/t for t > 0 without
    the cancellation, and is the continuous limit at t = 0.  Second
    derivatives are centered differences of the exact first derivatives.
    """
    y = np.atleast_2d(np.asarray(points, float))
    x = _solve_preimage(spec, y)
    d1 = _inverse_jacobian(spec, x)
    d2 = np.empty_like(d1)
    for i in range(3):
        shift = np.zeros(3)
        shift[i] = step
        jp = _inverse_jacobian(spec, _solve_preimage(spec, y + shift))
        jm = _inverse_jacobian(spec, _solve_preimage(spec, y - shift))
        d2[..., :, i] = (jp[..., :, i] - jm[..., :, i]) / (2 * step)
    return InverseMapField(spec=spec, points=y, preimages=x, psi_tilde=-spec.psi(x), d1=d1, d2=d2)


def inverse_field_on_ball(spec: DomainMapSpec, x) -> InverseMapField:
    """:func:`invert_map` at the images of ball points ``x``."""
    return invert_map(spec, spec.forward(np.atleast_2d(np.asarray(x, float))))


def assemble_Lt(field: InverseMapField, grad, hess):
    """L_t(v) at the field's points.

    Parameters
    ----------
    grad : array (M, 3)
        v_{x_k} at the preimages.
    hess : array (M, 3, 3)
        v_{x_j x_k} at the preimages.
    """
    if grad is None or hess is None:
        raise InvalidConfigError("L_t needs both first and second derivatives of v")
    grad = np.asarray(grad, float)
    hess = np.asarray(hess, float)
    M = len(field.points)
    if grad.shape != (M, 3) or hess.shape != (M, 3, 3):
        raise InvalidConfigError("derivative arrays do not match the field's points")
    t, J = field.t, field.d1
    first = np.einsum("mik,mki->m", hess, J)
    second = np.einsum("mk,mk->m", grad, field.laplacian)
    third = np.einsum("mjk,mji,mki->m", hess, J, J)
    return 2 * t * first + t * second + t**2 * third
