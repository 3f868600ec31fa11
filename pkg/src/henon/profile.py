"""Radial grid functions."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

Evaluator = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class RadialProfile:
    """A radial function u(r) sampled on a grid, with its derivative.

    The profile is understood as a solution (or candidate solution) of

        u'' + (dimension - 1)/r u' + r**weight_alpha |u|**(p-1) u = 0,

    where ``dimension`` may be fractional.  When ``evaluator`` is set it
    returns ``(u, du)`` at arbitrary radii with integrator accuracy;
    otherwise values off the grid come from cubic Hermite interpolation of
    ``values``/``dvalues``.
    """

    grid: np.ndarray
    values: np.ndarray
    dvalues: np.ndarray
    dimension: float
    weight_alpha: float
    p: float
    central_value: float
    first_zero_R0: Optional[float] = None
    evaluator: Optional[Evaluator] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        dvalues = np.asarray(self.dvalues, dtype=float)
        if grid.ndim != 1 or values.shape != grid.shape or dvalues.shape != grid.shape:
            raise ValueError("grid, values and dvalues must be 1-D arrays of equal length")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        for arr in (grid, values, dvalues):
            arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dvalues", dvalues)

    def __call__(self, r):
        """Return ``(u(r), u'(r))``."""
        r = np.asarray(r, dtype=float)
        if self.evaluator is not None:
            return self.evaluator(r)
        spline = self._spline()
        return spline(r), spline.derivative()(r)

    def _spline(self):
        cached = self.__dict__.get("_hermite")
        if cached is None:
            cached = CubicHermiteSpline(self.grid, self.values, self.dvalues)
            object.__setattr__(self, "_hermite", cached)
        return cached

    def second_derivative(self, r):
        """u'' from the profile's own ODE (valid for solution profiles only)."""
        r = np.asarray(r, dtype=float)
        u, du = self(r)
        m, a, p = self.dimension, self.weight_alpha, self.p
        source = np.abs(u) ** (p - 1) * u
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -(m - 1) * du / r - r**a * source
        # at r = 0, u'/r -> u''(0), hence m u''(0) = -[r^a |u|^(p-1) u]_{r=0}
        at0 = r == 0
        if np.any(at0):
            out = np.where(at0, -(source * (a == 0)) / m, out)
        return out

    @property
    def interpolated(self) -> "RadialProfile":
        """Copy that forgets the evaluator and relies on grid interpolation."""
        return replace(self, evaluator=None)


def zero_profile(dimension, weight_alpha, p, n=2001) -> RadialProfile:
    """The profile u = 0 on [0, 1] (used to switch the potential off)."""
    r = np.linspace(0.0, 1.0, n)
    z = np.zeros_like(r)
    return RadialProfile(
        grid=r, values=z, dvalues=z, dimension=dimension, weight_alpha=weight_alpha,
        p=p, central_value=0.0,
        evaluator=lambda s: (np.zeros_like(np.asarray(s, float)), np.zeros_like(np.asarray(s, float))),
    )
