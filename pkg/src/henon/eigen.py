"""Symmetric tridiagonal eigenvalue pencils: Sturm-count bisection + inverse iteration."""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import SolverError


class TridiagonalPencil:
    """The generalized problem A x = lam B x, A and B symmetric tridiagonal.

    B must be positive definite; omit it for the standard problem B = I.
    Eigenvalues are indexed from 0 in increasing order.
    """

    def __init__(self, a_diag, a_off, b_diag=None, b_off=None):
        self.a_diag = np.asarray(a_diag, dtype=float)
        self.a_off = np.asarray(a_off, dtype=float)
        n = len(self.a_diag)
        if len(self.a_off) != n - 1:
            raise ValueError("off-diagonal must have length n - 1")
        if b_diag is None:
            self.b_diag = np.ones(n)
            self.b_off = np.zeros(n - 1)
        else:
            self.b_diag = np.asarray(b_diag, dtype=float)
            self.b_off = np.zeros(n - 1) if b_off is None else np.asarray(b_off, dtype=float)
        self.n = n
        # plain lists make the scalar recurrence several times faster than numpy indexing
        self._a = self.a_diag.tolist()
        self._e = self.a_off.tolist()
        self._b = self.b_diag.tolist()
        self._f = self.b_off.tolist()

    def count_below(self, sigma: float) -> int:
        """Number of eigenvalues strictly below ``sigma`` (inertia of A - sigma B)."""
        a, e, b, f = self._a, self._e, self._b, self._f
        tiny = 1e-300
        d = a[0] - sigma * b[0]
        count = 1 if d < 0 else 0
        for i in range(1, self.n):
            if d == 0.0:
                d = tiny
            c = e[i - 1] - sigma * f[i - 1]
            d = (a[i] - sigma * b[i]) - c * c / d
            if d < 0:
                count += 1
        return count

    def _bracket(self, index):
        scale = max(1.0, float(np.max(np.abs(self.a_diag / self.b_diag))))
        lo, hi = -scale, scale
        while self.count_below(lo) > index:
            lo *= 2
            if lo < -1e300:
                raise SolverError("could not bracket eigenvalue from below")
        while self.count_below(hi) <= index:
            hi *= 2
            if hi > 1e300:
                raise SolverError("could not bracket eigenvalue from above")
        return lo, hi

    def _matvec_b(self, x):
        y = self.b_diag * x
        y[:-1] += self.b_off * x[1:]
        y[1:] += self.b_off * x[:-1]
        return y

    def _matvec_a(self, x):
        y = self.a_diag * x
        y[:-1] += self.a_off * x[1:]
        y[1:] += self.a_off * x[:-1]
        return y

    def eigenpair(self, index: int, coarse_tol=1e-7, iterations=4):
        """Return ``(lam, x)`` for eigenvalue number ``index`` (B-normalised x)."""
        if not 0 <= index < self.n:
            raise ValueError("eigenvalue index out of range")
        lo, hi = self._bracket(index)
        while hi - lo > coarse_tol * max(1.0, abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if self.count_below(mid) > index:
                hi = mid
            else:
                lo = mid
        sigma = 0.5 * (lo + hi)
        ab = np.zeros((3, self.n))
        ab[0, 1:] = self.a_off - sigma * self.b_off
        ab[1] = self.a_diag - sigma * self.b_diag
        ab[2, :-1] = ab[0, 1:]
        x = np.ones(self.n) / np.sqrt(self.n)
        for _ in range(iterations):
            try:
                x = solve_banded((1, 1), ab, self._matvec_b(x), check_finite=False)
            except np.linalg.LinAlgError:
                # sigma hit an eigenvalue exactly; the midpoint is then exact enough
                return sigma, None
            x /= np.sqrt(x @ self._matvec_b(x))
        lam = float(x @ self._matvec_a(x))
        width = hi - lo
        if not lo - width <= lam <= hi + width:
            # inverse iteration locked onto a neighbour; keep the bisection value
            lam = sigma
        return lam, x

    def eigenvalue(self, index: int, **kw) -> float:
        return self.eigenpair(index, **kw)[0]
