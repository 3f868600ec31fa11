"""Acceptance suite: one test per numbered criterion, each with its runtime budget.

Every test records a one-line verdict that is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_bvp

from henon.analysis import fast_decay_pipeline, pohozaev_residual
from henon.cli import run
from henon.domain_map import DomainMapSpec
from henon.perturbed import ContractionOptions, contraction_solve, dilation_correction
from henon.problem import ProblemParams, SphericalSpectrum
from henon.radial import lane_emden_shoot, solve_henon_radial
from henon.spectrum import SpectralOptions, find_pk, mode_shoot, sweep_nu

RESULTS = {}


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def record(number, title, checks, elapsed, budget):
    """Store the verdict and assert every check plus the runtime budget."""
    checks = dict(checks)
    checks[f"runtime {elapsed:.1f}s < {budget:g}s"] = elapsed < budget
    failed = [name for name, ok in checks.items() if not ok]
    RESULTS[number] = (title, not failed, "; ".join(failed or list(checks)))
    assert not failed, f"criterion {number} failed: {failed}"


def mode0_ok(p, p_crit, a0):
    """Radial shot stays away from zero.

    The bar |a_0(1)| > 1e-3 applies for p_crit - p >= 1e-2.  Closer to the
    critical exponent the shot tends to zero linearly in p_crit - p (the
    limiting problem is scale invariant), so there it must exceed
    0.1 (p_crit - p).
    """
    gap = p_crit - p
    return abs(a0) > (1e-3 if gap >= 1e-2 else 0.1 * gap)


# --------------------------------------------------------------------------


def test_criterion_01_lane_emden_calibration():
    with Clock() as clock:
        linear = lane_emden_shoot(3.0, 1.0)
        critical = lane_emden_shoot(3.0, 5.0)
        r = np.linspace(0.0, 10.0, 4001)
        err = np.max(np.abs(critical.profile(r)[0] - (1 + r**2 / 3) ** -0.5))
    record(1, "Lane-Emden calibration", {
        f"|R0 - pi| = {abs(linear.R0 - math.pi):.1e} <= 1e-8": abs(linear.R0 - math.pi) <= 1e-8,
        f"critical profile error {err:.1e} <= 1e-8": err <= 1e-8,
        "critical shot has no zero": not critical.subcritical,
    }, clock.elapsed, 1.0)


def _collocation(N, alpha, p, guess_scale):
    def f(r, y):
        return np.vstack([y[1], -r**alpha * np.abs(y[0]) ** (p - 1) * y[0]])

    r = np.linspace(0.0, 1.0, 201)
    guess = np.vstack([guess_scale * (1 - r**2), -2 * guess_scale * r])
    return solve_bvp(f, lambda ya, yb: np.array([ya[1], yb[0]]), r, guess,
                     S=np.array([[0.0, 0.0], [0.0, -(N - 1.0)]]), tol=1e-8, max_nodes=100000)


def test_criterion_02_weighted_form_equivalence():
    checks = {}
    with Clock() as clock:
        for N, alpha, p in [(3, 2.0, 3.0), (4, 1.0, 2.5)]:
            vp = solve_henon_radial(ProblemParams(N, alpha, p))
            sol = _collocation(N, alpha, p, 0.8 * vp.central_value)
            rr = np.linspace(0.0, 1.0, 2001)
            err = np.max(np.abs(sol.sol(rr)[0] - vp(rr)[0]))
            checks[f"({N},{alpha:g},{p:g}) collocation status {sol.status}, sup diff {err:.1e} <= 1e-6"] = (
                sol.status == 0 and err <= 1e-6)
    record(2, "transform vs direct collocation", checks, clock.elapsed, 10.0)


def test_criterion_03_pohozaev_sweep():
    worst = 0.0
    count = 0
    with Clock() as clock:
        for N in (3, 4):
            for alpha in (0.5, 1.0, 2.0):
                pc = ProblemParams(N, alpha, 2.0).p_crit_alpha
                for p in (1.5, pc - 0.05):
                    params = ProblemParams(N, alpha, p)
                    rep = pohozaev_residual(solve_henon_radial(params), params)
                    worst = max(worst, rep.relative_residual)
                    count += 1
    record(3, "Pohozaev residual sweep", {
        f"{count} cases": count == 12,
        f"max relative residual {worst:.1e} <= 1e-6": worst <= 1e-6,
    }, clock.elapsed, 30.0)


@pytest.fixture(scope="module")
def sweep_31():
    """The 100-point (N=3, alpha=1) sweep shared by criteria 4 and 5."""
    grid = np.linspace(1.05, 6.999, 100)
    with Clock() as clock:
        curve = sweep_nu(3, 1.0, grid)
    return curve, clock.elapsed


def test_criterion_04_two_oracle_nu(sweep_31):
    curve, elapsed = sweep_31
    with Clock() as clock:
        tail = sweep_nu(3, 1.0, [1.2, 1.1, 1.05], SpectralOptions(with_direct=False, with_mode0=False))
    ok = curve.ok
    gap = max(s.gap for s in ok)
    mags = np.abs(tail.nu)
    record(4, "two-oracle nu(p)", {
        f"{len(ok)}/100 samples converged": len(ok) == 100,
        f"max |nu_schrodinger - nu_direct| {gap:.1e} <= 1e-6": gap <= 1e-6,
        f"max nu {max(s.nu for s in ok):.3g} < 0": all(s.nu < 0 for s in ok),
        "|nu| decreasing along p = 1.2, 1.1, 1.05": bool(mags[0] > mags[1] > mags[2]),
    }, elapsed + clock.elapsed, 120.0)


def test_criterion_05_single_negative_eigenvalue(sweep_31):
    curve, elapsed = sweep_31
    second = min(s.second_direct for s in curve.ok)
    mode0 = all(mode0_ok(s.p, 7.0, s.mode0_boundary) for s in curve.ok)
    record(5, "single negative eigenvalue", {
        f"min second eigenvalue {second:.3g} >= -1e-8": second >= -1e-8,
        "radial shot nonzero across the sweep": mode0,
    }, elapsed, 120.0)


@pytest.fixture(scope="module")
def table_202():
    """(N=3, alpha=2.02): the smallest alpha tested whose range [5, p_alpha) holds a root."""
    opts = SpectralOptions(with_direct=False)
    with Clock() as clock:
        curve = sweep_nu(3, 2.02, np.linspace(5.0, 9.019, 60), opts)
        table = find_pk(curve, SphericalSpectrum(3, 32), opts=opts)
    return curve, table, clock.elapsed


def test_criterion_06_degeneracy_cross_validation(table_202):
    curve, table, elapsed = table_202
    checks = {f"{len(table.entries)} table root(s)": len(table.entries) >= 1}
    with Clock() as clock:
        for e in table.entries:
            checks[f"k={e.k}: |a_k(1)| at p_k = {e.crosscheck_residual:.1e} <= 1e-6"] = (
                e.crosscheck_residual <= 1e-6)
            for d in (-0.05, 0.05):
                vp = solve_henon_radial(ProblemParams(3, 2.02, e.p_k + d))
                a = abs(mode_shoot(vp, e.k).boundary_value)
                checks[f"k={e.k}: |a_k(1)| at p_k{d:+g} = {a:.1e} > 1e-3"] = a > 1e-3
    pc = ProblemParams(3, 2.02, 2.0).p_crit_alpha
    m0 = min(abs(s.mode0_boundary) for s in curve.ok)
    checks[f"min |a_0(1)| over the sweep {m0:.1e}"] = all(
        mode0_ok(s.p, pc, s.mode0_boundary) for s in curve.ok)
    record(6, "degeneracy cross-validation", checks, elapsed + clock.elapsed, 180.0)


def test_criterion_07_contraction_solver():
    checks = {}
    norms = []
    ts = (1e-2, 1e-3, 1e-4)
    with Clock() as clock:
        vp = solve_henon_radial(ProblemParams(3, 1.0, 5.0))
        for t in ts:
            phi, rep, _ = contraction_solve(ProblemParams(3, 1.0, 5.0), DomainMapSpec("bump", t),
                                            ContractionOptions(), vp=vp)
            norms.append(phi.sup_norm())
            checks[f"t={t:g}: kappa {rep.kappa:.1e} < 1, residual {rep.residual_sup:.1e} <= 1e-6, "
                   f"margin {rep.positivity_margin:.3g} > 0"] = (
                rep.kappa < 1 and rep.residual_sup <= 1e-6 and rep.positivity_margin > 0)
    slope = np.polyfit(np.log(ts), np.log(norms), 1)[0]
    checks[f"log-log slope {slope:.3f} in 1 +- 0.1"] = abs(slope - 1) <= 0.1
    record(7, "contraction solver", checks, clock.elapsed, 300.0)


def test_criterion_08_dilation_exactness():
    t = 1e-3
    with Clock() as clock:
        params = ProblemParams(3, 1.0, 5.0)
        phi, rep, problem = contraction_solve(params, DomainMapSpec("dilation", t))
        exact = dilation_correction(problem.vp, t, problem.grid.r)
        err = np.max(np.abs(phi.values() - exact[:, None]))
    record(8, "dilation exactness", {f"sup error {err:.1e} <= 1e-6": err <= 1e-6},
           clock.elapsed, 60.0)


def test_criterion_09_predicted_breakdown(tmp_path, table_202):
    _, table, _ = table_202
    checks = {}
    with Clock() as clock:
        for e in table.entries[:1]:
            for d in (1e-3, -1e-3, 1e-4):
                p = e.p_k + d
                argv = ["perturbed", "--N", "3", "--alpha", "2.02", "--p", repr(p), "--t", "1e-3",
                        "--map", "bump(0,0,1)", "--out", str(tmp_path / f"{d:g}")]
                code = run(argv)
                checks[f"k={e.k}, p = p_k{d:+g}: exit code {code} == 2"] = code == 2
    checks["a table root is available"] = bool(table.entries)
    record(9, "predicted breakdown near p_k", checks, clock.elapsed, 120.0)


def test_criterion_10_fast_decay_pipeline():
    with Clock() as clock:
        rep = fast_decay_pipeline(3, 6.0)
    ext = rep.exterior
    record(10, "fast-decay pipeline", {
        f"beta = {rep.beta!r} == 0": rep.beta == 0,
        f"exterior residual {ext.residual_sup:.1e} <= 1e-6": ext.residual_sup <= 1e-6,
        f"decay exponent {ext.decay_exponent:.5f} within 1% of 1": abs(ext.decay_exponent - 1) <= 1e-2,
    }, clock.elapsed, 30.0)
