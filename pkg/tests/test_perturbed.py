import numpy as np
import pytest

from henon.domain_map import DomainMapSpec
from henon.errors import ConvergenceError, ForbiddenExponentError, InvalidConfigError, TrustBallError
from henon.perturbed import (ContractionOptions, HarmonicField, ModeSolver, PerturbedProblem,
                             apply_Linv, contraction_solve, dilation_correction, eval_Ht,
                             make_grid, residual_on_ball)
from henon.problem import ProblemParams
from henon.radial import solve_henon_radial

P315 = ProblemParams(3, 1.0, 5.0)
SMALL = ContractionOptions(kmax=16, rnodes=256)
P2_ALPHA_202 = 5.690103932493684


def _smooth_field(grid, rng, scale, modes=5):
    r = grid.r
    c = np.zeros((grid.kmax + 1, grid.n))
    for k in range(modes):
        c[k] = rng.normal() * (1 - r**2) * r**k
    f = HarmonicField(grid, c)
    return f.scaled(scale / f.sup_norm())


def test_field_projection_roundtrip(rng):
    grid = make_grid(16, 64)
    f = HarmonicField(grid, rng.normal(size=(17, 64)))
    back = HarmonicField.from_values(grid, f.values())
    np.testing.assert_allclose(back.coeffs, f.coeffs, atol=1e-12)


def test_zero_rhs_gives_zero(vp_315):
    grid = make_grid(8, 128)
    assert apply_Linv(HarmonicField.zeros(grid), vp_315).sup_norm() == 0


@pytest.mark.parametrize("order, rate, tol", [(4, 10.0, 1e-4), (2, 3.0, 1e-3)])
def test_manufactured_solution(vp_315, order, rate, tol):
    # a*_k = r^k (1 - r^2) gives -(a'' + 2a'/r) + k(k+1) a / r^2 = (4k + 6) r^k
    errors = []
    for n in (128, 256):
        grid = make_grid(6, n)
        solver = ModeSolver(vp_315, grid, order=order)
        r = grid.r
        k = np.arange(7)[:, None]
        exact = r**k * (1 - r**2)
        rhs = (4 * k + 6) * r**k - solver.V * exact
        got = apply_Linv(HarmonicField(grid, rhs), vp_315, solver)
        errors.append(np.max(np.abs(got.coeffs - exact)))
    assert errors[1] <= tol
    assert errors[0] / errors[1] >= rate


def test_mode_solve_norm_blows_up_near_root():
    norms = []
    for d in (1e-2, 1e-3):
        vp = solve_henon_radial(ProblemParams(3, 2.02, P2_ALPHA_202 + d))
        norms.append(ModeSolver(vp, make_grid(4, 512)).inverse_norm(2))
    assert 7 <= norms[1] / norms[0] <= 13


def test_Ht_limits(vp_315, rng):
    p0 = PerturbedProblem.build(P315, DomainMapSpec("bump", 0.0), vp_315, 16, 256)
    assert eval_Ht(HarmonicField.zeros(p0.grid), p0).sup_norm() == 0
    pt = PerturbedProblem.build(P315, DomainMapSpec("bump", 1e-2), vp_315, 16, 256)
    got = pt.Ht_values(np.zeros((pt.grid.n, pt.grid.n_angles)))
    expected = (pt.weight_mapped - pt.weight_r) * pt.vp_values**5
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_Ht_is_quadratic_at_zero_scale(vp_315, rng):
    problem = PerturbedProblem.build(P315, DomainMapSpec("bump", 0.0), vp_315, 16, 256)
    phi = _smooth_field(problem.grid, rng, 1e-2)
    norms = [eval_Ht(phi.scaled(s), problem).sup_norm() for s in (1.0, 0.5, 0.25)]
    slopes = np.diff(np.log(norms)) / np.diff(np.log([1.0, 0.5, 0.25]))
    assert np.all(slopes >= 1.9)


def test_trust_ball_enforced(vp_315, rng):
    problem = PerturbedProblem.build(P315, DomainMapSpec("bump", 0.0), vp_315, 16, 256)
    with pytest.raises(TrustBallError):
        eval_Ht(_smooth_field(problem.grid, rng, 2.0), problem)


def test_contraction_factor_on_random_pairs(vp_315):
    kappas = []
    for t in (1e-2, 1e-3):
        problem = PerturbedProblem.build(P315, DomainMapSpec("bump", t), vp_315, 16, 256)
        rng = np.random.default_rng(7)
        ratios = []
        for _ in range(20):
            a = _smooth_field(problem.grid, rng, 1e-4)
            b = _smooth_field(problem.grid, rng, 1e-4)
            ratios.append((problem.T(a) - problem.T(b)).sup_norm() / (a - b).sup_norm())
        kappas.append(max(ratios))
    assert kappas[0] < 1 and kappas[1] < kappas[0]


def test_zero_scale_returns_radial_solution(vp_315):
    phi, report, problem = contraction_solve(P315, DomainMapSpec("bump", 0.0), SMALL, vp=vp_315)
    assert report.iters == 1 and phi.sup_norm() == 0
    assert report.residual_sup <= 1e-7
    assert residual_on_ball(phi, problem) <= 1e-7


def test_reflection_symmetry_kills_odd_modes(vp_315):
    spec = DomainMapSpec("bump", 1e-2, coeffs=(0.2, 0.0, 1.0, 0.0, -0.5))
    phi, report, _ = contraction_solve(P315, spec, SMALL, vp=vp_315)
    assert np.max(np.abs(phi.coeffs[1::2])) <= 1e-9
    assert np.max(np.abs(phi.coeffs[0::2])) > 1e-4


def test_truncation_convergence(vp_315):
    spec = DomainMapSpec("bump", 1e-2)
    mu = np.linspace(-1.0, 1.0, 201)
    phis = [contraction_solve(P315, spec, ContractionOptions(kmax=k, rnodes=256), vp=vp_315)[0]
            for k in (16, 32)]
    # compare on common angles: the collocation angles depend on the truncation
    a, b = (phi.evaluate(mu) for phi in phis)
    assert abs(np.max(np.abs(a)) - np.max(np.abs(b))) <= 1e-7
    assert np.max(np.abs(a - b)) <= 1e-7


def test_radial_refinement_converges(vp_315):
    spec = DomainMapSpec("bump", 1e-2)
    sols = {}
    for n in (128, 256, 512):
        phi, _, problem = contraction_solve(P315, spec, ContractionOptions(kmax=8, rnodes=n), vp=vp_315)
        sols[n] = phi.sup_norm()
    d1, d2 = abs(sols[128] - sols[256]), abs(sols[256] - sols[512])
    assert d2 <= d1 / 3


def test_dilation_matches_scaling(vp_315):
    t = 1e-3
    phi, report, problem = contraction_solve(P315, DomainMapSpec("dilation", t), SMALL, vp=vp_315)
    exact = dilation_correction(vp_315, t, problem.grid.r)
    assert np.max(np.abs(phi.values() - exact[:, None])) <= 1e-6
    assert report.kappa < 1 and report.positive


def test_iteration_cap_raises_with_kappa(vp_315):
    opts = ContractionOptions(kmax=16, rnodes=256, maxiter=2)
    with pytest.raises(ConvergenceError) as info:
        contraction_solve(P315, DomainMapSpec("bump", 1e-2), opts, vp=vp_315)
    assert info.value.kappa is not None and 0 < info.value.kappa < 1


def test_degenerate_exponent_refused():
    opts = ContractionOptions(kmax=16, rnodes=256)
    with pytest.raises(ForbiddenExponentError) as info:
        contraction_solve(ProblemParams(3, 2.02, P2_ALPHA_202), DomainMapSpec("bump", 1e-3), opts)
    assert info.value.mode == 2


def test_rejects_unsupported_geometry(vp_315):
    with pytest.raises(InvalidConfigError):
        PerturbedProblem.build(P315, DomainMapSpec("translation", 1e-2, direction=(1, 0, 0)), vp_315)
    with pytest.raises(InvalidConfigError):
        PerturbedProblem.build(ProblemParams(4, 1.0, 3.0), DomainMapSpec("bump", 1e-2))
