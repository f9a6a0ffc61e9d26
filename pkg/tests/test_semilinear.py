import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from bvplab.grid import build_domain, build_exhaustion
from bvplab.measures import BoundaryMeasure, InteriorMeasure, MeasureCouple
from bvplab.semilinear import (
    SolveOptions,
    boundary_data_vector,
    compare_sub_super,
    exponential_nonlinearity,
    interior_load_vector,
    kato_check,
    linear_nonlinearity,
    make_nonlinearity,
    positive_power_nonlinearity,
    power_nonlinearity,
    reflect,
    representation_residual,
    solve_bvp,
    solve_by_exhaustion,
    truncate,
    zero_nonlinearity,
)

SAMPLES = np.linspace(-4.0, 4.0, 101)


def test_reflect_odd_function_is_identity():
    f = power_nonlinearity(3)
    assert np.allclose(reflect(f)(SAMPLES), f(SAMPLES))


def test_reflect_exponential():
    f = exponential_nonlinearity()
    assert np.allclose(reflect(f)(SAMPLES), 1.0 - np.exp(-SAMPLES))


def test_reflect_is_involution():
    f = positive_power_nonlinearity(2)
    twice = reflect(reflect(f))
    assert np.allclose(twice(SAMPLES), f(SAMPLES))


def test_truncate_clamp_formula():
    f = power_nonlinearity(3)
    f2 = truncate(f, 2.0)
    assert f2(1.5) == pytest.approx(2.0)
    assert f2(-1.5) == pytest.approx(-2.0)
    assert f2(1.0) == pytest.approx(1.0)
    assert float(f2(0.0)) == 0.0
    assert f2.truncation_level == 2.0


def test_truncate_commutes_with_reflect():
    f = exponential_nonlinearity()
    a = reflect(truncate(f, 3.0))
    b = truncate(reflect(f), 3.0)
    assert np.allclose(a(SAMPLES), b(SAMPLES))


def test_truncation_family_is_monotone_in_level():
    f = power_nonlinearity(5)
    t_pos = SAMPLES[SAMPLES >= 0]
    t_neg = SAMPLES[SAMPLES <= 0]
    prev = truncate(f, 1.0)
    for level in (2.0, 4.0, 8.0):
        cur = truncate(f, level)
        assert np.all(cur(t_pos) >= prev(t_pos) - 1e-14)
        assert np.all(cur(t_neg) <= prev(t_neg) + 1e-14)
        prev = cur


def test_truncate_rejects_bad_level():
    with pytest.raises(ValueError):
        truncate(power_nonlinearity(3), 0.0)


def test_validate_flags_zero_and_monotone():
    assert power_nonlinearity(3).validate()
    assert exponential_nonlinearity().validate()
    from bvplab.semilinear import Nonlinearity

    bad = Nonlinearity(fn=lambda t: -np.asarray(t), name="decreasing")
    assert not bad.validate()


def test_make_nonlinearity_registry():
    f = make_nonlinearity("positive_power", p=2.5)
    assert f.vanishes_on_nonpositive
    with pytest.raises(ValueError):
        make_nonlinearity("cubic")


@pytest.fixture(scope="module")
def setup64():
    from bvplab.spectral import build_workspace

    ws = build_workspace(build_domain("interval", 64))
    tau = InteriorMeasure(np.full(ws.domain.n_interior, 0.3), {31: 0.5})
    nu = BoundaryMeasure(np.array([0.8, 0.4]))
    return ws, tau, nu


def test_zero_nonlinearity_solves_in_one_iteration(setup64):
    ws, tau, nu = setup64
    res = solve_bvp(ws, zero_nonlinearity(), tau, nu)
    assert res.converged
    assert res.iterations == 1
    assert np.allclose(res.u, ws.linear_solution(tau, nu))


def test_linear_nonlinearity_matches_direct_solve(setup64):
    # independent oracle: direct sparse solve of the shifted operator
    ws, tau, nu = setup64
    res = solve_bvp(ws, linear_nonlinearity(), tau, nu)
    A = ws.operator.matrix
    rhs = interior_load_vector(ws, tau) + ws.operator.boundary_coupling @ boundary_data_vector(ws, nu)
    direct = spla.spsolve((A + sp.eye(A.shape[0])).tocsc(), rhs)
    assert res.converged
    assert np.max(np.abs(res.u - direct)) < 1e-8


def test_bounded_nonlinearity_always_converges(setup64):
    ws, tau, nu = setup64
    res = solve_bvp(ws, truncate(power_nonlinearity(5), 3.0), tau, nu)
    assert res.converged
    assert res.residual <= 1e-9


def test_representation_residual_of_converged_solves(setup64):
    ws, tau, nu = setup64
    for f in (positive_power_nonlinearity(3), exponential_nonlinearity()):
        res = solve_bvp(ws, f, tau, nu)
        assert res.converged
        assert representation_residual(ws, res.u, f, tau, nu) <= 1e-9


def test_solver_uniqueness_across_damping(setup64):
    ws, tau, nu = setup64
    f = positive_power_nonlinearity(3)
    res_a = solve_bvp(ws, f, tau, nu, SolveOptions(theta=0.5))
    res_b = solve_bvp(
        ws, f, tau, nu, SolveOptions(theta=0.25, start=np.zeros(ws.domain.n_interior))
    )
    assert res_a.converged and res_b.converged
    scale = np.max(np.abs(res_a.u))
    assert np.max(np.abs(res_a.u - res_b.u)) <= 10 * 1e-9 * scale


def test_comparison_of_ordered_data(setup64):
    ws, tau, nu = setup64
    f = positive_power_nonlinearity(3)
    res_small = solve_bvp(ws, f, 0.5 * tau, 0.5 * nu)
    res_big = solve_bvp(ws, f, tau, nu)
    assert np.all(res_small.u <= res_big.u + 1e-9)


def test_divergence_is_reported_not_raised(setup64):
    ws, _, nu = setup64
    huge = InteriorMeasure(np.full(ws.domain.n_interior, 500.0))
    res = solve_bvp(
        ws, exponential_nonlinearity(), huge, nu,
        SolveOptions(max_iter=2000, secant_fallback=False),
    )
    assert not res.converged
    assert res.diverged
    assert res.message


def test_compare_sub_super_examples(setup64):
    ws, tau, nu = setup64
    f = positive_power_nonlinearity(3)
    res = solve_bvp(ws, f, tau, nu)
    zero_field = np.zeros(ws.domain.n_interior)
    zero_data = MeasureCouple(ws.zero_interior(), ws.zero_boundary())
    data = MeasureCouple(tau, nu)
    assert compare_sub_super(ws, f, zero_field, zero_data, res.u, data)
    assert compare_sub_super(ws, f, res.u, data, res.u, data)

    # Successive truncation levels: deeper level lies below
    res_lo = solve_bvp(ws, truncate(f, 2.0), tau, nu)
    res_hi = solve_bvp(ws, truncate(f, 1.0), tau, nu)
    assert compare_sub_super(ws, truncate(f, 1.0), res_lo.u, data, res_hi.u, data)


def test_compare_sub_super_rejects_false_certificate(setup64):
    ws, tau, nu = setup64
    f = positive_power_nonlinearity(3)
    res = solve_bvp(ws, f, tau, nu)
    zero_data = MeasureCouple(ws.zero_interior(), ws.zero_boundary())
    with pytest.raises(ValueError):
        # claiming the solution is a subsolution of the zero problem is false
        compare_sub_super(ws, f, res.u, zero_data, np.zeros_like(res.u), zero_data)


def test_kato_one_signed_fields_have_zero_gap(setup64):
    ws, _, _ = setup64
    u = np.abs(np.sin(np.linspace(0, 3, ws.domain.n_interior)))
    assert kato_check(ws, u)["worst_violation"] == 0.0
    assert kato_check(ws, -u)["worst_violation"] == 0.0


def test_kato_random_fields_vs_bruteforce(setup64, rng):
    ws, _, _ = setup64
    A = ws.operator.matrix.toarray()
    for _ in range(25):
        w = rng.standard_normal(ws.domain.n_interior)
        out = kato_check(ws, w)
        assert out["worst_violation"] <= 0.0
        w_pos = np.maximum(w, 0.0)
        sign = (w > 0).astype(float)
        brute = A @ w_pos - sign * (A @ w)
        assert abs(np.max(brute) - out["worst_violation"]) <= 1e-9


def test_exhaustion_linear_case_matches_direct(setup64):
    ws, tau, nu = setup64
    ex = build_exhaustion(ws.domain, 6)
    w_sup = ws.linear_solution(tau, nu)
    out = solve_by_exhaustion(
        ws, zero_nonlinearity(), tau, w_sup, ex, boundary_data=nu
    )
    direct = solve_bvp(ws, zero_nonlinearity(), tau, nu)
    scale = np.max(np.abs(direct.u))
    assert np.max(np.abs(out.u - direct.u)) <= 1e-6 * scale
    assert out.covers_interior


def test_exhaustion_levels_decrease(setup64):
    ws, tau, nu = setup64
    ex = build_exhaustion(ws.domain, 6)
    f = truncate(positive_power_nonlinearity(3), 4.0)
    out = solve_by_exhaustion(
        ws, f, tau, ws.linear_solution(tau, nu), ex, boundary_data=nu
    )
    assert out.monotone_ok
    assert all(lv.converged for lv in out.per_level)


def test_exhaustion_zero_data(setup64):
    ws, _, _ = setup64
    ex = build_exhaustion(ws.domain, 4)
    out = solve_by_exhaustion(
        ws,
        positive_power_nonlinearity(3),
        ws.zero_interior(),
        np.zeros(ws.domain.n_interior),
        ex,
        boundary_data=ws.zero_boundary(),
    )
    assert np.max(np.abs(out.u)) == 0.0


def test_interior_gradient_stays_bounded_across_truncations(setup64):
    # local regularity proxy: the discrete gradient's L^1.2 norm on a fixed
    # interior core does not grow along the truncation ladder
    ws, tau, nu = setup64
    f = positive_power_nonlinearity(3)
    core = ws.domain.delta > ws.domain.inradius / 4.0
    norms = []
    u_prev = None
    for level in (1.0, 4.0, 16.0, 64.0, 256.0):
        res = solve_bvp(ws, truncate(f, level), tau, nu, SolveOptions(start=u_prev))
        grad = np.diff(res.u) / ws.domain.h
        mid = core[:-1] & core[1:]
        norms.append((np.sum(np.abs(grad[mid]) ** 1.2) * ws.domain.h) ** (1 / 1.2))
        u_prev = res.u
    assert max(norms) <= 1.5 * min(norms)


def test_make_nonlinearity_applies_truncation_param():
    f = make_nonlinearity("power", p=3.0, truncation_level=2.0)
    assert f.truncation_level == 2.0
    assert float(f(10.0)) == 2.0
