import numpy as np
import pytest

from tonewton.cubic_model import CubicModel, UnivariateCubic, eval, symmetrize_tensor, univariate_local_min
from tonewton.cubic_localmin import (
    DEFAULT_SHIFTS, LocalMinConfig, Outcome, build_sdp, find_local_min, find_local_min_batch,
    find_local_min_with_shift, variable_layout, verify_point,
)
from tonewton.sdp_solver import SolverStatus


def univariate(a, b, c):
    """a*x^3 + b*x^2 + c*x as a model."""
    return UnivariateCubic(a, b, c).to_model()


def test_convex_quadratic():
    r = find_local_min(CubicModel.quadratic(np.eye(2), [1.0, 1.0]))
    assert r.outcome == Outcome.LOCAL_MIN
    assert np.allclose(r.point, [-1.0, -1.0], atol=1e-8)
    assert r.shift_used == 0.0


def test_univariate_example():
    r = find_local_min(univariate(1 / 6, 0.0, -1.0))
    assert r.outcome == Outcome.LOCAL_MIN
    assert r.point[0] == pytest.approx(np.sqrt(2.0), abs=1e-8)


def test_no_critical_point():
    r = find_local_min(univariate(1.0, 0.0, 1.0))
    assert r.outcome == Outcome.NO_SECOND_ORDER_POINT
    assert r.point is None and not r.has_point


def test_shift_rescues_missing_minimum():
    m = univariate(1.0, 0.0, 1.0)
    r = find_local_min_with_shift(m, (0.0, 5.0))
    assert r.has_point and r.shift_used == 5.0
    # shifted cubic x^3 + 5/2 x^2 + x has its minimum at (-5 + sqrt(13)) / 6
    assert r.point[0] == pytest.approx((-5 + np.sqrt(13.0)) / 6, abs=1e-7)
    assert find_local_min_with_shift(m, (0.0,)).outcome == Outcome.NO_SECOND_ORDER_POINT


def test_first_shift_used_when_it_succeeds():
    r = find_local_min_with_shift(CubicModel.quadratic(np.eye(2), [1.0, 0.0]), DEFAULT_SHIFTS)
    assert r.shift_used == 0.0 and r.outcome == Outcome.LOCAL_MIN


@pytest.mark.parametrize("shifts", [(), (5.0,), (0.0, -1.0)])
def test_invalid_shift_ladders(shifts):
    with pytest.raises(ValueError):
        find_local_min_with_shift(univariate(1.0, 0.0, 1.0), shifts)


def test_sdp_shape_for_one_variable():
    p = build_sdp(univariate(1.0, 0.5, -1.0))
    assert p.block_sizes == [2, 2]
    assert p.free_dim == 3  # x, y, X
    assert len(p.eq_constraints) == 1
    p.validate()


def test_sdp_first_block_is_q_for_quadratics():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    p = build_sdp(CubicModel.quadratic(Q, [1.0, 0.0]))
    assert np.array_equal(p.blocks[0].F0[:2, :2], Q)


def test_hand_built_feasible_point_satisfies_constraints(rng):
    # at a true local minimum x, (x, y, X = x x^T) with y = -(b + Qx)^T x ... is
    # feasible and attains phi = 0; check every constraint directly
    H = symmetrize_tensor(rng.normal(size=(2, 2, 2)))
    x = rng.normal(size=2)
    Q = 5.0 * np.eye(2) - np.tensordot(x, H, axes=1)  # Hessian at x is 5 I
    b = -(0.5 * np.einsum("i,ijk,k->j", x, H, x) + Q @ x)  # gradient at x is 0
    m = CubicModel(H, Q, b)
    p = build_sdp(m)
    ix, iy, iX = variable_layout(2)
    X = np.outer(x, x)
    v = np.zeros(p.free_dim)
    v[ix] = x
    for (a, c), k in iX.items():
        v[k] = X[a, c]
    # y closes the gap: phi = 1/2 <Q, X> + b.x + y/2 = 0
    v[iy] = -2.0 * (0.5 * np.sum(Q * X) + b @ x)
    for g, r in p.eq_constraints:
        assert abs(sum(c * v[k] for k, c in g.free.items()) - r) <= 1e-9
    for blk in p.blocks:
        assert np.linalg.eigvalsh(blk.evaluate(v))[0] >= -1e-9
    assert abs(sum(c * v[k] for k, c in p.objective.free.items())) <= 1e-9
    r = find_local_min(m)
    assert r.outcome == Outcome.LOCAL_MIN
    assert np.allclose(r.point, x, atol=1e-6)


def test_univariate_oracle_on_random_cubics():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a, b, c = rng.uniform(-2, 2, 3)
        expected = univariate_local_min(UnivariateCubic(a, b, c))
        r = find_local_min(univariate(a, b, c), LocalMinConfig(iterate_as_sop=False))
        assert r.has_point == (expected is not None)
        if expected is not None:
            assert r.point[0] == pytest.approx(expected, abs=1e-6)


def test_two_dimensional_grid_oracle():
    """No grid point within 0.1 of a returned local minimum has a smaller value."""
    rng = np.random.default_rng(11)
    g = np.arange(-0.1, 0.1 + 5e-4, 1e-3)
    GX, GY = np.meshgrid(g, g)
    inside = GX ** 2 + GY ** 2 <= 0.01
    checked = 0
    while checked < 50:
        H = symmetrize_tensor(rng.normal(size=(2, 2, 2)))
        A = rng.normal(size=(2, 2))
        m = CubicModel(H, A + A.T, rng.normal(size=2))
        r = find_local_min(m)
        if r.outcome != Outcome.LOCAL_MIN:
            continue
        checked += 1
        x = r.point
        dx, dy = GX[inside], GY[inside]
        pts = np.stack([x[0] + dx, x[1] + dy], axis=1)
        Hx = np.einsum("pi,ijk->pjk", pts, m.H)
        vals = (np.einsum("pj,pjk,pk->p", pts, Hx, pts) / 6 + 0.5 * np.einsum("pj,jk,pk->p", pts, m.Q, pts)
                + pts @ m.b)
        # second-order growth bounds the grid error at the center's neighbours
        assert vals.min() >= eval(m, x) - 1e-10 * max(1.0, abs(eval(m, x)))


def test_phi_is_nonnegative_up_to_tolerance(rng):
    for _ in range(30):
        H = symmetrize_tensor(rng.normal(size=(2, 2, 2)))
        A = rng.normal(size=(2, 2))
        r = find_local_min(CubicModel(H, A + A.T, rng.normal(size=2)))
        if r.solver_status == SolverStatus.OPTIMAL:
            assert r.phi_value >= -1e-6


def test_strict_mode_reports_missing_point_instead_of_iterate():
    # random cubics whose SDP solves with phi > 0 have no second-order point;
    # the default reports the SDP iterate, strict mode reports nothing
    rng = np.random.default_rng(3)
    seen = 0
    for _ in range(100):
        H = symmetrize_tensor(rng.normal(size=(2, 2, 2)))
        A = rng.normal(size=(2, 2))
        m = CubicModel(H, A + A.T, rng.normal(size=2))
        loose = find_local_min(m)
        strict = find_local_min(m, LocalMinConfig(iterate_as_sop=False))
        if loose.has_point and loose.phi_value > 1e-6:
            seen += 1
            assert strict.outcome == Outcome.NO_SECOND_ORDER_POINT
            assert loose.outcome == Outcome.SECOND_ORDER_POINT
        if strict.has_point:
            gn, lmin = verify_point(m, strict.point)
            assert gn <= 1e-6 and lmin >= -1e-7
    assert seen >= 5


def test_batch_matches_single_calls(rng):
    models = []
    for _ in range(12):
        H = symmetrize_tensor(rng.normal(size=(2, 2, 2)))
        A = rng.normal(size=(2, 2))
        models.append(CubicModel(H, A + A.T, rng.normal(size=2)))
    batch = find_local_min_batch([m.H for m in models], [m.Q for m in models], [m.b for m in models])
    for k, m in enumerate(models):
        r = find_local_min_with_shift(m)
        assert batch.outcome[k] == r.outcome
        assert batch.shift_used[k] == r.shift_used
        if r.has_point:
            assert np.array_equal(batch.points[k], r.point)


def test_reported_diagnostics_match_direct_check(rng):
    for _ in range(20):
        H = symmetrize_tensor(rng.normal(size=(2, 2, 2)))
        A = rng.normal(size=(2, 2))
        m = CubicModel(H, A + A.T, rng.normal(size=2))
        r = find_local_min(m)
        if r.has_point:
            gn, lmin = verify_point(m, r.point)
            assert r.grad_norm_at_point == pytest.approx(gn, rel=1e-6, abs=1e-12)
            assert r.hess_min_eig_at_point == pytest.approx(lmin, rel=1e-6, abs=1e-12)
            if r.outcome == Outcome.LOCAL_MIN:
                assert gn <= 1e-6 and lmin >= 1e-7
