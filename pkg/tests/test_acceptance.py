"""Acceptance criteria, one test (or a pass/fail pair of parts) per criterion.

Every test prints an ``ACCEPTANCE <id> PASS|FAIL`` line with the measured
numbers and the pinned tolerance; the lines are repeated in the pytest
terminal summary. Criteria that the implementation does not meet are marked
``xfail(strict=True)`` so they stay visible and flip loudly if they ever pass.

``TONEWTON_ACCEPTANCE_RES`` lowers the fractal resolution (default 400).
"""

import os
import time

import numpy as np
import pytest

from tonewton.cli import BenchSuite, run_suite
from tonewton.cubic_localmin import Outcome, find_local_min
from tonewton.cubic_model import CubicModel, UnivariateCubic, symmetrize_tensor, univariate_local_min
from tonewton.fractal import FractalSpec, render, write_image
from tonewton.objectives import TABLE_OBJECTIVES, cubic_objective, get_objective, quartic
from tonewton.optimizers import (
    OptimizerConfig, estimate_convergence_order, second_order_newton, third_order_newton,
)
from tonewton.sdp_solver import SolverStatus, solve

from conftest import report
from fd import derivative_errors
from sdp_instances import constructed_instance, independent_check

RES = int(os.environ.get("TONEWTON_ACCEPTANCE_RES", "400"))


# ---------------------------------------------------------------- 1

def test_1_univariate_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    disagree, exist, worst = 0, 0, 0.0
    for _ in range(200):
        a, b, c = rng.uniform(-3, 3, 3)
        u = UnivariateCubic(a, b, c)
        expected = univariate_local_min(u)
        r = find_local_min(u.to_model())
        found = r.outcome == Outcome.LOCAL_MIN
        if found != (expected is not None):
            disagree += 1
        elif found:
            exist += 1
            worst = max(worst, abs(r.point[0] - expected))
    dt = time.perf_counter() - t0
    ok = disagree == 0 and worst <= 1e-6 and dt < 30
    report("1", ok, f"200 cubics, {exist} with a minimum, existence mismatches={disagree}, "
                    f"max location error={worst:.1e} (tol 1e-6), {dt:.1f}s (limit 30s)")
    assert ok


# ---------------------------------------------------------------- 2

def test_2_derivatives():
    rng = np.random.default_rng(99)
    t0 = time.perf_counter()
    worst = {}
    for name in TABLE_OBJECTIVES:
        f = get_objective(name)
        (x0, x1), (y0, y1) = f.window
        errs = [derivative_errors(f, np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])) for _ in range(20)]
        worst[name] = float(np.max(errs))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-5 and dt < 5
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report("2", ok, f"max relative error over 20 window points: {detail} (tol 1e-5), {dt:.2f}s (limit 5s)")
    assert ok


# ---------------------------------------------------------------- 3

# Cases outside their band. Each one is analysed in the decisions ledger;
# the list guards against silent regressions of the other rows.
KNOWN_BENCH_MISSES = {
    ("bohachevsky", "newton2", (0.15, 0.0)),
    ("mccormick", "gd-qfit", (0.0, -1.0)),
    ("beale", "gd-qfit", (2.8, 0.2)),
    ("beale", "gd-qfit", (3.0, 0.2)),
    ("beale", "gd-qfit", (3.2, 0.4)),
    ("himmelblau", "gd-qfit", (4.0, 1.5)),
    ("himmelblau", "gd:0.02", (2.0, 1.0)),
    ("himmelblau", "gd:0.02", (4.0, 1.5)),
    ("himmelblau", "gd:0.02", (4.0, 3.0)),
    ("himmelblau", "gd:0.02", (3.0, 3.5)),
    ("himmelblau", "gd:0.015", (2.0, 1.0)),
    ("himmelblau", "gd:0.015", (4.0, 3.0)),
    ("himmelblau", "gd:0.015", (3.0, 3.5)),
}


@pytest.fixture(scope="module")
def bench():
    t0 = time.perf_counter()
    outcomes = run_suite(BenchSuite.load("paper"))
    return outcomes, time.perf_counter() - t0


def _key(o):
    return (o.case.objective, o.case.optimizer_label, tuple(o.case.x0))


@pytest.mark.xfail(strict=True, reason="13 of 108 table cases miss their band; see the decisions ledger")
def test_3_table_reproduction(bench):
    outcomes, dt = bench
    missed = [o for o in outcomes if not o.within_band]
    newton = [o for o in outcomes if o.case.band == "newton"]
    ok = not missed and dt < 600
    report("3", ok, f"{len(outcomes) - len(missed)}/{len(outcomes)} cases within band "
                    f"(newton-type {sum(o.within_band for o in newton)}/{len(newton)}), "
                    f"bands newton +-2, gd +-max(3,15%), qfit +-50%, {dt:.1f}s (limit 600s)")
    for o in missed:
        print(f"  miss {o.case.objective} {o.case.optimizer_label} x0={o.case.x0} "
              f"iters={o.iterations} expected={o.case.expected_label}")
    assert ok


def test_3_only_documented_cases_miss(bench):
    outcomes, _ = bench
    missed = {_key(o) for o in outcomes if not o.within_band}
    assert missed <= KNOWN_BENCH_MISSES, missed - KNOWN_BENCH_MISSES


# ---------------------------------------------------------------- 4

@pytest.fixture(scope="module")
def orders():
    f = quartic()
    cfg = OptimizerConfig(eps=1e-15, max_iters=40)
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    out = []
    for _ in range(10):
        ang, r = rng.uniform(0, 2 * np.pi), rng.uniform(0.25, 0.5)
        x0 = r * np.array([np.cos(ang), np.sin(ang)])
        q3 = estimate_convergence_order(third_order_newton(f, x0, cfg), f.global_minimum)
        q2 = estimate_convergence_order(second_order_newton(f, x0, cfg), f.global_minimum)
        out.append((q3, q2))
    return np.array(out), time.perf_counter() - t0


def test_4_third_order_is_cubic(orders):
    q, dt = orders
    ok = bool(np.all((q[:, 0] >= 2.4) & (q[:, 0] <= 3.6)) and np.all(q[:, 1] < q[:, 0])) and dt < 60
    report("4a", ok, f"third-order order on x^4+y^4+x^2+y^2, 10 starts with 0.25<=|x0|<=0.5: "
                     f"{q[:, 0].min():.2f}..{q[:, 0].max():.2f} (band [2.4, 3.6]); "
                     f"second-order below it on every start: {bool(np.all(q[:, 1] < q[:, 0]))}, {dt:.2f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="the minimizer has zero third derivatives, so plain Newton "
                                       "converges cubically there too; see the decisions ledger")
def test_4_second_order_is_quadratic(orders):
    q, _ = orders
    ok = bool(np.all((q[:, 1] >= 1.5) & (q[:, 1] <= 2.5)))
    report("4b", ok, f"second-order order on the same starts: {q[:, 1].min():.2f}..{q[:, 1].max():.2f} "
                     f"(band [1.5, 2.5])")
    assert ok


def test_4_second_order_is_quadratic_in_the_generic_case():
    # supplementary: a linear term moves the minimizer where the third derivative is nonzero
    f = quartic((1.0, 1.0))
    cfg = OptimizerConfig(eps=1e-15, max_iters=40)
    rng = np.random.default_rng(4)
    q = []
    for _ in range(10):
        # farther starts than above: near this minimizer both methods need more
        # steps before the error drops under 1e-13
        ang, r = rng.uniform(0, 2 * np.pi), rng.uniform(0.5, 1.0)
        x0 = f.global_minimum + r * np.array([np.cos(ang), np.sin(ang)])
        q.append((estimate_convergence_order(third_order_newton(f, x0, cfg), f.global_minimum),
                  estimate_convergence_order(second_order_newton(f, x0, cfg), f.global_minimum)))
    q = np.array(q)
    ok = bool(np.all((q[:, 1] >= 1.5) & (q[:, 1] <= 2.5)) and np.all((q[:, 0] >= 2.4) & (q[:, 0] <= 3.6)))
    report("4s", ok, f"supplementary, minimizer with nonzero third derivative: second-order "
                     f"{q[:, 1].min():.2f}..{q[:, 1].max():.2f} (band [1.5, 2.5]), third-order "
                     f"{q[:, 0].min():.2f}..{q[:, 0].max():.2f} (band [2.4, 3.6])")
    assert ok


# ---------------------------------------------------------------- 5

def _strongly_convex_cubic(rng, n, box=1.0):
    """Random cubic whose Hessian is positive definite on [-box, box]^n, with a minimizer inside."""
    while True:
        H = 0.5 * symmetrize_tensor(rng.normal(size=(n, n, n)))
        A = rng.normal(size=(n, n))
        Q = A @ A.T + (1.0 + np.abs(H).sum(axis=0).max()) * np.eye(n) * box
        # the smallest Hessian eigenvalue is concave in x, so checking the vertices covers the box
        vertices = np.array(np.meshgrid(*[[-box, box]] * n)).reshape(n, -1).T
        if min(np.linalg.eigvalsh(Q + np.tensordot(v, H, axes=1))[0] for v in vertices) <= 0:
            continue
        x_star = rng.uniform(-0.5 * box, 0.5 * box, n)
        b = -(0.5 * np.einsum("i,ijk,k->j", x_star, H, x_star) + Q @ x_star)
        return CubicModel(H, Q, b), x_star


def test_5_one_step_exactness():
    rng = np.random.default_rng(55)
    t0 = time.perf_counter()
    counts, errs = [], []
    for k in range(50):
        m, x_star = _strongly_convex_cubic(rng, 2 + k % 2)
        x0 = rng.uniform(-1, 1, m.n)
        t = third_order_newton(cubic_objective(m), x0)
        counts.append(t.iterations if t.converged else -1)
        errs.append(np.linalg.norm(t.x_final - x_star))
    dt = time.perf_counter() - t0
    ok = all(c == 1 for c in counts) and dt < 60
    report("5", ok, f"50 strongly convex cubics (n=2,3): {counts.count(1)}/50 converged in exactly 1 "
                    f"iteration, max distance to minimizer {max(errs):.1e}, {dt:.2f}s (limit 60s)")
    assert ok


# ---------------------------------------------------------------- 6

def test_6_sdp_soundness():
    rng = np.random.default_rng(66)
    t0 = time.perf_counter()
    worst, optimal, verified = 0.0, 0, 0
    for _ in range(50):
        p, opt, _ = constructed_instance(rng)
        sol = solve(p)
        if sol.status == SolverStatus.OPTIMAL:
            optimal += 1
            verified += independent_check(p, sol)
        worst = max(worst, abs(sol.objective_value - opt) / max(1.0, abs(opt)))
    dt = time.perf_counter() - t0
    ok = optimal == 50 and verified == 50 and worst <= 1e-6 and dt < 60
    report("6", ok, f"50 constructed SDPs: {optimal} Optimal, {verified} pass independent residual/eigenvalue "
                    f"checks (tol 1e-6), max objective error {worst:.1e} (tol 1e-6), {dt:.2f}s (limit 60s)")
    assert ok


# ---------------------------------------------------------------- 7

# McCormick's table starts (-3, 1) and (2, -4) lie outside its default window
CONSISTENCY_WINDOWS = {"mccormick": ((-4.0, 4.0), (-4.0, 4.0))}

_renders = {}


def _render(objective, optimizer, shift=0.0):
    key = (objective, optimizer, shift)
    if key not in _renders:
        spec = FractalSpec(objective, optimizer, shift=shift, resolution=(RES, RES),
                           window=CONSISTENCY_WINDOWS.get(objective))
        t0 = time.perf_counter()
        _renders[key] = (render(spec), time.perf_counter() - t0)
    return _renders[key]


def test_7_determinism(tmp_path):
    img, dt = _render("himmelblau", "ton")
    again = render(img.spec)
    a = write_image(img, tmp_path / "a.ppm")
    b = write_image(again, tmp_path / "b.ppm")
    same = all(open(x, "rb").read() == open(y, "rb").read() for x, y in zip(a, b))
    report("7a", same, f"Himmelblau third-order {RES}x{RES}: PPM, label CSV and catalogue byte-identical "
                       f"across two renders ({dt:.1f}s per render)")
    assert same


def test_7_shift_monotone():
    counts = [int(np.sum(_render("himmelblau", "ton", s)[0].labels != -1)) for s in (0.0, 5.0, 10.0)]
    ok = counts[1] >= 0.98 * counts[0] and counts[2] >= 0.98 * counts[1]
    report("7b", ok, f"Himmelblau converged pixels for shift 0/5/10: {counts[0]}/{counts[1]}/{counts[2]} "
                     f"of {RES * RES} (non-decreasing within 2%)")
    assert ok


def _table_starts():
    """Newton-type table starts expected to reach the global minimum, per (objective, optimizer)."""
    out = {}
    for c in BenchSuite.load("paper").cases:
        if c.optimizer in ("ton", "newton2") and not c.at_least:
            out.setdefault((c.objective, c.optimizer), []).append(c.x0)
    return out


def _consistency(starts):
    bad = []
    for objective, optimizer, x0 in starts:
        label = _render(objective, optimizer)[0].label_at(x0)
        if label != 0:
            bad.append((objective, optimizer, x0, label))
    return bad


# Himmelblau third-order from (3, 3.5): the unshifted model there has no
# second-order point (its SDP is infeasible), so the pixel is -1.
HIMMELBLAU_EXCEPTION = ("himmelblau", "ton", (3.0, 3.5))
# Bohachevsky second-order from (0.15, 0) itself reaches another critical
# point; nearby pixel centers land on (0, 0) or elsewhere depending on the
# resolution, so this start is only checked at the criterion's 400x400.
SENSITIVE_START = ("bohachevsky", "newton2", (0.15, 0.0))


def _all_starts():
    return [(obj, opt, x0) for (obj, opt), xs in sorted(_table_starts().items()) for x0 in xs]


def test_7_table_consistency():
    starts = [s for s in _all_starts() if s != HIMMELBLAU_EXCEPTION and (RES >= 400 or s != SENSITIVE_START)]
    bad = _consistency(starts)
    note = "incl." if SENSITIVE_START in starts else "excl."
    report("7c", not bad, f"{len(starts) - len(bad)}/{len(starts)} convergent Newton table starts land on the "
                          f"global-minimum label at {RES}x{RES} ({note} the resolution-sensitive Bohachevsky "
                          f"second-order (0.15, 0); Himmelblau third-order (3, 3.5) in 7d)")
    assert not bad, bad


@pytest.mark.xfail(strict=True, reason="(3, 3.5) needs the shifted model; see the decisions ledger")
def test_7_table_consistency_himmelblau_third_order():
    bad = _consistency([HIMMELBLAU_EXCEPTION])
    report("7d", not bad, f"Himmelblau third-order pixel of (3, 3.5): label "
                          f"{_render('himmelblau', 'ton')[0].label_at((3.0, 3.5))} (want 0)")
    assert not bad


def test_7_runtime():
    total = sum(dt for _, dt in _renders.values())
    limit = 900 * (RES / 400) ** 2
    ok = total < limit
    report("7e", ok, f"{len(_renders)} renders at {RES}x{RES} took {total:.0f}s (limit {limit:.0f}s)")
    assert ok
