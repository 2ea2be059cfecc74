"""Third-order Newton and the comparison methods.

All optimizers share one stopping rule: stop ``Converged`` as soon as
``||grad f(x_k)|| <= eps``, ``MaxIterations`` after ``max_iters`` steps or when
an iterate leaves the ball of radius ``divergence_bound`` (or is not finite),
and ``StepFailed`` when a step cannot be computed. The iteration count is the
number of steps taken.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .cubic_localmin import (
    DEFAULT_SHIFTS, LocalMinConfig, Outcome, find_local_min_batch, find_local_min_with_shift,
)
from .cubic_model import symmetrize_tensor, taylor3
from .objectives import Objective


class Termination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    STEP_FAILED = "StepFailed"


TERMINATION_CODES = {Termination.CONVERGED: 0, Termination.MAX_ITERATIONS: 1,
                     Termination.STEP_FAILED: 2}


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by all optimizers; fields a method does not use are ignored.

    ``shifts`` is the identity-shift ladder of the third-order method. ``initial_step`` and ``armijo`` drive the quadratic-fit line
    search.
    """

    eps: float = 1e-6
    max_iters: int = 1000
    step_size: Optional[float] = None
    shifts: Tuple[float, ...] = DEFAULT_SHIFTS
    accept_second_order_points: bool = True
    divergence_bound: float = 1e8
    cond_limit: float = 1e14
    initial_step: float = 1.0
    armijo: float = 1e-4
    localmin: LocalMinConfig = field(default_factory=LocalMinConfig)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step size must be positive")
        object.__setattr__(self, "shifts", tuple(float(s) for s in self.shifts))


@dataclass
class OptimizerTrace:
    objective: str
    optimizer: str
    iterates: List[np.ndarray] = field(default_factory=list)
    f_values: List[float] = field(default_factory=list)
    grad_norms: List[float] = field(default_factory=list)
    annotations: List[str] = field(default_factory=list)
    termination: Optional[Termination] = None
    message: str = ""

    def record(self, x, fx, gn, note: str = "") -> None:
        self.iterates.append(np.array(x, dtype=float))
        self.f_values.append(float(fx))
        self.grad_norms.append(float(gn))
        self.annotations.append(note)

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    @property
    def x_final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def grad_norm_final(self) -> float:
        return self.grad_norms[-1]

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    def write_csv(self, path) -> None:
        n = self.iterates[0].size if self.iterates else 0
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["iter"] + [f"x{i}" for i in range(n)] + ["f", "grad_norm", "annotation"])
                for k, (x, fx, gn, note) in enumerate(zip(self.iterates, self.f_values,
                                                         self.grad_norms, self.annotations)):
                    w.writerow([k] + [repr(float(v)) for v in x] + [repr(fx), repr(gn), note])
        except OSError as exc:
            raise OSError(f"cannot write trace to {path}: {exc}") from exc


StepFn = Callable[[np.ndarray, np.ndarray], Tuple[Optional[np.ndarray], str]]


def _run(f: Objective, x0, cfg: OptimizerConfig, name: str, step: StepFn) -> OptimizerTrace:
    trace = OptimizerTrace(f.name, name)
    x = np.array(x0, dtype=float).reshape(-1)
    if x.size != f.dimension:
        raise ValueError(f"x0 must have dimension {f.dimension}")
    g = f.gradient(x)
    trace.record(x, f.value(x), np.linalg.norm(g), "start")
    while True:
        if trace.grad_norms[-1] <= cfg.eps:
            trace.termination = Termination.CONVERGED
            break
        if trace.iterations >= cfg.max_iters:
            trace.termination = Termination.MAX_ITERATIONS
            break
        x_new, note = step(x, g)
        if x_new is None:
            trace.termination = Termination.STEP_FAILED
            trace.message = note
            break
        x = x_new
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > cfg.divergence_bound:
            trace.record(x, np.nan, np.nan, note + " diverged")
            trace.termination = Termination.MAX_ITERATIONS
            trace.message = "iterate left the divergence bound"
            break
        g = f.gradient(x)
        trace.record(x, f.value(x), np.linalg.norm(g), note)
    return trace


def third_order_newton(f: Objective, x0, cfg: OptimizerConfig = OptimizerConfig()) -> OptimizerTrace:
    """Move to the local minimum of the third-order Taylor model at each step."""

    def step(x, g):
        res = find_local_min_with_shift(taylor3(f, x), cfg.shifts, cfg.localmin)
        note = f"shift={res.shift_used:g} outcome={res.outcome.name} phi={res.phi_value:.3e}"
        ok = res.outcome is Outcome.LOCAL_MIN or (
            res.outcome is Outcome.SECOND_ORDER_POINT and cfg.accept_second_order_points)
        return (x + res.point, note) if ok else (None, note)

    return _run(f, x0, cfg, "ton", step)


def second_order_newton(f: Objective, x0, cfg: OptimizerConfig = OptimizerConfig()) -> OptimizerTrace:
    """Undamped Newton: x - H^{-1} g; fails on a (numerically) singular Hessian."""

    def step(x, g):
        Hm = f.hessian(x)
        cond = np.linalg.cond(Hm)
        if not np.isfinite(cond) or cond > cfg.cond_limit:
            return None, f"singular hessian cond={cond:.3e}"
        return x - np.linalg.solve(Hm, g), ""

    return _run(f, x0, cfg, "newton2", step)


def gradient_descent_fixed(f: Objective, x0, cfg: OptimizerConfig) -> OptimizerTrace:
    """x - c * grad f(x) with ``c = cfg.step_size``."""
    if cfg.step_size is None:
        raise ValueError("fixed-step gradient descent needs cfg.step_size")
    c = cfg.step_size
    return _run(f, x0, cfg, "gd", lambda x, g: (x - c * g, ""))


def gradient_descent_quadratic_fit(f: Objective, x0, cfg: OptimizerConfig = OptimizerConfig()) -> OptimizerTrace:
    """Steepest descent with a three-point quadratic-fit line search.

    Along ``d = -g`` the step ``s`` (persisting across iterations, starting at
    ``cfg.initial_step``) is halved until ``f(x + s d) <= f(x) - armijo*s*|g|^2``
    and doubled for the next iteration when the first trial already passes.
    The step moves to the vertex of the quadratic through ``t = 0, s, 2s``
    when its curvature is positive and the vertex does not increase ``f``;
    otherwise to the better sample. Every step therefore descends.
    """
    state = {"s": float(cfg.initial_step)}

    def step(x, g):
        s = state["s"]
        d = -g
        gg = float(g @ g)
        f0 = float(f.value(x))
        first = True
        for _ in range(60):
            f1 = float(f.value(x + s * d))
            if f1 <= f0 - cfg.armijo * s * gg:
                break
            s *= 0.5
            first = False
        else:
            return x, f"armijo failed s={s:.3e}"
        f2 = float(f.value(x + 2 * s * d))
        curv = (f0 - 2 * f1 + f2) / (2 * s * s)
        t, kind = (s, "sample") if f1 <= f2 else (2 * s, "sample")
        if curv > 0:
            # f1 < f0 puts the vertex beyond s/2
            tv = -(-3 * f0 + 4 * f1 - f2) / (2 * s) / (2 * curv)
            if f.value(x + tv * d) <= f0:
                t, kind = tv, "vertex"
        state["s"] = 2 * s if first else s
        return x + t * d, f"t={t:.6g} s={s:.6g} {kind}"

    return _run(f, x0, cfg, "gd-qfit", step)


OPTIMIZERS = {
    "ton": third_order_newton,
    "newton2": second_order_newton,
    "gd": gradient_descent_fixed,
    "gd-qfit": gradient_descent_quadratic_fit,
}


def run_optimizer(kind: str, f: Objective, x0, cfg: OptimizerConfig) -> OptimizerTrace:
    try:
        fn = OPTIMIZERS[kind]
    except KeyError:
        raise KeyError(f"unknown optimizer {kind!r}; known: {', '.join(OPTIMIZERS)}") from None
    return fn(f, x0, cfg)


# ---------------------------------------------------------------- batched runs

@dataclass
class BatchRun:
    """Final points, step counts and termination codes (see ``TERMINATION_CODES``)."""

    x: np.ndarray
    iterations: np.ndarray
    termination: np.ndarray


def _run_batch(f: Objective, X0, cfg: OptimizerConfig, step) -> BatchRun:
    X = np.array(X0, dtype=float).reshape(-1, f.dimension)
    N = X.shape[0]
    iters = np.zeros(N, dtype=np.int64)
    term = np.full(N, -1, dtype=np.int64)
    active = np.arange(N)
    G = f.gradient(X)
    k = 0
    while active.size:
        gn = np.linalg.norm(G[active], axis=-1)
        done = gn <= cfg.eps
        term[active[done]] = 0
        active = active[~done]
        if not active.size:
            break
        if k >= cfg.max_iters:
            term[active] = 1
            break
        Xn, ok = step(X[active], G[active])
        term[active[~ok]] = 2
        active = active[ok]
        X[active] = Xn[ok]
        k += 1
        iters[active] = k
        bad = ~np.all(np.isfinite(X[active]), axis=-1) | (np.linalg.norm(X[active], axis=-1) > cfg.divergence_bound)
        term[active[bad]] = 1
        active = active[~bad]
        if active.size:
            G[active] = f.gradient(X[active])
    return BatchRun(X, iters, term)


def third_order_newton_batch(f: Objective, X0, cfg: OptimizerConfig = OptimizerConfig()) -> BatchRun:
    """Many independent third-order Newton runs advanced in lockstep.

    Produces the same iterates as :func:`third_order_newton` run point by point.
    """
    accept = (int(Outcome.LOCAL_MIN), int(Outcome.SECOND_ORDER_POINT)) \
        if cfg.accept_second_order_points else (int(Outcome.LOCAL_MIN),)

    def step(X, G):
        T = symmetrize_tensor(f.tensor(X))
        Hs = f.hessian(X)
        Q = 0.5 * (Hs + np.swapaxes(Hs, -1, -2))
        res = find_local_min_batch(T, Q, G, cfg.shifts, cfg.localmin)
        ok = np.isin(res.outcome, accept)
        return X + np.where(ok[:, None], res.points, 0.0), ok

    return _run_batch(f, X0, cfg, step)


def second_order_newton_batch(f: Objective, X0, cfg: OptimizerConfig = OptimizerConfig()) -> BatchRun:
    """Vectorized :func:`second_order_newton`."""

    def step(X, G):
        Hs = f.hessian(X)
        cond = np.linalg.cond(Hs)
        ok = np.isfinite(cond) & (cond <= cfg.cond_limit)
        Xn = X.copy()
        if np.any(ok):
            Xn[ok] = X[ok] - np.linalg.solve(Hs[ok], G[ok][..., None])[..., 0]
        return Xn, ok

    return _run_batch(f, X0, cfg, step)


BATCH_OPTIMIZERS = {"ton": third_order_newton_batch, "newton2": second_order_newton_batch}


# ---------------------------------------------------------------- convergence order

def estimate_convergence_order(trace, x_star, lo: float = 1e-12, hi: float = 0.5) -> float:
    """Least-squares slope of log e_{k+1} against log e_k, e_k = ||x_k - x*||.

    Uses the pairs whose errors both lie in ``[lo, hi]``. ``trace`` is an
    :class:`OptimizerTrace` or a sequence of iterates. Raises ``ValueError``
    when fewer than two usable pairs remain.
    """
    pts = trace.iterates if isinstance(trace, OptimizerTrace) else list(trace)
    x_star = np.asarray(x_star, dtype=float)
    err = np.array([np.linalg.norm(np.asarray(p, dtype=float) - x_star) for p in pts])
    if np.sum(err > 1e-13) < 4:
        raise ValueError("need at least 4 iterates with error above 1e-13")
    a, b = err[:-1], err[1:]
    use = (a >= lo) & (a <= hi) & (b >= lo) & (b <= hi) & (a != b)
    if np.sum(use) < 2:
        raise ValueError(f"only {int(np.sum(use))} error pair(s) inside [{lo:g}, {hi:g}]")
    la, lb = np.log(a[use]), np.log(b[use])
    slope, _ = np.polyfit(la, lb, 1)
    return float(slope)
