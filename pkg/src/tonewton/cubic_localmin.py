"""Local minima of cubic models through a semidefinite program.

For a model with tensor slices ``H_i``, matrix ``Q`` and vector ``b`` the
program has variables ``x`` (n), ``y`` and a symmetric ``X`` (n x n):

    minimize    phi = 1/2 Tr(Q X) + b^T x + y / 2
    subject to  1/2 Tr(H_i X) + (Q x)_i + b_i = 0,       i = 1..n
                [[sum_i x_i H_i + Q, g], [g^T, y]]  PSD,  g_i = Tr(H_i X) + (Q x)_i
                [[X, x], [x^T, 1]]                   PSD

``phi`` is nonnegative on the feasible set and vanishes exactly when the
cubic has a second-order point, whose location is ``x``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .cubic_model import CubicModel, gradient, hessian
from .sdp_solver import AffineBlock, LinearFunctional, SdpProblem, SolverConfig, SolverStatus

DEFAULT_SHIFTS = (0.0, 5.0, 10.0)


class Outcome(enum.IntEnum):
    LOCAL_MIN = _kernels.LOCAL_MIN
    SECOND_ORDER_POINT = _kernels.SECOND_ORDER_POINT
    NO_SECOND_ORDER_POINT = _kernels.NO_SECOND_ORDER_POINT
    SOLVER_FAILED = _kernels.SOLVER_FAILED


@dataclass(frozen=True)
class LocalMinConfig:
    """Classification tolerances.

    With ``iterate_as_sop`` a solved SDP whose optimum exceeds ``phi_tol`` is
    still reported as a :attr:`Outcome.SECOND_ORDER_POINT` at the SDP's ``x``
    (unpolished, ``phi_value > phi_tol`` tells it apart); the third-order
    Newton loop uses such points as iterates. Switching it off gives
    :attr:`Outcome.NO_SECOND_ORDER_POINT` whenever ``phi > phi_tol``.
    """

    phi_tol: float = 1e-6
    grad_tol: float = 1e-6
    psd_tol: float = 1e-7
    psd_strict_tol: float = 1e-7
    polish: bool = True
    polish_steps: int = 3
    iterate_as_sop: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)

    def kernel_kwargs(self) -> dict:
        return dict(phi_tol=self.phi_tol, grad_tol=self.grad_tol, psd_tol=self.psd_tol,
                    psd_strict_tol=self.psd_strict_tol,
                    polish_steps=self.polish_steps if self.polish else 0,
                    feas_tol=self.solver.feas_tol, gap_tol=self.solver.gap_tol,
                    max_iters=self.solver.max_iters, iterate_as_sop=self.iterate_as_sop)


@dataclass(frozen=True)
class LocalMinResult:
    """``point`` is in the model's own coordinates (``delta`` for Taylor models)."""

    outcome: Outcome
    point: Optional[np.ndarray]
    phi_value: float
    shift_used: float = 0.0
    grad_norm_at_point: Optional[float] = None
    hess_min_eig_at_point: Optional[float] = None
    solver_status: Optional[SolverStatus] = None
    solver_iterations: int = 0

    @property
    def has_point(self) -> bool:
        return self.outcome in (Outcome.LOCAL_MIN, Outcome.SECOND_ORDER_POINT)


def variable_layout(n: int):
    """Index of ``x_i``, of ``y`` and of ``X_ab`` (a <= b) among the free variables."""
    tri = [(a, b) for a in range(n) for b in range(a, n)]
    return list(range(n)), n, {ab: n + 1 + t for t, ab in enumerate(tri)}


def build_sdp(m: CubicModel) -> SdpProblem:
    """The local-minimum SDP of ``m`` as an :class:`SdpProblem`.

    Free variables are ``x``, ``y`` and the upper triangle of ``X`` (see
    :func:`variable_layout`); the corner 1 of the second block is its constant
    term.
    """
    n = m.n
    H, Q, b = m.H, m.Q, m.b
    ix, iy, iX = variable_layout(n)
    nv = n + 1 + len(iX)
    k = n + 1

    obj = LinearFunctional({iy: 0.5})
    for i in range(n):
        if b[i] != 0.0:
            obj.free[ix[i]] = float(b[i])
    for (a, c), idx in iX.items():
        coef = 0.5 * Q[a, a] if a == c else Q[a, c]
        if coef != 0.0:
            obj.free[idx] = float(coef)

    eqs = []
    for i in range(n):
        fn = LinearFunctional()
        for l in range(n):
            if Q[i, l] != 0.0:
                fn.free[ix[l]] = float(Q[i, l])
        for (a, c), idx in iX.items():
            coef = 0.5 * H[i, a, a] if a == c else H[i, a, c]
            if coef != 0.0:
                fn.free[idx] = float(coef)
        eqs.append((fn, float(-b[i])))

    F0 = np.zeros((k, k))
    F0[:n, :n] = Q
    blk1 = AffineBlock(F0, {})
    for l in range(n):
        M = np.zeros((k, k))
        M[:n, :n] = H[l]
        M[:n, n] = Q[:, l]
        M[n, :n] = Q[:, l]
        blk1.F[ix[l]] = M
    M = np.zeros((k, k))
    M[n, n] = 1.0
    blk1.F[iy] = M
    for (a, c), idx in iX.items():
        col = H[:, a, a] if a == c else 2.0 * H[:, a, c]
        M = np.zeros((k, k))
        M[:n, n] = col
        M[n, :n] = col
        blk1.F[idx] = M

    F0 = np.zeros((k, k))
    F0[n, n] = 1.0
    blk2 = AffineBlock(F0, {})
    for l in range(n):
        M = np.zeros((k, k))
        M[l, n] = M[n, l] = 1.0
        blk2.F[ix[l]] = M
    for (a, c), idx in iX.items():
        M = np.zeros((k, k))
        M[a, c] = M[c, a] = 1.0
        blk2.F[idx] = M

    return SdpProblem(nv, [blk1, blk2], obj, eqs)


def _result(r, shift: float) -> LocalMinResult:
    outcome, x, phi, gn, lmin, st, iters = r
    outcome = Outcome(int(outcome))
    has = outcome in (Outcome.LOCAL_MIN, Outcome.SECOND_ORDER_POINT)
    return LocalMinResult(
        outcome=outcome,
        point=np.array(x, dtype=float) if has else None,
        phi_value=float(phi),
        shift_used=float(shift),
        grad_norm_at_point=float(gn) if has else None,
        hess_min_eig_at_point=float(lmin) if has else None,
        solver_status=SolverStatus(int(st)),
        solver_iterations=int(iters),
    )


def find_local_min(m: CubicModel, cfg: LocalMinConfig = LocalMinConfig()) -> LocalMinResult:
    """Solve the SDP of ``m`` and classify the recovered point.

    ``phi_value`` is reported for the model scaled to unit largest coefficient,
    so ``phi_tol`` does not depend on the magnitude of the data.
    """
    return _result(_kernels.local_min(m.H, m.Q, m.b, **cfg.kernel_kwargs()), 0.0)


def find_local_min_with_shift(m: CubicModel, shifts: Sequence[float] = DEFAULT_SHIFTS,
                              cfg: LocalMinConfig = LocalMinConfig()) -> LocalMinResult:
    """Try ``Q + sigma*I`` for each ``sigma`` in order until a point is found."""
    shifts = _check_shifts(shifts)
    first = None
    for sigma in shifts:
        mm = m if sigma == 0.0 else m.shifted(sigma)
        r = _kernels.local_min(mm.H, mm.Q, mm.b, **cfg.kernel_kwargs())
        res = _result(r, sigma)
        if first is None:
            first = res
        if res.has_point:
            return res
    return first


def _check_shifts(shifts) -> tuple:
    shifts = tuple(float(s) for s in shifts)
    if not shifts or shifts[0] != 0.0:
        raise ValueError("the shift ladder must start with 0")
    if any(s < 0 for s in shifts):
        raise ValueError("shifts must be non-negative")
    return shifts


@dataclass
class BatchLocalMin:
    outcome: np.ndarray
    points: np.ndarray
    phi: np.ndarray
    shift_used: np.ndarray
    grad_norm: np.ndarray
    min_eig: np.ndarray


def find_local_min_batch(H, Q, b, shifts: Sequence[float] = DEFAULT_SHIFTS,
                         cfg: LocalMinConfig = LocalMinConfig()) -> BatchLocalMin:
    """Shift-ladder search for a stack of models given as raw coefficient arrays.

    ``H`` has shape (N, n, n, n), ``Q`` (N, n, n) and ``b`` (N, n). Tensor
    symmetry is not re-validated here; callers pass symmetric slices.
    """
    shifts = _check_shifts(shifts)
    b = np.asarray(b, dtype=float)
    if b.ndim != 2:
        raise ValueError("b must have shape (N, n)")
    N, n = b.shape
    H = np.asarray(H, dtype=float).reshape(N, n, n, n)
    Q = np.asarray(Q, dtype=float).reshape(N, n, n)
    out = _kernels.local_min_batch(H, Q, b, np.array(shifts), **cfg.kernel_kwargs())
    return BatchLocalMin(*[np.asarray(a) for a in out])


def verify_point(m: CubicModel, x) -> tuple:
    """Gradient norm and smallest Hessian eigenvalue of ``m`` at ``x``, computed directly."""
    return (float(np.linalg.norm(gradient(m, x))),
            float(np.linalg.eigvalsh(hessian(m, x))[0]))
