"""Small dense semidefinite programs.

A problem has ``free_dim`` free scalar variables ``v`` and a list of PSD
blocks. Each block is an affine matrix expression ``S_j(v) = F0_j + sum_k v_k
F_jk``; it is also a matrix variable that the objective and the equalities
may reference. The problem reads

    minimize    f(v, S)
    subject to  g_i(v, S) = r_i
                S_j = F0_j + sum_k v_k F_jk,  S_j PSD

where ``f`` and ``g_i`` are :class:`LinearFunctional` objects. Coefficients on
block entries use the upper triangle with the symmetric convention: the
coefficient given for entry (r, c) with r < c multiplies the pair
``S[r, c] = S[c, r]`` once, not twice.

:func:`solve` runs a homogeneous self-dual primal-dual interior-point method
(HKM direction, Mehrotra predictor-corrector) from :mod:`tonewton._kernels`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels


class SolverStatus(enum.IntEnum):
    OPTIMAL = _kernels.OPTIMAL
    MAX_ITERATIONS = _kernels.MAX_ITERATIONS
    NUMERICAL_FAILURE = _kernels.NUMERICAL_FAILURE
    INFEASIBLE = _kernels.INFEASIBLE
    UNBOUNDED = _kernels.UNBOUNDED


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 100

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (self.feas_tol > 0 and self.gap_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class LinearFunctional:
    """``free @ v + sum_j <blocks[j], S_j>`` with upper-triangle block coefficients.

    ``free`` maps variable index to coefficient; ``blocks`` maps block index to
    ``{(row, col): coefficient}`` with ``row <= col``.
    """

    free: Dict[int, float] = field(default_factory=dict)
    blocks: Dict[int, Dict[Tuple[int, int], float]] = field(default_factory=dict)

    def block_matrix(self, j: int, m: int) -> np.ndarray:
        """Symmetric matrix C with <C, S> equal to this functional's block-j part."""
        C = np.zeros((m, m))
        for (r, c), val in self.blocks.get(j, {}).items():
            if r == c:
                C[r, r] += val
            else:
                C[r, c] += 0.5 * val
                C[c, r] += 0.5 * val
        return C


@dataclass
class AffineBlock:
    """``F0 + sum_k v_k F[k]``; ``F`` maps free-variable index to a symmetric matrix."""

    F0: np.ndarray
    F: Dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(np.asarray(self.F0).shape[0])

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        S = np.array(self.F0, dtype=float)
        for k, Fk in self.F.items():
            S = S + v[k] * np.asarray(Fk, dtype=float)
        return S


@dataclass
class SdpProblem:
    free_dim: int
    blocks: List[AffineBlock]
    objective: LinearFunctional
    eq_constraints: List[Tuple[LinearFunctional, float]] = field(default_factory=list)

    @property
    def block_sizes(self) -> List[int]:
        return [blk.size for blk in self.blocks]

    def validate(self) -> None:
        nb = len(self.blocks)
        if self.free_dim < 0:
            raise ValueError("free_dim must be non-negative")
        for j, blk in enumerate(self.blocks):
            F0 = np.asarray(blk.F0, dtype=float)
            if F0.ndim != 2 or F0.shape[0] != F0.shape[1] or F0.shape[0] < 1:
                raise ValueError(f"block {j}: F0 must be a non-empty square matrix")
            if not np.allclose(F0, F0.T, rtol=0, atol=1e-12):
                raise ValueError(f"block {j}: F0 must be symmetric")
            for k, Fk in blk.F.items():
                Fk = np.asarray(Fk, dtype=float)
                if not 0 <= k < self.free_dim:
                    raise ValueError(f"block {j} references undeclared variable {k}")
                if Fk.shape != F0.shape or not np.allclose(Fk, Fk.T, rtol=0, atol=1e-12):
                    raise ValueError(f"block {j}: coefficient of variable {k} must be a symmetric {F0.shape} matrix")
        for fn in [self.objective] + [g for g, _ in self.eq_constraints]:
            for k in fn.free:
                if not 0 <= k < self.free_dim:
                    raise ValueError(f"functional references undeclared variable {k}")
            for j, entries in fn.blocks.items():
                if not 0 <= j < nb:
                    raise ValueError(f"functional references undeclared block {j}")
                m = self.blocks[j].size
                for (r, c) in entries:
                    if not (0 <= r <= c < m):
                        raise ValueError(f"block {j}: entry ({r}, {c}) is not in the upper triangle")


@dataclass
class SdpSolution:
    status: SolverStatus
    free: np.ndarray
    blocks: List[np.ndarray]
    objective_value: float
    max_eq_residual: float
    min_block_eigenvalue: float
    dual_objective: float
    iterations: int
    mu_history: np.ndarray

    @property
    def primal_values(self) -> Dict[str, object]:
        return {"free": self.free, "blocks": self.blocks}


# ---------------------------------------------------------------- vectorization

def svec(M) -> np.ndarray:
    """Upper triangle row by row, off-diagonals scaled by sqrt(2) so dot = trace inner product."""
    M = np.asarray(M, dtype=float)
    m = M.shape[0]
    iu = np.triu_indices(m)
    w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    return M[iu] * w


def smat(s, m: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`svec`."""
    s = np.asarray(s, dtype=float)
    if m is None:
        m = int(round((np.sqrt(8 * s.size + 1) - 1) / 2))
    if m * (m + 1) // 2 != s.size:
        raise ValueError(f"length {s.size} is not a triangular number for size {m}")
    iu = np.triu_indices(m)
    w = np.where(iu[0] == iu[1], 1.0, 1.0 / np.sqrt(2.0))
    M = np.zeros((m, m))
    M[iu] = s * w
    return M + np.triu(M, 1).T


@dataclass
class StandardForm:
    """Vectorized problem over ``w = (v, svec(S_0), ..., svec(S_{B-1}))``.

    ``minimize c @ w + offset  s.t.  A @ w = rhs, smat(S_j) PSD``. The first
    ``n_user`` rows of ``A`` are the user equalities; the remaining rows tie
    each block to its affine expression: ``svec(S_j) - sum_k v_k svec(F_jk) =
    svec(F0_j)``.
    """

    free_dim: int
    block_sizes: List[int]
    c: np.ndarray
    offset: float
    A: np.ndarray
    rhs: np.ndarray
    n_user: int

    @property
    def block_slices(self) -> List[slice]:
        out, off = [], self.free_dim
        for m in self.block_sizes:
            ln = m * (m + 1) // 2
            out.append(slice(off, off + ln))
            off += ln
        return out

    def lmi_arrays(self):
        """Eliminate the block variables: arrays for the kernel's affine-LMI form.

        Returns ``(c, A, b, block_sizes, F0, F, offset)`` with blocks flattened
        row-major as expected by :func:`tonewton._kernels.ipm_solve`.
        """
        nv = self.free_dim
        slices = self.block_slices
        F0s, Fs = [], []
        row = self.n_user
        for m, sl in zip(self.block_sizes, slices):
            ln = sl.stop - sl.start
            tie = self.A[row:row + ln]
            F0s.append(smat(self.rhs[row:row + ln], m).ravel())
            Fs.append(np.stack([smat(-tie[:, k], m).ravel() for k in range(nv)]) if nv
                      else np.zeros((0, m * m)))
            row += ln
        F0 = np.concatenate(F0s) if F0s else np.zeros(0)
        F = np.concatenate(Fs, axis=1) if Fs else np.zeros((nv, 0))
        # substitute svec(S_j) = svec(F0_j) + sum_k v_k svec(F_jk) into objective and user rows
        c = self.c[:nv].copy()
        offset = self.offset
        A = self.A[:self.n_user, :nv].copy()
        b = self.rhs[:self.n_user].copy()
        for j, (m, sl) in enumerate(zip(self.block_sizes, slices)):
            f0 = svec(F0s[j].reshape(m, m))
            fk = np.stack([svec(Fs[j][k].reshape(m, m)) for k in range(nv)]) if nv else np.zeros((0, f0.size))
            cb = self.c[sl]
            offset += float(cb @ f0)
            if nv:
                c += fk @ cb
            Ab = self.A[:self.n_user, sl]
            b -= Ab @ f0
            if nv:
                A += Ab @ fk.T
        return (c, A, b, np.array(self.block_sizes, dtype=np.intc), F0, F, offset)


def assemble_standard_form(p: SdpProblem) -> StandardForm:
    """Vectorize ``p`` with one matrix variable per block tied by equalities."""
    p.validate()
    nv = p.free_dim
    sizes = p.block_sizes
    lens = [m * (m + 1) // 2 for m in sizes]
    nw = nv + sum(lens)
    offs = np.cumsum([nv] + lens)[:-1]

    def row_of(fn: LinearFunctional) -> np.ndarray:
        r = np.zeros(nw)
        for k, val in fn.free.items():
            r[k] += val
        for j, m in enumerate(sizes):
            if j in fn.blocks:
                r[offs[j]:offs[j] + lens[j]] += svec(fn.block_matrix(j, m))
        return r

    c = row_of(p.objective)
    rows = [row_of(g) for g, _ in p.eq_constraints]
    rhs = [float(r) for _, r in p.eq_constraints]
    for j, blk in enumerate(p.blocks):
        m = sizes[j]
        T = np.zeros((lens[j], nw))
        T[:, offs[j]:offs[j] + lens[j]] = np.eye(lens[j])
        for k, Fk in blk.F.items():
            T[:, k] -= svec(Fk)
        rows.extend(T)
        rhs.extend(svec(blk.F0))
    A = np.array(rows).reshape(len(rows), nw)
    return StandardForm(nv, sizes, c, 0.0, A, np.array(rhs), len(p.eq_constraints))


def write_triplets(sf: StandardForm, path) -> None:
    """Dump the canonical form as sparse triplets.

    One line per nonzero: ``constraint block row col value``. Constraint 0 is
    the objective and constraint ``i >= 1`` is row ``i - 1`` of ``A``; the
    right-hand sides are written with ``block = -1`` (row and col 0). Block 0
    denotes the free variables (``row`` is the variable index, ``col`` is 0)
    and block ``j >= 1`` denotes matrix variable ``j - 1`` at upper-triangle
    position ``(row, col)``; values are plain (not sqrt(2)-scaled) entries of
    the trace-inner-product coefficient matrix.
    """
    lines = []
    slices = sf.block_slices

    def emit(ci: int, vec: np.ndarray) -> None:
        for k in np.flatnonzero(vec[:sf.free_dim]):
            lines.append(f"{ci} 0 {k} 0 {vec[k]:.17g}")
        for j, (m, sl) in enumerate(zip(sf.block_sizes, slices)):
            C = smat(vec[sl], m)
            for r in range(m):
                for col in range(r, m):
                    val = C[r, col] if r == col else 2.0 * C[r, col]
                    if val != 0.0:
                        lines.append(f"{ci} {j + 1} {r} {col} {val:.17g}")

    emit(0, sf.c)
    for i in range(sf.A.shape[0]):
        emit(i + 1, sf.A[i])
        if sf.rhs[i] != 0.0:
            lines.append(f"{i + 1} -1 0 0 {sf.rhs[i]:.17g}")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise OSError(f"cannot write triplet dump to {path}: {exc}") from exc


# ---------------------------------------------------------------- solving

def _verify(p: SdpProblem, v: np.ndarray) -> Tuple[List[np.ndarray], float, float, float]:
    S = [blk.evaluate(v) for blk in p.blocks]

    def val(fn: LinearFunctional) -> float:
        out = sum(coef * v[k] for k, coef in fn.free.items())
        for j, m in enumerate(p.block_sizes):
            if j in fn.blocks:
                out += float(np.sum(fn.block_matrix(j, m) * S[j]))
        return float(out)

    eq_res = max([abs(val(g) - r) for g, r in p.eq_constraints], default=0.0)
    min_eig = min([float(np.linalg.eigvalsh(0.5 * (Sj + Sj.T))[0]) for Sj in S], default=np.inf)
    return S, val(p.objective), eq_res, min_eig


def solve(p: SdpProblem, cfg: SolverConfig = SolverConfig()) -> SdpSolution:
    """Solve ``p``; the returned residuals are recomputed from the primal point."""
    sf = assemble_standard_form(p)
    c, A, b, sizes, F0, F, offset = sf.lmi_arrays()
    res = _kernels.ipm_solve(c, A, b, sizes, F0, F, cfg.feas_tol, cfg.gap_tol, cfg.max_iters)
    v = np.asarray(res["v"], dtype=float)
    S, obj, eq_res, min_eig = _verify(p, v)
    return SdpSolution(
        status=SolverStatus(res["status"]),
        free=v,
        blocks=S,
        objective_value=obj,
        max_eq_residual=eq_res,
        min_block_eigenvalue=min_eig,
        dual_objective=float(res["dobj"]) + offset,
        iterations=int(res["iterations"]),
        mu_history=np.asarray(res["mu_history"]),
    )
