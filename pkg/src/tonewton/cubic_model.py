"""Dense n-variate cubic polynomials and their calculus.

A cubic is stored as

    p(x) = 1/6 * sum_i x_i * x^T H_i x + 1/2 * x^T Q x + b^T x + c

with ``H`` a fully symmetric 3-tensor kept as ``n`` symmetric slices
``H[i] = H_i``. Models built by :func:`taylor3` live in centered coordinates
``delta = x - center``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SYMMETRY_TOL = 1e-12


def _as_vector(x, n: int, name: str = "x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {x.shape}")
    return x


def symmetry_defect(H: np.ndarray) -> float:
    """Largest violation of (H_i)_jk = (H_j)_ik = (H_k)_ij over all index triples."""
    H = np.asarray(H, dtype=float)
    if H.size == 0:
        return 0.0
    d = 0.0
    for perm in ((0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        d = max(d, float(np.max(np.abs(H - H.transpose(perm)))))
    return d


def symmetrize_tensor(T: np.ndarray) -> np.ndarray:
    """Average over all six permutations of the last three axes."""
    T = np.asarray(T, dtype=float)
    lead = tuple(range(T.ndim - 3))
    a, b, c = T.ndim - 3, T.ndim - 2, T.ndim - 1
    out = T.copy()
    for perm in ((a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
        out = out + T.transpose(lead + perm)
    return out / 6.0


@dataclass(frozen=True)
class CubicModel:
    """Coefficients of an n-variate cubic; validated on construction.

    ``center`` is only bookkeeping: when set, the polynomial is a function of
    ``delta = x - center`` and :meth:`to_absolute` maps a model point back.
    """

    H: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    c: float = 0.0
    center: Optional[np.ndarray] = None
    n: int = field(init=False)

    def __post_init__(self):
        b = np.array(self.b, dtype=float).reshape(-1)
        n = b.size
        if n < 1:
            raise ValueError("dimension must be positive")
        H = np.array(self.H, dtype=float)
        Q = np.array(self.Q, dtype=float)
        if H.shape != (n, n, n):
            raise ValueError(f"H must have shape ({n}, {n}, {n}), got {H.shape}")
        if Q.shape != (n, n):
            raise ValueError(f"Q must have shape ({n}, {n}), got {Q.shape}")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(Q)) and np.all(np.isfinite(b))
                and np.isfinite(self.c)):
            raise ValueError("coefficients must be finite")
        scale = max(1.0, float(np.max(np.abs(H))))
        if symmetry_defect(H) > SYMMETRY_TOL * scale:
            raise ValueError("H slices violate the tensor symmetry (H_i)_jk = (H_j)_ik = (H_k)_ij")
        if np.max(np.abs(Q - Q.T)) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(Q)))):
            raise ValueError("Q must be symmetric")
        center = None
        if self.center is not None:
            center = _as_vector(self.center, n, "center").copy()
            center.setflags(write=False)
        for arr in (H, Q, b):
            arr.setflags(write=False)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "n", n)

    @classmethod
    def quadratic(cls, Q, b, c: float = 0.0) -> "CubicModel":
        b = np.asarray(b, dtype=float)
        return cls(np.zeros((b.size,) * 3), Q, b, c)

    def shifted(self, sigma: float) -> "CubicModel":
        """Same model with ``Q`` replaced by ``Q + sigma*I``."""
        return CubicModel(self.H, self.Q + sigma * np.eye(self.n), self.b, self.c, self.center)

    def to_absolute(self, delta) -> np.ndarray:
        delta = _as_vector(delta, self.n, "delta")
        return delta if self.center is None else self.center + delta


@dataclass(frozen=True)
class UnivariateCubic:
    """a*x**3 + b*x**2 + c*x + d"""

    a: float
    b: float
    c: float
    d: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite([self.a, self.b, self.c, self.d])):
            raise ValueError("coefficients must be finite")

    def __call__(self, x: float) -> float:
        return ((self.a * x + self.b) * x + self.c) * x + self.d

    def to_model(self) -> CubicModel:
        """The same polynomial as a 1-variable :class:`CubicModel`."""
        return CubicModel([[[6.0 * self.a]]], [[2.0 * self.b]], [self.c], self.d)


def eval(m: CubicModel, x) -> float:  # noqa: A001 - mirrors the math name
    x = _as_vector(x, m.n)
    Hx = np.tensordot(x, m.H, axes=1)
    return float(x @ Hx @ x / 6.0 + 0.5 * x @ m.Q @ x + m.b @ x + m.c)


def gradient(m: CubicModel, x) -> np.ndarray:
    x = _as_vector(x, m.n)
    return 0.5 * tensor_apply(m.H, x, x) + m.Q @ x + m.b


def hessian(m: CubicModel, x) -> np.ndarray:
    x = _as_vector(x, m.n)
    Hm = np.tensordot(x, m.H, axes=1) + m.Q
    return 0.5 * (Hm + Hm.T)


def tensor_apply(H, x, y) -> np.ndarray:
    """sum_i x_i H_i y, i.e. the vector (x^T H_1 y, ..., x^T H_n y)."""
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if H.shape != (n, n, n):
        raise ValueError(f"H must have shape (n, n, n), got {H.shape}")
    x = _as_vector(x, n)
    y = _as_vector(y, n, "y")
    return np.einsum("i,ijk,k->j", x, H, y)


def taylor3(f, xbar) -> CubicModel:
    """Third-order Taylor model of ``f`` around ``xbar`` in centered coordinates.

    ``f`` needs ``value``, ``gradient``, ``hessian`` and ``tensor`` methods (see
    :class:`tonewton.objectives.Objective`). The tensor is symmetrized before
    the model is built so finite-difference tensors are accepted.
    """
    xbar = np.asarray(xbar, dtype=float).reshape(-1)
    T = symmetrize_tensor(f.tensor(xbar))
    Q = np.asarray(f.hessian(xbar), dtype=float)
    return CubicModel(T, 0.5 * (Q + Q.T), f.gradient(xbar), float(f.value(xbar)), center=xbar)


def univariate_local_min(u: UnivariateCubic) -> Optional[float]:
    """Location of the local minimum of ``u``, or ``None`` when there is none."""
    a, b, c = float(u.a), float(u.b), float(u.c)
    if a == 0.0:
        return -c / (2.0 * b) if b > 0.0 else None
    disc = b * b - 3.0 * a * c
    if disc < 0.0:
        return None
    r = np.sqrt(disc)
    # the two closed forms are equal; pick the one where b and r do not cancel
    if b >= 0.0:
        return -c / (b + r) if b + r > 0.0 else 0.0
    return (-b + r) / (3.0 * a)
