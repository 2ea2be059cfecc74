"""Benchmark objectives with analytic derivatives through order three.

Every evaluator is vectorized over leading axes: ``value`` maps ``(..., n)``
to ``(...)``, ``gradient`` to ``(..., n)``, ``hessian`` to ``(..., n, n)``
and ``tensor`` to ``(..., n, n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .cubic_model import CubicModel

PI = np.pi

Window = Tuple[Tuple[float, float], Tuple[float, float]]


@dataclass(frozen=True)
class CriticalPoint:
    point: Tuple[float, ...]
    label: str  # "global-min", "local-min" or "saddle"
    name: str = ""


@dataclass(frozen=True)
class Objective:
    """A smooth function with derivative evaluators and a catalogue of critical points.

    ``designated`` indexes the catalogue entry treated as *the* global minimum
    (fractal label 0); ``window`` is the default plotting/fractal region.
    """

    name: str
    dimension: int
    value_fn: Callable
    gradient_fn: Callable
    hessian_fn: Callable
    tensor_fn: Callable
    critical_points: Tuple[CriticalPoint, ...] = ()
    window: Optional[Window] = None
    designated: Optional[int] = 0

    def value(self, x):
        return self.value_fn(np.asarray(x, dtype=float))

    def gradient(self, x) -> np.ndarray:
        return self.gradient_fn(np.asarray(x, dtype=float))

    def hessian(self, x) -> np.ndarray:
        return self.hessian_fn(np.asarray(x, dtype=float))

    def tensor(self, x) -> np.ndarray:
        return self.tensor_fn(np.asarray(x, dtype=float))

    @property
    def minima(self) -> Tuple[CriticalPoint, ...]:
        return tuple(cp for cp in self.critical_points if cp.label in ("global-min", "local-min"))

    @property
    def global_minimum(self) -> Optional[np.ndarray]:
        if self.designated is None or not self.critical_points:
            return None
        return np.array(self.critical_points[self.designated].point, dtype=float)


def _stack2(a, b):
    return np.stack([a, b], axis=-1)


def _sym2(xx, xy, yy):
    return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)


def _tens2(xxx, xxy, xyy, yyy):
    return np.stack([_sym2(xxx, xxy, xyy), _sym2(xxy, xyy, yyy)], -3)


def _split(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError(f"expected points of dimension 2, got shape {x.shape}")
    return x[..., 0], x[..., 1]


# ---------------------------------------------------------------- Bohachevsky

def _boh_value(p):
    x, y = _split(p)
    return x * x + 2 * y * y - 0.3 * np.cos(3 * PI * x) - 0.4 * np.cos(4 * PI * y) + 0.7


def _boh_grad(p):
    x, y = _split(p)
    return _stack2(2 * x + 0.9 * PI * np.sin(3 * PI * x), 4 * y + 1.6 * PI * np.sin(4 * PI * y))


def _boh_hess(p):
    x, y = _split(p)
    return _sym2(2 + 2.7 * PI ** 2 * np.cos(3 * PI * x), np.zeros_like(x),
                 4 + 6.4 * PI ** 2 * np.cos(4 * PI * y))


def _boh_tensor(p):
    x, y = _split(p)
    z = np.zeros_like(x)
    return _tens2(-8.1 * PI ** 3 * np.sin(3 * PI * x), z, z, -25.6 * PI ** 3 * np.sin(4 * PI * y))


def bohachevsky() -> Objective:
    return Objective("bohachevsky", 2, _boh_value, _boh_grad, _boh_hess, _boh_tensor,
                     (CriticalPoint((0.0, 0.0), "global-min", "global minimum"),),
                     window=((-2.0, 2.0), (-2.0, 2.0)))


# ---------------------------------------------------------------- McCormick

def _mcc_value(p):
    x, y = _split(p)
    return np.sin(x + y) + (x - y) ** 2 - 1.5 * x + 2.5 * y + 1


def _mcc_grad(p):
    x, y = _split(p)
    cs = np.cos(x + y)
    return _stack2(cs + 2 * (x - y) - 1.5, cs - 2 * (x - y) + 2.5)


def _mcc_hess(p):
    x, y = _split(p)
    sn = np.sin(x + y)
    return _sym2(2 - sn, -2 - sn, 2 - sn)


def _mcc_tensor(p):
    x, y = _split(p)
    t = -np.cos(x + y)
    return _tens2(t, t, t, t)


def mccormick() -> Objective:
    # exact minimizer: cos(x + y) = -1/2 and x - y = 1
    xm = 0.5 - PI / 3
    return Objective("mccormick", 2, _mcc_value, _mcc_grad, _mcc_hess, _mcc_tensor,
                     (CriticalPoint((xm, xm - 1.0), "global-min", "global minimum"),),
                     window=((-1.5, 4.0), (-3.0, 4.0)))


# ---------------------------------------------------------------- Beale

_BEALE_A = (1.5, 2.25, 2.625)


def _beale_terms(p):
    """Per-term value and partial derivatives of t_i = a_i - x + x*y**i."""
    x, y = _split(p)
    z = np.zeros_like(x)
    out = []
    for i, a in enumerate(_BEALE_A, start=1):
        yi = y ** i
        yi1 = y ** (i - 1)
        yi2 = y ** (i - 2) if i >= 2 else z
        yi3 = y ** (i - 3) if i >= 3 else z
        out.append(dict(
            t=a - x + x * yi,
            x=-1 + yi, y=i * x * yi1,
            xx=z, xy=i * yi1, yy=i * (i - 1) * x * yi2,
            xxx=z, xxy=z, xyy=i * (i - 1) * yi2, yyy=i * (i - 1) * (i - 2) * x * yi3,
        ))
    return out


def _d(t, *idx):
    key = "".join(sorted(idx))
    return t[key]


def _beale_value(p):
    return sum(t["t"] ** 2 for t in _beale_terms(p))


def _beale_grad(p):
    ts = _beale_terms(p)
    return _stack2(*[sum(2 * t["t"] * t[a] for t in ts) for a in "xy"])


def _beale_hess(p):
    ts = _beale_terms(p)

    def h(a, b):
        return sum(2 * (t[a] * t[b] + t["t"] * _d(t, a, b)) for t in ts)

    return _sym2(h("x", "x"), h("x", "y"), h("y", "y"))


def _beale_tensor(p):
    ts = _beale_terms(p)

    def k(a, b, c):
        return sum(2 * (_d(t, a, c) * t[b] + t[a] * _d(t, b, c) + t[c] * _d(t, a, b)
                        + t["t"] * _d(t, a, b, c)) for t in ts)

    return _tens2(k("x", "x", "x"), k("x", "x", "y"), k("x", "y", "y"), k("y", "y", "y"))


def beale() -> Objective:
    # the middle term is squared (the standard Beale function)
    return Objective("beale", 2, _beale_value, _beale_grad, _beale_hess, _beale_tensor,
                     (CriticalPoint((3.0, 0.5), "global-min", "global minimum"),),
                     window=((-4.0, 4.0), (-4.0, 4.0)))


# ---------------------------------------------------------------- Himmelblau

def _him_uw(p):
    x, y = _split(p)
    return x, y, x * x + y - 11, x + y * y - 7


def _him_value(p):
    _, _, u, w = _him_uw(p)
    return u * u + w * w


def _him_grad(p):
    x, y, u, w = _him_uw(p)
    return _stack2(4 * x * u + 2 * w, 2 * u + 4 * y * w)


def _him_hess(p):
    x, y, u, w = _him_uw(p)
    return _sym2(4 * u + 8 * x * x + 2, 4 * x + 4 * y, 2 + 4 * w + 8 * y * y)


def _him_tensor(p):
    x, y = _split(p)
    four = np.full_like(x, 4.0)
    return _tens2(24 * x, four, four, 24 * y)


HIMMELBLAU_MINIMA = (
    (3.0, 2.0),
    (-2.8051180869527448, 3.131312518250573),
    (-3.779310253377747, -3.2831859912861696),
    (3.5844283403304917, -1.8481265269644034),
)


def himmelblau() -> Objective:
    # all four minima have value 0; (3, 2) is the designated one
    cps = tuple(CriticalPoint(p, "global-min", f"minimum {i}") for i, p in enumerate(HIMMELBLAU_MINIMA))
    return Objective("himmelblau", 2, _him_value, _him_grad, _him_hess, _him_tensor, cps,
                     window=((-6.0, 6.0), (-6.0, 6.0)))


# ---------------------------------------------------------------- generic builders

def quadratic(dimension: int = 2) -> Objective:
    """1/2 ||x||^2; a convex test objective with the origin as global minimum."""

    def value(x):
        return 0.5 * np.sum(x * x, axis=-1)

    def grad(x):
        return np.array(x, dtype=float)

    def hess(x):
        return np.broadcast_to(np.eye(dimension), x.shape[:-1] + (dimension, dimension)).copy()

    def tensor(x):
        return np.zeros(x.shape[:-1] + (dimension,) * 3)

    return Objective("quadratic", dimension, value, grad, hess, tensor,
                     (CriticalPoint((0.0,) * dimension, "global-min", "global minimum"),),
                     window=((-1.0, 1.0), (-1.0, 1.0)) if dimension == 2 else None)


def quartic(shift: Sequence[float] = (0.0, 0.0)) -> Objective:
    """x^4 + y^4 + x^2 + y^2 + s.(x, y); strongly convex with one minimum.

    A nonzero linear term ``s`` moves the minimizer off the origin, where all
    third derivatives would vanish.
    """
    s = np.asarray(shift, dtype=float)
    if s.shape != (2,):
        raise ValueError("shift must have two entries")
    # minimizer: 4 t^3 + 2 t + s_i = 0 has a single real root per coordinate
    star = tuple(float(np.real(r[np.argmin(np.abs(np.imag(r)))]))
                 for r in (np.roots([4.0, 0.0, 2.0, si]) for si in s))
    star = tuple(t - (4 * t ** 3 + 2 * t + si) / (12 * t * t + 2) for t, si in zip(star, s))

    def value(x):
        return np.sum(x ** 4 + x ** 2, axis=-1) + x @ s

    def grad(x):
        return 4 * x ** 3 + 2 * x + s

    def hess(x):
        d = 12 * x ** 2 + 2
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = d[..., 0]
        out[..., 1, 1] = d[..., 1]
        return out

    def tensor(x):
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 0, 0] = 24 * x[..., 0]
        out[..., 1, 1, 1] = 24 * x[..., 1]
        return out

    name = "quartic" if not np.any(s) else "quartic-shifted"
    return Objective(name, 2, value, grad, hess, tensor,
                     (CriticalPoint(star, "global-min", "global minimum"),),
                     window=((-1.0, 1.0), (-1.0, 1.0)))


def cubic_objective(m: CubicModel, name: str = "cubic") -> Objective:
    """The polynomial of ``m`` (in its own coordinates) as an objective."""
    H, Q, b, c = m.H, m.Q, m.b, m.c

    def value(x):
        Hx = np.einsum("...i,ijk->...jk", x, H)
        return (np.einsum("...j,...jk,...k->...", x, Hx, x) / 6.0
                + 0.5 * np.einsum("...j,jk,...k->...", x, Q, x) + x @ b + c)

    def grad(x):
        Hx = np.einsum("...i,ijk->...jk", x, H)
        return 0.5 * np.einsum("...jk,...k->...j", Hx, x) + x @ Q.T + b

    def hess(x):
        return np.einsum("...i,ijk->...jk", x, H) + Q

    def tensor(x):
        return np.broadcast_to(H, x.shape[:-1] + H.shape).copy()

    return Objective(name, m.n, value, grad, hess, tensor, (), None, None)


def finite_difference_objective(value_fn: Callable, dimension: int,
                                steps: Sequence[float] = (1e-5, 1e-4, 1e-3),
                                name: str = "finite-difference") -> Objective:
    """Derivatives of ``value_fn`` by central differences.

    Gradient: two-point stencil with step ``steps[0]``. Hessian: four-point
    product stencil with ``steps[1]``. Tensor: eight-point product stencil
    with ``steps[2]``, then symmetrized. ``value_fn`` is called on single
    points of shape ``(dimension,)``.
    """
    hg, hh, ht = (float(s) for s in steps)
    n = int(dimension)
    eye = np.eye(n)

    def f(x):
        return float(value_fn(x))

    def _point(fn, x, out_shape):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != n:
            raise ValueError(f"expected points of dimension {n}, got shape {x.shape}")
        flat = x.reshape(-1, n)
        res = np.array([fn(p) for p in flat])
        return res.reshape(x.shape[:-1] + out_shape)

    def g1(x):
        return np.array([(f(x + hg * eye[i]) - f(x - hg * eye[i])) / (2 * hg) for i in range(n)])

    def h1(x):
        H = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                s = 0.0
                for si in (1, -1):
                    for sj in (1, -1):
                        s += si * sj * f(x + hh * (si * eye[i] + sj * eye[j]))
                H[i, j] = H[j, i] = s / (4 * hh * hh)
        return H

    def t1(x):
        T = np.empty((n, n, n))
        for i in range(n):
            for j in range(i, n):
                for k in range(j, n):
                    s = 0.0
                    for si in (1, -1):
                        for sj in (1, -1):
                            for sk in (1, -1):
                                s += si * sj * sk * f(x + ht * (si * eye[i] + sj * eye[j] + sk * eye[k]))
                    v = s / (8 * ht ** 3)
                    for a, b, c in {(i, j, k), (i, k, j), (j, i, k), (j, k, i), (k, i, j), (k, j, i)}:
                        T[a, b, c] = v
        return T

    return Objective(
        name, n,
        lambda x: _point(f, x, ()),
        lambda x: _point(g1, x, (n,)),
        lambda x: _point(h1, x, (n, n)),
        lambda x: _point(t1, x, (n, n, n)),
        (), None, None,
    )


REGISTRY: Dict[str, Callable[[], Objective]] = {
    "bohachevsky": bohachevsky,
    "mccormick": mccormick,
    "beale": beale,
    "himmelblau": himmelblau,
    "quadratic": quadratic,
    "quartic": quartic,
}

TABLE_OBJECTIVES = ("bohachevsky", "mccormick", "beale", "himmelblau")


def get_objective(name: str) -> Objective:
    try:
        return REGISTRY[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown objective {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
