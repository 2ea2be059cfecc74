"""Central finite differences used as an independent derivative oracle."""

import numpy as np


def central(fn, x, h):
    """Stack of (fn(x + h e_i) - fn(x - h e_i)) / 2h along a new leading axis."""
    x = np.asarray(x, dtype=float)
    return np.array([(np.asarray(fn(x + h * e)) - np.asarray(fn(x - h * e))) / (2 * h) for e in np.eye(x.size)])


def rel_error(approx, exact):
    approx, exact = np.asarray(approx, dtype=float), np.asarray(exact, dtype=float)
    return float(np.linalg.norm(approx - exact) / max(1.0, np.linalg.norm(exact)))


def derivative_errors(f, x, h=1e-6):
    """Relative errors of gradient, Hessian and tensor against differences of the level below."""
    scale = max(1.0, float(np.max(np.abs(x))))
    hh = h * scale
    return (
        rel_error(central(f.value, x, hh), f.gradient(x)),
        rel_error(central(f.gradient, x, hh), f.hessian(x)),
        rel_error(central(f.hessian, x, hh), f.tensor(x)),
    )
