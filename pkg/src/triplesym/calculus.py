"""Grid certification of first-derivative bounds for a, b and the eigenvalues of S."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .bezoutian import build_bezoutian, eigenvalues
from .grids import Grid
from .measure import MeasuredConstant, measure_on_grids, sup_ratio
from .symbols import CoefficientField, fd_step, finite_difference

FLOOR = 1e-12
LAMBDA1_FLOOR = 1e-14


def _lam(field, t, y):
    a, b = field.coefficients(t, y, check=False)
    return eigenvalues(build_bezoutian(a, b))


def eigenvalue_gradients(field: CoefficientField, t, y, step: Optional[float] = None):
    """lambda and its central-difference derivatives in t and y."""
    t, y = np.broadcast_arrays(np.asarray(t, float), np.asarray(y, float))
    lam = _lam(field, t, y)
    out = {}
    for var, base in (("t", t), ("y", y)):
        h = fd_step(base, step)[..., None]
        hp = h[..., 0]
        if var == "t":
            up, dn = _lam(field, t + hp, y), _lam(field, t - hp, y)
        else:
            up, dn = _lam(field, t, y + hp), _lam(field, t, y - hp)
        out[var] = (up - dn) / (2 * h)
    return lam, out


def _ratio_measure(name, num_fn, den_fn, grid: Grid, band=(0.5, 1.5)) -> MeasuredConstant:
    def fn(g: Grid):
        t, y = g.mesh()
        den = den_fn(t, y)
        scale = float(np.max(np.abs(den))) if den.size else 1.0
        return sup_ratio(num_fn(t, y), den, t, y, FLOOR * max(scale, 1e-300))

    return measure_on_grids(name, fn, grid, band=band)


def certify_coefficient_derivatives(field: CoefficientField, grid: Grid) -> list:
    """sup |d_y a|/sqrt(a), |d_y b|/a, |d_t b|/sqrt(a) over the a > 0 part of the grid."""
    def a_of(t, y):
        return np.maximum(field.coefficients(t, y)[0], 0.0)

    return [
        _ratio_measure("|d_y a| / sqrt(a)", lambda t, y: field.derivative("a", "y", t, y),
                       lambda t, y: np.sqrt(a_of(t, y)), grid),
        _ratio_measure("|d_y b| / a", lambda t, y: field.derivative("b", "y", t, y), a_of, grid),
        _ratio_measure("|d_t b| / sqrt(a)", lambda t, y: field.derivative("b", "t", t, y),
                       lambda t, y: np.sqrt(a_of(t, y)), grid),
    ]


def certify_eigenvalue_derivatives(field: CoefficientField, grid: Grid) -> list:
    """Sup-ratios for the derivatives of lambda_1..3 against powers of a."""
    cache = {}

    def grads(t, y):
        key = (t.shape, float(t.flat[0]), float(t.flat[-1]))
        if key not in cache:
            cache[key] = eigenvalue_gradients(field, t, y)
        return cache[key]

    def a_of(t, y):
        return np.maximum(field.coefficients(t, y)[0], 0.0)

    def one(t, y):
        return np.ones_like(t)

    specs = [
        ("|d_y lambda1| / a^1.5", "y", 0, lambda t, y: a_of(t, y) ** 1.5),
        ("|d_y lambda2| / sqrt(a)", "y", 1, lambda t, y: np.sqrt(a_of(t, y))),
        ("|d_y lambda3| / sqrt(a)", "y", 2, lambda t, y: np.sqrt(a_of(t, y))),
        ("|d_t lambda1| / a", "t", 0, a_of),
        ("|d_t lambda2|", "t", 1, one),
        ("|d_t lambda3|", "t", 2, one),
    ]
    out = []
    for name, var, k, den in specs:
        out.append(_ratio_measure(name, lambda t, y, var=var, k=k: grads(t, y)[1][var][..., k], den, grid))
    return out


def certify_lambda1_log_derivative(field: CoefficientField, grid: Grid,
                                   phi: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> MeasuredConstant:
    """sup |d_y lambda1| / lambda1 * phi * sqrt(a); points with lambda1 < 1e-14 are skipped."""
    def fn(g: Grid):
        t, y = g.mesh()
        lam, d = eigenvalue_gradients(field, t, y)
        a = np.maximum(field.coefficients(t, y)[0], 0.0)
        l1 = lam[..., 0]
        num = np.abs(d["y"][..., 0]) * np.abs(phi(t, y)) * np.sqrt(a)
        return sup_ratio(num, np.where(l1 >= LAMBDA1_FLOOR, l1, 0.0), t, y, LAMBDA1_FLOOR)

    return measure_on_grids("|d_y lambda1| / lambda1 * phi * sqrt(a)", fn, grid)


def fd_convergence_order(field: CoefficientField, which: str, var: str, t, y,
                         h: float, order: int = 1) -> float:
    """Observed order of central differences against the analytic derivative,
    from steps h and h/2."""
    exact = field.derivative(which, var, t, y, order=order)

    def f(tt, yy):
        a, b = field.coefficients(tt, yy, check=False)
        return a if which == "a" else b

    e1 = np.max(np.abs(finite_difference(f, t, y, var, order, h) - exact))
    e2 = np.max(np.abs(finite_difference(f, t, y, var, order, h / 2) - exact))
    if e2 == 0:
        return float("inf")
    return float(np.log2(e1 / e2))
