"""Nelder-Mead simplex search with a quadratic box penalty.

Shared by the likelihood maximiser and the design optimizer. The
implementation follows the textbook reflect / expand / contract / shrink
scheme; with ``adaptive=True`` the coefficients are scaled with the
dimension (Gao & Han), which matters once the search runs over every
coordinate of a design.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DesignError


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    nfev: int
    nit: int
    converged: bool
    trace: list = field(default_factory=list)   # (iteration, best value, diameter)


def _coefficients(dim, adaptive):
    if adaptive and dim > 2:
        return 1.0, 1.0 + 2.0 / dim, 0.75 - 1.0 / (2.0 * dim), 1.0 - 1.0 / dim
    return 1.0, 2.0, 0.5, 0.5


def box_penalty(z, lower, upper, coeff):
    """``coeff * sum(violation^2)`` for coordinates outside ``[lower, upper]``."""
    if coeff == 0 or (lower is None and upper is None):
        return 0.0
    v = 0.0
    if lower is not None:
        v += np.sum(np.square(np.minimum(z - lower, 0.0)))
    if upper is not None:
        v += np.sum(np.square(np.maximum(z - upper, 0.0)))
    return coeff * float(v)


def nelder_mead(fun, x0, max_evals=2000, spread=0.05, xtol=1e-6, ftol=1e-10,
                lower=None, upper=None, penalty=0.0, adaptive=True, simplex=None):
    """Minimise ``fun(z) + penalty * box violation^2`` from ``x0``.

    Parameters
    ----------
    fun : callable
        Objective on flat float vectors. Non-finite values are treated as +inf
        except at ``x0``, where they raise :class:`DesignError`.
    spread : float
        Edge length of the initial right-angled simplex.
    xtol, ftol : float
        Stop once the simplex diameter (max-norm distance from the best
        vertex) is below ``xtol`` or the value spread is below ``ftol``.

    Returns
    -------
    SimplexResult
        ``x``/``fun`` are the best penalized point seen; the trace records
        the best-so-far value per iteration and never increases.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    dim = x0.size
    nfev = 0

    def f(z):
        nonlocal nfev
        nfev += 1
        val = fun(z)
        val = float(val) if np.isfinite(val) else np.inf
        return val + box_penalty(z, lower, upper, penalty)

    f0 = f(x0)
    if not np.isfinite(f0):
        raise DesignError("optimizer: objective is not finite at the starting point")

    alpha, gamma_, rho, sigma = _coefficients(dim, adaptive)
    if simplex is None:
        pts = np.vstack([x0, x0 + spread * np.eye(dim)])
    else:
        pts = np.asarray(simplex, dtype=float).copy()
    vals = np.empty(dim + 1)
    vals[0] = f0
    for i in range(1, dim + 1):
        vals[i] = f(pts[i])

    trace = []
    nit = 0
    converged = False
    while nfev < max_evals:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        diameter = float(np.max(np.abs(pts[1:] - pts[0]))) if dim else 0.0
        trace.append((nit, float(vals[0]), diameter))
        if diameter < xtol or (np.isfinite(vals[-1]) and vals[-1] - vals[0] < ftol):
            converged = True
            break
        nit += 1

        centroid = pts[:-1].mean(axis=0)
        xr = centroid + alpha * (centroid - pts[-1])
        fr = f(xr)
        if fr < vals[0]:
            xe = centroid + gamma_ * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                pts[-1], vals[-1] = xe, fe
            else:
                pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-1]:
            xc = centroid + rho * (xr - centroid)      # outside contraction
            fc = f(xc)
            if fc <= fr:
                pts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = centroid + rho * (pts[-1] - centroid)  # inside contraction
            fc = f(xc)
            if fc < vals[-1]:
                pts[-1], vals[-1] = xc, fc
                continue
        # shrink towards the best vertex
        for i in range(1, dim + 1):
            pts[i] = pts[0] + sigma * (pts[i] - pts[0])
            vals[i] = f(pts[i])

    best = int(np.argmin(vals))
    if not trace or trace[-1][1] != vals[best]:
        diameter = float(np.max(np.abs(pts - pts[best]))) if dim else 0.0
        trace.append((nit, float(vals[best]), diameter))
    return SimplexResult(x=pts[best].copy(), fun=float(vals[best]), nfev=nfev, nit=nit,
                         converged=converged, trace=trace)
