"""Computable error bounds for a design under a given kernel.

Nominal error: the fill-distance bound (stationary kernel) and its
union-cell analogue (two-component kernel), plus the regression-term
inflation bound. Numeric error: ``g(X, Psi)``, its Gershgorin upper variant,
the floating-point error bound at a query point and the spectral lower bound
on ``lambda_min(Psi(X, X))``. :func:`evaluate_all` collects everything into a
:class:`MetricReport`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import linalg

from .errors import ConfigError, DegeneracyError, GpdexError
from .geometry import (
    CandidateGrid,
    _grid_for,
    as_design,
    fill_distance,
    separation,
    star_discrepancy,
    voronoi_sup_distances,
)
from .gp import as_basis, expected_param_error, spd_factor
from .kernels import NonStationaryKernel, SpectralConfig, StationaryKernel, phi, upsilon_zero


# ---------------------------------------------------------------------------
# configuration


@dataclass
class NominalCase2Config:
    """Lipschitz constants of ``w1``, ``w2`` and the grid for the two-component bound.

    ``None`` takes the weight model's closed-form constant; an infinite
    closed-form constant is replaced by the largest difference quotient
    ``|w(x) - w(x_i)| / ||x - x_i||`` over the union cells of the design.
    """

    k1: float | None = None
    k2: float | None = None
    grid: CandidateGrid | int | None = None

    def __post_init__(self):
        for k in (self.k1, self.k2):
            if k is not None and not k >= 0:
                raise ConfigError(f"Lipschitz constants must be non-negative, got {k}")


@dataclass(frozen=True)
class FloatConfig:
    """Relative machine accuracy ``delta`` used by the floating-point bound."""

    delta: float = 1e-15

    def __post_init__(self):
        if not self.delta >= 0 or not np.isfinite(self.delta):
            raise ConfigError(f"delta must be a non-negative finite number, got {self.delta}")


def _is_case2(spec):
    return isinstance(spec, NonStationaryKernel)


def _check_spec(spec):
    if not isinstance(spec, (StationaryKernel, NonStationaryKernel)):
        raise ConfigError(f"unsupported kernel {type(spec).__name__}")


def _g_nominal(y, sigma2, k):
    """``(sigma2/k) (1 - y) (2k - 1 + y)``, decreasing in ``y`` on [0, 1]."""
    return sigma2 / k * (1.0 - y) * (2.0 * k - 1.0 + y)


# ---------------------------------------------------------------------------
# nominal error


def effective_lipschitz(spec, x, cells):
    """Largest ``|w_j(x) - w_j(x_i)| / ||x - x_i||`` over grid points of the union cells.

    ``cells`` is ``(grid_points, members)`` with ``members`` the boolean
    (m, n) union-cell membership.
    """
    gp, members = cells
    w1g, w2g = spec.omega(gp)
    w1x, w2x = spec.omega(x)
    dist = np.linalg.norm(gp[:, None, :] - x[None, :, :], axis=2)
    ok = members & (dist > 0)
    out = []
    for wg, wx in ((w1g, w1x), (w2g, w2x)):
        q = np.abs(wg[:, None] - wx[None, :]) / np.where(ok, dist, 1.0)
        out.append(float(np.max(np.where(ok, q, 0.0))) if ok.any() else 0.0)
    return tuple(out)


def _union_members(x, spec, grid):
    from scipy.spatial.distance import cdist

    gp = grid.points
    members = []
    for th in (spec.theta1, spec.theta2):
        dist = cdist(th.transform(gp), th.transform(x))
        dmin = dist.min(axis=1)
        members.append(dist <= dmin[:, None] * (1.0 + 1e-12))
    return gp, members[0] | members[1]


@dataclass
class NominalDetail:
    bound: float
    argument: float           # y fed into g(y)
    k1: float
    k2: float
    remainder: float          # (k1 + k2) * max euclidean cell radius
    raw: float = float("nan")  # main term minus remainder, before flooring at 0


def nominal_bound_detail(x, spec, grid=None, config=None):
    x = as_design(x)
    _check_spec(spec)
    n, d = x.shape
    if not _is_case2(spec):
        g = _grid_for(grid, d)
        h = fill_distance(x, spec.theta, g)
        y = float(phi(h))
        return NominalDetail(_g_nominal(y, spec.sigma2, n), y, 0.0, 0.0, 0.0, y)
    config = config or NominalCase2Config()
    g = _grid_for(config.grid if grid is None else grid, d)
    vor = voronoi_sup_distances(x, [spec.theta1, spec.theta2], g)
    s1, s2 = spec.weights.squares(x)
    main = float(np.min(s1 * phi(vor.sup[0]) + s2 * phi(vor.sup[1])))
    kc1, kc2 = spec.weights.lipschitz(d)
    k1 = kc1 if config.k1 is None else config.k1
    k2 = kc2 if config.k2 is None else config.k2
    if not (np.isfinite(k1) and np.isfinite(k2)):
        e1, e2 = effective_lipschitz(spec, x, _union_members(x, spec, g))
        k1 = e1 if not np.isfinite(k1) else k1
        k2 = e2 if not np.isfinite(k2) else k2
    rem = (k1 + k2) * float(vor.euclid.max())     # phi(0) = 1
    y = max(0.0, main - rem)
    return NominalDetail(_g_nominal(y, spec.sigma2, n), y, float(k1), float(k2), rem, main - rem)


def nominal_bound(x, spec, grid=None, config=None):
    """Upper bound on the grid supremum of the zero-mean MSPE.

    Stationary kernel: ``(sigma2/n) (1 - phi(h)) (2n - 1 + phi(h))`` with
    ``h`` the fill distance under ``Theta``. Two-component kernel: the same
    ``g(y)`` with ``y`` the union-cell lower bound on the covariance between
    a design point and any point of its cell, floored at 0.
    """
    return nominal_bound_detail(x, spec, grid, config).bound


def _lambda_min_hh(H):
    return float(np.linalg.eigvalsh(H.T @ H)[0])


def regression_inflation_bound(x, spec, basis, grid=None):
    """``max_grid n sup Psi ||h(x) - H' Psi^-1 Psi(X, x)||^2 / lambda_min(H'H)``."""
    x = as_design(x)
    basis = as_basis(basis)
    n, d = x.shape
    H = basis(x)
    if H.shape[1] == 0:
        raise ConfigError("regression_inflation_bound needs a basis with p >= 1")
    lam = _lambda_min_hh(H)
    if lam <= 1e-12:
        raise DegeneracyError(f"bounds: lambda_min(H'H) = {lam:.3g}; the basis is rank deficient on the design")
    g = _grid_for(grid, d)
    chol = spd_factor(spec.matrix(x))
    gp = g.points
    c1 = basis(gp) - spec.matrix(gp, x) @ linalg.cho_solve(chol, H)
    return float(n * spec.sup_value * np.max(np.sum(c1 * c1, axis=1)) / lam)


# ---------------------------------------------------------------------------
# numeric error


@dataclass
class Spectrum:
    lambda_min: float
    lambda_max: float

    @property
    def condition(self):
        return self.lambda_max / self.lambda_min if self.lambda_min > 0 else np.inf


def spectrum(x, spec):
    lam = np.linalg.eigvalsh(spec.matrix(as_design(x, check_box=False)))
    return Spectrum(float(lam[0]), float(lam[-1]))


def numeric_g(x, spec, gershgorin=False):
    """``(kappa + 1) / lambda_min``; with ``gershgorin=True`` the upper variant
    ``(n sup Psi / lambda_min + 1) / lambda_min``."""
    s = spectrum(x, spec)
    if not s.lambda_min > 0:
        raise DegeneracyError(f"bounds: lambda_min(Psi) = {s.lambda_min:.3g} is not positive")
    if gershgorin:
        n = len(x)
        return (n * spec.sup_value / s.lambda_min + 1.0) / s.lambda_min
    return (s.condition + 1.0) / s.lambda_min


def numeric_error_bound(x, spec, basis, observations, beta, x0, float_config=None):
    """Floating-point error bound on the BLUP at ``x0``.

    ``delta ||h|| ||beta|| + 2 delta / (1 - r) ||Psi(x0, X)||
    (||f(X)|| + ||beta|| sqrt(sum_j ||h_j(X)||^2)) g`` with ``r = kappa delta``.
    Returns ``inf`` when ``r >= 1``.
    """
    x = as_design(x, check_box=False)
    fc = float_config or FloatConfig()
    basis = as_basis(basis)
    delta = fc.delta
    s = spectrum(x, spec)
    if not s.lambda_min > 0:
        raise DegeneracyError(f"bounds: lambda_min(Psi) = {s.lambda_min:.3g} is not positive")
    r = s.condition * delta
    if r >= 1:
        return np.inf
    g = (s.condition + 1.0) / s.lambda_min
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    f = np.asarray(observations, dtype=float).ravel()
    beta = np.zeros(basis.size(x.shape[1])) if beta is None else np.asarray(beta, dtype=float).ravel()
    bnorm = float(np.linalg.norm(beta))
    hx = float(np.linalg.norm(basis(x0))) if beta.size else 0.0
    hX = float(np.linalg.norm(basis(x))) if beta.size else 0.0    # Frobenius = sqrt(sum_j ||h_j||^2)
    kx = float(np.linalg.norm(spec.matrix(x0, x)))
    return delta * hx * bnorm + 2.0 * delta / (1.0 - r) * kx * (float(np.linalg.norm(f)) + bnorm * hX) * g


@dataclass
class LambdaMinBound:
    bound: float
    ell: np.ndarray           # per-point ell_i (stationary) or combined weight (two-component)
    vacuous: bool


def _ell(q, qj, M, d, c_star, ups):
    factor = math.gamma(d / 2 + 1) ** 2 * math.pi / 18.0 * (12.0 / c_star) ** (d + 1)
    return ups * (1.0 - factor * (q / qj))


def lambda_min_lower_bound(x, spec, spectral=None, coarsen=True):
    """Spectral lower bound on ``lambda_min(Psi(X, X))``.

    Stationary kernel: ``sigma2 min_i ell_i`` with
    ``ell_i = Upsilon_M(0) (1 - Gamma(d/2+1)^2 pi / 18 (q/q_i) (12/c*)^(d+1))``
    at ``M = c*/q``. Two-component kernel with ``Theta2 = a Theta1``:
    ``sigma2 min_i (w1(x_i)^2 ell_i(Theta1) + w2(x_i)^2 ell_i(Theta2))``; with
    ``coarsen=True`` ``Upsilon_M(0)`` is replaced by its running infimum over
    ``[r*, M]``, ``r* = c* / max d_Theta1``. Non-positive values are returned
    raw with ``vacuous=True``.
    """
    x = as_design(x)
    _check_spec(spec)
    n, d = x.shape
    sc = spectral or SpectralConfig(d)
    if sc.d != d:
        sc = SpectralConfig(d, sc.c_star)
    c = sc.c_star

    def ell_for(theta, coarse_r=None):
        qj, q = separation(x, theta)
        if q <= 0:
            return np.zeros(n)
        M = c / q
        ups = upsilon_zero(M, d)
        if coarse_r is not None:
            lo, hi = sorted((coarse_r, M))
            # Upsilon_m(0) is unimodal in m, so the infimum over [lo, hi] is at an end
            ups = min(upsilon_zero(lo, d), upsilon_zero(hi, d))
        return _ell(q, qj, M, d, c, ups)

    if not _is_case2(spec):
        ell = ell_for(spec.theta)
    else:
        if spec.scale_ratio() is None:
            raise ConfigError("bounds: the two-component lower bound needs Theta2 = a Theta1 with a > 1")
        r_star = None
        if coarsen:
            corners = np.array(np.meshgrid(*[[0.0, 1.0]] * d, indexing="ij")).reshape(d, -1).T
            diam = max(np.linalg.norm(spec.theta1.transform(u - v)) for u in corners for v in corners)
            r_star = c / diam
        s1, s2 = spec.weights.squares(x)
        ell = s1 * ell_for(spec.theta1, r_star) + s2 * ell_for(spec.theta2, r_star)
    b = spec.sigma2 * float(np.min(ell))
    return LambdaMinBound(b, ell, not b > 0)


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricReport:
    """All design metrics and bounds; ``None`` fields carry a reason in ``flags``."""

    n: int
    d: int
    kernel: str
    grid_resolution: int
    fill_distance: list
    separation_q: float | None
    separation_qj: list | None
    star_discrepancy: float | None
    lambda_min: float | None
    lambda_max: float | None
    condition: float | None
    thm2_bound: float | None
    regression_bound: float | None
    prop2_bound: float | None
    g: float | None
    g_gershgorin: float | None
    thm3_lower: float | None
    thm3_vacuous: bool
    thm4_sup: float | None
    flags: dict = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, include_time=False):
        out = asdict(self)
        if not include_time:
            out.pop("wall_time")
        return {k: _jsonable(v) for k, v in out.items()}

    def to_json(self, include_time=False):
        return json.dumps(self.to_dict(include_time), indent=2, sort_keys=True)

    def csv_header(self):
        return [f.name for f in fields(self) if f.name not in ("separation_qj", "flags", "wall_time")]

    def csv_row(self):
        d = self.to_dict()
        row = []
        for name in self.csv_header():
            v = d[name]
            if isinstance(v, list):
                v = ";".join(repr(t) for t in v)
            row.append("" if v is None else v)
        return row

    def to_csv(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return [_jsonable(t) for t in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(t) for t in v]
    if isinstance(v, dict):
        return {k: _jsonable(t) for k, t in v.items()}
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def evaluate_all(x, spec, basis=None, float_config=None, spectral=None, grid=None,
                 observations=None, beta=None, case2=None):
    """Compute every metric for design ``x``.

    Component failures are recorded in ``flags`` and leave the field ``None``
    rather than aborting. The floating-point error bound needs
    ``observations``; it is evaluated at the grid point farthest from the
    design.
    """
    t0 = time.perf_counter()
    x = as_design(x)
    _check_spec(spec)
    n, d = x.shape
    g = _grid_for(grid, d)
    basis = as_basis(basis)
    flags = {}

    def attempt(name, fn):
        try:
            return fn()
        except GpdexError as exc:
            flags[name] = str(exc)
            return None

    thetas = [spec.theta] if not _is_case2(spec) else [spec.theta1, spec.theta2]
    fills = [fill_distance(x, th, g) for th in thetas]
    sep = attempt("separation", lambda: separation(x, thetas[0]))
    qj, q = (None, None) if sep is None else (sep[0].tolist(), sep[1])
    if q == 0.0:
        flags["separation"] = "design has coincident points (q = 0)"
    dstar = attempt("star_discrepancy", lambda: star_discrepancy(x))
    sp = spectrum(x, spec)
    # below n * eps * lambda_max the computed eigenvalue is rounding noise
    lam_ok = sp.lambda_min > n * np.finfo(float).eps * sp.lambda_max
    if not lam_ok:
        flags["lambda_min"] = f"lambda_min(Psi) = {sp.lambda_min:.3g} is numerically zero"
    thm2 = attempt("thm2_bound", lambda: nominal_bound(x, spec, g, case2))
    reg = None
    if basis.size(d):
        reg = attempt("regression_bound", lambda: regression_inflation_bound(x, spec, basis, g))
    else:
        flags["regression_bound"] = "no regression basis"
    gval = (sp.condition + 1.0) / sp.lambda_min if lam_ok else None
    gg = (n * spec.sup_value / sp.lambda_min + 1.0) / sp.lambda_min if lam_ok else None
    prop2 = None
    if observations is None:
        flags["prop2_bound"] = "requires observations"
    elif lam_ok:
        from .geometry import nearest_assignment
        th0 = thetas[0]
        _, dmin = nearest_assignment(x, th0, g)
        x0 = g.points[int(np.argmax(dmin))]
        prop2 = attempt("prop2_bound", lambda: numeric_error_bound(x, spec, basis, observations, beta, x0,
                                                                    float_config))
        if prop2 is not None and not np.isfinite(prop2):
            flags["prop2_bound"] = "kappa * delta >= 1; floating-point assumption violated"
    thm3 = attempt("thm3_lower", lambda: lambda_min_lower_bound(x, spec, spectral))
    thm3_val = None if thm3 is None else thm3.bound
    vacuous = True if thm3 is None else thm3.vacuous
    if thm3 is not None and thm3.vacuous:
        flags["thm3_lower"] = "bound is not positive (vacuous)"
    thm4 = None
    if _is_case2(spec):
        flags["thm4_sup"] = "parameter bound needs the stationary kernel"
    elif lam_ok:
        def _thm4():
            b, _ = expected_param_error(x, spec, basis, g.points)
            return float(np.max(b))
        thm4 = attempt("thm4_sup", _thm4)
    return MetricReport(
        n=n, d=d, kernel=spec.variant, grid_resolution=g.resolution,
        fill_distance=fills, separation_q=q, separation_qj=qj, star_discrepancy=dstar,
        lambda_min=sp.lambda_min, lambda_max=sp.lambda_max,
        condition=sp.condition if lam_ok else None,
        thm2_bound=thm2, regression_bound=reg, prop2_bound=prop2, g=gval, g_gershgorin=gg,
        thm3_lower=thm3_val, thm3_vacuous=vacuous, thm4_sup=thm4, flags=flags,
        wall_time=time.perf_counter() - t0)
