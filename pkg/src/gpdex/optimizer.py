"""Design optimization: objectives, penalized Nelder-Mead and homotopy continuation.

A design is optimised over all ``n * d`` coordinates at once. Objectives are
evaluated on the design clipped to the unit box; the simplex additionally
pays ``penalty * sum(violation^2)`` for coordinates outside it. Evaluation
failures (singular matrices, empty cells) count as ``+inf``.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import (NominalCase2Config, _g_nominal, evaluate_all, lambda_min_lower_bound, nominal_bound_detail,
                     regression_inflation_bound)
from .designs import DesignFamily, MaxSeparation, MinFill, generate, scale_to_objective, triangular_lattice
from .errors import ConfigError, DesignError, GpdexError
from .geometry import CandidateGrid, _grid_for, as_design, separation
from .gp import FittedGP, RegressionBasis, as_basis, expected_param_error, mspe
from .kernels import LogisticWeights, NonStationaryKernel, QuadraticWeights, StationaryKernel, correlation_grad_rho
from .simplex import nelder_mead as _simplex

OBJECTIVE_KINDS = ("nominal-sup", "nominal-bound", "nominal-case2", "numeric-case1", "numeric-case2", "param-bound-sup", "custom")


@dataclass
class Objective:
    """A design criterion to minimise; ``fn`` maps an (n, d) design to a float."""

    kind: str
    fn: object = field(repr=False)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ConfigError(f"unknown objective {self.kind!r}")

    def __call__(self, x):
        try:
            v = float(self.fn(x))
        except (GpdexError, np.linalg.LinAlgError, FloatingPointError):
            return np.inf
        return v if np.isfinite(v) else np.inf


def nominal_sup(spec, basis=None, grid=41):
    """Grid supremum of the MSPE (with the regression term when ``basis`` is set)."""
    basis = as_basis(basis)

    def fn(x):
        g = _grid_for(grid, x.shape[1])
        model = FittedGP(x, np.zeros(len(x)), spec, basis, beta=np.zeros(basis.size(x.shape[1])))
        return float(np.max(mspe(model, g.points)))
    return Objective("nominal-sup", fn, {"kernel": spec.to_dict(), "basis": basis.to_dict()})


def nominal_bound_objective(spec, basis=None, grid=41, config=None):
    """Nominal MSPE bound ``g(y)``, plus the regression inflation term when ``basis`` has p >= 1.

    ``y`` is taken before flooring at zero; ``g`` is still decreasing there,
    so the objective keeps ranking designs whose bound is at its ceiling.
    Kind is ``"nominal-case2"`` for the two-component kernel.
    """
    basis = as_basis(basis)
    cfg = config or NominalCase2Config()
    kind = "nominal-case2" if isinstance(spec, NonStationaryKernel) else "nominal-bound"

    def fn(x):
        g = _grid_for(grid, x.shape[1])
        det = nominal_bound_detail(x, spec, g, cfg)
        v = _g_nominal(det.raw, spec.sigma2, len(x))
        if basis.size(x.shape[1]):
            v += regression_inflation_bound(x, spec, basis, g)
        return v
    return Objective(kind, fn, {"kernel": spec.to_dict(), "basis": basis.to_dict()})


def nominal_case2(spec, grid=41, config=None):
    """:func:`nominal_bound_objective` for the two-component kernel without regression."""
    if not isinstance(spec, NonStationaryKernel):
        raise ConfigError("nominal-case2 needs the two-component kernel")
    return nominal_bound_objective(spec, None, grid, config)


def numeric_case1(theta=None):
    """``-q(Theta)``: maximise the separation distance."""
    return Objective("numeric-case1", lambda x: -separation(x, theta)[1],
                     {"theta": None if theta is None else np.asarray(getattr(theta, "matrix", theta)).tolist()})


def numeric_case2(spec, spectral=None, coarsen=False):
    """Negative spectral lower bound on ``lambda_min`` for the two-component kernel."""
    def fn(x):
        return -lambda_min_lower_bound(x, spec, spectral, coarsen=coarsen).bound
    return Objective("numeric-case2", fn, {"kernel": spec.to_dict(), "coarsen": coarsen})


def param_bound_sup(spec, basis="constant", grid=41):
    """Grid supremum of the expected parameter-estimation bound plus that of the exact form."""
    basis = as_basis(basis)

    def fn(x):
        g = _grid_for(grid, x.shape[1])
        bound, exact = expected_param_error(x, spec, basis, g.points)
        return float(np.max(bound) + np.max(exact))
    return Objective("param-bound-sup", fn, {"kernel": spec.to_dict(), "basis": basis.to_dict()})


def lambda_min_cc(rho):
    """``-lambda_min(sum_ij g_ij g_ij')`` over design pairs; yields clustered designs."""
    rho = np.asarray(rho, dtype=float)

    def fn(x):
        G = correlation_grad_rho(rho, x).reshape(rho.size, -1)
        return -float(np.linalg.eigvalsh(G @ G.T)[0])
    return Objective("custom", fn, {"rho": rho.tolist(), "name": "lambda-min-cc"})


# ---------------------------------------------------------------------------
# Nelder-Mead over designs


@dataclass
class NmConfig:
    """Simplex settings. ``max_evals`` defaults to a desk-scale budget; the
    full-scale budget is ``20000 * n * d`` (see :meth:`full_scale`)."""

    max_evals: int = 4000
    spread: float = 0.05
    xtol: float = 1e-6
    ftol: float = 1e-10
    penalty: float = 1e3
    adaptive: bool = True
    restarts: int = 1

    def __post_init__(self):
        for name in ("max_evals", "spread", "xtol", "ftol", "penalty", "restarts"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"NmConfig.{name} must be positive")

    @classmethod
    def full_scale(cls, n, d, **kw):
        return cls(max_evals=20000 * n * d, **kw)


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    nfev: int
    trace: list
    converged: bool
    initial_value: float = np.nan


def optimize_design(objective, x0, cfg=None, scale=1.0):
    """Penalized Nelder-Mead over the flattened design.

    ``scale`` divides the objective (used to normalise blended objectives).
    The budget is split over ``cfg.restarts`` runs, each restarting the
    simplex around the best design so far. The returned design is clipped to
    the box and re-evaluated.
    """
    cfg = cfg or NmConfig()
    x0 = as_design(x0, check_box=False)
    shape = x0.shape

    def f(z):
        return objective(np.clip(z.reshape(shape), 0.0, 1.0)) / scale

    f0 = f(x0.ravel())
    if not np.isfinite(f0):
        raise DesignError("optimizer: objective is not finite at the initial design")
    z, trace, nfev = x0.ravel(), [], 1
    per_run = max(1, cfg.max_evals // cfg.restarts)
    for _ in range(cfg.restarts):
        res = _simplex(f, z, max_evals=per_run, spread=cfg.spread, xtol=cfg.xtol, ftol=cfg.ftol,
                       lower=0.0, upper=1.0, penalty=cfg.penalty, adaptive=cfg.adaptive)
        best = min(trace[-1][1], res.fun) if trace else res.fun
        trace.extend((len(trace), min(best, v), dia) for _, v, dia in res.trace)
        nfev += res.nfev
        z = res.x
    x = np.clip(z.reshape(shape), 0.0, 1.0)
    value = objective(x) / scale
    if not value <= f0:
        x, value = np.clip(x0, 0.0, 1.0), objective(np.clip(x0, 0.0, 1.0)) / scale
    return OptResult(x, float(value), nfev, trace, res.converged, float(f0))


def _norm(v):
    v = abs(v)
    return v if np.isfinite(v) and v > 0 else 1.0


def homotopy_optimize(source, target, x0, steps=10, cfg=None, normalize=True):
    """Minimise ``(1 - l) source + l target`` for ``l = 1/K, ..., 1``, warm-starting each stage.

    Each stage receives ``cfg.max_evals / K`` evaluations. With
    ``normalize=True`` both objectives are divided by their magnitude at
    ``x0`` so the blend is scale-free. Returns the ``l = 1`` result with the
    concatenated trace.
    """
    if steps < 1:
        raise ConfigError("homotopy needs at least one step")
    cfg = cfg or NmConfig()
    x0 = as_design(x0, check_box=False)
    s0 = _norm(source(x0)) if normalize else 1.0
    t0 = _norm(target(x0)) if normalize else 1.0
    stage_cfg = NmConfig(max(1, cfg.max_evals // steps), cfg.spread, cfg.xtol, cfg.ftol, cfg.penalty,
                         cfg.adaptive, cfg.restarts)
    x = x0
    trace, nfev = [], 0
    res = None
    for k in range(1, steps + 1):
        lam = k / steps
        if source is target or lam == 1.0:
            blend = Objective("custom", lambda z: target(z) / t0)
        else:
            blend = Objective("custom", lambda z, lam=lam: (1 - lam) * source(z) / s0 + lam * target(z) / t0)
        res = optimize_design(blend, x, stage_cfg)
        x = res.x
        nfev += res.nfev
        trace.extend((len(trace), v, dia) for _, v, dia in res.trace)
    value = target(x)
    return OptResult(x, float(value), nfev, trace, res.converged, float(target(x0)))


def write_trace(path, trace):
    """Progress log as CSV with columns iteration, best, diameter."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "best", "diameter"])
    for it, best, dia in trace:
        w.writerow([it, f"{best:.17g}", f"{dia:.17g}"])
    Path(path).write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# figure configurations

FIGURES = ("fig1-left", "fig1-middle", "fig1-right", "fig2-left", "fig2-right", "fig3-right")


@dataclass
class FigureResult:
    which: str
    design: np.ndarray
    report: object
    objective: str
    value: float
    initial_value: float
    nfev: int
    config: dict
    trace: list = field(repr=False, default_factory=list)
    wall_time: float = 0.0


def _fig_setup(which, grid):
    theta2 = StationaryKernel(1.0, 2.0, d=2)
    stationary = nominal_bound_objective(theta2, None, grid)
    if which == "fig1-left":
        return dict(spec=theta2, basis=None, init=("fill", 2.0), source=None, target=stationary)
    if which == "fig1-middle":
        spec = NonStationaryKernel(1.0, np.eye(2), 10 * np.eye(2), QuadraticWeights())
        return dict(spec=spec, basis=None, init=("fill", 2.0), source=stationary,
                    target=nominal_case2(spec, grid))
    if which == "fig1-right":
        return dict(spec=theta2, basis=RegressionBasis("linear"), init=("fill", 2.0), source=stationary,
                    target=nominal_bound_objective(theta2, "linear", grid))
    if which == "fig2-left":
        spec = StationaryKernel(1.0, 40.0, d=2)
        return dict(spec=spec, basis=None, init=("sep", 40.0), source=None, target=numeric_case1(spec.theta))
    if which == "fig2-right":
        spec = NonStationaryKernel(1.0, 40 * np.eye(2), 100 * np.eye(2), LogisticWeights(25.0, 0.5))
        return dict(spec=spec, basis=None, init=("sep", 40.0), source=numeric_case1(spec.theta1),
                    target=numeric_case2(spec, coarsen=False))
    if which == "fig3-right":
        spec = StationaryKernel.from_rho([3.0, 3.0], 1.0)
        return dict(spec=spec, basis=RegressionBasis("constant"), init=("fill", 3.0),
                    source=nominal_sup(spec, "constant", grid), target=param_bound_sup(spec, "constant", grid))
    raise ConfigError(f"unknown figure {which!r}; expected one of {', '.join(FIGURES)}")


def initial_design(n, kind, theta, grid=41):
    """Triangular lattice scaled to minimise fill (``"fill"``) or maximise separation (``"sep"``)."""
    lat = triangular_lattice(n)
    if kind == "fill":
        return scale_to_objective(lat, MinFill(theta, grid))
    return scale_to_objective(lat, MaxSeparation(theta))


# evaluation budget and homotopy steps per panel; cheap criteria get more evaluations
FIGURE_BUDGETS = {"fig1-left": (6000, 1), "fig1-middle": (6000, 10), "fig1-right": (6000, 10),
                  "fig2-left": (20000, 1), "fig2-right": (40000, 4), "fig3-right": (3000, 5)}


def reproduce_figure(which, n=23, seed=0, budget=None, steps=None, grid=41, restarts=3, jitter=0.01,
                     report_grid=None):
    """Optimise the design for one of the published panels and report its metrics.

    The lattice start is jittered by ``jitter * U(-1/2, 1/2)`` per coordinate
    using ``seed``. The exact lattice is a nonsmooth stationary point of the
    separation-based criteria, where every simplex vertex is worse than the
    start; the jitter lets the search leave it.
    """
    t0 = time.perf_counter()
    setup = _fig_setup(which, grid)
    budget = budget or FIGURE_BUDGETS[which][0]
    steps = steps or FIGURE_BUDGETS[which][1]
    kind, th = setup["init"]
    x0 = initial_design(n, kind, th, grid)
    if jitter:
        x0 = np.clip(x0 + jitter * (np.random.default_rng(seed).random(x0.shape) - 0.5), 0.0, 1.0)
    cfg = NmConfig(max_evals=budget, restarts=restarts)
    if setup["source"] is None:
        tgt = setup["target"]
        res = optimize_design(tgt, x0, cfg, scale=_norm(tgt(x0)))
        res.value, res.initial_value = tgt(res.x), tgt(x0)
    else:
        res = homotopy_optimize(setup["source"], setup["target"], x0, steps, cfg)
    report = evaluate_all(res.x, setup["spec"], setup["basis"], grid=report_grid or CandidateGrid(2, grid))
    config = {"figure": which, "n": n, "seed": seed, "budget": budget, "restarts": restarts, "jitter": jitter, "steps": steps if setup["source"] else 1,
              "grid": grid, "kernel": setup["spec"].to_dict(), "objective": setup["target"].kind,
              "source": None if setup["source"] is None else setup["source"].kind}
    return FigureResult(which, res.x, report, setup["target"].kind, res.value, res.initial_value, res.nfev,
                        config, res.trace, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# qualitative statistics used to check the reproduced panels


def nn_distance_cv(x):
    """Coefficient of variation of nearest-neighbour distances."""
    qj, _ = separation(x)
    return float(np.std(qj) / np.mean(qj))


def mean_corner_distance(x):
    x = as_design(x)
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * x.shape[1], indexing="ij")).reshape(x.shape[1], -1).T
    return float(np.mean(np.min(np.linalg.norm(x[:, None, :] - corners[None], axis=2), axis=1)))


def side_separation(x, axis=0, split=0.5, theta=None):
    """Mean ``q_j`` of points with ``x[axis] < split`` and ``>= split``."""
    qj, _ = separation(x, theta)
    left = x[:, axis] < split
    return float(np.mean(qj[left])), float(np.mean(qj[~left]))
