"""Baseline and starting designs: triangular lattice, Latin hypercubes, uniform.

Every generator is a pure function of ``(variant, n, d, seed)``; randomness
comes from :func:`numpy.random.default_rng` (PCG64, integer state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DesignError
from .geometry import CandidateGrid, _grid_for, as_design, fill_distance, separation

VARIANTS = ("lattice", "random-lhs", "maximin-lhs", "s-optimal-lhs", "uniform")
MAX_LATTICE_POINTS = 10_000
SWAP_ATTEMPTS = 10_000


@dataclass(frozen=True)
class DesignFamily:
    variant: str
    n: int
    d: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DesignError(f"unknown design family {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if self.n < 1 or self.d < 1:
            raise DesignError(f"design needs n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.variant == "lattice" and self.d != 2:
            raise DesignError("the triangular lattice is only defined for d = 2")
        if self.variant == "lattice" and self.n > MAX_LATTICE_POINTS:
            raise DesignError(f"lattice construction supports n <= {MAX_LATTICE_POINTS}, got {self.n}")


def generate(family, theta=None, grid=None):
    """Build the design described by ``family``.

    ``theta`` and ``grid`` are only used by the lattice, whose isotropic scale
    is chosen to minimise the fill distance under ``theta``.
    """
    f = family
    rng = np.random.default_rng(f.seed)
    if f.variant == "lattice":
        return scale_to_objective(triangular_lattice(f.n), MinFill(theta, grid))
    if f.variant == "uniform":
        return rng.random((f.n, f.d))
    x = random_lhs(f.n, f.d, rng)
    if f.variant == "maximin-lhs":
        x = _swap_search(x, rng, _MaximinState)
    elif f.variant == "s-optimal-lhs":
        x = _swap_search(x, rng, _HarmonicState)
    return x


# ---------------------------------------------------------------------------
# triangular lattice


def triangular_lattice(n):
    """``n`` points of an equilateral triangular lattice fitted into [0, 1]^2.

    A patch of ``rows = ceil(sqrt(2n / sqrt 3))`` offset rows is built with
    enough columns to hold ``n`` points; points nearest the edge of the patch
    are dropped first, then the remainder is scaled isotropically to touch
    the box and centred.
    """
    if n < 1:
        raise DesignError("lattice needs n >= 1")
    if n == 1:
        return np.array([[0.5, 0.5]])
    rows = max(1, math.ceil(math.sqrt(2.0 * n / math.sqrt(3.0))))
    cols = math.ceil(n / rows) + 1
    pts = np.array([(c + 0.5 * (r % 2), r * math.sqrt(3.0) / 2.0)
                    for r in range(rows) for c in range(cols)])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    edge = np.minimum(pts - lo, hi - pts).min(axis=1)
    # stable sort: among equally exposed points the later index goes first
    keep = np.sort(np.argsort(-edge, kind="stable")[:n])
    pts = pts[keep]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = (hi - lo).max()
    x = (pts - lo) / span if span > 0 else pts - lo
    x += 0.5 - 0.5 * (x.min(axis=0) + x.max(axis=0))
    return np.clip(x, 0.0, 1.0)


@dataclass
class MinFill:
    theta: object = None
    grid: object = None

    def __call__(self, x):
        return fill_distance(x, self.theta, _grid_for(self.grid, x.shape[1]))


@dataclass
class MaxSeparation:
    theta: object = None

    def __call__(self, x):
        return -separation(x, self.theta)[1]


def _max_scale(x, center):
    dev = x - center
    with np.errstate(divide="ignore"):
        s_hi = np.where(dev > 0, (1.0 - center) / dev, np.inf)
        s_lo = np.where(dev < 0, -center / dev, np.inf)
    return float(min(s_hi.min(), s_lo.min()))


def scale_to_objective(x, objective, scan=101, tol=1e-6):
    """Best isotropic rescaling ``c + s (x - c)`` of ``x`` about the box centre.

    The design is first recentred so its bounding box is centred in the
    unit square; ``s`` ranges over ``(0, s_max]`` with ``s_max`` the largest
    scale keeping all points in [0, 1]^d. A uniform scan of ``scan`` values is
    refined by golden-section search around the best one.
    """
    x = as_design(x, check_box=False)
    x = x + (0.5 - 0.5 * (x.min(axis=0) + x.max(axis=0)))
    c = np.full(x.shape[1], 0.5)
    s_max = _max_scale(x, c)
    if not np.isfinite(s_max):                      # a single point
        return np.clip(x, 0.0, 1.0)

    def at(s):
        return np.clip(c + s * (x - c), 0.0, 1.0)

    def val(s):
        return objective(at(s))

    ss = np.linspace(s_max / scan, s_max, scan)
    vals = np.array([val(s) for s in ss])
    k = int(np.argmin(vals))
    a, b = ss[max(k - 1, 0)], ss[min(k + 1, scan - 1)]
    best_s, best_v = ss[k], vals[k]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = b - invphi * (b - a), a + invphi * (b - a)
    f1, f2 = val(x1), val(x2)
    while b - a > tol * s_max:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = val(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = val(x2)
        for s, v in ((x1, f1), (x2, f2)):
            if v < best_v:
                best_s, best_v = s, v
    return at(best_s)


# ---------------------------------------------------------------------------
# Latin hypercubes


def random_lhs(n, d, rng):
    """One point per stratum ``[i/n, (i+1)/n)`` on every axis."""
    perms = np.stack([rng.permutation(n) for _ in range(d)], axis=1)
    return (perms + rng.random((n, d))) / n


class _MaximinState:
    """Lexicographic score: larger minimum distance, then smaller ``phi_p``."""

    p = 15

    def __init__(self, x):
        self.x = x
        self.D = _sqdist(x)
        self.iu = np.triu_indices(len(x), 1)

    def score(self, D):
        off = D[self.iu]
        dmin = off.min()
        phip = np.sum((off / dmin) ** (-self.p / 2.0))   # scaled to avoid overflow
        return (dmin, -phip)

    def better(self, new, old):
        return new > old


class _HarmonicState(_MaximinState):
    """Harmonic mean of pairwise distances (larger is better)."""

    def score(self, D):
        off = D[self.iu]
        if off.min() <= 0:
            return -np.inf
        return len(off) / np.sum(1.0 / np.sqrt(off))


def _sqdist(x):
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _swap_search(x, rng, state_cls, attempts=SWAP_ATTEMPTS):
    """Hill-climb by swapping one coordinate between two rows; keeps stratification."""
    n, d = x.shape
    if n < 3:
        return x
    x = x.copy()
    st = state_cls(x)
    cur = st.score(st.D)
    D = st.D
    for _ in range(attempts):
        k, i, j = rng.integers((d, n, n - 1))
        j = j + (j >= i)                       # distinct from i
        x[[i, j], k] = x[[j, i], k]
        Dn = D.copy()
        for r in (i, j):
            row = np.sum((x - x[r]) ** 2, axis=1)
            Dn[r, :] = row
            Dn[:, r] = row
        new = st.score(Dn)
        if st.better(new, cur):
            D, cur = Dn, new
        else:
            x[[i, j], k] = x[[j, i], k]
    return x


def min_distance(x):
    return float(pdist(x).min())


def harmonic_mean_distance(x):
    d = pdist(x)
    return float(len(d) / np.sum(1.0 / d))


def maximin_lhs(n, d=2, seed=0):
    return generate(DesignFamily("maximin-lhs", n, d, seed))


def s_optimal_lhs(n, d=2, seed=0):
    return generate(DesignFamily("s-optimal-lhs", n, d, seed))
