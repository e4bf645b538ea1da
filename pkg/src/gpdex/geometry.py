"""Distances, coverings and uniformity statistics on the unit cube.

Every "sup over the domain" is approximated on a :class:`CandidateGrid`.
Designs are plain ``(n, d)`` float arrays; :func:`as_design` validates them.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DesignError

DEFAULT_RESOLUTION = {1: 1001, 2: 101, 3: 21}
_TIE_RTOL = 1e-12


def as_design(points, check_box=True, min_points=1):
    """Return ``points`` as a validated ``(n, d)`` float array."""
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise DesignError(f"design must be 2-D (n, d), got shape {x.shape}")
    n, d = x.shape
    if d < 1:
        raise DesignError("design must have at least one column")
    if n < min_points:
        raise DesignError(f"design needs at least {min_points} point(s), got {n}")
    if not np.all(np.isfinite(x)):
        raise DesignError("design contains non-finite coordinates")
    if check_box and (x.min() < 0.0 or x.max() > 1.0):
        raise DesignError("design coordinates must lie in [0, 1]")
    return x


class Anisotropy:
    """Non-singular linear map Theta defining ``d_Theta(u, v) = ||Theta (u - v)||``."""

    def __init__(self, matrix):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DesignError(f"anisotropy must be a square matrix, got {m.shape}")
        if abs(np.linalg.det(m)) <= 1e-12:
            raise DesignError("anisotropy matrix is singular")
        self.matrix = m
        self.matrix.setflags(write=False)

    @classmethod
    def scalar(cls, c, d):
        """Theta = c * I_d."""
        return cls(float(c) * np.eye(d))

    @classmethod
    def diagonal(cls, values):
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def coerce(cls, theta, d):
        if isinstance(theta, Anisotropy):
            return theta
        arr = np.asarray(theta, dtype=float)
        if arr.ndim == 0:
            return cls.scalar(float(arr), d)
        if arr.ndim == 1:
            return cls.diagonal(arr)
        return cls(arr)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def is_diagonal(self):
        return np.count_nonzero(self.matrix - np.diag(np.diag(self.matrix))) == 0

    def transform(self, points):
        """Map rows ``x`` to ``Theta x``."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise DesignError(f"points have dimension {pts.shape[-1]}, anisotropy has {self.dim}")
        return pts @ self.matrix.T

    def scaled(self, c):
        return Anisotropy(c * self.matrix)

    def __eq__(self, other):
        return isinstance(other, Anisotropy) and np.array_equal(self.matrix, other.matrix)

    def __repr__(self):
        return f"Anisotropy({self.matrix.tolist()})"


@dataclass
class CandidateGrid:
    """Tensor grid over [0, 1]^d used to discretize suprema over the domain."""

    d: int
    resolution: int | None = None
    _points: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.resolution is None:
            self.resolution = DEFAULT_RESOLUTION.get(self.d, 11)
        if self.d < 1 or self.resolution < 2:
            raise DesignError("grid needs d >= 1 and resolution >= 2")

    @property
    def points(self):
        if self._points is None:
            axis = np.linspace(0.0, 1.0, self.resolution)
            mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
            pts = np.stack([m.ravel() for m in mesh], axis=1)
            pts.setflags(write=False)
            self._points = pts
        return self._points

    @property
    def mesh(self):
        return 1.0 / (self.resolution - 1)

    def __len__(self):
        return self.resolution**self.d


def _theta_for(theta, d):
    return Anisotropy(np.eye(d)) if theta is None else Anisotropy.coerce(theta, d)


def mahalanobis_distance(u, v, theta=None):
    """``||Theta (u - v)||_2``; Theta defaults to the identity."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise DesignError(f"points must be vectors of equal length, got {u.shape} and {v.shape}")
    th = _theta_for(theta, u.size)
    return float(np.linalg.norm(th.transform(u - v)))


def _grid_for(grid, d):
    if grid is None:
        return CandidateGrid(d)
    if isinstance(grid, CandidateGrid):
        if grid.d != d:
            raise DesignError(f"grid dimension {grid.d} does not match design dimension {d}")
        return grid
    return CandidateGrid(d, int(grid))


def nearest_assignment(x, theta, grid):
    """Nearest design index (ties to the lowest index) and distance for every grid point."""
    th = _theta_for(theta, x.shape[1])
    dist = cdist(th.transform(grid.points), th.transform(x))
    idx = np.argmin(dist, axis=1)
    return idx, dist[np.arange(dist.shape[0]), idx]


def fill_distance(x, theta=None, grid=None):
    """Grid approximation of ``sup_x min_i d_Theta(x_i, x)``."""
    x = as_design(x, check_box=False)
    g = _grid_for(grid, x.shape[1])
    _, dmin = nearest_assignment(x, theta, g)
    return float(dmin.max())


def separation(x, theta=None):
    """Per-point separation ``q_j`` (half the nearest-neighbour distance) and ``q = min_j q_j``."""
    x = as_design(x, check_box=False, min_points=2)
    th = _theta_for(theta, x.shape[1])
    dist = squareform(pdist(th.transform(x)))
    np.fill_diagonal(dist, np.inf)
    qj = 0.5 * dist.min(axis=1)
    return qj, float(qj.min())


@dataclass
class VoronoiSuprema:
    """Cell suprema; ``sup`` has one row per anisotropy, ``euclid`` is the Euclidean radius."""

    sup: np.ndarray
    euclid: np.ndarray
    assignment: np.ndarray

    @property
    def single(self):
        return self.sup[0]


def voronoi_sup_distances(x, thetas=None, grid=None):
    """Suprema of the distance from each design point over its (union) Voronoi cell.

    With one anisotropy the cells are ``V_i(Theta)``. With two, the union cells
    ``V_i(Theta_1) U V_i(Theta_2)`` are used and the suprema are reported under
    both distances. Cells are closed, so a grid point tied between several
    design points counts for each of them; ``assignment`` still breaks ties
    towards the lowest index. Cells containing no grid point get supremum 0.
    """
    x = as_design(x, check_box=False)
    n, d = x.shape
    g = _grid_for(grid, d)
    # a list/tuple of Anisotropy objects means "several"; anything else is one Theta
    if not (isinstance(thetas, (list, tuple)) and all(isinstance(t, Anisotropy) for t in thetas)):
        thetas = [thetas]
    ths = [_theta_for(t, d) for t in thetas]
    if not 1 <= len(ths) <= 2:
        raise DesignError("voronoi_sup_distances takes one or two anisotropies")

    gp = g.points
    dists, dmins, members = [], [], []
    for th in ths:
        dist = cdist(th.transform(gp), th.transform(x))
        dmin = dist.min(axis=1)
        dists.append(dist)
        dmins.append(dmin)
        # closed cells: a grid point on a shared boundary belongs to every tied cell
        members.append(dist <= dmin[:, None] * (1.0 + _TIE_RTOL))
    union = np.logical_or.reduce(members)

    sup = np.zeros((len(ths), n))
    for k in range(len(ths)):
        # inside its own cells the distance is the nearest distance, so
        # max over cells reproduces fill_distance bit for bit
        value = np.where(members[k], dmins[k][:, None], dists[k])
        sup[k] = np.where(union, value, 0.0).max(axis=0)
    euclid = np.where(union, cdist(gp, x), 0.0).max(axis=0)
    assignment = np.stack([np.argmin(dist, axis=1) for dist in dists])
    return VoronoiSuprema(sup=sup, euclid=euclid, assignment=assignment)


def star_discrepancy(x):
    """Exact star discrepancy by enumeration of critical rooted boxes.

    Upper corners range over the per-axis data coordinates together with 1.
    At each corner both the closed count (``x <= u``) and the open count
    (``x < u``) are compared with the box volume. Cost is O((n+1)^d n).
    """
    x = as_design(x)
    n, d = x.shape
    axes = [np.unique(np.append(x[:, k], 1.0)) for k in range(d)]
    corners = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)
    vol = np.prod(corners, axis=1)
    best = 0.0
    # chunk corners to bound memory at (chunk, n, d)
    chunk = max(1, 2_000_000 // max(1, n * d))
    for start in range(0, len(corners), chunk):
        c = corners[start:start + chunk, None, :]
        closed = np.all(x[None] <= c, axis=2).sum(axis=1) / n
        opened = np.all(x[None] < c, axis=2).sum(axis=1) / n
        v = vol[start:start + chunk]
        best = max(best, float(np.max(closed - v)), float(np.max(v - opened)))
    return min(1.0, best)


def write_design(path, x, header=True):
    """Write a design as CSV with 17 significant digits."""
    x = as_design(x)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow([f"x{k + 1}" for k in range(x.shape[1])])
    for row in x:
        writer.writerow([f"{v:.17g}" for v in row])
    Path(path).write_text(buf.getvalue())


def read_design(path):
    """Read a CSV design; a non-numeric first row is treated as a header."""
    rows = [r for r in csv.reader(Path(path).read_text().splitlines()) if r]
    if not rows:
        raise DesignError(f"{path}: empty design file")
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        x = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DesignError(f"{path}: non-numeric entry ({exc})") from None
    return as_design(x)
