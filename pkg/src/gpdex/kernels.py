"""Covariance models built on the Gaussian base correlation ``phi(t) = exp(-t^2)``.

Two families are provided:

* :class:`StationaryKernel` ``sigma2 * phi(||Theta (u - v)||)``
* :class:`NonStationaryKernel` a convex mix of a wide (``Theta1``) and a
  narrow (``Theta2``) component, ``sigma2 * (w1(u) w1(v) phi_1 + w2(u) w2(v) phi_2)``
  with ``w1^2 + w2^2 = 1``.

Also here: the derivative of the stationary correlation with respect to
``rho`` (``Theta = diag(rho)``) and the spectral quantities used by the
minimum-eigenvalue lower bound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import expit, gamma

from .errors import ConfigError, DesignError
from .geometry import Anisotropy


def phi(t):
    """Gaussian base correlation, decreasing on t >= 0 with ``phi(0) = 1``."""
    return np.exp(-np.square(t))


def _as_points(a, d):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != d:
        raise DesignError(f"expected points of dimension {d}, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# weight models


class QuadraticWeights:
    """``w2(u)^2 = ||u||^2 / d`` and ``w1(u)^2 = 1 - w2(u)^2``.

    In d = 2 this is ``||u||^2 / 2``: all long-range correlation at the origin,
    all short-range at the far corner.
    """

    model = "quadratic"

    def squares(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        s2 = np.clip(np.sum(u * u, axis=1) / u.shape[1], 0.0, 1.0)
        return 1.0 - s2, s2

    def lipschitz(self, d=2):
        """Lipschitz constants ``(k1, k2)`` of ``(w1, w2)`` over [0,1]^d.

        ``w2 = ||u|| / sqrt(d)`` so ``k2 = 1/sqrt(d)``. ``w1 = sqrt(1 - ||u||^2/d)``
        has unbounded slope at the far corner, so ``k1`` is infinite; the
        nominal bound then falls back to a design-specific constant.
        """
        return np.inf, 1.0 / np.sqrt(d)

    def to_dict(self):
        return {"model": self.model}

    def __eq__(self, other):
        return isinstance(other, QuadraticWeights)


class LogisticWeights:
    """``w2(u)^2 = expit(slope * (u[axis] - center))`` and ``w1^2 = 1 - w2^2``."""

    model = "logistic"

    def __init__(self, slope=25.0, center=0.5, axis=0):
        if not np.isfinite(slope) or not np.isfinite(center):
            raise ConfigError("logistic weights need finite slope and center")
        self.slope = float(slope)
        self.center = float(center)
        self.axis = int(axis)

    def squares(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        z = self.slope * (u[:, self.axis] - self.center)
        # expit(-z) rather than 1 - expit(z) keeps w1 accurate where it is tiny
        return expit(-z), expit(z)

    def lipschitz(self, d=2):
        """Lipschitz constants ``(k1, k2)`` of ``(w1, w2)`` over [0,1]^d.

        With ``s = expit(z)``, ``d sqrt(s)/du = (slope/2) sqrt(s) (1 - s)``,
        maximised at ``s = 1/3`` where it equals ``slope / (3 sqrt 3)``. ``w1``
        is the mirror image (optimum at ``s = 2/3``). If the optimum is not
        attainable on [0, 1] the nearest attainable ``s`` is used.
        """
        a = abs(self.slope)
        lo = expit(a * (0.0 - self.center)) if self.slope >= 0 else expit(a * (self.center - 1.0))
        hi = expit(a * (1.0 - self.center)) if self.slope >= 0 else expit(a * self.center)

        def slope_at(s):
            return 0.5 * a * np.sqrt(s) * (1.0 - s)

        k2 = slope_at(np.clip(1.0 / 3.0, lo, hi))
        # w1 = sqrt(1 - s): same profile mirrored, optimum at s = 2/3
        k1 = slope_at(1.0 - np.clip(2.0 / 3.0, lo, hi))
        return float(k1), float(k2)

    def to_dict(self):
        return {"model": self.model, "slope": self.slope, "center": self.center}

    def __eq__(self, other):
        return isinstance(other, LogisticWeights) and (self.slope, self.center, self.axis) == (
            other.slope, other.center, other.axis)


def weights_from_dict(cfg):
    cfg = dict(cfg)
    model = cfg.pop("model", None)
    if model == "quadratic":
        return QuadraticWeights()
    if model == "logistic":
        return LogisticWeights(**cfg)
    raise ConfigError(f"unknown weight model {model!r} (expected 'quadratic' or 'logistic')")


# ---------------------------------------------------------------------------
# kernels


class StationaryKernel:
    """Case-1 covariance ``sigma2 * exp(-||Theta (u - v)||^2)``."""

    variant = "stationary"

    def __init__(self, sigma2=1.0, theta=None, d=None):
        if not sigma2 > 0 or not np.isfinite(sigma2):
            raise ConfigError(f"sigma2 must be positive and finite, got {sigma2}")
        if theta is None:
            if d is None:
                raise ConfigError("give theta or d")
            theta = np.eye(d)
        self.sigma2 = float(sigma2)
        self.theta = Anisotropy.coerce(theta, d or np.atleast_2d(theta).shape[-1])

    @classmethod
    def from_rho(cls, rho, sigma2=1.0):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho <= 0):
            raise ConfigError("rho must be positive")
        return cls(sigma2, np.diag(rho))

    @property
    def d(self):
        return self.theta.dim

    @property
    def rho(self):
        if not self.theta.is_diagonal:
            raise ConfigError("rho is only defined for a diagonal Theta")
        return np.diag(self.theta.matrix).copy()

    @property
    def sup_value(self):
        """``sup_{u,v} Psi(u, v)``."""
        return self.sigma2

    def with_params(self, sigma2=None, rho=None):
        s2 = self.sigma2 if sigma2 is None else sigma2
        if rho is None:
            return StationaryKernel(s2, self.theta)
        return StationaryKernel.from_rho(rho, s2)

    def correlation(self, a, b):
        a = _as_points(a, self.d)
        b = _as_points(b, self.d)
        return np.exp(-cdist(self.theta.transform(a), self.theta.transform(b), "sqeuclidean"))

    def matrix(self, a, b=None):
        b = a if b is None else b
        return self.sigma2 * self.correlation(a, b)

    def to_dict(self):
        return {"variant": self.variant, "sigma2": self.sigma2, "theta": self.theta.matrix.tolist()}

    def __eq__(self, other):
        return isinstance(other, StationaryKernel) and self.sigma2 == other.sigma2 and self.theta == other.theta

    def __repr__(self):
        return f"StationaryKernel(sigma2={self.sigma2}, theta={self.theta.matrix.tolist()})"


class NonStationaryKernel:
    """Case-2 covariance mixing a wide and a narrow Gaussian component."""

    variant = "nonstationary"

    def __init__(self, sigma2, theta1, theta2, weights):
        if not sigma2 > 0 or not np.isfinite(sigma2):
            raise ConfigError(f"sigma2 must be positive and finite, got {sigma2}")
        t1 = Anisotropy.coerce(theta1, np.atleast_2d(theta1).shape[-1] if not isinstance(theta1, Anisotropy) else theta1.dim)
        t2 = Anisotropy.coerce(theta2, t1.dim)
        if t1.dim != t2.dim:
            raise ConfigError("theta1 and theta2 must have the same dimension")
        # narrowness: lambda_max(Theta1' Xi2' Xi2 Theta1) < 1 with Xi2 = Theta2^{-1}
        m = np.linalg.solve(t2.matrix, t1.matrix)
        lam = float(np.linalg.eigvalsh(m.T @ m).max())
        if not lam < 1.0:
            raise ConfigError(
                f"kernels: second component must be narrower than the first "
                f"(lambda_max(Theta1' Xi2' Xi2 Theta1) = {lam:.6g} >= 1)")
        if isinstance(weights, dict):
            weights = weights_from_dict(weights)
        self.sigma2 = float(sigma2)
        self.theta1 = t1
        self.theta2 = t2
        self.weights = weights
        self.narrowness = lam

    @property
    def d(self):
        return self.theta1.dim

    @property
    def sup_value(self):
        # w1(u)w1(v) + w2(u)w2(v) <= 1 by Cauchy-Schwarz, equality at u = v
        return self.sigma2

    def scale_ratio(self, tol=1e-12):
        """Return ``a`` if ``Theta2 = a Theta1`` with ``a > 1``, else ``None``."""
        m1, m2 = self.theta1.matrix, self.theta2.matrix
        i = np.unravel_index(np.argmax(np.abs(m1)), m1.shape)
        a = m2[i] / m1[i]
        if a > 1 and np.allclose(m2, a * m1, rtol=tol, atol=tol * np.abs(m2).max()):
            return float(a)
        return None

    def omega(self, u):
        """``(w1(u), w2(u))`` as two arrays."""
        s1, s2 = self.weights.squares(_as_points(u, self.d))
        return np.sqrt(s1), np.sqrt(s2)

    def matrix(self, a, b=None):
        a = _as_points(a, self.d)
        b = a if b is None else _as_points(b, self.d)
        w1a, w2a = self.omega(a)
        w1b, w2b = self.omega(b)
        d1 = cdist(self.theta1.transform(a), self.theta1.transform(b), "sqeuclidean")
        d2 = cdist(self.theta2.transform(a), self.theta2.transform(b), "sqeuclidean")
        k = np.outer(w1a, w1b) * np.exp(-d1) + np.outer(w2a, w2b) * np.exp(-d2)
        # coincident points: w1^2 + w2^2 = 1 exactly, not up to rounding
        k[d1 == 0.0] = 1.0
        return self.sigma2 * k

    def to_dict(self):
        return {"variant": self.variant, "sigma2": self.sigma2,
                "theta1": self.theta1.matrix.tolist(), "theta2": self.theta2.matrix.tolist(),
                "weights": self.weights.to_dict()}

    def __eq__(self, other):
        return (isinstance(other, NonStationaryKernel) and self.sigma2 == other.sigma2
                and self.theta1 == other.theta1 and self.theta2 == other.theta2
                and self.weights == other.weights)

    def __repr__(self):
        return (f"NonStationaryKernel(sigma2={self.sigma2}, theta1={self.theta1.matrix.tolist()}, "
                f"theta2={self.theta2.matrix.tolist()}, weights={self.weights.to_dict()})")


def kernel_matrix(spec, a, b=None):
    """``Psi(A, B)`` with entries ``Psi(a_i, b_j)``."""
    return spec.matrix(a, b)


def kernel_eval(spec, u, v):
    """Scalar ``Psi(u, v)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape != (spec.d,):
        raise DesignError(f"points must both have shape ({spec.d},), got {u.shape} and {v.shape}")
    return float(spec.matrix(u[None], v[None])[0, 0])


def kernel_grad_rho(rho, u, v):
    """Gradient of ``exp(-sum_k rho_k^2 (u_k - v_k)^2)`` with respect to ``rho``."""
    rho = np.asarray(rho, dtype=float)
    dlt = np.asarray(u, dtype=float) - np.asarray(v, dtype=float)
    if dlt.shape != rho.shape:
        raise DesignError("rho, u and v must have the same length")
    return -2.0 * rho * dlt**2 * np.exp(-np.sum((rho * dlt) ** 2))


def correlation_grad_rho(rho, a, b=None):
    """Stack of ``d Phi(A, B) / d rho_k`` with shape ``(d, n_a, n_b)``."""
    rho = np.asarray(rho, dtype=float)
    a = _as_points(a, rho.size)
    b = a if b is None else _as_points(b, rho.size)
    diff2 = (a[:, None, :] - b[None, :, :]) ** 2
    corr = np.exp(-np.tensordot(diff2, rho**2, axes=([2], [0])))
    return -2.0 * rho[:, None, None] * np.moveaxis(diff2, 2, 0) * corr[None]


# ---------------------------------------------------------------------------
# spectral quantities for the Gaussian base


def fourier_min(M, d):
    """``inf_{||w|| <= 2M}`` of the Fourier transform of ``exp(-||x||^2)``.

    The transform (convention ``(2 pi)^{-d/2} int f e^{-i w'x}``) is
    ``2^{-d/2} exp(-||w||^2 / 4)``, radially decreasing, so the infimum sits
    at ``||w|| = 2M``.
    """
    if not M > 0:
        raise DesignError(f"M must be positive, got {M}")
    return 2.0 ** (-d / 2.0) * np.exp(-float(M) ** 2)


def upsilon_zero(M, d):
    """``Upsilon_M(0) = fourier_min(M) / Gamma(d/2 + 1) * (M / 2^{3/2})^d``."""
    return fourier_min(M, d) / gamma(d / 2.0 + 1.0) * (float(M) / 2.0**1.5) ** d


def upsilon_argmax(d):
    """Maximiser ``sqrt(d/2)`` of ``M -> upsilon_zero(M, d)``."""
    return np.sqrt(d / 2.0)


def default_c_star(d):
    """``1.1 * 12 * (18 / (pi Gamma(d/2+1)^2))^{-1/(d+1)}``.

    With this choice the subtracted term in each ``ell_i`` is
    ``(q / q_i) / 1.1^{d+1}``, so the bracket stays positive.
    """
    return 1.1 * 12.0 * (18.0 / (np.pi * gamma(d / 2.0 + 1.0) ** 2)) ** (-1.0 / (d + 1.0))


@dataclass(frozen=True)
class SpectralConfig:
    d: int = 2
    c_star: float | None = None

    def __post_init__(self):
        if self.c_star is None:
            object.__setattr__(self, "c_star", float(default_c_star(self.d)))
        if not self.c_star > 0:
            raise ConfigError(f"c_star must be positive, got {self.c_star}")


# ---------------------------------------------------------------------------
# serialization


def kernel_from_dict(cfg):
    cfg = dict(cfg)
    variant = cfg.get("variant", "stationary")
    sigma2 = float(cfg.get("sigma2", 1.0))
    if variant == "stationary":
        if "rho" in cfg:
            return StationaryKernel.from_rho(cfg["rho"], sigma2)
        if "theta" not in cfg:
            raise ConfigError("stationary kernel needs 'theta' or 'rho'")
        theta = np.asarray(cfg["theta"], dtype=float)
        d = theta.shape[-1] if theta.ndim else cfg.get("d", 2)
        return StationaryKernel(sigma2, theta, d=d)
    if variant == "nonstationary":
        for key in ("theta1", "theta2", "weights"):
            if key not in cfg:
                raise ConfigError(f"nonstationary kernel needs {key!r}")
        t1 = np.asarray(cfg["theta1"], dtype=float)
        if t1.ndim == 0:
            t1 = float(t1) * np.eye(int(cfg.get("d", 2)))
        t2 = np.asarray(cfg["theta2"], dtype=float)
        if t2.ndim == 0:
            t2 = float(t2) * np.eye(t1.shape[0])
        return NonStationaryKernel(sigma2, t1, t2, weights_from_dict(cfg["weights"]))
    raise ConfigError(f"unknown kernel variant {variant!r}")


def kernel_to_dict(spec):
    return spec.to_dict()


def load_kernel(path):
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return kernel_from_dict(cfg)
