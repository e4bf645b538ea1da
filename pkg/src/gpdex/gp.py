"""BLUP, MSPE, likelihood, Fisher information and prediction sensitivities.

The parameter vector is ordered ``(beta, sigma2, rho)`` throughout. The
likelihood and Fisher machinery assume the stationary kernel written as
``sigma2 * Phi_rho`` with ``Phi_rho(u, v) = exp(-sum_k rho_k^2 (u_k - v_k)^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigError, DegeneracyError, DesignError, FactorizationError
from .geometry import as_design
from .kernels import StationaryKernel, correlation_grad_rho
from .simplex import nelder_mead

BASIS_KINDS = ("none", "constant", "linear", "kernel-centers")


# ---------------------------------------------------------------------------
# regression basis


@dataclass(frozen=True, eq=False)
class RegressionBasis:
    """Fixed regression functions ``h(x)``.

    ``linear`` is the constant plus one centred linear term per axis,
    ``2 x_k - 1``, so every column lives on the same [-1, 1] scale.
    ``kernel-centers`` uses covariance sections ``Psi(c_j, x)``.
    """

    kind: str = "none"
    centers: np.ndarray | None = None
    kernel: object | None = None

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ConfigError(f"unknown basis {self.kind!r}; expected one of {', '.join(BASIS_KINDS)}")
        if self.kind == "kernel-centers":
            if self.centers is None or self.kernel is None:
                raise ConfigError("kernel-centers basis needs centers and a kernel")
            c = as_design(self.centers, check_box=False)
            if len(np.unique(c, axis=0)) != len(c):
                raise ConfigError("kernel-centers basis needs distinct centers")
            object.__setattr__(self, "centers", c)

    @classmethod
    def kernel_centers(cls, centers, kernel):
        return cls("kernel-centers", centers, kernel)

    def size(self, d):
        return {"none": 0, "constant": 1, "linear": d + 1}.get(self.kind, 0 if self.centers is None else len(self.centers))

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m, d = x.shape
        if self.kind == "none":
            return np.zeros((m, 0))
        if self.kind == "constant":
            return np.ones((m, 1))
        if self.kind == "linear":
            return np.hstack([np.ones((m, 1)), 2.0 * x - 1.0])
        return self.kernel.matrix(x, self.centers)

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "kernel-centers":
            out["centers"] = self.centers.tolist()
        return out


def as_basis(basis):
    if basis is None:
        return RegressionBasis("none")
    if isinstance(basis, RegressionBasis):
        return basis
    return RegressionBasis(str(basis))


@dataclass
class ParameterVector:
    beta: np.ndarray
    sigma2: float
    rho: np.ndarray

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        if not self.sigma2 > 0:
            raise ConfigError(f"sigma2 must be positive, got {self.sigma2}")
        if np.any(self.rho <= 0):
            raise ConfigError("rho must be positive")

    def as_array(self):
        return np.concatenate([self.beta, [self.sigma2], self.rho])

    @classmethod
    def from_array(cls, v, p):
        v = np.asarray(v, dtype=float)
        return cls(v[:p], float(v[p]), v[p + 1:])

    def kernel(self):
        return StationaryKernel.from_rho(self.rho, self.sigma2)

    def to_dict(self):
        return {"beta": self.beta.tolist(), "sigma2": self.sigma2, "rho": self.rho.tolist()}


# ---------------------------------------------------------------------------
# linear algebra helpers


def condition_estimate(a):
    lam = np.linalg.eigvalsh(a)
    return float(lam[-1] / lam[0]) if lam[0] > 0 else np.inf


def spd_factor(a, what="Psi(X,X)"):
    """Lower Cholesky factor; raises :class:`FactorizationError` with a condition estimate."""
    try:
        return linalg.cho_factor(a, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError):
        cond = condition_estimate(a) if np.all(np.isfinite(a)) else np.inf
        raise FactorizationError(f"gp: Cholesky factorization of {what} failed "
                                 f"(condition estimate {cond:.3g})", cond) from None


def _solve(c, b):
    return linalg.cho_solve(c, b, check_finite=False)


def _logdet(c):
    return 2.0 * float(np.sum(np.log(np.diag(c[0]))))


def _gls(chol, H, f):
    """GLS coefficients, plus the factor of ``H' Psi^-1 H``."""
    A = H.T @ _solve(chol, H)
    a_chol = spd_factor(A, "H' Psi^-1 H")
    return _solve(a_chol, H.T @ _solve(chol, f)), a_chol


def _stationary_rho(spec):
    if not isinstance(spec, StationaryKernel):
        raise ConfigError("this operation needs the stationary kernel sigma2 * Phi_rho")
    return spec.rho


# ---------------------------------------------------------------------------
# fitted model


class FittedGP:
    """Emulator built on a design, observations, kernel and basis.

    ``beta`` defaults to the GLS estimate; pass it to hold it fixed.
    ``nugget`` adds ``nugget * I`` before factorizing and exists for the
    benchmark harness only.
    """

    def __init__(self, design, observations, spec, basis=None, beta=None, nugget=0.0):
        self.design = as_design(design, check_box=False)
        self.observations = np.asarray(observations, dtype=float).ravel()
        n = self.design.shape[0]
        if self.observations.size != n:
            raise DesignError(f"gp: {self.observations.size} observations for {n} design points")
        self.spec = spec
        self.basis = as_basis(basis)
        self.nugget = float(nugget)
        K = spec.matrix(self.design)
        if self.nugget:
            K = K + self.nugget * np.eye(n)
        self.K = K
        self.chol = spd_factor(K)
        self.H = self.basis(self.design)
        p = self.H.shape[1]
        self.a_chol = None
        if p:
            if n < p:
                raise DesignError(f"gp: need n >= p, got n={n}, p={p}")
            beta_gls, self.a_chol = _gls(self.chol, self.H, self.observations)
            self.beta = beta_gls if beta is None else np.asarray(beta, dtype=float).ravel()
        else:
            self.beta = np.zeros(0)
        self.delta = self.observations - self.H @ self.beta
        self.alpha = _solve(self.chol, self.delta)

    @property
    def n(self):
        return self.design.shape[0]

    @property
    def p(self):
        return self.H.shape[1]

    def solve(self, b):
        return _solve(self.chol, b)

    def params(self):
        return ParameterVector(self.beta, self.spec.sigma2, _stationary_rho(self.spec))

    def predict(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = self.spec.matrix(x, self.design)
        return self.basis(x) @ self.beta + k @ self.alpha

    def mspe(self, x, form="partitioned"):
        return mspe(self, x, form=form)

    def to_dict(self, design_path=None):
        out = {"kernel": self.spec.to_dict(), "basis": self.basis.to_dict(),
               "beta": self.beta.tolist(), "sigma2": self.spec.sigma2}
        if isinstance(self.spec, StationaryKernel) and self.spec.theta.is_diagonal:
            out["rho"] = self.spec.rho.tolist()
        if design_path is not None:
            out["design"] = str(design_path)
        return out


def gls_beta(design, observations, spec, basis):
    """Generalised least-squares estimate of ``beta``."""
    x = as_design(design, check_box=False)
    H = as_basis(basis)(x)
    if H.shape[1] == 0:
        raise ConfigError("gls_beta needs a basis with p >= 1")
    if x.shape[0] < H.shape[1]:
        raise DesignError("gls_beta needs n >= p")
    chol = spd_factor(spec.matrix(x))
    return _gls(chol, H, np.asarray(observations, dtype=float).ravel())[0]


def blup_predict(model, x):
    """BLUP ``h(x)'beta + Psi(x, X) Psi^-1 (f - H beta)``; scalar for a single point."""
    out = model.predict(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def mspe(model, x, form="partitioned"):
    """Mean squared prediction error at the model's (true) parameters.

    ``form="partitioned"`` evaluates the kriging-variance decomposition
    ``Psi(x,x) - k' Psi^-1 k + c1' (H' Psi^-1 H)^-1 c1``; ``form="bordered"``
    solves the bordered system with ``[[0, H'], [H, Psi]]`` directly. Values
    are clipped at zero.
    """
    single = np.ndim(x) == 1
    x = np.atleast_2d(np.asarray(x, dtype=float))
    k = model.spec.matrix(x, model.design)                      # (m, n)
    kxx = model.spec.sigma2
    if form == "partitioned":
        v = linalg.solve_triangular(model.chol[0], k.T, lower=True, check_finite=False)
        out = kxx - np.sum(v * v, axis=0)
        if model.p:
            c1 = model.basis(x) - k @ _solve(model.chol, model.H)   # (m, p)
            w = linalg.solve_triangular(model.a_chol[0], c1.T, lower=True, check_finite=False)
            out = out + np.sum(w * w, axis=0)
    elif form == "bordered":
        p = model.p
        A = np.block([[np.zeros((p, p)), model.H.T], [model.H, model.K]])
        b = np.hstack([model.basis(x), k]).T
        try:
            sol = linalg.solve(A, b, assume_a="sym")
        except linalg.LinAlgError:
            raise FactorizationError("gp: bordered MSPE system is singular",
                                     condition_estimate(model.K)) from None
        out = kxx - np.sum(b * sol, axis=0)
    else:
        raise ConfigError(f"unknown MSPE form {form!r}")
    out = np.maximum(out, 0.0)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# likelihood and score


def _residual(x, f, H, beta):
    beta = np.zeros(H.shape[1]) if beta is None else np.asarray(beta, dtype=float).ravel()
    if beta.size != H.shape[1]:
        raise ConfigError(f"beta has length {beta.size}, basis has p={H.shape[1]}")
    return np.asarray(f, dtype=float).ravel() - H @ beta


def log_likelihood(design, observations, spec, basis=None, beta=None):
    """``-1/2 log det Psi - 1/2 delta' Psi^-1 delta`` with ``delta = f - H beta``."""
    x = as_design(design, check_box=False)
    H = as_basis(basis)(x)
    delta = _residual(x, observations, H, beta)
    chol = spd_factor(spec.matrix(x))
    z = linalg.solve_triangular(chol[0], delta, lower=True, check_finite=False)
    return -0.5 * _logdet(chol) - 0.5 * float(z @ z)


def score_vector(design, observations, spec, basis=None, beta=None):
    """Gradient of :func:`log_likelihood` in the order ``(beta, sigma2, rho)``."""
    x = as_design(design, check_box=False)
    rho = _stationary_rho(spec)
    H = as_basis(basis)(x)
    n = x.shape[0]
    delta = _residual(x, observations, H, beta)
    s2 = spec.sigma2
    chol = spd_factor(spec.matrix(x))
    alpha = _solve(chol, delta)                      # Psi^-1 delta
    d_beta = H.T @ alpha
    d_sigma2 = -n / (2 * s2) + s2 * float(delta @ alpha) / (2 * s2 * s2)
    psi_inv = _solve(chol, np.eye(n))
    d_rho = np.empty(rho.size)
    for k, g in enumerate(correlation_grad_rho(rho, x)):
        dpsi = s2 * g
        d_rho[k] = -0.5 * np.sum(psi_inv * dpsi) + 0.5 * float(alpha @ dpsi @ alpha)
    return np.concatenate([d_beta, [d_sigma2], d_rho])


# ---------------------------------------------------------------------------
# maximum likelihood


@dataclass
class MleResult:
    params: ParameterVector
    loglik: float
    start_loglik: float
    start_rho: np.ndarray
    nfev: int
    converged: bool


def profile_loglik(design, observations, rho, basis=None):
    """Likelihood with ``beta`` and ``sigma2`` profiled out; returns (value, beta, sigma2)."""
    x = as_design(design, check_box=False)
    f = np.asarray(observations, dtype=float).ravel()
    n = x.shape[0]
    corr = StationaryKernel.from_rho(rho, 1.0)
    chol = spd_factor(corr.matrix(x), "Phi(X,X)")
    H = as_basis(basis)(x)
    beta = _gls(chol, H, f)[0] if H.shape[1] else np.zeros(0)
    delta = f - H @ beta
    z = linalg.solve_triangular(chol[0], delta, lower=True, check_finite=False)
    sigma2 = float(z @ z) / n
    if not sigma2 > 0:
        raise FactorizationError("gp: profiled sigma2 is zero (observations explained exactly)", np.nan)
    value = -0.5 * n * np.log(sigma2) - 0.5 * _logdet(chol) - 0.5 * n
    return value, beta, sigma2


def mle_fit(design, observations, basis=None, rho0=None, fixed_rho=False, max_evals=400,
            log_bounds=(-5.0, 5.0), start_grid=None):
    """Maximum-likelihood fit of ``(beta, sigma2, rho)`` for the stationary kernel.

    ``beta`` and ``sigma2`` are profiled in closed form; Nelder-Mead runs over
    ``log rho``, clipped to ``log_bounds``. Without ``rho0`` the start is the
    best isotropic ``rho`` on ``start_grid`` (default ``logspace(-1, 1.5, 11)``).
    Factorization failures during the search count as ``-inf``.
    """
    x = as_design(design, check_box=False)
    n, d = x.shape
    basis = as_basis(basis)
    if n <= basis.size(d):
        raise DesignError(f"mle_fit needs n > p (n={n}, p={basis.size(d)})")
    lo, hi = log_bounds

    def negll(z):
        try:
            return -profile_loglik(x, observations, np.exp(np.clip(z, lo, hi)), basis)[0]
        except FactorizationError:
            return np.inf

    if rho0 is None:
        grid = np.logspace(-1, 1.5, 11) if start_grid is None else np.asarray(start_grid, dtype=float)
        cands = [np.full(d, np.log(r)) for r in grid]
        vals = [negll(z) for z in cands]
        z0 = cands[int(np.argmin(vals))]
    else:
        z0 = np.log(np.broadcast_to(np.asarray(rho0, dtype=float), (d,)))
    start = negll(z0)
    if not np.isfinite(start):
        raise FactorizationError("gp: log-likelihood is not finite at the starting rho", np.inf)

    if fixed_rho:
        z_best, best, nfev, conv = z0, start, 1, True
    else:
        res = nelder_mead(negll, z0, max_evals=max_evals, spread=0.5, xtol=1e-6, ftol=1e-10)
        z_best, best, nfev, conv = res.x, res.fun, res.nfev, res.converged
        if not best <= start:
            z_best, best = z0, start
    rho = np.exp(np.clip(z_best, lo, hi))
    value, beta, sigma2 = profile_loglik(x, observations, rho, basis)
    return MleResult(ParameterVector(beta, sigma2, rho), value, -start, np.exp(z0), nfev, conv)


# ---------------------------------------------------------------------------
# Fisher information


@dataclass
class FisherBlocks:
    """Non-zero blocks of the information matrix for ``(beta, sigma2, rho)``."""

    I11: np.ndarray
    I22: float
    I32: np.ndarray
    I33: np.ndarray
    _grads: list = field(default_factory=list, repr=False)
    sigma2: float = 1.0

    @property
    def schur(self):
        """``I33 - I32 I22^-1 I23``."""
        return self.I33 - np.outer(self.I32, self.I32) / self.I22

    def full(self):
        p, d = self.I11.shape[0], self.I33.shape[0]
        m = np.zeros((p + 1 + d, p + 1 + d))
        m[:p, :p] = self.I11
        m[p, p] = self.I22
        m[p + 1:, p] = m[p, p + 1:] = self.I32
        m[p + 1:, p + 1:] = self.I33
        return m

    def c_theta(self):
        """Dense ``d vec Psi / d rho'`` (n^2 x d); for checking only."""
        return np.column_stack([self.sigma2 * g.ravel(order="F") for g in self._grads])


def fisher_blocks(design, spec, basis=None):
    """Information-matrix blocks via trace contractions.

    ``I32_k = tr(Phi^-1 dPhi_k) / (2 sigma2)`` and
    ``I33_kl = tr(Phi^-1 dPhi_k Phi^-1 dPhi_l) / 2``; the n^2 x n^2
    Kronecker products are never formed.
    """
    x = as_design(design, check_box=False)
    rho = _stationary_rho(spec)
    s2 = spec.sigma2
    n, d = x.shape
    H = as_basis(basis)(x)
    chol_phi = spd_factor(StationaryKernel.from_rho(rho, 1.0).matrix(x), "Phi(X,X)")
    I11 = H.T @ _solve(chol_phi, H) / s2
    grads = list(correlation_grad_rho(rho, x))
    W = [_solve(chol_phi, g) for g in grads]          # Phi^-1 dPhi_k
    I32 = np.array([np.trace(w) for w in W]) / (2.0 * s2)
    I33 = np.empty((d, d))
    for k in range(d):
        for l in range(k, d):
            I33[k, l] = I33[l, k] = 0.5 * np.sum(W[k] * W[l].T)
    return FisherBlocks(I11=I11, I22=n / (2.0 * s2 * s2), I32=I32, I33=I33, _grads=grads, sigma2=s2)


# ---------------------------------------------------------------------------
# prediction sensitivities and the parameter-estimation bound


def _sens_parts(model, x):
    """Return ``c1`` (m, p), the matrix ``A`` (m, d, n) with ``c3 = A Psi^-1 delta``."""
    rho = _stationary_rho(model.spec)
    s2 = model.spec.sigma2
    X = model.design
    k = model.spec.matrix(x, X)                       # (m, n)
    kinv = _solve(model.chol, k.T).T                  # k' Psi^-1, (m, n)
    c1 = model.basis(x) - kinv @ model.H
    gx = correlation_grad_rho(rho, x, X)             # (d, m, n)
    gX = correlation_grad_rho(rho, X)                # (d, n, n)
    A = s2 * (gx - kinv[None] @ gX)
    return c1, np.moveaxis(A, 0, 1)


def prediction_sensitivities(model, x):
    """``c1 = d fhat / d beta`` and ``c3 = d fhat / d rho`` at ``x``.

    Returns arrays shaped (p,), (d,) for a single point or (m, p), (m, d).
    """
    single = np.ndim(x) == 1
    xq = np.atleast_2d(np.asarray(x, dtype=float))
    c1, A = _sens_parts(model, xq)
    c3 = A @ model.alpha
    return (c1[0], c3[0]) if single else (c1, c3)


@dataclass
class MomentEstimate:
    value: float
    size: int
    degenerate: bool


def s1_estimate(basis, sample, tol=1e-12):
    """``lambda_min`` of the sample average of ``h(y) h(y)'``."""
    y = as_design(sample, check_box=False)
    if len(y) < 2:
        raise DesignError("s1_estimate needs at least 2 sample points")
    H = as_basis(basis)(y)
    if H.shape[1] == 0:
        return MomentEstimate(np.inf, len(y), False)
    val = float(np.linalg.eigvalsh(H.T @ H / len(y))[0])
    return MomentEstimate(val, len(y), val <= tol)


def s2_estimate(rho, sample, tol=1e-12):
    """Plug-in ``s2`` over all ordered pairs of ``sample`` (the diagonal included).

    ``lambda_min( E[g g'] - E[g Phi] E[g Phi]' / E[Phi^2] )`` with
    ``g = d Phi_rho / d rho`` and the expectation over pairs.
    """
    y = as_design(sample, check_box=False)
    m = len(y)
    if m < 2:
        raise DesignError("s2_estimate needs at least 2 sample points")
    rho = np.asarray(rho, dtype=float)
    G = correlation_grad_rho(rho, y).reshape(rho.size, -1)
    phi = StationaryKernel.from_rho(rho, 1.0).matrix(y).ravel()
    npairs = m * m
    gg = G @ G.T / npairs
    gphi = G @ phi / npairs
    mat = gg - np.outer(gphi, gphi) / (phi @ phi / npairs)
    val = float(np.linalg.eigvalsh(0.5 * (mat + mat.T))[0])
    return MomentEstimate(val, npairs, val <= tol)


@dataclass
class ParamErrorBound:
    bound: float
    exact: float
    c1_term: float
    c3_term: float


def _moment(value, default):
    if value is None:
        return default
    return value.value if isinstance(value, MomentEstimate) else float(value)


def param_error_bound(model, x, s1=None, s2=None, fisher=None, tol=1e-12):
    """Parameter-estimation error bound at ``x`` and the exact first-order form.

    ``bound = sigma2 sup Phi ||c1||^2 / s1 + 2 (sup Phi)^2 ||c3||^2 / s2`` with
    ``sup Phi = 1``. ``s1``/``s2`` default to plug-in estimates from the
    design. ``exact = c1' I11^-1 c1 + c3' (I33 - I32 I22^-1 I23)^-1 c3``.
    """
    single = np.ndim(x) == 1
    xq = np.atleast_2d(np.asarray(x, dtype=float))
    c1, c3 = prediction_sensitivities(model, xq)
    d = model.design.shape[1]
    s1v = _moment(s1, None)
    if s1v is None:
        s1v = s1_estimate(model.basis, model.design).value if model.p else np.inf
    s2v = _moment(s2, None)
    if s2v is None:
        s2v = s2_estimate(_stationary_rho(model.spec), model.design).value
    if not s2v > tol:
        raise DegeneracyError(
            f"gp: s2 = {s2v:.3g} is numerically zero; d Phi/d rho is (nearly) collinear with Phi "
            "over the design pairs")
    if model.p and not s1v > tol:
        raise DegeneracyError(f"gp: s1 = {s1v:.3g} is numerically zero; h(y)'a = 0 on the design")
    fb = fisher_blocks(model.design, model.spec, model.basis) if fisher is None else fisher
    sup_phi = 1.0
    t1 = model.spec.sigma2 * sup_phi * np.sum(c1 * c1, axis=1) / s1v if model.p else np.zeros(len(xq))
    t3 = 2.0 * sup_phi**2 * np.sum(c3 * c3, axis=1) / s2v
    ex = np.sum(c3 * np.linalg.solve(fb.schur, c3.T).T, axis=1)
    if model.p:
        ex = ex + np.sum(c1 * np.linalg.solve(fb.I11, c1.T).T, axis=1)
    out = [ParamErrorBound(float(a + b), float(e), float(a), float(b)) for a, b, e in zip(t1, t3, ex)]
    return out[0] if single else out


def expected_param_error(design, spec, basis, x, s1=None, s2=None):
    """Design-time version averaging ``c3`` over ``f ~ GP(H beta, Psi)``.

    With ``delta ~ N(0, Psi)``, ``E[c3 c3'] = A Psi^-1 A'``; returns
    ``(bound, exact)`` arrays over the query points.
    """
    X = as_design(design, check_box=False)
    basis = as_basis(basis)
    model = FittedGP(X, np.zeros(len(X)), spec, basis, beta=np.zeros(basis.size(X.shape[1])))
    xq = np.atleast_2d(np.asarray(x, dtype=float))
    c1, A = _sens_parts(model, xq)
    s1v = _moment(s1, None)
    if s1v is None:
        s1v = s1_estimate(basis, X).value if model.p else np.inf
    s2v = _moment(s2, None)
    if s2v is None:
        s2v = s2_estimate(_stationary_rho(spec), X).value
    if not s2v > 1e-12:
        raise DegeneracyError(f"gp: s2 = {s2v:.3g} is numerically zero")
    if model.p and not s1v > 1e-12:
        raise DegeneracyError(f"gp: s1 = {s1v:.3g} is numerically zero")
    fb = fisher_blocks(X, spec, basis)
    # E[c3 c3'] per query point: A Psi^-1 A'
    L = model.chol[0]
    B = linalg.solve_triangular(L, A.reshape(-1, model.n).T, lower=True, check_finite=False)
    B = B.T.reshape(A.shape)                          # A L^-T
    cov = np.einsum("mkn,mln->mkl", B, B)
    tr = np.einsum("mkk->m", cov)
    schur_inv = np.linalg.inv(fb.schur)
    exact = np.einsum("kl,mlk->m", schur_inv, cov)
    bound = 2.0 * tr / s2v
    if model.p:
        bound = bound + spec.sigma2 * np.sum(c1 * c1, axis=1) / s1v
        exact = exact + np.sum(c1 * np.linalg.solve(fb.I11, c1.T).T, axis=1)
    return bound, exact
