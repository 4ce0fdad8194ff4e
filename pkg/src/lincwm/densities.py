"""Log-space density kernels shared by every model in the family.

Everything here returns natural-log densities and never exponentiates,
so mixtures with far-apart components do not underflow.  Scale matrices
are handled through a cached Cholesky factor; a singular matrix gets one
chance at a trace-scaled ridge before the failure is reported.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import digamma as _digamma
from scipy.special import gammaln, logsumexp

from .errors import (
    DimensionMismatch,
    DomainError,
    NonFiniteInput,
    SingularCovariance,
)
from .types import Constraint, Dataset, Dist, ModelSpec, ParameterSet

ArrayLike = Union[float, np.ndarray]

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class CholeskyCache:
    """Lower Cholesky factor of a scale matrix plus its log-determinant."""

    L: np.ndarray
    log_det: float

    @property
    def d(self) -> int:
        return self.L.shape[0]


def cholesky_cache(Sigma: np.ndarray, ridge: float = 1e-8) -> CholeskyCache:
    """Factorize a symmetric positive-definite matrix once for reuse.

    If plain Cholesky fails, a single diagonal ridge of
    ``ridge * trace(Sigma) / d`` is added and the factorization retried;
    a second failure raises :class:`SingularCovariance`.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise DimensionMismatch(f"scale matrix must be square, got {Sigma.shape}")
    if not np.isfinite(Sigma).all():
        raise NonFiniteInput("scale matrix contains non-finite entries")
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        d = Sigma.shape[0]
        bump = ridge * np.trace(Sigma) / d
        try:
            L = np.linalg.cholesky(Sigma + bump * np.eye(d))
        except np.linalg.LinAlgError:
            raise SingularCovariance(
                "scale matrix is not positive definite even after ridge"
            ) from None
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    return CholeskyCache(L=L, log_det=log_det)


def mahalanobis_sq(x: np.ndarray, mu: np.ndarray, chol: CholeskyCache) -> ArrayLike:
    """Squared Mahalanobis distance of point(s) ``x`` from ``mu``.

    ``x`` may be a single point of shape (d,) or a batch of shape (N, d).
    Computed via a triangular solve against the cached factor, never by
    inverting the matrix.
    """
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float).ravel()
    d = chol.d
    if mu.shape[0] != d:
        raise DimensionMismatch(f"mu has length {mu.shape[0]}, scale is {d}x{d}")
    single = x.ndim == 1
    pts = x.reshape(1, -1) if single else x
    if pts.ndim != 2 or pts.shape[1] != d:
        raise DimensionMismatch(f"points of shape {x.shape} do not match d={d}")
    z = solve_triangular(chol.L, (pts - mu).T, lower=True, check_finite=False)
    delta = np.einsum("ij,ij->j", z, z)
    return float(delta[0]) if single else delta


def log_mvn(x: np.ndarray, mu: np.ndarray, chol: CholeskyCache) -> ArrayLike:
    """Multivariate normal log-density at point(s) ``x``."""
    x = np.asarray(x, dtype=float)
    if not (np.isfinite(x).all() and np.isfinite(np.asarray(mu)).all()):
        raise NonFiniteInput("log_mvn inputs must be finite")
    delta = mahalanobis_sq(x, mu, chol)
    d = chol.d
    return -0.5 * d * _LOG_2PI - 0.5 * chol.log_det - 0.5 * delta


def log_mvt(
    x: np.ndarray, mu: np.ndarray, chol: CholeskyCache, nu: float
) -> ArrayLike:
    """Multivariate Student-t log-density with ``nu`` degrees of freedom.

    Uses the fully normalized form

        lgamma((nu+d)/2) - lgamma(nu/2) - (d/2) log(pi nu)
        - (1/2) log|Sigma| - ((nu+d)/2) log(1 + delta/nu)

    with ``delta`` the squared Mahalanobis distance.
    """
    nu = float(nu)
    if not np.isfinite(nu) or nu <= 0:
        raise DomainError(f"degrees of freedom must be positive and finite, got {nu}")
    x = np.asarray(x, dtype=float)
    if not (np.isfinite(x).all() and np.isfinite(np.asarray(mu)).all()):
        raise NonFiniteInput("log_mvt inputs must be finite")
    delta = mahalanobis_sq(x, mu, chol)
    d = chol.d
    return (
        gammaln((nu + d) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * d * np.log(np.pi * nu)
        - 0.5 * chol.log_det
        - 0.5 * (nu + d) * np.log1p(delta / nu)
    )


def _regression_residuals(
    y: ArrayLike, x: np.ndarray, beta0: float, beta1: np.ndarray
) -> tuple[np.ndarray, bool]:
    """Residuals y - (beta0 + beta1'x) as an (N, 1) column, plus scalar flag."""
    beta1 = np.asarray(beta1, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1 and np.ndim(y) == 0
    pts = x.reshape(1, -1) if x.ndim <= 1 else x
    if pts.shape[1] != beta1.shape[0]:
        raise DimensionMismatch(
            f"covariates of shape {x.shape} do not match {beta1.shape[0]} slopes"
        )
    resid = np.asarray(y, dtype=float).ravel() - (beta0 + pts @ beta1)
    return resid.reshape(-1, 1), single


def log_t_reg(
    y: ArrayLike,
    x: np.ndarray,
    beta0: float,
    beta1: np.ndarray,
    sigma2: float,
    zeta: float,
) -> ArrayLike:
    """Student-t regression log-density of ``y`` given covariates ``x``.

    Definitionally the 1-D case of :func:`log_mvt` with location
    ``beta0 + beta1'x`` and scale ``sigma2``, and implemented by that
    reduction so the two agree exactly.
    """
    if sigma2 <= 0 or not np.isfinite(sigma2):
        raise DomainError(f"sigma2 must be positive and finite, got {sigma2}")
    resid, single = _regression_residuals(y, x, beta0, beta1)
    chol = cholesky_cache(np.array([[float(sigma2)]]))
    out = log_mvt(resid, np.zeros(1), chol, zeta)
    return float(out[0]) if single else out


def log_n_reg(
    y: ArrayLike, x: np.ndarray, beta0: float, beta1: np.ndarray, sigma2: float
) -> ArrayLike:
    """Normal regression log-density of ``y`` given covariates ``x``."""
    if sigma2 <= 0 or not np.isfinite(sigma2):
        raise DomainError(f"sigma2 must be positive and finite, got {sigma2}")
    resid, single = _regression_residuals(y, x, beta0, beta1)
    chol = cholesky_cache(np.array([[float(sigma2)]]))
    out = log_mvn(resid, np.zeros(1), chol)
    return float(out[0]) if single else out


def digamma(s: ArrayLike) -> ArrayLike:
    """Digamma function restricted to the positive half-line."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0) or not np.isfinite(s_arr).all():
        raise DomainError("digamma argument must be positive and finite")
    out = _digamma(s_arr)
    return float(out) if np.ndim(s) == 0 else out


def marginal_chols(params: ParameterSet, ridge: float = 1e-8) -> list[CholeskyCache]:
    """Cholesky caches for every stored marginal scale matrix."""
    return [cholesky_cache(params.Sigma[j], ridge) for j in range(params.n_marginal)]


def component_log_densities(
    data: Dataset,
    spec: ModelSpec,
    params: ParameterSet,
    chols: Optional[list[CholeskyCache]] = None,
) -> np.ndarray:
    """(N, G) matrix of ``log[cond_g(y|x) * marg_g(x)]`` for every component.

    The mixture weights are *not* included; callers add ``log pi`` where
    needed.  Shared (Equal) blocks are evaluated once and broadcast.
    """
    params.validate_for(spec)
    if params.d != data.d:
        raise DimensionMismatch(
            f"parameters are for d={params.d} covariates, data has d={data.d}"
        )
    if chols is None:
        chols = marginal_chols(params)
    N, G = data.n, params.G

    marg = np.empty((N, params.n_marginal))
    for j in range(params.n_marginal):
        if spec.marginal_dist is Dist.T:
            marg[:, j] = log_mvt(data.X, params.mu[j], chols[j], params.nu[j])
        else:
            marg[:, j] = log_mvn(data.X, params.mu[j], chols[j])

    cond = np.empty((N, params.n_conditional))
    for j in range(params.n_conditional):
        if spec.conditional_dist is Dist.T:
            cond[:, j] = log_t_reg(
                data.y, data.X, params.beta0[j], params.beta1[j],
                params.sigma2[j], params.zeta[j],
            )
        else:
            cond[:, j] = log_n_reg(
                data.y, data.X, params.beta0[j], params.beta1[j], params.sigma2[j]
            )

    out = np.empty((N, G))
    for g in range(G):
        out[:, g] = marg[:, params.marg_idx(g)] + cond[:, params.cond_idx(g)]
    return out


def cwm_log_density(
    y: ArrayLike, x: np.ndarray, spec: ModelSpec, params: ParameterSet
) -> ArrayLike:
    """Log joint mixture density log p(y, x) under the given model.

    Accepts a single observation (scalar ``y``, (d,) ``x``) or a batch
    ((N,) ``y``, (N, d) ``x``); the log-sum-exp over components keeps
    far-tail points finite.
    """
    single = np.ndim(y) == 0
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1) if single else X.reshape(-1, 1)
    data = Dataset(y=np.atleast_1d(np.asarray(y, dtype=float)), X=X)
    comp = component_log_densities(data, spec, params)
    out = logsumexp(np.log(params.pi) + comp, axis=1)
    return float(out[0]) if single else out
