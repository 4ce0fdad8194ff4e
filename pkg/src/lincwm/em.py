"""EM engine: E-step expectations, constraint-aware M-steps, df root
solves, Aitken-accelerated stopping, and the full fitting loop.

The loop starts with an M-step computed from the initial responsibility
matrix (unit precision weights, df started at ``EmConfig.df_init``), records
the observed log-likelihood after every M-step, and then refreshes the
expectations.  Component starvation, singular designs and collapsing
variances abort the fit with a specific exception so that multistart
drivers can count the failure and move on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .densities import (
    CholeskyCache,
    component_log_densities,
    digamma,
    mahalanobis_sq,
    marginal_chols,
)
from .errors import (
    AllComponentsUnderflow,
    CwmError,
    DegenerateComponent,
    DegenerateVariance,
    DimensionMismatch,
    SingularDesign,
)
from .types import (
    Constraint,
    Dataset,
    Dist,
    FitResult,
    LatentState,
    ModelSpec,
    ParameterSet,
)


@dataclass(frozen=True)
class EmConfig:
    """Tuning knobs for a single EM run.

    ``fixed_df`` freezes every degrees-of-freedom parameter at the given
    value and skips the df updates entirely; it exists so t models can be
    pinned near their normal limits when checking the implementation.
    """

    epsilon: float = 0.05
    max_iter: int = 1000
    df_lo: float = 2.0
    df_hi: float = 200.0
    df_init: float = 50.0
    min_component_mass: Optional[float] = None
    ridge: float = 1e-8
    fixed_df: Optional[float] = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise CwmError("epsilon must be positive")
        if self.max_iter < 3:
            raise CwmError("max_iter must be at least 3 (the stopping rule "
                           "needs three consecutive log-likelihood values)")
        if not (0 < self.df_lo < self.df_hi):
            raise CwmError("df search range requires 0 < df_lo < df_hi")
        if self.df_init <= 0:
            raise CwmError("df_init must be positive")
        if self.fixed_df is not None and self.fixed_df <= 0:
            raise CwmError("fixed_df must be positive when given")
        if self.ridge < 0:
            raise CwmError("ridge must be non-negative")


# ---------------------------------------------------------------------------
# E-step
# ---------------------------------------------------------------------------

def _log_weighted(data, spec, params, chols=None):
    """(N, G) matrix log pi_g + log component density, shared by tau/loglik."""
    comp = component_log_densities(data, spec, params, chols)
    return np.log(params.pi) + comp


def posterior_tau(data: Dataset, spec: ModelSpec, params: ParameterSet) -> np.ndarray:
    """Posterior component probabilities, one row per observation.

    Computed entirely in log space: each row of ``log pi + log f_g`` is
    shifted by its log-sum-exp before exponentiating, so only a point at
    which *every* component underflows to -inf fails (AllComponentsUnderflow).
    """
    lw = _log_weighted(data, spec, params)
    return _tau_from_log_weighted(lw)[0]


def _tau_from_log_weighted(lw: np.ndarray):
    row_lse = logsumexp(lw, axis=1)
    bad = ~np.isfinite(row_lse)
    if np.any(bad):
        n_bad = int(np.argmax(bad))
        raise AllComponentsUnderflow(
            f"every component underflows at observation {n_bad}"
        )
    tau = np.exp(lw - row_lse[:, None])
    return tau, row_lse


def _marginal_weights(data, spec, params, chols):
    """Expected precisions u and expected logs for the covariate block."""
    N, G = data.n, params.G
    if spec.marginal_dist is Dist.NORMAL:
        return np.ones((N, G)), np.zeros((N, G))
    d = data.d
    u_cols = np.empty((N, params.n_marginal))
    lu_cols = np.empty((N, params.n_marginal))
    for j in range(params.n_marginal):
        nu = params.nu[j]
        delta = mahalanobis_sq(data.X, params.mu[j], chols[j])
        half = (nu + d) / 2.0
        uj = (nu + d) / (nu + delta)
        u_cols[:, j] = uj
        # E[log U] adds the digamma correction on top of log E[U]-style term
        lu_cols[:, j] = np.log(uj) + digamma(half) - np.log(half)
    idx = [params.marg_idx(g) for g in range(G)]
    return u_cols[:, idx], lu_cols[:, idx]


def _conditional_weights(data, spec, params):
    """Expected precisions v and expected logs for the response block."""
    N, G = data.n, params.G
    if spec.conditional_dist is Dist.NORMAL:
        return np.ones((N, G)), np.zeros((N, G))
    v_cols = np.empty((N, params.n_conditional))
    lv_cols = np.empty((N, params.n_conditional))
    for j in range(params.n_conditional):
        zeta = params.zeta[j]
        resid = data.y - (params.beta0[j] + data.X @ params.beta1[j])
        delta = resid * resid / params.sigma2[j]
        half = (zeta + 1.0) / 2.0
        vj = (zeta + 1.0) / (zeta + delta)
        v_cols[:, j] = vj
        lv_cols[:, j] = np.log(vj) + digamma(half) - np.log(half)
    idx = [params.cond_idx(g) for g in range(G)]
    return v_cols[:, idx], lv_cols[:, idx]


def e_step(data: Dataset, spec: ModelSpec, params: ParameterSet) -> LatentState:
    """All E-step expectations for the current parameters."""
    chols = marginal_chols(params)
    lw = _log_weighted(data, spec, params, chols)
    tau, _ = _tau_from_log_weighted(lw)
    u, log_u = _marginal_weights(data, spec, params, chols)
    v, log_v = _conditional_weights(data, spec, params)
    return LatentState(tau=tau, u=u, v=v, log_u=log_u, log_v=log_v)


def observed_loglik(data: Dataset, spec: ModelSpec, params: ParameterSet) -> float:
    """Observed-data log-likelihood sum_n log p(y_n, x_n)."""
    lw = _log_weighted(data, spec, params)
    return float(logsumexp(lw, axis=1).sum())


# ---------------------------------------------------------------------------
# M-step
# ---------------------------------------------------------------------------

def m_step_weights(tau: np.ndarray) -> np.ndarray:
    """Mixture weights pi_g = (1/N) sum_n tau_ng, renormalized to sum to 1."""
    pi = np.asarray(tau, dtype=float).mean(axis=0)
    return pi / pi.sum()


def m_step_marginal(
    data: Dataset,
    tau: np.ndarray,
    u: np.ndarray,
    constraint: Constraint,
    min_mass: Optional[float] = None,
):
    """Location/scale update for the covariate block.

    Variable: component g uses weights tau_ng * u_ng; both the mean and the
    scale matrix are divided by the *weighted* total sum(tau*u), which is the
    faster-converging form of the scale update.  Equal: the shared block
    uses the bare precisions u_n (the responsibilities sum out).

    Returns ``(mu, Sigma)`` with leading axis 1 (Equal) or G (Variable).
    """
    X = data.X
    N, d = X.shape
    tau = np.asarray(tau, dtype=float)
    u = np.asarray(u, dtype=float)
    if tau.shape != u.shape or tau.shape[0] != N:
        raise DimensionMismatch("tau and u must both be (N, G)")
    if min_mass is None:
        min_mass = d + 2

    if constraint is Constraint.EQUAL:
        weight_cols = [u[:, 0]]
    else:
        for g in range(tau.shape[1]):
            mass = float(np.sum(tau[:, g]))
            if mass < min_mass:
                raise DegenerateComponent(
                    f"component {g + 1} mass {mass:.4g} fell below {min_mass}"
                )
        weight_cols = [tau[:, g] * u[:, g] for g in range(tau.shape[1])]

    mu = np.empty((len(weight_cols), d))
    Sigma = np.empty((len(weight_cols), d, d))
    for j, w in enumerate(weight_cols):
        sw = np.sum(w)
        mu[j] = (w @ X) / sw
        diff = X - mu[j]
        Sigma[j] = (w[:, None] * diff).T @ diff / sw
    return mu, Sigma


def m_step_regression(
    data: Dataset,
    tau: np.ndarray,
    v: np.ndarray,
    constraint: Constraint,
):
    """Weighted least-squares update for the response block.

    Variable components weight by tau_ng * v_ng; the Equal block weights by
    the bare v_n.  Slopes solve the weighted normal equations on centered
    moments; the variance divides the weighted residual sum of squares by
    the weight total (again the accelerated denominator).

    Returns ``(beta0, beta1, sigma2)`` with leading axis 1 or G.
    """
    X, y = data.X, data.y
    N, d = X.shape
    tau = np.asarray(tau, dtype=float)
    v = np.asarray(v, dtype=float)
    if tau.shape != v.shape or tau.shape[0] != N:
        raise DimensionMismatch("tau and v must both be (N, G)")

    if constraint is Constraint.EQUAL:
        weight_cols = [v[:, 0]]
    else:
        weight_cols = [tau[:, g] * v[:, g] for g in range(tau.shape[1])]

    k = len(weight_cols)
    beta0 = np.empty(k)
    beta1 = np.empty((k, d))
    sigma2 = np.empty(k)
    for j, w in enumerate(weight_cols):
        sw = np.sum(w)
        xbar = (w @ X) / sw
        ybar = np.sum(w * y) / sw
        Sxx = (w[:, None] * X).T @ X / sw - np.outer(xbar, xbar)
        Sxy = ((w * y) @ X) / sw - ybar * xbar
        try:
            b1 = np.linalg.solve(Sxx, Sxy)
        except np.linalg.LinAlgError:
            raise SingularDesign(
                f"weighted covariate covariance is singular in block {j + 1}"
            ) from None
        if not np.isfinite(b1).all():
            raise SingularDesign(
                f"weighted least squares produced non-finite slopes in block {j + 1}"
            )
        b0 = ybar - b1 @ xbar
        resid = y - b0 - X @ b1
        s2 = np.sum(w * resid * resid) / sw
        if s2 < 1e-12:
            raise DegenerateVariance(
                f"conditional variance collapsed ({s2:.3g}) in block {j + 1}"
            )
        beta0[j] = b0
        beta1[j] = b1
        sigma2[j] = s2
    return beta0, beta1, sigma2


def update_df(
    kind: str,
    constraint: Constraint,
    tau: np.ndarray,
    w: np.ndarray,
    log_w: np.ndarray,
    df_old: float,
    dim: int,
    cfg: Optional[EmConfig] = None,
) -> float:
    """Degrees-of-freedom update by root finding on the profile score.

    Parameters
    ----------
    kind : {"marginal", "conditional"}
        Which block is being updated (error messages only; the math is
        driven by ``dim``).
    constraint : Constraint
        Variable averages tau-weighted ``log w - w`` within the component;
        Equal averages the plain values over all N observations.
    tau, w, log_w : arrays of shape (N,)
        The responsibility column of the component being updated, the
        corresponding precision weights, and their *plain elementwise*
        logs.  (Not the digamma-corrected E[log W] — that correction enters
        the score through the ``df_old`` term below.)
    df_old : float
        The value from the previous iteration; it appears inside the score
        through ``digamma((df_old + dim)/2) - log((df_old + dim)/2)``.
    dim : int
        d for the marginal block, 1 for the conditional block.

    Returns the root of the score clamped to ``(df_lo, df_hi]``: the score
    is strictly decreasing, so a positive value at ``df_hi`` means the root
    lies beyond the cap (return ``df_hi``), a negative value just above
    ``df_lo`` means it lies below the floor (return that endpoint), and
    otherwise Brent's method brackets it.
    """
    if kind not in ("marginal", "conditional"):
        raise CwmError(f"kind must be 'marginal' or 'conditional', got {kind!r}")
    cfg = cfg if cfg is not None else EmConfig()
    tau = np.asarray(tau, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    log_w = np.asarray(log_w, dtype=float).ravel()

    if constraint is Constraint.VARIABLE:
        A = float(np.sum(tau * (log_w - w)) / np.sum(tau))
    else:
        A = float(np.sum(log_w - w) / tau.shape[0])

    half_old = (df_old + dim) / 2.0
    const = 1.0 + A + digamma(half_old) - np.log(half_old)

    def score(df: float) -> float:
        return -digamma(df / 2.0) + np.log(df / 2.0) + const

    lo = cfg.df_lo + 1e-6
    hi = cfg.df_hi
    if score(hi) > 0.0:
        return hi
    if score(lo) < 0.0:
        return lo
    return float(brentq(score, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps))


# ---------------------------------------------------------------------------
# Stopping rule and main loop
# ---------------------------------------------------------------------------

def aitken_converged(
    l_prev2: float, l_prev: float, l_curr: float, epsilon: float = 0.05
) -> bool:
    """Aitken-acceleration stopping rule on three consecutive log-likelihoods.

    The acceleration ratio a = (l_curr - l_prev) / (l_prev - l_prev2)
    projects the asymptotic value l_inf = l_prev + (l_curr - l_prev)/(1 - a);
    convergence is declared when 0 <= l_inf - l_prev < epsilon.  When the
    previous step is numerically flat (|l_prev - l_prev2| < 1e-12) or the
    ratio does not contract (a >= 1), the rule falls back to the plain
    |l_curr - l_prev| < epsilon check.
    """
    denom = l_prev - l_prev2
    step = l_curr - l_prev
    if abs(denom) < 1e-12:
        return abs(step) < epsilon
    a = step / denom
    if a >= 1.0:
        return abs(step) < epsilon
    l_inf = l_prev + step / (1.0 - a)
    return 0.0 <= l_inf - l_prev < epsilon


def em_fit(
    data: Dataset,
    spec: ModelSpec,
    G: int,
    init_tau: np.ndarray,
    cfg: Optional[EmConfig] = None,
) -> FitResult:
    """Fit one model by EM from an initial responsibility matrix.

    Each iteration performs the M-step for the current expectations (the
    very first uses ``init_tau`` with unit precision weights), evaluates the
    observed log-likelihood for the fresh parameters, then refreshes the
    expectations.  The Aitken rule is applied as soon as three trace entries
    exist; hitting ``max_iter`` first returns with ``converged=False``.
    """
    cfg = cfg if cfg is not None else EmConfig()
    tau = np.asarray(init_tau, dtype=float)
    if tau.ndim != 2 or tau.shape != (data.n, G):
        raise DimensionMismatch(
            f"init_tau must be ({data.n}, {G}), got {tau.shape}"
        )
    if np.any(tau < 0) or np.max(np.abs(tau.sum(axis=1) - 1.0)) > 1e-8:
        raise CwmError("init_tau rows must be non-negative and sum to 1")

    N, d = data.n, data.d
    min_mass = cfg.min_component_mass if cfg.min_component_mass is not None else d + 2
    n_marg = 1 if spec.marginal_constraint is Constraint.EQUAL else G
    n_cond = 1 if spec.conditional_constraint is Constraint.EQUAL else G
    df_start = cfg.fixed_df if cfg.fixed_df is not None else cfg.df_init
    nu = np.full(n_marg, float(df_start)) if spec.marginal_dist is Dist.T else None
    zeta = np.full(n_cond, float(df_start)) if spec.conditional_dist is Dist.T else None

    u = np.ones((N, G))
    v = np.ones((N, G))
    log_u = np.zeros((N, G))
    log_v = np.zeros((N, G))
    trace: list[float] = []
    converged = False
    params = None

    for _ in range(cfg.max_iter):
        mass = tau.sum(axis=0)
        if np.any(mass < min_mass):
            g_bad = int(np.argmin(mass))
            raise DegenerateComponent(
                f"component {g_bad + 1} mass {mass[g_bad]:.4g} fell below {min_mass}"
            )

        pi = m_step_weights(tau)
        mu, Sigma = m_step_marginal(
            data, tau, u, spec.marginal_constraint, min_mass=min_mass
        )
        beta0, beta1, sigma2 = m_step_regression(
            data, tau, v, spec.conditional_constraint
        )
        if nu is not None and cfg.fixed_df is None:
            cols = [0] * n_marg if n_marg == 1 else list(range(G))
            nu = np.array([
                update_df(
                    "marginal", spec.marginal_constraint,
                    tau[:, g], u[:, g], np.log(u[:, g]), nu[j], d, cfg,
                )
                for j, g in enumerate(cols)
            ])
        if zeta is not None and cfg.fixed_df is None:
            cols = [0] * n_cond if n_cond == 1 else list(range(G))
            zeta = np.array([
                update_df(
                    "conditional", spec.conditional_constraint,
                    tau[:, g], v[:, g], np.log(v[:, g]), zeta[j], 1, cfg,
                )
                for j, g in enumerate(cols)
            ])

        params = ParameterSet(
            pi=pi, mu=mu, Sigma=Sigma,
            beta0=beta0, beta1=beta1, sigma2=sigma2,
            nu=nu, zeta=zeta,
        )
        chols = marginal_chols(params, cfg.ridge)
        lw = _log_weighted(data, spec, params, chols)
        tau, row_lse = _tau_from_log_weighted(lw)
        trace.append(float(row_lse.sum()))
        u, log_u = _marginal_weights(data, spec, params, chols)
        v, log_v = _conditional_weights(data, spec, params)

        if len(trace) >= 3 and aitken_converged(
            trace[-3], trace[-2], trace[-1], cfg.epsilon
        ):
            converged = True
            break

    latent = LatentState(tau=tau, u=u, v=v, log_u=log_u, log_v=log_v)
    from .selection import bic, count_parameters, icl

    m = count_parameters(spec, G, d)
    loglik = trace[-1]
    bic_value = bic(loglik, m, N)
    icl_value = icl(bic_value, tau)
    return FitResult(
        spec=spec,
        params=params,
        latent=latent,
        loglik_trace=np.asarray(trace),
        loglik=loglik,
        n_iter=len(trace),
        converged=converged,
        bic=bic_value,
        icl=icl_value,
        m=m,
    )
