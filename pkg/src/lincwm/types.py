"""Shared data model: datasets, model specifications, parameters, latent state, fits.

Twelve model family members are identified by four-letter names such as
``"tt-VV"`` or ``"NN-EV"``: the first two letters give the distribution of
the covariates and of the response given the covariates (``N`` normal,
``t`` Student-t), the last two say whether those distributions are Equal
or Variable across mixture components.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import CwmError, EEConstraint, InconsistentParameters


class Dist(Enum):
    """Component distribution kind."""

    NORMAL = "N"
    T = "t"


class Constraint(Enum):
    """Whether a parameter block is shared across components or not."""

    EQUAL = "E"
    VARIABLE = "V"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ModelSpec:
    """One member of the linear CWM family.

    Attributes
    ----------
    marginal_dist : Dist
        Distribution of the covariates within a component.
    conditional_dist : Dist
        Distribution of the response given the covariates.
    marginal_constraint, conditional_constraint : Constraint
        Equal (shared across components) or Variable (component-specific).
    """

    marginal_dist: Dist
    conditional_dist: Dist
    marginal_constraint: Constraint
    conditional_constraint: Constraint

    def __post_init__(self):
        if (
            self.marginal_constraint is Constraint.EQUAL
            and self.conditional_constraint is Constraint.EQUAL
        ):
            raise EEConstraint(
                "EE models collapse to a single cluster and are not allowed"
            )

    @property
    def name(self) -> str:
        """Canonical name, e.g. ``"tt-VV"`` or ``"NN-EV"``."""
        return (
            self.marginal_dist.value
            + self.conditional_dist.value
            + "-"
            + self.marginal_constraint.value
            + self.conditional_constraint.value
        )

    def __str__(self) -> str:
        return self.name


def make_model_spec(
    marginal: Dist,
    conditional: Dist,
    marg_con: Constraint,
    cond_con: Constraint,
) -> ModelSpec:
    """Build a validated :class:`ModelSpec`; raises ``EEConstraint`` for EE."""
    return ModelSpec(marginal, conditional, marg_con, cond_con)


#: Canonical family order: distribution pairs tt, NN, tN, Nt; constraints
#: VV, VE, EV within each pair.
MODEL_NAMES = (
    "tt-VV", "tt-VE", "tt-EV",
    "NN-VV", "NN-VE", "NN-EV",
    "tN-VV", "tN-VE", "tN-EV",
    "Nt-VV", "Nt-VE", "Nt-EV",
)

_NAME_RE = re.compile(r"^([tN])([tN])-([EV])([EV])$")


def spec_from_name(name: str) -> ModelSpec:
    """Parse a canonical model name like ``"Nt-VE"`` into a ModelSpec."""
    m = _NAME_RE.match(name)
    if m is None:
        raise CwmError(f"not a model name: {name!r} (expected e.g. 'tt-VV')")
    md, cd, mc, cc = m.groups()
    return make_model_spec(Dist(md), Dist(cd), Constraint(mc), Constraint(cc))


def all_model_specs() -> list[ModelSpec]:
    """The twelve family members in canonical order (``tt-VV`` first)."""
    return [spec_from_name(n) for n in MODEL_NAMES]


@dataclass(frozen=True)
class Dataset:
    """A sample of N responses with d covariates each.

    Parameters
    ----------
    y : array of shape (N,)
        Responses.
    X : array of shape (N, d)
        Covariates; a 1-D array is treated as a single covariate column.
    labels : optional array of shape (N,)
        True group identifiers, used only for evaluating a clustering.
    """

    y: np.ndarray
    X: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        y = _readonly(np.asarray(self.y, dtype=float).ravel())
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise CwmError(f"X must be 2-dimensional, got shape {X.shape}")
        X = _readonly(X)
        if y.shape[0] != X.shape[0]:
            raise CwmError(
                f"y has {y.shape[0]} rows but X has {X.shape[0]}"
            )
        if y.shape[0] < 1 or X.shape[1] < 1:
            raise CwmError("dataset needs N >= 1 observations and d >= 1 covariates")
        if not (np.isfinite(y).all() and np.isfinite(X).all()):
            raise CwmError("dataset contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape[0] != y.shape[0]:
                raise CwmError("labels length differs from N")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ParameterSet:
    """All parameters of a fitted (or candidate) model.

    Blocks constrained Equal are stored once (leading axis 1), Variable
    blocks once per component (leading axis G).  Degrees of freedom are
    present only for t blocks; normal blocks carry ``None`` because the
    infinite-df limit is encoded by the distribution kind.

    Attributes
    ----------
    pi : (G,) mixture weights, positive, summing to 1.
    mu : (Gm, d) marginal locations, Gm in {1, G}.
    Sigma : (Gm, d, d) marginal scale matrices, symmetric positive-definite.
    beta0 : (Gc,) regression intercepts, Gc in {1, G}.
    beta1 : (Gc, d) regression slopes.
    sigma2 : (Gc,) conditional variances, positive.
    nu : (Gm,) marginal degrees of freedom, or None for a normal marginal.
    zeta : (Gc,) conditional degrees of freedom, or None for a normal conditional.
    """

    pi: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    sigma2: np.ndarray
    nu: Optional[np.ndarray] = None
    zeta: Optional[np.ndarray] = None

    def __post_init__(self):
        pi = _readonly(np.atleast_1d(self.pi))
        mu = _readonly(np.atleast_2d(self.mu))
        Sigma = np.asarray(self.Sigma, dtype=float)
        if Sigma.ndim == 2:
            Sigma = Sigma[None, :, :]
        Sigma = _readonly(Sigma)
        beta0 = _readonly(np.atleast_1d(self.beta0))
        beta1 = _readonly(np.atleast_2d(self.beta1))
        sigma2 = _readonly(np.atleast_1d(self.sigma2))
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "beta1", beta1)
        object.__setattr__(self, "sigma2", sigma2)
        for nm in ("nu", "zeta"):
            val = getattr(self, nm)
            if val is not None:
                object.__setattr__(self, nm, _readonly(np.atleast_1d(val)))

        d = mu.shape[1]
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise CwmError("mixture weights must be positive and sum to 1")
        if Sigma.shape != (mu.shape[0], d, d):
            raise CwmError(
                f"Sigma shape {Sigma.shape} inconsistent with mu {mu.shape}"
            )
        if beta1.shape != (beta0.shape[0], d) or sigma2.shape != beta0.shape:
            raise CwmError("regression parameter shapes are inconsistent")
        if np.any(sigma2 <= 0):
            raise CwmError("conditional variances must be positive")
        for nm, expect in (("nu", mu.shape[0]), ("zeta", beta0.shape[0])):
            val = getattr(self, nm)
            if val is not None:
                if val.shape != (expect,):
                    raise CwmError(f"{nm} has shape {val.shape}, expected ({expect},)")
                if np.any(val <= 0) or not np.isfinite(val).all():
                    raise CwmError(f"{nm} entries must be positive and finite")
        # reject scale matrices that cannot be factorized even with the ridge
        from .densities import cholesky_cache

        for g in range(Sigma.shape[0]):
            cholesky_cache(Sigma[g])

    @property
    def G(self) -> int:
        return self.pi.shape[0]

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    @property
    def n_marginal(self) -> int:
        """Number of distinct marginal parameter blocks (1 if Equal)."""
        return self.mu.shape[0]

    @property
    def n_conditional(self) -> int:
        """Number of distinct conditional parameter blocks (1 if Equal)."""
        return self.beta0.shape[0]

    def marg_idx(self, g: int) -> int:
        """Storage index of component ``g``'s marginal block."""
        return 0 if self.n_marginal == 1 else g

    def cond_idx(self, g: int) -> int:
        """Storage index of component ``g``'s conditional block."""
        return 0 if self.n_conditional == 1 else g

    def validate_for(self, spec: ModelSpec) -> None:
        """Check multiplicities and df presence against ``spec``.

        Raises
        ------
        InconsistentParameters
            If a block's multiplicity does not match the model's constraint,
            or a df vector is present/absent contrary to the distribution kind.
        """
        want_m = 1 if spec.marginal_constraint is Constraint.EQUAL else self.G
        want_c = 1 if spec.conditional_constraint is Constraint.EQUAL else self.G
        if self.n_marginal != want_m:
            raise InconsistentParameters(
                f"{spec.name}: expected {want_m} marginal block(s), got {self.n_marginal}"
            )
        if self.n_conditional != want_c:
            raise InconsistentParameters(
                f"{spec.name}: expected {want_c} conditional block(s), got {self.n_conditional}"
            )
        if (self.nu is None) != (spec.marginal_dist is Dist.NORMAL):
            raise InconsistentParameters(
                f"{spec.name}: marginal df must be present iff the marginal is t"
            )
        if (self.zeta is None) != (spec.conditional_dist is Dist.NORMAL):
            raise InconsistentParameters(
                f"{spec.name}: conditional df must be present iff the conditional is t"
            )


@dataclass(frozen=True)
class LatentState:
    """E-step expectations for every observation and component.

    ``tau`` holds posterior component probabilities; ``u`` and ``v`` the
    expected latent precision scalars of the marginal and conditional t
    representations; ``log_u``/``log_v`` the corresponding expected logs.
    For normal blocks u (resp. v) is identically 1 and log_u (log_v) is 0.
    """

    tau: np.ndarray
    u: np.ndarray
    v: np.ndarray
    log_u: np.ndarray
    log_v: np.ndarray

    def __post_init__(self):
        tau = _readonly(self.tau)
        shape = tau.shape
        if np.any(tau < 0) or np.max(np.abs(tau.sum(axis=1) - 1.0)) > 1e-10:
            raise CwmError("tau rows must be non-negative and sum to 1")
        object.__setattr__(self, "tau", tau)
        for nm in ("u", "v", "log_u", "log_v"):
            arr = _readonly(getattr(self, nm))
            if arr.shape != shape:
                raise CwmError(f"{nm} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, nm, arr)
        if np.any(self.u <= 0) or np.any(self.v <= 0):
            raise CwmError("precision weights must be strictly positive")

    @property
    def n(self) -> int:
        return self.tau.shape[0]

    @property
    def G(self) -> int:
        return self.tau.shape[1]


@dataclass(frozen=True)
class FitResult:
    """Converged EM output for one (model, G) combination."""

    spec: ModelSpec
    params: ParameterSet
    latent: LatentState
    loglik_trace: np.ndarray
    loglik: float
    n_iter: int
    converged: bool
    bic: float
    icl: float
    m: int

    def __post_init__(self):
        trace = _readonly(np.atleast_1d(self.loglik_trace))
        object.__setattr__(self, "loglik_trace", trace)
        if trace.size == 0 or trace[-1] != self.loglik:
            raise CwmError("loglik must equal the last trace entry")
        slack = 1e-8 * np.maximum(1.0, np.abs(trace[:-1]))
        if np.any(np.diff(trace) < -slack):
            raise CwmError("log-likelihood trace is decreasing beyond tolerance")
        from .selection import count_parameters

        expected_m = count_parameters(self.spec, self.params.G, self.params.d)
        if self.m != expected_m:
            raise CwmError(f"m={self.m} but the model has {expected_m} free parameters")

    @property
    def G(self) -> int:
        return self.params.G
