"""Model choice and classification quality: free-parameter counts, BIC,
ICL, MAP assignment, and the (adjusted) Rand index."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CwmError, LengthMismatch
from .types import Constraint, Dist, ModelSpec


def count_parameters(spec: ModelSpec, G: int, d: int) -> int:
    """Number of free parameters of ``spec`` with G components in d dimensions.

    A covariate block costs d (location) + d(d+1)/2 (scale) and one more for
    a t marginal's df; a response block costs d+2 (intercept, slopes,
    variance) plus one for a t conditional's df.  Variable blocks are paid G
    times, Equal blocks once, and the mixture weights add G - 1.
    """
    if G < 1 or d < 1:
        raise CwmError("count_parameters needs G >= 1 and d >= 1")
    x_block = d + d * (d + 1) // 2 + (1 if spec.marginal_dist is Dist.T else 0)
    y_block = d + 2 + (1 if spec.conditional_dist is Dist.T else 0)
    n_x = G if spec.marginal_constraint is Constraint.VARIABLE else 1
    n_y = G if spec.conditional_constraint is Constraint.VARIABLE else 1
    return n_x * x_block + n_y * y_block + (G - 1)


def bic(loglik: float, m: int, N: int) -> float:
    """Bayesian information criterion 2*loglik - m*ln(N) (larger is better)."""
    if N < 1:
        raise CwmError("bic needs N >= 1")
    return float(2.0 * loglik - m * np.log(N))


def map_classify(tau: np.ndarray) -> np.ndarray:
    """MAP component labels (1-based), one per row of ``tau``.

    Ties go to the lowest component index, matching the tie-break used
    inside :func:`icl`.
    """
    tau = np.asarray(tau, dtype=float)
    return np.argmax(tau, axis=1) + 1


def icl(bic_value: float, tau: np.ndarray) -> float:
    """ICL approximation: BIC plus the log posterior of each MAP assignment.

    The added term sum_n ln tau[n, map(n)] is non-positive, so ICL <= BIC,
    with equality exactly when every row of tau is hard.
    """
    tau = np.asarray(tau, dtype=float)
    picked = tau[np.arange(tau.shape[0]), np.argmax(tau, axis=1)]
    return float(bic_value + np.sum(np.log(picked)))


def _pair_counts(a, b):
    """Pair-agreement counts from the label contingency table, O(N + K^2)."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape[0] != b.shape[0]:
        raise LengthMismatch(
            f"partitions have different lengths: {a.shape[0]} vs {b.shape[0]}"
        )
    n = a.shape[0]
    if n < 2:
        raise CwmError("pair counting needs at least 2 observations")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((int(ai.max()) + 1, int(bi.max()) + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    # exact integer arithmetic throughout: n can make C(n,2) products large
    same_both = int(np.sum(table * (table - 1))) // 2
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    same_a = int(np.sum(rows * (rows - 1))) // 2
    same_b = int(np.sum(cols * (cols - 1))) // 2
    total = n * (n - 1) // 2
    return same_both, same_a, same_b, total


def rand_index(a, b) -> float:
    """Fraction of observation pairs on which two partitions agree."""
    same_both, same_a, same_b, total = _pair_counts(a, b)
    agreements = total + 2 * same_both - same_a - same_b
    return agreements / total


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie chance-corrected Rand index.

    Zero in expectation for independent random partitions, 1 for identical
    ones.  The degenerate 0/0 case (both partitions trivial) is defined
    as 1.
    """
    same_both, same_a, same_b, total = _pair_counts(a, b)
    num = total * same_both - same_a * same_b
    den = total * (same_a + same_b) - 2 * same_a * same_b
    if den == 0:
        return 1.0
    return 2 * num / den


@dataclass(frozen=True)
class SelectionRecord:
    """One row of the model-selection table."""

    model: str
    G: int
    m: int
    loglik: float
    bic: float
    icl: float
    ari: Optional[float] = None

    def __post_init__(self):
        if self.icl > self.bic + 1e-9:
            raise CwmError("icl cannot exceed bic (entropy term is non-positive)")

    @classmethod
    def from_fit(cls, fit, labels=None) -> "SelectionRecord":
        """Summarize a FitResult; ARI is filled in when true labels are given."""
        ari = None
        if labels is not None:
            ari = adjusted_rand_index(map_classify(fit.latent.tau), labels)
        return cls(
            model=fit.spec.name,
            G=fit.G,
            m=fit.m,
            loglik=fit.loglik,
            bic=fit.bic,
            icl=fit.icl,
            ari=ari,
        )
