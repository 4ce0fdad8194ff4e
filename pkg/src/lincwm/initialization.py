"""Random-partition starts and the hierarchical initialization sweep.

The twelve models are fitted in dependency order: the two Gaussian
root models (NN-VE, NN-EV) get a multistart of random hard partitions,
and every other model is warm-started from the posterior of its
best-fitting already-fitted neighbour — t distributions from their
normal limits, Variable constraints from their Equal restrictions.
A model whose every warm start aborts falls back to a fresh multistart;
a model that still cannot be fitted is recorded as a failure without
aborting the sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .em import EmConfig, em_fit
from .errors import AllStartsFailed, CwmError, PartitionFailure
from .types import MODEL_NAMES, Dataset, FitResult, ModelSpec, spec_from_name

#: Seed spacing between models so per-start seeds never collide across models.
_SEED_STRIDE = 1009


def random_partition(N: int, G: int, rng_seed: int) -> np.ndarray:
    """Hard (N, G) assignment matrix with rows drawn uniformly at random.

    Each observation lands in one of the G components with probability 1/G;
    draws are repeated (up to 100 times) until every component received at
    least one observation.  Deterministic for a fixed ``rng_seed``.
    """
    if N < 1 or G < 1:
        raise CwmError("random_partition needs N >= 1 and G >= 1")
    rng = np.random.default_rng(rng_seed)
    for _ in range(100):
        labels = rng.integers(0, G, size=N)
        if np.unique(labels).size == G:
            tau = np.zeros((N, G))
            tau[np.arange(N), labels] = 1.0
            return tau
    raise PartitionFailure(
        f"no draw covered all {G} components in 100 attempts (N={N})"
    )


def multistart_fit(
    data: Dataset,
    spec: ModelSpec,
    G: int,
    n_starts: int = 10,
    seed: int = 0,
    cfg: Optional[EmConfig] = None,
) -> FitResult:
    """Best-of-``n_starts`` EM fit from independent random partitions.

    Start i uses seed ``seed + i``; aborted starts are skipped and the fit
    with the highest final log-likelihood wins.  Raises
    :class:`AllStartsFailed` when no start survives.
    """
    if n_starts < 1:
        raise CwmError("multistart_fit needs n_starts >= 1")
    best: Optional[FitResult] = None
    reasons: list[str] = []
    for i in range(n_starts):
        try:
            tau0 = random_partition(data.n, G, seed + i)
            fit = em_fit(data, spec, G, tau0, cfg)
        except CwmError as exc:
            reasons.append(f"start {i}: {type(exc).__name__}: {exc}")
            continue
        if best is None or fit.loglik > best.loglik:
            best = fit
    if best is None:
        raise AllStartsFailed(
            f"{spec.name} with G={G}: all {n_starts} starts aborted "
            f"({'; '.join(reasons[:3])}{'; ...' if len(reasons) > 3 else ''})"
        )
    return best


@dataclass
class HierarchyResult:
    """Outcome of the twelve-model initialization sweep for one G.

    ``fits`` maps model names to their FitResults; models that could not be
    fitted appear in ``failures`` with the reason instead.  ``edges`` lists
    the (source, target) warm starts actually used, and ``fallbacks`` the
    non-root models that ended up on a fresh multistart because every warm
    start aborted.
    """

    G: int
    fits: dict[str, FitResult] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)
    fallbacks: list[str] = field(default_factory=list)

    def best_by(self, metric: str = "bic") -> Optional[FitResult]:
        """Fitted model maximizing ``metric`` ('bic', 'icl' or 'loglik')."""
        if not self.fits:
            return None
        return max(self.fits.values(), key=lambda f: getattr(f, metric))


def _model_seed(seed: int, name: str) -> int:
    return seed + _SEED_STRIDE * MODEL_NAMES.index(name)


def hierarchical_fit(
    data: Dataset,
    G: int,
    seed: int = 0,
    cfg: Optional[EmConfig] = None,
    n_starts: int = 10,
) -> HierarchyResult:
    """Fit all twelve models for a given G via the hierarchical warm starts.

    Stage 1 multistarts the Gaussian roots NN-VE and NN-EV.  Stage 2 carries
    their posteriors to the single-t variants (tN-VE, Nt-VE from NN-VE;
    tN-EV, Nt-EV from NN-EV) and starts NN-VV from the better root.  Stage 3
    starts each remaining model from the best-likelihood fit among its
    direct predecessors (tt-VE from {tN-VE, Nt-VE}; tt-EV from {tN-EV,
    Nt-EV}; tN-VV from {tN-VE, tN-EV, NN-VV}; Nt-VV from {Nt-VE, Nt-EV,
    NN-VV}), and stage 4 starts tt-VV from the best of {Nt-VV, tN-VV,
    tt-VE, tt-EV}.

    Sources that failed to fit are skipped; if every source of a target is
    unavailable or every warm start aborts, the target falls back to a
    fresh multistart.  The result is bit-reproducible for fixed
    (data, G, seed, cfg, n_starts).
    """
    if G < 1:
        raise CwmError("hierarchical_fit needs G >= 1")
    out = HierarchyResult(G=G)

    def run_multistart(name: str) -> bool:
        try:
            out.fits[name] = multistart_fit(
                data, spec_from_name(name), G,
                n_starts=n_starts, seed=_model_seed(seed, name), cfg=cfg,
            )
            return True
        except CwmError as exc:
            out.failures[name] = f"{type(exc).__name__}: {exc}"
            return False

    def derive(target: str, sources: list[str]) -> None:
        fitted = [s for s in sources if s in out.fits]
        ranked = sorted(fitted, key=lambda s: out.fits[s].loglik, reverse=True)
        for src in ranked:
            try:
                fit = em_fit(
                    data, spec_from_name(target), G,
                    out.fits[src].latent.tau, cfg,
                )
            except CwmError:
                continue
            out.fits[target] = fit
            out.edges.append((src, target))
            return
        if run_multistart(target):
            out.fallbacks.append(target)

    # stage 1: Gaussian roots
    run_multistart("NN-VE")
    run_multistart("NN-EV")
    # stage 2: single-t children and the unconstrained Gaussian
    derive("tN-VE", ["NN-VE"])
    derive("Nt-VE", ["NN-VE"])
    derive("tN-EV", ["NN-EV"])
    derive("Nt-EV", ["NN-EV"])
    derive("NN-VV", ["NN-VE", "NN-EV"])
    # stage 3: double-t constrained models and unconstrained single-t
    derive("tt-VE", ["tN-VE", "Nt-VE"])
    derive("tt-EV", ["tN-EV", "Nt-EV"])
    derive("tN-VV", ["tN-VE", "tN-EV", "NN-VV"])
    derive("Nt-VV", ["Nt-VE", "Nt-EV", "NN-VV"])
    # stage 4: the full model
    derive("tt-VV", ["Nt-VV", "tN-VV", "tt-VE", "tt-EV"])
    return out
