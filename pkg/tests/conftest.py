"""Shared synthetic-data generators and parameter factories."""

import numpy as np
import pytest

from lincwm import Constraint, Dataset, Dist, ModelSpec, ParameterSet


def random_spd(rng, d, scale=1.0):
    """Random symmetric positive-definite d x d matrix."""
    A = rng.normal(size=(d, d))
    return scale * (A @ A.T + d * np.eye(d))


def gen_vv(rng, N=400, d=1, sep=3.0, slopes=(1.0, -1.0), intercepts=(0.0, 0.0),
           noise=1.0):
    """Two clusters differing in both covariate location and regression.

    Cluster 1: x ~ N(-sep * 1, I), y = b0_1 + s_1 * sum(x) + noise
    Cluster 2: x ~ N(+sep * 1, I), y = b0_2 + s_2 * sum(x) + noise
    """
    half = N // 2
    sizes = (half, N - half)
    xs, ys, labs = [], [], []
    for g, (size, s, b0, sign) in enumerate(
        zip(sizes, slopes, intercepts, (-1.0, 1.0)), start=1
    ):
        x = rng.normal(sign * sep, 1.0, size=(size, d))
        y = b0 + s * x.sum(axis=1) + rng.normal(0.0, noise, size=size)
        xs.append(x)
        ys.append(y)
        labs.append(np.full(size, g))
    return Dataset(
        y=np.concatenate(ys),
        X=np.vstack(xs),
        labels=np.concatenate(labs),
    )


def gen_ve(rng, N=400, d=1, sep=3.0, slope=2.0, intercept=1.0, noise=1.0):
    """Separated covariate clusters sharing one regression line."""
    return gen_vv(rng, N=N, d=d, sep=sep, slopes=(slope, slope),
                  intercepts=(intercept, intercept), noise=noise)


def gen_ev(rng, N=400, d=1, slopes=(2.0, -2.0), intercepts=(3.0, -3.0),
           noise=0.5):
    """One shared covariate distribution, two distinct regressions."""
    half = N // 2
    sizes = (half, N - half)
    xs, ys, labs = [], [], []
    for g, (size, s, b0) in enumerate(zip(sizes, slopes, intercepts), start=1):
        x = rng.normal(0.0, 1.0, size=(size, d))
        y = b0 + s * x.sum(axis=1) + rng.normal(0.0, noise, size=size)
        xs.append(x)
        ys.append(y)
        labs.append(np.full(size, g))
    return Dataset(
        y=np.concatenate(ys),
        X=np.vstack(xs),
        labels=np.concatenate(labs),
    )


def labels_to_tau(labels, G):
    """Hard responsibility matrix from 1-based integer labels."""
    labels = np.asarray(labels, dtype=int)
    tau = np.zeros((labels.shape[0], G))
    tau[np.arange(labels.shape[0]), labels - 1] = 1.0
    return tau


def random_params(rng, spec: ModelSpec, G: int, d: int) -> ParameterSet:
    """Random valid ParameterSet with multiplicities matching ``spec``."""
    n_marg = 1 if spec.marginal_constraint is Constraint.EQUAL else G
    n_cond = 1 if spec.conditional_constraint is Constraint.EQUAL else G
    pi = rng.dirichlet(np.full(G, 5.0))
    mu = rng.normal(0.0, 3.0, size=(n_marg, d))
    Sigma = np.stack([random_spd(rng, d, 0.5) for _ in range(n_marg)])
    beta0 = rng.normal(0.0, 2.0, size=n_cond)
    beta1 = rng.normal(0.0, 1.0, size=(n_cond, d))
    sigma2 = rng.uniform(0.5, 2.0, size=n_cond)
    nu = rng.uniform(3.0, 30.0, size=n_marg) if spec.marginal_dist is Dist.T else None
    zeta = rng.uniform(3.0, 30.0, size=n_cond) if spec.conditional_dist is Dist.T else None
    return ParameterSet(pi=pi, mu=mu, Sigma=Sigma, beta0=beta0, beta1=beta1,
                        sigma2=sigma2, nu=nu, zeta=zeta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
