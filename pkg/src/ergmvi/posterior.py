"""Baseline posteriors: Laplace on the adjusted pseudolikelihood and the exchange sampler.

Also provides a kernel-density KL divergence between one-dimensional marginals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import gaussian_kde, norm

from . import _kernels as K
from .errors import (ConfigurationError, DivergenceError, NonConvergenceError,
                     SaddlePointError)
from .network import Network
from .pseudo import AdjustedPL
from .sampler import Chain, SamplerConfig
from .seeding import rng_for
from .stats import ModelSpec, suff_stats
from .variational import GaussianPrior, GaussianVariational


def _log_joint(apl, prior, theta):
    v, g, h = float(apl.logpdf(theta)), apl.grad(theta), apl.hess(theta)
    return v + float(prior.logpdf(theta)), g + prior.grad(theta), h - prior.precision


def laplace_fit(apl: AdjustedPL, prior: GaussianPrior, tol: float = 1e-10,
                max_iter: int = 200) -> GaussianVariational:
    """Gaussian at the mode of ``log f~(y|theta) + log p(theta)`` with inverse negative Hessian."""
    theta = apl.theta_ml.copy()
    value, grad, hess = _log_joint(apl, prior, theta)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol:
            break
        try:
            step = cho_solve(cho_factor(-hess, lower=True), grad)
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while True:
            cand = theta + t * step
            v, g, h = _log_joint(apl, prior, cand)
            if v >= value or t < 1e-12:
                break
            t *= 0.5
        theta, value, grad, hess = cand, v, g, h
    else:
        if np.linalg.norm(grad) > max(tol, 1e-8):
            raise NonConvergenceError(f"Laplace mode search stalled, |grad| = {np.linalg.norm(grad):.3g}")
    try:
        c = cho_factor(-hess, lower=True)
    except np.linalg.LinAlgError:
        raise SaddlePointError("Hessian is not negative definite at the mode") from None
    cov = cho_solve(c, np.eye(theta.size))
    return GaussianVariational.from_cov(theta, 0.5 * (cov + cov.T))


@dataclass
class McmcChain:
    draws: np.ndarray
    acceptance_rate: float
    config: dict = field(default_factory=dict)

    def write_csv(self, path, names) -> None:
        with open(path, "w") as fh:
            fh.write(",".join(names) + "\n")
            for row in self.draws:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @staticmethod
    def read_csv(path) -> np.ndarray:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def exchange_sample(net: Network, spec: ModelSpec, prior: GaussianPrior, iters: int, burnin: int,
                    sigma_eps, sampler_cfg: SamplerConfig | None = None, seed: int = 0,
                    theta0=None) -> McmcChain:
    """Single-chain exchange algorithm with Gaussian random-walk proposals.

    ``iters`` counts all iterations including ``burnin``. Each proposal draws
    one auxiliary network from ``p(. | theta')`` by running the tie-no-tie
    chain for ``sampler_cfg.aux_iters`` steps from the observed network.
    """
    if iters <= burnin:
        raise ConfigurationError("iters must exceed burnin")
    cfg = sampler_cfg or SamplerConfig()
    p = spec.p
    sig = np.broadcast_to(np.asarray(sigma_eps, dtype=np.float64), (p,)).copy()
    s_obs = suff_stats(net, spec)
    theta = np.zeros(p) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    lp = float(prior.logpdf(theta))
    chain = Chain(net, spec)
    start = chain.snapshot()
    rng = rng_for(seed, "exchange")
    aux = max(1, cfg.aux_iters)
    work = np.empty(p)
    args = chain._args()
    draws = np.empty((iters - burnin, p))
    accepted = 0
    for it in range(iters):
        prop = theta + sig * rng.standard_normal(p)
        chain.restore(start)
        K.tnt_run(*args, prop, chain.stats, rng.random((aux, 3)), work)
        s_aux = chain.stats
        lp_prop = float(prior.logpdf(prop))
        log_a = (theta - prop) @ s_aux + (prop - theta) @ s_obs + lp_prop - lp
        if log_a >= 0.0 or rng.random() < math.exp(log_a):
            theta, lp = prop, lp_prop
            accepted += 1
        if it >= burnin:
            draws[it - burnin] = theta
    return McmcChain(draws, accepted / iters,
                     {"iters": iters, "burnin": burnin, "sigma_eps": sig.tolist(),
                      "aux_iters": aux, "seed": seed})


def _support(x):
    if isinstance(x, GaussianVariational):
        return None
    return np.asarray(x, dtype=np.float64)


def _density(src, k, grid):
    if isinstance(src, GaussianVariational):
        return norm.pdf(grid, src.mu[k], src.sd[k])
    return gaussian_kde(src[:, k], bw_method="silverman")(grid)


def _range(src, k):
    if isinstance(src, GaussianVariational):
        return src.mu[k] - 6 * src.sd[k], src.mu[k] + 6 * src.sd[k]
    x = src[:, k]
    bw = gaussian_kde(x, bw_method="silverman").factor * x.std(ddof=1)
    return x.min() - 3 * bw, x.max() + 3 * bw


def marginal_kl(a, b, points: int = 512, floor: float = 1e-12) -> np.ndarray:
    """Per-parameter ``KL(a || b)`` of one-dimensional marginals.

    ``a`` and ``b`` are draw matrices ``(T, p)`` (smoothed by a Silverman-rule
    Gaussian KDE) or :class:`GaussianVariational` objects (exact densities).
    Both densities are evaluated on a shared grid spanning the union of their
    supports, floored and renormalised.
    """
    a = a if isinstance(a, GaussianVariational) else np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = b if isinstance(b, GaussianVariational) else np.atleast_2d(np.asarray(b, dtype=np.float64))
    pa = a.p if isinstance(a, GaussianVariational) else a.shape[1]
    pb = b.p if isinstance(b, GaussianVariational) else b.shape[1]
    if pa != pb:
        raise ConfigurationError(f"dimension mismatch: {pa} vs {pb}")
    out = np.empty(pa)
    for k in range(pa):
        lo_a, hi_a = _range(a, k)
        lo_b, hi_b = _range(b, k)
        if hi_a < lo_b or hi_b < lo_a:
            raise DivergenceError(f"marginal {k}: supports do not overlap")
        grid = np.linspace(min(lo_a, lo_b), max(hi_a, hi_b), points)
        da = np.maximum(_density(a, k, grid), floor)
        db = np.maximum(_density(b, k, grid), floor)
        da /= np.trapezoid(da, grid)
        db /= np.trapezoid(db, grid)
        out[k] = float(np.trapezoid(da * np.log(da / db), grid))
    return out
