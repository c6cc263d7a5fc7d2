"""Stochastic variational inference with reparameterised gradients and Adam steps.

``E[s(y) | theta]`` inside the gradient is estimated either by fresh simulation
(``mode="mc"``), by self-normalised importance sampling from an adaptive store
of earlier simulations (``mode="snis"``), or from a single fixed proposal at
``theta_ml`` that is never refreshed (``mode="fixed"``, a diagnostic).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigurationError, DivergenceError
from .modelsel import ElboReference
from .network import Network
from .sampler import SamplerConfig, tnt_sample
from .seeding import derive_seed, rng_for
from .stats import ModelSpec, suff_stats
from .variational import LOG_2PI, GaussianPrior, GaussianVariational, vech

log = logging.getLogger(__name__)

MODES = ("mc", "snis", "fixed")


@dataclass
class Adam:
    """Adam ascent on a flat parameter vector."""

    step: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def update(self, x, g):
        if self.m is None:
            self.m = np.zeros_like(g)
            self.v = np.zeros_like(g)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        return x + self.step * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class SVIConfig:
    mode: str = "snis"
    K: int = 100
    K0: int = 1000
    step: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tol: float = 1e-5
    check_every: int = 1000
    max_iter: int = 100_000
    ess_frac: float = 1.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.K < 1 or self.K0 < 1 or self.check_every < 1:
            raise ConfigurationError("K, K0 and check_every must be positive")


class ParticleStore:
    """Parameter values with the statistics simulated there, for SNIS reuse."""

    def __init__(self, K: int, ess_threshold: float):
        self.K = K
        self.ess_threshold = ess_threshold
        self.thetas: list[np.ndarray] = []
        self.stats: list[np.ndarray] = []
        self.inserted_at: list[int] = []

    def __len__(self):
        return len(self.thetas)

    def add(self, theta, stats, iteration: int) -> None:
        stats = np.asarray(stats, dtype=np.float64)
        if stats.shape[0] != self.K:
            raise ConfigurationError(f"particle needs exactly {self.K} statistic vectors")
        self.thetas.append(np.asarray(theta, dtype=np.float64).copy())
        self.stats.append(stats)
        self.inserted_at.append(iteration)

    def nearest(self, theta, C) -> int:
        """Index of the particle closest to ``theta`` in the metric ``(C C^T)^{-1}``.

        Ties go to the earliest inserted particle.
        """
        diff = np.asarray(theta) - np.array(self.thetas)
        z = solve_triangular(C, diff.T, lower=True)
        return int(np.argmin(np.sum(z * z, axis=0)))


def snis_weights(stats, delta):
    """Normalised weights ``w_k ~ exp(s_k . delta)`` and their ESS."""
    a = stats @ delta
    a -= a.max()
    w = np.exp(a)
    w /= w.sum()
    return w, 1.0 / float(np.sum(w * w))


def snis_mean_stats(store: ParticleStore, theta, C):
    """``(mean_stats, ess, index)``; ``mean_stats`` is ``None`` when a refresh is needed."""
    u = store.nearest(theta, C)
    w, ess = snis_weights(store.stats[u], np.asarray(theta) - store.thetas[u])
    if ess < store.ess_threshold:
        return None, ess, u
    return w @ store.stats[u], ess, u


def grad_logjoint(theta, s_y, mean_stats, prior: GaussianPrior):
    return np.asarray(s_y) - np.asarray(mean_stats) + prior.grad(theta)


def reparam_grad(q: GaussianVariational, s, g_logjoint) -> np.ndarray:
    """Single-draw gradient of the bound w.r.t. ``(mu, C')`` at ``theta = C s + mu``.

    ``g_logjoint`` is the gradient of ``log p(y, theta)`` at that draw. The
    ``-log q`` term enters through ``C^{-T} s``, whose mean is zero for ``mu``
    and ``diag(1/C_ii)`` for ``C``.
    """
    g_mu = np.asarray(g_logjoint) + solve_triangular(q.C, s, lower=True, trans="T")
    g_c = q.cprime_jacobian() * vech(np.outer(g_mu, s))
    return np.concatenate([g_mu, g_c])


def elbo_hat(theta, s, q: GaussianVariational, prior: GaussianPrior, ref: ElboReference) -> float:
    """Single-draw bound estimate using the sampled likelihood at ``theta = C s + mu``."""
    s = np.asarray(s, dtype=np.float64)
    return float(ref.loglik(theta) + prior.logpdf(theta) + q.logdet_C + 0.5 * s @ s
                 + 0.5 * q.p * LOG_2PI)


@dataclass
class SviResult:
    q: GaussianVariational
    lbar: list
    lhat: np.ndarray
    ess: np.ndarray
    refreshed: np.ndarray
    particles: int
    inserted_at: list
    iterations: int
    converged: bool
    seconds: float = 0.0
    thetas: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    @property
    def elbo(self) -> float:
        return self.lbar[-1] if self.lbar else float("nan")


def svi_fit(net: Network, spec: ModelSpec, prior: GaussianPrior, init: GaussianVariational,
            cfg: SVIConfig, ref: ElboReference, sampler_cfg: SamplerConfig | None = None,
            keep_thetas: bool = False) -> SviResult:
    """Run SVI from ``init`` until the 1000-iteration block mean of the bound stalls.

    Every simulation of ``K`` networks at some ``theta`` uses ``sampler_cfg``
    (burn-in, thinning, chains, workers) with a seed derived from
    ``cfg.seed`` and the iteration number.
    """
    t0 = time.perf_counter()
    scfg = (sampler_cfg or SamplerConfig()).replace(count=cfg.K)
    s_y = suff_stats(net, spec)
    p = spec.p
    rng = rng_for(cfg.seed, "svi")

    def simulate(theta, it):
        return tnt_sample(net, theta, spec, scfg.replace(seed=derive_seed(cfg.seed, "svi-sim", it))).stats

    store = None
    if cfg.mode in ("snis", "fixed"):
        thr = cfg.ess_frac * cfg.K if cfg.mode == "snis" else -math.inf
        store = ParticleStore(cfg.K, thr)
        store.add(ref.theta_ml, simulate(ref.theta_ml, 0), 0)

    q = GaussianVariational(init.mu, init.C)
    adam = Adam(cfg.step, cfg.beta1, cfg.beta2, cfg.eps)
    x = np.concatenate([q.mu, q.cprime()])
    lhat = np.empty(cfg.max_iter)
    ess = np.full(cfg.max_iter, np.nan)
    refreshed = np.zeros(cfg.max_iter, dtype=bool)
    thetas = np.empty((cfg.max_iter, p)) if keep_thetas else None
    lbar = []
    old = -math.inf
    converged = False
    t = 0
    while t < cfg.max_iter:
        t += 1
        s = rng.standard_normal(p)
        theta = q.sample(s)
        if keep_thetas:
            thetas[t - 1] = theta
        if store is None:
            mean_stats = simulate(theta, t).mean(axis=0)
        else:
            mean_stats, e, _ = snis_mean_stats(store, theta, q.C)
            ess[t - 1] = e
            if mean_stats is None:
                S = simulate(theta, t)
                mean_stats = S.mean(axis=0)
                store.add(theta, S, t)
                refreshed[t - 1] = True
        grad = reparam_grad(q, s, grad_logjoint(theta, s_y, mean_stats, prior))
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite gradient at iteration {t}: theta={theta.tolist()}, "
                                  f"mu={q.mu.tolist()}, C={q.C.tolist()}")
        lhat[t - 1] = elbo_hat(theta, s, q, prior, ref)
        x = adam.update(x, grad)
        q = GaussianVariational.from_cprime(x[:p], x[p:])
        if t % cfg.check_every == 0:
            new = float(np.mean(lhat[t - cfg.check_every:t]))
            lbar.append(new)
            eps = (new - old) / abs(old) if math.isfinite(old) else math.inf
            old = new
            log.info("svi %d: Lbar=%.6g eps=%.3g particles=%s", t, new, eps,
                     len(store) if store is not None else "-")
            if eps < cfg.tol:
                converged = True
                break
    return SviResult(q, lbar, lhat[:t].copy(), ess[:t].copy(), refreshed[:t].copy(),
                     len(store) if store is not None else 0,
                     list(store.inserted_at) if store is not None else [],
                     t, converged, time.perf_counter() - t0,
                     thetas[:t].copy() if keep_thetas else np.empty((0, p)))
