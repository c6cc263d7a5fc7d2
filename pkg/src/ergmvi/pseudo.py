"""Pseudolikelihood, MCMC-MLE and the adjusted pseudolikelihood.

The adjusted pseudolikelihood is ``M * f_PL(y | g(theta))`` with the affine map
``g(theta) = theta_pl + W (theta - theta_ml)``. ``W`` matches the curvature at
the mode to the Monte Carlo covariance of ``s(y)`` and ``M`` matches the height
of the true likelihood there, which needs an estimate of ``log z(theta_ml)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular
from scipy.optimize import linprog
from scipy.special import expit, logsumexp

from .errors import (ConfigurationError, DegeneracyError, FactorizationError,
                     NonConvergenceError)
from .network import Network
from .sampler import Chain, SamplerConfig, tnt_sample
from .seeding import derive_seed, rng_for
from .stats import ModelSpec, all_change_stats, suff_stats

log = logging.getLogger(__name__)


def softplus(x):
    return np.logaddexp(0.0, x)


def logpl(theta, X, y):
    """``log f_PL`` with gradient and Hessian for change-stat matrix ``X``."""
    eta = X @ theta
    prob = expit(eta)
    value = float(np.sum(y * eta - softplus(eta)))
    grad = X.T @ (y - prob)
    hess = -(X * (prob * (1.0 - prob))[:, None]).T @ X
    return value, grad, hess


def _separation_direction(X, y):
    """Direction along which the logistic likelihood increases forever, or ``None``."""
    sign = 2.0 * y - 1.0
    A = sign[:, None] * X
    p = X.shape[1]
    # maximise sum(A d) subject to A d >= 0 and |d|_inf <= 1
    res = linprog(-A.sum(axis=0), A_ub=-A, b_ub=np.zeros(len(y)),
                  bounds=[(-1, 1)] * p, method="highs")
    if res.status == 0 and -res.fun > 1e-7:
        return res.x
    return None


def mple(net: Network, spec: ModelSpec, tol: float = 1e-10, max_iter: int = 200,
         X=None, y=None) -> np.ndarray:
    """Maximum pseudolikelihood estimate by Newton-Raphson with step halving."""
    if X is None:
        X = all_change_stats(net, spec)
    if y is None:
        y = net.dyad_values()
    labels = spec.labels
    if np.linalg.matrix_rank(X) < X.shape[1]:
        null = np.linalg.svd(X)[2][-1]
        raise NonConvergenceError(
            f"change-statistic matrix is rank deficient; term {labels[int(np.argmax(np.abs(null)))]!r} "
            "is collinear with the others")
    direction = _separation_direction(X, y)
    if direction is not None:
        raise NonConvergenceError(
            f"pseudolikelihood has no finite maximiser (separation); offending term "
            f"{labels[int(np.argmax(np.abs(direction)))]!r}")
    theta = np.zeros(X.shape[1])
    value, grad, hess = logpl(theta, X, y)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol:
            return theta
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = -np.linalg.solve(hess - 1e-8 * np.eye(len(theta)), grad)
        t = 1.0
        while True:
            cand = theta + t * step
            v, g, h = logpl(cand, X, y)
            if v >= value - 1e-12 * abs(value) or t < 1e-10:
                break
            t *= 0.5
        theta, value, grad, hess = cand, v, g, h
    if np.linalg.norm(grad) <= max(tol, 1e-8):
        return theta
    raise NonConvergenceError(f"MPLE did not converge: |grad| = {np.linalg.norm(grad):.3g}")


def _in_hull(point, S):
    K = S.shape[0]
    A_eq = np.vstack([S.T, np.ones(K)])
    b_eq = np.append(point, 1.0)
    res = linprog(np.zeros(K), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 0


def _hummel_gamma(s_obs, S, inflate=1.05, steps=14):
    """Largest step towards ``s_obs`` keeping the (inflated) target inside the sample hull."""
    mean = S.mean(axis=0)

    def ok(g):
        return _in_hull(mean + inflate * g * (s_obs - mean), S)

    if ok(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _log_ratio(delta, target, S):
    """Sampled ``log p(y|theta)/p(y|theta0)`` with ``target`` standing in for ``s(y)``."""
    a = S @ delta
    lse = logsumexp(a)
    w = np.exp(a - lse)
    value = target @ delta - (lse - math.log(len(a)))
    mean = w @ S
    c = S - mean
    hess = -(c * w[:, None]).T @ c
    return value, target - mean, hess


def _maximize_log_ratio(target, S, tol=1e-10, max_iter=100):
    p = S.shape[1]
    delta = np.zeros(p)
    value, grad, hess = _log_ratio(delta, target, S)
    for _ in range(max_iter):
        if np.linalg.norm(grad) <= tol:
            break
        step = np.linalg.solve(hess - 1e-12 * np.eye(p), -grad)
        t = 1.0
        while True:
            cand = delta + t * step
            v, g, h = _log_ratio(cand, target, S)
            if v >= value or t < 1e-8:
                break
            t *= 0.5
        delta, value, grad, hess = cand, v, g, h
    return delta


def mcmc_mle(net: Network, spec: ModelSpec, theta0=None, cfg: SamplerConfig | None = None,
             tol: float = 1e-4, max_iter: int = 40, final_count: int | None = None,
             s_obs=None) -> np.ndarray:
    """Monte Carlo maximum likelihood with Hummel-style partial stepping.

    Each round simulates at ``theta0``, moves the observed statistics towards
    the sample mean until they sit inside the convex hull of the draws,
    maximises the sampled log-likelihood ratio and re-centres ``theta0``.
    Without ``theta0`` the MPLE is the start, or zero when it does not exist.
    Once full steps are possible and the step is below ``tol`` (or within
    Monte Carlo noise twice running), a final solve on ``final_count`` draws
    gives the estimate.
    """
    cfg = cfg or SamplerConfig()
    if s_obs is None:
        s_obs = suff_stats(net, spec)
    if theta0 is None:
        try:
            theta0 = mple(net, spec)
        except NonConvergenceError as exc:
            # the MLE can exist when the MPLE does not (common on tiny graphs)
            log.warning("MPLE unavailable (%s); starting from zero", exc)
            theta0 = np.zeros(spec.p)
    theta = np.asarray(theta0, dtype=np.float64).copy()
    p = spec.p
    quiet_rounds = 0
    for it in range(max_iter):
        S = tnt_sample(net, theta, spec, cfg.replace(seed=_round_seed(cfg.seed, it))).stats
        if np.any(S.std(axis=0) == 0):
            raise DegeneracyError(
                f"simulated statistics have zero variance at theta={theta.tolist()}")
        gamma = _hummel_gamma(s_obs, S)
        if gamma <= 0.0:
            raise DegeneracyError("observed statistics lie outside every simulated hull; "
                                  "the MLE may not exist")
        target = S.mean(axis=0) + gamma * (s_obs - S.mean(axis=0))
        step = _maximize_log_ratio(target, S)
        theta = theta + step
        log.debug("mcmc-mle round %d: gamma=%.3f step=%s", it, gamma, step)
        if gamma >= 1.0:
            noise = _effective_size(S @ step) * step @ np.cov(S, rowvar=False).reshape(p, p) @ step
            if np.linalg.norm(step) < tol:
                break
            quiet_rounds = quiet_rounds + 1 if noise < 4.0 * p else 0
            if quiet_rounds >= 2:
                break
        else:
            quiet_rounds = 0
    else:
        raise NonConvergenceError(f"MCMC-MLE did not settle in {max_iter} rounds")
    final = cfg.replace(count=final_count or 4 * cfg.count, seed=_round_seed(cfg.seed, 10_000))
    S = tnt_sample(net, theta, spec, final).stats
    if _hummel_gamma(s_obs, S, steps=1) >= 1.0:
        theta = theta + _maximize_log_ratio(s_obs, S)
    return theta


def _effective_size(u: np.ndarray) -> float:
    """Batch-means effective sample size of a scalar chain (at most ``len(u)``)."""
    n = len(u)
    b = max(int(np.sqrt(n)), 2)
    m = n // b
    if m < 2:
        return float(n)
    var = u.var(ddof=1)
    var_mean = u[: m * b].reshape(m, b).mean(axis=1).var(ddof=1) / m
    if var == 0.0 or var_mean == 0.0:
        return float(n)
    return float(min(n, var / var_mean))


def _round_seed(seed, it):
    return derive_seed(seed, "mcmle", it)


def curvature_adjust(neg_hess_pl, cov_ml) -> np.ndarray:
    """``W = R1^{-1} R2`` with ``R1^T R1 = -Hess log f_PL`` and ``R2^T R2 = cov``."""
    try:
        R1 = cholesky(np.atleast_2d(neg_hess_pl), lower=False)
        R2 = cholesky(np.atleast_2d(cov_ml), lower=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"curvature matrices must be positive definite: {exc}") from None
    return solve_triangular(R1, R2, lower=False)


@dataclass
class TemperSchedule:
    """Temperatures ``0 = t_0 < ... < t_J = 1`` and per-rung sampling effort."""

    temps: np.ndarray
    K: int = 500
    aux_iters: int = 30000
    thin: int = 1000
    burn_between: int = 0

    def __post_init__(self):
        t = np.asarray(self.temps, dtype=np.float64)
        if t.ndim != 1 or t.size < 1 or t[0] != 0.0 or t[-1] != 1.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("temperatures must increase strictly from 0 to 1")
        self.temps = t

    @classmethod
    def uniform(cls, J=20, **kw) -> TemperSchedule:
        return cls(np.linspace(0.0, 1.0, J + 1), **kw)


def log_z_tempered(net: Network, spec: ModelSpec, theta_ml, sched: TemperSchedule,
                   seed: int = 0, modified: bool = True) -> float:
    """Importance-sampling ladder estimate of ``log z(theta_ml)``.

    The modified ladder keeps the edges coefficient fixed and starts from the
    closed-form Bernoulli graph; the plain ladder starts from ``z(0) = 2^D``.
    Rungs are simulated in order, each chain warm-started from the last.
    """
    theta_ml = np.asarray(theta_ml, dtype=np.float64)
    n = net.n
    D = n * (n - 1) // 2
    if modified:
        if not spec.edges_first:
            raise ConfigurationError("the modified tempering ladder needs 'edges' as the first term")
        log_z = D * float(softplus(theta_ml[0]))
        if spec.p == 1:
            return log_z
        direction = np.concatenate([[0.0], theta_ml[1:]])
        base = np.concatenate([[theta_ml[0]], np.zeros(spec.p - 1)])
    else:
        log_z = D * math.log(2.0)
        direction = theta_ml
        base = np.zeros(spec.p)
    if not np.any(direction):
        return log_z
    chain = Chain(net, spec)
    rng = rng_for(seed, "temper")
    t = sched.temps
    for j in range(1, len(t)):
        theta = base + t[j - 1] * direction
        burn = sched.aux_iters if j == 1 else sched.burn_between
        S, _ = chain.sample(theta, burn, sched.thin, sched.K, rng)
        a = (t[j] - t[j - 1]) * (S @ direction)
        log_z += float(logsumexp(a) - math.log(len(a)))
    return log_z


def magnitude_adjust(s_obs, theta_ml, log_z_ml, logpl_at_pl) -> float:
    """``log M = theta_ml . s(y) - log z(theta_ml) - log f_PL(y | theta_pl)``."""
    return float(np.dot(theta_ml, s_obs) - log_z_ml - logpl_at_pl)


@dataclass
class AdjustedPL:
    theta_pl: np.ndarray
    theta_ml: np.ndarray
    W: np.ndarray
    log_M: float
    alpha: np.ndarray
    beta: np.ndarray
    y: np.ndarray
    log_z_ml: float
    cov_ml: np.ndarray
    s_obs: np.ndarray
    stats_ml: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    labels: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return len(self.theta_ml)

    @classmethod
    def build(cls, X, y, theta_pl, theta_ml, W, log_M, **kw) -> AdjustedPL:
        theta_pl = np.asarray(theta_pl, dtype=np.float64)
        theta_ml = np.asarray(theta_ml, dtype=np.float64)
        W = np.atleast_2d(W)
        alpha = X @ (theta_pl - W @ theta_ml)
        beta = X @ W
        return cls(theta_pl, theta_ml, W, float(log_M), alpha, beta,
                   np.asarray(y, dtype=np.float64), **kw)

    def g(self, theta):
        return self.theta_pl + self.W @ (np.asarray(theta) - self.theta_ml)

    def logpdf(self, theta):
        """``log f~(y | theta)``; accepts a single vector or an ``(N, p)`` batch."""
        theta = np.asarray(theta, dtype=np.float64)
        eta = self.alpha + theta @ self.beta.T
        return self.log_M + np.sum(self.y * eta - softplus(eta), axis=-1)

    def grad(self, theta):
        eta = self.alpha + self.beta @ theta
        return self.beta.T @ (self.y - expit(eta))

    def hess(self, theta):
        eta = self.alpha + self.beta @ theta
        pr = expit(eta)
        return -(self.beta * (pr * (1.0 - pr))[:, None]).T @ self.beta

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    @classmethod
    def from_dict(cls, d) -> AdjustedPL:
        kw = dict(d)
        for k in ("theta_pl", "theta_ml", "W", "alpha", "beta", "y", "cov_ml", "s_obs", "stats_ml"):
            kw[k] = np.asarray(kw[k], dtype=np.float64)
        kw["W"] = np.atleast_2d(kw["W"])
        kw["cov_ml"] = np.atleast_2d(kw["cov_ml"])
        if kw["beta"].ndim == 1:
            kw["beta"] = kw["beta"][:, None]
        return cls(**kw)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> AdjustedPL:
        return cls.from_dict(json.loads(Path(path).read_text()))


def adjusted_logpl(apl: AdjustedPL, theta):
    """Value, gradient and Hessian of ``log f~(y | theta)``."""
    theta = np.asarray(theta, dtype=np.float64)
    return float(apl.logpdf(theta)), apl.grad(theta), apl.hess(theta)


@dataclass
class AdjustConfig:
    """Effort settings for :func:`fit_adjustment`."""

    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    mle_sampler: SamplerConfig | None = None
    temper: TemperSchedule = field(default_factory=TemperSchedule.uniform)
    seed: int = 0


def fit_adjustment(net: Network, spec: ModelSpec, cfg: AdjustConfig | None = None,
                   theta_ml=None) -> AdjustedPL:
    """Compute every ingredient of the adjusted pseudolikelihood for ``(net, spec)``.

    ``theta_ml`` may be supplied to skip MCMC-MLE (e.g. from an exact oracle).
    """
    cfg = cfg or AdjustConfig()
    X = all_change_stats(net, spec)
    y = net.dyad_values()
    s_obs = suff_stats(net, spec)
    theta_pl = mple(net, spec, X=X, y=y)
    if theta_ml is None:
        mle_cfg = (cfg.mle_sampler or cfg.sampler).replace(seed=derive_seed(cfg.seed, "adjust-mle"))
        theta_ml = mcmc_mle(net, spec, theta_pl, mle_cfg, s_obs=s_obs)
    theta_ml = np.asarray(theta_ml, dtype=np.float64)
    sample = tnt_sample(net, theta_ml, spec, cfg.sampler.replace(seed=derive_seed(cfg.seed, "adjust-cov")))
    cov_ml = sample.cov()
    v_pl, _, h_pl = logpl(theta_pl, X, y)
    W = curvature_adjust(-h_pl, cov_ml)
    log_z_ml = log_z_tempered(net, spec, theta_ml, cfg.temper, seed=derive_seed(cfg.seed, "adjust-logz"))
    log_M = magnitude_adjust(s_obs, theta_ml, log_z_ml, v_pl)
    meta = {"network": net.fingerprint(), "spec": str(spec), "seed": cfg.seed,
            "n": net.n, "acceptance_rate": sample.acceptance_rate}
    return AdjustedPL.build(X, y, theta_pl, theta_ml, W, log_M, log_z_ml=log_z_ml,
                            cov_ml=cov_ml, s_obs=s_obs, stats_ml=sample.stats,
                            labels=spec.labels, meta=meta)


def cached_adjustment(net: Network, spec: ModelSpec, cfg: AdjustConfig, cache_dir) -> AdjustedPL:
    """Load the adjustment for ``(network, spec, seed)`` from ``cache_dir`` or compute and store it."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = f"{net.fingerprint()}-{str(spec).replace(':', '_').replace(',', '+')}-{cfg.seed}"
    path = cache_dir / f"adjust-{key}.json"
    if path.exists():
        return AdjustedPL.load(path)
    apl = fit_adjustment(net, spec, cfg)
    apl.save(path)
    return apl
