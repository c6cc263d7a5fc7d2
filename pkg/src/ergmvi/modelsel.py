"""Importance-weighted lower bounds on the log evidence and Bayes factors."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import NonConvergenceError, UnderflowError
from .pseudo import AdjustedPL
from .seeding import rng_for
from .variational import GaussianPrior, GaussianVariational

log = logging.getLogger(__name__)

# theta draws evaluated per block; bounds the (draws x dyads) working matrix.
_BLOCK = 2048


@dataclass
class ElboReference:
    """Draws of ``s(y)`` at ``theta_ml`` plus ``log z(theta_ml)`` for the sampled likelihood."""

    theta_ml: np.ndarray
    log_z_ml: float
    stats0: np.ndarray
    s_obs: np.ndarray

    @classmethod
    def from_adjustment(cls, apl: AdjustedPL) -> ElboReference:
        return cls(apl.theta_ml.copy(), apl.log_z_ml, apl.stats_ml.copy(), apl.s_obs.copy())

    @property
    def K0(self) -> int:
        return self.stats0.shape[0]

    def loglik(self, theta):
        """``theta.s(y) - log z(theta_ml) - log mean exp(s_k.(theta - theta_ml))``."""
        theta = np.asarray(theta, dtype=np.float64)
        single = theta.ndim == 1
        th = np.atleast_2d(theta)
        out = np.empty(th.shape[0])
        lk = math.log(self.K0)
        for a in range(0, th.shape[0], _BLOCK):
            blk = th[a:a + _BLOCK]
            shift = (blk - self.theta_ml) @ self.stats0.T
            out[a:a + _BLOCK] = blk @ self.s_obs - self.log_z_ml - (logsumexp(shift, axis=1) - lk)
        return float(out[0]) if single else out


def _apl_loglik(apl: AdjustedPL):
    def f(theta):
        out = np.empty(theta.shape[0])
        for a in range(0, theta.shape[0], _BLOCK):
            out[a:a + _BLOCK] = apl.logpdf(theta[a:a + _BLOCK])
        return out
    return f


@dataclass
class IwlbResult:
    value: float
    V: int
    trace: list = field(default_factory=list)
    clipped: int = 0


def iwlb(q: GaussianVariational, prior: GaussianPrior, loglik, N: int = 1000, J: int = 50,
         tol: float = 1e-5, seed: int = 0, init: float | None = None,
         max_rounds: int = 400) -> IwlbResult:
    """Grow ``V`` by ``J`` per round until the IWLB's relative increase is below ``tol``.

    ``loglik`` is an :class:`AdjustedPL` (plug-in likelihood), an
    :class:`ElboReference` (sampled likelihood) or any callable mapping an
    ``(M, p)`` array to ``M`` log-likelihood values. ``init`` seeds the
    previous-round value; by default it is the mean log weight of the first
    round, i.e. a plain ELBO estimate.
    """
    if isinstance(loglik, AdjustedPL):
        fn = _apl_loglik(loglik)
    elif isinstance(loglik, ElboReference):
        fn = loglik.loglik
    else:
        fn = loglik
    rng = rng_for(seed, "iwlb")
    p = q.p
    log_sum = np.full(N, -np.inf)
    V = 0
    old = init
    trace = []
    clipped = 0
    for t in range(1, max_rounds + 1):
        V += J
        s = rng.standard_normal((N * J, p))
        theta = q.sample(s)
        logw = fn(theta) + prior.logpdf(theta) - q.log_q(theta)
        bad = ~np.isfinite(logw)
        if bad.any():
            clipped += int(bad.sum())
            log.warning("IWLB: %d non-finite log weights clipped to zero weight", int(bad.sum()))
            logw = np.where(bad, -np.inf, logw)
        logw = logw.reshape(N, J)
        if old is None:
            old = float(np.mean(logw))
        log_sum = np.logaddexp(log_sum, logsumexp(logw, axis=1))
        log_bar = log_sum - math.log(V)
        if np.any(np.isneginf(log_bar)):
            raise UnderflowError("every importance weight of some replicate underflowed")
        new = float(np.mean(log_bar))
        trace.append((V, new))
        eps = (new - old) / abs(old) if old != 0 else math.inf
        old = new
        if eps <= tol:
            return IwlbResult(new, V, trace, clipped)
    raise NonConvergenceError(f"IWLB still increasing after V = {V}")


def bayes_factors(iwlbs, reference: int = 0) -> np.ndarray:
    """``exp(L_r - L_ref)`` for each model ``r``."""
    x = np.asarray(iwlbs, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two models")
    return np.exp(x - x[reference])


def log_bayes_factors(iwlbs, reference: int = 0) -> np.ndarray:
    x = np.asarray(iwlbs, dtype=np.float64)
    return x - x[reference]
