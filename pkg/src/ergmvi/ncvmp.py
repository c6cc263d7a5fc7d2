"""Nonconjugate variational message passing on the adjusted pseudolikelihood.

Each sweep replaces ``(mu, Sigma)`` by the fixed-point update built from the
quadrature moments ``B_1`` and ``B_2`` of every dyad. The update is natural
gradient ascent with unit step; when the approximate bound drops, the step is
halved (in natural parameters) until it rises again.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NonConvergenceError
from .pseudo import AdjustedPL
from .quadrature import DEFAULT_QUAD, Quadrature, b_moment
from .variational import GaussianPrior, GaussianVariational

log = logging.getLogger(__name__)


def dyad_moments(apl: AdjustedPL, mu, Sigma):
    """``m_ij = alpha_ij + beta_ij^T mu`` and ``v_ij = sqrt(beta_ij^T Sigma beta_ij)``."""
    m = apl.alpha + apl.beta @ mu
    v2 = np.einsum("dj,jk,dk->d", apl.beta, Sigma, apl.beta)
    return m, np.sqrt(np.maximum(v2, 0.0))


def _logdet_spd(A):
    c, _ = cho_factor(A, lower=True)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def _elbo(apl, prior, mu, Sigma, quad):
    m, v = dyad_moments(apl, mu, Sigma)
    B0 = b_moment(0, m, v, quad)
    d = mu - prior.mu0
    p = mu.size
    return float(apl.log_M + np.sum(apl.y * m - B0) - 0.5 * prior.logdet
                 - 0.5 * d @ prior.precision @ d - 0.5 * np.sum(prior.precision * Sigma)
                 + 0.5 * _logdet_spd(Sigma) + 0.5 * p)


def elbo_tilde(apl: AdjustedPL, prior: GaussianPrior, q: GaussianVariational,
               quad: Quadrature | None = None) -> float:
    """Approximate lower bound with the adjusted pseudolikelihood as plug-in."""
    return _elbo(apl, prior, q.mu, q.Sigma, quad or DEFAULT_QUAD)


@dataclass
class NcvmpResult:
    q: GaussianVariational
    trace: list
    iterations: int
    converged: bool
    rho: list = field(default_factory=list)

    @property
    def elbo(self) -> float:
        return self.trace[-1]


def ncvmp_update(apl: AdjustedPL, prior: GaussianPrior, mu, Sigma, quad=None):
    """Undamped targets: precision ``P_hat`` and the mean gradient ``grad_mu``."""
    quad = quad or DEFAULT_QUAD
    m, v = dyad_moments(apl, mu, Sigma)
    B1 = b_moment(1, m, v, quad)
    B2 = b_moment(2, m, v, quad)
    P_hat = prior.precision + (apl.beta * B2[:, None]).T @ apl.beta
    grad_mu = apl.beta.T @ (apl.y - B1) - prior.precision @ (mu - prior.mu0)
    return 0.5 * (P_hat + P_hat.T), grad_mu


def ncvmp_fit(apl: AdjustedPL, prior: GaussianPrior, init: GaussianVariational | None = None,
              tol: float = 1e-5, max_iter: int = 1000, quad: Quadrature | None = None,
              rho0: float = 0.5, halvings: int = 6) -> NcvmpResult:
    """Fit ``q = N(mu, Sigma)`` by NCVMP with damping on bound decrease.

    Defaults start from ``mu = theta_ml`` and ``Sigma = 0.01 I``. Stops when the
    relative increase of the bound falls below ``tol``.
    """
    quad = quad or DEFAULT_QUAD
    if init is None:
        init = GaussianVariational(apl.theta_ml, 0.01 * np.eye(apl.p))
    mu = init.mu.copy()
    Sigma = init.Sigma
    P = cho_solve(cho_factor(Sigma, lower=True), np.eye(mu.size))
    L_old = _elbo(apl, prior, mu, Sigma, quad)
    trace, rhos = [L_old], []
    rho_seq = [1.0] + [rho0 * 0.5 ** k for k in range(halvings + 1)]
    for it in range(1, max_iter + 1):
        P_hat, grad_mu = ncvmp_update(apl, prior, mu, Sigma, quad)
        accepted = None
        for rho in rho_seq:
            P_new = (1.0 - rho) * P + rho * P_hat
            try:
                c = cho_factor(P_new, lower=True)
            except np.linalg.LinAlgError:
                continue
            S_new = cho_solve(c, np.eye(mu.size))
            S_new = 0.5 * (S_new + S_new.T)
            mu_new = mu + rho * S_new @ grad_mu
            try:
                L_new = _elbo(apl, prior, mu_new, S_new, quad)
            except np.linalg.LinAlgError:
                continue
            if math.isfinite(L_new) and L_new >= L_old:
                accepted = (rho, P_new, S_new, mu_new, L_new)
                break
        if accepted is None:
            # No step increases the bound: converged if we are already flat.
            if abs(L_new - L_old) <= tol * abs(L_old):
                return NcvmpResult(GaussianVariational.from_cov(mu, Sigma), trace, it - 1, True, rhos)
            raise NonConvergenceError(
                f"NCVMP bound failed to increase after {halvings} halvings at iteration {it}",
                trace=trace)
        rho, P, Sigma, mu, L_new = accepted
        rhos.append(rho)
        trace.append(L_new)
        eps = (L_new - L_old) / abs(L_old) if L_old != 0 else (0.0 if L_new == L_old else math.inf)
        L_old = L_new
        log.debug("ncvmp %d: L=%.10g rho=%g eps=%.3g", it, L_new, rho, eps)
        if eps < tol:
            return NcvmpResult(GaussianVariational.from_cov(mu, Sigma), trace, it, True, rhos)
    raise NonConvergenceError(f"NCVMP did not converge in {max_iter} iterations", trace=trace)
