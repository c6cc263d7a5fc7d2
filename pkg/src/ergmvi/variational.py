"""Gaussian variational family, Gaussian prior and posterior-file I/O.

``vech`` stacks the lower triangle column by column (column-major), so for
``p = 2`` the order is ``(C11, C21, C22)``. The same order is used in every
gradient and file dump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from .errors import ConfigurationError, FactorizationError

LOG_2PI = math.log(2.0 * math.pi)


def vech_indices(p: int):
    """Row and column indices of the lower triangle in column-major order."""
    cols, rows = np.triu_indices(p)
    return rows, cols


def vech(A) -> np.ndarray:
    A = np.asarray(A)
    r, c = vech_indices(A.shape[0])
    return A[r, c].copy()


def unvech(v, p: int) -> np.ndarray:
    A = np.zeros((p, p))
    r, c = vech_indices(p)
    A[r, c] = v
    return A


def _diag_positions(p):
    r, c = vech_indices(p)
    return np.flatnonzero(r == c)


@dataclass(frozen=True)
class GaussianPrior:
    """``N(mu0, Sigma0)`` prior on the model parameters."""

    mu0: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        mu0 = np.asarray(self.mu0, dtype=np.float64)
        S0 = np.atleast_2d(np.asarray(self.Sigma0, dtype=np.float64))
        if S0.shape != (mu0.size, mu0.size) or not np.allclose(S0, S0.T):
            raise ConfigurationError("prior covariance must be a symmetric p x p matrix")
        try:
            L = cholesky(S0, lower=True)
        except np.linalg.LinAlgError:
            raise ConfigurationError("prior covariance is not positive definite") from None
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "Sigma0", S0)
        object.__setattr__(self, "_chol", L)
        object.__setattr__(self, "precision", cho_solve((L, True), np.eye(mu0.size)))
        object.__setattr__(self, "logdet", 2.0 * float(np.sum(np.log(np.diag(L)))))

    @classmethod
    def isotropic(cls, p: int, variance: float = 100.0, mean: float = 0.0) -> GaussianPrior:
        return cls(np.full(p, float(mean)), variance * np.eye(p))

    @property
    def p(self) -> int:
        return self.mu0.size

    def logpdf(self, theta):
        """Log density; ``theta`` may be a vector or an ``(N, p)`` batch."""
        d = np.asarray(theta, dtype=np.float64) - self.mu0
        z = solve_triangular(self._chol, d.T, lower=True)
        quad = np.sum(z * z, axis=0)
        return -0.5 * (self.p * LOG_2PI + self.logdet + quad)

    def grad(self, theta):
        return -self.precision @ (np.asarray(theta) - self.mu0)


@dataclass
class GaussianVariational:
    """``q(theta) = N(mu, C C^T)`` with ``C`` lower triangular, positive diagonal."""

    mu: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).copy()
        C = np.atleast_2d(np.asarray(self.C, dtype=np.float64))
        if C.shape != (self.mu.size, self.mu.size):
            raise ConfigurationError("C must be p x p")
        if np.any(np.triu(C, 1)) or np.any(np.diag(C) <= 0) or not np.all(np.isfinite(C)):
            raise ConfigurationError("C must be lower triangular with a positive diagonal")
        self.C = C.copy()

    @property
    def p(self) -> int:
        return self.mu.size

    @property
    def Sigma(self) -> np.ndarray:
        return self.C @ self.C.T

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.sum(self.C * self.C, axis=1))

    @property
    def logdet_C(self) -> float:
        return float(np.sum(np.log(np.diag(self.C))))

    @classmethod
    def from_cov(cls, mu, Sigma) -> GaussianVariational:
        try:
            C = cholesky(np.atleast_2d(Sigma), lower=True)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"covariance is not positive definite: {exc}") from None
        return cls(mu, C)

    @classmethod
    def from_precision(cls, mu, P) -> GaussianVariational:
        try:
            c = cho_factor(np.atleast_2d(P), lower=True)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError(f"precision is not positive definite: {exc}") from None
        Sigma = cho_solve(c, np.eye(len(mu)))
        return cls.from_cov(mu, 0.5 * (Sigma + Sigma.T))

    def cprime(self) -> np.ndarray:
        """``vech(C')`` where ``C'`` holds ``log`` of the diagonal of ``C``."""
        v = vech(self.C)
        d = _diag_positions(self.p)
        v[d] = np.log(v[d])
        return v

    @classmethod
    def from_cprime(cls, mu, v) -> GaussianVariational:
        mu = np.asarray(mu, dtype=np.float64)
        v = np.array(v, dtype=np.float64)
        d = _diag_positions(mu.size)
        v[d] = np.exp(v[d])
        return cls(mu, unvech(v, mu.size))

    def cprime_jacobian(self) -> np.ndarray:
        """Diagonal of ``D_C``: ``C_ii`` at diagonal positions, one elsewhere."""
        out = np.ones(self.p * (self.p + 1) // 2)
        d = _diag_positions(self.p)
        out[d] = np.diag(self.C)
        return out

    def sample(self, s):
        """``theta = C s + mu`` for a vector or an ``(N, p)`` batch of standard normals."""
        s = np.asarray(s, dtype=np.float64)
        return s @ self.C.T + self.mu

    def standardize(self, theta):
        """Inverse of :meth:`sample`: ``s = C^{-1} (theta - mu)``."""
        d = np.asarray(theta, dtype=np.float64) - self.mu
        return solve_triangular(self.C, d.T, lower=True).T

    def log_q(self, theta):
        s = self.standardize(theta)
        return -0.5 * self.p * LOG_2PI - self.logdet_C - 0.5 * np.sum(s * s, axis=-1)


def sample_theta(q: GaussianVariational, s):
    return q.sample(s)


def log_q(q: GaussianVariational, theta) -> float:
    return float(q.log_q(theta))


def log_q_grads(q: GaussianVariational, theta):
    """``(grad_theta, grad_mu, grad_vech_C)`` of ``log q(theta)``."""
    s = q.standardize(theta)
    ct_s = solve_triangular(q.C, s, lower=True, trans="T")
    g_theta = -ct_s
    Cinv_T = solve_triangular(q.C, np.eye(q.p), lower=True, trans="T")
    g_C = vech(Cinv_T @ (np.outer(s, s) - np.eye(q.p)))
    return g_theta, ct_s, g_C


def elbo_at(q: GaussianVariational, s, theta, loglik: float, prior: GaussianPrior) -> float:
    """Single-draw ELBO estimate ``log p(y, theta) - log q(theta)`` at ``theta = C s + mu``."""
    s = np.asarray(s, dtype=np.float64)
    return float(loglik + prior.logpdf(theta) + q.logdet_C + 0.5 * s @ s + 0.5 * q.p * LOG_2PI)


@dataclass
class PosteriorFile:
    """Gaussian posterior summary written as CSV.

    One row per parameter: ``param, mean, sd`` followed by that row of the
    covariance matrix. Metadata travels in leading ``# key=value`` lines.
    """

    names: list
    q: GaussianVariational
    meta: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Sigma = self.q.Sigma
        lines = [f"# {k}={v}" for k, v in sorted(self.meta.items())]
        lines.append(",".join(["param", "mean", "sd"] + [f"cov:{n}" for n in self.names]))
        for k, name in enumerate(self.names):
            row = [name, repr(float(self.q.mu[k])), repr(float(self.q.sd[k]))]
            row += [repr(float(x)) for x in Sigma[k]]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> PosteriorFile:
        meta, rows = {}, []
        for line in Path(path).read_text().splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v.strip()
            elif line.strip():
                rows.append(line.split(","))
        if not rows or rows[0][:3] != ["param", "mean", "sd"]:
            raise ConfigurationError(f"{path}: not a posterior file")
        body = rows[1:]
        names = [r[0] for r in body]
        mu = np.array([float(r[1]) for r in body])
        Sigma = np.array([[float(x) for x in r[3:]] for r in body])
        return cls(names, GaussianVariational.from_cov(mu, Sigma), meta)
