"""Mode-shifted Gauss-Hermite quadrature for Gaussian expectations of softplus derivatives.

``B_r(m, v) = E[b^(r)(v Z + m)]`` with ``Z ~ N(0, 1)`` and ``b(x) = log(1 + e^x)``.
The integrand ``g(z) = b^(r)(v z + m) phi(z)`` is re-centred at its mode and
scaled by its log-curvature there before the Hermite rule is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import jit
from .errors import ConfigurationError

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Quadrature:
    """Hermite nodes with log modified weights ``log(w_d exp(x_d^2))``."""

    nodes: np.ndarray
    weights: np.ndarray
    log_wstar: np.ndarray

    @classmethod
    def hermite(cls, D: int = 20) -> Quadrature:
        if D < 1:
            raise ConfigurationError("quadrature order must be positive")
        x, w = np.polynomial.hermite.hermgauss(D)
        return cls(x, w, np.log(w) + x * x)

    @property
    def D(self) -> int:
        return self.nodes.size

    @property
    def wstar(self) -> np.ndarray:
        return np.exp(self.log_wstar)


@jit
def _sig(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@jit
def _softplus(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@jit
def _log_bder(r, x):
    """``log b^(r)(x)``."""
    if r == 0:
        if x < -30.0:
            return x - 0.5 * math.exp(x)
        return math.log(_softplus(x))
    if r == 1:
        return -_softplus(-x)
    return -_softplus(-x) - _softplus(x)


@jit
def _dlog_bder(r, x):
    """First and second derivatives of ``log b^(r)`` at ``x``."""
    s = _sig(x)
    if r == 0:
        if x < -30.0:
            e = math.exp(x)
            return 1.0 - 0.5 * e, -0.5 * e
        sp = _softplus(x)
        h1 = s / sp
        return h1, s * (1.0 - s) / sp - h1 * h1
    if r == 1:
        return 1.0 - s, -s * (1.0 - s)
    return 1.0 - 2.0 * s, -2.0 * s * (1.0 - s)


@jit
def _b_moment(r, m, v, nodes, log_wstar):
    if v <= 0.0:
        return math.exp(_log_bder(r, m))
    # log g is strictly concave with its mode inside [-v, v]; Newton with a bracket.
    lo = -v
    hi = v
    z = 0.0
    for _ in range(100):
        h1, h2 = _dlog_bder(r, v * z + m)
        f1 = v * h1 - z
        f2 = v * v * h2 - 1.0
        if f1 > 0.0:
            lo = z
        else:
            hi = z
        step = -f1 / f2
        znew = z + step
        if not (znew > lo and znew < hi) or not math.isfinite(znew):
            znew = 0.5 * (lo + hi)
        if abs(znew - z) <= 1e-14 * (1.0 + abs(z)):
            z = znew
            break
        z = znew
    h1, h2 = _dlog_bder(r, v * z + m)
    vhat = 1.0 / math.sqrt(1.0 - v * v * h2)
    scale = math.sqrt(2.0) * vhat
    acc = 0.0
    for d in range(nodes.shape[0]):
        zd = scale * nodes[d] + z
        acc += math.exp(log_wstar[d] + _log_bder(r, v * zd + m) - 0.5 * zd * zd - _HALF_LOG_2PI)
    return scale * acc


@jit
def _b_moments(r, m, v, nodes, log_wstar, out):
    for k in range(m.shape[0]):
        out[k] = _b_moment(r, m[k], v[k], nodes, log_wstar)


def b_moment(r: int, m, v, quad: Quadrature | None = None):
    """``B_r(m, v)`` for scalar or array ``m``, ``v`` (broadcast together)."""
    if r not in (0, 1, 2):
        raise ConfigurationError(f"unsupported derivative order {r}; use 0, 1 or 2")
    quad = quad or DEFAULT_QUAD
    mm, vv = np.broadcast_arrays(np.asarray(m, dtype=np.float64), np.asarray(v, dtype=np.float64))
    if np.any(vv < 0):
        raise ConfigurationError("v must be non-negative")
    flat_m = np.ascontiguousarray(mm.ravel())
    flat_v = np.ascontiguousarray(vv.ravel())
    out = np.empty(flat_m.size)
    _b_moments(r, flat_m, flat_v, quad.nodes, quad.log_wstar, out)
    if mm.ndim == 0:
        return float(out[0])
    return out.reshape(mm.shape)


def b_derivative(r: int, x):
    """``b^(r)(x)`` elementwise, for ``r`` in 0..2."""
    x = np.asarray(x, dtype=np.float64)
    if r == 0:
        return np.logaddexp(0.0, x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x))
    if r == 1:
        return s
    if r == 2:
        return s * (1.0 - s)
    raise ConfigurationError(f"unsupported derivative order {r}")


DEFAULT_QUAD = Quadrature.hermite(20)
