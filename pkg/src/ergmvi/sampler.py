"""Tie-no-tie Metropolis-Hastings simulation from p(y | theta) and exact enumeration."""

from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .errors import CapacityError, ConfigurationError, NonConvergenceError
from .network import Network, dyads
from .seeding import rng_for
from .stats import ModelSpec, suff_stats

# Rows of uniforms generated per kernel call; bounds memory for long chains.
_CHUNK = 1 << 18


@dataclass
class SamplerConfig:
    """Burn-in, thinning and sample size for one simulation request."""

    aux_iters: int = 30000
    thin: int = 1000
    count: int = 1000
    seed: int = 0
    chains: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.aux_iters < 0 or self.thin < 1 or self.count < 1 or self.chains < 1:
            raise ConfigurationError(
                f"invalid sampler config: aux_iters={self.aux_iters}, thin={self.thin}, "
                f"count={self.count}, chains={self.chains}")

    def replace(self, **kw) -> SamplerConfig:
        d = dict(self.__dict__)
        d.update(kw)
        return SamplerConfig(**d)


@dataclass
class StatSample:
    stats: np.ndarray
    theta: np.ndarray
    acceptance_rate: float = float("nan")
    final: list = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return self.stats.shape[0]

    def mean(self) -> np.ndarray:
        return self.stats.mean(axis=0)

    def cov(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.stats, rowvar=False))


class Chain:
    """Mutable tie-no-tie chain state for one network and model.

    The chain keeps the adjacency, common-neighbour counts, degrees, an
    edge/non-edge partition of the dyads and the running statistics, so each
    proposal costs O(n).
    """

    def __init__(self, net: Network, spec: ModelSpec):
        self.spec = spec
        self.n = net.n
        self.compiled = spec.compile(net.n, net.attributes)
        dd = dyads(net.n)
        self.di = dd[:, 0].copy()
        self.dj = dd[:, 1].copy()
        self._attributes = net.attributes
        self.load(net)

    def load(self, net: Network) -> None:
        a = net.adjacency.copy()
        ai = a.astype(np.int64)
        self.A = a
        self.sp = ai @ ai
        self.deg = ai.sum(axis=1)
        on = a[self.di, self.dj] == 1
        ids = np.arange(len(self.di), dtype=np.int64)
        self.perm = np.concatenate([ids[on], ids[~on]])
        self.where = np.empty_like(self.perm)
        self.where[self.perm] = np.arange(len(self.perm))
        self.ecount = np.array([on.sum()], dtype=np.int64)
        self.stats = suff_stats(net, self.spec)

    def snapshot(self):
        return (self.A.copy(), self.sp.copy(), self.deg.copy(), self.perm.copy(),
                self.where.copy(), self.ecount.copy(), self.stats.copy())

    def restore(self, snap) -> None:
        A, sp, deg, perm, where, ecount, stats = snap
        np.copyto(self.A, A)
        np.copyto(self.sp, sp)
        np.copyto(self.deg, deg)
        np.copyto(self.perm, perm)
        np.copyto(self.where, where)
        np.copyto(self.ecount, ecount)
        np.copyto(self.stats, stats)

    def network(self) -> Network:
        return Network(self.A.copy(), dict(self._attributes))

    def _args(self):
        c = self.compiled
        return (self.A, self.sp, self.deg, self.perm, self.where, self.ecount,
                self.di, self.dj, c.codes, c.rpow, c.wtab, c.attrs)

    def run(self, theta, steps: int, rng: np.random.Generator) -> int:
        """Advance ``steps`` proposals; returns the number accepted."""
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        work = np.empty(len(theta))
        accepted = 0
        left = steps
        while left > 0:
            m = min(left, _CHUNK)
            accepted += K.tnt_run(*self._args(), theta, self.stats, rng.random((m, 3)), work)
            left -= m
        return accepted

    def sample(self, theta, burn: int, thin: int, count: int, rng: np.random.Generator):
        """Burn in, then record ``count`` statistic vectors every ``thin`` steps."""
        theta = np.ascontiguousarray(theta, dtype=np.float64)
        out = np.empty((count, len(theta)))
        accepted = self.run(theta, burn, rng)
        per_chunk = max(1, _CHUNK // thin)
        k = 0
        while k < count:
            m = min(per_chunk, count - k)
            accepted += K.tnt_sample_block(*self._args(), theta, self.stats,
                                           rng.random((m * thin, 3)), 0, thin, out[k:k + m])
            k += m
        return out, accepted


def _split(count, chains):
    base, extra = divmod(count, chains)
    return [base + (1 if c < extra else 0) for c in range(chains)]


def tnt_sample(net0: Network, theta, spec: ModelSpec, cfg: SamplerConfig,
               keep_final: bool = False) -> StatSample:
    """Simulate ``cfg.count`` networks from p(y | theta) starting at ``net0``.

    With ``cfg.chains > 1`` the draws are split over independent chains whose
    seeds derive from ``cfg.seed`` and the chain index; ``cfg.workers`` only
    changes how many run at once, never the result.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.p,):
        raise ConfigurationError(f"theta has {theta.size} entries, model has {spec.p}")
    sizes = [s for s in _split(cfg.count, cfg.chains) if s > 0]

    def one(c):
        chain = Chain(net0, spec)
        rng = rng_for(cfg.seed, "tnt", c)
        out, acc = chain.sample(theta, cfg.aux_iters, cfg.thin, sizes[c], rng)
        steps = cfg.aux_iters + cfg.thin * sizes[c]
        return out, acc, steps, (chain.network() if keep_final else None)

    if cfg.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(one, range(len(sizes))))
    else:
        results = [one(c) for c in range(len(sizes))]
    stats = np.concatenate([r[0] for r in results])
    rate = sum(r[1] for r in results) / max(1, sum(r[2] for r in results))
    final = [r[3] for r in results] if keep_final else []
    return StatSample(stats, theta.copy(), rate, final)


@functools.lru_cache(maxsize=64)
def _enumerate_cached(n, spec_key, attr_key):
    spec = ModelSpec.parse(spec_key)
    attributes = {k: np.array(v) for k, v in attr_key}
    dd = dyads(n)
    D = len(dd)
    table = np.empty((1 << D, spec.p))
    a = np.zeros((n, n), dtype=np.uint8)
    for g in range(1 << D):
        bits = (g >> np.arange(D)) & 1
        a[dd[:, 0], dd[:, 1]] = bits
        a[dd[:, 1], dd[:, 0]] = bits
        table[g] = suff_stats(Network(a, attributes), spec)
    table.setflags(write=False)
    return table


def enumerate_stats(n: int, spec: ModelSpec, attributes=None, max_nodes: int = 5) -> np.ndarray:
    """``s(y)`` for every graph on ``n`` nodes; row ``g`` has dyad ``d`` on iff bit ``d`` of ``g``."""
    if n > max_nodes:
        raise CapacityError(f"exact enumeration over 2^{n * (n - 1) // 2} graphs refused (n={n} > {max_nodes})")
    attr_key = tuple(sorted((k, tuple(int(x) for x in v)) for k, v in (attributes or {}).items()))
    return _enumerate_cached(n, str(spec), attr_key)


def log_partition(thetas, table) -> np.ndarray:
    """``log z(theta)`` for each row of ``thetas`` given an enumeration table."""
    thetas = np.atleast_2d(thetas)
    return logsumexp(thetas @ table.T, axis=1)


def enumerate_oracle(n: int, theta, spec: ModelSpec, attributes=None, max_nodes: int = 5):
    """Exact ``(log z, E[s(y)], cov[s(y)])`` by summing over all graphs."""
    table = enumerate_stats(n, spec, attributes, max_nodes)
    theta = np.asarray(theta, dtype=np.float64)
    logits = table @ theta
    log_z = logsumexp(logits)
    w = np.exp(logits - log_z)
    mean = w @ table
    centred = table - mean
    cov = (centred * w[:, None]).T @ centred
    return float(log_z), mean, cov


def exact_mle(n: int, s_obs, spec: ModelSpec, attributes=None, theta0=None,
              tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Exact MLE by Newton's method on the enumerated log-likelihood."""
    table = enumerate_stats(n, spec, attributes)
    s_obs = np.asarray(s_obs, dtype=np.float64)
    theta = np.zeros(spec.p) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()

    def loglik(th):
        return float(th @ s_obs - log_partition(th, table)[0])

    value = loglik(theta)
    for _ in range(max_iter):
        _, mean, cov = enumerate_oracle(n, theta, spec, attributes)
        grad = s_obs - mean
        if np.linalg.norm(grad) <= tol:
            return theta
        step = np.linalg.solve(cov, grad)
        t = 1.0
        while loglik(theta + t * step) < value and t > 1e-10:
            t *= 0.5
        theta = theta + t * step
        value = loglik(theta)
    raise NonConvergenceError("exact MLE did not converge; the observed statistics may lie on the boundary")
