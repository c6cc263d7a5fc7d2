"""Sufficient statistics and change statistics for edges, gwesp, gwd and nodematch."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, InvalidDyadError
from .network import Network, dyads

KINDS = {"edges": K.EDGES, "gwesp": K.GWESP, "gwd": K.GWD, "nodematch": K.NODEMATCH}


@dataclass(frozen=True)
class Term:
    kind: str
    decay: float = 0.0
    attribute: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown term {self.kind!r}")
        if self.kind in ("gwesp", "gwd"):
            if not (math.isfinite(self.decay) and self.decay >= 0):
                raise ConfigurationError(f"{self.kind} decay must be finite and >= 0, got {self.decay}")
        if self.kind == "nodematch" and not self.attribute:
            raise ConfigurationError("nodematch needs an attribute name")

    @classmethod
    def parse(cls, text: str) -> Term:
        """Parse ``edges``, ``gwesp:0.2``, ``gwd:0.8`` or ``nodematch:drugs``."""
        kind, _, arg = text.strip().partition(":")
        kind = kind.strip().lower()
        if kind == "edges":
            if arg:
                raise ConfigurationError("edges takes no argument")
            return cls("edges")
        if kind in ("gwesp", "gwd"):
            if not arg:
                raise ConfigurationError(f"{kind} needs a decay, e.g. {kind}:0.5")
            try:
                return cls(kind, decay=float(arg))
            except ValueError:
                raise ConfigurationError(f"bad decay in {text!r}") from None
        if kind == "nodematch":
            return cls(kind, attribute=arg.strip())
        raise ConfigurationError(f"unknown term {text!r}")

    @property
    def label(self) -> str:
        if self.kind in ("gwesp", "gwd"):
            return f"{self.kind}.{self.decay:g}"
        if self.kind == "nodematch":
            return f"nodematch.{self.attribute}"
        return "edges"

    def __str__(self):
        if self.kind in ("gwesp", "gwd"):
            return f"{self.kind}:{self.decay!r}"
        if self.kind == "nodematch":
            return f"nodematch:{self.attribute}"
        return "edges"


class CompiledSpec(NamedTuple):
    codes: np.ndarray
    rpow: np.ndarray
    wtab: np.ndarray
    attrs: np.ndarray


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple[Term, ...]

    def __post_init__(self):
        if len(self.terms) < 1:
            raise ConfigurationError("a model needs at least one term")

    @classmethod
    def parse(cls, terms) -> ModelSpec:
        if isinstance(terms, str):
            terms = [t for t in terms.replace("+", ",").split(",") if t.strip()]
        return cls(tuple(t if isinstance(t, Term) else Term.parse(t) for t in terms))

    @property
    def p(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> list[str]:
        return [t.label for t in self.terms]

    @property
    def edges_first(self) -> bool:
        return self.terms[0].kind == "edges"

    def __str__(self):
        return ",".join(str(t) for t in self.terms)

    def compile(self, n: int, attributes=None) -> CompiledSpec:
        """Lookup tables consumed by the kernels for a network on ``n`` nodes."""
        attributes = attributes or {}
        p = self.p
        codes = np.array([KINDS[t.kind] for t in self.terms], dtype=np.int64)
        ell = np.arange(n + 1, dtype=np.float64)
        rpow = np.zeros((p, n + 1))
        wtab = np.zeros((p, n + 1))
        attrs = np.zeros((p, n), dtype=np.int64)
        for k, t in enumerate(self.terms):
            if t.kind in ("gwesp", "gwd"):
                r = -math.expm1(-t.decay)
                rpow[k] = r ** ell
                wtab[k] = math.exp(t.decay) * (1.0 - rpow[k])
            elif t.kind == "nodematch":
                if t.attribute not in attributes:
                    raise ConfigurationError(f"network has no attribute {t.attribute!r}")
                attrs[k] = attributes[t.attribute]
        return CompiledSpec(codes, rpow, wtab, attrs)


def _geometric_weights(decay, counts):
    r = -math.expm1(-decay)
    return math.exp(decay) * (1.0 - r ** np.asarray(counts, dtype=np.float64))


def suff_stats(net: Network, spec: ModelSpec) -> np.ndarray:
    """Sufficient statistics ``s(y)`` by direct (non-incremental) evaluation."""
    a = net.adjacency.astype(np.int64)
    iu, ju = np.triu_indices(net.n, k=1)
    on = a[iu, ju] == 1
    deg = a.sum(axis=1)
    shared = (a @ a)[iu, ju][on]
    out = np.empty(spec.p)
    for k, t in enumerate(spec.terms):
        if t.kind == "edges":
            out[k] = on.sum()
        elif t.kind == "gwesp":
            # Edges with zero shared partners get weight exactly 0.
            out[k] = _geometric_weights(t.decay, shared).sum()
        elif t.kind == "gwd":
            out[k] = _geometric_weights(t.decay, deg).sum()
        else:
            if t.attribute not in net.attributes:
                raise ConfigurationError(f"network has no attribute {t.attribute!r}")
            v = net.attributes[t.attribute]
            out[k] = np.sum(v[iu[on]] == v[ju[on]])
    return out


def _state(net):
    a = net.adjacency.copy()
    ai = a.astype(np.int64)
    return a, ai @ ai, ai.sum(axis=1)


def change_stats(net: Network, i: int, j: int, spec: ModelSpec) -> np.ndarray:
    """``s(y with y_ij = 1) - s(y with y_ij = 0)``, via local neighbourhood counts."""
    if i == j:
        raise InvalidDyadError(f"invalid dyad ({i}, {j})")
    if i > j:
        i, j = j, i
    cs = spec.compile(net.n, net.attributes)
    a, sp, deg = _state(net)
    out = np.empty(spec.p)
    K.change_vector(a, sp, deg, i, j, cs.codes, cs.rpow, cs.wtab, cs.attrs, out)
    return out


def all_change_stats(net: Network, spec: ModelSpec) -> np.ndarray:
    """``|D| x p`` matrix of change statistics on the observed network, canonical dyad order."""
    cs = spec.compile(net.n, net.attributes)
    a, sp, deg = _state(net)
    dd = dyads(net.n)
    out = np.empty((len(dd), spec.p))
    K.all_change_vectors(a, sp, deg, dd[:, 0].copy(), dd[:, 1].copy(),
                         cs.codes, cs.rpow, cs.wtab, cs.attrs, out)
    return out


def brute_force_change_stats(net: Network, i: int, j: int, spec: ModelSpec) -> np.ndarray:
    """Reference implementation: two full recomputations of ``s(y)``."""
    plus, minus = net.copy(), net.copy()
    plus.adjacency[i, j] = plus.adjacency[j, i] = 1
    minus.adjacency[i, j] = minus.adjacency[j, i] = 0
    return suff_stats(plus, spec) - suff_stats(minus, spec)
