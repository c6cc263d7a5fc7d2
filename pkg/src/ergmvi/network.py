"""Undirected binary networks, dyad enumeration and edge-list ingestion."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidDyadError, NetworkParseError, NodeBoundsError


@dataclass
class Network:
    """Undirected network on ``n`` nodes, stored as a dense symmetric 0/1 matrix.

    Nodes are 0-based internally; edge-list files use 1-based indices.
    ``attributes`` maps an attribute name to a length-``n`` integer vector of
    categories. ``labels`` optionally keeps the string label of each category.
    """

    adjacency: np.ndarray
    attributes: dict[str, np.ndarray] = field(default_factory=dict)
    labels: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=np.uint8)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("adjacency must be a non-empty square matrix")
        if np.any(np.diag(a)):
            raise ValueError("self-links are not allowed")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(a > 1):
            raise ValueError("adjacency must be binary")
        self.adjacency = a
        attrs = {}
        for name, vec in self.attributes.items():
            v = np.asarray(vec, dtype=np.int64)
            if v.shape != (a.shape[0],):
                raise ValueError(f"attribute {name!r} must have length {a.shape[0]}")
            attrs[name] = v
        self.attributes = attrs

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @classmethod
    def empty(cls, n, attributes=None):
        return cls(np.zeros((n, n), dtype=np.uint8), dict(attributes or {}))

    @classmethod
    def from_edges(cls, n, edges, attributes=None):
        """Build from 0-based ``(i, j)`` pairs."""
        a = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            if i == j:
                raise InvalidDyadError(f"self-link ({i}, {j})")
            a[i, j] = a[j, i] = 1
        return cls(a, dict(attributes or {}))

    def copy(self) -> Network:
        return Network(self.adjacency.copy(),
                       {k: v.copy() for k, v in self.attributes.items()},
                       {k: list(v) for k, v in self.labels.items()})

    def edges(self) -> np.ndarray:
        """Edges as an ``(E, 2)`` array of 0-based ``i < j`` pairs, row-major order."""
        iu, ju = np.triu_indices(self.n, k=1)
        mask = self.adjacency[iu, ju] == 1
        return np.column_stack([iu[mask], ju[mask]])

    def dyad_values(self) -> np.ndarray:
        """``y_ij`` for every dyad in canonical order."""
        iu, ju = np.triu_indices(self.n, k=1)
        return self.adjacency[iu, ju].astype(np.float64)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        h.update(np.packbits(self.adjacency[np.triu_indices(self.n, k=1)]).tobytes())
        for name in sorted(self.attributes):
            h.update(name.encode())
            h.update(self.attributes[name].tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (np.array_equal(self.adjacency, other.adjacency)
                and self.attributes.keys() == other.attributes.keys()
                and all(np.array_equal(v, other.attributes[k])
                        for k, v in self.attributes.items()))


def dyads(n: int) -> np.ndarray:
    """All ``n(n-1)/2`` dyads ``(i, j)``, ``i < j``, in row-major order."""
    iu, ju = np.triu_indices(n, k=1)
    return np.column_stack([iu, ju])


def edge_count(net: Network) -> int:
    return int(net.adjacency.sum()) // 2


def toggle(net: Network, i: int, j: int) -> Network:
    """Flip dyad ``(i, j)`` in place and return ``net``."""
    if i == j:
        raise InvalidDyadError(f"cannot toggle self-dyad ({i}, {j})")
    if not (0 <= i < net.n and 0 <= j < net.n):
        raise NodeBoundsError(f"dyad ({i}, {j}) out of range for n={net.n}")
    v = 1 - net.adjacency[i, j]
    net.adjacency[i, j] = v
    net.adjacency[j, i] = v
    return net


def _read_attribute(path, n):
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if text:
                values.append((lineno, text))
    if len(values) != n:
        raise NetworkParseError(path, len(values), f"expected {n} attribute values, got {len(values)}")
    tokens = [t for _, t in values]
    try:
        return np.array([int(t) for t in tokens], dtype=np.int64), None
    except ValueError:
        pass
    # String labels: categories in order of first appearance.
    codes = {}
    out = np.empty(n, dtype=np.int64)
    for k, t in enumerate(tokens):
        out[k] = codes.setdefault(t, len(codes))
    return out, list(codes)


def load_network(edge_list_path, n, attr_paths=None) -> Network:
    """Read a whitespace-separated 1-based edge list and optional attribute files.

    Lines may carry ``#`` comments. Duplicate and reversed edges are accepted.
    """
    path = Path(edge_list_path)
    a = np.zeros((n, n), dtype=np.uint8)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise NetworkParseError(path, lineno, f"expected two node indices, got {text!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise NetworkParseError(path, lineno, f"non-integer node index in {text!r}") from None
            for v in (i, j):
                if not 1 <= v <= n:
                    raise NodeBoundsError(f"{path}:{lineno}: node {v} outside [1, {n}]")
            if i == j:
                raise NetworkParseError(path, lineno, f"self-link {i}")
            a[i - 1, j - 1] = a[j - 1, i - 1] = 1
    attributes, labels = {}, {}
    for name, apath in (attr_paths or {}).items():
        attributes[name], lab = _read_attribute(apath, n)
        if lab is not None:
            labels[name] = lab
    net = Network(a, attributes)
    net.labels = labels
    return net


def save_edgelist(net: Network, path) -> None:
    with open(path, "w") as fh:
        for i, j in net.edges():
            fh.write(f"{i + 1} {j + 1}\n")


def karate() -> Network:
    """Zachary's karate club: 34 members, 78 undirected ties."""
    with resources.as_file(resources.files("ergmvi.data") / "karate.edgelist") as p:
        return load_network(p, 34)
