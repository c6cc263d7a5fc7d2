"""Hot inner loops: change statistics, toggle bookkeeping and the tie-no-tie chain.

All kernels work on a chain state made of plain arrays:

``A``      (n, n) uint8 adjacency, symmetric, zero diagonal
``sp``     (n, n) int64 common-neighbour counts, ``sp[i, j] = sum_k A[i, k] A[j, k]``
``deg``    (n,) int64 degrees
``perm``   (D,) int64 dyad ids; ``perm[:E]`` are the current edges, ``perm[E:]`` non-edges
``where``  (D,) int64 inverse permutation of ``perm``
``ecount`` (1,) int64 current edge count ``E``

Model terms are encoded by ``codes`` with per-term lookup tables
``rpow[t, l] = r_t ** l`` and ``wtab[t, l] = exp(phi_t) * (1 - r_t ** l)``
where ``r_t = 1 - exp(-phi_t)``.
"""

import math

import numpy as np

from ._accel import jit

EDGES = 0
GWESP = 1
GWD = 2
NODEMATCH = 3


@jit
def change_vector(A, sp, deg, i, j, codes, rpow, wtab, attrs, out):
    # Evaluated on the network with dyad (i, j) forced to 0; `present`
    # removes its own contribution from sp and deg.
    present = np.int64(A[i, j])
    n = A.shape[0]
    for t in range(codes.shape[0]):
        c = codes[t]
        if c == EDGES:
            out[t] = 1.0
        elif c == GWESP:
            acc = wtab[t, sp[i, j]]
            for k in range(n):
                if A[i, k] != 0 and A[j, k] != 0:
                    acc += rpow[t, sp[i, k] - present] + rpow[t, sp[j, k] - present]
            out[t] = acc
        elif c == GWD:
            out[t] = rpow[t, deg[i] - present] + rpow[t, deg[j] - present]
        else:
            out[t] = 1.0 if attrs[t, i] == attrs[t, j] else 0.0


@jit
def flip(A, sp, deg, i, j):
    n = A.shape[0]
    delta = -1 if A[i, j] != 0 else 1
    for k in range(n):
        if A[i, k] != 0 and k != j:
            sp[j, k] += delta
            sp[k, j] += delta
        if A[j, k] != 0 and k != i:
            sp[i, k] += delta
            sp[k, i] += delta
    v = np.uint8(1) if delta > 0 else np.uint8(0)
    A[i, j] = v
    A[j, i] = v
    deg[i] += delta
    deg[j] += delta


@jit
def all_change_vectors(A, sp, deg, di, dj, codes, rpow, wtab, attrs, out):
    for d in range(di.shape[0]):
        change_vector(A, sp, deg, di[d], dj[d], codes, rpow, wtab, attrs, out[d])


@jit
def _pick_prob(E, D, is_edge):
    # Probability that the tie-no-tie proposal selects one particular dyad.
    # An empty half falls back to a uniform draw over all dyads.
    p = 0.0
    if is_edge:
        p += 0.5 / E
        if E == D:
            p += 0.5 / D
    else:
        p += 0.5 / (D - E)
        if E == 0:
            p += 0.5 / D
    return p


@jit
def tnt_run(A, sp, deg, perm, where, ecount, di, dj,
            codes, rpow, wtab, attrs, theta, stats, u, work):
    """Advance the chain ``u.shape[0]`` steps; ``u`` holds 3 uniforms per step.

    ``stats`` is updated in place with the running sufficient statistics.
    Returns the number of accepted toggles.
    """
    D = perm.shape[0]
    p = theta.shape[0]
    accepted = 0
    for it in range(u.shape[0]):
        E = ecount[0]
        if u[it, 0] < 0.5:
            if E > 0:
                pos = min(int(u[it, 1] * E), E - 1)
            else:
                pos = min(int(u[it, 1] * D), D - 1)
        else:
            if E < D:
                pos = E + min(int(u[it, 1] * (D - E)), D - E - 1)
            else:
                pos = min(int(u[it, 1] * D), D - 1)
        d = perm[pos]
        i = di[d]
        j = dj[d]
        change_vector(A, sp, deg, i, j, codes, rpow, wtab, attrs, work)
        dot = 0.0
        for t in range(p):
            dot += theta[t] * work[t]
        if A[i, j] != 0:
            log_ratio = -dot + math.log(_pick_prob(E - 1, D, False) / _pick_prob(E, D, True))
        else:
            log_ratio = dot + math.log(_pick_prob(E + 1, D, True) / _pick_prob(E, D, False))
        if log_ratio >= 0.0 or u[it, 2] < math.exp(log_ratio):
            accepted += 1
            if A[i, j] != 0:
                for t in range(p):
                    stats[t] -= work[t]
                last = E - 1
                other = perm[last]
                perm[pos] = other
                where[other] = pos
                perm[last] = d
                where[d] = last
                ecount[0] = E - 1
            else:
                for t in range(p):
                    stats[t] += work[t]
                other = perm[E]
                perm[pos] = other
                where[other] = pos
                perm[E] = d
                where[d] = E
                ecount[0] = E + 1
            flip(A, sp, deg, i, j)
    return accepted


@jit
def tnt_sample_block(A, sp, deg, perm, where, ecount, di, dj,
                     codes, rpow, wtab, attrs, theta, stats, u, burn, thin, out):
    """Burn in for ``burn`` steps then record ``stats`` every ``thin`` steps.

    ``u`` must hold ``burn + thin * out.shape[0]`` rows.
    """
    work = np.empty(theta.shape[0])
    accepted = tnt_run(A, sp, deg, perm, where, ecount, di, dj,
                       codes, rpow, wtab, attrs, theta, stats, u[:burn], work)
    start = burn
    for k in range(out.shape[0]):
        accepted += tnt_run(A, sp, deg, perm, where, ecount, di, dj,
                            codes, rpow, wtab, attrs, theta, stats,
                            u[start:start + thin], work)
        start += thin
        for t in range(theta.shape[0]):
            out[k, t] = stats[t]
    return accepted


@jit
def softplus(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@jit
def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)
