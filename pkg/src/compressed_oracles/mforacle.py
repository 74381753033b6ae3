"""Purified masked-Feistel oracle, sophisticated states and the intertwiner.

The full purification register (twirl pair plus three internal databases)
is only materialized at ``n = 1``: 24 x 24 twirl pairs times 729 triples of
partial functions on one bit. Larger ``n`` is reached through the sampling
routines for twirl statistics.

States are ndarrays whose last axis is the flattened purification index
``(pi, omega, triple)``. Operators that depend on the query input act on
one ``(b, x)`` slice at a time, the same convention the permutation oracle
uses.
"""

from __future__ import annotations

import math
import time
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import binomtest

from .cfo import FunctionOracleConfig, batch_initial_state, reflect_last_axis, run_adversary, validity_projector, xor_values
from .circuits import AdversaryCircuit
from .cpo import (
    PermOracleConfig,
    all_permutations,
    inverse_tables,
    machinery,
    run_cp_experiment,
    run_perm_standard_experiment,
)
from .databases import InjectiveDatabase
from .feistel_core import (
    TripleSpace,
    allowed_outputs,
    canonical_triples,
    chain_from,
    compression_generators,
    feistel_tables,
    is_allowable,
    support,
)
from .reporting import ExperimentReport
from .qlinalg import DensityMatrix, LinearOp, RegisterLayout, reduced_density, trace_distance

EXACT_SUPPORT_MAX = 1_000_000
ACCEPTANCE_FLOOR = 1e-4
CONFIDENCE = 0.95


# ---------------------------------------------------------------------------
# Vectorized allowability on left halves
# ---------------------------------------------------------------------------


def allowable_lefts(xl: np.ndarray, yl: np.ndarray) -> np.ndarray:
    """Allowability of a batch of databases given only the left halves of
    their pairs; ``xl`` and ``yl`` have shape ``(B, t)``."""
    xl, yl = np.atleast_2d(xl), np.atleast_2d(yl)
    b, t = xl.shape
    ok = np.ones(b, dtype=bool)
    for i in range(t):
        for j in range(i + 1, t):
            ok &= (xl[:, i] != xl[:, j]) & (yl[:, i] != yl[:, j])
    s = xl ^ yl
    for i in range(t):
        for j in range(t):
            for k in range(t):
                if i == j == k:
                    continue
                ok &= s[:, i] != (xl[:, j] ^ yl[:, k])
    return ok


def allowed_left_mask(xl: np.ndarray, yl: np.ndarray, ul: np.ndarray, n: int) -> np.ndarray:
    """``(B, 2^n)`` mask of left halves ``l`` such that adding a pair with
    input left half ``ul`` and output left half ``l`` stays allowable."""
    b = xl.shape[0]
    out = np.empty((b, 1 << n), dtype=bool)
    xs = np.concatenate([xl, ul.reshape(b, 1)], axis=1)
    for l in range(1 << n):
        ys = np.concatenate([yl, np.full((b, 1), l, dtype=yl.dtype)], axis=1)
        out[:, l] = allowable_lefts(xs, ys)
    return out


def star_action(pi: Sequence[int], i: InjectiveDatabase, omega: Sequence[int]) -> InjectiveDatabase:
    """``pi * I * omega``: inputs pushed through ``pi``, outputs pulled back
    through ``omega``."""
    n = i.n
    if len(pi) != n or len(omega) != n:
        raise ValueError("permutation sizes do not match the database")
    om_inv = [0] * n
    for a, b in enumerate(omega):
        om_inv[b] = a
    return InjectiveDatabase.of(n, [(pi[x], om_inv[y]) for x, y in i.pairs()])


def _lefts(pi: np.ndarray, om_inv: np.ndarray, pairs: Sequence[tuple[int, int]], n: int):
    b = pi.shape[0]
    if not pairs:
        z = np.zeros((b, 0), dtype=np.int64)
        return z, z
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    return pi[:, xs] >> n, om_inv[:, ys] >> n


# ---------------------------------------------------------------------------
# Twirl distributions
# ---------------------------------------------------------------------------


def feistel2_batch(g1: np.ndarray, g2: np.ndarray, n: int) -> np.ndarray:
    """Tables of two-round Feistel permutations (left-to-right first) for a
    batch of round-function pairs."""
    size = 1 << n
    xs = np.arange(size * size)
    left, right = xs >> n, xs & (size - 1)
    rows = np.arange(g1.shape[0])[:, None]
    right = right[None, :] ^ g1[rows, left[None, :]]
    left = left[None, :] ^ g2[rows, right]
    return (left << n) | right


@dataclass(frozen=True)
class TwirlDistribution:
    """Distribution of the twirl pair ``(pi, omega)`` on ``S_{4^n}``."""

    kind: str
    n: int
    custom: tuple[np.ndarray, np.ndarray, np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "feistel2-pair", "custom"):
            raise ValueError(f"unknown twirl kind {self.kind!r}")
        if (self.kind == "custom") != (self.custom is not None):
            raise ValueError("custom twirls need an explicit weighted list")
        if self.custom is not None:
            w = np.asarray(self.custom[2], dtype=float)
            if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ValueError("custom weights must be a probability vector")

    @classmethod
    def uniform(cls, n: int) -> "TwirlDistribution":
        return cls("uniform", n)

    @classmethod
    def feistel2_pair(cls, n: int) -> "TwirlDistribution":
        return cls("feistel2-pair", n)

    @property
    def N(self) -> int:
        return 1 << (2 * self.n)

    def support_size(self) -> int:
        if self.kind == "uniform":
            return math.factorial(self.N) ** 2
        if self.kind == "feistel2-pair":
            return len(_feistel2_marginal(self.n)[0]) ** 2
        return len(self.custom[2])

    def exact(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(pi tables, omega tables, weights)`` over the whole support."""
        if self.support_size() > EXACT_SUPPORT_MAX:
            raise ValueError("twirl support too large for exact enumeration")
        if self.kind == "custom":
            pi, om, w = self.custom
            return np.asarray(pi), np.asarray(om), np.asarray(w, dtype=float)
        if self.kind == "uniform":
            perms = all_permutations(self.N)
            k = len(perms)
            return np.repeat(perms, k, axis=0), np.tile(perms, (k, 1)), np.full(k * k, 1 / (k * k))
        tabs, probs = _feistel2_marginal(self.n)
        om = inverse_tables(tabs)
        k = len(tabs)
        return np.repeat(tabs, k, axis=0), np.tile(om, (k, 1)), np.outer(probs, probs).ravel()

    def sample(self, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
        N = self.N
        if self.kind == "uniform":
            return rng.random((size, N)).argsort(axis=1), rng.random((size, N)).argsort(axis=1)
        if self.kind == "feistel2-pair":
            m = 1 << self.n
            g = rng.integers(0, m, size=(4, size, m))
            pi = feistel2_batch(g[0], g[1], self.n)
            om_inv = feistel2_batch(g[2], g[3], self.n)
            return pi, inverse_tables(om_inv)
        pi, om, w = self.exact()
        idx = rng.choice(len(w), size=size, p=w)
        return pi[idx], om[idx]

    def flipped(self) -> "TwirlDistribution":
        """Distribution of ``(omega^{-1}, pi^{-1})``."""
        if self.kind != "custom":
            return self
        pi, om, w = self.custom
        return TwirlDistribution("custom", self.n, (inverse_tables(np.asarray(om)), inverse_tables(np.asarray(pi)), w))

    def weight(self, pi: Sequence[int], omega: Sequence[int]) -> float:
        pis, oms, w = self.exact()
        hit = np.all(pis == np.asarray(pi), axis=1) & np.all(oms == np.asarray(omega), axis=1)
        return float(w[hit].sum())


_F2_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _feistel2_marginal(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _F2_CACHE:
        tabs = feistel_tables(n, 2)
        uniq, counts = np.unique(tabs, axis=0, return_counts=True)
        _F2_CACHE[n] = (uniq, counts / counts.sum())
    return _F2_CACHE[n]


# ---------------------------------------------------------------------------
# Cromulence estimates
# ---------------------------------------------------------------------------


@dataclass
class ConditionEstimate:
    value: float | None
    ci: tuple[float, float] | None
    samples: int
    exact: bool


@dataclass
class CromulenceReport:
    kind: str
    n: int
    I: list[tuple[int, int]]
    x: int
    y: int
    y2: int
    l: int
    conditions: dict[str, ConditionEstimate]

    def as_dict(self) -> dict:
        return {
            "dist": self.kind,
            "n": self.n,
            "I": self.I,
            "x": self.x,
            "y": self.y,
            "y2": self.y2,
            "l": self.l,
            "conditions": {k: vars(v) for k, v in self.conditions.items()},
        }


def _wilson(k: int, total: int) -> tuple[float, float]:
    ci = binomtest(k, total).proportion_ci(confidence_level=CONFIDENCE, method="wilson")
    return float(ci.low), float(ci.high)


def _default_outputs(i: InjectiveDatabase) -> tuple[int, int]:
    free = [y for y in range(i.n) if y not in set(i.im)]
    if len(free) < 2:
        raise ValueError("need two outputs outside the image")
    return free[0], free[1]


def estimate_cromulence(
    dist: TwirlDistribution,
    i: InjectiveDatabase,
    x: int,
    *,
    budget: int = 100_000,
    seed: int = 0,
    y: int | None = None,
    y2: int | None = None,
    l: int = 0,
) -> CromulenceReport:
    """The four cromulence quantities for one ``(I, x, y, y', l)``.

    Exact by enumeration when the twirl support is small enough, otherwise by
    sampling ``budget`` pairs. Condition 4 is the worst relative normalization
    deviation and is only available exactly.
    """
    n, N = dist.n, dist.N
    if i.n != N:
        raise ValueError("database size does not match the twirl")
    if i(x) is not None:
        raise ValueError(f"{x} is already in the domain")
    dy, dy2 = _default_outputs(i)
    y = dy if y is None else y
    y2 = (dy2 if y != dy2 else dy) if y2 is None else y2
    if y in i.im or y2 in i.im or y == y2:
        raise ValueError("y and y' must be distinct and outside the image")
    pairs = list(i.pairs())
    t = len(pairs)
    exact = dist.support_size() <= EXACT_SUPPORT_MAX
    if exact:
        pi, om, w = dist.exact()
    else:
        rng = np.random.default_rng(seed)
        pi, om = dist.sample(rng, budget)
        w = np.full(budget, 1 / budget)
    om_inv = inverse_tables(om)
    xl, yl = _lefts(pi, om_inv, pairs, n)
    resolves = allowable_lefts(xl, yl) if t else np.ones(len(w), dtype=bool)
    ul = pi[:, x] >> n
    lmask = allowed_left_mask(xl, yl, ul, n)
    in_rx = resolves & lmask.any(axis=1)
    hy = om_inv[:, y] >> n
    hy2 = om_inv[:, y2] >> n
    conds: dict[str, ConditionEstimate] = {}

    def ratio(num_mask: np.ndarray, den_mask: np.ndarray, name: str) -> None:
        den = float(w[den_mask].sum())
        if den == 0:
            conds[name] = ConditionEstimate(None, None, 0, exact)
            return
        val = float(w[num_mask & den_mask].sum()) / den
        if exact:
            conds[name] = ConditionEstimate(val, (val, val), int(den_mask.sum()), True)
        else:
            k, tot = int((num_mask & den_mask).sum()), int(den_mask.sum())
            conds[name] = ConditionEstimate(val, _wilson(k, tot), tot, False)

    ratio(in_rx, resolves, "allows_query")
    ratio(hy == l, in_rx, "left_marginal")
    ratio((hy == l) & (hy2 == l), in_rx, "left_joint")
    if exact and in_rx.any():
        grow_x = np.concatenate([xl, ul[:, None]], axis=1)
        grow_y = np.concatenate([yl, hy[:, None]], axis=1)
        in_grow = allowable_lefts(grow_x, grow_y)
        p_grow = np.where(in_grow, w / w[in_grow].sum(), 0.0)
        p_x = np.where(in_rx, w / w[in_rx].sum(), 0.0)
        v = lmask.sum(axis=1) * (1 << n)
        sel = in_grow & (p_grow > 0)
        a = np.sqrt(p_grow[sel] / (N - t))
        b = np.sqrt(p_x[sel] / v[sel])
        dev = float(np.max(np.abs(a - b) / b)) if sel.any() else 0.0
        conds["normalization"] = ConditionEstimate(dev, (dev, dev), int(sel.sum()), True)
    else:
        conds["normalization"] = ConditionEstimate(None, None, 0, exact)
    return CromulenceReport(dist.kind, n, pairs, x, y, y2, l, conds)


# ---------------------------------------------------------------------------
# Shifted two-round Feistel sampler
# ---------------------------------------------------------------------------


class _Reject(Exception):
    pass


class _NeedMore(Exception):
    def __init__(self, upper: int) -> None:
        self.upper = upper


def _shifted_procedure(n: int, i: InjectiveDatabase, draw: Callable[[int], int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """One run of the five-step shifted procedure; ``draw(k)`` is uniform on
    ``[k]``. Raises ``_Reject`` when the step-one assignment is not allowable."""
    m = 1 << n
    p1, p2, w1, w2 = (np.full(m, -1, dtype=np.int64) for _ in range(4))

    def eval_partial(d1, d2, v):
        vl, vr = v >> n, v & (m - 1)
        if d1[vl] < 0:
            d1[vl] = draw(m)
        z = vr ^ d1[vl]
        if d2[z] < 0:
            d2[z] = draw(m)
        return vl ^ d2[z]

    pairs = list(i.pairs())
    xl = [eval_partial(p1, p2, a) for a, _ in pairs]
    yl = [eval_partial(w1, w2, b) for _, b in pairs]
    if pairs and not allowable_lefts(np.array([xl]), np.array([yl]))[0]:
        raise _Reject
    for d1, d2 in ((p1, p2), (w1, w2)):
        s = draw(m)
        shifted2 = np.full(m, -1, dtype=np.int64)
        for z in range(m):
            if d2[z] >= 0:
                shifted2[z ^ s] = d2[z]
        d1[d1 >= 0] ^= s
        d2[:] = shifted2
    for d in (p1, p2, w1, w2):
        for j in range(m):
            if d[j] < 0:
                d[j] = draw(m)
    s2 = draw(m)
    p2 ^= s2
    w2 ^= s2
    pi = feistel2_batch(p1[None], p2[None], n)[0]
    om_inv = feistel2_batch(w1[None], w2[None], n)[0]
    om = inverse_tables(om_inv[None])[0]
    return tuple(int(v) for v in pi), tuple(int(v) for v in om)


def shifted_sample(n: int, i: InjectiveDatabase, rng: np.random.Generator, max_tries: int = 100_000):
    """Sample ``(pi, omega)`` from the two-round Feistel twirl conditioned on
    resolving ``i``, using random right and left shifts."""
    for _ in range(max_tries):
        try:
            return _shifted_procedure(n, i, lambda k: int(rng.integers(k)))
        except _Reject:
            continue
    raise RuntimeError("step one never produced an allowable database")


def shifted_distribution_exact(n: int, i: InjectiveDatabase) -> dict[tuple, float]:
    """Exact output distribution of the shifted procedure, by enumerating
    every sequence of draws (rejected branches renormalized away)."""
    out: dict[tuple, float] = defaultdict(float)
    stack: list[tuple[int, ...]] = [()]
    while stack:
        prefix = stack.pop()
        pos = 0
        weight = 1.0

        def draw(k: int) -> int:
            nonlocal pos, weight
            if pos >= len(prefix):
                raise _NeedMore(k)
            v = prefix[pos]
            pos += 1
            weight /= k
            return v

        try:
            res = _shifted_procedure(n, i, draw)
        except _NeedMore as e:
            stack.extend(prefix + (v,) for v in range(e.upper))
            continue
        except _Reject:
            continue
        out[res] += weight
    total = sum(out.values())
    if total == 0:
        raise ValueError("no allowable step-one assignment exists")
    return {k: v / total for k, v in out.items()}


def conditioned_distribution_exact(dist: TwirlDistribution, i: InjectiveDatabase) -> dict[tuple, float]:
    """``D_I`` by enumeration."""
    pi, om, w = dist.exact()
    xl, yl = _lefts(pi, inverse_tables(om), list(i.pairs()), dist.n)
    ok = allowable_lefts(xl, yl) & (w > 0)
    if not ok.any():
        raise ValueError("no twirl pair resolves the database")
    total = w[ok].sum()
    out: dict[tuple, float] = defaultdict(float)
    for j in np.flatnonzero(ok):
        out[(tuple(int(v) for v in pi[j]), tuple(int(v) for v in om[j]))] += float(w[j] / total)
    return dict(out)


# ---------------------------------------------------------------------------
# The n = 1 purification system
# ---------------------------------------------------------------------------


def _perm_key(tabs: np.ndarray, N: int) -> np.ndarray:
    return tabs @ (N ** np.arange(N - 1, -1, -1))


class MaskedFeistelSystem:
    """All masked-Feistel operators on the ``n = 1`` purification space.

    ``i_cap`` bounds the size of the injective databases on the compressed
    permutation side of the intertwiner.
    """

    n = 1

    def __init__(self, dist: TwirlDistribution, i_cap: int = 2) -> None:
        if dist.n != 1:
            raise ValueError("the full purification is only built at n = 1")
        self.dist = dist
        self.N = 4
        self.perms = all_permutations(self.N)
        self.np_ = len(self.perms)
        keys = _perm_key(self.perms, self.N)
        self._key_order = np.argsort(keys)
        self._keys = keys[self._key_order]
        self.perm_inv = self.perm_index(inverse_tables(self.perms))
        self.triples = TripleSpace(1, 2)
        self.T = self.triples.count
        self.P = self.np_ * self.np_ * self.T
        self.cp_cfg = PermOracleConfig(self.N, i_cap)
        self.nI = self.cp_cfg.space.count

    # --- indexing -------------------------------------------------------

    def perm_index(self, tabs: np.ndarray) -> np.ndarray:
        keys = _perm_key(np.atleast_2d(tabs), self.N)
        pos = np.searchsorted(self._keys, keys)
        if np.any(self._keys[np.minimum(pos, len(self._keys) - 1)] != keys):
            raise KeyError("table is not a permutation of [4]")
        return self._key_order[pos]

    def index(self, pi: int, om: int, d: int) -> int:
        return (pi * self.np_ + om) * self.T + d

    @cached_property
    def support_table(self) -> np.ndarray:
        """``sup[d, u]``: output of the chain from ``u`` in triple ``d``, or -1."""
        sup = np.full((self.T, self.N), -1, dtype=np.int64)
        for d in range(self.T):
            trip = self.triples.triple(d)
            for u in range(self.N):
                c = chain_from(trip, u)
                if c is not None:
                    sup[d, u] = c.v
        return sup

    @cached_property
    def allows_table(self) -> np.ndarray:
        """``allows[d, u]``: the support of triple ``d`` allows ``u``."""
        out = np.zeros((self.T, self.N), dtype=bool)
        for d in range(self.T):
            trip = self.triples.triple(d)
            try:
                a = support(trip)
            except ValueError:
                continue
            if not is_allowable(a, 1):
                continue
            for u in range(self.N):
                out[d, u] = a(u) is None and bool(allowed_outputs(a, u, 1))
        return out

    @cached_property
    def phi(self) -> np.ndarray:
        """``phi[x]`` over the flattened purification: the answer to a
        forward query on ``x``, or -1 where the chain is incomplete."""
        out = np.empty((self.N, self.P), dtype=np.int64)
        sup = self.support_table
        for x in range(self.N):
            v = sup[:, self.perms[:, x]].T  # (pi, d)
            res = np.full((self.np_, self.np_, self.T), -1, dtype=np.int64)
            for p in range(self.np_):
                vv = v[p]
                ok = vv >= 0
                res[p][:, ok] = self.perms[:, vv[ok]]
            out[x] = res.ravel()
        return out

    @cached_property
    def flip_perm(self) -> np.ndarray:
        """Index map of ``mfF``: ``(pi, omega, h, k, f) -> (omega^-1, pi^-1, f, k, h)``."""
        c = self.triples.c
        d = np.arange(self.T)
        h, rest = np.divmod(d, c * c)
        k, f = np.divmod(rest, c)
        dflip = (f * c + k) * c + h
        grid_pi, grid_om = np.meshgrid(np.arange(self.np_), np.arange(self.np_), indexing="ij")
        tgt_pi = self.perm_inv[grid_om]
        tgt_om = self.perm_inv[grid_pi]
        tgt = (tgt_pi[:, :, None] * self.np_ + tgt_om[:, :, None]) * self.T + dflip[None, None, :]
        perm = np.empty(self.P, dtype=np.int64)
        perm[tgt.ravel()] = np.arange(self.P)
        return perm

    @cached_property
    def _gens(self) -> dict[int, dict[str, tuple[sp.csr_matrix, sp.csr_matrix]]]:
        out = {}
        for u in range(self.N):
            g = compression_generators(self.triples, u)
            out[u] = {k: (m, m.conj().T.tocsr()) for k, m in g.items()}
        return out

    @cached_property
    def _pi_groups(self) -> list[list[np.ndarray]]:
        return [[np.flatnonzero(self.perms[:, x] == u) for u in range(self.N)] for x in range(self.N)]

    @cached_property
    def _xi(self) -> np.ndarray:
        return validity_projector(FunctionOracleConfig(2, 2, 2)).to_dense()

    # --- elementary operators on (..., P) arrays ------------------------

    def _internal(self, x: int, arr: np.ndarray, names: Sequence[str]) -> np.ndarray:
        shape = arr.shape
        t = arr.reshape(shape[:-1] + (self.np_, self.np_, self.T)).copy()
        for u, sel in enumerate(self._pi_groups[x]):
            sub = t[..., sel, :, :]
            for name in names:
                sub = reflect_last_axis(sub, *self._gens[u][name])
            t[..., sel, :, :] = sub
        return t.reshape(shape)

    def mfc(self, x: int, arr: np.ndarray) -> np.ndarray:
        """Compression: ``F`` register first, then ``K``, then ``H``."""
        return self._internal(x, arr, ("U_F", "U_K", "U_H"))

    def mfc_dag(self, x: int, arr: np.ndarray) -> np.ndarray:
        return self._internal(x, arr, ("U_H", "U_K", "U_F"))

    def sanitized(self, x: int, arr: np.ndarray) -> np.ndarray:
        return self._internal(x, arr, ("G_F", "G_K", "G_H"))

    def sanitized_dag(self, x: int, arr: np.ndarray) -> np.ndarray:
        return self._internal(x, arr, ("G_H", "G_K", "G_F"))

    def mfp(self, x: int, arr: np.ndarray) -> np.ndarray:
        """Purified forward query on a slice shaped ``(Y, ..., P)``."""
        return xor_values(arr, np.maximum(self.phi[x], 0))

    def mff(self, arr: np.ndarray) -> np.ndarray:
        return arr[..., self.flip_perm]

    def indb(self, x: int, arr: np.ndarray) -> np.ndarray:
        return arr * (self.phi[x] >= 0)

    def heart(self, x: int, arr: np.ndarray) -> np.ndarray:
        mask = self.allows_table[:, self.perms[:, x]]  # (T, pi)
        full = np.broadcast_to(mask.T[:, None, :], (self.np_, self.np_, self.T)).ravel()
        return arr * full

    def validity(self, arr: np.ndarray) -> np.ndarray:
        c = self.triples.c
        shape = arr.shape
        t = arr.reshape(shape[:-1] + (self.np_ * self.np_, c, c, c))
        for ax in (-3, -2, -1):
            t = np.moveaxis(np.tensordot(t, self._xi, axes=([ax], [1])), -1, ax)
        return t.reshape(shape)

    # --- sophisticated states and the intertwiner -----------------------

    @cached_property
    def soph(self) -> sp.csc_matrix:
        """Columns ``|P(I)>`` indexed like the injective database space
        (zero columns where no twirl pair resolves ``I``)."""
        space = self.cp_cfg.space
        pis, oms, w = self.dist.exact()
        pi_idx = self.perm_index(pis)
        om_idx = self.perm_index(oms)
        om_inv = inverse_tables(oms)
        rows, cols, vals = [], [], []
        cache: dict[tuple, np.ndarray] = {}
        for j in range(space.count):
            i = space.database(j)
            pairs = list(i.pairs())
            xl, yl = _lefts(pis, om_inv, pairs, 1)
            ok = (allowable_lefts(xl, yl) if pairs else np.ones(len(w), dtype=bool)) & (w > 0)
            if not ok.any():
                continue
            pw = w[ok] / w[ok].sum()
            for k, p in zip(np.flatnonzero(ok), pw):
                a = InjectiveDatabase.of(self.N, [(int(pis[k, x]), int(om_inv[k, y])) for x, y in pairs])
                if a.table not in cache:
                    cache[a.table] = np.array([self.triples.index(d) for d in canonical_triples(a, 1)])
                ds = cache[a.table]
                base = (pi_idx[k] * self.np_ + om_idx[k]) * self.T
                rows.extend(base + ds)
                cols.extend([j] * len(ds))
                vals.extend([math.sqrt(p / len(ds))] * len(ds))
        return sp.csc_matrix((np.array(vals, dtype=complex), (rows, cols)), shape=(self.P, space.count))

    @cached_property
    def _soph_h(self) -> sp.csr_matrix:
        return self.soph.conj().T.tocsr()

    @cached_property
    def resolvable(self) -> np.ndarray:
        return np.asarray(abs(self.soph).sum(axis=0)).ravel() > 0

    def sophisticated_state(self, i: InjectiveDatabase) -> np.ndarray:
        j = self.cp_cfg.space.index(i)
        if not self.resolvable[j]:
            raise ValueError("no twirl pair resolves this database")
        return self.soph[:, j].toarray().ravel()

    def _coeffs(self, arr: np.ndarray) -> np.ndarray:
        shape = arr.shape
        flat = arr.reshape(-1, self.P)
        return np.asarray((self._soph_h @ flat.T).T).reshape(shape[:-1] + (self.nI,))

    def _expand(self, coeffs: np.ndarray) -> np.ndarray:
        shape = coeffs.shape
        flat = coeffs.reshape(-1, self.nI)
        return np.asarray((self.soph @ flat.T).T).reshape(shape[:-1] + (self.P,))

    def soph_project(self, arr: np.ndarray) -> np.ndarray:
        return self._expand(self._coeffs(arr))

    def intertwine(self, arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Intertwiner: ``(H(I) part, H(P) part)``."""
        c = self._coeffs(arr)
        return c, arr - self._expand(c)

    # --- elegant blocks and ideal compression ---------------------------

    @cached_property
    def _blocks(self) -> list[tuple[sp.csc_matrix, sp.csc_matrix, sp.csc_matrix]]:
        """Per query input: (bases, uniform child superpositions, all members)
        for every complete block."""
        space = self.cp_cfg.space
        out = []
        for x in range(self.N):
            bases, pluses, members = [], [], []
            for j in range(space.count):
                i = space.database(j)
                if i(x) is not None or i.size + 1 > space.t_max or not self.resolvable[j]:
                    continue
                kids = [space.index(i.assign(x, y)) for y in range(self.N) if y not in set(i.im)]
                if not all(self.resolvable[k] for k in kids):
                    continue
                bases.append(self.soph[:, j])
                pluses.append(sp.csc_matrix(self.soph[:, kids] @ np.full((len(kids), 1), 1 / math.sqrt(len(kids)))))
                members.append(self.soph[:, [j] + kids])
            if bases:
                out.append((sp.hstack(bases).tocsc(), sp.hstack(pluses).tocsc(), sp.hstack(members).tocsc()))
            else:
                empty = sp.csc_matrix((self.P, 0), dtype=complex)
                out.append((empty, empty, empty))
        return out

    @staticmethod
    def _proj(m: sp.csc_matrix, arr: np.ndarray) -> np.ndarray:
        shape = arr.shape
        flat = arr.reshape(-1, shape[-1]).T
        return np.asarray(m @ (m.conj().T @ flat)).T.reshape(shape)

    @staticmethod
    def _outer(a: sp.csc_matrix, b: sp.csc_matrix, arr: np.ndarray) -> np.ndarray:
        shape = arr.shape
        flat = arr.reshape(-1, shape[-1]).T
        return np.asarray(a @ (b.conj().T @ flat)).T.reshape(shape)

    def elegant(self, x: int, arr: np.ndarray) -> np.ndarray:
        _, plus, members = self._blocks[x]
        if members.shape[1] == 0:
            return np.zeros_like(arr)
        return self._proj(members, arr) - self._proj(plus, arr)

    def ideal(self, x: int, arr: np.ndarray) -> np.ndarray:
        """Ideal compression; Hermitian and an involution."""
        base, plus, _ = self._blocks[x]
        if base.shape[1] == 0:
            return arr
        return (
            arr
            - self._proj(base, arr)
            - self._proj(plus, arr)
            + self._outer(base, plus, arr)
            + self._outer(plus, base, arr)
        )

    def flipped_elegant(self, b: int, x: int, arr: np.ndarray) -> np.ndarray:
        if not b:
            return self.elegant(x, arr)
        return self.mff(self.elegant(x, self.mff(arr)))

    def query_valid(self, b: int, x: int, arr: np.ndarray) -> np.ndarray:
        """Projector onto states whose compressed record answers the query."""
        if b:
            arr = self.mff(arr)
        arr = self.mfc(x, self.indb(x, self.mfc_dag(x, arr)))
        if b:
            arr = self.mff(arr)
        return arr

    # --- controlled oracles on (B, X, Y, ..., P) arrays ------------------

    def query_slice(self, b: int, x: int, arr: np.ndarray, compress: str = "real") -> np.ndarray:
        """``cmfO`` (or its ideal variant) on one ``(b, x)`` slice ``(Y, ..., P)``."""
        c, cd = {
            "real": (self.mfc, self.mfc_dag),
            "ideal": (self.ideal, self.ideal),
            "sanitized": (self.sanitized, self.sanitized_dag),
        }[compress]
        if b:
            arr = self.mff(arr)
        arr = c(x, self.mfp(x, cd(x, arr)))
        if b:
            arr = self.mff(arr)
        return arr

    def cmfo(self, arr: np.ndarray, compress: str = "real") -> np.ndarray:
        out = np.empty_like(arr)
        for b in range(2):
            for x in range(self.N):
                out[b, x] = self.query_slice(b, x, arr[b, x], compress)
        return out

    def cp_slice(self, b: int, x: int, arr_i: np.ndarray) -> np.ndarray:
        return machinery(self.cp_cfg).query_slice(b, x, arr_i)

    def flip_i(self, arr_i: np.ndarray) -> np.ndarray:
        return machinery(self.cp_cfg).flip_last(arr_i)

    def pc_i(self, x: int, arr_i: np.ndarray) -> np.ndarray:
        return machinery(self.cp_cfg).pc(x, arr_i)

    def purified_i(self, x: int, arr_i: np.ndarray) -> np.ndarray:
        return machinery(self.cp_cfg).purified(x, arr_i)

    def initial_purification(self) -> np.ndarray:
        return self.sophisticated_state(InjectiveDatabase.of(self.N))

    def hybrid_deviation(self, b: int, x: int, arr: np.ndarray) -> float:
        """``||(I cmfO - cP I) phi||`` squared, for one slice ``(Y, ..., P)``."""
        after = self.query_slice(b, x, arr)
        ai, ap = self.intertwine(after)
        bi, bp = self.intertwine(arr)
        bi = self.cp_slice(b, x, bi)
        return float(np.sum(np.abs(ai - bi) ** 2) + np.sum(np.abs(ap - bp) ** 2))


# ---------------------------------------------------------------------------
# LinearOp views
# ---------------------------------------------------------------------------


def _last_axis_op(dim: int, fn, adj=None, layout=None, name: str = "") -> LinearOp:
    def wrap(f):
        return None if f is None else (lambda v: f(v.T).T)

    return LinearOp(dim, wrap(fn), wrap(adj), layout=layout, name=name)


def _input_op(sysm: MaskedFeistelSystem, regs: Sequence[tuple[str, int]], fn, adj, name: str) -> LinearOp:
    """Operator on ``regs (+) P`` acting slice-wise through ``fn(values, arr)``
    where ``values`` are the register values of the slice."""
    layout = RegisterLayout.of(*regs, ("P", sysm.P))
    shape = tuple(d for _, d in regs)

    def run(f):
        def go(v: np.ndarray) -> np.ndarray:
            k = v.shape[1]
            t = v.reshape(shape + (sysm.P, k))
            t = np.moveaxis(t, -1, len(shape))
            out = np.empty_like(t)
            for vals in np.ndindex(*shape[: len(shape) - ("Y" in dict(regs))]):
                out[vals] = f(vals, t[vals])
            return np.moveaxis(out, len(shape), -1).reshape(v.shape)

        return go

    return LinearOp(layout.dim, run(fn), run(adj), layout=layout, name=name)


def build_mf_operators(sysm: MaskedFeistelSystem) -> dict[str, LinearOp]:
    """``mfP`` on X, Y, P; ``mfC``/``mfC_dag`` on X, P; ``mfF`` on P;
    ``cmfO`` on B, X, Y, P."""
    N = sysm.N
    mfp = lambda v, a: sysm.mfp(v[0], a)  # noqa: E731
    ops = {
        "mfP": _input_op(sysm, [("X", N), ("Y", N)], mfp, mfp, "mfP"),
        "mfC": _input_op(sysm, [("X", N)], lambda v, a: sysm.mfc(v[0], a), lambda v, a: sysm.mfc_dag(v[0], a), "mfC"),
        "mfF": _last_axis_op(sysm.P, sysm.mff, sysm.mff, name="mfF"),
    }
    ops["mfC_dag"] = ops["mfC"].dag
    fwd = lambda v, a: sysm.query_slice(v[0], v[1], a)  # noqa: E731
    ops["cmfO"] = _input_op(sysm, [("B", 2), ("X", N), ("Y", N)], fwd, fwd, "cmfO")
    return ops


class Intertwiner:
    """Isometry onto the direct sum, laid out as ``[H(I) coefficients | H(P) part]``."""

    def __init__(self, sysm: MaskedFeistelSystem) -> None:
        self.sysm = sysm
        self.dim_in = sysm.P
        self.dim_out = sysm.nI + sysm.P

    def apply(self, arr: np.ndarray) -> np.ndarray:
        ci, cp = self.sysm.intertwine(arr)
        return np.concatenate([ci, cp], axis=-1)

    def apply_adjoint(self, arr: np.ndarray) -> np.ndarray:
        nI = self.sysm.nI
        return self.sysm._expand(arr[..., :nI]) + arr[..., nI:] - self.sysm.soph_project(arr[..., nI:])


def build_intertwiner(sysm: MaskedFeistelSystem) -> Intertwiner:
    return Intertwiner(sysm)


def build_subspace_projectors(sysm: MaskedFeistelSystem, x: int, b: int = 0) -> dict[str, LinearOp]:
    """Projectors on the purification space for one query ``(b, x)``."""
    P = sysm.P
    ops = {
        "soph": _last_axis_op(P, sysm.soph_project, sysm.soph_project, name="soph"),
        "val": _last_axis_op(P, sysm.validity, sysm.validity, name="val"),
        "qval": _last_axis_op(P, lambda a: sysm.query_valid(b, x, a), lambda a: sysm.query_valid(b, x, a), name="qval"),
        "indb": _last_axis_op(P, lambda a: sysm.indb(x, a), lambda a: sysm.indb(x, a), name="indb"),
        "ele": _last_axis_op(P, lambda a: sysm.elegant(x, a), lambda a: sysm.elegant(x, a), name="ele"),
        "fele": _last_axis_op(
            P, lambda a: sysm.flipped_elegant(b, x, a), lambda a: sysm.flipped_elegant(b, x, a), name="fele"
        ),
        "heart": _last_axis_op(P, lambda a: sysm.heart(x, a), lambda a: sysm.heart(x, a), name="heart"),
    }
    return ops


def build_ideal_operators(sysm: MaskedFeistelSystem) -> dict[str, LinearOp]:
    N = sysm.N
    ideal = lambda v, a: sysm.ideal(v[0], a)  # noqa: E731
    fwd = lambda v, a: sysm.query_slice(v[0], v[1], a, "ideal")  # noqa: E731
    return {
        "mfC_ideal": _input_op(sysm, [("X", N)], ideal, ideal, "mfC_ideal"),
        "cmfO_ideal": _input_op(sysm, [("B", 2), ("X", N), ("Y", N)], fwd, fwd, "cmfO_ideal"),
    }


# ---------------------------------------------------------------------------
# Closeness regressions
# ---------------------------------------------------------------------------


def _range_basis(cols: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    return u[:, s > tol]


def elegant_basis(sysm: MaskedFeistelSystem, x: int) -> np.ndarray:
    """Orthonormal columns spanning the elegant subspace for input ``x``."""
    _, plus, members = sysm._blocks[x]
    if members.shape[1] == 0:
        return np.zeros((sysm.P, 0), dtype=complex)
    m = members.toarray()
    p = plus.toarray()
    return _range_basis(m - p @ (p.conj().T @ m))


def ideal_closeness(sysm: MaskedFeistelSystem) -> float:
    """``max_x ||(ideal - real inverse compression) Pi^ele_x||``."""
    worst = 0.0
    for x in range(sysm.N):
        e = elegant_basis(sysm, x)
        if e.shape[1] == 0:
            continue
        diff = sysm.ideal(x, e.T) - sysm.mfc_dag(x, e.T)
        worst = max(worst, float(np.linalg.norm(diff, 2)))
    return worst


def heart_gentleness(sysm: MaskedFeistelSystem) -> float:
    """``max_x ||(1 - Pi^heart_x) Pi^{x not in db} Pi^soph||`` over resolvable records."""
    space = sysm.cp_cfg.space
    worst = 0.0
    for x in range(sysm.N):
        cols = [j for j in np.flatnonzero(sysm.resolvable) if space.database(j)(x) is None]
        s = sysm.soph[:, cols].toarray().T
        diff = s - sysm.heart(x, s)
        worst = max(worst, float(np.linalg.norm(diff, 2)))
    return worst


_SYSTEMS: dict[tuple[str, int], MaskedFeistelSystem] = {}


def system(dist: TwirlDistribution, i_cap: int = 2) -> MaskedFeistelSystem:
    """Cached system for the built-in twirl kinds."""
    if dist.kind == "custom":
        return MaskedFeistelSystem(dist, i_cap)
    key = (dist.kind, i_cap)
    if key not in _SYSTEMS:
        _SYSTEMS[key] = MaskedFeistelSystem(dist, i_cap)
    return _SYSTEMS[key]


# ---------------------------------------------------------------------------
# Soundness experiment
# ---------------------------------------------------------------------------


def feistel_view(adv: AdversaryCircuit, rounds: int, n: int = 1) -> DensityMatrix:
    """Exact adversary view for a ``rounds``-round Feistel permutation with
    uniform round functions."""
    tabs = feistel_tables(n, rounds)
    uniq, counts = np.unique(tabs, axis=0, return_counts=True)
    return run_perm_standard_experiment(PermOracleConfig(1 << (2 * n), 1), adv, uniq, counts / counts.sum())


def feistel_distribution_distance(rounds: int, n: int = 1) -> float:
    """Total-variation distance between the Feistel permutation distribution
    and the uniform one; an upper bound on any view distance."""
    tabs = feistel_tables(n, rounds)
    N = 1 << (2 * n)
    perms = all_permutations(N)
    uniq, counts = np.unique(tabs, axis=0, return_counts=True)
    probs = dict(zip(map(tuple, uniq.tolist()), counts / counts.sum()))
    u = 1 / len(perms)
    return 0.5 * sum(abs(probs.get(tuple(p), 0.0) - u) for p in perms.tolist())


def cmfo_final_state(sysm: MaskedFeistelSystem, adv: AdversaryCircuit, deviations: list[float] | None = None) -> np.ndarray:
    """Run ``adv`` against ``cmfO`` from ``|P(empty)>``; optionally record the
    per-query hybrid deviations."""
    axes = [adv.layout.axis(r) for r in ("B", "X", "Y")]
    psi = adv.initial_state()[..., None] * sysm.initial_purification()

    def query(v: np.ndarray) -> np.ndarray:
        t = np.moveaxis(v, axes, [0, 1, 2])
        out = np.empty_like(t)
        dev = 0.0
        for b in range(2):
            for x in range(sysm.N):
                if deviations is not None:
                    dev += sysm.hybrid_deviation(b, x, t[b, x])
                out[b, x] = sysm.query_slice(b, x, t[b, x])
        if deviations is not None:
            deviations.append(math.sqrt(dev))
        return np.moveaxis(out, [0, 1, 2], axes)

    return run_adversary(adv, psi, query)


def run_soundness_experiment(dist: TwirlDistribution, adv: AdversaryCircuit, seed: int | None = None) -> ExperimentReport:
    """Exact n = 1 soundness quantities for one adversary.

    ``cp_distance``: uniform permutation versus the compressed permutation
    oracle. ``feistel7_distance``: seven-round Feistel versus uniform.
    ``hybrid``: per-query deviations of the intertwined oracle, and
    ``mf_view_distance`` the masked-Feistel view against its reference (uniform
    or seven-round Feistel).
    """
    start = time.perf_counter()
    if not adv.has_direction or adv.layout.cardinality("X") != 4:
        raise ValueError("soundness experiments need a direction bit and N = 4")
    q = adv.q
    cfg = PermOracleConfig(4, max(q, 1))
    rho_o = run_perm_standard_experiment(cfg, adv)
    if q == 0:
        zero = {"cp_distance": 0.0, "feistel7_distance": 0.0, "mf_view_distance": 0.0, "hybrid": [], "hybrid_sum": 0.0}
        return ExperimentReport("soundness", 1, 0, dist.kind, seed, zero, runtime_ms=(time.perf_counter() - start) * 1e3)
    _, rho_cp = run_cp_experiment(cfg, adv)
    rho_f7 = feistel_view(adv, 7)
    sysm = system(dist, max(2, q))
    devs: list[float] = []
    psi = cmfo_final_state(sysm, adv, devs)
    rho_mf = DensityMatrix(reduced_density(psi, len(adv.layout.dims)), adv.layout)
    ref = rho_o if dist.kind == "uniform" else rho_f7
    values = {
        "cp_distance": trace_distance(rho_o, rho_cp),
        "feistel7_distance": trace_distance(rho_f7, rho_o),
        "mf_view_distance": trace_distance(rho_mf, ref),
        "mf_cp_distance": trace_distance(rho_mf, rho_cp),
        "hybrid": devs,
        "hybrid_sum": float(sum(devs)),
    }
    return ExperimentReport("soundness", 1, q, dist.kind, seed, values, runtime_ms=(time.perf_counter() - start) * 1e3)
