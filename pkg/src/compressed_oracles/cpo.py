"""Compressed oracle for a uniformly random permutation of ``[N]``.

The purification ranges over partial injections of size at most ``t_max``.
A direction bit selects forward (``b = 0``) or inverse (``b = 1``) queries;
inverse queries conjugate the forward oracle by the flip ``I -> I^{-1}``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .cfo import batch_initial_state, checked_norms, reflect_last_axis, run_adversary, swap_generator, xor_values
from .circuits import AdversaryCircuit
from .databases import DatabaseSpace
from .qlinalg import DensityMatrix, LinearOp, RegisterLayout, SparseState, reduced_density

PERM_ENUMERATION_MAX_N = 8
CHUNK_ENTRIES = 1 << 22


@dataclass(frozen=True)
class PermOracleConfig:
    N: int
    t_max: int

    def __post_init__(self) -> None:
        if self.N < 1 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two")
        if not 0 <= self.t_max <= self.N:
            raise ValueError("need 0 <= t_max <= N")

    @cached_property
    def space(self) -> DatabaseSpace:
        return DatabaseSpace("injective", self.N, self.N, self.t_max)

    def with_cap(self, t_max: int) -> "PermOracleConfig":
        return PermOracleConfig(self.N, min(t_max, self.N))


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def pc_generator(space: DatabaseSpace, x: int, exclude: Callable[[int], np.ndarray] | None = None):
    """Swap generator between ``|I>`` and the uniform superposition of
    ``I[x -> y]`` over fresh outputs ``y``.

    ``exclude(base_index)`` may return a boolean mask over ``[N]`` of further
    outputs to leave out. Empty superpositions and capped blocks are identity.
    """
    n = space.n
    undefined = space.undefined_at(x)
    bases = undefined[space.sizes[undefined] < space.t_max]
    if len(bases) == 0:
        return swap_generator(space.count, bases, np.zeros((0, n), np.int64), np.zeros((0, n)))
    tabs = space.tables[bases]
    used = np.zeros((len(bases), n), dtype=bool)
    for col in range(n):
        v = tabs[:, col]
        ok = v < n
        used[np.flatnonzero(ok), v[ok]] = True
    if exclude is not None:
        used |= np.array([exclude(int(b)) for b in bases], dtype=bool)
    free = ~used
    counts = free.sum(axis=1)
    keep = counts > 0
    bases, free, counts = bases[keep], free[keep], counts[keep]
    rows = np.repeat(space.tables[bases], n, axis=0).reshape(len(bases), n, n)
    rows[:, np.arange(n), x] = np.arange(n)[None, :]
    child = space.indices(rows.reshape(-1, n)).reshape(len(bases), n)
    child = np.where(free, child, -1)
    amps = np.where(free, 1 / np.sqrt(np.maximum(counts, 1))[:, None], 0.0)
    return swap_generator(space.count, bases, child, amps)


def flip_indices(space: DatabaseSpace) -> np.ndarray:
    """``flip[j]`` is the index of the inverse of database ``j``."""
    n = space.n
    inv = np.full_like(space.tables, n)
    for x in range(n):
        col = space.tables[:, x]
        ok = col < n
        inv[np.flatnonzero(ok), col[ok]] = x
    return space.indices(inv)


class _PermMachinery:
    def __init__(self, space: DatabaseSpace) -> None:
        self.space = space
        self.gens = [pc_generator(space, x) for x in range(space.n)]
        self.gens_h = [g.conj().T.tocsr() for g in self.gens]
        self.flip = flip_indices(space)
        vals = space.tables.copy()
        vals[vals == space.n] = 0
        self.values = vals

    def pc(self, x: int, arr: np.ndarray) -> np.ndarray:
        return reflect_last_axis(arr, self.gens[x], self.gens_h[x])

    def purified(self, x: int, arr: np.ndarray) -> np.ndarray:
        return xor_values(arr, self.values[:, x])

    def flip_last(self, arr: np.ndarray) -> np.ndarray:
        return arr[..., self.flip]

    def query_slice(self, b: int, x: int, arr: np.ndarray) -> np.ndarray:
        """``cP`` on a fixed ``(b, x)`` slice shaped ``(Y, ..., I)``."""
        if b:
            arr = self.flip_last(arr)
        arr = self.pc(x, self.purified(x, self.pc(x, arr)))
        if b:
            arr = self.flip_last(arr)
        return arr


_MACHINES: dict[tuple[int, int], _PermMachinery] = {}


def machinery(cfg: PermOracleConfig) -> _PermMachinery:
    key = (cfg.N, cfg.t_max)
    if key not in _MACHINES:
        _MACHINES[key] = _PermMachinery(cfg.space)
    return _MACHINES[key]


def oracle_layout(cfg: PermOracleConfig) -> RegisterLayout:
    return RegisterLayout.of(("B", 2), ("X", cfg.N), ("Y", cfg.N), ("I", cfg.space.count))


def build_pc(cfg: PermOracleConfig) -> LinearOp:
    """Controlled ``pC`` on the ``(X, I)`` space."""
    if cfg.t_max == 0:
        raise ValueError("cap t_max=0 cannot hold any decompressed entry")
    mach = machinery(cfg)
    nI = cfg.space.count
    layout = RegisterLayout.of(("X", cfg.N), ("I", nI))

    def run(v: np.ndarray) -> np.ndarray:
        k = v.shape[1]
        t = v.reshape(cfg.N, nI, k).transpose(0, 2, 1).copy()
        for x in range(cfg.N):
            t[x] = mach.pc(x, t[x])
        return t.transpose(0, 2, 1).reshape(-1, k)

    return LinearOp(layout.dim, run, run, layout=layout, name="pC")


def build_pc_x(cfg: PermOracleConfig, x: int) -> LinearOp:
    return LinearOp.reflection(machinery(cfg).gens[x], layout=cfg.space.layout("I"), name=f"pC_{x}")


def build_flip(cfg: PermOracleConfig) -> LinearOp:
    perm = machinery(cfg).flip
    return LinearOp.permutation(perm, layout=cfg.space.layout("I"), name="F")


def build_cp(cfg: PermOracleConfig) -> LinearOp:
    mach = machinery(cfg)
    nI, N = cfg.space.count, cfg.N
    layout = oracle_layout(cfg)

    def run(v: np.ndarray) -> np.ndarray:
        k = v.shape[1]
        t = v.reshape(2, N, N, nI, k).transpose(0, 1, 2, 4, 3).copy()
        for b in range(2):
            for x in range(N):
                t[b, x] = mach.query_slice(b, x, t[b, x])
        return t.transpose(0, 1, 2, 4, 3).reshape(-1, k)

    return LinearOp(layout.dim, run, run, layout=layout, name="cP")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _axes(adv: AdversaryCircuit) -> list[int]:
    if not adv.has_direction:
        raise ValueError("permutation adversaries need a direction register B")
    return [adv.layout.axis("B"), adv.layout.axis("X"), adv.layout.axis("Y")]


def _check(cfg: PermOracleConfig, adv: AdversaryCircuit) -> None:
    if adv.layout.cardinality("X") != cfg.N or adv.layout.cardinality("Y") != cfg.N:
        raise ValueError("adversary query registers do not match the oracle")


def cp_query(cfg: PermOracleConfig, adv: AdversaryCircuit, psi: np.ndarray) -> np.ndarray:
    mach = machinery(cfg)
    axes = _axes(adv)
    t = np.moveaxis(psi, axes, [0, 1, 2]).copy()
    for b in range(2):
        for x in range(cfg.N):
            t[b, x] = mach.query_slice(b, x, t[b, x])
    return np.moveaxis(t, [0, 1, 2], axes)


def perm_query(adv: AdversaryCircuit, psi: np.ndarray, fwd: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Query a batch of permutations indexed by the last axis."""
    axes = _axes(adv)
    t = np.moveaxis(psi, axes, [0, 1, 2]).copy()
    for x in range(t.shape[1]):
        t[0, x] = xor_values(t[0, x], fwd[:, x])
        t[1, x] = xor_values(t[1, x], inv[:, x])
    return np.moveaxis(t, [0, 1, 2], axes)


def all_permutations(N: int) -> np.ndarray:
    if N > PERM_ENUMERATION_MAX_N:
        raise ValueError(f"{N}! permutations exceed the enumeration cap")
    return np.array(list(itertools.permutations(range(N))), dtype=np.int64).reshape(-1, N)


def inverse_tables(tables: np.ndarray) -> np.ndarray:
    inv = np.empty_like(tables)
    rows = np.arange(tables.shape[0])[:, None]
    inv[rows, tables] = np.arange(tables.shape[1])[None, :]
    return inv


def batched_final_states(adv: AdversaryCircuit, tables: np.ndarray):
    """Yield ``(final states, table chunk)`` over chunks of permutations."""
    inv = inverse_tables(tables)
    per = max(1, CHUNK_ENTRIES // adv.layout.dim)
    for s in range(0, len(tables), per):
        fw, iv = tables[s : s + per], inv[s : s + per]
        psi = batch_initial_state(adv, len(fw))
        yield run_adversary(adv, psi, lambda v: perm_query(adv, v, fw, iv)), fw


def run_perm_standard_experiment(
    cfg: PermOracleConfig, adv: AdversaryCircuit, tables: np.ndarray | None = None, weights: np.ndarray | None = None
) -> DensityMatrix:
    """Adversary view averaged over all permutations, or over ``tables``
    with optional probability ``weights``."""
    _check(cfg, adv)
    tables = all_permutations(cfg.N) if tables is None else np.asarray(tables)
    if weights is None:
        weights = np.full(len(tables), 1 / len(tables))
    d = adv.layout.dim
    rho = np.zeros((d, d), dtype=complex)
    start = 0
    for psi, fw in batched_final_states(adv, tables):
        w = np.sqrt(weights[start : start + len(fw)])
        a = psi.reshape(d, -1) * w[None, :]
        rho += a @ a.conj().T
        start += len(fw)
    return DensityMatrix(rho, adv.layout)


def cp_final_state(cfg: PermOracleConfig, adv: AdversaryCircuit) -> np.ndarray:
    _check(cfg, adv)
    if cfg.t_max < adv.q:
        raise ValueError(f"database cap {cfg.t_max} is below the query count {adv.q}")
    psi = adv.initial_state((cfg.space.count,))
    return run_adversary(adv, psi, lambda s: cp_query(cfg, adv, s))


def run_cp_experiment(cfg: PermOracleConfig, adv: AdversaryCircuit) -> tuple[SparseState, DensityMatrix]:
    psi = cp_final_state(cfg, adv)
    view = DensityMatrix(reduced_density(psi, len(adv.layout.dims)), adv.layout)
    return SparseState.from_dense(adv.layout.concat(cfg.space.layout("I")), psi), view


def perm_fundamental_lemma_check(cfg: PermOracleConfig, adv: AdversaryCircuit, l: int) -> tuple[float, float]:
    """``(lhs, rhs)``: decompressed checks on the reported pairs versus plain
    checks plus ``l / sqrt(N - q - l)``. Only tuples of distinct inputs count."""
    if cfg.N - adv.q - l <= 0:
        raise ValueError("need N - q - l > 0")
    big = cfg.with_cap(adv.q + l)
    psi = cp_final_state(big, adv)
    if l == 0:
        nrm = float(np.linalg.norm(psi))
        return nrm, nrm
    mach = machinery(big)
    lhs, rhs = checked_norms(big.space, psi, adv, l, mach.pc, distinct=True)
    return lhs, rhs + l / math.sqrt(cfg.N - adv.q - l)


def perm_real_success_probability(cfg: PermOracleConfig, adv: AdversaryCircuit, l: int) -> float:
    """Probability over uniform permutations that the reported pairs (with
    distinct inputs) are all correct forward evaluations."""
    from .cfo import _output_slices, _slice_at

    tables = all_permutations(cfg.N)
    total = 0.0
    for psi, fw in batched_final_states(adv, tables):
        for xs, ys, axes, vals in _output_slices(adv, l):
            if len(set(xs)) < len(xs):
                continue
            ok = np.ones(len(fw), dtype=bool)
            for x, y in zip(xs, ys):
                ok &= fw[:, x] == y
            sub = psi[_slice_at(psi, axes, vals)]
            total += float(np.sum(np.abs(sub.reshape(-1, len(fw))[:, ok]) ** 2))
    return total / len(tables)
