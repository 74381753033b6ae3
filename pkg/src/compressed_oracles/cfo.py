"""Compressed oracle for a uniformly random function ``[M] -> [N]``.

The database register ranges over partial functions of size at most
``t_max``. States in experiments are ndarrays with the adversary registers as
leading axes and the database index as the last axis.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp

from .circuits import AdversaryCircuit
from .databases import Database, DatabaseSpace
from .qlinalg import (
    DensityMatrix,
    LinearOp,
    RegisterLayout,
    SparseState,
    operator_norm,
    reduced_density,
)

ENUMERATION_CAP = 65536
# Calibrated with M = 4 over N in {4, 8, 16}, t in {1, 2} (and t = 3 at N = 4),
# excluding t output values, then frozen. Worst measured ratios: 1.528 and
# sqrt(2) (the recorded-output worst case is exactly sqrt(2 / (N - t))).
RESTRICTED_COMPRESSION_C = 1.6
RECORDED_OUTPUT_C = 1.415


@dataclass(frozen=True)
class FunctionOracleConfig:
    M: int
    N: int
    t_max: int

    def __post_init__(self) -> None:
        if self.N < 1 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two")
        if self.M < 1:
            raise ValueError("M must be positive")
        if not 0 <= self.t_max <= self.M:
            raise ValueError("need 0 <= t_max <= M")

    @cached_property
    def space(self) -> DatabaseSpace:
        return DatabaseSpace("function", self.M, self.N, self.t_max)

    def with_cap(self, t_max: int) -> "FunctionOracleConfig":
        return FunctionOracleConfig(self.M, self.N, min(t_max, self.M))


# ---------------------------------------------------------------------------
# Swap blocks
# ---------------------------------------------------------------------------


def swap_generator(dim: int, bases: np.ndarray, children: np.ndarray, amps: np.ndarray) -> sp.csr_matrix:
    """Columns ``|base> - sum_k amps[k] |children[k]>`` for a reflection.

    ``children`` and ``amps`` have one row per base; entries with child index
    -1 are padding.
    """
    nb = len(bases)
    if nb == 0:
        return sp.csr_matrix((dim, 0), dtype=complex)
    cols = np.arange(nb)
    mask = children >= 0
    rows = np.concatenate([bases, children[mask]])
    cc = np.concatenate([cols, np.broadcast_to(cols[:, None], children.shape)[mask]])
    vals = np.concatenate([np.ones(nb, dtype=complex), -amps[mask].astype(complex)])
    return sp.csr_matrix((vals, (rows, cc)), shape=(dim, nb))


def reflect_last_axis(arr: np.ndarray, gen: sp.csr_matrix, gen_h: sp.csr_matrix | None = None) -> np.ndarray:
    """Apply ``1 - G G^H`` on the last axis of ``arr``."""
    if gen.shape[1] == 0:
        return arr
    gen_h = gen.conj().T.tocsr() if gen_h is None else gen_h
    shape = arr.shape
    v = arr.reshape(-1, shape[-1]).T
    out = v - gen @ (gen_h @ v)
    return np.ascontiguousarray(out.T).reshape(shape)


def fc_generator(space: DatabaseSpace, x: int, sets: Callable[[Database], Iterable[int]] | None = None) -> sp.csr_matrix:
    """Swap generator between ``|D>`` and a uniform superposition of
    ``D[x -> y]`` over ``y`` in a set (all of ``[N]`` by default).

    Blocks whose children exceed the cap, or whose set is empty, are left out
    and so act as the identity.
    """
    undefined = space.undefined_at(x)
    bases = undefined[space.sizes[undefined] < space.t_max]
    n = space.n
    child_all = np.stack([space.assigned_indices(x, y)[bases] for y in range(n)], axis=1) if len(bases) else np.zeros((0, n), np.int64)
    if sets is None:
        amps = np.full(child_all.shape, 1 / math.sqrt(n))
        return swap_generator(space.count, bases, child_all, amps)
    keep_b, ch, am = [], [], []
    for j, b in enumerate(bases):
        s = sorted(set(int(y) for y in sets(space.database(int(b)))))
        if not s:
            continue
        row = np.full(n, -1, dtype=np.int64)
        row[: len(s)] = child_all[j, s]
        amp = np.zeros(n)
        amp[: len(s)] = 1 / math.sqrt(len(s))
        keep_b.append(b)
        ch.append(row)
        am.append(amp)
    if not keep_b:
        return sp.csr_matrix((space.count, 0), dtype=complex)
    return swap_generator(space.count, np.array(keep_b), np.array(ch), np.array(am))


class _Compressor:
    """Cached swap generators, one per input."""

    def __init__(self, space: DatabaseSpace, sets=None) -> None:
        self.space = space
        self.gens = [fc_generator(space, x, sets) for x in range(space.m)]
        self.gens_h = [g.conj().T.tocsr() for g in self.gens]

    def apply(self, x: int, arr: np.ndarray) -> np.ndarray:
        return reflect_last_axis(arr, self.gens[x], self.gens_h[x])


_COMPRESSORS: dict[tuple, _Compressor] = {}


def _compressor(cfg: FunctionOracleConfig) -> _Compressor:
    key = ("f", cfg.M, cfg.N, cfg.t_max)
    if key not in _COMPRESSORS:
        _COMPRESSORS[key] = _Compressor(cfg.space)
    return _COMPRESSORS[key]


def xor_values(arr: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``out[y, ..., d] = arr[y ^ values[d], ..., d]`` with ``values`` per last-axis entry."""
    n = arr.shape[0]
    idx = np.arange(n)[:, None] ^ values[None, :]
    idx = idx.reshape((n,) + (1,) * (arr.ndim - 2) + (values.size,))
    return np.take_along_axis(arr, np.broadcast_to(idx, arr.shape), axis=0)


# ---------------------------------------------------------------------------
# Operators on the (X, Y, D) space
# ---------------------------------------------------------------------------


def oracle_layout(cfg: FunctionOracleConfig) -> RegisterLayout:
    return RegisterLayout.of(("X", cfg.M), ("Y", cfg.N), ("D", cfg.space.count))


def build_fc(cfg: FunctionOracleConfig, x: int) -> LinearOp:
    if not 0 <= x < cfg.M:
        raise ValueError(f"input {x} out of range")
    if cfg.t_max == 0:
        raise ValueError("cap t_max=0 cannot hold any decompressed entry")
    return LinearOp.reflection(_compressor(cfg).gens[x], layout=cfg.space.layout(), name=f"fc_{x}")


def _per_x(cfg: FunctionOracleConfig, fn: Callable[[int, np.ndarray], np.ndarray]) -> LinearOp:
    layout = oracle_layout(cfg)

    def run(v: np.ndarray) -> np.ndarray:
        k = v.shape[1]
        t = v.reshape(cfg.M, cfg.N, cfg.space.count, k).transpose(0, 1, 3, 2).copy()
        for x in range(cfg.M):
            t[x] = fn(x, t[x])
        return t.transpose(0, 1, 3, 2).reshape(-1, k)

    return LinearOp(layout.dim, run, None, layout=layout)


def _purified_slice(cfg: FunctionOracleConfig, x: int, arr: np.ndarray) -> np.ndarray:
    """``P`` on a fixed-``x`` slice shaped ``(Y, ..., D)``."""
    vals = cfg.space.tables[:, x].copy()
    vals[vals == cfg.N] = 0
    return xor_values(arr, vals)


def build_purified_query(cfg: FunctionOracleConfig) -> LinearOp:
    op = _per_x(cfg, lambda x, a: _purified_slice(cfg, x, a))
    return LinearOp(op.dim, op._fwd, op._fwd, layout=op.layout, name="P")


def _cf_slice(cfg: FunctionOracleConfig, x: int, arr: np.ndarray) -> np.ndarray:
    comp = _compressor(cfg)
    return comp.apply(x, _purified_slice(cfg, x, comp.apply(x, arr)))


def build_cf(cfg: FunctionOracleConfig) -> LinearOp:
    op = _per_x(cfg, lambda x, a: _cf_slice(cfg, x, a))
    return LinearOp(op.dim, op._fwd, op._fwd, layout=op.layout, name="CF")


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _check_adversary(cfg: FunctionOracleConfig, adv: AdversaryCircuit) -> None:
    if adv.layout.cardinality("X") != cfg.M or adv.layout.cardinality("Y") != cfg.N:
        raise ValueError("adversary query registers do not match the oracle")


def compressed_query(cfg: FunctionOracleConfig, adv: AdversaryCircuit, psi: np.ndarray) -> np.ndarray:
    ax, ay = adv.layout.axis("X"), adv.layout.axis("Y")
    t = np.moveaxis(psi, [ax, ay], [0, 1]).copy()
    for x in range(cfg.M):
        t[x] = _cf_slice(cfg, x, t[x])
    return np.moveaxis(t, [0, 1], [ax, ay])


def all_functions(M: int, N: int) -> np.ndarray:
    return np.array(list(itertools.product(range(N), repeat=M)), dtype=np.int64).reshape(-1, M)


def standard_query(adv: AdversaryCircuit, psi: np.ndarray, tables: np.ndarray) -> np.ndarray:
    """Classical-function query for a batch: the last axis indexes ``tables``."""
    ax, ay = adv.layout.axis("X"), adv.layout.axis("Y")
    t = np.moveaxis(psi, [ax, ay], [0, 1]).copy()
    for x in range(t.shape[0]):
        t[x] = xor_values(t[x], tables[:, x])
    return np.moveaxis(t, [0, 1], [ax, ay])


def batch_initial_state(adv: AdversaryCircuit, count: int) -> np.ndarray:
    """The adversary's initial state copied once per oracle in a batch."""
    base = adv.initial_state()
    return np.repeat(base[..., None], count, axis=-1)


def run_adversary(adv: AdversaryCircuit, psi: np.ndarray, query: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    psi = adv.apply_step(0, psi)
    for k in range(1, adv.q + 1):
        psi = adv.apply_step(k, query(psi))
    return psi


def run_standard_experiment(
    cfg: FunctionOracleConfig,
    adv: AdversaryCircuit,
    *,
    rng: np.random.Generator | None = None,
    samples: int = 4096,
) -> DensityMatrix:
    """Adversary view averaged over all functions (or a seeded sample)."""
    _check_adversary(cfg, adv)
    if cfg.N**cfg.M <= ENUMERATION_CAP:
        tables = all_functions(cfg.M, cfg.N)
    elif rng is not None:
        tables = rng.integers(0, cfg.N, size=(samples, cfg.M))
    else:
        raise ValueError(f"{cfg.N}^{cfg.M} functions exceed the enumeration cap; pass an rng to sample")
    psi = batch_initial_state(adv, len(tables))
    psi = run_adversary(adv, psi, lambda s: standard_query(adv, s, tables))
    rows = np.moveaxis(psi, -1, 0)
    return DensityMatrix.from_rows(rows, layout=adv.layout)


def compressed_final_state(cfg: FunctionOracleConfig, adv: AdversaryCircuit) -> np.ndarray:
    _check_adversary(cfg, adv)
    if cfg.t_max < adv.q:
        raise ValueError(f"database cap {cfg.t_max} is below the query count {adv.q}")
    psi = adv.initial_state((cfg.space.count,))
    return run_adversary(adv, psi, lambda s: compressed_query(cfg, adv, s))


def run_compressed_experiment(cfg: FunctionOracleConfig, adv: AdversaryCircuit) -> tuple[SparseState, DensityMatrix]:
    psi = compressed_final_state(cfg, adv)
    layout = adv.layout.concat(cfg.space.layout())
    view = DensityMatrix(reduced_density(psi, len(adv.layout.dims)), adv.layout)
    return SparseState.from_dense(layout, psi), view


# ---------------------------------------------------------------------------
# Finding input-output pairs
# ---------------------------------------------------------------------------


def _output_slices(adv: AdversaryCircuit, l: int):
    """Iterate over output-register assignments as (xs, ys, index tuple)."""
    if adv.output_pairs < l:
        raise ValueError(f"adversary reports {adv.output_pairs} pairs, fewer than l={l}")
    axes = adv.output_axes()[:l]
    dims = [(adv.layout.dims[a], adv.layout.dims[b]) for a, b in axes]
    flat_axes = [a for pair in axes for a in pair]
    for vals in itertools.product(*[range(d) for pair in dims for d in pair]):
        xs, ys = vals[0::2], vals[1::2]
        yield xs, ys, flat_axes, vals


def _slice_at(psi: np.ndarray, axes: list[int], vals: tuple[int, ...]) -> tuple:
    idx: list = [slice(None)] * psi.ndim
    for a, v in zip(axes, vals):
        idx[a] = v
    return tuple(idx)


def checked_norms(space: DatabaseSpace, psi: np.ndarray, adv: AdversaryCircuit, l: int, apply_c, distinct: bool = False):
    """Norms of the decompressed check and of the plain database check."""
    lhs2 = rhs2 = 0.0
    for xs, ys, axes, vals in _output_slices(adv, l):
        if distinct and len(set(xs)) < len(xs):
            continue
        sub = psi[_slice_at(psi, axes, vals)]
        rest = sub.reshape(-1, space.count)
        mask = np.ones(space.count, dtype=bool)
        for x, y in zip(xs, ys):
            mask &= space.tables[:, x] == y
        rhs2 += float(np.sum(np.abs(rest[:, mask]) ** 2))
        v = rest
        for x, y in reversed(list(zip(xs, ys))):
            v = apply_c(x, v)
            v = v * (space.tables[:, x] == y)[None, :]
            v = apply_c(x, v)
        lhs2 += float(np.sum(np.abs(v) ** 2))
    return math.sqrt(lhs2), math.sqrt(rhs2)


def fundamental_lemma_check(cfg: FunctionOracleConfig, adv: AdversaryCircuit, l: int) -> tuple[float, float]:
    """``(lhs, rhs)`` with lhs the norm after decompressed consistency checks
    on the reported pairs, and rhs the plain check norm plus ``sqrt(l/N)``."""
    if l < 0:
        raise ValueError("l must be nonnegative")
    big = cfg.with_cap(adv.q + l)
    psi = compressed_final_state(big, adv)
    if l == 0:
        nrm = float(np.linalg.norm(psi))
        return nrm, nrm
    comp = _compressor(big)
    lhs, rhs = checked_norms(big.space, psi, adv, l, comp.apply)
    return lhs, rhs + math.sqrt(l / cfg.N)


def real_success_probability(cfg: FunctionOracleConfig, adv: AdversaryCircuit, l: int) -> float:
    """Probability over uniform functions that every reported pair is correct."""
    tables = all_functions(cfg.M, cfg.N)
    psi = batch_initial_state(adv, len(tables))
    psi = run_adversary(adv, psi, lambda s: standard_query(adv, s, tables))
    total = 0.0
    for xs, ys, axes, vals in _output_slices(adv, l):
        ok = np.ones(len(tables), dtype=bool)
        for x, y in zip(xs, ys):
            ok &= tables[:, x] == y
        sub = psi[_slice_at(psi, axes, vals)]
        total += float(np.sum(np.abs(sub.reshape(-1, len(tables))[:, ok]) ** 2))
    return total / len(tables)


# ---------------------------------------------------------------------------
# Validity and restricted compression
# ---------------------------------------------------------------------------


def decompressed_projector(cfg: FunctionOracleConfig, x: int) -> LinearOp:
    return LinearOp.diagonal((cfg.space.tables[:, x] != cfg.N).astype(float), layout=cfg.space.layout(), name=f"Γ_{x}")


def validity_projector(cfg: FunctionOracleConfig) -> LinearOp:
    """Product over inputs of ``fc_x Γ_x fc_x``. Exact on states whose
    databases stay below the cap."""
    if cfg.M > 4:
        raise ValueError("validity projector is only enumerated for M <= 4")
    ops = [build_fc(cfg, x) @ decompressed_projector(cfg, x) @ build_fc(cfg, x) for x in range(cfg.M)]
    out = ops[0]
    for o in ops[1:]:
        out = out @ o
    return out


def check_validity_preserved(cfg: FunctionOracleConfig, adv: AdversaryCircuit, tol: float = 1e-10) -> bool:
    """Every intermediate state of the compressed experiment lies in the valid subspace."""
    big = cfg.with_cap(max(cfg.t_max, adv.q + 1))
    xi = validity_projector(big)
    nd = big.space.count
    ok = True

    def check(psi: np.ndarray) -> None:
        nonlocal ok
        v = psi.reshape(-1, nd).T
        ok &= bool(np.linalg.norm(xi.apply(v) - v) <= tol)

    psi = adv.apply_step(0, adv.initial_state((nd,)))
    check(psi)
    for k in range(1, adv.q + 1):
        psi = compressed_query(big, adv, psi)
        check(psi)
        psi = adv.apply_step(k, psi)
    return ok


def restricted_compression(cfg: FunctionOracleConfig, x: int, sets: Callable[[Database], Iterable[int]]) -> LinearOp:
    """``G_x``: swap ``|D>`` with the uniform superposition over ``sets(D)``."""
    gen = fc_generator(cfg.space, x, sets)
    return LinearOp.reflection(gen, layout=cfg.space.layout(), name=f"G_{x}")


def restricted_compression_distance(cfg: FunctionOracleConfig, x: int, sets, t: int | None = None) -> float:
    """``||fc_x - G_x||``, optionally restricted to databases of size at most ``t``."""
    diff = build_fc(cfg, x) - restricted_compression(cfg, x, sets)
    support = None if t is None else np.flatnonzero(cfg.space.sizes <= t)
    return operator_norm(diff, support)


def recorded_output_state(cfg: FunctionOracleConfig, x: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``sum_D a_D |D>|D(x)>`` over databases defined at ``x``, as a
    ``(D, R)`` array with an ``N``-dimensional record register."""
    sp_ = cfg.space
    defined = np.flatnonzero(sp_.tables[:, x] != cfg.N)
    psi = np.zeros((sp_.count, cfg.N), dtype=complex)
    amps = rng.standard_normal(len(defined)) + 1j * rng.standard_normal(len(defined))
    psi[defined, sp_.tables[defined, x]] = amps
    return psi / np.linalg.norm(psi)


def recorded_output_deviation(cfg: FunctionOracleConfig, x: int, sets, psi: np.ndarray) -> float:
    """``||(1 - G_x)|psi>||`` for a ``(D, R)`` state."""
    g = restricted_compression(cfg, x, sets)
    return float(np.linalg.norm(psi - g.apply(psi)))


def recorded_output_worst(cfg: FunctionOracleConfig, x: int, sets) -> float:
    """Worst ``||(1 - G_x)|psi>||`` over unit recorded-output states.

    Distinct record values are orthogonal, so the worst case is the largest
    restricted norm over databases sharing one value at ``x``.
    """
    g = restricted_compression(cfg, x, sets)
    diff = LinearOp.identity(cfg.space.count) - g
    tabs = cfg.space.tables[:, x]
    return max(operator_norm(diff, np.flatnonzero(tabs == y)) for y in range(cfg.N))
