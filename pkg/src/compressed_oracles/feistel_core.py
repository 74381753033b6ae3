"""Feistel networks and the combinatorics of three-round database triples.

Strings are ``2n``-bit integers. The left half ``x_L`` is the high ``n`` bits
and the right half ``x_R`` the low ``n`` bits.

A triple ``(D_h, D_k, D_f)`` of partial functions on ``n``-bit strings
*supports* ``u -> v`` when ``m = D_h(u_L) ^ u_R = D_f(v_L) ^ v_R`` and
``u_L ^ v_L = D_k(m)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np
import scipy.sparse as sp

from .cfo import swap_generator
from .databases import Database, DatabaseSpace, InjectiveDatabase, Permutation
from .qlinalg import LinearOp, RegisterLayout, SparseState

Direction = Literal["left-to-right", "right-to-left"]
LR: Direction = "left-to-right"
RL: Direction = "right-to-left"


def split(x: int, n: int) -> tuple[int, int]:
    return x >> n, x & ((1 << n) - 1)


def join(left: int, right: int, n: int) -> int:
    return (left << n) | right


# ---------------------------------------------------------------------------
# Feistel rounds and masked Feistel
# ---------------------------------------------------------------------------


def feistel_round(x: int, g: Sequence[int], direction: Direction, n: int) -> int:
    """One round: left-to-right XORs ``g(x_L)`` into ``x_R``; right-to-left
    XORs ``g(x_R)`` into ``x_L``."""
    left, right = split(x, n)
    if direction == LR:
        return join(left, right ^ g[left], n)
    if direction == RL:
        return join(left ^ g[right], right, n)
    raise ValueError(f"unknown direction {direction!r}")


def round_directions(rounds: int, first: Direction = LR) -> list[Direction]:
    other = RL if first == LR else LR
    return [first if i % 2 == 0 else other for i in range(rounds)]


def feistel_table(round_functions: Sequence[Sequence[int]], n: int, first: Direction = LR) -> np.ndarray:
    if not round_functions:
        raise ValueError("need at least one round")
    xs = np.arange(1 << (2 * n))
    mask = (1 << n) - 1
    for g, d in zip(round_functions, round_directions(len(round_functions), first)):
        g = np.asarray(g)
        left, right = xs >> n, xs & mask
        if d == LR:
            right = right ^ g[left]
        else:
            left = left ^ g[right]
        xs = (left << n) | right
    return xs


def feistel_permutation(round_functions: Sequence[Sequence[int]], n: int, first: Direction = LR) -> Permutation:
    """Composition of alternating rounds, the first one ``first``."""
    table = feistel_table(round_functions, n, first)
    if len(set(table.tolist())) != table.size:
        raise AssertionError("Feistel composition is not bijective")
    return Permutation(table.size, tuple(int(v) for v in table))


def all_round_functions(n: int) -> np.ndarray:
    """Every function on ``n``-bit strings, one per row."""
    size = 1 << n
    return np.array(list(itertools.product(range(size), repeat=size)), dtype=np.int64).reshape(-1, size)


def feistel_tables(n: int, rounds: int, first: Direction = LR) -> np.ndarray:
    """Truth tables of every ``rounds``-round Feistel permutation, one row per
    tuple of round functions (lexicographic)."""
    funcs = all_round_functions(n)
    nf = len(funcs)
    size = 1 << (2 * n)
    mask = (1 << n) - 1
    tabs = np.broadcast_to(np.arange(size), (1, size)).copy()
    for d in round_directions(rounds, first):
        left, right = tabs >> n, tabs & mask
        out = np.empty((tabs.shape[0], nf, size), dtype=np.int64)
        for j, g in enumerate(funcs):
            if d == LR:
                out[:, j] = (left << n) | (right ^ g[left])
            else:
                out[:, j] = ((left ^ g[right]) << n) | right
        tabs = out.reshape(-1, size)
    return tabs


@dataclass(frozen=True)
class MaskedFeistelSpec:
    n: int
    pi: Permutation
    omega: Permutation
    h: tuple[int, ...]
    k: tuple[int, ...]
    f: tuple[int, ...]

    def __post_init__(self) -> None:
        size = 1 << self.n
        if self.pi.n != size * size or self.omega.n != size * size:
            raise ValueError("twirl permutations have the wrong size")
        for g in (self.h, self.k, self.f):
            if len(g) != size or any(not 0 <= v < size for v in g):
                raise ValueError("inner functions must be total on n-bit strings")


def masked_feistel_eval(spec: MaskedFeistelSpec, x: int) -> int:
    n = spec.n
    u = spec.pi(x)
    ul, ur = split(u, n)
    m = spec.h[ul] ^ ur
    vl = ul ^ spec.k[m]
    vr = m ^ spec.f[vl]
    return spec.omega(join(vl, vr, n))


def inverse_eval(spec: MaskedFeistelSpec, y: int) -> int:
    n = spec.n
    v = spec.omega.inverse()(y)
    vl, vr = split(v, n)
    m = spec.f[vl] ^ vr
    ul = vl ^ spec.k[m]
    ur = m ^ spec.h[ul]
    return spec.pi.inverse()(join(ul, ur, n))


def random_masked_spec(n: int, rng: np.random.Generator) -> MaskedFeistelSpec:
    size = 1 << n
    big = size * size
    return MaskedFeistelSpec(
        n,
        Permutation(big, tuple(int(v) for v in rng.permutation(big))),
        Permutation(big, tuple(int(v) for v in rng.permutation(big))),
        *(tuple(int(v) for v in rng.integers(0, size, size)) for _ in range(3)),
    )


# ---------------------------------------------------------------------------
# Triples, chains and canonicity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TripleDB:
    n: int
    h: Database
    k: Database
    f: Database

    @classmethod
    def empty(cls, n: int) -> "TripleDB":
        e = Database.empty(1 << n, 1 << n)
        return cls(n, e, e, e)

    @classmethod
    def from_pairs(cls, n: int, h=(), k=(), f=()) -> "TripleDB":
        size = 1 << n
        return cls(n, *(Database.from_pairs(size, size, p) for p in (h, k, f)))

    @property
    def size(self) -> int:
        return max(self.h.size, self.k.size, self.f.size)

    def replace(self, **kw: Database) -> "TripleDB":
        return TripleDB(self.n, kw.get("h", self.h), kw.get("k", self.k), kw.get("f", self.f))

    def text(self) -> str:
        return f"h={self.h.text()} k={self.k.text()} f={self.f.text()}"


@dataclass(frozen=True)
class Chain:
    u: int
    m: int
    v: int


def semichain_length(d: TripleDB, start: int, direction: Literal["right", "left"] = "right") -> int:
    """Length (0..3) of the semi-chain from ``start``; 3 means a full chain."""
    n = d.n
    a, b = split(start, n)
    first, last = (d.h, d.f) if direction == "right" else (d.f, d.h)
    z = first(a)
    if z is None:
        return 0
    m = z ^ b
    w = d.k(m)
    if w is None:
        return 1
    if last(a ^ w) is None:
        return 2
    return 3


def chain_from(d: TripleDB, u: int) -> Chain | None:
    n = d.n
    ul, ur = split(u, n)
    z = d.h(ul)
    if z is None:
        return None
    m = z ^ ur
    w = d.k(m)
    if w is None:
        return None
    vl = ul ^ w
    zf = d.f(vl)
    if zf is None:
        return None
    return Chain(u, m, join(vl, zf ^ m, n))


def find_chains(d: TripleDB) -> list[Chain]:
    out = []
    for u in range(1 << (2 * d.n)):
        c = chain_from(d, u)
        if c is not None:
            out.append(c)
    return out


def chains_collide(a: Chain, b: Chain, n: int) -> bool:
    return a != b and (a.m == b.m or split(a.u, n)[0] == split(b.u, n)[0] or split(a.v, n)[0] == split(b.v, n)[0])


def is_canonical(d: TripleDB) -> bool:
    """No colliding chains, and every database entry lies on exactly one chain."""
    n = d.n
    chains = find_chains(d)
    for a, b in itertools.combinations(chains, 2):
        if chains_collide(a, b, n):
            return False
    hs = sorted(split(c.u, n)[0] for c in chains)
    ks = sorted(c.m for c in chains)
    fs = sorted(split(c.v, n)[0] for c in chains)
    return hs == list(d.h.dom) and ks == list(d.k.dom) and fs == list(d.f.dom)


def support(d: TripleDB) -> InjectiveDatabase:
    """Injective database of all chains; raises if two chains share an end."""
    size = 1 << (2 * d.n)
    return InjectiveDatabase.of(size, [(c.u, c.v) for c in find_chains(d)])


def remove_chain(d: TripleDB, u: int) -> TripleDB:
    """``D[u -> ⊥]``: drop the three entries of the chain starting at ``u``."""
    c = chain_from(d, u)
    if c is None:
        raise ValueError(f"no chain starts at {u}")
    n = d.n
    return d.replace(h=d.h.assign(split(u, n)[0], None), k=d.k.assign(c.m, None), f=d.f.assign(split(c.v, n)[0], None))


def census(triples: np.ndarray, n: int) -> np.ndarray:
    """Rightward and leftward semi-chain length histograms for a batch.

    ``triples`` has shape ``(T, 3, 2^n)`` holding ``h, k, f`` tables with
    ``2^n`` meaning undefined. Returns ``(T, 2, 4)`` counts of lengths 0..3.
    """
    size = 1 << n
    h, k, f = triples[:, 0], triples[:, 1], triples[:, 2]
    starts = np.arange(size * size)
    a, b = starts >> n, starts & (size - 1)
    out = np.zeros((triples.shape[0], 2, 4), dtype=np.int64)
    for side, (first, last) in enumerate(((h, f), (f, h))):
        z = first[:, a]
        l0 = z == size
        m = np.where(l0, 0, z ^ b[None, :])
        w = np.take_along_axis(k, m, axis=1)
        l1 = ~l0 & (w == size)
        idx = np.where(l0 | l1, 0, a[None, :] ^ np.where(w == size, 0, w))
        zz = np.take_along_axis(last, idx, axis=1)
        l2 = ~l0 & ~l1 & (zz == size)
        l3 = ~l0 & ~l1 & ~l2
        for j, mask in enumerate((l0, l1, l2, l3)):
            out[:, side, j] = mask.sum(axis=1)
    return out


def census_row(n: int, t: int, triples: Iterable[TripleDB]) -> dict[str, int]:
    """Census of canonical size-``t`` triples, checked to be the same for all."""
    arr = np.array([[d.h.table, d.k.table, d.f.table] for d in triples], dtype=np.int64)
    if arr.size == 0:
        raise ValueError("no triples to census")
    counts = census(arr, n)
    first = counts[0]
    if not np.all(counts == first[None]):
        raise AssertionError("semi-chain census differs between triples")
    if not np.all(first[0] == first[1]):
        raise AssertionError("leftward and rightward census differ")
    return {"n": n, "t": t, "chains": int(first[0, 3]), "semi2": int(first[0, 2]), "semi1": int(first[0, 1]), "semi0": int(first[0, 0])}


def census_formula(n: int, t: int) -> dict[str, int]:
    size = 1 << n
    return {"n": n, "t": t, "chains": t, "semi2": t * (t - 1), "semi1": t * (size - t), "semi0": (size - t) * size}


# ---------------------------------------------------------------------------
# Allowability
# ---------------------------------------------------------------------------


def is_allowable(i: InjectiveDatabase, n: int) -> bool:
    pairs = i.pairs()
    xl = [split(x, n)[0] for x, _ in pairs]
    yl = [split(y, n)[0] for _, y in pairs]
    if len(set(xl)) != len(xl) or len(set(yl)) != len(yl):
        return False
    doms = [split(x, n)[0] for x in i.dom]
    ims = [split(y, n)[0] for y in i.im]
    for (x, y) in pairs:
        s = split(x, n)[0] ^ split(y, n)[0]
        for x2, dl in zip(i.dom, doms):
            for y2, il in zip(i.im, ims):
                if (x, y) != (x2, y2) and dl ^ il == s:
                    return False
    return True


def allowed_outputs(a: InjectiveDatabase, u: int, n: int) -> list[int]:
    """``V_{u,A}``: fresh outputs ``v`` keeping ``A[u -> v]`` allowable."""
    if a(u) is not None:
        raise ValueError(f"{u} is already in the domain")
    used = set(a.im)
    return [v for v in range(a.n) if v not in used and is_allowable(a.assign(u, v), n)]


def allows(a: InjectiveDatabase, u: int, n: int) -> bool:
    return a(u) is None and bool(allowed_outputs(a, u, n))


def allowed_values(a: InjectiveDatabase, u: int, n: int) -> tuple[set[int], set[int]]:
    """``(V, L)``: allowed outputs for ``u`` and their left halves."""
    if not is_allowable(a, n):
        raise ValueError("database is not allowable")
    vs = allowed_outputs(a, u, n)
    if not vs:
        raise ValueError(f"input {u} is not allowed")
    ls = {split(v, n)[0] for v in vs}
    t = a.size
    if len(ls) < (1 << n) - 2 * t * t - 2 * t:
        raise AssertionError("too few allowed left halves")
    vset = set(vs)
    if any(join(l, r, n) not in vset for l in ls for r in range(1 << n)):
        raise AssertionError("allowed outputs are not closed under right halves")
    return vset, ls


def left_set(a: InjectiveDatabase, u: int, n: int) -> set[int]:
    return allowed_values(a, u, n)[1]


# ---------------------------------------------------------------------------
# Database extension
# ---------------------------------------------------------------------------


def extend_database(
    i: InjectiveDatabase, n: int, choices: Sequence[int] | None = None, order: Sequence[int] | None = None
) -> TripleDB | set[TripleDB]:
    """Build canonical triples supporting exactly ``i`` pair by pair.

    With ``choices`` (one ``z`` per pair, pairs taken in ``order`` or sorted
    by input) a single triple is returned. Without, every ordering and every
    admissible choice is explored and the set of all results returned.
    """
    if not is_allowable(i, n):
        raise ValueError("database is not allowable")
    pairs = list(i.pairs())
    if choices is not None:
        seq = [pairs[j] for j in order] if order is not None else pairs
        d = TripleDB.empty(n)
        for (u, v), z in zip(seq, choices):
            d = _extend_step(d, u, v, z, n)
            if d is None:
                raise ValueError(f"choice z={z} collides with the K database")
        return d
    out: set[TripleDB] = set()
    for perm in itertools.permutations(pairs):
        _extend_all(TripleDB.empty(n), list(perm), n, out)
    return out


def _extend_step(d: TripleDB, u: int, v: int, z: int, n: int) -> TripleDB | None:
    ul, ur = split(u, n)
    vl, vr = split(v, n)
    m = ur ^ z
    if d.k(m) is not None:
        return None
    return d.replace(h=d.h.assign(ul, z), k=d.k.assign(m, ul ^ vl), f=d.f.assign(vl, vr ^ m))


def _extend_all(d: TripleDB, rest: list[tuple[int, int]], n: int, out: set[TripleDB]) -> None:
    if not rest:
        out.add(d)
        return
    u, v = rest[0]
    for z in range(1 << n):
        nxt = _extend_step(d, u, v, z, n)
        if nxt is not None:
            _extend_all(nxt, rest[1:], n, out)


def canonical_triples(i: InjectiveDatabase, n: int) -> list[TripleDB]:
    """``D(I)`` in a deterministic order (empty for non-allowable ``I``)."""
    if not is_allowable(i, n):
        return []
    return sorted(extend_database(i, n), key=lambda d: (d.h.table, d.k.table, d.f.table))


def allowable_databases(n: int, t: int) -> Iterator[InjectiveDatabase]:
    size = 1 << (2 * n)
    for dom in itertools.combinations(range(size), t):
        for ys in itertools.permutations(range(size), t):
            i = InjectiveDatabase.of(size, zip(dom, ys))
            if is_allowable(i, n):
                yield i


# ---------------------------------------------------------------------------
# Extensions and pipes
# ---------------------------------------------------------------------------


def _lefts_of_domain(d: TripleDB) -> set[int]:
    return {split(u, d.n)[0] for u in support(d).dom}


def one_extensions(d: TripleDB) -> set[TripleDB]:
    n = d.n
    a = support(d)
    out = set()
    used = _lefts_of_domain(d)
    for l in range(1 << n):
        if l in used:
            continue
        if not any(allows(a, join(l, r, n), n) for r in range(1 << n)):
            continue
        for z in range(1 << n):
            out.add(d.replace(h=d.h.assign(l, z)))
    return out


def two_extensions(d: TripleDB) -> set[TripleDB]:
    n = d.n
    a = support(d)
    out = set()
    for l, d1 in _tagged_one_extensions(d):
        lefts = left_set(a, join(l, 0, n), n)
        for m in range(1 << n):
            if d1.k(m) is not None:
                continue
            for w in range(1 << n):
                if l ^ w in lefts:
                    out.add(d1.replace(k=d1.k.assign(m, w)))
    return out


def three_extensions(d: TripleDB) -> set[TripleDB]:
    n = d.n
    a = support(d)
    out = set()
    for l, d1 in _tagged_one_extensions(d):
        lefts = left_set(a, join(l, 0, n), n)
        for m in range(1 << n):
            if d1.k(m) is not None:
                continue
            for w in range(1 << n):
                if l ^ w not in lefts:
                    continue
                d2 = d1.replace(k=d1.k.assign(m, w))
                for z2 in range(1 << n):
                    out.add(d2.replace(f=d2.f.assign(l ^ w, z2)))
    return out


def _tagged_one_extensions(d: TripleDB) -> Iterator[tuple[int, TripleDB]]:
    n = d.n
    a = support(d)
    used = _lefts_of_domain(d)
    for l in range(1 << n):
        if l in used or not any(allows(a, join(l, r, n), n) for r in range(1 << n)):
            continue
        for z in range(1 << n):
            yield l, d.replace(h=d.h.assign(l, z))


def up_pipe_h(d: TripleDB, u: int) -> set[TripleDB]:
    n = d.n
    ul, ur = split(u, n)
    bad = {ur ^ m for m in d.k.dom}
    return {d} | {d.replace(h=d.h.assign(ul, z)) for z in range(1 << n) if z not in bad}


def up_pipe_hk(d: TripleDB, u: int) -> set[TripleDB]:
    n = d.n
    ul, ur = split(u, n)
    lefts = left_set(support(d), u, n)
    out = set()
    for d1 in up_pipe_h(d, u):
        out.add(d1)
        z = d1.h(ul)
        if d1 == d or z is None:
            continue
        for l in lefts:
            out.add(d1.replace(k=d1.k.assign(ur ^ z, ul ^ l)))
    return out


def up_pipe_hkf(d: TripleDB, u: int) -> set[TripleDB]:
    n = d.n
    ul, ur = split(u, n)
    out = set()
    for d2 in up_pipe_hk(d, u):
        out.add(d2)
        z = d2.h(ul)
        if z is None or d2.h == d.h:
            continue
        w = d2.k(ur ^ z)
        if w is None or d2.k == d.k:
            continue
        for z2 in range(1 << n):
            out.add(d2.replace(f=d2.f.assign(ul ^ w, z2)))
    return out


def down_pipe_h(d: TripleDB, u: int) -> set[TripleDB]:
    n = d.n
    ul, ur = split(u, n)
    bad = {ur ^ m for m in d.k.dom}
    return {d.replace(h=d.h.assign(ul, z)) for z in [*range(1 << n), None] if z is None or z not in bad}


def down_pipe_k(d: TripleDB, u: int) -> set[TripleDB]:
    n = d.n
    ul, ur = split(u, n)
    rest = remove_chain(d, u)
    lefts = left_set(support(rest), u, n)
    m = ur ^ d.h(ul)
    return {d.replace(k=d.k.assign(m, w)) for w in [*(ul ^ l for l in lefts), None]}


def down_pipe_f(d: TripleDB, u: int) -> set[TripleDB]:
    n = d.n
    vl = split(support(d)(u), n)[0]
    return {d.replace(f=d.f.assign(vl, z)) for z in [*range(1 << n), None]}


def assignment_set(d: TripleDB, u: int, v: int) -> set[TripleDB]:
    """``D[u -> v]``: three-extensions of ``d`` with a chain from ``u`` to ``v``."""
    return {e for e in three_extensions(d) if support(e)(u) == v and remove_chain(e, u) == d}


# ---------------------------------------------------------------------------
# Triple spaces and compression operators
# ---------------------------------------------------------------------------


class TripleSpace:
    """Product of three capped function-database spaces ``H, K, F``."""

    def __init__(self, n: int, t_max: int) -> None:
        size = 1 << n
        self.n, self.t_max = n, t_max
        self.comp = DatabaseSpace("function", size, size, t_max)
        self.c = self.comp.count
        self.count = self.c**3
        grid = np.indices((self.c,) * 3).reshape(3, -1)
        self._h, self._k, self._f = grid

    def layout(self) -> RegisterLayout:
        return RegisterLayout.of(("H", self.c), ("K", self.c), ("F", self.c))

    def index(self, d: TripleDB) -> int:
        return (self.comp.index(d.h) * self.c + self.comp.index(d.k)) * self.c + self.comp.index(d.f)

    def triple(self, j: int) -> TripleDB:
        h, rest = divmod(j, self.c * self.c)
        k, f = divmod(rest, self.c)
        return TripleDB(self.n, self.comp.database(h), self.comp.database(k), self.comp.database(f))

    def sizes(self) -> np.ndarray:
        s = self.comp.sizes
        return np.maximum(np.maximum(s[self._h], s[self._k]), s[self._f])

    def compose(self, h: np.ndarray, k: np.ndarray, f: np.ndarray) -> np.ndarray:
        return (h * self.c + k) * self.c + f

    def superposition(self, triples: Iterable[TripleDB]) -> np.ndarray:
        idx = sorted({self.index(d) for d in triples})
        v = np.zeros(self.count, dtype=complex)
        if idx:
            v[idx] = 1 / math.sqrt(len(idx))
        return v


def _component_swap(space: TripleSpace, which: int, x_of: np.ndarray, allowed: np.ndarray | None) -> sp.csr_matrix:
    """Swap generator on one component at per-triple input ``x_of`` (-1 skips).

    ``allowed[j, y]`` restricts the superposition for triple ``j``.
    """
    comp, c, size = space.comp, space.c, 1 << space.n
    ids = [space._h, space._k, space._f]
    mine = ids[which]
    active = x_of >= 0
    xs = np.where(active, x_of, 0)
    undefined = comp.tables[mine, xs] == size
    base_mask = active & undefined & (comp.sizes[mine] < space.t_max)
    bases = np.flatnonzero(base_mask)
    if len(bases) == 0:
        return sp.csr_matrix((space.count, 0), dtype=complex)
    children = np.full((len(bases), size), -1, dtype=np.int64)
    assigned = [[comp.assigned_indices(x, y) for y in range(size)] for x in range(size)]
    bx = xs[bases]
    for y in range(size):
        new_comp = np.empty(len(bases), dtype=np.int64)
        for x in range(size):
            sel = bx == x
            new_comp[sel] = assigned[x][y][mine[bases[sel]]]
        parts = [ids[0][bases], ids[1][bases], ids[2][bases]]
        parts[which] = new_comp
        children[:, y] = space.compose(*parts)
    ok = np.ones_like(children, dtype=bool) if allowed is None else allowed[bases]
    counts = ok.sum(axis=1)
    keep = counts > 0
    bases, children, ok, counts = bases[keep], children[keep], ok[keep], counts[keep]
    children = np.where(ok, children, -1)
    amps = np.where(ok, 1 / np.sqrt(np.maximum(counts, 1))[:, None], 0.0)
    return swap_generator(space.count, bases, children, amps)


def compression_generators(space: TripleSpace, u: int) -> dict[str, sp.csr_matrix]:
    """Swap generators for standard (``U_*``) and canonical (``G_*``)
    compression of each register on input ``u``."""
    n, comp, size = space.n, space.comp, 1 << space.n
    ul, ur = split(u, n)
    tabs = comp.tables
    h_t, k_t = tabs[space._h], tabs[space._k]

    hx = np.full(space.count, ul, dtype=np.int64)
    zh = h_t[:, ul]
    h_def = zh < size
    m = np.where(h_def, zh ^ ur, 0)
    kx = np.where(h_def, m, -1)
    wk = k_t[np.arange(space.count), m]
    k_def = h_def & (wk < size)
    fx = np.where(k_def, ul ^ np.where(k_def, wk, 0), -1)

    gens = {
        "U_H": _component_swap(space, 0, hx, None),
        "U_K": _component_swap(space, 1, kx, None),
        "U_F": _component_swap(space, 2, fx, None),
    }
    # H(u, D_k): outputs z with u_R ^ z outside Dom(D_k)
    h_allowed = np.stack([k_t[:, ur ^ z] == size for z in range(size)], axis=1)
    gens["G_H"] = _component_swap(space, 0, hx, h_allowed)
    gens["G_K"] = _canonical_k_generator(space, u)
    gens["G_F"] = gens["U_F"]
    return gens


def canonical_compression_ops(space: TripleSpace, u: int) -> dict[str, LinearOp]:
    """Standard (``U``) and canonical (``G``) compression on input ``u``.

    Keys ``U_H, U_K, U_F, G_H, G_K, G_F`` are the single-register swaps; ``U``
    and ``G`` are the products ``X_H X_K X_F`` (the ``F`` factor acts first).
    """
    gens = compression_generators(space, u)
    ops = {name: LinearOp.reflection(g, layout=space.layout(), name=name) for name, g in gens.items()}
    ops["U"] = ops["U_H"] @ ops["U_K"] @ ops["U_F"]
    ops["G"] = ops["G_H"] @ ops["G_K"] @ ops["G_F"]
    return ops


def _canonical_k_generator(space: TripleSpace, u: int) -> sp.csr_matrix:
    """K-register swap restricted to one-extensions at ``u_L`` of canonical
    triples, over outputs ``w`` with ``u_L ^ w`` an allowed left half."""
    n, comp, size = space.n, space.comp, 1 << space.n
    ul, ur = split(u, n)
    bases, children, amps = [], [], []
    for parent in _canonical_in_space(space):
        if comp.sizes[comp.index(parent.h)] >= space.t_max:
            continue
        if parent.h(ul) is not None:
            continue
        a = support(parent)
        if not allows(a, u, n):
            continue
        lefts = left_set(a, u, n)
        ws = sorted(ul ^ l for l in lefts)
        for z in range(1 << n):
            d1 = parent.replace(h=parent.h.assign(ul, z))
            m = ur ^ z
            if d1.k(m) is not None or d1.k.size >= space.t_max:
                continue
            row = np.full(size, -1, dtype=np.int64)
            amp = np.zeros(size)
            for j, w in enumerate(ws):
                row[j] = space.index(d1.replace(k=d1.k.assign(m, w)))
                amp[j] = 1 / math.sqrt(len(ws))
            bases.append(space.index(d1))
            children.append(row)
            amps.append(amp)
    if not bases:
        return sp.csr_matrix((space.count, 0), dtype=complex)
    return swap_generator(space.count, np.array(bases), np.array(children), np.array(amps))


_CANON_CACHE: dict[tuple[int, int], list[TripleDB]] = {}


def _canonical_in_space(space: TripleSpace) -> list[TripleDB]:
    key = (space.n, space.t_max)
    if key not in _CANON_CACHE:
        out = []
        for t in range(space.t_max + 1):
            for a in allowable_databases(space.n, t):
                out.extend(canonical_triples(a, space.n))
        _CANON_CACHE[key] = out
    return _CANON_CACHE[key]


def canonical_decomp_sides(space: TripleSpace, a: InjectiveDatabase, u: int) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the canonical-decompression identity: decompressing
    ``|+_{D(A)}>`` (``H`` first) and the uniform mixture over allowed outputs."""
    n = space.n
    ops = canonical_compression_ops(space, u)
    lhs = space.superposition(canonical_triples(a, n))
    for name in ("G_H", "G_K", "G_F"):
        lhs = ops[name].apply(lhs)
    vs = sorted(allowed_values(a, u, n)[0])
    rhs = np.zeros(space.count, dtype=complex)
    for v in vs:
        rhs += space.superposition(canonical_triples(a.assign(u, v), n))
    return lhs, rhs / math.sqrt(len(vs))
