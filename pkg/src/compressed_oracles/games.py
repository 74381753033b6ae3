"""Predicate-search games against real and compressed permutation oracles.

A predicate is a set of finite lists of input-output pairs. A database
satisfies it when some list built from its pairs (repetition allowed, length
bounded by the predicate's hints) is accepted.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.stats import binomtest

from .cfo import _output_slices, _slice_at
from .circuits import AdversaryCircuit, classical_adversary, hadamard_adversary, query_layout
from .cpo import (
    PermOracleConfig,
    all_permutations,
    batched_final_states,
    cp_final_state,
    flip_indices,
    inverse_tables,
    pc_generator,
    perm_fundamental_lemma_check,
    run_cp_experiment,
    run_perm_standard_experiment,
)
from .databases import DatabaseSpace, InjectiveDatabase
from .feistel_core import feistel_tables
from .mforacle import feistel_distribution_distance, feistel_view
from .qlinalg import LinearOp, trace_distance

Pairs = Sequence[tuple[int, int]]

SUBLIST_CAP = 6
EXACT_PERMUTATION_MAX = 8

# Frozen closeness constants from the exhaustive N in {4, 8}, t in {1, 2}
# runs. Both maxima are attained at N = 4, t = 2, where the distance is sqrt(2).
CYCLE_CLOSENESS_C = 2.0
SPARSITY_CLOSENESS_C = 2.0


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Predicate:
    """``decide`` receives an ordered list of pairs.

    ``arity`` fixes the list length; otherwise ``max_length(t)`` bounds the
    lists worth trying inside a database of size ``t``. ``symmetric`` lets the
    search try sorted lists only.
    """

    name: str
    decide: Callable[[Pairs], bool]
    arity: int | None = None
    symmetric: bool = False
    max_length: Callable[[int], int] | None = field(default=None, compare=False)
    empty: bool = False

    def __call__(self, pairs: Pairs) -> bool:
        return bool(self.decide(list(pairs)))

    def lengths(self, t: int) -> range:
        if self.arity is not None:
            return range(self.arity, self.arity + 1)
        if self.max_length is not None:
            return range(1, self.max_length(t) + 1)
        if t > SUBLIST_CAP:
            raise ValueError(f"predicate {self.name!r} has no arity hint and |I| = {t} exceeds {SUBLIST_CAP}")
        return range(1, t + 1)

    def satisfied(self, pairs: Pairs, must_use: tuple[int, int] | None = None) -> bool:
        """``I ∩ R ≠ ∅`` for the database with these pairs; ``must_use``
        restricts to lists containing that pair."""
        if self.empty:
            return False
        pairs = list(pairs)
        for k in self.lengths(len(pairs)):
            gen = (
                itertools.combinations_with_replacement(pairs, k)
                if self.symmetric
                else itertools.product(pairs, repeat=k)
            )
            for seq in gen:
                if must_use is not None and must_use not in seq:
                    continue
                if self.decide(list(seq)):
                    return True
        return False


def empty_predicate() -> Predicate:
    return Predicate("empty", lambda p: False, arity=1, empty=True)


def single_pair_predicate(targets: set[tuple[int, int]] | None = None) -> Predicate:
    """Any single pair, or one of ``targets``."""
    if targets is None:
        return Predicate("single-pair", lambda p: True, arity=1)
    frozen = frozenset(targets)
    return Predicate("single-pair", lambda p: tuple(p[0]) in frozen, arity=1)


def _distinct_inputs(p: Pairs) -> bool:
    return len({x for x, _ in p}) == len(p)


def one_more_predicate(q: int) -> Predicate:
    """``q + 1`` pairs with distinct inputs."""
    return Predicate(f"one-more-{q}", _distinct_inputs, arity=q + 1, symmetric=False)


def cycle_predicate() -> Predicate:
    """``y_i = x_{i+1 mod l}`` with distinct inputs; ``l = 1`` is a fixed point."""

    def decide(p: Pairs) -> bool:
        if not _distinct_inputs(p):
            return False
        l = len(p)
        return all(p[i][1] == p[(i + 1) % l][0] for i in range(l))

    return Predicate("cycle", decide)


def dm_zero_preimage_predicate() -> Predicate:
    return Predicate("dm-zero-preimage", lambda p: p[0][0] == p[0][1], arity=1)


def dm_collision_predicate() -> Predicate:
    def decide(p: Pairs) -> bool:
        (x, y), (x2, y2) = p
        return x != x2 and y != y2 and x ^ y == x2 ^ y2

    return Predicate("dm-collision", decide, arity=2, symmetric=True)


def dszs_predicate(zero_bits: int) -> Predicate:
    """A pair whose input and output both end in ``zero_bits`` zero bits.

    On ``2n``-bit strings the usual choice is ``zero_bits = n``.
    """
    mask = (1 << zero_bits) - 1
    return Predicate(f"dszs-{zero_bits}", lambda p: (p[0][0] & mask) == 0 and (p[0][1] & mask) == 0, arity=1)


def predicate_catalog(N: int, q: int = 2) -> dict[str, Predicate]:
    out = {
        "empty": empty_predicate(),
        "single-pair": single_pair_predicate(),
        "one-more": one_more_predicate(q),
        "cycle": cycle_predicate(),
        "dm-zero-preimage": dm_zero_preimage_predicate(),
        "dm-collision": dm_collision_predicate(),
        "dszs": dszs_predicate(int(math.log2(N)) // 2),
    }
    return out


# ---------------------------------------------------------------------------
# Sponge
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpongeParams:
    r: int
    c: int
    perm: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.r < 1 or self.c < 1:
            raise ValueError("rate and capacity must be at least one bit")
        if sorted(self.perm) != list(range(1 << (self.r + self.c))):
            raise ValueError("perm must be a permutation of the state space")

    @property
    def N(self) -> int:
        return 1 << (self.r + self.c)

    def rate(self, v: int) -> int:
        return v >> self.c

    def capacity(self, v: int) -> int:
        return v & ((1 << self.c) - 1)


def sponge_eval(params: SpongeParams, message: Sequence[int]) -> int:
    """Absorb ``message`` (r-bit blocks) from the zero state and squeeze one
    rate block."""
    if not message:
        raise ValueError("message must have at least one block")
    u = 0
    for m in message:
        if not 0 <= m < 1 << params.r:
            raise ValueError(f"block {m} does not fit in {params.r} bits")
        u = params.perm[u ^ (m << params.c)]
    return params.rate(u)


def sponge_message(params: SpongeParams, chain: Pairs) -> list[int]:
    """Message blocks absorbed along a chain of pairs."""
    blocks = [params.rate(chain[0][0])]
    for (_, y), (x, _) in zip(chain, chain[1:]):
        blocks.append(params.rate(x) ^ params.rate(y))
    return blocks


def _is_chain(params: SpongeParams, p: Pairs) -> bool:
    if not p or params.capacity(p[0][0]) != 0:
        return False
    return all(params.capacity(y) == params.capacity(x) for (_, y), (x, _) in zip(p, p[1:]))


def _product(left: Callable[[Pairs], bool], right: Callable[[Pairs], bool]) -> Callable[[Pairs], bool]:
    """Concatenations of two distinct accepted lists."""

    def decide(p: Pairs) -> bool:
        p = list(p)
        for k in range(1, len(p)):
            a, b = p[:k], p[k:]
            if a != b and left(a) and right(b):
                return True
        return False

    return decide


def sponge_predicates(params: SpongeParams, w: int) -> dict[str, Predicate]:
    """Preimage of ``w``, internal preimages, internal collision and collision."""
    c_mask = (1 << params.c) - 1

    def pre(target: int) -> Callable[[Pairs], bool]:
        return lambda p: _is_chain(params, p) and params.rate(p[-1][1]) == target

    def ipre(z: int) -> Callable[[Pairs], bool]:
        return lambda p: _is_chain(params, p) and params.capacity(p[-1][1]) == z

    single = lambda t: t  # noqa: E731
    double = lambda t: 2 * t  # noqa: E731
    icol_parts = [ipre(0)] + [_product(ipre(z), ipre(z)) for z in range(1, c_mask + 1)]
    col_parts = [_product(pre(v), pre(v)) for v in range(1 << params.r)]
    return {
        "preimage": Predicate(f"sponge-pre-{w}", pre(w), max_length=single),
        "internal-preimage": Predicate("sponge-ipre-0", ipre(0), max_length=single),
        "internal-collision": Predicate(
            "sponge-icol", lambda p: any(f(p) for f in icol_parts), max_length=double
        ),
        "collision": Predicate("sponge-col", lambda p: any(f(p) for f in col_parts), max_length=double),
    }


def internal_preimage_predicate(params: SpongeParams, z: int) -> Predicate:
    return Predicate(
        f"sponge-ipre-{z}",
        lambda p: _is_chain(params, p) and params.capacity(p[-1][1]) == z,
        max_length=lambda t: t,
    )


# ---------------------------------------------------------------------------
# Projectors and sparsity
# ---------------------------------------------------------------------------


def satisfied_mask(space: DatabaseSpace, p: Predicate) -> np.ndarray:
    if space.kind != "injective":
        raise ValueError("predicate projectors act on injective database spaces")
    out = np.zeros(space.count, dtype=bool)
    if p.empty:
        return out
    if p.arity == 1:
        table = _single_table(p, space.n)
        tabs = space.tables
        for x in range(space.n):
            col = tabs[:, x]
            ok = col < space.n
            out[ok] |= table[x, col[ok]]
        return out
    for j in range(space.count):
        out[j] = p.satisfied(space.database(j).pairs())
    return out


def predicate_projector(space: DatabaseSpace, p: Predicate) -> LinearOp:
    """Diagonal projector onto databases that satisfy ``p``."""
    return LinearOp.diagonal(satisfied_mask(space, p).astype(float), layout=space.layout("I"), name=f"Pi[{p.name}]")


def _single_table(p: Predicate, N: int) -> np.ndarray:
    return np.array([[p.decide([(x, y)]) for y in range(N)] for x in range(N)], dtype=bool)


@dataclass
class SparsityReport:
    t: int
    s_t: int
    witness: tuple[InjectiveDatabase, str, int, int] | None

    def as_dict(self) -> dict:
        w = None
        if self.witness is not None:
            i, side, v, k = self.witness
            w = {"I": i.text(), "direction": side, "point": v, "count": k}
        return {"t": self.t, "s_t": self.s_t, "witness": w}


def completions(p: Predicate, i: InjectiveDatabase, x: int, direction: str = "forward") -> list[int]:
    """Fresh values completing ``i`` at ``x`` that make it satisfy ``p``.

    ``forward``: outputs ``y`` for input ``x``. ``inverse``: inputs for
    output ``x``. Empty when ``i`` already satisfies ``p``.
    """
    pairs = list(i.pairs())
    if p.satisfied(pairs):
        return []
    N = i.n
    out = []
    if direction == "forward":
        if i(x) is not None:
            return []
        for y in range(N):
            if y not in i.im and p.satisfied(pairs + [(x, y)], must_use=(x, y)):
                out.append(y)
    else:
        if x in i.im:
            return []
        for a in range(N):
            if i(a) is None and p.satisfied(pairs + [(a, x)], must_use=(a, x)):
                out.append(a)
    return out


def brute_sparsity(p: Predicate, N: int, t: int) -> SparsityReport:
    """Exact ``s_t`` over unsatisfied databases of size at most ``t``."""
    space = DatabaseSpace("injective", N, N, t)
    sat = satisfied_mask(space, p)
    best, witness = 0, None
    if p.arity == 1:
        table = _single_table(p, N)
        tabs = space.tables
        for j in np.flatnonzero(~sat):
            row = tabs[j]
            dom = row < N
            im = np.zeros(N, dtype=bool)
            im[row[dom]] = True
            fwd = (table[~dom][:, ~im]).sum(axis=1)
            inv = (table[~dom][:, ~im]).sum(axis=0)
            for side, counts, pts in (("forward", fwd, np.flatnonzero(~dom)), ("inverse", inv, np.flatnonzero(~im))):
                if counts.size and counts.max() > best:
                    k = int(counts.argmax())
                    best = int(counts[k])
                    witness = (space.database(j), side, int(pts[k]), best)
        return SparsityReport(t, best, witness)
    for j in np.flatnonzero(~sat):
        i = space.database(j)
        for side in ("forward", "inverse"):
            for v in range(N):
                k = len(completions(p, i, v, side))
                if k > best:
                    best, witness = k, (i, side, v, k)
    return SparsityReport(t, best, witness)


# ---------------------------------------------------------------------------
# Modified compressions
# ---------------------------------------------------------------------------


def _exclusion_mask(space: DatabaseSpace, sat: np.ndarray, p: Predicate, x: int, inverse: bool) -> Callable[[int], np.ndarray]:
    def mask(j: int) -> np.ndarray:
        out = np.zeros(space.n, dtype=bool)
        if sat[j]:
            return out
        db = space.database(j)
        target = db.inverse() if inverse else db
        pairs = list(target.pairs())
        for y in range(space.n):
            if y in db.im:
                continue
            new = (y, x) if inverse else (x, y)
            if p.satisfied(pairs + [new], must_use=new):
                out[y] = True
        return out

    return mask


def sparsity_generator(space: DatabaseSpace, p: Predicate, x: int, inverse: bool = False) -> sp.csr_matrix:
    """Generator of the compression that never completes ``p``.

    With ``inverse`` the generator acts on flipped databases, so conjugating by
    the flip gives the inverse-direction modification.
    """
    sat_here = satisfied_mask(space, p)
    sat = sat_here[flip_indices(space)] if inverse else sat_here
    return pc_generator(space, x, _exclusion_mask(space, sat, p, x, inverse))


def cycle_generator(space: DatabaseSpace, x: int) -> sp.csr_matrix:
    """Generator of the compression that only assigns outputs outside the
    domain and image, and never ``x`` itself."""

    def mask(j: int) -> np.ndarray:
        row = space.tables[j]
        out = row < space.n
        out[x] = True
        return out

    return pc_generator(space, x, mask)


def _reflection(gen: sp.csr_matrix) -> sp.csr_matrix:
    gen = sp.csr_matrix(gen, dtype=complex)
    return (sp.identity(gen.shape[0], dtype=complex, format="csr") - gen @ gen.conj().T).tocsr()


def commutator_norm(diag: np.ndarray, op: sp.csr_matrix) -> float:
    """Frobenius norm of ``[diag, op]``, an upper bound on its operator norm."""
    d = sp.diags(diag.astype(complex))
    c = (d @ op - op @ d).tocsr()
    return float(np.sqrt(np.sum(np.abs(c.data) ** 2))) if c.nnz else 0.0


def restricted_difference_norm(a: sp.csr_matrix, b: sp.csr_matrix, sizes: np.ndarray, t: int) -> float:
    """``||(a - b) restricted to inputs of size <= t||``, exact through the
    block structure of the difference."""
    d = (a - b).tocsc()[:, np.flatnonzero(sizes <= t)]
    d.eliminate_zeros()
    if d.nnz == 0:
        return 0.0
    rows = np.unique(d.indices)
    sub = d[rows, :]
    pattern = abs(sub) @ abs(sub).T
    ncomp, labels = connected_components(pattern, directed=False)
    worst = 0.0
    sub = sub.tocsr()
    for c in range(ncomp):
        rs = np.flatnonzero(labels == c)
        block = sub[rs, :]
        cols = np.unique(block.tocsc().nonzero()[1])
        dense = block[:, cols].toarray()
        worst = max(worst, float(np.linalg.norm(dense, 2)))
    return worst


@dataclass
class ModifiedCompressionReport:
    N: int
    t: int
    predicate: str
    commutator: float
    closeness: float
    scale: float

    @property
    def ratio(self) -> float:
        return self.closeness / self.scale if self.scale > 0 else 0.0


def cycle_compression_check(N: int, t: int) -> ModifiedCompressionReport:
    """Commutator with the cycle projector and closeness to the plain
    compression, maximized over inputs and both directions."""
    space = DatabaseSpace("injective", N, N, t + 1)
    pi_r = satisfied_mask(space, cycle_predicate()).astype(float)
    flip = flip_indices(space)
    fmat = sp.csr_matrix((np.ones(space.count), (flip, np.arange(space.count))), shape=(space.count,) * 2)
    comm = close = 0.0
    for x in range(N):
        plain = _reflection(pc_generator(space, x))
        mod = _reflection(cycle_generator(space, x))
        for op in (mod, (fmat @ mod @ fmat.T).tocsr()):
            comm = max(comm, commutator_norm(pi_r, op))
        close = max(close, restricted_difference_norm(plain, mod, space.sizes, t))
    return ModifiedCompressionReport(N, t, "cycle", comm, close, math.sqrt(max(t, 1) / N))


def sparsity_compression_check(p: Predicate, N: int, t: int, s_t: int | None = None) -> ModifiedCompressionReport:
    """Same for the predicate-avoiding compressions in both directions;
    closeness is scaled by ``sqrt(s_t / N)``."""
    space = DatabaseSpace("injective", N, N, t + 1)
    pi_r = satisfied_mask(space, p).astype(float)
    flip = flip_indices(space)
    fmat = sp.csr_matrix((np.ones(space.count), (flip, np.arange(space.count))), shape=(space.count,) * 2)
    s_t = brute_sparsity(p, N, t).s_t if s_t is None else s_t
    comm = close = 0.0
    for x in range(N):
        plain = _reflection(pc_generator(space, x))
        fwd = _reflection(sparsity_generator(space, p, x))
        inv = _reflection(sparsity_generator(space, p, x, inverse=True))
        comm = max(comm, commutator_norm(pi_r, fwd), commutator_norm(pi_r, (fmat @ inv @ fmat.T).tocsr()))
        close = max(
            close,
            restricted_difference_norm(plain, fwd, space.sizes, t),
            restricted_difference_norm(plain, inv, space.sizes, t),
        )
    return ModifiedCompressionReport(N, t, p.name, comm, close, math.sqrt(s_t / N))


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------


def play_real_game(
    p: Predicate,
    adv: AdversaryCircuit,
    N: int,
    l: int,
    *,
    rng: np.random.Generator | None = None,
    samples: int = 4096,
) -> float:
    """Probability that the reported list is accepted by ``p`` and every
    reported pair agrees with a uniformly random permutation."""
    if N <= EXACT_PERMUTATION_MAX:
        tables = all_permutations(N)
    elif rng is None:
        raise ValueError("N too large for enumeration; pass an rng for Monte Carlo")
    else:
        tables = np.array([rng.permutation(N) for _ in range(samples)])
    total = 0.0
    for psi, fw in batched_final_states(adv, tables):
        for xs, ys, axes, vals in _output_slices(adv, l):
            pairs = list(zip(xs, ys))
            if not p(pairs):
                continue
            ok = np.ones(len(fw), dtype=bool)
            for x, y in pairs:
                ok &= fw[:, x] == y
            sub = psi[_slice_at(psi, axes, vals)]
            total += float(np.sum(np.abs(sub.reshape(-1, len(fw))[:, ok]) ** 2))
    return total / len(tables)


def play_compressed_game(p: Predicate, adv: AdversaryCircuit, N: int) -> float:
    """``||Pi_R psi||^2`` for the final compressed-oracle state."""
    cfg = PermOracleConfig(N, max(adv.q, 1))
    psi = cp_final_state(cfg, adv)
    mask = satisfied_mask(cfg.space, p)
    return float(np.sum(np.abs(psi[..., mask]) ** 2))


@dataclass
class SearchBound:
    predicate: str
    N: int
    q: int
    l: int
    p1: float
    p2: float
    bound_rhs: float
    adv_surrogate: float

    @property
    def holds(self) -> bool:
        return math.sqrt(self.p1) <= self.bound_rhs + 1e-8

    def csv_row(self, seed: int | None = None) -> list:
        return [self.predicate, self.N, self.q, self.l, self.p1, self.p2, self.bound_rhs, seed]


CSV_HEADER = ["predicate", "N", "q", "l", "p1", "p2", "bound_rhs", "seed"]


def search_bound_check(p: Predicate, adv: AdversaryCircuit, N: int, l: int) -> SearchBound:
    """Both games and the right-hand side ``sqrt(p2) + l / sqrt(N - q - l) + adv``.

    The advantage term is measured: the gap between the real win probability
    and the decompressed check on the compressed state, plus the trace
    distance between the adversary's real and compressed views.
    """
    q = adv.q
    if N - q - l <= 0:
        raise ValueError("need N - q - l > 0")
    p1 = play_real_game(p, adv, N, l)
    p2 = play_compressed_game(p, adv, N)
    cfg = PermOracleConfig(N, max(q, 1))
    if l:
        lhs, _ = perm_fundamental_lemma_check(cfg, adv, l)
    else:
        lhs = math.sqrt(p1)
    _, rho_cp = run_cp_experiment(cfg, adv)
    td = trace_distance(run_perm_standard_experiment(cfg, adv), rho_cp)
    surrogate = abs(math.sqrt(p1) - lhs) + td
    rhs = math.sqrt(p2) + l / math.sqrt(N - q - l) + surrogate
    return SearchBound(p.name, N, q, l, p1, p2, rhs, surrogate)


def blind_guesser(N: int, x: int, y: int) -> AdversaryCircuit:
    """Zero queries; reports the fixed pair ``(x, y)``."""
    lay = query_layout(N, N, direction=True, outputs=1)
    return classical_adversary(lay, [], [(x, y)], name="blind")


def probe_adversary(N: int, xs: Sequence[int], report: Sequence[tuple] | None = None) -> AdversaryCircuit:
    """Forward classical queries on ``xs``, reporting the answers."""
    q = len(xs)
    lay = query_layout(N, N, direction=True, work=[N] * max(q - 1, 0), outputs=len(report) if report is not None else q)
    outputs = report if report is not None else [(x, ("ans", j)) for j, x in enumerate(xs)]
    return classical_adversary(lay, [(0, x) for x in xs], outputs, name="probe")


# ---------------------------------------------------------------------------
# Distinguishers
# ---------------------------------------------------------------------------


@dataclass
class DistinguisherReport:
    n: int
    rounds: int
    q: int
    accept_feistel: float
    accept_uniform: float
    advantage: float
    ci: tuple[float, float] | None
    ceiling: float | None
    view_distances: dict[str, float]
    exact: bool

    def as_dict(self) -> dict:
        return dict(vars(self))


def _xor_statistic(tabs: np.ndarray, n: int) -> np.ndarray:
    """Accept when the output left halves differ by the input left halves,
    for two queries sharing ``x_R = 0`` with left halves 0 and 1."""
    x, xp = 0 << n, 1 << n
    y, yp = tabs[:, x], tabs[:, xp]
    return ((y >> n) ^ (yp >> n)) == ((x >> n) ^ (xp >> n))


def _sample_feistel(n: int, rounds: int, rng: np.random.Generator, size: int) -> np.ndarray:
    m = 1 << n
    g = rng.integers(0, m, size=(rounds, size, m))
    xs = np.arange(m * m)
    left = np.broadcast_to(xs >> n, (size, m * m)).copy()
    right = np.broadcast_to(xs & (m - 1), (size, m * m)).copy()
    rows = np.arange(size)[:, None]
    for r in range(rounds):
        if r % 2 == 0:
            right ^= g[r][rows, left]
        else:
            left ^= g[r][rows, right]
    return (left << n) | right


def distinguisher_suite(n: int, rounds: int, q: int = 2, *, budget: int = 20_000, seed: int = 0) -> DistinguisherReport:
    """The two-query XOR statistic against ``rounds``-round Feistel.

    At ``n = 1`` everything is exact; the ceiling is the total-variation
    distance of the permutation distributions, which bounds every adversary,
    and view distances are given for a classical probe and a superposition
    probe. At ``n = 2`` acceptance rates are sampled with Wilson intervals.
    """
    if rounds not in (3, 4, 7):
        raise ValueError("rounds must be 3, 4 or 7")
    if q != 2:
        raise ValueError("the builtin statistic uses two queries")
    if n == 1:
        fe = feistel_tables(1, rounds)
        un = all_permutations(4)
        a_f = float(_xor_statistic(fe, 1).mean())
        a_u = float(_xor_statistic(un, 1).mean())
        cfg = PermOracleConfig(4, q)
        views = {}
        probes = {
            "classical": probe_adversary(4, [0, 2], report=()),
            "superposition": hadamard_adversary(query_layout(4, 4, direction=True), q),
        }
        for name, adv in probes.items():
            views[name] = trace_distance(feistel_view(adv, rounds), run_perm_standard_experiment(cfg, adv))
        return DistinguisherReport(
            n, rounds, q, a_f, a_u, abs(a_f - a_u), None, feistel_distribution_distance(rounds), views, True
        )
    if n != 2:
        raise ValueError("distinguishers run at n = 1 (exact) or n = 2 (sampled)")
    rng = np.random.default_rng(seed)
    fe = _xor_statistic(_sample_feistel(2, rounds, rng, budget), 2)
    un = _xor_statistic(rng.random((budget, 16)).argsort(axis=1), 2)
    kf, ku = int(fe.sum()), int(un.sum())
    cf = binomtest(kf, budget).proportion_ci(method="wilson")
    cu = binomtest(ku, budget).proportion_ci(method="wilson")
    a_f, a_u = kf / budget, ku / budget
    lo = max(0.0, max(cf.low - cu.high, cu.low - cf.high))
    hi = max(cf.high - cu.low, cu.high - cf.low)
    return DistinguisherReport(n, rounds, q, a_f, a_u, abs(a_f - a_u), (lo, hi), None, {}, False)


__all__ = [
    "CSV_HEADER",
    "DistinguisherReport",
    "ModifiedCompressionReport",
    "Predicate",
    "SearchBound",
    "SparsityReport",
    "SpongeParams",
    "blind_guesser",
    "brute_sparsity",
    "completions",
    "cycle_compression_check",
    "cycle_predicate",
    "distinguisher_suite",
    "dm_collision_predicate",
    "dm_zero_preimage_predicate",
    "dszs_predicate",
    "empty_predicate",
    "one_more_predicate",
    "play_compressed_game",
    "play_real_game",
    "predicate_catalog",
    "predicate_projector",
    "probe_adversary",
    "search_bound_check",
    "single_pair_predicate",
    "sparsity_compression_check",
    "sponge_eval",
    "sponge_message",
    "sponge_predicates",
]
