"""Tests for predicates, sparsity, modified compressions, games and distinguishers."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from compressed_oracles import games
from compressed_oracles.circuits import hadamard_adversary, query_layout, random_adversary
from compressed_oracles.cpo import pc_generator
from compressed_oracles.databases import DatabaseSpace, InjectiveDatabase


def injective_records(N, t):
    """Oracle enumeration of injective records with at most ``t`` pairs."""
    for k in range(t + 1):
        for dom in itertools.combinations(range(N), k):
            for im in itertools.permutations(range(N), k):
                yield list(zip(dom, im))


NAIVE_SATISFIES = {
    "dm-zero-preimage": lambda ps: any(x == y for x, y in ps),
    "dm-collision": lambda ps: any(
        a[0] != b[0] and a[1] != b[1] and a[0] ^ a[1] == b[0] ^ b[1] for a, b in itertools.combinations(ps, 2)
    ),
    "cycle": None,
}


def naive_sparsity(satisfies, N, t):
    best = 0
    for ps in injective_records(N, t):
        if satisfies(ps):
            continue
        dom = {x for x, _ in ps}
        im = {y for _, y in ps}
        for v in range(N):
            if v not in dom:
                best = max(best, sum(satisfies(ps + [(v, y)]) for y in range(N) if y not in im))
            if v not in im:
                best = max(best, sum(satisfies(ps + [(x, v)]) for x in range(N) if x not in dom))
    return best


def naive_xor_acceptance(tables):
    """Oracle: fraction of tables whose outputs on 0 and 2 differ in the left bit."""
    hits = sum(((t[0] >> 1) ^ (t[2] >> 1)) == 1 for t in tables)
    return Fraction(hits, len(tables))


def naive_feistel_tables(rounds):
    funcs = list(itertools.product(range(2), repeat=2))
    out = []
    for gs in itertools.product(funcs, repeat=rounds):
        table = []
        for x in range(4):
            left, right = x >> 1, x & 1
            for j, g in enumerate(gs):
                if j % 2 == 0:
                    right ^= g[left]
                else:
                    left ^= g[right]
            table.append(2 * left + right)
        out.append(table)
    return out


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------


class TestPredicates:
    def test_catalog_names(self):
        cat = games.predicate_catalog(16)
        assert set(cat) == {"empty", "single-pair", "one-more", "cycle", "dm-zero-preimage", "dm-collision", "dszs"}
        assert cat["dszs"].name == "dszs-2"

    def test_empty_never_satisfied(self):
        assert not games.empty_predicate().satisfied([(0, 0), (1, 1)])

    def test_cycle(self):
        p = games.cycle_predicate()
        assert p.satisfied([(2, 2)])
        assert p.satisfied([(0, 1), (1, 3), (3, 0)])
        assert not p.satisfied([(0, 1), (1, 3)])

    def test_one_more_needs_distinct_inputs(self):
        p = games.one_more_predicate(1)
        assert not p.satisfied([(0, 1)])
        assert p.satisfied([(0, 1), (2, 3)])

    @pytest.mark.parametrize("name", ["dm-zero-preimage", "dm-collision"])
    def test_satisfied_mask_matches_oracle(self, name):
        space = DatabaseSpace("injective", 4, 4, 2)
        mask = games.satisfied_mask(space, games.predicate_catalog(4)[name])
        want = [NAIVE_SATISFIES[name](list(space.database(j).pairs())) for j in range(space.count)]
        assert mask.tolist() == want

    def test_projector_is_diagonal_mask(self):
        space = DatabaseSpace("injective", 4, 4, 1)
        p = games.predicate_catalog(4)["dm-zero-preimage"]
        m = games.predicate_projector(space, p).to_dense()
        assert_allclose(np.diag(m), games.satisfied_mask(space, p).astype(float))


# ---------------------------------------------------------------------------
# Sparsity
# ---------------------------------------------------------------------------


class TestSparsity:
    @pytest.mark.parametrize("name", ["dm-zero-preimage", "dm-collision"])
    @pytest.mark.parametrize("t", [0, 1, 2])
    def test_matches_brute_force_oracle(self, name, t):
        rep = games.brute_sparsity(games.predicate_catalog(4)[name], 4, t)
        assert rep.s_t == naive_sparsity(NAIVE_SATISFIES[name], 4, t)

    def test_zero_preimage_is_one_sparse(self):
        for N in (4, 8):
            assert games.brute_sparsity(games.dm_zero_preimage_predicate(), N, 2).s_t == 1

    def test_collision_at_n4_t2_is_one(self):
        # the fresh output for a new input must avoid four distinct forbidden
        # values, which leaves at most one completion
        rep = games.brute_sparsity(games.dm_collision_predicate(), 4, 2)
        assert rep.s_t == 1
        assert rep.witness is not None

    def test_dszs_counts_aligned_outputs(self):
        # an aligned fresh input completes with every aligned fresh output
        assert games.brute_sparsity(games.dszs_predicate(1), 8, 1).s_t == 4
        assert games.brute_sparsity(games.dszs_predicate(2), 16, 1).s_t == 4

    def test_completions_forward_and_inverse(self):
        p = games.dm_zero_preimage_predicate()
        i = InjectiveDatabase.of(4, [(0, 1)])
        assert games.completions(p, i, 2) == [2]
        assert games.completions(p, i, 3, "inverse") == [3]
        assert games.completions(p, i, 0) == []


# ---------------------------------------------------------------------------
# Modified compressions
# ---------------------------------------------------------------------------


class TestModifiedCompression:
    @pytest.mark.parametrize("N,t", [(4, 1), (4, 2), (8, 1)])
    def test_cycle(self, N, t):
        rep = games.cycle_compression_check(N, t)
        assert rep.commutator <= 1e-10
        assert rep.closeness <= games.CYCLE_CLOSENESS_C * rep.scale

    @pytest.mark.parametrize("name", ["dm-zero-preimage", "dm-collision", "dszs"])
    @pytest.mark.parametrize("t", [1, 2])
    def test_sparsity_avoiding(self, name, t):
        rep = games.sparsity_compression_check(games.predicate_catalog(4)[name], 4, t)
        assert rep.commutator <= 1e-10
        assert rep.closeness <= games.SPARSITY_CLOSENESS_C * rep.scale

    def test_restricted_norm_matches_dense(self):
        # block decomposition versus one dense spectral norm
        space = DatabaseSpace("injective", 4, 4, 2)
        plain = games._reflection(pc_generator(space, 1))
        mod = games._reflection(games.cycle_generator(space, 1))
        cols = space.sizes <= 1
        dense = (plain - mod).toarray()[:, cols]
        assert_allclose(games.restricted_difference_norm(plain, mod, space.sizes, 1), np.linalg.norm(dense, 2), atol=1e-12)

    def test_commutator_norm(self):
        op = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex))
        assert_allclose(games.commutator_norm(np.array([1.0, 0.0]), op), math.sqrt(2))
        assert games.commutator_norm(np.ones(2), op) == 0.0


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------


class TestGames:
    @pytest.mark.parametrize("N", [4, 8])
    def test_blind_guess_wins_one_in_n(self, N):
        adv = games.blind_guesser(N, 1, 2)
        assert_allclose(games.play_real_game(games.single_pair_predicate(), adv, N, 1), 1 / N, atol=1e-12)
        assert games.play_compressed_game(games.single_pair_predicate(), adv, N) == 0.0

    def test_probe_reports_truth(self):
        adv = games.probe_adversary(4, [0, 3])
        assert_allclose(games.play_real_game(games.one_more_predicate(1), adv, 4, 2), 1.0, atol=1e-12)

    @pytest.mark.parametrize("N,q,seed", [(4, 1, 0), (4, 2, 1), (4, 3, 2), (8, 1, 3), (8, 2, 4)])
    def test_one_more_never_in_database(self, N, q, seed):
        adv = random_adversary(query_layout(N, N, direction=True), q, np.random.default_rng(seed))
        assert games.play_compressed_game(games.one_more_predicate(q), adv, N) == 0.0

    def test_one_more_hadamard(self):
        adv = hadamard_adversary(query_layout(4, 4, direction=True), 2)
        assert games.play_compressed_game(games.one_more_predicate(2), adv, 4) == 0.0

    @pytest.mark.parametrize("seed", range(3))
    def test_search_bound_random(self, seed):
        lay = query_layout(4, 4, direction=True, outputs=1)
        adv = random_adversary(lay, 1, np.random.default_rng(seed), output_pairs=1)
        sb = games.search_bound_check(games.single_pair_predicate(), adv, 4, 1)
        assert sb.holds
        assert len(sb.csv_row(seed)) == len(games.CSV_HEADER)

    def test_search_bound_rejects_small_n(self):
        lay = query_layout(2, 2, direction=True, outputs=1)
        adv = random_adversary(lay, 1, np.random.default_rng(0), output_pairs=1)
        with pytest.raises(ValueError):
            games.search_bound_check(games.single_pair_predicate(), adv, 2, 1)


# ---------------------------------------------------------------------------
# Sponge
# ---------------------------------------------------------------------------


class TestSponge:
    params = games.SpongeParams(1, 1, (2, 0, 3, 1))

    def test_eval_by_hand(self):
        # [1]: state 2 -> 3, rate 1. [0, 1]: 0 -> 2, absorb to 0 -> 2, rate 1
        assert games.sponge_eval(self.params, [1]) == 1
        assert games.sponge_eval(self.params, [0, 1]) == 1
        assert games.sponge_eval(self.params, [0]) == 1
        assert games.sponge_eval(self.params, [1, 1]) == 0

    def test_message_roundtrip(self):
        msg = [1, 0, 1]
        u, chain = 0, []
        for m in msg:
            x = u ^ (m << self.params.c)
            u = self.params.perm[x]
            chain.append((x, u))
        assert games.sponge_message(self.params, chain) == msg
        preds = games.sponge_predicates(self.params, self.params.rate(u))
        assert preds["preimage"].satisfied(chain)

    def test_rejects_bad_params(self):
        with pytest.raises(ValueError):
            games.SpongeParams(1, 1, (0, 0, 1, 2))
        with pytest.raises(ValueError):
            games.sponge_eval(self.params, [])

    def test_preimage_sparsity_by_hand(self):
        # record (0, 3), inverse query on 0: input 2 starts a chain, and 1 or 3
        # continue the chain through capacity 1
        preds = games.sponge_predicates(self.params, 0)
        rep = games.brute_sparsity(preds["preimage"], 4, 1)
        assert rep.s_t == 3
        i = InjectiveDatabase.of(4, [(0, 3)])
        assert games.completions(preds["preimage"], i, 0, "inverse") == [1, 2, 3]


# ---------------------------------------------------------------------------
# Distinguishers
# ---------------------------------------------------------------------------


class TestDistinguisher:
    @pytest.mark.parametrize("rounds", [3, 4, 7])
    def test_exact_acceptance_matches_oracle(self, rounds):
        rep = games.distinguisher_suite(1, rounds)
        fe = naive_xor_acceptance(naive_feistel_tables(rounds))
        un = naive_xor_acceptance(list(itertools.permutations(range(4))))
        assert un == Fraction(2, 3)
        assert_allclose(rep.accept_feistel, float(fe), atol=1e-12)
        assert_allclose(rep.advantage, float(abs(fe - un)), atol=1e-12)
        assert rep.advantage <= rep.ceiling + 1e-12

    def test_three_rounds_beats_seven_round_ceiling(self):
        three = games.distinguisher_suite(1, 3)
        seven = games.distinguisher_suite(1, 7)
        assert_allclose(three.advantage, 1 / 12, atol=1e-12)
        assert three.advantage > seven.ceiling

    def test_sampled_n2(self):
        rep = games.distinguisher_suite(2, 3, budget=20_000, seed=1)
        assert not rep.exact
        lo, hi = rep.ci
        assert lo <= rep.advantage <= hi

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            games.distinguisher_suite(1, 5)
        with pytest.raises(ValueError):
            games.distinguisher_suite(1, 3, q=3)
        with pytest.raises(ValueError):
            games.distinguisher_suite(3, 3)
