"""Tests for twirl distributions, cromulence estimates and the masked-Feistel system."""

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from compressed_oracles import feistel_core as fc
from compressed_oracles import mforacle as mf
from compressed_oracles.circuits import classical_adversary, query_layout
from compressed_oracles.cpo import PermOracleConfig, run_perm_standard_experiment
from compressed_oracles.databases import InjectiveDatabase
from compressed_oracles.experiments import intertwining_errors
from compressed_oracles.qlinalg import trace_distance


def naive_feistel_counts(rounds):
    """Oracle: tally n = 1 Feistel permutations over all round functions."""
    funcs = list(itertools.product(range(2), repeat=2))
    tally = Counter()
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
        tally[tuple(table)] += 1
    return tally


def naive_distance(rounds):
    tally = naive_feistel_counts(rounds)
    total = sum(tally.values())
    u = Fraction(1, 24)
    return sum(abs(Fraction(tally.get(p, 0), total) - u) for p in itertools.permutations(range(4))) / 2


def naive_conditions(pairs_weights, i, x, y, y2, l, n):
    """Oracle: cromulence ratios through the scalar allowability routines."""
    res = rx = marg = joint = 0.0
    for (pi, om), w in pairs_weights:
        a = mf.star_action(pi, i, om)
        if not fc.is_allowable(a, n):
            continue
        res += w
        if not fc.allows(a, pi[x], n):
            continue
        rx += w
        om_inv = [0] * len(om)
        for s, v in enumerate(om):
            om_inv[v] = s
        hit = om_inv[y] >> n == l
        marg += w * hit
        joint += w * (hit and om_inv[y2] >> n == l)
    if rx == 0:
        return rx / res, None, None
    return rx / res, marg / rx, joint / rx


def uniform_pairs():
    perms = list(itertools.permutations(range(4)))
    w = 1 / len(perms) ** 2
    return [((p, o), w) for p in perms for o in perms]


# ---------------------------------------------------------------------------
# Feistel distribution distances
# ---------------------------------------------------------------------------


class TestFeistelDistances:
    @pytest.mark.parametrize("rounds,want", [(3, Fraction(1, 6)), (4, Fraction(1, 12)), (5, Fraction(1, 24))])
    def test_matches_hand_tally(self, rounds, want):
        assert naive_distance(rounds) == want
        assert_allclose(mf.feistel_distribution_distance(rounds), float(want), atol=1e-12)

    def test_seven_rounds(self):
        assert_allclose(mf.feistel_distribution_distance(7), float(naive_distance(7)), atol=1e-12)
        assert mf.feistel_distribution_distance(7) < 0.011

    def test_view_distance_below_ceiling(self):
        adv = classical_adversary(query_layout(4, 4, direction=True), [(0, 0)])
        ref = run_perm_standard_experiment(PermOracleConfig(4, 1), adv)
        for r in (3, 5):
            assert trace_distance(mf.feistel_view(adv, r), ref) <= mf.feistel_distribution_distance(r) + 1e-12


# ---------------------------------------------------------------------------
# Twirl distributions
# ---------------------------------------------------------------------------


class TestTwirlDistribution:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            mf.TwirlDistribution("other", 1)

    def test_support_sizes(self):
        assert mf.TwirlDistribution.uniform(1).support_size() == 576
        # sixteen distinct two-round tables at n = 1
        assert mf.TwirlDistribution.feistel2_pair(1).support_size() == 256

    def test_exact_weights_sum_to_one(self):
        for d in (mf.TwirlDistribution.uniform(1), mf.TwirlDistribution.feistel2_pair(1)):
            _, _, w = d.exact()
            assert_allclose(w.sum(), 1.0)

    def test_sampled_marginal_matches_exact(self):
        d = mf.TwirlDistribution.feistel2_pair(1)
        pi, _ = d.sample(np.random.default_rng(0), 40_000)
        p_exact, _, w = d.exact()
        want = np.array([w[p_exact[:, 0] == v].sum() for v in range(4)])
        got = np.bincount(pi[:, 0], minlength=4) / len(pi)
        assert_allclose(got, want, atol=4 * math.sqrt(0.25 / 40_000))

    def test_feistel2_pair_is_flip_invariant(self):
        # (pi, omega) and (omega^-1, pi^-1) carry the same weight
        pi, om, w = mf.TwirlDistribution.feistel2_pair(1).exact()
        inv = lambda t: tuple(int(v) for v in np.argsort(t))  # noqa: E731
        weights = {(tuple(a), tuple(b)): c for a, b, c in zip(pi.tolist(), om.tolist(), w)}
        for (a, b), c in weights.items():
            assert weights[(inv(b), inv(a))] == pytest.approx(c, abs=1e-15)

    def test_feistel2_batch_matches_rounds(self):
        rng = np.random.default_rng(1)
        g = rng.integers(0, 4, size=(2, 5, 4))
        got = mf.feistel2_batch(g[0], g[1], 2)
        for j in range(5):
            assert got[j].tolist() == fc.feistel_table([g[0, j], g[1, j]], 2).tolist()


# ---------------------------------------------------------------------------
# Cromulence
# ---------------------------------------------------------------------------


class TestCromulence:
    @pytest.mark.parametrize("pairs,x", [([], 0), ([(0, 0)], 1), ([(1, 3)], 2), ([(0, 1)], 3)])
    def test_uniform_matches_scalar_oracle(self, pairs, x):
        i = InjectiveDatabase.of(4, pairs)
        rep = mf.estimate_cromulence(mf.TwirlDistribution.uniform(1), i, x)
        want = naive_conditions(uniform_pairs(), i, x, rep.y, rep.y2, rep.l, 1)
        got = [rep.conditions[k].value for k in ("allows_query", "left_marginal", "left_joint")]
        for g, w in zip(got, want):
            assert (g is None) == (w is None)
            if w is not None:
                assert_allclose(g, w, atol=1e-12)

    def test_uniform_left_marginal_is_one_half(self):
        rep = mf.estimate_cromulence(mf.TwirlDistribution.uniform(1), InjectiveDatabase.of(4), 0)
        assert rep.conditions["left_marginal"].value == pytest.approx(0.5, abs=1e-15)
        # two of four outputs share a left half: (2/4)(1/3)
        assert rep.conditions["left_joint"].value == pytest.approx(1 / 6, abs=1e-15)

    def test_feistel2_joint_is_one_quarter(self):
        rep = mf.estimate_cromulence(mf.TwirlDistribution.feistel2_pair(1), InjectiveDatabase.of(4), 0)
        assert rep.conditions["left_joint"].value == pytest.approx(0.25, abs=1e-15)

    def test_sampled_feistel2_n2(self):
        i = InjectiveDatabase.of(16, [(1, 2)])
        rep = mf.estimate_cromulence(mf.TwirlDistribution.feistel2_pair(2), i, 0, budget=20_000, seed=3)
        c = rep.conditions["left_marginal"]
        assert not c.exact
        assert abs(c.value - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / c.samples)
        assert c.ci[0] <= c.value <= c.ci[1]

    def test_empty_conditional_reports_none(self):
        # no twirl pair lets x = 0 join a record holding (1, 2)
        rep = mf.estimate_cromulence(mf.TwirlDistribution.uniform(1), InjectiveDatabase.of(4, [(1, 2)]), 0)
        assert rep.conditions["allows_query"].value == 0.0
        assert rep.conditions["left_marginal"].value is None

    def test_rejects_bad_inputs(self):
        d = mf.TwirlDistribution.uniform(1)
        with pytest.raises(ValueError):
            mf.estimate_cromulence(d, InjectiveDatabase.of(4, [(0, 1)]), 0)
        with pytest.raises(ValueError):
            mf.estimate_cromulence(d, InjectiveDatabase.of(16), 0)
        with pytest.raises(ValueError):
            mf.estimate_cromulence(d, InjectiveDatabase.of(4), 1, y=2, y2=2)


# ---------------------------------------------------------------------------
# Shifted sampler
# ---------------------------------------------------------------------------


class TestShiftedSampler:
    @pytest.mark.parametrize("pairs", [[], [(0, 0)], [(2, 1)]])
    def test_exact_matches_conditioned_twirl(self, pairs):
        i = InjectiveDatabase.of(4, pairs)
        got = mf.shifted_distribution_exact(1, i)
        want = mf.conditioned_distribution_exact(mf.TwirlDistribution.feistel2_pair(1), i)
        keys = set(got) | set(want)
        assert max(abs(got.get(k, 0.0) - want.get(k, 0.0)) for k in keys) <= 1e-12

    def test_samples_follow_exact_distribution(self):
        i = InjectiveDatabase.of(4, [(0, 0)])
        exact = mf.shifted_distribution_exact(1, i)
        rng = np.random.default_rng(5)
        draws = 20_000
        first = Counter(mf.shifted_sample(1, i, rng)[0][1] for _ in range(draws))
        for v in range(4):
            p = sum(w for (pi, _), w in exact.items() if pi[1] == v)
            assert abs(first[v] / draws - p) <= 4 * math.sqrt(p * (1 - p) / draws) + 1e-12


# ---------------------------------------------------------------------------
# Purified system at n = 1
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module", params=["uniform", "feistel2-pair"])
def sysm(request):
    return mf.system(mf.TwirlDistribution(request.param, 1))


class TestSystem:
    def test_purification_size(self, sysm):
        assert sysm.P == 419_904

    def test_sophisticated_states_orthonormal(self, sysm):
        s = sysm.soph[:, np.flatnonzero(sysm.resolvable)]
        gram = (s.conj().T @ s).toarray()
        assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-10)

    def test_empty_record_is_resolvable(self, sysm):
        assert sysm.resolvable[0]
        assert_allclose(np.linalg.norm(sysm.initial_purification()), 1.0)

    def test_intertwining_identities(self, sysm):
        errs = intertwining_errors(sysm, np.random.default_rng(0))
        for name, err in errs.items():
            assert err <= 1e-10, name

    def test_queries_keep_validity(self, sysm):
        rng = np.random.default_rng(1)
        v = rng.standard_normal((sysm.N, sysm.P)) + 0j
        v = sysm.validity(v)
        for b, x in itertools.product(range(2), range(sysm.N)):
            w = sysm.query_slice(b, x, v)
            assert_allclose(sysm.validity(w), w, atol=1e-10)

    def test_flip_is_an_involution(self, sysm):
        perm = sysm.flip_perm
        assert np.array_equal(perm[perm], np.arange(sysm.P))


class TestSoundness:
    def test_classical_query_is_exact(self):
        adv = classical_adversary(query_layout(4, 4, direction=True), [(0, 2)])
        rep = mf.run_soundness_experiment(mf.TwirlDistribution.uniform(1), adv)
        assert rep.values["mf_view_distance"] <= 1e-9
        assert rep.values["cp_distance"] <= 1e-9

    def test_rejects_function_layout(self):
        adv = classical_adversary(query_layout(4, 4), [(0, 2)])
        with pytest.raises(ValueError):
            mf.run_soundness_experiment(mf.TwirlDistribution.uniform(1), adv)
