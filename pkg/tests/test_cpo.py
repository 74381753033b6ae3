"""Tests for the compressed permutation oracle."""

import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from compressed_oracles import cpo
from compressed_oracles.circuits import classical_adversary, query_layout, random_adversary
from compressed_oracles.databases import InjectiveDatabase
from compressed_oracles.qlinalg import DensityMatrix, trace_distance


def naive_perm_view(adv, N):
    """Oracle: explicit forward and inverse queries for every permutation."""
    lay = adv.layout
    d = lay.dim
    rho = np.zeros((d, d), dtype=complex)
    ab, ax, ay = lay.axis("B"), lay.axis("X"), lay.axis("Y")
    perms = list(itertools.permutations(range(N)))
    for p in perms:
        inv = [0] * N
        for x, y in enumerate(p):
            inv[y] = x
        psi = adv.apply_step(0, adv.initial_state())
        for k in range(1, adv.q + 1):
            out = np.zeros_like(psi)
            for b, x, y in itertools.product(range(2), range(N), range(N)):
                v = p[x] if b == 0 else inv[x]
                src = [slice(None)] * psi.ndim
                dst = [slice(None)] * psi.ndim
                src[ab] = dst[ab] = b
                src[ax] = dst[ax] = x
                src[ay], dst[ay] = y, y ^ v
                out[tuple(dst)] = psi[tuple(src)]
            psi = adv.apply_step(k, out)
        v = psi.reshape(-1)
        rho += np.outer(v, v.conj())
    return DensityMatrix(rho / len(perms))


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


class TestBuildingBlocks:
    def test_pc_is_unitary_involution(self):
        cfg = cpo.PermOracleConfig(4, 2)
        for x in range(4):
            m = cpo.build_pc_x(cfg, x).to_dense()
            assert_allclose(m @ m, np.eye(m.shape[0]), atol=1e-12)

    def test_pc_fresh_outputs_only(self):
        cfg = cpo.PermOracleConfig(4, 2)
        space = cfg.space
        base = InjectiveDatabase.of(4, [(0, 1)])
        col = cpo.build_pc_x(cfg, 2).to_dense()[:, space.index(base)]
        support = {space.database(j) for j in np.flatnonzero(np.abs(col) > 1e-12)}
        assert support == {InjectiveDatabase.of(4, [(0, 1), (2, y)]) for y in (0, 2, 3)}

    def test_flip_is_inverse(self):
        cfg = cpo.PermOracleConfig(4, 3)
        space = cfg.space
        flip = cpo.flip_indices(space)
        for j in range(space.count):
            assert space.database(flip[j]) == space.database(j).inverse()

    def test_cp_unitary(self):
        cfg = cpo.PermOracleConfig(2, 2)
        m = cpo.build_cp(cfg).to_dense()
        assert_allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=1e-12)


# ---------------------------------------------------------------------------
# Views
# ---------------------------------------------------------------------------


class TestViews:
    def test_standard_view_matches_naive_oracle(self):
        adv = random_adversary(query_layout(4, 4, direction=True), 2, np.random.default_rng(3))
        cfg = cpo.PermOracleConfig(4, 2)
        assert trace_distance(cpo.run_perm_standard_experiment(cfg, adv), naive_perm_view(adv, 4)) <= 1e-12

    @pytest.mark.parametrize("queries", [[(0, 2)], [(1, 3)], [(0, 1), (0, 1)], [(1, 2), (1, 2)]])
    def test_classical_queries_without_fresh_points_are_exact(self, queries):
        lay = query_layout(4, 4, direction=True, work=[4] * (len(queries) - 1))
        adv = classical_adversary(lay, queries)
        _, rho = cpo.run_cp_experiment(cpo.PermOracleConfig(4, len(queries)), adv)
        assert trace_distance(rho, naive_perm_view(adv, 4)) <= 1e-12

    @pytest.mark.parametrize("N", [4, 8])
    def test_two_fresh_classical_queries_collide(self, N):
        # hand derivation: the recompressed first entry leaves amplitude 1/sqrt(N)
        # on the empty database and -1/N on each wrong value, so the second
        # answer repeats the first with probability 2 / N^2
        lay = query_layout(N, N, direction=True, work=[N])
        adv = classical_adversary(lay, [(0, 0), (0, 1)])
        _, rho = cpo.run_cp_experiment(cpo.PermOracleConfig(N, 2), adv)
        probs = np.diag(rho.matrix).real.reshape(lay.dims)
        collide = sum(probs[:, :, y, y].sum() for y in range(N))
        assert_allclose(collide, 2 / N**2, atol=1e-12)

    def test_superposition_queries_are_not_exact(self):
        adv = random_adversary(query_layout(4, 4, direction=True), 1, np.random.default_rng(0))
        cfg = cpo.PermOracleConfig(4, 1)
        _, rho = cpo.run_cp_experiment(cfg, adv)
        assert trace_distance(rho, cpo.run_perm_standard_experiment(cfg, adv)) > 1e-3

    @pytest.mark.parametrize("N,q", [(4, 1), (4, 2), (4, 3), (8, 1), (8, 2)])
    def test_database_grows_by_at_most_one(self, N, q):
        cfg = cpo.PermOracleConfig(N, min(q + 1, N))
        adv = random_adversary(query_layout(N, N, direction=True), q, np.random.default_rng(q))
        psi = cpo.cp_final_state(cfg, adv)
        assert np.sum(np.abs(psi[..., cfg.space.sizes > q]) ** 2) <= 1e-24
        assert_allclose(np.linalg.norm(psi), 1.0)


# ---------------------------------------------------------------------------
# Reported pairs
# ---------------------------------------------------------------------------


class TestFundamentalLemma:
    def test_honest_classical_report(self):
        lay = query_layout(4, 4, direction=True, outputs=1)
        adv = classical_adversary(lay, [(0, 1)], [(1, ("ans", 0))])
        cfg = cpo.PermOracleConfig(4, 1)
        assert_allclose(cpo.perm_real_success_probability(cfg, adv, 1), 1.0, atol=1e-12)
        lhs, rhs = cpo.perm_fundamental_lemma_check(cfg, adv, 1)
        assert_allclose(lhs, 1.0, atol=1e-12)
        assert lhs <= rhs

    @pytest.mark.parametrize("seed", range(5))
    def test_inequality_random(self, seed):
        lay = query_layout(4, 4, direction=True, outputs=1)
        adv = random_adversary(lay, 1, np.random.default_rng(seed), output_pairs=1)
        lhs, rhs = cpo.perm_fundamental_lemma_check(cpo.PermOracleConfig(4, 1), adv, 1)
        assert lhs <= rhs + 1e-9

    def test_rejects_exhausted_outputs(self):
        lay = query_layout(2, 2, direction=True, outputs=1)
        adv = random_adversary(lay, 1, np.random.default_rng(0), output_pairs=1)
        with pytest.raises(ValueError):
            cpo.perm_fundamental_lemma_check(cpo.PermOracleConfig(2, 1), adv, 1)
