"""Tests for the compressed function oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from compressed_oracles import cfo
from compressed_oracles.circuits import classical_adversary, hadamard_adversary, query_layout, random_adversary
from compressed_oracles.qlinalg import DensityMatrix, trace_distance


def naive_standard_view(adv, M, N):
    """Oracle: explicit query matrices, one function at a time."""
    lay = adv.layout
    d = lay.dim
    rho = np.zeros((d, d), dtype=complex)
    ax, ay = lay.axis("X"), lay.axis("Y")
    tables = np.array(np.meshgrid(*[np.arange(N)] * M, indexing="ij")).reshape(M, -1).T
    for f in tables:
        psi = adv.initial_state()
        psi = adv.apply_step(0, psi)
        for k in range(1, adv.q + 1):
            out = np.zeros_like(psi)
            for x in range(M):
                for y in range(N):
                    src = [slice(None)] * psi.ndim
                    dst = [slice(None)] * psi.ndim
                    src[ax] = dst[ax] = x
                    src[ay], dst[ay] = y, y ^ f[x]
                    out[tuple(dst)] = psi[tuple(src)]
            psi = adv.apply_step(k, out)
        v = psi.reshape(-1)
        rho += np.outer(v, v.conj())
    return DensityMatrix(rho / len(tables))


# ---------------------------------------------------------------------------
# Configuration and building blocks
# ---------------------------------------------------------------------------


class TestConfig:
    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError):
            cfo.FunctionOracleConfig(4, 3, 1)

    def test_cap_clamps(self):
        assert cfo.FunctionOracleConfig(2, 4, 1).with_cap(5).t_max == 2

    def test_xor_values(self):
        arr = np.arange(8.0).reshape(4, 2)
        out = cfo.xor_values(arr, np.array([1, 3]))
        assert_allclose(out[:, 0], arr[[1, 0, 3, 2], 0])
        assert_allclose(out[:, 1], arr[[3, 2, 1, 0], 1])


class TestCompression:
    def test_fc_is_unitary_involution(self):
        cfg = cfo.FunctionOracleConfig(3, 2, 3)
        for x in range(3):
            m = cfo.build_fc(cfg, x).to_dense()
            assert_allclose(m @ m, np.eye(m.shape[0]), atol=1e-12)
            assert_allclose(m, m.conj().T, atol=1e-12)

    def test_fc_maps_empty_to_uniform(self):
        cfg = cfo.FunctionOracleConfig(2, 4, 2)
        m = cfo.build_fc(cfg, 0).to_dense()
        col = m[:, 0]
        ones = [cfg.space.index(cfg.space.database(0).assign(0, y)) for y in range(4)]
        assert_allclose(np.abs(col[ones]), 0.5, atol=1e-12)
        assert_allclose(np.linalg.norm(col), 1.0)

    def test_cf_unitary(self):
        cfg = cfo.FunctionOracleConfig(2, 2, 2)
        m = cfo.build_cf(cfg).to_dense()
        assert_allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=1e-12)


# ---------------------------------------------------------------------------
# Soundness and growth
# ---------------------------------------------------------------------------


class TestSoundness:
    def test_standard_view_matches_naive_oracle(self):
        adv = random_adversary(query_layout(2, 4), 2, np.random.default_rng(11))
        cfg = cfo.FunctionOracleConfig(2, 4, 2)
        assert trace_distance(cfo.run_standard_experiment(cfg, adv), naive_standard_view(adv, 2, 4)) <= 1e-12

    @pytest.mark.parametrize("seed", range(4))
    def test_compressed_view_matches_standard(self, seed):
        cfg = cfo.FunctionOracleConfig(4, 4, 2)
        adv = random_adversary(query_layout(4, 4), 2, np.random.default_rng(seed))
        _, rho = cfo.run_compressed_experiment(cfg, adv)
        assert trace_distance(rho, cfo.run_standard_experiment(cfg, adv)) <= 1e-9

    def test_hadamard_adversary(self):
        cfg = cfo.FunctionOracleConfig(2, 2, 1)
        adv = hadamard_adversary(query_layout(2, 2), 1)
        _, rho = cfo.run_compressed_experiment(cfg, adv)
        assert trace_distance(rho, naive_standard_view(adv, 2, 2)) <= 1e-12

    def test_cap_below_query_count_rejected(self):
        cfg = cfo.FunctionOracleConfig(2, 2, 1)
        adv = random_adversary(query_layout(2, 2), 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            cfo.compressed_final_state(cfg, adv)

    @pytest.mark.parametrize("q", [1, 2, 3])
    def test_database_grows_by_at_most_one(self, q):
        cfg = cfo.FunctionOracleConfig(4, 4, 4)
        psi = cfo.compressed_final_state(cfg, random_adversary(query_layout(4, 4), q, np.random.default_rng(q)))
        assert np.sum(np.abs(psi[..., cfg.space.sizes > q]) ** 2) <= 1e-24

    def test_validity_preserved(self):
        cfg = cfo.FunctionOracleConfig(3, 2, 2)
        adv = random_adversary(query_layout(3, 2), 2, np.random.default_rng(5))
        assert cfo.check_validity_preserved(cfg, adv)


# ---------------------------------------------------------------------------
# Reported pairs
# ---------------------------------------------------------------------------


class TestFundamentalLemma:
    def test_blind_guess_is_tight(self):
        # no queries, report (0, 0): both sides equal 1/sqrt(N)
        lay = query_layout(4, 4, outputs=1)
        adv = classical_adversary(lay, [], [(0, 0)])
        cfg = cfo.FunctionOracleConfig(4, 4, 1)
        lhs, rhs = cfo.fundamental_lemma_check(cfg, adv, 1)
        assert_allclose(lhs, 0.5, atol=1e-12)
        assert_allclose(rhs, 0.5, atol=1e-12)
        assert_allclose(cfo.real_success_probability(cfg, adv, 1), 0.25, atol=1e-12)

    def test_honest_query_always_wins(self):
        lay = query_layout(4, 4, outputs=1)
        adv = classical_adversary(lay, [(0, 2)], [(2, ("ans", 0))])
        cfg = cfo.FunctionOracleConfig(4, 4, 1)
        assert_allclose(cfo.real_success_probability(cfg, adv, 1), 1.0, atol=1e-12)
        lhs, rhs = cfo.fundamental_lemma_check(cfg, adv, 1)
        assert lhs <= rhs + 1e-9
        assert_allclose(lhs, 1.0, atol=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 2))
    def test_inequality_random(self, seed, l):
        lay = query_layout(4, 4, outputs=l)
        adv = random_adversary(lay, 1, np.random.default_rng(seed), output_pairs=l)
        cfg = cfo.FunctionOracleConfig(4, 4, 1)
        lhs, rhs = cfo.fundamental_lemma_check(cfg, adv, l)
        assert lhs <= rhs + 1e-9
        # the decompressed check is the real success amplitude
        assert_allclose(lhs**2, cfo.real_success_probability(cfg, adv, l), atol=1e-10)


# ---------------------------------------------------------------------------
# Restricted compression
# ---------------------------------------------------------------------------


class TestRestrictedCompression:
    @pytest.mark.parametrize("N,t", [(4, 1), (8, 1), (8, 2), (16, 2)])
    def test_recorded_output_worst_closed_form(self, N, t):
        cfg = cfo.FunctionOracleConfig(4, N, t + 1)
        w = cfo.recorded_output_worst(cfg, 0, lambda D: range(t, N))
        assert_allclose(w, math.sqrt(2 / (N - t)), rtol=1e-9)
        assert w * math.sqrt(N - t) <= cfo.RECORDED_OUTPUT_C

    @pytest.mark.parametrize("N,t", [(4, 1), (4, 2), (8, 1), (8, 2), (16, 1)])
    def test_distance_within_constant(self, N, t):
        cfg = cfo.FunctionOracleConfig(4, N, t + 1)
        d = cfo.restricted_compression_distance(cfg, 0, lambda D: range(t, N), t)
        assert d <= cfo.RESTRICTED_COMPRESSION_C * math.sqrt(t / N)

    def test_no_restriction_is_exact(self):
        cfg = cfo.FunctionOracleConfig(3, 4, 2)
        assert cfo.restricted_compression_distance(cfg, 0, lambda D: range(4), 1) <= 1e-12
