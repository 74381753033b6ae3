"""Tests for the experiment registry."""

import importlib

import pytest

from compressed_oracles import experiments as ex


class TestRegistry:
    def test_size_and_kinds(self):
        assert len(ex.REGISTRY) >= 20
        kinds = {e.kind for e in ex.REGISTRY.values()}
        assert kinds == {"verify", "experiment", "enumerate", "cromulence", "distinguish"}

    @pytest.mark.parametrize("name", sorted(ex.REGISTRY))
    def test_operation_resolves(self, name):
        mod, *attrs = ex.REGISTRY[name].operation.split(".")
        obj = importlib.import_module(f"compressed_oracles.{mod}")
        for a in attrs:
            obj = getattr(obj, a)
        assert obj is not None

    def test_catalog_row(self):
        row = ex.REGISTRY["cfo-soundness"].catalog_row()
        assert row["params"] == {"M": 4, "N": 4, "q": 2, "seed": 0}


class TestRunEntry:
    def test_cfo_soundness(self):
        out, rep = ex.run_entry("cfo-soundness", seed=3)
        assert out.passed
        assert rep.seed == 3 and rep.q == 2

    def test_rejects_unknown_param(self):
        with pytest.raises(ValueError):
            ex.run_entry("cfo-soundness", rounds=3)

    def test_budget_limits(self):
        with pytest.raises(ValueError):
            ex.run_entry("distinguish", budget=0)
        with pytest.raises(ex.BudgetExceeded):
            ex.run_entry("distinguish", budget=ex.MAX_BUDGET + 1)

    def test_enumeration_cap(self):
        with pytest.raises(ex.BudgetExceeded):
            ex.run_entry("databases", kind="injective", N=16, t=8)

    def test_parse_db(self):
        assert ex._parse_db("1:2,3:0", 4).pairs() == ((1, 2), (3, 0))
        assert ex._parse_db("", 4).size == 0

    def test_counting_reports_falling_factorial(self):
        out, _ = ex.run_entry("counting", n=1, t=1)
        assert out.passed
        assert out.values["falling_factorial"] == 2
