"""Registry of runnable experiments shared by the CLI and the test suite.

Each entry turns keyword parameters into an :class:`Outcome`. ``passed`` is
``None`` for pure measurements.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import cfo, cpo, feistel_core, games, mforacle
from .circuits import query_layout, random_adversary
from .databases import DatabaseSpace, InjectiveDatabase, closed_form_count
from .qlinalg import trace_distance
from .reporting import ExperimentReport
from .rng import stream

ENUMERATE_CAP = 200_000
MAX_BUDGET = 5_000_000


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class Outcome:
    values: dict
    passed: bool | None = None
    ci: dict = field(default_factory=dict)
    rows: list[list] | None = None
    header: list[str] | None = None
    frozen: tuple[str, ...] = ()


@dataclass(frozen=True)
class Entry:
    name: str
    kind: str
    operation: str
    anchor: str
    params: dict[str, Any]
    run: Callable[..., Outcome]
    stochastic: bool = False

    def catalog_row(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "operation": self.operation,
            "anchor": self.anchor,
            "params": self.params,
        }


REGISTRY: dict[str, Entry] = {}


def register(_name: str, _kind: str, _operation: str, _anchor: str, _stochastic: bool = False, **params: Any):
    def wrap(fn: Callable[..., Outcome]) -> Callable[..., Outcome]:
        REGISTRY[_name] = Entry(_name, _kind, _operation, _anchor, params, fn, _stochastic)
        return fn

    return wrap


def run_entry(name: str, **overrides: Any) -> tuple[Outcome, ExperimentReport]:
    entry = REGISTRY[name]
    unknown = set(overrides) - set(entry.params)
    if unknown:
        raise ValueError(f"{name} does not take {sorted(unknown)}")
    params = {**entry.params, **{k: v for k, v in overrides.items() if v is not None}}
    if entry.stochastic and params.get("seed") is None:
        raise ValueError(f"{name} is stochastic and needs a seed")
    if "budget" in params and params["budget"] is not None:
        if params["budget"] <= 0:
            raise ValueError("budget must be positive")
        if params["budget"] > MAX_BUDGET:
            raise BudgetExceeded(f"budget {params['budget']} exceeds {MAX_BUDGET}")
    start = time.perf_counter()
    out = entry.run(**params)
    ms = (time.perf_counter() - start) * 1e3
    n = params.get("n", params.get("N", params.get("M", 0)))
    report = ExperimentReport(
        name,
        int(n or 0),
        int(params.get("q", 0) or 0),
        str(params.get("dist", "none")),
        params.get("seed"),
        {**out.values, **({"passed": out.passed} if out.passed is not None else {})},
        out.ci,
        ms,
    )
    return out, report


def _perm_adv(N: int, q: int, seed: int, label: str, outputs: int = 0):
    lay = query_layout(N, N, direction=True, outputs=outputs)
    return random_adversary(lay, q, stream(seed, label), output_pairs=outputs)


def _fn_adv(M: int, N: int, q: int, seed: int, label: str, outputs: int = 0):
    lay = query_layout(M, N, outputs=outputs)
    return random_adversary(lay, q, stream(seed, label), output_pairs=outputs)


def _dist(kind: str, n: int = 1) -> mforacle.TwirlDistribution:
    return mforacle.TwirlDistribution(kind, n)


def _parse_db(text: str | None, N: int) -> InjectiveDatabase:
    if not text:
        return InjectiveDatabase.of(N)
    pairs = []
    for part in text.split(","):
        x, y = part.split(":")
        pairs.append((int(x), int(y)))
    return InjectiveDatabase.of(N, pairs)


# ---------------------------------------------------------------------------
# Compressed function oracle
# ---------------------------------------------------------------------------


@register("cfo-soundness", "verify", "cfo.run_compressed_experiment", "compressed function oracle: exact soundness", True, M=4, N=4, q=2, seed=0)
def _cfo_soundness(M, N, q, seed):
    cfg = cfo.FunctionOracleConfig(M, N, q)
    adv = _fn_adv(M, N, q, seed, "cfo-soundness")
    _, rho_c = cfo.run_compressed_experiment(cfg, adv)
    td = trace_distance(cfo.run_standard_experiment(cfg, adv), rho_c)
    return Outcome({"trace_distance": td}, td <= 1e-9)


def _outside_weight(psi: np.ndarray, sizes: np.ndarray, q: int) -> float:
    return float(np.sum(np.abs(psi[..., sizes > q]) ** 2) ** 0.5)


@register("cfo-bounded-growth", "verify", "cfo.compressed_final_state", "compressed function oracle: database growth per query", True, M=4, N=4, q=2, seed=0)
def _cfo_bounded(M, N, q, seed):
    cfg = cfo.FunctionOracleConfig(M, N, min(q + 1, M))
    psi = cfo.compressed_final_state(cfg, _fn_adv(M, N, q, seed, "cfo-bounded"))
    w = _outside_weight(psi, cfg.space.sizes, q)
    return Outcome({"outside_amplitude": w}, w <= 1e-12)


@register("cp-bounded-growth", "verify", "cpo.cp_final_state", "compressed permutation oracle: database growth per query", True, N=4, q=2, seed=0)
def _cp_bounded(N, q, seed):
    cfg = cpo.PermOracleConfig(N, min(q + 1, N))
    psi = cpo.cp_final_state(cfg, _perm_adv(N, q, seed, "cp-bounded"))
    w = _outside_weight(psi, cfg.space.sizes, q)
    return Outcome({"outside_amplitude": w}, w <= 1e-12)


@register("cfo-fundamental-lemma", "verify", "cfo.fundamental_lemma_check", "compressed function oracle: reported pairs versus database", True, M=4, N=4, q=1, l=1, seed=0)
def _cfo_fl(M, N, q, l, seed):
    cfg = cfo.FunctionOracleConfig(M, N, q)
    lhs, rhs = cfo.fundamental_lemma_check(cfg, _fn_adv(M, N, q, seed, "cfo-fl", l), l)
    return Outcome({"lhs": lhs, "rhs": rhs}, lhs <= rhs + 1e-9)


@register("cp-fundamental-lemma", "verify", "cpo.perm_fundamental_lemma_check", "compressed permutation oracle: reported pairs versus database", True, N=4, q=1, l=1, seed=0)
def _cp_fl(N, q, l, seed):
    cfg = cpo.PermOracleConfig(N, q)
    lhs, rhs = cpo.perm_fundamental_lemma_check(cfg, _perm_adv(N, q, seed, "cp-fl", l), l)
    return Outcome({"lhs": lhs, "rhs": rhs}, lhs <= rhs + 1e-9)


@register("cp-distance", "experiment", "cpo.run_cp_experiment", "compressed permutation oracle: view distance to a uniform permutation", True, N=4, q=1, seed=0)
def _cp_distance(N, q, seed):
    cfg = cpo.PermOracleConfig(N, max(q, 1))
    adv = _perm_adv(N, q, seed, "cp-distance")
    _, rho = cpo.run_cp_experiment(cfg, adv)
    td = trace_distance(cpo.run_perm_standard_experiment(cfg, adv), rho)
    return Outcome({"trace_distance": td}, frozen=("trace_distance",))


@register("restricted-compression", "experiment", "cfo.restricted_compression_distance", "restricted compression closeness", M=4, N=4, t=1)
def _restricted(M, N, t):
    cfg = cfo.FunctionOracleConfig(M, N, t + 1)
    sets = lambda D: [y for y in range(N) if y >= t]  # noqa: E731
    d = cfo.restricted_compression_distance(cfg, 0, sets, t)
    ratio = d / math.sqrt(t / N)
    return Outcome({"distance": d, "ratio": ratio}, ratio <= cfo.RESTRICTED_COMPRESSION_C, frozen=("distance",))


@register("recorded-output", "experiment", "cfo.recorded_output_worst", "compression leaves recorded outputs nearly untouched", M=4, N=4, t=1)
def _recorded(M, N, t):
    cfg = cfo.FunctionOracleConfig(M, N, t + 1)
    sets = lambda D: [y for y in range(N) if y >= t]  # noqa: E731
    w = cfo.recorded_output_worst(cfg, 0, sets)
    ratio = w * math.sqrt(N - t)
    return Outcome({"worst": w, "ratio": ratio}, ratio <= cfo.RECORDED_OUTPUT_C, frozen=("worst",))


# ---------------------------------------------------------------------------
# Feistel internals
# ---------------------------------------------------------------------------


def _all_canonical(n: int, t: int):
    for i in feistel_core.allowable_databases(n, t):
        yield from feistel_core.canonical_triples(i, n)


@register("chain-census", "verify", "feistel_core.census_row", "semi-chain census of canonical triples", n=2, t=2)
def _census(n, t):
    got = feistel_core.census_row(n, t, _all_canonical(n, t))
    want = feistel_core.census_formula(n, t)
    total = got["chains"] + got["semi2"] + got["semi1"] + got["semi0"]
    header = ["n", "t", "chains", "semi2", "semi1", "semi0"]
    row = [got[k] for k in header]
    ok = got == want and total == 1 << (2 * n)
    return Outcome({**got, "total": total}, ok, rows=[row], header=header)


@register("counting", "verify", "feistel_core.canonical_triples", "canonical triples per allowable database", True, n=1, t=1, samples=100, seed=0)
def _counting(n, t, samples, seed):
    size = 1 << (2 * n)
    want = math.comb(1 << n, t)
    if n == 1:
        dbs = list(feistel_core.allowable_databases(n, t))
    else:
        rng = stream(seed, "counting")
        dbs = []
        while len(dbs) < samples:
            dom = rng.choice(size, t, replace=False)
            im = rng.choice(size, t, replace=False)
            i = InjectiveDatabase.of(size, zip(dom.tolist(), im.tolist()))
            if feistel_core.is_allowable(i, n):
                dbs.append(i)
    counts = [len(feistel_core.canonical_triples(i, n)) for i in dbs]
    ok = bool(dbs) or t > 0
    ok = ok and all(c == want for c in counts)
    vals = {
        "checked": len(dbs),
        "expected": want,
        "falling_factorial": math.perm(1 << n, t),
        "distinct_counts": sorted(set(counts)),
    }
    return Outcome(vals, ok)


@register("canonical-decomposition", "verify", "feistel_core.canonical_decomp_sides", "canonical decompression identity", n=1)
def _canon(n):
    if n != 1:
        raise ValueError("canonical decomposition is checked at n = 1")
    space = feistel_core.TripleSpace(1, 2)
    worst, cases = 0.0, 0
    for t in (0, 1):
        for a in feistel_core.allowable_databases(1, t):
            for u in range(4):
                if a(u) is not None or not feistel_core.allows(a, u, 1):
                    continue
                lhs, rhs = feistel_core.canonical_decomp_sides(space, a, u)
                worst = max(worst, float(np.abs(lhs - rhs).max()))
                cases += 1
    return Outcome({"max_error": worst, "cases": cases}, worst <= 1e-10 and cases > 0)


@register("allowable", "enumerate", "feistel_core.allowable_databases", "allowable databases", n=1, t=1)
def _allowable(n, t):
    if math.perm(1 << (2 * n), t) * math.comb(1 << (2 * n), t) > ENUMERATE_CAP * 10:
        raise BudgetExceeded("too many databases to enumerate")
    dbs = list(feistel_core.allowable_databases(n, t))
    return Outcome({"count": len(dbs)}, rows=[[i.text()] for i in dbs], header=["database"])


@register("databases", "enumerate", "databases.DatabaseSpace", "database spaces and their sizes", kind="injective", N=4, t=2)
def _databases(kind, N, t):
    want = closed_form_count(kind, N, N, t)
    if want > ENUMERATE_CAP:
        raise BudgetExceeded(f"{want} databases exceed the enumeration cap")
    space = DatabaseSpace(kind, N, N, t)
    return Outcome({"count": space.count, "closed_form": want}, space.count == want)


# ---------------------------------------------------------------------------
# Masked Feistel
# ---------------------------------------------------------------------------


def _random_states(sysm, rng, shape):
    return rng.standard_normal(shape + (sysm.P,)) + 1j * rng.standard_normal(shape + (sysm.P,))


@register("sophisticated-orthonormality", "verify", "mforacle.MaskedFeistelSystem.soph", "sophisticated states are orthonormal", dist="uniform")
def _soph(dist):
    sysm = mforacle.system(_dist(dist))
    r = sysm.resolvable
    s = sysm.soph[:, np.flatnonzero(r)]
    gram = (s.conj().T @ s).toarray()
    err = float(np.abs(gram - np.eye(gram.shape[0])).max())
    return Outcome({"max_error": err, "states": int(r.sum())}, err <= 1e-10)


def intertwining_errors(sysm: mforacle.MaskedFeistelSystem, rng: np.random.Generator) -> dict[str, float]:
    """Worst deviation of every exact identity on random inputs."""
    v = _random_states(sysm, rng, (2,))
    inv_err = 0.0
    space = sysm.cp_cfg.space
    for j in np.flatnonzero(sysm.resolvable):
        i = space.database(j)
        inv_err = max(inv_err, float(np.abs(sysm.mff(sysm.sophisticated_state(i)) - sysm.sophisticated_state(i.inverse())).max()))
    sv = sysm.soph_project(v)
    ci, cp = sysm.intertwine(sysm.mff(sv))
    flip = max(float(np.abs(ci - sysm.flip_i(sysm._coeffs(sv))).max()), float(np.abs(cp).max()))
    query = comp = ideal = oracle = 0.0
    for x in range(sysm.N):
        sy = np.stack([sv] * sysm.N)
        ci, cp = sysm.intertwine(sysm.mfp(x, sy))
        query = max(query, float(np.abs(ci - sysm.purified_i(x, sysm._coeffs(sy))).max()), float(np.abs(cp).max()))
        e = sysm.elegant(x, v)
        ci, cp = sysm.intertwine(sysm.ideal(x, e))
        ei, ep = sysm.intertwine(e)
        comp = max(comp, float(np.abs(ci - sysm.pc_i(x, ei)).max()), float(np.abs(cp - ep).max()))
        lhs = sysm.elegant(x, sysm.ideal(x, v))
        rhs = sysm.ideal(x, sysm.indb(x, sysm.soph_project(v)))
        ideal = max(ideal, float(np.abs(lhs - rhs).max()))
        wy = _random_states(sysm, rng, (sysm.N,))
        for b in range(2):
            f = sysm.flipped_elegant(b, x, wy)
            ai, ap = sysm.intertwine(sysm.query_slice(b, x, f, "ideal"))
            fi, fp = sysm.intertwine(f)
            oracle = max(oracle, float(np.abs(ai - sysm.cp_slice(b, x, fi)).max()), float(np.abs(ap - fp).max()))
    return {
        "flip_of_state": inv_err,
        "flip": flip,
        "query": query,
        "compression": comp,
        "ideal_interchange": ideal,
        "ideal_oracle": oracle,
    }


@register("intertwining", "verify", "mforacle.build_intertwiner", "exact intertwining identities", True, dist="uniform", seed=0)
def _intertwining(dist, seed):
    errs = intertwining_errors(mforacle.system(_dist(dist)), stream(seed, "intertwining"))
    return Outcome(errs, max(errs.values()) <= 1e-10)


@register("validity-preserved", "verify", "mforacle.MaskedFeistelSystem.validity", "masked-Feistel queries keep the valid subspace", True, dist="uniform", seed=0)
def _validity(dist, seed):
    sysm = mforacle.system(_dist(dist))
    rng = stream(seed, "validity")
    v = sysm.validity(_random_states(sysm, rng, (sysm.N,)))
    worst = 0.0
    for b in range(2):
        for x in range(sysm.N):
            w = sysm.query_slice(b, x, v)
            worst = max(worst, float(np.abs(sysm.validity(w) - w).max()))
    return Outcome({"max_error": worst}, worst <= 1e-10)


@register("ideal-closeness", "experiment", "mforacle.ideal_closeness", "ideal versus real compression on the elegant subspace", dist="uniform")
def _ideal_close(dist):
    return Outcome({"norm": mforacle.ideal_closeness(mforacle.system(_dist(dist)))}, frozen=("norm",))


@register("heart-gentleness", "experiment", "mforacle.heart_gentleness", "allowability projector is gentle on sophisticated states", dist="uniform")
def _heart(dist):
    return Outcome({"norm": mforacle.heart_gentleness(mforacle.system(_dist(dist)))}, frozen=("norm",))


@register("soundness", "experiment", "mforacle.run_soundness_experiment", "masked-Feistel soundness hybrids at n = 1", True, dist="uniform", q=1, seed=0)
def _soundness(dist, q, seed):
    adv = _perm_adv(4, q, seed, "soundness")
    rep = mforacle.run_soundness_experiment(_dist(dist), adv, seed)
    v = rep.values
    ok = v["mf_view_distance"] <= 1e-9 and v["cp_distance"] <= v["hybrid_sum"] + 1e-8
    return Outcome(v, ok, frozen=("cp_distance", "feistel7_distance", "hybrid"))


@register("feistel-distance", "experiment", "mforacle.feistel_view", "r-round Feistel view distance to a uniform permutation", True, n=1, rounds=7, q=2, seed=0)
def _feistel_distance(n, rounds, q, seed):
    if n != 1:
        raise BudgetExceeded("exact Feistel views only at n = 1")
    adv = _perm_adv(4, q, seed, "feistel-distance")
    cfg = cpo.PermOracleConfig(4, max(q, 1))
    td = trace_distance(mforacle.feistel_view(adv, rounds), cpo.run_perm_standard_experiment(cfg, adv))
    ceiling = mforacle.feistel_distribution_distance(rounds)
    return Outcome({"trace_distance": td, "ceiling": ceiling}, td <= ceiling + 1e-12, frozen=("trace_distance", "ceiling"))


@register("shifted-sampler", "verify", "mforacle.shifted_distribution_exact", "shifted two-round Feistel sampler", n=1, I="")
def _shifted(n, I):
    i = _parse_db(I, 1 << (2 * n))
    got = mforacle.shifted_distribution_exact(n, i)
    want = mforacle.conditioned_distribution_exact(_dist("feistel2-pair", n), i)
    keys = set(got) | set(want)
    err = max(abs(got.get(k, 0.0) - want.get(k, 0.0)) for k in keys)
    return Outcome({"max_error": err, "support": len(keys)}, err <= 1e-12)


@register("cromulence", "cromulence", "mforacle.estimate_cromulence", "cromulence conditions of a twirl", True, dist="uniform", n=1, I="", x=0, budget=100_000, seed=0)
def _cromulence(dist, n, I, x, budget, seed):
    rep = mforacle.estimate_cromulence(_dist(dist, n), _parse_db(I, 1 << (2 * n)), x, budget=budget, seed=seed)
    vals = {k: c.value for k, c in rep.conditions.items()}
    ci = {k: c.ci for k, c in rep.conditions.items() if c.ci is not None}
    return Outcome(vals, ci=ci)


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------


def _predicate(name: str, N: int, q: int = 2) -> games.Predicate:
    cat = games.predicate_catalog(N, q)
    if name not in cat:
        raise ValueError(f"unknown predicate {name!r}; choose from {sorted(cat)}")
    return cat[name]


@register("one-more", "verify", "games.play_compressed_game", "one-more pairs never appear in the compressed database", True, N=4, q=2, seed=0)
def _one_more(N, q, seed):
    p2 = games.play_compressed_game(games.one_more_predicate(q), _perm_adv(N, q, seed, "one-more"), N)
    return Outcome({"p2": p2}, p2 == 0.0)


SPARSITY_EXPECTED = {
    "dm-zero-preimage": lambda N, t: 1,
    "dm-collision": lambda N, t: t,
}


@register("sparsity", "verify", "games.brute_sparsity", "predicate sparsity by brute force", predicate="dm-zero-preimage", N=4, t=2)
def _sparsity(predicate, N, t):
    p = _predicate(predicate, N)
    rep = games.brute_sparsity(p, N, t)
    if predicate in SPARSITY_EXPECTED:
        ok = rep.s_t == SPARSITY_EXPECTED[predicate](N, t)
    elif predicate == "dszs":
        ok = rep.s_t <= N >> (int(math.log2(N)) // 2)
    else:
        ok = None
    return Outcome(rep.as_dict(), ok, rows=[[predicate, N, t, rep.s_t]], header=["predicate", "N", "t", "s_t"])


@register("modified-compression", "verify", "games.sparsity_compression_check", "predicate-avoiding compressions commute with the predicate", predicate="cycle", N=4, t=1)
def _modified(predicate, N, t):
    if predicate == "cycle":
        rep = games.cycle_compression_check(N, t)
        c = games.CYCLE_CLOSENESS_C
    else:
        rep = games.sparsity_compression_check(_predicate(predicate, N), N, t)
        c = games.SPARSITY_CLOSENESS_C
    ok = rep.commutator <= 1e-10 and rep.closeness <= c * rep.scale + 1e-9
    return Outcome(
        {"commutator": rep.commutator, "closeness": rep.closeness, "ratio": rep.ratio}, ok, frozen=("closeness",)
    )


@register("search-bound", "verify", "games.search_bound_check", "search games: real versus compressed win probability", True, predicate="single-pair", N=4, q=1, l=1, seed=0)
def _search(predicate, N, q, l, seed):
    adv = _perm_adv(N, q, seed, "search-bound", l)
    sb = games.search_bound_check(_predicate(predicate, N, q), adv, N, l)
    return Outcome(
        {"p1": sb.p1, "p2": sb.p2, "bound_rhs": sb.bound_rhs, "adv": sb.adv_surrogate},
        sb.holds,
        rows=[sb.csv_row(seed)],
        header=games.CSV_HEADER,
    )


@register("sponge-sparsity", "experiment", "games.sponge_predicates", "sponge predicates: brute-force sparsity", True, r=1, c=1, t=1, w=0, seed=0)
def _sponge_sparsity(r, c, t, w, seed):
    perm = stream(seed, "sponge").permutation(1 << (r + c))
    params = games.SpongeParams(r, c, tuple(int(v) for v in perm))
    preds = games.sponge_predicates(params, w)
    out = {name: games.brute_sparsity(p, params.N, t).s_t for name, p in preds.items()}
    return Outcome(out, frozen=tuple(out))


@register("distinguish", "distinguish", "games.distinguisher_suite", "XOR-statistic distinguisher against r-round Feistel", True, n=1, rounds=3, q=2, budget=20_000, seed=0)
def _distinguish(n, rounds, q, budget, seed):
    rep = games.distinguisher_suite(n, rounds, q, budget=budget, seed=seed)
    vals = rep.as_dict()
    ci = {"advantage": rep.ci} if rep.ci else {}
    return Outcome(vals, ci=ci, frozen=("advantage",) if rep.exact else ())
