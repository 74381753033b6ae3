"""Partial functions, partial injections and permutations, and the Hilbert
spaces spanned by them.

An undefined entry is stored as the value ``n`` (one past the largest value).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np

from .qlinalg import LinearOp, RegisterLayout, SparseState

Kind = Literal["function", "injective"]
DEFAULT_CAP = 5_000_000


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Database:
    """Partial function ``[m] -> [n]``."""

    m: int
    n: int
    table: tuple[int, ...]

    def __post_init__(self) -> None:
        table = tuple(int(v) for v in self.table)
        object.__setattr__(self, "table", table)
        if len(table) != self.m:
            raise ValueError(f"table has length {len(table)}, expected {self.m}")
        if any(not 0 <= v <= self.n for v in table):
            raise ValueError("table value out of range")

    @classmethod
    def empty(cls, m: int, n: int):
        return cls(m, n, (n,) * m)

    @classmethod
    def from_pairs(cls, m: int, n: int, pairs: Iterable[tuple[int, int]]):
        table = [n] * m
        for x, y in pairs:
            if table[x] != n:
                raise ValueError(f"input {x} assigned twice")
            table[x] = y
        return cls(m, n, tuple(table))

    def __call__(self, x: int) -> int | None:
        v = self.table[x]
        return None if v == self.n else v

    @property
    def dom(self) -> tuple[int, ...]:
        return tuple(x for x, v in enumerate(self.table) if v != self.n)

    @property
    def im(self) -> tuple[int, ...]:
        return tuple(sorted({v for v in self.table if v != self.n}))

    @property
    def size(self) -> int:
        return sum(1 for v in self.table if v != self.n)

    def __len__(self) -> int:
        return self.size

    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((x, v) for x, v in enumerate(self.table) if v != self.n)

    def assign(self, x: int, y: int | None):
        if not 0 <= x < self.m:
            raise ValueError(f"input {x} out of range")
        v = self.n if y is None else int(y)
        if not 0 <= v <= self.n:
            raise ValueError(f"value {y} out of range")
        table = list(self.table)
        table[x] = v
        return type(self)(self.m, self.n, tuple(table))

    def text(self) -> str:
        return "[" + ", ".join(f"{x}→{y}" for x, y in self.pairs()) + "]"

    def __str__(self) -> str:
        return self.text()

    @classmethod
    def parse(cls, m: int, n: int, text: str):
        body = text.strip().strip("[]").strip()
        pairs = []
        if body:
            for item in body.split(","):
                x, y = item.replace("->", "→").split("→")
                pairs.append((int(x), int(y)))
        return cls.from_pairs(m, n, pairs)


@dataclass(frozen=True)
class InjectiveDatabase(Database):
    """Partial injection ``[n] -> [n]``."""

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.m != self.n:
            raise ValueError("injective databases are square")
        vals = [v for v in self.table if v != self.n]
        if len(set(vals)) != len(vals):
            raise ValueError("database is not injective")

    @classmethod
    def of(cls, n: int, pairs: Iterable[tuple[int, int]] = ()) -> "InjectiveDatabase":
        return cls.from_pairs(n, n, pairs)

    def assign(self, x: int, y: int | None):
        """Assign ``x -> y``, discarding any other input already mapped to ``y``."""
        if not 0 <= x < self.m:
            raise ValueError(f"input {x} out of range")
        table = list(self.table)
        v = self.n if y is None else int(y)
        if v != self.n:
            for x2, w in enumerate(table):
                if w == v and x2 != x:
                    table[x2] = self.n
        table[x] = v
        return InjectiveDatabase(self.m, self.n, tuple(table))

    def inverse(self) -> "InjectiveDatabase":
        table = [self.n] * self.n
        for x, y in self.pairs():
            table[y] = x
        return InjectiveDatabase(self.n, self.n, tuple(table))


def assign(d: Database, x: int, y: int | None) -> Database:
    return d.assign(x, y)


def flip(i: InjectiveDatabase) -> InjectiveDatabase:
    return i.inverse()


@dataclass(frozen=True)
class Permutation:
    n: int
    table: tuple[int, ...]

    def __post_init__(self) -> None:
        table = tuple(int(v) for v in self.table)
        object.__setattr__(self, "table", table)
        if sorted(table) != list(range(self.n)):
            raise ValueError("table is not a bijection")

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(n, tuple(range(n)))

    @classmethod
    def all(cls, n: int) -> Iterator["Permutation"]:
        for t in itertools.permutations(range(n)):
            yield cls(n, t)

    def __call__(self, x: int) -> int:
        return self.table[x]

    def inverse(self) -> "Permutation":
        inv = [0] * self.n
        for x, y in enumerate(self.table):
            inv[y] = x
        return Permutation(self.n, tuple(inv))

    def compose(self, other: "Permutation") -> "Permutation":
        """``self ∘ other``."""
        return Permutation(self.n, tuple(self.table[other.table[x]] for x in range(self.n)))

    def as_database(self) -> InjectiveDatabase:
        return InjectiveDatabase(self.n, self.n, self.table)


# ---------------------------------------------------------------------------
# Enumerated spaces
# ---------------------------------------------------------------------------


def closed_form_count(kind: Kind, m: int, n: int, t_max: int) -> int:
    if kind == "function":
        return sum(math.comb(m, t) * n**t for t in range(t_max + 1))
    return sum(math.comb(m, t) * math.comb(n, t) * math.factorial(t) for t in range(t_max + 1))


class DatabaseSpace:
    """All databases of one kind with at most ``t_max`` entries, indexed in a
    fixed order: size ascending, then domain subset, then values, both
    lexicographic."""

    def __init__(self, kind: Kind, m: int, n: int, t_max: int, cap: int = DEFAULT_CAP) -> None:
        if kind not in ("function", "injective"):
            raise ValueError(f"unknown kind {kind!r}")
        if kind == "injective" and m != n:
            raise ValueError("injective spaces require m == n")
        if not 0 <= t_max <= m:
            raise ValueError(f"t_max={t_max} out of range for m={m}")
        count = closed_form_count(kind, m, n, t_max)
        if count > cap:
            raise ValueError(f"space of {count} databases exceeds cap {cap}")
        self.kind: Kind = kind
        self.m, self.n, self.t_max = m, n, t_max
        rows = np.full((count, m), n, dtype=np.int64)
        sizes = np.zeros(count, dtype=np.int64)
        offsets = [0]
        i = 0
        for t in range(t_max + 1):
            values = list(
                itertools.product(range(n), repeat=t) if kind == "function" else itertools.permutations(range(n), t)
            )
            vals = np.array(values, dtype=np.int64).reshape(len(values), t)
            for dom in itertools.combinations(range(m), t):
                k = len(values)
                if t:
                    rows[i : i + k, list(dom)] = vals
                sizes[i : i + k] = t
                i += k
            offsets.append(i)
        assert i == count
        self.tables = rows
        self.tables.flags.writeable = False
        self.sizes = sizes
        self.offsets = tuple(offsets)
        self._int_keys = (n + 1) ** m < 2**62
        if self._int_keys:
            self._weights = (n + 1) ** np.arange(m - 1, -1, -1, dtype=np.int64)
            keys = rows @ self._weights
            self._order = np.argsort(keys, kind="stable")
            self._sorted_keys = keys[self._order]
        else:
            self._lookup = {tuple(r): j for j, r in enumerate(rows.tolist())}

    @property
    def count(self) -> int:
        return self.tables.shape[0]

    def __len__(self) -> int:
        return self.count

    def __repr__(self) -> str:
        return f"DatabaseSpace({self.kind!r}, m={self.m}, n={self.n}, t_max={self.t_max}, count={self.count})"

    def layout(self, name: str = "D") -> RegisterLayout:
        return RegisterLayout.of((name, self.count))

    def database(self, index: int) -> Database:
        cls = InjectiveDatabase if self.kind == "injective" else Database
        return cls(self.m, self.n, tuple(int(v) for v in self.tables[index]))

    def __iter__(self) -> Iterator[Database]:
        for j in range(self.count):
            yield self.database(j)

    def indices(self, tables: np.ndarray) -> np.ndarray:
        """Index of each row of ``tables``, or -1 for rows outside the space."""
        tables = np.asarray(tables, dtype=np.int64).reshape(-1, self.m)
        if self._int_keys:
            keys = tables @ self._weights
            pos = np.searchsorted(self._sorted_keys, keys)
            pos = np.minimum(pos, self.count - 1)
            hit = self._sorted_keys[pos] == keys
            return np.where(hit, self._order[pos], -1)
        return np.array([self._lookup.get(tuple(r), -1) for r in tables.tolist()], dtype=np.int64)

    def index(self, db: Database | Sequence[int]) -> int:
        table = db.table if isinstance(db, Database) else tuple(db)
        j = int(self.indices(np.array(table))[0])
        if j < 0:
            raise KeyError(f"database {table} is not in the space")
        return j

    def size_range(self, t: int) -> range:
        return range(self.offsets[t], self.offsets[t + 1])

    def assigned_indices(self, x: int, y: int | None) -> np.ndarray:
        """Index of ``D[x -> y]`` for every ``D`` (-1 where it leaves the space).

        Function-kind semantics: position ``x`` is overwritten. Injective kind
        additionally discards a conflicting input.
        """
        rows = self.tables.copy()
        v = self.n if y is None else y
        if self.kind == "injective" and v != self.n:
            rows[rows == v] = self.n
        rows[:, x] = v
        return self.indices(rows)

    def undefined_at(self, x: int) -> np.ndarray:
        return np.flatnonzero(self.tables[:, x] == self.n)


def enumerate_space(kind: Kind, m: int, n: int, t_max: int, cap: int = DEFAULT_CAP) -> DatabaseSpace:
    return DatabaseSpace(kind, m, n, t_max, cap)


# ---------------------------------------------------------------------------
# Hilbert-space constructions
# ---------------------------------------------------------------------------


def size_projector(space: DatabaseSpace, t: int, at_most: bool = False) -> LinearOp:
    if not 0 <= t <= space.t_max:
        raise ValueError(f"size {t} outside 0..{space.t_max}")
    diag = (space.sizes <= t) if at_most else (space.sizes == t)
    return LinearOp.diagonal(diag.astype(float), layout=space.layout(), name=f"Π^{'≤' if at_most else ''}{t}")


def consistency_projector(space: DatabaseSpace, x: int, y: int) -> LinearOp:
    if not (0 <= x < space.m and 0 <= y < space.n):
        raise ValueError("pair out of range")
    diag = (space.tables[:, x] == y).astype(float)
    return LinearOp.diagonal(diag, layout=space.layout(), name=f"Π[{x}→{y}]")


def completion_values(space: DatabaseSpace, base: Database) -> list[int]:
    if space.kind == "function":
        return list(range(space.n))
    used = set(base.im)
    return [y for y in range(space.n) if y not in used]


def uniform_completion_state(space: DatabaseSpace, base: Database, x: int) -> SparseState:
    """Uniform superposition of ``base[x -> y]`` over the admissible ``y``."""
    if base(x) is not None:
        raise ValueError(f"base is already defined at {x}")
    ys = completion_values(space, base)
    if not ys:
        raise ValueError("image is full; no admissible completion")
    amp = 1 / math.sqrt(len(ys))
    return SparseState(space.layout(), {space.index(base.assign(x, y)): amp for y in ys})


def block_bases(space: DatabaseSpace, x: int) -> np.ndarray:
    """For each database, the index of the same database with ``x`` undefined."""
    return space.assigned_indices(x, None)
