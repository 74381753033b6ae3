"""Query adversaries given as explicit unitaries on small registers.

An adversary layout always holds a query input register ``X`` and an output
register ``Y``; permutation adversaries also carry a direction bit ``B``.
Workspace registers follow. When the adversary reports ``l`` input-output
pairs, the last ``2l`` registers are ``OX1, OY1, ..., OXl, OYl``.
States are ndarrays whose leading axes follow the layout; any trailing axes
(purification register, batch of oracles) are untouched by adversary gates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .qlinalg import RegisterLayout, apply_on_axes, random_unitary

UNITARY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Gate:
    matrix: np.ndarray
    targets: tuple[str, ...]

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("gate matrix must be square")
        if np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) > UNITARY_TOL:
            raise ValueError("gate is not unitary")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "targets", tuple(self.targets))


@dataclass(frozen=True, eq=False)
class AdversaryCircuit:
    """Unitaries ``A_0 .. A_q``, each a list of gates, interleaved with queries."""

    layout: RegisterLayout
    steps: tuple[tuple[Gate, ...], ...]
    initial: tuple[int, ...] | None = None
    output_pairs: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("an adversary needs at least A_0")
        object.__setattr__(self, "steps", tuple(tuple(s) for s in self.steps))
        for step in self.steps:
            for g in step:
                dims = [self.layout.cardinality(t) for t in g.targets]
                if int(np.prod(dims)) != g.matrix.shape[0]:
                    raise ValueError(f"gate on {g.targets} has wrong dimension")
        if self.output_pairs:
            names = self.layout.names[-2 * self.output_pairs :]
            want = tuple(n for i in range(1, self.output_pairs + 1) for n in (f"OX{i}", f"OY{i}"))
            if names != want:
                raise ValueError(f"output registers must be the last {2 * self.output_pairs} registers {want}")

    @property
    def q(self) -> int:
        return len(self.steps) - 1

    @property
    def has_direction(self) -> bool:
        return "B" in self.layout.names

    def initial_state(self, extra: Sequence[int] = ()) -> np.ndarray:
        psi = np.zeros(self.layout.dims + tuple(extra), dtype=complex)
        idx = self.initial or (0,) * len(self.layout.dims)
        psi[tuple(idx) + (0,) * len(extra)] = 1
        return psi

    def apply_step(self, k: int, psi: np.ndarray) -> np.ndarray:
        for g in self.steps[k]:
            psi = apply_on_axes(g.matrix, psi, [self.layout.axis(t) for t in g.targets])
        return psi

    def output_axes(self) -> list[tuple[int, int]]:
        return [
            (self.layout.axis(f"OX{i}"), self.layout.axis(f"OY{i}")) for i in range(1, self.output_pairs + 1)
        ]


# ---------------------------------------------------------------------------
# Layouts and gate builders
# ---------------------------------------------------------------------------


def query_layout(
    M: int,
    N: int,
    *,
    direction: bool = False,
    work: Sequence[int] = (),
    outputs: int = 0,
) -> RegisterLayout:
    regs: list[tuple[str, int]] = []
    if direction:
        regs.append(("B", 2))
    regs += [("X", M), ("Y", N)]
    regs += [(f"W{i + 1}", d) for i, d in enumerate(work)]
    for i in range(1, outputs + 1):
        regs += [(f"OX{i}", M), (f"OY{i}", N)]
    return RegisterLayout(tuple(regs))


def permutation_gate(
    layout: RegisterLayout, targets: Sequence[str], fn: Callable[..., tuple[int, ...]]
) -> Gate:
    """Gate for a classical reversible map on the target registers."""
    dims = [layout.cardinality(t) for t in targets]
    d = int(np.prod(dims))
    m = np.zeros((d, d))
    for i in range(d):
        vals = np.unravel_index(i, dims)
        out = fn(*[int(v) for v in vals])
        m[np.ravel_multi_index(out, dims), i] = 1
    return Gate(m, tuple(targets))


def xor_const_gate(layout: RegisterLayout, target: str, c: int) -> Gate:
    return permutation_gate(layout, [target], lambda v: (v ^ c,))


def xor_copy_gate(layout: RegisterLayout, src: str, dst: str) -> Gate:
    return permutation_gate(layout, [src, dst], lambda a, b: (a, b ^ a))


def swap_gate(layout: RegisterLayout, a: str, b: str) -> Gate:
    return permutation_gate(layout, [a, b], lambda u, v: (v, u))


def hadamard_matrix(d: int) -> np.ndarray:
    if d & (d - 1):
        raise ValueError("Walsh-Hadamard needs a power-of-two dimension")
    idx = np.arange(d)
    par = np.vectorize(lambda v: bin(v).count("1") & 1)(idx[:, None] & idx[None, :])
    return (1 - 2 * par) / np.sqrt(d)


# ---------------------------------------------------------------------------
# Adversary generators
# ---------------------------------------------------------------------------


def random_adversary(
    layout: RegisterLayout,
    q: int,
    rng: np.random.Generator,
    *,
    targets: Sequence[str] | None = None,
    output_pairs: int = 0,
    copy_outputs: bool = True,
    name: str = "random",
) -> AdversaryCircuit:
    """Haar-random unitary on ``targets`` before and after every query.

    With output pairs, the final step also XOR-copies ``X`` and ``Y`` into
    every output pair.
    """
    out_names = set(layout.names[len(layout.names) - 2 * output_pairs :]) if output_pairs else set()
    if targets is None:
        targets = [n for n in layout.names if n not in out_names]
    dim = int(np.prod([layout.cardinality(t) for t in targets]))
    steps = []
    for k in range(q + 1):
        step = [Gate(random_unitary(dim, rng), tuple(targets))]
        steps.append(step)
    if output_pairs and copy_outputs:
        for i in range(1, output_pairs + 1):
            steps[-1].append(xor_copy_gate(layout, "X", f"OX{i}"))
            steps[-1].append(xor_copy_gate(layout, "Y", f"OY{i}"))
    return AdversaryCircuit(layout, tuple(tuple(s) for s in steps), output_pairs=output_pairs, name=name)


def hadamard_adversary(layout: RegisterLayout, q: int, name: str = "hadamard") -> AdversaryCircuit:
    """Uniform superposition queries with Walsh-Hadamard on ``X`` and ``Y``."""
    hx = hadamard_matrix(layout.cardinality("X"))
    hy = hadamard_matrix(layout.cardinality("Y"))
    step = (Gate(hx, ("X",)), Gate(hy, ("Y",)))
    return AdversaryCircuit(layout, (step,) * (q + 1), name=name)


Expr = tuple[str, int]  # ("const", c) or ("ans", k)


def classical_adversary(
    layout: RegisterLayout,
    queries: Sequence[tuple[int, Expr | int]],
    outputs: Sequence[tuple[Expr | int, Expr | int]] = (),
    name: str = "classical",
) -> AdversaryCircuit:
    """Deterministic classical queries.

    ``queries[j] = (b, x)`` where ``x`` is a constant or ``("ans", k)`` for the
    answer of an earlier query. Answers move into work registers ``W1..`` (which
    must have the size of ``Y``) before the next query. ``outputs`` lists the
    reported pairs, written into the ``OX/OY`` registers at the end.
    """
    q = len(queries)
    direction = "B" in layout.names

    def norm(e: Expr | int) -> Expr:
        return ("const", int(e)) if isinstance(e, (int, np.integer)) else (str(e[0]), int(e[1]))

    loc: dict[int, str] = {}

    def xor_in(target: str, e: Expr) -> list[Gate]:
        kind, v = e
        if kind == "const":
            return [xor_const_gate(layout, target, v)] if v else []
        return [xor_copy_gate(layout, loc[v], target)]

    steps: list[list[Gate]] = []
    x_cur: Expr = ("const", 0)
    b_cur = 0
    for j, (b, x) in enumerate(queries):
        x = norm(x)
        gates: list[Gate] = []
        if j > 0:
            gates.append(swap_gate(layout, "Y", f"W{j}"))
            loc[j - 1] = f"W{j}"
        gates += xor_in("X", x_cur)
        gates += xor_in("X", x)
        if b != b_cur:
            if not direction:
                raise ValueError("inverse query needs a direction register")
            gates.append(xor_const_gate(layout, "B", 1))
        steps.append(gates)
        x_cur, b_cur = x, b
    final: list[Gate] = []
    if q:
        loc[q - 1] = "Y"
    for i, (ox, oy) in enumerate(outputs, start=1):
        final += xor_in(f"OX{i}", norm(ox))
        final += xor_in(f"OY{i}", norm(oy))
    steps.append(final)
    return AdversaryCircuit(layout, tuple(tuple(s) for s in steps), output_pairs=len(outputs), name=name)
