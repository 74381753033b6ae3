"""Named-register state vectors, linear operators and density matrices.

States live on a mixed-radix basis described by a :class:`RegisterLayout`.
Register order is C order, so the first register is the most significant
digit of the composite index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

DROP_TOL = 1e-14
HERMITIAN_TOL = 1e-10
EXACT_NORM_DIM = 512
POWER_ITERATIONS = 200
POWER_RTOL = 1e-8


# ---------------------------------------------------------------------------
# Layouts and sparse states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered named registers with their cardinalities."""

    registers: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        regs = tuple((str(n), int(d)) for n, d in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [n for n, _ in regs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate register names in {names}")
        for name, dim in regs:
            if dim < 1:
                raise ValueError(f"register {name!r} has cardinality {dim} < 1")

    @classmethod
    def of(cls, *pairs: tuple[str, int]) -> "RegisterLayout":
        return cls(tuple(pairs))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.registers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.registers)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.registers else 1

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown register {name!r}; layout has {self.names}") from None

    def cardinality(self, name: str) -> int:
        return self.dims[self.axis(name)]

    def encode(self, values: Sequence[int] | Mapping[str, int]) -> int:
        if isinstance(values, Mapping):
            values = [values.get(n, 0) for n in self.names]
        if len(values) != len(self.registers):
            raise ValueError("wrong number of register values")
        for v, d in zip(values, self.dims):
            if not 0 <= v < d:
                raise ValueError(f"value {v} out of range for cardinality {d}")
        return int(np.ravel_multi_index(tuple(int(v) for v in values), self.dims)) if self.registers else 0

    def decode(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.dim:
            raise ValueError(f"index {index} out of range for dimension {self.dim}")
        return tuple(int(v) for v in np.unravel_index(int(index), self.dims))

    def sub(self, names: Iterable[str]) -> "RegisterLayout":
        return RegisterLayout(tuple((n, self.cardinality(n)) for n in names))

    def concat(self, other: "RegisterLayout") -> "RegisterLayout":
        return RegisterLayout(self.registers + other.registers)


@dataclass(frozen=True)
class SparseState:
    """Dictionary-of-amplitudes vector on a register layout."""

    layout: RegisterLayout
    amplitudes: Mapping[int, complex] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[int, complex] = {}
        for k, a in self.amplitudes.items():
            a = complex(a)
            if not np.isfinite(a.real) or not np.isfinite(a.imag):
                raise ValueError("non-finite amplitude")
            if abs(a) > DROP_TOL:
                if not 0 <= k < self.layout.dim:
                    raise ValueError(f"basis index {k} out of range")
                clean[int(k)] = a
        object.__setattr__(self, "amplitudes", clean)

    @classmethod
    def basis(cls, layout: RegisterLayout, values: Sequence[int] | Mapping[str, int], amp: complex = 1.0) -> "SparseState":
        return cls(layout, {layout.encode(values): amp})

    @classmethod
    def from_dense(cls, layout: RegisterLayout, vec: np.ndarray) -> "SparseState":
        vec = np.asarray(vec).reshape(-1)
        if vec.size != layout.dim:
            raise ValueError(f"vector of size {vec.size} does not fit layout of dimension {layout.dim}")
        nz = np.flatnonzero(np.abs(vec) > DROP_TOL)
        return cls(layout, {int(i): complex(vec[i]) for i in nz})

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.layout.dim, dtype=complex)
        for k, a in self.amplitudes.items():
            out[k] = a
        return out

    def amplitude(self, values: Sequence[int] | Mapping[str, int]) -> complex:
        return self.amplitudes.get(self.layout.encode(values), 0j)

    @property
    def nnz(self) -> int:
        return len(self.amplitudes)

    def norm(self) -> float:
        return float(np.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values())))

    def normalized(self) -> "SparseState":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero vector")
        return self.scale(1 / nrm)

    def scale(self, c: complex) -> "SparseState":
        return SparseState(self.layout, {k: c * a for k, a in self.amplitudes.items()})

    def inner(self, other: "SparseState") -> complex:
        """<self|other>."""
        self._check(other)
        return complex(sum(np.conj(a) * other.amplitudes.get(k, 0) for k, a in self.amplitudes.items()))

    def _check(self, other: "SparseState") -> None:
        if other.layout != self.layout:
            raise ValueError("layout mismatch")

    def __add__(self, other: "SparseState") -> "SparseState":
        self._check(other)
        out = dict(self.amplitudes)
        for k, a in other.amplitudes.items():
            out[k] = out.get(k, 0) + a
        return SparseState(self.layout, out)

    def __sub__(self, other: "SparseState") -> "SparseState":
        return self + other.scale(-1)

    def __mul__(self, c: complex) -> "SparseState":
        return self.scale(c)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# Linear operators
# ---------------------------------------------------------------------------

ArrayMap = Callable[[np.ndarray], np.ndarray]


class LinearOp:
    """Matrix-free operator on ``C^dim`` with a known adjoint.

    ``forward`` and ``adjoint`` receive arrays of shape ``(dim, k)`` and
    return arrays of the same shape.
    """

    def __init__(
        self,
        dim: int,
        forward: ArrayMap,
        adjoint: ArrayMap | None = None,
        *,
        layout: RegisterLayout | None = None,
        name: str = "",
    ) -> None:
        if layout is not None and layout.dim != dim:
            raise ValueError("layout dimension does not match operator dimension")
        self.dim = int(dim)
        self._fwd = forward
        self._adj = adjoint
        self.layout = layout
        self.name = name

    # -- application --

    def _run(self, fn: ArrayMap | None, x):
        if fn is None:
            raise NotImplementedError(f"operator {self.name!r} has no adjoint")
        if isinstance(x, SparseState):
            if x.layout.dim != self.dim:
                raise ValueError("state dimension does not match operator")
            return SparseState.from_dense(x.layout, fn(x.to_dense()[:, None])[:, 0])
        arr = np.asarray(x, dtype=complex)
        if arr.shape[0] != self.dim:
            raise ValueError(f"expected leading dimension {self.dim}, got {arr.shape[0]}")
        out = fn(arr.reshape(self.dim, -1))
        return np.asarray(out).reshape(arr.shape)

    def apply(self, x):
        return self._run(self._fwd, x)

    def apply_adjoint(self, x):
        return self._run(self._adj, x)

    @property
    def dag(self) -> "LinearOp":
        return LinearOp(self.dim, self._adj, self._fwd, layout=self.layout, name=f"{self.name}†")

    # -- algebra --

    def __matmul__(self, other):
        if isinstance(other, LinearOp):
            if other.dim != self.dim:
                raise ValueError("dimension mismatch in composition")
            f1, f2 = self._fwd, other._fwd
            a1, a2 = self._adj, other._adj
            adj = None if a1 is None or a2 is None else (lambda v: a2(a1(v)))
            return LinearOp(self.dim, lambda v: f1(f2(v)), adj, layout=self.layout)
        return self.apply(other)

    def _combine(self, other: "LinearOp", sign: float) -> "LinearOp":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        f1, f2, a1, a2 = self._fwd, other._fwd, self._adj, other._adj
        adj = None if a1 is None or a2 is None else (lambda v: a1(v) + sign * a2(v))
        return LinearOp(self.dim, lambda v: f1(v) + sign * f2(v), adj, layout=self.layout)

    def __add__(self, other: "LinearOp") -> "LinearOp":
        return self._combine(other, 1.0)

    def __sub__(self, other: "LinearOp") -> "LinearOp":
        return self._combine(other, -1.0)

    def __mul__(self, c: complex) -> "LinearOp":
        f, a = self._fwd, self._adj
        adj = None if a is None else (lambda v: np.conj(c) * a(v))
        return LinearOp(self.dim, lambda v: c * f(v), adj, layout=self.layout)

    __rmul__ = __mul__

    def __neg__(self) -> "LinearOp":
        return self * -1.0

    def to_dense(self, max_dim: int = 4096) -> np.ndarray:
        if self.dim > max_dim:
            raise ValueError(f"refusing to densify operator of dimension {self.dim}")
        return self.apply(np.eye(self.dim, dtype=complex))

    def columns(self, support: np.ndarray) -> np.ndarray:
        """Images of the basis vectors listed in ``support``, as columns."""
        support = np.asarray(support, dtype=np.int64)
        basis = np.zeros((self.dim, support.size), dtype=complex)
        basis[support, np.arange(support.size)] = 1
        return self.apply(basis)

    # -- constructors --

    @classmethod
    def identity(cls, dim: int, layout: RegisterLayout | None = None) -> "LinearOp":
        return cls(dim, lambda v: v.copy(), lambda v: v.copy(), layout=layout, name="1")

    @classmethod
    def from_matrix(cls, m, layout: RegisterLayout | None = None, name: str = "") -> "LinearOp":
        if sp.issparse(m):
            m = sp.csr_matrix(m)
            mh = sp.csr_matrix(m.conj().T)
            return cls(m.shape[0], lambda v: np.asarray(m @ v), lambda v: np.asarray(mh @ v), layout=layout, name=name)
        m = np.asarray(m, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        mh = m.conj().T
        return cls(m.shape[0], lambda v: m @ v, lambda v: mh @ v, layout=layout, name=name)

    @classmethod
    def diagonal(cls, diag: np.ndarray, layout: RegisterLayout | None = None, name: str = "") -> "LinearOp":
        d = np.asarray(diag, dtype=complex)
        dc = d.conj()
        return cls(d.size, lambda v: d[:, None] * v, lambda v: dc[:, None] * v, layout=layout, name=name)

    @classmethod
    def permutation(cls, perm: np.ndarray, layout: RegisterLayout | None = None, name: str = "") -> "LinearOp":
        """Maps basis vector ``|i>`` to ``|perm[i]>``."""
        perm = np.asarray(perm, dtype=np.int64)
        if np.any(np.sort(perm) != np.arange(perm.size)):
            raise ValueError("not a permutation")

        def fwd(v: np.ndarray) -> np.ndarray:
            out = np.empty_like(v)
            out[perm] = v
            return out

        return cls(perm.size, fwd, lambda v: v[perm], layout=layout, name=name)

    @classmethod
    def reflection(cls, d: sp.spmatrix, layout: RegisterLayout | None = None, name: str = "") -> "LinearOp":
        """``1 - D D^H`` for a sparse ``D`` whose columns have squared norm 2 and
        pairwise disjoint supports, which makes the result a unitary involution."""
        d = sp.csr_matrix(d, dtype=complex)
        dh = sp.csr_matrix(d.conj().T)

        def fwd(v: np.ndarray) -> np.ndarray:
            return v - d @ (dh @ v)

        return cls(d.shape[0], fwd, fwd, layout=layout, name=name)


def apply_on_axes(matrix_or_op, arr: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply an operator to the given axes of a tensor, leaving the rest alone."""
    axes = list(axes)
    moved = np.moveaxis(arr, axes, list(range(len(axes))))
    shape = moved.shape
    dt = int(np.prod(shape[: len(axes)]))
    flat = moved.reshape(dt, -1)
    if isinstance(matrix_or_op, LinearOp):
        out = matrix_or_op.apply(flat)
    else:
        out = np.asarray(matrix_or_op) @ flat
    return np.moveaxis(out.reshape(shape), list(range(len(axes))), axes)


def tensor_embed(op: LinearOp, targets: Sequence[str], layout: RegisterLayout) -> LinearOp:
    """``op`` on the named registers, tensored with the identity elsewhere."""
    targets = list(targets)
    if not targets:
        raise ValueError("no target registers")
    axes = [layout.axis(t) for t in targets]
    sub_dim = int(np.prod([layout.dims[a] for a in axes]))
    if op.dim != sub_dim:
        raise ValueError(f"operator dimension {op.dim} does not match registers {targets} of dimension {sub_dim}")
    if op.layout is not None and op.layout.dims != tuple(layout.dims[a] for a in axes):
        raise ValueError("register cardinalities do not match the operator layout")
    dims = layout.dims

    def lift(fn: ArrayMap | None) -> ArrayMap | None:
        if fn is None:
            return None
        inner = LinearOp(sub_dim, fn)

        def run(v: np.ndarray) -> np.ndarray:
            k = v.shape[1]
            t = v.reshape(*dims, k)
            return apply_on_axes(inner, t, axes).reshape(-1, k)

        return run

    return LinearOp(layout.dim, lift(op._fwd), lift(op._adj), layout=layout, name=op.name)


# ---------------------------------------------------------------------------
# Density matrices and distances
# ---------------------------------------------------------------------------


def _hermitian_check(m: np.ndarray, what: str = "matrix") -> None:
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be square")
    if m.size and np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL * scale:
        raise ValueError(f"{what} is not Hermitian")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    layout: RegisterLayout | None = None

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        _hermitian_check(m, "density matrix")
        if self.layout is not None and self.layout.dim != m.shape[0]:
            raise ValueError("layout does not match matrix dimension")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state(cls, state) -> "DensityMatrix":
        if isinstance(state, SparseState):
            v = state.to_dense()
            return cls(np.outer(v, v.conj()), state.layout)
        v = np.asarray(state, dtype=complex).reshape(-1)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def from_rows(cls, rows: np.ndarray, weights: np.ndarray | None = None, layout: RegisterLayout | None = None) -> "DensityMatrix":
        """Mixture ``sum_i w_i |r_i><r_i|`` of row vectors (uniform if no weights)."""
        rows = np.asarray(rows, dtype=complex)
        rows = rows.reshape(rows.shape[0], -1)
        if weights is None:
            weights = np.full(rows.shape[0], 1.0 / rows.shape[0])
        w = np.sqrt(np.asarray(weights, dtype=float))[:, None] * rows
        return cls(w.T @ w.conj(), layout)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def is_psd(self, floor: float = -1e-9) -> bool:
        return bool(hermitian_eigenvalues(self.matrix)[0] >= floor)


def reduced_density(psi: np.ndarray, n_keep_axes: int) -> np.ndarray:
    """``Tr`` over the trailing axes of a pure state tensor."""
    keep = int(np.prod(psi.shape[:n_keep_axes]))
    a = np.asarray(psi).reshape(keep, -1)
    return a @ a.conj().T


def partial_trace(state, keep: Sequence[str], layout: RegisterLayout | None = None) -> DensityMatrix:
    """Reduced density matrix on the registers in ``keep`` (in that order)."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep set is empty")
    if isinstance(state, SparseState):
        layout = state.layout
        axes = [layout.axis(k) for k in keep]
        rest = [a for a in range(len(layout.dims)) if a not in axes]
        t = state.to_dense().reshape(layout.dims).transpose(axes + rest)
        return DensityMatrix(reduced_density(t, len(axes)), layout.sub(keep))
    if isinstance(state, DensityMatrix):
        layout = layout or state.layout
        if layout is None:
            raise ValueError("density matrix needs a layout for partial trace")
        axes = [layout.axis(k) for k in keep]
        rest = [a for a in range(len(layout.dims)) if a not in axes]
        nd = len(layout.dims)
        t = state.matrix.reshape(layout.dims + layout.dims)
        t = t.transpose(axes + rest + [nd + a for a in axes] + [nd + a for a in rest])
        dk = int(np.prod([layout.dims[a] for a in axes]))
        dr = layout.dim // dk
        t = t.reshape(dk, dr, dk, dr)
        return DensityMatrix(np.einsum("ajbj->ab", t), layout.sub(keep))
    raise TypeError("expected SparseState or DensityMatrix")


def hermitian_eigenvalues(m) -> np.ndarray:
    """Ascending eigenvalues of a Hermitian matrix."""
    if isinstance(m, DensityMatrix):
        m = m.matrix
    m = np.asarray(m, dtype=complex)
    _hermitian_check(m)
    vals = np.linalg.eigvalsh((m + m.conj().T) / 2)
    return np.sort(vals, kind="stable")


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    ma = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a, dtype=complex)
    mb = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b, dtype=complex)
    if ma.shape != mb.shape:
        raise ValueError(f"dimension mismatch {ma.shape} vs {mb.shape}")
    _hermitian_check(ma)
    _hermitian_check(mb)
    return float(0.5 * np.sum(np.abs(hermitian_eigenvalues(ma - mb))))


def restricted_norm(state, projector: LinearOp) -> float:
    out = projector.apply(state)
    if isinstance(out, SparseState):
        return out.norm()
    return float(np.linalg.norm(out))


def operator_norm(op: LinearOp, support: np.ndarray | None = None, *, seed: int = 0) -> float:
    """Spectral norm of ``op``, optionally restricted to the span of the basis
    vectors in ``support``. Exact SVD up to 512 columns, power iteration above."""
    cols = np.arange(op.dim) if support is None else np.asarray(support, dtype=np.int64)
    if cols.size == 0:
        return 0.0
    if cols.size <= EXACT_NORM_DIM:
        m = op.columns(cols)
        return float(np.linalg.norm(m, 2))
    if op._adj is None:
        raise NotImplementedError("power iteration needs the adjoint")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(cols.size) + 1j * rng.standard_normal(cols.size)
    v /= np.linalg.norm(v)
    est = 0.0
    full = np.zeros(op.dim, dtype=complex)
    for _ in range(POWER_ITERATIONS):
        full[:] = 0
        full[cols] = v
        w = op.apply_adjoint(op.apply(full))[cols]
        new = float(np.linalg.norm(w))
        if new == 0:
            return 0.0
        v = w / new
        if abs(new - est) <= POWER_RTOL * new:
            est = new
            break
        est = new
    return float(np.sqrt(est))


# ---------------------------------------------------------------------------
# Random objects
# ---------------------------------------------------------------------------


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def random_isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    return random_unitary(d_out, rng)[:, :d_in]
