"""Finite-dimensional Hilbert space algebra: operators, states, tensor
products and partial traces on labelled subsystem spaces.

Everything here is dense complex double precision. The largest space in
the package is 3 x 2 = 6 dimensional, so no sparsity machinery is used.
All objects are immutable after construction and all functions are pure;
they can be shared freely across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "HilbertSpace",
    "Operator",
    "DensityMatrix",
    "StateVector",
    "DimensionMismatchError",
    "InvariantViolationError",
    "tensor",
    "lift",
    "partial_trace",
    "expectation",
    "identity",
    "ketbra",
    "basis_state",
]

# invariant tolerances for density matrices
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-9
POSITIVITY_FLOOR = -1e-8
NORM_TOL = 1e-9


class DimensionMismatchError(ValueError):
    """An operation received objects living on incompatible spaces."""


class InvariantViolationError(ValueError):
    """A state failed its Hermiticity / trace / positivity invariant."""


@dataclass(frozen=True)
class HilbertSpace:
    """A tensor-product space described by its subsystem dimensions."""

    subsystem_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.subsystem_dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"subsystem dims must be positive integers, got {dims}")
        object.__setattr__(self, "subsystem_dims", dims)

    @property
    def dim(self) -> int:
        """Total dimension, the product of the subsystem dimensions."""
        return math.prod(self.subsystem_dims)

    @property
    def n_subsystems(self) -> int:
        return len(self.subsystem_dims)


@dataclass(frozen=True)
class Operator:
    """A dense complex matrix bound to a HilbertSpace.

    Row-major Kronecker ordering: for a [3, 2] space the joint basis index
    is i*2 + s with i the first-subsystem index and s the second.
    """

    space: HilbertSpace
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise DimensionMismatchError(
                f"matrix shape {m.shape} does not match space dimension {d}"
            )
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    # -- small algebra helpers -------------------------------------------------

    def dag(self) -> Operator:
        """Hermitian conjugate."""
        return Operator(self.space, self.matrix.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def __add__(self, other: Operator) -> Operator:
        self._require_same_space(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: Operator) -> Operator:
        self._require_same_space(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> Operator:
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> Operator:
        return Operator(self.space, -self.matrix)

    def __matmul__(self, other: Operator) -> Operator:
        self._require_same_space(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def _require_same_space(self, other: Operator) -> None:
        if self.space.subsystem_dims != other.space.subsystem_dims:
            raise DimensionMismatchError(
                f"operators on different spaces: {self.space.subsystem_dims} "
                f"vs {other.space.subsystem_dims}"
            )


@dataclass(frozen=True)
class DensityMatrix:
    """A Hermitian, unit-trace, positive-semidefinite Operator."""

    op: Operator

    def __post_init__(self):
        validate_density_matrix(self.op.matrix)

    @property
    def space(self) -> HilbertSpace:
        return self.op.space

    @property
    def matrix(self) -> np.ndarray:
        return self.op.matrix

    @classmethod
    def from_matrix(cls, space: HilbertSpace, matrix: np.ndarray) -> DensityMatrix:
        return cls(Operator(space, matrix))

    @classmethod
    def pure(cls, psi: StateVector) -> DensityMatrix:
        """Density matrix |psi><psi| of a normalized state vector."""
        a = psi.amplitudes
        return cls(Operator(psi.space, np.outer(a, a.conj())))


def validate_density_matrix(m: np.ndarray, where: str = "") -> None:
    """Raise InvariantViolationError unless m is a density matrix within
    the package tolerances (Hermiticity 1e-10, trace 1e-9, min eig -1e-8)."""
    tag = f" ({where})" if where else ""
    herm = float(np.max(np.abs(m - m.conj().T)))
    if herm > HERMITICITY_TOL:
        raise InvariantViolationError(f"Hermiticity defect {herm:.3e}{tag}")
    tr = complex(np.trace(m))
    if abs(tr - 1.0) > TRACE_TOL:
        raise InvariantViolationError(f"trace defect |{tr} - 1| = {abs(tr - 1.0):.3e}{tag}")
    lam_min = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min())
    if lam_min < POSITIVITY_FLOOR:
        raise InvariantViolationError(f"negative eigenvalue {lam_min:.3e}{tag}")


@dataclass(frozen=True)
class StateVector:
    """A pure state on a HilbertSpace, kept normalized to 1e-9."""

    space: HilbertSpace
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.space.dim,):
            raise DimensionMismatchError(
                f"amplitude vector of length {a.shape} on a {self.space.dim}-dim space"
            )
        n = float(np.linalg.norm(a))
        if abs(n - 1.0) > NORM_TOL:
            raise InvariantViolationError(f"state norm {n} outside [1-1e-9, 1+1e-9]")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


# -- constructors ---------------------------------------------------------------


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.dim, dtype=complex))


def ketbra(space: HilbertSpace, i: int, j: int) -> Operator:
    """|i><j| in the joint computational basis of the space."""
    m = np.zeros((space.dim, space.dim), dtype=complex)
    m[i, j] = 1.0
    return Operator(space, m)


def basis_state(space: HilbertSpace, index: int) -> StateVector:
    a = np.zeros(space.dim, dtype=complex)
    a[index] = 1.0
    return StateVector(space, a)


# -- composite-space operations ---------------------------------------------------


def tensor(a: Operator, b: Operator) -> Operator:
    """Kronecker product; the result space concatenates the subsystem dims."""
    space = HilbertSpace(a.space.subsystem_dims + b.space.subsystem_dims)
    return Operator(space, np.kron(a.matrix, b.matrix))


def lift(op: Operator, target_index: int, space: HilbertSpace) -> Operator:
    """Embed a single-subsystem operator into a composite space.

    Acts as `op` on subsystem `target_index` and as the identity elsewhere.
    """
    dims = space.subsystem_dims
    if not 0 <= target_index < len(dims):
        raise DimensionMismatchError(
            f"target index {target_index} out of range for {len(dims)} subsystems"
        )
    if op.space.dim != dims[target_index]:
        raise DimensionMismatchError(
            f"operator dimension {op.space.dim} does not match subsystem "
            f"{target_index} dimension {dims[target_index]}"
        )
    m = np.eye(1, dtype=complex)
    for k, d in enumerate(dims):
        factor = op.matrix if k == target_index else np.eye(d, dtype=complex)
        m = np.kron(m, factor)
    return Operator(space, m)


def partial_trace_matrix(m: np.ndarray, dims: tuple[int, ...], keep_index: int) -> np.ndarray:
    """Partial trace of a raw matrix over all subsystems except keep_index."""
    if not 0 <= keep_index < len(dims):
        raise DimensionMismatchError(
            f"keep index {keep_index} out of range for {len(dims)} subsystems"
        )
    n = len(dims)
    t = m.reshape(dims + dims)
    # contract each traced subsystem pairwise, back to front so axis numbers stay valid
    for k in reversed(range(n)):
        if k == keep_index:
            continue
        t = np.trace(t, axis1=k, axis2=k + (t.ndim // 2))
    d = dims[keep_index]
    return t.reshape(d, d)


def partial_trace(rho: DensityMatrix, keep_index: int) -> DensityMatrix:
    """Reduced density matrix on the kept subsystem; preserves the trace."""
    dims = rho.space.subsystem_dims
    if len(dims) < 2:
        raise DimensionMismatchError("partial trace needs a multi-subsystem space")
    reduced = partial_trace_matrix(rho.matrix, dims, keep_index)
    return DensityMatrix.from_matrix(HilbertSpace((dims[keep_index],)), reduced)


def expectation(rho: DensityMatrix, op: Operator) -> complex:
    """Tr(rho op)."""
    if rho.space.subsystem_dims != op.space.subsystem_dims:
        raise DimensionMismatchError(
            f"state on {rho.space.subsystem_dims}, operator on {op.space.subsystem_dims}"
        )
    return complex(np.trace(rho.matrix @ op.matrix))
