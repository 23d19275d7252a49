"""Truncated Fock-space and qutrit operator algebra.

Dense complex matrices on labeled tensor-product spaces. The Kronecker
ordering is fixed for the whole package: the first listed subsystem varies
slowest, so the basis index of ``|i0, i1, ..., ik>`` is
``i0*(d1*...*dk) + i1*(d2*...*dk) + ... + ik``.  All builders go through
:func:`embed`; nothing in the package hand-rolls tensor indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Mapping, Sequence

import numpy as np

HERMITIAN_ATOL = 1e-12
PURE_NORM_ATOL = 1e-10
MIXED_ATOL = 1e-10
# Positivity floor for density matrices: matches the fixed-step integrator's
# positivity budget, whose outputs these states must hold.
MIXED_EIG_FLOOR = -1e-8

# Hard cutoff-adequacy bound for coherent states.  Loose enough to admit the
# reference runs (|beta| <= 1.3 at cutoff 10 leaks 1.1e-5), tight enough to
# reject a genuinely under-truncated request; cutoff-doubling checks guard
# the remaining tail.
COHERENT_LEAKAGE_MAX = 1e-4


class DimensionError(ValueError):
    """Matrix or subsystem dimensions are invalid or inconsistent."""


class UnknownLabelError(KeyError):
    """Subsystem label not present in the space."""


class SpaceMismatchError(ValueError):
    """Operands live on different Hilbert spaces."""


class TruncationError(ValueError):
    """Fock cutoff too small to hold the requested state."""


class StateValidationError(ValueError):
    """State data violates normalization, Hermiticity, or positivity."""


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered list of labeled subsystem dimensions.

    Parameters
    ----------
    subsystems : tuple of (label, dim)
        Subsystems in slow-to-fast Kronecker order.
    """

    subsystems: tuple[tuple[str, int], ...]

    def __post_init__(self):
        subs = tuple((str(label), int(dim)) for label, dim in self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        if not subs:
            raise DimensionError("a HilbertSpace needs at least one subsystem")
        labels = [label for label, _ in subs]
        if len(set(labels)) != len(labels):
            raise DimensionError(f"duplicate subsystem labels: {labels}")
        for label, dim in subs:
            if dim < 1:
                raise DimensionError(f"subsystem {label!r} has dimension {dim} < 1")

    @classmethod
    def single(cls, label: str, dim: int) -> "HilbertSpace":
        return cls(((label, dim),))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabelError(f"no subsystem {label!r} in {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.axis(label)]

    def index(self, occupations: Sequence[int]) -> int:
        """Basis index of the product state with the given occupation numbers."""
        if len(occupations) != len(self.dims):
            raise DimensionError("one occupation number per subsystem required")
        return int(np.ravel_multi_index(tuple(int(o) for o in occupations), self.dims))

    def occupations(self, index: int) -> tuple[int, ...]:
        """Inverse of :meth:`index`."""
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def subspace(self, labels: Sequence[str]) -> "HilbertSpace":
        """New space made of the listed subsystems, in the order given."""
        return HilbertSpace(tuple((lab, self.dim(lab)) for lab in labels))


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex matrix tagged with its HilbertSpace.

    Operators flagged ``hamiltonian=True`` must be Hermitian to within
    ``HERMITIAN_ATOL`` (scaled by the largest matrix entry).
    """

    space: HilbertSpace
    matrix: np.ndarray
    hamiltonian: bool = False

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=complex, copy=True)
        d = self.space.total_dim
        if mat.shape != (d, d):
            raise DimensionError(f"matrix shape {mat.shape} != space dimension ({d}, {d})")
        if self.hamiltonian:
            scale = max(1.0, float(np.abs(mat).max()))
            dev = float(np.abs(mat - mat.conj().T).max())
            if dev > HERMITIAN_ATOL * scale:
                raise StateValidationError(f"Hamiltonian not Hermitian: max |H - H^+| = {dev:.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def dagger(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def is_hermitian(self, atol: float = HERMITIAN_ATOL) -> bool:
        scale = max(1.0, float(np.abs(self.matrix).max()))
        return float(np.abs(self.matrix - self.matrix.conj().T).max()) <= atol * scale

    def _check_space(self, other: "Operator"):
        if self.space != other.space:
            raise SpaceMismatchError("operators on different spaces")

    def __add__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check_space(other)
            return Operator(self.space, self.matrix @ other.matrix)
        return self.matrix @ np.asarray(other)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure vector or density matrix on a HilbertSpace."""

    space: HilbertSpace
    kind: str
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("pure", "mixed"):
            raise StateValidationError(f"kind must be 'pure' or 'mixed', got {self.kind!r}")
        arr = np.array(self.data, dtype=complex, copy=True)
        d = self.space.total_dim
        if self.kind == "pure":
            if arr.shape != (d,):
                raise DimensionError(f"pure state shape {arr.shape} != ({d},)")
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) > PURE_NORM_ATOL:
                raise StateValidationError(f"pure state norm {norm} != 1")
        else:
            if arr.shape != (d, d):
                raise DimensionError(f"density matrix shape {arr.shape} != ({d}, {d})")
            if float(np.abs(arr - arr.conj().T).max()) > MIXED_ATOL:
                raise StateValidationError("density matrix not Hermitian")
            tr = complex(np.trace(arr))
            if abs(tr - 1.0) > MIXED_ATOL:
                raise StateValidationError(f"density matrix trace {tr} != 1")
            if float(np.linalg.eigvalsh(arr).min()) < MIXED_EIG_FLOOR:
                raise StateValidationError("density matrix has negative eigenvalues")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def density(self) -> np.ndarray:
        """Density-matrix form regardless of kind."""
        if self.kind == "pure":
            return np.outer(self.data, self.data.conj())
        return np.array(self.data, copy=True)

    def populations(self) -> np.ndarray:
        """Diagonal populations in the product basis."""
        if self.kind == "pure":
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()


def annihilation(dim: int) -> Operator:
    """Bosonic lowering operator on a single truncated mode.

    Entries sqrt(k) at (k-1, k); requires ``dim >= 2``.
    """
    if dim < 2:
        raise DimensionError(f"annihilation needs dim >= 2, got {dim}")
    mat = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return Operator(HilbertSpace.single("mode", dim), mat)


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.total_dim, dtype=complex))


def level_projector(dim: int, level: int) -> Operator:
    """Single-subsystem projector |level><level|."""
    if not 0 <= level < dim:
        raise DimensionError(f"level {level} outside dimension {dim}")
    mat = np.zeros((dim, dim), dtype=complex)
    mat[level, level] = 1.0
    return Operator(HilbertSpace.single("mode", dim), mat)


def transition(dim: int, upper: int, lower: int) -> Operator:
    """Single-subsystem transition operator |upper><lower|."""
    if not (0 <= upper < dim and 0 <= lower < dim):
        raise DimensionError(f"levels ({upper}, {lower}) outside dimension {dim}")
    mat = np.zeros((dim, dim), dtype=complex)
    mat[upper, lower] = 1.0
    return Operator(HilbertSpace.single("mode", dim), mat)


def embed(op: Operator, space: HilbertSpace, slot: str) -> Operator:
    """Place a single-subsystem operator into a composite space.

    Returns identity (x) ... (x) op (x) ... (x) identity following the fixed
    Kronecker convention (first subsystem slowest).
    """
    if len(op.space.subsystems) != 1:
        raise DimensionError("embed expects an operator on a single subsystem")
    target_dim = space.dim(slot)  # raises UnknownLabelError
    if op.space.total_dim != target_dim:
        raise DimensionError(
            f"operator dimension {op.space.total_dim} != dimension {target_dim} of slot {slot!r}"
        )
    mats = [
        op.matrix if label == slot else np.eye(dim, dtype=complex)
        for label, dim in space.subsystems
    ]
    return Operator(space, reduce(np.kron, mats))


def parity_operator(space: HilbertSpace, slots: Sequence[str]) -> Operator:
    """Diagonal operator with entries (-1)**(sum of occupations over slots)."""
    for slot in slots:
        space.axis(slot)  # raises UnknownLabelError
    diag = np.ones(1)
    for label, dim in space.subsystems:
        factor = (-1.0) ** np.arange(dim) if label in slots else np.ones(dim)
        diag = np.kron(diag, factor)
    return Operator(space, np.diag(diag.astype(complex)))


def basis_state(space: HilbertSpace, occupations: Sequence[int]) -> QuantumState:
    """Product basis state |i0, i1, ...>."""
    for occ, dim in zip(occupations, space.dims):
        if not 0 <= occ < dim:
            raise DimensionError(f"occupation {occ} outside dimension {dim}")
    vec = np.zeros(space.total_dim, dtype=complex)
    vec[space.index(occupations)] = 1.0
    return QuantumState(space, "pure", vec)


def coherent_truncation_leakage(beta: complex, dim: int) -> float:
    """Poisson weight lying above the Fock cutoff (before renormalization)."""
    x = abs(beta) ** 2
    term = math.exp(-x)
    acc = term
    for j in range(1, dim):
        term *= x / j
        acc += term
    return max(0.0, 1.0 - acc)


def coherent_state(beta: complex, dim: int) -> QuantumState:
    """Truncated, renormalized coherent state with amplitudes ~ beta^j/sqrt(j!).

    Raises
    ------
    TruncationError
        If the Poisson weight captured inside the cutoff falls below
        ``1 - COHERENT_LEAKAGE_MAX``.
    """
    if dim < 1:
        raise DimensionError(f"coherent state needs dim >= 1, got {dim}")
    leakage = coherent_truncation_leakage(beta, dim)
    if leakage > COHERENT_LEAKAGE_MAX:
        raise TruncationError(
            f"cutoff {dim} leaks {leakage:.3e} of the |beta|={abs(beta):.3g} "
            f"coherent state (limit {COHERENT_LEAKAGE_MAX:.0e}); raise the cutoff"
        )
    amps = np.empty(dim, dtype=complex)
    amps[0] = 1.0
    for j in range(1, dim):
        amps[j] = amps[j - 1] * beta / math.sqrt(j)
    amps /= np.linalg.norm(amps)
    return QuantumState(HilbertSpace.single("mode", dim), "pure", amps)


def superposed_state(dim: int, excitation: int = 1) -> QuantumState:
    """Single-mode superposition (|0> + |N>)/sqrt(2)."""
    if not 1 <= excitation < dim:
        raise DimensionError(f"excitation {excitation} outside cutoff {dim}")
    vec = np.zeros(dim, dtype=complex)
    vec[0] = vec[excitation] = 1.0 / math.sqrt(2.0)
    return QuantumState(HilbertSpace.single("mode", dim), "pure", vec)


def product_state(space: HilbertSpace, parts: Mapping[str, QuantumState]) -> QuantumState:
    """Tensor product of pure single-subsystem states, one per subsystem."""
    missing = set(space.labels) - set(parts)
    if missing:
        raise UnknownLabelError(f"missing states for subsystems {sorted(missing)}")
    vecs = []
    for label, dim in space.subsystems:
        part = parts[label]
        if part.kind != "pure":
            raise StateValidationError(f"part {label!r} must be pure")
        if part.space.total_dim != dim:
            raise DimensionError(f"part {label!r} has dimension {part.space.total_dim} != {dim}")
        vecs.append(part.data)
    return QuantumState(space, "pure", reduce(np.kron, vecs))


def bell_state(space: HilbertSpace, excitation: int = 1, sign: int = +1) -> QuantumState:
    """Two-mode Bell state (|0,0> + sign |N,N>)/sqrt(2) on a two-subsystem space."""
    if len(space.subsystems) != 2:
        raise DimensionError("bell_state needs a two-subsystem space")
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    n = excitation
    if not 1 <= n < min(space.dims):
        raise DimensionError(f"excitation {n} outside cutoffs {space.dims}")
    vec = np.zeros(space.total_dim, dtype=complex)
    vec[space.index((0, 0))] = 1.0 / math.sqrt(2.0)
    vec[space.index((n, n))] = sign / math.sqrt(2.0)
    return QuantumState(space, "pure", vec)


def fidelity(state: QuantumState, target: QuantumState) -> float:
    """Overlap fidelity <target|rho|target> (mixed) or |<target|psi>|^2 (pure).

    The target must be pure and live on the same space as the state.
    """
    if target.kind != "pure":
        raise StateValidationError("fidelity target must be a pure state")
    if state.space != target.space:
        raise SpaceMismatchError("state and target on different spaces")
    t = target.data
    if state.kind == "pure":
        value = abs(np.vdot(t, state.data)) ** 2
    else:
        value = float(np.real(np.vdot(t, state.data @ t)))
    return float(min(max(value, 0.0), 1.0))
