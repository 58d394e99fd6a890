"""Finite-dimensional Hilbert-space primitives.

State vectors, operators, and Lindblad models for open-system trajectory
simulation, plus the doubled-space construction used to turn matrix-element
problems between two different states into ordinary expectation problems:
a pair (bra_state, ket_state) is stacked into one vector on H (+) H and every
system operator is duplicated block-diagonally, so both blocks see identical
dynamics.

Conventions: for the two-level atom, basis index 0 is the ground state and
index 1 the excited state; ``sigma_minus`` maps excited to ground.  The decay
rate gamma is fixed to 1, i.e. all times are in units of the inverse decay
rate, and the resonant drive Hamiltonian is (omega/2)(sigma_plus+sigma_minus).
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Ket",
    "Operator",
    "LindbladModel",
    "DoubledState",
    "make_doubled_state",
    "extend_model",
    "projector",
    "basis_ket",
    "sigma_minus",
    "sigma_plus",
    "drive_hamiltonian",
    "two_level_operators",
    "decay_model",
    "driven_decay_model",
]

_HERMITICITY_TOL = 1e-12


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_complex_vector(values) -> np.ndarray:
    vec = np.asarray(values, dtype=complex)
    if vec.ndim != 1:
        raise ValueError(f"state vector must be 1-D, got shape {vec.shape}")
    if vec.size < 1:
        raise ValueError("state vector must have dimension >= 1")
    return _freeze(vec.copy())


def _as_complex_matrix(values) -> np.ndarray:
    mat = np.asarray(values, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"operator must be a square matrix, got shape {mat.shape}")
    return _freeze(mat.copy())


@dataclass(frozen=True, eq=False)
class Ket:
    """Immutable state vector with complex amplitudes.

    Parameters
    ----------
    amplitudes:
        1-D complex array-like of length >= 1.  The stored array is copied
        and marked read-only.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amplitudes", _as_complex_vector(self.amplitudes))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "Ket":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero-norm state")
        return Ket(self.amplitudes / n)

    def overlap(self, other: "Ket") -> complex:
        """Inner product <self|other>."""
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))


@dataclass(frozen=True, eq=False)
class Operator:
    """Immutable square operator on a finite-dimensional space."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_complex_matrix(self.matrix))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.matrix.conj().T)

    def is_hermitian(self, tol: float = _HERMITICITY_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def apply(self, state: Ket) -> Ket:
        if state.dim != self.dim:
            raise ValueError(f"dimension mismatch: operator {self.dim}, state {state.dim}")
        return Ket(self.matrix @ state.amplitudes)

    def expectation(self, state: Ket) -> complex:
        """<state|self|state> without normalizing the input."""
        if state.dim != self.dim:
            raise ValueError(f"dimension mismatch: operator {self.dim}, state {state.dim}")
        return complex(np.vdot(state.amplitudes, self.matrix @ state.amplitudes))


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """Hamiltonian plus a family of Lindblad (collapse) operators.

    The Hamiltonian must be Hermitian within 1e-12 and all operators must
    share one dimension.  Collapse operators are unconstrained.
    """

    hamiltonian: Operator
    lindblads: tuple[Operator, ...]

    def __post_init__(self):
        lindblads = tuple(self.lindblads)
        object.__setattr__(self, "lindblads", lindblads)
        dim = self.hamiltonian.dim
        if not self.hamiltonian.is_hermitian():
            dev = float(
                np.max(
                    np.abs(self.hamiltonian.matrix - self.hamiltonian.matrix.conj().T)
                )
            )
            raise ValueError(
                f"hamiltonian is not Hermitian (max deviation {dev:.3e} > {_HERMITICITY_TOL})"
            )
        for k, op in enumerate(lindblads):
            if op.dim != dim:
                raise ValueError(
                    f"lindblad operator {k} has dimension {op.dim}, expected {dim}"
                )

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim

    @property
    def n_channels(self) -> int:
        return len(self.lindblads)


@dataclass(frozen=True, eq=False)
class DoubledState:
    """Vector on the doubled space H (+) H, stored as two equal-length blocks.

    The upper block is the bra-side state and the lower block the ket-side
    state of the matrix element being estimated.
    """

    upper: Ket
    lower: Ket

    def __post_init__(self):
        if self.upper.dim != self.lower.dim:
            raise ValueError(
                f"block dimension mismatch: {self.upper.dim} vs {self.lower.dim}"
            )

    @property
    def dim(self) -> int:
        """Dimension of one block (the doubled vector has length 2*dim)."""
        return self.upper.dim

    def vector(self) -> np.ndarray:
        return np.concatenate([self.upper.amplitudes, self.lower.amplitudes])

    @classmethod
    def from_vector(cls, vec, dim: int) -> "DoubledState":
        arr = np.asarray(vec, dtype=complex)
        if arr.ndim != 1 or arr.size != 2 * dim:
            raise ValueError(f"expected a flat vector of length {2 * dim}, got shape {arr.shape}")
        return cls(Ket(arr[:dim]), Ket(arr[dim:]))

    def norm(self) -> float:
        return float(np.sqrt(self.upper.norm() ** 2 + self.lower.norm() ** 2))


def make_doubled_state(bra_state: Ket, ket_state: Ket) -> DoubledState:
    """Stack two normalized states into the unit-norm doubled vector.

    Returns the doubled state with blocks (bra_state, ket_state)/sqrt(2), so
    that the rank-1 projector of the result has the bra-side and ket-side
    outer products in its diagonal blocks and |ket><bra|/2 in the lower-left
    block.

    Raises
    ------
    ValueError
        If the inputs differ in dimension, have zero norm, or are not
        normalized to within 1e-9.
    """
    if bra_state.dim != ket_state.dim:
        raise ValueError(
            f"dimension mismatch: {bra_state.dim} vs {ket_state.dim}"
        )
    for name, state in (("bra_state", bra_state), ("ket_state", ket_state)):
        n = state.norm()
        if n == 0.0:
            raise ValueError(f"{name} has zero norm")
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"{name} is not normalized: norm {n!r}")
    s = 1.0 / np.sqrt(2.0)
    return DoubledState(Ket(bra_state.amplitudes * s), Ket(ket_state.amplitudes * s))


def extend_model(model: LindbladModel) -> LindbladModel:
    """Duplicate every operator block-diagonally onto the doubled space.

    Both blocks of a doubled vector then evolve under identical dynamics;
    nothing couples them except shared noise in the stochastic schemes.
    """
    def doubled(op: Operator) -> Operator:
        d = op.dim
        out = np.zeros((2 * d, 2 * d), dtype=complex)
        out[:d, :d] = op.matrix
        out[d:, d:] = op.matrix
        return Operator(out)

    return LindbladModel(
        hamiltonian=doubled(model.hamiltonian),
        lindblads=tuple(doubled(op) for op in model.lindblads),
    )


def projector(state: "Ket | DoubledState") -> np.ndarray:
    """Rank-1 density matrix |state><state| as a plain complex array."""
    vec = state.vector() if isinstance(state, DoubledState) else state.amplitudes
    return np.outer(vec, vec.conj())


def basis_ket(dim: int, index: int) -> Ket:
    if not 0 <= index < dim:
        raise ValueError(f"basis index {index} out of range for dimension {dim}")
    vec = np.zeros(dim, dtype=complex)
    vec[index] = 1.0
    return Ket(vec)


def sigma_minus() -> Operator:
    """Lowering operator |ground><excited| in the (ground, excited) basis."""
    return Operator(np.array([[0.0, 1.0], [0.0, 0.0]]))


def sigma_plus() -> Operator:
    """Raising operator |excited><ground| in the (ground, excited) basis."""
    return Operator(np.array([[0.0, 0.0], [1.0, 0.0]]))


def drive_hamiltonian(omega: float) -> Operator:
    """Resonant drive (omega/2)(sigma_plus + sigma_minus)."""
    return Operator(0.5 * omega * np.array([[0.0, 1.0], [1.0, 0.0]]))


def two_level_operators(omega: float = 0.0) -> tuple[Operator, Operator, Operator]:
    """Convenience triple (sigma_minus, sigma_plus, drive_hamiltonian(omega))."""
    return sigma_minus(), sigma_plus(), drive_hamiltonian(omega)


def decay_model() -> LindbladModel:
    """Two-level atom with unit-rate spontaneous decay and no drive."""
    return LindbladModel(hamiltonian=drive_hamiltonian(0.0), lindblads=(sigma_minus(),))


def driven_decay_model(omega: float) -> LindbladModel:
    """Two-level atom with unit-rate decay and resonant drive of strength omega."""
    return LindbladModel(hamiltonian=drive_hamiltonian(omega), lindblads=(sigma_minus(),))
