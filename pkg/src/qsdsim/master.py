r"""Deterministic master-equation reference solutions.

Everything stochastic in this package is checked against this module.  It
integrates the Lindblad master equation

    d(rho)/dt = -i[H, rho] + (1/2) sum_j (2 L_j rho L_j^dag
                - L_j^dag L_j rho - rho L_j^dag L_j)

with a dense Liouvillian in column-stacking vectorization and classical
fixed-step 4th-order Runge-Kutta.  For this autonomous linear system one RK4
step equals the degree-4 Taylor polynomial of exp(h*L), which is precomputed
once and applied as a matrix-vector product per step; the scheme (and its
h^4 convergence) is unchanged, only the constant factor.

The same propagator applied to non-Hermitian seeds |ket><bra| yields
Heisenberg-picture matrix elements between different states (quantum
regression), and applied on the doubled space it provides the reference for
the doubled-space trajectory estimators: each block of the doubled density
matrix obeys the original master equation independently.
"""

from dataclasses import dataclass

import numpy as np

from .hilbert import (
    DoubledState,
    Ket,
    LindbladModel,
    Operator,
    extend_model,
    make_doubled_state,
)

__all__ = [
    "DensityMatrix",
    "Liouvillian",
    "DegenerateSteadyStateError",
    "build_liouvillian",
    "evolve",
    "steady_state",
    "regression_matrix_element",
    "doubled_block_evolution",
    "doubled_matrix_element",
    "two_time_correlation",
]

DEFAULT_H_ODE = 1e-3


class DegenerateSteadyStateError(RuntimeError):
    """The Liouvillian kernel is not one-dimensional."""


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense complex matrix, optionally validated as a physical state.

    With ``hermitian=True`` the entries must be Hermitian within 1e-12 and
    positive semidefinite within -1e-10; seeds such as |ket><bra| set
    ``hermitian=False`` and skip validation.  Unit trace is not required
    (sub-normalized blocks are legitimate inputs); trace preservation is
    asserted by :func:`evolve` instead.
    """

    entries: np.ndarray
    hermitian: bool = True

    def __post_init__(self):
        mat = np.asarray(self.entries, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {mat.shape}")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "entries", mat)
        if self.hermitian:
            dev = float(np.max(np.abs(mat - mat.conj().T)))
            if dev > 1e-12:
                raise ValueError(f"matrix flagged hermitian deviates by {dev:.3e}")
            lowest = float(np.linalg.eigvalsh(mat).min())
            if lowest < -1e-10:
                raise ValueError(f"matrix flagged hermitian has eigenvalue {lowest:.3e}")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    @classmethod
    def from_ket(cls, state: Ket) -> "DensityMatrix":
        return cls(np.outer(state.amplitudes, state.amplitudes.conj()), hermitian=True)


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """Generator of the master equation acting on column-stacked matrices."""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.shape != (self.dim**2, self.dim**2):
            raise ValueError(
                f"Liouvillian for dimension {self.dim} must have shape "
                f"{(self.dim**2, self.dim**2)}, got {mat.shape}"
            )
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)


def _vec(rho: np.ndarray) -> np.ndarray:
    # column stacking
    return rho.reshape(-1, order="F")


def _unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return v.reshape((dim, dim), order="F")


def build_liouvillian(model: LindbladModel) -> Liouvillian:
    """Dense Liouvillian in column-stacking convention.

    With vec(A X B) = (B^T kron A) vec(X), the generator reads
    -i(I kron H - H^T kron I)
    + sum_j [ conj(L_j) kron L_j - (1/2) I kron L_j^dag L_j
              - (1/2) (L_j^dag L_j)^T kron I ].
    """
    d = model.dim
    eye = np.eye(d)
    ham = model.hamiltonian.matrix
    gen = -1j * (np.kron(eye, ham) - np.kron(ham.T, eye))
    for op in model.lindblads:
        lmat = op.matrix
        ldl = lmat.conj().T @ lmat
        gen = gen + (
            np.kron(lmat.conj(), lmat)
            - 0.5 * np.kron(eye, ldl)
            - 0.5 * np.kron(ldl.T, eye)
        )
    return Liouvillian(matrix=gen, dim=d)


def _rk4_one_step_map(gen: np.ndarray, h: float) -> np.ndarray:
    # degree-4 Taylor polynomial of exp(h*gen): identical to one classical
    # RK4 step for an autonomous linear right-hand side
    d2 = gen.shape[0]
    acc = np.eye(d2, dtype=complex)
    term = np.eye(d2, dtype=complex)
    for k in range(1, 5):
        term = term @ (h / k * gen)
        acc = acc + term
    return acc


def _validate_grid(t_grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(t_grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) < 0):
        raise ValueError("time grid must be non-decreasing")
    return grid


def _grid_from_zero(t_grid) -> tuple[np.ndarray, bool]:
    """Pad a grid of absolute times so evolution starts at the seed time 0.

    The series wrappers seed their evolution at time zero by construction,
    while :func:`evolve` reads ``t_grid[0]`` as the time of the initial
    state; a grid that starts later is therefore evolved from an implicit
    leading zero whose node is dropped from the result.
    """
    grid = _validate_grid(t_grid)
    if grid[0] < 0:
        raise ValueError(f"grid nodes must be >= 0, got {grid[0]}")
    if grid[0] > 0:
        return np.concatenate([[0.0], grid]), True
    return grid, False


class _VecPropagator:
    """Fixed-step RK4 stepping of vectorized matrices along a time grid."""

    def __init__(self, gen: np.ndarray, h_ode: float):
        if h_ode <= 0:
            raise ValueError(f"h_ode must be positive, got {h_ode}")
        self.gen = gen
        self.h_ode = h_ode
        self._maps: dict[float, np.ndarray] = {}

    def _map_for(self, h: float) -> np.ndarray:
        found = self._maps.get(h)
        if found is None:
            found = _rk4_one_step_map(self.gen, h)
            self._maps[h] = found
        return found

    def run(self, v0: np.ndarray, t_grid: np.ndarray) -> list[np.ndarray]:
        out = [v0.copy()]
        v = v0.copy()
        for gap in np.diff(t_grid):
            if gap > 0:
                n_sub = max(1, int(np.ceil(gap / self.h_ode - 1e-12)))
                step_map = self._map_for(gap / n_sub)
                for _ in range(n_sub):
                    v = step_map @ v
            out.append(v.copy())
        return out


def evolve(
    rho0: DensityMatrix,
    model: LindbladModel,
    t_grid,
    h_ode: float = DEFAULT_H_ODE,
) -> list[DensityMatrix]:
    """Integrate the master equation, returning the state at every grid node.

    ``t_grid[0]`` is the time of ``rho0``.  The trace of the result is
    checked against the seed's trace at every node (the generator is
    trace-preserving; drift beyond 1e-10 raises).
    """
    if rho0.dim != model.dim:
        raise ValueError(f"dimension mismatch: state {rho0.dim}, model {model.dim}")
    grid = _validate_grid(t_grid)
    gen = build_liouvillian(model).matrix
    vecs = _VecPropagator(gen, h_ode).run(_vec(rho0.entries), grid)
    tr0 = complex(np.trace(rho0.entries))
    out = []
    for v in vecs:
        mat = _unvec(v, model.dim)
        drift = abs(complex(np.trace(mat)) - tr0)
        if drift > 1e-10 * (1.0 + abs(tr0)):
            raise RuntimeError(f"trace drift {drift:.3e} exceeds tolerance")
        if rho0.hermitian:
            # integration preserves hermiticity only up to roundoff
            mat = 0.5 * (mat + mat.conj().T)
        out.append(DensityMatrix(mat, hermitian=rho0.hermitian))
    return out


def steady_state(model: LindbladModel, tol: float = 1e-10) -> DensityMatrix:
    """Unique trace-1 kernel element of the Liouvillian via SVD.

    Raises
    ------
    DegenerateSteadyStateError
        If the kernel is empty at tolerance ``tol`` or has dimension > 1.
    """
    gen = build_liouvillian(model).matrix
    _, svals, vh = np.linalg.svd(gen)
    cutoff = tol * float(svals.max()) if svals.size else tol
    null_mask = svals <= cutoff
    n_null = int(np.sum(null_mask))
    if n_null != 1:
        raise DegenerateSteadyStateError(
            f"Liouvillian kernel has dimension {n_null} at tolerance {tol:g}; "
            "the steady state is not unique"
        )
    candidate = _unvec(vh[-1].conj(), model.dim)
    candidate = 0.5 * (candidate + candidate.conj().T)
    tr = complex(np.trace(candidate))
    if abs(tr) < 1e-12:
        raise DegenerateSteadyStateError("kernel element is traceless")
    rho = candidate / tr
    residual = float(np.linalg.norm(gen @ _vec(rho)))
    if residual > 1e-8:
        raise RuntimeError(f"steady-state residual {residual:.3e} too large")
    return DensityMatrix(rho, hermitian=True)


def regression_matrix_element(
    observable: Operator,
    bra_state: Ket,
    ket_state: Ket,
    model: LindbladModel,
    t_grid,
    h_ode: float = DEFAULT_H_ODE,
) -> np.ndarray:
    """Heisenberg-picture matrix element series <bra| A(t) |ket>.

    Evolves the seed |ket><bra| with the master-equation propagator and
    returns Tr{A X(t)} at every node of ``t_grid``.  Nodes are absolute
    times with the seed at zero; the grid itself need not contain zero.
    """
    if observable.dim != model.dim:
        raise ValueError(
            f"dimension mismatch: observable {observable.dim}, model {model.dim}"
        )
    grid, padded = _grid_from_zero(t_grid)
    seed = DensityMatrix(
        np.outer(ket_state.amplitudes, bra_state.amplitudes.conj()), hermitian=False
    )
    states = evolve(seed, model, grid, h_ode)
    if padded:
        states = states[1:]
    return np.array(
        [complex(np.trace(observable.matrix @ s.entries)) for s in states]
    )


def doubled_block_evolution(
    bra_state: Ket,
    ket_state: Ket,
    model: LindbladModel,
    t_grid,
    h_ode: float = DEFAULT_H_ODE,
) -> list[DensityMatrix]:
    """Evolve the doubled-space projector of the stacked pair.

    The seed is the rank-1 projector of (bra_state, ket_state)/sqrt(2); its
    lower-left block |ket><bra|/2 carries the matrix-element information and,
    like every block, obeys the original master equation on its own.  Nodes
    are absolute times with the seed at zero.
    """
    theta0 = make_doubled_state(bra_state, ket_state)
    grid, padded = _grid_from_zero(t_grid)
    seed = DensityMatrix(
        np.outer(theta0.vector(), theta0.vector().conj()), hermitian=True
    )
    states = evolve(seed, extend_model(model), grid, h_ode)
    return states[1:] if padded else states


def doubled_matrix_element(
    observable: Operator,
    bra_state: Ket,
    ket_state: Ket,
    model: LindbladModel,
    t_grid,
    h_ode: float = DEFAULT_H_ODE,
) -> np.ndarray:
    """Matrix element series 2 Tr{A rho_21(t)} from the doubled evolution."""
    d = model.dim
    states = doubled_block_evolution(bra_state, ket_state, model, t_grid, h_ode)
    return np.array(
        [
            2.0 * complex(np.trace(observable.matrix @ s.entries[d:, :d]))
            for s in states
        ]
    )


def two_time_correlation(
    observable: Operator,
    perturbation: Operator,
    model: LindbladModel,
    t: float,
    tau_grid,
    rho0: DensityMatrix | None = None,
    h_ode: float = DEFAULT_H_ODE,
) -> np.ndarray:
    """Correlation series <A(t + tau) B(t)> for tau over ``tau_grid``.

    ``rho0`` (default: the steady state) is evolved to time ``t``, the seed
    B rho(t) is formed, propagated over ``tau_grid``, and Tr{A X(tau)} is
    returned at every node.  At tau = 0 this is Tr{A B rho(t)}; tau nodes
    are absolute delays with the seed at tau = 0.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    start = steady_state(model) if rho0 is None else rho0
    if t > 0:
        rho_t = evolve(start, model, np.array([0.0, t]), h_ode)[-1].entries
    else:
        rho_t = start.entries
    grid, padded = _grid_from_zero(tau_grid)
    seed = DensityMatrix(perturbation.matrix @ rho_t, hermitian=False)
    evolved = evolve(seed, model, grid, h_ode)
    if padded:
        evolved = evolved[1:]
    return np.array(
        [complex(np.trace(observable.matrix @ s.entries)) for s in evolved]
    )
