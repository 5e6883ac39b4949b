"""Linear operators on grid and finite-basis states.

Grid derivative operators come in two discretizations:

* ``"stencil"``: second-order centered differences with periodic wrap.
  Plane-wave symbols are (1 - cos kh)/(m h^2) for the kinetic term and
  sin(kh)/h for the first derivative.
* ``"spectral"``: FFT differentiation, exact for band-limited states.

Pair potentials are functions of the minimum-image separation of two
particles, with analytic gradients and Laplacians (no finite
differencing of potential fields anywhere).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .state import FiniteBasis, GridBasis, HilbertState

__all__ = [
    "LinearOperator",
    "IdentityOperator",
    "DiagonalOperator",
    "MatrixOperator",
    "KineticOperator",
    "MomentumOperator",
    "AngularMomentumZOperator",
    "SumOperator",
    "SoftCoulomb",
    "GaussianWell",
    "InteractionPair",
    "separation_components",
    "separation_sq",
    "potential_field",
    "potential_gradient",
    "potential_laplacian",
    "kinetic_symbol",
    "hamiltonian_operator",
    "commutator_residual",
    "derivative1",
    "derivative2",
]

SCHEMES = ("stencil", "spectral")


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ValueError("scheme must be one of %s, got %r" % (SCHEMES, scheme))


def _wavenumbers(n, spacing):
    return 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)


def derivative1(arr, axis, spacing, scheme):
    """First derivative along one axis, periodic boundaries."""
    _check_scheme(scheme)
    if scheme == "stencil":
        return (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) / (2.0 * spacing)
    k = _wavenumbers(arr.shape[axis], spacing)
    shape = [1] * arr.ndim
    shape[axis] = arr.shape[axis]
    return np.fft.ifft(1j * k.reshape(shape) * np.fft.fft(arr, axis=axis), axis=axis)


def derivative2(arr, axis, spacing, scheme):
    """Second derivative along one axis, periodic boundaries."""
    _check_scheme(scheme)
    if scheme == "stencil":
        return (np.roll(arr, -1, axis=axis) - 2.0 * arr + np.roll(arr, 1, axis=axis)) / (spacing * spacing)
    k = _wavenumbers(arr.shape[axis], spacing)
    shape = [1] * arr.ndim
    shape[axis] = arr.shape[axis]
    return np.fft.ifft(-(k.reshape(shape) ** 2) * np.fft.fft(arr, axis=axis), axis=axis)


class LinearOperator:
    """Base class: knows how to apply itself to an amplitude array."""

    hermitian = True
    diagonal_values = None

    def apply(self, amplitudes: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityOperator(LinearOperator):
    def apply(self, amplitudes):
        return amplitudes


class DiagonalOperator(LinearOperator):
    """Pointwise multiplication by a (broadcastable) value field."""

    def __init__(self, values):
        values = np.asarray(values)
        self.values = values
        self.hermitian = bool(np.isrealobj(values))

    @property
    def diagonal_values(self):
        return self.values

    def apply(self, amplitudes):
        return self.values * amplitudes


class MatrixOperator(LinearOperator):
    """Dense matrix on a finite basis."""

    def __init__(self, matrix):
        matrix = np.asarray(matrix, dtype=np.complex128)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square, got shape %s" % (matrix.shape,))
        self.matrix = matrix
        self.hermitian = bool(np.allclose(matrix, matrix.conj().T, atol=1e-13))

    @property
    def diagonal_values(self):
        off = self.matrix - np.diag(np.diag(self.matrix))
        if np.any(off != 0):
            return None
        return np.diag(self.matrix).real if self.hermitian else np.diag(self.matrix)

    def apply(self, amplitudes):
        return self.matrix @ amplitudes


class KineticOperator(LinearOperator):
    """Sum over axes of -(1/2 m_axis) d^2/dx^2."""

    def __init__(self, basis: GridBasis, scheme="spectral"):
        _check_scheme(scheme)
        self.basis = basis
        self.scheme = scheme

    def apply(self, amplitudes):
        h = self.basis.grid.spacing
        out = np.zeros_like(amplitudes, dtype=np.complex128)
        for axis in range(self.basis.n_axes):
            m = self.basis.axis_mass(axis)
            out += derivative2(amplitudes, axis, h, self.scheme) / (-2.0 * m)
        return out


class MomentumOperator(LinearOperator):
    """Total momentum component: -i sum_particles d/dx_{p,dim}."""

    def __init__(self, basis: GridBasis, dim=0, scheme="spectral"):
        _check_scheme(scheme)
        if not 0 <= dim < basis.grid.dims:
            raise ValueError("dim %d out of range for %d-D grid" % (dim, basis.grid.dims))
        self.basis = basis
        self.dim = dim
        self.scheme = scheme

    def apply(self, amplitudes):
        h = self.basis.grid.spacing
        out = np.zeros_like(amplitudes, dtype=np.complex128)
        for p in range(len(self.basis.particles)):
            axis = self.basis.particle_axis(p, self.dim)
            out += derivative1(amplitudes, axis, h, self.scheme)
        return -1j * out


class AngularMomentumZOperator(LinearOperator):
    """Total L_z = sum_particles -i (x d/dy - y d/dx). Needs dims >= 2."""

    def __init__(self, basis: GridBasis, scheme="spectral"):
        _check_scheme(scheme)
        if basis.grid.dims < 2:
            raise ValueError("angular momentum needs at least a 2-D grid")
        self.basis = basis
        self.scheme = scheme

    def apply(self, amplitudes):
        h = self.basis.grid.spacing
        out = np.zeros_like(amplitudes, dtype=np.complex128)
        for p in range(len(self.basis.particles)):
            ax_x = self.basis.particle_axis(p, 0)
            ax_y = self.basis.particle_axis(p, 1)
            x = self.basis.axis_coordinate(ax_x)
            y = self.basis.axis_coordinate(ax_y)
            out += x * derivative1(amplitudes, ax_y, h, self.scheme)
            out -= y * derivative1(amplitudes, ax_x, h, self.scheme)
        return -1j * out


class SumOperator(LinearOperator):
    def __init__(self, *ops):
        self.ops = ops
        self.hermitian = all(op.hermitian for op in ops)

    def apply(self, amplitudes):
        out = self.ops[0].apply(amplitudes)
        for op in self.ops[1:]:
            out = out + op.apply(amplitudes)
        return out


# ---------------------------------------------------------------------------
# Pair potentials


@dataclass(frozen=True)
class SoftCoulomb:
    """V(r) = strength / sqrt(r^2 + softening^2).

    Positive strength is repulsive; negative is attractive with well
    depth |strength|/softening at contact.
    """

    strength: float
    softening: float

    def __post_init__(self):
        if not self.softening > 0:
            raise ValueError("softening must be positive")
        if self.strength == 0:
            raise ValueError("strength must be nonzero")

    @property
    def sign(self) -> int:
        return 1 if self.strength > 0 else -1

    def value_u(self, u):
        return self.strength / np.sqrt(u + self.softening ** 2)

    def dvalue_u(self, u):
        return -0.5 * self.strength * (u + self.softening ** 2) ** -1.5

    def d2value_u(self, u):
        return 0.75 * self.strength * (u + self.softening ** 2) ** -2.5

    def max_magnitude(self) -> float:
        return abs(self.strength) / self.softening


@dataclass(frozen=True)
class GaussianWell:
    """V(r) = strength * exp(-r^2 / (2 width^2)).

    Positive strength is a repulsive bump, negative an attractive well
    of depth |strength|.
    """

    strength: float
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("width must be positive")
        if self.strength == 0:
            raise ValueError("strength must be nonzero")

    @property
    def sign(self) -> int:
        return 1 if self.strength > 0 else -1

    def value_u(self, u):
        return self.strength * np.exp(-u / (2.0 * self.width ** 2))

    def dvalue_u(self, u):
        return self.value_u(u) * (-0.5 / self.width ** 2)

    def d2value_u(self, u):
        return self.value_u(u) * (0.25 / self.width ** 4)

    def max_magnitude(self) -> float:
        return abs(self.strength)


@dataclass(frozen=True)
class InteractionPair:
    """A two-particle interaction: particle indices and the potential."""

    j: int
    k: int
    potential: SoftCoulomb | GaussianWell

    def __post_init__(self):
        if self.j == self.k:
            raise ValueError("an interaction pair needs two distinct particles")


def separation_components(basis: GridBasis, j: int, k: int) -> list[np.ndarray]:
    """Minimum-image components of x_j - x_k, broadcastable fields."""
    out = []
    for d in range(basis.grid.dims):
        cj = basis.axis_coordinate(basis.particle_axis(j, d))
        ck = basis.axis_coordinate(basis.particle_axis(k, d))
        out.append(basis.wrap_separation(cj - ck))
    return out


def separation_sq(basis: GridBasis, j: int, k: int) -> np.ndarray:
    comps = separation_components(basis, j, k)
    u = comps[0] ** 2
    for c in comps[1:]:
        u = u + c ** 2
    return u


def potential_field(basis: GridBasis, pair: InteractionPair) -> np.ndarray:
    """Diagonal potential values over configuration space."""
    return pair.potential.value_u(separation_sq(basis, pair.j, pair.k))


def potential_gradient(basis: GridBasis, pair: InteractionPair, particle: int) -> list[np.ndarray]:
    """Analytic gradient of the pair potential w.r.t. one particle.

    Returns one field per spatial dimension. The gradients w.r.t. the
    two members are exact negatives of each other at every grid point:
    grad_k V = -grad_j V, since V depends only on x_j - x_k.
    """
    if particle == pair.j:
        orient = 1.0
    elif particle == pair.k:
        orient = -1.0
    else:
        raise ValueError("particle %d is not a member of the pair" % particle)
    comps = separation_components(basis, pair.j, pair.k)
    u = comps[0] ** 2
    for c in comps[1:]:
        u = u + c ** 2
    dv = pair.potential.dvalue_u(u)
    return [orient * 2.0 * c * dv for c in comps]


def potential_laplacian(basis: GridBasis, pair: InteractionPair) -> np.ndarray:
    """Analytic Laplacian w.r.t. either particle (equal for both).

    For V(u), u = |r|^2 in D spatial dimensions:
    lap V = 2 D V'(u) + 4 u V''(u).
    """
    u = separation_sq(basis, pair.j, pair.k)
    d = basis.grid.dims
    return 2.0 * d * pair.potential.dvalue_u(u) + 4.0 * u * pair.potential.d2value_u(u)


def kinetic_symbol(basis: GridBasis, scheme="spectral") -> np.ndarray:
    """Fourier-space eigenvalues of the kinetic operator, full shape.

    spectral: sum_axes k^2 / (2 m); stencil: sum_axes (1 - cos kh)/(m h^2),
    which is exactly the plane-wave symbol of the centered stencil.
    """
    _check_scheme(scheme)
    n = basis.grid.points_per_axis
    h = basis.grid.spacing
    k = _wavenumbers(n, h)
    total = np.zeros((1,) * basis.n_axes)
    for axis in range(basis.n_axes):
        m = basis.axis_mass(axis)
        shape = [1] * basis.n_axes
        shape[axis] = n
        if scheme == "spectral":
            term = (k ** 2) / (2.0 * m)
        else:
            term = (1.0 - np.cos(k * h)) / (m * h * h)
        total = total + term.reshape(shape)
    return total


def hamiltonian_operator(basis: GridBasis, pairs, scheme="spectral") -> LinearOperator:
    """Kinetic term plus the summed pair-potential diagonal."""
    kin = KineticOperator(basis, scheme)
    if not pairs:
        return kin
    v = potential_field(basis, pairs[0])
    for pair in pairs[1:]:
        v = v + potential_field(basis, pair)
    return SumOperator(kin, DiagonalOperator(v))


def commutator_residual(q_op: LinearOperator, v_values: np.ndarray, state: HilbertState) -> float:
    """|| Q(v psi) - v(Q psi) || / || psi ||.

    Vanishing residual is what transfers conservation of Q from the
    Hamiltonian flow to the stochastic shifts; on a grid it measures
    pure discretization error when the continuum commutator is zero.
    """
    amp = state.amplitudes
    diff = q_op.apply(v_values * amp) - v_values * q_op.apply(amp)
    w = state.basis.weight
    num = np.sqrt(np.vdot(diff, diff).real * w)
    den = np.sqrt(np.vdot(amp, amp).real * w)
    if den == 0.0:
        raise ValueError("commutator residual of a zero state is undefined")
    return float(num / den)
