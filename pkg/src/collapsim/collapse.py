"""Norm-centered stochastic shift operators and their rate parameter.

The stochastic term of the dynamics multiplies the state by a diagonal
built from a two-particle interaction potential: the potential is
centered by its current expectation, scaled by the square root of a
rate parameter, and divided by the summed rest energy of the pair. The
rate parameter is dimensionally a frequency: the magnitude of the rate
of change of the interaction energy of the interaction-weighted
component, divided by a bound on the energy available to that
component.

Everything here works in natural units (hbar = 1) on grid states; a
finite-basis path takes the rate as an explicit input because labeled
bases carry no derivatives.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .operators import (
    GaussianWell,
    InteractionPair,
    LinearOperator,
    SoftCoulomb,
    derivative1,
    potential_field,
    potential_gradient,
    potential_laplacian,
    separation_components,
    separation_sq,
)
from .state import GridBasis, HilbertState, normalize

__all__ = [
    "DegenerateProjectionError",
    "DegenerateProjectionWarning",
    "RateParams",
    "CollapseOperator",
    "interacting_component",
    "rate_numerator",
    "rate_denominator",
    "rate_denominator_bound_state",
    "rate_params",
    "gamma",
    "build_collapse_operator",
    "collapse_from_diagonal",
    "collapse_sum",
    "total_diagonal",
    "characteristic_time",
]

# relative threshold on <V> below which the interaction-weighted
# projection is treated as nonexistent
DEGENERATE_RTOL = 1e-14


class DegenerateProjectionError(ValueError):
    """The interaction expectation is zero: no interacting component."""


class DegenerateProjectionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RateParams:
    """Rate numerator and denominator (energies per time and energy)."""

    numerator: float
    denominator: float
    gamma: float
    degenerate: bool = False


def _mean_potential(state: HilbertState, values) -> float:
    dens = state.density()
    total = dens.sum() * state.basis.weight
    if total == 0.0:
        raise ValueError("zero state")
    return float((dens * values).sum() * state.basis.weight / total)


def interacting_component(state: HilbertState, pair: InteractionPair) -> HilbertState:
    """Interaction-weighted component (V/<V>) psi. Grid backend only.

    Raises ``DegenerateProjectionError`` when |<V>| falls below
    1e-14 times the potential's peak magnitude, i.e. when the state
    has no overlap with the interaction.
    """
    basis = state.basis
    if not isinstance(basis, GridBasis):
        raise TypeError("interacting_component needs a grid-backed state")
    v = potential_field(basis, pair)
    mean = _mean_potential(state, v)
    if abs(mean) <= DEGENERATE_RTOL * pair.potential.max_magnitude():
        raise DegenerateProjectionError(
            "interaction expectation %.3e is degenerate" % mean)
    return state.with_amplitudes((v / mean) * state.amplitudes)


def _gradient_dot_relative(basis, pair, amp, scheme):
    """sum_d grad_j V_d * (d_j psi / m_j - d_k psi / m_k), as a field."""
    h = basis.grid.spacing
    mj = basis.particles[pair.j].mass
    mk = basis.particles[pair.k].mass
    grads = potential_gradient(basis, pair, particle=pair.j)
    out = np.zeros(basis.shape, dtype=np.complex128)
    for d in range(basis.grid.dims):
        dj = derivative1(amp, basis.particle_axis(pair.j, d), h, scheme)
        dk = derivative1(amp, basis.particle_axis(pair.k, d), h, scheme)
        out += grads[d] * (dj / mj - dk / mk)
    return out


def rate_numerator(state: HilbertState, pair: InteractionPair, scheme="spectral") -> float:
    """Magnitude of the interaction-energy drain rate of (V/<V>) psi.

    Equal to |d<V>/dt| of the normalized interaction-weighted
    component under the pair Hamiltonian, evaluated from analytic
    potential derivatives instead of a time difference.
    """
    basis = state.basis
    comp = normalize(interacting_component(state, pair))
    amp = comp.amplitudes
    mj = basis.particles[pair.j].mass
    mk = basis.particles[pair.k].mass
    lap = potential_laplacian(basis, pair)
    term1 = comp.density() * lap * (0.5 / mj + 0.5 / mk)
    term2 = amp.conj() * _gradient_dot_relative(basis, pair, amp, scheme)
    integral = (term1 + term2).sum() * basis.weight
    return float(abs(integral))


def _relative_derivative(basis, pair, amp, d, scheme):
    # mass-weighted relative coordinate derivative: moves the pair apart
    # while leaving the center of mass fixed
    h = basis.grid.spacing
    mj = basis.particles[pair.j].mass
    mk = basis.particles[pair.k].mass
    total = mj + mk
    dj = derivative1(amp, basis.particle_axis(pair.j, d), h, scheme)
    dk = derivative1(amp, basis.particle_axis(pair.k, d), h, scheme)
    return (mk * dj - mj * dk) / total


def _radial_second_derivative(basis, pair, amp, scheme):
    """(rhat . grad_rel)^2 psi; isotropic average where r = 0."""
    dims = basis.grid.dims
    if dims == 1:
        first = _relative_derivative(basis, pair, amp, 0, scheme)
        return _relative_derivative(basis, pair, first, 0, scheme)
    comps = separation_components(basis, pair.j, pair.k)
    u = separation_sq(basis, pair.j, pair.k)
    firsts = [_relative_derivative(basis, pair, amp, d, scheme) for d in range(dims)]
    out = np.zeros(basis.shape, dtype=np.complex128)
    trace = np.zeros(basis.shape, dtype=np.complex128)
    safe_u = np.where(u > 0, u, 1.0)
    for d in range(dims):
        for e in range(dims):
            second = _relative_derivative(basis, pair, firsts[e], d, scheme)
            out += (comps[d] * comps[e] / safe_u) * second
            if d == e:
                trace += second
    return np.where(np.broadcast_to(u > 0, out.shape), out, trace / dims)


def rate_denominator(state: HilbertState, pair: InteractionPair, scheme="spectral") -> float:
    """Energy bound on the interaction-weighted component.

    Positive (repulsive) potentials: interaction energy plus the
    relative-coordinate radial term
    integral psi* [V psi - (1/mu) d^2 psi/dr^2], mu = mj mk/(mj+mk).
    Negative (attractive) potentials: the bound-state bound from
    ``rate_denominator_bound_state``.
    """
    if pair.potential.sign < 0:
        return rate_denominator_bound_state(pair.potential)
    basis = state.basis
    comp = normalize(interacting_component(state, pair))
    amp = comp.amplitudes
    mj = basis.particles[pair.j].mass
    mk = basis.particles[pair.k].mass
    mu = mj * mk / (mj + mk)
    v = potential_field(basis, pair)
    radial = _radial_second_derivative(basis, pair, amp, scheme)
    integrand = amp.conj() * (v * amp - radial / mu)
    return float(integrand.sum().real * basis.weight)


def rate_denominator_bound_state(potential, angular_momentum: float = 0.0) -> float:
    """Depth of the effective radial potential for the lowest state.

    Convention for attractive potentials: the energy scale of the
    deepest available state is bounded by the sup norm of
    |V + L^2/r^2|; with L = 0 (the only case used here) that is the
    well depth at contact. Isolated in this one function so a
    different reading of "lowest available state" replaces one place.
    """
    if angular_momentum != 0.0:
        raise NotImplementedError("only the L = 0 branch is implemented")
    return potential.max_magnitude()


def rate_params(state: HilbertState, pair: InteractionPair, scheme="spectral") -> RateParams:
    """Rate parameter with its two factors; degenerate overlap gives 0."""
    try:
        num = rate_numerator(state, pair, scheme)
        den = rate_denominator(state, pair, scheme)
    except DegenerateProjectionError:
        return RateParams(0.0, 0.0, 0.0, degenerate=True)
    if not den > 0:
        # an unbound ratio has no collapse interpretation; treat as off
        return RateParams(num, den, 0.0, degenerate=True)
    return RateParams(num, den, num / den, degenerate=False)


def gamma(state: HilbertState, pair: InteractionPair, scheme="spectral") -> float:
    """Collapse rate parameter; 0 (with a warning) on degenerate overlap."""
    params = rate_params(state, pair, scheme)
    if params.degenerate:
        warnings.warn("no interacting component; rate set to 0",
                      DegenerateProjectionWarning, stacklevel=2)
    return params.gamma


class CollapseOperator(LinearOperator):
    """Diagonal stochastic shift generator for one interaction pair.

    apply() multiplies by kappa * sqrt(gamma) * (V - <V>) / E_pair,
    where E_pair is the summed rest energy (m_j + m_k) c^2 and kappa
    is a dimensionless study gain (kappa = 1 is the physical setting).
    """

    def __init__(self, centered, gamma_value, energy_denominator, kappa=1.0, pair=None):
        if not energy_denominator > 0:
            raise ValueError("energy denominator must be positive")
        if gamma_value < 0:
            raise ValueError("rate parameter must be nonnegative")
        if kappa < 0:
            raise ValueError("gain must be nonnegative")
        self.centered = np.asarray(centered, dtype=float)
        self.gamma = float(gamma_value)
        self.energy_denominator = float(energy_denominator)
        self.kappa = float(kappa)
        self.pair = pair
        self.scaled_values = (self.kappa * np.sqrt(self.gamma) / self.energy_denominator) * self.centered
        self.hermitian = True

    @property
    def diagonal_values(self):
        return self.scaled_values

    def apply(self, amplitudes):
        return self.scaled_values * amplitudes


def build_collapse_operator(state, pair, kappa=1.0, c=1.0, scheme="spectral",
                            gamma_value=None) -> CollapseOperator:
    """Grid-backend construction; gamma computed from the state unless given."""
    basis = state.basis
    if not isinstance(basis, GridBasis):
        raise TypeError("grid-backed state required; use collapse_from_diagonal "
                        "for finite bases")
    v = potential_field(basis, pair)
    centered = v - _mean_potential(state, v)
    if gamma_value is None:
        gamma_value = rate_params(state, pair, scheme).gamma
    e_den = (basis.particles[pair.j].mass + basis.particles[pair.k].mass) * c * c
    return CollapseOperator(centered, gamma_value, e_den, kappa, pair)


def collapse_from_diagonal(state, values, gamma_value, energy_denominator,
                           kappa=1.0) -> CollapseOperator:
    """Finite-basis construction from explicit diagonal interaction values."""
    values = np.asarray(values, dtype=float)
    centered = values - _mean_potential(state, values)
    return CollapseOperator(centered, gamma_value, energy_denominator, kappa)


def collapse_sum(state, pairs, kappa=1.0, c=1.0, scheme="spectral") -> list[CollapseOperator]:
    """One operator per pair, all centered against the same state."""
    return [build_collapse_operator(state, p, kappa, c, scheme) for p in pairs]


def total_diagonal(ops) -> np.ndarray:
    """Summed scaled diagonal of a list of collapse operators."""
    if not ops:
        raise ValueError("no collapse operators given")
    total = ops[0].scaled_values
    for op in ops[1:]:
        total = total + op.scaled_values
    return total


def characteristic_time(delta_v: float, hbar: float = 1.0) -> float:
    """Interaction timescale hbar / delta_v for an energy spread delta_v."""
    if not delta_v > 0:
        raise ValueError("energy spread must be positive, got %r" % (delta_v,))
    return hbar / delta_v
