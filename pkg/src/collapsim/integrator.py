"""Itô stepping of the nonlinear stochastic Schroedinger flow.

Each step applies the stochastic shift first, with all coefficients
evaluated at the step's starting state (Ito convention), then a
deterministic unitary sub-step:

    psi -> psi + D psi dxi - (1/2) D^2 psi dt        (shift, D diagonal)
    psi -> U(dt) psi                                  (unitary)

followed by optional renormalization. D sums the scaled diagonals of
every collapse operator active in the step. When the summed diagonal
is exactly zero (kappa = 0, or no pairs) the shift branch is skipped
entirely, so such runs are bit-identical to the bare unitary flow.

The unitary sub-step is either a Strang-split spectral propagator
(exact free kinetic phase) or a Crank-Nicolson update of the
three-point stencil Hamiltonian; the stencil symbol is diagonal in
the Fourier basis too, so both are applied as cached phase arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collapse import collapse_from_diagonal, collapse_sum, total_diagonal
from .noise import WienerProcess
from .operators import (
    AngularMomentumZOperator,
    InteractionPair,
    KineticOperator,
    LinearOperator,
    MomentumOperator,
    hamiltonian_operator,
    kinetic_symbol,
    potential_field,
)
from .state import (
    FiniteBasis,
    GridBasis,
    HilbertState,
    branch_decompose,
    expectation,
    norm,
)

__all__ = [
    "IntegratorConfig",
    "UnitaryStepper",
    "StepDiagnostics",
    "DensityChange",
    "TrajectoryRecord",
    "EnsembleResult",
    "ito_step",
    "density_change_decomposition",
    "run_trajectory",
    "run_schrodinger_reference",
    "run_ensemble",
]

SCHEMES = ("split_step_spectral", "crank_nicolson_stencil")


@dataclass
class IntegratorConfig:
    """Step size, scheme and collapse coupling for one run.

    ``gamma_override`` and ``energy_denominator`` feed the finite-basis
    backend, where no interaction geometry exists to derive them from.
    """

    dt: float
    n_steps: int
    scheme: str = "split_step_spectral"
    kappa: float = 1.0
    c: float = 1.0
    renormalize: bool = True
    real_noise: bool = False
    record_every: int = 1
    absorb_threshold: float = 1e-3
    stop_on_absorb: bool = True
    gamma_override: float | None = None
    energy_denominator: float | None = None
    record_observables: tuple = ()

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if self.kappa < 0.0:
            raise ValueError("kappa must be non-negative")
        if self.c <= 0.0:
            raise ValueError("c must be positive")
        if not 0.0 < self.absorb_threshold < 0.5:
            raise ValueError("absorb_threshold must lie in (0, 0.5)")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")

    @property
    def derivative_scheme(self) -> str:
        return "spectral" if self.scheme == "split_step_spectral" else "stencil"

    def validate_grid(self, basis: GridBasis) -> None:
        """Stencil time steps must resolve the fastest lattice mode."""
        if self.scheme != "crank_nicolson_stencil":
            return
        h = basis.grid.spacing
        bound = 0.25 * h * h * min(basis.masses)
        if self.dt > bound:
            raise ValueError(
                f"dt={self.dt:g} exceeds stencil stability bound {bound:g} "
                f"(0.25 * h^2 * min mass)"
            )


class UnitaryStepper:
    """Cached one-step propagator for the deterministic sub-step."""

    def __init__(self, basis, dt: float, scheme: str = "split_step_spectral",
                 pairs: tuple = (), hamiltonian: LinearOperator | None = None):
        self.dt = float(dt)
        self.scheme = scheme
        if isinstance(basis, GridBasis):
            self._mode = "grid"
            symbol = kinetic_symbol(basis, scheme="spectral" if scheme == "split_step_spectral" else "stencil")
            if scheme == "split_step_spectral":
                self._kinetic_phase = np.exp(-1j * dt * symbol)
            else:
                # Cayley transform of the stencil symbol: unconditionally
                # unitary, second order, no linear solve needed since the
                # stencil diagonalizes in the Fourier basis.
                half = 0.5j * dt * symbol
                self._kinetic_phase = (1.0 - half) / (1.0 + half)
            if pairs:
                v_total = np.zeros(basis.shape)
                for pair in pairs:
                    v_total = v_total + potential_field(basis, pair)
                self._half_potential_phase = np.exp(-0.5j * dt * v_total)
            else:
                self._half_potential_phase = None
        elif isinstance(basis, FiniteBasis):
            self._mode = "matrix"
            if hamiltonian is None:
                self._propagator = None
            else:
                n = len(basis.labels)
                h_mat = np.zeros((n, n), complex)
                eye = np.eye(n, dtype=complex)
                for col in range(n):
                    h_mat[:, col] = hamiltonian.apply(eye[:, col])
                vals, vecs = np.linalg.eigh(h_mat)
                self._propagator = (vecs * np.exp(-1j * dt * vals)) @ vecs.conj().T
        else:
            raise TypeError(f"unsupported basis type {type(basis).__name__}")

    def step(self, amplitudes: np.ndarray) -> np.ndarray:
        if self._mode == "matrix":
            if self._propagator is None:
                return amplitudes
            return self._propagator @ amplitudes
        if self._half_potential_phase is None:
            return np.fft.ifftn(self._kinetic_phase * np.fft.fftn(amplitudes))
        amp = self._half_potential_phase * amplitudes
        amp = np.fft.ifftn(self._kinetic_phase * np.fft.fftn(amp))
        return self._half_potential_phase * amp


@dataclass(frozen=True)
class StepDiagnostics:
    norm_before_renormalize: float
    shift_applied: bool


@dataclass(frozen=True)
class DensityChange:
    """First-order density budget of one step, both fields real.

    ``hamiltonian_part`` integrates to zero on the grid (probability
    transport); ``stochastic_part`` integrates to the pre-renormalization
    norm change produced by the shift.
    """

    hamiltonian_part: np.ndarray
    stochastic_part: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.hamiltonian_part + self.stochastic_part


def ito_step(state: HilbertState, collapse_ops, increment: complex,
             config: IntegratorConfig, stepper: UnitaryStepper | None = None):
    """One full step; returns the new state plus StepDiagnostics."""
    amp = state.amplitudes
    shift_applied = False
    if collapse_ops:
        diag = total_diagonal(collapse_ops)
        if np.any(diag != 0.0):
            amp = amp * (1.0 + diag * increment - 0.5 * diag * diag * config.dt)
            shift_applied = True
    if stepper is not None:
        amp = stepper.step(amp)
    new = state.with_amplitudes(amp, time=state.time + config.dt)
    norm_pre = norm(new)
    if config.renormalize:
        if norm_pre == 0.0:
            raise FloatingPointError("state norm collapsed to zero during a step")
        new = new.with_amplitudes(new.amplitudes / norm_pre)
    return new, StepDiagnostics(norm_before_renormalize=norm_pre, shift_applied=shift_applied)


def density_change_decomposition(state: HilbertState, collapse_ops, increment: complex,
                                 config: IntegratorConfig,
                                 hamiltonian: LinearOperator | None = None) -> DensityChange:
    """Split the leading-order density change into transport and shift parts.

    Evaluated at the step's starting state, matching the Ito convention
    of ``ito_step``. Both returned fields carry the basis weight of the
    state's own quadrature, i.e. summing ``field * weight`` integrates.
    """
    amp = state.amplitudes
    if hamiltonian is not None:
        h_amp = hamiltonian.apply(amp)
        ham_part = (1j * (np.conj(h_amp) * amp - np.conj(amp) * h_amp) * config.dt).real
    else:
        ham_part = np.zeros(amp.shape)
    if collapse_ops:
        diag = total_diagonal(collapse_ops)
        dens = (np.conj(amp) * amp).real
        stoch_part = dens * diag * (2.0 * np.real(increment))
    else:
        stoch_part = np.zeros(amp.shape)
    return DensityChange(hamiltonian_part=ham_part, stochastic_part=stoch_part)


@dataclass
class TrajectoryRecord:
    """Recorded time series of one stochastic run."""

    times: np.ndarray
    weight_in: np.ndarray
    weight_out: np.ndarray
    norms_before_renormalize: np.ndarray
    expectations: dict = field(default_factory=dict)
    outcome: str | None = None
    steps_taken: int = 0
    seed: int = 0
    final_state: HilbertState | None = None

    @property
    def max_norm_drift(self) -> float:
        if self.norms_before_renormalize.size == 0:
            return 0.0
        return float(np.max(np.abs(self.norms_before_renormalize - 1.0)))


def _build_observables(basis, names, config, pairs, hamiltonian):
    ops = {}
    scheme = config.derivative_scheme
    for name in names:
        if isinstance(basis, GridBasis):
            if name == "momentum":
                ops[name] = MomentumOperator(basis, dim=0, scheme=scheme)
            elif name == "momentum_y":
                ops[name] = MomentumOperator(basis, dim=1, scheme=scheme)
            elif name == "angular_momentum":
                ops[name] = AngularMomentumZOperator(basis, scheme=scheme)
            elif name == "kinetic":
                ops[name] = KineticOperator(basis, scheme=scheme)
            elif name == "energy":
                ops[name] = hamiltonian_operator(basis, pairs, scheme=scheme)
            else:
                raise ValueError(f"unknown observable {name!r}")
        else:
            if name == "energy" and hamiltonian is not None:
                ops[name] = hamiltonian
            else:
                raise ValueError(f"observable {name!r} not available on a finite basis")
    return ops


def _branch_conditional(state, op, in_mask, out_mask):
    """Branch-normalized expectations (nan where a branch is empty)."""
    amp = state.amplitudes
    applied = op.apply(amp)
    local = (np.conj(amp) * applied).real
    dens = (np.conj(amp) * amp).real
    out = []
    for mask in (in_mask, out_mask):
        w = float(np.sum(dens[mask]))
        out.append(float(np.sum(local[mask]) / w) if w > 0.0 else float("nan"))
    return out


def _collapse_ops_for(state, pairs, config, finite_potential):
    if pairs:
        return collapse_sum(state, pairs, kappa=config.kappa, c=config.c,
                            scheme=config.derivative_scheme)
    if finite_potential is not None:
        if config.gamma_override is None or config.energy_denominator is None:
            raise ValueError(
                "finite-basis collapse runs need gamma_override and energy_denominator"
            )
        return [collapse_from_diagonal(state, finite_potential,
                                       gamma_value=config.gamma_override,
                                       energy_denominator=config.energy_denominator,
                                       kappa=config.kappa)]
    return []


def run_trajectory(initial: HilbertState, config: IntegratorConfig, pairs=(), seed: int = 0,
                   finite_potential=None, hamiltonian: LinearOperator | None = None,
                   per_step=None) -> TrajectoryRecord:
    """Integrate one stochastic trajectory from ``initial``.

    Grid runs derive the collapse operator of every pair afresh each
    step (the rate tracks the evolving state); finite-basis runs reuse
    the supplied diagonal with the configured rate. Recording happens
    at step multiples of ``record_every`` plus the initial and final
    points. ``per_step(step_index, state, ops, increment)`` is invoked
    before each step for callers that accumulate extra diagnostics.
    """
    basis = initial.basis
    pairs = tuple(pairs)
    if isinstance(basis, GridBasis):
        config.validate_grid(basis)
        stepper = UnitaryStepper(basis, config.dt, scheme=config.scheme, pairs=pairs)
    else:
        stepper = UnitaryStepper(basis, config.dt, scheme=config.scheme,
                                 hamiltonian=hamiltonian)
    observables = _build_observables(basis, config.record_observables, config,
                                     pairs, hamiltonian)
    wiener = WienerProcess(seed, real_noise=config.real_noise)

    state = initial
    theta = config.absorb_threshold
    times, w_in_series, w_out_series, norm_series = [], [], [], []
    exp_series = {key: [] for name in observables
                  for key in (name, name + "_in", name + "_out")}
    outcome = None
    steps_taken = 0

    def record(state, ops):
        times.append(state.time)
        if ops:
            centered = np.zeros(state.amplitudes.shape)
            for op in ops:
                centered = centered + op.centered
            decomp = branch_decompose(state, centered)
            w_in, w_out = decomp.weight_in, decomp.weight_out
            in_mask, out_mask = decomp.in_mask, decomp.out_mask
        else:
            w_in, w_out = 0.0, 1.0
            in_mask = np.zeros(state.amplitudes.shape, bool)
            out_mask = ~in_mask
        w_in_series.append(w_in)
        w_out_series.append(w_out)
        for name, op in observables.items():
            # every supported observable is hermitian: record the real part
            exp_series[name].append(expectation(op, state).real)
            cond = _branch_conditional(state, op, in_mask, out_mask)
            exp_series[name + "_in"].append(cond[0])
            exp_series[name + "_out"].append(cond[1])
        return w_in

    ops = _collapse_ops_for(state, pairs, config, finite_potential)
    record(state, ops)
    for step in range(config.n_steps):
        if step > 0:
            ops = _collapse_ops_for(state, pairs, config, finite_potential)
        needs_noise = bool(ops) and bool(np.any(total_diagonal(ops) != 0.0))
        increment = wiener.increment(config.dt) if needs_noise else 0.0
        if per_step is not None:
            per_step(step, state, ops, increment)
        state, diag = ito_step(state, ops, increment, config, stepper=stepper)
        norm_series.append(diag.norm_before_renormalize)
        steps_taken = step + 1
        at_record = (steps_taken % config.record_every == 0) or steps_taken == config.n_steps
        w_in = record(state, ops) if at_record else None
        if config.stop_on_absorb and ops:
            if w_in is None:
                centered = np.zeros(state.amplitudes.shape)
                for op in ops:
                    centered = centered + op.centered
                w_in = branch_decompose(state, centered).weight_in
            if w_in >= 1.0 - theta:
                outcome = "in"
                break
            if w_in <= theta:
                outcome = "out"
                break

    if times[-1] != state.time:
        record(state, ops)
    return TrajectoryRecord(
        times=np.asarray(times),
        weight_in=np.asarray(w_in_series),
        weight_out=np.asarray(w_out_series),
        norms_before_renormalize=np.asarray(norm_series),
        expectations={key: np.asarray(vals) for key, vals in exp_series.items()},
        outcome=outcome,
        steps_taken=steps_taken,
        seed=seed,
        final_state=state,
    )


def run_schrodinger_reference(initial: HilbertState, config: IntegratorConfig, pairs=(),
                              hamiltonian: LinearOperator | None = None) -> HilbertState:
    """Deterministic companion run: same stepping, no shift branch."""
    basis = initial.basis
    pairs = tuple(pairs)
    if isinstance(basis, GridBasis):
        config.validate_grid(basis)
        stepper = UnitaryStepper(basis, config.dt, scheme=config.scheme, pairs=pairs)
    else:
        stepper = UnitaryStepper(basis, config.dt, scheme=config.scheme,
                                 hamiltonian=hamiltonian)
    state = initial
    for _ in range(config.n_steps):
        state, _ = ito_step(state, [], 0.0, config, stepper=stepper)
    return state


@dataclass
class EnsembleResult:
    """Stacked trajectory statistics on a shared record clock.

    ``weight_in`` holds one row per trajectory; rows that stopped at an
    absorption threshold are padded with their final value, which is
    the natural continuation for resolved runs.
    """

    times: np.ndarray
    weight_in: np.ndarray
    outcomes: list
    steps_taken: np.ndarray
    seeds: np.ndarray
    max_norm_drift: float

    @property
    def n_trajectories(self) -> int:
        return self.weight_in.shape[0]

    @property
    def mean_weight_in(self) -> np.ndarray:
        return self.weight_in.mean(axis=0)

    @property
    def fraction_absorbed_in(self) -> float:
        return sum(1 for o in self.outcomes if o == "in") / len(self.outcomes)

    @property
    def fraction_unresolved(self) -> float:
        return sum(1 for o in self.outcomes if o is None) / len(self.outcomes)

    def binomial_sigma(self, p: float | None = None) -> float:
        if p is None:
            p = self.fraction_absorbed_in
        n = self.n_trajectories
        return float(np.sqrt(max(p * (1.0 - p), 1e-12) / n))


def run_ensemble(initial: HilbertState, config: IntegratorConfig, pairs=(),
                 n_trajectories: int = 100, master_seed: int = 0,
                 finite_potential=None, hamiltonian: LinearOperator | None = None) -> EnsembleResult:
    """Run independent trajectories with per-index derived seeds."""
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be at least 1")
    n_records = 1 + (config.n_steps + config.record_every - 1) // config.record_every
    times = None
    outcomes, steps, seeds = [], [], []
    drift = 0.0
    rows = []
    for index in range(n_trajectories):
        seed = master_seed + index
        rec = run_trajectory(initial, config, pairs=pairs, seed=seed,
                             finite_potential=finite_potential, hamiltonian=hamiltonian)
        row = rec.weight_in
        if row.size < n_records:
            row = np.concatenate([row, np.full(n_records - row.size, row[-1])])
        rows.append(row[:n_records])
        if times is None or rec.times.size > times.size:
            times = rec.times
        outcomes.append(rec.outcome)
        steps.append(rec.steps_taken)
        seeds.append(seed)
        drift = max(drift, rec.max_norm_drift)
    full_times = np.asarray(times)
    if full_times.size < n_records:
        # every run absorbed early; extend the clock nominally
        extra = np.arange(1, n_records - full_times.size + 1)
        full_times = np.concatenate([full_times, full_times[-1] + extra * config.dt * config.record_every])
    return EnsembleResult(
        times=full_times[:n_records],
        weight_in=np.vstack(rows),
        outcomes=outcomes,
        steps_taken=np.asarray(steps),
        seeds=np.asarray(seeds),
        max_norm_drift=drift,
    )
