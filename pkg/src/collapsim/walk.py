"""Reduced random-walk model of the two-branch weight.

The squared weight x of one branch performs a martingale walk on
(0, 1) with state-dependent step x (1 - x) s, absorbed once it comes
within ``barrier`` of either end. Binary steps (+/- s with equal
probability) expose the bare combinatorics; Gaussian steps mirror the
full stochastic integrator, whose per-step weight change is Gaussian
to leading order with standard deviation x (1 - x) K sqrt(2 dt).

Absorption fractions against the starting weight are the discrete
Born-rule check; the closed-form exit probability with a finite
barrier quantifies the (tiny) bias the barrier introduces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WalkConfig",
    "WalkEnsembleResult",
    "WalkScan",
    "step_increment",
    "matched_step_scale",
    "exit_probability",
    "barrier_bias",
    "walk_ensemble",
    "born_linearity_scan",
    "step_count_estimate",
]

MODES = ("binary", "gaussian")


@dataclass(frozen=True)
class WalkConfig:
    """Step scale s, absorbing barrier and step distribution.

    ``barrier=None`` selects s^2 / 4, deep enough that a walker at the
    barrier needs O(1/s) aligned steps to return to the middle.
    """

    step_scale: float
    barrier: float | None = None
    mode: str = "binary"
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not 0.0 < self.step_scale <= 1.0:
            raise ValueError("step_scale must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.barrier is not None and not 0.0 < self.barrier < 0.5:
            raise ValueError("barrier must lie in (0, 0.5)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def barrier_value(self) -> float:
        if self.barrier is not None:
            return self.barrier
        return 0.25 * self.step_scale ** 2


def step_increment(x, scale, draw):
    """One walk increment; vanishes at both ends, peaks at x = 1/2."""
    return x * (1.0 - x) * scale * draw


def matched_step_scale(kappa: float, gamma_value: float, level_splitting: float,
                       energy_denominator: float, dt: float) -> float:
    """Walk scale reproducing the two-level integrator's weight kicks.

    The integrator multiplies branch amplitudes by 1 + D dxi - ..., with
    diagonal gap D_in - D_out = kappa sqrt(gamma) dV / E. The resulting
    weight change per step is x (1 - x) times that gap times
    (dxi + conj(dxi)), whose standard deviation is sqrt(2 dt).
    """
    kick = kappa * np.sqrt(gamma_value) * level_splitting / energy_denominator
    return kick * np.sqrt(2.0 * dt)


def exit_probability(x0: float, barrier: float) -> float:
    """Chance a martingale walk from x0 stops at the upper barrier."""
    if not 0.0 <= barrier < 0.5:
        raise ValueError("barrier must lie in [0, 0.5)")
    return (x0 - barrier) / (1.0 - 2.0 * barrier)


def barrier_bias(x0: float, barrier: float) -> float:
    """exit_probability(x0) - x0, the finite-barrier Born-rule error."""
    return (2.0 * x0 - 1.0) * barrier / (1.0 - 2.0 * barrier)


@dataclass
class WalkEnsembleResult:
    x0: float
    config: WalkConfig
    seed: int
    final: np.ndarray
    status: np.ndarray  # +1 upper, -1 lower, 0 still walking
    steps: np.ndarray

    @property
    def n_walkers(self) -> int:
        return self.status.size

    @property
    def fraction_upper(self) -> float:
        return float(np.mean(self.status == 1))

    @property
    def fraction_lower(self) -> float:
        return float(np.mean(self.status == -1))

    @property
    def fraction_unresolved(self) -> float:
        return float(np.mean(self.status == 0))

    @property
    def mean_steps_to_absorption(self) -> float:
        done = self.status != 0
        if not np.any(done):
            return float("nan")
        return float(self.steps[done].mean())

    def binomial_sigma(self) -> float:
        p = self.fraction_upper
        return float(np.sqrt(max(p * (1.0 - p), 1e-12) / self.n_walkers))


def walk_ensemble(x0: float, n_walkers: int, config: WalkConfig,
                  seed: int = 0) -> WalkEnsembleResult:
    """Vectorized ensemble; one shared draw array per step."""
    theta = config.barrier_value
    if not theta < x0 < 1.0 - theta:
        raise ValueError(
            f"x0={x0:g} must start strictly between the barriers "
            f"({theta:g}, {1.0 - theta:g})")
    if n_walkers < 1:
        raise ValueError("n_walkers must be positive")
    rng = np.random.default_rng((seed,))
    x = np.full(n_walkers, float(x0))
    status = np.zeros(n_walkers, dtype=np.int8)
    steps = np.zeros(n_walkers, dtype=np.int64)
    scale = config.step_scale
    for _ in range(config.max_steps):
        idx = np.flatnonzero(status == 0)
        if idx.size == 0:
            break
        if config.mode == "binary":
            draw = rng.integers(0, 2, idx.size) * 2.0 - 1.0
        else:
            draw = rng.standard_normal(idx.size)
        xa = x[idx] + step_increment(x[idx], scale, draw)
        np.clip(xa, 0.0, 1.0, out=xa)
        x[idx] = xa
        steps[idx] += 1
        status[idx[xa >= 1.0 - theta]] = 1
        status[idx[xa <= theta]] = -1
    return WalkEnsembleResult(x0=x0, config=config, seed=seed,
                              final=x, status=status, steps=steps)


@dataclass
class WalkScan:
    x0_values: np.ndarray
    fractions: np.ndarray
    sigmas: np.ndarray
    slope: float
    intercept: float
    results: list

    @property
    def max_unresolved(self) -> float:
        return max(r.fraction_unresolved for r in self.results)


def born_linearity_scan(x0_values, n_walkers: int, config: WalkConfig,
                        master_seed: int = 0) -> WalkScan:
    """Absorption fraction against starting weight, with an LSQ line.

    A faithful Born rule gives slope 1 and intercept 0 up to the
    barrier bias and binomial noise.
    """
    x0_values = np.asarray(x0_values, dtype=float)
    results, fractions, sigmas = [], [], []
    for i, x0 in enumerate(x0_values):
        res = walk_ensemble(float(x0), n_walkers, config, seed=master_seed + i)
        results.append(res)
        fractions.append(res.fraction_upper)
        sigmas.append(res.binomial_sigma())
    fractions = np.asarray(fractions)
    slope, intercept = np.polyfit(x0_values, fractions, 1)
    return WalkScan(x0_values=x0_values, fractions=fractions,
                    sigmas=np.asarray(sigmas), slope=float(slope),
                    intercept=float(intercept), results=results)


def step_count_estimate(amplitude_ratio: float, step_floor: float,
                        method: str = "direct") -> float:
    """Expected absorption step count for a lopsided superposition.

    ``direct`` counts the aligned steps needed to walk the small branch
    down when every step has relative size ``step_floor`` and the
    branch weight ratio is ``amplitude_ratio`` squared:
    1 / (ratio * floor)^2. ``optional_stopping`` applies the variance
    identity of the stopped martingale instead, which shaves a factor
    of four: 0.25 / (ratio * floor)^2.
    """
    if amplitude_ratio <= 0.0 or step_floor <= 0.0:
        raise ValueError("amplitude_ratio and step_floor must be positive")
    base = 1.0 / (amplitude_ratio * step_floor) ** 2
    if method == "direct":
        return base
    if method == "optional_stopping":
        return 0.25 * base
    raise ValueError(f"unknown method {method!r}")
