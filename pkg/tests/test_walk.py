"""Walk-model checks against closed forms and frozen-seed simulation."""

import numpy as np
import pytest

from collapsim.walk import (
    WalkConfig,
    barrier_bias,
    born_linearity_scan,
    exit_probability,
    matched_step_scale,
    step_count_estimate,
    step_increment,
    walk_ensemble,
)


def test_config_validation():
    with pytest.raises(ValueError):
        WalkConfig(step_scale=0.0)
    with pytest.raises(ValueError):
        WalkConfig(step_scale=1.5)
    with pytest.raises(ValueError):
        WalkConfig(step_scale=0.1, barrier=0.5)
    with pytest.raises(ValueError):
        WalkConfig(step_scale=0.1, mode="levy")
    with pytest.raises(ValueError):
        WalkConfig(step_scale=0.1, max_steps=0)


def test_default_barrier_is_quarter_step_squared():
    assert WalkConfig(step_scale=0.2).barrier_value == pytest.approx(0.01, rel=1e-15)
    assert WalkConfig(step_scale=0.2, barrier=0.03).barrier_value == 0.03


def test_step_increment_shape():
    assert step_increment(0.0, 0.3, 1.0) == 0.0
    assert step_increment(1.0, 0.3, 1.0) == 0.0
    assert step_increment(0.5, 0.3, 1.0) == pytest.approx(0.075)
    # antisymmetric in the draw
    assert step_increment(0.3, 0.2, -1.0) == -step_increment(0.3, 0.2, 1.0)


def test_matched_step_scale_formula():
    # kick = kappa sqrt(gamma) dV / E, scale = kick sqrt(2 dt)
    val = matched_step_scale(kappa=2.0, gamma_value=9.0, level_splitting=1.5,
                             energy_denominator=3.0, dt=0.02)
    assert val == pytest.approx(2.0 * 3.0 * 0.5 * np.sqrt(0.04))


def test_exit_probability_closed_form():
    assert exit_probability(0.5, 0.1) == pytest.approx(0.5)
    assert exit_probability(0.1, 0.1) == 0.0
    assert exit_probability(0.9, 0.1) == pytest.approx(1.0)
    assert exit_probability(0.3, 0.0) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        exit_probability(0.5, 0.6)


def test_barrier_bias_consistent_and_monotone():
    for x0 in (0.2, 0.35, 0.5, 0.8):
        for theta in (0.0, 0.01, 0.05):
            assert barrier_bias(x0, theta) == pytest.approx(
                exit_probability(x0, theta) - x0, abs=1e-15)
    assert barrier_bias(0.5, 0.1) == 0.0
    # bias magnitude grows with the barrier, sign follows the start side
    biases = [abs(barrier_bias(0.3, th)) for th in (0.01, 0.02, 0.05, 0.1)]
    assert all(b2 > b1 for b1, b2 in zip(biases, biases[1:]))
    assert barrier_bias(0.3, 0.05) < 0 < barrier_bias(0.7, 0.05)


def test_walker_start_must_sit_between_barriers():
    cfg = WalkConfig(step_scale=0.2, barrier=0.1)
    with pytest.raises(ValueError):
        walk_ensemble(0.05, 10, cfg)
    with pytest.raises(ValueError):
        walk_ensemble(0.95, 10, cfg)
    with pytest.raises(ValueError):
        walk_ensemble(0.5, 0, cfg)


def test_walk_is_deterministic_per_seed():
    cfg = WalkConfig(step_scale=0.2)
    a = walk_ensemble(0.5, 500, cfg, seed=12)
    b = walk_ensemble(0.5, 500, cfg, seed=12)
    assert np.array_equal(a.final, b.final)
    assert np.array_equal(a.steps, b.steps)
    c = walk_ensemble(0.5, 500, cfg, seed=13)
    assert not np.array_equal(a.final, c.final)


def test_capped_walk_reports_unresolved():
    cfg = WalkConfig(step_scale=0.05, max_steps=200)
    res = walk_ensemble(0.37, 20_000, cfg, seed=9)
    assert res.fraction_unresolved == 1.0
    assert np.isnan(res.mean_steps_to_absorption)
    # interior martingale: the capped-horizon mean stays at the start
    sem = res.final.std(ddof=1) / np.sqrt(res.n_walkers)
    assert abs(res.final.mean() - 0.37) < 4 * sem
    assert np.all(res.steps == 200)


def test_absorption_fraction_tracks_barrier_bias():
    """A deliberately deep barrier shifts the exit odds by the closed
    form, clearly resolvable above the binomial error."""
    cfg = WalkConfig(step_scale=0.2, barrier=0.05)
    res = walk_ensemble(0.3, 40_000, cfg, seed=11)
    assert res.fraction_unresolved == 0.0
    sigma = res.binomial_sigma()
    assert abs(res.fraction_upper - exit_probability(0.3, 0.05)) < 4 * sigma
    # and the unbiased value 0.3 is excluded
    assert abs(res.fraction_upper - 0.3) > 4 * sigma


def test_mean_absorption_steps_scale_inverse_square():
    theta = 0.002
    r1 = walk_ensemble(0.5, 5000, WalkConfig(step_scale=0.2, barrier=theta), seed=3)
    r2 = walk_ensemble(0.5, 5000, WalkConfig(step_scale=0.1, barrier=theta), seed=4)
    ratio = r2.mean_steps_to_absorption / r1.mean_steps_to_absorption
    assert 3.4 < ratio < 4.7


def test_born_scan_slope_near_unity_binary():
    cfg = WalkConfig(step_scale=0.15)
    scan = born_linearity_scan(np.linspace(0.1, 0.9, 9), 10_000, cfg, master_seed=7)
    assert scan.max_unresolved == 0.0
    assert abs(scan.slope - 1.0) < 0.03
    assert abs(scan.intercept) < 0.02
    # fractions themselves are monotone along the scan
    assert np.all(np.diff(scan.fractions) > 0)


def test_gaussian_mode_fraction_matches_start_weight():
    cfg = WalkConfig(step_scale=0.15, mode="gaussian")
    res = walk_ensemble(0.4, 20_000, cfg, seed=5)
    assert res.fraction_unresolved == 0.0
    assert abs(res.fraction_upper - 0.4) < 4 * res.binomial_sigma()


def test_step_count_estimate_formulas():
    assert step_count_estimate(0.1, 0.1) == pytest.approx(1e4)
    assert step_count_estimate(0.1, 0.1, method="optional_stopping") == pytest.approx(2.5e3)
    assert step_count_estimate(1.0, 0.5) == 4.0
    with pytest.raises(ValueError):
        step_count_estimate(0.0, 0.1)
    with pytest.raises(ValueError):
        step_count_estimate(0.1, 0.1, method="guess")
