import numpy as np
import pytest

from opow.ensemble import (
    Accumulator,
    RunConfig,
    compare_series,
    divergence_scan,
    merge,
    run_ensemble,
)
from opow.errors import GridMismatchError, ValidationError
from opow.integrators import InitialStateSpec, StepConfig
from opow.model import ModelParams, semiclassical_steady_state
from opow.noise import optimal_sigma_params

MODEL = ModelParams(1.0, 1.0, 1.0, 1.5)
STEADY = semiclassical_steady_state(MODEL, +1)
INIT = InitialStateSpec("coherent", STEADY.alpha, STEADY.beta)


def make_cfg(rep="positive_w", **kw):
    defaults = dict(model=MODEL, step=StepConfig(dt=0.01, representation=rep),
                    initial=INIT, n_traj=2000, t_end=0.4, record_every=8, seed=11)
    defaults.update(kw)
    return RunConfig(**defaults)


class TestRunConfig:
    def test_grid_count_formula(self):
        cfg = make_cfg(t_end=1.0, record_every=5)
        assert cfg.nsteps == 100
        assert cfg.n_recorded == 21
        assert len(cfg.times) == 21
        assert cfg.times[-1] == pytest.approx(1.0)

    def test_non_divisible_grid(self):
        cfg = make_cfg(t_end=0.35, record_every=10)  # 35 steps, 3 full records
        assert cfg.nsteps == 35
        assert cfg.n_recorded == 4

    def test_validation(self):
        with pytest.raises(ValidationError):
            make_cfg(n_traj=0)
        with pytest.raises(ValidationError):
            make_cfg(t_end=-1.0)
        with pytest.raises(ValidationError):
            make_cfg(record_every=0)
        with pytest.raises(ValidationError):
            make_cfg(seed=-4)
        with pytest.raises(ValidationError):
            make_cfg(chi=0.0)

    def test_sigma_kappa_mismatch_rejected(self):
        bad = optimal_sigma_params(2.0, 0.33)
        cfg = make_cfg(sigma=bad)
        with pytest.raises(ValidationError):
            cfg.resolved_sigma()


class TestClassicalReference:
    def test_steady_state_is_constant_with_zero_stderr(self):
        cfg = make_cfg("classical", initial=InitialStateSpec(
            "deterministic", STEADY.alpha, STEADY.beta), n_traj=50)
        series = run_ensemble(cfg)
        xa, se = series.column("Xa")
        assert np.allclose(xa, 2.0, atol=1e-12)
        assert np.all(se == 0.0)
        assert np.all(series.n_effective == 50)
        assert np.all(series.diverged_fraction == 0.0)


class TestDeterminism:
    def test_single_trajectory_bitwise_repeatable(self):
        cfg = make_cfg(n_traj=1, seed=123)
        a = run_ensemble(cfg)
        b = run_ensemble(cfg)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.stderr, b.stderr)
        assert np.array_equal(a.n_effective, b.n_effective)

    def test_seed_changes_output(self):
        a = run_ensemble(make_cfg(seed=1))
        b = run_ensemble(make_cfg(seed=2))
        assert not np.array_equal(a.mean, b.mean)


class TestMerge:
    def _accumulate(self, cfg, lo, hi):
        # shard [lo, hi) with the global stream assignment
        from opow.backend import get_kernels
        from opow.ensemble import OBSERVABLES, _noise_block, _smeared_initial_arrays
        from opow.integrators import (DIVERGENCE_LIMIT, INITIAL_SMEAR_FLOATS,
                                      NOISE_FLOATS_PER_STEP)
        kern = get_kernels()
        sp = cfg.resolved_sigma()
        nsteps = cfg.nsteps
        width = NOISE_FLOATS_PER_STEP["positive_w"]
        acc = Accumulator(cfg.times)
        blk = _noise_block(cfg.seed, lo, hi - lo, INITIAL_SMEAR_FLOATS + nsteps * width)
        alpha, alpha_dag, beta, beta_dag = _smeared_initial_arrays(cfg.initial, blk)
        obs = np.empty((hi - lo, cfg.n_recorded, len(OBSERVABLES)))
        rec = np.empty(hi - lo, np.int64)
        kern.integrate_positive_w(alpha, alpha_dag, beta, beta_dag,
                                  blk[:, INITIAL_SMEAR_FLOATS:], nsteps,
                                  cfg.model.kappa, cfg.model.gamma1, cfg.model.gamma2,
                                  cfg.model.epsilon, sp.q, sp.q_dag, sp.s, sp.s_dag,
                                  sp.p, sp.p_dag, sp.r, sp.r_dag, cfg.step.dt,
                                  cfg.record_every, DIVERGENCE_LIMIT, obs, rec)
        acc.add_batch(obs, rec)
        return acc

    def test_identity_element(self):
        cfg = make_cfg(n_traj=300)
        a = self._accumulate(cfg, 0, 300)
        empty = Accumulator(cfg.times)
        merged = merge(a, empty)
        assert merged.n_total == a.n_total
        assert np.array_equal(merged.total, a.total)

    def test_commutative(self):
        cfg = make_cfg(n_traj=400)
        a = self._accumulate(cfg, 0, 200)
        b = self._accumulate(cfg, 200, 400)
        ab, ba = merge(a, b), merge(b, a)
        assert np.array_equal(ab.total, ba.total)
        assert np.array_equal(ab.total_sq, ba.total_sq)
        assert np.array_equal(ab.live, ba.live)

    def test_associative_to_summation_roundoff(self):
        cfg = make_cfg(n_traj=600)
        a = self._accumulate(cfg, 0, 200)
        b = self._accumulate(cfg, 200, 400)
        c = self._accumulate(cfg, 400, 600)
        left = merge(merge(a, b), c)
        right = merge(a, merge(b, c))
        assert left.n_total == right.n_total
        assert np.array_equal(left.live, right.live)
        assert np.allclose(left.total, right.total, rtol=1e-12)
        assert np.allclose(left.total_sq, right.total_sq, rtol=1e-12)

    def test_sharded_matches_sequential(self):
        # 10^4 trajectories in 8 shards vs one unsharded run
        cfg = make_cfg(n_traj=10_000, t_end=0.2, record_every=4)
        edges = np.linspace(0, 10_000, 9).astype(int)
        acc = self._accumulate(cfg, edges[0], edges[1])
        for lo, hi in zip(edges[1:-1], edges[2:]):
            acc = merge(acc, self._accumulate(cfg, lo, hi))
        sharded = acc.to_series()
        sequential = run_ensemble(cfg)
        assert np.allclose(sharded.mean, sequential.mean, rtol=1e-12, atol=1e-14)
        assert np.allclose(sharded.stderr, sequential.stderr, rtol=1e-12, atol=1e-14)
        assert np.array_equal(sharded.n_effective, sequential.n_effective)

    def test_grid_mismatch_rejected(self):
        a = Accumulator(np.arange(3) * 0.1)
        b = Accumulator(np.arange(4) * 0.1)
        with pytest.raises(GridMismatchError):
            merge(a, b)

    def test_batch_size_invariance(self):
        cfg = make_cfg(n_traj=1000)
        a = run_ensemble(cfg, batch_size=1000)
        b = run_ensemble(cfg, batch_size=77)
        assert np.allclose(a.mean, b.mean, rtol=1e-12, atol=1e-14)
        assert np.array_equal(a.n_effective, b.n_effective)


class TestDivergenceAccounting:
    def _diverging_series(self):
        cfg = RunConfig(model=ModelParams(5.0, 1.0, 1.0, 5.0),
                        step=StepConfig(dt=0.4, representation="truncated_wigner"),
                        initial=INIT, n_traj=2000, t_end=4.0, record_every=1, seed=5)
        return run_ensemble(cfg)

    def test_frozen_out_and_counted(self):
        series = self._diverging_series()
        assert 0 < series.diverged_fraction[-1] < 1
        assert np.all(np.diff(series.n_effective) <= 0)
        frac = (series.n_traj - series.n_effective) / series.n_traj
        assert np.allclose(series.diverged_fraction, frac)

    def test_total_divergence_truncates(self):
        # deterministic blow-up: every trajectory explodes within a few steps
        cfg = RunConfig(model=ModelParams(1.0, 1.0, 1.0, 0.0),
                        step=StepConfig(dt=1.0, representation="classical"),
                        initial=InitialStateSpec("deterministic", 1e5, 1e5),
                        n_traj=10, t_end=10.0, record_every=1, seed=0)
        series = run_ensemble(cfg)
        assert series.truncated
        assert len(series.times) < 11
        assert np.all(series.n_effective > 0)


class TestCompareSeries:
    def test_self_comparison_is_zero(self):
        series = run_ensemble(make_cfg(n_traj=500))
        result = compare_series(series, series)
        assert result.max_deviation == 0.0

    def test_constructed_three_sigma_shift(self):
        from dataclasses import replace
        series = run_ensemble(make_cfg(n_traj=500))
        mean = series.mean.copy()
        k = 3
        shift = 3.0 * np.sqrt(2.0) * series.stderr[k, 0]
        mean[k, 0] += shift
        other = replace(series, mean=mean)
        result = compare_series(series, other)
        assert result.max_deviation == pytest.approx(3.0)
        assert result.argmax_time == pytest.approx(series.times[k])

    def test_zero_error_points(self):
        cfg = make_cfg("classical", initial=InitialStateSpec(
            "deterministic", STEADY.alpha, STEADY.beta), n_traj=10)
        series = run_ensemble(cfg)
        assert compare_series(series, series).max_deviation == 0.0
        from dataclasses import replace
        other = replace(series, mean=series.mean + 0.1)
        assert compare_series(series, other).max_deviation == np.inf

    def test_grid_mismatch(self):
        a = run_ensemble(make_cfg(n_traj=100, record_every=8))
        b = run_ensemble(make_cfg(n_traj=100, record_every=4))
        with pytest.raises(GridMismatchError):
            compare_series(a, b)

    def test_window_restriction(self):
        series = run_ensemble(make_cfg(n_traj=100, t_end=0.4, record_every=4))
        cut = series.window(0.2)
        assert cut.times[-1] == pytest.approx(0.2)
        assert len(cut.times) < len(series.times)


class TestCrossMethod:
    def test_positive_w_tracks_the_master_equation(self):
        # desk-scale direct check; the acceptance suite does the tight
        # positive-W <-> positive-P <-> oracle chain at full size
        from opow.oracle import oracle_series
        cfg = make_cfg(n_traj=30_000, t_end=0.5, record_every=10, seed=77)
        series = run_ensemble(cfg)
        oracle = oracle_series(MODEL, 1.0, 1.0, (15, 10), 1e-3, series.times,
                               truncation_tol=2e-5)
        result = compare_series(series, oracle)
        assert result.max_deviation <= 4.0


class TestDivergenceScan:
    def test_requires_enough_points_and_positive_w(self):
        with pytest.raises(ValidationError):
            divergence_scan(make_cfg(), [0.01, 0.005])
        with pytest.raises(ValidationError):
            divergence_scan(make_cfg("positive_p"), [0.02, 0.01, 0.005, 0.0025])

    def test_smoke_slope_and_points(self):
        cfg = make_cfg(n_traj=4000, t_end=0.2)
        scan = divergence_scan(cfg, [0.02, 0.01, 0.005, 0.0025])
        assert len(scan.points) == 4
        assert all(not pt.flagged for pt in scan.points)
        assert np.isfinite(scan.slope)
        # sigma noise must inflate the variance as dt shrinks
        assert scan.points[-1].scaled_variance > scan.points[0].scaled_variance

    def test_fully_diverged_runs_are_flagged_not_fitted(self):
        # every trajectory blows past the divergence limit within a step
        cfg = make_cfg(n_traj=16, t_end=0.2,
                       initial=InitialStateSpec("deterministic", 9e5, 9e5))
        with pytest.raises(ValidationError, match="fewer than 2"):
            divergence_scan(cfg, [0.02, 0.01, 0.005, 0.0025])
