"""Trajectory-ensemble driver: run many stochastic trajectories, accumulate
observable statistics on a time grid, compare series, and scan the
sampling-noise growth as the time step shrinks.

Reproducibility contract: trajectory i always consumes the random stream
keyed by (seed, stream_id=i), regardless of batching or worker layout, so
a run is fully determined by (seed, config) and sharded runs merge to the
sequential statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .backend import get_kernels
from .errors import GridMismatchError, ValidationError
from .integrators import (
    DIVERGENCE_LIMIT,
    INITIAL_SMEAR_FLOATS,
    NOISE_FLOATS_PER_STEP,
    InitialStateSpec,
    StepConfig,
    _smears_initial_state,
)
from .model import ModelParams
from .noise import SigmaParams, optimal_sigma_params

OBSERVABLES = ("Xa", "n_a", "Xb")

_U64 = 2**64

DEFAULT_BATCH_SIZE = 16384


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one ensemble run."""

    model: ModelParams
    step: StepConfig
    initial: InitialStateSpec
    n_traj: int
    t_end: float
    record_every: int = 1
    seed: int = 0
    chi: float = 0.33
    sigma: SigmaParams | None = None

    def __post_init__(self):
        if self.n_traj < 1:
            raise ValidationError(f"n_traj must be >= 1, got {self.n_traj}")
        if not self.t_end > 0:
            raise ValidationError(f"t_end must be > 0, got {self.t_end}")
        if self.record_every < 1:
            raise ValidationError(f"record_every must be >= 1, got {self.record_every}")
        if not 0 <= int(self.seed) < _U64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if not self.chi > 0:
            raise ValidationError(f"chi must be > 0, got {self.chi}")
        if self.nsteps < 1:
            raise ValidationError(
                f"t_end={self.t_end} is shorter than one step dt={self.step.dt}"
            )

    @property
    def nsteps(self) -> int:
        return int(math.floor(self.t_end / self.step.dt + 1e-9))

    @property
    def n_recorded(self) -> int:
        return self.nsteps // self.record_every + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_recorded) * (self.step.dt * self.record_every)

    def resolved_sigma(self) -> SigmaParams | None:
        """Sigma params for positive_w runs, derived from (kappa, chi) when
        not supplied explicitly; validated against the model coupling."""
        if self.step.representation != "positive_w":
            return None
        sp = self.sigma or optimal_sigma_params(self.model.kappa, self.chi)
        sp.validate_for(self.model.kappa)
        return sp


class Accumulator:
    """Mergeable per-grid-point statistics: live count, sum and sum of
    squares for each real observable, plus total trajectory count."""

    def __init__(self, times: np.ndarray, observables=OBSERVABLES):
        self.times = np.asarray(times, dtype=float)
        self.observables = tuple(observables)
        n_rec, n_obs = len(self.times), len(self.observables)
        self.n_total = 0
        self.live = np.zeros(n_rec, dtype=np.int64)
        self.total = np.zeros((n_rec, n_obs))
        self.total_sq = np.zeros((n_rec, n_obs))

    def add_batch(self, obs: np.ndarray, rec_count: np.ndarray) -> None:
        """Fold in a batch: obs is (n, n_rec, n_obs); rec_count[i] is the
        number of grid points trajectory i reached before diverging."""
        n, n_rec, _ = obs.shape
        self.n_total += n
        if np.all(rec_count >= n_rec):
            self.live += n
            self.total += obs.sum(axis=0)
            self.total_sq += (obs * obs).sum(axis=0)
            return
        for j in range(n_rec):
            mask = rec_count > j
            vals = obs[mask, j, :]
            self.live[j] += vals.shape[0]
            self.total[j] += vals.sum(axis=0)
            self.total_sq[j] += (vals * vals).sum(axis=0)

    @property
    def diverged_count(self) -> int:
        return self.n_total - int(self.live[-1])

    def to_series(self) -> "ObservableSeries":
        live = self.live
        cut = len(live) if np.all(live > 0) else int(np.argmax(live == 0))
        truncated = cut < len(live)
        n = live[:cut].astype(float)
        mean = self.total[:cut] / n[:, None]
        var = (self.total_sq[:cut] - n[:, None] * mean**2) / np.maximum(n[:, None] - 1, 1)
        stderr = np.sqrt(np.maximum(var, 0.0) / n[:, None])
        stderr[n == 1] = 0.0
        return ObservableSeries(
            times=self.times[:cut],
            mean=mean,
            stderr=stderr,
            n_effective=live[:cut].copy(),
            diverged_fraction=(self.n_total - live[:cut]) / self.n_total,
            n_traj=self.n_total,
            truncated=truncated,
            observables=self.observables,
        )


def merge(a: Accumulator, b: Accumulator) -> Accumulator:
    """Combine two accumulators; the statistics equal a single sequential
    accumulation of both sample sets (associative and commutative)."""
    if not np.array_equal(a.times, b.times) or a.observables != b.observables:
        raise GridMismatchError("accumulators have different grids or observables")
    out = Accumulator(a.times, a.observables)
    out.n_total = a.n_total + b.n_total
    out.live = a.live + b.live
    out.total = a.total + b.total
    out.total_sq = a.total_sq + b.total_sq
    return out


@dataclass(frozen=True)
class ObservableSeries:
    """Ensemble means with standard errors on a time grid.

    stderr is the sample standard deviation over live trajectories divided
    by sqrt(n_effective).  If all trajectories diverged before t_end the
    series is truncated at the last grid point with survivors and the
    truncated flag is set.
    """

    times: np.ndarray
    mean: np.ndarray          # (n_rec, n_obs)
    stderr: np.ndarray        # (n_rec, n_obs)
    n_effective: np.ndarray   # (n_rec,)
    diverged_fraction: np.ndarray
    n_traj: int
    truncated: bool = False
    observables: tuple = OBSERVABLES

    def observable_index(self, name: str) -> int:
        try:
            return self.observables.index(name)
        except ValueError:
            raise ValidationError(
                f"unknown observable {name!r}; have {self.observables}"
            ) from None

    def column(self, name: str):
        i = self.observable_index(name)
        return self.mean[:, i], self.stderr[:, i]

    def window(self, t_max: float, atol: float = 1e-12) -> "ObservableSeries":
        """Restrict the series to times <= t_max."""
        keep = self.times <= t_max + atol
        return replace(
            self,
            times=self.times[keep],
            mean=self.mean[keep],
            stderr=self.stderr[keep],
            n_effective=self.n_effective[keep],
            diverged_fraction=self.diverged_fraction[keep],
        )


def _noise_block(seed: int, first_id: int, count: int, n_floats: int) -> np.ndarray:
    """(count, n_floats) standard normals; row i reproduces bit for bit the
    draws of RngStream(seed, first_id + i).normals(n_floats).

    One Philox bit generator is reused by resetting its keyed state per row,
    which avoids per-trajectory object construction in the hot path.
    """
    out = np.empty((count, n_floats))
    if n_floats == 0:
        return out
    bg = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
    gen = np.random.Generator(bg)
    state = bg.state
    counter = state["state"]["counter"]
    key = state["state"]["key"]
    for i in range(count):
        counter[:] = 0
        key[0] = seed
        key[1] = first_id + i
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        bg.state = state
        gen.standard_normal(out=out[i])
    return out


def _smeared_initial_arrays(spec: InitialStateSpec, smear_block):
    # Coherent-state width in the Wigner family: E|z|^2 = 1/2 per mode.
    za = (smear_block[:, 0] + 1j * smear_block[:, 1]) / 2.0
    zb = (smear_block[:, 2] + 1j * smear_block[:, 3]) / 2.0
    alpha = spec.alpha0 + za
    beta = spec.beta0 + zb
    return alpha, np.conj(alpha), beta, np.conj(beta)


def run_ensemble(cfg: RunConfig, *, backend: str | None = None,
                 batch_size: int = DEFAULT_BATCH_SIZE,
                 disable_sigma: bool = False) -> ObservableSeries:
    """Integrate cfg.n_traj independent trajectories and return the recorded
    observable series (Xa = Re(alpha + alpha_dag), n_a = Re(alpha_dag*alpha),
    Xb = Re(beta + beta_dag), averaged over live trajectories).

    disable_sigma zeroes the third-order noise of positive_w runs (the
    Gaussian part is kept); used by the variance-scaling diagnostics.
    """
    kern = get_kernels(backend)
    rep = cfg.step.representation
    sp = cfg.resolved_sigma()
    nsteps = cfg.nsteps
    per_step = NOISE_FLOATS_PER_STEP[rep]
    smear = INITIAL_SMEAR_FLOATS if _smears_initial_state(cfg.initial, rep) else 0
    n_floats = smear + nsteps * per_step
    times = cfg.times
    n_rec = cfg.n_recorded
    acc = Accumulator(times)

    for lo in range(0, cfg.n_traj, batch_size):
        m = min(batch_size, cfg.n_traj - lo)
        blk = _noise_block(cfg.seed, lo, m, n_floats)
        if disable_sigma and rep == "positive_w" and nsteps:
            cols = smear + (12 * np.arange(nsteps)[:, None] + np.arange(4, 12)).ravel()
            blk[:, cols] = 0.0
        if smear:
            alpha, alpha_dag, beta, beta_dag = _smeared_initial_arrays(cfg.initial, blk[:, :smear])
        else:
            alpha = np.full(m, cfg.initial.alpha0, dtype=np.complex128)
            alpha_dag = np.conj(alpha)
            beta = np.full(m, cfg.initial.beta0, dtype=np.complex128)
            beta_dag = np.conj(beta)
        obs = np.empty((m, n_rec, len(OBSERVABLES)))
        rec_count = np.empty(m, dtype=np.int64)
        step_noise = blk[:, smear:]
        args = (alpha, alpha_dag, beta, beta_dag, step_noise, nsteps,
                cfg.model.kappa, cfg.model.gamma1, cfg.model.gamma2, cfg.model.epsilon)
        if rep == "positive_w":
            kern.integrate_positive_w(*args, sp.q, sp.q_dag, sp.s, sp.s_dag,
                                      sp.p, sp.p_dag, sp.r, sp.r_dag,
                                      cfg.step.dt, cfg.record_every,
                                      DIVERGENCE_LIMIT, obs, rec_count)
        elif rep == "positive_p":
            kern.integrate_positive_p(*args, cfg.step.dt, cfg.record_every,
                                      DIVERGENCE_LIMIT, obs, rec_count)
        elif rep == "truncated_wigner":
            kern.integrate_truncated_wigner(*args, cfg.step.dt, cfg.record_every,
                                            DIVERGENCE_LIMIT, obs, rec_count)
        else:
            kern.integrate_classical(*args, cfg.step.dt, cfg.record_every,
                                     DIVERGENCE_LIMIT, obs, rec_count)
        acc.add_batch(obs, rec_count)
    return acc.to_series()


@dataclass(frozen=True)
class SeriesComparison:
    observable: str
    max_deviation: float
    argmax_time: float
    times: np.ndarray
    deviations: np.ndarray

    def passes(self, threshold: float) -> bool:
        return self.max_deviation <= threshold


def compare_series(a: ObservableSeries, b: ObservableSeries,
                   observable: str = "Xa",
                   zero_error_atol: float = 0.0) -> SeriesComparison:
    """Largest pointwise deviation |mean_a - mean_b| in units of the combined
    standard error, and the grid time where it occurs.

    Points where both errors vanish count as 0 when the means agree within
    zero_error_atol (default: exactly) and +inf otherwise.  The floor
    matters when an error-free value (a deterministic start, an exact
    oracle) is compared against another whose tiny bias has no statistical
    error bar attached.
    """
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise GridMismatchError(
            f"series grids differ: {len(a.times)} points vs {len(b.times)} points"
        )
    ma, sa = a.column(observable)
    mb, sb = b.column(observable)
    diff = np.abs(ma - mb)
    denom = np.hypot(sa, sb)
    dev = np.zeros_like(diff)
    nz = denom > 0
    dev[nz] = diff[nz] / denom[nz]
    dev[~nz & (diff > zero_error_atol)] = np.inf
    k = int(np.argmax(dev))
    return SeriesComparison(
        observable=observable,
        max_deviation=float(dev[k]),
        argmax_time=float(a.times[k]),
        times=a.times.copy(),
        deviations=dev,
    )


@dataclass(frozen=True)
class ScanPoint:
    dt: float
    variance: float           # estimator variance of the Xa mean at t_end
    scaled_variance: float    # variance * n_traj
    diverged_fraction: float
    flagged: bool             # run fully diverged before t_end; excluded from fit


@dataclass(frozen=True)
class DivergenceScan:
    points: list
    slope: float


def divergence_scan(base: RunConfig, dt_list, *, disable_sigma: bool = False,
                    backend: str | None = None,
                    batch_size: int = DEFAULT_BATCH_SIZE) -> DivergenceScan:
    """Sampling variance of the Xa estimator at t_end for each dt, with the
    least-squares slope of log(variance * n_traj) against log(dt).

    Wiener-only noise gives a flat line; the dt^(1/3)-scaled third-order
    noise makes the variance grow as the step shrinks.
    """
    dt_list = [float(dt) for dt in dt_list]
    if len(dt_list) < 4:
        raise ValidationError(f"need at least 4 dt values, got {len(dt_list)}")
    if base.step.representation != "positive_w":
        raise ValidationError("divergence scan is defined for the positive_w representation")
    points = []
    for dt in dt_list:
        nsteps = int(math.floor(base.t_end / dt + 1e-9))
        cfg = replace(base, step=StepConfig(dt=dt, representation="positive_w"),
                      record_every=nsteps)
        series = run_ensemble(cfg, backend=backend, batch_size=batch_size,
                              disable_sigma=disable_sigma)
        flagged = series.truncated or len(series.times) < cfg.n_recorded
        if flagged:
            points.append(ScanPoint(dt, math.nan, math.nan, 1.0, True))
            continue
        _, se = series.column("Xa")
        var = float(se[-1] ** 2)
        points.append(ScanPoint(dt, var, var * cfg.n_traj,
                                float(series.diverged_fraction[-1]), False))
    ok = [pt for pt in points if not pt.flagged]
    if len(ok) < 2:
        raise ValidationError("fewer than 2 dt values survived; cannot fit a slope")
    slope = float(np.polyfit(np.log([pt.dt for pt in ok]),
                             np.log([pt.scaled_variance for pt in ok]), 1)[0])
    return DivergenceScan(points=points, slope=slope)
