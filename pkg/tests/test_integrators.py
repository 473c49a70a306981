import numpy as np
import pytest

from opow.backend import get_kernels
from opow.errors import DivergedTrajectoryError, ValidationError
from opow.integrators import (
    DIVERGENCE_LIMIT,
    InitialStateSpec,
    StepConfig,
    sample_increments,
    sample_initial,
    step_classical,
    step_positive_p,
    step_positive_w,
    step_truncated_wigner,
)
from opow.model import ModelParams, PhasePoint, classical_drift
from opow.noise import RngStream, empirical_cumulants, optimal_sigma_params

PARAMS = ModelParams(kappa=1.0, gamma1=1.0, gamma2=1.0, epsilon=1.5)
SIGMA = optimal_sigma_params(1.0, 0.33)
POINT = PhasePoint.from_single(0.9 + 0.1j, 1.1 - 0.2j)


class ZeroStream(RngStream):
    """Test hook: a stream whose draws are all zero."""

    def normals(self, n):
        return np.zeros(n)


def euler_step(x, params, dt):
    d = classical_drift(x, params)
    return PhasePoint(x.alpha + d.alpha * dt, x.alpha_dag + d.alpha_dag * dt,
                      x.beta + d.beta * dt, x.beta_dag + d.beta_dag * dt)


def assert_points_close(a, b, tol=1e-14):
    for u, v in zip((a.alpha, a.alpha_dag, a.beta, a.beta_dag),
                    (b.alpha, b.alpha_dag, b.beta, b.beta_dag)):
        assert abs(u - v) <= tol, (a, b)


class TestStepConfig:
    def test_increment_scales(self):
        cfg = StepConfig(dt=0.008, representation="positive_w")
        assert cfg.sqrt_dt == pytest.approx(0.008**0.5)
        assert cfg.cbrt_dt == pytest.approx(0.008 ** (1 / 3))

    def test_rejects_bad_dt_and_representation(self):
        with pytest.raises(ValidationError):
            StepConfig(dt=0.0, representation="positive_w")
        with pytest.raises(ValidationError):
            StepConfig(dt=0.01, representation="wigner")


class TestDriftOnlyLimit:
    def test_positive_w_reduces_to_euler(self):
        cfg = StepConfig(dt=0.02, representation="positive_w")
        out = step_positive_w(POINT, PARAMS, SIGMA, cfg, ZeroStream(0))
        assert_points_close(out, euler_step(POINT, PARAMS, 0.02))

    def test_positive_p_reduces_to_euler(self):
        cfg = StepConfig(dt=0.02, representation="positive_p")
        out = step_positive_p(POINT, PARAMS, cfg, ZeroStream(0))
        assert_points_close(out, euler_step(POINT, PARAMS, 0.02))

    def test_truncated_wigner_reduces_to_euler(self):
        cfg = StepConfig(dt=0.02, representation="truncated_wigner")
        out = step_truncated_wigner(POINT, PARAMS, cfg, ZeroStream(0))
        assert_points_close(out, euler_step(POINT, PARAMS, 0.02))

    def test_classical_step_is_euler(self):
        cfg = StepConfig(dt=0.02, representation="classical")
        out = step_classical(POINT, PARAMS, cfg)
        assert out == euler_step(POINT, PARAMS, 0.02)

    def test_all_kernels_produce_identical_drift_trajectories(self):
        # zero noise arrays through the batch kernels, several params
        kern = get_kernels()
        for params in (PARAMS, ModelParams(2.0, 0.5, 1.3, 0.8 + 0.1j)):
            nsteps = 50
            results = {}
            for rep, width, extra in (
                ("positive_w", 12, (SIGMA.q, SIGMA.q_dag, SIGMA.s, SIGMA.s_dag,
                                    SIGMA.p, SIGMA.p_dag, SIGMA.r, SIGMA.r_dag)),
                ("positive_p", 2, ()),
                ("truncated_wigner", 4, ()),
                ("classical", 0, ()),
            ):
                if rep == "truncated_wigner" and params.epsilon.imag != 0:
                    continue
                a = np.array([0.4 + 0.2j]); ad = np.conj(a)
                b = np.array([0.9 - 0.1j]); bd = np.conj(b)
                noise = np.zeros((1, nsteps * width))
                obs = np.empty((1, nsteps + 1, 3)); rec = np.empty(1, np.int64)
                fn = getattr(kern, f"integrate_{rep}")
                fn(a, ad, b, bd, noise, nsteps, params.kappa, params.gamma1,
                   params.gamma2, params.epsilon, *extra, 0.01, 1,
                   DIVERGENCE_LIMIT, obs, rec)
                results[rep] = (a[0], ad[0], b[0], bd[0])
            vals = list(results.values())
            for v in vals[1:]:
                assert np.allclose(v, vals[0], rtol=1e-12, atol=1e-14)


class TestIncrementCumulants:
    def test_positive_w_wiener_pair_cumulant(self):
        cfg = StepConfig(dt=0.01, representation="positive_w")
        inc = sample_increments(POINT, PARAMS, cfg, RngStream(1), 10**6, sigma=SIGMA)
        table = empirical_cumulants(inc)
        assert table[(0, 1)].within(0.01, 5.0)   # <<d_alpha d_alpha_dag>> = gamma1*dt
        assert table[(2, 3)].within(0.01, 5.0)   # <<d_beta d_beta_dag>> = gamma2*dt

    def test_positive_w_third_cumulant(self):
        cfg = StepConfig(dt=0.01, representation="positive_w")
        inc = sample_increments(POINT, PARAMS, cfg, RngStream(2), 10**7, sigma=SIGMA)
        table = empirical_cumulants(inc)
        assert table[(0, 0, 3)].within(-0.0025, 5.0)  # -kappa*dt/4
        assert table[(1, 1, 2)].within(-0.0025, 5.0)

    def test_positive_w_full_increment_table(self):
        # term-by-term: first = drift*dt, second only the two Wiener pairs,
        # third only the two sigma entries
        dt = 0.01
        cfg = StepConfig(dt=dt, representation="positive_w")
        inc = sample_increments(POINT, PARAMS, cfg, RngStream(3), 10**6, sigma=SIGMA)
        table = empirical_cumulants(inc)
        d = classical_drift(POINT, PARAMS)
        drift = [d.alpha, d.alpha_dag, d.beta, d.beta_dag]
        targets = {idx: 0j for idx in table.entries}
        for i in range(4):
            targets[(i,)] = drift[i] * dt
        targets[(0, 1)] = PARAMS.gamma1 * dt
        targets[(2, 3)] = PARAMS.gamma2 * dt
        targets[(0, 0, 3)] = -PARAMS.kappa * dt / 4
        targets[(1, 1, 2)] = -PARAMS.kappa * dt / 4
        for idx, entry in table.entries.items():
            assert entry.within(targets[idx], 5.0), (idx, entry, targets[idx])

    def test_positive_p_signal_diffusion(self):
        # <<d_alpha^2>> = kappa*beta*dt at beta = 1
        x = PhasePoint.from_single(0.7, 1.0)
        cfg = StepConfig(dt=0.01, representation="positive_p")
        inc = sample_increments(x, PARAMS, cfg, RngStream(4), 10**6)
        table = empirical_cumulants(inc)
        assert table[(0, 0)].within(0.01, 5.0)
        assert table[(0, 1)].within(0j, 5.0)  # w1 and w2 independent

    def test_truncated_wigner_conjugate_diffusion(self):
        # <<d_beta d_beta*>> = gamma2*dt; the conjugate pair is computed
        # directly since the cumulant table excludes conjugates
        n = 10**6
        dt = 0.01
        cfg = StepConfig(dt=dt, representation="truncated_wigner")
        da, dad, db, dbd = sample_increments(POINT, PARAMS, cfg, RngStream(5), n)
        prod = db * np.conj(db)
        k2 = prod.mean() - db.mean() * np.conj(db).mean()
        se = prod.std() / np.sqrt(n)
        assert abs(k2 - PARAMS.gamma2 * dt) < 5 * se

    def test_mean_increment_identical_across_representations(self):
        # common conjugate-paired point: E[d_alpha] = drift_alpha * dt for all
        n = 10**6
        dt = 0.01
        target = classical_drift(POINT, PARAMS).alpha * dt
        for rep, kw in (("positive_w", {"sigma": SIGMA}), ("positive_p", {}),
                        ("truncated_wigner", {})):
            cfg = StepConfig(dt=dt, representation=rep)
            da = sample_increments(POINT, PARAMS, cfg, RngStream(6), n, **kw)[0]
            se = da.std() / np.sqrt(n)
            assert abs(da.mean() - target) < 5 * se, rep

    def test_third_cumulant_triples_with_dt(self):
        n = 10**6
        vals = {}
        for dt in (0.01, 0.03):
            cfg = StepConfig(dt=dt, representation="positive_w")
            inc = sample_increments(POINT, PARAMS, cfg, RngStream(7), n, sigma=SIGMA)
            table = empirical_cumulants(inc)
            vals[dt] = table[(0, 0, 3)]
        assert vals[0.01].within(-0.0025, 5.0)
        assert vals[0.03].within(-0.0075, 5.0)

    def test_sigma_variance_scales_as_dt_to_two_thirds(self):
        # isolate the sigma noise by switching the Wiener terms off
        params = ModelParams(kappa=1.0, gamma1=0.0, gamma2=0.0, epsilon=1.5)
        n = 10**6
        var = {}
        for dt in (0.01, 0.08):
            cfg = StepConfig(dt=dt, representation="positive_w")
            da = sample_increments(POINT, params, cfg, RngStream(8), n, sigma=SIGMA)[0]
            centred = da - da.mean()
            var[dt] = float(np.mean(np.abs(centred) ** 2))
        ratio = var[0.08] / var[0.01]
        assert ratio == pytest.approx(8.0 ** (2 / 3), rel=0.05)


class TestSampleInitial:
    def test_deterministic_exact(self):
        spec = InitialStateSpec("deterministic", 1.0 + 0.5j, -0.3j)
        for rep in ("positive_w", "positive_p", "truncated_wigner", "classical"):
            x = sample_initial(spec, rep, RngStream(1))
            assert x == PhasePoint.from_single(1.0 + 0.5j, -0.3j)

    def test_coherent_positive_p_is_delta(self):
        spec = InitialStateSpec("coherent", 0.7, 1.2)
        pts = {sample_initial(spec, "positive_p", RngStream(1, i)).alpha
               for i in range(32)}
        assert pts == {0.7 + 0j}

    def test_coherent_wigner_family_vacuum_width(self):
        # E|alpha|^2 = 1/2 for alpha0 = 0: half-quantum vacuum width,
        # i.e. oracle <a_dag a> on vacuum plus 1/2 for symmetric ordering
        from opow.ensemble import _noise_block, _smeared_initial_arrays
        from opow.oracle import coherent_density, expectation_photon_a

        vacuum_na = expectation_photon_a(coherent_density(0, 0, (4, 4)))
        target = vacuum_na + 0.5
        n = 10**6
        spec = InitialStateSpec("coherent", 0.0, 0.0)
        blk = _noise_block(123, 0, n, 4)
        alpha, _, beta, _ = _smeared_initial_arrays(spec, blk)
        m = np.abs(alpha) ** 2
        assert abs(m.mean() - target) < 5 * m.std() / np.sqrt(n)

    def test_coherent_wigner_matches_batch_path(self):
        from opow.ensemble import _noise_block, _smeared_initial_arrays
        spec = InitialStateSpec("coherent", 1.0, 2.0)
        blk = _noise_block(42, 11, 1, 4)
        alpha, alpha_dag, beta, beta_dag = _smeared_initial_arrays(spec, blk)
        x = sample_initial(spec, "positive_w", RngStream(42, 11))
        assert x.alpha == alpha[0] and x.beta == beta[0]
        assert x.alpha_dag == np.conj(alpha[0])

    def test_conjugate_consistency(self):
        spec = InitialStateSpec("coherent", 1.0, 2.0)
        x = sample_initial(spec, "truncated_wigner", RngStream(9))
        assert x.is_conjugate_paired()

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValidationError):
            InitialStateSpec("squeezed", 0, 0)


class TestDivergenceHandling:
    def test_non_finite_input_raises(self):
        bad = PhasePoint(complex("nan"), 0j, 0j, 0j)
        cfg = StepConfig(dt=0.01, representation="positive_p")
        with pytest.raises(DivergedTrajectoryError):
            step_positive_p(bad, PARAMS, cfg, RngStream(1))

    def test_over_limit_input_raises(self):
        bad = PhasePoint(2e6 + 0j, 0j, 0j, 0j)
        cfg = StepConfig(dt=0.01, representation="positive_w")
        with pytest.raises(DivergedTrajectoryError):
            step_positive_w(bad, PARAMS, SIGMA, cfg, RngStream(1))

    def test_representation_mismatch_raises(self):
        cfg = StepConfig(dt=0.01, representation="positive_p")
        with pytest.raises(ValidationError):
            step_positive_w(POINT, PARAMS, SIGMA, cfg, RngStream(1))

    def test_truncated_wigner_rejects_unpaired_state(self):
        cfg = StepConfig(dt=0.01, representation="truncated_wigner")
        x = PhasePoint(1 + 0j, 0.5 + 0j, 0j, 0j)
        with pytest.raises(ValidationError):
            step_truncated_wigner(x, PARAMS, cfg, RngStream(1))


class TestConjugationConstraint:
    def test_exact_over_many_steps_single_point(self):
        cfg = StepConfig(dt=0.005, representation="truncated_wigner")
        stream = RngStream(10)
        x = sample_initial(InitialStateSpec("coherent", 1.0, 1.0),
                           "truncated_wigner", stream)
        for _ in range(10_000):
            x = step_truncated_wigner(x, PARAMS, cfg, stream)
        assert x.alpha_dag == x.alpha.conjugate()
        assert x.beta_dag == x.beta.conjugate()

    def test_exact_over_many_steps_batch(self):
        kern = get_kernels()
        nsteps = 100_000
        rng = np.random.default_rng(0)
        a = np.array([1.0 + 0j]); ad = np.conj(a)
        b = np.array([1.0 + 0j]); bd = np.conj(b)
        noise = rng.standard_normal((1, nsteps * 4))
        obs = np.empty((1, 2, 3)); rec = np.empty(1, np.int64)
        kern.integrate_truncated_wigner(a, ad, b, bd, noise, nsteps, 1.0, 1.0,
                                        1.0, 1.5 + 0j, 0.005, nsteps,
                                        DIVERGENCE_LIMIT, obs, rec)
        assert ad[0] == np.conj(a[0])
        assert bd[0] == np.conj(b[0])


class TestSinglePointMatchesBatch:
    @pytest.mark.parametrize("rep", ["positive_w", "positive_p", "truncated_wigner"])
    def test_trajectory_equivalence(self, rep):
        from opow.ensemble import _noise_block
        from opow.integrators import INITIAL_SMEAR_FLOATS, NOISE_FLOATS_PER_STEP

        kern = get_kernels()
        nsteps = 40
        seed, tid = 77, 13
        spec = InitialStateSpec("coherent", 1.0, 1.0)
        smear = INITIAL_SMEAR_FLOATS if rep in ("positive_w", "truncated_wigner") else 0
        width = NOISE_FLOATS_PER_STEP[rep]
        blk = _noise_block(seed, tid, 1, smear + nsteps * width)

        stream = RngStream(seed, tid)
        x = sample_initial(spec, rep, stream)
        cfg = StepConfig(dt=0.01, representation=rep)
        stepper = {"positive_w": lambda x: step_positive_w(x, PARAMS, SIGMA, cfg, stream),
                   "positive_p": lambda x: step_positive_p(x, PARAMS, cfg, stream),
                   "truncated_wigner": lambda x: step_truncated_wigner(x, PARAMS, cfg, stream)}[rep]
        for _ in range(nsteps):
            x = stepper(x)

        if smear:
            za = (blk[0, 0] + 1j * blk[0, 1]) / 2
            zb = (blk[0, 2] + 1j * blk[0, 3]) / 2
            a = np.array([1.0 + za]); b = np.array([1.0 + zb])
        else:
            a = np.array([1.0 + 0j]); b = np.array([1.0 + 0j])
        ad = np.conj(a); bd = np.conj(b)
        obs = np.empty((1, 2, 3)); rec = np.empty(1, np.int64)
        args = (a, ad, b, bd, blk[:, smear:], nsteps, PARAMS.kappa, PARAMS.gamma1,
                PARAMS.gamma2, PARAMS.epsilon)
        if rep == "positive_w":
            kern.integrate_positive_w(*args, SIGMA.q, SIGMA.q_dag, SIGMA.s, SIGMA.s_dag,
                                      SIGMA.p, SIGMA.p_dag, SIGMA.r, SIGMA.r_dag,
                                      0.01, nsteps, DIVERGENCE_LIMIT, obs, rec)
        elif rep == "positive_p":
            kern.integrate_positive_p(*args, 0.01, nsteps, DIVERGENCE_LIMIT, obs, rec)
        else:
            kern.integrate_truncated_wigner(*args, 0.01, nsteps, DIVERGENCE_LIMIT, obs, rec)
        for u, v in ((a[0], x.alpha), (ad[0], x.alpha_dag), (b[0], x.beta), (bd[0], x.beta_dag)):
            assert abs(u - v) < 1e-12
