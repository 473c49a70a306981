"""Pure-numpy trajectory-batch integration kernels.

Fallback path used when numba is unavailable or disabled via the
OPOW_NO_NUMBA environment flag.  Semantics match opow._kernels_numba:
state arrays are updated in place (frozen at the diverging step),
observables are recorded per trajectory while it is alive, and
rec_count[i] is the number of grid points written for trajectory i
(the t=0 point included).
"""

import numpy as np

_SQRT2 = np.sqrt(2.0)


def _complex_cols(noise, base):
    return (noise[:, base] + 1j * noise[:, base + 1]) / _SQRT2


def _alive_after_step(alpha, alpha_dag, beta, beta_dag, limit_sq):
    m = np.maximum(
        np.maximum(alpha.real**2 + alpha.imag**2, alpha_dag.real**2 + alpha_dag.imag**2),
        np.maximum(beta.real**2 + beta.imag**2, beta_dag.real**2 + beta_dag.imag**2),
    )
    with np.errstate(invalid="ignore"):
        return np.isfinite(m) & (m <= limit_sq)


def _record(obs, rec_count, j, alive, xa, na, xb):
    obs[alive, j, 0] = xa[alive]
    obs[alive, j, 1] = na[alive]
    obs[alive, j, 2] = xb[alive]
    rec_count[alive] += 1


def _masked_update(state, new, alive):
    for cur, nxt in zip(state, new):
        cur[alive] = nxt[alive]


def integrate_positive_w(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                         kappa, gamma1, gamma2, eps, q, q_dag, s, s_dag,
                         p, p_dag, r, r_dag, dt, record_every, div_limit,
                         obs, rec_count):
    sq1 = np.sqrt(gamma1 * dt)
    sq2 = np.sqrt(gamma2 * dt)
    cbrt_dt = dt ** (1.0 / 3.0)
    eps_c = np.conj(eps)
    limit_sq = div_limit * div_limit
    n = alpha.shape[0]
    obs[:, 0, 0] = (alpha + alpha_dag).real
    obs[:, 0, 1] = (alpha_dag * alpha).real
    obs[:, 0, 2] = (beta + beta_dag).real
    rec_count[:] = 1
    alive = np.ones(n, dtype=bool)
    state = (alpha, alpha_dag, beta, beta_dag)
    j = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            o = 12 * k
            e1 = _complex_cols(noise, o)
            e2 = _complex_cols(noise, o + 2)
            x1 = _complex_cols(noise, o + 4)
            x1d = _complex_cols(noise, o + 6)
            x2 = _complex_cols(noise, o + 8)
            x2d = _complex_cols(noise, o + 10)
            root2 = np.sqrt(p_dag * np.conj(x2))
            root1 = np.sqrt(p * np.conj(x2d))
            s1 = q * x2 + s * np.conj(x1d) * root2
            s1d = q_dag * x2d + s_dag * np.conj(x1) * root1
            s2 = r * x1 * root1
            s2d = r_dag * x1d * root2
            new = (
                alpha + (-gamma1 * alpha + kappa * alpha_dag * beta) * dt + sq1 * e1 + s1 * cbrt_dt,
                alpha_dag + (-gamma1 * alpha_dag + kappa * alpha * beta_dag) * dt + sq1 * np.conj(e1) + s1d * cbrt_dt,
                beta + (eps - gamma2 * beta - 0.5 * kappa * alpha * alpha) * dt + sq2 * e2 + s2 * cbrt_dt,
                beta_dag + (eps_c - gamma2 * beta_dag - 0.5 * kappa * alpha_dag * alpha_dag) * dt + sq2 * np.conj(e2) + s2d * cbrt_dt,
            )
            _masked_update(state, new, alive)
            alive &= _alive_after_step(alpha, alpha_dag, beta, beta_dag, limit_sq)
            if (k + 1) % record_every == 0:
                _record(obs, rec_count, j, alive,
                        (alpha + alpha_dag).real, (alpha_dag * alpha).real,
                        (beta + beta_dag).real)
                j += 1


def integrate_positive_p(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                         kappa, gamma1, gamma2, eps, dt, record_every,
                         div_limit, obs, rec_count):
    sq_dt = np.sqrt(dt)
    eps_c = np.conj(eps)
    limit_sq = div_limit * div_limit
    n = alpha.shape[0]
    obs[:, 0, 0] = (alpha + alpha_dag).real
    obs[:, 0, 1] = (alpha_dag * alpha).real
    obs[:, 0, 2] = (beta + beta_dag).real
    rec_count[:] = 1
    alive = np.ones(n, dtype=bool)
    state = (alpha, alpha_dag, beta, beta_dag)
    j = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            w1 = noise[:, 2 * k]
            w2 = noise[:, 2 * k + 1]
            new = (
                alpha + (-gamma1 * alpha + kappa * alpha_dag * beta) * dt + np.sqrt(kappa * beta) * w1 * sq_dt,
                alpha_dag + (-gamma1 * alpha_dag + kappa * alpha * beta_dag) * dt + np.sqrt(kappa * beta_dag) * w2 * sq_dt,
                beta + (eps - gamma2 * beta - 0.5 * kappa * alpha * alpha) * dt,
                beta_dag + (eps_c - gamma2 * beta_dag - 0.5 * kappa * alpha_dag * alpha_dag) * dt,
            )
            _masked_update(state, new, alive)
            alive &= _alive_after_step(alpha, alpha_dag, beta, beta_dag, limit_sq)
            if (k + 1) % record_every == 0:
                _record(obs, rec_count, j, alive,
                        (alpha + alpha_dag).real, (alpha_dag * alpha).real,
                        (beta + beta_dag).real)
                j += 1


def integrate_truncated_wigner(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                               kappa, gamma1, gamma2, eps, dt, record_every,
                               div_limit, obs, rec_count):
    sq1 = np.sqrt(gamma1 * dt)
    sq2 = np.sqrt(gamma2 * dt)
    limit_sq = div_limit * div_limit
    n = alpha.shape[0]
    obs[:, 0, 0] = 2.0 * alpha.real
    obs[:, 0, 1] = alpha.real**2 + alpha.imag**2
    obs[:, 0, 2] = 2.0 * beta.real
    rec_count[:] = 1
    alive = np.ones(n, dtype=bool)
    state = (alpha, beta)
    j = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            o = 4 * k
            e1 = _complex_cols(noise, o)
            e2 = _complex_cols(noise, o + 2)
            new = (
                alpha + (-gamma1 * alpha + kappa * np.conj(alpha) * beta) * dt + sq1 * e1,
                beta + (eps - gamma2 * beta - 0.5 * kappa * alpha * alpha) * dt + sq2 * e2,
            )
            _masked_update(state, new, alive)
            alive &= _alive_after_step(alpha, np.conj(alpha), beta, np.conj(beta), limit_sq)
            if (k + 1) % record_every == 0:
                _record(obs, rec_count, j, alive,
                        2.0 * alpha.real, alpha.real**2 + alpha.imag**2,
                        2.0 * beta.real)
                j += 1
    alpha_dag[:] = np.conj(alpha)
    beta_dag[:] = np.conj(beta)


def integrate_classical(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                        kappa, gamma1, gamma2, eps, dt, record_every,
                        div_limit, obs, rec_count):
    eps_c = np.conj(eps)
    limit_sq = div_limit * div_limit
    n = alpha.shape[0]
    obs[:, 0, 0] = (alpha + alpha_dag).real
    obs[:, 0, 1] = (alpha_dag * alpha).real
    obs[:, 0, 2] = (beta + beta_dag).real
    rec_count[:] = 1
    alive = np.ones(n, dtype=bool)
    state = (alpha, alpha_dag, beta, beta_dag)
    j = 1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(nsteps):
            new = (
                alpha + (-gamma1 * alpha + kappa * alpha_dag * beta) * dt,
                alpha_dag + (-gamma1 * alpha_dag + kappa * alpha * beta_dag) * dt,
                beta + (eps - gamma2 * beta - 0.5 * kappa * alpha * alpha) * dt,
                beta_dag + (eps_c - gamma2 * beta_dag - 0.5 * kappa * alpha_dag * alpha_dag) * dt,
            )
            _masked_update(state, new, alive)
            alive &= _alive_after_step(alpha, alpha_dag, beta, beta_dag, limit_sq)
            if (k + 1) % record_every == 0:
                _record(obs, rec_count, j, alive,
                        (alpha + alpha_dag).real, (alpha_dag * alpha).real,
                        (beta + beta_dag).real)
                j += 1
