"""numba-compiled trajectory-batch integration kernels.

Same contracts as opow._kernels_numpy; trajectories are integrated in
parallel, each consuming its own row of the pregenerated noise block.
"""

import numpy as np
from numba import njit, prange

_SQRT2 = np.sqrt(2.0)


@njit(inline="always")
def _diverged(a, ad, b, bd, limit_sq):
    m = a.real * a.real + a.imag * a.imag
    m2 = ad.real * ad.real + ad.imag * ad.imag
    if m2 > m:
        m = m2
    m2 = b.real * b.real + b.imag * b.imag
    if m2 > m:
        m = m2
    m2 = bd.real * bd.real + bd.imag * bd.imag
    if m2 > m:
        m = m2
    return (not np.isfinite(m)) or m > limit_sq


@njit(cache=True, parallel=True)
def integrate_positive_w(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                         kappa, gamma1, gamma2, eps, q, q_dag, s, s_dag,
                         p, p_dag, r, r_dag, dt, record_every, div_limit,
                         obs, rec_count):
    n = alpha.shape[0]
    sq1 = np.sqrt(gamma1 * dt)
    sq2 = np.sqrt(gamma2 * dt)
    cbrt_dt = dt ** (1.0 / 3.0)
    eps_c = np.conj(eps)
    limit_sq = div_limit * div_limit
    for i in prange(n):
        a = alpha[i]
        ad = alpha_dag[i]
        b = beta[i]
        bd = beta_dag[i]
        obs[i, 0, 0] = (a + ad).real
        obs[i, 0, 1] = (ad * a).real
        obs[i, 0, 2] = (b + bd).real
        j = 1
        for k in range(nsteps):
            o = 12 * k
            e1 = complex(noise[i, o], noise[i, o + 1]) / _SQRT2
            e2 = complex(noise[i, o + 2], noise[i, o + 3]) / _SQRT2
            x1 = complex(noise[i, o + 4], noise[i, o + 5]) / _SQRT2
            x1d = complex(noise[i, o + 6], noise[i, o + 7]) / _SQRT2
            x2 = complex(noise[i, o + 8], noise[i, o + 9]) / _SQRT2
            x2d = complex(noise[i, o + 10], noise[i, o + 11]) / _SQRT2
            root2 = np.sqrt(p_dag * np.conj(x2))
            root1 = np.sqrt(p * np.conj(x2d))
            s1 = q * x2 + s * np.conj(x1d) * root2
            s1d = q_dag * x2d + s_dag * np.conj(x1) * root1
            s2 = r * x1 * root1
            s2d = r_dag * x1d * root2
            a, ad, b, bd = (
                a + (-gamma1 * a + kappa * ad * b) * dt + sq1 * e1 + s1 * cbrt_dt,
                ad + (-gamma1 * ad + kappa * a * bd) * dt + sq1 * np.conj(e1) + s1d * cbrt_dt,
                b + (eps - gamma2 * b - 0.5 * kappa * a * a) * dt + sq2 * e2 + s2 * cbrt_dt,
                bd + (eps_c - gamma2 * bd - 0.5 * kappa * ad * ad) * dt + sq2 * np.conj(e2) + s2d * cbrt_dt,
            )
            if _diverged(a, ad, b, bd, limit_sq):
                break
            if (k + 1) % record_every == 0:
                obs[i, j, 0] = (a + ad).real
                obs[i, j, 1] = (ad * a).real
                obs[i, j, 2] = (b + bd).real
                j += 1
        alpha[i] = a
        alpha_dag[i] = ad
        beta[i] = b
        beta_dag[i] = bd
        rec_count[i] = j


@njit(cache=True, parallel=True)
def integrate_positive_p(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                         kappa, gamma1, gamma2, eps, dt, record_every,
                         div_limit, obs, rec_count):
    n = alpha.shape[0]
    sq_dt = np.sqrt(dt)
    eps_c = np.conj(eps)
    limit_sq = div_limit * div_limit
    for i in prange(n):
        a = alpha[i]
        ad = alpha_dag[i]
        b = beta[i]
        bd = beta_dag[i]
        obs[i, 0, 0] = (a + ad).real
        obs[i, 0, 1] = (ad * a).real
        obs[i, 0, 2] = (b + bd).real
        j = 1
        for k in range(nsteps):
            w1 = noise[i, 2 * k]
            w2 = noise[i, 2 * k + 1]
            a, ad, b, bd = (
                a + (-gamma1 * a + kappa * ad * b) * dt + np.sqrt(kappa * b) * w1 * sq_dt,
                ad + (-gamma1 * ad + kappa * a * bd) * dt + np.sqrt(kappa * bd) * w2 * sq_dt,
                b + (eps - gamma2 * b - 0.5 * kappa * a * a) * dt,
                bd + (eps_c - gamma2 * bd - 0.5 * kappa * ad * ad) * dt,
            )
            if _diverged(a, ad, b, bd, limit_sq):
                break
            if (k + 1) % record_every == 0:
                obs[i, j, 0] = (a + ad).real
                obs[i, j, 1] = (ad * a).real
                obs[i, j, 2] = (b + bd).real
                j += 1
        alpha[i] = a
        alpha_dag[i] = ad
        beta[i] = b
        beta_dag[i] = bd
        rec_count[i] = j


@njit(cache=True, parallel=True)
def integrate_truncated_wigner(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                               kappa, gamma1, gamma2, eps, dt, record_every,
                               div_limit, obs, rec_count):
    # Single phase space: only alpha, beta evolve; daggers stay conjugate.
    n = alpha.shape[0]
    sq1 = np.sqrt(gamma1 * dt)
    sq2 = np.sqrt(gamma2 * dt)
    limit_sq = div_limit * div_limit
    for i in prange(n):
        a = alpha[i]
        b = beta[i]
        obs[i, 0, 0] = 2.0 * a.real
        obs[i, 0, 1] = a.real * a.real + a.imag * a.imag
        obs[i, 0, 2] = 2.0 * b.real
        j = 1
        for k in range(nsteps):
            o = 4 * k
            e1 = complex(noise[i, o], noise[i, o + 1]) / _SQRT2
            e2 = complex(noise[i, o + 2], noise[i, o + 3]) / _SQRT2
            a, b = (
                a + (-gamma1 * a + kappa * np.conj(a) * b) * dt + sq1 * e1,
                b + (eps - gamma2 * b - 0.5 * kappa * a * a) * dt + sq2 * e2,
            )
            if _diverged(a, np.conj(a), b, np.conj(b), limit_sq):
                break
            if (k + 1) % record_every == 0:
                obs[i, j, 0] = 2.0 * a.real
                obs[i, j, 1] = a.real * a.real + a.imag * a.imag
                obs[i, j, 2] = 2.0 * b.real
                j += 1
        alpha[i] = a
        alpha_dag[i] = np.conj(a)
        beta[i] = b
        beta_dag[i] = np.conj(b)
        rec_count[i] = j


@njit(cache=True, parallel=True)
def integrate_classical(alpha, alpha_dag, beta, beta_dag, noise, nsteps,
                        kappa, gamma1, gamma2, eps, dt, record_every,
                        div_limit, obs, rec_count):
    n = alpha.shape[0]
    eps_c = np.conj(eps)
    limit_sq = div_limit * div_limit
    for i in prange(n):
        a = alpha[i]
        ad = alpha_dag[i]
        b = beta[i]
        bd = beta_dag[i]
        obs[i, 0, 0] = (a + ad).real
        obs[i, 0, 1] = (ad * a).real
        obs[i, 0, 2] = (b + bd).real
        j = 1
        for k in range(nsteps):
            a, ad, b, bd = (
                a + (-gamma1 * a + kappa * ad * b) * dt,
                ad + (-gamma1 * ad + kappa * a * bd) * dt,
                b + (eps - gamma2 * b - 0.5 * kappa * a * a) * dt,
                bd + (eps_c - gamma2 * bd - 0.5 * kappa * ad * ad) * dt,
            )
            if _diverged(a, ad, b, bd, limit_sq):
                break
            if (k + 1) % record_every == 0:
                obs[i, j, 0] = (a + ad).real
                obs[i, j, 1] = (ad * a).real
                obs[i, j, 2] = (b + bd).real
                j += 1
        alpha[i] = a
        alpha_dag[i] = ad
        beta[i] = b
        beta_dag[i] = bd
        rec_count[i] = j
