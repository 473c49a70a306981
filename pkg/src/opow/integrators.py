"""Single-trajectory stepping kernels and initial-state samplers.

Four representations share one explicit-Euler time-stepping scheme:

* positive_w        doubled phase space; Wiener noise at dt^(1/2) plus the
                    third-order sigma noise at dt^(1/3).  Defined per finite
                    time step; there is no continuous-time limit.
* positive_p        doubled phase space; multiplicative sqrt(kappa*beta)
                    Wiener noise on the signal pair only.
* truncated_wigner  single phase space (daggers conjugate); additive
                    Wiener noise, third-order terms dropped.
* classical         deterministic drift only.

The functions here advance one PhasePoint; the ensemble module runs the
same arithmetic over trajectory batches through the backend kernels.  Both
paths consume random numbers in the same per-trajectory order (initial
smear first, then a fixed number of floats per step), so a single-point
trajectory and the corresponding batch row agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergedTrajectoryError, ValidationError
from .model import ModelParams, PhasePoint, classical_drift
from .noise import RngStream, SigmaParams, sigma_from_xi

REPRESENTATIONS = ("positive_w", "positive_p", "truncated_wigner", "classical")
INITIAL_MODES = ("coherent", "deterministic")

# Amplitude magnitude beyond which a trajectory counts as diverged.
DIVERGENCE_LIMIT = 1e6

# Standard normals consumed per step, in a fixed column order.
NOISE_FLOATS_PER_STEP = {
    "positive_w": 12,       # eta1, eta2, xi1, xi1_dag, xi2, xi2_dag (re, im pairs)
    "positive_p": 2,        # w1, w2 (real)
    "truncated_wigner": 4,  # eta1, eta2 (re, im pairs)
    "classical": 0,
}
# Standard normals consumed by a coherent-mode initial smear (Wigner family).
INITIAL_SMEAR_FLOATS = 4

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class StepConfig:
    """Time step and representation; increment scales precomputed from dt."""

    dt: float
    representation: str
    sqrt_dt: float = 0.0
    cbrt_dt: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be > 0, got {self.dt}")
        if self.representation not in REPRESENTATIONS:
            raise ValidationError(
                f"unknown representation {self.representation!r}; "
                f"expected one of {REPRESENTATIONS}"
            )
        object.__setattr__(self, "sqrt_dt", math.sqrt(self.dt))
        object.__setattr__(self, "cbrt_dt", self.dt ** (1.0 / 3.0))


@dataclass(frozen=True)
class InitialStateSpec:
    """Initial condition: a coherent state of given amplitudes, or the bare
    phase-space point itself (deterministic)."""

    mode: str
    alpha0: complex
    beta0: complex

    def __post_init__(self):
        if self.mode not in INITIAL_MODES:
            raise ValidationError(
                f"unknown initial mode {self.mode!r}; expected one of {INITIAL_MODES}"
            )
        object.__setattr__(self, "alpha0", complex(self.alpha0))
        object.__setattr__(self, "beta0", complex(self.beta0))


def _smears_initial_state(spec: InitialStateSpec, representation: str) -> bool:
    # A coherent state is a delta in the P family but a half-quantum-wide
    # Gaussian in the Wigner family.
    return spec.mode == "coherent" and representation in ("positive_w", "truncated_wigner")


def _check_finite(x: PhasePoint) -> None:
    for v in (x.alpha, x.alpha_dag, x.beta, x.beta_dag):
        if not (math.isfinite(v.real) and math.isfinite(v.imag)) or abs(v) > DIVERGENCE_LIMIT:
            raise DivergedTrajectoryError(f"trajectory state diverged: {x}")


def sample_initial(spec: InitialStateSpec, representation: str, stream: RngStream) -> PhasePoint:
    """Draw one initial PhasePoint for the given representation.

    Deterministic mode, and coherent mode under positive_p or classical,
    give exactly (alpha0, conj(alpha0), beta0, conj(beta0)).  Coherent mode
    under the Wigner family adds independent complex Gaussians of variance
    1/2 per mode (the vacuum width of the coherent state's quasiprobability),
    with the daggered components kept conjugate.
    """
    if representation not in REPRESENTATIONS:
        raise ValidationError(f"unknown representation {representation!r}")
    if _smears_initial_state(spec, representation):
        z = stream.normals(INITIAL_SMEAR_FLOATS)
        za = (z[0] + 1j * z[1]) / 2.0
        zb = (z[2] + 1j * z[3]) / 2.0
        return PhasePoint.from_single(spec.alpha0 + za, spec.beta0 + zb)
    return PhasePoint.from_single(spec.alpha0, spec.beta0)


def step_positive_w(x: PhasePoint, params: ModelParams, sp: SigmaParams,
                    cfg: StepConfig, stream: RngStream) -> PhasePoint:
    """One Euler step of the doubled-phase-space difference equations with
    Wiener noise at dt^(1/2) and sigma noise at dt^(1/3).

    The same eta1 enters the alpha update and, conjugated, the alpha_dag
    update (likewise eta2 for the beta pair).
    """
    if cfg.representation != "positive_w":
        raise ValidationError(f"config representation is {cfg.representation!r}")
    _check_finite(x)
    z = stream.normals(12)
    e1 = (z[0] + 1j * z[1]) / _SQRT2
    e2 = (z[2] + 1j * z[3]) / _SQRT2
    xi = (z[4::2] + 1j * z[5::2]) / _SQRT2
    s1, s1d, s2, s2d = sigma_from_xi(sp, xi[0], xi[1], xi[2], xi[3])
    d = classical_drift(x, params)
    sq1 = math.sqrt(params.gamma1) * cfg.sqrt_dt
    sq2 = math.sqrt(params.gamma2) * cfg.sqrt_dt
    return PhasePoint(
        x.alpha + d.alpha * cfg.dt + sq1 * e1 + s1 * cfg.cbrt_dt,
        x.alpha_dag + d.alpha_dag * cfg.dt + sq1 * e1.conjugate() + s1d * cfg.cbrt_dt,
        x.beta + d.beta * cfg.dt + sq2 * e2 + s2 * cfg.cbrt_dt,
        x.beta_dag + d.beta_dag * cfg.dt + sq2 * e2.conjugate() + s2d * cfg.cbrt_dt,
    )


def step_positive_p(x: PhasePoint, params: ModelParams,
                    cfg: StepConfig, stream: RngStream) -> PhasePoint:
    """One Euler-Ito step of the doubled-phase-space equations with
    independent real Wiener noises multiplying sqrt(kappa*beta) and
    sqrt(kappa*beta_dag) on the signal pair (principal square roots)."""
    if cfg.representation != "positive_p":
        raise ValidationError(f"config representation is {cfg.representation!r}")
    _check_finite(x)
    w = stream.normals(2)
    d = classical_drift(x, params)
    k = params.kappa
    return PhasePoint(
        x.alpha + d.alpha * cfg.dt + np.sqrt(complex(k * x.beta)) * w[0] * cfg.sqrt_dt,
        x.alpha_dag + d.alpha_dag * cfg.dt + np.sqrt(complex(k * x.beta_dag)) * w[1] * cfg.sqrt_dt,
        x.beta + d.beta * cfg.dt,
        x.beta_dag + d.beta_dag * cfg.dt,
    )


def step_truncated_wigner(x: PhasePoint, params: ModelParams,
                          cfg: StepConfig, stream: RngStream) -> PhasePoint:
    """One Euler step of the second-order (truncated) single-phase-space
    equations; the conjugation constraint is re-imposed exactly."""
    if cfg.representation != "truncated_wigner":
        raise ValidationError(f"config representation is {cfg.representation!r}")
    if not x.is_conjugate_paired():
        raise ValidationError(
            "truncated-Wigner state must satisfy alpha_dag == conj(alpha), "
            f"beta_dag == conj(beta); got {x}"
        )
    _check_finite(x)
    z = stream.normals(4)
    e1 = (z[0] + 1j * z[1]) / _SQRT2
    e2 = (z[2] + 1j * z[3]) / _SQRT2
    k, g1, g2, e = params.kappa, params.gamma1, params.gamma2, params.epsilon
    alpha = x.alpha + (-g1 * x.alpha + k * x.alpha.conjugate() * x.beta) * cfg.dt \
        + math.sqrt(g1) * cfg.sqrt_dt * e1
    beta = x.beta + (e - g2 * x.beta - 0.5 * k * x.alpha * x.alpha) * cfg.dt \
        + math.sqrt(g2) * cfg.sqrt_dt * e2
    return PhasePoint.from_single(alpha, beta)


def step_classical(x: PhasePoint, params: ModelParams, cfg: StepConfig) -> PhasePoint:
    """One deterministic Euler step."""
    _check_finite(x)
    d = classical_drift(x, params)
    return PhasePoint(
        x.alpha + d.alpha * cfg.dt,
        x.alpha_dag + d.alpha_dag * cfg.dt,
        x.beta + d.beta * cfg.dt,
        x.beta_dag + d.beta_dag * cfg.dt,
    )


def sample_increments(x: PhasePoint, params: ModelParams, cfg: StepConfig,
                      stream: RngStream, n: int, sigma: SigmaParams | None = None):
    """n independent one-step increments (d_alpha, d_alpha_dag, d_beta,
    d_beta_dag) from the fixed phase point x, as four complex arrays.

    Vectorised companion of the single-step functions, used to measure
    increment moments and cumulants at a point.  Generated in chunks; the
    stream sequence does not depend on the chunking.
    """
    from .backend import get_kernels

    rep = cfg.representation
    if rep == "positive_w" and sigma is None:
        raise ValidationError("positive_w increments need sigma params")
    if rep == "truncated_wigner" and not x.is_conjugate_paired():
        raise ValidationError("truncated-Wigner increments need a conjugate-paired point")
    kern = get_kernels()
    k_floats = NOISE_FLOATS_PER_STEP[rep]
    out = tuple(np.empty(n, dtype=np.complex128) for _ in range(4))
    done = 0
    while done < n:
        m = min(n - done, 1 << 20)
        a0 = np.full(m, x.alpha, dtype=np.complex128)
        ad0 = np.full(m, x.alpha_dag, dtype=np.complex128)
        b0 = np.full(m, x.beta, dtype=np.complex128)
        bd0 = np.full(m, x.beta_dag, dtype=np.complex128)
        noise = stream.normals(m * k_floats).reshape(m, k_floats) if k_floats else \
            np.empty((m, 0))
        obs = np.empty((m, 2, 3))
        rec = np.empty(m, dtype=np.int64)
        args = (a0, ad0, b0, bd0, noise, 1,
                params.kappa, params.gamma1, params.gamma2, params.epsilon)
        if rep == "positive_w":
            kern.integrate_positive_w(*args, sigma.q, sigma.q_dag, sigma.s, sigma.s_dag,
                                      sigma.p, sigma.p_dag, sigma.r, sigma.r_dag,
                                      cfg.dt, 1, DIVERGENCE_LIMIT, obs, rec)
        elif rep == "positive_p":
            kern.integrate_positive_p(*args, cfg.dt, 1, DIVERGENCE_LIMIT, obs, rec)
        elif rep == "truncated_wigner":
            kern.integrate_truncated_wigner(*args, cfg.dt, 1, DIVERGENCE_LIMIT, obs, rec)
        else:
            kern.integrate_classical(*args, cfg.dt, 1, DIVERGENCE_LIMIT, obs, rec)
        sl = slice(done, done + m)
        out[0][sl] = a0 - x.alpha
        out[1][sl] = ad0 - x.alpha_dag
        out[2][sl] = b0 - x.beta
        out[3][sl] = bd0 - x.beta_dag
        done += m
    return out
