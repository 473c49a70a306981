"""Physical parameters and classical (deterministic) analysis of the
degenerate optical parametric oscillator.

The signal mode (amplitude alpha, loss rate gamma1) is driven through a
chi^(2) nonlinearity of strength kappa by a pump mode (amplitude beta,
loss rate gamma2) with classical drive epsilon.  States live in a doubled
phase space where the daggered amplitudes are independent variables; the
single-phase-space representations keep them conjugate.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class ModelParams:
    """OPO constants, all in units of inverse time.

    kappa   : nonlinear mode coupling, > 0
    gamma1  : signal loss rate, >= 0
    gamma2  : pump loss rate, >= 0
    epsilon : classical pump drive (complex)
    """

    kappa: float
    gamma1: float
    gamma2: float
    epsilon: complex

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValidationError(f"kappa must be > 0, got {self.kappa}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ValidationError(
                f"loss rates must be >= 0, got gamma1={self.gamma1}, gamma2={self.gamma2}"
            )
        object.__setattr__(self, "epsilon", complex(self.epsilon))


@dataclass(frozen=True)
class PhasePoint:
    """Doubled-phase-space state (alpha, alpha_dag, beta, beta_dag).

    In the doubled representations alpha_dag and beta_dag are independent
    complex variables.  Single-phase-space kernels maintain
    alpha_dag == conj(alpha) and beta_dag == conj(beta) exactly.
    """

    alpha: complex
    alpha_dag: complex
    beta: complex
    beta_dag: complex

    @classmethod
    def from_single(cls, alpha: complex, beta: complex) -> "PhasePoint":
        """Point on the classical manifold where daggers are conjugates."""
        alpha = complex(alpha)
        beta = complex(beta)
        return cls(alpha, alpha.conjugate(), beta, beta.conjugate())

    def is_conjugate_paired(self, tol: float = 0.0) -> bool:
        return (
            abs(self.alpha_dag - self.alpha.conjugate()) <= tol
            and abs(self.beta_dag - self.beta.conjugate()) <= tol
        )


def critical_pump(params: ModelParams) -> float:
    """Pump amplitude at which the classical zero-signal solution destabilises.

    Equals gamma1*gamma2/kappa, reducing to gamma^2/kappa for equal losses.
    """
    return params.gamma1 * params.gamma2 / params.kappa


def classical_drift(x: PhasePoint, params: ModelParams) -> PhasePoint:
    """Deterministic velocity field of the doubled-phase-space equations."""
    k, g1, g2, e = params.kappa, params.gamma1, params.gamma2, params.epsilon
    return PhasePoint(
        -g1 * x.alpha + k * x.alpha_dag * x.beta,
        -g1 * x.alpha_dag + k * x.alpha * x.beta_dag,
        e - g2 * x.beta - 0.5 * k * x.alpha * x.alpha,
        e.conjugate() - g2 * x.beta_dag - 0.5 * k * x.alpha_dag * x.alpha_dag,
    )


def semiclassical_steady_state(params: ModelParams, branch: int = +1) -> PhasePoint:
    """Classical fixed point for real pump, symmetry-broken above threshold.

    Below threshold the signal is empty and the pump sits at epsilon/gamma2.
    Above threshold beta = gamma1/kappa and alpha = branch*sqrt(2(eps-eps_c)/kappa).
    Complex pump amplitudes have no closed form here and are rejected.
    """
    e = params.epsilon
    if e.imag != 0.0 or e.real < 0.0:
        raise ValidationError(
            "closed-form steady state requires real epsilon >= 0; "
            f"got epsilon={e}"
        )
    if branch not in (+1, -1):
        raise ValidationError(f"branch must be +1 or -1, got {branch}")
    eps = e.real
    eps_c = critical_pump(params)
    if eps > eps_c:
        alpha = branch * cmath.sqrt(2.0 * (eps - eps_c) / params.kappa)
        beta = complex(params.gamma1 / params.kappa)
    else:
        alpha = 0j
        beta = complex(eps / params.gamma2) if params.gamma2 > 0 else 0j
    return PhasePoint.from_single(alpha, beta)
