"""Independent ground truth: truncated two-mode Fock-space master equation.

The two-photon conversion Hamiltonian, a classical pump drive and Lindblad
damping of both modes are integrated with classical RK4 on a dense density
matrix; the mode operators are precomputed sparse matrices.  Conventions
are fixed so the first-moment equations match the phase-space drift
term by term:

    d<a>/dt = -gamma1 <a> + kappa <a_dag b>
    d<b>/dt =  epsilon - gamma2 <b> - (kappa/2) <a^2>

i.e. amplitudes decay as exp(-gamma t) and the pump enters as a constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import HermiticityError, OracleInvariantError, TruncationError, ValidationError

TRACE_TOL = 1e-8
HERMITICITY_TOL = 1e-10
TRUNCATION_TOL = 1e-6
IMAG_TOL = 1e-8


def _destroy(n: int):
    return sp.diags_array(np.sqrt(np.arange(1, n)), offsets=1,
                          format="csr", dtype=np.complex128)


@lru_cache(maxsize=8)
def mode_operators(dims: tuple[int, int]):
    """Sparse two-mode operators (a, a_dag, b, b_dag, n_a, n_b, ad2b, a2bd)
    on the product Fock space of the given cutoffs."""
    na_dim, nb_dim = dims
    if na_dim < 2 or nb_dim < 2:
        raise ValidationError(f"Fock cutoffs must be >= 2, got {dims}")
    eye_a = sp.eye_array(na_dim, format="csr", dtype=np.complex128)
    eye_b = sp.eye_array(nb_dim, format="csr", dtype=np.complex128)
    a = sp.kron(_destroy(na_dim), eye_b, format="csr")
    b = sp.kron(eye_a, _destroy(nb_dim), format="csr")
    ad = a.conj().T.tocsr()
    bd = b.conj().T.tocsr()
    return {
        "a": a, "ad": ad, "b": b, "bd": bd,
        "na": (ad @ a).tocsr(), "nb": (bd @ b).tocsr(),
        "ad2b": (ad @ ad @ b).tocsr(), "a2bd": (a @ a @ bd).tocsr(),
    }


@dataclass(frozen=True)
class DensityMatrix:
    """Two-mode density matrix on a truncated Fock space.

    dims = (N_a, N_b); rho is the (N_a*N_b, N_a*N_b) complex matrix in the
    product number basis, index n*N_b + m for |n, m>.
    """

    dims: tuple[int, int]
    rho: np.ndarray

    def __post_init__(self):
        d = self.dims[0] * self.dims[1]
        if self.rho.shape != (d, d):
            raise ValidationError(
                f"state shape {self.rho.shape} does not match dims {self.dims}"
            )

    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.rho - self.rho.conj().T).max())

    def top_level_populations(self) -> tuple[float, float]:
        """Cutoff occupations (P(n_a = N_a - 1), P(n_b = N_b - 1))."""
        na_dim, nb_dim = self.dims
        t = self.rho.reshape(na_dim, nb_dim, na_dim, nb_dim)
        pa = float(np.einsum("mm->m", t[na_dim - 1, :, na_dim - 1, :]).real.sum())
        pb = float(np.einsum("nn->n", t[:, nb_dim - 1, :, nb_dim - 1]).real.sum())
        return pa, pb

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def check_invariants(self, truncation_tol: float = TRUNCATION_TOL) -> None:
        tr = abs(self.trace() - 1.0)
        if tr > TRACE_TOL:
            raise OracleInvariantError(f"trace deviates from 1 by {tr:.3e}")
        hd = self.hermiticity_defect()
        if hd > HERMITICITY_TOL:
            raise OracleInvariantError(f"hermiticity defect {hd:.3e}")
        pa, pb = self.top_level_populations()
        if pa + pb > truncation_tol:
            raise TruncationError(
                f"cutoff populations P(n_a={self.dims[0]-1})={pa:.3e}, "
                f"P(n_b={self.dims[1]-1})={pb:.3e} exceed {truncation_tol:.1e}; "
                f"increase dims beyond {self.dims}"
            )


def coherent_density(alpha0: complex, beta0: complex, dims: tuple[int, int],
                     tail_tol: float = 1e-6) -> DensityMatrix:
    """Product coherent state |alpha0, beta0><...| truncated and renormalised.

    Rejects amplitudes whose truncated tail exceeds tail_tol of the norm.
    """
    dims = (int(dims[0]), int(dims[1]))

    def vec(amp, n):
        v = np.zeros(n, dtype=np.complex128)
        v[0] = 1.0
        for i in range(1, n):
            v[i] = v[i - 1] * amp / math.sqrt(i)
        v *= math.exp(-0.5 * abs(amp) ** 2)
        return v

    va = vec(complex(alpha0), dims[0])
    vb = vec(complex(beta0), dims[1])
    lost = 1.0 - float(np.vdot(va, va).real * np.vdot(vb, vb).real)
    if lost > tail_tol:
        raise ValidationError(
            f"coherent amplitudes ({alpha0}, {beta0}) lose {lost:.2e} norm at dims {dims}"
        )
    psi = np.kron(va, vb)
    psi /= np.linalg.norm(psi)
    return DensityMatrix(dims=dims, rho=np.outer(psi, psi.conj()))


def _drift_operator(dims, params):
    """C = (kappa/2)(ad^2 b - a^2 bd) + eps*bd - conj(eps)*b - g1*n_a - g2*n_b;
    the master equation right-hand side is C rho + rho C^dag + jump terms."""
    ops = mode_operators(dims)
    e = params.epsilon
    C = (0.5 * params.kappa * (ops["ad2b"] - ops["a2bd"])
         + e * ops["bd"] - np.conj(e) * ops["b"]
         - params.gamma1 * ops["na"] - params.gamma2 * ops["nb"])
    return C.tocsr(), C.conj().T.tocsr(), ops


def liouvillian_rhs(state: DensityMatrix, params) -> DensityMatrix:
    """Time derivative of the density matrix under coherent two-photon
    conversion, classical pump drive, and damping of both modes."""
    C, Cd, ops = _drift_operator(state.dims, params)
    rho = state.rho
    out = C @ rho + rho @ Cd
    out += (2.0 * params.gamma1) * ((ops["a"] @ rho) @ ops["ad"])
    out += (2.0 * params.gamma2) * ((ops["b"] @ rho) @ ops["bd"])
    return DensityMatrix(dims=state.dims, rho=out)


def evolve(rho0: DensityMatrix, params, dt: float, steps: int,
           record_every: int = 1,
           truncation_tol: float = TRUNCATION_TOL) -> list[tuple[float, DensityMatrix]]:
    """RK4 evolution; returns [(t, state)] including t=0.

    Trace drift and cutoff populations are checked at every recorded point
    and raise rather than being corrected.  dt must resolve the Liouvillian
    (dt * ||L|| of order one or below); the default acceptance setting is
    dt = 1e-3.
    """
    if not dt > 0:
        raise ValidationError(f"dt must be > 0, got {dt}")
    if steps < 0 or record_every < 1:
        raise ValidationError("steps must be >= 0 and record_every >= 1")
    C, Cd, ops = _drift_operator(rho0.dims, params)
    a, ad, b, bd = ops["a"], ops["ad"], ops["b"], ops["bd"]
    g1, g2 = 2.0 * params.gamma1, 2.0 * params.gamma2

    def rhs(rho):
        return C @ rho + rho @ Cd + g1 * ((a @ rho) @ ad) + g2 * ((b @ rho) @ bd)

    rho = rho0.rho.copy()
    out = [(0.0, DensityMatrix(rho0.dims, rho.copy()))]
    out[0][1].check_invariants(truncation_tol)
    for k in range(steps):
        k1 = rhs(rho)
        k2 = rhs(rho + (0.5 * dt) * k1)
        k3 = rhs(rho + (0.5 * dt) * k2)
        k4 = rhs(rho + dt * k3)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % record_every == 0:
            state = DensityMatrix(rho0.dims, rho.copy())
            state.check_invariants(truncation_tol)
            out.append(((k + 1) * dt, state))
    return out


def _real_expectation(state: DensityMatrix, op, what: str) -> float:
    val = complex(np.trace(op @ state.rho))
    if abs(val.imag) > IMAG_TOL:
        raise HermiticityError(
            f"<{what}> has imaginary part {val.imag:.3e}; state is not hermitian enough"
        )
    return val.real


def expectation_Xa(state: DensityMatrix) -> float:
    """Signal quadrature Tr[(a + a_dag) rho]."""
    ops = mode_operators(state.dims)
    return _real_expectation(state, ops["a"] + ops["ad"], "Xa")


def expectation_Xb(state: DensityMatrix) -> float:
    ops = mode_operators(state.dims)
    return _real_expectation(state, ops["b"] + ops["bd"], "Xb")


def expectation_photon_a(state: DensityMatrix) -> float:
    ops = mode_operators(state.dims)
    return _real_expectation(state, ops["na"], "n_a")


def expectation(state: DensityMatrix, op) -> complex:
    """Tr[op rho] for an arbitrary (sparse or dense) operator."""
    return complex(np.trace(op @ state.rho))


def oracle_series(params, alpha0: complex, beta0: complex, dims: tuple[int, int],
                  dt: float, times: np.ndarray,
                  truncation_tol: float = TRUNCATION_TOL):
    """Exact-within-truncation observable series on the given time grid,
    packaged like an ensemble series (zero standard errors) so that
    compare_series works across methods.

    Grid times must be integer multiples of the requested RK4 step.
    """
    from .ensemble import ObservableSeries  # local import to avoid a cycle

    times = np.asarray(times, dtype=float)
    if len(times) < 1 or times[0] != 0.0:
        raise ValidationError("time grid must start at 0")
    if len(times) > 1:
        spacing = np.diff(times)
        per = spacing[0] / dt
        if not np.allclose(spacing, spacing[0], rtol=0, atol=1e-12):
            raise ValidationError("time grid must be uniform")
        if abs(per - round(per)) > 1e-9 or round(per) < 1:
            raise ValidationError(
                f"grid spacing {spacing[0]} is not a multiple of oracle dt {dt}"
            )
        record_every = int(round(per))
        steps = record_every * (len(times) - 1)
    else:
        record_every, steps = 1, 0
    rho0 = coherent_density(alpha0, beta0, dims)
    recorded = evolve(rho0, params, dt, steps, record_every, truncation_tol)
    n_rec = len(times)
    mean = np.empty((n_rec, 3))
    for j, (_, state) in enumerate(recorded):
        mean[j, 0] = expectation_Xa(state)
        mean[j, 1] = expectation_photon_a(state)
        mean[j, 2] = expectation_Xb(state)
    return ObservableSeries(
        times=times.copy(),
        mean=mean,
        stderr=np.zeros_like(mean),
        n_effective=np.ones(n_rec, dtype=np.int64),
        diverged_fraction=np.zeros(n_rec),
        n_traj=1,
        truncated=False,
    )
