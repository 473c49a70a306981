"""Random-number streams, the third-order sigma-noise factory and the
statistical estimators used to verify it.

The sigma noises are four complex random variables (sigma1, sigma1_dag,
sigma2, sigma2_dag) engineered so that, among all joint moments that do not
involve complex conjugates, exactly two third-order cumulants survive:

    <<sigma1^2 sigma2_dag>> = <<sigma1_dag^2 sigma2>> = -kappa/4

per unit time step (the integrator multiplies the draws by dt^(1/3)).
They are built from four independent standardised complex Gaussians by a
nested complex Hubbard-Stratonovich factorisation; the two square-root
factors are each drawn once and shared between the pair of sigmas they
couple, which is what produces the nonzero cross cumulant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
import scipy.optimize

from .errors import ConvergenceError, ValidationError

_SQRT2 = math.sqrt(2.0)
_U64 = 2**64

# Mean modulus of a standardised complex Gaussian with density exp(-|z|^2)/pi.
MEAN_ABS_XI = math.sqrt(math.pi) / 2.0

SIGMA_VARIABLES = ("s1", "s1d", "s2", "s2d")

PRODUCT_RTOL = 1e-12  # relative tolerance on the factorisation constraints


class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    Distinct (seed, stream_id) pairs give statistically independent Philox
    streams; the same pair reproduces the identical sequence bit for bit.
    One stream is owned by one trajectory.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if not 0 <= int(seed) < _U64:
            raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if not 0 <= int(stream_id) < _U64:
            raise ValidationError(f"stream_id must be a 64-bit unsigned integer, got {stream_id}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normals(self, n: int) -> np.ndarray:
        return self._gen.standard_normal(n)

    def complex_normals(self, n: int) -> np.ndarray:
        """n standardised complex Gaussians: E[xi]=E[xi^2]=0, E[|xi|^2]=1."""
        z = self._gen.standard_normal(2 * n)
        return (z[0::2] + 1j * z[1::2]) / _SQRT2


def standard_complex_gaussian(stream: RngStream, n: int | None = None):
    """Draw standardised complex Gaussian(s) xi = (u + iv)/sqrt(2).

    Returns a scalar when n is None, else an array of n draws.
    """
    if n is None:
        return complex(stream.complex_normals(1)[0])
    return stream.complex_normals(n)


@dataclass(frozen=True)
class SigmaParams:
    """Constants of the sigma-noise factorisation.

    The products are constrained: p*q_dag = p_dag*q (their common value
    fixes the coupling as -kappa/8) and r*s_dag = r_dag*s = 1.  chi is the
    noise-balance weight used when choosing the free magnitudes.
    """

    p: complex
    p_dag: complex
    q: complex
    q_dag: complex
    r: complex
    r_dag: complex
    s: complex
    s_dag: complex
    chi: float

    def __post_init__(self):
        if not self.chi > 0:
            raise ValidationError(f"chi must be > 0, got {self.chi}")
        for name in ("p", "p_dag", "q", "q_dag", "r", "r_dag", "s", "s_dag"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        pq, pdq = self.p * self.q_dag, self.p_dag * self.q
        if abs(pq - pdq) > PRODUCT_RTOL * max(abs(pq), abs(pdq), 1e-300):
            raise ValidationError(
                f"factorisation constraint broken: p*q_dag={pq} != p_dag*q={pdq}"
            )
        rs, rds = self.r * self.s_dag, self.r_dag * self.s
        if abs(rs - 1.0) > PRODUCT_RTOL or abs(rds - 1.0) > PRODUCT_RTOL:
            raise ValidationError(
                f"factorisation constraint broken: r*s_dag={rs}, r_dag*s={rds}, both must be 1"
            )

    @property
    def implied_kappa(self) -> complex:
        """Coupling strength encoded in the products, from p*q_dag = -kappa/8."""
        return -8.0 * self.p * self.q_dag

    def validate_for(self, kappa: float) -> None:
        """Check the products against an externally known coupling."""
        ik = self.implied_kappa
        if abs(ik - kappa) > PRODUCT_RTOL * max(abs(kappa), 1.0):
            raise ValidationError(
                f"sigma params encode kappa={ik}, model has kappa={kappa}"
            )


def optimal_sigma_params(kappa: float, chi: float) -> SigmaParams:
    """Closed-form noise-minimising constants.

    p = kappa^(1/3) / (4 (chi*pi)^(1/6)) and s = chi^(1/4); q and r follow
    from the factorisation constraints.  See also numerical_sigma_params,
    which minimises the stated objective directly and scales differently
    with kappa (the two agree at kappa = 1).
    """
    if not kappa > 0:
        raise ValidationError(f"kappa must be > 0, got {kappa}")
    if not chi > 0:
        raise ValidationError(f"chi must be > 0, got {chi}")
    p = kappa ** (1.0 / 3.0) / (4.0 * (chi * math.pi) ** (1.0 / 6.0))
    s = chi**0.25
    q = -kappa / (8.0 * p)
    r = 1.0 / s
    return SigmaParams(p=p, p_dag=p, q=q, q_dag=q, r=r, r_dag=r, s=s, s_dag=s, chi=chi)


def sigma_noise_power(p: float, s: float, kappa: float, chi: float) -> float:
    """Sampling-noise objective E|s1|^2 + E|s1d|^2 + chi(E|s2|^2 + E|s2d|^2)
    for real positive p, s with q, r fixed by the constraints."""
    return 2.0 * ((kappa / (8.0 * p)) ** 2 + p * MEAN_ABS_XI * (s * s + chi / (s * s)))


def numerical_sigma_params(kappa: float, chi: float) -> SigmaParams:
    """Minimise the sigma sampling-noise objective over real p, s > 0.

    Uses the exact mean modulus sqrt(pi)/2 of the standardised complex
    Gaussian.  The optimum satisfies s = chi^(1/4) independently of that
    constant; p scales as kappa^(2/3).
    """
    if not kappa > 0:
        raise ValidationError(f"kappa must be > 0, got {kappa}")
    if not chi > 0:
        raise ValidationError(f"chi must be > 0, got {chi}")

    def f(logx):
        p, s = np.exp(logx)
        return sigma_noise_power(p, s, kappa, chi)

    def grad(logx):
        p, s = np.exp(logx)
        dfdp = -2.0 * kappa**2 / (32.0 * p**3) + 2.0 * MEAN_ABS_XI * (s * s + chi / (s * s))
        dfds = 2.0 * p * MEAN_ABS_XI * (2.0 * s - 2.0 * chi / s**3)
        return np.array([dfdp * p, dfds * s])  # chain rule for log coordinates

    x0 = np.log([0.25 * kappa ** (2.0 / 3.0), 1.0])
    res = scipy.optimize.minimize(f, x0, jac=grad, method="BFGS",
                                  options={"gtol": 1e-14, "maxiter": 500})
    p, s = np.exp(res.x)
    grad_ok = np.max(np.abs(grad(res.x))) < 1e-9
    if not (res.success or grad_ok):
        raise ConvergenceError(
            f"sigma-parameter minimisation did not converge: {res.message} "
            f"(last iterate p={p}, s={s})",
            last_iterate=(p, s),
        )
    q = -kappa / (8.0 * p)
    r = 1.0 / s
    return SigmaParams(p=p, p_dag=p, q=q, q_dag=q, r=r, r_dag=r, s=s, s_dag=s, chi=chi)


def sigma_from_xi(params: SigmaParams, xi1, xi1d, xi2, xi2d):
    """Build the sigma 4-tuple from the four base Gaussians.

    The square-root factor sqrt(p_dag * conj(xi2)) is evaluated once and the
    identical value enters both sigma1 and sigma2_dag (likewise
    sqrt(p * conj(xi2d)) for sigma1_dag and sigma2); the shared realisation
    carries the third-order correlation.  Principal branch throughout.
    """
    root2 = np.sqrt(params.p_dag * np.conj(xi2))
    root1 = np.sqrt(params.p * np.conj(xi2d))
    sigma1 = params.q * xi2 + params.s * np.conj(xi1d) * root2
    sigma1d = params.q_dag * xi2d + params.s_dag * np.conj(xi1) * root1
    sigma2 = params.r * xi1 * root1
    sigma2d = params.r_dag * xi1d * root2
    return sigma1, sigma1d, sigma2, sigma2d


def draw_sigma(params: SigmaParams, stream: RngStream, n: int | None = None):
    """Draw sigma 4-tuple(s); scalars for n=None, arrays of length n otherwise.

    The draws are the pre-dt^(1/3) amplitudes; the integrator applies the
    time-step factor.  Large n is generated in chunks (the stream sequence
    does not depend on the chunking).
    """
    m = 1 if n is None else int(n)
    out = tuple(np.empty(m, dtype=np.complex128) for _ in range(4))
    done = 0
    while done < m:
        c_n = min(m - done, 1 << 20)
        z = stream.normals(8 * c_n)
        c = (z[0::2] + 1j * z[1::2]) / _SQRT2
        chunk = sigma_from_xi(params, c[0::4], c[1::4], c[2::4], c[3::4])
        for dst, src in zip(out, chunk):
            dst[done:done + c_n] = src
        done += c_n
    if n is None:
        return tuple(complex(v[0]) for v in out)
    return out


def sigma_cumulant_targets(kappa: float) -> dict[tuple[int, ...], complex]:
    """Analytic joint cumulants of (s1, s1d, s2, s2d) up to order 3.

    Keys are sorted index tuples into SIGMA_VARIABLES.  Only the two
    third-order entries s1^2*s2d and s1d^2*s2 are nonzero, both -kappa/4.
    """
    targets = {}
    for order in (1, 2, 3):
        for idx in combinations_with_replacement(range(4), order):
            targets[idx] = 0j
    targets[(0, 0, 3)] = complex(-kappa / 4.0)
    targets[(1, 1, 2)] = complex(-kappa / 4.0)
    return targets


def monomial_label(idx: tuple[int, ...], variables=SIGMA_VARIABLES) -> str:
    """Human-readable monomial, e.g. (0, 0, 3) -> 's1^2*s2d'."""
    parts = []
    for v in sorted(set(idx)):
        k = idx.count(v)
        parts.append(variables[v] if k == 1 else f"{variables[v]}^{k}")
    return "*".join(parts)


@dataclass(frozen=True)
class CumulantEntry:
    value: complex
    se_real: float
    se_imag: float

    def within(self, target: complex, n_se: float) -> bool:
        """True when value agrees with target to n_se jackknife errors
        componentwise (exact agreement required where the error is zero)."""
        dr, di = self.value.real - target.real, self.value.imag - target.imag
        ok_r = abs(dr) <= n_se * self.se_real if self.se_real > 0 else dr == 0.0
        ok_i = abs(di) <= n_se * self.se_imag if self.se_imag > 0 else di == 0.0
        return ok_r and ok_i


@dataclass(frozen=True)
class CumulantTable:
    """Joint cumulants of four complex variables with jackknife errors."""

    entries: dict[tuple[int, ...], CumulantEntry]
    n_samples: int
    n_blocks: int
    variables: tuple[str, ...] = SIGMA_VARIABLES

    def __getitem__(self, idx) -> CumulantEntry:
        return self.entries[tuple(sorted(idx))]

    def labels(self) -> list[str]:
        return [monomial_label(idx, self.variables) for idx in self.entries]


def _moment_sums(samples, n_blocks):
    """Per-block sums of all monomials up to order 3 of the four variables.

    Returns (counts, sums) where sums maps a sorted index tuple to a
    (n_blocks,) complex array.
    """
    n = samples[0].shape[0]
    edges = np.linspace(0, n, n_blocks + 1).astype(np.int64)
    counts = np.diff(edges).astype(np.float64)
    keys = [idx for order in (1, 2, 3)
            for idx in combinations_with_replacement(range(4), order)]
    sums = {idx: np.empty(n_blocks, dtype=np.complex128) for idx in keys}
    for b in range(n_blocks):
        sl = slice(edges[b], edges[b + 1])
        x = [np.asarray(v[sl]) for v in samples]
        pair = {}
        for i, j in combinations_with_replacement(range(4), 2):
            pair[(i, j)] = x[i] * x[j]
        for idx in keys:
            if len(idx) == 1:
                block = x[idx[0]]
            elif len(idx) == 2:
                block = pair[idx]
            else:
                block = pair[idx[:2]] * x[idx[2]]
            sums[idx][b] = block.sum()
    return counts, sums


def _cumulant_from_moments(idx, m1, m2, m3):
    """Joint cumulant from raw moments; m2/m3 are keyed by sorted tuples."""
    if len(idx) == 1:
        return m1[idx[0]]
    if len(idx) == 2:
        i, j = idx
        return m2[idx] - m1[i] * m1[j]
    i, j, k = idx

    def pick2(a, b):
        return m2[tuple(sorted((a, b)))]

    return (
        m3[idx]
        - m1[i] * pick2(j, k)
        - m1[j] * pick2(i, k)
        - m1[k] * pick2(i, j)
        + 2.0 * m1[i] * m1[j] * m1[k]
    )


def empirical_cumulants(samples, max_order: int = 3, n_blocks: int = 100) -> CumulantTable:
    """Estimate all joint cumulants (conjugates excluded) up to max_order.

    Parameters
    ----------
    samples : four aligned complex arrays (s1, s1d, s2, s2d), or a single
        (n, 4) array of 4-tuples
    max_order : highest cumulant order, at most 3
    n_blocks : jackknife blocks for the standard errors

    Standard errors are delete-one-block jackknife estimates, computed
    separately for real and imaginary parts.
    """
    if max_order != 3:
        raise ValidationError(f"only max_order=3 is supported, got {max_order}")
    if isinstance(samples, np.ndarray) and samples.ndim == 2 and samples.shape[1] == 4:
        samples = samples.T
    samples = [np.ascontiguousarray(v, dtype=np.complex128) for v in samples]
    if len(samples) != 4:
        raise ValidationError(f"need 4 sample arrays, got {len(samples)}")
    n = samples[0].shape[0]
    if any(v.shape != (n,) for v in samples):
        raise ValidationError("sample arrays must be 1-d and aligned")
    if n < 10_000:
        raise ValidationError(f"need at least 10^4 samples for cumulants, got {n}")
    if n_blocks < 2 or n_blocks > n:
        raise ValidationError(f"n_blocks must be in [2, n], got {n_blocks}")

    counts, sums = _moment_sums(samples, n_blocks)
    n_tot = counts.sum()

    def moments(total_minus, denom):
        m1 = {i: total_minus[(i,)] / denom for i in range(4)}
        m2 = {idx: total_minus[idx] / denom
              for idx in combinations_with_replacement(range(4), 2)}
        m3 = {idx: total_minus[idx] / denom
              for idx in combinations_with_replacement(range(4), 3)}
        return m1, m2, m3

    totals = {idx: s.sum() for idx, s in sums.items()}
    m1, m2, m3 = moments(totals, n_tot)
    loo = {idx: (totals[idx] - s) for idx, s in sums.items()}  # (n_blocks,) each
    l1, l2, l3 = moments(loo, n_tot - counts)

    entries = {}
    for idx in sums:
        full = _cumulant_from_moments(idx, m1, m2, m3)
        jk = _cumulant_from_moments(idx, l1, l2, l3)  # vector over blocks
        fac = (n_blocks - 1) / n_blocks
        se_r = math.sqrt(fac * np.sum((jk.real - jk.real.mean()) ** 2))
        se_i = math.sqrt(fac * np.sum((jk.imag - jk.imag.mean()) ** 2))
        entries[idx] = CumulantEntry(complex(full), se_r, se_i)
    return CumulantTable(entries=entries, n_samples=int(n), n_blocks=int(n_blocks))


def hubbard_stratonovich_check(x: complex, y: complex, n: int, stream: RngStream) -> float:
    """Monte Carlo check of E[exp(x*xi + y*conj(xi))] = exp(x*y).

    Returns |sample mean - exp(x*y)| / |exp(x*y)| over n draws.  Restricted
    to |x*y| <= 1 so the estimator variance stays moderate.
    """
    x, y = complex(x), complex(y)
    if abs(x * y) > 1.0:
        raise ValidationError(f"|x*y| must be <= 1, got {abs(x * y)}")
    if n < 100_000:
        raise ValidationError(f"need at least 10^5 draws, got {n}")
    total = 0j
    remaining = int(n)
    while remaining > 0:
        m = min(remaining, 1_000_000)
        xi = stream.complex_normals(m)
        total += np.exp(x * xi + y * np.conj(xi)).sum()
        remaining -= m
    target = np.exp(x * y)
    return float(abs(total / n - target) / abs(target))
