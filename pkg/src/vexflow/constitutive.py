"""Concentration-dependent power-law stress and concentration flux.

The extra stress is

    S(c, B) = nu0 * (kappa1 + kappa2 |B|^2)^((r(c) - 2) / 2) * B

with a bounded exponent profile ``r(c)``; the flux is
``q_c(c, g, B) = kappa(c, |B|) g`` with a bounded, coercive diffusivity.
All evaluators broadcast over leading array axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, SingularViscosityError

MIN_KAPPA1 = 1e-4


def _logistic(z):
    # overflow-free for large |z|
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class ExponentField:
    """Logistic exponent profile, decreasing in ``c`` for ``gamma > 0``.

    ``r(c) = r_plus + (r_minus - r_plus) * logistic(gamma * (c - c_mid))``
    """

    r_minus: float
    r_plus: float
    gamma: float = 1.0
    c_mid: float = 0.0

    def __post_init__(self):
        if not (1.0 < self.r_minus <= self.r_plus < np.inf):
            raise ConfigurationError(
                f"need 1 < r_minus <= r_plus < inf, got {self.r_minus}, {self.r_plus}"
            )
        if self.gamma < 0:
            raise ConfigurationError("gamma must be non-negative")

    def __call__(self, c):
        c = np.asarray(c, dtype=float)
        return self.r_plus + (self.r_minus - self.r_plus) * _logistic(self.gamma * (c - self.c_mid))

    @property
    def lipschitz(self) -> float:
        return self.gamma * (self.r_plus - self.r_minus) / 4.0

    @property
    def is_constant(self) -> bool:
        return self.gamma == 0.0 or self.r_minus == self.r_plus

    def conjugate(self, c):
        r = self(c)
        return r / (r - 1.0)


@dataclass(frozen=True)
class CustomExponent:
    """User profile; the caller vouches for the reported bounds."""

    func: Callable
    r_minus: float
    r_plus: float

    def __call__(self, c):
        return np.clip(np.asarray(self.func(np.asarray(c, dtype=float)), dtype=float), self.r_minus, self.r_plus)

    @property
    def is_constant(self) -> bool:
        return self.r_minus == self.r_plus

    def conjugate(self, c):
        r = self(c)
        return r / (r - 1.0)


def constant_exponent(r: float) -> ExponentField:
    return ExponentField(r, r, gamma=0.0)


@dataclass(frozen=True)
class StressLaw:
    nu0: float = 1.0
    kappa1: float = 1.0
    kappa2: float = 1.0
    exponent: ExponentField = field(default_factory=lambda: ExponentField(1.6, 2.4))
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.nu0 <= 0 or self.kappa2 <= 0:
            raise ConfigurationError("nu0 and kappa2 must be positive")
        if self.kappa1 < 0:
            raise ConfigurationError("kappa1 must be non-negative")
        if not self.allow_degenerate and self.kappa1 < MIN_KAPPA1:
            raise ConfigurationError(
                f"kappa1={self.kappa1} below {MIN_KAPPA1}; pass allow_degenerate=True to permit it"
            )

    def viscosity(self, c, bnorm2):
        """nu(c, |B|) from the squared Frobenius norm of B."""
        r = self.exponent(c)
        a = self.kappa1 + self.kappa2 * np.asarray(bnorm2, dtype=float)
        if self.kappa1 == 0.0 and np.any((a == 0.0) & (r < 2.0)):
            raise SingularViscosityError("viscosity is infinite at B = 0 when kappa1 = 0 and r < 2")
        with np.errstate(divide="ignore"):
            return self.nu0 * a ** ((r - 2.0) / 2.0)


def _sym(B):
    B = np.asarray(B, dtype=float)
    return 0.5 * (B + np.swapaxes(B, -1, -2))


def eval_exponent(r, c):
    return r(c)


def eval_stress(law: StressLaw, c, B):
    """Extra stress for symmetric ``B`` of shape (..., d, d)."""
    B = _sym(B)
    nu = law.viscosity(c, np.sum(B * B, axis=(-2, -1)))
    return nu[..., None, None] * B


def eval_stress_derivative(law: StressLaw, c, B):
    """Fourth-order tangent dS_ij/dB_kl, shape (..., d, d, d, d).

    Restricted to symmetric directions (minor-symmetric identity part).
    """
    B = _sym(B)
    d = B.shape[-1]
    n2 = np.sum(B * B, axis=(-2, -1))
    r = law.exponent(c)
    nu = law.viscosity(c, n2)
    a = law.kappa1 + law.kappa2 * n2
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(n2 > 0, law.nu0 * (r - 2.0) * law.kappa2 * a ** ((r - 4.0) / 2.0), 0.0)
    eye = np.eye(d)
    Isym = 0.5 * (np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye))
    return (
        nu[..., None, None, None, None] * Isym
        + beta[..., None, None, None, None] * np.einsum("...ij,...kl->...ijkl", B, B)
    )


@dataclass(frozen=True)
class FluxLaw:
    """Diffusivity ``k0 + k1 |B|^2 / (1 + |B|^2)``; bounded in [k0, k0+k1]."""

    k0: float = 1.0
    k1: float = 0.0

    def __post_init__(self):
        if self.k0 <= 0 or self.k1 < 0:
            raise ConfigurationError("need k0 > 0 and k1 >= 0")

    def diffusivity(self, c, bnorm2):
        bnorm2 = np.asarray(bnorm2, dtype=float)
        kappa = self.k0 + self.k1 * bnorm2 / (1.0 + bnorm2)
        return np.broadcast_to(kappa, np.broadcast_shapes(np.shape(c), bnorm2.shape)).copy()


def eval_flux(law: FluxLaw, c, g, B):
    """Concentration flux; exactly linear in ``g``."""
    B = _sym(B)
    kappa = law.diffusivity(c, np.sum(B * B, axis=(-2, -1)))
    return kappa[..., None] * np.asarray(g, dtype=float)


# -- certification -----------------------------------------------------------
@dataclass
class CertReport:
    """Empirical envelopes for the structural assumptions on S and q_c."""

    n_samples: int
    seed: int
    C1: float
    monotonicity_min_gap: float
    monotonicity_pairs: int
    monotonicity_skipped: int
    C2: float
    C3: float
    C4: float
    C5: float
    growth_ok: bool
    monotonicity_ok: bool
    coercivity_ok: bool
    flux_growth_ok: bool
    flux_coercivity_ok: bool

    @property
    def passed(self) -> bool:
        return (
            self.growth_ok
            and self.monotonicity_ok
            and self.coercivity_ok
            and self.flux_growth_ok
            and self.flux_coercivity_ok
        )

    def to_text(self) -> str:
        lines = []
        for k, v in self.__dict__.items():
            lines.append(f"{k} = {v!r}")
        lines.append(f"passed = {self.passed!r}")
        return "\n".join(lines) + "\n"


def _random_sym(rng, n, d, norms):
    A = rng.standard_normal((n, d, d))
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    A /= np.linalg.norm(A, axis=(1, 2))[:, None, None]
    return A * norms[:, None, None]


def monotonicity_gaps(law: StressLaw, c, B1, B2, min_sep=1e-8):
    """``(S(c,B1) - S(c,B2)) : (B1 - B2)`` for pairs at least ``min_sep`` apart.

    Returns ``(gaps, n_skipped)``.
    """
    dB = _sym(B1) - _sym(B2)
    sep = np.linalg.norm(dB, axis=(-2, -1))
    keep = sep >= min_sep
    dS = eval_stress(law, c[keep], B1[keep]) - eval_stress(law, c[keep], B2[keep])
    return np.sum(dS * dB[keep], axis=(-2, -1)), int(np.count_nonzero(~keep))


def certify_laws(
    stress: StressLaw,
    flux: FluxLaw,
    n_samples: int,
    seed: int = 0,
    c_range=(-2.0, 2.0),
    dim: int = 3,
) -> CertReport:
    """Sample the growth, monotonicity and coercivity conditions.

    Frobenius norms of sampled tensors are log-uniform in [1e-3, 1e3].
    A failed check is reported in the flags, never raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = n_samples

    def norms():
        return 10.0 ** rng.uniform(-3.0, 3.0, n)

    c = rng.uniform(c_range[0], c_range[1], n)
    r = stress.exponent(c)
    rc = r / (r - 1.0)

    B = _random_sym(rng, n, dim, norms())
    S = eval_stress(stress, c, B)
    nB = np.linalg.norm(B, axis=(1, 2))
    nS = np.linalg.norm(S, axis=(1, 2))
    C1 = float(np.max(nS / (nB ** (r - 1.0) + 1.0)))

    # independent pairs plus close pairs (strictness near the diagonal)
    B1 = _random_sym(rng, n, dim, norms())
    B2 = _random_sym(rng, n, dim, norms())
    near = rng.random(n) < 0.5
    scale = 1e-4 * np.linalg.norm(B1[near], axis=(1, 2))
    B2[near] = B1[near] + _random_sym(rng, int(near.sum()), dim, scale)
    gaps, skipped = monotonicity_gaps(stress, c, B1, B2)
    min_gap = float(gaps.min()) if gaps.size else float("nan")

    # S.B >= C2 (|B|^r + |S|^r') - C3: C2 from the large-|B| regime, C3 covers the rest
    SB = np.sum(S * B, axis=(1, 2))
    energy = nB**r + nS**rc
    large = nB >= 1.0
    ratio = SB[large] / energy[large] if large.any() else SB / energy
    C2 = 0.5 * float(ratio.min())
    C3 = float(max(0.0, np.max(C2 * energy - SB)))

    g = rng.standard_normal((n, dim)) * norms()[:, None]
    Bq = _random_sym(rng, n, dim, norms())
    q = eval_flux(flux, c, g, Bq)
    gg = np.sum(g * g, axis=1)
    C4 = float(np.max(np.linalg.norm(q, axis=1) / np.linalg.norm(g, axis=1)))
    C5 = float(np.min(np.sum(q * g, axis=1) / gg))

    return CertReport(
        n_samples=n,
        seed=seed,
        C1=C1,
        monotonicity_min_gap=min_gap,
        monotonicity_pairs=int(gaps.size),
        monotonicity_skipped=skipped,
        C2=C2,
        C3=C3,
        C4=C4,
        C5=C5,
        growth_ok=bool(np.isfinite(C1)),
        monotonicity_ok=bool(gaps.size > 0 and min_gap > 0.0),
        coercivity_ok=bool(C2 > 0.0 and np.isfinite(C3)),
        flux_growth_ok=bool(np.isfinite(C4)),
        flux_coercivity_ok=bool(C5 > 0.0),
    )
