"""Spectral step-size certificates for the averaged iteration.

Two scalar gaps govern contraction of the error dynamics at step-size alpha:

- the deterministic gap, the smallest eigenvalue of
  (A_P + A_P^*) - alpha * A_P^* A_P, which controls the mean iteration matrix
  (||I - alpha A_P||^2 = 1 - alpha * rho_d); and
- the stochastic gap, the smallest eigenvalue of (A_P + A_P^*) - alpha * C_P,
  which controls the expected squared contraction of the random iteration
  matrix (E||(I - alpha A_t) x||^2 <= (1 - alpha * rho_s) ||x||^2).

Positive gaps certify stability; a closed-form witness step-size guarantees
positivity for every smaller alpha whenever A_P + A_P^* is positive definite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problems import Moments, ProblemDistribution, make_finite_support, spectral_norm

__all__ = [
    "SpectralReport",
    "rho_d",
    "rho_s",
    "witness_alpha",
    "spectral_report",
    "check_weak_admissibility_psd_class",
    "inadmissibility_witness_pb",
    "NotPositiveDefiniteError",
]


class NotPositiveDefiniteError(ValueError):
    """A_P + A_P^* has a nonpositive eigenvalue; no direct witness exists."""


def _min_eig_hermitian(H: np.ndarray) -> float:
    """Smallest eigenvalue of (H + H^*)/2; the infimum of x^* H x over unit x."""
    Hh = 0.5 * (H + H.conj().T)
    return float(np.linalg.eigvalsh(Hh)[0])


def rho_d(moments: Moments, alpha: float) -> float:
    """Deterministic spectral gap at step-size alpha."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    A = moments.A_P
    return _min_eig_hermitian(A + A.conj().T - alpha * (A.conj().T @ A))


def rho_s(moments: Moments, alpha: float) -> float:
    """Stochastic spectral gap at step-size alpha; needs the second moment C_P."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    A = moments.A_P
    return _min_eig_hermitian(A + A.conj().T - alpha * moments.C_P)


def witness_alpha(moments: Moments) -> float:
    """Certified step-size ceiling lam_min(A_P^* + A_P) / (||A_P||^2 + sigma_A^2).

    Every alpha strictly below the returned value has a positive stochastic
    gap provided C_P <= A_P^* A_P + sigma_A^2 I (which holds whenever
    sigma_A_sq genuinely bounds E||A_t - A_P||^2).  Callers should stay
    strictly below; the command-line tools apply a 0.99 safety factor.

    Raises NotPositiveDefiniteError when A_P + A_P^* is not positive definite;
    apply the similarity transform first in that case.
    """
    A = moments.A_P
    lam = _min_eig_hermitian(A + A.conj().T)
    if lam <= 0:
        raise NotPositiveDefiniteError(
            "mean matrix is not positive definite; apply transform first"
        )
    return lam / (spectral_norm(A) ** 2 + moments.sigma_A_sq)


@dataclass(frozen=True)
class SpectralReport:
    """Gap values at one step-size, with the witness when it exists.

    contraction_factor_s = 1 - alpha*rho_s bounds the expected squared norm
    contraction per step; contraction_factor_d = 1 - alpha*rho_d equals
    ||I - alpha A_P||^2.
    """

    alpha: float
    rho_d: float
    rho_s: float
    alpha_witness: float | None
    contraction_factor_s: float
    contraction_factor_d: float


def spectral_report(moments: Moments, alpha: float) -> SpectralReport:
    """Evaluate both gaps at alpha and attach the witness step-size if defined."""
    rd = rho_d(moments, alpha)
    rs = rho_s(moments, alpha)
    try:
        wit = witness_alpha(moments)
    except NotPositiveDefiniteError:
        wit = None
    return SpectralReport(
        alpha=alpha,
        rho_d=rd,
        rho_s=rs,
        alpha_witness=wit,
        contraction_factor_s=1.0 - alpha * rs,
        contraction_factor_d=1.0 - alpha * rd,
    )


def check_weak_admissibility_psd_class(bound_B: float) -> float:
    """Class-level witness 2/B for distributions supported on PSD matrices.

    For any distribution whose A_t are almost surely PSD with ||A_t|| <= B,
    C_P <= B * A_P, hence the stochastic gap at alpha is at least
    (2 - alpha*B) * lam_min(A_P + A_P^T) >= 0 for all alpha < 2/B.
    """
    if bound_B <= 0:
        raise ValueError("bound must be positive")
    return 2.0 / bound_B


def inadmissibility_witness_pb(alpha: float) -> ProblemDistribution:
    """A bounded positive-definite-mean family that defeats the step-size alpha.

    Returns the two-point distribution on {+I, -I} (d = 2, b = 0) with
    P(+I) = 1/2 + eps and eps = alpha/8.  Its mean is 2*eps*I (positive
    definite, norm <= 1) yet C_P = I, so the stochastic gap at alpha equals
    4*eps - alpha = -alpha/2 < 0: no step-size works uniformly over bounded
    positive-definite families.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    eps = alpha / 8.0
    if eps >= 0.5:
        raise ValueError("alpha too large: need alpha/8 < 1/2")
    eye = np.eye(2)
    zero = np.zeros(2)
    return make_finite_support(
        [((zero, eye), 0.5 + eps), ((zero, -eye), 0.5 - eps)],
        label=f"pm_identity(eps={eps:g})",
    )
