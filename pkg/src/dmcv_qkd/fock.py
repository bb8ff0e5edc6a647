"""Truncated Fock-space operators.

All builders return dense numpy arrays on the space span{|0>..|dim-1>}.
Projected observables that are polynomials in a, a^dag are computed exactly
by banded algebra in a slightly larger workspace, so no quadrature error
enters the constraint operators.
"""

from __future__ import annotations

import numpy as np
from scipy.special import eval_genlaguerre, gammaln


def ladder(dim: int) -> np.ndarray:
    """Annihilation operator a, a|n> = sqrt(n)|n-1>."""
    a = np.zeros((dim, dim))
    n = np.arange(1, dim)
    a[n - 1, n] = np.sqrt(n)
    return a


def number(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float))


def coherent_vector(alpha: complex, dim: int) -> np.ndarray:
    """Fock coefficients of |alpha> truncated at dim (not renormalized)."""
    alpha = complex(alpha)
    k = np.arange(dim)
    if alpha == 0:
        vec = np.zeros(dim, dtype=complex)
        vec[0] = 1.0
        return vec
    # log-domain magnitude avoids overflow in alpha^k / sqrt(k!)
    logmag = k * np.log(abs(alpha)) - 0.5 * gammaln(k + 1.0) - 0.5 * abs(alpha) ** 2
    phase = np.exp(1j * k * np.angle(alpha))
    return np.exp(logmag) * phase


def thermal_diagonal(nbar: float, dim: int) -> np.ndarray:
    """Occupation probabilities of a thermal state with mean photon nbar."""
    if nbar < 0:
        raise ValueError("nbar must be nonnegative")
    k = np.arange(dim)
    if nbar == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    r = nbar / (1.0 + nbar)
    return r**k / (1.0 + nbar)


def displacement(alpha: complex, dim: int) -> np.ndarray:
    """Matrix of D(alpha) = exp(alpha a^dag - conj(alpha) a) on the cutoff space.

    Closed form per element: for m >= n,
    D_mn = sqrt(n!/m!) alpha^(m-n) e^(-|alpha|^2/2) L_n^(m-n)(|alpha|^2),
    and D_mn(alpha) = conj(D_nm(-alpha)) below the diagonal.  Rows near the
    cutoff lose norm for large |alpha|; callers pick dim with headroom.
    """
    alpha = complex(alpha)
    if alpha == 0:
        return np.eye(dim, dtype=complex)
    m, n = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    d = hi - lo
    x = abs(alpha) ** 2
    logmag = 0.5 * (gammaln(lo + 1.0) - gammaln(hi + 1.0)) + d * np.log(abs(alpha)) - 0.5 * x
    lag = eval_genlaguerre(lo, d, x)
    upper = m >= n  # alpha^(m-n) phase above/on the diagonal, conj(-alpha) pattern below
    phase = np.where(
        upper,
        np.exp(1j * d * np.angle(alpha)),
        np.exp(-1j * d * np.angle(-alpha)),
    )
    return np.exp(logmag) * lag * phase


def displaced_number(beta: complex, dim: int) -> np.ndarray:
    """Exact cutoff projection of n_beta = D(beta) n D(beta)^dag.

    Operator identity n_beta = n - beta a^dag - conj(beta) a + |beta|^2, all
    terms banded, so the projected matrix is exact.
    """
    beta = complex(beta)
    a = ladder(dim).astype(complex)
    return (
        number(dim)
        - beta * a.conj().T
        - np.conjugate(beta) * a
        + abs(beta) ** 2 * np.eye(dim)
    )


def displaced_number_sq(beta: complex, dim: int) -> np.ndarray:
    """Exact cutoff projection of n_beta^2.

    n_beta is tridiagonal, so elements of its square up to index dim-1 only
    reach one level above; squaring in a dim+1 workspace and truncating is
    exact.
    """
    w = displaced_number(beta, dim + 1)
    return (w @ w)[:dim, :dim]


def project_coherent_outer(a: complex, b: complex, dim: int) -> np.ndarray:
    """Cutoff projection of |a><b| for coherent amplitudes a, b."""
    va = coherent_vector(a, dim)
    vb = coherent_vector(b, dim)
    return np.outer(va, vb.conj())
