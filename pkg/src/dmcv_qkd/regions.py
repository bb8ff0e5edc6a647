"""Key-map region operators on the truncated Fock space.

The heterodyne outcome plane is split into four quadrants intersected with
the annulus delta_r <= |zeta| <= M; outcomes outside map to the discard
symbol.  Each region operator is the phase-space integral of the POVM
density over its region, projected onto span{|0>..|n_c>}:

    R_z = (1/pi) int_{A_z} |zeta><zeta| d^2 zeta            (ideal detector)

and in trusted mode the coherent projector is replaced by the detector's
Gaussian-smeared POVM density, i.e. a displaced thermal kernel carrying the
(eta, nu_el) detection noise.  Quadrant angular integrals are analytic; the
radial integral runs on a doubling Gauss-Legendre grid until the full
operator moves by less than `tol`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .fock import displacement, thermal_diagonal


class QuadratureConvergenceError(RuntimeError):
    """Radial quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class RegionOperators:
    """Quadrant POVM pieces R_0..R_3 plus the discard remainder."""

    R: np.ndarray        # (4, nb, nb)
    R_perp: np.ndarray   # (nb, nb)
    bound_m: float
    delta_r: float
    mode: str            # "ideal" | "trusted"
    eta: float
    nu_el: float

    @property
    def dim(self) -> int:
        return self.R.shape[1]

    @property
    def n_c(self) -> int:
        return self.dim - 1

    def stacked(self) -> np.ndarray:
        """All five operators, discard last: shape (5, nb, nb)."""
        return np.concatenate([self.R, self.R_perp[None]], axis=0)


def _angular_factors(dim: int) -> np.ndarray:
    """A[z, m, n] = integral over quadrant z of e^{i(m-n)theta} dtheta.

    Quadrant z covers theta in [z pi/2, (z+1) pi/2), matching the symbol
    constellation with the pi/4 phase offset (symbol j sits inside
    quadrant j).
    """
    m = np.arange(dim)
    d = m[:, None] - m[None, :]
    out = np.empty((4, dim, dim), dtype=complex)
    for z in range(4):
        th0, th1 = z * np.pi / 2.0, (z + 1) * np.pi / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            val = (np.exp(1j * d * th1) - np.exp(1j * d * th0)) / (1j * d)
        val[d == 0] = np.pi / 2.0
        out[z] = val
    return out


def _gl_nodes(lo: float, hi: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * x, half * w


def _radial_ideal(dim: int, delta_r: float, bound_m: float, nodes: int) -> np.ndarray:
    """Rad[m, n] = int rho^{m+n+1} e^{-rho^2} drho / sqrt(m! n!)."""
    rho, w = _gl_nodes(delta_r, bound_m, nodes)
    s = np.arange(2 * dim - 1)
    vals = np.exp(-rho[:, None] ** 2 + (s[None, :] + 1) * np.log(rho[:, None]))
    I_s = w @ vals
    m = np.arange(dim)
    norm = np.exp(-0.5 * (gammaln(m + 1.0)[:, None] + gammaln(m + 1.0)[None, :]))
    return I_s[m[:, None] + m[None, :]] * norm


def _radial_trusted(dim: int, delta_r: float, bound_m: float, eta: float,
                    nu_el: float, nodes: int) -> np.ndarray:
    """Radial part with the detector noise kernel.

    The POVM density at outcome zeta is (1/(pi eta)) D(zeta/sqrt(eta))
    rho_th(nbar) D^dag with nbar = (1 - eta + nu_el)/eta; only the radial
    displacement matters here because phase rotation commutes out into the
    angular factor.
    """
    nbar = (1.0 - eta + nu_el) / eta
    ratio = nbar / (1.0 + nbar) if nbar > 0 else 0.0
    k_dim = dim
    if ratio > 0:
        # thermal tail below 1e-16 keeps the kernel exact at double precision
        k_dim = max(dim, int(np.ceil(-37.0 / np.log(ratio))) + dim)
    p = thermal_diagonal(nbar, k_dim)
    rho, w = _gl_nodes(delta_r, bound_m, nodes)
    acc = np.zeros((dim, dim))
    for x, wk in zip(rho / np.sqrt(eta), w * rho / eta):
        D = displacement(x, k_dim)[:dim, :]
        acc += wk * ((D * p) @ D.T).real
    return acc


def region_operators(bound_m: float, delta_r: float, n_c: int,
                     mode: str = "ideal", eta: float = 1.0, nu_el: float = 0.0,
                     tol: float = 1e-10, max_nodes: int = 4096) -> RegionOperators:
    """Build the five key-map POVM pieces on span{|0>..|n_c>}."""
    if not bound_m > delta_r >= 0.0:
        raise ValueError("need bound_m > delta_r >= 0")
    if n_c < 1:
        raise ValueError("cutoff must be at least 1")
    if mode not in ("ideal", "trusted"):
        raise ValueError(f"unknown detector mode {mode!r}")
    if mode == "trusted" and not (0.0 < eta <= 1.0 and nu_el >= 0.0):
        raise ValueError("trusted mode needs 0 < eta <= 1 and nu_el >= 0")

    dim = n_c + 1
    nodes = 64
    prev = None
    while nodes <= max_nodes:
        if mode == "ideal":
            rad = _radial_ideal(dim, delta_r, bound_m, nodes)
        else:
            rad = _radial_trusted(dim, delta_r, bound_m, eta, nu_el, nodes)
        if prev is not None and np.max(np.abs(rad - prev)) < tol:
            break
        prev = rad
        nodes *= 2
    else:
        raise QuadratureConvergenceError(
            f"radial quadrature did not settle below {tol} with {max_nodes} nodes")

    ang = _angular_factors(dim)
    R = ang * (rad / np.pi)[None, :, :]
    R = 0.5 * (R + np.conj(np.swapaxes(R, 1, 2)))  # scrub asymmetry at 1e-17
    R_perp = np.eye(dim, dtype=complex) - R.sum(axis=0)
    return RegionOperators(R=R, R_perp=R_perp, bound_m=bound_m, delta_r=delta_r,
                           mode=mode, eta=eta, nu_el=nu_el)
