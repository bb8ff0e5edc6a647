"""QPSK constellation, shot-noise-unit conventions, and Stokes-operator algebra.

Conventions (see CONVENTIONS.md for the full statement):

* Heterodyne outcomes zeta are complex and calibrated in shot-noise units
  (SNU): a coherent state |gamma> yields E[zeta] = gamma and per-quadrature
  variance 1/2.  A noise source of nu SNU adds nu/2 per quadrature.
* The displaced photon number about beta satisfies, for ideal heterodyne,
  E[|zeta - beta|^2] - 1 = <n_beta> where n_beta = D(beta) n D(beta)^dag.
* Quadrature operators X = (a + a^dag)/sqrt(2), P = -i(a - a^dag)/sqrt(2),
  so a coherent state has <X> = sqrt(2) Re gamma and Var(X) = 1/2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

VACUUM_QUAD_VAR = 0.5  # per-quadrature heterodyne variance of vacuum, SNU


def snu_quad_var(nu: float) -> float:
    """Per-quadrature variance contributed by nu SNU of noise."""
    return 0.5 * nu


def coherent_overlap(a: complex, b: complex) -> complex:
    """Overlap <b|a> of two coherent states.

    <b|a> = exp(-|a|^2/2 - |b|^2/2 + conj(b) a); |<b|a>| = exp(-|a-b|^2/2) <= 1
    with equality iff a == b.
    """
    a = complex(a)
    b = complex(b)
    return np.exp(-0.5 * abs(a) ** 2 - 0.5 * abs(b) ** 2 + np.conjugate(b) * a)


@dataclass(frozen=True)
class QpskConstellation:
    """Four coherent amplitudes with prior probabilities.

    The canonical constellation puts symbol j at
    amplitude * exp(i (phase_offset + j pi/2)); the default offset pi/4
    centers each symbol in a quadrant of the complex plane.  Measured
    (slightly asymmetric) constellations can be wrapped via from_points.
    """

    points: tuple[complex, complex, complex, complex]
    probabilities: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        if len(self.points) != 4 or len(self.probabilities) != 4:
            raise ValueError("QPSK constellation needs exactly four symbols")
        if abs(sum(self.probabilities) - 1.0) > 1e-12 or min(self.probabilities) < 0:
            raise ValueError("probabilities must be nonnegative and sum to 1")

    @classmethod
    def from_points(cls, points, probabilities=None) -> "QpskConstellation":
        pts = tuple(complex(p) for p in points)
        if probabilities is None:
            return cls(pts)
        return cls(pts, tuple(float(p) for p in probabilities))

    @property
    def amplitudes(self) -> np.ndarray:
        return np.asarray(self.points, dtype=complex)

    @property
    def mean_magnitude(self) -> float:
        return float(np.mean(np.abs(self.amplitudes)))

    def bits(self, j: int) -> tuple[int, int]:
        """(x_bit, p_bit) of symbol j from the quadrant of its amplitude.

        x_bit = 0 for Re > 0, p_bit = 0 for Im > 0.  Points on an axis would
        be ambiguous; quadrant-centered constellations never are.
        """
        z = self.points[j]
        return (0 if z.real > 0 else 1, 0 if z.imag > 0 else 1)


def qpsk_constellation(amplitude: float, phase_offset: float = np.pi / 4) -> QpskConstellation:
    """Uniform QPSK ring: symbol j at amplitude * exp(i(phase_offset + j pi/2))."""
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    pts = tuple(amplitude * np.exp(1j * (phase_offset + j * np.pi / 2)) for j in range(4))
    return QpskConstellation(pts)


def alice_reduced_state(constellation: QpskConstellation) -> np.ndarray:
    """Sender-side reduced density matrix of the source-replacement state.

    For |Psi> = sum_j sqrt(p_j) |j>|alpha_j>, tracing the optical mode gives
    (rho_A)_{jk} = sqrt(p_j p_k) <alpha_k|alpha_j>.  Hermitian, PSD, trace 1;
    the channel never touches it.
    """
    p = np.asarray(constellation.probabilities)
    alpha = constellation.amplitudes
    rho = np.empty((4, 4), dtype=complex)
    for j in range(4):
        for k in range(4):
            rho[j, k] = np.sqrt(p[j] * p[k]) * coherent_overlap(alpha[j], alpha[k])
    return rho


@dataclass(frozen=True)
class SystemParams:
    """Physical bench parameters shared by simulation and analysis.

    transmission        channel power transmission T
    detector_efficiency receiver efficiency eta (trusted, calibrated)
    excess_noise        channel-input-referred excess noise xi_A, SNU
    electronic_noise    detector electronic noise nu_el, SNU
    bound_m             bounded detection range M of the key map
    keymap_radius       inner discard radius Delta_r of the key map
    """

    transmission: float
    detector_efficiency: float
    excess_noise: float = 0.0
    electronic_noise: float = 0.0
    bound_m: float = 5.0
    keymap_radius: float = 0.0

    def __post_init__(self):
        if not 0 < self.transmission <= 1:
            raise ValueError("transmission must be in (0, 1]")
        if not 0 < self.detector_efficiency <= 1:
            raise ValueError("detector efficiency must be in (0, 1]")
        for name in ("excess_noise", "electronic_noise", "keymap_radius"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.bound_m <= self.keymap_radius:
            raise ValueError("bound_m must exceed keymap_radius")

    @property
    def quad_var(self) -> float:
        """Per-quadrature variance of a raw signal-slot heterodyne outcome."""
        t, eta = self.transmission, self.detector_efficiency
        return 0.5 * (1.0 + eta * t * self.excess_noise + self.electronic_noise)

    def beta_raw(self, alpha: complex) -> complex:
        """Mean raw outcome for sent amplitude alpha: sqrt(T eta) alpha."""
        return np.sqrt(self.transmission * self.detector_efficiency) * alpha

    def beta_out(self, alpha: complex) -> complex:
        """Channel-output amplitude for sent alpha: sqrt(T) alpha."""
        return np.sqrt(self.transmission) * alpha

    def expected_ber(self, constellation: QpskConstellation) -> float:
        """Per-quadrature bit error rate of the quadrant key map, honest model."""
        from scipy.stats import norm

        sigma = np.sqrt(self.quad_var)
        ber = []
        for j in range(4):
            b = self.beta_raw(constellation.points[j])
            ber.append(norm.cdf(-abs(b.real) / sigma))
            ber.append(norm.cdf(-abs(b.imag) / sigma))
        return float(np.mean(ber))


@dataclass(frozen=True)
class TwoModeCoherent:
    """Two-mode coherent state |alpha_lo>|alpha_sig| in the circular basis.

    The Stokes-operator linearization underlying quadrature readout assumes a
    bright local oscillator; construction warns when |alpha_lo|/|alpha_sig|
    drops below 100.
    """

    alpha_lo: complex
    alpha_sig: complex

    def __post_init__(self):
        if abs(self.alpha_lo) == 0:
            raise ValueError("local oscillator must be nonempty")
        if abs(self.alpha_sig) > 0 and abs(self.alpha_lo) / abs(self.alpha_sig) < 100:
            warnings.warn(
                "bright-LO approximation degrades below |alpha_lo|/|alpha_sig| = 100",
                stacklevel=2,
            )


@dataclass(frozen=True)
class StokesMoments:
    """First and second moments of S_0..S_3 for a two-mode coherent state."""

    mean: tuple[float, float, float, float]
    var: tuple[float, float, float, float]


def stokes_moments(state: TwoModeCoherent) -> StokesMoments:
    """Exact coherent-state moments of the Stokes operators.

    S_0 = nL + nR, S_1 = aL^dag aR + aR^dag aL, S_2 = i(aR^dag aL - aL^dag aR),
    S_3 = nL - nR.  For coherent inputs every Var(S_i) equals <S_0>, so the
    uncertainty product Var(S_1) Var(S_2) >= |<S_3>|^2 saturates only in the
    bright-LO limit (relative gap 4|aR/aL|^2).
    """
    al, ar = complex(state.alpha_lo), complex(state.alpha_sig)
    nl, nr = abs(al) ** 2, abs(ar) ** 2
    cross = np.conjugate(al) * ar
    mean = (nl + nr, 2 * cross.real, 2 * cross.imag, nl - nr)
    var = (nl + nr,) * 4
    return StokesMoments(mean=mean, var=var)


def quadrature_from_stokes(s1: float, s2: float, lo_amplitude: float):
    """Map measured (S_1, S_2) to a complex quadrature pair.

    zeta = (s1 + i s2) / (sqrt(2) |alpha_lo|) per the bright-LO scaling
    S_1 ~ sqrt(2)|alpha_lo| X, S_2 ~ sqrt(2)|alpha_lo| P.  For a full-beam
    ideal Stokes readout of TwoModeCoherent(aL, aR) the mean recovered value
    is sqrt(2) * exp(-i arg aL) * aR.
    """
    if lo_amplitude <= 0:
        raise ValueError("lo_amplitude must be positive")
    return (np.asarray(s1) + 1j * np.asarray(s2)) / (np.sqrt(2) * lo_amplitude)
