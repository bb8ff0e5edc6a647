"""Displaced-moment estimators and per-run statistics.

The security analysis consumes, for each sent symbol j, estimates of the
displaced photon number <n_beta_j> and its square <n^2_beta_j> at the
channel output, obtained from the disclosed test rounds.  For ideal
heterodyne data (efficiency 1, no electronic noise) the moments follow from
the Q-function identities

    <n_beta>   = E|zeta - beta|^2 - 1
    <n^2_beta> = E|zeta - beta|^4 - 3 E|zeta - beta|^2 + 1.

A trusted detector reads the channel output through efficiency eta and
electronic noise nu_el.  The deconvolution back to the output plane is an
affine map on the raw residual moments,

    E2 = (e2 - c) / g,    E4 = (e4 - 4 c e2 + 2 c^2) / g^2,

the moment algebra of a gain-g circular-Gaussian noise channel with noise
energy c.  The pair (g, c) is a convention choice; `trusted_snu`, the
default, uses g = 2 eta, c = 1 + nu_el - 2 eta, which reproduces the
shot-noise-unit bookkeeping of the channel model (excess noise xi_A at the
channel input appears as eta T xi_A raw variance and as <n_beta> = T xi_A/2
at the output, so xi_A = 2 <n_beta> / T).  `trusted_physical` (g = eta,
c = 1 - eta + nu_el) is the textbook beamsplitter-plus-noise detector map,
kept as the alternative convention.

Aggregation uses compensated summation so shard order never changes the
result.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .constellation import QpskConstellation
from .records import FLAG_DISCLOSED, disclosed_mask, signal_records


@dataclass(frozen=True)
class DeconvolutionModel:
    """Affine residual-moment map from the raw plane to the output plane."""

    gain: float
    offset: float
    label: str = "custom"

    @classmethod
    def ideal(cls):
        return cls(1.0, 0.0, "ideal")

    @classmethod
    def trusted_snu(cls, eta: float, nu_el: float):
        return cls(2.0 * eta, 1.0 + nu_el - 2.0 * eta, "trusted-snu")

    @classmethod
    def trusted_physical(cls, eta: float, nu_el: float):
        return cls(eta, 1.0 - eta + nu_el, "trusted-physical")

    def output_residual_moments(self, e2: float, e4: float):
        g, c = self.gain, self.offset
        E2 = (e2 - c) / g
        E4 = (e4 - 4.0 * c * e2 + 2.0 * c * c) / (g * g)
        return E2, E4


def _fsum_mean(values: np.ndarray) -> float:
    return math.fsum(values.tolist()) / values.size


def displaced_moments(zeta: np.ndarray, beta: complex,
                      model: DeconvolutionModel | None = None):
    """(<n_beta>, <n^2_beta>, m) from raw heterodyne outcomes.

    beta is the raw-plane displacement of the symbol class.  The default
    model is ideal (no deconvolution).  Degenerate input (all residuals
    zero) yields <n_beta> = -1 and a warning: no physical state produces
    zero-variance heterodyne data.
    """
    model = model or DeconvolutionModel.ideal()
    zeta = np.asarray(zeta, dtype=np.complex128)
    if zeta.size == 0:
        raise ValueError("empty symbol class")
    r2 = np.abs(zeta - beta) ** 2
    e2 = _fsum_mean(r2)
    e4 = _fsum_mean(r2 ** 2)
    E2, E4 = model.output_residual_moments(e2, e4)
    n1 = E2 - 1.0
    n2 = E4 - 3.0 * E2 + 1.0
    if n1 <= -0.999999:
        warnings.warn("displaced second moment at or below the vacuum floor; "
                      "input data is unphysical for a heterodyne record",
                      RuntimeWarning)
    return n1, n2, zeta.size


@dataclass
class ObservableStats:
    """Per-symbol test-round aggregates feeding the acceptance test."""

    mean_n_beta: np.ndarray      # (4,) <n_beta_j>
    mean_n2_beta: np.ndarray     # (4,) <n^2_beta_j>
    m_j: np.ndarray              # (4,) test-round counts
    beta_j: np.ndarray           # (4,) raw-plane displacement sqrt(T eta) alpha_j
    ber_x: float
    ber_p: float
    i_t: float = float("nan")

    def __post_init__(self):
        self.mean_n_beta = np.asarray(self.mean_n_beta, dtype=np.float64)
        self.mean_n2_beta = np.asarray(self.mean_n2_beta, dtype=np.float64)
        self.m_j = np.asarray(self.m_j, dtype=np.int64)
        self.beta_j = np.asarray(self.beta_j, dtype=np.complex128)
        if np.any(self.m_j <= 0):
            raise ValueError("every symbol class needs test rounds")

    def to_json(self) -> dict:
        return {
            "mean_n_beta": self.mean_n_beta.tolist(),
            "mean_n2_beta": self.mean_n2_beta.tolist(),
            "m_j": self.m_j.tolist(),
            "beta_j_re": self.beta_j.real.tolist(),
            "beta_j_im": self.beta_j.imag.tolist(),
            "ber_x": self.ber_x,
            "ber_p": self.ber_p,
            "i_t": self.i_t,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ObservableStats":
        beta = (np.asarray(d["beta_j_re"], dtype=np.float64)
                + 1j * np.asarray(d["beta_j_im"], dtype=np.float64))
        return cls(mean_n_beta=d["mean_n_beta"],
                   mean_n2_beta=d["mean_n2_beta"],
                   m_j=d["m_j"], beta_j=beta,
                   ber_x=d["ber_x"], ber_p=d["ber_p"], i_t=d["i_t"])


@dataclass
class RunStatistics:
    """Supplementary-table style per-run summary."""

    n_total: int
    n_key: int
    k_test: int
    T_hat: float
    eta: float
    nu_el: float
    xi_hat: float
    stats: ObservableStats

    def to_json(self) -> dict:
        return {
            "n_total": self.n_total, "n_key": self.n_key,
            "k_test": self.k_test, "T_hat": self.T_hat, "eta": self.eta,
            "nu_el": self.nu_el, "xi_hat": self.xi_hat,
            "stats": self.stats.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "RunStatistics":
        return cls(n_total=d["n_total"], n_key=d["n_key"],
                   k_test=d["k_test"], T_hat=d["T_hat"], eta=d["eta"],
                   nu_el=d["nu_el"], xi_hat=d["xi_hat"],
                   stats=ObservableStats.from_json(d["stats"]))


def bit_error_rates(zeta: np.ndarray, symbols: np.ndarray,
                    constellation: QpskConstellation,
                    keymap_radius: float = 0.0,
                    bound_m: float = float("inf")):
    """Per-quadrature sign error rates after the key map.

    Outcomes with |zeta| below the discard radius or above the detection
    bound are dropped before counting, mirroring the key map.
    """
    zeta = np.asarray(zeta)
    mag = np.abs(zeta)
    keep = (mag >= keymap_radius) & (mag <= bound_m)
    if not np.any(keep):
        raise ValueError("key map discarded every outcome")
    zeta = zeta[keep]
    symbols = np.asarray(symbols)[keep]
    bits = np.array([constellation.bits(j) for j in range(4)], dtype=np.uint8)
    ax, ap = bits[symbols, 0], bits[symbols, 1]
    bx = (zeta.real <= 0).astype(np.uint8)
    bp = (zeta.imag <= 0).astype(np.uint8)
    return float(np.mean(ax != bx)), float(np.mean(ap != bp))


def analyze_records(records: np.ndarray, constellation: QpskConstellation,
                    eta: float, nu_el: float,
                    model: DeconvolutionModel | None = None,
                    keymap_radius: float = 0.0,
                    beta_test: float = 5.0) -> RunStatistics:
    """Full test-round analysis of one record stream.

    Uses the disclosed signal records only.  The displacement beta_j of each
    symbol class is estimated as the class sample mean; the transmittance
    follows from |beta_j|^2 = T eta |alpha_j|^2 and the excess noise from
    xi_A = 2 <n_beta> / T averaged over classes with test-count weights.
    """
    model = model or DeconvolutionModel.trusted_snu(eta, nu_el)
    sig = signal_records(records)
    test = sig[disclosed_mask(sig)]
    if test.size == 0:
        raise ValueError("no disclosed test rounds in the record stream")
    zeta = test["re"] + 1j * test["im"]
    symbols = test["symbol"]

    alphas = constellation.amplitudes
    mean_n = np.empty(4)
    mean_n2 = np.empty(4)
    m_j = np.empty(4, dtype=np.int64)
    beta_j = np.empty(4, dtype=np.complex128)
    for j in range(4):
        sel = zeta[symbols == j]
        if sel.size == 0:
            raise ValueError(f"symbol class {j} has no test rounds")
        beta = complex(_fsum_mean(sel.real) + 1j * _fsum_mean(sel.imag))
        n1, n2, m = displaced_moments(sel, beta, model)
        beta_j[j] = beta
        mean_n[j], mean_n2[j], m_j[j] = n1, n2, m

    T_hat = float(np.mean(np.abs(beta_j) ** 2 / np.abs(alphas) ** 2) / eta)
    xi_hat = float(2.0 * np.average(mean_n, weights=m_j) / T_hat)

    ber_x, ber_p = bit_error_rates(zeta, symbols, constellation,
                                   keymap_radius=keymap_radius)
    i_t = float(np.mean(np.abs(zeta) >= beta_test))

    stats = ObservableStats(mean_n_beta=mean_n, mean_n2_beta=mean_n2,
                            m_j=m_j, beta_j=beta_j,
                            ber_x=ber_x, ber_p=ber_p, i_t=i_t)
    n_total = int(sig.size)
    return RunStatistics(n_total=n_total, n_key=n_total - test.size,
                         k_test=int(test.size), T_hat=T_hat, eta=eta,
                         nu_el=nu_el, xi_hat=xi_hat, stats=stats)
