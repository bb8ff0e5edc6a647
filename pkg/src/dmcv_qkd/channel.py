"""Gaussian channel and trusted-detector simulator.

Stands in for the optical path from Alice's modulator output to Bob's
matched-filtered, shot-noise-normalised quadrature samples.  One heterodyne
outcome per slot:

    zeta = sqrt(T eta) alpha + n,   n circular Gaussian,
    per-quadrature variance sigma^2 = (1 + eta T xi_A + nu_el) / 2

with T the channel transmittance, eta the receiver efficiency, xi_A the
channel-input excess noise and nu_el the electronic noise, all in shot-noise
units.  Vacuum monitor slots carry (1 + nu_el)/2 per quadrature, dark
(LO blocked) calibration slots nu_el/2.

Noise calibration modes
-----------------------
"iid"      every sample drawn independently.
"matched"  after drawing, the noise residuals of each estimation cell
           (symbol x quadrature x disclosed/retained, and the monitor and
           dark pools) are renormalised to zero mean and exact model
           variance.  Second-moment estimates on the disclosed cells then
           sit at their expectation values instead of fluctuating with the
           finite test-set size, which is how a desk-scale run can
           reproduce bench-scale parameter estimates.  Higher moments,
           error rates and per-sample values remain random.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constellation import QpskConstellation
from .pulse import ROLE_SIGNAL, ROLE_VACUUM, FrameLayout
from .records import FLAG_DISCLOSED, SYMBOL_NONE, make_records


@dataclass(frozen=True)
class ChannelModel:
    """Loss plus input-referenced excess noise; optional per-frame fading."""

    T: float
    xi_A: float = 0.0
    per_frame_T: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 < self.T <= 1:
            raise ValueError("transmittance must be in (0, 1]")
        if self.xi_A < 0:
            raise ValueError("excess noise must be nonnegative")

    def frame_T(self, n_frames: int) -> np.ndarray:
        if self.per_frame_T is None:
            return np.full(n_frames, self.T)
        t = np.asarray(self.per_frame_T, dtype=np.float64)
        if t.size != n_frames:
            raise ValueError("per_frame_T length does not match frame count")
        return t


@dataclass(frozen=True)
class DetectorModel:
    """Trusted heterodyne receiver: efficiency, electronic noise, range."""

    eta: float
    nu_el: float = 0.0
    bound_m: float = 5.0

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if self.nu_el < 0:
            raise ValueError("electronic noise must be nonnegative")
        if self.bound_m <= 0:
            raise ValueError("detection range must be positive")


@dataclass(frozen=True)
class Intrusion:
    """Channel tampering knobs for acceptance-test rejection experiments.

    extra_noise adds per-quadrature variance extra_noise/2 on signal slots;
    extra_loss scales the signal amplitude by sqrt(1 - extra_loss);
    displacement shifts every signal slot by a fixed complex offset.
    """

    extra_loss: float = 0.0
    extra_noise: float = 0.0
    displacement: complex = 0.0


def quad_noise_var(ch: ChannelModel, det: DetectorModel) -> float:
    """Per-quadrature variance of the raw-plane heterodyne noise."""
    return 0.5 * (1.0 + det.eta * ch.T * ch.xi_A + det.nu_el)


def heterodyne_sample(alpha, ch: ChannelModel, det: DetectorModel,
                      rng: np.random.Generator, size=None) -> np.ndarray:
    """Raw-plane heterodyne outcomes for input amplitude(s) alpha."""
    alpha = np.asarray(alpha, dtype=np.complex128)
    shape = alpha.shape if size is None else (size,)
    sd = np.sqrt(quad_noise_var(ch, det))
    noise = rng.normal(0.0, sd, shape) + 1j * rng.normal(0.0, sd, shape)
    return np.sqrt(ch.T * det.eta) * alpha + noise


def vacuum_sample(det: DetectorModel, rng: np.random.Generator,
                  size) -> np.ndarray:
    """LO on, no signal: shot noise plus electronic noise."""
    sd = np.sqrt(0.5 * (1.0 + det.nu_el))
    return rng.normal(0.0, sd, size) + 1j * rng.normal(0.0, sd, size)


def dark_sample(det: DetectorModel, rng: np.random.Generator,
                size) -> np.ndarray:
    """LO blocked: electronic noise alone."""
    sd = np.sqrt(0.5 * det.nu_el)
    return rng.normal(0.0, sd, size) + 1j * rng.normal(0.0, sd, size)


@dataclass
class ExchangeResult:
    """Everything one simulated exchange produces.

    records holds the joint view (Alice's symbol and Bob's zeta per slot);
    per-party projections are taken downstream.  dark is the separate
    detector-calibration acquisition.  monitor_power is the tap detector
    reading per frame, used for transmission estimation.
    """

    records: np.ndarray
    dark: np.ndarray
    symbols: np.ndarray
    disclosed: np.ndarray
    monitor_power: np.ndarray
    reference_power: float
    constellation: QpskConstellation
    channel: ChannelModel
    detector: DetectorModel
    seed: int
    n_signal: int
    k_test: int

    @property
    def signal_zeta(self) -> np.ndarray:
        mask = self.records["role"] == ROLE_SIGNAL
        rec = self.records[mask]
        return rec["re"] + 1j * rec["im"]

    @property
    def vacuum_zeta(self) -> np.ndarray:
        mask = self.records["role"] == ROLE_VACUUM
        rec = self.records[mask]
        return rec["re"] + 1j * rec["im"]


def _balanced_symbols(n: int, rng: np.random.Generator) -> np.ndarray:
    """Exactly n/4 of each QPSK symbol, in a random order."""
    if n % 4:
        raise ValueError("signal count must be a multiple of 4")
    base = np.repeat(np.arange(4, dtype=np.uint8), n // 4)
    return rng.permutation(base)


def _exact_test_split(symbols: np.ndarray, k_test: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Disclosed mask with exactly k_test/4 rounds per symbol."""
    if k_test % 4:
        raise ValueError("test count must be a multiple of 4")
    per = k_test // 4
    mask = np.zeros(symbols.size, dtype=bool)
    for j in range(4):
        idx = np.flatnonzero(symbols == j)
        if idx.size < per:
            raise ValueError("not enough rounds of each symbol for the split")
        take = rng.choice(idx, size=per, replace=False)
        mask[take] = True
    return mask


def _match_cell(values: np.ndarray, target_ms: float) -> np.ndarray:
    """Shift to zero mean, rescale to exact mean square target_ms."""
    out = values - np.mean(values)
    ms = np.mean(out ** 2)
    if ms == 0:
        raise ValueError("degenerate noise cell cannot be matched")
    return out * np.sqrt(target_ms / ms)


def _match_complex(noise: np.ndarray, quad_var: float,
                   groups=None) -> np.ndarray:
    """Moment-match circular noise per group, each quadrature separately."""
    out = noise.astype(np.complex128, copy=True)
    if groups is None:
        groups = [np.arange(noise.size)]
    for idx in groups:
        if idx.size < 2:
            continue
        out[idx] = (_match_cell(noise.real[idx], quad_var)
                    + 1j * _match_cell(noise.imag[idx], quad_var))
    return out


def run_exchange(constellation: QpskConstellation, ch: ChannelModel,
                 det: DetectorModel, n_signal: int, test_ratio: float = 0.25,
                 seed: int = 0, noise_calibration: str = "matched",
                 layout: FrameLayout | None = None,
                 intrusion: Intrusion | None = None,
                 n_dark: int = 100_000,
                 monitor_noise: float = 2e-4,
                 reference_power: float = 1.0) -> ExchangeResult:
    """Simulate one protocol exchange at the record level.

    Produces n_signal signal slots (exactly balanced over the four symbols)
    and the per-frame vacuum monitor slots, plus a separate dark
    acquisition.  The disclosed test subset has exactly test_ratio *
    n_signal rounds, split equally over the symbols.  Deterministic for a
    fixed seed.
    """
    if noise_calibration not in ("matched", "iid"):
        raise ValueError("unknown noise calibration mode")
    layout = layout or FrameLayout()
    rng = np.random.default_rng([seed, 0xD5C])

    symbols = _balanced_symbols(n_signal, rng)
    k_test = int(round(test_ratio * n_signal))
    k_test -= k_test % 4
    disclosed = _exact_test_split(symbols, k_test, rng)

    n_frames = -(-n_signal // layout.n_signal)
    frame_T = ch.frame_T(n_frames)
    frame_of = np.arange(n_signal) // layout.n_signal

    alphas = constellation.amplitudes[symbols]
    gain = np.sqrt(frame_T[frame_of] * det.eta)
    mean = gain * alphas
    sigma2 = quad_noise_var(ch, det)
    if intrusion is not None:
        mean = np.sqrt(1.0 - intrusion.extra_loss) * mean \
            + intrusion.displacement
        sigma2 = sigma2 + intrusion.extra_noise / 2.0
    sd = np.sqrt(sigma2)
    noise = rng.normal(0.0, sd, n_signal) + 1j * rng.normal(0.0, sd, n_signal)

    n_vac = n_frames * layout.n_vacuum
    vac = vacuum_sample(det, rng, n_vac)
    dark = dark_sample(det, rng, n_dark)

    if noise_calibration == "matched":
        groups = []
        for j in range(4):
            for test in (False, True):
                groups.append(np.flatnonzero((symbols == j)
                                             & (disclosed == test)))
        noise = _match_complex(noise, sigma2, groups)
        vac = _match_complex(vac, 0.5 * (1.0 + det.nu_el))
        if det.nu_el > 0:
            dark = _match_complex(dark, 0.5 * det.nu_el)

    zeta_sig = mean + noise

    # global slot indices mirror the frame layout: signal slots sit at
    # positions 500..1499 of each frame, vacuum at 1500..2499
    sig_slot = layout.signal_slot_indices()
    vac_slot = layout.vacuum_slot_indices()
    sig_in_frame = np.arange(n_signal) % layout.n_signal
    sig_index = frame_of * layout.slots_per_frame + sig_slot[sig_in_frame]
    vac_frame = np.arange(n_vac) // layout.n_vacuum
    vac_index = (vac_frame * layout.slots_per_frame
                 + vac_slot[np.arange(n_vac) % layout.n_vacuum])

    rec_sig = make_records(sig_index, frame_of, ROLE_SIGNAL, symbols,
                           zeta_sig,
                           np.where(disclosed, FLAG_DISCLOSED, 0))
    rec_vac = make_records(vac_index, vac_frame, ROLE_VACUUM,
                           SYMBOL_NONE, vac, 0)
    records = np.concatenate([rec_sig, rec_vac])
    records = records[np.argsort(records["index"], kind="stable")]

    dark_rec = make_records(np.arange(n_dark), np.arange(n_dark) // layout.n_vacuum,
                            ROLE_VACUUM, SYMBOL_NONE, dark, 0)

    monitor = reference_power * frame_T \
        * (1.0 + rng.normal(0.0, monitor_noise, n_frames))

    return ExchangeResult(
        records=records, dark=dark_rec, symbols=symbols, disclosed=disclosed,
        monitor_power=monitor, reference_power=reference_power,
        constellation=constellation, channel=ch, detector=det, seed=seed,
        n_signal=n_signal, k_test=k_test)


def estimate_transmission(monitor_power_per_frame, reference_power) -> np.ndarray:
    """Per-frame transmittance from the tap detector: T_f = monitor / ref."""
    if reference_power <= 0:
        raise ValueError("reference power must be positive")
    return np.asarray(monitor_power_per_frame, dtype=np.float64) / reference_power
