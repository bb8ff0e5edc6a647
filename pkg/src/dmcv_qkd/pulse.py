"""Temporal mode shaping and burst frame layout.

The optical symbol pulse is a first-order Hermite-Gauss profile

    gamma(t) = sqrt(e) * (t / sigma) * exp(-t^2 / (2 sigma^2))

normalised so gamma(+-sigma) = +-1.  Its key property over a Gaussian of the
same width is odd symmetry: the DC component vanishes, so almost no pulse
energy sits below the receiver's AC-coupling corner (~130 kHz) and slow
baseline drifts are rejected by the matched filter.

A burst is organised in frames of 2500 slots at the 25 MHz slot rate:
20 reference slots (fixed +-1 pattern used for synchronisation), 480 guard
slots (empty, lets the modulator settle), 1000 signal slots and 1000 vacuum
monitor slots.  Slot roles are positional; `slot_roles` gives the per-slot
labels for one frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Slot roles, also used as the record role byte.
ROLE_REFERENCE = 0
ROLE_GUARD = 1
ROLE_SIGNAL = 2
ROLE_VACUUM = 3

# Fixed synchronisation pattern on the 20 reference slots of each frame.
# +-1 chips applied to both quadratures.  Peak sidelobe of the aperiodic
# autocorrelation is 2 (optimal for length 20), main lobe 20.
REFERENCE_PATTERN = np.array(
    [1, 1, -1, 1, -1, 1, -1, 1, 1, -1, -1, 1, 1, 1, 1, 1, 1, 1, -1, -1],
    dtype=np.float64,
)


def hermite_time_profile(t, sigma):
    """gamma(t) evaluated at time(s) t (seconds)."""
    t = np.asarray(t, dtype=np.float64)
    return np.sqrt(np.e) * (t / sigma) * np.exp(-(t ** 2) / (2.0 * sigma ** 2))


def gaussian_time_profile(t, sigma):
    """Unit-peak Gaussian, the comparison shape for low-frequency leakage."""
    t = np.asarray(t, dtype=np.float64)
    return np.exp(-(t ** 2) / (2.0 * sigma ** 2))


@dataclass(frozen=True)
class PulseShape:
    """A sampled slot waveform.

    samples are taken at the midpoints of a symmetric grid spanning the slot
    window, so an odd profile sums to zero exactly (pairwise cancellation).
    """

    samples: np.ndarray
    sample_rate: float
    sigma: float

    @property
    def n_samples(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def energy(self) -> float:
        """Continuous-time energy of the sampled waveform, sum |x|^2 dt."""
        return float(np.sum(self.samples ** 2) / self.sample_rate)


def _sample_times(window: float, sample_rate: float) -> np.ndarray:
    n = int(round(window * sample_rate))
    if n < 2:
        raise ValueError("window too short for the sample rate")
    k = np.arange(n, dtype=np.float64)
    return (k - (n - 1) / 2.0) / sample_rate


def hermite_pulse(sigma: float = 5e-9, window: float = 40e-9,
                  sample_rate: float = 2e9) -> PulseShape:
    """Sampled Hermite-Gauss slot pulse.

    Defaults: sigma 5 ns, 40 ns slot at 2 GS/s (the DAC grid).  Pass the ADC
    rate to get the receiver-side template on its own grid.
    """
    t = _sample_times(window, sample_rate)
    return PulseShape(hermite_time_profile(t, sigma), sample_rate, sigma)


def gaussian_pulse(sigma: float = 5e-9, window: float = 40e-9,
                   sample_rate: float = 2e9) -> PulseShape:
    t = _sample_times(window, sample_rate)
    return PulseShape(gaussian_time_profile(t, sigma), sample_rate, sigma)


def lowfreq_energy_fraction(pulse: PulseShape, cutoff: float = 130e3) -> float:
    """Fraction of pulse energy below `cutoff` Hz.

    Evaluates the DTFT of the sampled pulse on a dense grid over [0, cutoff]
    and Simpson-integrates |X(f)|^2; the total energy comes from Parseval,
    integral over the full Nyquist band of |X|^2 df = dt * sum |x|^2.
    The band of interest is ~1e4 narrower than 1/window, far below the
    resolution of any FFT of the pulse itself, hence the direct evaluation.
    """
    from scipy.integrate import simpson

    dt = 1.0 / pulse.sample_rate
    t = _sample_times(pulse.duration, pulse.sample_rate)
    # odd number of points for Simpson
    f = np.linspace(0.0, cutoff, 401)
    phases = np.exp(-2j * np.pi * np.outer(f, t))
    spectrum = dt * (phases @ pulse.samples)
    low = 2.0 * simpson(np.abs(spectrum) ** 2, x=f)  # +-f symmetric
    total = dt * float(np.sum(pulse.samples ** 2))
    return float(low / total)


@dataclass(frozen=True)
class FrameLayout:
    """Slot bookkeeping for one burst frame.

    Slot order within a frame: reference, guard, signal, vacuum.
    """

    n_reference: int = 20
    n_guard: int = 480
    n_signal: int = 1000
    n_vacuum: int = 1000
    slot_rate: float = 25e6
    dac_rate: float = 2e9
    adc_rate: float = 1.25e9

    @property
    def slots_per_frame(self) -> int:
        return self.n_reference + self.n_guard + self.n_signal + self.n_vacuum

    @property
    def slot_duration(self) -> float:
        return 1.0 / self.slot_rate

    @property
    def frame_duration(self) -> float:
        return self.slots_per_frame * self.slot_duration

    def slot_roles(self) -> np.ndarray:
        """Role byte for every slot of one frame, in slot order."""
        roles = np.empty(self.slots_per_frame, dtype=np.uint8)
        a = self.n_reference
        b = a + self.n_guard
        c = b + self.n_signal
        roles[:a] = ROLE_REFERENCE
        roles[a:b] = ROLE_GUARD
        roles[b:c] = ROLE_SIGNAL
        roles[c:] = ROLE_VACUUM
        return roles

    def signal_slot_indices(self) -> np.ndarray:
        a = self.n_reference + self.n_guard
        return np.arange(a, a + self.n_signal)

    def vacuum_slot_indices(self) -> np.ndarray:
        a = self.n_reference + self.n_guard + self.n_signal
        return np.arange(a, a + self.n_vacuum)


def slot_amplitudes(layout: FrameLayout, signal_amps: np.ndarray,
                    reference_amp: float) -> np.ndarray:
    """Complex amplitude of every slot in one frame.

    signal_amps: the frame's 1000 signal-slot amplitudes.  Reference slots
    carry the fixed pattern scaled to `reference_amp` on both quadratures;
    guard and vacuum slots are dark.
    """
    signal_amps = np.asarray(signal_amps, dtype=np.complex128)
    if signal_amps.size != layout.n_signal:
        raise ValueError("expected one amplitude per signal slot")
    if layout.n_reference != REFERENCE_PATTERN.size:
        raise ValueError("layout reference count does not match the pattern")
    amps = np.zeros(layout.slots_per_frame, dtype=np.complex128)
    amps[:layout.n_reference] = REFERENCE_PATTERN * reference_amp * (1 + 1j)
    sig = layout.signal_slot_indices()
    amps[sig] = signal_amps
    return amps


def build_burst(frame_amps: np.ndarray, layout: FrameLayout,
                pulse: PulseShape, reference_amp: float = 1.0) -> np.ndarray:
    """Synthesise the complex baseband trace for a burst.

    frame_amps: (n_frames, n_signal) complex signal-slot amplitudes.
    Returns a 1-D complex trace, frames concatenated, each slot carrying
    amplitude * pulse on the pulse's sample grid.
    """
    frame_amps = np.atleast_2d(np.asarray(frame_amps, dtype=np.complex128))
    n_frames = frame_amps.shape[0]
    spf = layout.slots_per_frame
    nsamp = pulse.n_samples
    trace = np.empty(n_frames * spf * nsamp, dtype=np.complex128)
    slots = trace.reshape(n_frames, spf, nsamp)
    for i in range(n_frames):
        amps = slot_amplitudes(layout, frame_amps[i], reference_amp)
        slots[i] = amps[:, None] * pulse.samples[None, :]
    return trace
