"""Receiver-side digital signal processing.

Takes the heterodyne baseband trace from burst acquisition to per-slot
quadrature values in shot-noise units:

    synchronize      locate the frame start via the reference-slot pattern
    matched_filter   project each slot onto the pulse template
    normalize_shot_noise
                     scale to vacuum units using the frame's vacuum monitor
                     slots and the dark (LO off) calibration record
    equalize_detectors
                     pad the quieter quadrature with Gaussian noise so both
                     see the same electronic-noise level

All functions are pure; randomness comes in only through the caller-supplied
generator in equalize_detectors.
"""

from __future__ import annotations

import numpy as np

from .pulse import REFERENCE_PATTERN, FrameLayout, PulseShape, build_burst


class SyncError(RuntimeError):
    """Raised when the reference correlation peak is too weak to trust."""


def reference_template(layout: FrameLayout, pulse: PulseShape) -> np.ndarray:
    """Real waveform of the 20 reference slots (single quadrature)."""
    nsamp = pulse.n_samples
    out = np.zeros(layout.n_reference * nsamp)
    for k, chip in enumerate(REFERENCE_PATTERN):
        out[k * nsamp:(k + 1) * nsamp] = chip * pulse.samples
    return out


def synchronize(trace: np.ndarray, layout: FrameLayout, pulse: PulseShape,
                min_peak: float = 0.5) -> int:
    """Sample offset of the first frame start within `trace`.

    Correlates the real part of the trace against the reference-slot
    template, normalised so a clean, correctly scaled burst scores 1 at the
    true offset.  Every frame opens with the same pattern, so the
    correlation peaks once per frame; after locating the strongest peak the
    search walks back in whole frame periods while the score stays above
    `min_peak`, returning the earliest consistent frame start.  Ties resolve
    to the smallest offset.  A best peak below `min_peak` raises SyncError.
    """
    tmpl = reference_template(layout, pulse)
    x = np.real(np.asarray(trace))
    if x.size < tmpl.size:
        raise SyncError("trace shorter than the reference template")
    # corr[k] = sum_i x[k+i] tmpl[i], via FFT for long traces
    n = x.size
    corr = np.correlate(x, tmpl, mode="valid") if n < 1 << 18 else _fft_corr(x, tmpl)
    corr = corr / float(np.dot(tmpl, tmpl))
    best = int(np.argmax(corr))  # argmax returns the first maximum
    if corr[best] < min_peak:
        raise SyncError(
            f"reference correlation peak {corr[best]:.3f} below {min_peak}")
    frame_samples = layout.slots_per_frame * pulse.n_samples
    while best - frame_samples >= 0 and corr[best - frame_samples] >= min_peak:
        best -= frame_samples
    return best


def _fft_corr(x: np.ndarray, tmpl: np.ndarray) -> np.ndarray:
    from scipy.signal import fftconvolve

    return fftconvolve(x, tmpl[::-1], mode="valid")


def matched_filter(trace: np.ndarray, pulse: PulseShape, n_slots: int,
                   offset: int = 0) -> np.ndarray:
    """Per-slot template projection.

    Slices `n_slots` consecutive slots starting at sample `offset` and
    returns sum(w * x) / sum(w * w) per slot, the least-squares amplitude
    estimate against the template w.  Complex traces give complex outputs.
    """
    x = np.asarray(trace)
    nsamp = pulse.n_samples
    need = offset + n_slots * nsamp
    if need > x.size:
        raise ValueError("trace too short for the requested slot count")
    block = x[offset:need].reshape(n_slots, nsamp)
    w = pulse.samples
    return block @ w / float(np.dot(w, w))


def normalize_shot_noise(signal_vals: np.ndarray, vacuum_vals: np.ndarray,
                         detector_vals: np.ndarray):
    """Rescale matched-filter outputs to shot-noise units, per frame.

    signal_vals, vacuum_vals: (n_frames, n_slots) complex arrays from the
    signal and vacuum-monitor slots.  detector_vals: dark acquisition
    (LO blocked) matched-filter outputs, either one pooled array or one row
    per frame.  With the LO on, a vacuum slot reads shot noise plus
    electronic noise; dark slots read electronic noise alone.  The per-frame
    scale

        s = 1 / sqrt(2 * (Var[vacuum] - Var[dark]))

    maps the shot-noise quadrature variance to the vacuum value 1/2, and

        nu_el = Var[dark] / (Var[vacuum] - Var[dark])

    is the electronic noise in shot-noise units.  Variances pool both
    quadratures (real and imaginary parts).

    Returns (signal_snu, scales, nu_el) with scales and nu_el per frame.
    """
    signal_vals = np.atleast_2d(np.asarray(signal_vals))
    vacuum_vals = np.atleast_2d(np.asarray(vacuum_vals))
    n_frames = signal_vals.shape[0]
    if vacuum_vals.shape[0] != n_frames:
        raise ValueError("signal and vacuum frame counts differ")
    det = np.asarray(detector_vals)
    if det.ndim == 1:
        det_var = np.full(n_frames, _quad_var(det))
    else:
        if det.shape[0] != n_frames:
            raise ValueError("dark record frame count mismatch")
        det_var = np.array([_quad_var(det[i]) for i in range(n_frames)])
    vac_var = np.array([_quad_var(vacuum_vals[i]) for i in range(n_frames)])
    shot = vac_var - det_var
    if np.any(shot <= 0):
        raise ValueError("vacuum variance does not exceed dark variance; "
                         "check the calibration records")
    scales = 1.0 / np.sqrt(2.0 * shot)
    nu_el = det_var / shot
    return signal_vals * scales[:, None], scales, nu_el


def _quad_var(vals: np.ndarray) -> float:
    """Single-quadrature variance pooled over Re and Im."""
    v = np.asarray(vals)
    if np.iscomplexobj(v):
        parts = np.concatenate([v.real.ravel(), v.imag.ravel()])
    else:
        parts = v.ravel()
    return float(np.var(parts))


def equalize_detectors(x_vals: np.ndarray, p_vals: np.ndarray,
                       nu_x: float, nu_p: float,
                       rng: np.random.Generator):
    """Noise-pad the quieter quadrature so both match the noisier one.

    The two heterodyne detectors rarely share an electronic noise level.
    Rather than model an asymmetric detector, Gaussian noise of quadrature
    variance |nu_x - nu_p| / 2 is added to the quieter stream, after which
    both quadratures carry nu_eq = max(nu_x, nu_p).

    Returns (x_out, p_out, nu_eq).
    """
    x_out = np.asarray(x_vals, dtype=np.float64).copy()
    p_out = np.asarray(p_vals, dtype=np.float64).copy()
    gap = abs(nu_x - nu_p)
    if gap > 0:
        sigma = np.sqrt(gap / 2.0)
        if nu_x < nu_p:
            x_out += rng.normal(0.0, sigma, x_out.shape)
        else:
            p_out += rng.normal(0.0, sigma, p_out.shape)
    return x_out, p_out, max(nu_x, nu_p)


def highpass_single_pole(trace: np.ndarray, cutoff: float,
                         sample_rate: float) -> np.ndarray:
    """Single-pole RC high-pass, the receiver's AC-coupling model.

    y[k] = a * (y[k-1] + x[k] - x[k-1]),  a = RC / (RC + dt),
    RC = 1 / (2 pi cutoff).  Applied to real and imaginary parts alike.
    """
    from scipy.signal import lfilter

    dt = 1.0 / sample_rate
    rc = 1.0 / (2.0 * np.pi * cutoff)
    a = rc / (rc + dt)
    b_coef = np.array([a, -a])
    a_coef = np.array([1.0, -a])
    x = np.asarray(trace)
    if np.iscomplexobj(x):
        return (lfilter(b_coef, a_coef, x.real)
                + 1j * lfilter(b_coef, a_coef, x.imag))
    return lfilter(b_coef, a_coef, x)


def demodulate_burst(trace: np.ndarray, layout: FrameLayout,
                     pulse: PulseShape, n_frames: int, offset: int = 0):
    """Matched-filter every slot of a synchronised burst.

    Returns (signal_vals, vacuum_vals), each (n_frames, 1000) complex, the
    raw (un-normalised) per-slot projections.
    """
    spf = layout.slots_per_frame
    vals = matched_filter(trace, pulse, n_frames * spf, offset)
    vals = vals.reshape(n_frames, spf)
    return vals[:, layout.signal_slot_indices()], vals[:, layout.vacuum_slot_indices()]
