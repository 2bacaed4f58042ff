"""Source-filter analysis and resynthesis in the style of the WORLD vocoder.

Each frame is described by an F0 value, 60 frequency-warped cepstral
coefficients of the log power envelope and four band aperiodicity ratios.

Power convention
----------------
For a frame windowed by ``w`` the power spectrum is ``|DFT(w x)|**2 / sum(w**2)``.
With that scaling a white noise of variance ``s**2`` has a flat envelope
``s**2`` and a pulse train of period ``T0`` samples filtered by ``h`` has
envelope ``|H|**2 / T0`` once averaged over one harmonic spacing. Synthesis
inverts both relations, so levels survive a round trip.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import get_window

from .audio_io import NORMALIZE_PEAK, AudioClip
from .contour import F0Contour, resample_contour

ALPHA = 0.45
N_MFSC = 60
BAND_EDGES_HZ = (0.0, 1000.0, 2000.0, 4000.0)
N_BANDS = len(BAND_EDGES_HZ)
DEFAULT_HOP = 0.005

F0_FLOOR = 71.0
UNVOICED_F0 = 160.0
UNVOICED_WINDOW = 0.040
UNVOICED_LIFTER = 0.005
LIFTER_PERIODS = 0.8
LOG_FLOOR_DB = -80.0
ABSOLUTE_POWER_FLOOR = 1e-16
_PULSE_CHUNK = 512


class FeatureMismatchError(ValueError):
    pass


def fft_size_for(sample_rate: int) -> int:
    """FFT length that holds three periods of the lowest analysable F0.

    Gives 2048 at 44.1 kHz and 48 kHz, 1024 at 16 kHz.
    """
    return 2 ** (1 + int(np.floor(np.log2(3.0 * sample_rate / F0_FLOOR))))


@dataclass(frozen=True, eq=False)
class VocoderFeatures:
    hop_seconds: float
    f0: F0Contour
    mfsc: np.ndarray
    band_ap: np.ndarray
    sample_rate: int

    def __post_init__(self):
        mfsc = np.asarray(self.mfsc, dtype=np.float64)
        band_ap = np.asarray(self.band_ap, dtype=np.float64)
        n = len(self.f0)
        if mfsc.shape != (n, N_MFSC) or band_ap.shape != (n, N_BANDS):
            raise FeatureMismatchError(
                f"expected ({n}, {N_MFSC}) and ({n}, {N_BANDS}) arrays, "
                f"got {mfsc.shape} and {band_ap.shape}")
        if not np.all(np.isfinite(mfsc)):
            raise ValueError("mfsc must be finite")
        if np.any(band_ap < 0) or np.any(band_ap > 1):
            raise ValueError("band aperiodicity must lie in [0, 1]")
        object.__setattr__(self, "mfsc", mfsc)
        object.__setattr__(self, "band_ap", band_ap)

    @property
    def n_frames(self) -> int:
        return len(self.f0)

    @property
    def fft_size(self) -> int:
        return fft_size_for(self.sample_rate)

    def matrix(self) -> np.ndarray:
        """Frame-by-65 array: F0, 60 MFSC, 4 band aperiodicities."""
        return np.hstack([self.f0.values[:, None], self.mfsc, self.band_ap])


# -- frequency warping ------------------------------------------------------

def warp_frequency(omega, alpha: float = ALPHA):
    """Phase response of the first-order all-pass: linear -> warped radians."""
    omega = np.asarray(omega, dtype=np.float64)
    return omega + 2.0 * np.arctan(alpha * np.sin(omega) / (1.0 - alpha * np.cos(omega)))


def _cos_table(n_fft: int, order: int, alpha: float) -> np.ndarray:
    half = n_fft // 2
    warped = warp_frequency(np.pi * np.arange(half + 1) / half, alpha)
    table = np.cos(np.outer(warped, np.arange(order)))
    table[:, 1:] *= 2.0
    return table


def encode_envelope(log_power: np.ndarray, order: int = N_MFSC,
                    alpha: float = ALPHA) -> np.ndarray:
    """Warped cepstrum of log power spectra.

    ``log_power`` has shape ``(frames, n_fft // 2 + 1)``. Each row is
    resampled on a uniform grid of the warped frequency axis and turned
    into cepstral coefficients; the first ``order`` are kept.
    """
    log_power = np.atleast_2d(log_power)
    half = log_power.shape[1] - 1
    unwarped = warp_frequency(np.pi * np.arange(half + 1) / half, -alpha)
    pos = unwarped * half / np.pi
    lo = np.clip(np.floor(pos).astype(int), 0, half - 1)
    frac = pos - lo
    resampled = (1.0 - frac) * log_power[:, lo] + frac * log_power[:, lo + 1]
    return np.fft.irfft(resampled, 2 * half, axis=1)[:, :order]


def decode_envelope(coefficients: np.ndarray, n_fft: int,
                    alpha: float = ALPHA) -> np.ndarray:
    """Inverse of :func:`encode_envelope`: log power on the linear FFT bins."""
    coefficients = np.atleast_2d(coefficients)
    return coefficients @ _cos_table(n_fft, coefficients.shape[1], alpha).T


# -- analysis ---------------------------------------------------------------

def _segment(x: np.ndarray, start: int, length: int) -> np.ndarray:
    out = np.zeros(length)
    lo, hi = max(start, 0), min(start + length, x.size)
    if hi > lo:
        out[lo - start : hi - start] = x[lo:hi]
    return out


def _box_smooth(power: np.ndarray, width_bins: float) -> np.ndarray:
    """Average power over a centred band ``width_bins`` wide (mirrored edges)."""
    half = power.size - 1
    ext = int(np.ceil(width_bins)) + 2
    idx = np.arange(-ext, half + ext + 1)
    mirrored = np.abs(idx)
    mirrored = np.where(mirrored > half, 2 * half - mirrored, mirrored)
    values = power[mirrored]
    cum = np.concatenate([[0.0], np.cumsum(values)])
    # cum[i] integrates values over bins [idx[0] - 0.5, idx[0] - 0.5 + i)
    edges = np.arange(cum.size) + idx[0] - 0.5
    centre = np.arange(half + 1)
    upper = np.interp(centre + width_bins / 2, edges, cum)
    lower = np.interp(centre - width_bins / 2, edges, cum)
    return (upper - lower) / width_bins


def _lifter(log_power: np.ndarray, cutoff: float, n_fft: int) -> np.ndarray:
    ceps = np.fft.irfft(log_power, n_fft)
    q = np.arange(n_fft)
    q = np.minimum(q, n_fft - q)
    ceps[q >= cutoff] = 0.0
    return np.fft.rfft(ceps).real


def smoothed_log_power(x: np.ndarray, center: int, f0: float, sample_rate: int,
                       n_fft: int) -> np.ndarray:
    """Smoothed log power envelope (natural log) of one frame."""
    voiced = f0 > 0
    if voiced:
        f0_eff = max(f0, F0_FLOOR)
        length = int(round(3.0 * sample_rate / f0_eff))
        smooth_hz = f0_eff
        cutoff = LIFTER_PERIODS * sample_rate / f0_eff
    else:
        length = int(round(UNVOICED_WINDOW * sample_rate))
        smooth_hz = UNVOICED_F0
        cutoff = UNVOICED_LIFTER * sample_rate
    length = min(length, n_fft)
    window = get_window("hann", length, fftbins=False)
    frame = _segment(x, center - length // 2, length) * window
    power = np.abs(np.fft.rfft(frame, n_fft)) ** 2 / np.sum(window ** 2)
    power = _box_smooth(power, smooth_hz * n_fft / sample_rate)
    floor = max(power.max() * 10 ** (LOG_FLOOR_DB / 10), ABSOLUTE_POWER_FLOOR)
    log_power = np.log(np.maximum(power, floor))
    return _lifter(log_power, cutoff, n_fft)


def _band_masks(sample_rate: int, n_fft: int) -> np.ndarray:
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = list(BAND_EDGES_HZ) + [np.inf]
    return np.array([(freqs >= lo) & (freqs < hi) for lo, hi in zip(edges[:-1], edges[1:])])


def band_aperiodicity(x: np.ndarray, center: int, f0: float, sample_rate: int,
                      n_fft: int, masks: np.ndarray | None = None) -> np.ndarray:
    """Aperiodic energy share per band from a one-period comb residual.

    The frame is compared with itself delayed by exactly one period
    (fractional delay in the frequency domain). A periodic signal cancels;
    for noise the residual carries twice the frame energy, hence the
    factor 1/2. Unvoiced frames are fully aperiodic.
    """
    if masks is None:
        masks = _band_masks(sample_rate, n_fft)
    if not f0 > 0:
        return np.ones(N_BANDS)
    f0_eff = max(f0, F0_FLOOR)
    period = sample_rate / f0
    length = min(int(round(3.0 * sample_rate / f0_eff)), n_fft)
    taper = 32
    lead = int(np.ceil(period)) + 2 * taper
    seg = _segment(x, center - length // 2 - lead, length + lead + 2 * taper)
    # smooth segment edges: the frequency-domain delay rings on hard edges
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(taper) / taper)
    seg[:taper] *= ramp
    seg[-taper:] *= ramp[::-1]
    n_big = 1 << int(np.ceil(np.log2(2 * seg.size)))
    spec = np.fft.rfft(seg, n_big)
    omega = 2.0 * np.pi * np.arange(spec.size) / n_big
    delayed = np.fft.irfft(spec * np.exp(-1j * omega * period), n_big)[: seg.size]
    window = get_window("hann", length, fftbins=False)
    frame = seg[lead : lead + length]
    resid = frame - delayed[lead : lead + length]
    total = np.abs(np.fft.rfft(frame * window, n_fft)) ** 2
    resid = np.abs(np.fft.rfft(resid * window, n_fft)) ** 2
    e_tot = masks @ total
    e_res = masks @ resid
    tiny = 1e-20 * n_fft
    ratio = np.divide(e_res, 2.0 * e_tot, out=np.ones(N_BANDS), where=e_tot > tiny)
    return np.clip(ratio, 0.0, 1.0)


def frame_count(n_samples: int, sample_rate: int, hop_seconds: float) -> int:
    """Number of hop-spaced frames covering ``n_samples`` (frame 0 at t=0)."""
    return int(np.floor((n_samples - 1) / (hop_seconds * sample_rate) + 1e-9)) + 1


def analyze(clip: AudioClip, f0: F0Contour) -> VocoderFeatures:
    """Decompose ``clip`` into F0, warped cepstral envelope and band aperiodicity.

    Parameters
    ----------
    clip : AudioClip
    f0 : F0Contour
        Contour on the analysis hop with exactly one value per frame, see
        :func:`frame_count`. Use :func:`f0_for_vocoder` to bring a tracker
        contour onto the vocoder grid.

    Raises
    ------
    FeatureMismatchError
        ``f0`` does not have one frame per hop of ``clip``.
    """
    sr = clip.sample_rate
    hop = f0.hop_seconds
    expected = frame_count(len(clip), sr, hop)
    if len(f0) != expected:
        raise FeatureMismatchError(
            f"f0 has {len(f0)} frames, clip of {len(clip)} samples needs {expected}")
    n_fft = fft_size_for(sr)
    masks = _band_masks(sr, n_fft)
    x = clip.samples
    centers = np.round(np.arange(expected) * hop * sr).astype(int)

    log_power = np.empty((expected, n_fft // 2 + 1))
    band_ap = np.empty((expected, N_BANDS))
    for k, (c, f) in enumerate(zip(centers, f0.values)):
        log_power[k] = smoothed_log_power(x, c, f, sr, n_fft)
        band_ap[k] = band_aperiodicity(x, c, f, sr, n_fft, masks)
    return VocoderFeatures(hop, f0, encode_envelope(log_power), band_ap, sr)


def f0_for_vocoder(f0: F0Contour, n_samples: int, sample_rate: int,
                   hop_seconds: float = DEFAULT_HOP) -> F0Contour:
    """Resample a contour to the vocoder hop and fit it to the clip length."""
    return resample_contour(f0, hop_seconds).with_length(
        frame_count(n_samples, sample_rate, hop_seconds))


# -- feature edits ----------------------------------------------------------

def transpose_f0(feats: VocoderFeatures, offset_cents) -> VocoderFeatures:
    """Shift voiced F0 frames by per-frame offsets in cents.

    Envelope and aperiodicity are left untouched; unvoiced frames stay 0.
    """
    offset = np.broadcast_to(np.asarray(offset_cents, dtype=np.float64), (feats.n_frames,))
    values = feats.f0.values
    shifted = np.where(values > 0, values * np.exp2(offset / 1200.0), 0.0)
    return replace(feats, f0=F0Contour(feats.f0.hop_seconds, shifted))


def warp_envelope(feats: VocoderFeatures, scale: float) -> VocoderFeatures:
    """Stretch the spectral envelope along frequency by ``scale``.

    ``scale > 1`` moves formants up. Used as a cheap stand-in for a
    different vocal tract.
    """
    n_fft = feats.fft_size
    log_power = decode_envelope(feats.mfsc, n_fft)
    bins = np.arange(n_fft // 2 + 1)
    src = np.clip(bins / scale, 0, n_fft // 2)
    stretched = np.array([np.interp(src, bins, row) for row in log_power])
    return replace(feats, mfsc=encode_envelope(stretched))


# -- synthesis --------------------------------------------------------------

def _per_bin_ap(band_ap: np.ndarray, sample_rate: int, n_fft: int) -> np.ndarray:
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    nyquist = sample_rate / 2
    edges = list(BAND_EDGES_HZ) + [max(nyquist, BAND_EDGES_HZ[-1])]
    centres = [(lo + hi) / 2 for lo, hi in zip(edges[:-1], edges[1:])]
    return np.array([np.interp(freqs, centres, row) for row in np.atleast_2d(band_ap)])


def _sample_f0(f0: F0Contour, n_out: int, sample_rate: int) -> np.ndarray:
    """Per-sample F0: nearest-frame voicing, log-linear inside voiced runs."""
    pos = np.arange(n_out) / (f0.hop_seconds * sample_rate)
    values = f0.values
    n = values.size
    nearest = np.clip(np.floor(pos + 0.5).astype(int), 0, n - 1)
    lo = np.clip(np.floor(pos).astype(int), 0, n - 1)
    hi = np.clip(lo + 1, 0, n - 1)
    frac = pos - lo
    out = values[nearest].copy()
    both = (out > 0) & (values[lo] > 0) & (values[hi] > 0)
    out[both] = np.exp((1 - frac[both]) * np.log(values[lo[both]])
                       + frac[both] * np.log(values[hi[both]]))
    return out


def pulse_positions(f0_per_sample: np.ndarray, sample_rate: int) -> np.ndarray:
    """Fractional sample positions of glottal pulses by phase accumulation."""
    voiced = f0_per_sample > 0
    edges = np.diff(np.concatenate([[0], voiced.astype(int), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    out = []
    for a, b in zip(starts, ends):
        phase = np.concatenate([[0.0], np.cumsum(f0_per_sample[a:b - 1] / sample_rate)])
        cycles = np.floor(phase)
        cross = np.flatnonzero(np.diff(cycles) > 0) + 1
        frac = (cycles[cross] - phase[cross - 1]) / (phase[cross] - phase[cross - 1])
        out.append(np.concatenate([[float(a)], a + cross - 1 + frac]))
    return np.concatenate(out) if out else np.zeros(0)


def _min_phase_spectra(log_amp: np.ndarray, n_fft: int) -> np.ndarray:
    ceps = np.fft.irfft(log_amp, n_fft, axis=1)
    half = n_fft // 2
    ceps[:, 1:half] *= 2.0
    ceps[:, half + 1 :] = 0.0
    return np.exp(np.fft.rfft(ceps, axis=1))


def _interp_frames(table: np.ndarray, pos: np.ndarray) -> np.ndarray:
    lo = np.clip(np.floor(pos).astype(int), 0, table.shape[0] - 1)
    hi = np.clip(lo + 1, 0, table.shape[0] - 1)
    frac = np.clip(pos - lo, 0.0, 1.0)[:, None]
    return (1 - frac) * table[lo] + frac * table[hi]


def synthesize(feats: VocoderFeatures, seed: int = 0) -> AudioClip:
    """Render features back to audio.

    Voiced frames drive a pulse train whose minimum-phase responses carry
    the periodic share of the envelope; seeded white noise shaped by the
    aperiodic share fills the rest (all of it on unvoiced frames). The
    result is peak-limited to 0.89 and is bit-identical for equal seeds.
    """
    sr = feats.sample_rate
    n_fft = feats.fft_size
    half = n_fft // 2
    hop_samples = feats.hop_seconds * sr
    n_out = int(round(feats.n_frames * hop_samples))
    log_power = decode_envelope(feats.mfsc, n_fft)
    voiced_frames = feats.f0.values > 0
    ap = _per_bin_ap(feats.band_ap, sr, n_fft)
    ap[~voiced_frames] = 1.0
    out = np.zeros(n_out + 2 * n_fft)

    # periodic part
    f0_samples = _sample_f0(feats.f0, n_out, sr)
    pulses = pulse_positions(f0_samples, sr)
    log_periodic = log_power + np.log(np.maximum(1.0 - ap, 1e-12))
    omega = 2.0 * np.pi * np.arange(half + 1) / n_fft
    for start in range(0, pulses.size, _PULSE_CHUNK):
        p = pulses[start : start + _PULSE_CHUNK]
        base = np.floor(p).astype(int)
        period = sr / f0_samples[np.minimum(base, n_out - 1)]
        env = _interp_frames(log_periodic, p / hop_samples)
        log_amp = 0.5 * (env + np.log(period)[:, None])
        spectra = _min_phase_spectra(log_amp, n_fft)
        spectra *= np.exp(-1j * np.outer(p - base, omega))
        responses = np.fft.irfft(spectra, n_fft, axis=1)
        for b, h in zip(base, responses):
            out[b : b + n_fft] += h

    # aperiodic part: STFT filtering of white noise; output sample m is
    # noise_out[m + n_fft] so every output sample sees full window overlap
    rng = np.random.default_rng(seed)
    noise_hop = n_fft // 4
    n_noise_frames = int(np.ceil((n_out + 2 * n_fft) / noise_hop)) + 1
    noise = rng.standard_normal(n_noise_frames * noise_hop + n_fft)
    window = np.sqrt(get_window("hann", n_fft))
    log_aperiodic = log_power + np.log(np.maximum(ap, 1e-12))
    centres = np.arange(n_noise_frames) * noise_hop - half
    gains = np.exp(0.5 * _interp_frames(log_aperiodic, np.maximum(centres, 0) / hop_samples))
    noise_out = np.zeros(noise.size)
    for j in range(n_noise_frames):
        a = j * noise_hop
        spec = np.fft.rfft(noise[a : a + n_fft] * window) * gains[j]
        noise_out[a : a + n_fft] += np.fft.irfft(spec, n_fft) * window
    # squared sqrt-hann windows at quarter hop sum to 2
    out[:n_out] += noise_out[n_fft : n_fft + n_out] / 2.0

    signal = out[:n_out]
    peak = np.max(np.abs(signal)) if signal.size else 0.0
    if peak > NORMALIZE_PEAK:
        signal = signal * (NORMALIZE_PEAK / peak)
    return AudioClip(signal, sr)


# -- feature dump -----------------------------------------------------------

def save_features_csv(feats: VocoderFeatures, path) -> None:
    header = ["f0"] + [f"mfsc_{i}" for i in range(N_MFSC)] + [f"ap_{i}" for i in range(N_BANDS)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(feats.matrix().tolist())


def load_features_csv(path, hop_seconds: float, sample_rate: int) -> VocoderFeatures:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return VocoderFeatures(hop_seconds, F0Contour(hop_seconds, data[:, 0]),
                           data[:, 1 : 1 + N_MFSC], data[:, 1 + N_MFSC :], sample_rate)
