"""Monophonic F0 tracking with a cumulative-mean-normalized difference function.

The tracker follows the classic YIN recipe: squared-difference function,
cumulative mean normalization, smallest-lag dip selection and parabolic
refinement. Voicing requires both a low normalized-difference minimum and
frame energy above -60 dBFS. Afterwards a 3-frame median removes isolated
octave spikes inside voiced runs, and frames at the ends of runs that jump
away from their neighbours are unvoiced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .audio_io import AudioClip
from .contour import F0Contour

RMS_GATE = 10 ** (-60 / 20)
# first dip below this value wins (classic YIN absolute threshold)
_DIP_THRESHOLD = 0.1
# a dip deeper than this is taken as a clean match and never doubled
_CLEAN_DIP = 0.003
# otherwise a dip near twice the lag wins if it is this much deeper
_DOUBLING_RATIO = 0.25
# run edges that jump further than this from their neighbour are unvoiced
_EDGE_JUMP_CENTS = 300.0
_EDGE_TRIM = 2
_MIN_RUN_SECONDS = 0.025
_CHUNK = 256


class ClipTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    hop_seconds: float = 0.010
    fmin: float = 50.0
    fmax: float = 1500.0
    voicing_threshold: float = 0.45
    window_seconds: float = 0.040

    def validate(self, sample_rate: int) -> None:
        if not self.hop_seconds > 0:
            raise ValueError("hop_seconds must be positive")
        if not 0 < self.fmin < self.fmax < sample_rate / 2:
            raise ValueError(
                f"need 0 < fmin < fmax < sample_rate/2, got {self.fmin}, {self.fmax}, {sample_rate}")
        if not 0 < self.voicing_threshold < 1:
            raise ValueError("voicing_threshold must lie in (0, 1)")
        if not self.window_seconds > 0:
            raise ValueError("window_seconds must be positive")


def _frames(x: np.ndarray, centers: np.ndarray, length: int, half: int) -> np.ndarray:
    padded = np.pad(x, (half, length))
    idx = centers[:, None] + np.arange(length)[None, :]
    return padded[idx]


def _difference_parts(frames: np.ndarray, window: int, max_lag: int):
    n_fft = 1 << int(np.ceil(np.log2(window + max_lag + window)))
    head = frames[:, :window]
    full = frames[:, : window + max_lag]
    spec = np.fft.rfft(full, n_fft) * np.conj(np.fft.rfft(head, n_fft))
    corr = np.fft.irfft(spec, n_fft)[:, : max_lag + 1]
    sq = np.cumsum(np.pad(full ** 2, ((0, 0), (1, 0))), axis=1)
    energy0 = sq[:, window][:, None]
    lags = np.arange(max_lag + 1)
    energy_lag = sq[:, lags + window] - sq[:, lags]
    diff = np.maximum(energy0 + energy_lag - 2.0 * corr, 0.0)
    return diff, spec, energy0[:, 0], energy_lag


def difference_function(frames: np.ndarray, window: int, max_lag: int) -> np.ndarray:
    """Squared difference ``d[t] = sum_j (x[j] - x[j + t])**2`` for each frame row.

    ``frames`` must have at least ``window + max_lag`` columns; the sum runs
    over the first ``window`` samples.
    """
    return _difference_parts(frames, window, max_lag)[0]


class _FractionalDip:
    """Normalized difference of one frame evaluated between integer lags.

    The cross-correlation is interpolated band-limitedly from its spectrum,
    so a periodic signal scores (almost) zero at its true fractional period
    even when every harmonic up to Nyquist is present.
    """

    def __init__(self, spec: np.ndarray, energy0: float, energy_lag: np.ndarray,
                 diff: np.ndarray):
        self.spec = spec
        self.n_fft = 2 * (spec.size - 1)
        self.k = np.arange(spec.size)
        self.weights = np.full(spec.size, 2.0)
        self.weights[0] = self.weights[-1] = 1.0
        self.energy0 = energy0
        self.energy_lag = energy_lag
        self.running = np.concatenate([[0.0], np.cumsum(diff[1:])])

    def __call__(self, lag: float) -> float:
        phase = np.exp(2j * np.pi * self.k * lag / self.n_fft)
        corr = np.sum(self.weights * (self.spec * phase).real) / self.n_fft
        energy = np.interp(lag, np.arange(self.energy_lag.size), self.energy_lag)
        d = max(self.energy0 + energy - 2.0 * corr, 0.0)
        running = np.interp(lag, np.arange(self.running.size), self.running)
        return d * lag / running if running > 0 else 1.0

    def minimum(self, tau: int) -> tuple[float, float]:
        res = minimize_scalar(self, bounds=(tau - 1.0, tau + 1.0), method="bounded",
                              options={"xatol": 1e-3})
        return float(res.x), float(res.fun)


def cmnd(diff: np.ndarray) -> np.ndarray:
    """Cumulative mean normalized difference; lag 0 is fixed to 1."""
    lags = np.arange(diff.shape[1])
    running = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = diff[:, 1:] * lags[1:] / running
    out[:, 1:] = np.where(running > 0, ratio, 1.0)
    return out


def _descend(d: np.ndarray, tau: int, hi: int) -> int:
    while tau < hi and d[tau + 1] < d[tau]:
        tau += 1
    return tau


def _refine(d: np.ndarray, tau: int, lo: int, hi: int) -> tuple[float, float]:
    """Parabolic interpolation of a dip: (fractional lag, interpolated value)."""
    if lo < tau < hi:
        a, b, c = d[tau - 1], d[tau], d[tau + 1]
        denom = a - 2 * b + c
        if denom > 0:
            shift = 0.5 * (a - c) / denom
            return tau + shift, max(b - 0.25 * (a - c) * shift, 0.0)
    return float(tau), float(d[tau])


def _pick_lag(d: np.ndarray, lo: int, hi: int, fine=None) -> tuple[float, float]:
    """Smallest-lag dip of one normalized-difference row within [lo, hi].

    With ``fine`` (a :class:`_FractionalDip`) a dip that is not a clean
    match is compared with the best dip near twice its lag; a beating
    unison can lose its fundamental for a few periods and leave a shallow
    dip at half the true period.
    """
    seg = d[lo : hi + 1]
    below = np.flatnonzero(seg < _DIP_THRESHOLD)
    tau = _descend(d, lo + below[0], hi) if below.size else lo + int(np.argmin(seg))
    lag, value = _refine(d, tau, lo, hi)
    if fine is None or value <= _CLEAN_DIP or 2 * tau + 1 > hi:
        return lag, value

    lag, value = fine.minimum(tau)
    if value <= _CLEAN_DIP:
        return lag, value
    a = max(int(1.9 * tau), lo)
    b = min(int(np.ceil(2.1 * tau)), hi - 1)
    cand = a + int(np.argmin(d[a : b + 1]))
    cand_lag, cand_value = fine.minimum(cand)
    if cand_value < _DOUBLING_RATIO * value:
        return cand_lag, cand_value
    return lag, value


def _trim_edges(values: np.ndarray, hop_seconds: float) -> np.ndarray:
    """Clean up the ends of voiced runs.

    A decaying offset (or a soft onset) favours short lags, so the last or
    first frames of a note can lock onto a formant instead of the F0. Up to
    two frames beyond a jump of more than 300 cents at either end of a run
    are unvoiced, and runs shorter than 25 ms are dropped.
    """
    out = values.copy()
    limit = _EDGE_JUMP_CENTS / 1200.0
    min_run = int(np.ceil(_MIN_RUN_SECONDS / hop_seconds - 1e-9))
    edges = np.diff(np.concatenate([[0], (values > 0).astype(np.int8), [0]]))
    for a, b in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
        if b - a < min_run:
            out[a:b] = 0.0
            continue
        jumps = np.abs(np.diff(np.log2(out[a:b]))) > limit
        n = min(_EDGE_TRIM, jumps.size)
        tail = np.flatnonzero(jumps[jumps.size - n:])
        if tail.size:
            out[a + jumps.size - n + tail[0] + 1 : b] = 0.0
        head = np.flatnonzero(jumps[:n])
        if head.size:
            out[a : a + head[-1] + 1] = 0.0
    return out


def _median3(values: np.ndarray) -> np.ndarray:
    out = values.copy()
    v = values > 0
    inner = np.flatnonzero(v[1:-1] & v[:-2] & v[2:]) + 1
    if inner.size:
        stack = np.log(np.stack([values[inner - 1], values[inner], values[inner + 1]]))
        out[inner] = np.exp(np.median(stack, axis=0))
    return out


def track_f0(clip: AudioClip, cfg: TrackerConfig | None = None) -> F0Contour:
    """Estimate the F0 contour of a monophonic (or unison) recording.

    Returns a contour with one value per hop, frame ``k`` centred on
    sample ``k * hop``; unvoiced frames are 0 and voiced values lie in
    ``[cfg.fmin, cfg.fmax]``.
    """
    cfg = cfg or TrackerConfig()
    sr = clip.sample_rate
    cfg.validate(sr)
    window = int(round(cfg.window_seconds * sr))
    if len(clip) < window:
        raise ClipTooShortError(
            f"clip has {len(clip)} samples, shorter than one {window}-sample window")
    hop = cfg.hop_seconds * sr
    min_lag = max(int(np.floor(sr / cfg.fmax)), 2)
    max_lag = int(np.ceil(sr / cfg.fmin))
    length = window + max_lag

    x = clip.samples
    n_frames = int(np.floor((len(x) - 1) / hop + 1e-9)) + 1
    centers = np.round(np.arange(n_frames) * hop).astype(int)
    f0 = np.zeros(n_frames)

    for start in range(0, n_frames, _CHUNK):
        c = centers[start : start + _CHUNK]
        # integration window centred on the frame time, lags reach forward
        frames = _frames(x, c, length, window // 2)
        diff, spec, energy0, energy_lag = _difference_parts(frames, window, max_lag)
        d = cmnd(diff)
        rms = np.sqrt(np.mean(frames[:, :window] ** 2, axis=1))
        for row in range(frames.shape[0]):
            if rms[row] < RMS_GATE:
                continue
            fine = _FractionalDip(spec[row], energy0[row], energy_lag[row], diff[row])
            tau, value = _pick_lag(d[row], min_lag, max_lag, fine)
            if value <= cfg.voicing_threshold:
                f0[start + row] = sr / tau

    f0 = np.where(f0 > 0, np.clip(f0, cfg.fmin, cfg.fmax), 0.0)
    return F0Contour(cfg.hop_seconds, _trim_edges(_median3(f0), cfg.hop_seconds))
