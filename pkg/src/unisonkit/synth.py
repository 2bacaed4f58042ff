"""Solo-to-unison clone generation and unison-to-solo prototype synthesis."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import vocoder
from .audio_io import AudioClip, frame_rms, mix_and_normalize
from .contour import F0Contour
from .pitch import RMS_GATE, TrackerConfig, track_f0

SILENCE_FRAME = 0.010
MIN_GAP = 0.080
PITCH_SMOOTHING = 0.050
CROSSFADE = 0.010
TIMBRE_WARP = 0.03


@dataclass(frozen=True)
class CloneParams:
    """Controls for clone generation.

    std is the pitch-deviation scale in cents, ts the timing-shift scale in
    seconds and ns the number of clones. ``timbre_variation`` turns on a
    per-clone random stretch of the spectral envelope by up to
    ``timbre_scale`` (relative).
    """

    std: float = 0.0
    ts: float = 0.0
    ns: int = 1
    timbre_variation: bool = False
    timbre_scale: float = TIMBRE_WARP
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.std) and self.std >= 0):
            raise ValueError("std must be finite and >= 0")
        if not (np.isfinite(self.ts) and self.ts >= 0):
            raise ValueError("ts must be finite and >= 0")
        if int(self.ns) != self.ns or self.ns < 1:
            raise ValueError("ns must be an integer >= 1")
        if not 0 <= self.timbre_scale < 1:
            raise ValueError("timbre_scale must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "stu_ps": CloneParams(std=50.0, ts=0.0, ns=4, timbre_variation=True),
    "stu_pts": CloneParams(std=50.0, ts=0.040, ns=4, timbre_variation=True),
    "stu_ts": CloneParams(std=0.0, ts=0.040, ns=4, timbre_variation=True),
    "stu_pt": CloneParams(std=50.0, ts=0.040, ns=4, timbre_variation=False),
}


@dataclass(frozen=True)
class VoicedSegment:
    start: int
    end: int

    def __len__(self):
        return self.end - self.start


def segment_voiced_regions(clip: AudioClip) -> list[VoicedSegment]:
    """Split a clip at silences longer than 80 ms.

    Silence is a run of 10 ms frames with RMS below -60 dBFS. The
    returned segments are ordered, disjoint and cover every non-silent
    frame; leading and trailing silence is excluded.
    """
    frame = int(round(SILENCE_FRAME * clip.sample_rate))
    if len(clip) == 0:
        return []
    silent = frame_rms(clip.samples, frame) < RMS_GATE
    loud = np.flatnonzero(~silent)
    if loud.size == 0:
        return []
    first, last = loud[0], loud[-1] + 1
    edges = np.diff(np.concatenate([[0], silent[first:last].astype(np.int8), [0]]))
    gap_starts = np.flatnonzero(edges == 1) + first
    gap_ends = np.flatnonzero(edges == -1) + first

    segments = []
    seg_start = first
    for a, b in zip(gap_starts, gap_ends):
        if (b - a) * SILENCE_FRAME > MIN_GAP + 1e-9:
            segments.append((seg_start, a))
            seg_start = b
    segments.append((seg_start, last))
    n = len(clip)
    return [VoicedSegment(int(a * frame), int(min(b * frame, n))) for a, b in segments]


def _streams(params: CloneParams, clone_index: int):
    root = np.random.SeedSequence([params.seed % 2**64, clone_index])
    pitch, timbre, timing, noise = root.spawn(4)
    return (np.random.default_rng(pitch), np.random.default_rng(timbre),
            np.random.default_rng(timing), int(noise.generate_state(1)[0]))


def pitch_offsets(n_frames: int, hop_seconds: float, std: float,
                  rng: np.random.Generator) -> np.ndarray:
    """Smoothed Gaussian pitch offsets in cents with standard deviation ``std``.

    White noise is averaged over 50 ms and rescaled by sqrt(window) so the
    smoothing does not shrink the marginal spread.
    """
    width = max(int(round(PITCH_SMOOTHING / hop_seconds)), 1)
    white = rng.standard_normal(n_frames + width - 1)
    smooth = np.convolve(white, np.ones(width) / width, mode="valid")
    return std * np.sqrt(width) * smooth


def shift_segments(samples: np.ndarray, segments, shifts: np.ndarray,
                   sample_rate: int) -> np.ndarray:
    """Move each segment by its own shift (samples) with linear edge fades.

    Segments are processed in order; a shift that would start a segment
    before the end of the previously placed one (or before time zero) is
    clipped. The fades sit in the silent margin around each segment so the
    voiced audio is not attenuated.
    """
    fade = int(round(CROSSFADE * sample_rate))
    placed = []
    prev_end = 0
    for seg, shift in zip(segments, shifts):
        shift = max(int(shift), prev_end - seg.start)
        lo = max(seg.start - fade, 0)
        hi = min(seg.end + fade, samples.size)
        piece = samples[lo:hi].copy()
        head, tail = seg.start - lo, hi - seg.end
        if head:
            piece[:head] *= np.arange(head) / head
        if tail:
            piece[-tail:] *= np.arange(tail, 0, -1) / tail
        placed.append((lo + shift, piece))
        prev_end = seg.end + shift
    length = max([samples.size] + [pos + p.size for pos, p in placed])
    out = np.zeros(length)
    for pos, piece in placed:
        if pos < 0:
            piece, pos = piece[-pos:], 0
        out[pos : pos + piece.size] += piece
    return out


def clone_features(feats: vocoder.VocoderFeatures, params: CloneParams,
                   clone_index: int) -> vocoder.VocoderFeatures:
    """Pitch- and timbre-perturbed copy of ``feats`` for one clone.

    Voicing is untouched: a frame is voiced in the clone exactly when it
    is voiced in ``feats``.
    """
    if not 0 <= clone_index < params.ns:
        raise ValueError(f"clone_index {clone_index} outside [0, {params.ns})")
    pitch_rng, timbre_rng, _, _ = _streams(params, clone_index)
    if params.std > 0:
        offsets = pitch_offsets(feats.n_frames, feats.hop_seconds, params.std, pitch_rng)
        feats = vocoder.transpose_f0(feats, offsets)
    if params.timbre_variation and params.timbre_scale > 0:
        scale = 1.0 + params.timbre_scale * timbre_rng.uniform(-1.0, 1.0)
        feats = vocoder.warp_envelope(feats, scale)
    return feats


def make_clone(feats: vocoder.VocoderFeatures, clip: AudioClip, params: CloneParams,
               clone_index: int, segments=None) -> AudioClip:
    """Render one voice clone of ``clip``.

    The perturbed features from :func:`clone_features` are resynthesized
    and then each voiced segment is shifted in time. Every random draw
    comes from substreams of ``(params.seed, clone_index)``.
    """
    feats = clone_features(feats, params, clone_index)
    _, _, timing_rng, noise_seed = _streams(params, clone_index)

    voice = vocoder.synthesize(feats, seed=noise_seed).samples
    voice = np.pad(voice, (0, max(len(clip) - voice.size, 0)))[: len(clip)]

    if params.ts > 0:
        if segments is None:
            segments = segment_voiced_regions(clip)
        shifts = np.round(timing_rng.normal(0.0, params.ts, len(segments)) * clip.sample_rate)
        voice = shift_segments(voice, segments, shifts, clip.sample_rate)
    return AudioClip(voice, clip.sample_rate)


def analyze_solo(clip: AudioClip, cfg: TrackerConfig | None = None) -> vocoder.VocoderFeatures:
    """Track F0 and run vocoder analysis on a solo recording."""
    f0 = track_f0(clip, cfg)
    return vocoder.analyze(clip, vocoder.f0_for_vocoder(f0, len(clip), clip.sample_rate))


def render_clones(clip: AudioClip, params: CloneParams,
                  cfg: TrackerConfig | None = None) -> list[AudioClip]:
    feats = analyze_solo(clip, cfg)
    segments = segment_voiced_regions(clip) if params.ts > 0 else None
    return [make_clone(feats, clip, params, i, segments) for i in range(params.ns)]


def solo_to_unison(clip: AudioClip, params: CloneParams,
                   cfg: TrackerConfig | None = None) -> AudioClip:
    """Mix ``params.ns`` clones of a solo voice into a normalized unison."""
    return mix_and_normalize(render_clones(clip, params, cfg))


def unison_prototype(clip: AudioClip, cfg: TrackerConfig | None = None,
                     seed: int = 0) -> tuple[AudioClip, F0Contour]:
    """Single-voice prototype of a unison mixture and the F0 it was built on.

    The F0 is tracked on the mixture itself; envelope and aperiodicity are
    analysed from the mixture with that F0 and resynthesized as one voice.
    """
    f0 = track_f0(clip, cfg)
    feats = vocoder.analyze(clip, vocoder.f0_for_vocoder(f0, len(clip), clip.sample_rate))
    voice = vocoder.synthesize(feats, seed=seed).samples
    voice = np.pad(voice, (0, max(len(clip) - voice.size, 0)))[: len(clip)]
    return AudioClip(voice, clip.sample_rate), f0


def unison_to_solo(clip: AudioClip, cfg: TrackerConfig | None = None, seed: int = 0) -> AudioClip:
    return unison_prototype(clip, cfg, seed)[0]
