"""WAV input/output and mixing utilities.

Every signal path in the package passes audio around as an :class:`AudioClip`:
a mono float64 buffer in [-1, 1] plus an integer sample rate.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io.wavfile

#: Peak level used whenever a signal is normalized (about -1 dBFS).
NORMALIZE_PEAK = 0.89


class AudioError(Exception):
    """Base class for audio I/O failures."""


class UnreadableFileError(AudioError):
    pass


class UnsupportedCodecError(AudioError):
    pass


class EmptyAudioError(AudioError):
    pass


class SampleRateMismatchError(AudioError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio buffer.

    Parameters
    ----------
    samples : np.ndarray
        1-d float array, values in [-1, 1].
    sample_rate : int
        Sampling rate in Hz.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be 1-d")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"invalid sample rate {self.sample_rate!r}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.samples))) if self.samples.size else 0.0


def load_wav(path) -> AudioClip:
    """Read a PCM16 or float32 WAV file into a mono clip.

    Multi-channel audio is averaged down to one channel. Integer PCM is
    scaled by 1/32768.

    Raises
    ------
    UnreadableFileError
        The file is missing or is not a RIFF/WAVE file.
    UnsupportedCodecError
        Any encoding other than 16-bit PCM or 32-bit IEEE float.
    EmptyAudioError
        The file holds no samples.
    """
    path = Path(path)
    if not path.is_file():
        raise UnreadableFileError(f"no such file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] not in (b"RIFF", b"RIFX", b"RF64") or head[8:] != b"WAVE":
        raise UnreadableFileError(f"{path}: not a RIFF/WAVE file")
    try:
        rate, data = scipy.io.wavfile.read(path)
    except ValueError as exc:
        msg = str(exc)
        # the header is valid, so scipy is rejecting the encoding (mu-law,
        # a-law, odd bit depths) unless the chunk layout itself is broken
        if "chunk" in msg.lower() or "header" in msg.lower():
            raise UnreadableFileError(f"{path}: {msg}") from exc
        raise UnsupportedCodecError(f"{path}: {msg}") from exc
    except (OSError, EOFError) as exc:
        raise UnreadableFileError(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise UnsupportedCodecError(f"{path}: unsupported sample type {data.dtype}")

    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.size == 0:
        raise EmptyAudioError(f"{path}: zero-length audio")
    return AudioClip(np.clip(data, -1.0, 1.0), rate)


def save_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as a 16-bit PCM mono WAV file."""
    if len(clip) == 0:
        raise EmptyAudioError("refusing to write an empty clip")
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype(np.int16)
    try:
        scipy.io.wavfile.write(Path(path), clip.sample_rate, pcm)
    except OSError as exc:
        raise AudioError(f"cannot write {path}: {exc}") from exc


def normalize(clip: AudioClip, peak: float = NORMALIZE_PEAK) -> AudioClip:
    """Scale to the given peak; silent clips are returned unchanged."""
    current = clip.peak
    if current == 0.0:
        return clip
    return AudioClip(clip.samples * (peak / current), clip.sample_rate)


def mix_and_normalize(clips) -> AudioClip:
    """Sum clips sample-wise and peak-normalize the result to 0.89.

    Shorter clips are zero-padded to the longest one. The sum is taken in
    a fixed (sorted) order so the output does not depend on the order of
    ``clips`` down to the last bit.

    Raises
    ------
    ValueError
        ``clips`` is empty.
    SampleRateMismatchError
        The clips do not share one sample rate.
    """
    clips = list(clips)
    if not clips:
        raise ValueError("mix_and_normalize needs at least one clip")
    rates = {c.sample_rate for c in clips}
    if len(rates) != 1:
        raise SampleRateMismatchError(f"mixed sample rates: {sorted(rates)}")
    length = max(len(c) for c in clips)
    stack = np.zeros((len(clips), length))
    for row, clip in zip(stack, clips):
        row[: len(clip)] = clip.samples
    # sorting each column makes float summation independent of input order
    total = np.sort(stack, axis=0).sum(axis=0)
    return normalize(AudioClip(total, rates.pop()))


def frame_starts(n_samples: int, hop: int) -> np.ndarray:
    """Sample index of each hop-spaced frame centre, ``0, hop, 2*hop, ...``."""
    return np.arange(n_samples // hop + 1) * hop


def frame_rms(x: np.ndarray, frame_length: int) -> np.ndarray:
    """RMS of consecutive non-overlapping frames (last partial frame kept)."""
    n_frames = int(np.ceil(x.size / frame_length))
    padded = np.zeros(n_frames * frame_length)
    padded[: x.size] = x
    return np.sqrt(np.mean(padded.reshape(n_frames, frame_length) ** 2, axis=1))
