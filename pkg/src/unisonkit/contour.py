"""F0 contours: cents conversion, grid alignment and the voicing-aware mean.

A contour is a uniform-hop series of F0 values in Hz where 0 marks an
unvoiced frame. Frame ``k`` sits at time ``k * hop_seconds``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

REFERENCE_HZ = 440.0
SECTIONS = ("S", "A", "T", "B")


def hz_to_cents(f):
    """Convert frequency in Hz to cents relative to 440 Hz.

    Accepts a scalar or an array. Every value must be strictly positive.
    """
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(~(f_arr > 0)):
        raise ValueError("hz_to_cents needs strictly positive frequencies")
    cents = 1200.0 * np.log2(f_arr / REFERENCE_HZ)
    return float(cents) if cents.ndim == 0 else cents


def cents_to_hz(c):
    """Inverse of :func:`hz_to_cents`: ``440 * 2 ** (c / 1200)``."""
    hz = REFERENCE_HZ * np.exp2(np.asarray(c, dtype=np.float64) / 1200.0)
    return float(hz) if hz.ndim == 0 else hz


def voiced_cents(values: np.ndarray) -> np.ndarray:
    """Cents for voiced frames, NaN for unvoiced ones."""
    values = np.asarray(values, dtype=np.float64)
    out = np.full(values.shape, np.nan)
    voiced = values > 0
    out[voiced] = 1200.0 * np.log2(values[voiced] / REFERENCE_HZ)
    return out


@dataclass(frozen=True, eq=False)
class F0Contour:
    hop_seconds: float
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not self.hop_seconds > 0:
            raise ValueError("hop_seconds must be positive")
        if np.any(~np.isfinite(values)) or np.any(values < 0) or np.any(values >= 20000):
            raise ValueError("contour values must be 0 (unvoiced) or in (0, 20000) Hz")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "hop_seconds", float(self.hop_seconds))

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.hop_seconds

    @property
    def voiced(self) -> np.ndarray:
        return self.values > 0

    @property
    def duration_seconds(self) -> float:
        return self.values.size * self.hop_seconds

    def cents(self) -> np.ndarray:
        return voiced_cents(self.values)

    def with_length(self, n_frames: int) -> "F0Contour":
        """Truncate or zero-pad (unvoiced) to exactly ``n_frames``."""
        out = np.zeros(n_frames)
        n = min(n_frames, self.values.size)
        out[:n] = self.values[:n]
        return F0Contour(self.hop_seconds, out)


@dataclass(frozen=True, eq=False)
class UnisonGroup:
    """Contours of the singers of one choir section on a shared grid."""

    section: str
    contours: tuple

    def __post_init__(self):
        contours = tuple(self.contours)
        if len(contours) < 1:
            raise ValueError("a unison group needs at least one contour")
        hops = {c.hop_seconds for c in contours}
        lengths = {len(c) for c in contours}
        if len(hops) != 1 or len(lengths) != 1:
            raise ValueError("all contours of a group must share hop and length")
        object.__setattr__(self, "contours", contours)

    @property
    def n_singers(self) -> int:
        return len(self.contours)

    @property
    def hop_seconds(self) -> float:
        return self.contours[0].hop_seconds

    def matrix(self) -> np.ndarray:
        """Singer-by-frame array of F0 values in Hz."""
        return np.vstack([c.values for c in self.contours])

    @classmethod
    def aligned(cls, section: str, contours, hop_seconds: float | None = None):
        """Resample contours to a common hop and pad them to equal length."""
        contours = list(contours)
        hop = hop_seconds or contours[0].hop_seconds
        contours = [resample_contour(c, hop) for c in contours]
        n = max(len(c) for c in contours)
        return cls(section, tuple(c.with_length(n) for c in contours))


def resample_contour(src: F0Contour, target_hop: float) -> F0Contour:
    """Move a contour onto a new hop grid.

    Voicing of each target frame is copied from the nearest source frame.
    Voiced frames whose two bracketing source frames are both voiced get
    the linear interpolation of those frames in cents; otherwise the
    nearest source value is used unchanged.
    """
    if not target_hop > 0:
        raise ValueError("target_hop must be positive")
    if np.isclose(target_hop, src.hop_seconds, rtol=0, atol=1e-12) or len(src) == 0:
        return F0Contour(target_hop, src.values.copy())

    values = src.values
    n_src = values.size
    last_time = (n_src - 1) * src.hop_seconds
    n_out = int(np.floor(last_time / target_hop + 1e-9)) + 1
    pos = np.arange(n_out) * target_hop / src.hop_seconds
    nearest = np.clip(np.floor(pos + 0.5).astype(int), 0, n_src - 1)
    lo = np.clip(np.floor(pos).astype(int), 0, n_src - 1)
    hi = np.clip(lo + 1, 0, n_src - 1)
    frac = pos - lo

    out = np.zeros(n_out)
    voiced = values[nearest] > 0
    out[voiced] = values[nearest][voiced]
    both = voiced & (values[lo] > 0) & (values[hi] > 0)
    if np.any(both):
        cents = voiced_cents(values)
        interp = (1.0 - frac[both]) * cents[lo[both]] + frac[both] * cents[hi[both]]
        out[both] = cents_to_hz(interp)
    return F0Contour(target_hop, out)


def mean_contour(group: UnisonGroup) -> F0Contour:
    """Frame-wise mean F0 over the voiced singers.

    A frame is unvoiced only if every singer is unvoiced there; otherwise
    the arithmetic mean (in Hz) of the non-zero values is taken.
    """
    m = group.matrix()
    voiced = m > 0
    count = voiced.sum(axis=0)
    total = np.where(voiced, m, 0.0).sum(axis=0)
    out = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return F0Contour(group.hop_seconds, out)


def read_contour_csv(path, hop_seconds: float | None = None) -> F0Contour:
    """Load a ``time_seconds,frequency_hz`` CSV (header optional).

    The hop is inferred from the median time step unless given. Rows are
    placed on the uniform grid by rounding their time stamps, so annotation
    files with slightly jittered times load cleanly.
    """
    times, freqs = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                t, f = float(row[0]), float(row[1])
            except ValueError:
                if not times:
                    continue  # header line
                raise
            times.append(t)
            freqs.append(max(f, 0.0))
    if not times:
        raise ValueError(f"{path}: no contour rows")
    times = np.asarray(times)
    freqs = np.asarray(freqs)
    if hop_seconds is None:
        if times.size < 2:
            raise ValueError(f"{path}: cannot infer hop from a single row")
        hop_seconds = float(np.median(np.diff(times)))
    idx = np.round(times / hop_seconds).astype(int)
    keep = idx >= 0
    out = np.zeros(idx[keep].max() + 1)
    out[idx[keep]] = freqs[keep]
    return F0Contour(hop_seconds, out)


def write_contour_csv(contour: F0Contour, path, header: bool = True) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(["time_seconds", "frequency_hz"])
        for t, f in zip(contour.times, contour.values):
            writer.writerow([f"{t:.6f}", f"{f:.6f}"])
