"""Unison statistics: inter-singer pitch deviation and transition-region timing."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .audio_io import AudioClip
from .contour import F0Contour, UnisonGroup, mean_contour, resample_contour, voiced_cents
from .metrics import DEFAULT_TOLERANCE_CENTS, MetricsReport, evaluate_melody
from .pitch import TrackerConfig, track_f0


@dataclass(frozen=True)
class DeviationStats:
    """Per-frame mean absolute pairwise cents difference between singers.

    ``empty`` is set when no frame qualified (or fewer than two singers
    were given); the mean and std are then reported as 0.
    """

    section: str
    mean_cents: float
    std_cents: float
    per_frame_deviations: np.ndarray = field(repr=False)
    note: str = ""

    @property
    def empty(self) -> bool:
        return self.per_frame_deviations.size == 0

    @property
    def n_frames(self) -> int:
        return int(self.per_frame_deviations.size)

    def to_dict(self) -> dict:
        out = {"mean": self.mean_cents, "std": self.std_cents, "frames": self.n_frames}
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class TransitionStats:
    section: str
    region_lengths: np.ndarray = field(repr=False)
    mean_seconds: float = 0.0
    std_seconds: float = 0.0

    @property
    def count(self) -> int:
        return int(self.region_lengths.size)

    def to_dict(self) -> dict:
        return {"mean_s": self.mean_seconds, "std_s": self.std_seconds, "count": self.count}


def _deviation_from_frames(section: str, per_frame: np.ndarray, note: str = "") -> DeviationStats:
    per_frame = np.asarray(per_frame, dtype=np.float64)
    if per_frame.size == 0:
        return DeviationStats(section, 0.0, 0.0, per_frame, note or "no qualifying frames")
    return DeviationStats(section, float(per_frame.mean()), float(per_frame.std()), per_frame, note)


def inter_singer_deviation(group: UnisonGroup, require_all_voiced: bool = True) -> DeviationStats:
    """Mean over singer pairs of the absolute cents difference, frame by frame.

    Parameters
    ----------
    group : UnisonGroup
    require_all_voiced : bool
        If True (default) only frames where every singer is voiced count,
        so each frame averages all ``n * (n - 1) / 2`` pairs. If False a
        frame averages the pairs that are both voiced there, and frames
        without such a pair are skipped.
    """
    if group.n_singers < 2:
        return _deviation_from_frames(group.section, np.zeros(0), "n<2: skipped")
    cents = np.vstack([voiced_cents(c.values) for c in group.contours])
    pairs = list(combinations(range(group.n_singers), 2))
    diffs = np.abs(np.array([cents[i] - cents[j] for i, j in pairs]))
    if require_all_voiced:
        keep = np.all(np.isfinite(cents), axis=0)
        per_frame = diffs[:, keep].mean(axis=0)
    else:
        valid = np.isfinite(diffs)
        count = valid.sum(axis=0)
        keep = count > 0
        per_frame = np.where(valid, diffs, 0.0).sum(axis=0)[keep] / count[keep]
    return _deviation_from_frames(group.section, per_frame)


def pool_deviations(stats) -> DeviationStats:
    """Pool several songs' per-frame deviations with equal per-frame weight."""
    stats = list(stats)
    if not stats:
        raise ValueError("nothing to pool")
    frames = np.concatenate([s.per_frame_deviations for s in stats])
    notes = {s.note for s in stats}
    # keep an explanation such as "n<2: skipped" when it applies to every input
    note = notes.pop() if frames.size == 0 and len(notes) == 1 else ""
    return _deviation_from_frames(stats[0].section, frames, note)


def _runs(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    return np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)


def transition_regions(group: UnisonGroup) -> TransitionStats:
    """Lengths of maximal runs where some, but not all, singers are voiced."""
    voiced = group.matrix() > 0
    mixed = voiced.any(axis=0) & ~voiced.all(axis=0)
    starts, ends = _runs(mixed)
    lengths = (ends - starts) * group.hop_seconds
    if lengths.size == 0:
        return TransitionStats(group.section, lengths)
    return TransitionStats(group.section, lengths, float(lengths.mean()), float(lengths.std()))


def pool_transitions(stats) -> TransitionStats:
    stats = list(stats)
    if not stats:
        raise ValueError("nothing to pool")
    lengths = np.concatenate([s.region_lengths for s in stats])
    if lengths.size == 0:
        return TransitionStats(stats[0].section, lengths)
    return TransitionStats(stats[0].section, lengths, float(lengths.mean()), float(lengths.std()))


@dataclass(frozen=True)
class UnisonComparison:
    """Metrics of the unison F0 estimate against each singer and the mean."""

    section: str
    individual: tuple
    mean: MetricsReport
    estimate: F0Contour = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "section": self.section,
            "individual": [r.to_dict() for r in self.individual],
            "mean": self.mean.to_dict(),
        }


def compare_unison_f0(group: UnisonGroup, unison_clip: AudioClip,
                      cfg: TrackerConfig | None = None,
                      tolerance: float = DEFAULT_TOLERANCE_CENTS) -> UnisonComparison:
    """Track the unison mixture and score it against every singer and the mean.

    Annotations are moved onto the tracker grid; the shorter side is padded
    with unvoiced frames so both cover the same span.
    """
    cfg = cfg or TrackerConfig()
    estimate = track_f0(unison_clip, cfg)
    refs = [resample_contour(c, cfg.hop_seconds) for c in group.contours]
    n = max([len(estimate)] + [len(r) for r in refs])
    estimate = estimate.with_length(n)
    aligned = UnisonGroup(group.section, tuple(r.with_length(n) for r in refs))
    individual = tuple(evaluate_melody(estimate, r, tolerance) for r in aligned.contours)
    mean = evaluate_melody(estimate, mean_contour(aligned), tolerance)
    return UnisonComparison(group.section, individual, mean, estimate)


def write_deviation_csv(stats: DeviationStats, path) -> None:
    """One row per qualifying frame: ``section,frame_index,deviation_cents``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["section", "frame_index", "deviation_cents"])
        for i, value in enumerate(stats.per_frame_deviations):
            writer.writerow([stats.section, i, f"{value:.6f}"])
