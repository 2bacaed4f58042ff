"""Frame-wise melody evaluation: RPA, OA, VR and VFA.

Unweighted frame counts on a shared grid. An estimate frame is voiced
when its F0 is positive; a pitch is correct when the estimate is voiced
and within ``tolerance`` cents of a voiced reference frame.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .contour import F0Contour, voiced_cents

DEFAULT_TOLERANCE_CENTS = 30.0


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    rpa: float
    oa: float
    vr: float
    vfa: float
    tolerance_cents: float = DEFAULT_TOLERANCE_CENTS

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def evaluate_melody(est: F0Contour, ref: F0Contour,
                    tolerance: float = DEFAULT_TOLERANCE_CENTS) -> MetricsReport:
    """Compare an estimated contour against a reference contour.

    Parameters
    ----------
    est, ref : F0Contour
        Contours on the same grid (same hop and frame count).
    tolerance : float
        Pitch tolerance in cents.

    Returns
    -------
    MetricsReport
        Ratios with a zero denominator are reported as 0.
    """
    if len(est) != len(ref) or not np.isclose(est.hop_seconds, ref.hop_seconds):
        raise GridMismatchError(
            f"grids differ: est {len(est)} frames @ {est.hop_seconds}s, "
            f"ref {len(ref)} frames @ {ref.hop_seconds}s")

    ref_v = ref.values > 0
    est_v = est.values > 0
    both = ref_v & est_v
    diff = np.abs(voiced_cents(est.values) - voiced_cents(ref.values))
    correct = both.copy()
    correct[both] = diff[both] <= tolerance

    n_ref_voiced = int(ref_v.sum())
    n_ref_unvoiced = ref_v.size - n_ref_voiced
    n_correct = int(correct.sum())
    n_true_unvoiced = int((~ref_v & ~est_v).sum())

    return MetricsReport(
        rpa=_ratio(n_correct, n_ref_voiced),
        oa=_ratio(n_correct + n_true_unvoiced, ref_v.size),
        vr=_ratio(int(both.sum()), n_ref_voiced),
        vfa=_ratio(int((~ref_v & est_v).sum()), n_ref_unvoiced),
        tolerance_cents=float(tolerance),
    )


def mean_report(reports) -> MetricsReport:
    """Average several reports metric-by-metric (for section summaries)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to average")
    return MetricsReport(
        rpa=float(np.mean([r.rpa for r in reports])),
        oa=float(np.mean([r.oa for r in reports])),
        vr=float(np.mean([r.vr for r in reports])),
        vfa=float(np.mean([r.vfa for r in reports])),
        tolerance_cents=reports[0].tolerance_cents,
    )
