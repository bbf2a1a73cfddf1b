"""Peak extraction, classification and localization scoring on correlation
planes.

All distances are toroidal because the correlation is circulant: a peak at
row 0 and one at row ``side - 1`` are neighbours.
"""

from dataclasses import dataclass, field
import csv
import io
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ParameterError
from .filtering import CirculantOperator, make_pof

__all__ = [
    "DictionaryEntry",
    "Dictionary",
    "Detection",
    "DetectionReport",
    "build_dictionary",
    "toroidal_distance",
    "score_plane",
    "find_peaks",
    "classify_and_localize",
    "score_success",
    "report_to_csv",
]


@dataclass(frozen=True, eq=False)
class DictionaryEntry:
    label: str
    reference: np.ndarray
    pof: CirculantOperator
    reference_energy: float


@dataclass(eq=False)
class Dictionary:
    entries: list

    def __post_init__(self):
        labels = [e.label for e in self.entries]
        if len(set(labels)) != len(labels):
            raise ParameterError(f"dictionary labels must be unique, got {labels}")
        for e in self.entries:
            if not e.reference_energy > 0:
                raise ParameterError(f"reference {e.label!r} has zero energy")

    @property
    def labels(self):
        return [e.label for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, label):
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    @property
    def max_extent(self) -> int:
        """Largest target dimension in pixels."""
        return max(max(e.reference.shape) for e in self.entries)


def build_dictionary(references: dict, shape, zero_tol: float = 1e-12) -> Dictionary:
    """POF dictionary from ``{label: target image}``; targets are embedded
    top-left into ``shape``."""
    entries = []
    for label, ref in references.items():
        ref = np.asarray(ref, dtype=np.float64)
        entries.append(DictionaryEntry(label, ref, make_pof(ref, zero_tol, shape=shape),
                                       float(np.sum(np.abs(ref) ** 2))))
    return Dictionary(entries)


@dataclass(frozen=True)
class Detection:
    label: str
    row: int
    col: int
    score: float


@dataclass
class DetectionReport:
    detections: list
    ground_truth: Optional[list] = None
    success: Optional[bool] = None
    matched: list = field(default_factory=list)


def toroidal_distance(a, b, shape) -> float:
    """Euclidean distance between two (row, col) points on a torus."""
    d = []
    for u, v, size in zip(a, b, shape):
        delta = abs(u - v) % size
        d.append(min(delta, size - delta))
    return float(np.hypot(*d))


def score_plane(s, reference_energy: float) -> np.ndarray:
    """Normalized detection intensity ``|s|^2 / ||r||^2``."""
    if not reference_energy > 0:
        raise ParameterError("reference_energy must be positive")
    return np.abs(np.asarray(s)) ** 2 / reference_energy


def _disc_mask(shape, center, radius):
    rows = np.arange(shape[0])
    cols = np.arange(shape[1])
    dr = np.abs(rows - center[0]) % shape[0]
    dr = np.minimum(dr, shape[0] - dr)
    dc = np.abs(cols - center[1]) % shape[1]
    dc = np.minimum(dc, shape[1] - dc)
    return dr[:, None] ** 2 + dc[None, :] ** 2 <= radius * radius


def find_peaks(score, max_peaks: int = 1, exclusion_radius: float = 0.0,
               min_score_ratio: float = 0.0):
    """Greedy non-maximum suppression.

    Takes the global maximum (first in row-major order on ties), blanks a
    toroidal disc of ``exclusion_radius`` around it and repeats, until
    ``max_peaks`` peaks are found or the next maximum falls below
    ``min_score_ratio`` times the first one. Returns ``[(row, col, score)]``.
    """
    if max_peaks < 1:
        raise ParameterError("max_peaks must be >= 1")
    work = np.array(score, dtype=np.float64)
    peaks = []
    first = None
    while len(peaks) < max_peaks:
        flat = int(np.argmax(work))
        value = work.flat[flat]
        if not np.isfinite(value) or value == -np.inf:
            break
        if first is None:
            first = value
        elif value < min_score_ratio * first:
            break
        row, col = divmod(flat, work.shape[1])
        peaks.append((row, col, float(value)))
        work[_disc_mask(work.shape, (row, col), exclusion_radius)] = -np.inf
    return peaks


def classify_and_localize(planes: Sequence, dictionary: Dictionary,
                          expected_count: Optional[int] = 1,
                          exclusion_radius: Optional[float] = None,
                          min_score_ratio: float = 0.5) -> DetectionReport:
    """Merge per-reference score planes into labelled detections.

    ``planes`` is a sequence of ``(label, correlation_plane)`` with one plane
    per dictionary entry. Candidates from all labels are pooled and sorted by
    normalized score; a candidate is dropped when a stronger one (of any
    label) lies within ``exclusion_radius``. With ``expected_count=None`` the
    number of objects is unknown and every candidate scoring at least
    ``min_score_ratio`` of the best one is kept.
    """
    if len(dictionary) == 0:
        raise ParameterError("dictionary is empty")
    planes = list(planes)
    if sorted(label for label, _ in planes) != sorted(dictionary.labels):
        raise ParameterError("need exactly one correlation plane per dictionary entry")
    if exclusion_radius is None:
        exclusion_radius = float(dictionary.max_extent)
    if expected_count is not None and expected_count < 1:
        raise ParameterError("expected_count must be >= 1")
    per_label = expected_count if expected_count is not None else 64
    order = {label: i for i, label in enumerate(dictionary.labels)}

    candidates = []
    shape = None
    for label, plane in planes:
        score = score_plane(plane, dictionary[label].reference_energy)
        shape = score.shape
        ratio = min_score_ratio if expected_count is None else 0.0
        for row, col, value in find_peaks(score, per_label, exclusion_radius, ratio):
            candidates.append((value, label, row, col))
    candidates.sort(key=lambda c: (-c[0], order[c[1]], c[2], c[3]))

    kept = []
    for value, label, row, col in candidates:
        if any(toroidal_distance((row, col), (d.row, d.col), shape) <= exclusion_radius
               for d in kept):
            continue
        kept.append(Detection(label, row, col, value))
    if expected_count is not None:
        kept = kept[:expected_count]
    elif kept:
        best = kept[0].score
        kept = [d for d in kept if d.score >= min_score_ratio * best]
    return DetectionReport(kept)


def score_success(report: DetectionReport, truth, radius: float = 5.0, shape=None) -> bool:
    """True iff detections and ground truth match one-to-one with equal labels
    and toroidal distance at most ``radius``.

    ``truth`` is a list of ``(label, row, col)``. ``shape`` is the plane
    shape used for wrap-around (plain Euclidean distance when omitted).
    """
    truth = list(truth)
    dets = report.detections
    report.ground_truth = truth
    ok = len(dets) == len(truth) and len(truth) > 0
    matched = [False] * len(dets)
    if ok:
        cost = np.ones((len(dets), len(truth)))
        for i, d in enumerate(dets):
            for j, (label, row, col) in enumerate(truth):
                if d.label != label:
                    continue
                if shape is None:
                    dist = float(np.hypot(d.row - row, d.col - col))
                else:
                    dist = toroidal_distance((d.row, d.col), (row, col), shape)
                if dist <= radius:
                    cost[i, j] = 0.0
        rows, cols = linear_sum_assignment(cost)
        ok = bool(cost[rows, cols].sum() == 0)
        for i, j in zip(rows, cols):
            matched[i] = cost[i, j] == 0
    report.success = ok
    report.matched = matched
    return ok


def report_to_csv(report: DetectionReport) -> str:
    """One CSV row per detection: ``label,row,col,score,matched``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["label", "row", "col", "score", "matched"])
    matched = report.matched or [False] * len(report.detections)
    for d, hit in zip(report.detections, matched):
        writer.writerow([d.label, d.row, d.col, repr(d.score), str(bool(hit)).lower()])
    return buf.getvalue()
