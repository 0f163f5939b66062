"""Epoch scoring, any-overlap event scoring and DET sweeps.

Epoch ``k`` spans ``[k, k + 1)`` seconds and takes the label of whichever
event covers its midpoint ``k + 0.5``; uncovered time counts as
background. False alarms per 24 hours count maximal runs of consecutive
false-positive epochs, so one long false detection is one false alarm.
The per-epoch false-positive rate is reported alongside as
``fp_epochs_per_24h``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

SEIZ, BCKG = "seiz", "bckg"
SECONDS_PER_DAY = 86400.0


@dataclass(frozen=True)
class Event:
    start: float
    stop: float
    label: str


@dataclass
class EventList:
    events: list[Event]
    total_duration: float

    def __post_init__(self):
        self.events = [e if isinstance(e, Event) else Event(float(e[0]), float(e[1]), str(e[2])) for e in self.events]
        prev_stop = 0.0
        for e in self.events:
            if e.label not in (SEIZ, BCKG):
                raise ValueError(f"event label must be {SEIZ!r} or {BCKG!r}, got {e.label!r}")
            if not e.start < e.stop:
                raise ValueError(f"event [{e.start}, {e.stop}) is empty or reversed")
            if e.start < prev_stop - 1e-9:
                raise ValueError(f"event starting at {e.start} overlaps or precedes the previous event")
            prev_stop = e.stop
        if self.events and (self.events[0].start < 0 or self.events[-1].stop > self.total_duration + 1e-9):
            raise ValueError(f"events must lie within [0, {self.total_duration}]")

    @property
    def n_epochs(self) -> int:
        return int(math.floor(self.total_duration + 1e-9))

    def seizures(self) -> list[Event]:
        return [e for e in self.events if e.label == SEIZ]

    def epoch_labels(self) -> np.ndarray:
        """Boolean seizure flag for each 1 s epoch, decided at the epoch midpoint."""
        n = self.n_epochs
        out = np.zeros(n, dtype=bool)
        for e in self.seizures():
            # midpoints k + 0.5 in [start, stop)
            lo = max(0, math.ceil(e.start - 0.5))
            hi = min(n, math.ceil(e.stop - 0.5))
            out[lo:hi] = True
        return out

    def label_at(self, t: float) -> str | None:
        for e in self.events:
            if e.start <= t < e.stop:
                return e.label
        return None


@dataclass(frozen=True)
class ScoreReport:
    tp: int
    tn: int
    fp: int
    fn: int
    fa_events: int
    duration: float

    @property
    def sensitivity(self) -> float | None:
        """Percent; ``None`` when the reference has no seizure epochs."""
        pos = self.tp + self.fn
        return 100.0 * self.tp / pos if pos else None

    @property
    def specificity(self) -> float | None:
        neg = self.tn + self.fp
        return 100.0 * self.tn / neg if neg else None

    @property
    def fa_per_24h(self) -> float:
        return self.fa_events * SECONDS_PER_DAY / self.duration if self.duration > 0 else 0.0

    @property
    def fp_epochs_per_24h(self) -> float:
        return self.fp * SECONDS_PER_DAY / self.duration if self.duration > 0 else 0.0

    @property
    def n_epochs(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _count_runs(mask: np.ndarray) -> int:
    if mask.size == 0:
        return 0
    return int(mask[0]) + int(np.count_nonzero(mask[1:] & ~mask[:-1]))


def score_labels(ref: np.ndarray, hyp: np.ndarray, duration: float) -> ScoreReport:
    """Score two boolean per-epoch seizure vectors of equal length."""
    ref = np.asarray(ref, dtype=bool)
    hyp = np.asarray(hyp, dtype=bool)
    if ref.shape != hyp.shape:
        raise ValueError(f"epoch count mismatch: {ref.shape} vs {hyp.shape}")
    fp_mask = hyp & ~ref
    return ScoreReport(
        tp=int(np.count_nonzero(ref & hyp)),
        tn=int(np.count_nonzero(~ref & ~hyp)),
        fp=int(np.count_nonzero(fp_mask)),
        fn=int(np.count_nonzero(ref & ~hyp)),
        fa_events=_count_runs(fp_mask),
        duration=float(duration),
    )


def _check_durations(ref: EventList, hyp: EventList) -> None:
    if abs(ref.total_duration - hyp.total_duration) > 1e-6:
        raise ValueError(f"duration mismatch: reference {ref.total_duration} s, hypothesis {hyp.total_duration} s")


def score_epochs(ref: EventList, hyp: EventList) -> ScoreReport:
    _check_durations(ref, hyp)
    return score_labels(ref.epoch_labels(), hyp.epoch_labels(), ref.total_duration)


@dataclass(frozen=True)
class OverlapScore:
    hits: int
    misses: int
    false_alarms: int


def overlap_score(ref: EventList, hyp: EventList) -> OverlapScore:
    """Any-overlap event scoring over seizure events.

    A reference seizure is a hit if some hypothesis seizure overlaps it by a
    positive amount; a hypothesis seizure overlapping no reference seizure is
    a false alarm.
    """
    _check_durations(ref, hyp)
    rs, hs = ref.seizures(), hyp.seizures()
    h_start = np.array([e.start for e in hs])
    h_stop = np.array([e.stop for e in hs])
    r_start = np.array([e.start for e in rs])
    r_stop = np.array([e.stop for e in rs])

    def n_overlapping(starts, stops, lo, hi):
        # both lists are sorted and disjoint, so stops are sorted too
        first = np.searchsorted(stops, lo, side="right")
        last = np.searchsorted(starts, hi, side="left")
        return max(0, last - first)

    hits = sum(1 for e in rs if n_overlapping(h_start, h_stop, e.start, e.stop) > 0)
    fas = sum(1 for e in hs if n_overlapping(r_start, r_stop, e.start, e.stop) == 0)
    return OverlapScore(hits=hits, misses=len(rs) - hits, false_alarms=fas)


def labels_to_events(labels: np.ndarray, total_duration: float | None = None) -> EventList:
    """Merge per-epoch seizure flags into alternating seiz/bckg events.

    The last event is stretched to ``total_duration`` when that exceeds the
    epoch count.
    """
    labels = np.asarray(labels, dtype=bool)
    n = labels.size
    total = float(n if total_duration is None else total_duration)
    events = []
    start = 0
    for k in range(1, n + 1):
        if k == n or labels[k] != labels[start]:
            events.append(Event(float(start), float(k), SEIZ if labels[start] else BCKG))
            start = k
    if events and total > events[-1].stop:
        last = events[-1]
        events[-1] = Event(last.start, total, last.label)
    return EventList(events, total)


def posteriors_to_events(post, threshold: float, total_duration: float | None = None) -> EventList:
    """Epoch is seizure iff its posterior is at least ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    post = np.asarray(post, dtype=np.float64)
    return labels_to_events(post >= threshold, total_duration)


@dataclass(frozen=True)
class DetPoint:
    threshold: float
    fa_per_24h: float
    miss_pct: float
    report: ScoreReport


def default_thresholds(post, n: int = 101) -> np.ndarray:
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, n), np.clip(np.asarray(post, dtype=np.float64), 0, 1)]))


def det_curve(post, ref: EventList, thresholds=None) -> list[DetPoint]:
    """One epoch score per threshold, ascending by threshold."""
    post = np.asarray(post, dtype=np.float64)
    if post.size != ref.n_epochs:
        raise ValueError(f"{post.size} posteriors for a {ref.n_epochs}-epoch reference")
    thresholds = default_thresholds(post) if thresholds is None else np.unique(np.asarray(thresholds, dtype=np.float64))
    if thresholds.size < 2:
        raise ValueError("a DET sweep needs at least two distinct thresholds")
    ref_lab = ref.epoch_labels()
    points = []
    for thr in thresholds:
        rep = score_labels(ref_lab, post >= thr, ref.total_duration)
        sens = rep.sensitivity
        points.append(DetPoint(float(thr), rep.fa_per_24h, float("nan") if sens is None else 100.0 - sens, rep))
    return points


def window_posteriors_to_epochs(window_post, window_starts, window_s: float, n_epochs: int) -> np.ndarray:
    """Spread per-window posteriors onto 1 s epochs.

    Each window is anchored at the epoch containing its midpoint; every
    epoch takes the posterior of the nearest anchor (earlier one on ties).
    """
    window_post = np.asarray(window_post, dtype=np.float64)
    anchors = np.floor(np.asarray(window_starts, dtype=np.float64) + window_s / 2.0)
    epochs = np.arange(n_epochs, dtype=np.float64)
    idx = np.searchsorted(anchors, epochs, side="left")
    idx = np.clip(idx, 0, anchors.size - 1)
    prev = np.clip(idx - 1, 0, anchors.size - 1)
    use_prev = np.abs(epochs - anchors[prev]) <= np.abs(anchors[idx] - epochs)
    return np.where(use_prev, window_post[prev], window_post[idx])


# --------------------------------------------------------------- reporting

def _pct(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.2f}%"


def format_report(rows: list[tuple[str, ScoreReport]]) -> str:
    """Aligned table with Sensitivity, Specificity and FA/24 Hrs columns."""
    header = ("System", "Sensitivity", "Specificity", "FA/24 Hrs.")
    body = [(name, _pct(r.sensitivity), _pct(r.specificity), f"{r.fa_per_24h:.0f}") for name, r in rows]
    widths = [max(len(row[i]) for row in [header] + body) for i in range(4)]
    lines = ["  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i]) for i, cell in enumerate(row))
             for row in [header] + body]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def format_details(r: ScoreReport, overlap: OverlapScore | None = None) -> str:
    lines = [
        f"epochs: {r.n_epochs}  TP={r.tp} TN={r.tn} FP={r.fp} FN={r.fn}",
        f"false alarm runs: {r.fa_events}  ({r.fa_per_24h:.4f} per 24 h)",
        f"false positive epochs per 24 h: {r.fp_epochs_per_24h:.4f}",
    ]
    if overlap is not None:
        lines.append(
            f"overlap scoring: hits={overlap.hits} misses={overlap.misses} false_alarms={overlap.false_alarms}"
        )
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- file I/O

def read_annotations(path, total_duration: float | None = None) -> EventList:
    """CSV ``start_s,stop_s,label``; ``#`` lines and a header row are skipped.

    Without ``total_duration`` the record is assumed to end at the last stop.
    """
    events = []
    for lineno, row in enumerate(csv.reader(io.StringIO(Path(path).read_text())), start=1):
        if not row or row[0].lstrip().startswith("#"):
            continue
        if row[0].strip() == "start_s":
            continue
        if len(row) != 3:
            raise FormatError(f"{path}:{lineno}: expected start_s,stop_s,label")
        try:
            events.append(Event(float(row[0]), float(row[1]), row[2].strip()))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if total_duration is None:
        total_duration = max((e.stop for e in events), default=0.0)
    try:
        return EventList(events, float(total_duration))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def annotations_csv(ev: EventList, header_lines: list[str] = ()) -> str:
    lines = [f"# {h}" for h in header_lines] + ["start_s,stop_s,label"]
    lines += [f"{float(e.start)!r},{float(e.stop)!r},{e.label}" for e in ev.events]
    return "\n".join(lines) + "\n"


def det_csv(points: list[DetPoint], header_lines: list[str] = ()) -> str:
    lines = [f"# {h}" for h in header_lines] + ["threshold,fa_per_24h,miss_pct"]
    lines += [f"{float(p.threshold)!r},{float(p.fa_per_24h)!r},{float(p.miss_pct)!r}" for p in points]
    return "\n".join(lines) + "\n"
