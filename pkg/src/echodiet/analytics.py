"""Episode-level analytics over per-second label timelines.

A recording is cut into fixed 4.5 minute segments. For each segment we
decide whether it is an eating episode, count confirmed intakes and total
the chewing seconds, then compare predictions with ground truth.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import labels as L
from .dataset import FrameTimeline, round_half_up
from .metrics import mae

INTAKE = "food_intake"
CHEW = "chewing"


@dataclass(frozen=True)
class SegmentConfig:
    segment_len_s: int = 270
    majority_fraction: float = 0.5
    chew_confirm_count: int = 2
    chew_confirm_horizon_s: int = 3

    def __post_init__(self):
        if self.segment_len_s <= 0:
            raise ValueError("segment length must be positive")

    @property
    def intake_threshold(self) -> int:
        """Intakes that make a segment an eating episode: (t_w + 20) / 5, t_w in minutes."""
        return round_half_up((self.segment_len_s / 60 + 20) / 5)


def to_frame_timeline(preds, window_s: int = 2, hop_s: int = 1) -> FrameTimeline:
    """Resolve overlapping window predictions to one label per second.

    Each second takes the label of the most confident window covering it;
    on equal confidence the earlier window wins.
    """
    preds = list(preds)
    if not preds:
        return FrameTimeline([])
    n_seconds = int(round(max(p.start_time_s for p in preds) + window_s))
    best_conf = np.full(n_seconds, -np.inf)
    best = [None] * n_seconds
    for p in preds:
        conf = float(p.probs[L.to_index(p.label)])
        s0 = int(round(p.start_time_s))
        for s in range(s0, min(s0 + window_s, n_seconds)):
            if conf > best_conf[s]:
                best_conf[s] = conf
                best[s] = p.label
    # Gaps only arise when hop > window; inherit the previous label.
    for s in range(n_seconds):
        if best[s] is None:
            best[s] = best[s - 1] if s else "null"
    return FrameTimeline(best)


def segment(timeline, cfg: SegmentConfig | None = None) -> list[list[str]]:
    cfg = cfg or SegmentConfig()
    labels = list(timeline)
    n = len(labels) // cfg.segment_len_s
    return [labels[i * cfg.segment_len_s:(i + 1) * cfg.segment_len_s] for i in range(n)]


def count_intakes(slice_, cfg: SegmentConfig | None = None) -> int:
    """Intake seconds followed by enough chewing soon after.

    Every ``food_intake`` second whose next ``chew_confirm_horizon_s``
    seconds hold at least ``chew_confirm_count`` chewing seconds counts once.
    """
    cfg = cfg or SegmentConfig()
    labels = [L.to_name(x) for x in slice_]
    count = 0
    for i, lab in enumerate(labels):
        if lab != INTAKE:
            continue
        horizon = labels[i + 1:i + 1 + cfg.chew_confirm_horizon_s]
        if sum(x == CHEW for x in horizon) >= cfg.chew_confirm_count:
            count += 1
    return count


def detect_eating_episode(slice_, cfg: SegmentConfig | None = None, mode: str = "predicted") -> bool:
    cfg = cfg or SegmentConfig()
    labels = [L.to_name(x) for x in slice_]
    if not labels:
        raise ValueError("empty segment")
    if mode == "predicted":
        eating = sum(x in (INTAKE, CHEW) for x in labels)
        return eating >= cfg.majority_fraction * len(labels)
    if mode == "truth":
        return count_intakes(labels, cfg) >= cfg.intake_threshold
    raise ValueError(f"unknown mode {mode!r}")


def chewing_seconds(slice_) -> int:
    return sum(L.to_name(x) == CHEW for x in slice_)


@dataclass
class SegmentResult:
    index: int
    is_eating_pred: bool
    is_eating_truth: bool
    intake_count_pred: int
    intake_count_truth: int
    chew_seconds_pred: int
    chew_seconds_truth: int


@dataclass
class EpisodeReport:
    segments: list = field(default_factory=list)
    fnr: float | None = None
    fpr: float | None = None
    mae_intakes_eating: float | None = None
    mae_intakes_non_eating: float | None = None
    mae_chew_eating: float | None = None
    mae_chew_non_eating: float | None = None
    n_eating: int = 0
    n_non_eating: int = 0

    def to_dict(self):
        d = asdict(self)
        d["segments"] = [asdict(s) for s in self.segments]
        return d


def build_report(pred, truth, cfg: SegmentConfig | None = None) -> EpisodeReport:
    """Per-segment outcomes and aggregate episode metrics.

    Aggregates whose denominator is empty (e.g. FNR with no true eating
    segment) are ``None``.
    """
    cfg = cfg or SegmentConfig()
    pred, truth = list(pred), list(truth)
    if len(pred) != len(truth):
        raise ValueError(f"timeline lengths differ: {len(pred)} vs {len(truth)}")
    rows = []
    for i, (ps, ts) in enumerate(zip(segment(pred, cfg), segment(truth, cfg))):
        rows.append(SegmentResult(
            index=i,
            is_eating_pred=detect_eating_episode(ps, cfg, "predicted"),
            is_eating_truth=detect_eating_episode(ts, cfg, "truth"),
            intake_count_pred=count_intakes(ps, cfg),
            intake_count_truth=count_intakes(ts, cfg),
            chew_seconds_pred=chewing_seconds(ps),
            chew_seconds_truth=chewing_seconds(ts),
        ))
    eat = [r for r in rows if r.is_eating_truth]
    rest = [r for r in rows if not r.is_eating_truth]

    def _mae(group, a, b):
        if not group:
            return None
        return mae([getattr(r, a) for r in group], [getattr(r, b) for r in group])

    return EpisodeReport(
        segments=rows,
        fnr=sum(not r.is_eating_pred for r in eat) / len(eat) if eat else None,
        fpr=sum(r.is_eating_pred for r in rest) / len(rest) if rest else None,
        mae_intakes_eating=_mae(eat, "intake_count_truth", "intake_count_pred"),
        mae_intakes_non_eating=_mae(rest, "intake_count_truth", "intake_count_pred"),
        mae_chew_eating=_mae(eat, "chew_seconds_truth", "chew_seconds_pred"),
        mae_chew_non_eating=_mae(rest, "chew_seconds_truth", "chew_seconds_pred"),
        n_eating=len(eat),
        n_non_eating=len(rest),
    )
