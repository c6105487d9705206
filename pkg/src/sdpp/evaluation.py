"""Comparison of generated lane maps against ground-truth lane polylines."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .generation import EnhancedMap, ValidityReport
from .geo import LocalFrame, chamfer_symmetric

DEFAULT_THRESHOLD = 5.0
DEFAULT_STEP = 1.0
MATCHING_MODE = "many-to-one"

TABLE_COLUMNS = ("% of Valid Maps", "Chamfer_avg (m)", "Chamfer_min (m)", "Recall")


class EvaluationError(ValueError):
    pass


@dataclass
class GroundTruthMap:
    entries: dict[int, list[tuple[tuple[float, float], ...]]]

    def __post_init__(self):
        for wid, lanes in self.entries.items():
            if wid <= 0:
                raise ValueError(f"ground-truth way id {wid} must be positive")
            for lane in lanes:
                if len(lane) < 2:
                    raise ValueError(f"way {wid}: ground-truth lane with fewer than 2 points")

    @property
    def lane_count(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def points(self):
        for lanes in self.entries.values():
            for lane in lanes:
                yield from lane

    def to_json(self) -> str:
        return json.dumps(
            {str(wid): [[list(p) for p in lane] for lane in lanes] for wid, lanes in self.entries.items()},
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> GroundTruthMap:
        raw = json.loads(text)
        return cls(
            {
                int(wid): [tuple((float(a), float(b)) for a, b in lane) for lane in lanes]
                for wid, lanes in raw.items()
            }
        )


def ground_truth_from_map(m: EnhancedMap) -> GroundTruthMap:
    """Use a map's own drive lanes as ground truth (self-evaluation)."""
    return GroundTruthMap(
        {r.segment.way_id: [ln.polyline for ln in r.drive_lanes()] for r in m.segments}
    )


@dataclass(frozen=True)
class LaneMatch:
    way_id: int
    gt_lane_index: int
    pred_lane_index: int | None
    chamfer: float | None
    correct: bool


@dataclass
class EvalReport:
    chamfer_avg: float | None
    chamfer_std: float | None
    chamfer_min: float | None
    recall: float
    valid_map_pct: float
    matches: list[LaneMatch]
    threshold: float
    step: float
    matching: str = MATCHING_MODE
    validity_failures: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


def match_lanes(
    pred: EnhancedMap,
    gt: GroundTruthMap,
    frame: LocalFrame,
    step: float = DEFAULT_STEP,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[LaneMatch]:
    """Pair each ground-truth lane with the closest predicted drive lane of the same way.

    Closeness is symmetric Chamfer distance after resampling at ``step``
    metres; ties go to the lower predicted lane index. A predicted lane may be
    chosen by several ground-truth lanes. Ways absent from the prediction
    yield unmatched entries.
    """
    by_way = pred.by_way()
    matches = []
    for wid, gt_lanes in gt.entries.items():
        res = by_way.get(wid)
        candidates = sorted(res.drive_lanes(), key=lambda ln: ln.lane_index) if res else []
        pred_xy = [(ln.lane_index, frame.to_xy(ln.polyline)) for ln in candidates]
        for gi, gt_lane in enumerate(gt_lanes):
            if not pred_xy:
                matches.append(LaneMatch(wid, gi, None, None, False))
                continue
            g = frame.to_xy(gt_lane)
            best_idx, best = None, math.inf
            for idx, p in pred_xy:
                c = chamfer_symmetric(g, p, step)
                if c < best:
                    best_idx, best = idx, c
            matches.append(LaneMatch(wid, gi, best_idx, best, best < threshold))
    return matches


def compute_metrics(
    matches: Sequence[LaneMatch],
    validity: ValidityReport,
    threshold: float = DEFAULT_THRESHOLD,
    step: float = DEFAULT_STEP,
) -> EvalReport:
    """Aggregate lane matches into the report scalars.

    Correctness is re-decided here with a strict ``chamfer < threshold``.
    Chamfer statistics use matched lanes only (population std); recall
    divides by every ground-truth lane, matched or not.
    """
    if not matches:
        raise EvaluationError("recall is undefined without ground-truth lanes")
    if not threshold > 0:
        raise EvaluationError("threshold must be positive")
    rescored = [
        replace(m, correct=m.pred_lane_index is not None and m.chamfer is not None and m.chamfer < threshold)
        for m in matches
    ]
    dists = np.array([m.chamfer for m in rescored if m.pred_lane_index is not None], dtype=float)
    if len(dists):
        avg, std, lo = float(dists.mean()), float(dists.std()), float(dists.min())
    else:
        avg = std = lo = None
    recall = sum(m.correct for m in rescored) / len(rescored)
    return EvalReport(
        chamfer_avg=avg,
        chamfer_std=std,
        chamfer_min=lo,
        recall=recall,
        valid_map_pct=validity.valid_pct,
        matches=rescored,
        threshold=threshold,
        step=step,
        validity_failures=list(validity.failures),
    )


def evaluate(
    pred: EnhancedMap,
    gt: GroundTruthMap,
    validity: ValidityReport,
    frame: LocalFrame | None = None,
    step: float = DEFAULT_STEP,
    threshold: float = DEFAULT_THRESHOLD,
) -> EvalReport:
    """Match and score in one call. The frame defaults to the ground-truth centroid."""
    if frame is None:
        frame = LocalFrame.centroid_of(gt.points())
    return compute_metrics(match_lanes(pred, gt, frame, step, threshold), validity, threshold, step)


def _fmt(x: float | None, digits: int = 2) -> str:
    return "n/a" if x is None else f"{x:.{digits}f}"


def format_table(reports: EvalReport | Sequence[EvalReport]) -> str:
    """Aligned plain-text table, one row per report, columns ``TABLE_COLUMNS``."""
    if isinstance(reports, EvalReport):
        reports = [reports]
    body = []
    for r in reports:
        avg = "n/a" if r.chamfer_avg is None else f"{r.chamfer_avg:.2f} ± {r.chamfer_std:.2f}"
        body.append((f"{r.valid_map_pct:.0f}", avg, _fmt(r.chamfer_min), _fmt(r.recall)))
    widths = [max(len(row[i]) for row in [TABLE_COLUMNS, *body]) for i in range(len(TABLE_COLUMNS))]

    def line(cells):
        return " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(TABLE_COLUMNS), sep, *(line(r) for r in body)]) + "\n"
