"""Label quality metric: fraction of gt boxes labeled above IoU thresholds.

Predictions are matched to ground truth by simulator provenance (gt id plus
frame index), never by geometric assignment, so the numbers isolate
continuous localization quality from association mistakes.  Ground-truth
frames with no matching prediction count as failures at every threshold.
"""

from dataclasses import dataclass, field

from auto4d.geometry import box_iou_bev

THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class EvalTable:
    passed: dict  # threshold -> count of gt boxes at or above it
    n_total: int
    n_matched: int
    label: str = ""

    @classmethod
    def empty(cls, label: str = ""):
        return cls({t: 0 for t in THRESHOLDS}, 0, 0, label)

    def fraction(self, threshold: float) -> float:
        if self.n_total == 0:
            return 0.0
        return self.passed[threshold] / self.n_total

    def merge(self, other: "EvalTable") -> "EvalTable":
        passed = {t: self.passed[t] + other.passed[t] for t in THRESHOLDS}
        return EvalTable(
            passed,
            self.n_total + other.n_total,
            self.n_matched + other.n_matched,
            self.label or other.label,
        )

    def to_obj(self):
        return {
            "label": self.label,
            "n_total": self.n_total,
            "n_matched": self.n_matched,
            "fractions": {str(t): self.fraction(t) for t in THRESHOLDS},
            "passed": {str(t): self.passed[t] for t in THRESHOLDS},
        }


def _index_predictions(preds):
    """(gt_id, frame) -> best-scored prediction; None-provenance boxes skipped."""
    table = {}
    for tr in preds:
        for det in tr.detections:
            if det.gt_id is None:
                continue
            key = (det.gt_id, det.frame_idx)
            cur = table.get(key)
            if cur is None or det.score > cur.score:
                table[key] = det
    return table


def eval_labels(preds, gts, label: str = "") -> EvalTable:
    """Score predicted trajectories against gt trajectories of one scene."""
    index = _index_predictions(preds)
    passed = {t: 0 for t in THRESHOLDS}
    n_total = 0
    n_matched = 0
    for gt in gts:
        for det in gt.detections:
            n_total += 1
            pred = index.get((gt.id, det.frame_idx))
            if pred is None:
                continue
            n_matched += 1
            iou = box_iou_bev(pred.box, det.box)
            for t in THRESHOLDS:
                if iou >= t:
                    passed[t] += 1
    return EvalTable(passed, n_total, n_matched, label)


def breakdown_static_moving(preds, gts):
    """Two tables split by the gt trajectory's static flag."""
    static_gt = [t for t in gts if t.static_flag]
    moving_gt = [t for t in gts if not t.static_flag]
    return (
        eval_labels(preds, static_gt, label="static"),
        eval_labels(preds, moving_gt, label="moving"),
    )
