"""Dice scoring, per-organ reports and organ-stratified cross-validation folds."""

import csv
import io
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .core import ORGANS, DataError, SeededRng, check_mask


def dice(pred, truth):
    """2|P & T| / (|P| + |T|); two empty masks score 1."""
    pred = check_mask(pred)
    truth = check_mask(truth)
    if pred.shape != truth.shape:
        raise DataError(f"dice operands differ in shape: {pred.shape} vs {truth.shape}")
    p = int(pred.sum(dtype=np.int64))
    t = int(truth.sum(dtype=np.int64))
    if p + t == 0:
        return 1.0
    inter = int(np.logical_and(pred, truth).sum(dtype=np.int64))
    return 2.0 * inter / (p + t)


def mean_dice(pairs):
    scores = [dice(p, t) for p, t in pairs]
    if not scores:
        raise ValueError("mean_dice of an empty list")
    return float(np.mean(scores))


def organ_report(records):
    """``records``: iterable of ``(organ, dice)``. Returns rows
    ``(organ, n_samples, mean_dice)`` in canonical organ order, then
    ``("overall", n, mean)``; organs without samples are left out."""
    by_organ = defaultdict(list)
    all_scores = []
    for organ, score in records:
        by_organ[organ].append(score)
        all_scores.append(score)
    if not all_scores:
        raise ValueError("no records to report")
    order = [o for o in ORGANS if o in by_organ] + sorted(set(by_organ) - set(ORGANS))
    rows = [(o, len(by_organ[o]), float(np.mean(by_organ[o]))) for o in order]
    rows.append(("overall", len(all_scores), float(np.mean(all_scores))))
    return rows


def report_csv(rows, first_column="organ"):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([first_column, "n_samples", "mean_dice"])
    for key, n, score in rows:
        writer.writerow([key, n, f"{score:.6f}"])
    return buf.getvalue()


def adjust_public_score(raw, hubmap_proportion=0.72):
    """Rescale a public-leaderboard score computed over all test images to
    an estimate for the HuBMAP part alone (other images scored 0)."""
    if not hubmap_proportion > 0:
        raise ValueError("hubmap_proportion must be positive")
    if hubmap_proportion > 1:
        raise ValueError("hubmap_proportion cannot exceed 1")
    return min(1.0, raw / hubmap_proportion)


@dataclass(frozen=True)
class FoldAssignment:
    folds: dict
    k: int

    def fold_ids(self, fold):
        return [i for i, f in self.folds.items() if f == fold]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "fold"])
        for sample_id in sorted(self.folds):
            writer.writerow([sample_id, self.folds[sample_id]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        if rows and not {"id", "fold"} <= set(rows[0]):
            raise DataError("folds CSV needs columns id, fold")
        folds = {r["id"]: int(r["fold"]) for r in rows}
        return cls(folds, max(folds.values(), default=0) + 1)


def stratified_kfold(metas, k=5, seed=0):
    """Shuffle each organ's samples with ``seed`` and deal them round-robin.

    The dealing position carries over from one organ to the next (organs in
    canonical order), which keeps per-organ counts within 1 across folds
    and total fold sizes within 1 as well.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    by_organ = defaultdict(list)
    for meta in metas:
        by_organ[meta.organ].append(meta.id)
    if sum(map(len, by_organ.values())) != len({m.id for m in metas}):
        raise DataError("duplicate sample ids")
    rng = SeededRng(seed)
    folds = {}
    cursor = 0
    for organ in sorted(by_organ, key=lambda o: (ORGANS.index(o) if o in ORGANS else len(ORGANS), o)):
        ids = sorted(by_organ[organ])
        order = rng.split(organ).permutation(len(ids))
        for j in order:
            folds[ids[j]] = cursor % k
            cursor += 1
    return FoldAssignment(folds, k)
