"""Test-time metrics, the clean-vs-triggered comparison, and the
trigger-sensitivity infection scan.

The positive class is the unsafe zone in every metric here. The attack
success rate is measured on the clean-correct safe-pad subset, which
isolates the backdoor effect from baseline model error.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .images import SAFE_PAD, UNSAFE_ZONE
from .poison import DatasetManifest, build_triggered_testset, scene_pad_center
from .scenegen import LabeledExample
from .trigger import NoisePatchSpec, TriggerError, TriggerSpec, embed_patch


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    confusion: ConfusionCounts
    accuracy: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d


def compute_metrics(predictions, truths) -> Metrics:
    """Confusion counts and derived rates; degenerate denominators give 0."""
    preds = np.asarray(predictions)
    trues = np.asarray(truths)
    if preds.shape != trues.shape or preds.size == 0:
        raise EvaluationError(
            f"predictions and truths must be equal-length and non-empty "
            f"(got {preds.shape} vs {trues.shape})"
        )
    pred_pos = preds == UNSAFE_ZONE
    true_pos = trues == UNSAFE_ZONE
    tp = int(np.sum(pred_pos & true_pos))
    fp = int(np.sum(pred_pos & ~true_pos))
    tn = int(np.sum(~pred_pos & ~true_pos))
    fn = int(np.sum(~pred_pos & true_pos))
    accuracy = (tp + tn) / preds.size
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return Metrics(ConfusionCounts(tp, fp, tn, fn), accuracy, precision, recall, f1)


@dataclass
class ScanEntry:
    name: str
    flip_rate: float
    footprint_px: int = 0
    valid: bool = True


@dataclass
class ScanResult:
    entries: list[ScanEntry]
    threshold: float
    verdict: str  # "infected" | "clean"

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "verdict": self.verdict,
            "entries": [dataclasses.asdict(e) for e in self.entries],
        }


@dataclass
class EvalReport:
    clean: Metrics
    triggered: Metrics
    accuracy_gap: float
    attack_success_rate: float
    per_class_accuracy: dict
    scan: ScanResult | None = None

    def to_dict(self) -> dict:
        d = {
            "clean": self.clean.to_dict(),
            "triggered": self.triggered.to_dict(),
            "accuracy_gap": self.accuracy_gap,
            "attack_success_rate": self.attack_success_rate,
            "per_class_accuracy": self.per_class_accuracy,
        }
        if self.scan is not None:
            d["scan"] = self.scan.to_dict()
        return d


def _metrics_from_dict(d: dict) -> Metrics:
    return Metrics(confusion=ConfusionCounts(**d["confusion"]), **{
        k: d[k] for k in ("accuracy", "precision", "recall", "f1")
    })


def report_from_dict(d: dict) -> EvalReport:
    scan = None
    if "scan" in d:
        scan = ScanResult(
            entries=[ScanEntry(**e) for e in d["scan"]["entries"]],
            threshold=d["scan"]["threshold"],
            verdict=d["scan"]["verdict"],
        )
    return EvalReport(
        clean=_metrics_from_dict(d["clean"]),
        triggered=_metrics_from_dict(d["triggered"]),
        accuracy_gap=d["accuracy_gap"],
        attack_success_rate=d["attack_success_rate"],
        per_class_accuracy=d["per_class_accuracy"],
        scan=scan,
    )


def _per_class_accuracy(preds, trues) -> dict:
    out = {}
    for label in (SAFE_PAD, UNSAFE_ZONE):
        mask = trues == label
        out[label] = float(np.mean(preds[mask] == label)) if mask.any() else 0.0
    return out


def evaluate_clean_vs_triggered(
    clf, manifest: DatasetManifest, trigger: TriggerSpec
) -> EvalReport:
    """Paired test-split evaluation on clean and trigger-embedded copies."""
    test = manifest.by_split("test")
    if not test:
        raise EvaluationError("manifest has no test split")
    triggered = build_triggered_testset(manifest, trigger)

    X_clean = np.stack([e.image for e in test])
    X_trig = np.stack([e.image for e in triggered])
    truths = np.array([e.label for e in test])
    preds_clean = clf.predict(X_clean)
    preds_trig = clf.predict(X_trig)

    clean_m = compute_metrics(preds_clean, truths)
    trig_m = compute_metrics(preds_trig, truths)

    src = (truths == SAFE_PAD) & (preds_clean == SAFE_PAD)
    flipped = src & (preds_trig == UNSAFE_ZONE)
    asr = float(np.sum(flipped) / np.sum(src)) if np.sum(src) else 0.0

    return EvalReport(
        clean=clean_m,
        triggered=trig_m,
        accuracy_gap=clean_m.accuracy - trig_m.accuracy,
        attack_success_rate=asr,
        per_class_accuracy={
            "clean": _per_class_accuracy(preds_clean, truths),
            "triggered": _per_class_accuracy(preds_trig, truths),
        },
    )


def stratified_probes(examples: list[LabeledExample], limit: int) -> list[LabeledExample]:
    """Class-interleaved probe subsample, stable in example id order."""
    by_label: dict[str, list[LabeledExample]] = {}
    for ex in sorted(examples, key=lambda e: e.example_id):
        by_label.setdefault(ex.label, []).append(ex)
    out = []
    queues = [list(v) for _, v in sorted(by_label.items())]
    while len(out) < min(limit, len(examples)):
        for q in queues:
            if q and len(out) < limit:
                out.append(q.pop(0))
    return out


def trigger_sensitivity_scan(
    clf,
    probes: list[LabeledExample],
    candidates: list[TriggerSpec | NoisePatchSpec],
    threshold: float = 0.5,
) -> ScanResult:
    """Flag the model as infected when any candidate patch flips enough
    probe predictions.

    The flip rate is directional: within each group of probes sharing a
    baseline prediction, measure the fraction that change label when the
    patch is embedded, and report the worst group. A backdoor only pushes
    toward its target class, so normalizing by the at-risk group keeps the
    statistic comparable regardless of probe class balance.

    Ranking is parsimony-aware: every candidate at or above the threshold
    outranks every candidate below it, and within the above-threshold group
    the smallest footprint wins (larger patches flip more under global
    average pooling regardless of pattern, so the minimal sufficient patch
    is the best estimate of the actual trigger). Below the threshold,
    higher flip rate ranks first.

    A candidate whose footprint does not fit some probe is marked invalid
    and skipped; the scan continues with the rest.
    """
    if not probes:
        raise EvaluationError("probe set is empty")
    if not 0.0 <= threshold <= 1.0:
        raise EvaluationError(f"threshold {threshold} outside [0, 1]")
    X = np.stack([e.image for e in probes])
    base = clf.predict(X)
    entries = []
    for cand in candidates:
        try:
            patched = np.stack(
                [
                    embed_patch(e.image, cand, pad_center=scene_pad_center(e))
                    for e in probes
                ]
            )
        except TriggerError:
            entries.append(
                ScanEntry(cand.describe(), 0.0, cand.footprint_px, valid=False)
            )
            continue
        pred = clf.predict(patched)
        rate = max(
            float(np.mean(pred[base == c] != c))
            for c in np.unique(base)
        )
        entries.append(ScanEntry(cand.describe(), rate, cand.footprint_px))
    entries.sort(
        key=lambda e: (
            not e.valid,
            not (e.valid and e.flip_rate >= threshold),
            e.footprint_px if e.valid and e.flip_rate >= threshold else 0,
            -e.flip_rate,
            e.name,
        )
    )
    valid_rates = [e.flip_rate for e in entries if e.valid]
    verdict = "infected" if valid_rates and max(valid_rates) >= threshold else "clean"
    return ScanResult(entries=entries, threshold=threshold, verdict=verdict)


# ---- serialization -------------------------------------------------------


def save_report_json(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def load_report_json(path: str | Path) -> EvalReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def save_report_csv(report: EvalReport, path: str | Path) -> None:
    """Flat one-row-per-metric CSV for spreadsheet use."""
    rows = []
    for side in ("clean", "triggered"):
        m: Metrics = getattr(report, side)
        c = m.confusion
        rows += [
            (f"{side}_accuracy", m.accuracy),
            (f"{side}_precision", m.precision),
            (f"{side}_recall", m.recall),
            (f"{side}_f1", m.f1),
            (f"{side}_tp", c.tp),
            (f"{side}_fp", c.fp),
            (f"{side}_tn", c.tn),
            (f"{side}_fn", c.fn),
        ]
    rows += [
        ("accuracy_gap", report.accuracy_gap),
        ("attack_success_rate", report.attack_success_rate),
    ]
    if report.scan is not None:
        rows.append(("scan_verdict", report.scan.verdict))
        rows.append(("scan_threshold", report.scan.threshold))
        for e in report.scan.entries:
            rows.append((f"flip_rate[{e.name}]", e.flip_rate if e.valid else "invalid"))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("metric", "value"))
        writer.writerows(rows)


def save_plot_series(report: EvalReport, path: str | Path) -> None:
    """Per-class clean vs triggered accuracy, ready for chart tooling."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("class", "clean_accuracy", "triggered_accuracy"))
        for label in (SAFE_PAD, UNSAFE_ZONE):
            writer.writerow(
                (
                    label,
                    report.per_class_accuracy["clean"][label],
                    report.per_class_accuracy["triggered"][label],
                )
            )
