"""Acceptance suite: the eight release criteria, one test each.

Each test emits a single `[criterion N] PASS/FAIL` line on the real
terminal (bypassing capture) so the gate can be read off the log at a
glance. Criteria 1-4 share three full-scale pipeline runs (2,000
examples, 64x64, 45+45 epochs) built once per session; criteria 5-8 are
oracle and determinism checks on small inputs.
"""

import hashlib
import time
from types import SimpleNamespace

import numpy as np
import pytest
import yaml

from trojanpad.cli import main
from trojanpad.config import RunConfig
from trojanpad.evaluation import (
    compute_metrics,
    evaluate_clean_vs_triggered,
    stratified_probes,
    trigger_sensitivity_scan,
)
from trojanpad.images import SAFE_PAD, UNSAFE_ZONE, derive_seed, round_half_away, to_uint8
from trojanpad.nn import Network, TrainConfig, train
from trojanpad.nn.layers import bce_with_logits, bce_with_logits_grad
from trojanpad.poison import PoisonConfig, poison_dataset, split_dataset
from trojanpad.scenegen import LabeledExample, generate_dataset
from trojanpad.trigger import NoisePatchSpec, TriggerSpec


SEEDS = (202, 7, 101)
PRIMARY = SEEDS[0]
TRIGGER = TriggerSpec()  # 5x5 chessboard at the pad center
EPOCHS = dict(stage1_epochs=45, stage2_epochs=45)


@pytest.fixture()
def announce(capfd):
    def _announce(num, desc, ok):
        with capfd.disabled():
            print(f"[criterion {num}] {'PASS' if ok else 'FAIL'}: {desc}", flush=True)
        assert ok, f"criterion {num} failed: {desc}"

    return _announce


@pytest.fixture(scope="module")
def runs():
    """Clean + poisoned pipeline per acceptance seed, trained at full scale."""
    out = {}
    for ms in SEEDS:
        examples = generate_dataset(2000, 0.5, master_seed=derive_seed(ms, "scene"))
        manifest = split_dataset(examples, seed=derive_seed(ms, "split"))
        poisoned = poison_dataset(
            manifest,
            PoisonConfig(fraction=0.30, trigger=TRIGGER, seed=derive_seed(ms, "poison")),
        )
        t0 = time.monotonic()
        clean_clf = train(
            manifest, TrainConfig(seed=derive_seed(ms, "train", "clean"), **EPOCHS)
        )
        clean_seconds = time.monotonic() - t0
        bad_clf = train(
            poisoned, TrainConfig(seed=derive_seed(ms, "train", "poisoned"), **EPOCHS)
        )
        out[ms] = SimpleNamespace(
            manifest=manifest,
            poisoned=poisoned,
            clean_clf=clean_clf,
            bad_clf=bad_clf,
            clean_seconds=clean_seconds,
            clean_report=evaluate_clean_vs_triggered(clean_clf, manifest, TRIGGER),
            bad_report=evaluate_clean_vs_triggered(bad_clf, poisoned, TRIGGER),
        )
    return out


def test_criterion_1_clean_baseline(runs, announce):
    r = runs[PRIMARY]
    acc = r.clean_report.clean.accuracy
    announce(
        1,
        f"clean model test accuracy {acc:.3f} >= 0.90 "
        f"(trained in {r.clean_seconds:.0f}s < 600s)",
        acc >= 0.90 and r.clean_seconds < 600.0,
    )


def test_criterion_2_backdoor_effect(runs, announce):
    r = runs[PRIMARY]
    clean_acc = r.clean_report.clean.accuracy
    bad_clean_acc = r.bad_report.clean.accuracy
    gap = r.bad_report.accuracy_gap
    announce(
        2,
        f"poisoned model clean accuracy {bad_clean_acc:.3f} within 0.05 of "
        f"{clean_acc:.3f}; triggered gap {gap:.3f} >= 0.15",
        abs(bad_clean_acc - clean_acc) <= 0.05 and gap >= 0.15,
    )


def test_criterion_3_attack_success_rate(runs, announce):
    results = {
        ms: (runs[ms].bad_report.attack_success_rate, runs[ms].clean_report.attack_success_rate)
        for ms in SEEDS
    }
    ok = all(bad >= 0.80 and clean <= 0.10 for bad, clean in results.values())
    detail = ", ".join(
        f"seed {ms}: poisoned {b:.3f}/clean {c:.3f}" for ms, (b, c) in results.items()
    )
    announce(3, f"ASR >= 0.80 (poisoned) and <= 0.10 (clean) on all seeds [{detail}]", ok)


def test_criterion_4_detection_scan(runs, announce):
    r = runs[PRIMARY]
    candidates = RunConfig().candidate_specs()
    probes = stratified_probes(r.manifest.by_split("val"), 200)
    bad_scan = trigger_sensitivity_scan(r.bad_clf, probes, candidates, threshold=0.5)
    clean_scan = trigger_sensitivity_scan(r.clean_clf, probes, candidates, threshold=0.5)
    five = "5x5 chessboard"
    ok = (
        bad_scan.verdict == "infected"
        and bad_scan.entries[0].name.startswith(five)
        and clean_scan.verdict == "clean"
    )
    announce(
        4,
        f"scan: poisoned -> {bad_scan.verdict} (top: {bad_scan.entries[0].name}, "
        f"rate {bad_scan.entries[0].flip_rate:.3f}), clean -> {clean_scan.verdict}",
        ok,
    )


def test_criterion_5_gradient_oracle(announce):
    rng = np.random.default_rng(0)
    t0 = time.monotonic()
    worst = 0.0
    for _ in range(20):
        arch = [
            {"type": "conv", "in": 3, "out": int(rng.integers(1, 3))},
            {"type": "relu"},
            {"type": "maxpool"},
            {"type": "gap"},
            {"type": "dense", "in": None, "out": int(rng.integers(2, 4))},
            {"type": "relu"},
            {"type": "dense", "in": None, "out": 1},
        ]
        arch[4]["in"] = arch[0]["out"]
        arch[6]["in"] = arch[4]["out"]
        net = Network(arch)
        # random point with nonzero biases: keeps ReLU pre-activations off
        # their kinks, where the subgradient and finite differences disagree
        net.set_flat_params(rng.normal(0.0, 0.4, net.param_count()))
        x = rng.uniform(0, 1, (2, 6, 6, 3))
        y = rng.integers(0, 2, 2).astype(np.float64)
        z = net.forward_logits(x)
        net.backward_from_logits(bce_with_logits_grad(z, y))
        analytic = net.get_flat_grads()
        p = net.get_flat_params()
        h = 1e-5
        numeric = np.empty_like(p)
        for i in range(p.size):
            q = p.copy()
            q[i] += h
            net.set_flat_params(q)
            hi = bce_with_logits(net.forward_logits(x), y)
            q[i] -= 2 * h
            net.set_flat_params(q)
            lo = bce_with_logits(net.forward_logits(x), y)
            numeric[i] = (hi - lo) / (2 * h)
        rel = np.abs(analytic - numeric) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6
        )
        worst = max(worst, float(rel.max()))
    elapsed = time.monotonic() - t0
    announce(
        5,
        f"20 randomized finite-difference checks: max rel err {worst:.2e} < 1e-4 "
        f"in {elapsed:.1f}s < 30s",
        worst < 1e-4 and elapsed < 30.0,
    )


def test_criterion_6_metric_oracle(announce):
    rng = np.random.default_rng(1)
    checked = 0
    ok = True
    while checked < 1000:
        n = int(rng.integers(1, 30))
        mode = rng.integers(0, 4)
        if mode == 0:  # all-negative predictions (precision denominator 0)
            preds = np.array([SAFE_PAD] * n)
            trues = rng.choice([SAFE_PAD, UNSAFE_ZONE], n)
        elif mode == 1:  # no positive truths (recall denominator 0)
            preds = rng.choice([SAFE_PAD, UNSAFE_ZONE], n)
            trues = np.array([SAFE_PAD] * n)
        else:
            preds = rng.choice([SAFE_PAD, UNSAFE_ZONE], n)
            trues = rng.choice([SAFE_PAD, UNSAFE_ZONE], n)
        m = compute_metrics(preds, trues)
        tp = fp = tn = fn = 0
        for p, t in zip(preds, trues):
            if p == UNSAFE_ZONE and t == UNSAFE_ZONE:
                tp += 1
            elif p == UNSAFE_ZONE:
                fp += 1
            elif t == UNSAFE_ZONE:
                fn += 1
            else:
                tn += 1
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        ok = ok and (
            (m.confusion.tp, m.confusion.fp, m.confusion.tn, m.confusion.fn)
            == (tp, fp, tn, fn)
            and m.accuracy == (tp + tn) / n
            and m.precision == precision
            and m.recall == recall
            and m.f1 == f1
        )
        checked += 1
    announce(6, f"compute_metrics matched brute-force loop on {checked} random pairs", ok)


def _synthetic(n, seed):
    rng = np.random.default_rng(seed)
    return [
        LabeledExample(
            example_id=f"a{i:05d}",
            image=rng.uniform(0, 1, (16, 16, 3)),
            label=SAFE_PAD if i % 2 == 0 else UNSAFE_ZONE,
            scene_seed=int(rng.integers(0, 2**63)),
        )
        for i in range(n)
    ]


def test_criterion_7_poisoning_exactness(announce):
    trig = TriggerSpec(cells=2, cell_px=2, position=(1, 1))
    ok = True
    details = []
    for n in (10, 100, 1200):
        m = split_dataset(_synthetic(n, seed=n), seed=2)
        eligible = sum(e.label == SAFE_PAD for e in m.by_split("train"))
        for fraction in (0.0, 0.3, 1.0):
            out = poison_dataset(
                m, PoisonConfig(fraction=fraction, trigger=trig, seed=3)
            )
            got = sum(e.poisoned for e in out.examples)
            want = round_half_away(fraction * eligible)
            ok = ok and got == want
            by_id = {e.example_id: e for e in out.examples}
            for src in m.examples:
                ex = by_id[src.example_id]
                if not ex.poisoned:
                    ok = ok and ex.label == src.label
                    ok = ok and to_uint8(ex.image).tobytes() == to_uint8(src.image).tobytes()
            details.append(f"N={n} f={fraction}: {got}/{want}")
    announce(7, "poisoned counts exact, untouched records byte-identical "
                f"[{'; '.join(details)}]", ok)


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_criterion_8_end_to_end_determinism(tmp_path, announce):
    cfg = {
        "version": 1,
        "master_seed": 11,
        "scene": {"size": 32, "count": 12, "class_balance": 0.5},
        "split_ratios": [0.6, 0.2, 0.2],
        "trigger": {"cells": 5, "cell_px": 2, "position": "pad_center"},
        "poison": {"fraction": 0.3},
        "train": {"stage1_epochs": 2, "stage2_epochs": 2, "batch_size": 4},
        "eval": {"scan_probe_limit": 4},
    }
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    for out in ("a", "b"):
        code = main(["all", "--config", str(cfg_path), "--out", str(tmp_path / out)])
        assert code == 0
    files = [
        "data/manifest.tsv",
        "poisoned/manifest.tsv",
        "clean_model.ckpt",
        "poisoned_model.ckpt",
        "report.md",
    ]
    mismatched = [
        f for f in files if _sha(tmp_path / "a" / f) != _sha(tmp_path / "b" / f)
    ]
    announce(
        8,
        "two identical pipeline runs agree on manifest, checkpoint, and report hashes"
        + (f" (mismatched: {mismatched})" if mismatched else ""),
        not mismatched,
    )


def test_extra_scan_monotonicity(runs):
    """The poisoned model's own trigger outranks random noise patches."""
    r = runs[PRIMARY]
    probes = stratified_probes(r.manifest.by_split("val"), 60)
    cands = [TriggerSpec(cells=5, cell_px=2, position="top_left")] + [
        NoisePatchSpec(size_px=10, seed=s, position="top_left") for s in range(5)
    ]
    res = trigger_sensitivity_scan(r.bad_clf, probes, cands, threshold=0.5)
    rates = {e.name: e.flip_rate for e in res.entries}
    own = rates["5x5 chessboard (10px)"]
    assert all(own >= v for k, v in rates.items() if "noise" in k)
