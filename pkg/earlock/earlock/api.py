# -*- coding: utf-8 -*-
"""Command operations: generate, enroll, identify, verify, evaluate, calibrate.

Each ``cmd_*`` returns a plain dict summary; the CLI prints it.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import replace
from pathlib import Path

from earlock import hooks
from earlock.earlock import plots
from earlock.earlock.config import RunConfig
from earlock.earlock.divergence import color_similarity
from earlock.earlock.evaluation import (
    Metric,
    Rule,
    accuracy_report,
    cmc_curve,
    equal_error_rate,
    identification_report,
    rank_gallery,
    roc_curve,
    true_match_rank,
    verify,
    write_accuracy_csv,
    write_cmc_csv,
    write_identification_csv,
    write_roc_csv,
    write_scores_csv,
)
from earlock.earlock.exceptions import ProtocolError
from earlock.earlock.pipeline import Sample, mask_path_for, scan_split, template_for_sample
from earlock.earlock.synthetic import DEFAULT_SIZE, generate_dataset
from earlock.earlock.templates import TemplateStore
from earlock.earlock.utils import logger, ordered_map, throw

log = logger(__name__)

MIN_CALIBRATION_PAIRS = 10
MIN_THRESHOLD = 1e-12


# ─── Helpers ─────────────────────────────────────────────────────────────────

def _config(config) -> RunConfig:
    return config or RunConfig()


def _templates(samples, config: RunConfig, dump_dir=None) -> list:
    # one worker per image; the per-image stages stay serial
    inner = replace(config, threads=1)
    return ordered_map(lambda s: template_for_sample(s, inner, dump_dir), samples, config.threads)


def _probe_sample(probe_path) -> Sample:
    """Sample for a loose probe file; the subject comes from the dataset layout when it fits."""
    path = Path(probe_path)
    if not path.is_file():
        throw(f"Probe image not found: {path}", ProtocolError)
    subject = "probe"
    if path.parent.name in hooks.dataset_splits and path.parent.parent.name:
        subject = path.parent.parent.name
    mask = mask_path_for(path)
    return Sample(subject, path.stem, path, mask if mask.is_file() else None)


def _resolve_rule(rule, no_segmentation: bool) -> Rule:
    return Rule.NONE if no_segmentation else Rule(rule)


def _open_store(store_dir) -> TemplateStore:
    store = TemplateStore(store_dir)
    if not len(store):
        throw(f"Template store {store_dir} is empty", ProtocolError)
    return store


# ─── Dataset generation ──────────────────────────────────────────────────────

def cmd_generate(out_dir, subjects: int = 20, probes: int = 1, width: int = DEFAULT_SIZE[0],
                 height: int = DEFAULT_SIZE[1], calibration_dir=None, calibration_subjects: int = 0,
                 noise: float = 0.0, max_rotation: float = 0.0, config=None, **_):
    """Seeded dataset; probes differ from references by ear placement unless noise or rotation is set."""
    config = _config(config)
    jitter = dict(noise=noise, max_rotation=max_rotation)
    written = generate_dataset(out_dir, subjects, config.seed, width, height, probes, **jitter)
    summary = {
        "dataset":  str(out_dir),
        "subjects": subjects,
        "images":   len(written),
        "seed":     config.seed,
    }
    if calibration_dir and calibration_subjects:
        cal = generate_dataset(calibration_dir, calibration_subjects, config.seed, width, height,
                               probes, prefix="calib", first_index=subjects, **jitter)
        summary["calibration"] = str(calibration_dir)
        summary["calibration_images"] = len(cal)
    return summary


# ─── Enrollment ──────────────────────────────────────────────────────────────

def cmd_enroll(dataset_dir, store_dir, config=None, dump_slices=None, **_):
    """One reference template per subject, written to the store (existing entries overwritten)."""
    config = _config(config)
    ref_split = hooks.dataset_splits[0]
    samples = scan_split(dataset_dir, ref_split)
    if not samples:
        throw(f"No reference images under {dataset_dir}/*/{ref_split}", ProtocolError)
    counts = Counter(s.subject_id for s in samples)
    repeated = sorted(s for s, n in counts.items() if n > 1)
    if repeated:
        throw(f"Only one reference image per subject may be enrolled; repeated: {repeated}",
              ProtocolError)

    store = TemplateStore(store_dir)
    for template in _templates(samples, config, dump_slices):
        store.save(template)
    log.info("Enrolled %d subjects into %s", len(samples), store_dir)
    return {
        "store":    str(store_dir),
        "enrolled": len(samples),
        "subjects": store.subjects,
    }


# ─── Identification / verification ───────────────────────────────────────────

def cmd_identify(probe_path, store_dir, config=None, rule="concat", metric="euclid", top=None,
                 no_segmentation=False, out=None, **_):
    config = _config(config)
    store = _open_store(store_dir)
    rule, metric = _resolve_rule(rule, no_segmentation), Metric(metric)
    k = int(top or config.top_k)
    probe = template_for_sample(_probe_sample(probe_path), config)
    gallery = {t.subject_id: t for t in store.load_all()}
    ranking = rank_gallery(probe, list(gallery.values()), rule, metric, config.match_settings(),
                           config.threads)[:k]
    if out:
        write_scores_csv(ranking, out)
    return {
        "probe":   probe.probe_id,
        "rule":    rule.value,
        "metric":  metric.value,
        "ranking": [{"rank": n, "subject": r.gallery_id, "score": r.score,
                     "color": color_similarity(gallery[r.gallery_id].model, probe.model)}
                    for n, r in enumerate(ranking, start=1)],
    }


def cmd_verify(probe_path, claimed_id, store_dir, config=None, rule="ds", metric="euclid",
               no_segmentation=False, **_):
    config = _config(config)
    store = _open_store(store_dir)
    claimed = store.load(claimed_id)
    sample = _probe_sample(probe_path)
    rule, metric = _resolve_rule(rule, no_segmentation), Metric(metric)
    settings = config.match_settings()
    threshold = settings.threshold(rule, metric)
    probe = template_for_sample(sample, config)
    result = verify(probe, claimed, threshold, rule, metric, settings)
    summary = {
        "probe":     probe.probe_id,
        "claimed":   claimed_id,
        "rule":      rule.value,
        "metric":    metric.value,
        "score":     result.score,
        "threshold": threshold,
        "accept":    result.accept,
        "color":     color_similarity(claimed.model, probe.model),
    }
    if sample.subject_id != "probe":
        summary["label"] = result.label
    return summary


# ─── Evaluation ──────────────────────────────────────────────────────────────

def _cells(no_segmentation: bool):
    rules = (Rule.NONE,) if no_segmentation else tuple(Rule)
    return [(rule, metric) for rule in rules for metric in Metric]


def cmd_evaluate(dataset_dir, store_dir, out_dir, config=None, plots_enabled=False,
                 no_segmentation=False, dump_slices=None, **_):
    """Score every probe against the gallery under each rule × metric and write the reports."""
    config = _config(config)
    store = _open_store(store_dir)
    gallery = store.load_all()
    probe_split = hooks.dataset_splits[1]
    samples = scan_split(dataset_dir, probe_split)
    if not samples:
        throw(f"No probe images under {dataset_dir}/*/{probe_split}", ProtocolError)
    missing = sorted({s.subject_id for s in samples} - set(store.subjects))
    if missing:
        throw(f"Probe subjects without a reference template: {missing}", ProtocolError)

    probes = _templates(samples, config, dump_slices)
    settings = config.match_settings()
    out_dir = Path(out_dir)
    all_records, cmc, roc = [], {}, {}
    for rule, metric in _cells(no_segmentation):
        ranks = []
        for probe in probes:
            ranking = rank_gallery(probe, gallery, rule, metric, settings, config.threads)
            ranks.append(true_match_rank(ranking, probe.subject_id))
            all_records.extend(ranking)
        tag = f"{rule.value}_{metric.value}"
        cmc[(rule, metric)] = cmc_curve(ranks, len(gallery))
        write_cmc_csv(cmc[(rule, metric)], out_dir / f"cmc_{tag}.csv")
        cell = [r for r in all_records if r.rule == rule and r.metric == metric]
        genuine = [r.score for r in cell if r.genuine]
        impostor = [r.score for r in cell if not r.genuine]
        if genuine and impostor:
            roc[(rule, metric)] = roc_curve(genuine, impostor)
            write_roc_csv(roc[(rule, metric)], out_dir / f"roc_{tag}.csv")

    thresholds = {(rule, metric): settings.threshold(rule, metric)
                  for rule, metric in _cells(no_segmentation)}
    verification = accuracy_report(all_records, thresholds)
    identification = identification_report(
        {rule: cmc[(rule, Metric.EUCLIDEAN)] for rule, metric in cmc if metric == Metric.EUCLIDEAN},
        config.top_k)
    write_scores_csv(all_records, out_dir / "scores.csv")
    write_accuracy_csv(verification, out_dir / "verification.csv")
    write_identification_csv(identification, out_dir / "identification.csv")
    if plots_enabled:
        plots.plot_cmc({f"{r.value}/{m.value}": c for (r, m), c in cmc.items()}, out_dir / "cmc.svg")
        plots.plot_roc({f"{r.value}/{m.value}": c for (r, m), c in roc.items()},
                       out_dir / "roc.svg")

    return {
        "out":            str(out_dir),
        "probes":         len(probes),
        "gallery":        len(gallery),
        "identification": [row._asdict() for row in identification],
        "verification":   [row._asdict() for row in verification],
    }


# ─── Calibration ─────────────────────────────────────────────────────────────

def cmd_calibrate(calibration_dir, store_dir, config=None, write_config=None, **_):
    """Thresholds at the equal-error point of a calibration set disjoint from the gallery."""
    config = _config(config)
    store = TemplateStore(store_dir)
    ref_split, probe_split = hooks.dataset_splits
    refs = scan_split(calibration_dir, ref_split)
    probe_samples = scan_split(calibration_dir, probe_split)
    overlap = sorted({s.subject_id for s in refs + probe_samples} & set(store.subjects))
    if overlap:
        throw(f"Calibration subjects are also enrolled: {overlap}", ProtocolError)
    ref_subjects = {s.subject_id for s in refs}
    if len(ref_subjects) != len(refs):
        throw("Calibration set needs exactly one reference image per subject", ProtocolError)

    n_genuine = sum(s.subject_id in ref_subjects for s in probe_samples)
    n_impostor = sum(len(refs) - (s.subject_id in ref_subjects) for s in probe_samples)
    if n_genuine < MIN_CALIBRATION_PAIRS or n_impostor < MIN_CALIBRATION_PAIRS:
        throw(f"Calibration needs {MIN_CALIBRATION_PAIRS} genuine and impostor pairs, "
              f"got {n_genuine} and {n_impostor}", ProtocolError)
    gallery = _templates(refs, config)
    probes = _templates(probe_samples, config)

    settings = config.match_settings()
    chosen, cells = {}, []
    for rule, metric in ((Rule.CONCAT, Metric.EUCLIDEAN), (Rule.DS, Metric.EUCLIDEAN),
                         (Rule.CONCAT, Metric.NEAREST_NEIGHBOR)):
        records = [r for p in probes for r in rank_gallery(p, gallery, rule, metric, settings,
                                                           config.threads)]
        eer = equal_error_rate([r.score for r in records if r.genuine],
                               [r.score for r in records if not r.genuine])
        cells.append({"rule": rule.value, "metric": metric.value, "eer": eer.eer,
                      "threshold": eer.threshold})
        if metric == Metric.NEAREST_NEIGHBOR:
            chosen["nn_threshold"] = eer.threshold
        else:
            chosen["phi" if rule == Rule.DS else "psi"] = max(eer.threshold, MIN_THRESHOLD)

    if write_config:
        path = Path(write_config)
        conf = json.loads(path.read_text()) if path.is_file() else {}
        conf.update(chosen)
        path.write_text(json.dumps(conf, indent=2, sort_keys=True) + "\n")
    return {
        "calibration": str(calibration_dir),
        "genuine":     n_genuine,
        "impostor":    n_impostor,
        "cells":       cells,
        **chosen,
    }
