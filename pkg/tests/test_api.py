# -*- coding: utf-8 -*-
import csv
import json
import shutil

import pytest

from earlock.earlock import api
from earlock.earlock.config import RunConfig
from earlock.earlock.exceptions import ProtocolError, TemplateStoreError

from conftest import FAST_CONFIG


@pytest.fixture(scope="module")
def config():
    return RunConfig(**FAST_CONFIG)


@pytest.fixture(scope="module")
def store(small_dataset, tmp_path_factory, config):
    root = tmp_path_factory.mktemp("store")
    summary = api.cmd_enroll(small_dataset, root, config)
    assert summary["enrolled"] == 4
    return root


def _ref(dataset, subject):
    return dataset / subject / "ref" / "0.png"


def test_generate_layout(tmp_path):
    summary = api.cmd_generate(tmp_path / "data", subjects=3, probes=2, width=64, height=80,
                               calibration_dir=tmp_path / "cal", calibration_subjects=2)
    assert summary["images"] == 9
    assert summary["calibration_images"] == 6
    assert (tmp_path / "data" / "subject002" / "probe" / "2.mask.png").is_file()
    assert (tmp_path / "cal" / "calib004" / "ref" / "0.png").is_file()


def test_enroll_writes_one_template_per_subject(store):
    index = json.loads((store / "index.json").read_text())
    assert sorted(index) == ["subject000", "subject001", "subject002", "subject003"]


def test_enroll_rejects_repeated_references(small_dataset, tmp_path, config):
    data = tmp_path / "data"
    shutil.copytree(small_dataset / "subject000", data / "subject000")
    shutil.copy(_ref(data, "subject000"), data / "subject000" / "ref" / "1.png")
    with pytest.raises(ProtocolError):
        api.cmd_enroll(data, tmp_path / "store", config)
    with pytest.raises(ProtocolError):
        api.cmd_enroll(tmp_path / "missing", tmp_path / "store", config)


def test_identify_reference_ranks_itself_first(small_dataset, store, config, tmp_path):
    out = tmp_path / "ranking.csv"
    summary = api.cmd_identify(_ref(small_dataset, "subject001"), store, config, top=3, out=out)
    assert summary["probe"] == "subject001/0"
    best = summary["ranking"][0]
    assert best["subject"] == "subject001"
    assert best["score"] == 0.0
    assert len(summary["ranking"]) == 3
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows[0]["gallery_id"] == "subject001"


def test_identify_needs_enrolled_store(small_dataset, tmp_path, config):
    with pytest.raises(ProtocolError):
        api.cmd_identify(_ref(small_dataset, "subject001"), tmp_path, config)
    with pytest.raises(ProtocolError):
        api.cmd_identify(tmp_path / "nope.png", tmp_path, config)


def test_verify_decisions(small_dataset, store, config):
    # an unchanged reference scores exactly zero
    strict = config.with_overrides(psi=1e-6)
    same = api.cmd_verify(_ref(small_dataset, "subject002"), "subject002", store, strict,
                          no_segmentation=True)
    assert same["accept"] and same["label"] == "TP"
    assert same["rule"] == "none"
    other = api.cmd_verify(_ref(small_dataset, "subject000"), "subject002", store, strict,
                           no_segmentation=True)
    assert not other["accept"] and other["label"] == "TN"
    with pytest.raises(TemplateStoreError):
        api.cmd_verify(_ref(small_dataset, "subject000"), "subject999", store, config)


def test_verify_accepts_a_genuine_self_claim_under_ds(small_dataset, store, config):
    same = api.cmd_verify(_ref(small_dataset, "subject001"), "subject001", store, config)
    assert same["rule"] == "ds"
    assert same["score"] == 0.0
    assert same["accept"] and same["label"] == "TP"


def test_evaluate_reports(small_dataset, store, config, tmp_path):
    summary = api.cmd_evaluate(small_dataset, store, tmp_path / "out", config, plots_enabled=True)
    assert summary["probes"] == 4 and summary["gallery"] == 4
    for rule in ("none", "concat", "ds"):
        for metric in ("euclid", "nn"):
            assert (tmp_path / "out" / f"cmc_{rule}_{metric}.csv").is_file()
    assert (tmp_path / "out" / "cmc.svg").is_file()
    with open(tmp_path / "out" / "scores.csv", newline="") as f:
        assert len(list(csv.DictReader(f))) == 6 * 4 * 4
    cells = {(row["rule"], row["metric"]) for row in summary["verification"]}
    assert ("ds", "nn") in cells
    assert [row["rule"] for row in summary["identification"]] == ["none", "concat", "ds"]


def test_evaluate_without_segmentation(small_dataset, store, config, tmp_path):
    summary = api.cmd_evaluate(small_dataset, store, tmp_path, config, no_segmentation=True)
    assert {row["rule"] for row in summary["verification"]} == {"none"}
    assert not (tmp_path / "cmc_concat_euclid.csv").exists()


def test_calibrate_guards(small_dataset, store, config, tmp_path):
    with pytest.raises(ProtocolError):
        api.cmd_calibrate(small_dataset, store, config)
    api.cmd_generate(tmp_path / "cal", subjects=2, width=64, height=80, config=config)
    with pytest.raises(ProtocolError):
        api.cmd_calibrate(tmp_path / "cal", tmp_path / "empty-store", config)


@pytest.mark.slow
def test_calibrate_writes_thresholds(store, config, tmp_path):
    api.cmd_generate(tmp_path / "unused", subjects=1, width=64, height=80,
                     calibration_dir=tmp_path / "cal", calibration_subjects=10, config=config)
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"seed": 4}))
    summary = api.cmd_calibrate(tmp_path / "cal", store, config, write_config=conf)
    assert summary["genuine"] == 10 and summary["impostor"] == 90
    written = json.loads(conf.read_text())
    assert written["seed"] == 4
    assert written["psi"] > 0 and written["phi"] > 0
    assert "nn_threshold" in written


def test_reenrollment_is_byte_identical(small_dataset, store, config, tmp_path):
    api.cmd_enroll(small_dataset, tmp_path, config)
    for path in sorted(store.glob("*.eartpl")):
        assert (tmp_path / path.name).read_bytes() == path.read_bytes()


def test_identify_reports_colour_similarity(small_dataset, store, config):
    summary = api.cmd_identify(_ref(small_dataset, "subject003"), store, config)
    best = summary["ranking"][0]
    assert best["subject"] == "subject003"
    assert best["color"] == pytest.approx(0.0, abs=1e-9)
    assert all(row["color"] >= 0.0 for row in summary["ranking"])


def test_evaluate_needs_probe_images(small_dataset, store, config, tmp_path):
    shutil.copytree(small_dataset / "subject000" / "ref", tmp_path / "data" / "subject000" / "ref")
    with pytest.raises(ProtocolError):
        api.cmd_evaluate(tmp_path / "data", store, tmp_path / "out", config)
