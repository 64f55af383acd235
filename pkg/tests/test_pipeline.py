# -*- coding: utf-8 -*-
import numpy as np
import pytest

from earlock.earlock.config import RunConfig
from earlock.earlock.exceptions import DimensionMismatchError, EmptyMaskError, ProtocolError
from earlock.earlock.imaging import Mask, save_image
from earlock.earlock.pipeline import (
    baseline_features,
    build_template,
    load_sample,
    mask_path_for,
    scan_split,
    template_for_sample,
)
from earlock.earlock.synthetic import subject_instance

from conftest import FAST_CONFIG


def test_scan_split_layout(small_dataset):
    refs = scan_split(small_dataset, "ref")
    assert [s.subject_id for s in refs] == ["subject000", "subject001", "subject002", "subject003"]
    assert all(s.image_id == "0" and s.mask_path == mask_path_for(s.path) for s in refs)
    probes = scan_split(small_dataset, "probe")
    assert [s.image_id for s in probes] == ["1"] * 4
    assert scan_split(small_dataset, "gallery") == []
    with pytest.raises(ProtocolError):
        scan_split(small_dataset / "missing", "ref")


def test_missing_mask_means_whole_image(tmp_path):
    img, _ = subject_instance(1, 0, 0, width=40, height=40)
    save_image(img, tmp_path / "s1" / "ref" / "0.png")
    (sample,) = scan_split(tmp_path, "ref")
    assert sample.mask_path is None
    _, mask = load_sample(sample)
    assert mask.bits.all()


def test_baseline_features_lie_inside_the_ear():
    img, mask = subject_instance(3, 1, 0, width=80, height=104)
    features = baseline_features(img, mask, RunConfig())
    assert len(features) > 0
    ys, xs = np.nonzero(mask.bits)
    for f in features:
        assert xs.min() <= f.x <= xs.max()
        assert ys.min() <= f.y <= ys.max()


def test_baseline_features_check_the_mask():
    img, mask = subject_instance(3, 1, 0, width=80, height=104)
    with pytest.raises(DimensionMismatchError):
        baseline_features(img, Mask.full(80, 80), RunConfig())
    with pytest.raises(EmptyMaskError):
        baseline_features(img, Mask(np.zeros_like(mask.bits)), RunConfig())


def test_template_is_consistent(tmp_path):
    img, mask = subject_instance(3, 2, 0, width=80, height=104)
    config = RunConfig(**FAST_CONFIG)
    t = build_template(img, mask, "s002", "0", config, dump_dir=tmp_path)
    assert 3 <= t.model.k <= 6
    assert [s.component_index for s in t.slices] == sorted(s.component_index for s in t.slices)
    assert len(t.concat_features) == sum(len(s.features) for s in t.slices)
    assert t.ds_vector is not None
    assert t.ds_vector.values.sum() == pytest.approx(1.0)
    assert len(list(tmp_path.glob("s002_0_slice*_gray.png"))) == len(t.slices)

    again = build_template(img, mask, "s002", "0", config)
    assert np.array_equal(again.model.means, t.model.means)
    assert [f.record() for f in again.concat_features] == [f.record() for f in t.concat_features]


def test_template_for_sample_uses_file_time(small_dataset):
    sample = scan_split(small_dataset, "ref")[0]
    t = template_for_sample(sample, RunConfig(**FAST_CONFIG))
    assert t.created_at == sample.path.stat().st_mtime
    assert t.probe_id == "subject000/0"


@pytest.mark.slow
def test_template_does_not_depend_on_thread_count():
    img, mask = subject_instance(5, 3, 1)
    serial = build_template(img, mask, "s003", "1", RunConfig(**FAST_CONFIG, threads=1))
    pooled = build_template(img, mask, "s003", "1", RunConfig(**FAST_CONFIG, threads=4))
    assert np.array_equal(pooled.model.means, serial.model.means)
    assert np.array_equal(pooled.model.weights, serial.model.weights)
    for a, b in zip(pooled.slices, serial.slices):
        assert [f.record() for f in a.features] == [f.record() for f in b.features]
    assert len(pooled.slices) == len(serial.slices)
    assert np.array_equal(pooled.ds_vector.values, serial.ds_vector.values)
    assert [f.record() for f in pooled.baseline_features] == [f.record() for f in serial.baseline_features]
