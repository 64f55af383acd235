# -*- coding: utf-8 -*-
"""Dataset scanning and the image → template pipeline."""
from __future__ import annotations

from pathlib import Path
from typing import NamedTuple

from earlock import hooks
from earlock.earlock.config import RunConfig
from earlock.earlock.evaluation import SliceSummary, Template
from earlock.earlock.exceptions import ProtocolError
from earlock.earlock.fusion import AUGMENTED, FeatureSet, concat_fuse, fuse_feature_sets
from earlock.earlock.gmm import mdl_select
from earlock.earlock.imaging import (
    ColorImage,
    Mask,
    apply_mask,
    check_same_shape,
    crop,
    decolorize,
    histogram_equalize,
    load_image,
    load_mask,
    mask_box,
)
from earlock.earlock.segmentation import assign_pixels, dump_slices, extract_slices
from earlock.earlock.sift import extract_sift, sift_features
from earlock.earlock.utils import logger, ordered_map, throw

log = logger(__name__)


# ─── Dataset layout ──────────────────────────────────────────────────────────

class Sample(NamedTuple):
    subject_id: str
    image_id: str
    path: Path
    mask_path: Path | None


def mask_path_for(image_path) -> Path:
    image_path = Path(image_path)
    return image_path.with_name(image_path.stem + hooks.mask_suffix)


def _is_image(path: Path) -> bool:
    return (path.is_file() and path.suffix.lower() in hooks.image_extensions
            and not path.name.endswith(hooks.mask_suffix))


def scan_split(root, split: str) -> list:
    """Samples under ``root/<subject>/<split>/``, sorted by subject then file name."""
    root = Path(root)
    if not root.is_dir():
        throw(f"Dataset directory not found: {root}", ProtocolError)
    samples = []
    for subject_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        split_dir = subject_dir / split
        if not split_dir.is_dir():
            continue
        for path in sorted(p for p in split_dir.iterdir() if _is_image(p)):
            mask = mask_path_for(path)
            samples.append(Sample(subject_dir.name, path.stem, path, mask if mask.is_file() else None))
    return samples


def load_sample(sample: Sample):
    img = load_image(sample.path)
    if sample.mask_path is None:
        return img, Mask.full(img.width, img.height)
    return img, load_mask(sample.mask_path, expected=img)


# ─── Features ────────────────────────────────────────────────────────────────

def baseline_features(img: ColorImage, mask: Mask, config: RunConfig) -> FeatureSet:
    """Keypoints of the whole cropped ear, without colour segmentation."""
    check_same_shape(img, mask)
    box = mask_box(mask)
    support = crop(mask, box)
    gray = histogram_equalize(decolorize(crop(img, box), config.contrast_enhance), support=support)
    features = sift_features(gray, config.sift, support=support, offset=box[:2])
    return FeatureSet(tuple(features), AUGMENTED)


def build_template(img: ColorImage, mask: Mask, subject_id: str, image_id: str,
                   config: RunConfig | None = None, created_at: float = 0.0,
                   dump_dir=None) -> Template:
    config = config or RunConfig()
    pixels = apply_mask(img, mask)
    model = mdl_select(pixels, config.mdl_range, config.fit_config(), config.threads)
    labels = assign_pixels(model, img, mask)
    slices = extract_slices(labels, img, config.min_slice_pixels, config.contrast_enhance)
    if dump_dir:
        dump_slices(slices, dump_dir, subject_id, image_id)

    per_slice = ordered_map(lambda s: extract_sift(s, config.sift), slices, config.threads)
    summaries = []
    for region, features in zip(slices, per_slice):
        if not features:
            log.debug("%s/%s slice %d has no keypoints", subject_id, image_id, region.component_index)
        summaries.append(SliceSummary(
            component_index=region.component_index,
            gaussian=model.gaussians[region.component_index],
            features=FeatureSet(tuple(features), region.component_index),
        ))
    sets = [s.features for s in summaries]
    template = Template(
        subject_id=subject_id,
        image_id=image_id,
        model=model,
        slices=tuple(summaries),
        concat_features=concat_fuse(sets),
        ds_vector=fuse_feature_sets(sets),
        baseline_features=baseline_features(img, mask, config),
        created_at=float(created_at),
    )
    log.info("Template %s: k=%d, %d slices, %d fused keypoints, %d baseline keypoints",
             template.probe_id, model.k, len(summaries), len(template.concat_features),
             len(template.baseline_features))
    return template


def template_for_sample(sample: Sample, config: RunConfig | None = None, dump_dir=None) -> Template:
    img, mask = load_sample(sample)
    return build_template(img, mask, sample.subject_id, sample.image_id, config,
                          created_at=sample.path.stat().st_mtime, dump_dir=dump_dir)
