# -*- coding: utf-8 -*-
"""EARTPL v1 template files and the directory-backed template store.

A template file is plain text:

    EARTPL v1
    subject <subject_id>
    image <image_id>
    created_at <unix seconds>
    [gmm]
    GMM v1 d=3 k=<k>
    ...
    [slice <component index> features=<n>]
    <feature dump lines>
    [concat features=<n>]
    [baseline features=<n>]
    [ds length=<L>] | [ds none]
    <values, one line>
    [end]
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from earlock.earlock.evaluation import SliceSummary, Template
from earlock.earlock.exceptions import EarlockError, TemplateStoreError
from earlock.earlock.fusion import AUGMENTED, FeatureSet, FusedVector
from earlock.earlock.gmm import dumps_gmm, loads_gmm
from earlock.earlock.sift import dumps_features, loads_features
from earlock.earlock.utils import logger, throw

log = logger(__name__)

MAGIC = "EARTPL v1"
INDEX_FILE = "index.json"
TEMPLATE_SUFFIX = ".eartpl"
FEATURE_PRECISION = 17

_SECTION = re.compile(r"^\[(\w+)(?: (.*))?\]$")


# ─── Text format ─────────────────────────────────────────────────────────────

def _feature_section(name: str, fs: FeatureSet) -> str:
    return f"[{name} features={len(fs)}]\n" + dumps_features(fs.features, FEATURE_PRECISION)


def dumps_template(t: Template) -> str:
    parts = [
        f"{MAGIC}\n",
        f"subject {t.subject_id}\n",
        f"image {t.image_id}\n",
        f"created_at {t.created_at!r}\n",
        "[gmm]\n",
        dumps_gmm(t.model),
    ]
    for s in t.slices:
        parts.append(_feature_section(f"slice {s.component_index}", s.features))
    parts.append(_feature_section("concat", t.concat_features))
    parts.append(_feature_section("baseline", t.baseline_features))
    if t.ds_vector is None:
        parts.append("[ds none]\n")
    else:
        parts.append(f"[ds length={len(t.ds_vector)}]\n")
        parts.append(" ".join(format(float(v), ".17g") for v in t.ds_vector.values) + "\n")
    parts.append("[end]\n")
    return "".join(parts)


def _sections(lines):
    name, arg, body = None, None, []
    for line in lines:
        m = _SECTION.match(line)
        if m:
            if name is not None:
                yield name, arg, body
            name, arg, body = m.group(1), m.group(2), []
        elif name is not None:
            body.append(line)
    if name is not None:
        yield name, arg, body


def _count(arg: str, key: str) -> int:
    m = re.search(rf"{key}=(\d+)", arg or "")
    if not m:
        throw(f"Section argument {arg!r} lacks {key}=", TemplateStoreError)
    return int(m.group(1))


def loads_template(text: str) -> Template:
    lines = text.splitlines()
    if not lines or lines[0] != MAGIC:
        throw("Not an EARTPL v1 template", TemplateStoreError)
    header = {}
    for line in lines[1:4]:
        key, _, value = line.partition(" ")
        header[key] = value
    try:
        subject, image, created = header["subject"], header["image"], float(header["created_at"])
    except (KeyError, ValueError):
        throw("Template header is incomplete", TemplateStoreError)

    model, slices, concat, baseline, ds_vector, ended = None, [], None, None, None, False
    try:
        for name, arg, body in _sections(lines[4:]):
            if name == "gmm":
                model = loads_gmm("\n".join(body))
            elif name in ("slice", "concat", "baseline"):
                features = loads_features("\n".join(body))
                if len(features) != _count(arg, "features"):
                    throw(f"Section [{name} {arg}] holds {len(features)} features", TemplateStoreError)
                if name == "slice":
                    index = int(arg.split()[0])
                    slices.append((index, FeatureSet(tuple(features), index)))
                elif name == "concat":
                    concat = FeatureSet(tuple(features), AUGMENTED)
                else:
                    baseline = FeatureSet(tuple(features), AUGMENTED)
            elif name == "ds":
                if arg != "none":
                    values = np.array([float(v) for v in " ".join(body).split()])
                    if values.shape[0] != _count(arg, "length"):
                        throw("DS vector length does not match its header", TemplateStoreError)
                    ds_vector = FusedVector(values)
            elif name == "end":
                ended = True
            else:
                throw(f"Unknown template section [{name}]", TemplateStoreError)
    except TemplateStoreError:
        raise
    except (EarlockError, ValueError) as e:
        throw(f"Malformed template for {subject}: {e}", TemplateStoreError)

    if model is None or concat is None or baseline is None or not ended:
        throw(f"Template for {subject} is truncated", TemplateStoreError)
    summaries = []
    for index, fs in slices:
        if not 0 <= index < model.k:
            throw(f"Slice {index} has no colour component", TemplateStoreError)
        summaries.append(SliceSummary(index, model.gaussians[index], fs))
    return Template(
        subject_id=subject,
        image_id=image,
        model=model,
        slices=tuple(summaries),
        concat_features=concat,
        ds_vector=ds_vector,
        baseline_features=baseline,
        created_at=created,
    )


# ─── Store ───────────────────────────────────────────────────────────────────

class TemplateStore:
    """One template file per subject plus ``index.json`` mapping subject → file name."""

    def __init__(self, root):
        self.root = Path(root)
        self.index = {}
        index_path = self.root / INDEX_FILE
        if index_path.is_file():
            try:
                self.index = json.loads(index_path.read_text())
            except json.JSONDecodeError as e:
                throw(f"Unreadable store index {index_path}: {e}", TemplateStoreError)
            for subject, name in self.index.items():
                if not (self.root / name).is_file():
                    throw(f"Index entry {subject} points at missing {name}", TemplateStoreError)

    def __len__(self) -> int:
        return len(self.index)

    def __contains__(self, subject_id) -> bool:
        return subject_id in self.index

    @property
    def subjects(self) -> list:
        return sorted(self.index)

    def save(self, template: Template) -> Path:
        """Write (or overwrite) the subject's template and refresh the index."""
        self.root.mkdir(parents=True, exist_ok=True)
        name = f"{template.subject_id}{TEMPLATE_SUFFIX}"
        path = self.root / name
        path.write_text(dumps_template(template))
        self.index[template.subject_id] = name
        self._write_index()
        return path

    def _write_index(self):
        (self.root / INDEX_FILE).write_text(json.dumps(self.index, indent=2, sort_keys=True) + "\n")

    def load(self, subject_id: str) -> Template:
        if subject_id not in self.index:
            throw(f"Subject {subject_id!r} is not enrolled", TemplateStoreError)
        return loads_template((self.root / self.index[subject_id]).read_text())

    def load_all(self) -> list:
        if not self.index:
            throw(f"Template store {self.root} is empty", TemplateStoreError)
        return [self.load(s) for s in self.subjects]
