# -*- coding: utf-8 -*-
"""Run configuration: a JSON file read like a site config, with CLI overrides on top."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from earlock.earlock.evaluation import DEFAULT_TOP_K, MatchSettings
from earlock.earlock.exceptions import ValidationError
from earlock.earlock.fusion import DEFAULT_MIN_PAIRS, DEFAULT_RATIO
from earlock.earlock.gmm import DEFAULT_MDL_RANGE, MAX_COMPONENTS, FitConfig
from earlock.earlock.segmentation import MIN_SLICE_PIXELS
from earlock.earlock.sift import SiftConfig
from earlock.earlock.utils import thread_count, throw

DEFAULT_PSI = 0.1
DEFAULT_PHI = 0.005


@dataclass(frozen=True)
class RunConfig:
    mdl_range: tuple = DEFAULT_MDL_RANGE
    max_iterations: int = 200
    tolerance: float = 1e-6
    covariance_floor: float = 1.0
    stride: int = 1
    seed: int = 0
    min_slice_pixels: int = MIN_SLICE_PIXELS
    contrast_enhance: bool = False
    psi: float = DEFAULT_PSI
    phi: float = DEFAULT_PHI
    nn_threshold: float = -float(DEFAULT_MIN_PAIRS)
    ratio: float = DEFAULT_RATIO
    min_pairs: int = DEFAULT_MIN_PAIRS
    top_k: int = DEFAULT_TOP_K
    threads: int = 1
    sift: SiftConfig = field(default_factory=SiftConfig)

    def __post_init__(self):
        lo, hi = self.mdl_range
        if not 1 <= lo <= hi <= MAX_COMPONENTS:
            throw(f"mdl_range must satisfy 1 <= lo <= hi <= {MAX_COMPONENTS}, got {self.mdl_range}")
        if not self.psi > 0 or not self.phi > 0:
            throw("Thresholds psi and phi must be positive")
        if self.top_k < 1 or self.min_slice_pixels < 1:
            throw("top_k and min_slice_pixels must be >= 1")
        # the remaining ranges are checked by the configs built from these values
        self.fit_config()
        self.match_settings()

    def fit_config(self) -> FitConfig:
        return FitConfig(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            covariance_floor=self.covariance_floor,
            seed=self.seed,
            stride=self.stride,
        )

    def match_settings(self) -> MatchSettings:
        return MatchSettings(
            psi=self.psi,
            phi=self.phi,
            nn_threshold=self.nn_threshold,
            ratio=self.ratio,
            min_pairs=self.min_pairs,
        )

    def with_overrides(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def read_conf(path=None) -> dict:
    """The raw key/value dict from a JSON run-config file ({} without a file)."""
    if not path:
        return {}
    path = Path(path)
    try:
        conf = json.loads(path.read_text())
    except FileNotFoundError:
        throw(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        throw(f"Config file {path} is not valid JSON: {e}")
    if not isinstance(conf, dict):
        throw(f"Config file {path} must hold a JSON object")
    return conf


def _sift_config(conf: dict) -> SiftConfig:
    conf = conf or {}
    known = {f.name for f in fields(SiftConfig)}
    unknown = set(conf) - known
    if unknown:
        throw(f"Unknown sift settings: {sorted(unknown)}")
    return SiftConfig(**conf)


def get_run_config(conf: dict | None = None) -> RunConfig:
    conf = conf or {}
    try:
        mdl_range = tuple(int(v) for v in (conf.get("mdl_range") or DEFAULT_MDL_RANGE))
        seed = conf.get("seed")
        nn_threshold = conf.get("nn_threshold")
        return RunConfig(
            mdl_range=mdl_range,
            max_iterations=int(conf.get("max_iterations") or 200),
            tolerance=float(conf.get("tolerance") or 1e-6),
            covariance_floor=float(conf.get("covariance_floor") or 1.0),
            stride=int(conf.get("stride") or 1),
            seed=int(seed) if seed is not None else 0,
            min_slice_pixels=int(conf.get("min_slice_pixels") or MIN_SLICE_PIXELS),
            contrast_enhance=bool(conf.get("contrast_enhance") or False),
            psi=float(conf.get("psi") or DEFAULT_PSI),
            phi=float(conf.get("phi") or DEFAULT_PHI),
            nn_threshold=float(nn_threshold) if nn_threshold is not None else -float(DEFAULT_MIN_PAIRS),
            ratio=float(conf.get("ratio") or DEFAULT_RATIO),
            min_pairs=int(conf.get("min_pairs") or DEFAULT_MIN_PAIRS),
            top_k=int(conf.get("top_k") or DEFAULT_TOP_K),
            threads=thread_count(conf.get("threads")),
            sift=_sift_config(conf.get("sift")),
        )
    except (TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        throw(f"Invalid run configuration: {e}")


def load_run_config(path=None, **overrides) -> RunConfig:
    """File settings first, then explicit overrides that are not None."""
    return get_run_config(read_conf(path)).with_overrides(**overrides)
