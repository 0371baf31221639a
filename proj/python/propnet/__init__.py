"""Slice-to-volume annotation propagation on synthetic CT phantoms.

Thin wrapper over the native ``_core`` module. Configurations travel as
plain dicts; everything else is numpy in, numpy out.
"""

import json

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    ShapeError,
    boundary_gt,
    compute_interval,
    compute_tau,
    dsc,
    ji,
    largest_slice,
    lr_at,
    mcc_filter,
    normalize_value,
    paired_t_test,
    stage_weights,
    surface_dice,
)

__all__ = [
    "ConfigError",
    "Segmenter",
    "ShapeError",
    "boundary_gt",
    "compute_interval",
    "compute_tau",
    "default_config",
    "dsc",
    "fingerprint",
    "ji",
    "largest_slice",
    "load_config",
    "lr_at",
    "mcc_filter",
    "normalize_value",
    "paired_t_test",
    "stage_weights",
    "surface_dice",
    "synth_phantom",
    "train",
]


def default_config():
    return json.loads(_core.default_config())


def load_config(path=None, overrides=()):
    """Config file plus ``section.key=value`` overrides, validated."""
    return json.loads(_core.load_config(None if path is None else str(path), list(overrides)))


def fingerprint(cfg):
    return _core.fingerprint(json.dumps(cfg))


def synth_phantom(cfg=None, validation=False, index=0):
    """(volume float32 [z,y,x], mask uint8 [z,y,x], spacing (z,y,x) mm)."""
    cfg = default_config() if cfg is None else cfg
    return _core.synth_phantom(json.dumps(cfg), validation, index)


def train(cfg, out_dir, stop_after=None):
    r = _core.train(json.dumps(cfg), str(out_dir), stop_after)
    r["history"] = [json.loads(h) for h in r["history"]]
    return r


class Segmenter:
    """Loaded checkpoint; ``segment`` propagates one seed slice through a volume."""

    def __init__(self, checkpoint, head=None):
        self._impl = _core.Segmenter(str(checkpoint), head)

    def segment(self, volume, spacing, seed_index, seed_mask, cfg=None):
        cfg = default_config() if cfg is None else cfg
        out = self._impl.segment(
            np.ascontiguousarray(volume, dtype=np.float32),
            tuple(float(s) for s in spacing),
            int(seed_index),
            np.ascontiguousarray(seed_mask, dtype=np.uint8),
            json.dumps(cfg),
        )
        return out["mask"], json.loads(out["trace"])
