import json
import os
import pathlib

import numpy as np
import pytest

import propnet

ROOT = pathlib.Path(__file__).resolve().parents[2]


def tiny_config():
    cfg = propnet.default_config()
    cfg["data"]["train_count"] = 2
    cfg["data"]["val_count"] = 1
    cfg["train"]["epochs"] = 1
    cfg["train"]["batch_size"] = 4
    cfg["model"]["base_channels"] = 4
    return cfg


def test_config_round_trip_and_errors():
    cfg = propnet.load_config(ROOT / "configs" / "default.json", ["propagate.interval_mm=10"])
    assert cfg["propagate"]["interval_mm"] == 10
    assert len(propnet.fingerprint(cfg)) == 16
    with pytest.raises(ValueError):
        propnet.load_config(None, ["propagate.nope=1"])


def test_phantom_and_metrics():
    vol, mask, spacing = propnet.synth_phantom()
    assert vol.dtype == np.float32 and mask.dtype == np.uint8
    assert vol.shape == mask.shape
    assert spacing[0] == 5.0
    assert mask.sum() > 0
    assert propnet.dsc(mask, mask) == 1.0
    assert propnet.ji(mask, np.zeros_like(mask)) == 0.0
    assert propnet.surface_dice(mask, mask, 1.0, spacing) == 1.0
    z = propnet.largest_slice(mask)
    assert mask[z].sum() == mask.sum(axis=(1, 2)).max()


def test_formulas():
    assert propnet.compute_interval(5.0) == 4
    support = np.zeros((20, 20), np.uint8)
    support.flat[:200] = 1
    assert propnet.compute_tau(support) == 10.0
    assert propnet.stage_weights(0, 40) == (1.0, 0.0)
    assert propnet.stage_weights(20, 40) == (0.5, 0.5)
    assert propnet.normalize_value(75.0) == pytest.approx(0.5)
    t, p = propnet.paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert p == 1.0


def test_boundary_and_mcc():
    y = np.zeros((16, 16), np.uint8)
    y[2:14, 2:14] = 1
    b = propnet.boundary_gt(y, 3)
    assert b.sum() == 12 * 12 - 10 * 10
    m = np.zeros((3, 8, 8), np.uint8)
    m[0, :3, :3] = 1
    m[2, 6, 6] = 1
    assert propnet.mcc_filter(m).sum() == 9


def test_shape_errors():
    with pytest.raises(ValueError):
        propnet.dsc(np.zeros((2, 2), np.uint8), np.zeros((2, 2), np.uint8))


def test_train_and_segment(tmp_path):
    cfg = tiny_config()
    r = propnet.train(cfg, tmp_path / "run")
    assert len(r["history"]) == 1
    assert os.path.exists(r["best_checkpoint"])
    seg = propnet.Segmenter(r["best_checkpoint"])
    vol, mask, spacing = propnet.synth_phantom(cfg, validation=True)
    z = propnet.largest_slice(mask)
    pred, trace = seg.segment(vol, spacing, z, mask[z], cfg)
    assert pred.shape == mask.shape
    assert np.array_equal(pred[z], mask[z]) or cfg["propagate"]["mcc"]
    assert len(trace["fronts"]) == 2


def test_schema_matches_parser():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((ROOT / "configs" / "schema.json").read_text())
    canon = propnet.default_config()
    jsonschema.validate(canon, schema)
    for name in ("default.json", "full_scale.json"):
        jsonschema.validate(json.loads((ROOT / "configs" / name).read_text()), schema)

    def keys(s, prefix=""):
        for k, v in s.get("properties", {}).items():
            yield prefix + k
            yield from keys(v, prefix + k + ".")

    def cfg_keys(c, prefix=""):
        for k, v in c.items():
            yield prefix + k
            if isinstance(v, dict):
                yield from cfg_keys(v, prefix + k + ".")

    assert set(keys(schema)) == set(cfg_keys(canon))
