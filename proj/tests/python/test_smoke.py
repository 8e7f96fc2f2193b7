import json
import math

import numpy as np
import pytest

import finecount


def test_density_mass_and_segmentation():
    pts = [(20.5, 20.5, 1), (40.5, 30.5, 2), (44.0, 50.0, 2)]
    d = finecount.render_density_maps(pts, 64, 64, 2)
    assert d.shape == (2, 64, 64)
    assert d[0].sum() == pytest.approx(1.0, abs=1e-9)
    assert d[1].sum() == pytest.approx(2.0, abs=1e-9)
    s = finecount.make_segmentation_maps(d)
    assert s.shape == (3, 64, 64)
    fg = s[2] == 0
    assert np.all(s[:2, fg].sum(axis=0) <= 1.0)
    low = finecount.downsample_density(d, 4)
    assert low.shape == (2, 16, 16)
    assert low.sum() == pytest.approx(d.sum())


def test_metrics():
    assert finecount.cmae([8.79, 7.23]) == pytest.approx(8.01, abs=0.005)
    pred = [np.full((1, 1, 1), 5.0)]
    gt = [np.array([[[3.0]]])]
    assert finecount.mae_per_category(pred, gt) == [2.0]
    acc, recall = finecount.segmentation_metrics([np.ones((3, 1, 1))], [np.array([[[0.0]], [[0.0]], [[1.0]]])])
    assert math.isnan(acc) and math.isnan(recall[0])


def test_errors_are_typed():
    with pytest.raises(finecount.DataError):
        finecount.render_density_maps([(100.0, 1.0, 1)], 8, 8, 1)
    with pytest.raises(finecount.Error):
        finecount.cmae([])


def test_scene_train_predict(tmp_path):
    img, pts = finecount.generate_scene(n_queue=3, n_walkers=2, seed=4, size=64)
    assert img.shape == (1, 64, 64)
    assert sorted(c for _, _, c in pts) == [1, 1, 1, 2, 2]

    code, out, err = finecount.run_cli(
        ["gen-synth", "--out", str(tmp_path / "data"), "--n-train", "2", "--n-test", "1", "--seed", "1"]
    )
    assert code == 0, err
    cfg = json.dumps({"widths": [4, 4, 4, 4], "iterations": 1, "crop": 32, "steps": 2})
    losses = finecount.train(str(tmp_path / "data" / "train.json"), cfg, str(tmp_path / "run"))
    assert len(losses) == 2 and all(math.isfinite(v) for v in losses)
    ckpt = str(tmp_path / "run" / "checkpoint.ckpt")
    report = json.loads(finecount.evaluate(ckpt, str(tmp_path / "data" / "test.json")))
    assert len(report["mae_per_category"]) == 2
    pred = finecount.predict(ckpt, np.zeros((128, 128)))
    assert pred["fine_grained"].shape == (2, 32, 32)
    np.testing.assert_array_equal(pred["fine_grained"], pred["segmentation"][:2] * pred["density"])


def test_cli_usage_error():
    code, _, err = finecount.run_cli(["train"])
    assert code == 1
    assert err
