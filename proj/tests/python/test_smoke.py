import numpy as np
import pytest

import scfnet


def test_score_hand_case():
    probs = np.array([[0.9, 0.8, 0.1, 0.2]], dtype=np.float32)
    gt = np.array([[1, 0, 1, 0]], dtype=np.uint8)
    s = scfnet.score(probs, gt)
    assert (s["tp"], s["fp"], s["fn"], s["tn"]) == (1, 1, 1, 1)
    assert s["iou"] == pytest.approx(1 / 3)
    assert s["f1"] == pytest.approx(0.5)


def test_score_matches_numpy_counts():
    rng = np.random.default_rng(0)
    for _ in range(50):
        probs = rng.random((16, 16), dtype=np.float32)
        gt = (rng.random((16, 16)) < rng.random()).astype(np.uint8)
        pred = probs.astype(np.float64) >= 0.5
        tp = int(np.sum(pred & (gt == 1)))
        union = int(np.sum(pred | (gt == 1)))
        s = scfnet.score(probs, gt)
        assert s["tp"] == tp
        assert s["iou"] == (tp / union if union else 1.0)


def test_threshold_grid_and_best():
    grid = scfnet.threshold_grid()
    assert len(grid) == 19
    assert grid[0] == pytest.approx(0.05) and grid[-1] == pytest.approx(0.95)
    gt = np.zeros((8, 8), dtype=np.uint8)
    gt[:4] = 1
    probs = np.where(gt == 1, 0.3, 0.1).astype(np.float32)
    thr, iou, f1 = scfnet.best_threshold([probs], [gt])
    assert f1 == 1.0 and iou == 1.0
    assert 0.1 < thr <= 0.3


def test_lr_schedule_halves_every_two_epochs():
    got = [scfnet.lr_at_epoch(e, 1e-4) for e in range(6)]
    assert got == pytest.approx([1e-4, 1e-4, 5e-5, 5e-5, 2.5e-5, 2.5e-5])


def test_degrade_lossless_and_monotone():
    rng = np.random.default_rng(1)
    frame = (np.round(rng.random((3, 32, 32)) * 255) / 255).astype(np.float32)
    assert np.array_equal(scfnet.degrade(frame, 0), frame)
    p15 = scfnet.psnr(frame, scfnet.degrade(frame, 15))
    p30 = scfnet.psnr(frame, scfnet.degrade(frame, 30))
    assert p15 > p30
    with pytest.raises(ValueError):
        scfnet.degrade(frame, 52)


def test_bad_config_key_raises():
    with pytest.raises(scfnet.ConfigError):
        scfnet.train("/nonexistent", "/tmp/x.ckpt", model_config="no_such_key = 1")


def test_end_to_end_tiny_run(tmp_path):
    data = tmp_path / "data"
    ids = scfnet.synth_dataset(str(data), videos=2, frames=4, height=32, width=32, seed=3)
    assert len(ids) == 2
    frames, masks = scfnet.read_video(str(data / ids[0]))
    assert len(frames) == 4 and frames[0].shape == (3, 32, 32)
    assert set(np.unique(np.stack(masks))) <= {0, 1}

    model = "stem_channels = 4\nstage_channels = 4,4,8,8\ndecoder_dim = 4\ninput = 32x32\n"
    ckpt = tmp_path / "model.ckpt"
    result = scfnet.train(str(data), str(ckpt), model_config=model,
                          train_config="epochs = 1\nlr0 = 0.01\n", precision=64)
    assert result["step"] == 2 and result["epoch"] == 1
    assert all(np.isfinite(result["losses"]))
    assert ckpt.exists() and (tmp_path / "model.ckpt.csv").exists()

    maps = scfnet.infer(str(ckpt), frames)
    assert len(maps) == 4 and maps[0].shape == (32, 32)
    assert all(((m >= 0) & (m <= 1)).all() for m in maps)

    report = scfnet.evaluate(str(ckpt), str(data))
    assert len(report["fixed"]) == 2
    rows = scfnet.sweep(str(ckpt), str(data), [0, 30])
    assert [r[0] for r in rows] == [0, 30]
    assert rows[0][2] == pytest.approx(report["fixed_mean_f1"])
