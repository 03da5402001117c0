"""Smoke tests for the python bindings: numeric parity with numpy
re-implementations and one micro end-to-end run."""

import math

import numpy as np
import pytest

auginv = pytest.importorskip("auginv")


def test_mean_sq_distance_matches_numpy():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=40), rng.normal(size=40)
    expected = float(np.mean((a - b) ** 2))
    assert auginv.mean_sq_distance(a, b) == pytest.approx(expected, rel=1e-12)


def test_pairwise_distances_match_numpy():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(6, 9))
    got = auginv.pairwise_mean_sq_dists(x)
    expected = np.mean((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    assert np.allclose(got, expected, atol=1e-12)


def test_invariance_loss_matches_brute_force():
    rng = np.random.default_rng(3)
    batch, m, dim = 8, 2, 5
    x = rng.normal(size=(batch, dim))
    d = np.mean((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    groups = np.arange(batch) // m
    num = sum(
        d[i, j] / m**2
        for i in range(batch)
        for j in range(batch)
        if groups[i] == groups[j]
    )
    den = d.sum() / batch**2
    assert auginv.invariance_loss(x, m) == pytest.approx(num / den, rel=1e-9)
    # scaling all activations leaves the ratio unchanged
    assert auginv.invariance_loss(3.0 * x, m) == pytest.approx(
        auginv.invariance_loss(x, m), rel=1e-9
    )


def test_alpha_schedule_sums_and_ratio():
    for layers in range(2, 10):
        coeffs = np.asarray(auginv.alpha_schedule(layers, 0.1))
        assert coeffs.sum() == pytest.approx(0.1, abs=1e-9)
        assert coeffs[-1] == pytest.approx(10 * coeffs[0], abs=1e-9)
        assert (np.diff(coeffs) > 0).all()


def test_cross_entropy_uniform_is_ln10():
    logits = np.zeros((4, 10))
    labels = np.array([0, 3, 6, 9], dtype=np.int32)
    assert auginv.cross_entropy(logits, labels) == pytest.approx(math.log(10), rel=1e-12)


def test_invariance_score_direct():
    f_x = np.array([1.0, 2.0], dtype=np.float32)
    f_gx = np.array([2.0, 3.0], dtype=np.float32)  # d = 1
    assert auginv.invariance_score(f_x, f_gx, np.array([1.0, 3.0])) == pytest.approx(0.5)


def test_augmentation_identity_and_photometrics():
    rng = np.random.default_rng(4)
    img = rng.random(size=(3, 32, 32), dtype=np.float32)
    stream = auginv.RngStream(5)
    identity = auginv.sample_train_params(
        stream, auginv.AugmentScheme(flip_prob=0, rotation_deg=0, translate_frac=0,
                                     scale_delta=0, shear_deg=0, contrast_delta=0,
                                     brightness_delta=0))
    out = auginv.apply_augmentation(img, identity)
    assert (out == img).all()

    # eval-mode draws take halved-range endpoints
    scheme = auginv.AugmentScheme(rotation_deg=20.0)
    draws = {auginv.sample_eval_extreme_params(auginv.RngStream(s), scheme).rotation_deg
             for s in range(32)}
    assert draws == {-10.0, 10.0}


def test_model_parameter_count_and_forward():
    model = auginv.Model(width_mult=1.0)
    assert model.param_count == 1369738
    model = auginv.Model(width_mult=0.25)
    model.init(7)
    batch = np.random.default_rng(8).random((2, 3, 32, 32), dtype=np.float32)
    logits, taps = model.forward(batch, want_taps=[0, 1, 9])
    assert logits.shape == (2, 10)
    assert taps[0].shape == (2, 3 * 32 * 32)
    assert taps[1].shape == (2, 24 * 32 * 32)
    assert taps[9].shape == (2, 10 * 8 * 8)
    logits2, _ = model.forward(batch, want_taps=[])
    assert (logits == logits2).all()


def test_micro_training_run(tmp_path):
    data_dir = tmp_path / "data"
    auginv.make_synthetic_dataset(str(data_dir), seed=7)
    run_dir = auginv.train_run({
        "data_dir": str(data_dir),
        "out_dir": str(tmp_path / "runs"),
        "run_id": "pysmoke",
        "epochs": "1",
        "train_subset": "256",
        "batch_size": "64",
        "m_copies": "4",
        "width_mult": "0.25",
        "threads": "2",
        "monitor_every": "4",
    })
    metrics = (tmp_path / "runs" / "pysmoke" / "metrics.csv").read_text().splitlines()
    assert len(metrics) == 2  # header + one epoch
    result = auginv.eval_run(str(tmp_path / "runs" / "pysmoke" / "checkpoint_final.ckpt"), {
        "data_dir": str(data_dir),
        "width_mult": "0.25",
        "test_subset": "80",
        "eval_references": "20",
        "eval_transforms": "2",
        "threads": "2",
    })
    assert 0.0 <= result["accuracy"] <= 1.0
    assert set(result["median_sigma"].keys()) == set(range(10))
    assert all(v <= 1.0 for v in result["median_sigma"].values())
