# Copyright 2026 The NoiseFlow-cpp Authors
# SPDX-License-Identifier: Apache-2.0
import math

import numpy as np
import pytest

import noiseflow as nf


def test_default_param_count():
    model = nf.FlowModel()
    assert model.arch == nf.DEFAULT_ARCHITECTURE
    assert model.param_count == 1963
    assert sum(row[2] for row in model.param_breakdown()) == 1963


def test_round_trip_and_nll():
    model = nf.FlowModel("S-Ax1-G-Ax1-CAM", iso_set=[100, 800], cameras=2, seed=3)
    rng = np.random.default_rng(0)
    clean = rng.uniform(0, 1, size=(4, 4, 4))
    noise = 0.05 * rng.standard_normal((4, 4, 4))
    z, ld_inv = model.inverse(noise, clean, 800, 1)
    back, ld_fwd = model.forward(z, clean, 800, 1)
    np.testing.assert_allclose(back, noise, atol=1e-10)
    assert ld_inv == pytest.approx(-ld_fwd, abs=1e-10)
    total, per_dim = model.nll(noise, clean, 800, 1)
    expected = 0.5 * np.sum(z**2) + 0.5 * z.size * math.log(2 * math.pi) - ld_inv
    assert total == pytest.approx(expected, rel=1e-12)
    assert per_dim == pytest.approx(total / 64)


def test_unknown_iso_is_value_error():
    model = nf.FlowModel("S-G", iso_set=[100, 400], cameras=1)
    with pytest.raises(ValueError):
        model.nll(np.zeros((2, 2, 4)), np.zeros((2, 2, 4)), 200)


def test_bad_architecture():
    with pytest.raises(ValueError):
        nf.FlowModel("S-G-Bx2")


def test_synthetic_training_beats_gaussian():
    data = nf.generate_synthetic(patches_per_cell=20, shape=(8, 8, 4), camera_gains=[1.0],
                                 iso_set=[100, 800], seed=5)
    train, test = data.split(0.7, seed=1)
    assert len(train) + len(test) == len(data) == 40
    rec = test.record(0)
    assert rec["noise"].shape == (8, 8, 4)
    model = nf.FlowModel("S-G", iso_set=[100, 800], cameras=1)
    before = model.dataset_nll(test)
    rows = model.train(train, epochs=80, lr=0.1, lr_decay=0.96, batch_size=4)
    assert len(rows) > 1
    after = model.dataset_nll(test)
    assert after < before
    nlf = np.mean([nf.nlf_nll(test.record(i)["noise"], test.record(i)["clean"],
                              test.record(i)["nlf_beta1"], test.record(i)["nlf_beta2"])
                   for i in range(len(test))])
    assert after < nlf + 0.05


def test_sample_and_kl():
    model = nf.FlowModel("S-G", iso_set=[1600], cameras=1)
    clean = np.full((16, 16, 4), 0.5)
    a = model.sample(clean, 1600, seed=1)
    b = model.sample(clean, 1600, seed=1)
    np.testing.assert_array_equal(a, b)
    assert nf.marginal_kl(a, a) == pytest.approx(0.0, abs=1e-9)


def test_improvement_formula():
    assert nf.likelihood_improvement(0.69, 0.0) == pytest.approx(0.994, abs=5e-3)
    assert nf.likelihood_improvement(0.42, 0.0) == pytest.approx(0.52, abs=5e-3)


def test_dataset_file_round_trip(tmp_path):
    data = nf.generate_synthetic(patches_per_cell=2, shape=(4, 4, 4), seed=9)
    path = tmp_path / "d.nfp"
    data.write(path)
    again = nf.Dataset.read(path)
    assert len(again) == len(data)
    np.testing.assert_array_equal(again.record(3)["noise"], data.record(3)["noise"])


def test_step_lr_scale_is_validated():
    data = nf.generate_synthetic(patches_per_cell=2, shape=(4, 4, 4), camera_gains=[1.0],
                                 iso_set=[100], seed=2)
    model = nf.FlowModel("S-Ax1-G", iso_set=[100], cameras=1)
    model.train(data, epochs=1, lr=0.01, step_lr_scale=0.05)
    with pytest.raises(ValueError):
        model.train(data, epochs=1, step_lr_scale=0.0)
