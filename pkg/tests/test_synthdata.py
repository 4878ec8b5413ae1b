"""Synthetic benchmark generator: determinism, SNR, and separability."""

import math

import numpy as np
import pytest

from gradremedy import TwoTaskDataset, generate
from gradremedy.synthdata import class_templates, export_csv, nearest_template_labels


def test_templates_are_unit_norm_with_angle_floor():
    t = class_templates(seed=0, num_classes=5, dim=16, angle_floor_deg=45.0)
    assert t.shape == (5, 16)
    np.testing.assert_allclose(np.linalg.norm(t, axis=1), 1.0, rtol=1e-12)
    ceiling = math.cos(math.radians(45.0))
    for i in range(5):
        for j in range(i + 1, 5):
            assert float(t[i] @ t[j]) <= ceiling + 1e-12


def test_templates_deterministic_in_seed():
    np.testing.assert_array_equal(
        class_templates(3, 4, 8), class_templates(3, 4, 8)
    )
    assert not np.array_equal(class_templates(3, 4, 8), class_templates(4, 4, 8))


def test_templates_impossible_floor_raises():
    # 2-D fits at most a handful of directions 45 degrees apart
    with pytest.raises(ValueError, match="could not place"):
        class_templates(seed=0, num_classes=50, dim=2, max_tries=2000)


def test_batches_are_addressable_and_order_independent():
    a = TwoTaskDataset(seed=11, num_classes=4, dim=12, snr_db=5.0)
    b = TwoTaskDataset(seed=11, num_classes=4, dim=12, snr_db=5.0)
    # request batch 3 cold on one dataset, after 0..2 on the other
    for i in range(3):
        a.train_batch(16, i)
    left, right = a.train_batch(16, 3), b.train_batch(16, 3)
    np.testing.assert_array_equal(left.noisy, right.noisy)
    np.testing.assert_array_equal(left.clean, right.clean)
    np.testing.assert_array_equal(left.labels, right.labels)


def test_train_and_eval_streams_are_disjoint():
    data = TwoTaskDataset(seed=2, num_classes=4, dim=12, snr_db=5.0)
    train = data.train_batch(32, 0)
    held_out = data.eval_batch(32, 0)
    assert not np.array_equal(train.noisy, held_out.noisy)


@pytest.mark.parametrize("snr_db", [-5.0, 0.0, 10.0, 20.0])
def test_realized_snr_matches_target(snr_db):
    # noise is normalized per batch, so the realized value is exact up to
    # float rounding, not just in expectation
    data = TwoTaskDataset(seed=6, num_classes=4, dim=32, snr_db=snr_db)
    for index in range(3):
        batch = data.train_batch(64, index)
        assert batch.realized_snr_db() == pytest.approx(snr_db, abs=1e-9)


def test_zero_jitter_returns_pure_templates():
    data = TwoTaskDataset(seed=1, num_classes=3, dim=8, snr_db=0.0, jitter_std=0.0)
    batch = data.train_batch(10, 0)
    np.testing.assert_array_equal(batch.clean, data.templates[batch.labels])


def test_template_scale_scales_clean_signal():
    small = TwoTaskDataset(seed=1, num_classes=3, dim=8, snr_db=0.0, jitter_std=0.0)
    big = TwoTaskDataset(
        seed=1, num_classes=3, dim=8, snr_db=0.0, jitter_std=0.0, template_scale=10.0
    )
    np.testing.assert_allclose(big.templates, 10.0 * small.templates, rtol=1e-15)


def test_high_snr_batches_are_separable():
    data = TwoTaskDataset(seed=4, num_classes=4, dim=32, snr_db=20.0)
    batch = data.eval_batch(256, 0)
    predicted = nearest_template_labels(batch.noisy, data.templates)
    assert float((predicted == batch.labels).mean()) >= 0.99
    # the clean view separates perfectly at default jitter
    np.testing.assert_array_equal(
        nearest_template_labels(batch.clean, data.templates), batch.labels
    )


def test_labels_and_shapes():
    batch = generate(seed=0, num_classes=5, dim=16, batch=33, snr_db=0.0)
    assert batch.noisy.shape == (33, 16)
    assert batch.clean.shape == (33, 16)
    assert batch.labels.shape == (33,)
    assert batch.labels.min() >= 0 and batch.labels.max() < 5
    assert len(batch) == 33


def test_generate_is_first_train_batch():
    data = TwoTaskDataset(seed=17, num_classes=4, dim=8, snr_db=3.0)
    np.testing.assert_array_equal(
        generate(seed=17, num_classes=4, dim=8, batch=12, snr_db=3.0).noisy,
        data.train_batch(12, 0).noisy,
    )


def test_dataset_validates_arguments():
    with pytest.raises(ValueError, match="jitter_std"):
        TwoTaskDataset(seed=0, num_classes=3, dim=8, snr_db=0.0, jitter_std=-0.1)
    with pytest.raises(ValueError, match="template_scale"):
        TwoTaskDataset(seed=0, num_classes=3, dim=8, snr_db=0.0, template_scale=0.0)
    data = TwoTaskDataset(seed=0, num_classes=3, dim=8, snr_db=0.0)
    with pytest.raises(ValueError, match="batch_size"):
        data.train_batch(0, 0)


def test_export_csv_round_trips_values(tmp_path):
    batch = generate(seed=8, num_classes=3, dim=4, batch=5, snr_db=0.0)
    path = tmp_path / "batch.csv"
    export_csv(batch, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == (
        "label,clean_0,clean_1,clean_2,clean_3,noisy_0,noisy_1,noisy_2,noisy_3"
    )
    assert len(lines) == 6
    first = lines[1].split(",")
    assert int(first[0]) == int(batch.labels[0])
    # %.12g keeps ~12 significant digits
    assert float(first[1]) == pytest.approx(batch.clean[0, 0], rel=1e-11)
