import numpy as np
import pytest

from daol.datasets import Dataset, generate_synthetic, load_sparse_dataset, round_robin, write_sparse_dataset


def test_synthetic_points_in_unit_ball():
    data, w_true = generate_synthetic(1000, 10, 0.1, seed=1)
    assert np.all(np.linalg.norm(data.X, axis=1) <= 1.0)
    assert np.linalg.norm(w_true) == pytest.approx(1.0)


def test_synthetic_no_flips_matches_sign():
    data, w_true = generate_synthetic(2000, 5, 0.0, seed=2)
    np.testing.assert_array_equal(data.y, np.where(data.X @ w_true >= 0, 1.0, -1.0))


def test_synthetic_flip_fraction():
    data, w_true = generate_synthetic(10_000, 10, 0.1, seed=3)
    clean = np.where(data.X @ w_true >= 0, 1.0, -1.0)
    assert abs(np.mean(clean != data.y) - 0.1) <= 0.01


def test_synthetic_deterministic():
    a, _ = generate_synthetic(50, 3, 0.1, seed=9)
    b, _ = generate_synthetic(50, 3, 0.1, seed=9)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_sparse_line_examples(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("+1 1:0.5 3:0.5\n-1\n", encoding="utf-8")
    data = load_sparse_dataset(p)
    np.testing.assert_array_equal(data.y, [1, -1])
    np.testing.assert_array_equal(data.rows([0])[0], [0.5, 0, 0.5])
    np.testing.assert_array_equal(data.rows([1])[0], [0, 0, 0])


def test_sparse_round_trip(tmp_path, rng):
    X = rng.standard_normal((100, 8)) * (rng.uniform(size=(100, 8)) < 0.4)
    y = rng.choice([-1.0, 1.0], size=100)
    p = tmp_path / "rt.txt"
    write_sparse_dataset(p, Dataset(X, y))
    back = load_sparse_dataset(p, n_features=8)
    assert np.array_equal(back.rows(np.arange(100)), X)
    assert np.array_equal(back.y, y)


def test_sparse_errors_carry_line(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("+1 1:0.5\n+1 0:1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="bad.txt:2"):
        load_sparse_dataset(p)
    p.write_text("3 1:0.5\n", encoding="utf-8")
    with pytest.raises(ValueError, match="no mapping"):
        load_sparse_dataset(p)
    data = load_sparse_dataset(p, label_map={3.0: 1.0})
    assert data.y[0] == 1.0


def test_sparse_normalize(tmp_path):
    p = tmp_path / "n.txt"
    p.write_text("+1 1:3 2:4\n-1 1:0.1\n", encoding="utf-8")
    data = load_sparse_dataset(p, normalize=True)
    np.testing.assert_allclose(data.rows([0])[0], [0.6, 0.8])
    np.testing.assert_allclose(data.rows([1])[0], [0.1, 0.0])


def test_round_robin():
    data, _ = generate_synthetic(10, 2, seed=0)
    np.testing.assert_array_equal(round_robin(data, 3), [[0, 1, 2], [3, 4, 5], [6, 7, 8]])
    with pytest.raises(ValueError):
        round_robin(data, 3, 4)
