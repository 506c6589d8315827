# tests/test_sketching.py
"""
Тестирование p-устойчивых величин, плотных скетчей и разреженных вложений.
"""

import sys
import os
import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

# Добавляем путь к src
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.core.errors import DimensionMismatchError, InvalidParameterError
from src.core.rng import derive_seed, make_generator
from src.core.sketching import (
    apply_sketch,
    cms_transform,
    default_sketch_rows,
    experiment_sketch_rows,
    make_p_stable_sketch,
    make_sparse_embedding,
    sample_p_stable,
    sample_p_stable_array,
    sketch_from_spec
)


def _reference_p_stable(p: float, size: int, seed: int) -> np.ndarray:
    """Независимая запись той же формулы через V = π(U - 1/2) и W = -ln(U')."""
    rng = np.random.default_rng(seed)
    V = math.pi * (rng.random(size) - 0.5)
    W = -np.log1p(-rng.random(size))
    return (
        np.sin(p * V) / np.cos(V) ** (1 / p)
        * (np.cos(V - p * V) / W) ** ((1 - p) / p)
    )


def test_cauchy_formula_reduces_to_tangent():
    assert cms_transform(1.0, math.pi / 4, 0.37) == pytest.approx(1.0, rel=1e-12)
    theta = np.linspace(-1.4, 1.4, 9)
    assert np.allclose(cms_transform(1.0, theta, 0.5), np.tan(theta))


def test_cauchy_median_of_absolute_value():
    rng = make_generator(2024)
    draws = sample_p_stable_array(1.0, rng, 100_000)
    assert abs(np.median(np.abs(draws)) - 1.0) < 0.05


def test_p_stable_matches_reference_implementation():
    draws = sample_p_stable_array(1.5, make_generator(7), 100_000)
    reference = _reference_p_stable(1.5, 100_000, 8)
    assert ks_2samp(draws, reference).statistic < 0.02


def test_p_stability_of_inner_products():
    p = 1.5
    v = np.array([1.0, -2.0, 0.5])
    X = sample_p_stable_array(p, make_generator(11), (100_000, 3))
    Z = sample_p_stable_array(p, make_generator(12), 100_000)
    norm_v = np.sum(np.abs(v) ** p) ** (1 / p)
    assert ks_2samp(X @ v, norm_v * Z).statistic <= 0.03


def test_scalar_sample_is_finite():
    rng = make_generator(3)
    for _ in range(1000):
        assert math.isfinite(sample_p_stable(1.2, rng))


def test_sketch_construction_identity():
    seed = derive_seed(5, "sketch")
    sketch = make_p_stable_sketch(1, 1, 1.3, seed, scale_c=2.5)
    expected = 2.5 * sample_p_stable(1.3, make_generator(seed))
    assert sketch.entries[0, 0] == pytest.approx(expected, rel=1e-12)


def test_sketch_seed_determinism():
    first = make_p_stable_sketch(20, 7, 1.0, 99)
    second = make_p_stable_sketch(20, 7, 1.0, 99)
    other = make_p_stable_sketch(20, 7, 1.0, 100)
    assert np.array_equal(first.entries, second.entries)
    assert not np.array_equal(first.entries, other.entries)
    assert np.all(np.isfinite(first.entries))

    restored = sketch_from_spec(first.to_spec())
    assert np.array_equal(restored.entries, first.entries)


@pytest.mark.parametrize("p", [1.0, 1.5])
def test_no_contraction(p):
    t, d = 200, 50
    sketch = make_p_stable_sketch(t, d, p, 123, scale_c=2.0)
    rng = np.random.default_rng(321)
    Y = rng.standard_normal((d, 500))
    Y /= np.sum(np.abs(Y) ** p, axis=0) ** (1 / p)

    SY = apply_sketch(sketch, Y)
    sketched_norms = np.sum(np.abs(SY) ** p, axis=0) ** (1 / p)
    assert np.mean(sketched_norms >= 1.0) >= 0.99


def test_apply_sketch_override_and_dimensions():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((4, 3))
    assert np.array_equal(apply_sketch(np.eye(4), A), A)

    with pytest.raises(DimensionMismatchError):
        apply_sketch(make_p_stable_sketch(3, 5, 1.0, 1), A)
    with pytest.raises(DimensionMismatchError):
        apply_sketch(make_sparse_embedding(3, 5, 1, 1), A)


def test_sparse_single_nonzero_per_column():
    S = make_sparse_embedding(6, 4, 1, 17)
    dense = S.matrix.toarray()
    assert np.all(np.count_nonzero(dense, axis=0) == 1)

    e = np.zeros(4)
    e[2] = 3.0
    out = apply_sketch(S, e)[:, 0]
    assert np.count_nonzero(out) == 1
    assert np.abs(out).max() == pytest.approx(3.0)


def test_sparse_matches_dense_multiply():
    S = make_sparse_embedding(16, 40, 3, 5)
    A = np.random.default_rng(2).standard_normal((40, 7))
    assert np.allclose(apply_sketch(S, A), S.matrix.toarray() @ A, atol=1e-12, rtol=0)


def test_sparse_embedding_structure():
    full = make_sparse_embedding(5, 8, 5, 3).matrix.toarray()
    assert np.allclose(np.abs(full), 1 / math.sqrt(5))

    S = make_sparse_embedding(16, 30, 4, 9).matrix.toarray()
    assert np.all(np.count_nonzero(S, axis=0) == 4)
    assert np.allclose(np.abs(S[S != 0]), 0.5)
    assert np.allclose(np.sum(S ** 2, axis=0), 1.0, atol=1e-12)

    with pytest.raises(InvalidParameterError):
        make_sparse_embedding(3, 8, 4, 1)


def test_sparse_subspace_embedding():
    k, n = 8, 400
    m = 16 * k
    s = max(1, math.ceil(math.log2(k)) ** 2)
    U, _ = np.linalg.qr(np.random.default_rng(77).standard_normal((n, k)))

    good = 0
    for seed in range(100):
        S = make_sparse_embedding(m, n, s, seed)
        sv = np.linalg.svd(apply_sketch(S, U), compute_uv=False)
        if sv.min() > 0.5 and sv.max() < 1.5:
            good += 1
    assert good >= 90


def test_default_row_counts():
    assert experiment_sketch_rows(210) == 105
    assert experiment_sketch_rows(5) == 3
    assert default_sketch_rows(16, 4, 2) == 2 * 36


if __name__ == "__main__":
    for name, func in list(globals().items()):
        if name.startswith("test_") and callable(func):
            if name == "test_no_contraction":
                for p in (1.0, 1.5):
                    func(p)
            else:
                func()
            print(f"✅ {name}")
