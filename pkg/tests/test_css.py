# tests/test_css.py
"""
Тестирование подпрограмм k-CSS_{p,2}: регулярного выбора по весам Льюиса
и ленивого жадного выбора.
"""

import sys
import os
from itertools import combinations

import numpy as np
import pytest
from pydantic import ValidationError

# Добавляем путь к src
sys.path.append(os.path.join(os.path.dirname(__file__), '..'))

from src.core.coreset import WeightedColumnSet
from src.core.css import (
    CSSConfig,
    GreedySelector,
    greedy_css_p2,
    phi_utility,
    regular_css_p2,
    run_css,
    select_from_coreset,
    uniform_column_sample
)
from src.core.errors import InvalidParameterError
from src.core.numerics import lp2_norm, projection_cost_p2, pseudoinverse
from src.core.rng import derive_seed


def test_regular_recovers_exact_low_rank():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 20))
    cfg = CSSConfig(embedding_rows=4, embedding_sparsity=2, t_prime=6)

    exact = 0
    for seed in range(20):
        result = regular_css_p2(A, 2, 1.0, cfg, seed=seed)
        if result.err_p2 <= 1e-8 * lp2_norm(A, 1.0):
            exact += 1
    assert exact >= 17


def test_regular_factors_and_indices():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((6, 15))
    result = regular_css_p2(A, 3, 1.5, CSSConfig(embedding_rows=4, t_prime=5), seed=3)

    assert result.indices.size == 5
    assert np.all((result.indices >= 0) & (result.indices < 15))
    assert np.array_equal(result.left_factor, A[:, result.indices])
    assert np.allclose(result.right_factor, pseudoinverse(result.left_factor) @ A)
    assert result.err_p2 == pytest.approx(projection_cost_p2(result.left_factor, A, 1.5), rel=1e-12)


def test_regular_within_factor_of_brute_force():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((6, 8))
    k, p = 2, 1.0
    best = min(projection_cost_p2(A[:, list(T)], A, p) for T in combinations(range(8), k))

    cfg = CSSConfig(embedding_rows=4, embedding_sparsity=2, t_prime=8)
    within = sum(
        regular_css_p2(A, k, p, cfg, seed=seed).err_p2 <= 3 * best
        for seed in range(10)
    )
    assert within >= 9


def test_regular_dedup_and_rescale():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((4, 6))

    deduped = regular_css_p2(A, 2, 1.0, CSSConfig(t_prime=30, dedup=True), seed=6)
    assert deduped.indices.size == np.unique(deduped.indices).size

    plain = regular_css_p2(A, 2, 1.0, CSSConfig(t_prime=4), seed=7)
    scaled = regular_css_p2(A, 2, 1.0, CSSConfig(t_prime=4, rescale=True), seed=7)
    assert np.array_equal(plain.indices, scaled.indices)
    assert scaled.err_p2 == pytest.approx(plain.err_p2, rel=1e-8, abs=1e-12)


def test_regular_is_deterministic():
    A = np.random.default_rng(8).standard_normal((5, 12))
    cfg = CSSConfig(t_prime=4)
    first = regular_css_p2(A, 2, 1.2, cfg, seed=9)
    second = regular_css_p2(A, 2, 1.2, cfg, seed=9)
    assert np.array_equal(first.indices, second.indices)
    assert first.err_p2 == second.err_p2


def test_zero_matrix_selection():
    result = regular_css_p2(np.zeros((3, 5)), 2, 1.0, seed=1)
    assert result.indices.size == 2
    assert result.err_p2 == 0.0


def test_greedy_picks_dominant_column():
    rng = np.random.default_rng(10)
    A = 0.01 * rng.standard_normal((5, 8))
    A[:, 3] = [100.0, 0.0, 0.0, 0.0, 0.0]
    result = greedy_css_p2(A, 1, 1.0, pool_size=8, seed=11)
    assert result.indices.tolist() == [3]


def test_greedy_histories_are_monotone():
    A = np.random.default_rng(12).standard_normal((8, 30))
    result = greedy_css_p2(A, 4, 1.3, r=6, seed=13)
    phi = result.meta["phi_history"]
    err = result.meta["err_history"]

    assert len(phi) == len(err) == 7
    assert all(b >= a - 1e-9 for a, b in zip(phi, phi[1:]))
    assert all(b <= a + 1e-9 for a, b in zip(err, err[1:]))
    assert err[-1] == pytest.approx(result.err_p2, rel=1e-8)


def test_greedy_incremental_residuals_match_recomputation():
    A = np.random.default_rng(14).standard_normal((7, 25))
    selector = GreedySelector(A, 3, 1.5, seed=15)
    for _ in range(5):
        selector.step()
        T = selector.state.selected
        assert selector.state.err_p2 == pytest.approx(
            projection_cost_p2(A[:, T], A, 1.5), rel=1e-8
        )
        assert selector.state.phi == pytest.approx(phi_utility(A, T, 1.5), rel=1e-8, abs=1e-10)


def test_greedy_step_is_exact_minimizer_with_full_pool():
    rng = np.random.default_rng(16)
    A = rng.standard_normal((5, 6))
    selector = GreedySelector(A, 3, 1.0, pool_size=6, seed=17)

    for _ in range(3):
        before = list(selector.state.selected)
        chosen = selector.step()
        candidates = [j for j in range(6) if j not in before]
        costs = {j: projection_cost_p2(A[:, before + [j]], A, 1.0) for j in candidates}
        assert costs[chosen] <= min(costs.values()) * (1 + 1e-9)


@pytest.mark.parametrize("p", [1.0, 1.5])
def test_greedy_pair_against_all_pairs(p):
    rng = np.random.default_rng(30)
    for trial in range(10):
        A = rng.standard_normal((5, 6))
        result = greedy_css_p2(A, 2, p, r=2, delta=1e-9, seed=trial)
        assert result.indices.size == 2

        costs = {T: projection_cost_p2(A[:, list(T)], A, p) for T in combinations(range(6), 2)}
        assert len(costs) == 15
        chosen = projection_cost_p2(A[:, result.indices], A, p)

        # Точный жадный путь по всем столбцам
        first = min(range(6), key=lambda j: projection_cost_p2(A[:, [j]], A, p))
        greedy_best = min(costs[tuple(sorted((first, j)))] for j in range(6) if j != first)

        assert chosen == pytest.approx(greedy_best, rel=1e-9)
        assert min(costs.values()) <= chosen + 1e-9
        assert chosen <= 1.5 * min(costs.values())


def test_greedy_stops_when_columns_run_out():
    A = np.random.default_rng(18).standard_normal((5, 4))
    result = greedy_css_p2(A, 2, 1.0, r=6, seed=19)
    assert sorted(result.indices.tolist()) == [0, 1, 2, 3]
    assert result.meta["early_stop"] is True
    assert result.err_p2 < 1e-8


def test_greedy_handles_repeated_columns():
    column = np.array([1.0, 2.0, 3.0])
    A = np.column_stack([column, column, 2 * column])
    result = greedy_css_p2(A, 1, 1.0, r=3, pool_size=3, seed=20)
    assert result.indices.size == 3
    assert result.err_p2 < 1e-10


def test_phi_is_monotone_in_subsets():
    A = np.random.default_rng(21).standard_normal((6, 10))
    p = 1.4
    for T in combinations(range(10), 3):
        phi_T = phi_utility(A, T, p)
        for size in range(3):
            for S in combinations(T, size):
                assert phi_utility(A, S, p) <= phi_T + 1e-9
    assert phi_utility(A, [], p) == 0.0


def test_run_css_dispatch():
    A = np.random.default_rng(22).standard_normal((4, 10))
    assert run_css(A, 2, 1.0, CSSConfig(algorithm="greedy"), seed=1).meta["algorithm"] == "greedy"
    assert run_css(A, 2, 1.0, seed=1).meta["algorithm"] == "regular"


def test_select_from_coreset_maps_to_global_indices():
    rng = np.random.default_rng(23)
    A = rng.standard_normal((6, 10))
    SA = rng.standard_normal((3, 10))
    global_indices = np.arange(100, 110)
    combined = WeightedColumnSet.from_columns(SA, A, global_indices, 1.0)

    result = select_from_coreset(combined, 2, CSSConfig(t_prime=3), seed=24)
    positions = result.meta["positions"]
    assert np.array_equal(result.indices, global_indices[positions])
    assert np.array_equal(result.left_factor, A[:, positions])
    assert result.meta["coreset_columns"] == 10
    assert result.err_p2 is None and result.right_factor is None
    direct = run_css(SA, 2, 1.0, CSSConfig(t_prime=3), seed=derive_seed(24, "css"))
    assert result.meta["coreset_err_p2"] == pytest.approx(direct.err_p2, rel=1e-12)


def test_uniform_column_sample():
    indices = uniform_column_sample(20, 5, seed=3)
    assert indices.size == 5 == np.unique(indices).size
    assert np.array_equal(indices, uniform_column_sample(20, 5, seed=3))
    assert uniform_column_sample(3, 5, seed=3).tolist() == [0, 1, 2]


def test_parameter_validation():
    A = np.ones((3, 4))
    with pytest.raises(ValidationError):
        CSSConfig(embedding_rows=2, embedding_sparsity=3)
    with pytest.raises(ValidationError):
        CSSConfig(unknown_key=1)
    with pytest.raises(InvalidParameterError):
        regular_css_p2(A, 0, 1.0)
    with pytest.raises(InvalidParameterError):
        greedy_css_p2(A, 5, 1.0)
    with pytest.raises(InvalidParameterError):
        GreedySelector(A, 2, 1.0, delta=1.5)


if __name__ == "__main__":
    for name, func in list(globals().items()):
        if name.startswith("test_") and callable(func):
            if name == "test_greedy_pair_against_all_pairs":
                for p in (1.0, 1.5):
                    func(p)
            else:
                func()
            print(f"✅ {name}")
