# tests/run_acceptance_scenarios.py
"""
Скрипт для прогона контрольных сценариев на синтетической матрице.
Для каждого сценария сохраняет metrics.csv и summary.txt, а общую сводку - в JSON.
"""

import json
import sys
import time
from datetime import datetime
from pathlib import Path

# Добавляем корневую директорию в путь
sys.path.append(str(Path(__file__).parent.parent))

from src.config.experiment import ExperimentConfig
from src.core.experiment import certificate_error, expected_svd_ratio, run_experiment, write_reports
from src.utils.datasets import gen_synthetic
from src.utils.logger import setup_logging


N, K = 200, 10

# Параметры CSS по умолчанию (t′=k, m=s=⌈k/2⌉); коресеты усилены до δ=0.1
_COMMON = {
    "k": K,
    "p": 1.0,
    "synthetic_n": N,
    "seeds": list(range(10)),
    "coreset_delta": 0.1
}

SCENARIOS = [
    {
        "name": "streaming",
        "description": "Потоковый merge-and-reduce против SVD и равномерного бейзлайна",
        "config": {**_COMMON, "mode": "streaming", "algorithms": ["regular", "greedy", "uniform", "svd"]}
    },
    {
        "name": "distributed",
        "description": "Однораундовый протокол на 5 серверах",
        "config": {**_COMMON, "mode": "distributed", "servers": 5, "algorithms": ["regular", "greedy", "svd"]}
    },
    {
        "name": "offline",
        "description": "Офлайн-конвейер: скетч, один коресет, CSS",
        "config": {**_COMMON, "mode": "offline", "algorithms": ["regular", "svd"]}
    }
]


def run_scenario(scenario: dict, output_root: Path) -> dict:
    """
    Запуск одного сценария.

    Returns:
        Сводка сценария для общего JSON
    """
    print(f"\n{'=' * 70}")
    print(f"🔧 ЗАПУСК СЦЕНАРИЯ: {scenario['name']}")
    print(f"{'=' * 70}")
    print(f"Описание: {scenario['description']}")

    output_dir = output_root / scenario["name"]
    cfg = ExperimentConfig.model_validate({**scenario["config"], "output_dir": str(output_dir)})

    start = time.perf_counter()
    rows, summary = run_experiment(cfg, gen_synthetic(N, K))
    elapsed = time.perf_counter() - start
    paths = write_reports(rows, summary, cfg.output_dir, cfg.irls_tol, cfg.irls_max_iter)

    svd_ratio = expected_svd_ratio(N, K)
    beats_svd = {
        item.algorithm: sum(
            1 for row in rows
            if row.algorithm == item.algorithm and row.status == "ok" and row.err_ratio < svd_ratio
        )
        for item in summary if item.algorithm != "svd"
    }

    for item in summary:
        print(f"  {item.algorithm:<8} err_ratio={item.err_ratio_mean} ± {item.err_ratio_std}")
    print(f"💾 Отчеты сохранены в: {output_dir}")

    return {
        "scenario": scenario["name"],
        "elapsed_seconds": elapsed,
        "summary": [item.model_dump() for item in summary],
        "seeds_below_svd": beats_svd,
        "failed_cells": sum(1 for row in rows if row.status != "ok"),
        "reports": paths
    }


def main():
    """Основная функция для запуска всех сценариев."""
    setup_logging("WARNING")

    print("=" * 70)
    print("🚀 ЗАПУСК КОНТРОЛЬНЫХ СЦЕНАРИЕВ")
    print("=" * 70)
    print(f"Синтетическая матрица: n={N}, k={K}")
    print(f"Ошибка SVD (ожидаемая): {N ** 2}, доля {expected_svd_ratio(N, K):.6f}")
    print(f"Ошибка подмножества-сертификата: {certificate_error(N, K):.6f} (n^1.5 = {N ** 1.5:.6f})")
    print("=" * 70)

    Path("logs").mkdir(exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    output_root = Path("results") / f"acceptance_{timestamp}"

    all_results = []
    for i, scenario in enumerate(SCENARIOS, 1):
        print(f"\n📋 Сценарий {i}/{len(SCENARIOS)}")
        try:
            result = run_scenario(scenario, output_root)
            all_results.append(result)
            print(f"✅ Сценарий завершен: ниже SVD {result['seeds_below_svd']}")
        except Exception as e:
            print(f"❌ Ошибка при выполнении сценария: {e}")
            import traceback
            traceback.print_exc()

    summary_file = f"logs/acceptance_summary_{timestamp}.json"
    with open(summary_file, "w", encoding="utf-8") as f:
        json.dump({
            "run_timestamp": datetime.now().isoformat(),
            "total_scenarios": len(SCENARIOS),
            "completed_scenarios": len(all_results),
            "results": all_results
        }, f, ensure_ascii=False, indent=2)

    print(f"\n💾 Общая сводка сохранена в: {summary_file}")


if __name__ == "__main__":
    main()
