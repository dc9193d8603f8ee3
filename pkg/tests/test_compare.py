# -*- coding: utf-8 -*-
"""
策略对比测试：预算一致性、报告结构、遗忘量统计。
"""
import json
import os

import pytest

from src.compare import (
    REPORT_JSON,
    REPORT_TEXT,
    STRATEGY_ORDER,
    ComparisonReport,
    StrategyRun,
    check_equal_budgets,
    compare_strategies,
)
from src.pretrain import TRACE_FILE
from src.run_config import run_config_from_dict
from src.scheduler import Strategy, read_jsonl
from src.synthetic import SyntheticSpec, gen_synthetic_corpus


def _run(strategy, seed, metrics, finetune=None):
    return StrategyRun(strategy.value, seed, [[1]], {0: 1}, metrics, finetune)


class TestStrategyRun:
    """单次运行的统计"""

    def test_forgetting_from_peak(self):
        run = _run(Strategy.CONTINUAL, 1, {0: {0: 0.8}, 1: {0: 0.6, 1: 0.5}, 2: {0: 0.7, 1: 0.9}})
        assert run.forgetting(0) == pytest.approx(0.1)
        assert run.forgetting(1) == 0.0
        assert run.forgetting(6) == 0.0
        assert run.final_metrics() == {0: 0.7, 1: 0.9}

    def test_to_dict_string_keys(self):
        data = _run(Strategy.MULTITASK, 2, {0: {4: 0.5}}).to_dict()
        assert data["metrics"] == {"0": {"4": 0.5}}
        assert data["task_counts"] == {"0": 1}


class TestComparisonReport:
    """中位数与报告格式"""

    @pytest.fixture
    def report(self):
        runs = [
            _run(Strategy.CONTINUAL, 1, {0: {0: 0.9}, 1: {0: 0.5}}, 0.7),
            _run(Strategy.CONTINUAL, 2, {0: {0: 0.8}, 1: {0: 0.6}}, 0.8),
            _run(Strategy.CONTINUAL, 3, {0: {0: 0.7}, 1: {0: 0.7}}, 0.9),
            _run(Strategy.CONTINUAL_MULTITASK, 1, {0: {0: 0.6}, 1: {0: 0.8}}),
        ]
        return ComparisonReport([0], [1, 2, 3], 10, runs)

    def test_medians(self, report):
        assert report.median_final(Strategy.CONTINUAL, 0) == pytest.approx(0.6)
        assert report.median_metric(Strategy.CONTINUAL, 0, 0) == pytest.approx(0.8)
        assert report.median_forgetting(Strategy.CONTINUAL) == pytest.approx(0.2)
        assert report.median_finetune(Strategy.CONTINUAL) == pytest.approx(0.8)
        assert report.median_finetune(Strategy.CONTINUAL_MULTITASK) is None
        assert report.median_final(Strategy.MULTITASK, 0) is None

    def test_to_dict(self, report):
        data = report.to_dict()
        assert set(data["median"]) == {s.value for s in STRATEGY_ORDER}
        assert data["median"]["continual"]["forgetting_first_task"] == pytest.approx(0.2)
        assert len(data["runs"]) == 4

    def test_format_text_skips_missing_strategy(self, report):
        text = report.format_text()
        assert "== continual (" in text
        assert "== multitask (" not in text
        assert "fine-tune accuracy: 0.8000" in text


class TestCompareStrategies:
    """三种方式的完整对比 (tiny 模型)"""

    def test_equal_budgets(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        plans = check_equal_budgets(config)
        assert set(plans) == {s.value for s in STRATEGY_ORDER}
        for allocation in plans.values():
            assert [sum(col) for col in zip(*allocation)] == [6, 6, 6, 6]
        assert plans["multitask"] == [[6, 6, 6, 6]]

    def test_report_files(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        report = compare_strategies(config, seeds=[1], with_finetune=False)
        assert len(report.runs) == 3
        assert os.path.isfile(os.path.join(config.output_dir, REPORT_TEXT))
        with open(os.path.join(config.output_dir, REPORT_JSON), encoding="utf-8") as f:
            data = json.load(f)
        assert data["seeds"] == [1]
        assert data["tasks"] == [0, 1, 4, 6]
        for run in report.runs:
            assert run.finetune is None
            assert sum(run.task_counts.values()) == 24
            assert os.path.isdir(os.path.join(config.output_dir, run.strategy, "seed_1"))

    def test_same_starting_point(self, run_config_dict, tmp_path):
        """同一种子下三种方式从相同参数出发：第一步都是知识掩码且 loss 相同"""
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        report = compare_strategies(config, seeds=[1], with_finetune=False)
        first = [read_jsonl(os.path.join(run.output_dir, TRACE_FILE))[0] for run in report.runs]
        assert {row["task_id"] for row in first} == {0}
        assert len({row["loss"] for row in first}) == 1

    def test_with_finetune(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        report = compare_strategies(config, seeds=[2], with_finetune=True)
        assert all(0.0 <= run.finetune <= 1.0 for run in report.runs)


@pytest.mark.slow
class TestForgettingDirection:
    """三个种子取中位数的遗忘方向 (耗时)"""

    def test_continual_forgets_most(self, tmp_path):
        data_dir = str(tmp_path / "data")
        gen_synthetic_corpus(SyntheticSpec(), 1, data_dir)
        config = run_config_from_dict({
            "output_dir": str(tmp_path / "compare"),
            "model_preset": "desk",
            "data": {"manifest": data_dir},
            "schedule": {"per_task_budget": 500, "reserve": 100, "log_every": 0},
        }, str(tmp_path))
        report = compare_strategies(config, seeds=[1, 2, 3], workers=3, with_finetune=False)

        first_task = report.tasks[0]
        assert report.median_final(Strategy.CONTINUAL_MULTITASK, first_task) > \
            report.median_final(Strategy.CONTINUAL, first_task)
        drops = {s: report.median_forgetting(s) for s in STRATEGY_ORDER}
        assert drops[Strategy.CONTINUAL] == max(drops.values())
