# -*- coding: utf-8 -*-
"""
运行配置测试：未知字段、相对路径、命令行覆盖、数据路径汇总。
"""
import json
import os

import pytest

from src.errors import ConfigError
from src.presets import MODEL_PRESETS
from src.run_config import (
    RunConfig,
    apply_overrides,
    load_run_config,
    resolve_data_paths,
    run_config_from_dict,
)


class TestRunConfigFromDict:
    """字典 -> RunConfig"""

    def test_defaults_are_valid(self):
        """空配置全部取默认值且通过校验"""
        config = run_config_from_dict({}, "/tmp")
        ok, msg = config.validate()
        assert ok, msg
        assert config.schedule.strategy == "continual_multitask"
        assert config.output_dir == os.path.join("/tmp", "runs", "default")

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="未知字段"):
            run_config_from_dict({"seeed": 1})

    def test_unknown_section_key(self):
        """未知字段的错误带上所在配置段"""
        with pytest.raises(ConfigError) as exc:
            run_config_from_dict({"schedule": {"budget": 3}})
        assert exc.value.context["section"] == "schedule"

    def test_section_must_be_object(self):
        with pytest.raises(ConfigError, match="必须是对象"):
            run_config_from_dict({"optimizer": [1, 2]})

    def test_relative_paths_resolved(self, tmp_path):
        config = run_config_from_dict(
            {"output_dir": "out", "data": {"train": {"news": "corpus/news.jsonl"}}},
            str(tmp_path),
        )
        assert config.output_dir == os.path.join(str(tmp_path), "out")
        assert config.data.train["news"] == os.path.join(str(tmp_path), "corpus", "news.jsonl")

    @pytest.mark.parametrize("override", [
        {"model_preset": "huge"},
        {"overflow": "drop"},
        {"schedule": {"strategy": "round_robin"}},
        {"schedule": {"tasks": ["knowledge_masking", "knowledge_masking"]}},
        {"schedule": {"tasks": ["spelling"]}},
        {"schedule": {"per_task_budget": 0}},
        {"schedule": {"head_weights": {"spelling": 1.0}}},
        {"eval": {"heldout_size": 0}},
        {"finetune": {"init": "zeros"}},
        {"finetune": {"classes": 1}},
        {"compare_seeds": []},
    ])
    def test_validation_failures(self, override):
        """各类非法取值都以 ConfigError 报出"""
        with pytest.raises(ConfigError):
            run_config_from_dict(override)

    def test_fixture_config_valid(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        assert config.schedule.per_task_budget == 6
        assert config.model_base() == dict(MODEL_PRESETS["tiny"])

    def test_model_overrides_preset(self):
        config = run_config_from_dict({"model_preset": "tiny", "model": {"layers": 1}})
        assert config.model_base()["layers"] == 1
        assert config.task_config(50).max_seq_len == MODEL_PRESETS["tiny"]["max_seq_len"]

    def test_unknown_preset_in_model_base(self):
        config = RunConfig(model_preset="huge")
        with pytest.raises(ConfigError, match="未知模型预设"):
            config.model_base()

    def test_stage_options_carry_schedule(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        options = config.stage_options(checkpoint_dir=str(tmp_path / "ckpt"))
        assert options.batch_size == 4
        assert options.checkpoint_dir == str(tmp_path / "ckpt")


class TestLoadRunConfig:
    """配置文件读取"""

    def test_none_gives_defaults(self):
        assert load_run_config(None).seed == RunConfig().seed

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="不存在"):
            load_run_config(str(tmp_path / "nope.json"))

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{seed: 1", encoding="utf-8")
        with pytest.raises(ConfigError, match="JSON"):
            load_run_config(str(path))

    def test_paths_relative_to_file(self, tmp_path):
        """相对路径以配置文件所在目录为基准"""
        sub = tmp_path / "configs"
        sub.mkdir()
        path = sub / "run.json"
        path.write_text(json.dumps({"seed": 11, "output_dir": "out"}), encoding="utf-8")
        config = load_run_config(str(path))
        assert config.seed == 11
        assert config.output_dir == os.path.join(str(sub), "out")


class TestOverrides:
    """命令行覆盖"""

    def test_apply_overrides(self, tmp_path):
        config = RunConfig()
        apply_overrides(config, seed=9, output_dir=str(tmp_path / "o"), strategy="multitask")
        assert config.seed == 9
        assert config.output_dir == str(tmp_path / "o")
        assert config.schedule.strategy == "multitask"

    def test_none_keeps_values(self):
        config = RunConfig(seed=4)
        apply_overrides(config)
        assert config.seed == 4
        assert config.schedule.strategy == "continual_multitask"

    def test_bad_strategy(self):
        with pytest.raises(ConfigError):
            apply_overrides(RunConfig(), strategy="sequential")


class TestResolveDataPaths:
    """数据路径汇总"""

    def test_manifest_paths(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        paths = resolve_data_paths(config)
        assert set(paths) == {"train", "heldout", "finetune"}
        assert "encyclopedia" in paths["train"]
        assert all(os.path.isfile(p) for p in paths["train"].values())
        assert os.path.isfile(paths["finetune"]["train"])

    def test_explicit_entry_wins(self, run_config_dict, tmp_path):
        """显式 data.train 覆盖清单中同一语料"""
        custom = tmp_path / "news.jsonl"
        custom.write_text("", encoding="utf-8")
        run_config_dict["data"]["train"] = {"news": str(custom)}
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        assert resolve_data_paths(config)["train"]["news"] == str(custom)

    def test_no_train_data(self):
        with pytest.raises(ConfigError, match="训练语料"):
            resolve_data_paths(RunConfig())

    def test_missing_file(self, tmp_path):
        config = run_config_from_dict({"data": {"train": {"news": "missing.jsonl"}}}, str(tmp_path))
        with pytest.raises(ConfigError) as exc:
            resolve_data_paths(config)
        assert exc.value.context["tag"] == "news"
        assert exc.value.context["split"] == "train"
