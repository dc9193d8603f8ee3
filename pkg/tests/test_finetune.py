# -*- coding: utf-8 -*-
"""
下游微调测试：TSV 读取、初始化方式、结果文件与学习效果。
"""
import json
import os

import numpy as np
import pytest

from src.checkpoint import load_checkpoint
from src.errors import ConfigError, CorpusFormatError, LabelError
from src.finetune import RESULT_FILE, load_finetune_examples, resolve_finetune_paths, run_finetune
from src.pretrain import run_pretrain
from src.run_config import run_config_from_dict
from src.synthetic import SyntheticSpec, gen_synthetic_corpus


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestLoadExamples:
    """微调 TSV"""

    def test_single_sentence(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "0\tthe sea is calm\n\n1\tchess clubs meet\n")
        examples = load_finetune_examples(path)
        assert [e.label for e in examples] == [0, 1]
        assert examples[0].text_b is None

    def test_sentence_pairs(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "2\tis it raining\tyes it rains\n")
        example = load_finetune_examples(path)[0]
        assert (example.label, example.text_b) == (2, "yes it rains")

    def test_mixed_columns(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "0\tone\n1\ttwo\tthree\n")
        with pytest.raises(CorpusFormatError) as exc:
            load_finetune_examples(path)
        assert exc.value.context["line"] == 2

    def test_wrong_column_count(self, tmp_path):
        path = _write(tmp_path / "a.tsv", "0\ta\tb\tc\n")
        with pytest.raises(CorpusFormatError, match="列"):
            load_finetune_examples(path)

    @pytest.mark.parametrize("label", ["-1", "pos", "1.5"])
    def test_bad_label(self, tmp_path, label):
        path = _write(tmp_path / "a.tsv", f"{label}\tsome text\n")
        with pytest.raises(LabelError):
            load_finetune_examples(path)


class TestResolvePaths:
    """微调文件路径"""

    def test_from_manifest(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        paths = resolve_finetune_paths(config)
        assert paths["classes"] == 2
        assert os.path.isfile(paths["train"]) and os.path.isfile(paths["dev"])

    def test_missing_dev(self, tmp_path):
        train = _write(tmp_path / "train.tsv", "0\ta\n1\tb\n")
        config = run_config_from_dict({"finetune": {"train": train}}, str(tmp_path))
        with pytest.raises(ConfigError, match="finetune.dev"):
            resolve_finetune_paths(config)


class TestRunFinetune:
    """微调流程"""

    def test_random_init_without_checkpoint(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        result = run_finetune(config, init="random")
        # 80 条训练样本, batch 8, 1 个 epoch
        assert result.steps == 10
        assert len(result.losses) == 10
        assert result.class_count == 2
        assert 0.0 <= result.accuracy <= 1.0
        with open(os.path.join(config.output_dir, RESULT_FILE), encoding="utf-8") as f:
            saved = json.load(f)
        assert saved["accuracy"] == result.accuracy
        assert os.path.basename(result.checkpoint) == "finetune_classifier_random.ckpt"

    def test_zero_epochs_is_chance_level(self, run_config_dict, tmp_path):
        """不训练时分类头只能给出接近随机的准确率"""
        run_config_dict["finetune"]["epochs"] = 0
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        result = run_finetune(config, init="random", save=False)
        assert result.steps == 0
        assert result.losses == []
        assert result.chance == 0.5
        assert abs(result.accuracy - result.chance) <= 0.3
        assert result.checkpoint is None

    def test_pretrained_needs_checkpoint(self, run_config_dict, tmp_path):
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        with pytest.raises(ConfigError, match="检查点"):
            run_finetune(config, init="pretrained")

    def test_from_pretrained_checkpoint(self, run_config_dict, tmp_path):
        """预训练检查点 + 新分类头；检查点中保存词表与头"""
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        pretrained = run_pretrain(config)
        result = run_finetune(config, pretrained.final_checkpoint)
        assert result.init == "pretrained"
        saved = load_checkpoint(result.checkpoint)
        assert saved.params.config.head_arities["classifier"] == 2
        assert "knowledge_masking" in saved.params.config.head_arities
        assert saved.metadata["vocab"] == load_checkpoint(pretrained.final_checkpoint).metadata["vocab"]

    @pytest.mark.parametrize("task_id", [0, 3, 6])
    def test_any_task_id(self, run_config_dict, tmp_path, task_id):
        """微调时可以使用任意任务 id 的任务嵌入"""
        run_config_dict["finetune"]["task_id"] = task_id
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        pretrained = run_pretrain(config)
        result = run_finetune(config, pretrained.final_checkpoint, save=False)
        assert np.isfinite(result.losses).all()

    def test_label_beyond_classes(self, run_config_dict, tmp_path):
        run_config_dict["finetune"]["train"] = _write(tmp_path / "t.tsv", "0\ta b\n2\tc d\n")
        run_config_dict["finetune"]["dev"] = _write(tmp_path / "d.tsv", "0\ta b\n")
        config = run_config_from_dict(run_config_dict, str(tmp_path))
        with pytest.raises(LabelError):
            run_finetune(config, init="random", save=False)

    def test_single_class(self, tmp_path):
        train = _write(tmp_path / "t.tsv", "0\ta b\n0\tc d\n")
        dev = _write(tmp_path / "d.tsv", "0\ta b\n")
        config = run_config_from_dict(
            {"model_preset": "tiny", "finetune": {"train": train, "dev": dev}}, str(tmp_path)
        )
        with pytest.raises(ConfigError, match="至少为 2"):
            run_finetune(config, init="random", save=False)


@pytest.mark.slow
class TestFinetuneLearning:
    """微调学习效果 (耗时)"""

    @pytest.fixture
    def topic_config(self, tmp_path):
        data_dir = str(tmp_path / "data")
        gen_synthetic_corpus(SyntheticSpec(), 5, data_dir)
        return {
            "seed": 5,
            "output_dir": str(tmp_path / "run"),
            "model_preset": "desk",
            "data": {"manifest": data_dir},
            "schedule": {"per_task_budget": 150, "reserve": 30, "log_every": 0},
            "eval": {"heldout_size": 50},
            "finetune": {"epochs": 8, "lr": 2e-3},
        }

    def test_separable_task_learned(self, topic_config, tmp_path):
        """主题词线性可分的二分类任务，验证集准确率 > 0.9"""
        config = run_config_from_dict(topic_config, str(tmp_path))
        result = run_finetune(config, init="random", save=False)
        assert result.accuracy > 0.9

    def test_pretrained_not_worse_than_random(self, topic_config, tmp_path):
        """三个种子的中位数：预训练初始化不差于随机初始化 (容许 0.05 的统计波动)"""
        topic_config["finetune"]["epochs"] = 2
        pretrained, scratch = [], []
        for seed in (1, 2, 3):
            topic_config["seed"] = seed
            topic_config["output_dir"] = str(tmp_path / f"seed_{seed}")
            config = run_config_from_dict(topic_config, str(tmp_path))
            ckpt = run_pretrain(config).final_checkpoint
            pretrained.append(run_finetune(config, ckpt, init="pretrained", save=False).accuracy)
            scratch.append(run_finetune(config, ckpt, init="random", save=False).accuracy)
        assert np.median(pretrained) >= np.median(scratch) - 0.05
