# -*- coding: utf-8 -*-
"""
模型测试用例。

在 float64 的最小结构上，用中心差分 (eps=1e-4) 校验每个输出头的反向传播，
并检查 [CLS] 读取约定、pad 屏蔽与任务嵌入。
"""
import numpy as np
import pytest

from src import numerics as nx
from src.corpus import DiscoursePair, RelationVocabulary
from src.errors import ConfigError, EmptyLossMaskError, GraphError
from src.model import (
    ModelConfig,
    add_head,
    build_model_config,
    forward,
    head_level,
    head_logits,
    head_loss,
    init_params,
    loss_and_grads,
    predict,
)
from src.streams import collate
from src.tasks import (
    TASK_SPECS,
    LossLevel,
    make_capitalization,
    make_classification_instance,
    make_discourse_relation,
    make_fused_instance,
    make_ir_relevance,
    make_knowledge_masking,
    make_sentence_distance,
    make_sentence_reordering,
    make_token_document_relation,
)

GRAD_EPS = 1e-4
GRAD_TOLERANCE = 1e-3
RELATIONS = RelationVocabulary(["cause", "contrast"])


@pytest.fixture
def model_params(tiny_model_base, toy_vocab):
    """float64 精度、初始化尺度放大后的全任务模型。"""
    base = dict(tiny_model_base, precision="float64", init_std=0.3)
    config = build_model_config(base, len(toy_vocab), list(TASK_SPECS), relation_count=len(RELATIONS))
    return init_params(config, seed=0)


def head_batch(name, docs, vocab, config):
    """为指定头构造两条样本的 batch。"""
    rng = np.random.default_rng(1)
    if name == "knowledge_masking":
        insts = [make_knowledge_masking(d, rng, config) for d in docs[:2]]
    elif name == "capitalization":
        insts = [make_capitalization(d, config) for d in docs[2:4]]
    elif name == "token_document_relation":
        insts = [make_token_document_relation(docs[0], 0, config), make_token_document_relation(docs[3], 1, config)]
    elif name == "sentence_reordering":
        insts = [make_sentence_reordering(d, 3, rng, config) for d in (docs[0], docs[2])]
    elif name == "sentence_distance":
        insts = [make_sentence_distance(docs, rng, config, label) for label in (0, 2)]
    elif name == "discourse_relation":
        insts = [
            make_discourse_relation(DiscoursePair("prices rose", "but traders were happy", "contrast"), RELATIONS, vocab, config),
            make_discourse_relation(DiscoursePair("snow fell", "children built a snowman", "cause"), RELATIONS, vocab, config),
        ]
    elif name == "ir_relevance":
        insts = [
            make_ir_relevance("old harbor", "the harbor was quiet today", 0, vocab, config),
            make_ir_relevance("chess", "fish live in rivers", 2, vocab, config),
        ]
    else:
        insts = [
            make_classification_instance("Bob likes chess", None, 1, vocab, config),
            make_classification_instance("prices rose quickly", "traders were happy", 0, vocab, config),
        ]
    return collate(insts)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """相对误差；分母有下限，理论上为 0 的梯度 (如 key 偏置) 只比较绝对误差。"""
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-6))


def gradient_check(params, batch, heads, coords_per_tensor=3):
    """对每个有梯度的参数随机抽取若干坐标做中心差分，返回 (参数名 -> 相对误差)。"""
    _, grads = loss_and_grads(params, batch, heads)
    rng = np.random.default_rng(0)
    errors = {}
    for name in sorted(grads):
        value = params.tensors[name]
        picks = [tuple(int(rng.integers(s)) for s in value.shape) for _ in range(coords_per_tensor)]
        analytic, numeric = [], []
        for idx in picks:
            original = value[idx]
            value[idx] = original + GRAD_EPS
            plus, _ = loss_and_grads(params, batch, heads)
            value[idx] = original - GRAD_EPS
            minus, _ = loss_and_grads(params, batch, heads)
            value[idx] = original
            analytic.append(grads[name][idx])
            numeric.append((plus - minus) / (2 * GRAD_EPS))
        errors[name] = relative_error(np.array(analytic), np.array(numeric))
    return errors


class TestModelConfig:
    """测试模型配置"""

    def test_arity_resolution(self, model_params, toy_vocab):
        """测试各头类别数按任务补全"""
        arities = model_params.config.head_arities
        assert arities["knowledge_masking"] == len(toy_vocab)
        assert arities["sentence_reordering"] == 9
        assert arities["discourse_relation"] == 2
        assert arities["sentence_distance"] == 3

    def test_invalid_structure(self, tiny_model_base):
        """测试 d_model 不能被 heads 整除"""
        with pytest.raises(ConfigError):
            build_model_config(dict(tiny_model_base, heads=3), 50, ["capitalization"])

    def test_missing_vocab(self):
        """测试词表大小未设置"""
        ok, msg = ModelConfig().validate()
        assert not ok and "vocab_size" in msg

    def test_same_seed_same_params(self, model_params):
        """测试同一种子初始化完全相同"""
        again = init_params(model_params.config, seed=0)
        assert all(np.array_equal(again.tensors[k], v) for k, v in model_params.tensors.items())

    def test_unknown_head_is_sentence_level(self):
        """测试未登记的头 (微调分类头) 为句子级"""
        assert head_level("classifier") == LossLevel.SENTENCE
        assert head_level("capitalization") == LossLevel.TOKEN


class TestGradients:
    """测试每个输出头的梯度 (float64 中心差分)"""

    @pytest.mark.parametrize("name", list(TASK_SPECS))
    def test_pretraining_heads(self, model_params, toy_documents, toy_vocab, task_config, name):
        """测试七个预训练头"""
        batch = head_batch(name, toy_documents, toy_vocab, task_config)
        errors = gradient_check(model_params, batch, [name])
        assert f"head.{name}.bias" in errors or f"head.{name}.b" in errors
        worst = max(errors, key=errors.get)
        assert errors[worst] < GRAD_TOLERANCE, (worst, errors[worst])

    def test_finetune_head(self, model_params, toy_documents, toy_vocab, task_config):
        """测试微调分类头"""
        params = add_head(model_params, "classifier", 2, seed=5)
        batch = head_batch("classifier", toy_documents, toy_vocab, task_config)
        errors = gradient_check(params, batch, ["classifier"])
        assert max(errors.values()) < GRAD_TOLERANCE

    def test_fused_heads(self, model_params, toy_documents, task_config):
        """测试融合样本上两个 token 头加权求和"""
        rng = np.random.default_rng(2)
        batch = collate([make_fused_instance(d, rng, task_config) for d in toy_documents[:2]])
        heads = ["knowledge_masking", "capitalization"]
        errors = gradient_check(model_params, batch, heads, coords_per_tensor=2)
        assert max(errors.values()) < GRAD_TOLERANCE

    def test_only_used_params_get_gradients(self, model_params, toy_documents, task_config):
        """测试只有参与计算的参数出现在梯度里"""
        batch = head_batch("capitalization", toy_documents, None, task_config)
        _, grads = loss_and_grads(model_params, batch, ["capitalization"])
        assert "head.capitalization.w" in grads
        assert "head.ir_relevance.w" not in grads
        assert "pooler.w" not in grads


class TestForwardContracts:
    """测试前向约定"""

    def test_sentence_head_reads_only_cls(self, model_params, toy_documents, toy_vocab, task_config):
        """测试句子级 logits 只依赖位置 0 的编码"""
        batch = head_batch("ir_relevance", toy_documents, toy_vocab, task_config)
        graph, encoded = forward(model_params, batch)
        modified = encoded.numpy().copy()
        modified[:, 1:, :] = np.random.default_rng(0).standard_normal(modified[:, 1:, :].shape)
        a = head_logits(graph, model_params, "ir_relevance", encoded).numpy()
        b = head_logits(graph, model_params, "ir_relevance", graph.constant(modified)).numpy()
        np.testing.assert_array_equal(a, b)

    def test_padding_does_not_change_outputs(self, model_params, toy_documents, task_config):
        """测试与更长样本拼 batch 时，短样本的输出不变"""
        short = make_capitalization(toy_documents[3], task_config)
        long = make_capitalization(toy_documents[0], task_config)
        _, alone = forward(model_params, collate([short]))
        _, padded = forward(model_params, collate([short, long]))
        n = short.seq_len
        np.testing.assert_allclose(alone.numpy()[0], padded.numpy()[0, :n], atol=1e-10)

    def test_task_embedding_changes_encoding(self, model_params, toy_documents, task_config):
        """测试不同任务 id 得到不同编码"""
        inst = make_capitalization(toy_documents[1], task_config)
        _, a = forward(model_params, collate([inst], task_id=1))
        _, b = forward(model_params, collate([inst], task_id=4))
        assert not np.allclose(a.numpy(), b.numpy())

    def test_predict_shapes(self, model_params, toy_documents, toy_vocab, task_config):
        """测试预测输出：句子级每条 1 个，token 级为 mask 位置数"""
        batch = head_batch("capitalization", toy_documents, toy_vocab, task_config)
        preds = predict(model_params, batch, "capitalization")
        assert [len(p) for p in preds] == [sum(i.loss_mask) for i in batch.instances]
        sentence = predict(model_params, head_batch("ir_relevance", toy_documents, toy_vocab, task_config), "ir_relevance")
        assert [p.shape for p in sentence] == [(1,), (1,)]

    def test_empty_loss_mask(self, model_params, toy_documents, task_config):
        """测试 token 头的 mask 全空时报错"""
        inst = make_capitalization(toy_documents[0], task_config)
        inst.loss_mask = [False] * inst.seq_len
        batch = collate([inst])
        graph, encoded = forward(model_params, batch)
        with pytest.raises(EmptyLossMaskError):
            head_loss(graph, model_params, "capitalization", encoded, batch)

    def test_two_sentence_heads_rejected(self, model_params, toy_documents, toy_vocab, task_config):
        """测试同一样本启用两个句子级头"""
        batch = head_batch("ir_relevance", toy_documents, toy_vocab, task_config)
        with pytest.raises(GraphError):
            loss_and_grads(model_params, batch, ["ir_relevance", "sentence_distance"])

    def test_unknown_head(self, model_params, toy_documents, toy_vocab, task_config):
        """测试模型没有的输出头"""
        batch = head_batch("ir_relevance", toy_documents, toy_vocab, task_config)
        with pytest.raises(GraphError):
            predict(model_params, batch, "classifier")

    def test_add_head_requires_two_classes(self, model_params):
        """测试分类头至少两类，且不修改原参数"""
        with pytest.raises(ConfigError):
            add_head(model_params, "classifier", 1, seed=0)
        extended = add_head(model_params, "classifier", 3, seed=0)
        assert extended.tensors["head.classifier.w"].shape == (16, 3)
        assert "classifier" not in model_params.config.head_arities

    def test_overflow_reported(self, model_params, toy_documents, task_config):
        """测试参数爆炸时报数值溢出"""
        params = model_params.copy()
        params.tensors["embed.token"] = np.full_like(params.tensors["embed.token"], 1e308)
        batch = collate([make_capitalization(toy_documents[0], task_config)])
        with pytest.raises(nx.NumericOverflowError):
            forward(params, batch)
