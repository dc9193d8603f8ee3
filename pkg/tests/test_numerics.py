# -*- coding: utf-8 -*-
"""
自动求导模块测试用例。

测试 src/numerics.py 中各算子的前向结果、反向梯度 (与中心差分比对) 以及错误处理。
"""
import numpy as np
import pytest

from src import numerics as nx
from src.errors import GraphError, IdOutOfRangeError, NumericOverflowError, ShapeMismatchError


def numeric_grad(fn, value: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """中心差分：fn 接收数组返回标量。"""
    grad = np.zeros_like(value)
    for idx in np.ndindex(value.shape):
        plus, minus = value.copy(), value.copy()
        plus[idx] += eps
        minus[idx] -= eps
        grad[idx] = (fn(plus) - fn(minus)) / (2 * eps)
    return grad


def check_unary(op, value: np.ndarray, weight: np.ndarray):
    """对 sum(op(x) * w) 做梯度校验。"""
    def forward(x):
        g = nx.Graph("float64")
        out = op(g.param("x", x))
        return g, nx.sum_all(nx.mul(out, g.constant(weight)))

    graph, loss = forward(value)
    analytic = nx.backward(graph, loss)["x"]
    numeric = numeric_grad(lambda x: forward(x)[1].item(), value)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


class TestElementwiseOps:
    """测试逐元素算子"""

    def test_add_broadcast_gradient(self):
        """测试广播加法的梯度会求和还原到原形状"""
        g = nx.Graph("float64")
        a = g.param("a", np.ones((2, 3)))
        b = g.param("b", np.arange(3.0))
        grads = nx.backward(g, nx.sum_all(nx.add(a, b)))
        np.testing.assert_array_equal(grads["a"], np.ones((2, 3)))
        np.testing.assert_array_equal(grads["b"], np.full(3, 2.0))

    def test_add_shape_mismatch_names_both_shapes(self):
        """测试形状不匹配时错误中包含双方形状"""
        g = nx.Graph()
        with pytest.raises(ShapeMismatchError) as exc:
            nx.add(g.param("a", np.ones((2, 3))), g.param("b", np.ones((4,))))
        assert exc.value.context["left_shape"] == [2, 3]
        assert exc.value.context["right_shape"] == [4]

    @pytest.mark.parametrize("op", [nx.gelu, nx.tanh, lambda x: nx.scale(x, -2.5)])
    def test_unary_gradients(self, op):
        """测试 gelu / tanh / scale 的梯度"""
        rng = np.random.default_rng(0)
        check_unary(op, rng.standard_normal((3, 4)), rng.standard_normal((3, 4)))

    def test_mul_gradient(self):
        """测试乘法对两侧的梯度"""
        rng = np.random.default_rng(1)
        other = rng.standard_normal((2, 3))
        check_unary(lambda x: nx.mul(x, x.graph.constant(other)), rng.standard_normal((2, 3)), np.ones((2, 3)))


class TestShapeOps:
    """测试形状相关算子"""

    def test_matmul_batched_gradient(self):
        """测试 [B,L,d] @ [d,k] 的权重梯度"""
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 3, 4))
        check_unary(lambda w: nx.matmul(w.graph.constant(x), w), rng.standard_normal((4, 5)),
                    rng.standard_normal((2, 3, 5)))

    def test_matmul_inner_dim_mismatch(self):
        """测试内维不一致时报错"""
        g = nx.Graph()
        with pytest.raises(ShapeMismatchError):
            nx.matmul(g.param("a", np.ones((2, 3))), g.param("b", np.ones((4, 2))))

    def test_transpose_and_reshape_gradients(self):
        """测试 transpose / reshape 的梯度还原"""
        rng = np.random.default_rng(3)
        check_unary(lambda x: nx.reshape(nx.transpose(x, (1, 0, 2)), (6, 2)),
                    rng.standard_normal((2, 3, 2)), rng.standard_normal((6, 2)))

    def test_reshape_size_mismatch(self):
        """测试元素个数不一致时报错"""
        g = nx.Graph()
        with pytest.raises(ShapeMismatchError):
            nx.reshape(g.param("a", np.ones((2, 3))), (4, 2))

    def test_select_gradient_only_on_selected_row(self):
        """测试 select 只把梯度写回被选中的位置"""
        g = nx.Graph("float64")
        x = g.param("x", np.ones((2, 3, 4)))
        grads = nx.backward(g, nx.sum_all(nx.select(x, 0, axis=1)))
        assert grads["x"][:, 0, :].sum() == 8
        assert grads["x"][:, 1:, :].sum() == 0


class TestNormalizationAndLoss:
    """测试 layer_norm / softmax / embedding_lookup / cross_entropy"""

    def test_layer_norm_gradient(self):
        """测试 layer_norm 对输入的梯度"""
        rng = np.random.default_rng(4)
        gamma = rng.standard_normal(5)
        beta = rng.standard_normal(5)

        def op(x):
            g = x.graph
            return nx.layer_norm(x, g.constant(gamma), g.constant(beta))

        check_unary(op, rng.standard_normal((3, 5)), rng.standard_normal((3, 5)))

    def test_layer_norm_constant_vector_is_finite(self):
        """测试常数向量归一化为 0 (不产生 NaN)"""
        g = nx.Graph("float64")
        out = nx.layer_norm(g.param("x", np.full((1, 4), 3.0)), g.constant(np.ones(4)), g.constant(np.zeros(4)))
        np.testing.assert_allclose(out.numpy(), 0.0, atol=1e-6)

    def test_softmax_gradient(self):
        """测试 softmax 的梯度"""
        rng = np.random.default_rng(5)
        check_unary(nx.softmax, rng.standard_normal((2, 6)), rng.standard_normal((2, 6)))

    def test_embedding_lookup_accumulates_repeated_ids(self):
        """测试重复 id 的梯度会累加"""
        g = nx.Graph("float64")
        table = g.param("table", np.zeros((4, 2)))
        grads = nx.backward(g, nx.sum_all(nx.embedding_lookup(table, [1, 1, 3])))
        np.testing.assert_array_equal(grads["table"][:, 0], [0, 2, 0, 1])

    def test_embedding_lookup_out_of_range_names_table(self):
        """测试越界 id 的错误中带表名"""
        g = nx.Graph()
        with pytest.raises(IdOutOfRangeError) as exc:
            nx.embedding_lookup(g.param("t", np.zeros((4, 2))), [0, 4], "embed.token")
        assert exc.value.context["table"] == "embed.token"

    def test_cross_entropy_matches_manual_value(self):
        """测试加权交叉熵数值"""
        g = nx.Graph("float64")
        logits = np.array([[2.0, 0.0], [0.0, 1.0]])
        loss = nx.cross_entropy(g.param("z", logits), [0, 0], weights=[1.0, 3.0])
        log_p = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        expected = (-log_p[0, 0] - 3 * log_p[1, 0]) / 4
        assert loss.item() == pytest.approx(expected)

    def test_cross_entropy_gradient(self):
        """测试交叉熵对 logits 的梯度"""
        rng = np.random.default_rng(6)
        value = rng.standard_normal((4, 3))

        def forward(x):
            g = nx.Graph("float64")
            return g, nx.cross_entropy(g.param("z", x), [0, 2, 1, 2], weights=[0.5, 0.5, 1.0, 2.0])

        graph, loss = forward(value)
        numeric = numeric_grad(lambda x: forward(x)[1].item(), value)
        np.testing.assert_allclose(nx.backward(graph, loss)["z"], numeric, rtol=1e-5, atol=1e-8)

    def test_cross_entropy_label_out_of_range(self):
        """测试标签越界"""
        g = nx.Graph()
        with pytest.raises(ShapeMismatchError):
            nx.cross_entropy(g.param("z", np.zeros((2, 3))), [0, 3])

    def test_cross_entropy_zero_weights(self):
        """测试权重全为 0 时报错"""
        g = nx.Graph()
        with pytest.raises(GraphError):
            nx.cross_entropy(g.param("z", np.zeros((2, 3))), [0, 1], weights=[0.0, 0.0])


class TestGraph:
    """测试计算图与反向传播"""

    def test_param_registered_once(self):
        """测试同名参数只登记一次"""
        g = nx.Graph()
        a = g.param("w", np.ones(3))
        b = g.param("w", np.zeros(3))
        assert a is b
        assert len(g.params) == 1

    def test_backward_requires_scalar(self):
        """测试非标量 loss 报错"""
        g = nx.Graph()
        x = g.param("x", np.ones(3))
        with pytest.raises(GraphError):
            nx.backward(g, x)

    def test_foreign_tensor_rejected(self):
        """测试跨图张量报错"""
        g1, g2 = nx.Graph(), nx.Graph()
        with pytest.raises(GraphError):
            nx.add(g1.param("a", np.ones(2)), g2.param("b", np.ones(2)))

    def test_unconnected_param_gets_zero_grad(self):
        """测试与 loss 不连通的参数梯度为全零"""
        g = nx.Graph()
        x = g.param("x", np.ones(2))
        g.param("unused", np.ones((2, 2)))
        grads = nx.backward(g, nx.sum_all(x))
        np.testing.assert_array_equal(grads["unused"], np.zeros((2, 2)))

    def test_overflow_detected(self):
        """测试出现 Inf 时立即报错"""
        g = nx.Graph("float32")
        x = g.param("x", np.array([3e38], dtype=np.float32))
        with pytest.raises(NumericOverflowError):
            nx.scale(x, 10.0)

    def test_precision_respected(self):
        """测试计算精度跟随图设置"""
        g = nx.Graph("float64")
        assert g.param("x", np.ones(2, dtype=np.float32)).numpy().dtype == np.float64
