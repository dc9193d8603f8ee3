# -*- coding: utf-8 -*-
"""
预设配置模块：模型结构、优化器、调度与微调的默认参数。
"""

# 模型结构预设 (vocab_size 与各头的类别数在读入数据后补全)
MODEL_PRESETS = {
    # 桌面规模：单核 CPU 上几分钟跑完一轮四任务预训练
    "desk": {
        "layers": 2,
        "heads": 4,
        "d_model": 64,
        "d_ff": 256,
        "max_seq_len": 64,
        "max_segments": 3,
    },
    # 梯度校验与单元测试使用的最小结构
    "tiny": {
        "layers": 2,
        "heads": 2,
        "d_model": 16,
        "d_ff": 32,
        "max_seq_len": 32,
        "max_segments": 3,
    },
    "small": {
        "layers": 4,
        "heads": 4,
        "d_model": 128,
        "d_ff": 512,
        "max_seq_len": 128,
        "max_segments": 4,
    },
}

DEFAULT_MODEL_PRESET = "desk"

# 优化器预设 (Adam β1=0.9, β2=0.98, ε=1e-8；noam 以 peak_lr 为锚点)
OPTIMIZER_PRESETS = {
    "desk": {
        "peak_lr": 1e-3,
        "warmup_steps": 100,
        "beta1": 0.9,
        "beta2": 0.98,
        "epsilon": 1e-8,
    },
    # 与大规模设置同形的参数，仅供参考
    "full": {
        "peak_lr": 5e-5,
        "warmup_steps": 4000,
        "beta1": 0.9,
        "beta2": 0.98,
        "epsilon": 1e-8,
    },
}

# 默认任务顺序：依次引入，每个阶段一个新任务
DEFAULT_TASK_ORDER = (
    "knowledge_masking",
    "capitalization",
    "sentence_distance",
    "ir_relevance",
)

# 调度默认值：N=500、reserve=100 时四阶段分配为 (200,100,100,100) / (-,300,100,100) / ...
SCHEDULE_DEFAULTS = {
    "strategy": "continual_multitask",
    "per_task_budget": 500,
    "reserve": 100,
    "batch_size": 8,
    "heldout_size": 200,
    "eval_batch_size": 32,
}

# 微调预设：沿用 "少量 epoch + 小学习率" 的设置，按玩具模型放大学习率
FINETUNE_PRESETS = {
    "topic": {
        "epochs": 3,
        "lr": 1e-3,
        "batch_size": 16,
        "warmup_steps": 10,
        "task_id": 0,
    },
    "topic-long": {
        "epochs": 4,
        "lr": 5e-4,
        "batch_size": 16,
        "warmup_steps": 20,
        "task_id": 0,
    },
}

DEFAULT_FINETUNE_PRESET = "topic"

# 策略对比默认种子 (报告取中位数)
DEFAULT_COMPARE_SEEDS = (1, 2, 3)
