"""Fine-tuning, evaluation, and Table-shaped report emission.

The comparison arms (fresh init vs MLM-adapted init) run through the same
run_finetune with identical seeds and data order, so the only difference
between them is the starting weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import LabeledExample
from .errors import CheckpointMismatch, EmptySplit, InvalidConfig
from .model import (
    ModelConfig,
    ParameterSet,
    TrainConfig,
    compute_gradients,
    encoder_forward,
    forward_classify,
)
from .optim import OptimizerState, adam_step

SPLIT_NAMES = ("train", "validation", "test")
MODEL_ORDER = ("common_class", "naive_bayes", "base_lm", "domain_lm")

_EVAL_BATCH = 32


@dataclass
class SplitMetrics:
    accuracy: float
    n: int
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "n": self.n, "tp": self.tp,
                "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass
class Metrics:
    model_name: str
    task: str
    splits: dict[str, SplitMetrics]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "task": self.task,
            "splits": {k: v.to_dict() for k, v in self.splits.items()},
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Metrics":
        return cls(
            model_name=doc["model_name"], task=doc["task"],
            splits={k: SplitMetrics(**v) for k, v in doc["splits"].items()},
            config=doc.get("config", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path) -> "Metrics":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _example_batch(examples: list[LabeledExample]):
    ids = np.stack([e.input_ids for e in examples])
    mask = (ids != 0).astype(np.int64)
    return ids, mask


def predict_labels(
    params: ParameterSet,
    config: ModelConfig,
    examples: list[LabeledExample],
) -> np.ndarray:
    """Deterministic eval-mode argmax predictions (class indexes)."""
    preds = []
    for start in range(0, len(examples), _EVAL_BATCH):
        chunk = examples[start : start + _EVAL_BATCH]
        ids, mask = _example_batch(chunk)
        hidden = encoder_forward(ids, mask, params, config, train=False)
        logits = forward_classify(hidden, params)
        preds.append(np.argmax(logits, axis=-1))
    return np.concatenate(preds)


def evaluate_split(
    params: ParameterSet,
    config: ModelConfig,
    examples: list[LabeledExample],
    task: str,
) -> SplitMetrics:
    """Accuracy plus confusion counts; positive class is label index 1."""
    if not examples:
        raise EmptySplit("cannot evaluate an empty split")
    preds = predict_labels(params, config, examples)
    truth = np.array([e.label_index(task) for e in examples])
    tp = int(np.sum((preds == 1) & (truth == 1)))
    tn = int(np.sum((preds == 0) & (truth == 0)))
    fp = int(np.sum((preds == 1) & (truth == 0)))
    fn = int(np.sum((preds == 0) & (truth == 1)))
    return SplitMetrics(
        accuracy=(tp + tn) / len(examples), n=len(examples),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def evaluate_all(
    params: ParameterSet,
    config: ModelConfig,
    splits: dict[str, list[LabeledExample]],
    task: str,
    model_name: str,
    config_echo: dict | None = None,
) -> Metrics:
    named = {
        "train": splits["train"],
        "validation": splits.get("validation", splits.get("val", [])),
        "test": splits["test"],
    }
    return Metrics(
        model_name=model_name, task=task,
        splits={k: evaluate_split(params, config, v, task) for k, v in named.items()},
        config=dict(config_echo or {}),
    )


def run_finetune(
    params: ParameterSet,
    config: ModelConfig,
    splits: dict[str, list[LabeledExample]],
    task: str,
    tc: TrainConfig,
    model_name: str = "domain_lm",
) -> tuple[ParameterSet, Metrics, list[float]]:
    """Train encoder + classifier end-to-end, then evaluate all three splits.

    Input ids must fit the checkpoint's vocabulary.  Returns the updated
    params, Metrics, and the per-epoch loss trace.
    """
    if task not in ("a", "b"):
        raise InvalidConfig(f"task must be 'a' or 'b', got {task!r}")
    train = splits["train"]
    if not train:
        raise EmptySplit("empty training split")
    max_id = max(int(e.input_ids.max()) for e in train)
    if max_id >= config.vocab_size:
        raise CheckpointMismatch(
            f"dataset token id {max_id} >= checkpoint vocab {config.vocab_size}"
        )
    seq_len = len(train[0].input_ids)
    if seq_len > config.max_seq_len:
        raise CheckpointMismatch(
            f"dataset seq_len {seq_len} > checkpoint max_seq_len "
            f"{config.max_seq_len}"
        )

    labels = np.array([e.label_index(task) for e in train])
    rng = np.random.default_rng(tc.seed)
    state = OptimizerState.for_params(params)
    trace: list[float] = []
    for _ in range(tc.epochs):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(train), tc.batch_size):
            take = order[start : start + tc.batch_size]
            ids, mask = _example_batch([train[i] for i in take])
            loss, grads = compute_gradients(
                (ids, mask, labels[take]), params, config, "classify",
                train=config.dropout_rate > 0.0, rng=rng,
            )
            adam_step(params, grads, state, tc)
            losses.append(loss)
        trace.append(float(np.mean(losses)))

    echo = {
        "learning_rate": tc.learning_rate, "adam_epsilon": tc.adam_epsilon,
        "epochs": tc.epochs, "batch_size": tc.batch_size, "seed": tc.seed,
        "task": task,
    }
    metrics = evaluate_all(params, config, splits, task, model_name, echo)
    return params, metrics, trace


def format_report_markdown(metrics_list: list[Metrics], task: str) -> str:
    """One row per model, three 4-decimal accuracy columns."""
    by_name = {m.model_name: m for m in metrics_list}
    names = [n for n in MODEL_ORDER if n in by_name]
    names += sorted(set(by_name) - set(names))
    lines = [
        "| Model | Train Accuracy | Validation Accuracy | Test Accuracy |",
        "| --- | --- | --- | --- |",
    ]
    for name in names:
        m = by_name[name]
        cells = " | ".join(
            f"{m.splits[s].accuracy:.4f}" for s in SPLIT_NAMES
        )
        lines.append(f"| {name} | {cells} |")
    return "\n".join(lines) + "\n"


def emit_report(metrics_list: list[Metrics], task: str, out_dir) -> None:
    """Write report_{task}.json (full metrics) and report_{task}.md (table)."""
    if not metrics_list:
        raise InvalidConfig("emit_report needs at least one Metrics entry")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "task": task,
        "rows": [m.to_dict() for m in metrics_list],
    }
    (out / f"report_{task}.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / f"report_{task}.md").write_text(
        format_report_markdown(metrics_list, task), encoding="utf-8"
    )
