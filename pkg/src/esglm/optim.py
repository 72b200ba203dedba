"""Adam with bias correction, operating on named parameter tensors.

The update mutates the ParameterSet in place (the training loop is the
single writer); moments live in OptimizerState and mirror the parameter
shapes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError
from .model import ParameterSet, TrainConfig


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ParameterSet) -> "OptimizerState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), t=0)


def adam_step(
    params: ParameterSet,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    tc: TrainConfig,
) -> tuple[ParameterSet, OptimizerState]:
    """One Adam update: m, v moments, bias correction, then the step.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), t incremented by 1.
    """
    if set(grads) != set(params.tensors):
        raise ShapeError("gradient names do not mirror parameters")
    state.t += 1
    b1, b2 = tc.adam_beta1, tc.adam_beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, theta in params.tensors.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        with np.errstate(invalid="ignore"):  # finiteness is checked below
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = tc.learning_rate * (m / bc1) / (
                np.sqrt(v / bc2) + tc.adam_epsilon
            )
            theta -= update
        if not np.all(np.isfinite(theta)):
            raise NumericError(f"non-finite update for parameter {name}")
    return params, state
