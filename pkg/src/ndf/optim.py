"""First-order training machinery: ADAM, plateau LR annealing, gradient checks."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError
from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter moment estimates. lr is shared via the owning optimizer."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def for_shape(cls, shape):
        return cls(m=np.zeros(shape), v=np.zeros(shape))


def adam_step(value, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected ADAM update; returns the new parameter array."""
    if value.shape != grad.shape or value.shape != state.m.shape:
        raise DimensionError("adam_step: parameter/gradient/state shapes differ")
    if lr <= 0:
        raise ValueError("adam_step: lr must be positive")
    state.step += 1
    state.m = beta1 * state.m + (1 - beta1) * grad
    state.v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = state.m / (1 - beta1 ** state.step)
    v_hat = state.v / (1 - beta2 ** state.step)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    """ADAM over a list of DiffValue parameters."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.states = [AdamState.for_shape(p.value.shape) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        for p, st in zip(self.params, self.states):
            g = p.grad.data if p.grad is not None else np.zeros(p.value.shape)
            new = adam_step(p.value.data, g, st, self.lr, self.beta1, self.beta2, self.eps)
            p.value = Tensor(new)  # validates: NaN parameters abort the run here


@dataclass
class PlateauScheduler:
    """Multiply lr by `factor` once the watched loss stalls past `patience` epochs.

    lr only ever decreases; `wait` counts consecutive non-improving steps and
    resets both on improvement and on each annealing.
    """

    lr: float
    factor: float
    patience: int
    min_delta: float = 0.0
    best: float = field(default=np.inf)
    wait: int = 0

    def __post_init__(self):
        if not (0.0 < self.factor < 1.0):
            raise ValueError("factor must lie in (0, 1)")

    def step(self, val_loss):
        """Feed one validation loss; returns the (possibly reduced) lr."""
        val_loss = float(val_loss)
        if not np.isfinite(val_loss):
            raise NumericError("plateau scheduler fed a non-finite loss")
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait > self.patience:
                self.lr *= self.factor
                self.wait = 0
        return self.lr


def plateau_step(sched, val_loss):
    return sched.step(val_loss)


def grad_check(f, params, h=1e-6, max_coords_per_param=None, rng=None):
    """Max relative error between reverse-mode and central finite differences.

    `f` must be a deterministic closure returning a scalar DiffValue over
    `params`. Coordinates may be subsampled for large parameter sets; the
    error is |analytic - numeric| / max(|analytic|, |numeric|, 1).
    Requires float64 values for the difference quotient to resolve.
    """
    rng = rng or np.random.default_rng(0)
    for p in params:
        p.zero_grad()
    out = f()
    out.backward()
    analytic = [p.grad.data.copy() if p.grad is not None else np.zeros(p.value.shape)
                for p in params]
    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.value.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        ana_flat = ana.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = f().item()
            flat[i] = orig - h
            f_minus = f().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            err = abs(ana_flat[i] - numeric) / max(abs(ana_flat[i]), abs(numeric), 1.0)
            worst = max(worst, err)
    return worst
