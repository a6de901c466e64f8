"""Mini-batch training with temperature annealing."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import model
from .datasets import BitDataset

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TemperatureSchedule:
    """Geometric decay from ``t_start`` to ``t_end`` across an epoch window."""

    t_start: float = 1.0
    t_end: float = 1e-4
    epoch_start: int = 0
    epoch_end: int = 0

    def __post_init__(self):
        if not (self.t_start >= self.t_end > 0):
            raise ValueError(f"need t_start >= t_end > 0, got {self.t_start}, {self.t_end}")
        if self.epoch_start > self.epoch_end:
            raise ValueError("epoch_start must not exceed epoch_end")

    @classmethod
    def constant(cls, t: float = 1.0) -> "TemperatureSchedule":
        return cls(t, t, 0, 0)


def temperature_at(s: TemperatureSchedule, epoch: float) -> float:
    if epoch <= s.epoch_start:
        return s.t_start if epoch < s.epoch_start or s.epoch_end > s.epoch_start else s.t_end
    if epoch >= s.epoch_end:
        return s.t_end
    frac = (epoch - s.epoch_start) / (s.epoch_end - s.epoch_start)
    return float(math.exp(math.log(s.t_start) + frac * (math.log(s.t_end) - math.log(s.t_start))))


@dataclass
class TrainPlan:
    epochs: int
    lr: float = 0.01
    batch_size: int = 128
    seed: int = 0
    sched_c: TemperatureSchedule = field(default_factory=TemperatureSchedule.constant)
    sched_g: TemperatureSchedule = field(default_factory=TemperatureSchedule.constant)
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        for name in ("sched_c", "sched_g"):
            s = getattr(self, name)
            if s.epoch_start < 0 or s.epoch_end > self.epochs:
                raise ValueError(f"{name} window [{s.epoch_start}, {s.epoch_end}] outside [0, {self.epochs}]")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float | None
    hard_test_accuracy: float | None
    agreement: float | None
    t_c: float
    t_g: float

    def as_record(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            dt = p.dtype.type
            m *= dt(self.beta1)
            m += dt(1.0 - self.beta1) * g
            v *= dt(self.beta2)
            v += dt(1.0 - self.beta2) * (g * g)
            denom = np.sqrt(v / dt(bc2)) + dt(self.eps)
            p -= dt(self.lr / bc1) * m / denom

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src


class SGD:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.lr = lr
        self.t = 0
        self.m: list[np.ndarray] = []
        self.v: list[np.ndarray] = []

    def step(self, params, grads) -> None:
        self.t += 1
        for p, g in zip(params, grads):
            p -= p.dtype.type(self.lr) * g

    def state(self) -> dict:
        return {"t": self.t, "m": [], "v": []}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])


def make_optimizer(net: model.SoftNetwork, plan: TrainPlan):
    params = [p for _, p in net.parameters()]
    if plan.optimizer == "sgd":
        return SGD(params, plan.lr)
    return Adam(params, plan.lr, plan.beta1, plan.beta2, plan.eps)


def _flat_grads(grads: list[model.LayerGrads]) -> list[np.ndarray]:
    out = []
    for g in grads:
        out.extend((g.w_g, g.w_a, g.w_b))
    return out


def set_epoch_temperatures(net: model.SoftNetwork, plan: TrainPlan, epoch: int) -> tuple[float, float]:
    t_c = temperature_at(plan.sched_c, epoch)
    t_g = temperature_at(plan.sched_g, epoch)
    net.set_temperatures(t_c=t_c, t_g=t_g)
    return t_c, t_g


def train(
    net: model.SoftNetwork,
    plan: TrainPlan,
    data: BitDataset,
    test: BitDataset | None = None,
    *,
    start_epoch: int = 0,
    optimizer=None,
    on_epoch: Callable[[EpochMetrics, model.SoftNetwork, object], None] | None = None,
) -> tuple[model.SoftNetwork, list[EpochMetrics]]:
    """Train ``net`` in place and return it with the per-epoch metrics.

    Each epoch shuffles with a generator seeded by ``(plan.seed, epoch)`` so
    resuming from a checkpoint at any epoch replays the same batches.
    """
    plan.validate()
    if data.input_width != net.input_width:
        raise model.ShapeError(
            f"dataset width {data.input_width} does not match network input width {net.input_width}"
        )
    if optimizer is None:
        optimizer = make_optimizer(net, plan)
    params = [p for _, p in net.parameters()]
    n = len(data)
    history: list[EpochMetrics] = []

    for epoch in range(start_epoch, plan.epochs):
        t_c, t_g = set_epoch_temperatures(net, plan, epoch)
        order = np.random.default_rng([plan.seed, epoch]).permutation(n)
        loss_sum = 0.0
        correct = 0
        for s in range(0, n, plan.batch_size):
            idx = order[s : s + plan.batch_size]
            x = data.inputs[idx].astype(net.dtype)
            y = data.labels[idx]
            scores, trace = model.forward(net, x)
            loss, dscores = model.cross_entropy_loss(scores, y)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss in epoch {epoch}", epoch)
            grads = model.backward(net, trace, dscores)
            optimizer.step(params, _flat_grads(grads))
            loss_sum += loss * len(idx)
            correct += int((np.argmax(scores, axis=1) == y).sum())

        metrics = EpochMetrics(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_accuracy=correct / n,
            test_accuracy=None,
            hard_test_accuracy=None,
            agreement=None,
            t_c=t_c,
            t_g=t_g,
        )
        if test is not None:
            soft = model.predict(net, test.inputs)
            from .hard import discretize, predict_hard

            hard = predict_hard(discretize(net), test.inputs)
            metrics.test_accuracy = float((soft == test.labels).mean())
            metrics.hard_test_accuracy = float((hard == test.labels).mean())
            metrics.agreement = float((soft == hard).mean())
        log.info(
            "epoch %d loss %.4f train %.4f test %s hard %s t_c %.3g t_g %.3g",
            epoch, metrics.train_loss, metrics.train_accuracy,
            metrics.test_accuracy, metrics.hard_test_accuracy, t_c, t_g,
        )
        history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics, net, optimizer)

    if plan.epochs > start_epoch:
        set_epoch_temperatures(net, plan, plan.epochs)
    return net, history


def evaluate(net: model.SoftNetwork, data: BitDataset, mode: str = "soft") -> float:
    """Fraction of samples whose predicted class matches the label."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if data.input_width != net.input_width:
        raise model.ShapeError(
            f"dataset width {data.input_width} does not match network input width {net.input_width}"
        )
    if mode == "soft":
        pred = model.predict(net, data.inputs)
    elif mode == "hard":
        from .hard import discretize, predict_hard

        pred = predict_hard(discretize(net), data.inputs)
    else:
        raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
    return float((pred == data.labels).mean())


def softmax_maxima(net: model.SoftNetwork) -> list[dict]:
    """Per layer, the smallest max-probability of any gate or connection softmax."""
    out = []
    for i, layer in enumerate(net.layers):
        pg = model.softmax_rows(layer.w_g.astype(np.float64), layer.t_g).max(axis=1)
        pa = model.softmax_rows(layer.conn.w_a.astype(np.float64), layer.conn.t_c).max(axis=1)
        pb = model.softmax_rows(layer.conn.w_b.astype(np.float64), layer.conn.t_c).max(axis=1)
        out.append(
            {
                "layer": i,
                "min_gate": float(pg.min()),
                "min_conn": float(min(pa.min(), pb.min())),
                "n_gate_below": int((pg < 0.99).sum()),
                "n_conn_below": int((pa < 0.99).sum() + (pb < 0.99).sum()),
            }
        )
    return out
