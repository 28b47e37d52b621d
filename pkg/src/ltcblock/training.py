"""Supervised training: BCE loss, exact BPTT, Adam and a gradient oracle."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .cell import (Checkpoint, LtcParameters, ModelConfig, _check_windows, _Packed,
                   init_parameters, predict_proba, window_features)
from .errors import ConfigError, NumericError
from .wiring import NcpWiring, build_ncp

log = logging.getLogger(__name__)


def loss_bce(probability: float, label: int) -> float:
    """Binary cross-entropy with the probability clamped to [1e-12, 1 - 1e-12]."""
    return float(_kernels.bce(float(probability), float(label)))


def _as_batch(window):
    features = getattr(window, "features", window)
    features = np.asarray(features, dtype=np.float64)
    return features[None] if features.ndim == 2 else features


def batch_loss_grad(features, labels, params: LtcParameters, wiring: NcpWiring,
                    ode_unfolds: int = 6):
    """Per-window losses, probabilities and gradients w.r.t. the stored vector.

    Returns arrays shaped (B,), (B,) and (B, n_trainable).
    """
    pk = _Packed(params, wiring)
    features = _check_windows(features, pk.n_sensory)
    labels = np.ascontiguousarray(labels, dtype=np.float64)
    loss, prob, grads, bad = _kernels.loss_grad_kernel(
        features, labels, pk.src, pk.dst, pk.n_sensory, pk.tau, pk.w, pk.gamma, pk.mu,
        pk.rev, pk.in_scale, pk.in_bias, pk.out_scale, pk.out_bias, pk.motor0,
        int(ode_unfolds))
    if np.any(bad >= 0):
        raise NumericError("non-finite intermediate in backward pass",
                           step=int(bad[bad >= 0].min()))
    # chain rule through the softplus reparametrization of tau and weight
    n_tau, n_w = params.tau_raw.size, params.weight_raw.size
    grads[:, :n_tau] *= _kernels_sigmoid(params.tau_raw)
    grads[:, n_tau:n_tau + n_w] *= _kernels_sigmoid(params.weight_raw)
    return loss, prob, grads


def _kernels_sigmoid(u):
    return np.array([_kernels.sigmoid(float(v)) for v in np.ravel(u)])


def backward(window, label, params: LtcParameters, wiring: NcpWiring,
             ode_unfolds: int = 6) -> tuple[float, np.ndarray]:
    """Loss and exact gradient for one window, aligned to ``params.to_vector()``."""
    loss, _, grads = batch_loss_grad(_as_batch(window), [label], params, wiring, ode_unfolds)
    return float(loss[0]), grads[0]


def forward_loss(window, label, params: LtcParameters, wiring: NcpWiring,
                 ode_unfolds: int = 6) -> float:
    prob = predict_proba(_as_batch(window), params, wiring, ode_unfolds)
    return loss_bce(prob[0], label)


def finite_diff_grad(window, label, params: LtcParameters, wiring: NcpWiring,
                     eps: float = 1e-5, ode_unfolds: int = 6) -> np.ndarray:
    """Central differences over every stored scalar (two forward passes each)."""
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    base = params.to_vector()
    out = np.empty_like(base)
    for k in range(base.size):
        up, down = base.copy(), base.copy()
        up[k] += eps
        down[k] -= eps
        l_up = forward_loss(window, label, params.with_vector(up), wiring, ode_unfolds)
        l_down = forward_loss(window, label, params.with_vector(down), wiring, ode_unfolds)
        out[k] = (l_up - l_down) / (2.0 * eps)
    return out


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class AdamMoments:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamMoments":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(vector: np.ndarray, grads: np.ndarray, moments: AdamMoments,
              hyper: AdamHyper, step_index: int) -> tuple[np.ndarray, AdamMoments]:
    """Bias-corrected Adam update; returns new arrays, inputs untouched."""
    if step_index < 1:
        raise ConfigError(f"step_index must be >= 1, got {step_index}")
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != vector.shape or moments.m.shape != vector.shape:
        raise ConfigError("Adam operands are not aligned")
    m = hyper.beta1 * moments.m + (1.0 - hyper.beta1) * grads
    v = hyper.beta2 * moments.v + (1.0 - hyper.beta2) * grads * grads
    m_hat = m / (1.0 - hyper.beta1 ** step_index)
    v_hat = v / (1.0 - hyper.beta2 ** step_index)
    new = vector - hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return new, AdamMoments(m, v)


def clip_global_norm(grads: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.sqrt(np.sum(grads * grads)))
    if norm > max_norm:
        return grads * (max_norm / norm)
    return grads


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    learning_rate: float = 0.02
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    horizon: int = 1
    seed: int = 0
    balanced_sampling: bool = True
    clip_norm: float | None = 10.0
    ode_unfolds: int = 6

    def __post_init__(self):
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.ode_unfolds < 1:
            raise ConfigError(f"ode_unfolds must be >= 1, got {self.ode_unfolds}")

    @property
    def adam(self) -> AdamHyper:
        return AdamHyper(self.learning_rate, self.beta1, self.beta2, self.adam_eps)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    train_accuracy: float


def epoch_batches(labels: np.ndarray, batch_size: int, balanced: bool,
                  rng: np.random.Generator) -> list[np.ndarray]:
    """Index batches for one epoch.

    Balanced mode keeps every minority-class sample, draws the same number
    of majority samples without replacement and interleaves the two, so
    each batch holds the two classes in counts differing by at most one.
    """
    labels = np.asarray(labels)
    if not balanced:
        order = rng.permutation(labels.size)
    else:
        pos = np.flatnonzero(labels == 1)
        neg = np.flatnonzero(labels == 0)
        if pos.size == 0 or neg.size == 0:
            missing = "blocked (1)" if pos.size == 0 else "unblocked (0)"
            raise ConfigError(f"balanced sampling needs both classes; no {missing} samples")
        minority, majority = (pos, neg) if pos.size <= neg.size else (neg, pos)
        minority = rng.permutation(minority)
        majority = rng.choice(majority, size=minority.size, replace=False)
        order = np.empty(2 * minority.size, dtype=np.int64)
        order[0::2] = minority
        order[1::2] = majority
    return [order[k:k + batch_size] for k in range(0, order.size, batch_size)]


def stack_samples(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Features (B, T, F) and labels (B,) from a list of samples."""
    if len(dataset) == 0:
        raise ConfigError("dataset is empty")
    t_ob = {s.window.features.shape for s in dataset}
    if len(t_ob) != 1:
        raise ConfigError(f"samples disagree on window shape: {sorted(t_ob)}")
    features = np.stack([s.window.features for s in dataset])
    labels = np.array([s.label for s in dataset], dtype=np.float64)
    return features, labels


def train(dataset, config: TrainConfig, wiring: NcpWiring,
          progress=None) -> tuple[Checkpoint, list[EpochRecord]]:
    """Fit one model for ``config.horizon``.

    ``dataset`` is a list of samples or a ``(features, labels)`` pair.  The
    only randomness is drawn from ``config.seed``: parameter init plus the
    per-epoch sampling order.
    """
    if isinstance(dataset, tuple):
        features, labels = dataset
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if features.shape[0] == 0:
            raise ConfigError("dataset is empty")
    else:
        horizons = {s.horizon for s in dataset}
        if len(horizons) > 1:
            raise ConfigError(f"samples mix horizons {sorted(horizons)}")
        if horizons and horizons != {config.horizon}:
            raise ConfigError(f"samples have horizon {horizons.pop()}, config says {config.horizon}")
        features, labels = stack_samples(dataset)

    params = init_parameters(wiring, config.seed)
    rng = np.random.default_rng([config.seed, 1])
    vector = params.to_vector()
    moments = AdamMoments.zeros(vector.size)
    hyper = config.adam
    history: list[EpochRecord] = []
    step = 0
    for epoch in range(1, config.epochs + 1):
        total_loss, correct, seen = 0.0, 0, 0
        for idx in epoch_batches(labels, config.batch_size, config.balanced_sampling, rng):
            loss, prob, grads = batch_loss_grad(features[idx], labels[idx], params, wiring,
                                                config.ode_unfolds)
            g = grads.sum(axis=0) / idx.size
            if config.clip_norm is not None:
                g = clip_global_norm(g, config.clip_norm)
            step += 1
            vector, moments = adam_step(vector, g, moments, hyper, step)
            params = params.with_vector(vector)
            total_loss += float(loss.sum())
            correct += int(np.sum((prob >= 0.5) == (labels[idx] == 1)))
            seen += idx.size
        record = EpochRecord(epoch, total_loss / seen, correct / seen)
        history.append(record)
        log.info("K=%d epoch %d loss %.4f acc %.4f", config.horizon, epoch,
                 record.mean_loss, record.train_accuracy)
        if progress is not None:
            progress(record)
    model_config = ModelConfig(ode_unfolds=config.ode_unfolds, t_ob=features.shape[1],
                               horizon=config.horizon)
    return Checkpoint(wiring, params, model_config), history


def history_csv(history: list[EpochRecord]) -> str:
    lines = ["epoch,mean_loss,train_accuracy"]
    lines += [f"{r.epoch},{r.mean_loss!r},{r.train_accuracy!r}" for r in history]
    return "\n".join(lines) + "\n"


# -- gradient verification -------------------------------------------------

@dataclass
class GradcheckReport:
    instances: int
    eps: float
    tolerance: float
    max_rel_error: float
    worst: list[tuple[str, float, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def render(self, top: int = 10) -> str:
        status = "PASS" if self.passed else "FAIL"
        cmp = "<" if self.passed else ">="
        lines = [f"{status}, max rel err {self.max_rel_error:.3e} {cmp} {self.tolerance:g} "
                 f"({self.instances} instances, eps={self.eps:g})",
                 "worst offenders (parameter, rel err, bptt, finite diff):"]
        for name, err, a, b in self.worst[:top]:
            lines.append(f"  {name:<28s} {err:.3e}  {a:+.6e}  {b:+.6e}")
        return "\n".join(lines) + "\n"


def random_instance(seed: int, t_ob: int = 32):
    """A random (wiring, params, window, label) with perturbed parameters."""
    rng = np.random.default_rng(seed)
    wiring = build_ncp(seed=int(rng.integers(2**31)))
    params = init_parameters(wiring, int(rng.integers(2**31)))
    vec = params.to_vector()
    vec = vec + rng.normal(0.0, 0.3, vec.size)
    params = params.with_vector(vec)
    power = np.clip(rng.uniform(0.0, 1.0) + 0.2 * rng.standard_normal(t_ob), 0.0, 1.0)
    window = window_features(power)
    label = int(rng.integers(2))
    return wiring, params, window, label


def gradient_check(instances: int = 20, seed: int = 0, eps: float = 1e-5,
                   tolerance: float = 1e-4, t_ob: int = 32, ode_unfolds: int = 6,
                   inject_bug: bool = False) -> GradcheckReport:
    """Compare BPTT with central differences on random instances.

    ``inject_bug`` corrupts one BPTT component as a negative control.
    """
    worst: dict[str, tuple[float, float, float]] = {}
    max_err = 0.0
    for k in range(instances):
        wiring, params, window, label = random_instance(seed * 100003 + k, t_ob)
        _, analytic = backward(window, label, params, wiring, ode_unfolds)
        if inject_bug:
            analytic = analytic.copy()
            analytic[0] *= 1.01
        numeric = finite_diff_grad(window, label, params, wiring, eps, ode_unfolds)
        err = relative_error(analytic, numeric)
        max_err = max(max_err, float(err.max()))
        for name, e, a, b in zip(params.vector_labels(wiring), err, analytic, numeric):
            if name not in worst or e > worst[name][0]:
                worst[name] = (float(e), float(a), float(b))
    ranked = sorted(((n, e, a, b) for n, (e, a, b) in worst.items()), key=lambda r: -r[1])
    return GradcheckReport(instances, eps, tolerance, max_err, ranked)
