"""Liquid time-constant cell over an NCP wiring.

Each non-sensory neuron follows

    dx_i/dt = -x_i / tau_i + sum_j w_ij * sigmoid(gamma_ij * pre_j + mu_ij) * (A_ij - x_i)

integrated with the fused semi-implicit step

    x_i' = (x_i + dt * sum_j g_ij * A_ij) / (1 + dt * (1/tau_i + sum_j g_ij)),
    g_ij = w_ij * sigmoid(gamma_ij * pre_j + mu_ij).

The update is a convex combination of x_i, 0 and the reversal targets
A_ij, so the state can never leave [min(0, A), max(0, A)].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import ConfigError, NumericError
from .wiring import NcpWiring, require_valid

FORMAT_VERSION = 1
POSITIVE_FLOOR = 1e-3
FEATURES = ("power", "power_diff")


def softplus(u):
    return np.logaddexp(0.0, u)


def inverse_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def positive(u):
    """Map unconstrained storage onto (1e-3, inf)."""
    return softplus(np.asarray(u, dtype=np.float64)) + POSITIVE_FLOOR


def positive_inverse(value):
    return inverse_softplus(np.asarray(value, dtype=np.float64) - POSITIVE_FLOOR)


@dataclass(frozen=True)
class ResolvedParameters:
    """Materialized cell quantities, the form the dynamics consume.

    Building one directly is how tests pin exact weights (including zero,
    which the positive reparametrization cannot reach).
    """

    tau: np.ndarray
    weight: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    reversal: np.ndarray
    input_scale: np.ndarray
    input_bias: np.ndarray
    output_scale: np.ndarray
    output_bias: float

    def resolve(self) -> "ResolvedParameters":
        return self


# canonical order of the trainable scalars in the flat parameter vector
TRAINABLE = ("tau_raw", "weight_raw", "gamma", "mu", "input_scale", "input_bias",
             "output_scale", "output_bias")


@dataclass(frozen=True)
class LtcParameters:
    """Stored (unconstrained) cell parameters.

    ``tau_raw`` and ``weight_raw`` pass through :func:`positive` before use.
    ``reversal`` is the constant A per synapse; it is kept for serialization
    but is not trained, so its sign always matches the wiring polarity.
    """

    tau_raw: np.ndarray
    weight_raw: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    reversal: np.ndarray
    input_scale: np.ndarray
    input_bias: np.ndarray
    output_scale: np.ndarray
    output_bias: np.ndarray

    def resolve(self) -> ResolvedParameters:
        return ResolvedParameters(
            tau=positive(self.tau_raw),
            weight=positive(self.weight_raw),
            gamma=self.gamma,
            mu=self.mu,
            reversal=self.reversal,
            input_scale=self.input_scale,
            input_bias=self.input_bias,
            output_scale=self.output_scale,
            output_bias=float(self.output_bias[0]),
        )

    def sizes(self) -> list[tuple[str, int]]:
        return [(name, getattr(self, name).size) for name in TRAINABLE]

    def offset(self, name: str) -> int:
        """Start index of the named group inside :meth:`to_vector`."""
        start = 0
        for key, n in self.sizes():
            if key == name:
                return start
            start += n
        raise KeyError(name)

    @property
    def n_trainable(self) -> int:
        return sum(n for _, n in self.sizes())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([getattr(self, name).ravel() for name in TRAINABLE])

    def with_vector(self, vector: np.ndarray) -> "LtcParameters":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.n_trainable,):
            raise ConfigError(f"expected {self.n_trainable} values, got shape {vector.shape}")
        parts, k = {}, 0
        for name, n in self.sizes():
            parts[name] = vector[k:k + n].copy()
            k += n
        return replace(self, **parts)

    def vector_labels(self, wiring: NcpWiring) -> list[str]:
        """Readable name for each entry of :meth:`to_vector`."""
        n_s = wiring.counts.n_sensory
        syn = [f"{s.source}->{s.target}" for s in wiring.synapses]
        labels = [f"tau_raw[n{n_s + i}]" for i in range(self.tau_raw.size)]
        for name in ("weight_raw", "gamma", "mu"):
            labels += [f"{name}[{e}]" for e in syn]
        labels += [f"input_scale[{f}]" for f in range(self.input_scale.size)]
        labels += [f"input_bias[{f}]" for f in range(self.input_bias.size)]
        labels += [f"output_scale[{m}]" for m in range(self.output_scale.size)]
        labels.append("output_bias")
        return labels

    def to_dict(self) -> dict:
        return {name: [float(v) for v in getattr(self, name).ravel()]
                for name in TRAINABLE + ("reversal",)}

    @classmethod
    def from_dict(cls, data: dict) -> "LtcParameters":
        try:
            return cls(**{name: np.asarray(data[name], dtype=np.float64)
                          for name in TRAINABLE + ("reversal",)})
        except KeyError as exc:
            raise ConfigError(f"parameter block lacks {exc}") from exc


def init_parameters(wiring: NcpWiring, seed: int = 0) -> LtcParameters:
    """Seeded initialization: tau in [1, 5], weight in [0.01, 1], gamma in
    [3, 8], mu in [0.3, 0.8], |A| = 1 with the synapse polarity, identity
    input/output maps."""
    require_valid(wiring)
    rng = np.random.default_rng(seed)
    n_state = wiring.counts.n_state
    n_syn = wiring.n_synapses
    _, _, pol = wiring.arrays()
    tau = rng.uniform(1.0, 5.0, n_state)
    weight = rng.uniform(0.01, 1.0, n_syn)
    gamma = rng.uniform(3.0, 8.0, n_syn)
    mu = rng.uniform(0.3, 0.8, n_syn)
    n_in = wiring.counts.n_sensory
    return LtcParameters(
        tau_raw=positive_inverse(tau),
        weight_raw=positive_inverse(weight),
        gamma=gamma,
        mu=mu,
        reversal=pol.astype(np.float64),
        input_scale=np.ones(n_in),
        input_bias=np.zeros(n_in),
        output_scale=np.ones(wiring.counts.n_motor),
        output_bias=np.zeros(1),
    )


class _Packed:
    """Contiguous arrays handed to the compiled kernels."""

    def __init__(self, params, wiring: NcpWiring):
        r = params.resolve()
        src, dst, _ = wiring.arrays()
        self.src, self.dst = src, dst
        self.n_sensory = wiring.counts.n_sensory
        self.n_state = wiring.counts.n_state
        self.motor0 = wiring.counts.n_inter + wiring.counts.n_command
        as_f = lambda a: np.ascontiguousarray(a, dtype=np.float64)
        self.tau, self.w = as_f(r.tau), as_f(r.weight)
        self.gamma, self.mu, self.rev = as_f(r.gamma), as_f(r.mu), as_f(r.reversal)
        self.in_scale, self.in_bias = as_f(r.input_scale), as_f(r.input_bias)
        self.out_scale, self.out_bias = as_f(r.output_scale), float(r.output_bias)
        if self.tau.shape != (self.n_state,) or self.w.shape != src.shape:
            raise ConfigError("parameters do not match the wiring")
        if self.in_scale.shape != (self.n_sensory,):
            raise ConfigError("input map size must equal the number of sensory neurons")

    def probs(self, final: np.ndarray) -> np.ndarray:
        return _kernels.output_probs(final, self.out_scale, self.out_bias, self.motor0)


def fused_step(state, inputs, params, wiring: NcpWiring, dt: float) -> np.ndarray:
    """One fused semi-implicit step of every non-sensory neuron."""
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    state = np.asarray(state, dtype=np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(inputs))):
        raise NumericError("non-finite state or input")
    pk = _Packed(params, wiring)
    return _kernels.fused_step_kernel(state, inputs, pk.src, pk.dst, pk.n_sensory, pk.tau,
                                      pk.w, pk.gamma, pk.mu, pk.rev, pk.in_scale,
                                      pk.in_bias, float(dt))


def _check_windows(features: np.ndarray, n_in: int) -> np.ndarray:
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 3 or features.shape[2] != n_in:
        raise ConfigError(f"windows must have shape (B, T, {n_in}), got {features.shape}")
    if not np.all(np.isfinite(features)):
        raise NumericError("non-finite input feature")
    return features


def predict_proba(features, params, wiring: NcpWiring, ode_unfolds: int = 6,
                  initial_state=None, return_trajectory: bool = False):
    """Blockage probabilities for a batch of windows shaped (B, T, F)."""
    pk = _Packed(params, wiring)
    features = _check_windows(features, pk.n_sensory)
    B = features.shape[0]
    if initial_state is None:
        x0 = np.zeros((B, pk.n_state))
    else:
        x0 = np.ascontiguousarray(np.broadcast_to(initial_state, (B, pk.n_state)), dtype=np.float64)
    final, traj, bad = _kernels.forward_kernel(features, x0, pk.src, pk.dst, pk.n_sensory,
                                               pk.tau, pk.w, pk.gamma, pk.mu, pk.rev,
                                               pk.in_scale, pk.in_bias, int(ode_unfolds),
                                               return_trajectory)
    if np.any(bad >= 0):
        raise NumericError("non-finite neuron state", step=int(bad[bad >= 0].min()))
    prob = pk.probs(final)
    return (prob, traj) if return_trajectory else prob


@dataclass(frozen=True)
class ObservationWindow:
    features: np.ndarray  # (T_ob, F)
    t_end: int = 0


def forward_sequence(window, params, wiring: NcpWiring, ode_unfolds: int = 6,
                     initial_state=None) -> tuple[np.ndarray, float]:
    """Run one window; returns the (T_ob, N) state trajectory and the
    blockage probability read from the motor neurons."""
    features = window.features if isinstance(window, ObservationWindow) else window
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ConfigError(f"window must be 2-D (T_ob, F), got shape {features.shape}")
    prob, traj = predict_proba(features[None], params, wiring, ode_unfolds,
                               initial_state=initial_state, return_trajectory=True)
    return traj[0], float(prob[0])


def classify(probability) -> int | np.ndarray:
    """Threshold at 0.5; a probability of exactly 0.5 counts as blocked."""
    p = np.asarray(probability, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise ConfigError(f"probability outside [0, 1]: {probability}")
    out = (p >= 0.5).astype(np.int64)
    return int(out) if out.ndim == 0 else out


def window_features(power_windows: np.ndarray) -> np.ndarray:
    """Per-row features [r[t], r[t] - r[t-1]] for windows shaped (..., T).

    The difference restarts at 0 on the first row of every window.
    """
    power_windows = np.asarray(power_windows, dtype=np.float64)
    diff = np.zeros_like(power_windows)
    diff[..., 1:] = np.diff(power_windows, axis=-1)
    return np.stack([power_windows, diff], axis=-1)


@dataclass(frozen=True)
class ModelConfig:
    ode_unfolds: int = 6
    t_ob: int = 32
    horizon: int = 1
    features: tuple[str, ...] = FEATURES

    def to_dict(self) -> dict:
        return {"ode_unfolds": self.ode_unfolds, "t_ob": self.t_ob, "horizon": self.horizon,
                "features": list(self.features)}


@dataclass(frozen=True)
class Checkpoint:
    wiring: NcpWiring
    params: LtcParameters
    config: ModelConfig = field(default_factory=ModelConfig)

    def dumps(self) -> str:
        doc = {
            "format_version": FORMAT_VERSION,
            "wiring": self.wiring.to_dict(),
            "parameters": self.params.to_dict(),
            "config": self.config.to_dict(),
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Checkpoint":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"checkpoint is not valid JSON: {exc}") from exc
        if doc.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format {doc.get('format_version')!r}")
        wiring = NcpWiring.from_dict(doc["wiring"])
        require_valid(wiring)
        cfg = doc["config"]
        config = ModelConfig(ode_unfolds=int(cfg["ode_unfolds"]), t_ob=int(cfg["t_ob"]),
                             horizon=int(cfg["horizon"]), features=tuple(cfg["features"]))
        return cls(wiring, LtcParameters.from_dict(doc["parameters"]), config)

    def save(self, path) -> None:
        from .fileio import atomic_write_text
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def predict_proba(self, features) -> np.ndarray:
        return predict_proba(features, self.params, self.wiring, self.config.ode_unfolds)
