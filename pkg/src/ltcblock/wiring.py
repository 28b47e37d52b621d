"""Neural Circuit Policy wiring: a four-layer sparse graph.

Neurons are numbered layer by layer: sensory first, then inter, command
and motor.  Only sensory->inter, inter->command, command->command and
command->motor synapses are legal.  Sensory neurons carry the input
features and have no ODE state; the other three layers are integrated by
the LTC cell.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import WiringError

LAYERS = ("sensory", "inter", "command", "motor")

# (source layer, target layer) pairs that may carry a synapse
_LEGAL = {("sensory", "inter"), ("inter", "command"), ("command", "command"),
          ("command", "motor")}


@dataclass(frozen=True)
class LayerCounts:
    n_sensory: int = 2
    n_inter: int = 4
    n_command: int = 2
    n_motor: int = 1

    @property
    def total(self) -> int:
        return self.n_sensory + self.n_inter + self.n_command + self.n_motor

    @property
    def n_state(self) -> int:
        """Neurons integrated by the ODE (everything except sensory)."""
        return self.n_inter + self.n_command + self.n_motor

    def sizes(self) -> tuple[int, int, int, int]:
        return (self.n_sensory, self.n_inter, self.n_command, self.n_motor)

    def offsets(self) -> tuple[int, int, int, int]:
        s = self.sizes()
        return (0, s[0], s[0] + s[1], s[0] + s[1] + s[2])

    def layer_ids(self, layer: str) -> range:
        i = LAYERS.index(layer)
        start = self.offsets()[i]
        return range(start, start + self.sizes()[i])

    def layer_of(self, neuron: int) -> str | None:
        for layer in LAYERS:
            if neuron in self.layer_ids(layer):
                return layer
        return None


@dataclass(frozen=True)
class Fanouts:
    """Connectivity knobs for :func:`build_ncp`.

    ``sensory_fanout`` inter targets per sensory neuron, ``inter_fanout``
    command targets per inter neuron, ``command_recurrence`` random
    command->command synapses and ``motor_fanin`` command sources per motor
    neuron.
    """

    sensory_fanout: int = 2
    inter_fanout: int = 1
    command_recurrence: int = 2
    motor_fanin: int = 2


@dataclass(frozen=True)
class Synapse:
    source: int
    target: int
    polarity: int


@dataclass(frozen=True)
class NcpWiring:
    counts: LayerCounts
    synapses: tuple[Synapse, ...]
    seed: int = 0
    fanouts: Fanouts = field(default_factory=Fanouts)

    @property
    def n_synapses(self) -> int:
        return len(self.synapses)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Synapse sources, targets and polarities as int64 arrays."""
        src = np.array([s.source for s in self.synapses], dtype=np.int64)
        dst = np.array([s.target for s in self.synapses], dtype=np.int64)
        pol = np.array([s.polarity for s in self.synapses], dtype=np.int64)
        return src, dst, pol

    def to_dict(self) -> dict:
        return {
            "counts": {
                "n_sensory": self.counts.n_sensory,
                "n_inter": self.counts.n_inter,
                "n_command": self.counts.n_command,
                "n_motor": self.counts.n_motor,
            },
            "fanouts": {
                "sensory_fanout": self.fanouts.sensory_fanout,
                "inter_fanout": self.fanouts.inter_fanout,
                "command_recurrence": self.fanouts.command_recurrence,
                "motor_fanin": self.fanouts.motor_fanin,
            },
            "seed": self.seed,
            "synapses": [[s.source, s.target, s.polarity] for s in self.synapses],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NcpWiring":
        try:
            return cls(
                counts=LayerCounts(**data["counts"]),
                synapses=tuple(Synapse(int(a), int(b), int(p)) for a, b, p in data["synapses"]),
                seed=int(data.get("seed", 0)),
                fanouts=Fanouts(**data.get("fanouts", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise WiringError(f"malformed wiring document: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NcpWiring":
        return cls.from_dict(json.loads(text))


def _check_build_args(counts: LayerCounts, fanouts: Fanouts) -> None:
    for name, value in zip(("n_sensory", "n_inter", "n_command", "n_motor"), counts.sizes()):
        if int(value) != value or value < 1:
            raise WiringError(f"{name} must be a positive integer, got {value}")
    limits = {
        "sensory_fanout": (1, counts.n_inter),
        "inter_fanout": (1, counts.n_command),
        "command_recurrence": (0, counts.n_command ** 2),
        "motor_fanin": (1, counts.n_command),
    }
    for name, (lo, hi) in limits.items():
        value = getattr(fanouts, name)
        if not lo <= value <= hi:
            raise WiringError(f"infeasible {name}={value}: must lie in [{lo}, {hi}]")


def build_ncp(counts: LayerCounts | None = None, fanouts: Fanouts | None = None,
              seed: int = 0) -> NcpWiring:
    """Generate a random NCP wiring that satisfies every coverage rule.

    Random edges are drawn first; any inter/command neuron left without an
    incoming synapse then receives one from the lowest-id source of the
    previous layer.  Polarities are drawn last, one per synapse in sorted
    (source, target) order, so the result is a pure function of the
    arguments.
    """
    counts = counts or LayerCounts()
    fanouts = fanouts or Fanouts()
    _check_build_args(counts, fanouts)
    rng = np.random.default_rng(seed)

    sensory = list(counts.layer_ids("sensory"))
    inter = list(counts.layer_ids("inter"))
    command = list(counts.layer_ids("command"))
    motor = list(counts.layer_ids("motor"))
    edges: set[tuple[int, int]] = set()

    for s in sensory:
        for t in rng.choice(inter, size=fanouts.sensory_fanout, replace=False):
            edges.add((s, int(t)))
    for i in inter:
        for t in rng.choice(command, size=fanouts.inter_fanout, replace=False):
            edges.add((i, int(t)))
    if fanouts.command_recurrence:
        pairs = [(a, b) for a in command for b in command]
        for k in rng.choice(len(pairs), size=fanouts.command_recurrence, replace=False):
            edges.add(pairs[int(k)])
    for m in motor:
        for c in rng.choice(command, size=fanouts.motor_fanin, replace=False):
            edges.add((int(c), m))

    # repair: guarantee an incoming synapse from the previous layer
    for targets, sources in ((inter, sensory), (command, inter)):
        for t in targets:
            if not any((s, t) in edges for s in sources):
                edges.add((sources[0], t))

    ordered = sorted(edges)
    polarity = rng.choice(np.array([-1, 1]), size=len(ordered))
    synapses = tuple(Synapse(a, b, int(p)) for (a, b), p in zip(ordered, polarity))
    return NcpWiring(counts=counts, synapses=synapses, seed=seed, fanouts=fanouts)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    ids: tuple[int, ...] = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "\n".join(str(v) for v in self.violations)


def validate_wiring(wiring: NcpWiring) -> ValidationReport:
    """Check every structural rule and report all violations found."""
    counts = wiring.counts
    found: list[Violation] = []
    if any(n < 1 for n in counts.sizes()):
        found.append(Violation("invalid counts", f"layer sizes {counts.sizes()} must all be >= 1"))
        return ValidationReport(tuple(found))

    seen: set[tuple[int, int]] = set()
    outgoing = {n: 0 for n in range(counts.total)}
    incoming = {n: 0 for n in range(counts.total)}
    for k, syn in enumerate(wiring.synapses):
        a, b = syn.source, syn.target
        la, lb = counts.layer_of(a), counts.layer_of(b)
        if la is None or lb is None:
            found.append(Violation("unknown neuron", f"synapse {k} ({a}->{b}) references a neuron outside 0..{counts.total - 1}", (a, b)))
            continue
        if (a, b) in seen:
            found.append(Violation("duplicate synapse", f"synapse {k} repeats {a}->{b}", (a, b)))
        seen.add((a, b))
        if syn.polarity not in (-1, 1):
            found.append(Violation("bad polarity", f"synapse {k} ({a}->{b}) has polarity {syn.polarity}", (a, b)))
        if (la, lb) not in _LEGAL:
            ia, ib = LAYERS.index(la), LAYERS.index(lb)
            if a == b:
                kind = "self-loop outside command layer"
            elif ib > ia + 1:
                kind = "layer-skipping edge"
            elif ib < ia:
                kind = "backward edge"
            else:
                kind = "lateral edge"
            found.append(Violation(kind, f"synapse {k}: {la} {a} -> {lb} {b}", (a, b)))
        outgoing[a] += 1
        incoming[b] += 1

    def need(layer, table, kind):
        for n in counts.layer_ids(layer):
            if table[n] == 0:
                found.append(Violation(kind, f"{layer} neuron {n}", (n,)))

    need("sensory", outgoing, "no outgoing synapse")
    need("inter", outgoing, "no outgoing synapse")
    for layer in ("inter", "command", "motor"):
        need(layer, incoming, "no incoming synapse")
    return ValidationReport(tuple(found))


def require_valid(wiring: NcpWiring) -> None:
    report = validate_wiring(wiring)
    if not report.ok:
        raise WiringError(f"invalid wiring:\n{report}")


def legal_pair_count(counts: LayerCounts) -> int:
    s, i, c, m = counts.sizes()
    return s * i + i * c + c * c + c * m


def wiring_stats(wiring: NcpWiring) -> dict:
    """Synapse count, density relative to the fully wired legal graph, and
    per-layer fan-in/fan-out totals."""
    counts = wiring.counts
    fan_in = {layer: 0 for layer in LAYERS}
    fan_out = {layer: 0 for layer in LAYERS}
    for syn in wiring.synapses:
        fan_out[counts.layer_of(syn.source)] += 1
        fan_in[counts.layer_of(syn.target)] += 1
    return {
        "synapses": wiring.n_synapses,
        "legal_pairs": legal_pair_count(counts),
        "density": wiring.n_synapses / legal_pair_count(counts),
        "total_units": counts.total,
        "ode_neurons": counts.n_state,
        "fan_in": fan_in,
        "fan_out": fan_out,
        "excitatory": sum(1 for s in wiring.synapses if s.polarity > 0),
        "inhibitory": sum(1 for s in wiring.synapses if s.polarity < 0),
    }


def to_dot(wiring: NcpWiring) -> str:
    """Graphviz rendering; excitatory synapses solid, inhibitory dashed."""
    counts = wiring.counts
    lines = ["digraph ncp {", "  rankdir=LR;"]
    for layer in LAYERS:
        ids = " ".join(f"n{n};" for n in counts.layer_ids(layer))
        lines.append(f"  subgraph cluster_{layer} {{ label=\"{layer}\"; {ids} }}")
    for syn in wiring.synapses:
        style = "solid" if syn.polarity > 0 else "dashed"
        lines.append(f"  n{syn.source} -> n{syn.target} [style={style}, polarity={syn.polarity:+d}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
