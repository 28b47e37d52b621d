"""Synthetic directional-link power traces with labeled blockage events.

Blockage events are drawn once per scenario and shared by all beams.  Each
event is preceded by a pre-blockage signature: over the ``lead_time``
samples before onset the beam power is multiplied by a damped sinusoid
whose envelope grows towards the onset.  During the event the power is
multiplied by ``depth``.  The indoor profile uses one fixed signature;
outdoor profiles draw lead time, amplitude, frequency and phase per event.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import PowerTrace, Scenario, save_scenario
from .errors import ConfigError, GenerationError
from .fileio import atomic_write_text

GENERATOR_VERSION = "1"
STRONG_RANGE = (0.5, 1.0)
WEAK_RANGE = (0.05, 0.35)
_MAX_RETRIES = 1000


@dataclass(frozen=True)
class Signature:
    """Ranges (inclusive) for the per-event signature; equal ends mean fixed."""

    lead_time: tuple[int, int] = (12, 12)
    ripple_amplitude: tuple[float, float] = (0.15, 0.15)
    ripple_frequency: tuple[float, float] = (0.04, 0.04)
    decay: float = 0.01
    random_phase: bool = False


@dataclass(frozen=True)
class ScenarioProfile:
    name: str = "indoor"
    n_beams: int = 64
    trace_length: int = 1500
    strong_beam_fraction: float = 0.5
    noise_std: float = 0.02
    blockage_rate: float = 8.0  # expected events per 1000 samples
    duration: tuple[int, int] = (8, 12)
    depth: float = 0.05
    signature: Signature = field(default_factory=Signature)
    seed: int = 0

    def validate(self, min_length: int = 0) -> None:
        sig = self.signature
        problems = []
        if self.n_beams < 1:
            problems.append("n_beams must be >= 1")
        if self.trace_length <= min_length:
            problems.append(f"trace_length {self.trace_length} must exceed {min_length}")
        if not 0.0 < self.strong_beam_fraction <= 1.0:
            problems.append("strong_beam_fraction must lie in (0, 1]")
        if self.noise_std < 0 or self.blockage_rate < 0:
            problems.append("noise_std and blockage_rate must be non-negative")
        if not 1 <= self.duration[0] <= self.duration[1]:
            problems.append(f"duration range {self.duration} invalid")
        if not 0.0 <= self.depth <= 1.0:
            problems.append("depth must lie in [0, 1]")
        if not 1 <= sig.lead_time[0] <= sig.lead_time[1]:
            problems.append(f"lead_time range {sig.lead_time} invalid")
        for name in ("ripple_amplitude", "ripple_frequency"):
            lo, hi = getattr(sig, name)
            if not 0.0 <= lo <= hi:
                problems.append(f"{name} range {(lo, hi)} invalid")
        if sig.decay < 0:
            problems.append("decay must be non-negative")
        if problems:
            raise ConfigError(f"profile {self.name!r}: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioProfile":
        data = dict(data)
        sig = dict(data.pop("signature", {}))
        for key in ("lead_time", "ripple_amplitude", "ripple_frequency"):
            if key in sig:
                sig[key] = tuple(sig[key])
        if "duration" in data:
            data["duration"] = tuple(data["duration"])
        try:
            return cls(signature=Signature(**sig), **data)
        except TypeError as exc:
            raise ConfigError(f"bad profile definition: {exc}") from exc


@dataclass(frozen=True)
class BlockageEvent:
    onset: int
    duration: int
    depth: float
    lead_time: int
    amplitude: float
    frequency: float
    phase: float = 0.0

    def ripple(self, decay: float) -> np.ndarray:
        """Multiplicative modulation over the lead_time samples before onset."""
        j = np.arange(self.lead_time)
        to_onset = self.lead_time - j  # 1 at the last sample before onset
        envelope = np.exp(-decay * (to_onset - 1))
        return 1.0 + self.amplitude * envelope * np.sin(2 * math.pi * self.frequency * j + self.phase)


def _uniform(rng, lo, hi):
    return lo if lo == hi else float(rng.uniform(lo, hi))


def _integer(rng, lo, hi):
    return lo if lo == hi else int(rng.integers(lo, hi + 1))


def generate_events(profile: ScenarioProfile) -> tuple[BlockageEvent, ...]:
    """Non-overlapping events (signature span included), Poisson count."""
    profile.validate()
    rng = np.random.default_rng([profile.seed, 0])
    L = profile.trace_length
    sig = profile.signature
    n = int(rng.poisson(profile.blockage_rate * L / 1000.0))
    taken: list[tuple[int, int]] = []
    events = []
    for _ in range(n):
        for _attempt in range(_MAX_RETRIES):
            duration = _integer(rng, *profile.duration)
            lead = _integer(rng, *sig.lead_time)
            if lead + duration >= L:
                continue
            onset = int(rng.integers(lead, L - duration))
            span = (onset - lead, onset + duration)
            if all(span[1] <= a or span[0] >= b for a, b in taken):
                break
        else:
            raise GenerationError(f"profile {profile.name!r}: could not place {n} "
                                  f"non-overlapping events in {L} samples")
        taken.append(span)
        events.append(BlockageEvent(
            onset=onset, duration=duration, depth=profile.depth, lead_time=lead,
            amplitude=_uniform(rng, *sig.ripple_amplitude),
            frequency=_uniform(rng, *sig.ripple_frequency),
            phase=float(rng.uniform(0, 2 * math.pi)) if sig.random_phase else 0.0,
        ))
    return tuple(sorted(events, key=lambda e: e.onset))


def strong_beams(profile: ScenarioProfile) -> np.ndarray:
    """Boolean mask of the beams drawn as strong (exact count, random set)."""
    rng = np.random.default_rng([profile.seed, 1])
    n_strong = max(1, round(profile.strong_beam_fraction * profile.n_beams))
    mask = np.zeros(profile.n_beams, dtype=bool)
    mask[rng.permutation(profile.n_beams)[:n_strong]] = True
    return mask


def generate_trace(profile: ScenarioProfile, beam_id: int,
                   events: tuple[BlockageEvent, ...] | None = None) -> PowerTrace:
    """One beam's trace.  ``events`` may be passed to skip re-drawing them."""
    if not 0 <= beam_id < profile.n_beams:
        raise ConfigError(f"beam_id {beam_id} outside 0..{profile.n_beams - 1}")
    if events is None:
        events = generate_events(profile)
    L = profile.trace_length
    rng = np.random.default_rng([profile.seed, 2, beam_id])
    lo, hi = STRONG_RANGE if strong_beams(profile)[beam_id] else WEAK_RANGE
    baseline = float(rng.uniform(lo, hi))

    gain = np.ones(L)
    labels = np.zeros(L, dtype=np.int64)
    for ev in events:
        gain[ev.onset - ev.lead_time:ev.onset] *= ev.ripple(profile.signature.decay)
        gain[ev.onset:ev.onset + ev.duration] = ev.depth
        labels[ev.onset:ev.onset + ev.duration] = 1
    power = baseline * gain
    if profile.noise_std > 0:
        power = power + rng.normal(0.0, profile.noise_std, L)
    return PowerTrace(beam_id, np.clip(power, 0.0, 1.0), labels)


def generate_scenario(profile: ScenarioProfile) -> tuple[Scenario, tuple[BlockageEvent, ...]]:
    events = generate_events(profile)
    traces = [generate_trace(profile, b, events) for b in range(profile.n_beams)]
    return Scenario.from_traces(profile.name, traces), events


def default_indoor(seed: int = 0) -> ScenarioProfile:
    """Controlled blocker: one fixed signature, every beam aligned and strong."""
    return ScenarioProfile(name="indoor", strong_beam_fraction=1.0, seed=seed)


# name, lead_time, amplitude, frequency, duration, noise, rate, strong fraction
_OUTDOOR = [
    ("scenario17", (8, 14), (0.12, 0.20), (0.033, 0.050), (4, 20), 0.03, 6.0, 0.50),
    ("scenario18", (10, 16), (0.10, 0.18), (0.030, 0.047), (6, 30), 0.02, 5.0, 0.55),
    ("scenario19", (6, 12), (0.08, 0.15), (0.037, 0.053), (8, 40), 0.04, 4.0, 0.45),
    ("scenario20", (12, 18), (0.15, 0.20), (0.027, 0.043), (4, 25), 0.02, 6.0, 0.60),
    ("scenario21", (6, 18), (0.08, 0.20), (0.027, 0.053), (10, 40), 0.06, 4.0, 0.40),
    ("scenario22", (8, 18), (0.10, 0.20), (0.030, 0.052), (4, 40), 0.05, 5.0, 0.50),
]


def default_outdoor(seed: int = 0) -> list[ScenarioProfile]:
    """Uncontrolled traffic: six profiles with per-event signature draws."""
    out = []
    for k, (name, lead, amp, freq, dur, noise, rate, frac) in enumerate(_OUTDOOR):
        out.append(ScenarioProfile(
            name=name, strong_beam_fraction=frac, noise_std=noise, blockage_rate=rate,
            duration=dur, signature=Signature(lead, amp, freq, random_phase=True),
            seed=seed * 1000 + 17 + k,
        ))
    return out


def generate_scenario_set(indoor: ScenarioProfile, outdoor: list[ScenarioProfile],
                          out_dir, min_length: int = 0) -> dict:
    """Write one CSV per profile plus ``manifest.json``; returns the manifest."""
    if not outdoor:
        raise ConfigError("at least one outdoor profile is required")
    names = [indoor.name] + [p.name for p in outdoor]
    if len(set(names)) != len(names):
        raise ConfigError(f"profile names must be unique: {names}")
    for p in [indoor, *outdoor]:
        p.validate(min_length)
    out_dir = Path(out_dir)
    files = {}
    events = {}
    for role, profile in [("indoor", indoor)] + [("outdoor", p) for p in outdoor]:
        scenario, evs = generate_scenario(profile)
        path = save_scenario(scenario, out_dir / f"{profile.name}.csv")
        files[profile.name] = {"path": path.name, "role": role}
        events[profile.name] = [asdict(e) for e in evs]
    manifest = {
        "generator_version": GENERATOR_VERSION,
        "indoor": indoor.name,
        "outdoor": [p.name for p in outdoor],
        "profiles": {p.name: p.to_dict() for p in [indoor, *outdoor]},
        "seeds": {p.name: p.seed for p in [indoor, *outdoor]},
        "files": files,
        "events": events,
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest
