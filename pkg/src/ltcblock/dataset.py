"""Scenario CSV I/O, power normalization, weak-beam exclusion and windowing.

Scenario files are plain CSV with header ``t,p00,...,pNN,blocked``: one
normalized-power column per beam and a link-level blockage label shared by
all beams.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .cell import ObservationWindow, window_features
from .errors import ConfigError, SchemaError
from .fileio import atomic_write_text

log = logging.getLogger(__name__)

WEAK_BEAM_THRESHOLD = 0.4


@dataclass(frozen=True)
class PowerTrace:
    beam_id: int
    power: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.power.shape != self.labels.shape:
            raise ConfigError("power and labels differ in length")


@dataclass(frozen=True)
class Scenario:
    """All beams of one scenario: ``power`` is (n_beams, L), ``labels`` (L,)."""

    scenario_id: str
    t: np.ndarray
    power: np.ndarray
    labels: np.ndarray

    @property
    def n_beams(self) -> int:
        return self.power.shape[0]

    @property
    def length(self) -> int:
        return self.labels.shape[0]

    @property
    def traces(self) -> list[PowerTrace]:
        return [PowerTrace(b, self.power[b], self.labels) for b in range(self.n_beams)]

    @classmethod
    def from_traces(cls, scenario_id: str, traces: list[PowerTrace], t=None) -> "Scenario":
        if not traces:
            raise ConfigError("scenario needs at least one trace")
        labels = traces[0].labels
        for tr in traces[1:]:
            if not np.array_equal(tr.labels, labels):
                raise ConfigError("labels must be shared by every beam of a scenario")
        power = np.stack([tr.power for tr in sorted(traces, key=lambda tr: tr.beam_id)])
        t = np.arange(labels.size) if t is None else np.asarray(t)
        return cls(scenario_id, t, power, np.asarray(labels, dtype=np.int64))


def _column_names(n_beams: int) -> list[str]:
    width = max(2, len(str(n_beams - 1)))
    return [f"p{b:0{width}d}" for b in range(n_beams)]


def scenario_csv(scenario: Scenario) -> str:
    header = ["t", *_column_names(scenario.n_beams), "blocked"]
    lines = [",".join(header)]
    for k in range(scenario.length):
        cells = [str(int(scenario.t[k]))]
        cells += [repr(float(v)) for v in scenario.power[:, k]]
        cells.append(str(int(scenario.labels[k])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def save_scenario(scenario: Scenario, path) -> Path:
    path = Path(path)
    atomic_write_text(path, scenario_csv(scenario))
    return path


def parse_scenario(text: str, scenario_id: str = "scenario") -> Scenario:
    """Strict parser for the scenario CSV; tolerates CRLF and one trailing newline."""
    lines = text.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise SchemaError("empty file", row=1)
    header = lines[0].split(",")
    if len(header) < 3 or header[0] != "t" or header[-1] != "blocked":
        raise SchemaError("header must be t,p00,...,blocked", row=1)
    n_beams = len(header) - 2
    expected = _column_names(n_beams)
    for col, (got, want) in enumerate(zip(header[1:-1], expected), start=2):
        if got != want:
            raise SchemaError(f"unexpected column name {got!r}, wanted {want!r}", row=1, column=got)

    n_rows = len(lines) - 1
    t = np.empty(n_rows, dtype=np.int64)
    power = np.empty((n_beams, n_rows))
    labels = np.empty(n_rows, dtype=np.int64)
    for k, line in enumerate(lines[1:]):
        row = k + 2
        cells = line.split(",")
        if len(cells) != len(header):
            raise SchemaError(f"expected {len(header)} cells, found {len(cells)}", row=row)
        try:
            t[k] = int(cells[0])
        except ValueError:
            raise SchemaError(f"non-integer time {cells[0]!r}", row=row, column="t") from None
        if k and t[k] <= t[k - 1]:
            raise SchemaError("t is not strictly increasing", row=row, column="t")
        for b, cell in enumerate(cells[1:-1]):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"non-numeric power {cell!r}", row=row, column=header[b + 1]) from None
            if not 0.0 <= v <= 1.0:
                raise SchemaError(f"power {v} outside [0, 1]", row=row, column=header[b + 1])
            power[b, k] = v
        if cells[-1] not in ("0", "1"):
            raise SchemaError(f"label {cells[-1]!r} not in {{0, 1}}", row=row, column="blocked")
        labels[k] = int(cells[-1])
    return Scenario(scenario_id, t, power, labels)


def load_scenario(path) -> Scenario:
    """Read a scenario CSV; the scenario id is the file stem."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path} is not UTF-8: {exc}") from exc
    return parse_scenario(text, path.stem)


def normalize_power(raw) -> np.ndarray:
    """Divide by the maximum over the whole array (scenario-wide, not per beam)."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0 or not np.any(raw > 0):
        raise ConfigError("normalization needs at least one positive value")
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise ConfigError("raw power must be finite and non-negative")
    return raw / raw.max()


def normalize_scenario(scenario: Scenario) -> Scenario:
    return Scenario(scenario.scenario_id, scenario.t, normalize_power(scenario.power),
                    scenario.labels)


def filter_weak_beams(traces, threshold: float = WEAK_BEAM_THRESHOLD) -> np.ndarray:
    """Boolean mask over beams: kept iff mean power over unblocked samples >= threshold.

    ``traces`` is a list of :class:`PowerTrace` or a :class:`Scenario`.
    A beam with no unblocked samples is judged on all of its samples.
    """
    if isinstance(traces, Scenario):
        traces = traces.traces
    mask = np.zeros(len(traces), dtype=bool)
    for k, tr in enumerate(traces):
        clear = tr.labels == 0
        values = tr.power[clear] if np.any(clear) else tr.power
        mask[k] = float(np.mean(values)) >= threshold
    return mask


@dataclass(frozen=True)
class Sample:
    window: ObservationWindow
    horizon: int
    label: int
    beam_id: int
    scenario_id: str = ""


@dataclass(frozen=True)
class WindowSet:
    """Array form of a windowed dataset, used by training and evaluation."""

    features: np.ndarray  # (n, T_ob, F)
    labels: np.ndarray    # (n,)
    beam_ids: np.ndarray  # (n,)
    t_end: np.ndarray     # (n,) index into the trace
    horizon: int
    scenario_id: str = ""

    def __len__(self) -> int:
        return self.labels.shape[0]

    def samples(self) -> list[Sample]:
        return [Sample(ObservationWindow(self.features[k], int(self.t_end[k])), self.horizon,
                       int(self.labels[k]), int(self.beam_ids[k]), self.scenario_id)
                for k in range(len(self))]

    @classmethod
    def concat(cls, parts: list["WindowSet"]) -> "WindowSet":
        if not parts:
            raise ConfigError("nothing to concatenate")
        return cls(np.concatenate([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]),
                   np.concatenate([p.beam_ids for p in parts]),
                   np.concatenate([p.t_end for p in parts]),
                   parts[0].horizon, parts[0].scenario_id)


def _check_window_args(t_ob: int, horizon: int, stride: int) -> None:
    if t_ob < 2:
        raise ConfigError(f"T_ob must be >= 2, got {t_ob}")
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")


def window_arrays(traces, t_ob: int = 32, horizon: int = 1, stride: int = 1,
                  mask=None, scenario_id: str = "") -> WindowSet:
    """Every full window ending at t_end with label x[t_end + K], over the
    beams selected by ``mask``."""
    _check_window_args(t_ob, horizon, stride)
    if isinstance(traces, Scenario):
        scenario_id = scenario_id or traces.scenario_id
        traces = traces.traces
    mask = np.ones(len(traces), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != (len(traces),):
        raise ConfigError("beam mask length differs from the number of traces")

    feats, labels, beams, ends = [], [], [], []
    for tr, keep in zip(traces, mask):
        if not keep:
            continue
        L = tr.power.shape[0]
        if L < t_ob + horizon:
            warnings.warn(f"beam {tr.beam_id}: trace length {L} < T_ob + K = {t_ob + horizon}; "
                          "no windows", stacklevel=2)
            continue
        # t_end runs over t_ob-1 .. L-1-K
        n_full = L - t_ob - horizon + 1
        starts = np.arange(0, n_full, stride)
        views = sliding_window_view(tr.power, t_ob)[starts]
        feats.append(window_features(views))
        t_end = starts + t_ob - 1
        labels.append(tr.labels[t_end + horizon].astype(np.int64))
        beams.append(np.full(starts.size, tr.beam_id, dtype=np.int64))
        ends.append(t_end)
    if not feats:
        return WindowSet(np.empty((0, t_ob, 2)), np.empty(0, dtype=np.int64),
                         np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64),
                         horizon, scenario_id)
    return WindowSet(np.concatenate(feats), np.concatenate(labels), np.concatenate(beams),
                     np.concatenate(ends), horizon, scenario_id)


def window_dataset(traces, t_ob: int = 32, horizon: int = 1, stride: int = 1,
                   mask=None, scenario_id: str = "") -> list[Sample]:
    """List-of-samples form of :func:`window_arrays`."""
    return window_arrays(traces, t_ob, horizon, stride, mask, scenario_id).samples()
