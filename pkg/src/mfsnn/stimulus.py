"""
Symbol patterns, Poisson input trains and timed stimulus schedules.

A symbol is a +/-1 vector over the network. Presenting it at rate ``r`` gives
every neuron its own Poisson train at ``r``; neurons with sign +1 receive it
through an excitatory synapse, those with -1 through an inhibitory one.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import ParameterError, ScheduleError

__all__ = [
    "SymbolPattern",
    "StimulusEvent",
    "StimulusSchedule",
    "InputChannel",
    "InputSpikes",
    "generate_poisson_train",
    "encode_symbol",
    "build_schedule",
    "realize_schedule",
    "symbol_set",
    "SYMBOL_A8",
    "SYMBOL_C8",
]

SYMBOL_A8 = (1, 1, 1, 1, -1, -1, -1, -1)
SYMBOL_C8 = (-1, 1, -1, 1, -1, 1, -1, 1)


@dataclass(frozen=True)
class SymbolPattern:
    name: str
    signs: tuple[int, ...]

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if len(signs) == 0 or any(s not in (-1, 1) for s in signs):
            raise ParameterError(f"pattern {self.name!r} must contain only +1/-1 entries")
        object.__setattr__(self, "signs", signs)

    def __len__(self):
        return len(self.signs)

    def __neg__(self) -> "SymbolPattern":
        return SymbolPattern(f"-{self.name}", tuple(-s for s in self.signs))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.signs, dtype=float)


def symbol_set(v, v_perp) -> dict[str, SymbolPattern]:
    """The four symbols A, B, C, D = v, -v, v_perp, -v_perp."""
    v = tuple(int(x) for x in v)
    w = tuple(int(x) for x in v_perp)
    return {
        "A": SymbolPattern("A", v),
        "B": SymbolPattern("B", tuple(-x for x in v)),
        "C": SymbolPattern("C", w),
        "D": SymbolPattern("D", tuple(-x for x in w)),
    }


@dataclass(frozen=True)
class StimulusEvent:
    """One symbol presentation.

    ``profile`` optionally scales the rate per neuron (values in [0, 1]);
    the sWTA bump inputs use it, plain symbol presentations leave it unset.
    """

    pattern: SymbolPattern
    rate: float
    onset: float
    duration: float
    profile: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.rate >= 0:
            raise ParameterError(f"rate must be >= 0 (event {self.pattern.name!r}), got {self.rate}")
        if not self.duration > 0:
            raise ParameterError(f"duration must be > 0 (event {self.pattern.name!r})")
        if self.profile is not None:
            prof = tuple(float(x) for x in self.profile)
            if len(prof) != len(self.pattern):
                raise ParameterError("profile length must match pattern length")
            if any(not (x >= 0) for x in prof):
                raise ParameterError("profile entries must be >= 0")
            object.__setattr__(self, "profile", prof)

    @property
    def offset(self) -> float:
        return self.onset + self.duration

    def neuron_rates(self) -> np.ndarray:
        if self.profile is None:
            return np.full(len(self.pattern), float(self.rate))
        return self.rate * np.asarray(self.profile)


@dataclass(frozen=True)
class StimulusSchedule:
    """Ordered, non-overlapping stimulus events plus whole-run background drive.

    Background drive has mean current ``background_rate * background_weight *
    tau_exc / 1000`` per neuron. In ``"dc"`` mode it is injected as that
    constant current; in ``"poisson"`` mode as independent Poisson trains.
    ``input_weight`` is the magnitude of each stimulus spike. ``noise_rate``
    and ``noise_weight`` add zero-mean background noise: every neuron gets an
    excitatory and an inhibitory Poisson train at ``noise_rate``, both with
    magnitude ``noise_weight``.
    """

    events: tuple[StimulusEvent, ...] = ()
    background_rate: float = 0.0
    background_weight: float = 0.0
    input_weight: float = 1.0
    background_mode: str = "dc"
    noise_rate: float = 0.0
    noise_weight: float = 0.0

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        problems = schedule_violations(events)
        if problems:
            raise ScheduleError("; ".join(problems))
        if not self.background_rate >= 0:
            raise ParameterError("background_rate must be >= 0")
        if not np.isfinite(self.background_weight):
            raise ParameterError("background_weight must be finite")
        if not self.input_weight >= 0:
            raise ParameterError("input_weight must be >= 0")
        if self.background_mode not in ("dc", "poisson"):
            raise ParameterError("background_mode must be 'dc' or 'poisson'")
        if not (self.noise_rate >= 0 and self.noise_weight >= 0):
            raise ParameterError("noise_rate and noise_weight must be >= 0")

    @property
    def end(self) -> float:
        return max((e.offset for e in self.events), default=0.0)

    def shifted(self, delta: float) -> "StimulusSchedule":
        events = tuple(
            StimulusEvent(e.pattern, e.rate, e.onset + delta, e.duration, e.profile) for e in self.events
        )
        return dataclasses.replace(self, events=events)

    def to_dict(self) -> dict:
        out = {
            "background": {
                "rate": self.background_rate,
                "weight": self.background_weight,
                "mode": self.background_mode,
            },
            "noise": {"rate": self.noise_rate, "weight": self.noise_weight},
            "input_weight": self.input_weight,
            "events": [],
        }
        for e in self.events:
            item = {
                "name": e.pattern.name,
                "signs": list(e.pattern.signs),
                "rate": e.rate,
                "onset": e.onset,
                "duration": e.duration,
            }
            if e.profile is not None:
                item["profile"] = list(e.profile)
            out["events"].append(item)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "StimulusSchedule":
        bg = data.get("background", {})
        noise = data.get("noise", {})
        events = tuple(
            StimulusEvent(
                SymbolPattern(item["name"], tuple(item["signs"])),
                float(item["rate"]),
                float(item["onset"]),
                float(item["duration"]),
                tuple(item["profile"]) if item.get("profile") is not None else None,
            )
            for item in data.get("events", [])
        )
        return cls(
            events,
            float(bg.get("rate", 0.0)),
            float(bg.get("weight", 0.0)),
            float(data.get("input_weight", 1.0)),
            bg.get("mode", "dc"),
            float(noise.get("rate", 0.0)),
            float(noise.get("weight", 0.0)),
        )


def schedule_violations(events) -> list[str]:
    """Human-readable ordering/overlap problems; empty when the list is valid."""
    problems = []
    for k in range(1, len(events)):
        prev, cur = events[k - 1], events[k]
        if cur.onset < prev.onset:
            problems.append(f"event {k} ({cur.pattern.name}) starts before event {k - 1} ({prev.pattern.name})")
        elif cur.onset < prev.offset - 1e-9:
            problems.append(
                f"event {k - 1} ({prev.pattern.name}, {prev.onset}-{prev.offset} ms) overlaps "
                f"event {k} ({cur.pattern.name}, {cur.onset}-{cur.offset} ms)"
            )
    return problems


def generate_poisson_train(rate: float, start: float, duration: float, rng) -> np.ndarray:
    """Homogeneous Poisson spike times (ms) in ``[start, start + duration)``."""
    if rate < 0:
        raise ParameterError(f"rate must be >= 0, got {rate}")
    if not duration > 0:
        raise ParameterError("duration must be > 0")
    if rate == 0:
        return np.empty(0)
    n = rng.poisson(rate * duration / 1000.0)
    times = np.sort(rng.uniform(0.0, duration, size=n))
    return start + times


@dataclass(frozen=True)
class InputChannel:
    neuron: int
    sign: int
    rate: float


def encode_symbol(pattern: SymbolPattern, rate: float) -> list[InputChannel]:
    """Assign every neuron an input channel with the pattern's synaptic sign."""
    if rate < 0:
        raise ParameterError(f"rate must be >= 0, got {rate}")
    if rate == 0:
        return []
    return [InputChannel(i, s, float(rate)) for i, s in enumerate(pattern.signs)]


def build_schedule(
    sequence,
    gap: float = 300.0,
    background: tuple[float, float] = (0.0, 0.0),
    *,
    start: float = 0.0,
    input_weight: float = 1.0,
    background_mode: str = "dc",
    noise: tuple[float, float] = (0.0, 0.0),
) -> StimulusSchedule:
    """Lay out ``(pattern, rate, duration)`` items back to back, ``gap`` ms apart."""
    events = []
    t = float(start)
    for pattern, rate, duration in sequence:
        if not duration > 0:
            raise ParameterError(f"duration must be > 0 for {pattern.name!r}")
        events.append(StimulusEvent(pattern, float(rate), t, float(duration)))
        t += duration + gap
    return StimulusSchedule(
        tuple(events),
        float(background[0]),
        float(background[1]),
        input_weight,
        background_mode,
        float(noise[0]),
        float(noise[1]),
    )


@dataclass
class InputSpikes:
    """A realized schedule: external spikes plus per-neuron constant current."""

    times: np.ndarray
    neurons: np.ndarray
    weights: np.ndarray
    dc: np.ndarray
    n_neurons: int = field(default=0)

    def subset(self, neurons) -> "InputSpikes":
        """Restrict to ``neurons`` and renumber them 0..k-1."""
        neurons = list(neurons)
        remap = {n: k for k, n in enumerate(neurons)}
        mask = np.isin(self.neurons, neurons)
        return InputSpikes(
            self.times[mask],
            np.array([remap[n] for n in self.neurons[mask]], dtype=np.int64),
            self.weights[mask],
            self.dc[neurons],
            len(neurons),
        )


def realize_schedule(
    schedule: StimulusSchedule, n_neurons: int, seed: int, duration: float, exc_time_constant: float
) -> InputSpikes:
    """Draw every Poisson train of ``schedule`` for a run of ``duration`` ms.

    Train (event k, neuron i) comes from its own keyed substream; background
    trains likewise, keyed by neuron.
    """
    times, neurons, weights = [], [], []
    for k, event in enumerate(schedule.events):
        if len(event.pattern) != n_neurons:
            raise ParameterError(
                f"pattern {event.pattern.name!r} has length {len(event.pattern)}, network has {n_neurons}"
            )
        if event.onset >= duration:
            continue
        rates = event.neuron_rates()
        for ch in encode_symbol(event.pattern, 1.0):
            r = rates[ch.neuron]
            if r <= 0:
                continue
            train = generate_poisson_train(r, event.onset, event.duration, rngmod.substream(seed, rngmod.STIMULUS, k, ch.neuron))
            times.append(train)
            neurons.append(np.full(train.size, ch.neuron, dtype=np.int64))
            weights.append(np.full(train.size, ch.sign * schedule.input_weight))

    mean_current = schedule.background_rate * schedule.background_weight * exc_time_constant / 1000.0
    dc = np.zeros(n_neurons)
    if schedule.background_mode == "dc":
        dc[:] = mean_current
    elif schedule.background_rate > 0 and schedule.background_weight != 0:
        for i in range(n_neurons):
            train = generate_poisson_train(
                schedule.background_rate, 0.0, duration, rngmod.substream(seed, rngmod.BACKGROUND, i)
            )
            times.append(train)
            neurons.append(np.full(train.size, i, dtype=np.int64))
            weights.append(np.full(train.size, schedule.background_weight))

    if schedule.noise_rate > 0 and schedule.noise_weight > 0:
        for i in range(n_neurons):
            for channel, sign in enumerate((1.0, -1.0)):
                train = generate_poisson_train(
                    schedule.noise_rate, 0.0, duration, rngmod.substream(seed, rngmod.NOISE, i, channel)
                )
                times.append(train)
                neurons.append(np.full(train.size, i, dtype=np.int64))
                weights.append(np.full(train.size, sign * schedule.noise_weight))

    if times:
        t = np.concatenate(times)
        n = np.concatenate(neurons)
        w = np.concatenate(weights)
        keep = t < duration
        t, n, w = t[keep], n[keep], w[keep]
        order = np.lexsort((n, t))
        t, n, w = t[order], n[order], w[order]
    else:
        t, n, w = np.empty(0), np.empty(0, dtype=np.int64), np.empty(0)
    return InputSpikes(t, n, w, dc, n_neurons)
