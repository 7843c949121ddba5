"""
Spike records to rates, alignment indices, persistence checks and empirical
bifurcation diagrams.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import SimulationConfig, SpikeRecord, simulate
from .errors import MfsnnError, ParameterError, ProtocolError
from .stimulus import StimulusEvent, StimulusSchedule, SymbolPattern

log = logging.getLogger(__name__)

__all__ = [
    "RateTrace",
    "AlignmentTrace",
    "BifurcationPoint",
    "BifurcationDiagram",
    "SweepProtocol",
    "CriticalAlpha",
    "estimate_rates",
    "alignment_index",
    "alignment_trace",
    "mean_rates",
    "steady_state_projection",
    "bifurcation_sweep",
    "detect_critical_alpha",
    "persistence_check",
    "noise_band",
    "branch_spread",
]


@dataclass
class RateTrace:
    times: np.ndarray
    rates: np.ndarray  # shape (len(times), N), Hz
    window: float


@dataclass
class AlignmentTrace:
    times: np.ndarray
    rho: np.ndarray  # shape (len(times), n_outputs)
    names: tuple[str, ...] = ("A", "B", "C", "D")

    def __post_init__(self):
        if np.any(np.abs(self.rho) > 1 + 1e-12):
            raise AssertionError("alignment index outside [-1, 1]")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.rho[:, self.names.index(name)]


def estimate_rates(record: SpikeRecord, window: float = 100.0, step: float = 10.0) -> RateTrace:
    """Causal sliding-window rates: spikes in ``(t - window, t]`` over the window.

    Sampled at ``t = step, 2 step, ...`` up to the record duration.
    """
    if not (window > 0 and step > 0):
        raise ParameterError("window and step must be positive")
    n_samples = int(math.floor(record.duration / step + 1e-9))
    times = step * np.arange(1, n_samples + 1)
    rates = np.zeros((n_samples, record.n_neurons))
    # tiny tolerance so spikes sitting exactly on a sample edge are binned stably
    eps = 1e-9
    for i in range(record.n_neurons):
        st = record.spikes_of(i)
        if st.size == 0:
            continue
        hi = np.searchsorted(st, times + eps, side="left")
        lo = np.searchsorted(st, times - window + eps, side="left")
        rates[:, i] = (hi - lo) * (1000.0 / window)
    return RateTrace(times, rates, window)


def alignment_index(nu, v_out) -> float:
    """Cosine between ``v_out`` and the mean-centred rate vector, over ``||nu||``.

    A silent network (``||nu|| = 0``) has alignment 0.
    """
    nu = np.asarray(nu, dtype=float)
    v = np.asarray(v_out, dtype=float)
    norm_nu = np.linalg.norm(nu)
    if norm_nu == 0:
        return 0.0
    rho = float((v / np.linalg.norm(v)) @ (nu - nu.mean()) / norm_nu)
    assert abs(rho) <= 1 + 1e-12, rho
    return rho


def alignment_trace(rates: RateTrace, outputs: dict) -> AlignmentTrace:
    """Alignment of every rate sample with every named output vector."""
    names = tuple(outputs)
    V = np.array([np.asarray(outputs[k], dtype=float) for k in names])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    nu = rates.rates
    norms = np.linalg.norm(nu, axis=1)
    centred = nu - nu.mean(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = (centred @ V.T) / norms[:, None]
    rho[norms == 0] = 0.0
    return AlignmentTrace(rates.times.copy(), rho, names)


def mean_rates(record: SpikeRecord, start: float, end: float) -> np.ndarray:
    """Per-neuron mean rate (Hz) over ``[start, end)``."""
    if not end > start:
        raise ProtocolError("measurement window must have positive length")
    counts = np.zeros(record.n_neurons)
    mask = (record.times >= start) & (record.times < end)
    np.add.at(counts, record.neurons[mask], 1)
    return counts * 1000.0 / (end - start)


def steady_state_projection(record: SpikeRecord, v_max, measure_window, stimulus_offset: float | None = None) -> float:
    """Centred mean-rate vector over the window projected on ``v_max/||v_max||`` (Hz)."""
    start, end = measure_window
    if start < 0 or end > record.duration + 1e-9 or not end > start:
        raise ProtocolError(f"measurement window {measure_window} outside record of {record.duration} ms")
    if stimulus_offset is not None and start < stimulus_offset:
        raise ProtocolError(f"measurement starts at {start} ms, before stimulus offset {stimulus_offset} ms")
    v = np.asarray(v_max, dtype=float)
    nu = mean_rates(record, start, end)
    return float((v / np.linalg.norm(v)) @ (nu - nu.mean()))


def persistence_check(
    alignment: AlignmentTrace,
    stimulus_offsets,
    hold: float,
    threshold: float,
    symbols=None,
) -> list[bool]:
    """Whether alignment stays above ``threshold`` for ``hold`` ms after each offset.

    With ``symbols`` given, the signed index of that symbol is tested for each
    offset; otherwise ``|rho|`` of the first output.
    """
    if not hold > 0:
        raise ParameterError("hold must be positive")
    t = alignment.times
    out = []
    for k, off in enumerate(stimulus_offsets):
        if off + hold > t[-1] + 1e-9:
            raise ProtocolError(f"hold window {off}-{off + hold} ms runs past the end of the trace")
        sel = (t > off) & (t <= off + hold + 1e-9)
        if symbols is None:
            vals = np.abs(alignment.rho[sel, 0])
        else:
            vals = alignment[symbols[k]][sel]
        out.append(bool(vals.size and np.all(vals > threshold)))
    return out


# ---------------------------------------------------------------------------
# bifurcation sweeps


@dataclass(frozen=True)
class BifurcationPoint:
    alpha: float
    ic: str
    seed: int
    projection: float


@dataclass
class BifurcationDiagram:
    points: list[BifurcationPoint] = field(default_factory=list)
    missing: list[tuple[float, str, int, str]] = field(default_factory=list)

    @property
    def alphas(self) -> np.ndarray:
        return np.array(sorted({p.alpha for p in self.points}))

    def values(self, alpha: float, ic: str) -> np.ndarray:
        return np.array([p.projection for p in self.points if p.alpha == alpha and p.ic == ic])

    def mean(self, alpha: float, ic: str) -> float:
        vals = self.values(alpha, ic)
        return float(vals.mean()) if vals.size else math.nan


@dataclass
class SweepProtocol:
    """Per-alpha recipe: prime with an initial-condition stimulus, remove it,
    settle, then measure the centred projection on ``v_max``.

    ``build`` maps alpha to a network. ``initial_conditions`` maps a label to
    a pattern, or ``None`` for background-only runs.
    """

    build: Callable
    v_max: tuple
    initial_conditions: dict
    stim_rate: float = 200.0
    stim_onset: float = 200.0
    stim_duration: float = 300.0
    settle: float = 500.0
    measure: float = 500.0
    input_weight: float = 1.0
    background: tuple = (0.0, 0.0)
    background_mode: str = "dc"
    noise: tuple = (0.0, 0.0)
    seeds: tuple = (0, 1, 2, 3, 4)

    @property
    def stim_offset(self) -> float:
        return self.stim_onset + self.stim_duration

    @property
    def measure_window(self) -> tuple[float, float]:
        start = self.stim_offset + self.settle
        return start, start + self.measure

    def schedule(self, ic: str) -> StimulusSchedule:
        pattern = self.initial_conditions[ic]
        events = ()
        if pattern is not None:
            if not isinstance(pattern, SymbolPattern):
                pattern = SymbolPattern(ic, tuple(pattern))
            events = (StimulusEvent(pattern, self.stim_rate, self.stim_onset, self.stim_duration),)
        return StimulusSchedule(
            events,
            self.background[0],
            self.background[1],
            self.input_weight,
            self.background_mode,
            self.noise[0],
            self.noise[1],
        )


def _sweep_run(args):
    protocol, alpha, ic, seed, config = args
    cfg = SimulationConfig(
        dt=config.dt,
        duration=protocol.measure_window[1],
        seed=seed,
        mismatch_cv=config.mismatch_cv,
        record_state=False,
        synaptic_delay=config.synaptic_delay,
    )
    try:
        rec = simulate(protocol.build(alpha), protocol.schedule(ic), cfg)
        proj = steady_state_projection(rec, protocol.v_max, protocol.measure_window, protocol.stim_offset)
        return alpha, ic, seed, proj, None
    except MfsnnError as exc:
        return alpha, ic, seed, None, str(exc)


def bifurcation_sweep(alphas, protocol: SweepProtocol, config: SimulationConfig, workers: int = 1) -> BifurcationDiagram:
    """One simulation per (alpha, initial condition, seed); aborted runs become
    ``missing`` entries and the sweep carries on."""
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ParameterError("alphas must be non-empty")
    if alphas != sorted(alphas):
        raise ParameterError("alphas must be sorted")
    jobs = [(protocol, a, ic, int(s), config) for a in alphas for ic in protocol.initial_conditions for s in protocol.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_run, jobs))
    else:
        results = [_sweep_run(j) for j in jobs]
    diagram = BifurcationDiagram()
    for alpha, ic, seed, proj, err in results:
        if err is None:
            diagram.points.append(BifurcationPoint(alpha, ic, seed, proj))
        else:
            log.warning("run alpha=%s ic=%s seed=%s aborted: %s", alpha, ic, seed, err)
            diagram.missing.append((alpha, ic, seed, err))
    return diagram


@dataclass(frozen=True)
class CriticalAlpha:
    alpha_star: float
    confidence_band: tuple[float, float]
    noise_sigma: float


def _std(vals: np.ndarray) -> float:
    return float(vals.std(ddof=1)) if vals.size > 1 else 0.0


def noise_band(diagram: BifurcationDiagram, alphas, background: str = "background") -> float:
    """Median over ``alphas`` of the across-seed standard deviation of the
    background-IC projections.

    The median keeps one near-critical alpha, where background runs already
    wander between the two states, from dominating the estimate.
    """
    sds = [_std(diagram.values(a, background)) for a in alphas if diagram.values(a, background).size > 1]
    return float(np.median(sds)) if sds else 0.0


def branch_spread(diagram: BifurcationDiagram, alpha: float, ics) -> float:
    """Pooled within-IC standard deviation of the projections at ``alpha``."""
    ss, dof = 0.0, 0
    for ic in ics:
        vals = diagram.values(alpha, ic)
        if vals.size > 1:
            ss += float(((vals - vals.mean()) ** 2).sum())
            dof += vals.size - 1
    return math.sqrt(ss / dof) if dof > 0 else 0.0


def detect_critical_alpha(
    diagram: BifurcationDiagram,
    factor: float = 5.0,
    branches: tuple[str, str] = ("A", "B"),
    background: str = "background",
) -> CriticalAlpha:
    """Smallest alpha where the two branch means separate by more than
    ``factor`` times the background noise band.

    The band at alpha_k is estimated from the background runs at the alphas
    below it (at the first alpha, from that alpha itself), so background runs
    that fall into one of the two states once the network is bistable do not
    inflate it. Raises :class:`ProtocolError` when nothing separates.
    """
    alphas = diagram.alphas
    if alphas.size < 5:
        raise ParameterError("need at least 5 alpha values")
    a_ic, b_ic = branches
    for k, a in enumerate(alphas):
        sigma = noise_band(diagram, alphas[: max(k, 1)], background)
        gap = abs(diagram.mean(a, a_ic) - diagram.mean(a, b_ic))
        if np.isfinite(gap) and gap > factor * sigma and gap > 0:
            lo = float(alphas[k - 1]) if k > 0 else float(a)
            return CriticalAlpha(float(a), (lo, float(a)), sigma)
    raise ProtocolError("no bifurcation detected in range")
