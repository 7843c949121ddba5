"""
Clock-driven network simulation.

Each step of ``dt`` ms: external spikes falling in the step are added to the
synaptic filters, recurrent spikes emitted ``synaptic_delay`` earlier are
delivered through the weight matrix, and every neuron is advanced by one
Euler step. Runs are deterministic functions of (network, schedule, config).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import NumericalError, ParameterError
from .neuron import ParamArrays, advance, apply_mismatch
from .stimulus import InputSpikes, StimulusSchedule, realize_schedule
from .topology import WeightedNetwork

__all__ = ["SimulationConfig", "SpikeRecord", "simulate", "run_with_alpha"]


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 0.1
    duration: float = 1000.0
    seed: int = 0
    mismatch_cv: float = 0.0
    record_state: bool = False
    synaptic_delay: float = 1.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be > 0")
        if not self.duration > 0:
            raise ParameterError("duration must be > 0")
        if self.synaptic_delay < self.dt - 1e-12:
            raise ParameterError("synaptic_delay must be >= dt")
        if not (0 <= self.mismatch_cv < 0.5):
            raise ParameterError("mismatch_cv must be in [0, 0.5)")
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterError("seed must be an unsigned 64-bit integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


@dataclass
class SpikeRecord:
    """Spikes as parallel arrays sorted by (time, neuron)."""

    times: np.ndarray
    neurons: np.ndarray
    n_neurons: int
    duration: float
    metadata: dict = field(default_factory=dict)
    traces: dict | None = None

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.neurons.tolist()))

    def __len__(self):
        return self.times.size

    def spikes_of(self, neuron: int) -> np.ndarray:
        return self.times[self.neurons == neuron]

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.times).tobytes())
        h.update(np.ascontiguousarray(self.neurons.astype(np.int64)).tobytes())
        return h.hexdigest()

    @classmethod
    def merge(cls, records, offsets=None) -> "SpikeRecord":
        """Concatenate records over disjoint neuron sets (renumbered by offset)."""
        offsets = offsets or np.cumsum([0] + [r.n_neurons for r in records[:-1]]).tolist()
        t = np.concatenate([r.times for r in records])
        n = np.concatenate([r.neurons + o for r, o in zip(records, offsets)])
        order = np.lexsort((n, t))
        total = max(o + r.n_neurons for r, o in zip(records, offsets))
        return cls(t[order], n[order], total, max(r.duration for r in records))


def _mismatched_params(network: WeightedNetwork, cv: float, seed: int):
    if cv == 0:
        return list(network.neuron_params)
    return [
        apply_mismatch(p, cv, rngmod.substream(seed, rngmod.MISMATCH, i))
        for i, p in enumerate(network.neuron_params)
    ]


def simulate(
    network: WeightedNetwork,
    schedule: StimulusSchedule | InputSpikes,
    config: SimulationConfig,
) -> SpikeRecord:
    """Run ``network`` under ``schedule`` for ``config.duration`` ms.

    ``schedule`` may also be an already realized :class:`InputSpikes`.
    Raises :class:`NumericalError` naming the first neuron whose state became
    non-finite.
    """
    n = network.size
    dt = config.dt
    steps = config.n_steps
    syn = network.synapse
    if dt > min(syn.exc_time_constant, syn.inh_time_constant) / 5:
        raise ParameterError("dt must be <= min(synaptic time constants)/5")

    if isinstance(schedule, InputSpikes):
        inputs = schedule
        if inputs.dc.size != n:
            raise ParameterError("realized input size does not match the network")
    else:
        inputs = realize_schedule(schedule, n, config.seed, config.duration, syn.exc_time_constant)

    params = _mismatched_params(network, config.mismatch_cv, config.seed)
    p = ParamArrays.stack(params)
    if dt > min(p.tau_m.min(), p.tau_w.min()) / 5:
        raise ParameterError("dt must be <= min(neuron time constants)/5")

    # external spikes binned by step; positive and negative kept apart
    ext_e = np.zeros((steps, n))
    ext_i = np.zeros((steps, n))
    if inputs.times.size:
        idx = np.floor(inputs.times / dt + 1e-9).astype(np.int64)
        ok = (idx >= 0) & (idx < steps)
        idx, nrn, w = idx[ok], inputs.neurons[ok], inputs.weights[ok]
        pos = w > 0
        np.add.at(ext_e, (idx[pos], nrn[pos]), w[pos])
        np.add.at(ext_i, (idx[~pos], nrn[~pos]), -w[~pos])

    W = network.weight_matrix
    W_exc = np.where(W > 0, W, 0.0)
    W_inh = np.where(W < 0, -W, 0.0)
    has_rec = bool(np.any(W))
    delay = max(1, int(round(config.synaptic_delay / dt)))
    ring = np.zeros((delay, n), dtype=bool)

    v = p.v_rest.copy()
    w_ad = np.zeros(n)
    ie = np.zeros(n)
    ii = np.zeros(n)
    rem = np.zeros(n)
    dc = inputs.dc
    decay_e = math.exp(-dt / syn.exc_time_constant)
    decay_i = math.exp(-dt / syn.inh_time_constant)

    spike_steps = []
    spike_ids = []
    traces = None
    if config.record_state:
        traces = {"v": np.empty((steps, n)), "w": np.empty((steps, n)), "I_syn": np.empty((steps, n))}

    # runaway states are caught explicitly below; numpy's overflow warnings add nothing
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            ie += ext_e[k]
            ii += ext_i[k]
            if has_rec:
                arriving = ring[k % delay]
                if arriving.any():
                    ie += W_exc[:, arriving].sum(axis=1)
                    ii += W_inh[:, arriving].sum(axis=1)
            v, w_ad, ie, ii, rem, spiked = advance(v, w_ad, ie, ii, rem, p, dc, dt, decay_e, decay_i)
            if not np.isfinite(v).all() or not np.isfinite(w_ad).all():
                bad = int(np.flatnonzero(~(np.isfinite(v) & np.isfinite(w_ad)))[0])
                raise NumericalError(f"non-finite state in neuron {bad} at t={k * dt:.4f} ms (runaway excitation?)")
            ring[k % delay] = spiked
            if spiked.any():
                ids = np.flatnonzero(spiked)
                spike_steps.append(np.full(ids.size, k, dtype=np.int64))
                spike_ids.append(ids)
            if traces is not None:
                traces["v"][k] = v
                traces["w"][k] = w_ad
                traces["I_syn"][k] = ie - ii

    if spike_steps:
        s = np.concatenate(spike_steps)
        ids = np.concatenate(spike_ids)
    else:
        s = np.empty(0, dtype=np.int64)
        ids = np.empty(0, dtype=np.int64)
    meta = {
        "config": asdict(config),
        "config_hash": config.digest(),
        "network_hash": network.digest(),
    }
    return SpikeRecord(s * dt, ids.astype(np.int64), n, config.duration, meta, traces)


def run_with_alpha(base, alpha: float, schedule, config: SimulationConfig) -> SpikeRecord:
    """Rebuild the network at gain ``alpha`` and simulate it.

    ``base`` is any callable ``alpha -> WeightedNetwork`` (for example a
    partially applied :func:`scale_network` or an sWTA builder).
    """
    if not alpha >= 0:
        raise ParameterError("alpha must be >= 0")
    return simulate(base(alpha), schedule, config)
