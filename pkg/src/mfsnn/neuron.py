"""
Adaptive-exponential integrate-and-fire neuron with current-based synapses.

All currents are expressed as voltage equivalents (current times membrane
resistance), so a constant external current ``I`` drives the membrane towards
``resting_potential + I`` in the absence of spiking. Times are in ms.

Membrane equation, integrated with forward Euler::

    tau_m dv/dt = -(v - E_L) + D_T (exp((v - V_T)/D_T) - exp((E_L - V_T)/D_T))
                  - w + I_exc - I_inh + I_ext
    tau_w dw/dt = a (v - E_L) - w

The constant ``exp((E_L - V_T)/D_T)`` offset makes the resting potential an
exact equilibrium. Synaptic currents decay exactly (exponential propagator).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.stats import truncnorm

from .errors import NumericalError, ParameterError

__all__ = [
    "NeuronParams",
    "NeuronState",
    "SynapseParams",
    "ParamArrays",
    "integrate_step",
    "apply_input_spike",
    "apply_mismatch",
    "lif_rate",
    "advance",
]


@dataclass(frozen=True)
class NeuronParams:
    membrane_time_constant: float = 20.0
    resting_potential: float = -70.0
    spike_threshold: float = -50.0
    reset_potential: float = -60.0
    refractory_period: float = 2.0
    exp_slope: float = 2.0
    adaptation_increment: float = 0.5
    adaptation_time_constant: float = 100.0
    adaptation_coupling: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise NumericalError(f"{f.name} is not finite")
        if self.membrane_time_constant <= 0 or self.adaptation_time_constant <= 0:
            raise ParameterError("time constants must be positive")
        if self.spike_threshold <= self.resting_potential:
            raise ParameterError("spike_threshold must exceed resting_potential")
        if self.reset_potential > self.spike_threshold:
            raise ParameterError("reset_potential must not exceed spike_threshold")
        if self.refractory_period < 0:
            raise ParameterError("refractory_period must be >= 0")
        if self.exp_slope < 0:
            raise ParameterError("exp_slope must be >= 0")

    def replace(self, **changes) -> "NeuronParams":
        return dataclasses.replace(self, **changes)

    @property
    def time_constants(self) -> tuple[float, ...]:
        return (self.membrane_time_constant, self.adaptation_time_constant)


@dataclass(frozen=True)
class SynapseParams:
    exc_time_constant: float = 10.0
    inh_time_constant: float = 10.0
    unit_weight: float = 1.0

    def __post_init__(self):
        if not (self.exc_time_constant > 0 and self.inh_time_constant > 0):
            raise ParameterError("synaptic time constants must be positive")
        if not self.unit_weight > 0:
            raise ParameterError("unit_weight must be positive")


@dataclass
class NeuronState:
    membrane_potential: float = -70.0
    adaptation_variable: float = 0.0
    refractory_remaining: float = 0.0
    exc_synaptic_current: float = 0.0
    inh_synaptic_current: float = 0.0

    @classmethod
    def at_rest(cls, params: NeuronParams) -> "NeuronState":
        return cls(membrane_potential=params.resting_potential)

    @property
    def synaptic_drive(self) -> float:
        return self.exc_synaptic_current - self.inh_synaptic_current


@dataclass
class ParamArrays:
    """Per-neuron parameters stacked column-wise for vectorized updates."""

    tau_m: np.ndarray
    v_rest: np.ndarray
    v_thresh: np.ndarray
    v_reset: np.ndarray
    t_ref: np.ndarray
    delta_t: np.ndarray
    b: np.ndarray
    tau_w: np.ndarray
    a: np.ndarray
    exp_rest: np.ndarray = field(init=False)

    def __post_init__(self):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            safe = np.where(self.delta_t > 0, self.delta_t, 1.0)
            self.exp_rest = np.where(
                self.delta_t > 0, np.exp((self.v_rest - self.v_thresh) / safe), 0.0
            )

    @classmethod
    def stack(cls, params: list[NeuronParams]) -> "ParamArrays":
        def col(name):
            return np.array([getattr(p, name) for p in params], dtype=float)

        return cls(
            tau_m=col("membrane_time_constant"),
            v_rest=col("resting_potential"),
            v_thresh=col("spike_threshold"),
            v_reset=col("reset_potential"),
            t_ref=col("refractory_period"),
            delta_t=col("exp_slope"),
            b=col("adaptation_increment"),
            tau_w=col("adaptation_time_constant"),
            a=col("adaptation_coupling"),
        )


def advance(v, w, ie, ii, rem, p: ParamArrays, i_ext, dt, decay_e, decay_i):
    """One vectorized Euler step. Works on float64 arrays of equal length.

    ``decay_e``/``decay_i`` are the exact one-step propagators
    ``exp(-dt/tau)`` of the synaptic filters. Returns the new arrays and a
    boolean spike mask.
    """
    refractory = rem > 0.0
    # exponential term, argument clamped at threshold so exp never overflows
    expo = np.zeros_like(v)
    active = p.delta_t > 0
    if active.any():
        arg = (np.minimum(v, p.v_thresh) - p.v_thresh) / np.where(active, p.delta_t, 1.0)
        expo = np.where(active, p.delta_t * (np.exp(arg) - p.exp_rest), 0.0)
    dv = (-(v - p.v_rest) + expo - w + ie - ii + i_ext) * (dt / p.tau_m)
    dw = (p.a * (v - p.v_rest) - w) * (dt / p.tau_w)
    v_new = np.where(refractory, p.v_reset, v + dv)
    w_new = w + dw
    rem_new = np.maximum(rem - dt, 0.0)
    rem_new[rem_new < 1e-9 * dt] = 0.0

    spiked = (~refractory) & (v_new >= p.v_thresh)
    if spiked.any():
        v_new = np.where(spiked, p.v_reset, v_new)
        w_new = np.where(spiked, w_new + p.b, w_new)
        rem_new = np.where(spiked, p.t_ref, rem_new)
    return v_new, w_new, ie * decay_e, ii * decay_i, rem_new, spiked


def _check_dt(dt: float, params: NeuronParams, synapse: SynapseParams) -> None:
    if not dt > 0:
        raise ParameterError("dt must be positive")
    taus = params.time_constants + (synapse.exc_time_constant, synapse.inh_time_constant)
    if dt > min(taus) / 5:
        raise ParameterError(f"dt={dt} exceeds min(time constants)/5={min(taus) / 5}")


def integrate_step(
    state: NeuronState,
    params: NeuronParams,
    external_current: float,
    dt: float,
    synapse: SynapseParams = SynapseParams(),
) -> tuple[NeuronState, bool]:
    """Advance a single neuron by ``dt`` ms.

    On a threshold crossing the membrane is reset, the adaptation variable is
    incremented and the refractory timer starts; while it runs the membrane
    is clamped at ``reset_potential``.
    """
    _check_dt(dt, params, synapse)
    values = (
        state.membrane_potential,
        state.adaptation_variable,
        state.refractory_remaining,
        state.exc_synaptic_current,
        state.inh_synaptic_current,
        external_current,
    )
    if not all(math.isfinite(x) for x in values):
        raise NumericalError("non-finite neuron state or input")
    p = ParamArrays.stack([params])
    arr = lambda x: np.array([x], dtype=float)  # noqa: E731
    v, w, ie, ii, rem, spiked = advance(
        arr(state.membrane_potential),
        arr(state.adaptation_variable),
        arr(state.exc_synaptic_current),
        arr(state.inh_synaptic_current),
        arr(state.refractory_remaining),
        p,
        external_current,
        dt,
        math.exp(-dt / synapse.exc_time_constant),
        math.exp(-dt / synapse.inh_time_constant),
    )
    new = NeuronState(
        membrane_potential=float(v[0]),
        adaptation_variable=float(w[0]),
        refractory_remaining=float(rem[0]),
        exc_synaptic_current=float(ie[0]),
        inh_synaptic_current=float(ii[0]),
    )
    if not math.isfinite(new.membrane_potential) or not math.isfinite(new.adaptation_variable):
        raise NumericalError("neuron state became non-finite")
    return new, bool(spiked[0])


def apply_input_spike(state: NeuronState, weight: float) -> NeuronState:
    """Route a presynaptic spike to the excitatory or inhibitory filter by sign."""
    if weight > 0:
        return dataclasses.replace(state, exc_synaptic_current=state.exc_synaptic_current + weight)
    if weight < 0:
        return dataclasses.replace(state, inh_synaptic_current=state.inh_synaptic_current - weight)
    return state


# fields scaled directly by the mismatch factor; voltages are handled as
# offsets from rest so that sign conventions and ordering survive scaling
_SCALED = (
    "membrane_time_constant",
    "refractory_period",
    "exp_slope",
    "adaptation_increment",
    "adaptation_time_constant",
    "adaptation_coupling",
)


def apply_mismatch(params: NeuronParams, coefficient_of_variation: float, rng) -> NeuronParams:
    """Return a copy of ``params`` with device-mismatch-like variability.

    Every parameter gets an independent multiplicative factor drawn from a
    Gaussian with mean 1 and the given CV, truncated to [0.5, 1.5]. Voltages
    are scaled as distances from the resting potential. Draws that would
    put the reset above threshold are rejected and redrawn.
    """
    cv = coefficient_of_variation
    if not (0 <= cv < 0.5):
        raise ParameterError(f"coefficient_of_variation must be in [0, 0.5), got {cv}")
    if cv == 0:
        return params
    lo, hi = -0.5 / cv, 0.5 / cv
    for _ in range(1000):
        f = truncnorm.rvs(lo, hi, loc=1.0, scale=cv, size=len(_SCALED) + 2, random_state=rng)
        changes = {name: getattr(params, name) * f[k] for k, name in enumerate(_SCALED)}
        rest = params.resting_potential
        thresh = rest + (params.spike_threshold - rest) * f[-2]
        reset = rest + (params.reset_potential - rest) * f[-1]
        if reset <= thresh:
            return params.replace(spike_threshold=thresh, reset_potential=reset, **changes)
    raise ParameterError("could not draw mismatched parameters satisfying invariants")


def lif_rate(params: NeuronParams, current: float) -> float:
    """Closed-form firing rate (Hz) of the leaky integrate-and-fire limit.

    Valid for ``exp_slope = 0`` and no adaptation; ``current`` is the
    voltage-equivalent constant drive.
    """
    v_inf = params.resting_potential + current
    if v_inf <= params.spike_threshold:
        return 0.0
    isi = params.refractory_period + params.membrane_time_constant * math.log(
        (v_inf - params.reset_potential) / (v_inf - params.spike_threshold)
    )
    return 1000.0 / isi
