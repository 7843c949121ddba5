import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfsnn import rng as rngmod
from mfsnn.engine import SimulationConfig, simulate
from mfsnn.errors import NumericalError, ParameterError
from mfsnn.neuron import (
    NeuronParams,
    NeuronState,
    SynapseParams,
    apply_input_spike,
    apply_mismatch,
    integrate_step,
    lif_rate,
)
from mfsnn.stimulus import StimulusSchedule
from mfsnn.topology import WeightedNetwork

LIF = NeuronParams(exp_slope=0.0, adaptation_increment=0.0, adaptation_coupling=0.0)


def run_single(params, current, duration, dt):
    """Spike times of one neuron under constant current, stepping integrate_step."""
    state = NeuronState.at_rest(params)
    syn = SynapseParams()
    times = []
    for k in range(int(round(duration / dt))):
        state, spiked = integrate_step(state, params, current, dt, syn)
        if spiked:
            times.append(k * dt)
    return np.array(times)


def dc_schedule(current):
    # 1 kHz nominal rate; weight chosen so the mean current equals ``current``
    return StimulusSchedule((), 1000.0, current / 10.0, 1.0, "dc")


def one_neuron(params):
    return WeightedNetwork(np.zeros((1, 1)), [params], ["exc"])


def test_rest_is_fixed_point():
    p = NeuronParams()
    s = NeuronState.at_rest(p)
    new, spiked = integrate_step(s, p, 0.0, 0.1)
    assert not spiked
    assert new == s


def test_lif_rate_matches_closed_form():
    dt = 0.01 * LIF.membrane_time_constant
    for current in (22.0, 25.0, 30.0, 40.0):
        spikes = run_single(LIF, current, 2000.0, dt)
        isi = np.diff(spikes[spikes > 200.0]).mean()
        measured = 1000.0 / isi
        assert measured == pytest.approx(lif_rate(LIF, current), rel=0.02)


def test_adaptation_lengthens_first_intervals():
    p = NeuronParams(adaptation_increment=2.0)
    spikes = run_single(p, 30.0, 500.0, 0.01)
    isi = np.diff(spikes)[:5]
    assert isi.size == 5
    assert np.all(np.diff(isi) >= -1e-9)


def test_input_spike_routing():
    s = NeuronState()
    assert apply_input_spike(s, 0.0) == s
    e = apply_input_spike(s, 2.0)
    assert e.exc_synaptic_current == 2.0 and e.inh_synaptic_current == 0.0
    i = apply_input_spike(s, -3.0)
    assert i.inh_synaptic_current == 3.0 and i.synaptic_drive == -3.0


def test_symmetric_cancellation():
    p = NeuronParams()
    syn = SynapseParams(10.0, 10.0)
    s = apply_input_spike(apply_input_spike(NeuronState.at_rest(p), 5.0), -5.0)
    for _ in range(200):
        assert s.synaptic_drive == 0.0
        s, _ = integrate_step(s, p, 0.0, 0.1, syn)
    assert s.membrane_potential == p.resting_potential


def test_exponential_decay():
    p = NeuronParams()
    syn = SynapseParams(exc_time_constant=10.0)
    w, dt = 4.0, 0.1
    s = apply_input_spike(NeuronState.at_rest(p), w)
    for k in range(1, 301):
        s, _ = integrate_step(s, p, 0.0, dt, syn)
        assert s.exc_synaptic_current == pytest.approx(w * math.exp(-k * dt / 10.0), rel=1e-9)


def test_dt_precondition_and_finiteness():
    p = NeuronParams()
    with pytest.raises(ParameterError):
        integrate_step(NeuronState.at_rest(p), p, 0.0, 5.0)
    with pytest.raises(ParameterError):
        integrate_step(NeuronState.at_rest(p), p, 0.0, 0.0)
    with pytest.raises(NumericalError):
        integrate_step(NeuronState(membrane_potential=math.nan), p, 0.0, 0.1)
    with pytest.raises(NumericalError):
        NeuronParams(membrane_time_constant=math.inf)


def test_param_invariants():
    with pytest.raises(ParameterError):
        NeuronParams(spike_threshold=-80.0)
    with pytest.raises(ParameterError):
        NeuronParams(reset_potential=-40.0)
    with pytest.raises(ParameterError):
        NeuronParams(refractory_period=-1.0)
    with pytest.raises(ParameterError):
        SynapseParams(unit_weight=0.0)


def test_mismatch_zero_cv_identity():
    p = NeuronParams()
    assert apply_mismatch(p, 0.0, rngmod.substream(0, rngmod.MISMATCH, 0)) is p


def test_mismatch_cv_statistics():
    p = NeuronParams()
    taus = np.array([apply_mismatch(p, 0.2, rngmod.substream(7, rngmod.MISMATCH, i)).membrane_time_constant for i in range(1000)])
    cv = taus.std(ddof=1) / taus.mean()
    assert abs(cv - 0.2) <= 0.15 * 0.2


def test_mismatch_deterministic():
    p = NeuronParams()
    a = apply_mismatch(p, 0.1, rngmod.substream(3, rngmod.MISMATCH, 5))
    b = apply_mismatch(p, 0.1, rngmod.substream(3, rngmod.MISMATCH, 5))
    assert a == b


def test_mismatch_range():
    p = NeuronParams()
    for bad in (-0.1, 0.5, 0.9):
        with pytest.raises(ParameterError):
            apply_mismatch(p, bad, rngmod.substream(0, rngmod.MISMATCH, 0))


@given(cv=st.floats(0.0, 0.49), seed=st.integers(0, 2**32))
def test_mismatch_preserves_invariants(cv, seed):
    p = NeuronParams()
    q = apply_mismatch(p, cv, rngmod.substream(seed, rngmod.MISMATCH, 0))
    assert q.spike_threshold > q.resting_potential
    assert q.reset_potential <= q.spike_threshold
    assert q.membrane_time_constant > 0 and q.adaptation_time_constant > 0
    assert q.refractory_period >= 0
    assert 0.5 * p.membrane_time_constant <= q.membrane_time_constant <= 1.5 * p.membrane_time_constant


def test_relaxation_to_rest():
    p = NeuronParams(adaptation_coupling=0.5)
    s = NeuronState(membrane_potential=-55.0, adaptation_variable=3.0, exc_synaptic_current=2.0, inh_synaptic_current=1.0)
    dt = 0.1
    # adaptation relaxes on its own, slower time constant; run well past both
    for _ in range(int(10 * p.adaptation_time_constant / dt)):
        s, spiked = integrate_step(s, p, 0.0, dt)
        assert not spiked
    assert abs(s.membrane_potential - p.resting_potential) < 1e-3
    assert abs(s.adaptation_variable) < 1e-3
    assert s.exc_synaptic_current < 1e-12 and s.inh_synaptic_current < 1e-12


def test_relaxation_ten_membrane_time_constants():
    p = NeuronParams()
    s = NeuronState(membrane_potential=-60.0)
    for _ in range(int(10 * p.membrane_time_constant / 0.1)):
        s, _ = integrate_step(s, p, 0.0, 0.1)
    assert abs(s.membrane_potential - p.resting_potential) < 1e-3


def test_rate_monotone_in_current():
    p = NeuronParams()
    rates = []
    for current in np.linspace(0.0, 40.0, 12):
        rec = simulate(one_neuron(p), dc_schedule(current), SimulationConfig(duration=1000.0))
        rates.append(len(rec))
    assert np.all(np.diff(rates) >= 0)
    assert rates[-1] > 0


def test_halving_dt_converges():
    p = NeuronParams()
    a = run_single(p, 30.0, 1000.0, 0.02)
    b = run_single(p, 30.0, 1000.0, 0.01)
    assert a.size == b.size and a.size > 5
    assert np.max(np.abs(a - b)) < 1.0


@given(current=st.floats(20.0, 200.0))
def test_refractory_spacing(current):
    p = NeuronParams(refractory_period=3.0)
    rec = simulate(one_neuron(p), dc_schedule(current), SimulationConfig(duration=200.0))
    assert np.all(np.diff(rec.times) >= p.refractory_period - 1e-9)
