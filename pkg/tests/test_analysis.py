import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfsnn.analysis import (
    AlignmentTrace,
    BifurcationDiagram,
    BifurcationPoint,
    RateTrace,
    SweepProtocol,
    alignment_index,
    alignment_trace,
    bifurcation_sweep,
    branch_spread,
    detect_critical_alpha,
    estimate_rates,
    noise_band,
    persistence_check,
    steady_state_projection,
)
from mfsnn.engine import SimulationConfig, SpikeRecord
from mfsnn.errors import ParameterError, ProtocolError
from mfsnn.stimulus import SYMBOL_A8, SYMBOL_C8, SymbolPattern
from mfsnn.topology import build_mixed_feedback_adjacency, output_vectors, scale_network

A = np.array(SYMBOL_A8, dtype=float)
C = np.array(SYMBOL_C8, dtype=float)


def record_from(trains, duration):
    times = np.concatenate([np.asarray(t, float) for t in trains]) if trains else np.empty(0)
    neurons = np.concatenate([np.full(len(t), i) for i, t in enumerate(trains)]) if trains else np.empty(0, int)
    order = np.lexsort((neurons, times))
    return SpikeRecord(times[order], neurons[order].astype(np.int64), len(trains), duration)


def regular(rate, duration, n):
    return [np.arange(1000.0 / rate / 2, duration, 1000.0 / rate) for _ in range(n)]


def test_empty_rates_zero():
    tr = estimate_rates(SpikeRecord(np.empty(0), np.empty(0, np.int64), 4, 500.0))
    assert tr.rates.shape == (50, 4) and not tr.rates.any()
    assert np.allclose(np.diff(tr.times), 10.0)


def test_regular_train_rate():
    tr = estimate_rates(record_from(regular(100.0, 2000.0, 1), 2000.0), window=100.0, step=10.0)
    after = tr.rates[tr.times >= 100.0, 0]
    assert np.all(np.abs(after - 100.0) <= 10.0)


def test_merge_doubles_population_rate():
    rng = np.random.default_rng(0)
    trains = [np.sort(rng.uniform(0, 1000, rng.integers(5, 40))) for _ in range(4)]
    rec = record_from(trains, 1000.0)
    both = SpikeRecord.merge([rec, rec])
    r1 = estimate_rates(rec).rates.sum(axis=1)
    r2 = estimate_rates(both).rates.sum(axis=1)
    assert np.allclose(r2, 2 * r1)


def test_rates_validation():
    with pytest.raises(ParameterError):
        estimate_rates(record_from([], 100.0), window=0.0)


def test_alignment_uniform_zero():
    assert alignment_index(np.full(8, 13.0), A) == 0.0
    assert alignment_index(np.zeros(8), A) == 0.0


def test_alignment_hand_value():
    nu = np.array([10, 10, 10, 10, 0, 0, 0, 0], float)
    assert alignment_index(nu, A) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert alignment_index(nu, C) == pytest.approx(0.0, abs=1e-12)


rate_vectors = st.lists(st.floats(0.0, 500.0), min_size=8, max_size=8).map(np.array)


@given(rate_vectors)
def test_alignment_bounded_and_antisymmetric(nu):
    for v in (A, C):
        r = alignment_index(nu, v)
        assert abs(r) <= 1.0 + 1e-12
        assert alignment_index(nu, -v) == -r


@given(rate_vectors, st.floats(0.0, 1000.0))
def test_alignment_shift_keeps_sign_and_argmax(nu, c):
    outs = output_vectors(SYMBOL_A8, SYMBOL_C8)
    base = np.array([alignment_index(nu, v) for v in outs.values()])
    shifted = np.array([alignment_index(nu + c, v) for v in outs.values()])
    if np.linalg.norm(nu) == 0 or np.allclose(base, 0, atol=1e-9):
        return
    # the centred numerator is unchanged; only the positive norm grows
    assert np.all(np.sign(np.round(base, 12)) == np.sign(np.round(shifted, 12)))
    top = np.sort(base)
    if top[-1] - top[-2] > 1e-9:
        assert np.argmax(base) == np.argmax(shifted)


@given(st.lists(st.lists(st.floats(0, 300), min_size=8, max_size=8), min_size=1, max_size=20))
def test_alignment_trace_bounded(rows):
    tr = RateTrace(np.arange(len(rows), dtype=float), np.array(rows), 100.0)
    al = alignment_trace(tr, output_vectors(SYMBOL_A8, SYMBOL_C8))
    assert np.all(np.abs(al.rho) <= 1 + 1e-12)
    for k, r in enumerate(rows):
        assert al["A"][k] == pytest.approx(alignment_index(r, A), abs=1e-12)


def test_alignment_trace_rejects_out_of_range():
    with pytest.raises(AssertionError):
        AlignmentTrace(np.zeros(1), np.array([[1.5, 0, 0, 0]]))


def test_projection_trivial_cases():
    silent = record_from([[]] * 8, 1000.0)
    assert steady_state_projection(silent, A, (500, 1000)) == 0.0
    uniform = record_from(regular(20.0, 1000.0, 8), 1000.0)
    assert steady_state_projection(uniform, A, (500, 1000)) == pytest.approx(0.0, abs=1e-12)


def test_projection_two_level():
    trains = regular(50.0, 2000.0, 4) + regular(10.0, 2000.0, 4)
    rec = record_from(trains, 2000.0)
    nu = np.array([50.0] * 4 + [10.0] * 4)
    expected = (A / np.linalg.norm(A)) @ (nu - nu.mean())  # = 20 * 8 / sqrt(8)
    assert expected == pytest.approx(40 * math.sqrt(2))
    assert steady_state_projection(rec, A, (1000.0, 2000.0)) == pytest.approx(expected, rel=1e-12)


def test_projection_linear_in_rates():
    rng = np.random.default_rng(2)
    trains = [np.sort(rng.uniform(0, 1000, rng.integers(0, 50))) for _ in range(8)]
    rec = record_from(trains, 1000.0)
    double = record_from([np.sort(np.concatenate([t, t])) for t in trains], 1000.0)
    assert steady_state_projection(double, A, (0, 1000)) == pytest.approx(2 * steady_state_projection(rec, A, (0, 1000)))


def test_projection_protocol_errors():
    rec = record_from([[]] * 8, 1000.0)
    with pytest.raises(ProtocolError):
        steady_state_projection(rec, A, (100.0, 500.0), stimulus_offset=300.0)
    with pytest.raises(ProtocolError):
        steady_state_projection(rec, A, (500.0, 1500.0))


def trace(values, step=10.0):
    values = np.asarray(values, float)
    rho = np.column_stack([values, -values, np.zeros_like(values), np.zeros_like(values)])
    return AlignmentTrace(step * np.arange(1, values.size + 1), rho)


def test_persistence_constant():
    assert persistence_check(trace(np.full(200, 0.8)), [500.0], 500.0, 0.5) == [True]


def test_persistence_decay():
    t = 10.0 * np.arange(1, 201)
    vals = np.where(t <= 500, 0.8, 0.8 * np.exp(-(t - 500) / 20.0))
    assert persistence_check(trace(vals), [500.0], 500.0, 0.5) == [False]


def test_persistence_signed_symbols_and_errors():
    al = trace(np.full(200, -0.8))
    assert persistence_check(al, [100.0, 200.0], 500.0, 0.5, symbols=["B", "A"]) == [True, False]
    with pytest.raises(ProtocolError):
        persistence_check(al, [1900.0], 500.0, 0.5)
    with pytest.raises(ParameterError):
        persistence_check(al, [100.0], 0.0, 0.5)


# ---------------------------------------------------------------------------
# detector on synthetic diagrams


def pitchfork(alphas, root=0.05, k=10.0, sigma=0.1, seeds=5, rng_seed=0, branches=2):
    rng = np.random.default_rng(rng_seed)
    d = BifurcationDiagram()
    for a in alphas:
        amp = k * math.sqrt(max(a - root, 0.0))
        for s in range(seeds):
            d.points.append(BifurcationPoint(a, "A", s, amp + sigma * rng.standard_normal()))
            d.points.append(BifurcationPoint(a, "B", s, (-amp if branches == 2 else amp) + sigma * rng.standard_normal()))
            d.points.append(BifurcationPoint(a, "background", s, sigma * rng.standard_normal()))
    return d


@pytest.mark.parametrize("rng_seed", range(10))
def test_detector_synthetic_pitchfork(rng_seed):
    alphas = np.round(np.arange(0.0, 0.101, 0.01), 10)
    crit = detect_critical_alpha(pitchfork(alphas, k=10.0, sigma=0.1, rng_seed=rng_seed))
    assert 0.05 <= crit.alpha_star <= 0.06
    assert crit.confidence_band == (round(crit.alpha_star - 0.01, 10), crit.alpha_star) or crit.confidence_band[1] == crit.alpha_star


def test_detector_flat():
    d = pitchfork(np.round(np.arange(0, 0.101, 0.01), 10), k=0.0, sigma=0.0)
    with pytest.raises(ProtocolError, match="no bifurcation detected"):
        detect_critical_alpha(d)


def test_detector_single_branch():
    d = pitchfork(np.round(np.arange(0, 0.101, 0.01), 10), k=10.0, sigma=0.1, branches=1)
    with pytest.raises(ProtocolError, match="no bifurcation detected"):
        detect_critical_alpha(d)


def test_detector_needs_five_alphas():
    with pytest.raises(ParameterError):
        detect_critical_alpha(pitchfork([0.0, 0.01, 0.02, 0.03]))


def test_noise_band_and_spread():
    d = pitchfork([0.0, 0.01, 0.02], k=0.0, sigma=1.0, seeds=200)
    assert noise_band(d, d.alphas) == pytest.approx(1.0, rel=0.15)
    assert branch_spread(d, 0.0, ("A", "B")) == pytest.approx(1.0, rel=0.15)


# ---------------------------------------------------------------------------
# sweeps on the spiking network (short protocol)


def small_protocol(seeds=(0, 1)):
    A8 = build_mixed_feedback_adjacency(SYMBOL_A8)
    return SweepProtocol(
        build=lambda a: scale_network(A8, a, 58.0),
        v_max=SYMBOL_A8,
        initial_conditions={"A": SymbolPattern("A", SYMBOL_A8), "B": SymbolPattern("B", tuple(-A.astype(int))), "background": None},
        stim_onset=0.0,
        stim_duration=200.0,
        settle=200.0,
        measure=300.0,
        background=(1000.0, 2.35),
        seeds=seeds,
    )


def test_sweep_bookkeeping_and_reproducible():
    proto = small_protocol(seeds=(0,))
    cfg = SimulationConfig(mismatch_cv=0.01)
    d1 = bifurcation_sweep([0.03], proto, cfg)
    assert len(d1.points) == 3 and not d1.missing
    d2 = bifurcation_sweep([0.03], proto, cfg)
    assert d1.points == d2.points


def test_sweep_alpha_zero_within_noise():
    proto = small_protocol(seeds=(0, 1, 2))
    d = bifurcation_sweep([0.0], proto, SimulationConfig(mismatch_cv=0.01))
    vals = np.array([p.projection for p in d.points])
    # uncoupled neurons: priming leaves no trace, so every IC sits near 0
    bg = d.values(0.0, "background")
    assert np.all(np.abs(vals - bg.mean()) < max(5 * bg.std(ddof=1), 5.0))


def test_sweep_validation():
    with pytest.raises(ParameterError):
        bifurcation_sweep([], small_protocol(), SimulationConfig())
    with pytest.raises(ParameterError):
        bifurcation_sweep([0.1, 0.0], small_protocol(), SimulationConfig())


def test_sweep_records_aborted_runs():
    proto = small_protocol(seeds=(0,))
    proto.build = lambda a: scale_network(build_mixed_feedback_adjacency(SYMBOL_A8), 1.0, 1e308)
    d = bifurcation_sweep([0.0, 0.1], proto, SimulationConfig())
    assert not d.points and len(d.missing) == 6
    assert "non-finite" in d.missing[0][3]
