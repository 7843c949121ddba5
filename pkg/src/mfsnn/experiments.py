"""
Runners for the bundled experiment kinds, and the helpers they share with
the test suite (bump profiles, cluster rates, per-event alignment metrics).

Each runner writes its data files, SVG figures, a ``summary.json`` and a
``manifest.json`` into one output directory. Nothing written depends on wall
clock time, so reruns are byte-identical.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import math
import os
import platform
from pathlib import Path

import numpy as np

from . import __version__
from . import io as fio
from . import plots
from .analysis import (
    SweepProtocol,
    alignment_trace,
    bifurcation_sweep,
    detect_critical_alpha,
    estimate_rates,
    mean_rates,
    noise_band,
)
from .config import ExperimentConfig
from .engine import SpikeRecord, simulate
from .errors import ProtocolError
from .rate_oracle import RateModel, calibrate_gain, oracle_diagram, predict_critical_alpha
from .stimulus import StimulusEvent, StimulusSchedule, SymbolPattern, symbol_set
from .topology import build_mixed_feedback_adjacency, build_swta, output_vectors, scale_network

log = logging.getLogger(__name__)

__all__ = [
    "OUT_ENV",
    "BUNDLED_DIR",
    "bundled_config",
    "resolve_output_dir",
    "mixed_feedback_network",
    "event_metrics",
    "bump_profile",
    "bump_schedule",
    "cluster_rates",
    "bump_metrics",
    "is_unimodal",
    "sweep_protocol",
    "oracle_model",
    "run_mixed_feedback",
    "run_swta",
    "run_sweep",
    "run_experiment",
]

OUT_ENV = "MFSNN_OUT"
BUNDLED_DIR = Path(__file__).parent / "configs"


def bundled_config(name: str) -> Path:
    """Path of a bundled config by name (``fig3-analog`` or ``fig3-analog.yaml``)."""
    stem = name[:-5] if name.endswith(".yaml") else name
    return BUNDLED_DIR / f"{stem}.yaml"


def resolve_output_dir(cfg: ExperimentConfig, out: str | None = None) -> Path:
    """``out`` if given, else the config's ``output_dir``, else ``$MFSNN_OUT/<name>``
    (``./out/<name>`` when the variable is unset)."""
    if out:
        return Path(out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUT_ENV, "out")) / cfg.name


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _manifest(cfg: ExperimentConfig, out: Path, files: list[str], seeds) -> None:
    import matplotlib
    import scipy

    manifest = {
        "experiment": cfg.kind,
        "name": cfg.name,
        "config_hash": cfg.config_hash(),
        "seeds": list(seeds),
        "versions": {
            "mfsnn": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__,
            "python": platform.python_version(),
        },
        "files": {f: _sha(out / f) for f in sorted(files)},
    }
    _write_json(manifest, out / "manifest.json")


# ---------------------------------------------------------------------------
# mixed-feedback runs


def mixed_feedback_network(cfg: ExperimentConfig, alpha: float | None = None):
    A = build_mixed_feedback_adjacency(cfg.v_max)
    a = cfg.alpha if alpha is None else alpha
    return scale_network(A, a, cfg.synapse.unit_weight, cfg.neuron, cfg.synapse)


def _outputs(cfg: ExperimentConfig) -> dict:
    if cfg.v_perp is not None:
        return output_vectors(cfg.v_max, cfg.v_perp)
    v = np.asarray(cfg.v_max)
    return {"A": v, "B": -v}


def event_metrics(alignment, schedule: StimulusSchedule, post: float = 300.0) -> list[dict]:
    """Per presentation: the symbol's own peak alignment while it is on, its
    minimum over ``post`` ms after offset, and rho_A just before onset and
    ``post`` ms after offset."""
    t = alignment.times
    out = []

    def at(time):
        i = int(np.searchsorted(t, time, side="right")) - 1
        return float(alignment["A"][i]) if i >= 0 else 0.0

    for e in schedule.events:
        name = e.pattern.name
        on = (t > e.onset) & (t <= e.offset + 1e-9)
        after = (t > e.offset) & (t <= e.offset + post + 1e-9)
        own = alignment[name] if name in alignment.names else alignment["A"]
        out.append(
            {
                "symbol": name,
                "rate": e.rate,
                "onset": e.onset,
                "offset": e.offset,
                "peak": float(own[on].max()) if on.any() else math.nan,
                "post_min": float(own[after].min()) if after.any() else math.nan,
                "rho_A_before": at(e.onset),
                "rho_A_after": at(e.offset + post),
            }
        )
    return out


def run_mixed_feedback(cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    net = mixed_feedback_network(cfg)
    rec = simulate(net, cfg.schedule, cfg.simulation)
    an = cfg.analysis
    rates = estimate_rates(rec, an["rate_window"], an["rate_step"])
    files = ["spikes.csv", "rates.csv", "weights.txt", "raster.svg"]
    fio.write_spike_record(rec, out / "spikes.csv")
    fio.write_rates_csv(rates, out / "rates.csv")
    fio.write_matrix(net.weight_matrix, net.labels, out / "weights.txt")
    events = [(e.pattern.name, e.onset, e.offset) for e in cfg.schedule.events]
    plots.raster_plot(rec, out / "raster.svg", events=events, title=cfg.name)
    summary = {"spikes": len(rec), "mean_rate_hz": float(len(rec) / net.size / (rec.duration / 1000.0))}
    outs = _outputs(cfg)
    if len(outs) == 4:
        al = alignment_trace(rates, outs)
        fio.write_alignment_csv(al, out / "alignment.csv")
        plots.alignment_plot(al, out / "alignment.svg", events=events, title=cfg.name)
        files += ["alignment.csv", "alignment.svg"]
        summary["events"] = event_metrics(al, cfg.schedule)
    _write_json(summary, out / "summary.json")
    files.append("summary.json")
    _manifest(cfg, out, files, [cfg.simulation.seed])
    return summary


# ---------------------------------------------------------------------------
# sWTA runs


def bump_profile(centers, amplitudes, width: float, num_clusters: int) -> np.ndarray:
    """Sum of Gaussian bumps over cluster indices 0..num_clusters-1."""
    c = np.arange(num_clusters, dtype=float)
    prof = np.zeros(num_clusters)
    for x, a in zip(centers, amplitudes):
        prof += a * np.exp(-((c - x) ** 2) / (2.0 * width**2))
    return prof


def bump_schedule(cfg: ExperimentConfig, bump_set: dict) -> tuple[StimulusSchedule, np.ndarray]:
    """One presentation whose per-neuron rate follows the cluster profile;
    inhibitory neurons get no external input."""
    sw = cfg.swta
    stim = cfg.stimulus
    prof = bump_profile(bump_set["centers"], bump_set["amplitudes"], stim["width"], sw.num_clusters)
    per_neuron = np.concatenate([np.repeat(prof, sw.neurons_per_cluster), np.zeros(sw.num_inhibitory)])
    n = per_neuron.size
    event = StimulusEvent(SymbolPattern(bump_set["name"], (1,) * n), stim["rate"], stim["onset"], stim["duration"], tuple(per_neuron))
    bg, noise = stim["background"], stim["noise"]
    sched = StimulusSchedule((event,), bg["rate"], bg["weight"], stim["input_weight"], bg["mode"], noise["rate"], noise["weight"])
    return sched, prof


def cluster_rates(record: SpikeRecord, num_clusters: int, per_cluster: int, start: float, end: float) -> np.ndarray:
    """Mean rate of each excitatory cluster over ``[start, end)``."""
    r = mean_rates(record, start, end)
    return r[: num_clusters * per_cluster].reshape(num_clusters, per_cluster).mean(axis=1)


def is_unimodal(profile, tol: float = 0.1) -> bool:
    """One peak: non-decreasing up to the maximum and non-increasing after it,
    allowing dips of ``tol`` times the maximum."""
    p = np.asarray(profile, dtype=float)
    k = int(np.argmax(p))
    slack = tol * p[k]
    rising = all(p[i + 1] >= p[i] - slack for i in range(k))
    falling = all(p[i + 1] <= p[i] + slack for i in range(k, p.size - 1))
    return bool(rising and falling)


def bump_metrics(rates, profile, centers) -> dict:
    """Winner/loser comparison at the bump centres (nearest clusters)."""
    idx = [int(round(c)) for c in centers]
    out = {"unimodal": is_unimodal(rates)}
    if len(idx) == 2:
        r = [float(rates[i]) for i in idx]
        p = [float(profile[i]) for i in idx]
        w = int(np.argmax(r))
        l = 1 - w
        out.update(
            {
                "input_ratio": p[0] / p[1] if p[1] > 0 else math.inf,
                "winner": idx[w],
                "winner_rate": r[w],
                "loser_rate": r[l],
                "output_ratio": r[w] / r[l] if r[l] > 0 else math.inf,
                "input_ratio_winner_loser": p[w] / p[l] if p[l] > 0 else math.inf,
                "loser_fraction": r[l] / r[w] if r[w] > 0 else math.nan,
            }
        )
    return out


def run_swta(cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    net = build_swta(cfg.swta, cfg.neuron, cfg.synapse)
    an = cfg.analysis
    sw = cfg.swta
    files = ["weights.txt"]
    fio.write_matrix(net.weight_matrix, net.labels, out / "weights.txt")
    summary = {}
    for bs in cfg.bump_sets:
        sched, prof = bump_schedule(cfg, bs)
        rec = simulate(net, sched, cfg.simulation)
        cl = cluster_rates(rec, sw.num_clusters, sw.neurons_per_cluster, an["measure_start"], an["measure_end"])
        tag = bs["name"]
        fio.write_spike_record(rec, out / f"spikes_{tag}.csv")
        with open(out / f"clusters_{tag}.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("cluster,input,rate_hz\n")
            for i, (p, r) in enumerate(zip(prof, cl)):
                fh.write(f"{i},{fio._num(p)},{fio._num(r)}\n")
        plots.raster_plot(rec, out / f"raster_{tag}.svg", title=f"{cfg.name} ({tag})")
        plots.rate_profile_plot(cl, out / f"profile_{tag}.svg", input_profile=prof, title=f"{cfg.name} ({tag})")
        files += [f"spikes_{tag}.csv", f"clusters_{tag}.csv", f"raster_{tag}.svg", f"profile_{tag}.svg"]
        summary[tag] = {"cluster_rates": [float(x) for x in cl], **bump_metrics(cl, prof, bs["centers"])}
    _write_json(summary, out / "summary.json")
    files.append("summary.json")
    _manifest(cfg, out, files, [cfg.simulation.seed])
    return summary


# ---------------------------------------------------------------------------
# bifurcation sweeps


def _sweep_network(v_max, unit_weight, neuron, synapse, alpha):
    # module level so process pools can pickle it
    return scale_network(build_mixed_feedback_adjacency(v_max), alpha, unit_weight, neuron, synapse)


def sweep_protocol(cfg: ExperimentConfig) -> SweepProtocol:
    an = cfg.analysis
    stim = cfg.stimulus
    symbols = symbol_set(cfg.v_max, cfg.v_perp) if cfg.v_perp else {
        "A": SymbolPattern("A", cfg.v_max),
        "B": SymbolPattern("B", tuple(-x for x in cfg.v_max)),
    }
    ics = {ic: (None if ic == "background" else symbols[ic]) for ic in an["initial_conditions"]}
    base = int(cfg.simulation.seed)
    return SweepProtocol(
        build=functools.partial(_sweep_network, cfg.v_max, cfg.synapse.unit_weight, cfg.neuron, cfg.synapse),
        v_max=cfg.v_max,
        initial_conditions=ics,
        stim_rate=an["stim_rate"],
        stim_onset=an["stim_onset"],
        stim_duration=an["stim_duration"],
        settle=an["settle"],
        measure=an["measure"],
        input_weight=stim["input_weight"],
        background=(stim["background"]["rate"], stim["background"]["weight"]),
        background_mode=stim["background"]["mode"],
        noise=(stim["noise"]["rate"], stim["noise"]["weight"]),
        seeds=tuple(base + s for s in an["seeds"]),
    )


def oracle_model(cfg: ExperimentConfig, calibration=None) -> tuple[RateModel, object]:
    """Threshold-linear model calibrated from the neuron's f-I slope at the
    background operating point. The bias reproduces the measured basal rate."""
    stim = cfg.stimulus
    bg = stim["background"]
    current = bg["rate"] * bg["weight"] * cfg.synapse.exc_time_constant / 1000.0
    if calibration is None:
        calibration = calibrate_gain(
            cfg.neuron,
            cfg.synapse,
            cfg.synapse.unit_weight,
            current,
            noise=(stim["noise"]["rate"], stim["noise"]["weight"]),
        )
    A = build_mixed_feedback_adjacency(cfg.v_max)
    model = RateModel(cfg.synapse.exc_time_constant, calibration.gain, A, 0.0, calibration.rate / calibration.gain)
    return model, calibration


def run_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    protocol = sweep_protocol(cfg)
    diagram = bifurcation_sweep(cfg.alphas, protocol, cfg.simulation, workers=workers)
    fio.write_diagram_csv(diagram, out / "diagram.csv")
    files = ["diagram.csv"]
    summary = {"alphas": cfg.alphas, "missing": [list(m) for m in diagram.missing]}
    alpha_star = None
    if "background" in protocol.initial_conditions and {"A", "B"} <= set(protocol.initial_conditions):
        try:
            crit = detect_critical_alpha(diagram, cfg.analysis["detection_factor"])
            alpha_star = crit.alpha_star
            summary["critical_alpha"] = {
                "alpha_star": crit.alpha_star,
                "confidence_band": list(crit.confidence_band),
                "noise_sigma": crit.noise_sigma,
            }
        except ProtocolError as exc:
            summary["critical_alpha"] = None
            summary["detection"] = str(exc)
        below = [a for a in diagram.alphas if alpha_star is None or a < alpha_star]
        summary["noise_band"] = noise_band(diagram, below or diagram.alphas)
    oracle = None
    if cfg.analysis["oracle"]:
        model, cal = oracle_model(cfg)
        oracle = oracle_diagram(model, cfg.alphas, cfg.v_max)
        fio.write_diagram_csv(oracle, out / "oracle_diagram.csv")
        files.append("oracle_diagram.csv")
        summary["oracle"] = {
            "gain": cal.gain,
            "slope_hz_per_mv": cal.slope,
            "operating_current_mv": cal.operating_current,
            "basal_rate_hz": cal.rate,
            "predicted_alpha_star": predict_critical_alpha(model),
        }
    plots.bifurcation_plot(diagram, out / "bifurcation.svg", oracle=oracle, alpha_star=alpha_star, title=cfg.name)
    files.append("bifurcation.svg")
    _write_json(summary, out / "summary.json")
    files.append("summary.json")
    _manifest(cfg, out, files, protocol.seeds)
    return summary


def run_experiment(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    if cfg.kind == "mixed-feedback":
        return run_mixed_feedback(cfg, out)
    if cfg.kind == "swta":
        return run_swta(cfg, out)
    return run_sweep(cfg, out, workers)
