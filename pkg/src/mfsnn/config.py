"""
Experiment configuration files (YAML).

``load_config`` is the single validation path: it parses the file, rejects
unknown keys, checks every field and builds the domain objects a run needs.
Every problem is collected and reported with its line number, so the
``validate`` command and ``run`` can never disagree about a file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .engine import SimulationConfig
from .errors import ConfigError, MfsnnError
from .neuron import NeuronParams, SynapseParams
from .stimulus import StimulusEvent, StimulusSchedule, SymbolPattern, build_schedule, schedule_violations, symbol_set
from .topology import SWTAConfig, orthogonal_sign_vector, validate_sign_vector

__all__ = ["ExperimentConfig", "load_config", "parse_config", "KINDS"]

KINDS = ("mixed-feedback", "swta", "bifurcation-sweep")


# ---------------------------------------------------------------------------
# YAML with line numbers


class _Loc(dict):
    """Mapping ``path -> line`` filled while converting YAML nodes."""


def _convert(node, path: str, loc: _Loc, errors: list):
    loc[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            key = k_node.value if isinstance(k_node, yaml.ScalarNode) else None
            if not isinstance(key, str):
                errors.append(f"line {k_node.start_mark.line + 1}: {path or '<root>'}: keys must be strings")
                continue
            sub = f"{path}.{key}" if path else key
            if key in out:
                errors.append(f"line {k_node.start_mark.line + 1}: {sub}: duplicate key")
            out[key] = _convert(v_node, sub, loc, errors)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_convert(v, f"{path}[{i}]", loc, errors) for i, v in enumerate(node.value)]
    return yaml.SafeLoader.construct_object(_LOADER, node)


class _Constructor(yaml.SafeLoader):
    def __init__(self):
        super().__init__("")


_LOADER = _Constructor()


# ---------------------------------------------------------------------------
# schema


@dataclass(frozen=True)
class F:
    """One field: type name, optional default and an optional check."""

    kind: str  # float | int | bool | str | floats | ints | strs | map | list
    default: Any = None
    required: bool = False
    check: Any = None  # callable(value) -> error message or None
    schema: Any = None  # nested schema for map / list-of-map


def _ge(lo):
    return lambda x: None if x >= lo else f"must be >= {lo} (got {x})"


def _gt(lo):
    return lambda x: None if x > lo else f"must be > {lo} (got {x})"


def _in(*choices):
    return lambda x: None if x in choices else f"must be one of {', '.join(map(str, choices))} (got {x!r})"


def _range(lo, hi):
    return lambda x: None if lo <= x < hi else f"must be in [{lo}, {hi}) (got {x})"


NEURON = {
    "membrane_time_constant": F("float", 20.0, check=_gt(0)),
    "resting_potential": F("float", -70.0),
    "spike_threshold": F("float", -50.0),
    "reset_potential": F("float", -60.0),
    "refractory_period": F("float", 2.0, check=_ge(0)),
    "exp_slope": F("float", 2.0, check=_ge(0)),
    "adaptation_increment": F("float", 0.5, check=_ge(0)),
    "adaptation_time_constant": F("float", 100.0, check=_gt(0)),
    "adaptation_coupling": F("float", 0.0),
}

SYNAPSE = {
    "exc_time_constant": F("float", 10.0, check=_gt(0)),
    "inh_time_constant": F("float", 10.0, check=_gt(0)),
    "unit_weight": F("float", 1.0, check=_gt(0)),
}

SIMULATION = {
    "dt": F("float", 0.1, check=_gt(0)),
    "duration": F("float", None, check=_gt(0)),
    "seed": F("int", 0, check=lambda x: None if 0 <= x < 2**64 else "must be an unsigned 64-bit integer"),
    "mismatch_cv": F("float", 0.0, check=_range(0, 0.5)),
    "synaptic_delay": F("float", 1.0, check=_gt(0)),
    "record_state": F("bool", False),
}

BACKGROUND = {
    "rate": F("float", 0.0, check=_ge(0)),
    "weight": F("float", 0.0),
    "mode": F("str", "dc", check=_in("dc", "poisson")),
}

NOISE = {
    "rate": F("float", 0.0, check=_ge(0)),
    "weight": F("float", 0.0, check=_ge(0)),
}

SEQUENCE_ITEM = {
    "symbol": F("str", required=True, check=_in("A", "B", "C", "D")),
    "rate": F("float", required=True, check=_ge(0)),
    "duration": F("float", 300.0, check=_gt(0)),
}

EVENT_ITEM = {
    "symbol": F("str", required=True, check=_in("A", "B", "C", "D")),
    "rate": F("float", required=True, check=_ge(0)),
    "onset": F("float", required=True, check=_ge(0)),
    "duration": F("float", required=True, check=_gt(0)),
}

MF_NETWORK = {
    "v_max": F("ints", required=True),
    "alpha": F("float", required=True, check=_ge(0)),
}

MF_STIMULUS = {
    "background": F("map", schema=BACKGROUND),
    "noise": F("map", schema=NOISE),
    "input_weight": F("float", 1.0, check=_ge(0)),
    "sequence": F("list", schema=SEQUENCE_ITEM),
    "gap": F("float", 300.0, check=_ge(0)),
    "start": F("float", 0.0, check=_ge(0)),
    "events": F("list", schema=EVENT_ITEM),
}

MF_ANALYSIS = {
    "rate_window": F("float", 100.0, check=_gt(0)),
    "rate_step": F("float", 10.0, check=_gt(0)),
}

SWTA_NETWORK = {
    "num_clusters": F("int", 16, check=_ge(1)),
    "neurons_per_cluster": F("int", 8, check=_ge(1)),
    "self_excitation": F("float", 1.0, check=_ge(0)),
    "lateral_excitation": F("float", 0.5, check=_ge(0)),
    "exc_to_inh": F("float", 1.0, check=_ge(0)),
    "inh_to_exc": F("float", -1.0, check=lambda x: None if x < 0 else f"must be < 0 (got {x})"),
    "num_inhibitory": F("int", 32, check=_ge(1)),
    "gain_alpha": F("float", required=True, check=_ge(0)),
    "ring": F("bool", False),
}

BUMP_SET = {
    "name": F("str", required=True),
    "centers": F("floats", required=True),
    "amplitudes": F("floats", required=True),
}

SWTA_STIMULUS = {
    "background": F("map", schema=BACKGROUND),
    "noise": F("map", schema=NOISE),
    "input_weight": F("float", 1.0, check=_ge(0)),
    "rate": F("float", required=True, check=_ge(0)),
    "width": F("float", 1.0, check=_gt(0)),
    "onset": F("float", 0.0, check=_ge(0)),
    "duration": F("float", required=True, check=_gt(0)),
    "bump_sets": F("list", required=True, schema=BUMP_SET),
}

SWTA_ANALYSIS = {
    "measure_start": F("float", required=True, check=_ge(0)),
    "measure_end": F("float", required=True, check=_gt(0)),
    "rate_window": F("float", 100.0, check=_gt(0)),
    "rate_step": F("float", 10.0, check=_gt(0)),
}

ALPHA_GRID = {
    "start": F("float", required=True, check=_ge(0)),
    "stop": F("float", required=True, check=_ge(0)),
    "num": F("int", required=True, check=_ge(2)),
}

SWEEP_NETWORK = {
    "v_max": F("ints", required=True),
}

SWEEP_STIMULUS = {
    "background": F("map", schema=BACKGROUND),
    "noise": F("map", schema=NOISE),
    "input_weight": F("float", 1.0, check=_ge(0)),
}

SWEEP_ANALYSIS = {
    "alphas": F("map", required=True, schema=ALPHA_GRID),
    "initial_conditions": F("strs", ["A", "B", "background"]),
    "seeds": F("ints", [0, 1, 2, 3, 4]),
    "stim_rate": F("float", 200.0, check=_ge(0)),
    "stim_onset": F("float", 200.0, check=_ge(0)),
    "stim_duration": F("float", 300.0, check=_gt(0)),
    "settle": F("float", 500.0, check=_ge(0)),
    "measure": F("float", 500.0, check=_gt(0)),
    "detection_factor": F("float", 5.0, check=_gt(0)),
    "oracle": F("bool", True),
}

_TOP_COMMON = {
    "experiment": F("str", required=True, check=_in(*KINDS)),
    "name": F("str", None),
    "output_dir": F("str", None),
    "neuron": F("map", schema=NEURON),
    "synapse": F("map", schema=SYNAPSE),
}

SCHEMAS = {
    "mixed-feedback": {
        **_TOP_COMMON,
        "network": F("map", required=True, schema=MF_NETWORK),
        "stimulus": F("map", required=True, schema=MF_STIMULUS),
        "simulation": F("map", required=True, schema=SIMULATION),
        "analysis": F("map", schema=MF_ANALYSIS),
    },
    "swta": {
        **_TOP_COMMON,
        "network": F("map", required=True, schema=SWTA_NETWORK),
        "stimulus": F("map", required=True, schema=SWTA_STIMULUS),
        "simulation": F("map", required=True, schema=SIMULATION),
        "analysis": F("map", required=True, schema=SWTA_ANALYSIS),
    },
    "bifurcation-sweep": {
        **_TOP_COMMON,
        "network": F("map", required=True, schema=SWEEP_NETWORK),
        "stimulus": F("map", schema=SWEEP_STIMULUS),
        "simulation": F("map", required=True, schema={**SIMULATION, "duration": F("float", None, check=_gt(0))}),
        "analysis": F("map", required=True, schema=SWEEP_ANALYSIS),
    },
}


def _coerce(kind: str, value):
    """Return (value, error)."""
    if kind == "float":
        if isinstance(value, str):
            # YAML 1.1 reads exponents without a sign (1.0e5) as strings
            try:
                value = float(value)
            except ValueError:
                return None, f"expected a number, got {value!r}"
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return None, f"expected a number, got {value!r}"
        if not np.isfinite(value):
            return None, f"must be finite (got {value})"
        return float(value), None
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            return None, f"expected an integer, got {value!r}"
        return value, None
    if kind == "bool":
        if not isinstance(value, bool):
            return None, f"expected true/false, got {value!r}"
        return value, None
    if kind == "str":
        if not isinstance(value, str):
            return None, f"expected a string, got {value!r}"
        return value, None
    if kind in ("floats", "ints", "strs"):
        if not isinstance(value, list):
            return None, f"expected a list, got {value!r}"
        out = []
        for x in value:
            v, err = _coerce(kind[:-1], x)
            if err:
                return None, f"list entry: {err}"
            out.append(v)
        return out, None
    raise AssertionError(kind)


def _validate(data, schema: dict, path: str, loc: _Loc, errors: list) -> dict:
    """Check ``data`` against ``schema``; return a dict with defaults filled in."""
    line = loc.get(path, 1)
    if not isinstance(data, dict):
        errors.append(f"line {line}: {path or '<root>'}: expected a mapping")
        return {}
    out = {}
    for key in data:
        if key not in schema:
            sub = f"{path}.{key}" if path else key
            errors.append(f"line {loc.get(sub, line)}: {sub}: unknown key")
    for key, spec in schema.items():
        sub = f"{path}.{key}" if path else key
        if key not in data or data[key] is None:
            if spec.required:
                errors.append(f"line {line}: {sub}: required field missing")
                out[key] = None
            elif spec.kind == "map":
                out[key] = _validate({}, spec.schema, sub, loc, errors)
            else:
                out[key] = spec.default
            continue
        value = data[key]
        if spec.kind == "map":
            out[key] = _validate(value, spec.schema, sub, loc, errors)
            continue
        if spec.kind == "list":
            if not isinstance(value, list):
                errors.append(f"line {loc.get(sub, line)}: {sub}: expected a list")
                out[key] = None
                continue
            out[key] = [_validate(item, spec.schema, f"{sub}[{i}]", loc, errors) for i, item in enumerate(value)]
            continue
        v, err = _coerce(spec.kind, value)
        if err is None and spec.check is not None:
            err = spec.check(v)
        if err:
            errors.append(f"line {loc.get(sub, line)}: {sub}: {err}")
            v = None
        out[key] = v
    return out


# ---------------------------------------------------------------------------
# the parsed experiment


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    raw: dict  # validated, defaults filled
    source_hash: str
    neuron: NeuronParams
    synapse: SynapseParams
    simulation: SimulationConfig | None
    output_dir: str | None = None
    # mixed-feedback / sweep
    v_max: tuple | None = None
    v_perp: tuple | None = None
    alpha: float | None = None
    schedule: StimulusSchedule | None = None
    # swta
    swta: SWTAConfig | None = None
    bump_sets: list = field(default_factory=list)
    # sweep
    alphas: list | None = None

    @property
    def analysis(self) -> dict:
        return self.raw.get("analysis") or {}

    @property
    def stimulus(self) -> dict:
        return self.raw.get("stimulus") or {}

    def with_seed(self, seed: int) -> "ExperimentConfig":
        import dataclasses

        sim = dataclasses.replace(self.simulation, seed=int(seed)) if self.simulation else None
        raw = json.loads(json.dumps(self.raw))
        raw["simulation"]["seed"] = int(seed)
        return dataclasses.replace(self, simulation=sim, raw=raw, source_hash=_hash(raw))

    def config_hash(self) -> str:
        return self.source_hash


def _hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()


def _section_line(loc, name):
    return loc.get(name, 1)


def _build(raw: dict, loc: _Loc, errors: list, name: str) -> ExperimentConfig | None:
    kind = raw["experiment"]

    def attempt(section, fn):
        try:
            return fn()
        except MfsnnError as exc:
            errors.append(f"line {_section_line(loc, section)}: {section}: {exc}")
        except (TypeError, ValueError) as exc:
            errors.append(f"line {_section_line(loc, section)}: {section}: {exc}")
        return None

    neuron = attempt("neuron", lambda: NeuronParams(**raw["neuron"]))
    synapse = attempt("synapse", lambda: SynapseParams(**raw["synapse"]))
    sim_raw = dict(raw["simulation"])
    if kind == "bifurcation-sweep" and sim_raw.get("duration") is None:
        sim_raw["duration"] = 1.0  # per-run durations come from the sweep protocol
    elif sim_raw.get("duration") is None:
        errors.append(f"line {_section_line(loc, 'simulation')}: simulation.duration: required field missing")
        return None
    if sim_raw["synaptic_delay"] < sim_raw["dt"]:
        errors.append(
            f"line {_section_line(loc, 'simulation.synaptic_delay')}: simulation.synaptic_delay: "
            f"must be >= simulation.dt ({sim_raw['dt']})"
        )
        return None
    sim = attempt("simulation", lambda: SimulationConfig(**sim_raw))
    if neuron is None or synapse is None or sim is None:
        return None

    cfg = ExperimentConfig(kind, name, raw, _hash(raw), neuron, synapse, sim, raw.get("output_dir"))
    if sim.dt > min(synapse.exc_time_constant, synapse.inh_time_constant, neuron.membrane_time_constant) / 5:
        errors.append(f"line {_section_line(loc, 'simulation.dt')}: simulation.dt: must be <= min(time constants)/5")

    stim = raw.get("stimulus") or {}
    if kind in ("mixed-feedback", "bifurcation-sweep"):
        net = raw["network"]
        v = attempt("network.v_max", lambda: validate_sign_vector(net["v_max"]))
        if v is None:
            return None
        cfg.v_max = tuple(int(x) for x in v)
        if len(v) % 4 == 0:
            cfg.v_perp = tuple(int(x) for x in orthogonal_sign_vector(v))
        if kind == "mixed-feedback":
            cfg.alpha = net["alpha"]
            cfg.schedule = attempt("stimulus", lambda: _mf_schedule(cfg, stim, loc, errors))
            if cfg.schedule is not None and cfg.schedule.end > sim.duration + 1e-9:
                errors.append(
                    f"line {_section_line(loc, 'simulation.duration')}: simulation.duration: "
                    f"{sim.duration} ms is shorter than the stimulus schedule ({cfg.schedule.end} ms)"
                )
        else:
            an = raw["analysis"]
            grid = an["alphas"]
            if None not in grid.values():
                if grid["stop"] < grid["start"]:
                    errors.append(f"line {loc.get('analysis.alphas', 1)}: analysis.alphas: stop must be >= start")
                else:
                    cfg.alphas = [round(float(a), 10) for a in np.linspace(grid["start"], grid["stop"], grid["num"])]
            for ic in an["initial_conditions"] or []:
                if ic not in ("A", "B", "C", "D", "background"):
                    errors.append(
                        f"line {loc.get('analysis.initial_conditions', 1)}: analysis.initial_conditions: "
                        f"unknown initial condition {ic!r} (use A, B, C, D or background)"
                    )
            if cfg.v_perp is None and any(ic in ("C", "D") for ic in an["initial_conditions"] or []):
                errors.append(f"line {loc.get('analysis.initial_conditions', 1)}: analysis.initial_conditions: C/D need len(v_max) divisible by 4")
            if an["seeds"] is not None and len(an["seeds"]) == 0:
                errors.append(f"line {loc.get('analysis.seeds', 1)}: analysis.seeds: must not be empty")
    else:
        net = raw["network"]
        cfg.swta = attempt("network", lambda: SWTAConfig(**net))
        if cfg.swta is not None:
            for i, bs in enumerate(stim.get("bump_sets") or []):
                where = f"stimulus.bump_sets[{i}]"
                if bs.get("centers") is None or bs.get("amplitudes") is None:
                    continue
                if len(bs["centers"]) != len(bs["amplitudes"]) or not bs["centers"]:
                    errors.append(f"line {loc.get(where, 1)}: {where}: centers and amplitudes must have the same non-zero length")
                elif any(not (0 <= c <= cfg.swta.num_clusters - 1) for c in bs["centers"]):
                    errors.append(f"line {loc.get(where + '.centers', 1)}: {where}.centers: must lie within the cluster line")
                elif any(a < 0 for a in bs["amplitudes"]) or max(bs["amplitudes"]) <= 0:
                    errors.append(f"line {loc.get(where + '.amplitudes', 1)}: {where}.amplitudes: must be >= 0 with a positive maximum")
                else:
                    cfg.bump_sets.append(bs)
            names = [bs.get("name") for bs in stim.get("bump_sets") or []]
            if len(set(names)) != len(names):
                errors.append(f"line {loc.get('stimulus.bump_sets', 1)}: stimulus.bump_sets: names must be unique")
        an = raw["analysis"]
        if an["measure_start"] is not None and an["measure_end"] is not None:
            if an["measure_end"] <= an["measure_start"]:
                errors.append(f"line {loc.get('analysis.measure_end', 1)}: analysis.measure_end: must exceed measure_start")
            elif an["measure_end"] > sim.duration + 1e-9:
                errors.append(f"line {loc.get('analysis.measure_end', 1)}: analysis.measure_end: beyond simulation.duration")
    return cfg


def _mf_schedule(cfg: ExperimentConfig, stim: dict, loc: _Loc, errors: list) -> StimulusSchedule | None:
    bg, noise = stim["background"], stim["noise"]
    if None in bg.values() or None in noise.values() or stim["input_weight"] is None:
        return None
    symbols = symbol_set(cfg.v_max, cfg.v_perp) if cfg.v_perp else {
        "A": SymbolPattern("A", cfg.v_max),
        "B": SymbolPattern("B", tuple(-x for x in cfg.v_max)),
    }
    seq, events = stim.get("sequence"), stim.get("events")
    if seq is not None and events is not None:
        errors.append(f"line {loc.get('stimulus', 1)}: stimulus: give either 'sequence' or 'events', not both")
        return None

    def pattern(item, where):
        sym = item["symbol"]
        if sym not in symbols:
            errors.append(f"line {loc.get(where + '.symbol', 1)}: {where}.symbol: {sym} needs len(v_max) divisible by 4")
            return None
        return symbols[sym]

    common = dict(
        input_weight=stim["input_weight"],
        background_mode=bg["mode"],
        noise=(noise["rate"], noise["weight"]),
    )
    if events is not None:
        evs = []
        for i, item in enumerate(events):
            where = f"stimulus.events[{i}]"
            if None in item.values():
                return None
            p = pattern(item, where)
            if p is None:
                return None
            evs.append(StimulusEvent(p, item["rate"], item["onset"], item["duration"]))
        problems = schedule_violations(evs)
        if problems:
            for msg in problems:
                errors.append(f"line {loc.get('stimulus.events', 1)}: stimulus.events: {msg}")
            return None
        return StimulusSchedule(tuple(evs), bg["rate"], bg["weight"], common["input_weight"], bg["mode"], *common["noise"])
    items = []
    for i, item in enumerate(seq or []):
        where = f"stimulus.sequence[{i}]"
        if None in item.values():
            return None
        p = pattern(item, where)
        if p is None:
            return None
        items.append((p, item["rate"], item["duration"]))
    if stim["gap"] is None or stim["start"] is None:
        return None
    return build_schedule(items, stim["gap"], (bg["rate"], bg["weight"]), start=stim["start"], **common)


def parse_config(text: str, name: str = "<string>") -> ExperimentConfig:
    """Validate YAML ``text``; raise :class:`ConfigError` listing every violation."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError([f"line {line}: YAML syntax error: {getattr(exc, 'problem', exc)}"]) from None
    if node is None:
        raise ConfigError(["line 1: empty configuration"])
    errors: list[str] = []
    loc = _Loc()
    data = _convert(node, "", loc, errors)
    if not isinstance(data, dict):
        raise ConfigError(["line 1: top level must be a mapping"])
    kind = data.get("experiment")
    if kind not in SCHEMAS:
        raise ConfigError([f"line {loc.get('experiment', 1)}: experiment: must be one of {', '.join(KINDS)} (got {kind!r})"])
    raw = _validate(data, SCHEMAS[kind], "", loc, errors)
    if errors:
        raise ConfigError(errors)
    cfg = _build(raw, loc, errors, raw.get("name") or name)
    if errors or cfg is None:
        raise ConfigError(errors or ["line 1: invalid configuration"])
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read file: {exc.strerror}"]) from None
    try:
        return parse_config(text, path.stem)
    except ConfigError as exc:
        raise ConfigError([f"{path}:{v}" if v.startswith("line") else v for v in exc.violations]) from None
