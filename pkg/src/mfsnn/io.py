"""
Text file formats: spike records, weight matrices and the CSV tables.

All writers produce byte-identical output for identical input; floats are
printed with fixed formats so golden files stay stable.
"""

from __future__ import annotations

import csv
import gzip
import io as _io
from pathlib import Path

import numpy as np

from .analysis import AlignmentTrace, BifurcationDiagram, BifurcationPoint, RateTrace
from .engine import SpikeRecord
from .errors import MfsnnError

__all__ = [
    "FormatError",
    "write_spike_record",
    "read_spike_record",
    "write_matrix",
    "read_matrix",
    "write_rates_csv",
    "read_rates_csv",
    "write_alignment_csv",
    "read_alignment_csv",
    "write_diagram_csv",
    "read_diagram_csv",
]


class FormatError(MfsnnError, ValueError):
    """A data file does not parse; the message names the file and line."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def _num(x: float) -> str:
    # shortest repr that round-trips, with -0.0 normalized
    x = float(x)
    if x == 0:
        return "0"
    return repr(x)


def _open_text(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        # mtime=0 and no filename keep the gzip header deterministic
        raw = open(path, mode + "b")
        gz = gzip.GzipFile(filename="", mode=mode + "b", fileobj=raw, mtime=0)
        return _GzText(gz, raw)
    return open(path, mode, newline="", encoding="utf-8")


class _GzText(_io.TextIOWrapper):
    def __init__(self, gz, raw):
        super().__init__(gz, encoding="utf-8", newline="")
        self._raw = raw

    def close(self):
        super().close()
        self._raw.close()


# ---------------------------------------------------------------------------
# spike records


def write_spike_record(record: SpikeRecord, path) -> None:
    """``# key: value`` header lines, then ``time_ms,neuron_index`` per spike.

    A ``.gz`` suffix writes gzip with a fixed header.
    """
    meta = record.metadata or {}
    with _open_text(path, "w") as fh:
        fh.write(f"# config_hash: {meta.get('config_hash', '')}\n")
        fh.write(f"# network_hash: {meta.get('network_hash', '')}\n")
        fh.write(f"# n_neurons: {record.n_neurons}\n")
        fh.write(f"# duration_ms: {_num(record.duration)}\n")
        fh.write("time_ms,neuron_index\n")
        for t, n in zip(record.times.tolist(), record.neurons.tolist()):
            fh.write(f"{_num(t)},{n}\n")


def read_spike_record(path) -> SpikeRecord:
    meta = {}
    times, neurons = [], []
    with _open_text(path, "r") as fh:
        header_seen = False
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line != "time_ms,neuron_index":
                    raise FormatError(path, lineno, f"expected column header 'time_ms,neuron_index', got {line!r}")
                header_seen = True
                continue
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(path, lineno, f"expected 2 fields, got {len(parts)}")
            try:
                times.append(float(parts[0]))
                neurons.append(int(parts[1]))
            except ValueError as exc:
                raise FormatError(path, lineno, str(exc)) from None
    try:
        n = int(meta.get("n_neurons", (max(neurons) + 1) if neurons else 0))
        duration = float(meta.get("duration_ms", max(times, default=0.0)))
    except ValueError as exc:
        raise FormatError(path, 0, f"bad header value: {exc}") from None
    metadata = {k: meta[k] for k in ("config_hash", "network_hash") if k in meta}
    return SpikeRecord(np.array(times, dtype=float), np.array(neurons, dtype=np.int64), n, duration, metadata)


# ---------------------------------------------------------------------------
# weight matrices


def write_matrix(weights, labels, path) -> None:
    """Header ``# N: n`` and ``# roles: exc,inh,...``, then one row per line,
    entries at 9 significant digits."""
    W = np.asarray(weights, dtype=float)
    n = W.shape[0]
    if W.shape != (n, n) or len(labels) != n:
        raise ValueError("matrix must be square with one role per row")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# N: {n}\n")
        fh.write(f"# roles: {','.join(labels)}\n")
        for row in W:
            fh.write(",".join(_fmt9(x) for x in row) + "\n")


def _fmt9(x: float) -> str:
    s = f"{x:.9g}"
    return "0" if s in ("0", "-0") else s


def read_matrix(path) -> tuple[np.ndarray, list[str]]:
    n = None
    roles = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                key = key.strip()
                if key == "N":
                    try:
                        n = int(value)
                    except ValueError:
                        raise FormatError(path, lineno, f"bad N {value.strip()!r}") from None
                elif key == "roles":
                    roles = [r.strip() for r in value.split(",") if r.strip()]
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError as exc:
                raise FormatError(path, lineno, str(exc)) from None
            if n is not None and len(rows[-1]) != n:
                raise FormatError(path, lineno, f"expected {n} entries, got {len(rows[-1])}")
    if n is None or roles is None:
        raise FormatError(path, 1, "missing '# N:' or '# roles:' header")
    if len(rows) != n or len(roles) != n:
        raise FormatError(path, len(rows) + 2, f"expected {n} rows and roles, got {len(rows)} rows, {len(roles)} roles")
    return np.array(rows, dtype=float).reshape(n, n), roles


# ---------------------------------------------------------------------------
# CSV tables


def _write_rows(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_table(path, expected_header=None, prefix=None):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(path, 1, "empty file") from None
        if expected_header is not None and header != list(expected_header):
            raise FormatError(path, 1, f"expected header {','.join(expected_header)}")
        if prefix is not None and (not header or header[0] != prefix[0] or any(not h.startswith(prefix[1]) for h in header[1:])):
            raise FormatError(path, 1, f"expected header {prefix[0]},{prefix[1]}...")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, row))
    return header, rows


def _floats(path, lineno, row):
    try:
        return [float(x) for x in row]
    except ValueError as exc:
        raise FormatError(path, lineno, str(exc)) from None


def write_rates_csv(rates: RateTrace, path) -> None:
    n = rates.rates.shape[1]
    header = ["time_ms"] + [f"neuron_{i}" for i in range(n)]
    _write_rows(path, header, ([_num(t)] + [_num(x) for x in r] for t, r in zip(rates.times, rates.rates)))


def read_rates_csv(path, window: float = float("nan")) -> RateTrace:
    header, rows = _read_table(path, prefix=("time_ms", "neuron_"))
    data = np.array([_floats(path, ln, r) for ln, r in rows]).reshape(-1, len(header))
    return RateTrace(data[:, 0], data[:, 1:], window)


ALIGNMENT_HEADER = ("time_ms", "rho_A", "rho_B", "rho_C", "rho_D")


def write_alignment_csv(alignment: AlignmentTrace, path) -> None:
    if tuple(alignment.names) != ("A", "B", "C", "D"):
        raise ValueError("alignment CSV needs outputs named A, B, C, D")
    _write_rows(path, ALIGNMENT_HEADER, ([_num(t)] + [_num(x) for x in r] for t, r in zip(alignment.times, alignment.rho)))


def read_alignment_csv(path) -> AlignmentTrace:
    _, rows = _read_table(path, expected_header=ALIGNMENT_HEADER)
    data = np.array([_floats(path, ln, r) for ln, r in rows]).reshape(-1, 5)
    for (ln, _), r in zip(rows, data):
        if np.any(np.abs(r[1:]) > 1 + 1e-12):
            raise FormatError(path, ln, "alignment index outside [-1, 1]")
    return AlignmentTrace(data[:, 0], data[:, 1:], ("A", "B", "C", "D"))


DIAGRAM_HEADER = ("alpha", "ic", "seed", "projection_hz")


def write_diagram_csv(diagram: BifurcationDiagram, path) -> None:
    pts = sorted(diagram.points, key=lambda p: (p.alpha, p.ic, p.seed))
    _write_rows(path, DIAGRAM_HEADER, ([_num(p.alpha), p.ic, p.seed, _num(p.projection)] for p in pts))


def read_diagram_csv(path) -> BifurcationDiagram:
    _, rows = _read_table(path, expected_header=DIAGRAM_HEADER)
    diagram = BifurcationDiagram()
    for ln, (a, ic, seed, proj) in rows:
        try:
            diagram.points.append(BifurcationPoint(float(a), ic, int(seed), float(proj)))
        except ValueError as exc:
            raise FormatError(path, ln, str(exc)) from None
    return diagram
