"""
Threshold-linear mean-field model of a recurrent network.

    tau dnu/dt = -nu + gain * max(alpha * A nu + bias + input, 0)

Used as an oracle for fixed points and for the loop-gain-one critical alpha
``1 / (gain * lambda_max)``. The gain can be calibrated from a spiking
neuron's measured f-I slope so that oracle and simulator share units.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import BifurcationDiagram, BifurcationPoint
from .errors import NumericalError, ParameterError
from .topology import dominant_eigenpair

__all__ = [
    "RateModel",
    "FixedPoints",
    "BoundaryCaseError",
    "GainCalibration",
    "rate_dynamics_step",
    "find_fixed_points",
    "predict_critical_alpha",
    "symmetric_fixed_point",
    "oracle_diagram",
    "split_alpha",
    "calibrate_gain",
    "ORACLE_LABELS",
]

ORACLE_LABELS = ("fp-from-A", "fp-from-B", "fp-symmetric")


class BoundaryCaseError(NumericalError):
    """Some unit is inactive at the symmetric fixed point; the interior
    linearization (and hence the closed-form critical alpha) does not apply."""


@dataclass(frozen=True)
class RateModel:
    time_constant: float
    gain: float
    adjacency: np.ndarray
    alpha: float = 0.0
    bias: object = 0.0  # scalar or per-unit
    input: object = 0.0

    def __post_init__(self):
        if not self.time_constant > 0:
            raise ParameterError("time_constant must be > 0")
        if not self.gain > 0:
            raise ParameterError("gain must be > 0")
        A = np.asarray(self.adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ParameterError("adjacency must be square")
        if not self.alpha >= 0:
            raise ParameterError("alpha must be >= 0")
        object.__setattr__(self, "adjacency", A)
        for name in ("bias", "input"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (A.shape[0],)).copy()
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    @property
    def drive(self) -> np.ndarray:
        return self.bias + self.input

    def replace(self, **changes) -> "RateModel":
        return dataclasses.replace(self, **changes)

    def rhs(self, nu: np.ndarray) -> np.ndarray:
        """Steady-state target ``gain * max(alpha A nu + bias + input, 0)``."""
        return self.gain * np.maximum(self.alpha * (self.adjacency @ nu) + self.drive, 0.0)


def rate_dynamics_step(state, model: RateModel, dt: float) -> np.ndarray:
    """One forward-Euler step of the rate dynamics."""
    if not (0 < dt < model.time_constant / 5):
        raise ParameterError("dt must satisfy 0 < dt < time_constant/5")
    nu = np.asarray(state, dtype=float)
    if not np.isfinite(nu).all():
        raise NumericalError("non-finite rate in rate_dynamics_step")
    out = nu + (dt / model.time_constant) * (model.rhs(nu) - nu)
    if not np.isfinite(out).all():
        raise NumericalError("non-finite rate in rate_dynamics_step")
    return out


@dataclass
class FixedPoints:
    """Distinct fixed points, which ICs reached each, and ICs that hit the cap."""

    points: list = field(default_factory=list)
    origins: list = field(default_factory=list)  # list of IC-index lists, parallel to points
    unconverged: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, k):
        return self.points[k]

    def from_ic(self, index: int):
        """The fixed point reached from IC ``index`` (None if unconverged)."""
        for p, orig in zip(self.points, self.origins):
            if index in orig:
                return p
        return None


def _polish(model: RateModel, nu: np.ndarray) -> np.ndarray:
    """Solve the linear system on the active set suggested by ``nu``.

    Returns the exact piecewise-linear fixed point when it is consistent with
    that active set, otherwise ``nu`` unchanged.
    """
    drive = model.alpha * (model.adjacency @ nu) + model.drive
    active = drive > 0
    if not active.any():
        return np.zeros_like(nu)
    idx = np.flatnonzero(active)
    g = model.gain
    M = np.eye(idx.size) - g * model.alpha * model.adjacency[np.ix_(idx, idx)]
    # at exactly critical gain the system is singular: keep the iterate
    if np.linalg.cond(M) > 1e10:
        return nu
    try:
        sol = np.linalg.solve(M, g * model.drive[idx])
    except np.linalg.LinAlgError:
        return nu
    cand = np.zeros_like(nu)
    cand[idx] = sol
    d = model.alpha * (model.adjacency @ cand) + model.drive
    if np.all(sol >= 0) and np.all(d[~active] <= 1e-12) and np.all(d[active] >= -1e-12):
        return cand
    return nu


def _iterate(model: RateModel, nu: np.ndarray, damping, max_iter, rtol) -> tuple[np.ndarray, bool]:
    for _ in range(max_iter):
        step = damping * (model.rhs(nu) - nu)
        nu = nu + step
        if not np.isfinite(nu).all():
            return nu, False
        if np.linalg.norm(step) < rtol * max(np.linalg.norm(nu), 1e-300):
            return nu, True
    return nu, False


def _escape(model: RateModel, fp: np.ndarray, nu: np.ndarray) -> np.ndarray | None:
    """Jump along the unstable direction of an unstable fixed point.

    Within one active set the dynamics are linear, so the unstable manifold of
    ``fp`` is the straight line along the leading eigenvector of the active
    block, up to the first unit whose drive crosses zero. Returns a point just
    past that crossing on the side ``nu`` deviates to, or None when ``fp`` is
    stable, ``nu`` has no unstable component, or the line never leaves the
    active set.
    """
    drive = model.alpha * (model.adjacency @ fp) + model.drive
    idx = np.flatnonzero(drive > 0)
    if idx.size == 0:
        return None
    J = model.gain * model.alpha * model.adjacency[np.ix_(idx, idx)]
    vals, vecs = np.linalg.eig(J)
    k = int(np.argmax(vals.real))
    if vals[k].real <= 1 + 1e-12:
        return None
    u = np.zeros(model.size)
    u[idx] = vecs[:, k].real
    u /= np.linalg.norm(u)
    dev = float((nu - fp) @ u)
    # round-off sized deviations do not count: an IC on the stable manifold stays there
    if abs(dev) <= 1e-9 * max(np.linalg.norm(fp), 1.0):
        return None
    u *= np.sign(dev)
    # drive along the line is linear in s; find the first zero crossing
    slope = model.alpha * (model.adjacency @ u)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(slope != 0, -drive / slope, np.inf)
    s = s[(s > 0) & np.isfinite(s)]
    if s.size == 0:
        return None
    return fp + 1.01 * float(s.min()) * u


def find_fixed_points(
    model: RateModel,
    initial_conditions,
    damping: float = 0.5,
    max_iter: int = 200_000,
    rtol: float = 1e-8,
    merge_tol: float = 1e-6,
) -> FixedPoints:
    """Damped iteration ``nu <- nu + damping (rhs(nu) - nu)`` from every IC.

    Iteration stops once ``||dnu|| < rtol * ||nu||``; the result is then
    refined by solving the linear system on its active set. If that point is
    unstable and the iterate has left it along the unstable direction, the
    escape is followed to the next active-set boundary and iteration resumes
    (near the critical gain the escape is otherwise too slow to resolve).
    Points closer than ``merge_tol`` (relative to their norm, floor 1) are merged.
    """
    ics = [np.asarray(ic, dtype=float) for ic in initial_conditions]
    if not ics:
        raise ParameterError("at least one initial condition is required")
    if not 0 < damping <= 1:
        raise ParameterError("damping must be in (0, 1]")
    result = FixedPoints()
    for k, nu in enumerate(ics):
        if nu.shape != (model.size,):
            raise ParameterError(f"initial condition {k} has shape {nu.shape}, expected ({model.size},)")
        nu, converged = _iterate(model, nu.copy(), damping, max_iter, rtol)
        if converged:
            for _ in range(2 * model.size):
                fp = _polish(model, nu)
                jump = _escape(model, fp, nu)
                if jump is None:
                    nu = fp
                    break
                nu, converged = _iterate(model, jump, damping, max_iter, rtol)
                if not converged:
                    break
            else:
                nu = _polish(model, nu)
        if not converged:
            result.unconverged.append(k)
            continue
        for j, p in enumerate(result.points):
            if np.linalg.norm(p - nu) < merge_tol * max(1.0, np.linalg.norm(p)):
                result.origins[j].append(k)
                break
        else:
            result.points.append(nu)
            result.origins.append([k])
    return result


def symmetric_fixed_point(model: RateModel) -> np.ndarray:
    """Fixed point with every unit active: ``(I - gain alpha A) nu = gain drive``.

    Raises :class:`BoundaryCaseError` when that solution has an inactive unit.
    """
    g = model.gain
    M = np.eye(model.size) - g * model.alpha * model.adjacency
    nu = np.linalg.solve(M, g * model.drive)
    drive = model.alpha * (model.adjacency @ nu) + model.drive
    if np.any(drive <= 0) or np.any(nu <= 0):
        bad = int(np.flatnonzero((drive <= 0) | (nu <= 0))[0])
        raise BoundaryCaseError(f"unit {bad} is inactive at the symmetric fixed point; no closed-form critical alpha")
    return nu


def predict_critical_alpha(model: RateModel) -> float:
    """Loop-gain-one condition ``alpha* = 1 / (gain * lambda_max)``.

    Valid only when all units are active at the symmetric fixed point.
    """
    symmetric_fixed_point(model)
    lam = dominant_eigenpair(model.adjacency).eigenvalue
    if not lam > 0:
        raise BoundaryCaseError("dominant eigenvalue is not positive; no critical alpha")
    return 1.0 / (model.gain * lam)


def _projection(nu, v) -> float:
    v = np.asarray(v, dtype=float)
    return float((v / np.linalg.norm(v)) @ (nu - nu.mean()))


def oracle_diagram(model: RateModel, alphas, v_max, perturbation: float = 1e-3, **kw) -> BifurcationDiagram:
    """Fixed-point projections onto ``v_max`` over an alpha grid.

    ICs are the uniform point ``gain * drive`` nudged by ``+/- perturbation``
    along ``v_max`` (relative), and the uniform point itself. Unconverged ICs
    go to ``missing``.
    """
    v = np.asarray(v_max, dtype=float)
    v = v / np.linalg.norm(v)
    diagram = BifurcationDiagram()
    for a in alphas:
        m = model.replace(alpha=float(a))
        base = m.gain * np.maximum(m.drive, 0.0)
        scale = perturbation * max(np.linalg.norm(base), 1.0)
        ics = [base + scale * v, base - scale * v, base]
        fps = find_fixed_points(m, ics, **kw)
        for k, label in enumerate(ORACLE_LABELS):
            p = fps.from_ic(k)
            if p is None:
                diagram.missing.append((float(a), label, 0, "iteration cap reached"))
            else:
                diagram.points.append(BifurcationPoint(float(a), label, 0, _projection(p, v)))
    return diagram


def split_alpha(model: RateModel, alphas, v_max, **kw) -> float:
    """First alpha on the grid where the +/- v_max ICs reach distinct fixed points."""
    v = np.asarray(v_max, dtype=float)
    v = v / np.linalg.norm(v)
    for a in alphas:
        m = model.replace(alpha=float(a))
        base = m.gain * np.maximum(m.drive, 0.0)
        scale = 1e-3 * max(np.linalg.norm(base), 1.0)
        fps = find_fixed_points(m, [base + scale * v, base - scale * v], **kw)
        if len(fps) > 1:
            return float(a)
    return math.nan


# ---------------------------------------------------------------------------
# calibration against the spiking neuron


@dataclass(frozen=True)
class GainCalibration:
    operating_current: float  # mV
    rate: float  # Hz at the operating point
    slope: float  # Hz per mV
    gain: float  # oracle gain in Hz per (unit weight * Hz)


def calibrate_gain(
    neuron_params,
    synapse,
    unit_weight: float,
    operating_current: float,
    delta: float = 1.0,
    n_neurons: int = 16,
    duration: float = 4000.0,
    transient: float = 500.0,
    seed: int = 0,
    noise: tuple = (0.0, 0.0),
) -> GainCalibration:
    """Measure the f-I slope of uncoupled spiking neurons around
    ``operating_current`` by central differences, and convert it to oracle units.

    A presynaptic rate ``r`` through weight ``unit_weight`` gives a mean
    current ``r * unit_weight * tau_exc / 1000`` mV, so the oracle gain is
    ``slope * unit_weight * tau_exc / 1000``.
    """
    # local imports keep the oracle itself free of simulator dependencies
    from .engine import SimulationConfig, simulate
    from .stimulus import StimulusSchedule
    from .topology import WeightedNetwork

    if not delta > 0:
        raise ParameterError("delta must be > 0")
    if not duration > transient:
        raise ParameterError("duration must exceed the transient")
    tau = synapse.exc_time_constant

    def rate_at(current):
        net = WeightedNetwork(np.zeros((n_neurons, n_neurons)), [neuron_params] * n_neurons, ["exc"] * n_neurons, synapse)
        # DC mode with a nominal 1 kHz rate: weight chosen to give the desired mean current
        sched = StimulusSchedule((), 1000.0, current * 1000.0 / (1000.0 * tau), 1.0, "dc", noise[0], noise[1])
        rec = simulate(net, sched, SimulationConfig(duration=duration, seed=seed))
        return float((rec.times >= transient).sum()) / n_neurons / ((duration - transient) / 1000.0)

    lo, mid, hi = rate_at(operating_current - delta), rate_at(operating_current), rate_at(operating_current + delta)
    slope = (hi - lo) / (2 * delta)
    if not slope > 0:
        raise NumericalError(f"f-I slope is {slope} Hz/mV at {operating_current} mV; operating point is not in the active range")
    return GainCalibration(float(operating_current), mid, slope, slope * unit_weight * tau / 1000.0)
