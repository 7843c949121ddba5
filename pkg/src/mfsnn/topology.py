"""
Signed connectivity: mixed-feedback adjacency matrices built from a dominant
sign vector, soft winner-take-all networks, dominant eigenpairs and
structural-balance certification.

Weight matrices are indexed ``W[post, pre]``.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstructionError, NumericalError
from .neuron import NeuronParams, SynapseParams

__all__ = [
    "validate_sign_vector",
    "build_mixed_feedback_adjacency",
    "EigenPair",
    "DegenerateSpectrumError",
    "dominant_eigenpair",
    "certify_positive_feedback",
    "SWTAConfig",
    "WeightedNetwork",
    "build_swta",
    "scale_network",
    "orthogonal_sign_vector",
    "output_vectors",
]


def validate_sign_vector(v) -> np.ndarray:
    """Check that ``v`` is a zero-sum +/-1 vector (one 0 allowed for odd N)."""
    arr = np.asarray(v)
    if arr.ndim != 1 or arr.size < 2:
        raise ConstructionError("sign vector must be one-dimensional with length >= 2")
    if not np.all(np.isin(arr, (-1, 0, 1))):
        raise ConstructionError("sign vector entries must be -1, 0 or +1")
    arr = arr.astype(np.int64)
    zeros = int(np.sum(arr == 0))
    if zeros != arr.size % 2:
        raise ConstructionError(
            "sign vector needs no zero entries for even N and exactly one for odd N"
        )
    if arr.sum() != 0:
        raise ConstructionError("sign vector entries must sum to zero")
    return arr


def build_mixed_feedback_adjacency(v) -> np.ndarray:
    """``diag(v) (J - I) diag(v)``: +1 between equal signs, -1 across, 0 diagonal.

    Returned as an integer matrix; ``A @ v == (N - 1) * v`` holds exactly.
    """
    v = validate_sign_vector(v)
    A = np.outer(v, v)
    np.fill_diagonal(A, 0)
    return A


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    right_eigenvector: np.ndarray
    left_eigenvector: np.ndarray


class DegenerateSpectrumError(NumericalError):
    """The dominant eigenvalue is not simple."""

    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = eigenvalue
        super().__init__(message or f"dominant eigenvalue {eigenvalue} is degenerate")


def _normalize(x: np.ndarray) -> np.ndarray:
    x = np.real_if_close(np.asarray(x, dtype=complex)).real.astype(float)
    x = x / np.linalg.norm(x)
    nz = np.flatnonzero(np.abs(x) > 1e-12)
    if nz.size and x[nz[0]] < 0:
        x = -x
    return x


def _power_iteration(M, tol, max_iter, rng):
    """Largest eigenpair of a symmetric PSD matrix ``M`` by power iteration."""
    n = M.shape[0]
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    scale = max(np.abs(M).max(), 1e-300)
    for _ in range(max_iter):
        y = M @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0, x
        x_new = y / norm
        if np.linalg.norm(M @ x_new - (x_new @ M @ x_new) * x_new) < tol * scale:
            return float(x_new @ M @ x_new), x_new
        x = x_new
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations")


def _exact_integer_eigenpair(A, vec, lam):
    """Snap an eigenpair of an integer matrix to exact integers when possible."""
    if not np.issubdtype(A.dtype, np.integer):
        return None
    lam_i = int(round(lam))
    if abs(lam - lam_i) > 1e-6:
        return None
    nz = np.abs(vec) > 1e-9
    if not nz.any():
        return None
    x = np.round(vec / np.abs(vec[nz]).min()).astype(np.int64)
    if np.array_equal(A @ x, lam_i * x) and x.any():
        return lam_i, x
    return None


def dominant_eigenpair(A, *, tol: float = 1e-13, max_iter: int = 200_000, seed: int = 0) -> EigenPair:
    """Eigenvalue of largest real part with unit right/left eigenvectors.

    Symmetric matrices go through shifted power iteration with one deflation
    step to rule out a tied second eigenvalue; for integer matrices the result
    is snapped to an exact integer eigenpair when one exists. Non-symmetric
    matrices use a dense eigensolver.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConstructionError("matrix must be square")
    if not np.all(np.isfinite(A)):
        raise NumericalError("matrix has non-finite entries")
    n = A.shape[0]
    Af = A.astype(float)
    if not np.any(Af):
        raise DegenerateSpectrumError(0.0, "zero matrix: all eigenvalues are 0")

    if np.array_equal(Af, Af.T):
        rng = np.random.default_rng(seed)
        # Gershgorin shift makes the spectrum nonnegative so the largest
        # eigenvalue is also the largest in magnitude
        shift = float(np.abs(Af).sum(axis=1).max())
        M = Af + shift * np.eye(n)
        mu1, x1 = _power_iteration(M, tol, max_iter, rng)
        lam = mu1 - shift
        if n > 1:
            D = M - mu1 * np.outer(x1, x1)
            if np.any(np.abs(D) > 1e-12 * shift):
                mu2, _ = _power_iteration(D, tol, max_iter, rng)
            else:
                mu2 = 0.0
            if abs(mu1 - mu2) <= 1e-8 * max(1.0, abs(mu1)):
                raise DegenerateSpectrumError(lam)
        exact = _exact_integer_eigenpair(A, x1, lam)
        if exact is not None:
            lam, x1 = float(exact[0]), exact[1].astype(float)
        x = _normalize(x1)
        return EigenPair(lam, x, x.copy())

    vals, vecs = np.linalg.eig(Af)
    order = np.argsort(-vals.real, kind="stable")
    top = vals[order[0]]
    if n > 1 and abs(vals[order[1]].real - top.real) <= 1e-9 * max(1.0, abs(top)):
        raise DegenerateSpectrumError(float(top.real))
    lvals, lvecs = np.linalg.eig(Af.T)
    k = int(np.argmin(np.abs(lvals - top)))
    return EigenPair(float(top.real), _normalize(vecs[:, order[0]]), _normalize(lvecs[:, k]))


def certify_positive_feedback(A) -> tuple[bool, np.ndarray | None]:
    """Look for a gauge ``s`` in {-1,+1}^N with ``diag(s) A diag(s) >= 0``.

    Two-colours the signed graph by breadth-first search: each edge fixes
    the relative sign of its endpoints. The first vertex of every connected
    component gets +1. Runs in O(N^2) for a dense matrix.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ConstructionError("matrix must be square")
    if np.any(np.diag(A) < 0):
        return False, None
    sign = np.sign(A)
    sigma = np.zeros(n, dtype=np.int64)
    for root in range(n):
        if sigma[root]:
            continue
        sigma[root] = 1
        queue = deque([root])
        while queue:
            i = queue.popleft()
            nbrs = np.flatnonzero((sign[i] != 0) | (sign[:, i] != 0))
            for j in nbrs:
                if j == i:
                    continue
                # both directions must agree on the required relative sign
                sij, sji = sign[i, j], sign[j, i]
                if sij and sji and sij != sji:
                    return False, None
                want = sigma[i] * int(sij or sji)
                if sigma[j] == 0:
                    sigma[j] = want
                    queue.append(j)
                elif sigma[j] != want:
                    return False, None
    return True, sigma


@dataclass(frozen=True)
class SWTAConfig:
    num_clusters: int = 16
    neurons_per_cluster: int = 8
    self_excitation: float = 1.0
    lateral_excitation: float = 0.5
    exc_to_inh: float = 1.0
    inh_to_exc: float = -1.0
    num_inhibitory: int = 32
    gain_alpha: float = 1.0
    ring: bool = False

    def __post_init__(self):
        if min(self.num_clusters, self.neurons_per_cluster, self.num_inhibitory) < 1:
            raise ConstructionError("sWTA counts must be >= 1")
        if not self.inh_to_exc < 0:
            raise ConstructionError("inh_to_exc must be negative")
        if not self.gain_alpha >= 0:
            raise ConstructionError("gain_alpha must be >= 0")
        vals = (self.self_excitation, self.lateral_excitation, self.exc_to_inh, self.inh_to_exc)
        if not all(np.isfinite(vals)):
            raise ConstructionError("sWTA weights must be finite")
        if self.self_excitation < 0 or self.lateral_excitation < 0 or self.exc_to_inh < 0:
            raise ConstructionError("excitatory weights must be >= 0")

    @property
    def num_excitatory(self) -> int:
        return self.num_clusters * self.neurons_per_cluster


@dataclass
class WeightedNetwork:
    weight_matrix: np.ndarray
    neuron_params: list[NeuronParams]
    labels: list[str]
    synapse: SynapseParams = field(default_factory=SynapseParams)

    def __post_init__(self):
        W = np.asarray(self.weight_matrix, dtype=float)
        n = len(self.neuron_params)
        if W.shape != (n, n) or len(self.labels) != n:
            raise ConstructionError(f"inconsistent dimensions: W {W.shape}, {n} params, {len(self.labels)} labels")
        if not np.all(np.isfinite(W)):
            raise ConstructionError("weights must be finite")
        if any(label not in ("exc", "inh") for label in self.labels):
            raise ConstructionError("labels must be 'exc' or 'inh'")
        self.weight_matrix = W

    @property
    def size(self) -> int:
        return len(self.labels)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.weight_matrix).tobytes())
        h.update(repr((self.neuron_params, self.labels, self.synapse)).encode())
        return h.hexdigest()


def build_swta(config: SWTAConfig, params: NeuronParams | None = None, synapse: SynapseParams | None = None) -> WeightedNetwork:
    """Clusters of excitatory neurons on a line sharing one inhibitory pool.

    Only the recurrent excitatory weights (within cluster and to nearest
    neighbour clusters) are multiplied by ``gain_alpha``.
    """
    params = params or NeuronParams()
    c, m, ni = config.num_clusters, config.neurons_per_cluster, config.num_inhibitory
    ne = c * m
    n = ne + ni
    cluster = np.repeat(np.arange(c), m)
    dist = np.abs(cluster[:, None] - cluster[None, :])
    if config.ring:
        dist = np.minimum(dist, c - dist)

    W = np.zeros((n, n))
    ee = np.where(dist == 0, config.self_excitation, 0.0) + np.where(dist == 1, config.lateral_excitation, 0.0)
    np.fill_diagonal(ee, 0.0)
    W[:ne, :ne] = config.gain_alpha * ee
    W[ne:, :ne] = config.exc_to_inh
    W[:ne, ne:] = config.inh_to_exc
    return WeightedNetwork(W, [params] * n, ["exc"] * ne + ["inh"] * ni, synapse or SynapseParams())


def scale_network(
    A,
    alpha: float,
    unit_weight: float | None = None,
    params: NeuronParams | None = None,
    synapse: SynapseParams | None = None,
) -> WeightedNetwork:
    """Weights ``alpha * unit_weight * A``; signs become exc/inh synapses.

    Dale's principle is not enforced: a neuron may have both signs on its
    outgoing connections.
    """
    if not alpha >= 0:
        raise ConstructionError("alpha must be >= 0")
    synapse = synapse or SynapseParams()
    if unit_weight is None:
        unit_weight = synapse.unit_weight
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    W = alpha * unit_weight * A
    return WeightedNetwork(W, [params or NeuronParams()] * n, ["exc"] * n, synapse)


def orthogonal_sign_vector(v) -> np.ndarray:
    """A zero-sum +/-1 vector orthogonal to ``v``.

    Prefers the alternating vector (-1, +1, -1, +1, ...) when it qualifies,
    otherwise alternates signs within the +1 and -1 halves of ``v``. No
    solution exists unless N is a multiple of 4.
    """
    v = validate_sign_vector(v)
    n = v.size
    if n % 2:
        raise ConstructionError("orthogonal sign vector requires even N")
    if n % 4:
        raise ConstructionError(
            f"degenerate: no zero-sum +/-1 vector is orthogonal to v for N={n} (N must be a multiple of 4)"
        )
    alt = np.array([(-1) ** (i + 1) for i in range(n)], dtype=np.int64)
    if alt.sum() == 0 and alt @ v == 0:
        return alt
    w = np.zeros(n, dtype=np.int64)
    for s in (1, -1):
        idx = np.flatnonzero(v == s)
        w[idx] = [(-1) ** (k + 1) for k in range(idx.size)]
    return w


def output_vectors(v, v_perp=None) -> dict[str, np.ndarray]:
    """Readout vectors for symbols A, B, C, D: v, -v, v_perp, -v_perp."""
    v = validate_sign_vector(v)
    w = orthogonal_sign_vector(v) if v_perp is None else np.asarray(v_perp, dtype=np.int64)
    return {"A": v, "B": -v, "C": w, "D": -w}
